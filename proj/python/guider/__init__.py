"""Python interface to the guider C++ core.

The heavy lifting lives in the compiled ``_guider`` extension; this
package just re-exports it under stable names.
"""

try:
    from ._guider import (  # type: ignore[attr-defined]
        cost_matrix,
        derive_seed,
        kl_divergence,
        ndcg_at_k,
        ot_distance,
        partition_by_loss,
        rank_items,
        recall_at_k,
        run,
        sinkhorn,
        synth,
        to_simplex,
    )
except ImportError:  # extension on PYTHONPATH rather than inside the package
    from _guider import (  # type: ignore[no-redef]
        cost_matrix,
        derive_seed,
        kl_divergence,
        ndcg_at_k,
        ot_distance,
        partition_by_loss,
        rank_items,
        recall_at_k,
        run,
        sinkhorn,
        synth,
        to_simplex,
    )

__all__ = [
    "cost_matrix",
    "derive_seed",
    "kl_divergence",
    "ndcg_at_k",
    "ot_distance",
    "partition_by_loss",
    "rank_items",
    "recall_at_k",
    "run",
    "sinkhorn",
    "synth",
    "to_simplex",
]

__version__ = "0.1.0"
