#ifndef GUIDER_EVAL_HPP
#define GUIDER_EVAL_HPP

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "guider/amsc.hpp"
#include "guider/dataset.hpp"
#include "guider/losses.hpp"

namespace guider {

struct MetricsRow {
  std::string model_tag;
  std::size_t k = 0;
  double recall = 0.0;
  double ndcg = 0.0;
  std::size_t n_users_evaluated = 0;
};

// Full-catalog ranking by descending score, excluded items removed,
// ties broken by ascending item index.
std::vector<Index> rank_items(std::span<const double> scores,
                              const std::set<Index>& exclusion);

double recall_at_k(std::span<const Index> ranking,
                   const std::set<Index>& test_items, std::size_t k);

double ndcg_at_k(std::span<const Index> ranking,
                 const std::set<Index>& test_items, std::size_t k);

// Mean of per-user metrics over users with nonempty test sets. Train and
// valid positives are excluded from every ranking.
std::vector<MetricsRow> evaluate(const ScoreModel& m, const DataSplit& split,
                                 const std::vector<std::size_t>& ks,
                                 const std::string& tag, int threads = 1);

struct ScoreHistogram {
  std::vector<double> bin_lo, bin_hi;
  std::vector<double> clean_density, noisy_density;
  double auc = 0.0;  // score as a clean-vs-noisy classifier
};

// Clean interactions are subsampled at sample_frac; all injected ones
// are kept.
ScoreHistogram score_distribution_report(const ScoreModel& m,
                                         const InteractionDataset& train,
                                         double sample_frac,
                                         std::uint64_t seed,
                                         std::size_t bins = 40);

struct NoiseDetection {
  double precision = 0.0;
  double recall = 0.0;
  double lift = 0.0;
  bool empty_false_pool = false;
};

NoiseDetection noise_detection_report(std::span<const UserPartition> parts,
                                      const InteractionDataset& train);

void write_metrics_jsonl(const std::string& path,
                         std::span<const MetricsRow> rows, bool append = false);
void write_histogram_csv(const std::string& path, const ScoreHistogram& h);

}  // namespace guider

#endif
