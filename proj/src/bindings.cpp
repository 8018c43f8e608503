#include <filesystem>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "guider/amsc.hpp"
#include "guider/dataset.hpp"
#include "guider/eval.hpp"
#include "guider/otkd.hpp"
#include "guider/rng.hpp"
#include "guider/trainer.hpp"

namespace py = pybind11;
using namespace guider;

namespace {

Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw std::invalid_argument("empty matrix");
  Matrix m(rows.size(), rows[0].size());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != m.cols())
      throw std::invalid_argument("ragged matrix");
    for (std::size_t c = 0; c < m.cols(); ++c) m(r, c) = rows[r][c];
  }
  return m;
}

std::vector<std::vector<double>> from_matrix(const Matrix& m) {
  std::vector<std::vector<double>> out(m.rows(),
                                       std::vector<double>(m.cols()));
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

SinkhornConfig make_cfg(double lam, std::size_t max_iter, double tol,
                        bool log_domain) {
  SinkhornConfig cfg;
  cfg.lambda = lam;
  cfg.max_iter = max_iter;
  cfg.tol = tol;
  cfg.log_domain = log_domain;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_guider, m) {
  m.doc() = "core numerical routines of the guider recommender toolkit";

  m.def(
      "sinkhorn",
      [](const std::vector<double>& a, const std::vector<double>& b,
         const std::vector<std::vector<double>>& D, double lam,
         std::size_t max_iter, double tol, bool log_domain) {
        auto tp = sinkhorn(a, b, to_matrix(D),
                           make_cfg(lam, max_iter, tol, log_domain));
        py::dict out;
        out["plan"] = from_matrix(tp.plan);
        out["iterations"] = tp.iterations;
        out["residual"] = tp.marginal_residual;
        out["converged"] = tp.converged;
        return out;
      },
      py::arg("a"), py::arg("b"), py::arg("cost"), py::arg("lam") = 0.1,
      py::arg("max_iter") = 1000, py::arg("tol") = 1e-9,
      py::arg("log_domain") = true,
      "entropic optimal transport plan between two discrete marginals");

  m.def(
      "ot_distance",
      [](const std::vector<double>& z_t, const std::vector<double>& z_s,
         double lam, std::size_t max_iter, double tol, bool log_domain) {
        auto a = to_simplex(z_t);
        auto b = to_simplex(z_s);
        auto D = cost_matrix(z_t, z_s);
        auto tp = sinkhorn(a, b, D, make_cfg(lam, max_iter, tol, log_domain));
        return kd_loss(tp, D);
      },
      py::arg("z_t"), py::arg("z_s"), py::arg("lam") = 0.1,
      py::arg("max_iter") = 1000, py::arg("tol") = 1e-9,
      py::arg("log_domain") = true,
      "transport distance between two ranking-logit vectors");

  m.def("to_simplex",
        [](const std::vector<double>& z) { return to_simplex(z); },
        py::arg("z"));
  m.def(
      "cost_matrix",
      [](const std::vector<double>& z_t, const std::vector<double>& z_s) {
        return from_matrix(cost_matrix(z_t, z_s));
      },
      py::arg("z_t"), py::arg("z_s"));
  m.def("kl_divergence",
        [](const std::vector<double>& a, const std::vector<double>& b) {
          return kl_divergence(a, b);
        },
        py::arg("a"), py::arg("b"));

  m.def(
      "rank_items",
      [](const std::vector<double>& scores, const std::set<Index>& excluded) {
        return rank_items(scores, excluded);
      },
      py::arg("scores"), py::arg("excluded") = std::set<Index>{});
  m.def(
      "recall_at_k",
      [](const std::vector<Index>& ranking, const std::set<Index>& test,
         std::size_t k) { return recall_at_k(ranking, test, k); },
      py::arg("ranking"), py::arg("test_items"), py::arg("k"));
  m.def(
      "ndcg_at_k",
      [](const std::vector<Index>& ranking, const std::set<Index>& test,
         std::size_t k) { return ndcg_at_k(ranking, test, k); },
      py::arg("ranking"), py::arg("test_items"), py::arg("k"));

  m.def(
      "partition_by_loss",
      [](const std::vector<Index>& items, const std::vector<double>& losses) {
        return partition_by_loss(items, losses);
      },
      py::arg("items"), py::arg("losses"),
      "split items into (reliable, spurious) by the mean-loss threshold");

  m.def("derive_seed",
        [](std::uint64_t root, const std::string& stage, std::uint64_t k) {
          return derive_seed(root, stage, k);
        },
        py::arg("root"), py::arg("stage"), py::arg("counter") = 0);

  m.def(
      "synth",
      [](const std::string& out_dir, Index users, Index items, Index clusters,
         Index per_user, std::size_t text_dim, std::size_t vision_dim,
         double modal_noise, std::uint64_t seed) {
        SynthConfig cfg;
        cfg.n_users = users;
        cfg.n_items = items;
        cfg.n_clusters = clusters;
        cfg.per_user = per_user;
        cfg.text_dim = text_dim;
        cfg.vision_dim = vision_dim;
        cfg.modal_noise = modal_noise;
        auto corpus = generate_synthetic(cfg, seed);
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        auto p = [&](const char* f) {
          return (fs::path(out_dir) / f).string();
        };
        save_interactions_tsv(p("interactions.tsv"), corpus.interactions);
        save_modal_features(p("text.gmf"), corpus.text);
        save_modal_features(p("vision.gmf"), corpus.vision);
        py::dict out;
        out["interactions"] = corpus.interactions.size();
        out["users"] = corpus.interactions.n_users;
        out["items"] = corpus.interactions.n_items;
        return out;
      },
      py::arg("out_dir"), py::arg("users") = 500, py::arg("items") = 200,
      py::arg("clusters") = 10, py::arg("per_user") = 20,
      py::arg("text_dim") = 16, py::arg("vision_dim") = 16,
      py::arg("modal_noise") = 0.1, py::arg("seed") = 42,
      "write a synthetic corpus (interactions + modal features) to out_dir");

  m.def(
      "run",
      [](const std::string& interactions, const std::string& text_features,
         const std::string& vision_features, const std::string& out_dir,
         std::uint64_t seed, double noise_ratio, std::size_t d,
         std::size_t n_layers, const std::string& mode, const std::string& kd,
         std::size_t max_epochs, int threads) {
        RunConfig cfg;
        cfg.interactions = interactions;
        cfg.text_features = text_features;
        cfg.vision_features = vision_features;
        cfg.out_dir = out_dir;
        cfg.seed = seed;
        cfg.noise_ratio = noise_ratio;
        cfg.d = d;
        cfg.n_layers = n_layers;
        cfg.mode = mode;
        cfg.kd = kd;
        cfg.train.max_epochs = max_epochs;
        cfg.threads = threads;
        py::gil_scoped_release release;
        run_guider(cfg);
      },
      py::arg("interactions"), py::arg("text_features"),
      py::arg("vision_features"), py::arg("out_dir"), py::arg("seed") = 42,
      py::arg("noise_ratio") = 0.0, py::arg("d") = 64,
      py::arg("n_layers") = 2, py::arg("mode") = "guider",
      py::arg("kd") = "ot", py::arg("max_epochs") = 100,
      py::arg("threads") = 1,
      "full pipeline: load, split, inject noise, train teacher and student, "
      "evaluate; writes checkpoints and metrics under out_dir");
}
