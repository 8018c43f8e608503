#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "guider/amsc.hpp"
#include "guider/dataset.hpp"
#include "guider/eval.hpp"
#include "guider/model.hpp"
#include "guider/otkd.hpp"
#include "guider/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace guider;

namespace {

std::vector<double> parse_ratio_list(const std::string& s) {
  std::vector<double> out;
  std::string tok;
  std::istringstream ss(s);
  while (std::getline(ss, tok, s.find('/') != std::string::npos ? '/' : ','))
    if (!tok.empty()) out.push_back(std::stod(tok));
  return out;
}

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

// one flat dotted key of the run config
void apply_key(RunConfig& cfg, const std::string& key, const json& v) {
  auto str = [&] { return v.is_string() ? v.get<std::string>() : v.dump(); };
  auto num = [&] { return v.is_number() ? v.get<double>() : std::stod(str()); };
  auto count = [&] { return (std::size_t)std::llround(num()); };
  auto boolean = [&] { return v.is_boolean() ? v.get<bool>() : parse_bool(str()); };

  if (key == "data.interactions") cfg.interactions = str();
  else if (key == "data.text_features") cfg.text_features = str();
  else if (key == "data.vision_features") cfg.vision_features = str();
  else if (key == "data.out_dir") cfg.out_dir = str();
  else if (key == "data.noise_ratio") cfg.noise_ratio = num();
  else if (key == "model.d") cfg.d = count();
  else if (key == "model.n_layers") cfg.n_layers = count();
  else if (key == "model.hash_bits") cfg.hash_bits = count();
  else if (key == "mode") cfg.mode = str();
  else if (key == "kd") cfg.kd = str();
  else if (key == "interleaved") cfg.interleaved = boolean();
  else if (key == "threads") cfg.threads = (int)count();
  else if (key == "seed") cfg.seed = (std::uint64_t)std::llround(num());
  else if (key == "train.lr") cfg.train.lr = num();
  else if (key == "train.weight_decay") cfg.train.weight_decay = num();
  else if (key == "train.batch_size") cfg.train.batch_size = count();
  else if (key == "train.warmup_epochs") cfg.train.warmup_epochs = count();
  else if (key == "train.patience") cfg.train.patience = count();
  else if (key == "train.max_epochs") cfg.train.max_epochs = count();
  else if (key == "train.s_thres") cfg.train.s_thres = num();
  else if (key == "train.kd_weight") cfg.train.kd_weight = num();
  else if (key == "train.kd_batch") cfg.train.kd_batch = count();
  else if (key == "sinkhorn.lambda") cfg.train.sinkhorn.lambda = num();
  else if (key == "sinkhorn.max_iter") cfg.train.sinkhorn.max_iter = count();
  else if (key == "sinkhorn.tol") cfg.train.sinkhorn.tol = num();
  else if (key == "sinkhorn.log_domain") cfg.train.sinkhorn.log_domain = boolean();
  else if (key == "eval.cutoffs") {
    cfg.cutoffs.clear();
    if (v.is_array())
      for (const auto& x : v) cfg.cutoffs.push_back(x.get<std::size_t>());
    else
      for (double x : parse_ratio_list(str()))
        cfg.cutoffs.push_back((std::size_t)x);
  } else {
    throw std::invalid_argument("unknown config key: " + key);
  }
}

RunConfig load_run_config(const std::string& path) {
  RunConfig cfg;
  if (path.empty()) return cfg;
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path);
  json j = json::parse(in);
  for (auto& [k, v] : j.items()) apply_key(cfg, k, v);
  return cfg;
}

// `--a.b value` tokens left over by CLI11
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& extras) {
  for (std::size_t k = 0; k < extras.size(); ++k) {
    const std::string& tok = extras[k];
    if (tok.rfind("--", 0) != 0)
      throw std::invalid_argument("unexpected argument: " + tok);
    std::string key = tok.substr(2);
    std::string value;
    auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
    } else {
      if (++k >= extras.size())
        throw std::invalid_argument("missing value for --" + key);
      value = extras[k];
    }
    apply_key(cfg, key, json(value));
  }
}

void apply_env_seed(RunConfig& cfg) {
  if (const char* s = std::getenv("GUIDER_SEED"))
    cfg.seed = (std::uint64_t)std::strtoull(s, nullptr, 10);
}

std::uint64_t env_seed_or(std::uint64_t fallback) {
  if (const char* s = std::getenv("GUIDER_SEED"))
    return (std::uint64_t)std::strtoull(s, nullptr, 10);
  return fallback;
}

int cmd_synth(const std::string& out_dir, SynthConfig scfg,
              std::uint64_t seed) {
  fs::create_directories(out_dir);
  auto corpus = generate_synthetic(scfg, seed);
  auto p = [&](const char* f) { return (fs::path(out_dir) / f).string(); };
  save_interactions_tsv(p("interactions.tsv"), corpus.interactions);
  save_modal_features(p("text.gmf"), corpus.text);
  save_modal_features(p("vision.gmf"), corpus.vision);
  json j{{"seed", seed},
         {"n_users", scfg.n_users},
         {"n_items", scfg.n_items},
         {"n_clusters", scfg.n_clusters},
         {"per_user", scfg.per_user},
         {"item_cluster", corpus.item_cluster},
         {"user_prefs", corpus.user_prefs}};
  std::ofstream o(p("ground_truth.json"));
  o << j.dump(2) << '\n';
  std::cout << "wrote 4 files to " << out_dir << "\n";
  return 0;
}

int cmd_split(const std::string& interactions, const std::string& format,
              const std::string& out_dir, std::uint64_t seed) {
  auto ds = load_interactions(
      interactions, format == "csv" ? FileFormat::csv : FileFormat::tsv);
  auto split = split_per_user(ds, seed);
  fs::create_directories(out_dir);
  auto p = [&](const char* f) { return (fs::path(out_dir) / f).string(); };
  save_interactions_tsv(p("train.tsv"), split.train);
  save_interactions_tsv(p("valid.tsv"), split.valid);
  save_interactions_tsv(p("test.tsv"), split.test);
  save_split_manifest(p("split_manifest.json"), split, seed);
  return 0;
}

int cmd_inject(const std::string& interactions, const std::string& format,
               const std::string& out_dir, double ratio,
               std::uint64_t split_seed, std::uint64_t seed) {
  auto ds = load_interactions(
      interactions, format == "csv" ? FileFormat::csv : FileFormat::tsv);
  auto split = split_per_user(ds, split_seed);
  auto report = inject_noise(split, ratio, seed);
  fs::create_directories(out_dir);
  auto p = [&](const char* f) { return (fs::path(out_dir) / f).string(); };
  save_interactions_tsv(p("train.tsv"), split.train);
  save_interactions_tsv(p("valid.tsv"), split.valid);
  save_interactions_tsv(p("test.tsv"), split.test);
  save_split_manifest(p("split_manifest.json"), split, split_seed);
  json j{{"ratio", report.ratio},
         {"seed", report.seed},
         {"n_injected", report.injected_pairs.size()}};
  json pairs = json::array();
  for (auto& [u, i] : report.injected_pairs) pairs.push_back({u, i});
  j["injected_pairs"] = pairs;
  std::ofstream o(p("noise_report.json"));
  o << j.dump(2) << '\n';
  return 0;
}

int cmd_eval(const std::string& checkpoint, const RunConfig& cfg) {
  FileFormat fmt = cfg.interactions.ends_with(".csv") ? FileFormat::csv
                                                      : FileFormat::tsv;
  auto ds = load_interactions(cfg.interactions, fmt);
  auto split = split_per_user(ds, derive_seed(cfg.seed, "split-stage"));
  if (cfg.noise_ratio > 0.0)
    inject_noise(split, cfg.noise_ratio, derive_seed(cfg.seed, "noise-stage"));

  std::string kind = checkpoint_kind(checkpoint);
  std::vector<MetricsRow> rows;
  if (kind == "teacher") {
    auto teacher = load_teacher(checkpoint);
    teacher.build_adjacency(split.train);
    teacher.refresh();
    TeacherRef ref(teacher);
    rows = evaluate(ref, split, cfg.cutoffs, "teacher", cfg.threads);
  } else {
    auto student = load_student(checkpoint);
    auto text = load_modal_features(cfg.text_features, Modality::text,
                                    ds.n_items);
    auto vision = load_modal_features(cfg.vision_features, Modality::vision,
                                      ds.n_items);
    student.attach_features(&text, &vision);
    StudentRef ref(student);
    rows = evaluate(ref, split, cfg.cutoffs, "student", cfg.threads);
  }
  fs::create_directories(cfg.out_dir);
  std::string path = (fs::path(cfg.out_dir) / "metrics.jsonl").string();
  write_metrics_jsonl(path, rows);
  for (const auto& r : rows)
    std::cout << r.model_tag << " K=" << r.k << " recall=" << r.recall
              << " ndcg=" << r.ndcg << "\n";
  return 0;
}

int cmd_diagnose(const std::string& checkpoint, const RunConfig& cfg) {
  FileFormat fmt = cfg.interactions.ends_with(".csv") ? FileFormat::csv
                                                      : FileFormat::tsv;
  auto ds = load_interactions(cfg.interactions, fmt);
  auto split = split_per_user(ds, derive_seed(cfg.seed, "split-stage"));
  if (cfg.noise_ratio <= 0.0)
    throw std::runtime_error("diagnose requires --data.noise_ratio > 0");
  inject_noise(split, cfg.noise_ratio, derive_seed(cfg.seed, "noise-stage"));

  auto text = load_modal_features(cfg.text_features, Modality::text, ds.n_items);
  auto vision = load_modal_features(cfg.vision_features, Modality::vision,
                                    ds.n_items);
  auto teacher = load_teacher(checkpoint);
  teacher.build_adjacency(split.train);
  teacher.refresh();
  TeacherRef ref(teacher);

  fs::create_directories(cfg.out_dir);
  auto p = [&](const char* f) { return (fs::path(cfg.out_dir) / f).string(); };
  auto hist = score_distribution_report(ref, split.train, 0.10,
                                        derive_seed(cfg.seed, "diagnose"));
  write_histogram_csv(p("score_histogram.csv"), hist);

  HashProjector proj(cfg.hash_bits, text.dim(), vision.dim(),
                     derive_seed(cfg.seed, "hash-stage"));
  auto parts = run_amsc(ref, split.train, text, vision, proj,
                        cfg.train.s_thres, cfg.threads);
  auto det = noise_detection_report(parts, split.train);
  json j{{"auc", hist.auc},
         {"precision", det.precision},
         {"recall", det.recall},
         {"lift", det.lift}};
  std::ofstream o(p("diagnostics.json"));
  o << j.dump(2) << '\n';
  std::cout << j.dump(2) << "\n";
  return 0;
}

// ---- selftest ----------------------------------------------------------
// Compact re-statements of the independent oracles; each check prints its
// residual so a failing build is easy to localize.

json check(const std::string& name, bool pass, double residual) {
  return {{"name", name}, {"pass", pass}, {"residual", residual}};
}

json selftest_sinkhorn(double tol_override, bool& ok) {
  Rng rng(12345);
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  double worst = 0.0;
  std::size_t total_iters = 0;
  for (std::size_t B : {4, 16, 64}) {
    for (double lambda : {0.01, 0.1, 1.0}) {
      std::vector<double> a(B), b(B);
      Matrix D(B, B);
      for (auto& x : a) x = unif(rng);
      for (auto& x : b) x = unif(rng);
      double sa = 0, sb = 0;
      for (double x : a) sa += x;
      for (double x : b) sb += x;
      for (auto& x : a) x /= sa;
      for (auto& x : b) x /= sb;
      for (auto& x : D.data()) x = unif(rng);
      SinkhornConfig cfg;
      cfg.lambda = lambda;
      if (tol_override > 0) cfg.tol = tol_override;
      auto plan = sinkhorn(a, b, D, cfg);
      // verify the marginals directly, independent of the solver's own
      // residual bookkeeping
      double res = 0.0;
      for (std::size_t i = 0; i < B; ++i) {
        double rs = 0.0;
        for (std::size_t j = 0; j < B; ++j) rs += plan.plan(i, j);
        res = std::max(res, std::abs(rs - a[i]));
      }
      for (std::size_t j = 0; j < B; ++j) {
        double cs = 0.0;
        for (std::size_t i = 0; i < B; ++i) cs += plan.plan(i, j);
        res = std::max(res, std::abs(cs - b[j]));
      }
      worst = std::max(worst, res);
      total_iters += plan.iterations;
    }
  }
  bool pass = worst <= 1e-8;
  ok = ok && pass;
  auto j = check("sinkhorn_marginals", pass, worst);
  j["iterations"] = total_iters;
  return j;
}

json selftest_lp(bool& ok) {
  Rng rng(777);
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  double worst_rel = 0.0;
  for (int c = 0; c < 10; ++c) {
    Matrix D(3, 3);
    for (auto& x : D.data()) x = unif(rng);
    std::vector<double> a(3, 1.0 / 3.0), b(3, 1.0 / 3.0);
    // exact LP optimum over the Birkhoff polytope: best of the 6
    // permutation matrices scaled by 1/3
    int perm[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    double lp = 1e300;
    for (auto& p : perm) {
      double cost = (D(0, p[0]) + D(1, p[1]) + D(2, p[2])) / 3.0;
      lp = std::min(lp, cost);
    }
    SinkhornConfig cfg;
    cfg.lambda = 1e-3;
    cfg.max_iter = 100000;  // near-LP regime converges slowly
    auto plan = sinkhorn(a, b, D, cfg);
    double cost = kd_loss(plan, D);
    double rel = (cost - lp) / lp;
    worst_rel = std::max(worst_rel, std::abs(rel));
    if (cost < lp - 1e-9) worst_rel = 1e9;  // below the LP bound: impossible
  }
  bool pass = worst_rel <= 0.01;
  ok = ok && pass;
  return check("lp_oracle_agreement", pass, worst_rel);
}

json selftest_gradients(bool& ok) {
  // finite differences of the pairwise batch loss on a small MF teacher
  std::uint64_t seed = 99;
  TeacherModel t(4, 6, 8, 0, seed);
  t.refresh();
  std::vector<Triple> triples = {{0, 1, 2}, {1, 0, 3}, {3, 4, 5}, {2, 2, 0}};
  TeacherRef ref(t);
  ref.zero_grads();
  pairwise_batch(ref, triples);
  Matrix gu(4, 8), gi(6, 8);
  ref.base_grads(gu, gi);

  double worst = 0.0;
  double eps = 1e-5;
  auto loss_at = [&] {
    t.refresh();
    double s = 0.0;
    for (auto& tr : triples)
      s += -log_sigmoid(t.score(tr.u, tr.i) - t.score(tr.u, tr.j));
    return s;
  };
  for (std::size_t k = 0; k < t.user_emb.data().size(); k += 7) {
    double orig = t.user_emb.data()[k];
    t.user_emb.data()[k] = orig + eps;
    double lp = loss_at();
    t.user_emb.data()[k] = orig - eps;
    double lm = loss_at();
    t.user_emb.data()[k] = orig;
    double fd = (lp - lm) / (2 * eps);
    double an = gu.data()[k];
    double rel = std::abs(fd - an) / std::max(1e-8, std::abs(fd));
    worst = std::max(worst, rel);
  }
  t.refresh();
  bool pass = worst <= 1e-5;
  ok = ok && pass;
  return check("pairwise_gradient_fd", pass, worst);
}

json selftest_amsc(bool& ok) {
  Rng rng(4242);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  double worst = 0.0;
  for (int c = 0; c < 50; ++c) {
    std::size_t n = 3 + (std::size_t)(unif(rng) * 10);
    std::vector<Index> items(n);
    std::vector<double> losses(n);
    for (std::size_t k = 0; k < n; ++k) {
      items[k] = (Index)k;
      losses[k] = unif(rng);
    }
    auto [rel, spr] = partition_by_loss(items, losses);
    // invariants: exhaustive, disjoint, reliable nonempty
    if (rel.empty()) worst = 1.0;
    if (rel.size() + spr.size() != n) worst = 1.0;
    double mean = 0;
    for (double l : losses) mean += l;
    mean /= (double)n;
    for (Index i : rel)
      if (losses[i] > mean) worst = 1.0;
    for (Index i : spr)
      if (losses[i] <= mean) worst = 1.0;
  }
  bool pass = worst == 0.0;
  ok = ok && pass;
  return check("amsc_partition_invariants", pass, worst);
}

int cmd_selftest(double tol_override) {
  bool ok = true;
  json checks = json::array();
  checks.push_back(selftest_sinkhorn(tol_override, ok));
  checks.push_back(selftest_lp(ok));
  checks.push_back(selftest_gradients(ok));
  checks.push_back(selftest_amsc(ok));
  json out{{"pass", ok}, {"checks", checks}};
  std::cout << out.dump(2) << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GUIDER: denoising and optimal-transport distillation for "
               "multi-modal recommenders"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  std::string synth_out = "synth";
  SynthConfig scfg;
  std::uint64_t synth_seed = 42;
  synth->add_option("--out", synth_out);
  synth->add_option("--users", scfg.n_users);
  synth->add_option("--items", scfg.n_items);
  synth->add_option("--clusters", scfg.n_clusters);
  synth->add_option("--per-user", scfg.per_user);
  synth->add_option("--text-dim", scfg.text_dim);
  synth->add_option("--vision-dim", scfg.vision_dim);
  synth->add_option("--modal-noise", scfg.modal_noise);
  synth->add_option("--seed", synth_seed);

  // split
  auto* split = app.add_subcommand("split", "per-user 8:1:1 split");
  std::string sp_in, sp_fmt = "tsv", sp_out = "split";
  std::uint64_t sp_seed = 42;
  split->add_option("--interactions", sp_in)->required();
  split->add_option("--format", sp_fmt);
  split->add_option("--out", sp_out);
  split->add_option("--seed", sp_seed);

  // inject-noise
  auto* inj = app.add_subcommand("inject-noise", "split and add oracle noise");
  std::string in_in, in_fmt = "tsv", in_out = "noisy";
  double in_ratio = 0.1;
  std::uint64_t in_split_seed = 42, in_seed = 42;
  inj->add_option("--interactions", in_in)->required();
  inj->add_option("--format", in_fmt);
  inj->add_option("--out", in_out);
  inj->add_option("--ratio", in_ratio);
  inj->add_option("--split-seed", in_split_seed);
  inj->add_option("--seed", in_seed);

  // train
  auto* train = app.add_subcommand("train", "run the full training pipeline");
  std::string tr_config;
  std::string tr_noise_list;
  train->add_option("--config", tr_config);
  train->add_option("--noise-ratio", tr_noise_list,
                    "noise ratio, or a /-separated sweep list");
  train->allow_extras();

  // eval
  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string ev_checkpoint, ev_config;
  ev->add_option("--checkpoint", ev_checkpoint)->required();
  ev->add_option("--config", ev_config);
  ev->allow_extras();

  // diagnose
  auto* diag = app.add_subcommand(
      "diagnose", "score-distribution and noise-detection reports");
  std::string dg_checkpoint, dg_config;
  diag->add_option("--checkpoint", dg_checkpoint)->required();
  diag->add_option("--config", dg_config);
  diag->allow_extras();

  // selftest
  auto* self = app.add_subcommand("selftest", "numerical self checks");
  double self_tol = 0.0;
  self->add_option("--tol", self_tol, "override the Sinkhorn tolerance");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) return cmd_synth(synth_out, scfg, env_seed_or(synth_seed));
    if (*split) return cmd_split(sp_in, sp_fmt, sp_out, env_seed_or(sp_seed));
    if (*inj)
      return cmd_inject(in_in, in_fmt, in_out, in_ratio, in_split_seed,
                        env_seed_or(in_seed));
    if (*train) {
      RunConfig cfg = load_run_config(tr_config);
      apply_overrides(cfg, train->remaining());
      apply_env_seed(cfg);
      std::vector<double> ratios =
          tr_noise_list.empty() ? std::vector<double>{cfg.noise_ratio}
                                : parse_ratio_list(tr_noise_list);
      std::string base_out = cfg.out_dir;
      for (double r : ratios) {
        RunConfig one = cfg;
        one.noise_ratio = r;
        if (ratios.size() > 1) {
          std::ostringstream dir;
          dir << base_out << "/noise_" << r;
          one.out_dir = dir.str();
        }
        run_guider(one);
      }
      return 0;
    }
    if (*ev) {
      RunConfig cfg = load_run_config(ev_config);
      apply_overrides(cfg, ev->remaining());
      apply_env_seed(cfg);
      return cmd_eval(ev_checkpoint, cfg);
    }
    if (*diag) {
      RunConfig cfg = load_run_config(dg_config);
      apply_overrides(cfg, diag->remaining());
      apply_env_seed(cfg);
      return cmd_diagnose(dg_checkpoint, cfg);
    }
    if (*self) return cmd_selftest(self_tol);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 1;
  }
  return 0;
}
