#include "guider/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "guider/rng.hpp"

namespace guider {

void AdamW::step(std::span<Matrix*> params, std::span<const Matrix*> grads,
                 std::span<const char* const> names, double lr,
                 double weight_decay) {
  if (state_.empty()) {
    state_.resize(params.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
      state_[b].m = Matrix(params[b]->rows(), params[b]->cols());
      state_[b].v = Matrix(params[b]->rows(), params[b]->cols());
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(beta1, (double)t_);
  double bc2 = 1.0 - std::pow(beta2, (double)t_);
  for (std::size_t b = 0; b < params.size(); ++b) {
    auto& p = params[b]->data();
    const auto& g = grads[b]->data();
    auto& m = state_[b].m.data();
    auto& v = state_[b].v.data();
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (!std::isfinite(g[k]))
        throw std::runtime_error(std::string("non-finite gradient in block ") +
                                 names[b]);
      m[k] = beta1 * m[k] + (1.0 - beta1) * g[k];
      v[k] = beta2 * v[k] + (1.0 - beta2) * g[k] * g[k];
      double mhat = m[k] / bc1;
      double vhat = v[k] / bc2;
      // decoupled weight decay acts on the parameter, not the moments
      p[k] -= lr * (mhat / (std::sqrt(vhat) + eps) + weight_decay * p[k]);
    }
  }
}

namespace {

using PosSets = std::vector<std::unordered_set<Index>>;

PosSets build_pos_sets(const InteractionDataset& train) {
  PosSets sets(train.n_users);
  for (const auto& it : train.interactions) sets[it.user].insert(it.item);
  return sets;
}

Index sample_negative(Rng& rng, Index n_items,
                      const std::unordered_set<Index>& pos) {
  std::uniform_int_distribution<Index> di(0, n_items - 1);
  for (int tries = 0; tries < 1000; ++tries) {
    Index j = di(rng);
    if (!pos.count(j)) return j;
  }
  throw std::runtime_error("negative sampling exhausted: user interacted "
                           "with nearly every item");
}

std::vector<Triple> bpr_triples(const InteractionDataset& train,
                                const PosSets& pos, Rng& rng) {
  std::vector<Triple> out;
  out.reserve(train.size());
  for (const auto& it : train.interactions)
    out.push_back(
        {it.user, it.item, sample_negative(rng, train.n_items, pos[it.user])});
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// One triple per train positive: clean item vs calibrated-noisy item of
// the same user; BPR fallback for users with a degenerate partition.
std::vector<Triple> dbpr_triples(const InteractionDataset& train,
                                 std::span<const UserPartition> parts,
                                 const PosSets& pos, Rng& rng,
                                 std::size_t& n_dbpr) {
  std::vector<Triple> out;
  out.reserve(train.size());
  n_dbpr = 0;
  for (const auto& it : train.interactions) {
    const auto& p = parts[it.user];
    if (!p.true_set.empty() && !p.false_set.empty()) {
      std::uniform_int_distribution<std::size_t> dt(0, p.true_set.size() - 1);
      std::uniform_int_distribution<std::size_t> df(0, p.false_set.size() - 1);
      out.push_back({it.user, p.true_set[dt(rng)], p.false_set[df(rng)]});
      ++n_dbpr;
    } else {
      out.push_back({it.user, it.item,
                     sample_negative(rng, train.n_items, pos[it.user])});
    }
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// One triple per train positive with the positive redrawn from the user's
// clean partition (falling back to the raw item when the partition is
// degenerate); negatives are sampled from the unobserved pool as usual.
std::vector<Triple> denoised_triples(const InteractionDataset& train,
                                     std::span<const UserPartition> parts,
                                     const PosSets& pos, Rng& rng) {
  std::vector<Triple> out;
  out.reserve(train.size());
  for (const auto& it : train.interactions) {
    const auto& p = parts[it.user];
    Index i = it.item;
    if (!p.true_set.empty() &&
        std::find(p.false_set.begin(), p.false_set.end(), i) !=
            p.false_set.end()) {
      std::uniform_int_distribution<std::size_t> dt(0, p.true_set.size() - 1);
      i = p.true_set[dt(rng)];
    }
    out.push_back({it.user, i, sample_negative(rng, train.n_items, pos[it.user])});
  }
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

// validation metrics: rank against train-only exclusions
std::pair<double, double> valid_metrics(const ScoreModel& m,
                                        const DataSplit& split, int threads) {
  DataSplit view;
  view.n_users = split.n_users;
  view.n_items = split.n_items;
  view.train = split.train;
  view.test = split.valid;
  view.valid.n_users = split.n_users;
  view.valid.n_items = split.n_items;
  view.valid.rebuild_index();
  auto rows = evaluate(m, view, {20}, "valid", threads);
  return {rows[0].recall, rows[0].ndcg};
}

double teacher_epoch(TeacherRef& ref, std::span<const Triple> triples,
                     const TrainConfig& cfg, AdamW& opt) {
  TeacherModel& t = ref.model();
  Matrix gu(t.user_emb.rows(), t.user_emb.cols());
  Matrix gi(t.item_emb.rows(), t.item_emb.cols());
  double total = 0.0;
  for (std::size_t b = 0; b < triples.size(); b += cfg.batch_size) {
    std::size_t e = std::min(triples.size(), b + cfg.batch_size);
    ref.zero_grads();
    total += pairwise_batch(ref, std::span<const Triple>(triples).subspan(b, e - b));
    ref.base_grads(gu, gi);
    Matrix* params[] = {&t.user_emb, &t.item_emb};
    const Matrix* grads[] = {&gu, &gi};
    const char* const names[] = {"teacher.user_emb", "teacher.item_emb"};
    opt.step(params, grads, names, cfg.lr, cfg.weight_decay);
  }
  return total;
}

struct TeacherSnapshot {
  Matrix user, item;
};

}  // namespace

TeacherResult train_teacher(TeacherModel& teacher, const DataSplit& split,
                            const ModalFeatureTable& text,
                            const ModalFeatureTable& vision,
                            const HashProjector& proj, const TrainConfig& cfg,
                            std::uint64_t seed, bool use_dbpr, int threads) {
  auto t0 = std::chrono::steady_clock::now();
  TeacherResult res;
  teacher.build_adjacency(split.train);
  auto pos = build_pos_sets(split.train);
  AdamW opt;
  TeacherRef ref(teacher);
  TeacherSnapshot best{teacher.user_emb, teacher.item_emb};
  std::size_t best_epoch = 0;
  double best_recall = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    teacher.refresh();
    auto rng = make_rng(seed, "teacher-epoch", epoch);
    std::vector<Triple> triples;
    if (!use_dbpr || epoch <= cfg.warmup_epochs) {
      triples = bpr_triples(split.train, pos, rng);
    } else {
      auto parts = run_amsc(ref, split.train, text, vision, proj, cfg.s_thres,
                            threads);
      std::size_t n_dbpr = 0;
      triples = dbpr_triples(split.train, parts, pos, rng, n_dbpr);
      if (n_dbpr == 0) ++res.report.bpr_fallback_epochs;
    }
    double loss = teacher_epoch(ref, triples, cfg, opt);
    teacher.refresh();
    auto [r20, n20] = valid_metrics(ref, split, threads);
    res.report.epochs.push_back({epoch, loss, 0.0, 0.0, r20, n20});
    if (r20 > best_recall) {
      best_recall = r20;
      best_epoch = epoch;
      best = {teacher.user_emb, teacher.item_emb};
    } else if (epoch - best_epoch >= cfg.patience) {
      res.report.stopped_early = true;
      break;
    }
  }

  teacher.user_emb = best.user;
  teacher.item_emb = best.item;
  teacher.refresh();
  res.report.best_epoch = best_epoch;
  res.report.best_recall20 = best_recall;
  res.partitions = run_amsc(ref, split.train, text, vision, proj, cfg.s_thres,
                            threads);
  res.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return res;
}

namespace {

struct StudentBatchLosses {
  double rec = 0.0;
  double kd = 0.0;
};

StudentBatchLosses student_batch(StudentRef& sref, const TeacherRef& tref,
                                 std::span<const Triple> rec_triples,
                                 std::span<const Triple> kd_triples,
                                 const TrainConfig& cfg, const std::string& kd,
                                 AdamW& opt, std::size_t& sinkhorn_warnings) {
  StudentBatchLosses out;
  sref.zero_grads();

  // L_Rec: pointwise BCE, one sampled negative per positive
  std::vector<LabeledPair> pairs;
  pairs.reserve(rec_triples.size() * 2);
  for (const auto& t : rec_triples) {
    pairs.push_back({t.u, t.i, 1});
    pairs.push_back({t.u, t.j, 0});
  }
  out.rec = bce_batch(sref, pairs);

  if (kd != "none" && !kd_triples.empty()) {
    auto z_t = pairwise_logits(tref, kd_triples);
    auto z_s = pairwise_logits(sref, kd_triples);
    std::vector<double> gz;
    if (kd == "ot") {
      auto a = to_simplex(z_t);
      auto b = to_simplex(z_s);
      auto D = cost_matrix(z_t, z_s);
      auto plan = sinkhorn(a, b, D, cfg.sinkhorn);
      if (!plan.converged) ++sinkhorn_warnings;
      out.kd = kd_loss(plan, D);
      gz = kd_grad_student(plan, z_t, z_s);
    } else if (kd == "kl") {
      out.kd = kl_divergence(to_simplex(z_t), to_simplex(z_s));
      gz = kl_grad_student(z_t, z_s);
    } else {
      throw std::invalid_argument("unknown kd mode: " + kd);
    }
    // chain dL/dz through z = log(sigma(s_ui - s_uj))
    for (std::size_t b = 0; b < kd_triples.size(); ++b) {
      const auto& t = kd_triples[b];
      double delta = sref.score(t.u, t.i) - sref.score(t.u, t.j);
      double c = cfg.kd_weight * gz[b] * (1.0 - sigmoid(delta));
      sref.add_score_grad(t.u, t.i, c);
      sref.add_score_grad(t.u, t.j, -c);
    }
  }

  StudentModel& s = sref.model();
  Matrix* params[] = {&s.user_emb, &s.item_id_emb, &s.proj_text,
                      &s.proj_vision};
  const Matrix* grads[] = {&sref.grad_user, &sref.grad_item_id,
                           &sref.grad_proj_text, &sref.grad_proj_vision};
  const char* const names[] = {"student.user_emb", "student.item_id_emb",
                               "student.proj_text", "student.proj_vision"};
  opt.step(params, grads, names, cfg.lr, cfg.weight_decay);
  return out;
}

struct StudentSnapshot {
  Matrix user, item_id, pt, pv;
};

}  // namespace

TrainReport train_student(StudentModel& student, TeacherModel& teacher,
                          std::span<const UserPartition> partitions,
                          const DataSplit& split, const TrainConfig& cfg,
                          const std::string& kd, std::uint64_t seed,
                          int threads) {
  auto t0 = std::chrono::steady_clock::now();
  TrainReport report;
  auto pos = build_pos_sets(split.train);
  AdamW opt;
  StudentRef sref(student);
  TeacherRef tref(teacher);
  teacher.refresh();

  StudentSnapshot best{student.user_emb, student.item_id_emb, student.proj_text,
                       student.proj_vision};
  std::size_t best_epoch = 0;
  double best_recall = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    auto rng = make_rng(seed, "student-epoch", epoch);
    // guided training draws positives from the calibrated clean partition
    // (negatives stay sampled); the ablation path trains on raw interactions
    auto triples = kd == "none"
                       ? bpr_triples(split.train, pos, rng)
                       : denoised_triples(split.train, partitions, pos, rng);
    double loss_rec = 0.0, loss_kd = 0.0;
    for (std::size_t b = 0; b < triples.size(); b += cfg.batch_size) {
      std::size_t e = std::min(triples.size(), b + cfg.batch_size);
      // distillation runs on a prefix of the same triples the rec loss sees
      auto rec_batch = std::span<const Triple>(triples).subspan(b, e - b);
      auto kd_batch = kd == "none"
                          ? std::span<const Triple>{}
                          : rec_batch.first(std::min(cfg.kd_batch, rec_batch.size()));
      auto l = student_batch(sref, tref, rec_batch, kd_batch,
                             cfg, kd, opt, report.sinkhorn_warnings);
      loss_rec += l.rec;
      loss_kd += l.kd;
    }
    auto [r20, n20] = valid_metrics(sref, split, threads);
    report.epochs.push_back({epoch, loss_rec + cfg.kd_weight * loss_kd,
                             loss_kd, loss_rec, r20, n20});
    if (r20 > best_recall) {
      best_recall = r20;
      best_epoch = epoch;
      best = {student.user_emb, student.item_id_emb, student.proj_text,
              student.proj_vision};
    } else if (epoch - best_epoch >= cfg.patience) {
      report.stopped_early = true;
      break;
    }
  }

  student.user_emb = best.user;
  student.item_id_emb = best.item_id;
  student.proj_text = best.pt;
  student.proj_vision = best.pv;
  report.best_epoch = best_epoch;
  report.best_recall20 = best_recall;
  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  return report;
}

void write_report_json(const std::string& path, const TrainReport& r) {
  nlohmann::json j;
  j["best_epoch"] = r.best_epoch;
  j["best_recall20"] = r.best_recall20;
  j["stopped_early"] = r.stopped_early;
  j["sinkhorn_warnings"] = r.sinkhorn_warnings;
  j["bpr_fallback_epochs"] = r.bpr_fallback_epochs;
  j["wall_seconds"] = r.wall_seconds;
  j["epochs"] = nlohmann::json::array();
  for (const auto& e : r.epochs)
    j["epochs"].push_back({{"epoch", e.epoch},
                           {"loss", e.loss},
                           {"loss_kd", e.loss_kd},
                           {"loss_rec", e.loss_rec},
                           {"recall20", e.recall20},
                           {"ndcg20", e.ndcg20}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

void write_report_csv(const std::string& path, const TrainReport& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "epoch,loss,recall20,ndcg20\n";
  char buf[160];
  for (const auto& e : r.epochs) {
    std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g\n", e.epoch, e.loss,
                  e.recall20, e.ndcg20);
    out << buf;
  }
}

void run_guider(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  auto stage = [](const std::string& name, auto&& fn) {
    try {
      return fn();
    } catch (const std::exception& ex) {
      throw std::runtime_error("[" + name + "] " + ex.what());
    }
  };

  fs::create_directories(cfg.out_dir);
  auto out = [&](const std::string& f) { return (fs::path(cfg.out_dir) / f).string(); };

  FileFormat fmt = cfg.interactions.ends_with(".csv") ? FileFormat::csv
                                                      : FileFormat::tsv;
  auto ds = stage("load", [&] { return load_interactions(cfg.interactions, fmt); });
  auto text = stage("features", [&] {
    return load_modal_features(cfg.text_features, Modality::text, ds.n_items);
  });
  auto vision = stage("features", [&] {
    return load_modal_features(cfg.vision_features, Modality::vision,
                               ds.n_items);
  });

  auto split = stage("split", [&] {
    return split_per_user(ds, derive_seed(cfg.seed, "split-stage"));
  });
  if (cfg.noise_ratio > 0.0) {
    auto report = stage("inject-noise", [&] {
      return inject_noise(split, cfg.noise_ratio,
                          derive_seed(cfg.seed, "noise-stage"));
    });
    nlohmann::json j{{"ratio", report.ratio},
                     {"seed", report.seed},
                     {"n_injected", report.injected_pairs.size()}};
    std::ofstream o(out("noise_report.json"));
    o << j.dump(2) << '\n';
  }
  save_split_manifest(out("split_manifest.json"), split, cfg.seed);

  HashProjector proj(cfg.hash_bits, text.dim(), vision.dim(),
                     derive_seed(cfg.seed, "hash-stage"));

  std::vector<MetricsRow> metrics;
  TeacherModel teacher(ds.n_users, ds.n_items, cfg.d, cfg.n_layers,
                       derive_seed(cfg.seed, "teacher-stage"));
  std::vector<UserPartition> partitions;

  bool need_teacher = cfg.mode == "guider" || cfg.mode == "teacher-only";
  if (need_teacher) {
    auto tres = stage("train-teacher", [&] {
      return train_teacher(teacher, split, text, vision, proj, cfg.train,
                           cfg.seed, /*use_dbpr=*/true, cfg.threads);
    });
    partitions = std::move(tres.partitions);
    write_report_json(out("teacher_report.json"), tres.report);
    write_report_csv(out("teacher_epochs.csv"), tres.report);
    save_teacher(out("teacher.gmd"), teacher, cfg.seed);
    dump_partitions(out("partitions.jsonl"), partitions);

    TeacherRef tref(teacher);
    auto rows = evaluate(tref, split, cfg.cutoffs, "teacher", cfg.threads);
    metrics.insert(metrics.end(), rows.begin(), rows.end());

    if (cfg.noise_ratio > 0.0) {
      auto det = noise_detection_report(partitions, split.train);
      nlohmann::json j{{"precision", det.precision},
                       {"recall", det.recall},
                       {"lift", det.lift},
                       {"empty_false_pool", det.empty_false_pool}};
      std::ofstream o(out("noise_detection.json"));
      o << j.dump(2) << '\n';
    }
  }

  if (cfg.mode != "teacher-only") {
    StudentModel student(ds.n_users, ds.n_items, cfg.d, text.dim(),
                         vision.dim(), derive_seed(cfg.seed, "student-stage"));
    student.attach_features(&text, &vision);
    std::string kd = cfg.mode == "plain" ? "none" : cfg.kd;
    auto sreport = stage("train-student", [&] {
      if (!cfg.interleaved || cfg.mode == "plain")
        return train_student(student, teacher, partitions, split, cfg.train,
                             kd, cfg.seed, cfg.threads);
      // literal interleaving: alternate one teacher epoch and one
      // student epoch per outer round
      TrainConfig one = cfg.train;
      one.max_epochs = 1;
      one.patience = cfg.train.max_epochs + 1;
      TrainReport merged;
      for (std::size_t round = 1; round <= cfg.train.max_epochs; ++round) {
        auto tres = train_teacher(teacher, split, text, vision, proj, one,
                                  derive_seed(cfg.seed, "round", round),
                                  true, cfg.threads);
        partitions = std::move(tres.partitions);
        auto sr = train_student(student, teacher, partitions, split, one, kd,
                                derive_seed(cfg.seed, "round-s", round),
                                cfg.threads);
        EpochStats e = sr.epochs.back();
        e.epoch = round;
        merged.epochs.push_back(e);
        merged.sinkhorn_warnings += sr.sinkhorn_warnings;
        if (e.recall20 > merged.best_recall20) {
          merged.best_recall20 = e.recall20;
          merged.best_epoch = round;
        }
      }
      return merged;
    });
    write_report_json(out("student_report.json"), sreport);
    write_report_csv(out("student_epochs.csv"), sreport);
    save_student(out("student.gmd"), student, cfg.seed);

    StudentRef sref(student);
    std::string tag = cfg.mode == "plain" ? "student-plain" : "student-guider";
    auto rows = evaluate(sref, split, cfg.cutoffs, tag, cfg.threads);
    metrics.insert(metrics.end(), rows.begin(), rows.end());
  }

  write_metrics_jsonl(out("metrics.jsonl"), metrics);
}

}  // namespace guider
