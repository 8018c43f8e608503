#ifndef GUIDER_TRAINER_HPP
#define GUIDER_TRAINER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "guider/amsc.hpp"
#include "guider/dataset.hpp"
#include "guider/eval.hpp"
#include "guider/losses.hpp"
#include "guider/model.hpp"
#include "guider/otkd.hpp"

namespace guider {

struct TrainConfig {
  double lr = 5e-4;            // search range [1e-4, 1e-3]
  double weight_decay = 1e-3;  // search range [1e-4, 1e-2]
  std::size_t batch_size = 1024;
  std::size_t warmup_epochs = 5;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  double s_thres = 0.85;
  double kd_weight = 1.0;
  std::size_t kd_batch = 256;  // triples per distillation step
  SinkhornConfig sinkhorn;
};

// AdamW with decoupled weight decay over a list of parameter blocks.
class AdamW {
 public:
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  void step(std::span<Matrix*> params, std::span<const Matrix*> grads,
            std::span<const char* const> names, double lr,
            double weight_decay);

 private:
  struct Moments {
    Matrix m, v;
  };
  std::vector<Moments> state_;
  std::size_t t_ = 0;
};

struct EpochStats {
  std::size_t epoch = 0;
  double loss = 0.0;
  double loss_kd = 0.0;   // student only
  double loss_rec = 0.0;  // student only
  double recall20 = 0.0;
  double ndcg20 = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;
  double best_recall20 = 0.0;
  bool stopped_early = false;
  std::size_t sinkhorn_warnings = 0;
  std::size_t bpr_fallback_epochs = 0;
  double wall_seconds = 0.0;
};

struct TeacherResult {
  std::vector<UserPartition> partitions;
  TrainReport report;
};

TeacherResult train_teacher(TeacherModel& teacher, const DataSplit& split,
                            const ModalFeatureTable& text,
                            const ModalFeatureTable& vision,
                            const HashProjector& proj, const TrainConfig& cfg,
                            std::uint64_t seed, bool use_dbpr = true,
                            int threads = 1);

// kd: "ot", "kl" or "none"
TrainReport train_student(StudentModel& student, TeacherModel& teacher,
                          std::span<const UserPartition> partitions,
                          const DataSplit& split, const TrainConfig& cfg,
                          const std::string& kd, std::uint64_t seed,
                          int threads = 1);

struct RunConfig {
  std::string interactions;
  std::string text_features;
  std::string vision_features;
  std::string out_dir = ".";
  std::uint64_t seed = 42;
  double noise_ratio = 0.0;
  std::size_t d = 64;
  std::size_t n_layers = 2;
  std::size_t hash_bits = 64;
  std::string mode = "guider";  // guider | plain | teacher-only
  std::string kd = "ot";        // ot | kl | none
  bool interleaved = false;
  int threads = 1;
  std::vector<std::size_t> cutoffs = {5, 20};
  TrainConfig train;
};

// load -> split -> (optional) inject noise -> train teacher -> train
// student -> evaluate; writes checkpoints, reports and metrics under
// cfg.out_dir.
void run_guider(const RunConfig& cfg);

void write_report_json(const std::string& path, const TrainReport& r);
void write_report_csv(const std::string& path, const TrainReport& r);

}  // namespace guider

#endif
