#ifndef GUIDER_LOSSES_HPP
#define GUIDER_LOSSES_HPP

#include <span>
#include <vector>

#include "guider/dataset.hpp"
#include "guider/matrix.hpp"
#include "guider/model.hpp"

namespace guider {

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// log(1 + e^x) without overflow
inline double softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

inline double log_sigmoid(double x) { return -softplus(-x); }

// Scoring surface shared by teacher and student: evaluate s_ui and
// accumulate d(coeff * s_ui)/dparams into the owner's gradient buffers.
class ScoreModel {
 public:
  virtual ~ScoreModel() = default;
  virtual double score(Index u, Index i) const = 0;
  virtual void add_score_grad(Index u, Index i, double coeff) = 0;
};

class TeacherRef : public ScoreModel {
 public:
  explicit TeacherRef(TeacherModel& m)
      : model_(m),
        grad_user_eff(m.user_emb.rows(), m.user_emb.cols()),
        grad_item_eff(m.item_emb.rows(), m.item_emb.cols()) {}

  double score(Index u, Index i) const override { return model_.score(u, i); }

  void add_score_grad(Index u, Index i, double coeff) override {
    auto hu = model_.user_eff.row(u);
    auto hi = model_.item_eff.row(i);
    auto gu = grad_user_eff.row(u);
    auto gi = grad_item_eff.row(i);
    for (std::size_t k = 0; k < hu.size(); ++k) {
      gu[k] += coeff * hi[k];
      gi[k] += coeff * hu[k];
    }
  }

  void zero_grads() {
    grad_user_eff.zero();
    grad_item_eff.zero();
  }

  // gradients w.r.t. the base tables (through the propagation operator)
  void base_grads(Matrix& gu, Matrix& gi) const {
    model_.backprop(grad_user_eff, grad_item_eff, gu, gi);
  }

  TeacherModel& model() { return model_; }

  Matrix grad_user_eff, grad_item_eff;

 private:
  TeacherModel& model_;
};

class StudentRef : public ScoreModel {
 public:
  explicit StudentRef(StudentModel& m)
      : model_(m),
        grad_user(m.user_emb.rows(), m.user_emb.cols()),
        grad_item_id(m.item_id_emb.rows(), m.item_id_emb.cols()),
        grad_proj_text(m.proj_text.rows(), m.proj_text.cols()),
        grad_proj_vision(m.proj_vision.rows(), m.proj_vision.cols()) {}

  double score(Index u, Index i) const override { return model_.score(u, i); }

  void add_score_grad(Index u, Index i, double coeff) override;

  void zero_grads() {
    grad_user.zero();
    grad_item_id.zero();
    grad_proj_text.zero();
    grad_proj_vision.zero();
  }

  StudentModel& model() { return model_; }

  Matrix grad_user, grad_item_id, grad_proj_text, grad_proj_vision;

 private:
  StudentModel& model_;
};

struct BceResult {
  double value;
  double dscore;
};

// -r log(sigma(s)) - (1-r) log(1 - sigma(s))
inline BceResult bce_loss(double s, int r) {
  return {softplus(s) - r * s, sigmoid(s) - r};
}

struct BprResult {
  double value;
  double dpos;
  double dneg;
};

// -log(sigma(s_pos - s_neg))
inline BprResult bpr_loss(double s_pos, double s_neg) {
  double delta = s_pos - s_neg;
  double g = sigmoid(delta) - 1.0;  // d/ds_pos
  return {softplus(-delta), g, -g};
}

struct Triple {
  Index u, i, j;
};

// Summed pairwise loss -sum log(sigma(s_ui - s_uj)) over the batch;
// gradients accumulate into the model's buffers. Used for both plain BPR
// triples and the denoising variant (they differ only in how triples are
// sampled).
double pairwise_batch(ScoreModel& m, std::span<const Triple> triples);

struct LabeledPair {
  Index u, i;
  int label;
};

// Summed pointwise BCE over labeled pairs, gradients accumulated.
double bce_batch(ScoreModel& m, std::span<const LabeledPair> pairs);

// Positive-term BCE loss of every train interaction, aligned with
// ds.interactions order.
std::vector<double> per_interaction_losses(const ScoreModel& m,
                                           const InteractionDataset& ds);

}  // namespace guider

#endif
