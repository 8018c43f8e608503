#ifndef GUIDER_OTKD_HPP
#define GUIDER_OTKD_HPP

#include <span>
#include <vector>

#include "guider/losses.hpp"
#include "guider/matrix.hpp"

namespace guider {

struct SinkhornConfig {
  double lambda = 0.1;
  std::size_t max_iter = 1000;
  double tol = 1e-9;
  bool log_domain = true;
};

struct TransportPlan {
  Matrix plan;  // B x B, row marginal = a (teacher), column marginal = b
  std::size_t iterations = 0;
  double marginal_residual = 0.0;
  bool converged = false;
};

// z_b = log(sigma(s_ui - s_uj)) per triple
std::vector<double> pairwise_logits(const ScoreModel& m,
                                    std::span<const Triple> triples);

// softmax onto the probability simplex
std::vector<double> to_simplex(std::span<const double> z);

// D[m][n] = (z_t[m] - z_s[n])^2, on raw logit values
Matrix cost_matrix(std::span<const double> z_t, std::span<const double> z_s);

TransportPlan sinkhorn(std::span<const double> a, std::span<const double> b,
                       const Matrix& D, const SinkhornConfig& cfg = {});

// <P, D>
double kd_loss(const TransportPlan& p, const Matrix& D);

// Frozen-plan gradient: dL/dz_s[n] = sum_m P[m][n] * 2 (z_s[n] - z_t[m]);
// the plan and the softmax marginals are held constant.
std::vector<double> kd_grad_student(const TransportPlan& p,
                                    std::span<const double> z_t,
                                    std::span<const double> z_s);

// KL(a || b) over softmaxed logits, for the `--kd kl` ablation
double kl_divergence(std::span<const double> a, std::span<const double> b);

// dKL(softmax(z_t) || softmax(z_s))/dz_s = softmax(z_s) - softmax(z_t)
std::vector<double> kl_grad_student(std::span<const double> z_t,
                                    std::span<const double> z_s);

}  // namespace guider

#endif
