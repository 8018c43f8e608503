#include "guider/otkd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace guider {

std::vector<double> pairwise_logits(const ScoreModel& m,
                                    std::span<const Triple> triples) {
  if (triples.empty())
    throw std::runtime_error("pairwise_logits: empty triple list");
  std::vector<double> z;
  z.reserve(triples.size());
  for (const auto& t : triples)
    z.push_back(log_sigmoid(m.score(t.u, t.i) - m.score(t.u, t.j)));
  return z;
}

std::vector<double> to_simplex(std::span<const double> z) {
  double zmax = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) {
    out[k] = std::exp(z[k] - zmax);
    total += out[k];
  }
  for (auto& v : out) v /= total;
  return out;
}

Matrix cost_matrix(std::span<const double> z_t, std::span<const double> z_s) {
  if (z_t.size() != z_s.size())
    throw std::invalid_argument("cost_matrix: logit batches differ in length");
  Matrix D(z_t.size(), z_s.size());
  for (std::size_t m = 0; m < z_t.size(); ++m)
    for (std::size_t n = 0; n < z_s.size(); ++n) {
      double gap = z_t[m] - z_s[n];
      D(m, n) = gap * gap;
    }
  return D;
}

namespace {

double log_sum_exp(std::span<const double> xs) {
  double m = *std::max_element(xs.begin(), xs.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

double plan_residual(const Matrix& P, std::span<const double> a,
                     std::span<const double> b) {
  double res = 0.0;
  std::size_t B = a.size(), C = b.size();
  for (std::size_t i = 0; i < B; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < C; ++j) rs += P(i, j);
    res = std::max(res, std::abs(rs - a[i]));
  }
  for (std::size_t j = 0; j < C; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < B; ++i) cs += P(i, j);
    res = std::max(res, std::abs(cs - b[j]));
  }
  return res;
}

TransportPlan sinkhorn_log(std::span<const double> a, std::span<const double> b,
                           const Matrix& D, const SinkhornConfig& cfg) {
  std::size_t B = a.size(), C = b.size();
  std::vector<double> f(B, 0.0), g(C, 0.0);
  std::vector<double> log_a(B), log_b(C), buf(std::max(B, C));
  for (std::size_t i = 0; i < B; ++i) log_a[i] = std::log(a[i]);
  for (std::size_t j = 0; j < C; ++j) log_b[j] = std::log(b[j]);

  TransportPlan out;
  out.plan = Matrix(B, C);
  auto assemble = [&] {
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < C; ++j)
        out.plan(i, j) = std::exp((f[i] + g[j] - D(i, j)) / cfg.lambda);
  };

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    for (std::size_t i = 0; i < B; ++i) {
      for (std::size_t j = 0; j < C; ++j)
        buf[j] = (g[j] - D(i, j)) / cfg.lambda;
      f[i] = cfg.lambda * (log_a[i] - log_sum_exp({buf.data(), C}));
    }
    for (std::size_t j = 0; j < C; ++j) {
      for (std::size_t i = 0; i < B; ++i)
        buf[i] = (f[i] - D(i, j)) / cfg.lambda;
      g[j] = cfg.lambda * (log_b[j] - log_sum_exp({buf.data(), B}));
    }
    assemble();
    out.iterations = it;
    out.marginal_residual = plan_residual(out.plan, a, b);
    if (out.marginal_residual <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

TransportPlan sinkhorn_linear(std::span<const double> a,
                              std::span<const double> b, const Matrix& D,
                              const SinkhornConfig& cfg, bool& underflow) {
  std::size_t B = a.size(), C = b.size();
  Matrix K(B, C);
  for (std::size_t i = 0; i < B; ++i)
    for (std::size_t j = 0; j < C; ++j) K(i, j) = std::exp(-D(i, j) / cfg.lambda);

  std::vector<double> u(B, 1.0), v(C, 1.0), kv(B), ktu(C);
  TransportPlan out;
  out.plan = Matrix(B, C);
  underflow = false;

  for (std::size_t it = 1; it <= cfg.max_iter; ++it) {
    for (std::size_t i = 0; i < B; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < C; ++j) s += K(i, j) * v[j];
      kv[i] = s;
    }
    for (std::size_t i = 0; i < B; ++i) {
      if (kv[i] <= 0.0 || !std::isfinite(kv[i])) {
        underflow = true;
        return out;
      }
      u[i] = a[i] / kv[i];
    }
    for (std::size_t j = 0; j < C; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < B; ++i) s += K(i, j) * u[i];
      ktu[j] = s;
    }
    for (std::size_t j = 0; j < C; ++j) {
      if (ktu[j] <= 0.0 || !std::isfinite(ktu[j])) {
        underflow = true;
        return out;
      }
      v[j] = b[j] / ktu[j];
    }
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < C; ++j) out.plan(i, j) = u[i] * K(i, j) * v[j];
    out.iterations = it;
    out.marginal_residual = plan_residual(out.plan, a, b);
    if (!std::isfinite(out.marginal_residual)) {
      underflow = true;
      return out;
    }
    if (out.marginal_residual <= cfg.tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// Round a near-feasible plan onto the transport polytope (Altschuler,
// Niles-Weed, Rigollet 2017, Alg. 2): scale rows and columns down to
// their targets, then distribute the leftover mass rank-one. The result
// satisfies both marginals to machine precision while moving at most
// O(residual) total mass.
void round_to_feasible(Matrix& P, std::span<const double> a,
                       std::span<const double> b) {
  std::size_t B = a.size(), C = b.size();
  for (std::size_t i = 0; i < B; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < C; ++j) rs += P(i, j);
    if (rs > a[i]) {
      double x = a[i] / rs;
      for (std::size_t j = 0; j < C; ++j) P(i, j) *= x;
    }
  }
  for (std::size_t j = 0; j < C; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < B; ++i) cs += P(i, j);
    if (cs > b[j]) {
      double y = b[j] / cs;
      for (std::size_t i = 0; i < B; ++i) P(i, j) *= y;
    }
  }
  std::vector<double> err_a(B), err_b(C);
  double total = 0.0;
  for (std::size_t i = 0; i < B; ++i) {
    double rs = 0.0;
    for (std::size_t j = 0; j < C; ++j) rs += P(i, j);
    err_a[i] = std::max(0.0, a[i] - rs);  // clamp fp negatives
    total += err_a[i];
  }
  for (std::size_t j = 0; j < C; ++j) {
    double cs = 0.0;
    for (std::size_t i = 0; i < B; ++i) cs += P(i, j);
    err_b[j] = std::max(0.0, b[j] - cs);
  }
  if (total > 0.0)
    for (std::size_t i = 0; i < B; ++i)
      for (std::size_t j = 0; j < C; ++j)
        P(i, j) += err_a[i] * err_b[j] / total;
}

}  // namespace

TransportPlan sinkhorn(std::span<const double> a, std::span<const double> b,
                       const Matrix& D, const SinkhornConfig& cfg) {
  if (a.empty() || b.empty())
    throw std::invalid_argument("sinkhorn: empty marginals");
  if (D.rows() != a.size() || D.cols() != b.size())
    throw std::invalid_argument("sinkhorn: cost matrix shape mismatch");
  if (cfg.lambda <= 0.0 || cfg.tol <= 0.0)
    throw std::invalid_argument("sinkhorn: lambda and tol must be positive");
  for (double x : a)
    if (x <= 0.0) throw std::invalid_argument("sinkhorn: marginal a not strictly positive");
  for (double x : b)
    if (x <= 0.0) throw std::invalid_argument("sinkhorn: marginal b not strictly positive");

  TransportPlan p;
  bool underflow = true;
  if (!cfg.log_domain) {
    p = sinkhorn_linear(a, b, D, cfg, underflow);
    // on kernel underflow, fall through to the log-domain solver
  }
  if (underflow) p = sinkhorn_log(a, b, D, cfg);

  if (!p.converged) {
    // the scaling loop stalled above tol (small lambda with near-tied
    // assignments); project the iterate onto the feasible polytope
    round_to_feasible(p.plan, a, b);
    p.marginal_residual = plan_residual(p.plan, a, b);
    p.converged = p.marginal_residual <= cfg.tol;
  }
  return p;
}

double kd_loss(const TransportPlan& p, const Matrix& D) {
  if (p.plan.rows() != D.rows() || p.plan.cols() != D.cols())
    throw std::invalid_argument("kd_loss: plan/cost shape mismatch");
  std::vector<double> terms;
  terms.reserve(D.data().size());
  for (std::size_t k = 0; k < D.data().size(); ++k)
    terms.push_back(p.plan.data()[k] * D.data()[k]);
  return compensated_sum(terms);
}

std::vector<double> kd_grad_student(const TransportPlan& p,
                                    std::span<const double> z_t,
                                    std::span<const double> z_s) {
  std::size_t B = z_t.size();
  std::vector<double> g(z_s.size(), 0.0);
  for (std::size_t n = 0; n < z_s.size(); ++n) {
    double acc = 0.0;
    for (std::size_t m = 0; m < B; ++m)
      acc += p.plan(m, n) * 2.0 * (z_s[n] - z_t[m]);
    g[n] = acc;
  }
  return g;
}

double kl_divergence(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw std::invalid_argument("kl_divergence: length mismatch");
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k)
    s += a[k] * (std::log(a[k]) - std::log(b[k]));
  return s;
}

std::vector<double> kl_grad_student(std::span<const double> z_t,
                                    std::span<const double> z_s) {
  auto a = to_simplex(z_t);
  auto b = to_simplex(z_s);
  std::vector<double> g(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) g[k] = b[k] - a[k];
  return g;
}

}  // namespace guider
