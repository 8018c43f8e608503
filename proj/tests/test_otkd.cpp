#include <doctest.h>

#include <cmath>

#include "guider/model.hpp"
#include "guider/otkd.hpp"
#include "oracles.hpp"

using namespace guider;

TEST_CASE("pairwise logits") {
  TeacherModel t(1, 2, 1, 0, 1);
  t.user_emb(0, 0) = 1.0;
  t.item_emb(0, 0) = 0.0;
  t.item_emb(1, 0) = 0.0;
  t.refresh();
  TeacherRef ref(t);
  std::vector<Triple> triples = {{0, 0, 1}, {0, 1, 0}};
  auto z = pairwise_logits(ref, triples);
  REQUIRE(z.size() == 2);
  CHECK(z[0] == doctest::Approx(std::log(0.5)).epsilon(1e-12));
  for (double v : z) CHECK(v < 0.0);

  t.item_emb(0, 0) = 10.0;  // delta = 10
  t.refresh();
  auto z2 = pairwise_logits(ref, {triples.data(), 1});
  CHECK(z2[0] == doctest::Approx((double)oracles::log_sigmoid_hp(10.0L))
                     .epsilon(1e-9));
  CHECK(z2[0] == doctest::Approx(-4.54e-5).epsilon(1e-2));

  CHECK_THROWS(pairwise_logits(ref, {}));
}

TEST_CASE("to_simplex") {
  std::vector<double> flat = {-1.0, -1.0, -1.0, -1.0};
  auto s = to_simplex(flat);
  for (double v : s) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));

  std::vector<double> sat = {0.0, -1e9};
  auto s2 = to_simplex(sat);
  CHECK(s2[0] == doctest::Approx(1.0));
  CHECK(s2[1] == doctest::Approx(0.0));

  auto rng = make_rng(2, "simplex");
  std::normal_distribution<double> gauss(0, 1);
  std::vector<double> z(5);
  for (auto& v : z) v = gauss(rng);
  auto got = to_simplex(z);
  auto expect = oracles::softmax_hp(z);
  double total = 0;
  for (std::size_t k = 0; k < 5; ++k) {
    CHECK(got[k] == doctest::Approx(expect[k]).epsilon(1e-12));
    total += got[k];
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cost matrix") {
  std::vector<double> zt = {0.0, 1.0}, zs = {0.0, 1.0};
  auto D = cost_matrix(zt, zs);
  CHECK(D(0, 0) == 0.0);
  CHECK(D(0, 1) == 1.0);
  CHECK(D(1, 0) == 1.0);
  CHECK(D(1, 1) == 0.0);

  // transpose symmetry on random inputs
  auto rng = make_rng(3, "cost");
  std::normal_distribution<double> gauss(0, 1);
  std::vector<double> a(4), b(4);
  for (auto& v : a) v = gauss(rng);
  for (auto& v : b) v = gauss(rng);
  auto Dab = cost_matrix(a, b);
  auto Dba = cost_matrix(b, a);
  for (std::size_t m = 0; m < 4; ++m)
    for (std::size_t n = 0; n < 4; ++n)
      CHECK(Dab(m, n) == doctest::Approx(Dba(n, m)).epsilon(1e-15));

  std::vector<double> short_z = {0.0};
  CHECK_THROWS_AS(cost_matrix(a, short_z), std::invalid_argument);
}

TEST_CASE("sinkhorn trivial and reference cases") {
  SUBCASE("B=1 is forced by the marginals") {
    std::vector<double> one = {1.0};
    Matrix D(1, 1);
    D(0, 0) = 3.7;
    auto p = sinkhorn(one, one, D);
    CHECK(p.plan(0, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }

  SUBCASE("B=2 diagonal-dominant plan matches the reference solver") {
    std::vector<double> a = {0.5, 0.5}, b = {0.5, 0.5};
    Matrix D(2, 2);
    D(0, 1) = 1.0;
    D(1, 0) = 1.0;
    SinkhornConfig cfg;
    cfg.lambda = 0.1;
    auto p = sinkhorn(a, b, D, cfg);
    CHECK(p.converged);
    CHECK(p.plan(0, 0) > p.plan(0, 1));
    CHECK(p.plan(0, 1) == doctest::Approx(p.plan(1, 0)).epsilon(1e-8));
    auto ref = oracles::sinkhorn_reference(a, b, D, 0.1);
    for (std::size_t i = 0; i < 2; ++i)
      for (std::size_t j = 0; j < 2; ++j)
        CHECK(p.plan(i, j) == doctest::Approx(ref(i, j)).epsilon(1e-10));
  }

  SUBCASE("uneven marginals against the reference solver") {
    std::vector<double> a = {0.2, 0.3, 0.5}, b = {0.6, 0.1, 0.3};
    auto rng = make_rng(4, "sk");
    std::uniform_real_distribution<double> unif(0.0, 2.0);
    Matrix D(3, 3);
    for (auto& v : D.data()) v = unif(rng);
    SinkhornConfig cfg;
    cfg.lambda = 0.5;
    auto p = sinkhorn(a, b, D, cfg);
    auto ref = oracles::sinkhorn_reference(a, b, D, 0.5);
    for (std::size_t k = 0; k < 9; ++k)
      CHECK(p.plan.data()[k] == doctest::Approx(ref.data()[k]).epsilon(1e-8));
  }
}

TEST_CASE("linear and log-domain modes agree") {
  std::vector<double> a = {0.25, 0.25, 0.5}, b = {0.4, 0.3, 0.3};
  auto rng = make_rng(5, "modes");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Matrix D(3, 3);
  for (auto& v : D.data()) v = unif(rng);
  SinkhornConfig lin;
  lin.log_domain = false;
  lin.lambda = 0.2;
  SinkhornConfig logd;
  logd.lambda = 0.2;
  auto pl = sinkhorn(a, b, D, lin);
  auto pg = sinkhorn(a, b, D, logd);
  for (std::size_t k = 0; k < 9; ++k)
    CHECK(pl.plan.data()[k] == doctest::Approx(pg.plan.data()[k]).epsilon(1e-8));
}

TEST_CASE("linear mode underflow falls back to log domain") {
  std::vector<double> a = {0.5, 0.5}, b = {0.5, 0.5};
  Matrix D(2, 2);
  D(0, 0) = 0.0;
  D(0, 1) = 2000.0;
  D(1, 0) = 2000.0;
  D(1, 1) = 0.0;
  SinkhornConfig cfg;
  cfg.log_domain = false;
  cfg.lambda = 1e-3;  // exp(-2e6) underflows the linear kernel
  auto p = sinkhorn(a, b, D, cfg);
  CHECK(p.marginal_residual <= 1e-8);
  CHECK(p.plan(0, 0) == doctest::Approx(0.5).epsilon(1e-8));
}

TEST_CASE("marginal feasibility on random instances") {
  auto rng = make_rng(6, "feas");
  std::uniform_real_distribution<double> unif(0.1, 1.0);
  for (std::size_t B : {4, 16}) {
    std::vector<double> a(B), b(B);
    double sa = 0, sb = 0;
    for (auto& v : a) sa += (v = unif(rng));
    for (auto& v : b) sb += (v = unif(rng));
    for (auto& v : a) v /= sa;
    for (auto& v : b) v /= sb;
    Matrix D(B, B);
    for (auto& v : D.data()) v = unif(rng);
    auto p = sinkhorn(a, b, D);
    CHECK(p.converged);
    for (std::size_t i = 0; i < B; ++i) {
      double rs = 0;
      for (std::size_t j = 0; j < B; ++j) {
        CHECK(p.plan(i, j) >= 0.0);
        rs += p.plan(i, j);
      }
      CHECK(std::abs(rs - a[i]) <= 1e-8);
    }
    for (std::size_t j = 0; j < B; ++j) {
      double cs = 0;
      for (std::size_t i = 0; i < B; ++i) cs += p.plan(i, j);
      CHECK(std::abs(cs - b[j]) <= 1e-8);
    }
  }
}

TEST_CASE("kd loss basics") {
  std::vector<double> z = {-0.2, -0.9, -1.5};
  auto a = to_simplex(z);
  auto D0 = Matrix(3, 3);  // zero cost
  TransportPlan p = sinkhorn(a, a, cost_matrix(z, z));
  CHECK(kd_loss(p, D0) == 0.0);

  auto D = cost_matrix(z, z);
  double loss = kd_loss(p, D);
  CHECK(loss >= 0.0);
  // scalar oracle for the inner product
  double expect = 0;
  for (std::size_t k = 0; k < 9; ++k)
    expect += p.plan.data()[k] * D.data()[k];
  CHECK(loss == doctest::Approx(expect).epsilon(1e-12));

  Matrix wrong(2, 2);
  CHECK_THROWS_AS(kd_loss(p, wrong), std::invalid_argument);
}

TEST_CASE("identical logits, small lambda: kd loss vanishes") {
  std::vector<double> z = {-0.3, -0.7, -1.1, -2.0, -0.05};
  auto a = to_simplex(z);
  auto D = cost_matrix(z, z);
  SinkhornConfig cfg;
  cfg.lambda = 1e-3;
  auto p = sinkhorn(a, a, D, cfg);
  CHECK(kd_loss(p, D) <= 1e-3);
}

TEST_CASE("ot symmetry of the kd loss") {
  auto rng = make_rng(7, "sym");
  std::normal_distribution<double> gauss(-1.0, 0.5);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> za(6), zb(6);
    for (auto& v : za) v = gauss(rng);
    for (auto& v : zb) v = gauss(rng);
    auto solve = [](const std::vector<double>& zt,
                    const std::vector<double>& zs) {
      auto D = cost_matrix(zt, zs);
      auto p = sinkhorn(to_simplex(zt), to_simplex(zs), D);
      return kd_loss(p, D);
    };
    CHECK(std::abs(solve(za, zb) - solve(zb, za)) <= 1e-8);
  }
}

TEST_CASE("entropic cost upper-bounds the LP and tightens as lambda drops") {
  auto rng = make_rng(8, "mono-lam");
  std::uniform_real_distribution<double> unif(0.5, 2.0);
  Matrix D(3, 3);
  for (auto& v : D.data()) v = unif(rng);
  std::vector<double> u3(3, 1.0 / 3.0);
  double lp = oracles::lp_cost_b3_uniform(D);
  double prev = 1e300;
  for (double lambda : {1.0, 0.1, 0.01, 0.001}) {
    SinkhornConfig cfg;
    cfg.lambda = lambda;
    cfg.max_iter = 100000;  // small lambda needs many scaling rounds
    auto tp = sinkhorn(u3, u3, D, cfg);
    CHECK(tp.converged);
    double cost = kd_loss(tp, D);
    CHECK(cost >= lp - 1e-9);
    CHECK(cost <= prev + 1e-9);
    prev = cost;
  }
  CHECK(prev == doctest::Approx(lp).epsilon(0.01));
}

TEST_CASE("frozen-plan student gradient") {
  auto rng = make_rng(9, "kdgrad");
  std::normal_distribution<double> gauss(-0.8, 0.4);
  std::vector<double> zt(4), zs(4);
  for (auto& v : zt) v = gauss(rng);
  for (auto& v : zs) v = gauss(rng);
  auto a = to_simplex(zt);
  auto b = to_simplex(zs);
  auto plan = sinkhorn(a, b, cost_matrix(zt, zs));
  auto grad = kd_grad_student(plan, zt, zs);

  // finite differences of <P, D(z_s)> with P held fixed
  const double eps = 1e-6;
  for (std::size_t n = 0; n < 4; ++n) {
    auto cost_at = [&] {
      auto D = cost_matrix(zt, zs);
      double s = 0;
      for (std::size_t k = 0; k < D.data().size(); ++k)
        s += plan.plan.data()[k] * D.data()[k];
      return s;
    };
    double fd = oracles::central_diff(cost_at, zs[n], eps);
    CHECK(std::abs(fd - grad[n]) / std::max(1e-6, std::abs(fd)) <= 1e-6);
  }

  // translation covariance: shifting all logits leaves the gradient as a
  // function of the gaps
  std::vector<double> zt_shift = zt, zs_shift = zs;
  for (auto& v : zt_shift) v += 3.0;
  for (auto& v : zs_shift) v += 3.0;
  auto grad2 = kd_grad_student(plan, zt_shift, zs_shift);
  for (std::size_t n = 0; n < 4; ++n)
    CHECK(grad2[n] == doctest::Approx(grad[n]).epsilon(1e-9));
}

TEST_CASE("kl ablation divergence") {
  std::vector<double> z = {-0.5, -1.0, -2.0};
  auto a = to_simplex(z);
  CHECK(kl_divergence(a, a) == doctest::Approx(0.0).epsilon(1e-12));

  std::vector<double> z2 = {-0.1, -1.0, -3.0};
  auto b = to_simplex(z2);
  CHECK(kl_divergence(a, b) > 0.0);
  auto g = kl_grad_student(z, z2);
  for (std::size_t k = 0; k < 3; ++k)
    CHECK(g[k] == doctest::Approx(b[k] - a[k]).epsilon(1e-12));
}
