#include <cmath>

#include "doctest.h"
#include "lab/theory.hpp"

using namespace lab::theory;
using lab::data::Dataset;
using lab::data::Reduction;
using lab::data::Teacher;
using lab::model::NetworkParams;
using lab::numkit::Matrix;
using lab::numkit::SeededRng;

namespace {

std::vector<double> unit(std::vector<double> v) {
  const double n = lab::numkit::norm(v);
  for (auto& x : v) x /= n;
  return v;
}

// Exhaustive active-set search for the hard-margin problem: try every
// subset of constraints as the active set, solve the equality-constrained
// minimum-norm problem, keep the feasible candidate of least norm.
std::vector<double> max_margin_oracle(const Dataset& data) {
  const std::size_t p = data.num_samples(), d = data.dim();
  std::vector<double> best;
  double best_norm = std::numeric_limits<double>::infinity();
  for (std::size_t mask = 1; mask < (1u << p); ++mask) {
    std::vector<std::size_t> act;
    for (std::size_t i = 0; i < p; ++i) {
      if (mask & (1u << i)) act.push_back(i);
    }
    if (act.size() > d) continue;
    // w = sum_j mu_j y_j x_j with G mu = 1 on the active set
    const std::size_t m = act.size();
    Matrix g(m, m);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = 0; b < m; ++b) {
        double dot = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          dot += data.inputs(act[a], k) * data.inputs(act[b], k);
        }
        g(a, b) = data.targets[act[a]] * data.targets[act[b]] * dot;
      }
    std::vector<double> mu;
    try {
      mu = lab::numkit::solve(g, std::vector<double>(m, 1.0));
    } catch (...) {
      continue;
    }
    bool dual_ok = true;
    for (double v : mu) {
      if (v < -1e-9) dual_ok = false;
    }
    if (!dual_ok) continue;
    std::vector<double> w(d, 0.0);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t k = 0; k < d; ++k) {
        w[k] += mu[a] * data.targets[act[a]] * data.inputs(act[a], k);
      }
    bool feasible = true;
    for (std::size_t i = 0; i < p; ++i) {
      double margin = 0.0;
      for (std::size_t k = 0; k < d; ++k) margin += w[k] * data.inputs(i, k);
      if (data.targets[i] * margin < 1.0 - 1e-9) feasible = false;
    }
    if (!feasible) continue;
    const double n = lab::numkit::norm(w);
    if (n < best_norm) {
      best_norm = n;
      best = w;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("early phase spec: H=1 example and window handling") {
  NetworkParams net;
  net.alpha = 0.0;
  std::vector<double> bh{0.6, 0.8};
  net.layers.push_back(Matrix::from_rows({{0.6, 0.8}}));  // W1(0) = beta_hat^T
  net.layers.push_back(Matrix(1, 1));                     // W2(0) = 0
  lab::data::DataStats st;
  st.s = 2.0;
  st.beta_hat = bh;
  st.trace_sigma = 1.0;
  auto spec = EarlyPhaseSpec::from_init(net, st);
  CHECK(spec.r1.size() == 1);
  CHECK(spec.r1[0] == doctest::Approx(0.5));

  auto [w1, w2] = early_phase_weights(spec, 0.0);
  CHECK(w1(0, 0) == doctest::Approx(0.5 * 0.6));
  CHECK(w1(0, 1) == doctest::Approx(0.5 * 0.8));
  CHECK(w2(0, 0) == doctest::Approx(0.5));

  spec.w_init = 1e-2;  // a non-degenerate validity window
  const double t_in = 0.5 * spec.window_end();
  auto [w1b, w2b] = early_phase_weights(spec, t_in);
  const double growth = std::exp(0.5 * (spec.alpha + 1.0) * spec.s * t_in);
  CHECK(w2b(0, 0) == doctest::Approx(0.5 * growth));
  CHECK_THROWS_AS(early_phase_weights(spec, 2.0 * spec.window_end()), std::domain_error);
}

TEST_CASE("closed form: limits, time rescaling, and degenerate direction") {
  SeededRng rng(71);
  lab::data::DataStats st;
  st.s = 1.3;
  st.beta_hat = unit({0.3, -0.5, 0.2, 0.7, 0.1});
  st.beta.resize(5);
  for (int i = 0; i < 5; ++i) st.beta[i] = st.s * st.beta_hat[i];

  std::vector<double> r(5);
  for (auto& v : r) v = rng.gaussian();
  r = unit(r);

  auto spec0 = ClosedFormSpec::make(r, st, 1e-3, 0.0);
  auto spec1 = ClosedFormSpec::make(r, st, 1e-3, 1.0);
  CHECK(spec0.q1 + spec0.q2 == doctest::Approx(2.0).epsilon(1e-12));

  // t -> infinity recovers beta
  auto w_inf = closed_form_w(spec1, 1e4);
  for (int i = 0; i < 5; ++i) CHECK(w_inf[i] == doctest::Approx(st.beta[i]).epsilon(1e-9));

  // t = 0 is the rank-one initial map w_init^2 r
  auto w0 = closed_form_w(spec1, 0.0);
  for (int i = 0; i < 5; ++i) CHECK(w0[i] == doctest::Approx(1e-6 * r[i]).epsilon(1e-9));

  // alpha enters only through the rescaled time
  for (double t : {0.5, 2.0, 7.0}) {
    auto a0 = closed_form_w(spec0, 2.0 * t);  // tilde t equal
    auto a1 = closed_form_w(spec1, t);
    for (int i = 0; i < 5; ++i) CHECK(a0[i] == doctest::Approx(a1[i]).epsilon(1e-13));
  }

  std::vector<double> anti(st.beta_hat);
  for (auto& v : anti) v = -v;
  auto bad = ClosedFormSpec::make(anti, st, 1e-3, 0.0);
  CHECK_THROWS_AS(closed_form_w(bad, 1.0), std::domain_error);
}

TEST_CASE("ols solutions and failure modes") {
  lab::data::DataStats st;
  st.sigma = Matrix::identity(2);
  st.beta = {0.3, -0.4};
  auto w = ols_solution(st);
  CHECK(w[0] == doctest::Approx(0.3));
  CHECK(w[1] == doctest::Approx(-0.4));

  st.sigma = Matrix::from_rows({{2, 0}, {0, 1}});
  st.beta = {2.0, 1.0};
  w = ols_solution(st);
  CHECK(w[0] == doctest::Approx(1.0));
  CHECK(w[1] == doctest::Approx(1.0));

  SeededRng rng(73);
  Matrix a = lab::numkit::gaussian_matrix(rng, 6, 4, 1.0);
  st.sigma = lab::numkit::matmul(a.transposed(), a);
  st.beta = {0.1, -0.2, 0.3, 0.4};
  w = ols_solution(st);
  std::vector<double> resid(4, 0.0);
  for (int i = 0; i < 4; ++i) {
    for (int j = 0; j < 4; ++j) resid[i] += st.sigma(i, j) * w[j];
    resid[i] -= st.beta[i];
  }
  CHECK(lab::numkit::norm(resid) < 1e-10);

  st.sigma = Matrix::from_rows({{1, 1, 0, 0}, {1, 1, 0, 0}, {0, 0, 1, 0}, {0, 0, 0, 1}});
  CHECK_THROWS(ols_solution(st));
}

TEST_CASE("ols is invariant to symmetrization and reduction") {
  SeededRng rng(74);
  Dataset d = lab::data::make_symmetric_gaussian(rng, 25, 3, Teacher{});
  auto mean_st = lab::data::compute_stats(d, Reduction::kMean);
  auto sum_st = lab::data::compute_stats(d, Reduction::kSum);
  auto doubled = lab::data::compute_stats(lab::data::symmetrize(d), Reduction::kMean);
  auto w1 = ols_solution(mean_st);
  auto w2 = ols_solution(sum_st);
  auto w3 = ols_solution(doubled);
  for (int i = 0; i < 3; ++i) {
    CHECK(w1[i] == doctest::Approx(w2[i]).epsilon(1e-12));
    CHECK(w1[i] == doctest::Approx(w3[i]).epsilon(1e-12));
  }
}

TEST_CASE("max margin: hand cases") {
  Dataset pair{Matrix::from_rows({{1, 0}, {-1, 0}}), {1, -1}, "pair", {}};
  auto res = max_margin(pair);
  CHECK(res.direction[0] == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(std::abs(res.direction[1]) < 1e-9);

  Dataset uneven{Matrix::from_rows({{2, 0}, {-1, 0}}), {1, -1}, "uneven", {}};
  res = max_margin(uneven);
  CHECK(res.direction[0] == doctest::Approx(1.0).epsilon(1e-9));
  // the tighter constraint is the (-1, 0) point: w = (1, 0)
  CHECK(res.w[0] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("max margin matches the active-set enumeration oracle") {
  SeededRng rng(75);
  int tried = 0;
  while (tried < 5) {
    Matrix x = lab::numkit::gaussian_matrix(rng, 6, 2, 1.0);
    std::vector<double> w_true{rng.gaussian(), rng.gaussian()};
    std::vector<double> y(6);
    bool margin_ok = true;
    for (int i = 0; i < 6; ++i) {
      const double m = w_true[0] * x(i, 0) + w_true[1] * x(i, 1);
      if (std::abs(m) < 0.2) margin_ok = false;
      y[i] = m > 0 ? 1.0 : -1.0;
    }
    if (!margin_ok) continue;
    ++tried;
    Dataset d{x, y, "sep", {}};
    auto res = max_margin(d);
    auto oracle = max_margin_oracle(d);
    REQUIRE(!oracle.empty());
    for (int k = 0; k < 2; ++k) CHECK(res.w[k] == doctest::Approx(oracle[k]).epsilon(1e-6));
    CHECK(res.kkt_residual < 1e-8);

    // positive input rescaling flips the norm but not the direction
    Matrix xs = x;
    xs *= 2.0;
    Dataset scaled{xs, y, "scaled", {}};
    auto res2 = max_margin(scaled);
    for (int k = 0; k < 2; ++k) {
      CHECK(res2.direction[k] == doctest::Approx(res.direction[k]).epsilon(1e-7));
      CHECK(res2.w[k] == doctest::Approx(0.5 * res.w[k]).epsilon(1e-6));
    }
  }
}

TEST_CASE("max margin rejects non-separable data") {
  Dataset xord{Matrix::from_rows({{1, 1}, {-1, -1}, {1, -1}, {-1, 1}}), {1, 1, -1, -1}, "xor", {}};
  CHECK_THROWS(max_margin(xord));
}

TEST_CASE("decomposition identities") {
  SeededRng rng(76);
  for (double alpha : {0.0, 0.3, 1.0}) {
    NetworkParams net = lab::model::init_gaussian(
        rng, lab::model::layer_shapes(4, {10}), 0.8, alpha);
    auto dec = decompose_two_layer(net);
    for (int rep = 0; rep < 100; ++rep) {
      std::vector<double> x(4), nx(4);
      for (int i = 0; i < 4; ++i) {
        x[i] = rng.gaussian();
        nx[i] = -x[i];
      }
      const double f = lab::model::predict(net, x);
      const double fm = lab::model::predict(net, nx);
      double lin = 0.0;
      for (int i = 0; i < 4; ++i) lin += dec.w_eff[i] * x[i];
      CHECK(std::abs(0.5 * (f - fm) - lin) < 1e-12);                     // odd part is linear
      CHECK(std::abs(dec.even_part(x) - dec.even_part(nx)) < 1e-12);     // even
      CHECK(std::abs((f - lin) - dec.even_part(x)) < 1e-12);             // residual identity
      for (double a : {0.5, 2.0, 7.0}) {
        std::vector<double> ax(4);
        for (int i = 0; i < 4; ++i) ax[i] = a * x[i];
        CHECK(dec.even_part(ax) == doctest::Approx(a * dec.even_part(x)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("depth separation function: values, oddness, nonlinearity, realizability") {
  CHECK(depth_sep_g(1, 0) == 1.0);
  CHECK(depth_sep_g(-1, 0) == -1.0);
  CHECK(depth_sep_g(1, 1) == 0.0);
  // additivity counterexample: g(e1) + g(e2) = 1 but g(e1 + e2) = 0
  CHECK(depth_sep_g(1, 0) + depth_sep_g(0, 1) == 1.0);
  CHECK(depth_sep_g(1, 1) == 0.0);

  // the explicit three-layer bias-free ReLU net implementing g
  NetworkParams net;
  net.alpha = 0.0;
  net.layers.push_back(Matrix::from_rows({{1, 0}, {0, 1}, {-1, 0}, {0, -1}}));
  net.layers.push_back(Matrix::from_rows({{1, -1, 0, 0}, {0, 0, 1, -1}}));
  net.layers.push_back(Matrix::from_rows({{1, -1}}));
  SeededRng rng(77);
  for (int rep = 0; rep < 200; ++rep) {
    const double x1 = rng.gaussian(), x2 = rng.gaussian();
    CHECK(lab::model::predict(net, std::vector<double>{x1, x2}) ==
          doctest::Approx(depth_sep_g(x1, x2)).epsilon(1e-12));
    CHECK(depth_sep_g(-x1, -x2) == doctest::Approx(-depth_sep_g(x1, x2)).epsilon(1e-12));
  }
}

TEST_CASE("symmetric loss split sums to the square loss") {
  SeededRng rng(78);
  Dataset d = lab::data::make_symmetric_gaussian(rng, 50, 4, Teacher{});
  NetworkParams net = lab::model::init_gaussian(rng, lab::model::layer_shapes(4, {12}), 0.7, 0.3);
  auto split = symmetric_loss_split(net, d);
  const double total = lab::model::loss_value(net, d, lab::model::Loss::kSquare, Reduction::kMean);
  CHECK(split.linear_loss + split.even_energy == doctest::Approx(total).epsilon(1e-10));

  // a linear network has no even component
  NetworkParams lin = lab::model::init_gaussian(rng, lab::model::layer_shapes(4, {12}), 0.7, 1.0);
  auto lin_split = symmetric_loss_split(lin, d);
  CHECK(lin_split.even_energy < 1e-25);

  Dataset asym{Matrix::from_rows({{1, 0, 0, 0}, {0.5, 0, 0, 0}}), {1, 1}, "a", {}};
  CHECK_THROWS(symmetric_loss_split(net, asym));
}
