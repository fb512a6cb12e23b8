#include "lab/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace lab::theory {

EarlyPhaseSpec EarlyPhaseSpec::from_init(const NetworkParams& net2, const DataStats& stats,
                                         double tau) {
  net2.validate();
  if (net2.depth() != 2) throw numkit::ShapeError("EarlyPhaseSpec: needs a 2-layer net");
  const Matrix& w1 = net2.layers[0];
  const Matrix& w2 = net2.layers[1];
  EarlyPhaseSpec spec;
  spec.alpha = net2.alpha;
  spec.tau = tau;
  spec.s = stats.s;
  spec.beta_hat = stats.beta_hat;
  spec.trace_sigma = stats.trace_sigma;
  spec.w_init = std::max(w1.frobenius_norm(), w2.frobenius_norm());
  spec.r1.resize(w1.rows());
  for (std::size_t i = 0; i < w1.rows(); ++i) {
    double proj = 0.0;
    for (std::size_t j = 0; j < w1.cols(); ++j) proj += w1(i, j) * stats.beta_hat[j];
    spec.r1[i] = 0.5 * (proj + w2(0, i));
  }
  return spec;
}

double EarlyPhaseSpec::window_end() const {
  return tau * std::log(1.0 / w_init) / (s + trace_sigma);
}

std::pair<Matrix, Matrix> early_phase_weights(const EarlyPhaseSpec& spec, double t) {
  if (t < 0.0 || (t > 0.0 && t >= spec.window_end())) {
    throw std::domain_error("early_phase_weights: t outside the validity window");
  }
  const double growth = std::exp(0.5 * (spec.alpha + 1.0) * spec.s * t / spec.tau);
  const std::size_t h = spec.r1.size(), d = spec.beta_hat.size();
  Matrix w1(h, d);
  Matrix w2(1, h);
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < d; ++j) w1(i, j) = growth * spec.r1[i] * spec.beta_hat[j];
    w2(0, i) = growth * spec.r1[i];
  }
  return {std::move(w1), std::move(w2)};
}

ClosedFormSpec ClosedFormSpec::make(const std::vector<double>& r, const DataStats& stats,
                                    double w_init, double alpha, double tau) {
  ClosedFormSpec spec;
  spec.r = r;
  spec.w_init = w_init;
  spec.s = stats.s;
  spec.beta_hat = stats.beta_hat;
  const double rb = numkit::dot(r, stats.beta_hat);
  spec.q1 = 1.0 - rb;
  spec.q2 = 1.0 + rb;
  spec.alpha = alpha;
  spec.tau = tau;
  return spec;
}

std::vector<double> closed_form_w(const ClosedFormSpec& spec, double t) {
  if (spec.q2 < 1e-9) throw std::domain_error("closed_form_w: r anti-aligned with beta_hat");
  const std::size_t d = spec.r.size();
  const double tt = 0.5 * (spec.alpha + 1.0) * t / spec.tau;  // rescaled time
  const double e1 = std::exp(-spec.s * tt);
  const double e2 = e1 * e1;
  const double q = spec.q1 / spec.q2;
  const double rb = numkit::dot(spec.r, spec.beta_hat);

  const double prefactor = 1.0 + q * e2;
  std::vector<double> vec(d);
  for (std::size_t i = 0; i < d; ++i) {
    const double perp = spec.r[i] - spec.beta_hat[i] * rb;  // (I - bb^T) r
    vec[i] = spec.beta_hat[i] * (1.0 - q * e2) + (2.0 / spec.q2) * perp * e1;
  }
  const double denom =
      (4.0 / (spec.q2 * spec.q2)) * (1.0 / (spec.w_init * spec.w_init) + (1.0 - rb * rb) * tt) * e2 +
      (1.0 / spec.s) * (1.0 + q * q * e2) * (1.0 - e2);
  for (double& v : vec) v *= prefactor / denom;
  return vec;
}

std::vector<double> ols_solution(const DataStats& stats) {
  const auto sv = numkit::singular_values(stats.sigma);
  if (sv.back() <= 0.0 || sv.front() / sv.back() > 1e12) {
    throw std::runtime_error("ols_solution: Sigma is rank deficient");
  }
  return numkit::solve(stats.sigma, stats.beta);
}

MaxMarginResult max_margin(const Dataset& data, std::uint64_t sweep_seed) {
  data.validate();
  const std::size_t p = data.num_samples(), d = data.dim();
  for (double y : data.targets) {
    if (y != 1.0 && y != -1.0) throw std::invalid_argument("max_margin: labels must be +-1");
  }
  std::vector<double> xsq(p);
  for (std::size_t i = 0; i < p; ++i) {
    const double* x = data.inputs.row_ptr(i);
    double s = 0.0;
    for (std::size_t a = 0; a < d; ++a) s += x[a] * x[a];
    if (s == 0.0) throw std::invalid_argument("max_margin: zero input vector");
    xsq[i] = s;
  }

  MaxMarginResult res;
  res.dual.assign(p, 0.0);
  res.w.assign(d, 0.0);
  std::vector<std::size_t> order(p);
  std::iota(order.begin(), order.end(), 0);
  numkit::SeededRng rng(sweep_seed);

  const int max_sweeps = 100000;
  const double tol = 1e-10;
  const double dual_cap = 1e8;
  bool converged = false;
  for (res.sweeps = 1; res.sweeps <= max_sweeps; ++res.sweeps) {
    for (std::size_t k = p; k > 1; --k) std::swap(order[k - 1], order[rng.next_u64() % k]);
    double max_inc = 0.0;
    double dual_sum = 0.0;
    for (std::size_t k = 0; k < p; ++k) {
      const std::size_t i = order[k];
      const double* x = data.inputs.row_ptr(i);
      const double y = data.targets[i];
      double margin = 0.0;
      for (std::size_t a = 0; a < d; ++a) margin += res.w[a] * x[a];
      margin *= y;
      const double delta = std::max(-res.dual[i], (1.0 - margin) / xsq[i]);
      if (delta != 0.0) {
        res.dual[i] += delta;
        for (std::size_t a = 0; a < d; ++a) res.w[a] += delta * y * x[a];
      }
      max_inc = std::max(max_inc, std::abs(delta) * xsq[i]);
      dual_sum += res.dual[i];
    }
    if (dual_sum > dual_cap) throw std::runtime_error("max_margin: data not linearly separable");
    if (max_inc < tol) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    throw std::runtime_error("max_margin: dual did not converge; data likely not separable");
  }

  for (std::size_t i = 0; i < p; ++i) {
    const double* x = data.inputs.row_ptr(i);
    double margin = 0.0;
    for (std::size_t a = 0; a < d; ++a) margin += res.w[a] * x[a];
    margin *= data.targets[i];
    const double viol = std::max(0.0, 1.0 - margin);                 // primal feasibility
    const double slack = res.dual[i] * std::abs(margin - 1.0);       // complementary slackness
    res.kkt_residual = std::max({res.kkt_residual, viol, slack});
  }
  if (res.kkt_residual > 1e-8) {
    throw std::runtime_error("max_margin: KKT residual above tolerance");
  }
  const double wn = numkit::norm(res.w);
  res.direction.resize(d);
  for (std::size_t a = 0; a < d; ++a) res.direction[a] = res.w[a] / wn;
  return res;
}

Decomposition decompose_two_layer(const NetworkParams& net2) {
  net2.validate();
  if (net2.depth() != 2) throw numkit::ShapeError("decompose_two_layer: needs a 2-layer net");
  Decomposition dec;
  dec.net = net2;
  const Matrix& w1 = net2.layers[0];
  const Matrix& w2 = net2.layers[1];
  dec.w_eff.assign(w1.cols(), 0.0);
  const double c = 0.5 * (1.0 + net2.alpha);
  for (std::size_t j = 0; j < w1.cols(); ++j) {
    double acc = 0.0;
    for (std::size_t i = 0; i < w1.rows(); ++i) acc += w2(0, i) * w1(i, j);
    dec.w_eff[j] = c * acc;
  }
  return dec;
}

double Decomposition::even_part(std::span<const double> x) const {
  const Matrix& w1 = net.layers[0];
  const Matrix& w2 = net.layers[1];
  double acc = 0.0;
  for (std::size_t i = 0; i < w1.rows(); ++i) {
    const double* wi = w1.row_ptr(i);
    double z = 0.0;
    for (std::size_t j = 0; j < w1.cols(); ++j) z += wi[j] * x[j];
    acc += w2(0, i) * std::abs(z);
  }
  return 0.5 * (1.0 - net.alpha) * acc;
}

double depth_sep_g(double x1, double x2) {
  auto relu = [](double z) { return z > 0 ? z : 0.0; };
  return relu(relu(x1) - relu(x2)) - relu(relu(-x1) - relu(-x2));
}

LossSplit symmetric_loss_split(const NetworkParams& net2, const Dataset& data) {
  if (check_symmetry(data)) {
    throw std::invalid_argument("symmetric_loss_split: dataset is not symmetric");
  }
  Decomposition dec = decompose_two_layer(net2);
  LossSplit split;
  const std::size_t p = data.num_samples(), d = data.dim();
  for (std::size_t i = 0; i < p; ++i) {
    const double* x = data.inputs.row_ptr(i);
    double lin = 0.0;
    for (std::size_t a = 0; a < d; ++a) lin += dec.w_eff[a] * x[a];
    const double f = model::predict(net2, std::span<const double>(x, d));
    const double fe = f - lin;
    const double r = data.targets[i] - lin;
    split.linear_loss += 0.5 * r * r;
    split.even_energy += 0.5 * fe * fe;
  }
  split.linear_loss /= static_cast<double>(p);
  split.even_energy /= static_cast<double>(p);
  return split;
}

}  // namespace lab::theory
