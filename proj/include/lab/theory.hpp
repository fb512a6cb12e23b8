#pragma once

// Closed-form predictions and converged-solution targets, independent of
// the simulator. Time conventions match dynamics: t = step * eta and the
// default tau is 1.

#include <functional>
#include <vector>

#include "lab/datasets.hpp"
#include "lab/model.hpp"

namespace lab::theory {

using data::DataStats;
using data::Dataset;
using model::NetworkParams;
using numkit::Matrix;

struct EarlyPhaseSpec {
  std::vector<double> r1;        // (W1(0) beta_hat + W2(0)^T) / 2
  double s = 0.0;                // ||beta||
  std::vector<double> beta_hat;
  double alpha = 0.0;
  double tau = 1.0;
  double w_init = 0.0;           // max(|W1(0)|, |W2(0)|)
  double trace_sigma = 0.0;      // sets the validity window

  static EarlyPhaseSpec from_init(const NetworkParams& net2, const DataStats& stats,
                                  double tau = 1.0);
  double window_end() const;  // tau ln(1/w_init) / (s + tr Sigma)
};

// Dominant-term prediction exp((alpha+1) s t / (2 tau)) (r1 beta_hat^T, r1^T).
// Throws std::domain_error outside the validity window.
std::pair<Matrix, Matrix> early_phase_weights(const EarlyPhaseSpec& spec, double t);

struct ClosedFormSpec {
  std::vector<double> r;         // unit initial direction
  double w_init = 0.0;           // ||W1(0)||
  double s = 0.0;
  std::vector<double> beta_hat;
  double q1 = 0.0;               // 1 - r . beta_hat
  double q2 = 0.0;               // 1 + r . beta_hat
  double alpha = 0.0;
  double tau = 1.0;

  static ClosedFormSpec make(const std::vector<double>& r, const DataStats& stats, double w_init,
                             double alpha, double tau = 1.0);
};

// Exact time course of the implied linear map for white input covariance.
// Throws std::domain_error when q2 is degenerate.
std::vector<double> closed_form_w(const ClosedFormSpec& spec, double t);

// w* = Sigma^{-1} beta. Throws when cond(Sigma) > 1e12.
std::vector<double> ols_solution(const DataStats& stats);

struct MaxMarginResult {
  std::vector<double> w;          // minimum-norm weights with margins >= 1
  std::vector<double> direction;  // w / ||w||
  std::vector<double> dual;       // multipliers
  double kkt_residual = 0.0;
  int sweeps = 0;
};

// Hard-margin SVM by dual coordinate ascent with random-permutation sweeps.
// Throws std::runtime_error on non-separable data.
MaxMarginResult max_margin(const Dataset& data, std::uint64_t sweep_seed = 1);

struct Decomposition {
  std::vector<double> w_eff;  // (1+alpha)/2 (W2 W1)^T
  NetworkParams net;          // retained for the even part
  double even_part(std::span<const double> x) const;  // (1-alpha)/2 sum w2h |w1h.x|
};

Decomposition decompose_two_layer(const NetworkParams& net2);

// sigma(sigma(x1)-sigma(x2)) - sigma(sigma(-x1)-sigma(-x2)), sigma = ReLU:
// odd, nonlinear, and three-layer expressible.
double depth_sep_g(double x1, double x2);

struct LossSplit {
  double linear_loss = 0.0;  // <(y - w_eff.x)^2>/2
  double even_energy = 0.0;  // <f_e(x)^2>/2
};

// Requires a dataset passing check_symmetry; the two parts sum to the
// network's mean square loss because the cross term cancels in pairs.
LossSplit symmetric_loss_split(const NetworkParams& net2, const Dataset& data);

}  // namespace lab::theory
