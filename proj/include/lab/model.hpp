#pragma once

// Bias-free (leaky) ReLU network: parameters, forward pass, exact batch
// gradients, and the initialization schemes used in the experiments.

#include <span>
#include <string>
#include <vector>

#include "lab/datasets.hpp"
#include "lab/numkit.hpp"

namespace lab::model {

using data::Dataset;
using data::Reduction;
using numkit::Matrix;
using numkit::SeededRng;

// sigma(z) = max(z, alpha z); sigma'(0) := alpha.
inline double activation(double z, double alpha) { return z > 0.0 ? z : alpha * z; }
inline double activation_deriv(double z, double alpha) { return z > 0.0 ? 1.0 : alpha; }

enum class Loss { kSquare, kLogistic };
const char* loss_name(Loss l);
Loss loss_from_name(const std::string& name);

struct NetworkParams {
  std::vector<Matrix> layers;  // W_1 (H1 x D) ... W_L (1 x H_{L-1})
  double alpha = 0.0;          // leaky slope in [0, 1]; 1 = linear

  std::size_t depth() const { return layers.size(); }
  std::size_t input_dim() const { return layers.front().cols(); }
  void validate() const;  // dimension chaining, scalar output, alpha range
  double weight_norm() const;  // Frobenius norm over all layers jointly
};

struct ForwardTrace {
  std::vector<std::vector<double>> preacts;  // h_1 ... h_L
  double output = 0.0;                       // h_L
};

ForwardTrace forward(const NetworkParams& net, std::span<const double> x);
double predict(const NetworkParams& net, std::span<const double> x);

// Linear map W_L ... W_1 as a D-vector (row of the collapsed product).
std::vector<double> layer_product(const NetworkParams& net);

struct GradientResult {
  std::vector<Matrix> grads;  // dL/dW_l, including the regularizer force
  double data_loss = 0.0;     // loss without the regularization term
};

// Exact full-batch gradient of <(y-f)^2>/2 or <ln(1+exp(-y f))> under the
// chosen reduction, plus the regularizer force lambda_alpha * W with
// lambda_alpha = l2_raw * (alpha+1)/2.
GradientResult gradients(const NetworkParams& net, const Dataset& data, Loss loss,
                         Reduction reduction, double l2_raw);

double loss_value(const NetworkParams& net, const Dataset& data, Loss loss, Reduction reduction);

// Layer shapes for input dim D, hidden widths, scalar output.
std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(std::size_t input_dim,
                                                              const std::vector<std::size_t>& hidden);

// Layer-l entries i.i.d. N(0, w_init^2 / N_l) with N_l the layer's parameter count.
NetworkParams init_gaussian(SeededRng& rng,
                            const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                            double w_init, double alpha);

// Two-layer rank-one balanced start: W_2 = v^T with sign-paired entries so
// the positive and negative parts have equal norm, W_1 = v r^T, |W_1| = scale.
NetworkParams init_rank1_balanced(SeededRng& rng, std::size_t width, const std::vector<double>& r,
                                  double scale, double alpha);

// Deep block-sparse rank-one/two form: W_1 = u r_1 r^T, intermediate layers
// u sqrt(2) diag(p_l p_{l-1}^T, n_l n_{l-1}^T), W_L = u r_{L-1}^T, with each
// hidden block carrying half the unit norm. Implements x -> (u/sqrt2)^L r.x
// for alpha = 0.
NetworkParams init_deep_blocks(SeededRng& rng, const std::vector<std::size_t>& hidden,
                               const std::vector<double>& r, double u, double alpha);

void save_json(const NetworkParams& net, const std::string& path);
NetworkParams load_json(const std::string& path);

}  // namespace lab::model
