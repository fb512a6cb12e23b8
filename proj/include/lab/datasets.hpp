#pragma once

// Dataset families used by the experiments, plus their first- and
// second-moment statistics.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/numkit.hpp"

namespace lab::data {

using numkit::Matrix;
using numkit::SeededRng;

enum class Reduction { kMean, kSum };

const char* reduction_name(Reduction r);
Reduction reduction_from_name(const std::string& name);

struct Dataset {
  Matrix inputs;                  // P x D, rows are samples
  std::vector<double> targets;    // length P
  std::string name;
  nlohmann::json metadata;        // generator parameters incl. seed

  std::size_t num_samples() const { return inputs.rows(); }
  std::size_t dim() const { return inputs.cols(); }
  std::vector<double> input(std::size_t i) const;
  void validate() const;  // P >= 1, D >= 1, finite values
};

struct DataStats {
  Matrix sigma;                  // <x x^T>
  std::vector<double> beta;      // <y x>
  double s = 0.0;                // ||beta||
  std::vector<double> beta_hat;  // beta / s (zero vector when s == 0)
  double trace_sigma = 0.0;
  double y_squared = 0.0;        // <y^2>, needed for loss values from stats
};

// Sigma = <x x^T>, beta = <y x>; mean divides by P, sum does not.
DataStats compute_stats(const Dataset& data, Reduction reduction);

// Moments averaged only over {x : r^T x > 0}. Throws if any input lies
// exactly on the hyperplane.
DataStats halfspace_stats(const Dataset& data, const std::vector<double>& r);

struct Teacher {
  enum class Kind { kLinearPlusSine, kLinear } kind = Kind::kLinearPlusSine;
  std::vector<double> w;  // sampled U[-0.5, 0.5]^D when empty
  double evaluate(const double* x, std::size_t d) const;
};

// 2*n_pairs points: x_n ~ N(0, I) plus the mirror -x_n, targets from the
// odd teacher function.
Dataset make_symmetric_gaussian(SeededRng& rng, std::size_t n_pairs, std::size_t dim,
                                Teacher teacher);

// Appends (-x, -y) for every (x, y).
Dataset symmetrize(const Dataset& data);

// nullopt when inputs form exact +- pairs with odd targets (tolerance
// 1e-12); otherwise the index of the offending point. When a point's
// mirror is missing but a nearby unmatched point exists, that near-miss
// partner is reported, so a perturbed pair flags the perturbed point.
std::optional<std::size_t> check_symmetry(const Dataset& data);

// Named families: fan | circle | ortho2 | ortho_highD | xor4 | asym6 | labelflip.
Dataset make_named(const std::string& name, const nlohmann::json& params, SeededRng& rng);

// Linearly maps inputs so that the sample covariance (mean reduction)
// becomes exactly the identity. Targets are unchanged.
Dataset whiten(const Dataset& data);

void save_csv(const Dataset& data, const std::string& csv_path);
Dataset load_csv(const std::string& csv_path);

}  // namespace lab::data
