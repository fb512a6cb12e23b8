#pragma once

// Euler integration of the full per-sample training dynamics and of the
// reduced statistics-based flows, with trajectory recording. Time is
// t = step * eta throughout, which makes tau = 1 in all rate formulas.

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "lab/datasets.hpp"
#include "lab/model.hpp"

namespace lab::dyn {

using data::DataStats;
using data::Dataset;
using data::Reduction;
using model::Loss;
using model::NetworkParams;

struct TrainConfig {
  Loss loss = Loss::kSquare;
  Reduction reduction = Reduction::kMean;
  double eta = 0.01;
  long steps = 1000;
  double l2_raw = 0.0;
  long snapshot_every = 0;   // 0 = first and final state only
  long record_every = 100;   // monitor cadence (losses are kept every step)
  double divergence_threshold = 1e6;
  double stop_rel_change = 0.0;  // 0 = run the full step budget
  long stop_window = 1000;
  bool monitor_balance = false;
  std::uint64_t seed = 0;  // provenance only; initial weights come from the caller

  void validate() const;
};

struct Trajectory {
  double eta = 0.0;
  long steps_run = 0;
  std::string status;            // completed | converged | diverged | step_cap
  std::vector<double> losses;    // losses[k] = data loss at state k; size steps_run + 1
  std::vector<long> record_steps;
  std::vector<double> record_times;
  std::map<std::string, std::vector<double>> monitors;  // aligned with record_steps
  std::vector<std::pair<long, NetworkParams>> snapshots;
  NetworkParams final_net;

  double time_at(long step) const { return eta * static_cast<double>(step); }
  const std::vector<double>& monitor(const std::string& name) const;
};

// One Euler stepper; step() evaluates the force at the current state,
// returns the data loss there, then applies the update.
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual double step() = 0;
  virtual double current_loss() const = 0;
  virtual NetworkParams net() const = 0;
  virtual std::vector<double> layer_norms() const = 0;
  virtual std::vector<double> linear_map() const = 0;  // W_L ... W_1 (1 x D)
};

std::unique_ptr<Stepper> make_train_stepper(NetworkParams net, const Dataset& data,
                                            const TrainConfig& cfg);
std::unique_ptr<Stepper> make_linear_stepper(NetworkParams net2, const DataStats& stats,
                                             const TrainConfig& cfg);
std::unique_ptr<Stepper> make_reduced_two_layer_stepper(NetworkParams net2, const DataStats& stats,
                                                        const TrainConfig& cfg);
std::unique_ptr<Stepper> make_deep_linear_stepper(NetworkParams net, const DataStats& stats,
                                                  const TrainConfig& cfg);
std::unique_ptr<Stepper> make_deep_reduced_relu_stepper(NetworkParams net, const DataStats& stats,
                                                        const TrainConfig& cfg);

Trajectory run(Stepper& stepper, const TrainConfig& cfg);

// Full per-sample gradient descent on the network.
Trajectory train(NetworkParams net, const Dataset& data, const TrainConfig& cfg);

// Closed two-layer linear flow driven by Sigma and beta only.
Trajectory integrate_linear(NetworkParams net2, const DataStats& stats, const TrainConfig& cfg);

// Reduced leaky-ReLU flow for rank-one balanced states.
Trajectory integrate_reduced_two_layer(NetworkParams net2, const DataStats& stats,
                                       const TrainConfig& cfg);

// Deep linear flow of all layers from layer products.
Trajectory integrate_deep_linear(NetworkParams net, const DataStats& stats,
                                 const TrainConfig& cfg);

// Deep ReLU flow for block-sparse rank-one/rank-two states; the effective
// map is half the raw layer product.
Trajectory integrate_deep_reduced_relu(NetworkParams net, const DataStats& stats,
                                       const TrainConfig& cfg);

struct ScalarSeries {
  std::vector<double> times;
  std::vector<double> values;
};

// 1-D norm flow u' = u (beta_norm - u^2 / P); converges to sqrt(P beta_norm).
ScalarSeries integrate_ortho_norm(double u0, double beta_norm, std::size_t num_samples,
                                  const TrainConfig& cfg);

struct NormBoundReport {
  std::vector<double> times;     // recorded times inside the validity window
  std::vector<double> observed;  // max(|W1|, |W2|)
  std::vector<double> bound;     // u0 * exp((s + tr Sigma) t)
  bool all_hold = true;
  double window_end = 0.0;  // ln(1/u0) / (s + tr Sigma)
};

// Checks the early-phase norm growth bound against recorded weight norms;
// u0 should be the trajectory's own initial max norm.
NormBoundReport monitor_norm_bound(const Trajectory& traj, const DataStats& stats, double u0,
                                   double growth_rate_override = 0.0);

}  // namespace lab::dyn
