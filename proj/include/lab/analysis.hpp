#pragma once

// Quantitative verdicts computed from trajectories and trained networks.

#include <optional>
#include <vector>

#include "lab/dynamics.hpp"
#include "lab/model.hpp"

namespace lab::analysis {

using dyn::Trajectory;
using model::NetworkParams;

struct EquivalenceReport {
  double alpha = 0.0;
  std::vector<double> times;         // matched times on the linear run's clock
  std::vector<double> weight_error;  // |sqrt((a+1)/2) W(2t/(a+1)) - W_lin(t)| / |W_lin(t)|
  double max_weight_error = 0.0;
  std::vector<double> loss_times;
  std::vector<double> loss_gap;      // relative loss difference at matched times
  double max_loss_gap = 0.0;
};

// Compares a (leaky) ReLU trajectory against a linear-network trajectory
// started from scaled weights. Snapshots are interpolated piecewise
// linearly; unless the two step grids align exactly, the ReLU snapshot
// cadence must be at most 100 steps.
EquivalenceReport equivalence_report(const Trajectory& relu, const Trajectory& lin, double alpha);

struct LayerStructure {
  std::vector<double> singular_values;
  double neg_mass_frac = 0.0;      // |min(W,0)| / |W|
  double offdiag_mass_frac = 0.0;  // intermediate layers, after sign permutation
  int numerical_rank = 0;
};

struct StructureReport {
  std::vector<LayerStructure> layers;
  std::vector<double> block_ratio;     // per hidden boundary: max/min of (|r+|, |r-|)
  std::vector<double> effective_map;   // odd part of f probed on the basis
  double effective_coefficient = 0.0;  // effective_map projected on prod(W)
  double rank_tol = 1e-2;
};

StructureReport structure_report(const NetworkParams& net,
                                 const NetworkParams* sign_reference = nullptr);

struct PlateauInfo {
  double duration = 0.0;
  double t_start = 0.0;
  double t_end = 0.0;
};

// Longest low-slope interval that begins after the loss has dropped and is
// followed by a further drop. The slope threshold is 1e-4 of the loss range
// per unit time; a 5% range fall marks a drop.
PlateauInfo plateau_duration(const std::vector<double>& losses, const std::vector<double>& times);

// Number of distinct loss drops: falls of at least drop_frac of the range
// between consecutive low-slope levels.
int count_loss_drops(const std::vector<double>& losses, const std::vector<double>& times,
                     double drop_frac = 0.05);

struct SuperpositionReport {
  std::vector<double> times;
  std::vector<double> target;
  std::vector<double> prediction;  // vertically aligned component sum
  double max_rel_gap = 0.0;        // over t > transient, relative to the target range
};

SuperpositionReport loss_superposition(const Trajectory& target,
                                       const std::vector<const Trajectory*>& components,
                                       double transient_frac = 0.05);

// Least-squares slope of log(series) against time over [t_lo, t_hi].
// Throws std::domain_error on non-positive values inside the window.
double fit_exponential_rate(const std::vector<double>& values, const std::vector<double>& times,
                            double t_lo, double t_hi);

// Ordinary least-squares slope of y against x.
double linear_slope(const std::vector<double>& x, const std::vector<double>& y);

// Piecewise-linear interpolation of all weights at a fractional step index.
NetworkParams interpolate_net(const Trajectory& traj, double step);

}  // namespace lab::analysis
