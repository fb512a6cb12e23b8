#include "lab/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace lab::analysis {

using numkit::Matrix;

namespace {

double interp(const std::vector<double>& xs, const std::vector<double>& ys, double x) {
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const std::size_t hi = static_cast<std::size_t>(it - xs.begin());
  const std::size_t lo = hi - 1;
  const double w = (x - xs[lo]) / (xs[hi] - xs[lo]);
  return ys[lo] + w * (ys[hi] - ys[lo]);
}

double loss_at_fractional_step(const Trajectory& traj, double step) {
  const double n = static_cast<double>(traj.losses.size() - 1);
  double s = std::clamp(step, 0.0, n);
  if (std::abs(s - std::round(s)) < 1e-9) s = std::round(s);
  const std::size_t lo = static_cast<std::size_t>(std::floor(s));
  if (static_cast<double>(lo) >= n) return traj.losses.back();
  const double w = s - static_cast<double>(lo);
  return traj.losses[lo] + w * (traj.losses[lo + 1] - traj.losses[lo]);
}

}  // namespace

NetworkParams interpolate_net(const Trajectory& traj, double step) {
  const auto& snaps = traj.snapshots;
  if (snaps.empty()) throw std::invalid_argument("interpolate_net: no snapshots");
  if (step <= static_cast<double>(snaps.front().first)) return snaps.front().second;
  if (step >= static_cast<double>(snaps.back().first)) return snaps.back().second;
  std::size_t hi = 1;
  while (static_cast<double>(snaps[hi].first) < step) ++hi;
  const auto& [s0, n0] = snaps[hi - 1];
  const auto& [s1, n1] = snaps[hi];
  const double w = (step - static_cast<double>(s0)) / static_cast<double>(s1 - s0);
  if (w < 1e-9) return n0;
  if (w > 1.0 - 1e-9) return n1;
  if (s1 - s0 > 100) {
    throw std::invalid_argument("interpolate_net: snapshot cadence above 100 steps");
  }
  NetworkParams out = n0;
  for (std::size_t l = 0; l < out.layers.size(); ++l) {
    const Matrix& a = n0.layers[l];
    const Matrix& b = n1.layers[l];
    for (std::size_t k = 0; k < a.size(); ++k) {
      out.layers[l].data()[k] = (1.0 - w) * a.data()[k] + w * b.data()[k];
    }
  }
  return out;
}

EquivalenceReport equivalence_report(const Trajectory& relu, const Trajectory& lin, double alpha) {
  EquivalenceReport rep;
  rep.alpha = alpha;
  const double c = 0.5 * (alpha + 1.0);
  const double sqrt_c = std::sqrt(c);

  const double relu_t_max = relu.eta * static_cast<double>(relu.steps_run);
  for (const auto& [lin_step, lin_net] : lin.snapshots) {
    const double t = lin.eta * static_cast<double>(lin_step);
    const double relu_t = t / c;
    if (relu_t > relu_t_max * (1.0 + 1e-12)) break;
    const NetworkParams relu_net = interpolate_net(relu, relu_t / relu.eta);
    double num = 0.0, den = 0.0;
    for (std::size_t l = 0; l < lin_net.layers.size(); ++l) {
      const Matrix& wl = lin_net.layers[l];
      const Matrix& wr = relu_net.layers[l];
      for (std::size_t k = 0; k < wl.size(); ++k) {
        const double d = sqrt_c * wr.data()[k] - wl.data()[k];
        num += d * d;
        den += wl.data()[k] * wl.data()[k];
      }
    }
    rep.times.push_back(t);
    rep.weight_error.push_back(den > 0 ? std::sqrt(num / den) : 0.0);
  }
  if (rep.times.empty()) throw std::invalid_argument("equivalence_report: no overlapping times");
  rep.max_weight_error = *std::max_element(rep.weight_error.begin(), rep.weight_error.end());

  // Loss gap on a thinned per-step grid of the linear run.
  const std::size_t n = lin.losses.size();
  const std::size_t stride = std::max<std::size_t>(1, n / 20000);
  for (std::size_t k = 0; k < n; k += stride) {
    const double t = lin.eta * static_cast<double>(k);
    const double relu_step = t / c / relu.eta;
    if (relu_step > static_cast<double>(relu.losses.size() - 1) * (1.0 + 1e-12)) break;
    const double lr = loss_at_fractional_step(relu, relu_step);
    const double ll = lin.losses[k];
    rep.loss_times.push_back(t);
    rep.loss_gap.push_back(std::abs(lr - ll) / std::max(std::abs(ll), 1e-300));
  }
  rep.max_loss_gap = *std::max_element(rep.loss_gap.begin(), rep.loss_gap.end());
  return rep;
}

namespace {

double neg_mass_frac(const Matrix& w) {
  double neg = 0.0, tot = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) {
    const double v = w.data()[k];
    tot += v * v;
    if (v < 0) neg += v * v;
  }
  return tot > 0 ? std::sqrt(neg / tot) : 0.0;
}

int numerical_rank(const std::vector<double>& sv, double tol) {
  if (sv.empty() || sv[0] <= 0.0) return 0;
  int r = 0;
  for (double s : sv) {
    if (s >= tol * sv[0]) ++r;
  }
  return r;
}

std::vector<double> column(const Matrix& m, std::size_t j) {
  std::vector<double> c(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) c[i] = m(i, j);
  return c;
}

double masked_norm(const std::vector<double>& v, const std::vector<int>& cls, int want) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (cls[i] == want) s += v[i] * v[i];
  }
  return std::sqrt(s);
}

}  // namespace

StructureReport structure_report(const NetworkParams& net, const NetworkParams* sign_reference) {
  net.validate();
  const NetworkParams& ref = sign_reference ? *sign_reference : net;
  const std::size_t depth = net.depth();
  StructureReport rep;
  rep.layers.resize(depth);

  std::vector<numkit::Svd> ref_svd(depth);
  for (std::size_t l = 0; l < depth; ++l) {
    ref_svd[l] = numkit::svd(ref.layers[l]);
    rep.layers[l].singular_values = numkit::singular_values(net.layers[l]);
    rep.layers[l].neg_mass_frac = neg_mass_frac(net.layers[l]);
    rep.layers[l].numerical_rank = numerical_rank(rep.layers[l].singular_values, rep.rank_tol);
  }

  // Sign classes per hidden boundary. Rank-one layers classify by the sign
  // of the dominant left vector; rank-two block layers by the dominant of
  // the top two left vectors.
  std::vector<std::vector<int>> classes(depth - 1);
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    const std::size_t h = net.layers[l].rows();
    classes[l].assign(h, 0);
    const auto& sv = ref_svd[l].values;
    const std::vector<double> u1 = column(ref_svd[l].left, 0);
    const bool ranky2 = sv.size() > 1 && sv[0] > 0 && sv[1] / sv[0] > 0.5;
    if (!ranky2) {
      for (std::size_t i = 0; i < h; ++i) classes[l][i] = u1[i] >= 0 ? 1 : -1;
    } else {
      const std::vector<double> u2 = column(ref_svd[l].left, 1);
      for (std::size_t i = 0; i < h; ++i) classes[l][i] = std::abs(u1[i]) >= std::abs(u2[i]) ? 1 : -1;
    }
  }

  // Off-diagonal block mass for intermediate layers. Class signs per
  // boundary carry an arbitrary global orientation; orient each boundary
  // against the previous one through the layer between them.
  for (std::size_t l = 1; l + 1 < depth; ++l) {
    const Matrix& w = net.layers[l];
    double off = 0.0, tot = 0.0;
    for (std::size_t i = 0; i < w.rows(); ++i) {
      for (std::size_t j = 0; j < w.cols(); ++j) {
        const double v = w(i, j);
        tot += v * v;
        if (classes[l][i] != classes[l - 1][j]) off += v * v;
      }
    }
    if (off > 0.5 * tot) {
      for (auto& c : classes[l]) c = -c;
      off = tot - off;
    }
    rep.layers[l].offdiag_mass_frac = tot > 0 ? std::sqrt(off / tot) : 0.0;
  }

  // Block norm ratios per boundary: the first boundary and rank-one layers
  // read them off the dominant left vector; rank-two layers divide out the
  // previous boundary's block norms; the last boundary uses W_L directly.
  rep.block_ratio.resize(depth - 1);
  std::vector<double> prev_plus, prev_minus;  // block norms up to a common scale
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    double plus = 0.0, minus = 0.0;
    const auto& sv = ref_svd[l].values;
    const std::vector<double> u1 = column(ref_svd[l].left, 0);
    const bool ranky2 = sv.size() > 1 && sv[0] > 0 && sv[1] / sv[0] > 0.5;
    if (l == 0 || !ranky2) {
      // Use the dominant left vector's signed parts (orientation-free).
      double a = 0.0, b = 0.0;
      for (double v : u1) (v >= 0 ? a : b) += v * v;
      plus = std::sqrt(a);
      minus = std::sqrt(b);
    } else {
      // Pair the top two triplets with the previous boundary's classes via
      // their right-vector support.
      const std::vector<double> w1v = column(ref_svd[l].right, 0);
      const std::vector<double> w2v = column(ref_svd[l].right, 1);
      const double s1p = masked_norm(w1v, classes[l - 1], 1);
      const double s1m = masked_norm(w1v, classes[l - 1], -1);
      const double prev_p = prev_plus.empty() ? 1.0 : prev_plus[0];
      const double prev_m = prev_minus.empty() ? 1.0 : prev_minus[0];
      if (s1p >= s1m) {
        plus = sv[0] / std::max(prev_p, 1e-300);
        minus = sv[1] / std::max(prev_m, 1e-300);
      } else {
        plus = sv[1] / std::max(prev_p, 1e-300);
        minus = sv[0] / std::max(prev_m, 1e-300);
      }
    }
    const double hi = std::max(plus, minus), lo = std::min(plus, minus);
    rep.block_ratio[l] = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
    prev_plus = {plus};
    prev_minus = {minus};
  }
  // The last boundary is directly visible in W_L; prefer that reading.
  {
    const Matrix& wl = net.layers[depth - 1];
    double a = 0.0, b = 0.0;
    for (std::size_t k = 0; k < wl.size(); ++k) {
      const double v = wl.data()[k];
      (v >= 0 ? a : b) += v * v;
    }
    const double hi = std::max(std::sqrt(a), std::sqrt(b));
    const double lo = std::min(std::sqrt(a), std::sqrt(b));
    rep.block_ratio[depth - 2] = lo > 0 ? hi / lo : std::numeric_limits<double>::infinity();
  }

  // Effective linear map from odd probes on the basis.
  const std::size_t d = net.input_dim();
  rep.effective_map.resize(d);
  std::vector<double> probe(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    probe[j] = 1.0;
    const double fp = model::predict(net, probe);
    probe[j] = -1.0;
    const double fm = model::predict(net, probe);
    probe[j] = 0.0;
    rep.effective_map[j] = 0.5 * (fp - fm);
  }
  const std::vector<double> prod = model::layer_product(net);
  const double pp = numkit::dot(prod, prod);
  rep.effective_coefficient = pp > 0 ? numkit::dot(rep.effective_map, prod) / pp : 0.0;
  return rep;
}

namespace {

struct Thinned {
  std::vector<double> t, v;
};

Thinned thin(const std::vector<double>& losses, const std::vector<double>& times,
             std::size_t max_points = 20000) {
  Thinned out;
  const std::size_t n = losses.size();
  const std::size_t stride = std::max<std::size_t>(1, n / max_points);
  for (std::size_t k = 0; k < n; k += stride) {
    out.t.push_back(times[k]);
    out.v.push_back(losses[k]);
  }
  if (out.t.back() != times.back()) {
    out.t.push_back(times.back());
    out.v.push_back(losses.back());
  }
  return out;
}

struct Run {
  std::size_t a, b;  // inclusive index range of a low-slope run
};

std::vector<Run> low_slope_runs(const Thinned& s, double eps_per_time) {
  std::vector<Run> runs;
  const std::size_t n = s.v.size();
  if (n < 3) return runs;
  std::vector<bool> low(n, false);
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double dt = s.t[k + 1] - s.t[k - 1];
    const double slope = dt > 0 ? (s.v[k + 1] - s.v[k - 1]) / dt : 0.0;
    low[k] = std::abs(slope) < eps_per_time;
  }
  low[0] = low[1];
  low[n - 1] = low[n - 2];
  for (std::size_t k = 0; k < n;) {
    if (!low[k]) {
      ++k;
      continue;
    }
    std::size_t j = k;
    while (j + 1 < n && low[j + 1]) ++j;
    runs.push_back({k, j});
    k = j + 1;
  }
  return runs;
}

}  // namespace

PlateauInfo plateau_duration(const std::vector<double>& losses, const std::vector<double>& times) {
  if (losses.size() != times.size()) throw std::invalid_argument("plateau: misaligned series");
  PlateauInfo info;
  if (losses.size() < 4) return info;
  Thinned s = thin(losses, times);
  const double hi = *std::max_element(s.v.begin(), s.v.end());
  const double lo = *std::min_element(s.v.begin(), s.v.end());
  const double range = hi - lo;
  if (range <= 0.0) return info;
  const double eps = 1e-4 * range;
  const double drop = 0.05 * range;

  for (const Run& r : low_slope_runs(s, eps)) {
    if (s.v[r.a] > s.v.front() - drop) continue;  // the first drop has not happened yet
    double later_min = s.v[r.b];
    for (std::size_t k = r.b; k < s.v.size(); ++k) later_min = std::min(later_min, s.v[k]);
    if (later_min > s.v[r.b] - drop) continue;  // no further drop after the interval
    const double dur = s.t[r.b] - s.t[r.a];
    if (dur > info.duration) {
      info.duration = dur;
      info.t_start = s.t[r.a];
      info.t_end = s.t[r.b];
    }
  }
  return info;
}

int count_loss_drops(const std::vector<double>& losses, const std::vector<double>& times,
                     double drop_frac) {
  Thinned s = thin(losses, times);
  const double hi = *std::max_element(s.v.begin(), s.v.end());
  const double lo = *std::min_element(s.v.begin(), s.v.end());
  const double range = hi - lo;
  if (range <= 0.0) return 0;
  auto runs = low_slope_runs(s, 1e-4 * range);
  // Keep only runs long enough to be levels rather than inflection points.
  std::vector<double> levels;
  for (const Run& r : runs) {
    if (r.b - r.a >= 4) levels.push_back(0.5 * (s.v[r.a] + s.v[r.b]));
  }
  int drops = 0;
  for (std::size_t k = 1; k < levels.size(); ++k) {
    if (levels[k] < levels[k - 1] - drop_frac * range) ++drops;
  }
  return drops;
}

SuperpositionReport loss_superposition(const Trajectory& target,
                                       const std::vector<const Trajectory*>& components,
                                       double transient_frac) {
  SuperpositionReport rep;
  const std::size_t n = target.losses.size();
  const std::size_t stride = std::max<std::size_t>(1, n / 20000);
  std::vector<std::vector<double>> comp_t, comp_v;
  for (const Trajectory* c : components) {
    std::vector<double> ts(c->losses.size());
    for (std::size_t k = 0; k < ts.size(); ++k) ts[k] = c->eta * static_cast<double>(k);
    comp_t.push_back(std::move(ts));
    comp_v.push_back(c->losses);
  }
  for (std::size_t k = 0; k < n; k += stride) {
    const double t = target.eta * static_cast<double>(k);
    double pred = 0.0;
    for (std::size_t c = 0; c < components.size(); ++c) pred += interp(comp_t[c], comp_v[c], t);
    rep.times.push_back(t);
    rep.target.push_back(target.losses[k]);
    rep.prediction.push_back(pred);
  }
  const double offset = rep.target.front() - rep.prediction.front();
  for (double& v : rep.prediction) v += offset;

  const double hi = *std::max_element(rep.target.begin(), rep.target.end());
  const double lo = *std::min_element(rep.target.begin(), rep.target.end());
  const double range = std::max(hi - lo, 1e-300);
  const double t_min = transient_frac * rep.times.back();
  for (std::size_t k = 0; k < rep.times.size(); ++k) {
    if (rep.times[k] < t_min) continue;
    rep.max_rel_gap = std::max(rep.max_rel_gap,
                               std::abs(rep.prediction[k] - rep.target[k]) / range);
  }
  return rep;
}

double linear_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const std::size_t n = x.size();
  if (n < 2 || y.size() != n) throw std::invalid_argument("linear_slope: need >= 2 points");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx == 0.0) throw std::invalid_argument("linear_slope: degenerate x");
  return sxy / sxx;
}

double fit_exponential_rate(const std::vector<double>& values, const std::vector<double>& times,
                            double t_lo, double t_hi) {
  std::vector<double> xs, ys;
  for (std::size_t k = 0; k < values.size(); ++k) {
    if (times[k] < t_lo || times[k] > t_hi) continue;
    if (!(values[k] > 0.0)) {
      throw std::domain_error("fit_exponential_rate: non-positive value in window");
    }
    xs.push_back(times[k]);
    ys.push_back(std::log(values[k]));
  }
  if (xs.size() < 2) throw std::domain_error("fit_exponential_rate: window too narrow");
  return linear_slope(xs, ys);
}

}  // namespace lab::analysis
