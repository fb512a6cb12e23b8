#include "lab/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <mutex>
#include <sstream>
#include <thread>

#include "internal.hpp"
#include "lab/analysis.hpp"
#include "lab/artifacts.hpp"
#include "lab/dynamics.hpp"
#include "lab/theory.hpp"

namespace fs = std::filesystem;

namespace lab::exp {

using data::DataStats;
using data::Dataset;
using data::Reduction;
using data::Teacher;
using detail::Checks;
using detail::RunDir;
using dyn::TrainConfig;
using dyn::Trajectory;
using model::Loss;
using model::NetworkParams;
using nlohmann::json;
using numkit::Matrix;
using numkit::SeededRng;

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  std::size_t workers = std::thread::hardware_concurrency();
  if (const char* env = std::getenv("LAB_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) workers = static_cast<std::size_t>(cap);
  }
  workers = std::min(workers == 0 ? 1 : workers, n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= n) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

namespace detail {

double misclassification(const NetworkParams& net, const Dataset& d) {
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < d.num_samples(); ++i) {
    const double* x = d.inputs.row_ptr(i);
    const double f = model::predict(net, std::span<const double>(x, d.dim()));
    if (f * d.targets[i] <= 0.0) ++wrong;
  }
  return static_cast<double>(wrong) / static_cast<double>(d.num_samples());
}

void save_dataset(RunDir& rd, const Dataset& d, Reduction reduction, const std::string& stem) {
  data::save_csv(d, rd.file(stem + ".csv"));
  json meta = d.metadata;
  meta["name"] = d.name;
  meta["reduction"] = data::reduction_name(reduction);
  meta["samples"] = d.num_samples();
  meta["dim"] = d.dim();
  artifacts::write_json_file(rd.file(stem + ".meta.json"), meta);
}

}  // namespace detail

namespace {

std::vector<double> times_of_losses(const Trajectory& t) {
  std::vector<double> ts(t.losses.size());
  for (std::size_t k = 0; k < ts.size(); ++k) ts[k] = t.eta * static_cast<double>(k);
  return ts;
}

artifacts::PlotSeries loss_series(const Trajectory& t, const std::string& label,
                                  double time_scale = 1.0) {
  artifacts::PlotSeries s;
  s.label = label;
  const std::size_t stride = std::max<std::size_t>(1, t.losses.size() / 4000);
  for (std::size_t k = 0; k < t.losses.size(); k += stride) {
    s.x.push_back(time_scale * t.eta * static_cast<double>(k));
    s.y.push_back(t.losses[k]);
  }
  return s;
}

double rel_vec_err(const std::vector<double>& got, const std::vector<double>& want) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < got.size(); ++i) {
    num += (got[i] - want[i]) * (got[i] - want[i]);
    den += want[i] * want[i];
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  return numkit::dot(a, b) / (numkit::norm(a) * numkit::norm(b));
}

std::vector<double> random_unit(SeededRng& rng, std::size_t d) {
  std::vector<double> r(d);
  for (auto& v : r) v = rng.gaussian();
  const double n = numkit::norm(r);
  for (auto& v : r) v /= n;
  return r;
}

// ---------------------------------------------------------------------------
// Theorem-3 equivalence family (fig2 plus the appendix C variants). One
// statistics-driven linear baseline at eta plus full per-sample (leaky) ReLU
// runs at 2 eta/(alpha+1); matched step indices carry matched rescaled time.
// ---------------------------------------------------------------------------

struct EquivRunResult {
  double alpha = 0.0;
  Trajectory traj;                  // losses and coarse monitors
  std::vector<double> err_times;    // on the linear clock
  std::vector<double> weight_error;
  double max_weight_error = 0.0;
  std::vector<double> loss_times;
  std::vector<double> loss_gap;
  double max_loss_gap = 0.0;
  long onset_step = -1;
  double sigma_ratio_at_onset = -1.0;
  double fitted_rate = 0.0;
  double expected_rate = 0.0;
  bool norm_bound_ok = false;
  bool norm_bound_halved_fails = false;
};

double weight_error_vs(const NetworkParams& relu, const NetworkParams& lin, double alpha) {
  const double sqrt_c = std::sqrt(0.5 * (alpha + 1.0));
  double num = 0.0, den = 0.0;
  for (std::size_t l = 0; l < lin.layers.size(); ++l) {
    const Matrix& wl = lin.layers[l];
    const Matrix& wr = relu.layers[l];
    for (std::size_t k = 0; k < wl.size(); ++k) {
      const double d = sqrt_c * wr.data()[k] - wl.data()[k];
      num += d * d;
      den += wl.data()[k] * wl.data()[k];
    }
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

EquivRunResult run_relu_against_linear(const Dataset& dataset, const DataStats& stats,
                                       const NetworkParams& lin0, const Trajectory& lin_traj,
                                       double alpha, const TrainConfig& lin_cfg, long err_every) {
  EquivRunResult out;
  out.alpha = alpha;
  const double c = 0.5 * (alpha + 1.0);

  NetworkParams relu0 = lin0;
  relu0.alpha = alpha;
  const double scale = std::sqrt(1.0 / c);
  for (auto& w : relu0.layers) w *= scale;
  const double u0 = std::max(relu0.layers[0].frobenius_norm(), relu0.layers[1].frobenius_norm());

  TrainConfig rcfg = lin_cfg;
  rcfg.eta = lin_cfg.eta / c;
  auto stepper = dyn::make_train_stepper(relu0, dataset, rcfg);

  Trajectory& traj = out.traj;
  traj.eta = rcfg.eta;
  traj.status = "completed";
  const long record_every = std::max<long>(1, rcfg.record_every);
  auto record = [&](long step) {
    traj.record_steps.push_back(step);
    traj.record_times.push_back(rcfg.eta * static_cast<double>(step));
    const auto norms = stepper->layer_norms();
    traj.monitors["w1_norm"].push_back(norms[0]);
    traj.monitors["w2_norm"].push_back(norms[1]);
    std::vector<double> map = stepper->linear_map();
    double mn = 0.0;
    for (double v : map) mn += v * v;
    traj.monitors["map_norm"].push_back(std::sqrt(mn));
  };
  auto maybe_error = [&](long step) {
    const std::size_t idx = static_cast<std::size_t>(step / err_every);
    if (step % err_every != 0 || idx >= lin_traj.snapshots.size()) return;
    if (lin_traj.snapshots[idx].first != step) return;
    const double e = weight_error_vs(stepper->net(), lin_traj.snapshots[idx].second, alpha);
    out.err_times.push_back(lin_cfg.eta * static_cast<double>(step));
    out.weight_error.push_back(e);
  };

  record(0);
  maybe_error(0);
  const double loss0_guard = 1e300;
  double first_loss = loss0_guard;
  long step = 0;
  for (; step < rcfg.steps; ++step) {
    const double loss = stepper->step();
    traj.losses.push_back(loss);
    if (first_loss == loss0_guard) first_loss = loss;
    if (!std::isfinite(loss) || loss > rcfg.divergence_threshold) {
      traj.status = "diverged";
      ++step;
      break;
    }
    const long done = step + 1;
    if (out.onset_step < 0 && loss < 0.99 * first_loss) {
      out.onset_step = done;
      const auto sv = numkit::singular_values(stepper->net().layers[0]);
      out.sigma_ratio_at_onset = sv[1] / sv[0];
    }
    if (done % record_every == 0 && done < rcfg.steps) record(done);
    maybe_error(done);
    if (rcfg.stop_rel_change > 0.0 && done % rcfg.stop_window == 0 &&
        done >= 2 * rcfg.stop_window) {
      const double now = traj.losses[done - 1];
      const double before = traj.losses[done - 1 - rcfg.stop_window];
      if (std::abs(before - now) / std::max(std::abs(now), 1e-300) < rcfg.stop_rel_change) {
        traj.status = "converged";
        ++step;
        break;
      }
    }
  }
  traj.steps_run = step;
  if (traj.status == "completed" && rcfg.stop_rel_change > 0.0) traj.status = "step_cap";
  if (traj.status != "diverged") traj.losses.push_back(stepper->current_loss());
  if (traj.record_steps.back() != step) record(step);
  traj.final_net = stepper->net();
  out.max_weight_error =
      out.weight_error.empty()
          ? -1.0
          : *std::max_element(out.weight_error.begin(), out.weight_error.end());

  // loss gap against the linear run at matched step indices
  const std::size_t overlap = std::min(traj.losses.size(), lin_traj.losses.size());
  const std::size_t stride = std::max<std::size_t>(1, overlap / 20000);
  for (std::size_t k = 0; k < overlap; k += stride) {
    out.loss_times.push_back(lin_cfg.eta * static_cast<double>(k));
    out.loss_gap.push_back(std::abs(traj.losses[k] - lin_traj.losses[k]) /
                           std::max(std::abs(lin_traj.losses[k]), 1e-300));
  }
  out.max_loss_gap = *std::max_element(out.loss_gap.begin(), out.loss_gap.end());

  // early-phase rate fit and the norm growth bound
  out.expected_rate = c * (stats.s - lin_cfg.l2_raw);
  if (out.onset_step > 0) {
    const double t_onset = rcfg.eta * static_cast<double>(out.onset_step);
    try {
      out.fitted_rate = analysis::fit_exponential_rate(traj.monitor("w2_norm"),
                                                       traj.record_times, 0.3 * t_onset,
                                                       0.7 * t_onset);
    } catch (const std::exception&) {
      out.fitted_rate = 0.0;
    }
  }
  auto bound = dyn::monitor_norm_bound(traj, stats, u0);
  out.norm_bound_ok = bound.all_hold;
  auto halved = dyn::monitor_norm_bound(traj, stats, u0, 0.5 * (stats.s + stats.trace_sigma));
  out.norm_bound_halved_fails = !halved.all_hold;
  return out;
}

void run_equivalence_family(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  const std::size_t dim = cfg.at("dim");
  const std::size_t width = cfg.at("width");
  const double w_init = cfg.at("w_init");
  const double eta = cfg.at("eta");
  const double l2 = cfg.value("l2", 0.0);
  const json& ck = cfg.at("checks");

  SeededRng data_rng = rng.split(1);
  Dataset dataset = data::make_symmetric_gaussian(data_rng, cfg.at("pairs"), dim, Teacher{});
  detail::save_dataset(rd, dataset, Reduction::kMean);
  const DataStats stats = data::compute_stats(dataset, Reduction::kMean);

  SeededRng init_rng = rng.split(2);
  NetworkParams lin0 =
      model::init_gaussian(init_rng, model::layer_shapes(dim, {width}), w_init, 1.0);

  TrainConfig lin_cfg;
  lin_cfg.loss = Loss::kSquare;
  lin_cfg.reduction = Reduction::kMean;
  lin_cfg.eta = eta;
  lin_cfg.steps = cfg.at("steps_cap");
  lin_cfg.l2_raw = l2;
  lin_cfg.record_every = cfg.value("record_every", 100);
  lin_cfg.stop_rel_change = cfg.value("stop_rel_change", 1e-9);
  lin_cfg.stop_window = 1000;
  const long err_every = cfg.value("error_every", 500);
  lin_cfg.snapshot_every = err_every;

  Trajectory lin_traj = dyn::integrate_linear(lin0, stats, lin_cfg);
  artifacts::write_trajectory_csv(lin_traj, rd.file("traj_linear.csv"));

  // linear-baseline early phase numbers (rate expectation has alpha = 1)
  json lin_report;
  {
    long onset = -1;
    for (std::size_t k = 1; k < lin_traj.losses.size(); ++k) {
      if (lin_traj.losses[k] < 0.99 * lin_traj.losses.front()) {
        onset = static_cast<long>(k);
        break;
      }
    }
    lin_report["summary"] = artifacts::traj_summary(lin_traj);
    if (onset > 0) {
      const double t_onset = eta * static_cast<double>(onset);
      const double rate = analysis::fit_exponential_rate(
          lin_traj.monitor("w2_norm"), lin_traj.record_times, 0.3 * t_onset, 0.7 * t_onset);
      const auto sv = numkit::singular_values(
          analysis::interpolate_net(lin_traj, static_cast<double>(onset)).layers[0]);
      lin_report["onset_step"] = onset;
      lin_report["fitted_rate"] = rate;
      lin_report["expected_rate"] = stats.s - l2;
      lin_report["sigma_ratio_at_onset"] = sv[1] / sv[0];
      if (ck.value("rate_checks", false)) {
        checks.add("linear/rate_rel_err",
                   std::abs(rate - (stats.s - l2)) / (stats.s - l2), "lt",
                   ck.at("rate_tol").get<double>());
        checks.add("linear/sigma_ratio_at_onset", sv[1] / sv[0], "lt",
                   ck.at("rank_ratio").get<double>());
      }
    }
  }

  const std::vector<double> alphas = cfg.at("alphas").get<std::vector<double>>();
  std::vector<EquivRunResult> results(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t i) {
    results[i] = run_relu_against_linear(dataset, stats, lin0, lin_traj, alphas[i], lin_cfg,
                                         err_every);
  });

  std::vector<artifacts::PlotSeries> loss_plot{loss_series(lin_traj, "linear")};
  std::vector<artifacts::PlotSeries> err_plot;
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    const auto& r = results[i];
    const std::string tag = "alpha" + std::to_string(alphas[i]).substr(0, 4);
    artifacts::write_trajectory_csv(r.traj, rd.file("traj_relu_" + tag + ".csv"));
    json rep{{"alpha", r.alpha},
             {"status", r.traj.status},
             {"times", r.err_times},
             {"weight_error", r.weight_error},
             {"max_weight_error", r.max_weight_error},
             {"loss_times", r.loss_times},
             {"loss_gap", r.loss_gap},
             {"max_loss_gap", r.max_loss_gap},
             {"onset_step", r.onset_step},
             {"sigma_ratio_at_onset", r.sigma_ratio_at_onset},
             {"fitted_rate", r.fitted_rate},
             {"expected_rate", r.expected_rate},
             {"norm_bound_ok", r.norm_bound_ok},
             {"norm_bound_halved_fails", r.norm_bound_halved_fails},
             {"summary", artifacts::traj_summary(r.traj)}};
    artifacts::write_json_file(rd.file("equivalence_" + tag + ".json"), rep);

    if (ck.contains("max_weight_error")) {
      checks.add(tag + "/max_weight_error", r.max_weight_error, "lt",
                 ck.at("max_weight_error").get<double>());
    }
    checks.add(tag + "/max_loss_gap", r.max_loss_gap, "lt", ck.at("max_loss_gap").get<double>());
    if (ck.value("rate_checks", false)) {
      checks.add(tag + "/rate_rel_err",
                 std::abs(r.fitted_rate - r.expected_rate) / r.expected_rate, "lt",
                 ck.at("rate_tol").get<double>());
      checks.add(tag + "/sigma_ratio_at_onset", r.sigma_ratio_at_onset, "lt",
                 ck.at("rank_ratio").get<double>());
      checks.flag(tag + "/norm_bound_holds", r.norm_bound_ok);
      checks.flag(tag + "/norm_bound_halved_fails", r.norm_bound_halved_fails);
    }
    loss_plot.push_back(loss_series(r.traj, "relu " + tag, 0.5 * (r.alpha + 1.0)));
    artifacts::PlotSeries es;
    es.label = tag;
    es.x = r.err_times;
    es.y = r.weight_error;
    err_plot.push_back(std::move(es));
  }
  artifacts::write_svg_plot(rd.file("loss_rescaled.svg"), "losses at rescaled time",
                            "(alpha+1)/2 t", "loss", loss_plot, false);
  artifacts::write_svg_plot(rd.file("weight_error.svg"), "weight error vs linear twin", "t",
                            "relative error", err_plot, true);
  extra["linear"] = lin_report;
  extra["s"] = stats.s;
  extra["trace_sigma"] = stats.trace_sigma;
}

// ---------------------------------------------------------------------------
// Closed-form time course on a whitened symmetric dataset.
// ---------------------------------------------------------------------------

void run_closed_form(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  SeededRng data_rng = rng.split(1);
  const std::size_t dim = cfg.at("dim");
  Dataset raw = data::make_symmetric_gaussian(data_rng, cfg.at("pairs"), dim, Teacher{});
  Dataset dataset = data::whiten(raw);
  detail::save_dataset(rd, dataset, Reduction::kMean);
  const DataStats stats = data::compute_stats(dataset, Reduction::kMean);

  double sigma_dev = 0.0;
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j) {
      sigma_dev = std::max(sigma_dev, std::abs(stats.sigma(i, j) - (i == j ? 1.0 : 0.0)));
    }
  checks.add("sigma_whitened_max_dev", sigma_dev, "lt", 1e-2);

  SeededRng dir_rng = rng.split(2);
  std::vector<double> r = random_unit(dir_rng, dim);
  while (1.0 + numkit::dot(r, stats.beta_hat) < 0.2) r = random_unit(dir_rng, dim);

  const double w_init = cfg.at("w_init");
  const double eta = cfg.at("eta");
  const std::size_t width = cfg.at("width");
  const double tt_lo = 0.1 / stats.s, tt_hi = 10.0 / stats.s;

  const std::vector<double> alphas = cfg.at("alphas").get<std::vector<double>>();
  std::vector<json> reports(alphas.size());
  std::vector<double> max_errs(alphas.size());
  parallel_for(alphas.size(), [&](std::size_t ai) {
    const double alpha = alphas[ai];
    const double c = 0.5 * (alpha + 1.0);
    SeededRng init_rng = rng.split(10 + ai);
    NetworkParams net =
        model::init_rank1_balanced(init_rng, width, r, std::sqrt(1.0 / c) * w_init, alpha);
    TrainConfig tcfg;
    tcfg.eta = eta;
    tcfg.steps = static_cast<long>(std::ceil(tt_hi / c / eta)) + 1;
    tcfg.record_every = std::max<long>(1, tcfg.steps / 500);
    tcfg.snapshot_every = std::max<long>(1, tcfg.steps / 2000);
    Trajectory traj = dyn::train(net, dataset, tcfg);

    auto spec = theory::ClosedFormSpec::make(r, stats, w_init, alpha);
    json series = json::array();
    double max_err = 0.0;
    const int grid = 60;
    for (int g = 0; g < grid; ++g) {
      const double tt = tt_lo * std::pow(tt_hi / tt_lo, g / double(grid - 1));
      const double t_run = tt / c;
      const NetworkParams at = analysis::interpolate_net(traj, t_run / eta);
      std::vector<double> w_sim(dim, 0.0);
      const Matrix& w1 = at.layers[0];
      const Matrix& w2 = at.layers[1];
      for (std::size_t j = 0; j < dim; ++j) {
        double acc = 0.0;
        for (std::size_t h = 0; h < width; ++h) acc += w2(0, h) * w1(h, j);
        w_sim[j] = c * acc;
      }
      const std::vector<double> w_cf = theory::closed_form_w(spec, t_run);
      const double err = rel_vec_err(w_cf, w_sim);
      max_err = std::max(max_err, err);
      series.push_back({{"t_tilde", tt}, {"rel_err", err}});
    }
    max_errs[ai] = max_err;
    reports[ai] = {{"alpha", alpha}, {"max_rel_err", max_err}, {"series", series},
                   {"summary", artifacts::traj_summary(traj)}};
  });
  for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
    const std::string tag = "alpha" + std::to_string(alphas[ai]).substr(0, 4);
    artifacts::write_json_file(rd.file("closed_form_" + tag + ".json"), reports[ai]);
    checks.add(tag + "/max_rel_err", max_errs[ai], "lt",
               cfg.at("checks").at("max_rel_err").get<double>());
  }
  extra["r"] = r;
  extra["w_init"] = w_init;
  extra["s"] = stats.s;
}

// ---------------------------------------------------------------------------
// Converged two-layer ReLU on a symmetric dataset: least squares + loss split.
// ---------------------------------------------------------------------------

void run_converge_square(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  SeededRng data_rng = rng.split(1);
  Dataset dataset =
      data::make_symmetric_gaussian(data_rng, cfg.at("pairs"), cfg.at("dim"), Teacher{});
  detail::save_dataset(rd, dataset, Reduction::kMean);
  const DataStats stats = data::compute_stats(dataset, Reduction::kMean);

  SeededRng init_rng = rng.split(2);
  NetworkParams net = model::init_gaussian(
      init_rng, model::layer_shapes(dataset.dim(), {cfg.at("width")}), cfg.at("w_init"), 0.0);
  TrainConfig tcfg;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  tcfg.record_every = std::max<long>(1, tcfg.steps / 2000);
  Trajectory traj = dyn::train(net, dataset, tcfg);
  artifacts::write_trajectory_csv(traj, rd.file("traj.csv"));
  model::save_json(traj.final_net, rd.file("final_net.json"));

  const auto wstar = theory::ols_solution(stats);
  const auto dec = theory::decompose_two_layer(traj.final_net);
  const auto split = theory::symmetric_loss_split(traj.final_net, dataset);
  const double total =
      model::loss_value(traj.final_net, dataset, Loss::kSquare, Reduction::kMean);

  checks.add("w_eff_rel_err", rel_vec_err(dec.w_eff, wstar), "lt", 1e-3);
  checks.add("even_energy_over_loss", split.even_energy / total, "lt", 1e-6);
  checks.add("split_identity_rel", std::abs(split.linear_loss + split.even_energy - total) / total,
             "lt", 1e-10);
  artifacts::write_svg_plot(rd.file("loss.svg"), "training loss", "t", "loss",
                            {loss_series(traj, "relu")}, true);
  extra["w_star"] = wstar;
  extra["w_eff"] = dec.w_eff;
  extra["split"] = {{"linear_loss", split.linear_loss}, {"even_energy", split.even_energy}};
  extra["summary"] = artifacts::traj_summary(traj);
}

// ---------------------------------------------------------------------------
// Logistic convergence towards the max-margin direction.
// ---------------------------------------------------------------------------

void run_converge_logistic(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  Matrix base = Matrix::from_rows(cfg.at("points").get<std::vector<std::vector<double>>>());
  std::vector<double> ys = cfg.at("labels").get<std::vector<double>>();
  Dataset dataset = data::symmetrize(Dataset{std::move(base), std::move(ys), "margin_base", {}});
  detail::save_dataset(rd, dataset, Reduction::kMean);

  const auto mm = theory::max_margin(dataset);
  SeededRng init_rng = rng.split(2);
  NetworkParams net = model::init_gaussian(
      init_rng, model::layer_shapes(dataset.dim(), {cfg.at("width")}), cfg.at("w_init"), 0.0);
  TrainConfig tcfg;
  tcfg.loss = Loss::kLogistic;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  tcfg.record_every = std::max<long>(1, tcfg.steps / 2000);
  tcfg.snapshot_every = std::max<long>(1, tcfg.steps / 100);
  Trajectory traj = dyn::train(net, dataset, tcfg);
  artifacts::write_trajectory_csv(traj, rd.file("traj.csv"));
  model::save_json(traj.final_net, rd.file("final_net.json"));

  json series = json::array();
  for (const auto& [step, snap] : traj.snapshots) {
    const auto dec = theory::decompose_two_layer(snap);
    series.push_back({{"step", step}, {"cosine", cosine(dec.w_eff, mm.direction)}});
  }
  const double final_cos =
      cosine(theory::decompose_two_layer(traj.final_net).w_eff, mm.direction);
  checks.add("final_cosine_to_max_margin", final_cos, "ge",
             cfg.at("checks").at("cosine").get<double>());
  artifacts::write_json_file(rd.file("margin_report.json"),
                             {{"max_margin_w", mm.w},
                              {"max_margin_direction", mm.direction},
                              {"kkt_residual", mm.kkt_residual},
                              {"cosine_series", series},
                              {"final_cosine", final_cos},
                              {"summary", artifacts::traj_summary(traj)}});
  artifacts::write_svg_plot(rd.file("loss.svg"), "logistic loss", "t", "loss",
                            {loss_series(traj, "relu")}, true);
  extra["final_cosine"] = final_cos;
}

// ---------------------------------------------------------------------------
// Orthogonal / XOR superposition against per-point linear networks.
// ---------------------------------------------------------------------------

void run_fig3(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  const std::size_t width = cfg.at("width");
  const double w_init = cfg.at("w_init");
  const json& ck = cfg.at("checks");

  struct Task {
    std::string ds;
    Loss loss;
    double eta;
    long steps;
  };
  std::vector<Task> tasks;
  for (const auto& variant : cfg.at("variants")) {
    tasks.push_back(Task{variant.at("dataset"), model::loss_from_name(variant.at("loss")),
                         variant.at("eta"), variant.at("steps")});
  }

  for (std::size_t ti = 0; ti < tasks.size(); ++ti) {
    const Task& task = tasks[ti];
    SeededRng ds_rng = rng.split(100 + ti);
    Dataset dataset = data::make_named(task.ds, {}, ds_rng);
    const std::string stem = task.ds + "_" + model::loss_name(task.loss);
    detail::save_dataset(rd, dataset, Reduction::kSum, "dataset_" + stem);

    TrainConfig tcfg;
    tcfg.loss = task.loss;
    tcfg.reduction = Reduction::kSum;  // summed square loss as in the figure
    tcfg.eta = task.eta;
    tcfg.steps = task.steps;
    tcfg.record_every = std::max<long>(1, task.steps / 5000);

    const std::size_t p = dataset.num_samples();
    std::vector<Trajectory> runs(p + 1);
    parallel_for(p + 1, [&](std::size_t i) {
      SeededRng init_rng = rng.split(1000 + 31 * ti + i);
      if (i == 0) {
        NetworkParams net = model::init_gaussian(
            init_rng, model::layer_shapes(dataset.dim(), {width}), w_init, 0.0);
        runs[0] = dyn::train(net, dataset, tcfg);
      } else {
        Matrix x(1, dataset.dim());
        for (std::size_t a = 0; a < dataset.dim(); ++a) x(0, a) = dataset.inputs(i - 1, a);
        Dataset single{std::move(x), {dataset.targets[i - 1]}, "point", {}};
        NetworkParams net = model::init_gaussian(
            init_rng, model::layer_shapes(dataset.dim(), {width}), w_init, 1.0);
        runs[i] = dyn::train(net, single, tcfg);
      }
    });

    artifacts::write_trajectory_csv(runs[0], rd.file("traj_" + stem + "_relu.csv"));
    std::vector<const Trajectory*> comps;
    for (std::size_t i = 1; i <= p; ++i) {
      comps.push_back(&runs[i]);
      artifacts::write_trajectory_csv(
          runs[i], rd.file("traj_" + stem + "_lin" + std::to_string(i - 1) + ".csv"));
    }
    auto sup = analysis::loss_superposition(runs[0], comps);
    const int drops = analysis::count_loss_drops(runs[0].losses, times_of_losses(runs[0]));

    checks.add(stem + "/superposition_gap", sup.max_rel_gap, "lt",
               ck.at("gap").get<double>());
    checks.add(stem + "/loss_drops", drops, "eq", static_cast<double>(p));

    artifacts::write_json_file(rd.file("superposition_" + stem + ".json"),
                               {{"dataset", task.ds},
                                {"loss", model::loss_name(task.loss)},
                                {"max_rel_gap", sup.max_rel_gap},
                                {"loss_drops", drops},
                                {"components", p},
                                {"times", sup.times},
                                {"target", sup.target},
                                {"prediction", sup.prediction}});
    std::vector<artifacts::PlotSeries> plot{loss_series(runs[0], "relu")};
    for (std::size_t i = 1; i <= p; ++i) {
      plot.push_back(loss_series(runs[i], "linear " + std::to_string(i - 1)));
    }
    artifacts::PlotSeries pred{"component sum", sup.times, sup.prediction};
    plot.push_back(pred);
    artifacts::write_svg_plot(rd.file("loss_" + stem + ".svg"), stem, "t", "summed loss", plot,
                              false);
    extra[stem] = {{"gap", sup.max_rel_gap}, {"drops", drops}};
  }
}

// ---------------------------------------------------------------------------
// Orthonormal two-point dataset: block norms against the 1-D norm flow.
// ---------------------------------------------------------------------------

void run_ortho_norm(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  Dataset dataset{Matrix::from_rows({{1, 0}, {0, 1}}), {1, -1}, "orthonormal2", {}};
  detail::save_dataset(rd, dataset, Reduction::kMean);

  const std::size_t width = cfg.at("width");
  const std::size_t half = width / 2;
  const double ua0 = cfg.at("u_a0"), ub0 = cfg.at("u_b0");

  // Assumption-2 start: W1 = [uA rA bhatA^T ; uB rB bhatB^T], W2 = [uA rA^T, -uB rB^T]
  SeededRng init_rng = rng.split(1);
  std::vector<double> ra(half), rb(half);
  for (auto& v : ra) v = std::abs(init_rng.gaussian()) + 1e-3;
  for (auto& v : rb) v = std::abs(init_rng.gaussian()) + 1e-3;
  const double na = numkit::norm(ra), nb = numkit::norm(rb);
  for (auto& v : ra) v /= na;
  for (auto& v : rb) v /= nb;
  NetworkParams net;
  net.alpha = 0.0;
  Matrix w1(width, 2);
  Matrix w2(1, width);
  for (std::size_t i = 0; i < half; ++i) {
    w1(i, 0) = ua0 * ra[i];          // beta_hat_A = e1
    w1(half + i, 1) = ub0 * rb[i];   // beta_hat_B = e2
    w2(0, i) = ua0 * ra[i];
    w2(0, half + i) = -ub0 * rb[i];
  }
  net.layers = {std::move(w1), std::move(w2)};

  TrainConfig tcfg;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  tcfg.record_every = cfg.value("record_every", 5);
  auto stepper = dyn::make_train_stepper(net, dataset, tcfg);

  std::vector<double> times, block_a, block_b, losses;
  auto record = [&](long step) {
    const NetworkParams cur = stepper->net();
    double sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < half; ++i) {
      sa += cur.layers[1](0, i) * cur.layers[1](0, i);
      sb += cur.layers[1](0, half + i) * cur.layers[1](0, half + i);
    }
    times.push_back(tcfg.eta * static_cast<double>(step));
    block_a.push_back(std::sqrt(sa));
    block_b.push_back(std::sqrt(sb));
  };
  record(0);
  for (long k = 0; k < tcfg.steps; ++k) {
    losses.push_back(stepper->step());
    if ((k + 1) % tcfg.record_every == 0) record(k + 1);
  }

  // beta_A = beta_B = 1/2 on this dataset
  auto ode_a = dyn::integrate_ortho_norm(ua0, 0.5, 2, tcfg);
  auto ode_b = dyn::integrate_ortho_norm(ub0, 0.5, 2, tcfg);
  double dev_a = 0.0, dev_b = 0.0;
  for (std::size_t k = 0; k < times.size(); ++k) {
    const std::size_t step = static_cast<std::size_t>(std::llround(times[k] / tcfg.eta));
    dev_a = std::max(dev_a, std::abs(block_a[k] - ode_a.values[step]) / ode_a.values[step]);
    dev_b = std::max(dev_b, std::abs(block_b[k] - ode_b.values[step]) / ode_b.values[step]);
  }
  const NetworkParams fin = stepper->net();
  model::save_json(fin, rd.file("final_net.json"));
  double off_mass = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    off_mass = std::max({off_mass, std::abs(fin.layers[0](i, 1)),
                         std::abs(fin.layers[0](half + i, 0))});
  }
  checks.add("block_A_max_rel_dev", dev_a, "lt", cfg.at("checks").at("dev").get<double>());
  checks.add("block_B_max_rel_dev", dev_b, "lt", cfg.at("checks").at("dev").get<double>());
  checks.add("off_direction_mass", off_mass, "lt", 1e-12);

  std::ostringstream csv;
  csv.precision(12);
  csv << "t,block_a,block_b,ode_a,ode_b\n";
  for (std::size_t k = 0; k < times.size(); ++k) {
    const std::size_t step = static_cast<std::size_t>(std::llround(times[k] / tcfg.eta));
    csv << times[k] << "," << block_a[k] << "," << block_b[k] << "," << ode_a.values[step] << ","
        << ode_b.values[step] << "\n";
  }
  artifacts::write_text(rd.file("block_norms.csv"), csv.str());
  artifacts::write_svg_plot(
      rd.file("block_norms.svg"), "block norms vs 1-D flow", "t", "|W2 block|",
      {{"sim A", times, block_a}, {"sim B", times, block_b},
       {"ode A", ode_a.times, ode_a.values}, {"ode B", ode_b.times, ode_b.values}},
      false);
  extra["u_a0"] = ua0;
  extra["u_b0"] = ub0;
  extra["dev_a"] = dev_a;
  extra["dev_b"] = dev_b;
}

// ---------------------------------------------------------------------------
// Deep low-rank structure on a linear-teacher symmetric dataset.
// ---------------------------------------------------------------------------

json structure_to_json(const analysis::StructureReport& rep) {
  json layers = json::array();
  for (const auto& l : rep.layers) {
    layers.push_back({{"singular_values", l.singular_values},
                      {"neg_mass_frac", l.neg_mass_frac},
                      {"offdiag_mass_frac", l.offdiag_mass_frac},
                      {"numerical_rank", l.numerical_rank}});
  }
  return {{"layers", layers},
          {"block_ratio", rep.block_ratio},
          {"effective_map", rep.effective_map},
          {"effective_coefficient", rep.effective_coefficient},
          {"rank_tol", rep.rank_tol}};
}

void run_fig5(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  SeededRng data_rng = rng.split(1);
  const std::size_t dim = cfg.at("dim");
  Dataset dataset = data::make_symmetric_gaussian(
      data_rng, cfg.at("pairs"), dim, Teacher{Teacher::Kind::kLinear, {}});
  detail::save_dataset(rd, dataset, Reduction::kMean);

  const std::size_t depth = cfg.at("depth");
  const std::size_t width = cfg.at("width");
  std::vector<std::size_t> hidden(depth - 1, width);
  SeededRng init_rng = rng.split(2);
  NetworkParams relu0 =
      model::init_gaussian(init_rng, model::layer_shapes(dim, hidden), cfg.at("w_init"), 0.0);
  NetworkParams lin0 = relu0;
  lin0.alpha = 1.0;

  TrainConfig tcfg;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  tcfg.record_every = std::max<long>(1, tcfg.steps / 2000);
  tcfg.snapshot_every = std::max<long>(1, tcfg.steps / 40);

  Trajectory relu_traj, lin_traj;
  parallel_for(2, [&](std::size_t i) {
    if (i == 0) {
      relu_traj = dyn::train(relu0, dataset, tcfg);
    } else {
      lin_traj = dyn::train(lin0, dataset, tcfg);
    }
  });
  artifacts::write_trajectory_csv(relu_traj, rd.file("traj_relu.csv"));
  artifacts::write_trajectory_csv(lin_traj, rd.file("traj_linear.csv"));
  model::save_json(relu_traj.final_net, rd.file("net_relu.json"));
  model::save_json(lin_traj.final_net, rd.file("net_linear.json"));

  const auto relu_rep = analysis::structure_report(relu_traj.final_net, &lin_traj.final_net);
  const auto relu_rep_own = analysis::structure_report(relu_traj.final_net);
  const auto lin_rep = analysis::structure_report(lin_traj.final_net);

  // loss-elbow snapshot: first step with 95% of the total drop done
  const double l0 = relu_traj.losses.front();
  const double lmin = *std::min_element(relu_traj.losses.begin(), relu_traj.losses.end());
  long elbow = relu_traj.steps_run;
  for (std::size_t k = 0; k < relu_traj.losses.size(); ++k) {
    if (relu_traj.losses[k] <= lmin + 0.05 * (l0 - lmin)) {
      elbow = static_cast<long>(k);
      break;
    }
  }
  const auto elbow_rep = analysis::structure_report(
      analysis::interpolate_net(relu_traj, static_cast<double>(elbow)));

  artifacts::write_json_file(rd.file("structure_relu.json"), structure_to_json(relu_rep));
  artifacts::write_json_file(rd.file("structure_relu_own_signs.json"),
                             structure_to_json(relu_rep_own));
  artifacts::write_json_file(rd.file("structure_linear.json"), structure_to_json(lin_rep));
  artifacts::write_json_file(rd.file("structure_relu_elbow.json"),
                             {{"elbow_step", elbow}, {"report", structure_to_json(elbow_rep)}});

  for (std::size_t l = 1; l + 1 < depth; ++l) {
    checks.add("relu/neg_mass_W" + std::to_string(l + 1), relu_rep.layers[l].neg_mass_frac, "lt",
               1e-3);
    checks.add("relu/rank_W" + std::to_string(l + 1),
               static_cast<double>(relu_rep.layers[l].numerical_rank), "le", 2.0);
  }
  checks.add("relu/rank_W1", static_cast<double>(relu_rep.layers.front().numerical_rank), "eq",
             1.0);
  checks.add("relu/rank_WL", static_cast<double>(relu_rep.layers.back().numerical_rank), "eq",
             1.0);
  checks.add("relu/effective_coefficient", relu_rep.effective_coefficient, "between", 0.49, 0.51);
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    checks.add("relu/block_ratio_r" + std::to_string(l + 1), relu_rep.block_ratio[l], "between",
               0.9, 1.1);
  }
  for (std::size_t l = 0; l < depth; ++l) {
    checks.add("linear/rank_W" + std::to_string(l + 1),
               static_cast<double>(lin_rep.layers[l].numerical_rank), "eq", 1.0);
  }
  checks.add("linear/effective_coefficient_err", std::abs(lin_rep.effective_coefficient - 1.0),
             "lt", 1e-10);

  artifacts::write_svg_plot(rd.file("loss.svg"), "deep training loss", "t", "loss",
                            {loss_series(relu_traj, "relu"), loss_series(lin_traj, "linear")},
                            true);
  extra["elbow_step"] = elbow;
  extra["relu_summary"] = artifacts::traj_summary(relu_traj);
  extra["linear_summary"] = artifacts::traj_summary(lin_traj);
}

// ---------------------------------------------------------------------------
// Plateau scaling on the perturbed six-point dataset.
// ---------------------------------------------------------------------------

void run_fig7(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  const std::vector<double> deltas = cfg.at("deltas").get<std::vector<double>>();
  const std::size_t width = cfg.at("width");
  const double w_init = cfg.at("w_init");

  TrainConfig tcfg;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps_cap");
  tcfg.record_every = cfg.value("record_every", 50);
  tcfg.stop_rel_change = 1e-12;
  tcfg.stop_window = 2000;

  std::vector<Trajectory> runs(deltas.size() + 1);
  std::vector<Dataset> datasets;
  for (double delta : deltas) {
    SeededRng ds_rng = rng.split(7);
    datasets.push_back(data::make_named("asym6", {{"delta", delta}}, ds_rng));
  }
  parallel_for(deltas.size() + 1, [&](std::size_t i) {
    SeededRng init_rng = rng.split(50 + i);
    if (i < deltas.size()) {
      NetworkParams net =
          model::init_gaussian(init_rng, model::layer_shapes(2, {width}), w_init, 0.0);
      runs[i] = dyn::train(net, datasets[i], tcfg);
    } else {
      // linear reference at the middle delta, for the figure only
      SeededRng ds_rng = rng.split(7);
      Dataset ref = data::make_named("asym6", {{"delta", 0.1}}, ds_rng);
      NetworkParams net =
          model::init_gaussian(init_rng, model::layer_shapes(2, {width}), w_init, 1.0);
      runs.back() = dyn::train(net, ref, tcfg);
    }
  });

  std::vector<double> log_delta, log_duration;
  json per_delta = json::array();
  std::vector<artifacts::PlotSeries> plot;
  for (std::size_t i = 0; i < deltas.size(); ++i) {
    const std::string tag = "delta" + std::to_string(deltas[i]).substr(0, 5);
    detail::save_dataset(rd, datasets[i], Reduction::kMean, "dataset_" + tag);
    artifacts::write_trajectory_csv(runs[i], rd.file("traj_" + tag + ".csv"));
    const auto info = analysis::plateau_duration(runs[i].losses, times_of_losses(runs[i]));
    checks.add(tag + "/plateau_positive", info.duration, "gt", 0.0);
    per_delta.push_back({{"delta", deltas[i]},
                         {"duration", info.duration},
                         {"t_start", info.t_start},
                         {"t_end", info.t_end},
                         {"status", runs[i].status},
                         {"steps_run", runs[i].steps_run}});
    if (info.duration > 0) {
      log_delta.push_back(std::log(deltas[i]));
      log_duration.push_back(std::log(info.duration));
    }
    plot.push_back(loss_series(runs[i], tag));
  }
  artifacts::write_trajectory_csv(runs.back(), rd.file("traj_linear_delta0.1.csv"));
  plot.push_back(loss_series(runs.back(), "linear 0.1"));

  double slope = 0.0;
  if (log_delta.size() >= 2) slope = analysis::linear_slope(log_delta, log_duration);
  checks.add("plateau_slope", slope, "between", cfg.at("checks").at("slope_lo").get<double>(),
             cfg.at("checks").at("slope_hi").get<double>());
  artifacts::write_json_file(rd.file("plateau_report.json"),
                             {{"per_delta", per_delta}, {"slope", slope}});
  artifacts::write_svg_plot(rd.file("loss.svg"), "perturbed symmetric dataset", "t", "loss", plot,
                            true);
  extra["slope"] = slope;
  extra["per_delta"] = per_delta;
}

// ---------------------------------------------------------------------------
// Expressivity on the fan and circle datasets.
// ---------------------------------------------------------------------------

void run_fig1(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  const std::size_t width = cfg.at("width");
  const double w_init = cfg.at("w_init");
  const double eta = cfg.at("eta");

  struct Task {
    std::string ds;
    int depth;
    long steps;
  };
  std::vector<Task> tasks{{"fan", 2, cfg.at("steps_two_layer")},
                          {"fan", 3, cfg.at("steps_three_layer")},
                          {"circle", 2, cfg.at("steps_two_layer")},
                          {"circle", 3, cfg.at("steps_circle_three_layer")}};
  std::vector<Trajectory> runs(tasks.size());
  std::vector<Dataset> sets(tasks.size());
  parallel_for(tasks.size(), [&](std::size_t i) {
    SeededRng ds_rng = rng.split(3);
    sets[i] = data::make_named(tasks[i].ds, {}, ds_rng);
    SeededRng init_rng = rng.split(60 + i);
    std::vector<std::size_t> hidden(tasks[i].depth - 1, width);
    NetworkParams net = model::init_gaussian(init_rng, model::layer_shapes(2, hidden), w_init, 0.0);
    TrainConfig tcfg;
    tcfg.loss = Loss::kLogistic;
    tcfg.eta = eta;
    tcfg.steps = tasks[i].steps;
    tcfg.record_every = std::max<long>(1, tasks[i].steps / 1000);
    runs[i] = dyn::train(net, sets[i], tcfg);
  });

  json report = json::array();
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const std::string tag = tasks[i].ds + "_" + std::to_string(tasks[i].depth) + "layer";
    if (i < 2) detail::save_dataset(rd, sets[i], Reduction::kMean, "dataset_" + tasks[i].ds);
    artifacts::write_trajectory_csv(runs[i], rd.file("traj_" + tag + ".csv"));
    model::save_json(runs[i].final_net, rd.file("net_" + tag + ".json"));
    const double mis = detail::misclassification(runs[i].final_net, sets[i]);
    report.push_back({{"task", tag},
                      {"misclassification", mis},
                      {"final_loss", runs[i].losses.back()}});
    extra[tag] = mis;
  }
  checks.add("fan_two_layer_misclass", extra.at("fan_2layer").get<double>(), "gt", 0.25);
  checks.add("fan_three_layer_misclass", extra.at("fan_3layer").get<double>(), "lt", 0.05);
  artifacts::write_json_file(rd.file("expressivity_report.json"), report);
  artifacts::write_svg_plot(rd.file("loss.svg"), "expressivity training", "t", "logistic loss",
                            {loss_series(runs[0], "fan 2-layer"), loss_series(runs[1], "fan 3-layer"),
                             loss_series(runs[2], "circle 2-layer"),
                             loss_series(runs[3], "circle 3-layer")},
                            false);
}

// ---------------------------------------------------------------------------
// Label-flip robustness (appendix experiment).
// ---------------------------------------------------------------------------

void run_labelflip(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  SeededRng ds_rng = rng.split(1);
  Dataset dataset = data::make_named(
      "labelflip", {{"n_clean", cfg.at("n_clean")}, {"n_flips", cfg.at("n_flips")}}, ds_rng);
  detail::save_dataset(rd, dataset, Reduction::kMean);

  SeededRng init_rng = rng.split(2);
  NetworkParams net = model::init_gaussian(
      init_rng, model::layer_shapes(2, {cfg.at("width")}), cfg.at("w_init"), 0.0);
  TrainConfig tcfg;
  tcfg.loss = Loss::kLogistic;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  tcfg.record_every = std::max<long>(1, tcfg.steps / 2000);
  Trajectory traj = dyn::train(net, dataset, tcfg);
  artifacts::write_trajectory_csv(traj, rd.file("traj.csv"));
  model::save_json(traj.final_net, rd.file("final_net.json"));

  std::vector<bool> clean(dataset.num_samples(), true);
  const std::size_t n_base = dataset.num_samples() / 2;
  for (const auto& idx : dataset.metadata.at("flipped_indices")) {
    const std::size_t i = idx.get<std::size_t>();
    clean[i] = false;
    clean[i + n_base] = false;
  }
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < dataset.num_samples(); ++i) {
    if (!clean[i]) continue;
    ++total;
    const double* x = dataset.inputs.row_ptr(i);
    if (model::predict(traj.final_net, std::span<const double>(x, 2)) * dataset.targets[i] > 0) {
      ++right;
    }
  }
  const double acc = static_cast<double>(right) / static_cast<double>(total);
  checks.add("clean_accuracy", acc, "ge", cfg.at("checks").at("clean_accuracy").get<double>());
  artifacts::write_json_file(rd.file("labelflip_report.json"),
                             {{"clean_accuracy", acc},
                              {"clean_points", total},
                              {"summary", artifacts::traj_summary(traj)}});
  extra["clean_accuracy"] = acc;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient checks.
// ---------------------------------------------------------------------------

double gradcheck_max_rel(SeededRng& rng, std::size_t depth, double alpha, Loss loss,
                         Reduction red, double l2) {
  std::vector<std::size_t> hidden(depth - 1, 4);
  NetworkParams net = model::init_gaussian(rng, model::layer_shapes(3, hidden), 0.8, alpha);
  Matrix x = numkit::gaussian_matrix(rng, 5, 3, 1.0);
  std::vector<double> y(5);
  for (auto& v : y) v = rng.gaussian() > 0 ? 1.0 : -1.0;
  Dataset d{std::move(x), std::move(y), "gc", {}};

  const auto bp = model::gradients(net, d, loss, red, l2);
  const double lambda_alpha = 0.5 * (alpha + 1.0) * l2;
  auto objective = [&](const NetworkParams& n) {
    double obj = model::loss_value(n, d, loss, red);
    double wsq = 0.0;
    for (const auto& w : n.layers) wsq += w.sum_squares();
    return obj + 0.5 * lambda_alpha * wsq;
  };
  const double h = 1e-5;
  double max_rel = 0.0;
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (std::size_t k = 0; k < net.layers[l].size(); ++k) {
      const double orig = net.layers[l].data()[k];
      net.layers[l].data()[k] = orig + h;
      const double up = objective(net);
      net.layers[l].data()[k] = orig - h;
      const double dn = objective(net);
      net.layers[l].data()[k] = orig;
      const double fd = (up - dn) / (2.0 * h);
      const double got = bp.grads[l].data()[k];
      max_rel = std::max(max_rel,
                         std::abs(got - fd) / std::max({std::abs(fd), std::abs(got), 1e-4}));
    }
  }
  return max_rel;
}

void run_gradcheck(const json& cfg, RunDir& rd, Checks& checks, json& extra) {
  SeededRng rng(cfg.at("seed").get<std::uint64_t>());
  json table = json::array();
  double worst = 0.0;
  for (std::size_t depth : {2, 3}) {
    for (double alpha : {0.0, 0.5, 1.0}) {
      for (Loss loss : {Loss::kSquare, Loss::kLogistic}) {
        for (Reduction red : {Reduction::kMean, Reduction::kSum}) {
          for (double l2 : {0.0, 0.4}) {
            const double rel = gradcheck_max_rel(rng, depth, alpha, loss, red, l2);
            worst = std::max(worst, rel);
            table.push_back({{"depth", depth},
                             {"alpha", alpha},
                             {"loss", model::loss_name(loss)},
                             {"reduction", data::reduction_name(red)},
                             {"l2", l2},
                             {"max_rel_err", rel}});
          }
        }
      }
    }
  }
  checks.add("max_rel_err", worst, "lt", 1e-6);
  artifacts::write_json_file(rd.file("gradcheck.json"), {{"cases", table}, {"max_rel_err", worst}});
  extra["max_rel_err"] = worst;
}

}  // namespace

std::vector<std::string> experiment_names() {
  return {"fig2_equivalence", "figC_reg",   "figC_biglr",  "figC_biginit",
          "closed_form_check", "converge_sq", "converge_logistic", "fig3_ortho_xor",
          "ortho_norm_ode",   "fig5_deep_structure", "fig5_deep_structure_L4", "fig7_plateau",
          "fig1_expressivity", "appG_labelflip", "gradcheck"};
}

json default_config(const std::string& name) {
  if (name == "fig2_equivalence") {
    return {{"experiment", name},        {"seed", 714},
            {"dim", 10},                 {"pairs", 200},
            {"width", 200},              {"w_init", 1e-8},
            {"eta", 0.004},              {"l2", 0.0},
            {"alphas", {0.0, 0.5}},      {"steps_cap", 1800000},
            {"stop_rel_change", 1e-9},   {"record_every", 100},
            {"error_every", 500},
            {"checks",
             {{"max_weight_error", 0.003},
              {"max_loss_gap", 0.01},
              {"rate_checks", true},
              {"rate_tol", 0.02},
              {"rank_ratio", 1e-3}}}};
  }
  if (name == "figC_reg") {
    json cfg = default_config("fig2_equivalence");
    cfg["experiment"] = name;
    cfg["l2"] = 0.4;  // lambda_alpha = 0.2 (alpha+1)
    cfg["eta"] = 0.02;
    cfg["steps_cap"] = 400000;
    cfg["checks"]["rate_checks"] = false;
    return cfg;
  }
  if (name == "figC_biglr") {
    json cfg = default_config("fig2_equivalence");
    cfg["experiment"] = name;
    cfg["eta"] = 0.6;
    cfg["steps_cap"] = 60000;
    cfg["error_every"] = 20;
    cfg["record_every"] = 20;
    cfg["checks"] = {{"max_loss_gap", 0.02}, {"rate_checks", false}};
    return cfg;
  }
  if (name == "figC_biginit") {
    json cfg = default_config("fig2_equivalence");
    cfg["experiment"] = name;
    cfg["w_init"] = 0.5;
    cfg["steps_cap"] = 600000;
    cfg["checks"] = {{"max_weight_error", 0.03}, {"max_loss_gap", 0.02}, {"rate_checks", false}};
    return cfg;
  }
  if (name == "closed_form_check") {
    return {{"experiment", name}, {"seed", 42},    {"dim", 5},
            {"pairs", 20},        {"width", 32},   {"w_init", 1e-3},
            {"eta", 0.002},       {"alphas", {0.0, 1.0}},
            {"checks", {{"max_rel_err", 1e-2}}}};
  }
  if (name == "converge_sq") {
    return {{"experiment", name}, {"seed", 99},   {"dim", 10}, {"pairs", 200},
            {"width", 100},       {"w_init", 1e-4}, {"eta", 0.05}, {"steps", 120000}};
  }
  if (name == "converge_logistic") {
    return {{"experiment", name},
            {"seed", 5},
            {"points", {{2.0, 0.0}, {2.0, -0.4}}},
            {"labels", {1.0, 1.0}},
            {"width", 100},
            {"w_init", 1e-3},
            {"eta", 0.05},
            {"steps", 4000000},
            {"checks", {{"cosine", 0.999}}}};
  }
  if (name == "fig3_ortho_xor") {
    return {{"experiment", name},
            {"seed", 11},
            {"width", 60},
            {"w_init", 1e-6},
            {"variants",
             {{{"dataset", "ortho2"}, {"loss", "square"}, {"eta", 0.001}, {"steps", 60000}},
              {{"dataset", "xor4"}, {"loss", "square"}, {"eta", 0.001}, {"steps", 60000}},
              {{"dataset", "ortho2"}, {"loss", "logistic"}, {"eta", 0.004}, {"steps", 60000}},
              {{"dataset", "xor4"}, {"loss", "logistic"}, {"eta", 0.004}, {"steps", 60000}}}},
            {"checks", {{"gap", 0.05}}}};
  }
  if (name == "ortho_norm_ode") {
    return {{"experiment", name}, {"seed", 21},    {"width", 60},  {"u_a0", 1.2e-3},
            {"u_b0", 8e-4},       {"eta", 0.01},   {"steps", 6000}, {"record_every", 5},
            {"checks", {{"dev", 0.02}}}};
  }
  if (name == "fig5_deep_structure") {
    return {{"experiment", name}, {"seed", 31}, {"dim", 10},   {"pairs", 200}, {"depth", 3},
            {"width", 100},       {"w_init", 1e-2}, {"eta", 0.1}, {"steps", 20000}};
  }
  if (name == "fig5_deep_structure_L4") {
    json cfg = default_config("fig5_deep_structure");
    cfg["experiment"] = name;
    cfg["depth"] = 4;
    cfg["width"] = 60;
    cfg["pairs"] = 100;
    cfg["w_init"] = 0.03;
    cfg["steps"] = 150000;
    return cfg;
  }
  if (name == "fig7_plateau") {
    return {{"experiment", name},
            {"seed", 17},
            {"deltas", {0.05, 0.1, 0.2, 0.4}},
            {"width", 100},
            {"w_init", 1e-3},
            {"eta", 0.025},
            {"steps_cap", 3000000},
            {"record_every", 50},
            {"checks", {{"slope_lo", -1.25}, {"slope_hi", -0.8}}}};
  }
  if (name == "fig1_expressivity") {
    return {{"experiment", name}, {"seed", 13},
            {"width", 100},       {"w_init", 1e-2},
            {"eta", 0.2},         {"steps_two_layer", 10000},
            {"steps_three_layer", 80000}, {"steps_circle_three_layer", 30000}};
  }
  if (name == "appG_labelflip") {
    return {{"experiment", name}, {"seed", 23},    {"n_clean", 20}, {"n_flips", 2},
            {"width", 100},       {"w_init", 1e-3}, {"eta", 0.05},  {"steps", 200000},
            {"checks", {{"clean_accuracy", 0.9}}}};
  }
  if (name == "gradcheck") {
    return {{"experiment", name}, {"seed", 2}};
  }
  throw std::invalid_argument("unknown experiment: " + name);
}

void apply_override(json& cfg, const std::string& dotted_key, const std::string& value) {
  json* node = &cfg;
  std::size_t pos = 0;
  std::string key = dotted_key;
  while ((pos = key.find('.')) != std::string::npos) {
    node = &(*node)[key.substr(0, pos)];
    key = key.substr(pos + 1);
  }
  try {
    (*node)[key] = json::parse(value);
  } catch (const json::parse_error&) {
    (*node)[key] = value;
  }
}

Outcome run_experiment(json config) {
  const std::string name = config.at("experiment").get<std::string>();
  if (!config.contains("seed")) config["seed"] = 1;
  // merge onto defaults so configs may be sparse
  json cfg = default_config(name);
  cfg.merge_patch(config);

  RunDir rd;
  rd.root = cfg.value("out_dir", std::string("runs/") + name);
  fs::create_directories(rd.root);

  json manifest;
  manifest["experiment"] = name;
  manifest["config"] = cfg;
  manifest["run_hash"] = artifacts::sha256_hex(cfg.dump()).substr(0, 16);
  manifest["rng"] = SeededRng::generator_name();
  manifest["conventions"] = {
      {"sigma_prime_at_zero", "alpha"},
      {"time", "t = step * eta, so tau = 1 in all rate formulas"},
      {"l2", "force lambda_alpha W with lambda_alpha = (alpha+1)/2 * l2_raw"},
      {"divergence_threshold", 1e6}};

  Checks checks;
  json extra;
  if (name == "fig2_equivalence" || name == "figC_reg" || name == "figC_biglr" ||
      name == "figC_biginit") {
    run_equivalence_family(cfg, rd, checks, extra);
  } else if (name == "closed_form_check") {
    run_closed_form(cfg, rd, checks, extra);
  } else if (name == "converge_sq") {
    run_converge_square(cfg, rd, checks, extra);
  } else if (name == "converge_logistic") {
    run_converge_logistic(cfg, rd, checks, extra);
  } else if (name == "fig3_ortho_xor") {
    run_fig3(cfg, rd, checks, extra);
  } else if (name == "ortho_norm_ode") {
    run_ortho_norm(cfg, rd, checks, extra);
  } else if (name == "fig5_deep_structure" || name == "fig5_deep_structure_L4") {
    run_fig5(cfg, rd, checks, extra);
  } else if (name == "fig7_plateau") {
    run_fig7(cfg, rd, checks, extra);
  } else if (name == "fig1_expressivity") {
    run_fig1(cfg, rd, checks, extra);
  } else if (name == "appG_labelflip") {
    run_labelflip(cfg, rd, checks, extra);
  } else if (name == "gradcheck") {
    run_gradcheck(cfg, rd, checks, extra);
  } else {
    throw std::invalid_argument("unknown experiment: " + name);
  }

  manifest["checks"] = checks.items;
  manifest["pass"] = checks.all_pass;
  manifest["extra"] = extra;
  json hashes;
  for (const auto& f : rd.files) hashes[f] = artifacts::sha256_file(rd.root + "/" + f);
  manifest["artifacts"] = hashes;
  artifacts::write_json_file(rd.root + "/manifest.json", manifest);

  Outcome out;
  out.dir = rd.root;
  out.pass = checks.all_pass;
  out.manifest = manifest;
  return out;
}

}  // namespace lab::exp
