#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>

#include "internal.hpp"
#include "lab/analysis.hpp"
#include "lab/artifacts.hpp"
#include "lab/experiments.hpp"
#include "lab/theory.hpp"

namespace fs = std::filesystem;

namespace lab::exp {

using detail::eval_op;
using nlohmann::json;

namespace {

// Recomputed check values, keyed by the check names used at run time.
using Recomputed = std::map<std::string, double>;

double max_of(const json& arr) {
  double m = -std::numeric_limits<double>::infinity();
  for (const auto& v : arr) m = std::max(m, v.get<double>());
  return m;
}

dyn::Trajectory traj_from_csv(const std::string& path) {
  auto cols = artifacts::read_csv_columns(path);
  dyn::Trajectory t;
  t.losses = cols.at("loss");
  const auto& ts = cols.at("t");
  t.eta = ts.size() > 1 ? ts[1] - ts[0] : 1.0;
  t.steps_run = static_cast<long>(t.losses.size()) - 1;
  t.record_times = ts;
  for (const auto& [name, series] : cols) {
    if (name != "step" && name != "t" && name != "loss") t.monitors[name] = series;
  }
  return t;
}

std::vector<double> csv_times(const std::string& path) {
  return artifacts::read_csv_columns(path).at("t");
}

std::string alpha_tag(double alpha) { return "alpha" + std::to_string(alpha).substr(0, 4); }

void recheck_equivalence(const std::string& dir, const json& manifest, Recomputed& out) {
  const json& cfg = manifest.at("config");
  const double s = manifest.at("extra").at("s");
  const double trace = manifest.at("extra").at("trace_sigma");
  const double rate_full = s + trace;
  for (double alpha : cfg.at("alphas").get<std::vector<double>>()) {
    const std::string tag = alpha_tag(alpha);
    const json rep = artifacts::read_json_file(dir + "/equivalence_" + tag + ".json");
    out[tag + "/max_weight_error"] = max_of(rep.at("weight_error"));
    out[tag + "/max_loss_gap"] = max_of(rep.at("loss_gap"));
    out[tag + "/sigma_ratio_at_onset"] = rep.at("sigma_ratio_at_onset");

    const auto cols = artifacts::read_csv_columns(dir + "/traj_relu_" + tag + ".csv");
    const auto& t = cols.at("t");
    const auto& steps = cols.at("step");
    const double eta = steps[1] > 0 ? t[1] / steps[1] : 1.0;
    const long onset = rep.at("onset_step");
    const double expected = rep.at("expected_rate");
    if (onset > 0) {
      const double t_onset = eta * static_cast<double>(onset);
      const double rate = analysis::fit_exponential_rate(cols.at("w2_norm"), t, 0.3 * t_onset,
                                                         0.7 * t_onset);
      out[tag + "/rate_rel_err"] = std::abs(rate - expected) / expected;
    }
    // norm growth bound from the recorded norms
    const auto& n1 = cols.at("w1_norm");
    const auto& n2 = cols.at("w2_norm");
    const double u0 = std::max(n1[0], n2[0]);
    auto bound_holds = [&](double rate) {
      const double window = std::log(1.0 / u0) / rate;
      for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] >= window) break;
        if (std::max(n1[k], n2[k]) > u0 * std::exp(rate * t[k]) * (1.0 + 1e-12)) return false;
      }
      return true;
    };
    out[tag + "/norm_bound_holds"] = bound_holds(rate_full) ? 1.0 : 0.0;
    out[tag + "/norm_bound_halved_fails"] = bound_holds(0.5 * rate_full) ? 0.0 : 1.0;
  }
  if (manifest.at("extra").contains("linear") &&
      manifest.at("extra").at("linear").contains("fitted_rate")) {
    const json& lin = manifest.at("extra").at("linear");
    const auto cols = artifacts::read_csv_columns(dir + "/traj_linear.csv");
    const long onset = lin.at("onset_step");
    const auto& t = cols.at("t");
    const double eta = cols.at("step")[1] > 0 ? t[1] / cols.at("step")[1] : 1.0;
    const double t_onset = eta * static_cast<double>(onset);
    const double expected = lin.at("expected_rate");
    const double rate =
        analysis::fit_exponential_rate(cols.at("w2_norm"), t, 0.3 * t_onset, 0.7 * t_onset);
    out["linear/rate_rel_err"] = std::abs(rate - expected) / expected;
    out["linear/sigma_ratio_at_onset"] = lin.at("sigma_ratio_at_onset");
  }
}

void recheck_closed_form(const std::string& dir, const json& manifest, Recomputed& out) {
  const json& cfg = manifest.at("config");
  data::Dataset d = data::load_csv(dir + "/dataset.csv");
  auto st = data::compute_stats(d, data::Reduction::kMean);
  double dev = 0.0;
  for (std::size_t i = 0; i < d.dim(); ++i)
    for (std::size_t j = 0; j < d.dim(); ++j) {
      dev = std::max(dev, std::abs(st.sigma(i, j) - (i == j ? 1.0 : 0.0)));
    }
  out["sigma_whitened_max_dev"] = dev;
  for (double alpha : cfg.at("alphas").get<std::vector<double>>()) {
    const std::string tag = alpha_tag(alpha);
    const json rep = artifacts::read_json_file(dir + "/closed_form_" + tag + ".json");
    double m = 0.0;
    for (const auto& row : rep.at("series")) m = std::max(m, row.at("rel_err").get<double>());
    out[tag + "/max_rel_err"] = m;
  }
}

void recheck_converge_sq(const std::string& dir, const json&, Recomputed& out) {
  data::Dataset d = data::load_csv(dir + "/dataset.csv");
  auto st = data::compute_stats(d, data::Reduction::kMean);
  model::NetworkParams net = model::load_json(dir + "/final_net.json");
  const auto wstar = theory::ols_solution(st);
  const auto dec = theory::decompose_two_layer(net);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < wstar.size(); ++i) {
    num += (dec.w_eff[i] - wstar[i]) * (dec.w_eff[i] - wstar[i]);
    den += wstar[i] * wstar[i];
  }
  out["w_eff_rel_err"] = std::sqrt(num / den);
  const auto split = theory::symmetric_loss_split(net, d);
  const double total =
      model::loss_value(net, d, model::Loss::kSquare, data::Reduction::kMean);
  out["even_energy_over_loss"] = split.even_energy / total;
  out["split_identity_rel"] = std::abs(split.linear_loss + split.even_energy - total) / total;
}

void recheck_converge_logistic(const std::string& dir, const json&, Recomputed& out) {
  data::Dataset d = data::load_csv(dir + "/dataset.csv");
  model::NetworkParams net = model::load_json(dir + "/final_net.json");
  const auto mm = theory::max_margin(d);
  const auto dec = theory::decompose_two_layer(net);
  out["final_cosine_to_max_margin"] =
      numkit::dot(dec.w_eff, mm.direction) / numkit::norm(dec.w_eff);
}

void recheck_fig3(const std::string& dir, const json& manifest, Recomputed& out) {
  for (const auto& variant : manifest.at("config").at("variants")) {
    const std::string stem = variant.at("dataset").get<std::string>() + "_" +
                             variant.at("loss").get<std::string>();
    dyn::Trajectory target = traj_from_csv(dir + "/traj_" + stem + "_relu.csv");
    data::Dataset d = data::load_csv(dir + "/dataset_" + stem + ".csv");
    std::vector<dyn::Trajectory> comps;
    for (std::size_t i = 0; i < d.num_samples(); ++i) {
      comps.push_back(traj_from_csv(dir + "/traj_" + stem + "_lin" + std::to_string(i) + ".csv"));
    }
    std::vector<const dyn::Trajectory*> ptrs;
    for (const auto& c : comps) ptrs.push_back(&c);
    out[stem + "/superposition_gap"] = analysis::loss_superposition(target, ptrs).max_rel_gap;
    out[stem + "/loss_drops"] = analysis::count_loss_drops(
        target.losses, csv_times(dir + "/traj_" + stem + "_relu.csv"));
  }
}

void recheck_ortho_norm(const std::string& dir, const json& manifest, Recomputed& out) {
  const json& cfg = manifest.at("config");
  auto cols = artifacts::read_csv_columns(dir + "/block_norms.csv");
  dyn::TrainConfig tcfg;
  tcfg.eta = cfg.at("eta");
  tcfg.steps = cfg.at("steps");
  auto ode_a = dyn::integrate_ortho_norm(cfg.at("u_a0"), 0.5, 2, tcfg);
  auto ode_b = dyn::integrate_ortho_norm(cfg.at("u_b0"), 0.5, 2, tcfg);
  double dev_a = 0.0, dev_b = 0.0;
  const auto& t = cols.at("t");
  for (std::size_t k = 0; k < t.size(); ++k) {
    const std::size_t step = static_cast<std::size_t>(std::llround(t[k] / tcfg.eta));
    dev_a = std::max(dev_a, std::abs(cols.at("block_a")[k] - ode_a.values[step]) /
                                ode_a.values[step]);
    dev_b = std::max(dev_b, std::abs(cols.at("block_b")[k] - ode_b.values[step]) /
                                ode_b.values[step]);
  }
  out["block_A_max_rel_dev"] = dev_a;
  out["block_B_max_rel_dev"] = dev_b;
  model::NetworkParams net = model::load_json(dir + "/final_net.json");
  const std::size_t half = net.layers[0].rows() / 2;
  double off = 0.0;
  for (std::size_t i = 0; i < half; ++i) {
    off = std::max({off, std::abs(net.layers[0](i, 1)), std::abs(net.layers[0](half + i, 0))});
  }
  out["off_direction_mass"] = off;
}

void recheck_fig5(const std::string& dir, const json& manifest, Recomputed& out) {
  model::NetworkParams relu = model::load_json(dir + "/net_relu.json");
  model::NetworkParams lin = model::load_json(dir + "/net_linear.json");
  const auto rep = analysis::structure_report(relu, &lin);
  const auto lrep = analysis::structure_report(lin);
  const std::size_t depth = manifest.at("config").at("depth");
  for (std::size_t l = 1; l + 1 < depth; ++l) {
    out["relu/neg_mass_W" + std::to_string(l + 1)] = rep.layers[l].neg_mass_frac;
    out["relu/rank_W" + std::to_string(l + 1)] = rep.layers[l].numerical_rank;
  }
  out["relu/rank_W1"] = rep.layers.front().numerical_rank;
  out["relu/rank_WL"] = rep.layers.back().numerical_rank;
  out["relu/effective_coefficient"] = rep.effective_coefficient;
  for (std::size_t l = 0; l + 1 < depth; ++l) {
    out["relu/block_ratio_r" + std::to_string(l + 1)] = rep.block_ratio[l];
  }
  for (std::size_t l = 0; l < depth; ++l) {
    out["linear/rank_W" + std::to_string(l + 1)] = lrep.layers[l].numerical_rank;
  }
  out["linear/effective_coefficient_err"] = std::abs(lrep.effective_coefficient - 1.0);
}

void recheck_fig7(const std::string& dir, const json& manifest, Recomputed& out) {
  std::vector<double> log_delta, log_duration;
  for (double delta : manifest.at("config").at("deltas").get<std::vector<double>>()) {
    const std::string tag = "delta" + std::to_string(delta).substr(0, 5);
    auto cols = artifacts::read_csv_columns(dir + "/traj_" + tag + ".csv");
    const auto info = analysis::plateau_duration(cols.at("loss"), cols.at("t"));
    out[tag + "/plateau_positive"] = info.duration;
    if (info.duration > 0) {
      log_delta.push_back(std::log(delta));
      log_duration.push_back(std::log(info.duration));
    }
  }
  out["plateau_slope"] =
      log_delta.size() >= 2 ? analysis::linear_slope(log_delta, log_duration) : 0.0;
}

void recheck_fig1(const std::string& dir, const json&, Recomputed& out) {
  data::Dataset fan = data::load_csv(dir + "/dataset_fan.csv");
  out["fan_two_layer_misclass"] =
      detail::misclassification(model::load_json(dir + "/net_fan_2layer.json"), fan);
  out["fan_three_layer_misclass"] =
      detail::misclassification(model::load_json(dir + "/net_fan_3layer.json"), fan);
}

void recheck_labelflip(const std::string& dir, const json&, Recomputed& out) {
  data::Dataset d = data::load_csv(dir + "/dataset.csv");
  const json meta = artifacts::read_json_file(dir + "/dataset.meta.json");
  model::NetworkParams net = model::load_json(dir + "/final_net.json");
  std::vector<bool> clean(d.num_samples(), true);
  const std::size_t n_base = d.num_samples() / 2;
  for (const auto& idx : meta.at("flipped_indices")) {
    clean[idx.get<std::size_t>()] = false;
    clean[idx.get<std::size_t>() + n_base] = false;
  }
  std::size_t right = 0, total = 0;
  for (std::size_t i = 0; i < d.num_samples(); ++i) {
    if (!clean[i]) continue;
    ++total;
    const double* x = d.inputs.row_ptr(i);
    if (model::predict(net, std::span<const double>(x, d.dim())) * d.targets[i] > 0) ++right;
  }
  out["clean_accuracy"] = static_cast<double>(right) / static_cast<double>(total);
}

void recheck_gradcheck(const std::string& dir, const json&, Recomputed& out) {
  const json rep = artifacts::read_json_file(dir + "/gradcheck.json");
  double worst = 0.0;
  for (const auto& row : rep.at("cases")) {
    worst = std::max(worst, row.at("max_rel_err").get<double>());
  }
  out["max_rel_err"] = worst;
}

}  // namespace

Verdict verify_run(const std::string& run_dir) {
  Verdict verdict;
  json detail_out;
  json manifest;
  try {
    manifest = artifacts::read_json_file(run_dir + "/manifest.json");
  } catch (const std::exception& e) {
    verdict.detail = {{"error", std::string("missing or unreadable manifest: ") + e.what()}};
    return verdict;
  }

  bool all_ok = true;
  json hash_checks = json::array();
  for (const auto& [file, hash] : manifest.at("artifacts").items()) {
    bool ok = false;
    std::string got = "<missing>";
    if (fs::exists(run_dir + "/" + file)) {
      got = artifacts::sha256_file(run_dir + "/" + file);
      ok = got == hash.get<std::string>();
    }
    hash_checks.push_back({{"name", "artifact_hash:" + file}, {"pass", ok}});
    all_ok = all_ok && ok;
  }
  detail_out["artifact_hashes"] = hash_checks;

  Recomputed values;
  const std::string name = manifest.at("experiment");
  try {
    if (name == "fig2_equivalence" || name == "figC_reg" || name == "figC_biglr" ||
        name == "figC_biginit") {
      recheck_equivalence(run_dir, manifest, values);
    } else if (name == "closed_form_check") {
      recheck_closed_form(run_dir, manifest, values);
    } else if (name == "converge_sq") {
      recheck_converge_sq(run_dir, manifest, values);
    } else if (name == "converge_logistic") {
      recheck_converge_logistic(run_dir, manifest, values);
    } else if (name == "fig3_ortho_xor") {
      recheck_fig3(run_dir, manifest, values);
    } else if (name == "ortho_norm_ode") {
      recheck_ortho_norm(run_dir, manifest, values);
    } else if (name == "fig5_deep_structure" || name == "fig5_deep_structure_L4") {
      recheck_fig5(run_dir, manifest, values);
    } else if (name == "fig7_plateau") {
      recheck_fig7(run_dir, manifest, values);
    } else if (name == "fig1_expressivity") {
      recheck_fig1(run_dir, manifest, values);
    } else if (name == "appG_labelflip") {
      recheck_labelflip(run_dir, manifest, values);
    } else if (name == "gradcheck") {
      recheck_gradcheck(run_dir, manifest, values);
    }
  } catch (const std::exception& e) {
    detail_out["recompute_error"] = e.what();
    all_ok = false;
  }

  json predicate_checks = json::array();
  for (const auto& item : manifest.at("checks")) {
    const std::string cname = item.at("name");
    const std::string op = item.at("op");
    const double a = item.at("threshold");
    const double b = item.value("threshold_hi", 0.0);
    const auto it = values.find(cname);
    const double value = it != values.end() ? it->second : item.at("value").get<double>();
    const bool ok = eval_op(op, value, a, b);
    predicate_checks.push_back({{"name", cname},
                                {"value", value},
                                {"recomputed", it != values.end()},
                                {"pass", ok}});
    all_ok = all_ok && ok;
  }
  detail_out["predicates"] = predicate_checks;

  verdict.pass = all_ok;
  detail_out["pass"] = all_ok;
  detail_out["run_hash"] = manifest.at("run_hash");
  verdict.detail = detail_out;
  artifacts::write_json_file(run_dir + "/verdict.json", detail_out);
  return verdict;
}

}  // namespace lab::exp
