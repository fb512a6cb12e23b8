#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "lab/artifacts.hpp"
#include "lab/experiments.hpp"

namespace fs = std::filesystem;
using namespace lab::artifacts;

TEST_CASE("sha256 known vectors") {
  CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  CHECK(sha256_hex("The quick brown fox jumps over the lazy dog") ==
        "d7a8fbb307d7809469ca9abcb0082e4f8d5651e46d3cdb762d02d0bf37c9e592");
}

TEST_CASE("trajectory csv round trip") {
  lab::dyn::Trajectory t;
  t.eta = 0.1;
  t.steps_run = 4;
  t.losses = {1.0, 0.9, 0.8, 0.7, 0.6};
  t.record_steps = {0, 2, 4};
  t.record_times = {0.0, 0.2, 0.4};
  t.monitors["w1_norm"] = {0.1, 0.2, 0.3};
  const std::string path = "/tmp/lab_traj_test.csv";
  write_trajectory_csv(t, path);
  auto cols = read_csv_columns(path);
  REQUIRE(cols.count("loss") == 1);
  REQUIRE(cols.count("w1_norm") == 1);
  CHECK(cols["step"].size() == 3);
  CHECK(cols["loss"][1] == doctest::Approx(0.8));
  CHECK(cols["w1_norm"][2] == doctest::Approx(0.3));
  std::remove(path.c_str());
}

TEST_CASE("gradcheck experiment runs, verifies, and rejects tampering") {
  nlohmann::json cfg = lab::exp::default_config("gradcheck");
  const std::string dir = "/tmp/lab_gradcheck_run";
  fs::remove_all(dir);
  cfg["out_dir"] = dir;
  auto outcome = lab::exp::run_experiment(cfg);
  CHECK(outcome.pass);
  CHECK(fs::exists(dir + "/manifest.json"));
  CHECK(fs::exists(dir + "/gradcheck.json"));

  auto verdict = lab::exp::verify_run(dir);
  CHECK(verdict.pass);
  CHECK(fs::exists(dir + "/verdict.json"));

  // zeroing a report value must be caught by the hash check
  auto rep = read_json_file(dir + "/gradcheck.json");
  rep["max_rel_err"] = 0.0;
  write_json_file(dir + "/gradcheck.json", rep);
  auto tampered = lab::exp::verify_run(dir);
  CHECK(!tampered.pass);
  bool named = false;
  for (const auto& h : tampered.detail.at("artifact_hashes")) {
    if (h.at("name") == "artifact_hash:gradcheck.json" && !h.at("pass").get<bool>()) named = true;
  }
  CHECK(named);
  fs::remove_all(dir);
}

TEST_CASE("config overrides follow dotted paths") {
  nlohmann::json cfg = lab::exp::default_config("fig2_equivalence");
  lab::exp::apply_override(cfg, "eta", "0.01");
  lab::exp::apply_override(cfg, "checks.max_weight_error", "0.5");
  lab::exp::apply_override(cfg, "alphas", "[0.25]");
  CHECK(cfg["eta"] == 0.01);
  CHECK(cfg["checks"]["max_weight_error"] == 0.5);
  CHECK(cfg["alphas"].size() == 1);
}

TEST_CASE("svg plots are generated") {
  std::vector<PlotSeries> series{{"a", {0, 1, 2}, {1.0, 0.5, 0.25}}};
  const std::string path = "/tmp/lab_plot_test.svg";
  write_svg_plot(path, "title", "x", "y", series, true);
  const std::string content = read_text(path);
  CHECK(content.find("<svg") != std::string::npos);
  CHECK(content.find("polyline") != std::string::npos);
  std::remove(path.c_str());
}
