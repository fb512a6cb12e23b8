#pragma once

// Config-driven experiment runner. Each experiment materializes one run
// directory: dataset CSV + metadata, trajectory CSVs, report JSONs, SVG
// plots, and a manifest (written last) with config, seeds, conventions,
// check results, and artifact hashes.

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

namespace lab::exp {

std::vector<std::string> experiment_names();
nlohmann::json default_config(const std::string& name);

struct Outcome {
  std::string dir;
  bool pass = false;
  nlohmann::json manifest;
};

Outcome run_experiment(nlohmann::json config);

// Dotted-path override, e.g. "checks.max_weight_error=0.01" or "eta=0.02".
// Values are parsed as JSON when possible, else taken as strings.
void apply_override(nlohmann::json& cfg, const std::string& dotted_key, const std::string& value);

struct Verdict {
  bool pass = false;
  nlohmann::json detail;
};

// Re-hashes every artifact and re-evaluates the experiment's acceptance
// predicates from the files on disk; writes verdict.json into the run dir.
Verdict verify_run(const std::string& run_dir);

// Simple work pool over [0, n); honors LAB_THREADS.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace lab::exp
