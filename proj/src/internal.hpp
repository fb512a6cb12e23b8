#pragma once

// Shared machinery between the experiment runner and the verifier.

#include <string>
#include <vector>

#include "json.hpp"
#include "lab/artifacts.hpp"
#include "lab/datasets.hpp"
#include "lab/model.hpp"

namespace lab::exp::detail {

inline bool eval_op(const std::string& op, double value, double a, double b) {
  if (op == "lt") return value < a;
  if (op == "le") return value <= a;
  if (op == "gt") return value > a;
  if (op == "ge") return value >= a;
  if (op == "between") return value >= a && value <= b;
  if (op == "eq") return value == a;
  throw std::invalid_argument("unknown check op " + op);
}

struct Checks {
  nlohmann::json items = nlohmann::json::array();
  bool all_pass = true;

  void add(const std::string& name, double value, const std::string& op, double a,
           double b = 0.0) {
    const bool ok = eval_op(op, value, a, b);
    nlohmann::json item{{"name", name}, {"value", value}, {"op", op}, {"threshold", a}};
    if (op == "between") item["threshold_hi"] = b;
    item["pass"] = ok;
    items.push_back(item);
    all_pass = all_pass && ok;
  }

  void flag(const std::string& name, bool ok) {
    items.push_back({{"name", name}, {"value", ok ? 1.0 : 0.0}, {"op", "ge"},
                     {"threshold", 1.0}, {"pass", ok}});
    all_pass = all_pass && ok;
  }
};

struct RunDir {
  std::string root;
  std::vector<std::string> files;

  std::string file(const std::string& name) {
    files.push_back(name);
    return root + "/" + name;
  }
};

double misclassification(const model::NetworkParams& net, const data::Dataset& d);

void save_dataset(RunDir& rd, const data::Dataset& d, data::Reduction reduction,
                  const std::string& stem = "dataset");

}  // namespace lab::exp::detail
