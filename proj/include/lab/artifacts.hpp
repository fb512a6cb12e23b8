#pragma once

// Run-directory plumbing: content hashes, CSV/JSON/SVG writers, and the
// trajectory export schema shared by the experiments and the verifier.

#include <map>
#include <string>
#include <vector>

#include "json.hpp"
#include "lab/dynamics.hpp"

namespace lab::artifacts {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

void write_text(const std::string& path, const std::string& content);
std::string read_text(const std::string& path);
void write_json_file(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json_file(const std::string& path);

// step,t,loss,<monitor columns> on the trajectory's record grid.
void write_trajectory_csv(const dyn::Trajectory& traj, const std::string& path);

// Column-indexed read-back of any CSV written by this module.
std::map<std::string, std::vector<double>> read_csv_columns(const std::string& path);

struct PlotSeries {
  std::string label;
  std::vector<double> x, y;
};

// Minimal polyline rendering with axes; log_y drops non-positive samples.
void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series, bool log_y);

nlohmann::json traj_summary(const dyn::Trajectory& traj);

}  // namespace lab::artifacts
