#include "lab/artifacts.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lab::artifacts {

namespace {

// Compact SHA-256, FIPS 180-4.
struct Sha256 {
  std::uint32_t h[8] = {0x6a09e667, 0xbb67ae85, 0x3c6ef372, 0xa54ff53a,
                        0x510e527f, 0x9b05688c, 0x1f83d9ab, 0x5be0cd19};
  std::uint64_t total = 0;
  unsigned char buf[64];
  std::size_t fill = 0;

  static std::uint32_t rotr(std::uint32_t v, int n) { return (v >> n) | (v << (32 - n)); }

  void block(const unsigned char* p) {
    static const std::uint32_t k[64] = {
        0x428a2f98, 0x71374491, 0xb5c0fbcf, 0xe9b5dba5, 0x3956c25b, 0x59f111f1, 0x923f82a4,
        0xab1c5ed5, 0xd807aa98, 0x12835b01, 0x243185be, 0x550c7dc3, 0x72be5d74, 0x80deb1fe,
        0x9bdc06a7, 0xc19bf174, 0xe49b69c1, 0xefbe4786, 0x0fc19dc6, 0x240ca1cc, 0x2de92c6f,
        0x4a7484aa, 0x5cb0a9dc, 0x76f988da, 0x983e5152, 0xa831c66d, 0xb00327c8, 0xbf597fc7,
        0xc6e00bf3, 0xd5a79147, 0x06ca6351, 0x14292967, 0x27b70a85, 0x2e1b2138, 0x4d2c6dfc,
        0x53380d13, 0x650a7354, 0x766a0abb, 0x81c2c92e, 0x92722c85, 0xa2bfe8a1, 0xa81a664b,
        0xc24b8b70, 0xc76c51a3, 0xd192e819, 0xd6990624, 0xf40e3585, 0x106aa070, 0x19a4c116,
        0x1e376c08, 0x2748774c, 0x34b0bcb5, 0x391c0cb3, 0x4ed8aa4a, 0x5b9cca4f, 0x682e6ff3,
        0x748f82ee, 0x78a5636f, 0x84c87814, 0x8cc70208, 0x90befffa, 0xa4506ceb, 0xbef9a3f7,
        0xc67178f2};
    std::uint32_t w[64];
    for (int i = 0; i < 16; ++i) {
      w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
             (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
    }
    for (int i = 16; i < 64; ++i) {
      const std::uint32_t s0 = rotr(w[i - 15], 7) ^ rotr(w[i - 15], 18) ^ (w[i - 15] >> 3);
      const std::uint32_t s1 = rotr(w[i - 2], 17) ^ rotr(w[i - 2], 19) ^ (w[i - 2] >> 10);
      w[i] = w[i - 16] + s0 + w[i - 7] + s1;
    }
    std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4], f = h[5], g = h[6], hh = h[7];
    for (int i = 0; i < 64; ++i) {
      const std::uint32_t s1 = rotr(e, 6) ^ rotr(e, 11) ^ rotr(e, 25);
      const std::uint32_t ch = (e & f) ^ (~e & g);
      const std::uint32_t t1 = hh + s1 + ch + k[i] + w[i];
      const std::uint32_t s0 = rotr(a, 2) ^ rotr(a, 13) ^ rotr(a, 22);
      const std::uint32_t maj = (a & b) ^ (a & c) ^ (b & c);
      const std::uint32_t t2 = s0 + maj;
      hh = g; g = f; f = e; e = d + t1;
      d = c; c = b; b = a; a = t1 + t2;
    }
    h[0] += a; h[1] += b; h[2] += c; h[3] += d;
    h[4] += e; h[5] += f; h[6] += g; h[7] += hh;
  }

  void update(const unsigned char* p, std::size_t n) {
    total += n;
    while (n > 0) {
      const std::size_t take = std::min(n, std::size_t(64) - fill);
      std::memcpy(buf + fill, p, take);
      fill += take;
      p += take;
      n -= take;
      if (fill == 64) {
        block(buf);
        fill = 0;
      }
    }
  }

  std::string finish() {
    const std::uint64_t bits = total * 8;
    const unsigned char pad = 0x80;
    const unsigned char zero = 0;
    update(&pad, 1);
    while (fill != 56) update(&zero, 1);
    unsigned char len[8];
    for (int i = 0; i < 8; ++i) len[i] = static_cast<unsigned char>(bits >> (56 - 8 * i));
    update(len, 8);
    static const char* hex = "0123456789abcdef";
    std::string out(64, '0');
    for (int i = 0; i < 8; ++i) {
      for (int b = 0; b < 4; ++b) {
        const unsigned char byte = static_cast<unsigned char>(h[i] >> (24 - 8 * b));
        out[8 * i + 2 * b] = hex[byte >> 4];
        out[8 * i + 2 * b + 1] = hex[byte & 0xf];
      }
    }
    return out;
  }
};

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  Sha256 s;
  s.update(reinterpret_cast<const unsigned char*>(bytes.data()), bytes.size());
  return s.finish();
}

std::string sha256_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("sha256_file: cannot read " + path);
  Sha256 s;
  char chunk[65536];
  while (f) {
    f.read(chunk, sizeof(chunk));
    s.update(reinterpret_cast<const unsigned char*>(chunk), static_cast<std::size_t>(f.gcount()));
  }
  return s.finish();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << content;
}

std::string read_text(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text(path, j.dump(2) + "\n");
}

nlohmann::json read_json_file(const std::string& path) {
  return nlohmann::json::parse(read_text(path));
}

void write_trajectory_csv(const dyn::Trajectory& traj, const std::string& path) {
  std::ostringstream out;
  out.precision(12);
  std::vector<std::string> names;
  for (const auto& [name, series] : traj.monitors) names.push_back(name);
  out << "step,t,loss";
  for (const auto& n : names) out << "," << n;
  out << "\n";
  for (std::size_t k = 0; k < traj.record_steps.size(); ++k) {
    const long step = traj.record_steps[k];
    out << step << "," << traj.record_times[k] << ","
        << traj.losses[std::min<std::size_t>(static_cast<std::size_t>(step),
                                             traj.losses.size() - 1)];
    for (const auto& n : names) out << "," << traj.monitors.at(n)[k];
    out << "\n";
  }
  write_text(path, out.str());
}

std::map<std::string, std::vector<double>> read_csv_columns(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty csv " + path);
  std::vector<std::string> names;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) names.push_back(cell);
  }
  std::map<std::string, std::vector<double>> cols;
  for (const auto& n : names) cols[n] = {};
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::size_t i = 0;
    while (std::getline(ss, cell, ',') && i < names.size()) {
      cols[names[i++]].push_back(std::stod(cell));
    }
  }
  return cols;
}

namespace {

struct Range {
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  void add(double v) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
};

}  // namespace

void write_svg_plot(const std::string& path, const std::string& title,
                    const std::string& x_label, const std::string& y_label,
                    const std::vector<PlotSeries>& series, bool log_y) {
  const int width = 760, height = 480;
  const int ml = 70, mr = 160, mt = 40, mb = 50;
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                  "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};
  Range xr, yr;
  for (const auto& s : series) {
    for (std::size_t k = 0; k < s.x.size(); ++k) {
      const double y = s.y[k];
      if (log_y && !(y > 0)) continue;
      xr.add(s.x[k]);
      yr.add(log_y ? std::log10(y) : y);
    }
  }
  if (!(xr.hi > xr.lo)) xr.hi = xr.lo + 1.0;
  if (!(yr.hi > yr.lo)) yr.hi = yr.lo + 1.0;

  auto px = [&](double x) { return ml + (x - xr.lo) / (xr.hi - xr.lo) * (width - ml - mr); };
  auto py = [&](double yv) {
    const double y = log_y ? std::log10(yv) : yv;
    return height - mb - (y - yr.lo) / (yr.hi - yr.lo) * (height - mt - mb);
  };

  std::ostringstream svg;
  svg.precision(6);
  svg << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << " " << height << "'>\n"
      << "<rect width='100%' height='100%' fill='white'/>\n"
      << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='15'>" << title
      << "</text>\n";
  svg << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
      << height - mb << "' stroke='black'/>\n";
  svg << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xr.lo + (xr.hi - xr.lo) * i / 5.0;
    const double fy = yr.lo + (yr.hi - yr.lo) * i / 5.0;
    svg << "<text x='" << px(fx) << "' y='" << height - mb + 18
        << "' text-anchor='middle' font-size='11'>" << fx << "</text>\n";
    svg << "<text x='" << ml - 8 << "' y='" << height - mb - (height - mt - mb) * i / 5.0 + 4
        << "' text-anchor='end' font-size='11'>" << (log_y ? std::pow(10.0, fy) : fy)
        << "</text>\n";
  }
  svg << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 12
      << "' text-anchor='middle' font-size='13'>" << x_label << "</text>\n";
  svg << "<text x='18' y='" << (mt + height - mb) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
      << (mt + height - mb) / 2 << ")'>" << y_label << (log_y ? " (log)" : "") << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = palette[si % 8];
    svg << "<polyline fill='none' stroke='" << color << "' stroke-width='1.4' points='";
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 4000);
    for (std::size_t k = 0; k < s.x.size(); k += stride) {
      if (log_y && !(s.y[k] > 0)) continue;
      svg << px(s.x[k]) << "," << py(s.y[k]) << " ";
    }
    svg << "'/>\n";
    svg << "<text x='" << width - mr + 10 << "' y='" << mt + 16 * (si + 1) << "' fill='" << color
        << "' font-size='12'>" << s.label << "</text>\n";
  }
  svg << "</svg>\n";
  write_text(path, svg.str());
}

nlohmann::json traj_summary(const dyn::Trajectory& traj) {
  return {{"eta", traj.eta},
          {"steps_run", traj.steps_run},
          {"status", traj.status},
          {"initial_loss", traj.losses.front()},
          {"final_loss", traj.losses.back()},
          {"final_time", traj.eta * static_cast<double>(traj.steps_run)}};
}

}  // namespace lab::artifacts
