#include "lab/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace lab::data {

const char* reduction_name(Reduction r) { return r == Reduction::kMean ? "mean" : "sum"; }

Reduction reduction_from_name(const std::string& name) {
  if (name == "mean") return Reduction::kMean;
  if (name == "sum") return Reduction::kSum;
  throw std::invalid_argument("unknown reduction: " + name);
}

std::vector<double> Dataset::input(std::size_t i) const {
  const double* p = inputs.row_ptr(i);
  return std::vector<double>(p, p + inputs.cols());
}

void Dataset::validate() const {
  if (inputs.rows() < 1 || inputs.cols() < 1) throw std::invalid_argument("empty dataset");
  if (targets.size() != inputs.rows()) throw std::invalid_argument("targets/inputs size mismatch");
  if (!inputs.all_finite()) throw std::invalid_argument("non-finite input");
  for (double y : targets) {
    if (!std::isfinite(y)) throw std::invalid_argument("non-finite target");
  }
}

namespace {

DataStats stats_over(const Dataset& data, const std::vector<std::size_t>& idx, double divisor) {
  const std::size_t d = data.dim();
  DataStats st;
  st.sigma = Matrix(d, d);
  st.beta.assign(d, 0.0);
  for (std::size_t i : idx) {
    const double* x = data.inputs.row_ptr(i);
    const double y = data.targets[i];
    for (std::size_t a = 0; a < d; ++a) {
      st.beta[a] += y * x[a];
      for (std::size_t b = 0; b < d; ++b) st.sigma(a, b) += x[a] * x[b];
    }
    st.y_squared += y * y;
  }
  st.sigma *= 1.0 / divisor;
  for (double& v : st.beta) v /= divisor;
  st.y_squared /= divisor;
  st.s = numkit::norm(st.beta);
  st.beta_hat.assign(d, 0.0);
  if (st.s > 0.0) {
    for (std::size_t a = 0; a < d; ++a) st.beta_hat[a] = st.beta[a] / st.s;
  }
  for (std::size_t a = 0; a < d; ++a) st.trace_sigma += st.sigma(a, a);
  return st;
}

}  // namespace

DataStats compute_stats(const Dataset& data, Reduction reduction) {
  data.validate();
  std::vector<std::size_t> all(data.num_samples());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  const double divisor =
      reduction == Reduction::kMean ? static_cast<double>(data.num_samples()) : 1.0;
  return stats_over(data, all, divisor);
}

DataStats halfspace_stats(const Dataset& data, const std::vector<double>& r) {
  data.validate();
  if (r.size() != data.dim()) throw numkit::ShapeError("halfspace_stats: r dimension mismatch");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < data.num_samples(); ++i) {
    const double* x = data.inputs.row_ptr(i);
    double proj = 0.0;
    for (std::size_t a = 0; a < r.size(); ++a) proj += r[a] * x[a];
    if (proj == 0.0) {
      throw std::runtime_error("halfspace_stats: input " + std::to_string(i) +
                               " lies on the hyperplane");
    }
    if (proj > 0.0) idx.push_back(i);
  }
  if (idx.empty()) throw std::runtime_error("halfspace_stats: empty half space");
  return stats_over(data, idx, static_cast<double>(idx.size()));
}

double Teacher::evaluate(const double* x, std::size_t d) const {
  double u = 0.0;
  for (std::size_t a = 0; a < d; ++a) u += w[a] * x[a];
  if (kind == Kind::kLinear) return u;
  return u + std::sin(4.0 * u);
}

Dataset make_symmetric_gaussian(SeededRng& rng, std::size_t n_pairs, std::size_t dim,
                                Teacher teacher) {
  if (n_pairs < 1) throw std::invalid_argument("make_symmetric_gaussian: n_pairs < 1");
  if (teacher.w.empty()) {
    teacher.w.resize(dim);
    for (auto& v : teacher.w) v = rng.uniform(-0.5, 0.5);
  }
  if (teacher.w.size() != dim) throw numkit::ShapeError("teacher dimension mismatch");

  Matrix x(2 * n_pairs, dim);
  std::vector<double> y(2 * n_pairs);
  for (std::size_t n = 0; n < n_pairs; ++n) {
    double* row = x.row_ptr(2 * n);
    for (std::size_t a = 0; a < dim; ++a) row[a] = rng.gaussian();
    double* mirror = x.row_ptr(2 * n + 1);
    for (std::size_t a = 0; a < dim; ++a) mirror[a] = -row[a];
    y[2 * n] = teacher.evaluate(row, dim);
    y[2 * n + 1] = -y[2 * n];  // odd teacher, mirrored exactly
  }
  Dataset d{std::move(x), std::move(y), "symmetric_gaussian", {}};
  d.metadata = {{"generator", "symmetric_gaussian"},
                {"n_pairs", n_pairs},
                {"dim", dim},
                {"teacher", teacher.kind == Teacher::Kind::kLinear ? "linear" : "linear_plus_sine"},
                {"teacher_w", teacher.w},
                {"seed", rng.seed()},
                {"rng", SeededRng::generator_name()}};
  return d;
}

Dataset symmetrize(const Dataset& data) {
  data.validate();
  const std::size_t p = data.num_samples(), d = data.dim();
  Matrix x(2 * p, d);
  std::vector<double> y(2 * p);
  for (std::size_t i = 0; i < p; ++i) {
    const double* src = data.inputs.row_ptr(i);
    std::copy(src, src + d, x.row_ptr(i));
    double* mirror = x.row_ptr(p + i);
    for (std::size_t a = 0; a < d; ++a) mirror[a] = -src[a];
    y[i] = data.targets[i];
    y[p + i] = -data.targets[i];
  }
  Dataset out{std::move(x), std::move(y), data.name + "+mirror", data.metadata};
  out.metadata["symmetrized"] = true;
  return out;
}

std::optional<std::size_t> check_symmetry(const Dataset& data) {
  const double tol = 1e-12;
  const std::size_t p = data.num_samples(), d = data.dim();
  std::vector<bool> matched(p, false);
  auto mirror_distance = [&](std::size_t i, std::size_t j) {
    double m = 0.0;
    const double* xi = data.inputs.row_ptr(i);
    const double* xj = data.inputs.row_ptr(j);
    for (std::size_t a = 0; a < d; ++a) m = std::max(m, std::abs(xi[a] + xj[a]));
    return m;
  };
  for (std::size_t i = 0; i < p; ++i) {
    if (matched[i]) continue;
    std::size_t best = p;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < p; ++j) {
      if (j == i || matched[j]) continue;
      const double dist = mirror_distance(i, j);
      if (dist < best_dist) {
        best_dist = dist;
        best = j;
      }
    }
    if (best == p) return i;  // odd leftover point
    if (best_dist > tol) {
      // A broken pair: report the near-miss partner when one exists,
      // otherwise the current point.
      return best_dist < 0.5 ? std::max(i, best) : i;
    }
    if (std::abs(data.targets[i] + data.targets[best]) > tol) return i;
    matched[i] = matched[best] = true;
  }
  return std::nullopt;
}

namespace {

Dataset finish(Matrix x, std::vector<double> y, std::string name, nlohmann::json meta) {
  Dataset d{std::move(x), std::move(y), std::move(name), std::move(meta)};
  d.validate();
  return d;
}

// 120 points on two radii, six alternating 60-degree sectors; labels are odd
// and constant along rays. Built as 60 points plus exact mirrors.
Dataset make_fan() {
  const std::size_t half = 60;
  Matrix x(2 * half, 2);
  std::vector<double> y(2 * half);
  for (std::size_t i = 0; i < half; ++i) {
    const double theta = (static_cast<double>(i) + 0.5) * M_PI / half;  // [0, pi)
    const double radius = 1.0 + static_cast<double>(i % 2);
    const double px = radius * std::cos(theta);
    const double py = radius * std::sin(theta);
    const int sector = static_cast<int>(theta / (M_PI / 3.0));
    const double label = (sector % 2 == 0) ? 1.0 : -1.0;
    x(i, 0) = px;
    x(i, 1) = py;
    y[i] = label;
    x(half + i, 0) = -px;
    x(half + i, 1) = -py;
    y[half + i] = -label;
  }
  return finish(std::move(x), std::move(y), "fan",
                {{"generator", "fan"}, {"sectors", 6}, {"radii", {1.0, 2.0}}, {"size", 120}});
}

// +1 on an inner ring, -1 on an outer ring; sign flips along rays, so the
// labels are not positively homogeneous.
Dataset make_circle() {
  const std::size_t n = 60;
  Matrix x(2 * n, 2);
  std::vector<double> y(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    const double theta = (static_cast<double>(i) + 0.5) * 2.0 * M_PI / n;
    x(i, 0) = 0.5 * std::cos(theta);
    x(i, 1) = 0.5 * std::sin(theta);
    y[i] = 1.0;
    x(n + i, 0) = 2.0 * std::cos(theta);
    x(n + i, 1) = 2.0 * std::sin(theta);
    y[n + i] = -1.0;
  }
  return finish(std::move(x), std::move(y), "circle",
                {{"generator", "circle"}, {"inner_radius", 0.5}, {"outer_radius", 2.0}, {"size", 120}});
}

Dataset make_ortho2() {
  Matrix x = Matrix::from_rows({{-0.5, 1.0}, {2.0, 1.0}});
  return finish(std::move(x), {1.0, -1.0}, "ortho2",
                {{"generator", "ortho2"}, {"labels", {1.0, -1.0}}});
}

Dataset make_xor4() {
  // Vertical-axis points carry +1, horizontal-axis points -1.
  Matrix x = Matrix::from_rows({{0.0, 1.0}, {2.0, 0.0}, {0.0, -3.0}, {-4.0, 0.0}});
  return finish(std::move(x), {1.0, -1.0, 1.0, -1.0}, "xor4",
                {{"generator", "xor4"}, {"label_rule", "+1 on vertical axis"}});
}

Dataset make_ortho_highD() {
  // 20 orthogonal inputs in D=20; +1 points have norm 2, -1 points norm 1.
  const std::size_t d = 20;
  Matrix x(d, d);
  std::vector<double> y(d);
  for (std::size_t i = 0; i < d; ++i) {
    x(i, i) = i < 10 ? 2.0 : 1.0;
    y[i] = i < 10 ? 1.0 : -1.0;
  }
  return finish(std::move(x), std::move(y), "ortho_highD",
                {{"generator", "ortho_highD"}, {"plus_norm", 2.0}, {"minus_norm", 1.0}});
}

Dataset make_asym6(double delta) {
  if (!(delta >= 0.0)) throw std::invalid_argument("asym6: delta must be >= 0");
  Matrix x = Matrix::from_rows(
      {{1.0, 1.0}, {-1.0, -1.0}, {1.0, -1.0}, {-1.0, 1.0}, {-1.0, 0.0}, {1.0, delta}});
  std::vector<double> y{1.0, -1.0, -1.0, 1.0, 1.0, -1.0};
  return finish(std::move(x), std::move(y), "asym6",
                {{"generator", "asym6"},
                 {"delta", delta},
                 {"labels", y},
                 {"label_rule", "odd at delta=0; middle pair flips the corner pattern"}});
}

Dataset make_labelflip(SeededRng& rng, std::size_t n_clean, std::size_t n_flips) {
  // Linearly separable 2-D points with margin, then a few flipped labels,
  // then mirrored so the input distribution is even.
  const std::vector<double> w_star{0.894427190999916, 0.447213595499958};  // (2,1)/sqrt5
  Matrix x(n_clean, 2);
  std::vector<double> y(n_clean);
  std::size_t kept = 0;
  while (kept < n_clean) {
    const double a = rng.gaussian(), b = rng.gaussian();
    const double margin = w_star[0] * a + w_star[1] * b;
    if (std::abs(margin) < 0.4) continue;
    x(kept, 0) = a;
    x(kept, 1) = b;
    y[kept] = margin > 0 ? 1.0 : -1.0;
    ++kept;
  }
  std::vector<std::size_t> flipped;
  for (std::size_t k = 0; k < n_flips; ++k) {
    const std::size_t i = rng.next_u64() % n_clean;
    y[i] = -y[i];
    flipped.push_back(i);
  }
  Dataset base = finish(std::move(x), std::move(y), "labelflip",
                        {{"generator", "labelflip"},
                         {"n_clean", n_clean},
                         {"n_flips", n_flips},
                         {"flipped_indices", flipped},
                         {"teacher_direction", w_star},
                         {"seed", rng.seed()}});
  return symmetrize(base);
}

}  // namespace

Dataset make_named(const std::string& name, const nlohmann::json& params, SeededRng& rng) {
  if (name == "fan") return make_fan();
  if (name == "circle") return make_circle();
  if (name == "ortho2") return make_ortho2();
  if (name == "xor4") return make_xor4();
  if (name == "ortho_highD") return make_ortho_highD();
  if (name == "asym6") return make_asym6(params.value("delta", 0.1));
  if (name == "labelflip") {
    return make_labelflip(rng, params.value("n_clean", 20), params.value("n_flips", 2));
  }
  throw std::invalid_argument("make_named: unknown dataset " + name);
}

Dataset whiten(const Dataset& data) {
  data.validate();
  const std::size_t p = data.num_samples(), d = data.dim();
  DataStats st = compute_stats(data, Reduction::kMean);

  // Symmetric inverse square root of sigma via Jacobi eigendecomposition.
  Matrix a = st.sigma;
  Matrix v = Matrix::identity(d);
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = i + 1; j < d; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-28) break;
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i + 1; j < d; ++j) {
        if (a(i, j) == 0.0) continue;
        const double zeta = (a(j, j) - a(i, i)) / (2.0 * a(i, j));
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1 + t * t), s = c * t;
        for (std::size_t k = 0; k < d; ++k) {
          const double aki = a(k, i), akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double aik = a(i, k), ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
        for (std::size_t k = 0; k < d; ++k) {
          const double vki = v(k, i), vkj = v(k, j);
          v(k, i) = c * vki - s * vkj;
          v(k, j) = s * vki + c * vkj;
        }
      }
    }
  }
  Matrix isqrt(d, d);
  for (std::size_t i = 0; i < d; ++i) {
    const double lambda = a(i, i);
    if (lambda <= 0.0) throw std::runtime_error("whiten: covariance not positive definite");
    const double w = 1.0 / std::sqrt(lambda);
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c) isqrt(r, c) += w * v(r, i) * v(c, i);
  }

  Matrix xw = matmul(data.inputs, isqrt);
  // Polish with one Newton-ish correction so the sample covariance is
  // identity to machine precision even for marginally conditioned sigma.
  {
    Dataset tmp{xw, data.targets, data.name, {}};
    DataStats st2 = compute_stats(tmp, Reduction::kMean);
    Matrix corr(d, d);  // (3 I - sigma) / 2
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t j = 0; j < d; ++j) corr(i, j) = (i == j ? 1.5 : 0.0) - 0.5 * st2.sigma(i, j);
    xw = matmul(xw, corr);
  }
  (void)p;
  Dataset out{std::move(xw), data.targets, data.name + "+white", data.metadata};
  out.metadata["whitened"] = true;
  return out;
}

void save_csv(const Dataset& data, const std::string& csv_path) {
  std::ofstream f(csv_path);
  if (!f) throw std::runtime_error("cannot write " + csv_path);
  const std::size_t d = data.dim();
  for (std::size_t a = 0; a < d; ++a) f << "x" << a << ",";
  f << "y\n";
  f.precision(17);
  for (std::size_t i = 0; i < data.num_samples(); ++i) {
    const double* x = data.inputs.row_ptr(i);
    for (std::size_t a = 0; a < d; ++a) f << x[a] << ",";
    f << data.targets[i] << "\n";
  }
}

Dataset load_csv(const std::string& csv_path) {
  std::ifstream f(csv_path);
  if (!f) throw std::runtime_error("cannot read " + csv_path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty csv " + csv_path);
  std::size_t d = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
  std::vector<std::vector<double>> rows;
  std::vector<double> y;
  while (std::getline(f, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> vals;
    while (std::getline(ss, cell, ',')) vals.push_back(std::stod(cell));
    if (vals.size() != d + 1) throw std::runtime_error("bad csv row in " + csv_path);
    y.push_back(vals.back());
    vals.pop_back();
    rows.push_back(std::move(vals));
  }
  Dataset out{Matrix::from_rows(rows), std::move(y), csv_path, {}};
  out.validate();
  return out;
}

}  // namespace lab::data
