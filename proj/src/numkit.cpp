#include "lab/numkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lab::numkit {

Matrix::Matrix(std::size_t rows, std::size_t cols)
    : rows_(rows), cols_(cols), a_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
    : rows_(rows), cols_(cols), a_(std::move(entries)) {
  if (a_.size() != rows_ * cols_) {
    throw ShapeError("entry count does not match rows*cols");
  }
  check_finite();
}

void Matrix::check_finite() const {
  for (double v : a_) {
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite matrix entry");
  }
}

bool Matrix::all_finite() const {
  for (double v : a_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ShapeError("from_rows: no rows");
  std::size_t c = rows[0].size();
  Matrix m(rows.size(), c);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != c) throw ShapeError("from_rows: ragged rows");
    std::copy(rows[i].begin(), rows[i].end(), m.row_ptr(i));
  }
  m.check_finite();
  return m;
}

Matrix Matrix::column(const std::vector<double>& v) {
  Matrix m(v.size(), 1, std::vector<double>(v));
  return m;
}

Matrix Matrix::row(const std::vector<double>& v) {
  Matrix m(1, v.size(), std::vector<double>(v));
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

double Matrix::sum_squares() const {
  double s = 0.0;
  for (double v : a_) s += v * v;
  return s;
}

double Matrix::frobenius_norm() const { return std::sqrt(sum_squares()); }

Matrix& Matrix::operator+=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeError("operator+=: shape mismatch");
  for (std::size_t k = 0; k < a_.size(); ++k) a_[k] += o.a_[k];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& o) {
  if (rows_ != o.rows_ || cols_ != o.cols_) throw ShapeError("operator-=: shape mismatch");
  for (std::size_t k = 0; k < a_.size(); ++k) a_[k] -= o.a_[k];
  return *this;
}

Matrix& Matrix::operator*=(double c) {
  for (double& v : a_) v *= c;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { a += b; return a; }
Matrix operator-(Matrix a, const Matrix& b) { a -= b; return a; }
Matrix operator*(Matrix a, double c) { a *= c; return a; }
Matrix operator*(double c, Matrix a) { a *= c; return a; }

void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  if (c.rows() != a.rows() || c.cols() != b.cols()) throw ShapeError("matmul: bad output shape");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  // ikj order keeps the b row and the c row streaming.
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c.row_ptr(i);
    const double* ai = a.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* bp = b.row_ptr(p);
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  matmul_acc(a, b, c);
  return c;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(const std::vector<double>& a) { return std::sqrt(dot(a, a)); }

std::vector<double> singular_values(const Matrix& a) {
  if (a.empty()) throw ShapeError("singular_values: empty matrix");
  // One-sided Jacobi orthogonalizes the columns; work on the tall variant so
  // column count is min(rows, cols).
  Matrix w = a.rows() >= a.cols() ? a : a.transposed();
  const std::size_t m = w.rows(), n = w.cols();

  std::vector<double> col(m);
  const int max_sweeps = 60;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double* r = w.row_ptr(i);
          app += r[p] * r[p];
          aqq += r[q] * r[q];
          apq += r[p] * r[q];
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
        converged = false;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          double* r = w.row_ptr(i);
          const double vp = r[p], vq = r[q];
          r[p] = c * vp - s * vq;
          r[q] = s * vp + c * vq;
        }
      }
    }
    if (converged) break;
  }

  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double v = w(i, j);
      s += v * v;
    }
    sv[j] = std::sqrt(s);
  }
  std::sort(sv.begin(), sv.end(), std::greater<>());
  return sv;
}

Svd svd(const Matrix& a) {
  if (a.empty()) throw ShapeError("svd: empty matrix");
  const bool flip = a.rows() < a.cols();
  Matrix w = flip ? a.transposed() : a;
  const std::size_t m = w.rows(), n = w.cols();
  Matrix v = Matrix::identity(n);

  const int max_sweeps = 60;
  const double tol = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double app = 0.0, aqq = 0.0, apq = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          const double* r = w.row_ptr(i);
          app += r[p] * r[p];
          aqq += r[q] * r[q];
          apq += r[p] * r[q];
        }
        if (std::abs(apq) <= tol * std::sqrt(app * aqq) || apq == 0.0) continue;
        converged = false;
        const double zeta = (aqq - app) / (2.0 * apq);
        const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          double* r = w.row_ptr(i);
          const double vp = r[p], vq = r[q];
          r[p] = c * vp - s * vq;
          r[q] = s * vp + c * vq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          double* r = v.row_ptr(i);
          const double vp = r[p], vq = r[q];
          r[p] = c * vp - s * vq;
          r[q] = s * vp + c * vq;
        }
      }
    }
    if (converged) break;
  }

  std::vector<std::size_t> order(n);
  std::vector<double> sv(n);
  for (std::size_t j = 0; j < n; ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < m; ++i) s += w(i, j) * w(i, j);
    sv[j] = std::sqrt(s);
    order[j] = j;
  }
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sv[x] > sv[y]; });

  Svd out;
  out.values.resize(n);
  out.left = Matrix(m, n);
  out.right = Matrix(n, n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.values[k] = sv[j];
    if (sv[j] > 0.0) {
      for (std::size_t i = 0; i < m; ++i) out.left(i, k) = w(i, j) / sv[j];
    }
    for (std::size_t i = 0; i < n; ++i) out.right(i, k) = v(i, j);
  }
  if (flip) std::swap(out.left, out.right);
  return out;
}

std::vector<double> solve(const Matrix& a, const std::vector<double>& b) {
  if (a.rows() != a.cols() || a.rows() != b.size()) throw ShapeError("solve: shape mismatch");
  const std::size_t n = a.rows();
  Matrix m = a;
  std::vector<double> x = b;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(m(i, k)) > std::abs(m(piv, k))) piv = i;
    if (m(piv, k) == 0.0) throw std::runtime_error("solve: singular matrix");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(m(k, j), m(piv, j));
      std::swap(x[k], x[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = m(i, k) / m(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) m(i, j) -= f * m(k, j);
      x[i] -= f * x[k];
    }
  }
  for (std::size_t i = n; i-- > 0;) {
    double s = x[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= m(i, j) * x[j];
    x[i] = s / m(i, i);
  }
  return x;
}

namespace {
std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}
std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }
}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : seed_(seed) {
  std::uint64_t sm = seed;
  for (auto& s : s_) s = splitmix64(sm);
}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const std::uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double SeededRng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double SeededRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform(), u2 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double th = 2.0 * M_PI * u2;
  spare_ = r * std::sin(th);
  has_spare_ = true;
  return r * std::cos(th);
}

SeededRng SeededRng::split(std::uint64_t stream) const {
  std::uint64_t mix = seed_ ^ (0xA0761D6478BD642Full * (stream + 1));
  return SeededRng(splitmix64(mix));
}

Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double std) {
  if (std < 0.0) throw std::invalid_argument("gaussian_matrix: negative std");
  Matrix m(rows, cols);
  for (std::size_t k = 0; k < rows * cols; ++k) m.data()[k] = std * rng.gaussian();
  return m;
}

}  // namespace lab::numkit
