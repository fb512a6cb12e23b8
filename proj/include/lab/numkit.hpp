#pragma once

// Dense double-precision matrices, seeded RNG, and singular values for
// small problems. Everything here is deterministic given the seed.

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace lab::numkit {

struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& what) : std::runtime_error(what) {}
};

// Row-major dense matrix. Entries are validated to be finite on
// construction; in-place mutation is the caller's responsibility.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries);

  static Matrix identity(std::size_t n);
  static Matrix from_rows(const std::vector<std::vector<double>>& rows);
  static Matrix column(const std::vector<double>& v);
  static Matrix row(const std::vector<double>& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return a_.size(); }
  bool empty() const { return a_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return a_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a_[i * cols_ + j]; }

  double* data() { return a_.data(); }
  const double* data() const { return a_.data(); }
  double* row_ptr(std::size_t i) { return a_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const { return a_.data() + i * cols_; }
  std::span<const double> entries() const { return a_; }

  Matrix transposed() const;
  double frobenius_norm() const;
  double sum_squares() const;
  bool all_finite() const;

  Matrix& operator+=(const Matrix& o);
  Matrix& operator-=(const Matrix& o);
  Matrix& operator*=(double c);

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> a_;
  void check_finite() const;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double c);
Matrix operator*(double c, Matrix a);

// Standard product; throws ShapeError on inner-dimension mismatch.
Matrix matmul(const Matrix& a, const Matrix& b);

// c += a * b without allocating.
void matmul_acc(const Matrix& a, const Matrix& b, Matrix& c);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm(const std::vector<double>& a);

// Singular values in descending order via one-sided Jacobi.
std::vector<double> singular_values(const Matrix& a);

struct Svd {
  std::vector<double> values;  // min(m, n) values, descending
  Matrix left;                 // m x k, columns are left singular vectors
  Matrix right;                // n x k, columns are right singular vectors
};

// Thin SVD via the same one-sided Jacobi; vectors for zero singular values
// are left as zero columns.
Svd svd(const Matrix& a);

// Solves a x = b for square a (partial pivoting). Throws on singularity.
std::vector<double> solve(const Matrix& a, const std::vector<double>& b);

// xoshiro256++ seeded through splitmix64; Gaussian variates via Box-Muller.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);
  double gaussian();                      // standard normal
  SeededRng split(std::uint64_t stream) const;  // independent child stream

  static const char* generator_name() { return "xoshiro256++/box-muller"; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// i.i.d. N(0, std^2) entries, deterministic per rng state.
Matrix gaussian_matrix(SeededRng& rng, std::size_t rows, std::size_t cols, double std);

}  // namespace lab::numkit
