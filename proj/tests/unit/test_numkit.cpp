#include <cmath>
#include <vector>

#include "doctest.h"
#include "lab/numkit.hpp"

using lab::numkit::Matrix;
using lab::numkit::SeededRng;

namespace {

// Naive triple-loop product, the independent reference for matmul.
Matrix matmul_oracle(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Cyclic Jacobi eigenvalues of a symmetric matrix; used as the reference
// for singular values via eig(a^T a).
std::vector<double> symmetric_eigs_oracle(Matrix a) {
  const std::size_t n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
    if (off < 1e-24) break;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (a(i, j) == 0.0) continue;
        const double zeta = (a(j, j) - a(i, i)) / (2.0 * a(i, j));
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1 + t * t), s = c * t;
        for (std::size_t k = 0; k < n; ++k) {
          const double aki = a(k, i), akj = a(k, j);
          a(k, i) = c * aki - s * akj;
          a(k, j) = s * aki + c * akj;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double aik = a(i, k), ajk = a(j, k);
          a(i, k) = c * aik - s * ajk;
          a(j, k) = s * aik + c * ajk;
        }
      }
    }
  }
  std::vector<double> eigs(n);
  for (std::size_t i = 0; i < n; ++i) eigs[i] = a(i, i);
  std::sort(eigs.begin(), eigs.end(), std::greater<>());
  return eigs;
}

Matrix random_matrix(SeededRng& rng, std::size_t r, std::size_t c) {
  return lab::numkit::gaussian_matrix(rng, r, c, 1.0);
}

}  // namespace

TEST_CASE("matmul identity and annihilator") {
  Matrix a = Matrix::from_rows({{1, 2}, {3, 4}});
  Matrix c = lab::numkit::matmul(Matrix::identity(2), a);
  CHECK(c(0, 0) == 1.0);
  CHECK(c(0, 1) == 2.0);
  CHECK(c(1, 0) == 3.0);
  CHECK(c(1, 1) == 4.0);

  Matrix p = Matrix::from_rows({{1, 0}, {0, 0}});
  Matrix v = Matrix::from_rows({{0}, {5}});
  Matrix out = lab::numkit::matmul(p, v);
  CHECK(out(0, 0) == 0.0);
  CHECK(out(1, 0) == 0.0);
}

TEST_CASE("matmul matches the triple-loop oracle") {
  SeededRng rng(7);
  Matrix a = random_matrix(rng, 3, 4);
  Matrix b = random_matrix(rng, 4, 2);
  Matrix fast = lab::numkit::matmul(a, b);
  Matrix slow = matmul_oracle(a, b);
  for (std::size_t k = 0; k < fast.size(); ++k) {
    CHECK(std::abs(fast.data()[k] - slow.data()[k]) < 1e-12);
  }
}

TEST_CASE("matmul shape mismatch throws") {
  Matrix a(2, 3), b(2, 2);
  CHECK_THROWS_AS(lab::numkit::matmul(a, b), lab::numkit::ShapeError);
}

TEST_CASE("matmul associativity on random triples") {
  SeededRng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    Matrix a = random_matrix(rng, 4, 6), b = random_matrix(rng, 6, 3), c = random_matrix(rng, 3, 5);
    Matrix left = lab::numkit::matmul(lab::numkit::matmul(a, b), c);
    Matrix right = lab::numkit::matmul(a, lab::numkit::matmul(b, c));
    CHECK((left - right).frobenius_norm() < 1e-10 * right.frobenius_norm());
  }
}

TEST_CASE("matrix construction rejects non-finite entries") {
  CHECK_THROWS(Matrix(1, 2, {1.0, std::nan("")}));
  CHECK_THROWS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}));
}

TEST_CASE("singular values of diagonal and rank-one matrices") {
  Matrix d = Matrix::from_rows({{3, 0}, {0, 1}});
  auto sv = lab::numkit::singular_values(d);
  CHECK(sv[0] == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(sv[1] == doctest::Approx(1.0).epsilon(1e-12));

  // u v^T with |u| = 2, |v| = 5 has singular values {10, 0}.
  std::vector<double> u{2.0, 0.0}, v{3.0, 4.0};
  Matrix outer(2, 2);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) outer(i, j) = u[i] * v[j];
  sv = lab::numkit::singular_values(outer);
  CHECK(sv[0] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(sv[1] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("singular values match the a^T a eigenvalue oracle") {
  SeededRng rng(23);
  Matrix a = random_matrix(rng, 4, 3);
  auto sv = lab::numkit::singular_values(a);
  Matrix ata = lab::numkit::matmul(a.transposed(), a);
  auto eigs = symmetric_eigs_oracle(ata);
  REQUIRE(sv.size() == eigs.size());
  for (std::size_t k = 0; k < sv.size(); ++k) {
    CHECK(sv[k] * sv[k] == doctest::Approx(eigs[k]).epsilon(1e-8));
  }
}

TEST_CASE("singular values invariant under transpose; Frobenius consistency") {
  SeededRng rng(31);
  Matrix a = random_matrix(rng, 5, 3);
  auto s1 = lab::numkit::singular_values(a);
  auto s2 = lab::numkit::singular_values(a.transposed());
  for (std::size_t k = 0; k < s1.size(); ++k) CHECK(std::abs(s1[k] - s2[k]) < 1e-12);
  double sum_sq = 0.0;
  for (double s : s1) sum_sq += s * s;
  CHECK(sum_sq == doctest::Approx(a.sum_squares()).epsilon(1e-10));
}

TEST_CASE("svd reconstructs the matrix") {
  SeededRng rng(37);
  for (auto [r, c] : {std::pair<int, int>{5, 3}, {3, 5}, {4, 4}}) {
    Matrix a = random_matrix(rng, r, c);
    auto s = lab::numkit::svd(a);
    Matrix rec(a.rows(), a.cols());
    for (std::size_t k = 0; k < s.values.size(); ++k) {
      for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) {
          rec(i, j) += s.values[k] * s.left(i, k) * s.right(j, k);
        }
    }
    CHECK((rec - a).frobenius_norm() < 1e-10 * a.frobenius_norm());
  }
}

TEST_CASE("gaussian_matrix determinism and degenerate variance") {
  SeededRng r1(99), r2(99);
  Matrix a = lab::numkit::gaussian_matrix(r1, 3, 3, 2.0);
  Matrix b = lab::numkit::gaussian_matrix(r2, 3, 3, 2.0);
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a.data()[k] == b.data()[k]);

  SeededRng r3(1);
  Matrix z = lab::numkit::gaussian_matrix(r3, 4, 4, 0.0);
  CHECK(z.frobenius_norm() == 0.0);
}

TEST_CASE("gaussian_matrix sample moments (law of large numbers)") {
  SeededRng rng(2024);
  Matrix m = lab::numkit::gaussian_matrix(rng, 1000, 100, 1.0);
  double mean = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) mean += m.data()[k];
  mean /= static_cast<double>(m.size());
  double var = 0.0;
  for (std::size_t k = 0; k < m.size(); ++k) var += (m.data()[k] - mean) * (m.data()[k] - mean);
  var /= static_cast<double>(m.size() - 1);
  CHECK(std::abs(mean) < 0.02);
  CHECK(std::abs(var - 1.0) < 0.03);
}

TEST_CASE("solve recovers known solutions") {
  Matrix a = Matrix::from_rows({{2, 1}, {1, 3}});
  std::vector<double> x{0.5, -1.5};
  std::vector<double> b{2 * x[0] + x[1], x[0] + 3 * x[1]};
  auto got = lab::numkit::solve(a, b);
  CHECK(got[0] == doctest::Approx(x[0]).epsilon(1e-12));
  CHECK(got[1] == doctest::Approx(x[1]).epsilon(1e-12));
  Matrix sing = Matrix::from_rows({{1, 1}, {1, 1}});
  CHECK_THROWS(lab::numkit::solve(sing, b));
}

TEST_CASE("rng streams are reproducible and split streams differ") {
  SeededRng a(5), b(5);
  for (int k = 0; k < 100; ++k) CHECK(a.next_u64() == b.next_u64());
  SeededRng base(5);
  auto c1 = base.split(1), c2 = base.split(2);
  CHECK(c1.next_u64() != c2.next_u64());
}
