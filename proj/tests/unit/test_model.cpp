#include <cmath>
#include <cstdio>

#include "doctest.h"
#include "lab/model.hpp"

using namespace lab::model;
using lab::data::Dataset;
using lab::data::Reduction;
using lab::data::Teacher;
using lab::numkit::Matrix;
using lab::numkit::SeededRng;

namespace {

NetworkParams hand_net(double alpha) {
  NetworkParams net;
  net.alpha = alpha;
  net.layers.push_back(Matrix::identity(2));
  net.layers.push_back(Matrix::row({1.0, -1.0}));
  return net;
}

// Central finite differences on the total objective (data + regularizer).
std::vector<Matrix> fd_gradients(NetworkParams net, const Dataset& data, Loss loss, Reduction red,
                                 double l2_raw, double h = 1e-5) {
  std::vector<Matrix> out;
  const double lambda_alpha = 0.5 * (net.alpha + 1.0) * l2_raw;
  auto objective = [&](const NetworkParams& n) {
    double obj = loss_value(n, data, loss, red);
    double wsq = 0.0;
    for (const auto& w : n.layers) wsq += w.sum_squares();
    return obj + 0.5 * lambda_alpha * wsq;
  };
  for (std::size_t l = 0; l < net.layers.size(); ++l) {
    Matrix g(net.layers[l].rows(), net.layers[l].cols());
    for (std::size_t k = 0; k < g.size(); ++k) {
      const double orig = net.layers[l].data()[k];
      net.layers[l].data()[k] = orig + h;
      const double up = objective(net);
      net.layers[l].data()[k] = orig - h;
      const double dn = objective(net);
      net.layers[l].data()[k] = orig;
      g.data()[k] = (up - dn) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

Dataset random_dataset(SeededRng& rng, std::size_t p, std::size_t d) {
  Matrix x = lab::numkit::gaussian_matrix(rng, p, d, 1.0);
  std::vector<double> y(p);
  for (auto& v : y) v = rng.gaussian() > 0 ? 1.0 : -1.0;
  return Dataset{std::move(x), std::move(y), "random", {}};
}

}  // namespace

TEST_CASE("forward pass hand examples") {
  std::vector<double> x{2.0, -3.0};
  auto relu = hand_net(0.0);
  CHECK(predict(relu, x) == doctest::Approx(2.0));
  auto leaky = hand_net(0.5);
  CHECK(predict(leaky, x) == doctest::Approx(3.5));  // sigma = [2, -1.5]
}

TEST_CASE("alpha=1 network collapses to the matrix product") {
  SeededRng rng(5);
  NetworkParams net = init_gaussian(rng, layer_shapes(4, {6, 5}), 0.7, 1.0);
  auto prod = layer_product(net);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> x(4);
    for (auto& v : x) v = rng.gaussian();
    double want = 0.0;
    for (std::size_t j = 0; j < 4; ++j) want += prod[j] * x[j];
    CHECK(predict(net, x) == doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("positive homogeneity of the bias-free net") {
  SeededRng rng(6);
  NetworkParams net = init_gaussian(rng, layer_shapes(3, {8}), 0.9, 0.0);
  for (double a : {0.5, 2.0, 7.0}) {
    for (int rep = 0; rep < 10; ++rep) {
      std::vector<double> x(3), ax(3);
      for (std::size_t i = 0; i < 3; ++i) {
        x[i] = rng.gaussian();
        ax[i] = a * x[i];
      }
      CHECK(predict(net, ax) == doctest::Approx(a * predict(net, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("one-dimensional gradient hand example") {
  NetworkParams net;
  net.alpha = 0.0;
  net.layers.push_back(Matrix::from_rows({{0.5}}));
  net.layers.push_back(Matrix::from_rows({{0.5}}));
  Dataset d{Matrix::from_rows({{1.0}}), {1.0}, "one", {}};
  auto g = gradients(net, d, Loss::kSquare, Reduction::kMean, 0.0);
  CHECK(g.grads[0](0, 0) == doctest::Approx(-0.375).epsilon(1e-12));
  CHECK(g.grads[1](0, 0) == doctest::Approx(-0.375).epsilon(1e-12));
  CHECK(g.data_loss == doctest::Approx(0.5 * 0.75 * 0.75));
}

TEST_CASE("zero weights with logistic loss give zero gradient and ln 2 loss") {
  NetworkParams net;
  net.alpha = 0.0;
  net.layers.push_back(Matrix(3, 2));
  net.layers.push_back(Matrix(1, 3));
  SeededRng rng(3);
  Dataset d = random_dataset(rng, 6, 2);
  auto g = gradients(net, d, Loss::kLogistic, Reduction::kMean, 0.0);
  CHECK(g.data_loss == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  for (const auto& m : g.grads) CHECK(m.frobenius_norm() == 0.0);
}

TEST_CASE("backprop matches central finite differences") {
  SeededRng rng(17);
  for (double alpha : {0.0, 0.5, 1.0}) {
    for (Loss loss : {Loss::kSquare, Loss::kLogistic}) {
      for (double l2 : {0.0, 0.4}) {
        NetworkParams net = init_gaussian(rng, layer_shapes(3, {4}), 0.8, alpha);
        Dataset d = random_dataset(rng, 5, 3);
        auto bp = gradients(net, d, loss, Reduction::kMean, l2);
        auto fd = fd_gradients(net, d, loss, Reduction::kMean, l2);
        for (std::size_t l = 0; l < 2; ++l) {
          for (std::size_t k = 0; k < bp.grads[l].size(); ++k) {
            const double a = bp.grads[l].data()[k], b = fd[l].data()[k];
            CHECK(std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), 1e-4}));
          }
        }
      }
    }
  }
}

TEST_CASE("deep backprop matches finite differences") {
  SeededRng rng(19);
  for (double alpha : {0.0, 0.5}) {
    NetworkParams net = init_gaussian(rng, layer_shapes(3, {5, 4}), 0.8, alpha);
    Dataset d = random_dataset(rng, 4, 3);
    auto bp = gradients(net, d, Loss::kSquare, Reduction::kSum, 0.0);
    auto fd = fd_gradients(net, d, Loss::kSquare, Reduction::kSum, 0.0);
    for (std::size_t l = 0; l < 3; ++l) {
      for (std::size_t k = 0; k < bp.grads[l].size(); ++k) {
        const double a = bp.grads[l].data()[k], b = fd[l].data()[k];
        CHECK(std::abs(a - b) <= 1e-6 * std::max({std::abs(a), std::abs(b), 1e-4}));
      }
    }
  }
}

TEST_CASE("lemma-4 reduction: label term equals (alpha+1)/2 W2^T beta^T on symmetric data") {
  SeededRng rng(29);
  Dataset d = lab::data::make_symmetric_gaussian(rng, 40, 4, Teacher{});
  auto st = lab::data::compute_stats(d, Reduction::kMean);
  for (double alpha : {0.0, 0.5}) {
    NetworkParams net = init_gaussian(rng, layer_shapes(4, {6}), 0.9, alpha);
    const Matrix& w1 = net.layers[0];
    const Matrix& w2 = net.layers[1];
    // <sigma'(W1 x) o W2^T y x^T> assembled by direct enumeration
    Matrix lhs(6, 4);
    for (std::size_t i = 0; i < d.num_samples(); ++i) {
      const double* x = d.inputs.row_ptr(i);
      for (std::size_t h = 0; h < 6; ++h) {
        double pre = 0.0;
        for (std::size_t a = 0; a < 4; ++a) pre += w1(h, a) * x[a];
        const double sp = activation_deriv(pre, alpha);
        for (std::size_t a = 0; a < 4; ++a) {
          lhs(h, a) += sp * w2(0, h) * d.targets[i] * x[a] / static_cast<double>(d.num_samples());
        }
      }
    }
    for (std::size_t h = 0; h < 6; ++h) {
      for (std::size_t a = 0; a < 4; ++a) {
        const double rhs = 0.5 * (alpha + 1.0) * w2(0, h) * st.beta[a];
        CHECK(std::abs(lhs(h, a) - rhs) < 1e-10);
      }
    }
  }
}

TEST_CASE("init_gaussian scaling: layer norm concentrates near w_init") {
  SeededRng rng(31);
  NetworkParams net = init_gaussian(rng, layer_shapes(20, {500}), 0.1, 0.0);
  CHECK(net.layers[0].frobenius_norm() == doctest::Approx(0.1).epsilon(0.15));
  CHECK(net.layers[1].frobenius_norm() == doctest::Approx(0.1).epsilon(0.15));
  SeededRng r2(31);
  NetworkParams again = init_gaussian(r2, layer_shapes(20, {500}), 0.1, 0.0);
  CHECK(again.layers[0](0, 0) == net.layers[0](0, 0));
  NetworkParams zero = init_gaussian(rng, layer_shapes(3, {4}), 0.0, 0.0);
  CHECK(zero.weight_norm() == 0.0);
}

TEST_CASE("init_rank1_balanced satisfies the balanced rank-one form") {
  SeededRng rng(37);
  std::vector<double> r{0.6, 0.8};
  NetworkParams net = init_rank1_balanced(rng, 8, r, 0.05, 0.0);
  const Matrix& w1 = net.layers[0];
  const Matrix& w2 = net.layers[1];
  CHECK(w1.frobenius_norm() == doctest::Approx(0.05).epsilon(1e-12));

  double plus = 0.0, minus = 0.0;
  for (std::size_t i = 0; i < 8; ++i) {
    const double v = w2(0, i);
    (v >= 0 ? plus : minus) += v * v;
  }
  CHECK(plus == doctest::Approx(minus).epsilon(1e-12));

  // balancedness W1 W1^T = W2^T W2
  for (std::size_t i = 0; i < 8; ++i)
    for (std::size_t j = 0; j < 8; ++j) {
      double g = 0.0;
      for (std::size_t a = 0; a < 2; ++a) g += w1(i, a) * w1(j, a);
      CHECK(std::abs(g - w2(0, i) * w2(0, j)) < 1e-14);
    }

  // the implied function on +-r probes is (alpha+1)/2 |v|^2 r.x
  const double v2 = w2.sum_squares();
  CHECK(predict(net, r) == doctest::Approx(0.5 * v2).epsilon(1e-10));
  std::vector<double> neg{-r[0], -r[1]};
  CHECK(predict(net, neg) == doctest::Approx(-0.5 * v2).epsilon(1e-10));
  CHECK_THROWS(init_rank1_balanced(rng, 7, r, 0.05, 0.0));
}

TEST_CASE("network json round trip") {
  SeededRng rng(41);
  NetworkParams net = init_gaussian(rng, layer_shapes(3, {4, 2}), 0.5, 0.25);
  const std::string path = "/tmp/lab_test_net.json";
  save_json(net, path);
  NetworkParams back = load_json(path);
  CHECK(back.alpha == net.alpha);
  REQUIRE(back.depth() == net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    for (std::size_t k = 0; k < net.layers[l].size(); ++k) {
      CHECK(back.layers[l].data()[k] == net.layers[l].data()[k]);
    }
  }
  std::remove(path.c_str());
}
