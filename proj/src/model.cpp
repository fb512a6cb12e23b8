#include "lab/model.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace lab::model {

const char* loss_name(Loss l) { return l == Loss::kSquare ? "square" : "logistic"; }

Loss loss_from_name(const std::string& name) {
  if (name == "square") return Loss::kSquare;
  if (name == "logistic") return Loss::kLogistic;
  throw std::invalid_argument("unknown loss: " + name);
}

void NetworkParams::validate() const {
  if (layers.empty()) throw std::invalid_argument("network has no layers");
  if (alpha < 0.0 || alpha > 1.0) throw std::invalid_argument("alpha outside [0, 1]");
  for (std::size_t l = 1; l < layers.size(); ++l) {
    if (layers[l].cols() != layers[l - 1].rows()) {
      throw numkit::ShapeError("layer " + std::to_string(l) + " does not chain");
    }
  }
  if (layers.back().rows() != 1) throw numkit::ShapeError("final layer must have one row");
}

double NetworkParams::weight_norm() const {
  double s = 0.0;
  for (const auto& w : layers) s += w.sum_squares();
  return std::sqrt(s);
}

ForwardTrace forward(const NetworkParams& net, std::span<const double> x) {
  if (x.size() != net.input_dim()) throw numkit::ShapeError("forward: input dimension mismatch");
  ForwardTrace tr;
  tr.preacts.reserve(net.depth());
  std::vector<double> act(x.begin(), x.end());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const Matrix& w = net.layers[l];
    std::vector<double> h(w.rows(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
      const double* wi = w.row_ptr(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < w.cols(); ++j) acc += wi[j] * act[j];
      h[i] = acc;
    }
    tr.preacts.push_back(h);
    if (l + 1 < net.depth()) {
      act.resize(h.size());
      for (std::size_t i = 0; i < h.size(); ++i) act[i] = activation(h[i], net.alpha);
    }
  }
  tr.output = tr.preacts.back()[0];
  return tr;
}

double predict(const NetworkParams& net, std::span<const double> x) {
  return forward(net, x).output;
}

std::vector<double> layer_product(const NetworkParams& net) {
  Matrix p = net.layers[0];
  for (std::size_t l = 1; l < net.depth(); ++l) p = numkit::matmul(net.layers[l], p);
  return std::vector<double>(p.data(), p.data() + p.cols());
}

GradientResult gradients(const NetworkParams& net, const Dataset& data, Loss loss,
                         Reduction reduction, double l2_raw) {
  net.validate();
  data.validate();
  if (l2_raw < 0.0) throw std::invalid_argument("gradients: negative l2");
  const std::size_t depth = net.depth();
  const double alpha = net.alpha;
  const double scale =
      reduction == Reduction::kMean ? 1.0 / static_cast<double>(data.num_samples()) : 1.0;

  GradientResult out;
  out.grads.reserve(depth);
  for (const auto& w : net.layers) out.grads.emplace_back(w.rows(), w.cols());

  std::vector<std::vector<double>> delta(depth);
  for (std::size_t i = 0; i < data.num_samples(); ++i) {
    const double* xp = data.inputs.row_ptr(i);
    ForwardTrace tr = forward(net, std::span<const double>(xp, data.dim()));
    const double y = data.targets[i];
    const double f = tr.output;
    double dldf;
    if (loss == Loss::kSquare) {
      out.data_loss += 0.5 * (y - f) * (y - f);
      dldf = f - y;
    } else {
      const double m = y * f;
      // log(1 + e^-m) computed stably on both tails
      out.data_loss += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
      dldf = -y / (1.0 + std::exp(m));
    }

    delta[depth - 1] = {dldf};
    for (std::size_t l = depth - 1; l-- > 0;) {
      const Matrix& wn = net.layers[l + 1];
      std::vector<double>& d = delta[l];
      d.assign(wn.cols(), 0.0);
      const std::vector<double>& dn = delta[l + 1];
      for (std::size_t r = 0; r < wn.rows(); ++r) {
        const double* wr = wn.row_ptr(r);
        for (std::size_t c = 0; c < wn.cols(); ++c) d[c] += wr[c] * dn[r];
      }
      const std::vector<double>& h = tr.preacts[l];
      for (std::size_t c = 0; c < d.size(); ++c) d[c] *= activation_deriv(h[c], alpha);
    }

    for (std::size_t l = 0; l < depth; ++l) {
      Matrix& g = out.grads[l];
      const std::vector<double>& d = delta[l];
      if (l == 0) {
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double* gr = g.row_ptr(r);
          const double dr = d[r];
          for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += dr * xp[c];
        }
      } else {
        const std::vector<double>& h = tr.preacts[l - 1];
        for (std::size_t r = 0; r < g.rows(); ++r) {
          double* gr = g.row_ptr(r);
          const double dr = d[r];
          for (std::size_t c = 0; c < g.cols(); ++c) gr[c] += dr * activation(h[c], alpha);
        }
      }
    }
  }

  out.data_loss *= scale;
  const double lambda_alpha = 0.5 * (alpha + 1.0) * l2_raw;
  for (std::size_t l = 0; l < depth; ++l) {
    Matrix& g = out.grads[l];
    g *= scale;
    if (lambda_alpha > 0.0) {
      const Matrix& w = net.layers[l];
      for (std::size_t k = 0; k < g.size(); ++k) g.data()[k] += lambda_alpha * w.data()[k];
    }
  }
  return out;
}

double loss_value(const NetworkParams& net, const Dataset& data, Loss loss, Reduction reduction) {
  double acc = 0.0;
  for (std::size_t i = 0; i < data.num_samples(); ++i) {
    const double* xp = data.inputs.row_ptr(i);
    const double f = predict(net, std::span<const double>(xp, data.dim()));
    const double y = data.targets[i];
    if (loss == Loss::kSquare) {
      acc += 0.5 * (y - f) * (y - f);
    } else {
      const double m = y * f;
      acc += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    }
  }
  if (reduction == Reduction::kMean) acc /= static_cast<double>(data.num_samples());
  return acc;
}

std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(
    std::size_t input_dim, const std::vector<std::size_t>& hidden) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t in = input_dim;
  for (std::size_t h : hidden) {
    shapes.emplace_back(h, in);
    in = h;
  }
  shapes.emplace_back(1, in);
  return shapes;
}

NetworkParams init_gaussian(SeededRng& rng,
                            const std::vector<std::pair<std::size_t, std::size_t>>& shapes,
                            double w_init, double alpha) {
  if (w_init < 0.0) throw std::invalid_argument("init_gaussian: negative w_init");
  NetworkParams net;
  net.alpha = alpha;
  for (const auto& [rows, cols] : shapes) {
    const double std = w_init / std::sqrt(static_cast<double>(rows * cols));
    net.layers.push_back(numkit::gaussian_matrix(rng, rows, cols, std));
  }
  net.validate();
  return net;
}

NetworkParams init_rank1_balanced(SeededRng& rng, std::size_t width, const std::vector<double>& r,
                                  double scale, double alpha) {
  if (width % 2 != 0) throw std::invalid_argument("init_rank1_balanced: width must be even");
  const double rnorm = numkit::norm(r);
  if (std::abs(rnorm - 1.0) > 1e-9) throw std::invalid_argument("init_rank1_balanced: r not unit");

  std::vector<double> v(width);
  for (std::size_t k = 0; k < width / 2; ++k) {
    const double a = std::abs(rng.gaussian()) + 1e-3;
    v[2 * k] = a;
    v[2 * k + 1] = -a;  // exact sign pair
  }
  const double vnorm = numkit::norm(v);
  for (double& a : v) a *= scale / vnorm;

  NetworkParams net;
  net.alpha = alpha;
  Matrix w1(width, r.size());
  for (std::size_t i = 0; i < width; ++i)
    for (std::size_t j = 0; j < r.size(); ++j) w1(i, j) = v[i] * r[j];
  net.layers.push_back(std::move(w1));
  net.layers.push_back(Matrix::row(v));
  net.validate();
  return net;
}

NetworkParams init_deep_blocks(SeededRng& rng, const std::vector<std::size_t>& hidden,
                               const std::vector<double>& r, double u, double alpha) {
  if (hidden.empty()) throw std::invalid_argument("init_deep_blocks: no hidden layers");
  for (std::size_t h : hidden) {
    if (h % 2 != 0) throw std::invalid_argument("init_deep_blocks: widths must be even");
  }
  const double rnorm = numkit::norm(r);
  if (std::abs(rnorm - 1.0) > 1e-9) throw std::invalid_argument("init_deep_blocks: r not unit");

  auto half_block = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& a : v) a = std::abs(rng.gaussian()) + 1e-3;
    const double scale = 1.0 / (std::sqrt(2.0) * numkit::norm(v));
    for (auto& a : v) a *= scale;  // block norm exactly 1/sqrt(2)
    return v;
  };
  std::vector<std::vector<double>> plus, minus;
  for (std::size_t h : hidden) {
    plus.push_back(half_block(h / 2));
    minus.push_back(half_block(h / 2));
  }

  NetworkParams net;
  net.alpha = alpha;
  {
    Matrix w1(hidden[0], r.size());
    for (std::size_t i = 0; i < hidden[0] / 2; ++i)
      for (std::size_t j = 0; j < r.size(); ++j) {
        w1(i, j) = u * plus[0][i] * r[j];
        w1(hidden[0] / 2 + i, j) = -u * minus[0][i] * r[j];
      }
    net.layers.push_back(std::move(w1));
  }
  const double s2 = std::sqrt(2.0);
  for (std::size_t l = 1; l < hidden.size(); ++l) {
    Matrix w(hidden[l], hidden[l - 1]);
    const std::size_t hp = hidden[l] / 2, cp = hidden[l - 1] / 2;
    for (std::size_t i = 0; i < hp; ++i)
      for (std::size_t j = 0; j < cp; ++j) {
        w(i, j) = u * s2 * plus[l][i] * plus[l - 1][j];
        w(hp + i, cp + j) = u * s2 * minus[l][i] * minus[l - 1][j];
      }
    net.layers.push_back(std::move(w));
  }
  {
    const std::size_t hl = hidden.back();
    Matrix wl(1, hl);
    for (std::size_t i = 0; i < hl / 2; ++i) {
      wl(0, i) = u * plus.back()[i];
      wl(0, hl / 2 + i) = -u * minus.back()[i];
    }
    net.layers.push_back(std::move(wl));
  }
  net.validate();
  return net;
}

void save_json(const NetworkParams& net, const std::string& path) {
  nlohmann::json j;
  j["alpha"] = net.alpha;
  j["layers"] = nlohmann::json::array();
  for (const auto& w : net.layers) {
    j["layers"].push_back({{"rows", w.rows()},
                           {"cols", w.cols()},
                           {"data", std::vector<double>(w.data(), w.data() + w.size())}});
  }
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(2) << "\n";
}

NetworkParams load_json(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot read " + path);
  nlohmann::json j;
  f >> j;
  NetworkParams net;
  net.alpha = j.at("alpha").get<double>();
  for (const auto& lj : j.at("layers")) {
    net.layers.emplace_back(lj.at("rows").get<std::size_t>(), lj.at("cols").get<std::size_t>(),
                            lj.at("data").get<std::vector<double>>());
  }
  net.validate();
  return net;
}

}  // namespace lab::model
