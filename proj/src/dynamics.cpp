#include "lab/dynamics.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <stdexcept>

namespace lab::dyn {

using numkit::Matrix;

void TrainConfig::validate() const {
  if (!(eta > 0.0)) throw std::invalid_argument("TrainConfig: eta must be positive");
  if (steps < 1) throw std::invalid_argument("TrainConfig: steps must be >= 1");
  if (l2_raw < 0.0) throw std::invalid_argument("TrainConfig: negative l2");
}

const std::vector<double>& Trajectory::monitor(const std::string& name) const {
  auto it = monitors.find(name);
  if (it == monitors.end()) throw std::out_of_range("no monitor named " + name);
  return it->second;
}

namespace {

// C += A * B, vectorized over the columns of B.
void gemm_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  for (std::size_t i = 0; i < m; ++i) {
    double* __restrict ci = c.row_ptr(i);
    const double* ai = a.row_ptr(i);
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ai[p];
      const double* __restrict bp = b.row_ptr(p);
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A^T * B.
void gemm_at_b_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t r = a.rows(), m = a.cols(), n = b.cols();
  for (std::size_t p = 0; p < r; ++p) {
    const double* ap = a.row_ptr(p);
    const double* __restrict bp = b.row_ptr(p);
    for (std::size_t i = 0; i < m; ++i) {
      const double aip = ap[i];
      double* __restrict ci = c.row_ptr(i);
#pragma omp simd
      for (std::size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
    }
  }
}

// C += A * B^T.
void gemm_a_bt_acc(const Matrix& a, const Matrix& b, Matrix& c) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  for (std::size_t i = 0; i < m; ++i) {
    const double* __restrict ai = a.row_ptr(i);
    double* ci = c.row_ptr(i);
    for (std::size_t j = 0; j < n; ++j) {
      const double* __restrict bj = b.row_ptr(j);
      double acc = 0.0;
#pragma omp simd reduction(+ : acc)
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

double sample_scale(Reduction red, std::size_t p) {
  return red == Reduction::kMean ? 1.0 / static_cast<double>(p) : 1.0;
}

// Force coefficient per sample: -dL/df scaled by the reduction weight, and
// the per-sample loss contribution.
inline void loss_and_coeff(Loss loss, double y, double f, double scale, double& loss_acc,
                           double& em) {
  if (loss == Loss::kSquare) {
    const double r = y - f;
    loss_acc += 0.5 * r * r;
    em = scale * r;
  } else {
    const double m = y * f;
    loss_acc += m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
    em = scale * y / (1.0 + std::exp(m));
  }
}

// Per-sample pipeline for two-layer nets, vectorized over hidden units.
class TwoLayerStepper final : public Stepper {
 public:
  TwoLayerStepper(NetworkParams net, const Dataset& data, const TrainConfig& cfg)
      : cfg_(cfg),
        alpha_(net.alpha),
        h_(net.layers[0].rows()),
        d_(net.layers[0].cols()),
        p_(data.num_samples()),
        x_(data.inputs.entries().begin(), data.inputs.entries().end()),
        y_(data.targets),
        w1t_(d_ * h_),
        w2_(net.layers[1].data(), net.layers[1].data() + h_),
        hrow_(h_),
        f1t_(d_ * h_),
        f2_(h_) {
    net.validate();
    if (data.dim() != d_) throw numkit::ShapeError("train: dataset/network dim mismatch");
    const Matrix& w1 = net.layers[0];
    for (std::size_t i = 0; i < h_; ++i)
      for (std::size_t j = 0; j < d_; ++j) w1t_[j * h_ + i] = w1(i, j);
    scale_ = sample_scale(cfg.reduction, p_);
    lambda_ = 0.5 * (alpha_ + 1.0) * cfg.l2_raw;
  }

  double step() override {
    const double alpha = alpha_, oma = 1.0 - alpha_;
    double* __restrict h = hrow_.data();
    double* __restrict f1 = f1t_.data();
    double* __restrict f2 = f2_.data();
    const double* __restrict w1 = w1t_.data();
    const double* __restrict w2 = w2_.data();
    const std::size_t H = h_;
    std::memset(f1, 0, sizeof(double) * f1t_.size());
    std::memset(f2, 0, sizeof(double) * f2_.size());
    double loss = 0.0;
    for (std::size_t m = 0; m < p_; ++m) {
      const double* x = &x_[m * d_];
      {
        const double x0 = x[0];
#pragma omp simd
        for (std::size_t i = 0; i < H; ++i) h[i] = x0 * w1[i];
      }
      for (std::size_t dd = 1; dd < d_; ++dd) {
        const double xd = x[dd];
        const double* __restrict w = w1 + dd * H;
#pragma omp simd
        for (std::size_t i = 0; i < H; ++i) h[i] += xd * w[i];
      }
      double f = 0.0;
#pragma omp simd reduction(+ : f)
      for (std::size_t i = 0; i < H; ++i) {
        const double hi = h[i];
        f += w2[i] * (alpha * hi + oma * (hi > 0 ? hi : 0.0));
      }
      double em;
      loss_and_coeff(cfg_.loss, y_[m], f, scale_, loss, em);
#pragma omp simd
      for (std::size_t i = 0; i < H; ++i) {
        const double hi = h[i];
        f2[i] += em * (alpha * hi + oma * (hi > 0 ? hi : 0.0));
      }
#pragma omp simd
      for (std::size_t i = 0; i < H; ++i) {
        h[i] = (alpha + oma * (h[i] > 0 ? 1.0 : 0.0)) * w2[i] * em;
      }
      for (std::size_t dd = 0; dd < d_; ++dd) {
        const double xd = x[dd];
        double* __restrict fw = f1 + dd * H;
#pragma omp simd
        for (std::size_t i = 0; i < H; ++i) fw[i] += xd * h[i];
      }
    }
    loss *= cfg_.reduction == Reduction::kMean ? 1.0 / static_cast<double>(p_) : 1.0;
    if (lambda_ > 0.0) {
      for (std::size_t k = 0; k < w1t_.size(); ++k) f1[k] -= lambda_ * w1t_[k];
      for (std::size_t i = 0; i < H; ++i) f2[i] -= lambda_ * w2_[i];
    }
    const double eta = cfg_.eta;
    for (std::size_t k = 0; k < w1t_.size(); ++k) w1t_[k] += eta * f1[k];
    for (std::size_t i = 0; i < H; ++i) w2_[i] += eta * f2[i];
    return loss;
  }

  double current_loss() const override {
    double loss = 0.0;
    std::vector<double> h(h_);
    const double alpha = alpha_, oma = 1.0 - alpha_;
    for (std::size_t m = 0; m < p_; ++m) {
      const double* x = &x_[m * d_];
      for (std::size_t i = 0; i < h_; ++i) h[i] = 0.0;
      for (std::size_t dd = 0; dd < d_; ++dd) {
        const double xd = x[dd];
        const double* w = &w1t_[dd * h_];
        for (std::size_t i = 0; i < h_; ++i) h[i] += xd * w[i];
      }
      double f = 0.0;
      for (std::size_t i = 0; i < h_; ++i) {
        const double hi = h[i];
        f += w2_[i] * (alpha * hi + oma * (hi > 0 ? hi : 0.0));
      }
      double em_unused;
      loss_and_coeff(cfg_.loss, y_[m], f, scale_, loss, em_unused);
    }
    return loss * (cfg_.reduction == Reduction::kMean ? 1.0 / static_cast<double>(p_) : 1.0);
  }

  NetworkParams net() const override {
    NetworkParams n;
    n.alpha = alpha_;
    Matrix w1(h_, d_);
    for (std::size_t i = 0; i < h_; ++i)
      for (std::size_t j = 0; j < d_; ++j) w1(i, j) = w1t_[j * h_ + i];
    n.layers.push_back(std::move(w1));
    n.layers.push_back(Matrix::row(w2_));
    return n;
  }

  std::vector<double> layer_norms() const override {
    double s1 = 0.0, s2 = 0.0;
    for (double v : w1t_) s1 += v * v;
    for (double v : w2_) s2 += v * v;
    return {std::sqrt(s1), std::sqrt(s2)};
  }

  std::vector<double> linear_map() const override {
    std::vector<double> map(d_, 0.0);
    for (std::size_t dd = 0; dd < d_; ++dd) {
      const double* w = &w1t_[dd * h_];
      double acc = 0.0;
      for (std::size_t i = 0; i < h_; ++i) acc += w2_[i] * w[i];
      map[dd] = acc;
    }
    return map;
  }

 private:
  TrainConfig cfg_;
  double alpha_;
  std::size_t h_, d_, p_;
  std::vector<double> x_, y_;
  std::vector<double> w1t_, w2_;          // W1 transposed (D x H), W2 (H)
  mutable std::vector<double> hrow_;
  std::vector<double> f1t_, f2_;          // forces
  double scale_ = 1.0, lambda_ = 0.0;
};

// Batched layer pipeline for arbitrary depth.
class DeepStepper final : public Stepper {
 public:
  DeepStepper(NetworkParams net, const Dataset& data, const TrainConfig& cfg)
      : cfg_(cfg), net_(std::move(net)), p_(data.num_samples()), y_(data.targets) {
    net_.validate();
    if (data.dim() != net_.input_dim()) throw numkit::ShapeError("train: dim mismatch");
    xt_ = data.inputs.transposed();
    const std::size_t depth = net_.depth();
    for (std::size_t l = 0; l < depth; ++l) {
      preact_.emplace_back(net_.layers[l].rows(), p_);
      act_.emplace_back(net_.layers[l].rows(), p_);
      delta_.emplace_back(net_.layers[l].rows(), p_);
      force_.emplace_back(net_.layers[l].rows(), net_.layers[l].cols());
    }
    scale_ = sample_scale(cfg.reduction, p_);
    lambda_ = 0.5 * (net_.alpha + 1.0) * cfg.l2_raw;
  }

  double step() override {
    const std::size_t depth = net_.depth();
    const double alpha = net_.alpha, oma = 1.0 - alpha;

    forward_batch();
    double loss = 0.0;
    Matrix& dl = delta_[depth - 1];
    const double* f = preact_[depth - 1].row_ptr(0);
    for (std::size_t m = 0; m < p_; ++m) {
      double em;
      loss_and_coeff(cfg_.loss, y_[m], f[m], scale_, loss, em);
      dl(0, m) = em;
    }
    loss *= cfg_.reduction == Reduction::kMean ? 1.0 / static_cast<double>(p_) : 1.0;

    for (std::size_t l = depth - 1; l-- > 0;) {
      Matrix& d = delta_[l];
      std::memset(d.data(), 0, sizeof(double) * d.size());
      gemm_at_b_acc(net_.layers[l + 1], delta_[l + 1], d);
      const Matrix& h = preact_[l];
      for (std::size_t i = 0; i < d.rows(); ++i) {
        double* __restrict dr = d.row_ptr(i);
        const double* __restrict hr = h.row_ptr(i);
#pragma omp simd
        for (std::size_t m = 0; m < p_; ++m) {
          dr[m] *= alpha + oma * (hr[m] > 0 ? 1.0 : 0.0);
        }
      }
    }
    for (std::size_t l = 0; l < depth; ++l) {
      Matrix& g = force_[l];
      std::memset(g.data(), 0, sizeof(double) * g.size());
      gemm_a_bt_acc(delta_[l], l == 0 ? xt_ : act_[l - 1], g);
      Matrix& w = net_.layers[l];
      const double eta = cfg_.eta, lam = lambda_;
      for (std::size_t k = 0; k < w.size(); ++k) {
        w.data()[k] += eta * (g.data()[k] - lam * w.data()[k]);
      }
    }
    return loss;
  }

  double current_loss() const override {
    const_cast<DeepStepper*>(this)->forward_batch();
    double loss = 0.0;
    const double* f = preact_[net_.depth() - 1].row_ptr(0);
    for (std::size_t m = 0; m < p_; ++m) {
      double em;
      loss_and_coeff(cfg_.loss, y_[m], f[m], scale_, loss, em);
    }
    return loss * (cfg_.reduction == Reduction::kMean ? 1.0 / static_cast<double>(p_) : 1.0);
  }

  NetworkParams net() const override { return net_; }

  std::vector<double> layer_norms() const override {
    std::vector<double> norms;
    for (const auto& w : net_.layers) norms.push_back(w.frobenius_norm());
    return norms;
  }

  std::vector<double> linear_map() const override { return model::layer_product(net_); }

 private:
  void forward_batch() {
    const std::size_t depth = net_.depth();
    const double alpha = net_.alpha, oma = 1.0 - alpha;
    for (std::size_t l = 0; l < depth; ++l) {
      Matrix& h = preact_[l];
      std::memset(h.data(), 0, sizeof(double) * h.size());
      gemm_acc(net_.layers[l], l == 0 ? xt_ : act_[l - 1], h);
      if (l + 1 < depth) {
        Matrix& a = act_[l];
        const double* __restrict hp = h.data();
        double* __restrict ap = a.data();
#pragma omp simd
        for (std::size_t k = 0; k < h.size(); ++k) {
          const double v = hp[k];
          ap[k] = alpha * v + oma * (v > 0 ? v : 0.0);
        }
      }
    }
  }

  TrainConfig cfg_;
  NetworkParams net_;
  std::size_t p_;
  std::vector<double> y_;
  Matrix xt_;
  std::vector<Matrix> preact_, act_, delta_, force_;
  double scale_ = 1.0, lambda_ = 0.0;
};

// Loss of the linear map w (1 x D) from second moments:
// <(y - w x)^2>/2 = (<y^2> - 2 w beta + w Sigma w^T) / 2.
double stats_loss(const DataStats& st, const std::vector<double>& map) {
  const std::size_t d = map.size();
  double quad = 0.0, lin = 0.0;
  for (std::size_t i = 0; i < d; ++i) {
    lin += map[i] * st.beta[i];
    const double* srow = st.sigma.row_ptr(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += srow[j] * map[j];
    quad += map[i] * acc;
  }
  return 0.5 * (st.y_squared - 2.0 * lin + quad);
}

// Common base for the statistics-driven two-layer flows; the leaky
// coefficient c distinguishes the linear case (c = 1) from the reduced
// leaky-ReLU case (c = (alpha+1)/2).
class StatsTwoLayerStepper final : public Stepper {
 public:
  StatsTwoLayerStepper(NetworkParams net2, const DataStats& stats, const TrainConfig& cfg,
                       double coeff, double lambda)
      : cfg_(cfg), stats_(stats), net_(std::move(net2)), c_(coeff), lambda_(lambda) {
    net_.validate();
    if (net_.depth() != 2) throw numkit::ShapeError("two-layer flow needs a 2-layer net");
    if (net_.input_dim() != stats_.beta.size()) throw numkit::ShapeError("stats dim mismatch");
  }

  double step() override {
    const Matrix& w1 = net_.layers[0];
    const Matrix& w2 = net_.layers[1];
    const std::size_t h = w1.rows(), d = w1.cols();

    std::vector<double> map(d, 0.0);  // W2 W1
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < h; ++i) acc += w2(0, i) * w1(i, j);
      map[j] = acc;
    }
    const double loss = stats_loss_scaled(map);

    std::vector<double> e(d);  // beta^T - c * W2 W1 Sigma
    for (std::size_t j = 0; j < d; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < d; ++i) acc += map[i] * stats_.sigma(i, j);
      e[j] = stats_.beta[j] - c_ * acc;
    }

    // tau W1' = c W2^T e - lambda W1 ; tau W2' = c e W1^T - lambda W2
    Matrix f1(h, d);
    std::vector<double> f2(h);
    for (std::size_t i = 0; i < h; ++i) {
      const double w2i = w2(0, i);
      double* f1r = f1.row_ptr(i);
      const double* w1r = w1.row_ptr(i);
      double acc = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        f1r[j] = c_ * w2i * e[j] - lambda_ * w1r[j];
        acc += e[j] * w1r[j];
      }
      f2[i] = c_ * acc - lambda_ * w2i;
    }
    const double eta = cfg_.eta;
    Matrix& w1m = net_.layers[0];
    Matrix& w2m = net_.layers[1];
    for (std::size_t k = 0; k < w1m.size(); ++k) w1m.data()[k] += eta * f1.data()[k];
    for (std::size_t i = 0; i < h; ++i) w2m(0, i) += eta * f2[i];
    return loss;
  }

  double current_loss() const override {
    std::vector<double> map = raw_map();
    return stats_loss_scaled(map);
  }

  NetworkParams net() const override { return net_; }

  std::vector<double> layer_norms() const override {
    return {net_.layers[0].frobenius_norm(), net_.layers[1].frobenius_norm()};
  }

  std::vector<double> linear_map() const override { return raw_map(); }

 private:
  std::vector<double> raw_map() const {
    const Matrix& w1 = net_.layers[0];
    const Matrix& w2 = net_.layers[1];
    std::vector<double> map(w1.cols(), 0.0);
    for (std::size_t j = 0; j < w1.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < w1.rows(); ++i) acc += w2(0, i) * w1(i, j);
      map[j] = acc;
    }
    return map;
  }

  double stats_loss_scaled(const std::vector<double>& map) const {
    std::vector<double> eff(map.size());
    for (std::size_t j = 0; j < map.size(); ++j) eff[j] = c_ * map[j];
    return stats_loss(stats_, eff);
  }

  TrainConfig cfg_;
  DataStats stats_;
  NetworkParams net_;
  double c_, lambda_;
};

// Deep flows driven by layer products. The block form splits every hidden
// boundary into a +/- class; each half space contributes through products
// masked by its active class (weight sigma' on the inactive class equals
// the leaky slope). mask_alpha = 1 collapses the masks and recovers the
// plain deep linear flow.
class StatsDeepStepper final : public Stepper {
 public:
  StatsDeepStepper(NetworkParams net, const DataStats& stats, const TrainConfig& cfg,
                   double mask_alpha)
      : cfg_(cfg), stats_(stats), net_(std::move(net)), mask_alpha_(mask_alpha) {
    net_.validate();
    if (net_.depth() < 2) throw numkit::ShapeError("deep flow needs depth >= 2");
    if (net_.input_dim() != stats_.beta.size()) throw numkit::ShapeError("stats dim mismatch");
    lambda_ = 0.5 * (net_.alpha + 1.0) * cfg.l2_raw;

    // Sign classes per hidden boundary, fixed for the whole run: the last
    // boundary reads them from W_L, the rest propagate down the blocks.
    const std::size_t depth = net_.depth();
    classes_.resize(depth - 1);
    const Matrix& wl = net_.layers[depth - 1];
    classes_[depth - 2].resize(wl.cols());
    for (std::size_t j = 0; j < wl.cols(); ++j) classes_[depth - 2][j] = wl(0, j) >= 0 ? 1 : -1;
    for (std::size_t l = depth - 2; l-- > 0;) {
      const Matrix& w = net_.layers[l + 1];
      classes_[l].resize(w.cols());
      for (std::size_t j = 0; j < w.cols(); ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < w.rows(); ++i) {
          acc += static_cast<double>(classes_[l + 1][i]) * w(i, j);
        }
        classes_[l][j] = acc >= 0 ? 1 : -1;
      }
    }
  }

  double step() override {
    const std::size_t depth = net_.depth();
    const std::size_t d = net_.input_dim();

    // Masked prefixes P[s][l] = D_l W_l ... D_1 W_1 and suffixes
    // S[s][l] = W_L D_{L-1} ... W_{l+1} D_l for both classes s.
    std::array<std::vector<Matrix>, 2> prefix, suffix;
    std::array<std::vector<double>, 2> amap;
    for (int s = 0; s < 2; ++s) {
      prefix[s].resize(depth);
      prefix[s][0] = masked_rows(net_.layers[0], 0, s);
      for (std::size_t l = 1; l + 1 < depth; ++l) {
        prefix[s][l] = masked_rows(numkit::matmul(net_.layers[l], prefix[s][l - 1]), l, s);
      }
      Matrix full = depth >= 2 ? numkit::matmul(net_.layers[depth - 1], prefix[s][depth - 2])
                               : Matrix();
      amap[s].assign(full.data(), full.data() + d);

      suffix[s].resize(depth + 1);
      suffix[s][depth] = Matrix::identity(1);
      for (std::size_t l = depth; l-- > 1;) {
        Matrix sw = numkit::matmul(suffix[s][l + 1], net_.layers[l]);  // 1 x n_{l-1}
        suffix[s][l] = masked_cols(sw, l - 1, s);
      }
    }

    std::vector<double> map(d);
    for (std::size_t j = 0; j < d; ++j) map[j] = 0.5 * (amap[0][j] + amap[1][j]);
    const double loss = stats_loss(stats_, map);

    std::array<std::vector<double>, 2> err;
    for (int s = 0; s < 2; ++s) {
      err[s].resize(d);
      for (std::size_t j = 0; j < d; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) acc += amap[s][i] * stats_.sigma(i, j);
        err[s][j] = stats_.beta[j] - acc;
      }
    }

    const double eta = cfg_.eta;
    for (std::size_t l = 0; l < depth; ++l) {
      Matrix force(net_.layers[l].rows(), net_.layers[l].cols());
      for (int s = 0; s < 2; ++s) {
        const Matrix& sfx = suffix[s][l + 1];  // 1 x n_l
        const Matrix erow = Matrix::row(err[s]);
        Matrix le = numkit::matmul(sfx.transposed(), erow);  // n_l x D
        Matrix part = l == 0 ? std::move(le) : numkit::matmul(le, prefix[s][l - 1].transposed());
        part *= 0.5;
        force += part;
      }
      Matrix& w = net_.layers[l];
      for (std::size_t k = 0; k < w.size(); ++k) {
        w.data()[k] += eta * (force.data()[k] - lambda_ * w.data()[k]);
      }
    }
    return loss;
  }

  double current_loss() const override { return stats_loss(stats_, effective_map()); }

  NetworkParams net() const override { return net_; }

  std::vector<double> layer_norms() const override {
    std::vector<double> norms;
    for (const auto& w : net_.layers) norms.push_back(w.frobenius_norm());
    return norms;
  }

  std::vector<double> linear_map() const override { return effective_map(); }

 private:
  // Scale rows (boundary l row classes) by 1 on class s, mask_alpha off it.
  Matrix masked_rows(Matrix m, std::size_t boundary, int s) const {
    const int want = s == 0 ? 1 : -1;
    for (std::size_t i = 0; i < m.rows(); ++i) {
      if (classes_[boundary][i] != want) {
        double* r = m.row_ptr(i);
        for (std::size_t j = 0; j < m.cols(); ++j) r[j] *= mask_alpha_;
      }
    }
    return m;
  }
  Matrix masked_cols(Matrix m, std::size_t boundary, int s) const {
    const int want = s == 0 ? 1 : -1;
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (classes_[boundary][j] != want) {
        for (std::size_t i = 0; i < m.rows(); ++i) m(i, j) *= mask_alpha_;
      }
    }
    return m;
  }

  std::vector<double> effective_map() const {
    const std::size_t depth = net_.depth();
    std::vector<double> map(net_.input_dim(), 0.0);
    for (int s = 0; s < 2; ++s) {
      Matrix p = masked_rows(net_.layers[0], 0, s);
      for (std::size_t l = 1; l + 1 < depth; ++l) {
        p = masked_rows(numkit::matmul(net_.layers[l], p), l, s);
      }
      Matrix full = numkit::matmul(net_.layers[depth - 1], p);
      for (std::size_t j = 0; j < map.size(); ++j) map[j] += 0.5 * full(0, j);
    }
    return map;
  }

  TrainConfig cfg_;
  DataStats stats_;
  NetworkParams net_;
  double mask_alpha_;
  double lambda_ = 0.0;
  std::vector<std::vector<int>> classes_;
};

double map_norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double balance_drift(const NetworkParams& net) {
  const Matrix& w1 = net.layers[0];
  const Matrix& w2 = net.layers[1];
  double s = 0.0;
  for (std::size_t i = 0; i < w1.rows(); ++i) {
    for (std::size_t j = 0; j < w1.rows(); ++j) {
      double g = 0.0;
      const double* ri = w1.row_ptr(i);
      const double* rj = w1.row_ptr(j);
      for (std::size_t k = 0; k < w1.cols(); ++k) g += ri[k] * rj[k];
      g -= w2(0, i) * w2(0, j);
      s += g * g;
    }
  }
  return std::sqrt(s);
}

}  // namespace

std::unique_ptr<Stepper> make_train_stepper(NetworkParams net, const Dataset& data,
                                            const TrainConfig& cfg) {
  if (net.depth() == 2) return std::make_unique<TwoLayerStepper>(std::move(net), data, cfg);
  return std::make_unique<DeepStepper>(std::move(net), data, cfg);
}

std::unique_ptr<Stepper> make_linear_stepper(NetworkParams net2, const DataStats& stats,
                                             const TrainConfig& cfg) {
  return std::make_unique<StatsTwoLayerStepper>(std::move(net2), stats, cfg, 1.0, cfg.l2_raw);
}

std::unique_ptr<Stepper> make_reduced_two_layer_stepper(NetworkParams net2, const DataStats& stats,
                                                        const TrainConfig& cfg) {
  const double c = 0.5 * (net2.alpha + 1.0);
  return std::make_unique<StatsTwoLayerStepper>(std::move(net2), stats, cfg, c, c * cfg.l2_raw);
}

std::unique_ptr<Stepper> make_deep_linear_stepper(NetworkParams net, const DataStats& stats,
                                                  const TrainConfig& cfg) {
  return std::make_unique<StatsDeepStepper>(std::move(net), stats, cfg, 1.0);
}

std::unique_ptr<Stepper> make_deep_reduced_relu_stepper(NetworkParams net, const DataStats& stats,
                                                        const TrainConfig& cfg) {
  const double mask_alpha = net.alpha;
  return std::make_unique<StatsDeepStepper>(std::move(net), stats, cfg, mask_alpha);
}

Trajectory run(Stepper& stepper, const TrainConfig& cfg) {
  cfg.validate();
  Trajectory traj;
  traj.eta = cfg.eta;
  traj.losses.reserve(static_cast<std::size_t>(cfg.steps) + 1);

  const long record_every = std::max<long>(1, cfg.record_every);
  auto record = [&](long step) {
    traj.record_steps.push_back(step);
    traj.record_times.push_back(cfg.eta * static_cast<double>(step));
    const auto norms = stepper.layer_norms();
    for (std::size_t l = 0; l < norms.size(); ++l) {
      traj.monitors["w" + std::to_string(l + 1) + "_norm"].push_back(norms[l]);
    }
    traj.monitors["map_norm"].push_back(map_norm(stepper.linear_map()));
    if (cfg.monitor_balance && norms.size() == 2) {
      traj.monitors["balance"].push_back(balance_drift(stepper.net()));
    }
  };
  auto snapshot = [&](long step) { traj.snapshots.emplace_back(step, stepper.net()); };

  record(0);
  snapshot(0);
  traj.status = "completed";
  long step = 0;
  for (; step < cfg.steps; ++step) {
    const double loss = stepper.step();
    traj.losses.push_back(loss);
    if (!std::isfinite(loss) || loss > cfg.divergence_threshold) {
      traj.status = "diverged";
      ++step;
      break;
    }
    const long done = step + 1;
    if (done % record_every == 0 && done < cfg.steps) record(done);
    if (cfg.snapshot_every > 0 && done % cfg.snapshot_every == 0 && done < cfg.steps) {
      snapshot(done);
    }
    if (cfg.stop_rel_change > 0.0 && done % cfg.stop_window == 0 &&
        done >= 2 * cfg.stop_window) {
      const double now = traj.losses[done - 1];
      const double before = traj.losses[done - 1 - cfg.stop_window];
      const double denom = std::max(std::abs(now), 1e-300);
      if (std::abs(before - now) / denom < cfg.stop_rel_change) {
        traj.status = "converged";
        ++step;
        break;
      }
    }
  }
  traj.steps_run = step;
  if (traj.status == "completed" && cfg.stop_rel_change > 0.0) traj.status = "step_cap";
  if (traj.status != "diverged") traj.losses.push_back(stepper.current_loss());
  if (traj.record_steps.back() != step) record(step);
  if (traj.snapshots.back().first != step) snapshot(step);
  traj.final_net = stepper.net();
  return traj;
}

Trajectory train(NetworkParams net, const Dataset& data, const TrainConfig& cfg) {
  auto s = make_train_stepper(std::move(net), data, cfg);
  return run(*s, cfg);
}

Trajectory integrate_linear(NetworkParams net2, const DataStats& stats, const TrainConfig& cfg) {
  auto s = make_linear_stepper(std::move(net2), stats, cfg);
  return run(*s, cfg);
}

Trajectory integrate_reduced_two_layer(NetworkParams net2, const DataStats& stats,
                                       const TrainConfig& cfg) {
  auto s = make_reduced_two_layer_stepper(std::move(net2), stats, cfg);
  return run(*s, cfg);
}

Trajectory integrate_deep_linear(NetworkParams net, const DataStats& stats,
                                 const TrainConfig& cfg) {
  auto s = make_deep_linear_stepper(std::move(net), stats, cfg);
  return run(*s, cfg);
}

Trajectory integrate_deep_reduced_relu(NetworkParams net, const DataStats& stats,
                                       const TrainConfig& cfg) {
  auto s = make_deep_reduced_relu_stepper(std::move(net), stats, cfg);
  return run(*s, cfg);
}

ScalarSeries integrate_ortho_norm(double u0, double beta_norm, std::size_t num_samples,
                                  const TrainConfig& cfg) {
  cfg.validate();
  if (!(u0 > 0.0)) throw std::invalid_argument("integrate_ortho_norm: u0 must be positive");
  ScalarSeries out;
  out.times.reserve(cfg.steps + 1);
  out.values.reserve(cfg.steps + 1);
  double u = u0;
  const double inv_p = 1.0 / static_cast<double>(num_samples);
  for (long k = 0; k <= cfg.steps; ++k) {
    out.times.push_back(cfg.eta * static_cast<double>(k));
    out.values.push_back(u);
    u += cfg.eta * u * (beta_norm - u * u * inv_p);
  }
  return out;
}

NormBoundReport monitor_norm_bound(const Trajectory& traj, const DataStats& stats, double u0,
                                   double growth_rate_override) {
  NormBoundReport rep;
  const double rate =
      growth_rate_override > 0.0 ? growth_rate_override : stats.s + stats.trace_sigma;
  rep.window_end = std::log(1.0 / u0) / rate;
  const auto& n1 = traj.monitor("w1_norm");
  const auto& n2 = traj.monitor("w2_norm");
  for (std::size_t k = 0; k < traj.record_times.size(); ++k) {
    const double t = traj.record_times[k];
    if (t >= rep.window_end) break;
    const double observed = std::max(n1[k], n2[k]);
    const double bound = u0 * std::exp(rate * t);
    rep.times.push_back(t);
    rep.observed.push_back(observed);
    rep.bound.push_back(bound);
    if (observed > bound * (1.0 + 1e-12)) rep.all_hold = false;
  }
  return rep;
}

}  // namespace lab::dyn
