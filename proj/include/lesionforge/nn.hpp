#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "lesionforge/error.hpp"
#include "lesionforge/rng.hpp"

// Minimal dense NN toolkit on Eigen, templated on scalar so training runs in
// float while gradient checks instantiate the exact same code in double.
// Feature maps are (channels x H*W) matrices with row-major spatial indexing.
// Every layer keeps a LIFO stack of forward caches: a chain may route through
// the same (weight-shared) module several times, and backward pops caches in
// exact reverse order.
namespace lesionforge::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;

struct Shape {
  int c = 0;
  int h = 0;
  int w = 0;
  int count() const { return c * h * w; }
  bool operator==(const Shape&) const = default;
};

template <typename S>
struct Param {
  Mat<S> value;
  Mat<S> grad;
  bool decay = false;  // participates in decoupled weight decay
  std::string name;

  void init_zero(Eigen::Index rows, Eigen::Index cols) {
    value = Mat<S>::Zero(rows, cols);
    grad = Mat<S>::Zero(rows, cols);
  }
};

// --- im2col / col2im --------------------------------------------------------

struct ConvGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int k = 3, stride = 1, pad = 1, dilation = 1;

  int out_h() const { return (in_h + 2 * pad - dilation * (k - 1) - 1) / stride + 1; }
  int out_w() const { return (in_w + 2 * pad - dilation * (k - 1) - 1) / stride + 1; }
};

template <typename S>
Mat<S> im2col(const Mat<S>& x, const ConvGeom& g) {
  const int oh = g.out_h(), ow = g.out_w();
  Mat<S> cols = Mat<S>::Zero(static_cast<Eigen::Index>(g.in_c) * g.k * g.k,
                             static_cast<Eigen::Index>(oh) * ow);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky * g.dilation;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx * g.dilation;
          if (ix < 0 || ix >= g.in_w) continue;
          const Eigen::Index spatial = static_cast<Eigen::Index>(iy) * g.in_w + ix;
          const Eigen::Index row0 = static_cast<Eigen::Index>(ky) * g.k + kx;
          for (int c = 0; c < g.in_c; ++c) {
            cols(static_cast<Eigen::Index>(c) * g.k * g.k + row0, col) = x(c, spatial);
          }
        }
      }
    }
  }
  return cols;
}

// Adjoint of im2col: scatter-adds column entries back into input layout.
template <typename S>
Mat<S> col2im(const Mat<S>& cols, const ConvGeom& g) {
  const int oh = g.out_h(), ow = g.out_w();
  Mat<S> x = Mat<S>::Zero(g.in_c, static_cast<Eigen::Index>(g.in_h) * g.in_w);
  for (int oy = 0; oy < oh; ++oy) {
    for (int ox = 0; ox < ow; ++ox) {
      const Eigen::Index col = static_cast<Eigen::Index>(oy) * ow + ox;
      for (int ky = 0; ky < g.k; ++ky) {
        const int iy = oy * g.stride - g.pad + ky * g.dilation;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          const int ix = ox * g.stride - g.pad + kx * g.dilation;
          if (ix < 0 || ix >= g.in_w) continue;
          const Eigen::Index spatial = static_cast<Eigen::Index>(iy) * g.in_w + ix;
          const Eigen::Index row0 = static_cast<Eigen::Index>(ky) * g.k + kx;
          for (int c = 0; c < g.in_c; ++c) {
            x(c, spatial) += cols(static_cast<Eigen::Index>(c) * g.k * g.k + row0, col);
          }
        }
      }
    }
  }
  return x;
}

// --- layers ------------------------------------------------------------------

template <typename S>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Shape out_shape() const = 0;
  virtual Mat<S> forward(const Mat<S>& x, bool cache) = 0;
  virtual Mat<S> backward(const Mat<S>& dy) = 0;
  virtual void collect_params(std::vector<Param<S>*>& out) {}

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    collect_params(out);
    return out;
  }
};

template <typename S>
class Conv2d : public Layer<S> {
 public:
  Conv2d(Shape in, int out_c, int k, int stride, int pad, int dilation, std::string name)
      : in_(in), out_c_(out_c) {
    geom_ = ConvGeom{in.h, in.w, in.c, k, stride, pad, dilation};
    weight_.init_zero(out_c, static_cast<Eigen::Index>(in.c) * k * k);
    weight_.decay = true;
    weight_.name = name + ".w";
    bias_.init_zero(out_c, 1);
    bias_.name = name + ".b";
  }

  void init_he(Rng& rng, double gain = 1.0) {
    const double sd = gain * std::sqrt(2.0 / static_cast<double>(weight_.value.cols()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = static_cast<S>(rng.normal(0.0, sd));
    }
    bias_.value.setZero();
  }

  Shape out_shape() const override { return {out_c_, geom_.out_h(), geom_.out_w()}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    if (x.rows() != in_.c || x.cols() != static_cast<Eigen::Index>(in_.h) * in_.w) {
      throw DataError("Conv2d " + weight_.name + ": input shape mismatch");
    }
    Mat<S> cols = im2col(x, geom_);
    Mat<S> y = weight_.value * cols;
    y.colwise() += bias_.value.col(0);
    if (cache) cache_.push_back(std::move(cols));
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> cols = std::move(cache_.back());
    cache_.pop_back();
    weight_.grad.noalias() += dy * cols.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    return col2im(Mat<S>(weight_.value.transpose() * dy), geom_);
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Shape in_;
  int out_c_;
  ConvGeom geom_;
  Param<S> weight_, bias_;
  std::vector<Mat<S>> cache_;
};

template <typename S>
class ConvTranspose2d : public Layer<S> {
 public:
  ConvTranspose2d(Shape in, int out_c, int k, int stride, int pad, std::string name)
      : in_(in), out_c_(out_c) {
    out_h_ = (in.h - 1) * stride - 2 * pad + k;
    out_w_ = (in.w - 1) * stride - 2 * pad + k;
    // Geometry of the adjoint convolution (output plays the input role).
    geom_ = ConvGeom{out_h_, out_w_, out_c, k, stride, pad, 1};
    if (geom_.out_h() != in.h || geom_.out_w() != in.w) {
      throw DataError("ConvTranspose2d " + name + ": inconsistent geometry");
    }
    weight_.init_zero(in.c, static_cast<Eigen::Index>(out_c) * k * k);
    weight_.decay = true;
    weight_.name = name + ".w";
    bias_.init_zero(out_c, 1);
    bias_.name = name + ".b";
  }

  void init_he(Rng& rng, double gain = 1.0) {
    const double sd = gain * std::sqrt(2.0 / static_cast<double>(weight_.value.cols()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = static_cast<S>(rng.normal(0.0, sd));
    }
    bias_.value.setZero();
  }

  Shape out_shape() const override { return {out_c_, out_h_, out_w_}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    if (x.rows() != in_.c || x.cols() != static_cast<Eigen::Index>(in_.h) * in_.w) {
      throw DataError("ConvTranspose2d " + weight_.name + ": input shape mismatch");
    }
    Mat<S> y = col2im(Mat<S>(weight_.value.transpose() * x), geom_);
    y.colwise() += bias_.value.col(0);
    if (cache) cache_.push_back(x);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> x = std::move(cache_.back());
    cache_.pop_back();
    Mat<S> dcols = im2col(dy, geom_);
    weight_.grad.noalias() += x * dcols.transpose();
    bias_.grad.col(0) += dy.rowwise().sum();
    return weight_.value * dcols;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Shape in_;
  int out_c_, out_h_, out_w_;
  ConvGeom geom_;
  Param<S> weight_, bias_;
  std::vector<Mat<S>> cache_;
};

template <typename S>
class LeakyReLU : public Layer<S> {
 public:
  LeakyReLU(Shape in, double slope) : in_(in), slope_(static_cast<S>(slope)) {}

  Shape out_shape() const override { return in_; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y = x.unaryExpr([s = slope_](S v) { return v > S(0) ? v : s * v; });
    if (cache) cache_.push_back(x);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> x = std::move(cache_.back());
    cache_.pop_back();
    return dy.cwiseProduct(x.unaryExpr([s = slope_](S v) { return v > S(0) ? S(1) : s; }));
  }

 private:
  Shape in_;
  S slope_;
  std::vector<Mat<S>> cache_;
};

template <typename S>
class Tanh : public Layer<S> {
 public:
  explicit Tanh(Shape in) : in_(in) {}
  Shape out_shape() const override { return in_; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y = x.array().tanh().matrix();
    if (cache) cache_.push_back(y);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> y = std::move(cache_.back());
    cache_.pop_back();
    return dy.cwiseProduct((Mat<S>::Ones(y.rows(), y.cols()) - y.cwiseProduct(y)));
  }

 private:
  Shape in_;
  std::vector<Mat<S>> cache_;
};

template <typename S>
class Sigmoid : public Layer<S> {
 public:
  explicit Sigmoid(Shape in) : in_(in) {}
  Shape out_shape() const override { return in_; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y = x.unaryExpr([](S v) { return S(1) / (S(1) + std::exp(-v)); });
    if (cache) cache_.push_back(y);
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> y = std::move(cache_.back());
    cache_.pop_back();
    return dy.cwiseProduct(y.cwiseProduct(Mat<S>(Mat<S>::Ones(y.rows(), y.cols()) - y)));
  }

 private:
  Shape in_;
  std::vector<Mat<S>> cache_;
};

// y = x + conv2(act(conv1(x))); both convs 3x3 stride 1, channel-preserving.
template <typename S>
class ResBlock : public Layer<S> {
 public:
  ResBlock(Shape in, double slope, std::string name)
      : in_(in),
        conv1_(in, in.c, 3, 1, 1, 1, name + ".c1"),
        act_(in, slope),
        conv2_(in, in.c, 3, 1, 1, 1, name + ".c2") {}

  void init_he(Rng& rng) {
    conv1_.init_he(rng);
    conv2_.init_he(rng, 0.5);  // damped second conv keeps the block near-identity
  }

  Shape out_shape() const override { return in_; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y = conv2_.forward(act_.forward(conv1_.forward(x, cache), cache), cache);
    return x + y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    Mat<S> dx = conv1_.backward(act_.backward(conv2_.backward(dy)));
    return dx + dy;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    conv1_.collect_params(out);
    conv2_.collect_params(out);
  }

 private:
  Shape in_;
  Conv2d<S> conv1_;
  LeakyReLU<S> act_;
  Conv2d<S> conv2_;
};

template <typename S>
class GlobalAvgPool : public Layer<S> {
 public:
  explicit GlobalAvgPool(Shape in) : in_(in) {}
  Shape out_shape() const override { return {in_.c, 1, 1}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    (void)cache;
    return x.rowwise().mean();
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const S inv = S(1) / static_cast<S>(static_cast<double>(in_.h) * in_.w);
    return (dy * inv).replicate(1, static_cast<Eigen::Index>(in_.h) * in_.w);
  }

 private:
  Shape in_;
};

// Smooth interpolation between average and max pooling:
// y_c = tau * log(mean_i exp(x_ci / tau)). Early in training gradients reach
// every cell; once one cell dominates the pool behaves like max.
template <typename S>
class GlobalLsePool : public Layer<S> {
 public:
  GlobalLsePool(Shape in, double temperature) : in_(in), tau_(static_cast<S>(temperature)) {}
  Shape out_shape() const override { return {in_.c, 1, 1}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y(x.rows(), 1);
    Mat<S> softmax(x.rows(), x.cols());
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      const S max_v = x.row(c).maxCoeff();
      Eigen::Array<S, 1, Eigen::Dynamic> e = ((x.row(c).array() - max_v) / tau_).exp();
      const S sum = e.sum();
      y(c, 0) = max_v + tau_ * std::log(sum / static_cast<S>(x.cols()));
      softmax.row(c) = (e / sum).matrix();
    }
    if (cache) cache_.push_back(std::move(softmax));
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> softmax = std::move(cache_.back());
    cache_.pop_back();
    Mat<S> dx(softmax.rows(), softmax.cols());
    for (Eigen::Index c = 0; c < dx.rows(); ++c) dx.row(c) = softmax.row(c) * dy(c, 0);
    return dx;
  }

 private:
  Shape in_;
  S tau_;
  std::vector<Mat<S>> cache_;
};

template <typename S>
class GlobalMaxPool : public Layer<S> {
 public:
  explicit GlobalMaxPool(Shape in) : in_(in) {}
  Shape out_shape() const override { return {in_.c, 1, 1}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    Mat<S> y(x.rows(), 1);
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      Eigen::Index best = 0;
      y(c, 0) = x.row(c).maxCoeff(&best);
      argmax[static_cast<std::size_t>(c)] = best;
    }
    if (cache) cache_.push_back(std::move(argmax));
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const auto argmax = std::move(cache_.back());
    cache_.pop_back();
    Mat<S> dx = Mat<S>::Zero(in_.c, static_cast<Eigen::Index>(in_.h) * in_.w);
    for (Eigen::Index c = 0; c < dx.rows(); ++c) dx(c, argmax[static_cast<std::size_t>(c)]) = dy(c, 0);
    return dx;
  }

 private:
  Shape in_;
  std::vector<std::vector<Eigen::Index>> cache_;
};

template <typename S>
class Linear : public Layer<S> {
 public:
  Linear(Shape in, int out, std::string name) : in_(in), out_(out) {
    weight_.init_zero(out, in.count());
    weight_.decay = true;
    weight_.name = name + ".w";
    bias_.init_zero(out, 1);
    bias_.name = name + ".b";
  }

  void init_he(Rng& rng) {
    const double sd = std::sqrt(2.0 / static_cast<double>(weight_.value.cols()));
    for (Eigen::Index i = 0; i < weight_.value.size(); ++i) {
      weight_.value.data()[i] = static_cast<S>(rng.normal(0.0, sd));
    }
    bias_.value.setZero();
  }

  Shape out_shape() const override { return {out_, 1, 1}; }

  Mat<S> forward(const Mat<S>& x, bool cache) override {
    // Accepts (c, h*w); flattens row-major by channel.
    Eigen::Map<const Eigen::Matrix<S, Eigen::Dynamic, 1>> flat(x.data(), x.size());
    Mat<S> xv = flat;
    Mat<S> y = weight_.value * xv + bias_.value;
    if (cache) cache_.push_back(std::move(xv));
    return y;
  }

  Mat<S> backward(const Mat<S>& dy) override {
    const Mat<S> xv = std::move(cache_.back());
    cache_.pop_back();
    weight_.grad.noalias() += dy * xv.transpose();
    bias_.grad += dy;
    Mat<S> dxv = weight_.value.transpose() * dy;
    Mat<S> dx(in_.c, static_cast<Eigen::Index>(in_.h) * in_.w);
    Eigen::Map<Eigen::Matrix<S, Eigen::Dynamic, 1>>(dx.data(), dx.size()) = dxv;
    return dx;
  }

  void collect_params(std::vector<Param<S>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

 private:
  Shape in_;
  int out_;
  Param<S> weight_, bias_;
  std::vector<Mat<S>> cache_;
};

// --- container ----------------------------------------------------------------

template <typename S>
class Sequential {
 public:
  Sequential() = default;

  template <typename L, typename... Args>
  L* add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L* raw = layer.get();
    layers_.push_back(std::move(layer));
    return raw;
  }

  Shape out_shape() const { return layers_.back()->out_shape(); }

  Mat<S> forward(const Mat<S>& x, bool cache) {
    Mat<S> v = x;
    for (auto& l : layers_) v = l->forward(v, cache);
    return v;
  }

  Mat<S> backward(const Mat<S>& dy) {
    Mat<S> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<Param<S>*> params() {
    std::vector<Param<S>*> out;
    for (auto& l : layers_) l->collect_params(out);
    return out;
  }

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer<S>>> layers_;
};

// --- optimizer -----------------------------------------------------------------

template <typename S>
class Adam {
 public:
  Adam(std::vector<Param<S>*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8, double weight_decay = 0.0)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps),
        weight_decay_(weight_decay) {
    for (auto* p : params_) {
      m_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Mat<S>::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (auto* p : params_) p->grad.setZero();
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto* p = params_[i];
      m_[i] = static_cast<S>(beta1_) * m_[i] + static_cast<S>(1.0 - beta1_) * p->grad;
      v_[i] = static_cast<S>(beta2_) * v_[i] + static_cast<S>(1.0 - beta2_) * p->grad.cwiseProduct(p->grad);
      const S step_scale = static_cast<S>(lr_ / bc1);
      const S vscale = static_cast<S>(1.0 / bc2);
      p->value.array() -=
          step_scale * m_[i].array() / ((v_[i].array() * vscale).sqrt() + static_cast<S>(eps_));
      if (p->decay && weight_decay_ > 0.0) {
        p->value *= static_cast<S>(1.0 - lr_ * weight_decay_);
      }
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

 private:
  std::vector<Param<S>*> params_;
  std::vector<Mat<S>> m_, v_;
  double lr_, beta1_, beta2_, eps_, weight_decay_;
  std::int64_t t_ = 0;
};

// --- helpers -------------------------------------------------------------------

template <typename S>
std::int64_t count_params(const std::vector<Param<S>*>& params) {
  std::int64_t n = 0;
  for (const auto* p : params) n += p->value.size();
  return n;
}

template <typename S>
bool any_nonfinite(const std::vector<Param<S>*>& params) {
  for (const auto* p : params) {
    if (!p->value.allFinite()) return true;
  }
  return false;
}

}  // namespace lesionforge::nn
