#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mpg/rng.hpp"
#include "mpg/tensor.hpp"

namespace mpg {

struct DimensionError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class OutputSquash { kLinear, kTanhBounded };

/// Fully connected input -> hidden -> hidden -> output network with ELU
/// hidden activations. Policies squash the output through tanh scaled to the
/// per-dimension action bounds; critics leave it linear. An optional fixed
/// per-feature input scale is folded into the function.
class Mlp {
 public:
  Mlp() = default;

  Mlp(int in, int hidden, int out, OutputSquash squash,
      Eigen::RowVectorXd bounds = {}, Eigen::RowVectorXd input_scale = {})
      : in_(in), hidden_(hidden), out_(out), squash_(squash),
        bounds_(std::move(bounds)), input_scale_(std::move(input_scale)) {
    if (squash_ == OutputSquash::kTanhBounded && bounds_.size() != out_) {
      throw DimensionError("Mlp: tanh squash needs one bound per output");
    }
    if (input_scale_.size() != 0 && input_scale_.size() != in_) {
      throw DimensionError("Mlp: input scale width mismatch");
    }
    layers_.resize(6);
    layers_[0] = Mat::Zero(in_, hidden_);
    layers_[1] = Mat::Zero(1, hidden_);
    layers_[2] = Mat::Zero(hidden_, hidden_);
    layers_[3] = Mat::Zero(1, hidden_);
    layers_[4] = Mat::Zero(hidden_, out_);
    layers_[5] = Mat::Zero(1, out_);
  }

  static Mlp policy(int obs_dim, int hidden, Eigen::RowVectorXd bounds,
                    Eigen::RowVectorXd input_scale = {}) {
    int act_dim = static_cast<int>(bounds.size());
    return Mlp(obs_dim, hidden, act_dim, OutputSquash::kTanhBounded,
               std::move(bounds), std::move(input_scale));
  }

  static Mlp critic(int obs_dim, int act_dim, int hidden,
                    Eigen::RowVectorXd obs_scale = {}) {
    Eigen::RowVectorXd scale;
    if (obs_scale.size() != 0) {
      scale = Eigen::RowVectorXd::Ones(obs_dim + act_dim);
      scale.head(obs_dim) = obs_scale;
    }
    return Mlp(obs_dim + act_dim, hidden, 1, OutputSquash::kLinear, {},
               std::move(scale));
  }

  void init(std::mt19937_64& rng) {
    glorot(layers_[0], rng);
    glorot(layers_[2], rng);
    glorot(layers_[4], rng);
    layers_[1].setZero();
    layers_[3].setZero();
    layers_[5].setZero();
  }

  int in_dim() const { return in_; }
  int out_dim() const { return out_; }
  int hidden_dim() const { return hidden_; }
  OutputSquash squash() const { return squash_; }
  const Eigen::RowVectorXd& bounds() const { return bounds_; }

  std::vector<Mat>& layers() { return layers_; }
  const std::vector<Mat>& layers() const { return layers_; }

  long param_count() const {
    long n = 0;
    for (const auto& l : layers_) n += l.size();
    return n;
  }

  /// Per-tape binding of the trainable parameters. All applications through
  /// the same binding accumulate into one gradient per layer.
  struct Bound {
    std::vector<Tensor> layer;
  };

  Bound bind(Tape& tape) const {
    Bound b;
    b.layer.reserve(layers_.size());
    for (const auto& l : layers_) b.layer.push_back(tape.leaf(borrow(l)));
    return b;
  }

  std::vector<Mat> grads(const Tape& tape, const Bound& b) const {
    std::vector<Mat> g;
    g.reserve(b.layer.size());
    for (const auto& t : b.layer) g.push_back(tape.grad(t));
    return g;
  }

  /// Recorded application: gradients flow to both parameters and input.
  Tensor apply(Tape& tape, const Bound& p, const Tensor& x) const {
    check_input(x);
    Tensor h = scaled_input(tape, x);
    h = elu(tape, add_rowvec(tape, matmul(tape, h, p.layer[0]), p.layer[1]));
    h = elu(tape, add_rowvec(tape, matmul(tape, h, p.layer[2]), p.layer[3]));
    h = add_rowvec(tape, matmul(tape, h, p.layer[4]), p.layer[5]);
    return squash(tape, h);
  }

  /// Application with the parameters held constant: gradients flow through
  /// the input only. This realizes the frozen-policy terms of the rollout
  /// losses, where later-step actions must not contribute parameter
  /// gradients while their state dependence stays alive. The network must
  /// outlive the tape (weights are borrowed, not copied).
  Tensor apply_frozen(Tape& tape, const Tensor& x) const {
    check_input(x);
    auto w = [&](int i) { return Tensor{borrow(layers_[static_cast<size_t>(i)]), -1}; };
    Tensor h = scaled_input(tape, x);
    h = elu(tape, add_rowvec(tape, matmul(tape, h, w(0)), w(1)));
    h = elu(tape, add_rowvec(tape, matmul(tape, h, w(2)), w(3)));
    h = add_rowvec(tape, matmul(tape, h, w(4)), w(5));
    return squash(tape, h);
  }

  /// Plain forward with no recording; the fast path for simulation,
  /// evaluation and target computation.
  Mat forward_plain(const Mat& x) const {
    if (x.cols() != in_) {
      std::ostringstream os;
      os << "Mlp::forward_plain: input has " << x.cols() << " features, layer "
         << "0 expects " << in_;
      throw DimensionError(os.str());
    }
    Mat h = x;
    if (input_scale_.size() != 0)
      h = h.array().rowwise() * input_scale_.array();
    Mat z1 = (h * layers_[0]).rowwise() + layers_[1].row(0);
    Mat a1 = elu_forward(z1);
    Mat z2 = (a1 * layers_[2]).rowwise() + layers_[3].row(0);
    Mat a2 = elu_forward(z2);
    Mat y = (a2 * layers_[4]).rowwise() + layers_[5].row(0);
    if (squash_ == OutputSquash::kTanhBounded) {
      y = y.unaryExpr([](double v) { return std::tanh(v); });
      y = y.array().rowwise() * bounds_.array();
    }
    return y;
  }

 private:
  void check_input(const Tensor& x) const {
    if (x.cols() != in_) {
      std::ostringstream os;
      os << "Mlp::apply: input has " << x.cols() << " features, layer 0 "
         << "expects " << in_ << " (input [" << x.rows() << "x" << x.cols()
         << "], W0 [" << in_ << "x" << hidden_ << "])";
      throw DimensionError(os.str());
    }
  }

  Tensor scaled_input(Tape& tape, const Tensor& x) const {
    if (input_scale_.size() == 0) return x;
    return mul_rowvec(tape, x, constant(Mat(input_scale_)));
  }

  Tensor squash(Tape& tape, const Tensor& y) const {
    if (squash_ == OutputSquash::kLinear) return y;
    return mul_rowvec(tape, tanh_op(tape, y), constant(Mat(bounds_)));
  }

  void glorot(Mat& w, std::mt19937_64& rng) {
    double lim = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i)
        w(i, j) = uniform(rng, -lim, lim);
  }

  int in_ = 0, hidden_ = 0, out_ = 0;
  OutputSquash squash_ = OutputSquash::kLinear;
  Eigen::RowVectorXd bounds_;
  Eigen::RowVectorXd input_scale_;
  std::vector<Mat> layers_;
};

// Flatten helpers shared by the optimizer messages and the checkpoint format:
// layers in order, each matrix in column-major element order.
inline Eigen::VectorXd flatten(const std::vector<Mat>& layers) {
  long n = 0;
  for (const auto& l : layers) n += l.size();
  Eigen::VectorXd v(n);
  long off = 0;
  for (const auto& l : layers) {
    v.segment(off, l.size()) = Eigen::Map<const Eigen::VectorXd>(l.data(), l.size());
    off += l.size();
  }
  return v;
}

inline void unflatten(const Eigen::VectorXd& v, std::vector<Mat>& layers) {
  long off = 0;
  for (auto& l : layers) {
    if (off + l.size() > v.size())
      throw DimensionError("unflatten: vector too short for layer shapes");
    Eigen::Map<Eigen::VectorXd>(l.data(), l.size()) = v.segment(off, l.size());
    off += l.size();
  }
  if (off != v.size())
    throw DimensionError("unflatten: vector length does not match layers");
}

}  // namespace mpg
