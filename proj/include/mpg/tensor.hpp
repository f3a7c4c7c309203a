#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace mpg {

using Mat = Eigen::MatrixXd;

class Tape;

/// A dense 64-bit real array participating in a recorded computation.
/// `node < 0` marks a constant: it carries a value but no gradient history.
struct Tensor {
  std::shared_ptr<const Mat> value;
  int node = -1;

  const Mat& mat() const { return *value; }
  Eigen::Index rows() const { return value->rows(); }
  Eigen::Index cols() const { return value->cols(); }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  double scalar() const { return (*value)(0, 0); }
};

inline Tensor constant(Mat m) {
  return Tensor{std::make_shared<Mat>(std::move(m)), -1};
}

inline Tensor constant(double v) {
  Mat m(1, 1);
  m(0, 0) = v;
  return constant(std::move(m));
}

// Non-owning view of long-lived storage (network parameters). The referenced
// matrix must outlive every tape recorded against it.
inline std::shared_ptr<const Mat> borrow(const Mat& m) {
  return std::shared_ptr<const Mat>(std::shared_ptr<const Mat>(), &m);
}

struct TapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline void check_shape(bool ok, const char* op, const Tensor& a,
                        const Tensor& b) {
  if (ok) return;
  std::ostringstream os;
  os << op << ": shape mismatch [" << a.rows() << "x" << a.cols() << "] vs ["
     << b.rows() << "x" << b.cols() << "]";
  throw TapeError(os.str());
}

/// Single-use recording of primitive operations for one reverse sweep.
/// Nodes are stored in topological order by construction; backward visits
/// them exactly once in reverse, skipping nodes the output never reached.
class Tape {
 public:
  using BackFn = std::function<void(Tape&, const Mat& upstream)>;

  // Leaf with no parents; gradients accumulate here but nothing propagates.
  Tensor leaf(std::shared_ptr<const Mat> v) {
    Tensor t{std::move(v), static_cast<int>(nodes_.size())};
    nodes_.emplace_back();
    return t;
  }

  Tensor record(Mat value, BackFn back) {
    Tensor t{std::make_shared<Mat>(std::move(value)),
             static_cast<int>(nodes_.size())};
    nodes_.push_back(std::move(back));
    return t;
  }

  void accumulate(int node, const Mat& g) {
    if (node < 0) return;
    Mat& slot = grads_[static_cast<size_t>(node)];
    if (slot.size() == 0) {
      slot = g;
    } else {
      slot += g;
    }
  }

  void accumulate(int node, Mat&& g) {
    if (node < 0) return;
    Mat& slot = grads_[static_cast<size_t>(node)];
    if (slot.size() == 0) {
      slot = std::move(g);
    } else {
      slot += g;
    }
  }

  // Reverse sweep from a scalar output. Re-running a used tape is an error:
  // recordings are per-loss.
  void backward(const Tensor& output) {
    if (output.node < 0) {
      throw TapeError("backward: output is a constant, not on this tape");
    }
    if (output.node >= static_cast<int>(nodes_.size())) {
      throw TapeError("backward: output does not belong to this tape");
    }
    if (!output.is_scalar()) {
      throw TapeError("backward: output must be scalar");
    }
    if (used_) {
      throw TapeError("backward: tape already consumed");
    }
    used_ = true;
    grads_.assign(nodes_.size(), Mat());
    grads_[static_cast<size_t>(output.node)] = Mat::Ones(1, 1);
    for (int i = output.node; i >= 0; --i) {
      const Mat& g = grads_[static_cast<size_t>(i)];
      if (g.size() == 0) continue;
      if (nodes_[static_cast<size_t>(i)]) nodes_[static_cast<size_t>(i)](*this, g);
    }
  }

  // Gradient of the swept output w.r.t. a recorded tensor. Tensors the
  // output never reached get a zero gradient of matching shape.
  Mat grad(const Tensor& t) const {
    if (t.node < 0) throw TapeError("grad: tensor is a constant");
    if (!used_) throw TapeError("grad: backward has not run");
    const Mat& g = grads_[static_cast<size_t>(t.node)];
    if (g.size() == 0) return Mat::Zero(t.rows(), t.cols());
    return g;
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<BackFn> nodes_;
  std::vector<Mat> grads_;
  bool used_ = false;
};

/// Value-identical copy with all gradient history severed.
inline Tensor detach(const Tensor& t) { return Tensor{t.value, -1}; }

/// Alias for detach; the value path is untouched, the backward path ends.
inline Tensor stop_gradient(const Tensor& t) { return detach(t); }

// ---- primitive operations -------------------------------------------------

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "add", a, b);
  if (a.node < 0 && b.node < 0) return constant(a.mat() + b.mat());
  int pa = a.node, pb = b.node;
  return tape.record(a.mat() + b.mat(), [pa, pb](Tape& t, const Mat& g) {
    t.accumulate(pa, g);
    t.accumulate(pb, g);
  });
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "sub", a, b);
  if (a.node < 0 && b.node < 0) return constant(a.mat() - b.mat());
  int pa = a.node, pb = b.node;
  return tape.record(a.mat() - b.mat(), [pa, pb](Tape& t, const Mat& g) {
    t.accumulate(pa, g);
    if (pb >= 0) t.accumulate(pb, -g);
  });
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "mul", a, b);
  if (a.node < 0 && b.node < 0)
    return constant(a.mat().cwiseProduct(b.mat()));
  int pa = a.node, pb = b.node;
  auto av = a.value, bv = b.value;
  return tape.record(a.mat().cwiseProduct(b.mat()),
                     [pa, pb, av, bv](Tape& t, const Mat& g) {
                       if (pa >= 0) t.accumulate(pa, g.cwiseProduct(*bv));
                       if (pb >= 0) t.accumulate(pb, g.cwiseProduct(*av));
                     });
}

inline Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(a.rows() == b.rows() && a.cols() == b.cols(), "div", a, b);
  Mat y = a.mat().cwiseQuotient(b.mat());
  if (a.node < 0 && b.node < 0) return constant(std::move(y));
  int pa = a.node, pb = b.node;
  auto bv = b.value;
  auto yv = std::make_shared<Mat>(y);
  return tape.record(std::move(y), [pa, pb, bv, yv](Tape& t, const Mat& g) {
    if (pa >= 0) t.accumulate(pa, g.cwiseQuotient(*bv));
    if (pb >= 0)
      t.accumulate(pb, Mat(-g.cwiseProduct(yv->cwiseQuotient(*bv))));
  });
}

inline Tensor neg(Tape& tape, const Tensor& a) {
  if (a.node < 0) return constant(Mat(-a.mat()));
  int pa = a.node;
  return tape.record(-a.mat(),
                     [pa](Tape& t, const Mat& g) { t.accumulate(pa, -g); });
}

inline Tensor add_scalar(Tape& tape, const Tensor& a, double c) {
  if (a.node < 0) return constant(Mat(a.mat().array() + c));
  int pa = a.node;
  return tape.record(Mat(a.mat().array() + c),
                     [pa](Tape& t, const Mat& g) { t.accumulate(pa, g); });
}

inline Tensor mul_scalar(Tape& tape, const Tensor& a, double c) {
  if (a.node < 0) return constant(Mat(a.mat() * c));
  int pa = a.node;
  return tape.record(a.mat() * c, [pa, c](Tape& t, const Mat& g) {
    t.accumulate(pa, Mat(g * c));
  });
}

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(a.cols() == b.rows(), "matmul", a, b);
  Mat y(a.rows(), b.cols());
  y.noalias() = a.mat() * b.mat();
  if (a.node < 0 && b.node < 0) return constant(std::move(y));
  int pa = a.node, pb = b.node;
  auto av = a.value, bv = b.value;
  return tape.record(std::move(y), [pa, pb, av, bv](Tape& t, const Mat& g) {
    if (pa >= 0) {
      Mat da(g.rows(), bv->rows());
      da.noalias() = g * bv->transpose();
      t.accumulate(pa, std::move(da));
    }
    if (pb >= 0) {
      Mat db(av->cols(), g.cols());
      db.noalias() = av->transpose() * g;
      t.accumulate(pb, std::move(db));
    }
  });
}

// y = a + 1*b where b is a [1 x k] row broadcast over a's rows.
inline Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(b.rows() == 1 && a.cols() == b.cols(), "add_rowvec", a, b);
  Mat y = a.mat().rowwise() + b.mat().row(0);
  if (a.node < 0 && b.node < 0) return constant(std::move(y));
  int pa = a.node, pb = b.node;
  return tape.record(std::move(y), [pa, pb](Tape& t, const Mat& g) {
    t.accumulate(pa, g);
    if (pb >= 0) t.accumulate(pb, Mat(g.colwise().sum()));
  });
}

// y = a .* b with b a [1 x k] row broadcast over rows (per-feature scaling).
inline Tensor mul_rowvec(Tape& tape, const Tensor& a, const Tensor& b) {
  check_shape(b.rows() == 1 && a.cols() == b.cols(), "mul_rowvec", a, b);
  Mat y = a.mat().array().rowwise() * b.mat().row(0).array();
  if (a.node < 0 && b.node < 0) return constant(std::move(y));
  int pa = a.node, pb = b.node;
  auto av = a.value, bv = b.value;
  return tape.record(std::move(y), [pa, pb, av, bv](Tape& t, const Mat& g) {
    if (pa >= 0)
      t.accumulate(pa, Mat(g.array().rowwise() * bv->row(0).array()));
    if (pb >= 0) t.accumulate(pb, Mat(g.cwiseProduct(*av).colwise().sum()));
  });
}

namespace detail {

template <class Fwd, class Dfd>
Tensor unary(Tape& tape, const Tensor& a, Fwd fwd, Dfd dfd) {
  Mat y = a.mat().unaryExpr(fwd);
  if (a.node < 0) return constant(std::move(y));
  int pa = a.node;
  auto av = a.value;
  return tape.record(std::move(y), [pa, av, dfd](Tape& t, const Mat& g) {
    t.accumulate(pa, Mat(g.cwiseProduct(av->unaryExpr(dfd))));
  });
}

}  // namespace detail

// ELU via the vectorized exponential; the backward pass reads the saved
// output (y >= 0 ? 1 : y + 1), so it costs no transcendentals at all.
inline Mat elu_forward(const Mat& x) {
  return (x.array() >= 0.0).select(x.array(), x.array().exp() - 1.0);
}

inline Tensor elu(Tape& tape, const Tensor& a) {
  Mat y = elu_forward(a.mat());
  if (a.node < 0) return constant(std::move(y));
  int pa = a.node;
  auto yv = std::make_shared<Mat>(y);
  return tape.record(std::move(y), [pa, yv](Tape& t, const Mat& g) {
    Mat da = (yv->array() >= 0.0)
                 .select(g.array(), g.array() * (yv->array() + 1.0));
    t.accumulate(pa, std::move(da));
  });
}

inline Tensor tanh_op(Tape& tape, const Tensor& a) {
  Mat y = a.mat().unaryExpr([](double x) { return std::tanh(x); });
  if (a.node < 0) return constant(std::move(y));
  int pa = a.node;
  auto yv = std::make_shared<Mat>(y);
  return tape.record(std::move(y), [pa, yv](Tape& t, const Mat& g) {
    t.accumulate(pa, Mat(g.array() * (1.0 - yv->array().square())));
  });
}

inline Tensor sin_op(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, a, [](double x) { return std::sin(x); },
      [](double x) { return std::cos(x); });
}

inline Tensor cos_op(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, a, [](double x) { return std::cos(x); },
      [](double x) { return -std::sin(x); });
}

inline Tensor atan_op(Tape& tape, const Tensor& a) {
  return detail::unary(
      tape, a, [](double x) { return std::atan(x); },
      [](double x) { return 1.0 / (1.0 + x * x); });
}

// Saturation with pass-through gradient strictly inside the interval.
inline Tensor clamp_op(Tape& tape, const Tensor& a, double lo, double hi) {
  return detail::unary(
      tape, a, [lo, hi](double x) { return std::clamp(x, lo, hi); },
      [lo, hi](double x) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

inline Tensor square(Tape& tape, const Tensor& a) {
  if (a.node < 0) return constant(Mat(a.mat().array().square()));
  int pa = a.node;
  auto av = a.value;
  return tape.record(Mat(a.mat().array().square()),
                     [pa, av](Tape& t, const Mat& g) {
                       t.accumulate(pa, Mat(2.0 * g.cwiseProduct(*av)));
                     });
}

inline Tensor sum_all(Tape& tape, const Tensor& a) {
  Mat y(1, 1);
  y(0, 0) = a.mat().sum();
  if (a.node < 0) return constant(std::move(y));
  int pa = a.node;
  Eigen::Index r = a.rows(), c = a.cols();
  return tape.record(std::move(y), [pa, r, c](Tape& t, const Mat& g) {
    t.accumulate(pa, Mat(Mat::Constant(r, c, g(0, 0))));
  });
}

inline Tensor mean_all(Tape& tape, const Tensor& a) {
  double inv = 1.0 / static_cast<double>(a.rows() * a.cols());
  return mul_scalar(tape, sum_all(tape, a), inv);
}

/// Column j of a as an [n x 1] tensor.
inline Tensor col(Tape& tape, const Tensor& a, Eigen::Index j) {
  if (j < 0 || j >= a.cols()) throw TapeError("col: index out of range");
  Mat y = a.mat().col(j);
  if (a.node < 0) return constant(std::move(y));
  int pa = a.node;
  Eigen::Index r = a.rows(), c = a.cols();
  return tape.record(std::move(y), [pa, j, r, c](Tape& t, const Mat& g) {
    Mat da = Mat::Zero(r, c);
    da.col(j) = g;
    t.accumulate(pa, da);
  });
}

/// Horizontal concatenation of same-height tensors.
inline Tensor hcat(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw TapeError("hcat: empty input");
  Eigen::Index r = parts[0].rows(), c = 0;
  bool any_node = false;
  for (const auto& p : parts) {
    check_shape(p.rows() == r, "hcat", parts[0], p);
    c += p.cols();
    any_node = any_node || p.node >= 0;
  }
  Mat y(r, c);
  Eigen::Index off = 0;
  for (const auto& p : parts) {
    y.middleCols(off, p.cols()) = p.mat();
    off += p.cols();
  }
  if (!any_node) return constant(std::move(y));
  std::vector<std::pair<int, Eigen::Index>> spans;  // (node, width)
  spans.reserve(parts.size());
  for (const auto& p : parts) spans.emplace_back(p.node, p.cols());
  return tape.record(std::move(y), [spans](Tape& t, const Mat& g) {
    Eigen::Index off = 0;
    for (const auto& [node, width] : spans) {
      if (node >= 0) t.accumulate(node, Mat(g.middleCols(off, width)));
      off += width;
    }
  });
}

inline Tensor hcat(Tape& tape, const Tensor& a, const Tensor& b) {
  return hcat(tape, std::vector<Tensor>{a, b});
}

}  // namespace mpg
