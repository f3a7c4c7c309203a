#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "mpg/tensor.hpp"

namespace mpg {

struct OptimError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Learning rate interpolated linearly from base to final over the decay
/// horizon, clamped at final thereafter.
struct LinearDecay {
  double base = 0.0;
  double final_value = 0.0;
  long horizon = 1;

  double at(long iteration) const {
    if (iteration >= horizon) return final_value;
    if (iteration <= 0) return base;
    double frac = static_cast<double>(iteration) / static_cast<double>(horizon);
    return base + (final_value - base) * frac;
  }
};

/// Adam over a list of parameter matrices. The step counter drives bias
/// correction; the caller's iteration counter drives the decayed rate.
class Adam {
 public:
  Adam() = default;

  Adam(const std::vector<Mat>& params, LinearDecay lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params.size());
    v_.reserve(params.size());
    for (const auto& p : params) {
      m_.push_back(Mat::Zero(p.rows(), p.cols()));
      v_.push_back(Mat::Zero(p.rows(), p.cols()));
    }
  }

  long step_count() const { return step_; }
  const LinearDecay& schedule() const { return lr_; }

  void step(std::vector<Mat>& params, const std::vector<Mat>& grads,
            long iteration) {
    if (params.size() != m_.size() || grads.size() != m_.size()) {
      throw OptimError("Adam::step: layer count mismatch");
    }
    for (size_t i = 0; i < grads.size(); ++i) {
      if (!grads[i].allFinite()) {
        std::ostringstream os;
        os << "Adam::step: non-finite gradient in layer " << i;
        throw OptimError(os.str());
      }
    }
    ++step_;
    double lr = lr_.at(iteration);
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(step_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(step_));
    for (size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grads[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grads[i].cwiseProduct(grads[i]);
      Mat mhat = m_[i] / bc1;
      Mat vhat = v_[i] / bc2;
      params[i].array() -=
          lr * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

 private:
  std::vector<Mat> m_, v_;
  long step_ = 0;
  LinearDecay lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
};

/// target <- tau * online + (1 - tau) * target, elementwise.
inline void polyak_update(std::vector<Mat>& target,
                          const std::vector<Mat>& online, double tau) {
  if (tau < 0.0 || tau > 1.0) throw OptimError("polyak_update: tau out of [0,1]");
  if (target.size() != online.size())
    throw OptimError("polyak_update: layer count mismatch");
  for (size_t i = 0; i < target.size(); ++i) {
    if (target[i].rows() != online[i].rows() ||
        target[i].cols() != online[i].cols()) {
      std::ostringstream os;
      os << "polyak_update: shape mismatch in layer " << i;
      throw OptimError(os.str());
    }
    target[i] = tau * online[i] + (1.0 - tau) * target[i];
  }
}

}  // namespace mpg
