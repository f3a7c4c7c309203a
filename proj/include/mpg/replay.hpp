#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "mpg/env.hpp"

namespace mpg {

struct Batch {
  Mat s;               // [N x obs_dim]
  Mat a;               // [N x act_dim]
  Eigen::VectorXd r;   // [N]
  Mat s2;              // [N x obs_dim]
  std::vector<uint8_t> done;

  Eigen::Index size() const { return s.rows(); }
};

/// Ring buffer of transitions with uniform with-replacement sampling.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(size_t capacity) : capacity_(capacity) {
    items_.reserve(std::min<size_t>(capacity, 1 << 20));
  }

  size_t capacity() const { return capacity_; }
  size_t size() const { return items_.size(); }

  void push(Transition t) {
    if (items_.size() < capacity_) {
      items_.push_back(std::move(t));
    } else {
      items_[cursor_] = std::move(t);
    }
    cursor_ = (cursor_ + 1) % capacity_;
  }

  bool ready(size_t n) const { return size() >= n; }

  // Not-ready is signalled, not thrown: the caller is expected to wait for
  // more data.
  std::optional<Batch> sample(size_t n, std::mt19937_64& rng) const {
    if (!ready(n)) return std::nullopt;
    std::uniform_int_distribution<size_t> pick(0, items_.size() - 1);
    Batch b;
    const Transition& first = items_[0];
    b.s.resize(static_cast<Eigen::Index>(n), first.s.size());
    b.a.resize(static_cast<Eigen::Index>(n), first.a.size());
    b.r.resize(static_cast<Eigen::Index>(n));
    b.s2.resize(static_cast<Eigen::Index>(n), first.s2.size());
    b.done.assign(n, 0);
    for (size_t i = 0; i < n; ++i) {
      const Transition& t = items_[pick(rng)];
      Eigen::Index row = static_cast<Eigen::Index>(i);
      b.s.row(row) = t.s;
      b.a.row(row) = t.a;
      b.r[row] = t.r;
      b.s2.row(row) = t.s2;
      b.done[i] = t.done ? 1 : 0;
    }
    return b;
  }

  const Transition& at(size_t i) const { return items_[i]; }

 private:
  size_t capacity_;
  size_t cursor_ = 0;
  std::vector<Transition> items_;
};

}  // namespace mpg
