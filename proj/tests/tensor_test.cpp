#include "mpg/tensor.hpp"

#include <gtest/gtest.h>

#include "mpg/rng.hpp"
#include "testutil.hpp"

namespace mpg {
namespace {

using test::finite_difference;
using test::grad_error;
using test::random_mat;

TEST(Tape, ConstantOutputIsRejected) {
  Tape t;
  Tensor c = constant(1.0);
  EXPECT_THROW(t.backward(c), TapeError);
}

TEST(Tape, NonScalarOutputIsRejected) {
  Tape t;
  Tensor x = t.leaf(std::make_shared<Mat>(Mat::Ones(2, 2)));
  EXPECT_THROW(t.backward(x), TapeError);
}

TEST(Tape, SingleUse) {
  Tape t;
  Tensor x = t.leaf(std::make_shared<Mat>(Mat::Ones(1, 1)));
  Tensor y = mul_scalar(t, x, 2.0);
  t.backward(y);
  EXPECT_THROW(t.backward(y), TapeError);
}

TEST(Tape, SumOfLeavesHasUnitGradient) {
  Tape t;
  std::mt19937_64 rng(1);
  auto v = std::make_shared<Mat>(random_mat(3, 4, rng));
  Tensor x = t.leaf(v);
  Tensor s = sum_all(t, x);
  t.backward(s);
  EXPECT_TRUE(t.grad(x).isApprox(Mat::Ones(3, 4)));
}

TEST(Tape, UnreachedLeafGetsZeroGradient) {
  Tape t;
  Tensor x = t.leaf(std::make_shared<Mat>(Mat::Ones(2, 2)));
  Tensor y = t.leaf(std::make_shared<Mat>(Mat::Ones(2, 2)));
  Tensor s = sum_all(t, x);
  t.backward(s);
  EXPECT_TRUE(t.grad(y).isZero());
}

TEST(Tape, DetachPreservesValueAndCutsGradient) {
  std::mt19937_64 rng(7);
  Mat v = random_mat(2, 3, rng);
  Tape t;
  Tensor x = t.leaf(std::make_shared<Mat>(v));
  Tensor d = stop_gradient(mul_scalar(t, x, 3.0));
  EXPECT_TRUE(d.mat().isApprox(v * 3.0));
  EXPECT_EQ(d.node, -1);
  Tensor s = sum_all(t, mul(t, d, x));
  t.backward(s);
  // only the live x path contributes: d/dx sum(d .* x) = d
  EXPECT_TRUE(t.grad(x).isApprox(Mat(v * 3.0)));
}

struct UnaryCase {
  const char* name;
  std::function<Tensor(Tape&, const Tensor&)> op;
  double lo, hi;
};

TEST(TapeGradients, UnaryOpsMatchFiniteDifferences) {
  std::vector<UnaryCase> cases = {
      {"elu", [](Tape& t, const Tensor& a) { return elu(t, a); }, -2.0, 2.0},
      {"tanh", [](Tape& t, const Tensor& a) { return tanh_op(t, a); }, -2.0, 2.0},
      {"sin", [](Tape& t, const Tensor& a) { return sin_op(t, a); }, -3.0, 3.0},
      {"cos", [](Tape& t, const Tensor& a) { return cos_op(t, a); }, -3.0, 3.0},
      {"atan", [](Tape& t, const Tensor& a) { return atan_op(t, a); }, -3.0, 3.0},
      {"square", [](Tape& t, const Tensor& a) { return square(t, a); }, -2.0, 2.0},
      {"neg", [](Tape& t, const Tensor& a) { return neg(t, a); }, -2.0, 2.0},
  };
  for (const auto& c : cases) {
    for (int seed = 0; seed < 5; ++seed) {
      std::mt19937_64 rng(100 + seed);
      Mat x0 = random_mat(3, 2, rng, c.lo, c.hi);
      Mat w = random_mat(3, 2, rng);
      auto value = [&](const Mat& x) {
        Tape t;
        Tensor in = t.leaf(borrow(x));
        return sum_all(t, mul(t, c.op(t, in), constant(w))).scalar();
      };
      Tape t;
      Tensor in = t.leaf(borrow(x0));
      Tensor s = sum_all(t, mul(t, c.op(t, in), constant(w)));
      t.backward(s);
      EXPECT_LT(grad_error(t.grad(in), finite_difference(value, x0)), 1e-7)
          << c.name << " seed " << seed;
    }
  }
}

TEST(TapeGradients, BinaryAndMatmulMatchFiniteDifferences) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(200 + seed);
    Mat a0 = random_mat(3, 4, rng, 0.5, 2.0);
    Mat b0 = random_mat(3, 4, rng, 0.5, 2.0);
    Mat m0 = random_mat(4, 2, rng);

    auto value = [&](const Mat& a) {
      Tape t;
      Tensor ta = t.leaf(borrow(a));
      Tensor tb = constant(b0);
      Tensor mix = add(t, mul(t, ta, tb), div(t, tb, ta));
      Tensor h = matmul(t, sub(t, mix, tb), constant(m0));
      return mean_all(t, square(t, h)).scalar();
    };
    Tape t;
    Tensor ta = t.leaf(borrow(a0));
    Tensor tb = constant(b0);
    Tensor mix = add(t, mul(t, ta, tb), div(t, tb, ta));
    Tensor h = matmul(t, sub(t, mix, tb), constant(m0));
    Tensor loss = mean_all(t, square(t, h));
    t.backward(loss);
    EXPECT_LT(grad_error(t.grad(ta), finite_difference(value, a0)), 1e-6)
        << "seed " << seed;
  }
}

TEST(TapeGradients, MatmulWeightGradient) {
  std::mt19937_64 rng(11);
  Mat x = random_mat(5, 3, rng);
  Mat w0 = random_mat(3, 2, rng);
  auto value = [&](const Mat& w) {
    Tape t;
    Tensor tw = t.leaf(borrow(w));
    return sum_all(t, square(t, matmul(t, constant(x), tw))).scalar();
  };
  Tape t;
  Tensor tw = t.leaf(borrow(w0));
  Tensor loss = sum_all(t, square(t, matmul(t, constant(x), tw)));
  t.backward(loss);
  EXPECT_LT(grad_error(t.grad(tw), finite_difference(value, w0)), 1e-7);
}

TEST(TapeGradients, RowBroadcastOps) {
  std::mt19937_64 rng(12);
  Mat x = random_mat(4, 3, rng);
  Mat b0 = random_mat(1, 3, rng);
  auto value = [&](const Mat& b) {
    Tape t;
    Tensor tb = t.leaf(borrow(b));
    Tensor y = add_rowvec(t, constant(x), tb);
    return sum_all(t, square(t, mul_rowvec(t, y, tb))).scalar();
  };
  Tape t;
  Tensor tb = t.leaf(borrow(b0));
  Tensor y = add_rowvec(t, constant(x), tb);
  Tensor loss = sum_all(t, square(t, mul_rowvec(t, y, tb)));
  t.backward(loss);
  EXPECT_LT(grad_error(t.grad(tb), finite_difference(value, b0)), 1e-6);
}

TEST(TapeGradients, ColAndHcat) {
  std::mt19937_64 rng(13);
  Mat x0 = random_mat(4, 3, rng);
  auto value = [&](const Mat& x) {
    Tape t;
    Tensor tx = t.leaf(borrow(x));
    Tensor c0 = col(t, tx, 0);
    Tensor c2 = col(t, tx, 2);
    Tensor joined = hcat(t, {mul(t, c0, c2), add(t, c0, c2)});
    return mean_all(t, square(t, joined)).scalar();
  };
  Tape t;
  Tensor tx = t.leaf(borrow(x0));
  Tensor c0 = col(t, tx, 0);
  Tensor c2 = col(t, tx, 2);
  Tensor joined = hcat(t, {mul(t, c0, c2), add(t, c0, c2)});
  Tensor loss = mean_all(t, square(t, joined));
  t.backward(loss);
  EXPECT_LT(grad_error(t.grad(tx), finite_difference(value, x0)), 1e-6);
}

TEST(Tape, ShapeMismatchNamesOpAndShapes) {
  Tape t;
  Tensor a = constant(Mat::Ones(2, 3));
  Tensor b = constant(Mat::Ones(3, 3));
  try {
    add(t, a, b);
    FAIL() << "expected TapeError";
  } catch (const TapeError& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("add"), std::string::npos);
    EXPECT_NE(msg.find("2x3"), std::string::npos);
  }
}

TEST(Tape, DeterministicGradients) {
  auto run = [](uint64_t seed) {
    std::mt19937_64 rng(seed);
    Mat x = random_mat(6, 5, rng);
    Mat w = random_mat(5, 4, rng);
    Tape t;
    Tensor tw = t.leaf(borrow(w));
    Tensor y = elu(t, matmul(t, constant(x), tw));
    Tensor loss = mean_all(t, square(t, y));
    t.backward(loss);
    return Mat(t.grad(tw));
  };
  Mat g1 = run(42), g2 = run(42);
  EXPECT_EQ(0.0, (g1 - g2).cwiseAbs().maxCoeff());  // bitwise
}

}  // namespace
}  // namespace mpg
