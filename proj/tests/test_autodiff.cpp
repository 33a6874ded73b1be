#include <doctest.h>

#include <cmath>

#include "tdc/autodiff.hpp"
#include "tdc/gradcheck.hpp"
#include "tdc/rng.hpp"

using namespace tdc;

namespace {

Tensor randt(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d identity-shaped kernel doubles an all-ones input") {
  Tape t;
  Var x = t.constant(Tensor::full({1, 3, 3}, 1.0));
  Var w = t.constant(Tensor({1, 1, 1, 1}, {2.0}));
  Var y = t.conv2d(x, w, 1, 0);
  CHECK(y->value.shape() == std::vector<int>{1, 3, 3});
  for (int i = 0; i < 9; ++i) CHECK(y->value[i] == doctest::Approx(2.0));
}

TEST_CASE("conv2d 3x3 averaging kernel reproduces the hand-summed mean") {
  Tape t;
  Var x = t.constant(Tensor({1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9}));
  Var w = t.constant(Tensor::full({1, 1, 3, 3}, 1.0 / 9.0));
  Var y = t.conv2d(x, w, 1, 0);
  CHECK(y->value.shape() == std::vector<int>{1, 1, 1});
  CHECK(y->value[0] == doctest::Approx(5.0).epsilon(1e-12));
}

TEST_CASE("conv2d rejects channel mismatch naming both shapes") {
  Tape t;
  Var x = t.constant(Tensor({2, 3, 3}));
  Var w = t.constant(Tensor({1, 1, 1, 1}, {1.0}));
  CHECK_THROWS_WITH_AS(t.conv2d(x, w, 1, 0),
                       doctest::Contains("[2,3,3]"), std::invalid_argument);
}

TEST_CASE("conv2d rejects non-positive stride and even kernels") {
  Tape t;
  Var x = t.constant(Tensor({1, 4, 4}));
  Var w1 = t.constant(Tensor({1, 1, 3, 3}));
  CHECK_THROWS_AS(t.conv2d(x, w1, -1, 0), std::invalid_argument);
  CHECK_THROWS_AS(t.conv2d(x, w1, 0, 0), std::invalid_argument);
  Var w2 = t.constant(Tensor({1, 1, 2, 2}));
  CHECK_THROWS_AS(t.conv2d(x, w2, 1, 0), std::invalid_argument);
}

TEST_CASE("conv2d output shape follows the closed form") {
  Rng rng(11);
  for (const auto& [H, k, s, p] : {std::tuple{7, 3, 1, 1}, {8, 5, 2, 2}, {9, 3, 3, 0}}) {
    Tape t;
    Var x = t.constant(randt({2, H, H}, rng));
    Var w = t.constant(randt({3, 2, k, k}, rng));
    Var y = t.conv2d(x, w, s, p);
    const int expect = (H + 2 * p - k) / s + 1;
    CHECK(y->value.dim(1) == expect);
    CHECK(y->value.dim(2) == expect);
  }
}

TEST_CASE("conv3d all-ones 3x3x3 kernel sums the cube") {
  Tape t;
  Var x = t.constant(Tensor::full({1, 3, 3, 3}, 1.0));
  Var w = t.constant(Tensor::full({1, 1, 3, 3, 3}, 1.0));
  Var y = t.conv3d(x, w, 1, 0);
  CHECK(y->value.numel() == 1);
  CHECK(y->value[0] == doctest::Approx(27.0));
}

TEST_CASE("conv3d 1x1x1 identity kernel preserves the input") {
  Tape t;
  Var x = t.constant(Tensor::full({1, 2, 2, 2}, 1.0));
  Var w = t.constant(Tensor({1, 1, 1, 1, 1}, {1.0}));
  Var y = t.conv3d(x, w, 1, 0);
  for (int i = 0; i < 8; ++i) CHECK(y->value[i] == doctest::Approx(1.0));
}

TEST_CASE("maxpool3d window 1 is the identity") {
  Rng rng(3);
  Tape t;
  Tensor in = randt({2, 3, 3, 3}, rng);
  Var y = t.maxpool3d(t.constant(in), 1, 1);
  CHECK(y->value.same_shape(in));
  for (int i = 0; i < in.numel(); ++i) CHECK(y->value[i] == in[i]);
}

TEST_CASE("maxpool3d reduces an enumerated cube to its max") {
  Tape t;
  Tensor in({1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
  Var y = t.maxpool3d(t.constant(in), 2, 2);
  CHECK(y->value.numel() == 1);
  CHECK(y->value[0] == 8.0);
  CHECK_THROWS_AS(t.maxpool3d(t.constant(in), 3, 1), std::invalid_argument);
}

TEST_CASE("maxpool3d ties route the gradient to the lowest linear index") {
  Parameter x("x", Tensor::full({1, 2, 2, 2}, 0.5));
  Tape t;
  Var y = t.maxpool3d(t.watch(x), 2, 2);
  t.backward(t.sum(y));
  CHECK(x.grad[0] == 1.0);  // first cell of the tied window
  for (int i = 1; i < 8; ++i) CHECK(x.grad[i] == 0.0);
}

TEST_CASE("softmax distributes mass as expected") {
  Tape t;
  SUBCASE("uniform on zeros") {
    Var y = t.softmax(t.constant(Tensor({4, 1})), 0);
    for (int i = 0; i < 4; ++i) CHECK(y->value[i] == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("closed form for (0, ln 3)") {
    Var y = t.softmax(t.constant(Tensor({2}, {0.0, std::log(3.0)})), 0);
    CHECK(y->value[0] == doctest::Approx(0.25).epsilon(1e-12));
    CHECK(y->value[1] == doctest::Approx(0.75).epsilon(1e-12));
  }
  SUBCASE("shift invariance and normalization") {
    Rng rng(5);
    Tensor a = randt({3, 4}, rng);
    Tensor b = a;
    for (int i = 0; i < 4; ++i) {
      for (int k = 0; k < 3; ++k) b.at(k, i) += 17.25;  // constant along the axis
    }
    Var ya = t.softmax(t.constant(a), 0);
    Var yb = t.softmax(t.constant(b), 0);
    for (int i = 0; i < 12; ++i) {
      CHECK(ya->value[i] == doctest::Approx(yb->value[i]).epsilon(1e-12));
      CHECK(ya->value[i] > 0.0);
    }
    for (int i = 0; i < 4; ++i) {
      double sum = 0.0;
      for (int k = 0; k < 3; ++k) sum += ya->value.at(k, i);
      CHECK(std::fabs(sum - 1.0) < 1e-12);
    }
  }
  SUBCASE("invalid axis") {
    CHECK_THROWS_AS(t.softmax(t.constant(Tensor({2, 2})), 2), std::invalid_argument);
  }
}

TEST_CASE("bilinear_sample matches the grid exactly at integer coordinates") {
  Rng rng(7);
  Tensor feat = randt({2, 4, 5}, rng);
  Tensor coords({4, 5, 2});
  for (int y = 0; y < 4; ++y) {
    for (int x = 0; x < 5; ++x) {
      coords.at(y, x, 0) = x;
      coords.at(y, x, 1) = y;
    }
  }
  Tape t;
  Var out = t.bilinear_sample(t.constant(feat), t.constant(coords));
  for (int i = 0; i < feat.numel(); ++i) CHECK(out->value[i] == doctest::Approx(feat[i]));
}

TEST_CASE("bilinear_sample midpoint and border rules") {
  Tape t;
  Tensor feat({1, 1, 2}, {3.0, 5.0});
  SUBCASE("midpoint") {
    Tensor c({1, 1, 2}, {0.5, 0.0});
    Var out = t.bilinear_sample(t.constant(feat), t.constant(c));
    CHECK(out->value[0] == doctest::Approx(4.0));
  }
  SUBCASE("far outside gives zero") {
    Tensor c({1, 1, 2}, {-5.0, 0.0});
    Var out = t.bilinear_sample(t.constant(feat), t.constant(c));
    CHECK(out->value[0] == 0.0);
  }
  SUBCASE("sentinel-scale coordinates are safe") {
    Tensor c({1, 1, 2}, {-1e6, -1e6});
    Var out = t.bilinear_sample(t.constant(feat), t.constant(c));
    CHECK(out->value[0] == 0.0);
  }
}

TEST_CASE("bilinear_sample is Lipschitz in the coordinates") {
  Rng rng(13);
  Tensor feat = randt({1, 6, 6}, rng);
  const double bound = 2.0 * std::max(std::fabs(feat.min_value()), std::fabs(feat.max_value()));
  for (int trial = 0; trial < 200; ++trial) {
    const double u = rng.uniform(-2.0, 7.0), v = rng.uniform(-2.0, 7.0);
    const double eps = 1e-3;
    Tensor c0({1, 1, 2}, {u, v});
    Tensor c1({1, 1, 2}, {u + eps, v});
    Tape t;
    Var a = t.bilinear_sample(t.constant(feat), t.constant(c0));
    Var b = t.bilinear_sample(t.constant(feat), t.constant(c1));
    CHECK(std::fabs(a->value[0] - b->value[0]) <= bound * eps + 1e-12);
  }
}

TEST_CASE("backward of a linear map returns the fixed factor") {
  Rng rng(17);
  Tensor xv = randt({3, 3}, rng);
  Parameter w("w", randt({3, 3}, rng));
  Tape t;
  Var loss = t.sum(t.mul(t.watch(w), t.constant(xv)));
  t.backward(loss);
  for (int i = 0; i < 9; ++i) CHECK(w.grad[i] == doctest::Approx(xv[i]).epsilon(1e-14));
}

TEST_CASE("backward requires a scalar loss") {
  Parameter w("w", Tensor::full({2, 2}, 1.0));
  Tape t;
  Var y = t.relu(t.watch(w));
  CHECK_THROWS_AS(t.backward(y), std::invalid_argument);
}

TEST_CASE("sequential backward calls accumulate parameter gradients") {
  Parameter w("w", Tensor({2}, {1.0, 2.0}));
  Tensor a({2}, {3.0, 4.0});
  Tensor b({2}, {10.0, 20.0});
  Tape t1;
  t1.backward(t1.sum(t1.mul(t1.watch(w), t1.constant(a))));
  Tape t2;
  t2.backward(t2.sum(t2.mul(t2.watch(w), t2.constant(b))));
  CHECK(w.grad[0] == doctest::Approx(13.0));
  CHECK(w.grad[1] == doctest::Approx(24.0));
}

TEST_CASE("conv2d gradient matches central finite differences") {
  Rng rng(23);
  Parameter x("x", randt({1, 3, 3}, rng));
  Parameter w("w", randt({1, 1, 3, 3}, rng));
  Tensor target = randt({1, 3, 3}, rng);
  const auto build = [&](Tape& t) {
    Var d = t.sub(t.conv2d(t.watch(x), t.watch(w), 1, 1), t.constant(target));
    return t.mean(t.mul(d, d));
  };
  const GradCheckReport r = finite_difference_check(build, {&x, &w});
  CHECK(r.components > 0);
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("ops keep finite inputs finite") {
  Rng rng(29);
  Tape t;
  Var x = t.constant(randt({2, 4, 8, 8}, rng, -50.0, 50.0));
  Var y = t.softmax(t.relu(x), 1);
  CHECK(y->value.all_finite());
  Var z = t.upsample3d_nearest(t.maxpool3d(x, 2, 2), 2);
  CHECK(z->value.all_finite());
}
