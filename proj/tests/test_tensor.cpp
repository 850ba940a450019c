#include <cmath>
#include <numeric>

#include "codecforge/errors.hpp"
#include "codecforge/tensor.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace codecforge;
using testing::random_tensor;

namespace {

// Straightforward softmax cross-entropy in long double; shares no code with
// the engine.
long double manual_cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  const std::size_t n = logits.dim(0), c = logits.dim(1);
  long double total = 0.0L;
  for (std::size_t r = 0; r < n; ++r) {
    long double denom = 0.0L;
    for (std::size_t k = 0; k < c; ++k) denom += std::exp(static_cast<long double>(logits.at(r, k)));
    const long double p = std::exp(static_cast<long double>(logits.at(r, labels[r]))) / denom;
    total += -std::log(p);
  }
  return total / static_cast<long double>(n);
}

}  // namespace

TEST_CASE("matmul examples") {
  const Tensor id = Tensor::matrix({{1, 0}, {0, 1}});
  const Tensor col = Tensor::matrix({{3}, {4}});
  CHECK(matmul(id, col).values() == std::vector<double>{3, 4});

  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  const Tensor b = Tensor::matrix({{5}, {6}});
  const Tensor out = matmul(a, b);
  CHECK(out.shape() == Shape{2, 1});
  CHECK(out.values() == std::vector<double>{17, 39});

  CHECK_THROWS_AS(matmul(a, Tensor::matrix({{1, 2, 3}})), DimensionError);
  try {
    matmul(a, Tensor::matrix({{1, 2, 3}}));
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("[2x2]") != std::string::npos);
    CHECK(std::string(e.what()).find("[1x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum equals ones times B transpose") {
  PrecisionScope high(Precision::Double);
  Tensor a = random_tensor({3, 4}, 1).set_requires_grad();
  Tensor b = random_tensor({4, 2}, 2);
  backward(sum_all(matmul(a, b)));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t p = 0; p < 4; ++p) {
      const double expected = b.at(p, 0) + b.at(p, 1);
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(expected).epsilon(1e-12));
    }
  CHECK(grad_check([&](const Tensor& x) { return sum_all(matmul(x, b)); }, a, 1e-5) < 1e-6);
}

TEST_CASE("elementwise examples") {
  CHECK(relu(Tensor::vector({-1, 0, 2})).values() == std::vector<double>{0, 0, 2});
  CHECK(add(Tensor::vector({1, 2}), Tensor::vector({3, 4})).values() == std::vector<double>{4, 6});
  CHECK(log(Tensor::scalar(1.0)).item() == 0.0);
  CHECK(std::isfinite(log(Tensor::scalar(0.0)).item()));
  CHECK(mul(Tensor::scalar(2.0), Tensor::vector({1, 2})).values() == std::vector<double>{2, 4});
  CHECK_THROWS_AS(add(Tensor::vector({1, 2}), Tensor::vector({1, 2, 3})), DimensionError);
}

TEST_CASE("relu subgradient at zero is zero") {
  Tensor x = Tensor::vector({-1, 0, 2}).set_requires_grad();
  backward(sum_all(relu(x)));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 0, 1});
}

TEST_CASE("concat examples") {
  const Tensor a = Tensor::matrix({{1}, {2}});
  const Tensor b = Tensor::matrix({{3}, {4}});
  const Tensor c = concat({a, b}, 1);
  CHECK(c.shape() == Shape{2, 2});
  CHECK(c.values() == std::vector<double>{1, 3, 2, 4});
  CHECK(concat({a}, 0).same_node(a));
  CHECK_THROWS_AS(concat(std::span<const Tensor>{}, 0), DimensionError);
  CHECK_THROWS_AS(concat({a, Tensor::matrix({{1, 2}})}, 0), DimensionError);

  PrecisionScope high(Precision::Double);
  Tensor x = random_tensor({3, 2}, 3).set_requires_grad();
  Tensor y = random_tensor({3, 5}, 4).set_requires_grad();
  backward(sum_all(concat({x, y}, 1)));
  for (double g : x.grad()) CHECK(g == 1.0);
  for (double g : y.grad()) CHECK(g == 1.0);
  CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(concat({t, y}, 1), concat({t, y}, 1))); },
                   x, 1e-5) < 1e-6);
}

TEST_CASE("concat then split reproduces inputs bit-exactly") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor a = random_tensor({4, 3, 2}, seed);
    const Tensor b = random_tensor({4, 1, 2}, seed + 100);
    const Tensor c = random_tensor({4, 5, 2}, seed + 200);
    const std::vector<std::size_t> extents{3, 1, 5};
    const auto parts = split(concat({a, b, c}, 1), extents, 1);
    REQUIRE(parts.size() == 3);
    CHECK(testing::bit_equal(parts[0].data(), a.data()));
    CHECK(testing::bit_equal(parts[1].data(), b.data()));
    CHECK(testing::bit_equal(parts[2].data(), c.data()));
  }
}

TEST_CASE("gather_rows examples") {
  const Tensor t = Tensor::matrix({{10}, {20}, {30}});
  const std::vector<std::size_t> idx{2, 0};
  CHECK(gather_rows(t, idx).values() == std::vector<double>{30, 10});
  const std::vector<std::size_t> all{0, 1, 2};
  CHECK(gather_rows(t, all).values() == t.values());

  Tensor src = Tensor::matrix({{1, 2}, {3, 4}}).set_requires_grad();
  const std::vector<std::size_t> dup{0, 0};
  backward(sum_all(gather_rows(src, dup)));
  CHECK(std::vector<double>(src.grad().begin(), src.grad().end()) == std::vector<double>{2, 2, 0, 0});

  const std::vector<std::size_t> bad{3};
  try {
    gather_rows(t, bad);
    FAIL("expected IndexError");
  } catch (const IndexError& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
}

TEST_CASE("gather backward with a permutation applies the inverse permutation") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<std::size_t> perm(12);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    Tensor x = random_tensor({12, 3}, trial).set_requires_grad();
    const Tensor upstream = random_tensor({12, 3}, 50 + trial);
    backward(sum_all(mul(gather_rows(x, perm), upstream)));
    for (std::size_t r = 0; r < 12; ++r)
      for (std::size_t c = 0; c < 3; ++c)
        CHECK(x.grad()[perm[r] * 3 + c] == upstream.at(r, c));
  }
}

TEST_CASE("reduce examples") {
  const Tensor m = Tensor::matrix({{1, 5}, {7, 2}});
  CHECK(reduce(m, Reduce::Max, 1).values() == std::vector<double>{5, 7});
  CHECK(reduce(Tensor::zeros({4}), Reduce::Sum, 0).item() == 0.0);
  CHECK(reduce(Tensor::vector({2, 4}), Reduce::Mean, 0).item() == 3.0);
  CHECK_THROWS_AS(reduce(Tensor::zeros({0, 3}), Reduce::Max, 0), EmptyReductionError);
  CHECK_THROWS_AS(reduce(m, Reduce::Sum, 2), DimensionError);
}

TEST_CASE("max reduce routes gradient to the lowest tied index") {
  Tensor t = Tensor::matrix({{3, 3, 1}, {0, 2, 2}}).set_requires_grad();
  backward(sum_all(reduce(t, Reduce::Max, 1)));
  CHECK(std::vector<double>(t.grad().begin(), t.grad().end()) ==
        std::vector<double>{1, 0, 0, 0, 1, 0});
}

TEST_CASE("softmax cross entropy examples") {
  Tensor perfect = Tensor::matrix({{1e6, 0, 0}, {0, 0, 1e6}});
  const std::vector<std::size_t> labels{0, 2};
  CHECK(softmax_cross_entropy(perfect, labels).item() < 1e-6);

  const std::vector<std::size_t> two{0, 1};
  {
    PrecisionScope high(Precision::Double);
    CHECK(softmax_cross_entropy(Tensor::zeros({2, 2}), two).item() ==
          doctest::Approx(std::log(2.0)).epsilon(1e-12));
  }

  PrecisionScope high(Precision::Double);
  const Tensor logits = random_tensor({3, 4}, 11, -3.0, 3.0);
  const std::vector<std::size_t> y{1, 3, 0};
  CHECK(std::abs(softmax_cross_entropy(logits, y).item() -
                 static_cast<double>(manual_cross_entropy(logits, y))) < 1e-10);

  const std::vector<std::size_t> out_of_range{0, 4, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, out_of_range), IndexError);
}

TEST_CASE("softmax rows sum to one") {
  PrecisionScope high(Precision::Double);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor logits = random_tensor({5, 7}, seed, -20.0, 20.0);
    const auto p = softmax_rows(logits);
    for (std::size_t r = 0; r < 5; ++r) {
      double s = 0.0;
      for (std::size_t c = 0; c < 7; ++c) s += p[r * 7 + c];
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("dropout") {
  const Tensor t = random_tensor({100}, 5);
  CHECK(testing::bit_equal(dropout(t, 0.0, true, 1).data(), t.data()));
  CHECK(testing::bit_equal(dropout(t, 0.5, false, 1).data(), t.data()));
  CHECK_THROWS_AS(dropout(t, 1.0, true, 1), ConfigError);
  CHECK_THROWS_AS(dropout(t, -0.1, true, 1), ConfigError);

  const Tensor ones = Tensor::full({100000}, 1.0);
  const Tensor dropped = dropout(ones, 0.5, true, 42);
  std::size_t survivors = 0;
  for (double v : dropped.data()) {
    if (v != 0.0) {
      ++survivors;
      CHECK(v == 2.0);
    }
  }
  const double fraction = static_cast<double>(survivors) / 100000.0;
  CHECK(fraction >= 0.49);
  CHECK(fraction <= 0.51);
  CHECK(testing::bit_equal(dropout(ones, 0.5, true, 42).data(), dropped.data()));
}

TEST_CASE("batch norm") {
  PrecisionScope high(Precision::Double);
  SUBCASE("standardized input passes through") {
    // Two columns of ±1: zero mean, unit variance.
    const Tensor x = Tensor::matrix({{1, -1}, {-1, 1}, {1, -1}, {-1, 1}});
    auto bn = BatchNormState::identity(2);
    const Tensor y = batch_norm(x, bn, true);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(std::abs(y.at(i) - x.at(i)) < 1e-4);
  }
  SUBCASE("constant column collapses to the shift") {
    const Tensor x = Tensor::matrix({{3}, {3}, {3}});
    auto bn = BatchNormState::identity(1);
    bn.beta.mutable_data()[0] = 0.25;
    const Tensor y = batch_norm(x, bn, true);
    for (double v : y.data()) CHECK(v == doctest::Approx(0.25));
  }
  SUBCASE("training statistics") {
    const Tensor x = random_tensor({64, 8}, 9, -4.0, 10.0);
    auto bn = BatchNormState::identity(8);
    const Tensor y = batch_norm(x, bn, true);
    for (std::size_t c = 0; c < 8; ++c) {
      double mean = 0.0, var = 0.0;
      for (std::size_t r = 0; r < 64; ++r) mean += y.at(r, c);
      mean /= 64.0;
      for (std::size_t r = 0; r < 64; ++r) var += (y.at(r, c) - mean) * (y.at(r, c) - mean);
      var /= 64.0;
      CHECK(std::abs(mean) < 1e-6);
      CHECK(var >= 0.99);
      CHECK(var <= 1.01);
    }
  }
  SUBCASE("running statistics drive eval mode") {
    const Tensor x = random_tensor({16, 3}, 10, 5.0, 6.0);
    auto bn = BatchNormState::identity(3);
    batch_norm(x, bn, true);
    // The first batch replaces the initial statistics outright.
    for (std::size_t c = 0; c < 3; ++c) {
      double mean = 0.0;
      for (std::size_t r = 0; r < 16; ++r) mean += x.at(r, c);
      CHECK(bn.running_mean[c] == doctest::Approx(mean / 16.0).epsilon(1e-12));
    }
    CHECK(bn.updates[0] == 1.0);
    const Tensor y = batch_norm(x, bn, false);
    CHECK(y.at(0, 0) == doctest::Approx((x.at(0, 0) - bn.running_mean[0]) /
                                        std::sqrt(bn.running_var[0] + 1e-5)));
  }
  SUBCASE("running averages warm up, then use the momentum") {
    auto bn = BatchNormState::identity(1);
    std::vector<double> means;
    double expect = 0.0;
    for (int t = 1; t <= 150; ++t) {
      const Tensor x = Tensor({2, 1}, {static_cast<double>(t), static_cast<double>(t) + 2.0});
      batch_norm(x, bn, true);
      const double m = static_cast<double>(t) + 1.0;
      const double w = std::max(0.01, 1.0 / t);
      expect = (1.0 - w) * expect + w * m;
      CHECK(bn.running_mean[0] == doctest::Approx(expect).epsilon(1e-12));
    }
    // Plain average of 2..101 after 100 batches would be 51.5; the tail is an EMA.
    CHECK(bn.updates[0] == 150.0);
  }
  SUBCASE("errors") {
    auto bn = BatchNormState::identity(2);
    CHECK_THROWS_AS(batch_norm(Tensor::matrix({{1, 2}}), bn, true), BatchSizeError);
    CHECK_NOTHROW(batch_norm(Tensor::matrix({{1, 2}}), bn, false));
    CHECK_THROWS_AS(batch_norm(Tensor::matrix({{1, 2, 3}, {1, 2, 3}}), bn, true), DimensionError);
  }
}

TEST_CASE("backward") {
  Tensor x = Tensor::vector({1, 2}).set_requires_grad();
  backward(sum_all(mul(x, x)));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{2, 4});

  Tensor unused = Tensor::vector({5}).set_requires_grad();
  Tensor y = Tensor::vector({3}).set_requires_grad();
  backward(sum_all(y));
  CHECK_FALSE(unused.has_grad());
  CHECK(y.has_grad());

  CHECK_THROWS_AS(backward(x), DimensionError);
}

TEST_CASE("shared intermediates are visited once per backward") {
  Tensor x = Tensor::vector({1.5}).set_requires_grad();
  const Tensor h = mul(x, x);
  const Tensor loss = sum_all(add(h, h));
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
  x.zero_grad();
  backward(loss);
  CHECK(x.grad()[0] == doctest::Approx(6.0));
}

TEST_CASE("grad_check examples") {
  PrecisionScope high(Precision::Double);
  const Tensor x = testing::random_tensor_no_kinks({6}, 3);
  CHECK(grad_check([](const Tensor& t) { return sum_all(relu(t)); }, x, 1e-5) < 1e-7);
  CHECK(grad_check([](const Tensor& t) { return sum_all(t); }, x, 1e-5) < 1e-9);
  const std::vector<std::size_t> labels{0, 2, 1};
  CHECK(grad_check([&](const Tensor& t) { return softmax_cross_entropy(t, labels); },
                   random_tensor({3, 4}, 4), 1e-5) < 1e-6);
}

TEST_CASE("every differentiable op passes a gradient check over ten seeds") {
  PrecisionScope high(Precision::Double);
  const double h = 1e-5;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Tensor w = random_tensor({4, 3}, seed + 1000);
    const Tensor other = random_tensor({5, 4}, seed + 2000);
    const Tensor weights = random_tensor({5, 4}, seed + 3000);
    const Tensor bias = random_tensor({3}, seed + 4000);
    auto weighted = [&](const Tensor& t) { return sum_all(mul(t, weights)); };
    const Tensor x = testing::random_tensor_no_kinks({5, 4}, seed);
    const Tensor positive = random_tensor({5, 4}, seed + 5000, 0.5, 2.0);
    const std::vector<std::size_t> idx{4, 0, 0, 2, 3};
    const std::vector<std::size_t> labels{0, 1, 2, 0, 1};

    CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(matmul(t, w), matmul(t, w))); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(relu(linear(t, w, bias))); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(add(t, other)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(sub(other, t)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(mul(t, t)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(relu(t)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(log(t)); }, positive, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(exp(t)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(gather_rows(t, idx)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(reduce(t, Reduce::Max, 1), reduce(t, Reduce::Max, 1))); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return sum_all(mul(reduce(t, Reduce::Mean, 0), reduce(t, Reduce::Sum, 0))); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return softmax_cross_entropy(matmul(t, w), labels); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(dropout(t, 0.5, true, seed)); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) { return weighted(reshape(reshape(t, {20}), {5, 4})); }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) {
            const std::vector<std::size_t> extents{1, 3};
            auto parts = split(t, extents, 1);
            return sum_all(mul(parts[1], parts[1]));
          }, x, h) < 1e-4);
    CHECK(grad_check([&](const Tensor& t) {
            auto bn = BatchNormState::identity(4);
            return weighted(batch_norm(t, bn, true));
          }, x, h) < 1e-4);

    // Parameter gradients of batch norm.
    auto bn = BatchNormState::identity(4);
    bn.gamma = random_tensor({4}, seed + 6000, 0.5, 1.5).set_requires_grad();
    bn.beta = random_tensor({4}, seed + 7000).set_requires_grad();
    std::vector<Tensor> params{bn.gamma, bn.beta};
    CHECK(grad_check([&] { return weighted(batch_norm(x, bn, true)); }, params, h) < 1e-4);
    CHECK(grad_check([&] { return weighted(batch_norm(x, bn, false)); }, params, h) < 1e-4);
  }
}

TEST_CASE("single precision rounds forward values") {
  PrecisionScope low(Precision::Single);
  const Tensor third = scale(Tensor::scalar(1.0), 1.0 / 3.0);
  CHECK(third.item() == static_cast<double>(1.0f / 3.0f));
  PrecisionScope high(Precision::Double);
  CHECK(scale(Tensor::scalar(1.0), 1.0 / 3.0).item() == 1.0 / 3.0);
}

TEST_CASE("identical inputs give bit-identical outputs") {
  auto run = [] {
    const Tensor x = random_tensor({8, 4}, 1);
    const Tensor w = random_tensor({4, 4}, 2);
    auto bn = BatchNormState::identity(4);
    return dropout(relu(batch_norm(matmul(x, w), bn, true)), 0.3, true, 9).values();
  };
  CHECK(testing::bit_equal(run(), run()));
}
