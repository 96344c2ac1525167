#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <random>

#include "methanol/grad_check.hpp"
#include "methanol/ops.hpp"
#include "methanol/tensor.hpp"
#include "numeric_refs.hpp"

using namespace methanol;

namespace {

template <typename T>
TensorT<T> random_tensor(Shape shape, std::mt19937_64& rng, bool requires_grad,
                         double lo = -2.0, double hi = 2.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<T> vals(numel_of(shape));
  for (auto& v : vals) v = static_cast<T>(dist(rng));
  return TensorT<T>::from(std::move(shape), std::move(vals), requires_grad);
}

refs::Mat to_mat(const Tensor& t) {
  refs::Mat m(static_cast<std::size_t>(t.dim(0)),
              std::vector<double>(static_cast<std::size_t>(t.dim(1))));
  for (int i = 0; i < t.dim(0); ++i)
    for (int j = 0; j < t.dim(1); ++j)
      m[i][j] = t.values()[std::size_t(i) * t.dim(1) + j];
  return m;
}

}  // namespace

TEST_CASE("matmul: identity and hand-computed values") {
  std::mt19937_64 rng(7);
  Tensor eye = Tensor::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  Tensor a = random_tensor<float>({3, 3}, rng, false);
  Tensor prod = matmul(eye, a);
  for (std::size_t i = 0; i < 9; ++i) CHECK(prod.values()[i] == doctest::Approx(a.values()[i]));

  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor y = Tensor::from({2, 2}, {5, 6, 7, 8});
  Tensor z = matmul(x, y);
  CHECK(z.values() == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("matmul: shape errors name both shapes") {
  Tensor a = Tensor::zeros({2, 3});
  Tensor b = Tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(Tensor::from({2, 2}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor::zeros({0, 2}), ShapeError);
}

TEST_CASE("softmax: uniform logits give uniform probabilities") {
  Tensor x = Tensor::zeros({1, 4});
  Tensor y = softmax_rows(x);
  for (float v : y.values()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("op forwards match the double-precision references") {
  std::mt19937_64 rng(123);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor a = random_tensor<float>({5, 7}, rng, false);
    Tensor b = random_tensor<float>({7, 4}, rng, false);
    Tensor c = matmul(a, b);
    refs::Mat cref = refs::ref_matmul(to_mat(a), to_mat(b));
    for (int i = 0; i < 5; ++i)
      for (int j = 0; j < 4; ++j) {
        double got = c.values()[std::size_t(i) * 4 + j];
        double want = cref[i][j];
        CHECK(std::abs(got - want) <= 1e-5 * std::max(1.0, std::abs(want)));
      }

    Tensor s = random_tensor<float>({3, 9}, rng, false);
    Tensor sm = softmax_rows(s);
    refs::Mat smat = to_mat(s);
    for (int i = 0; i < 3; ++i) {
      auto row = refs::ref_softmax(smat[static_cast<std::size_t>(i)]);
      for (int j = 0; j < 9; ++j) {
        double got = sm.values()[std::size_t(i) * 9 + j];
        CHECK(std::abs(got - row[static_cast<std::size_t>(j)]) <= 1e-5);
      }
    }

    Tensor x = random_tensor<float>({4, 6}, rng, false);
    Tensor w = random_tensor<float>({6}, rng, false, 0.5, 1.5);
    Tensor nrm = rmsnorm_rows(x, w, 1e-5);
    refs::Mat xm = to_mat(x);
    std::vector<double> wd(w.values().begin(), w.values().end());
    for (int i = 0; i < 4; ++i) {
      auto row = refs::ref_rmsnorm(xm[static_cast<std::size_t>(i)], wd, 1e-5);
      for (int j = 0; j < 6; ++j) {
        double got = nrm.values()[std::size_t(i) * 6 + j];
        double want = row[static_cast<std::size_t>(j)];
        CHECK(std::abs(got - want) <= 1e-5 * std::max(1.0, std::abs(want)));
      }
    }

    Tensor sv = random_tensor<float>({2, 5}, rng, false);
    Tensor sy = silu(sv);
    for (std::size_t i = 0; i < sv.numel(); ++i) {
      double want = refs::ref_silu(sv.values()[i]);
      CHECK(std::abs(sy.values()[i] - want) <= 1e-5 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("causal softmax: rows ignore future columns") {
  std::mt19937_64 rng(5);
  Tensor s = random_tensor<float>({6, 6}, rng, false);
  Tensor p1 = causal_softmax_rows(s);
  // Perturb the strict upper triangle; rows must be bitwise unchanged.
  Tensor s2 = Tensor::from(s.shape, s.values());
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) s2.values()[std::size_t(i) * 6 + j] += 42.0f;
  Tensor p2 = causal_softmax_rows(s2);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j <= i; ++j) {
      std::size_t idx = std::size_t(i) * 6 + j;
      CHECK(p1.values()[idx] == p2.values()[idx]);
    }
  // Masked-out entries are exactly zero.
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j) CHECK(p1.values()[std::size_t(i) * 6 + j] == 0.0f);
}

TEST_CASE("masked cross entropy: analytic cases") {
  SUBCASE("uniform logits, V=10 -> ln 10") {
    Tensor logits = Tensor::zeros({3, 10});
    std::vector<int> targets{1, 5, 9};
    std::vector<std::uint8_t> mask{1, 1, 1};
    Tensor loss = masked_cross_entropy(logits, targets, mask);
    CHECK(loss.item() == doctest::Approx(std::log(10.0)).epsilon(1e-6));
  }
  SUBCASE("confident logit drives the loss below 1e-7") {
    Tensor logits = Tensor::zeros({1, 10});
    logits.values()[3] = 20.0f;
    std::vector<int> targets{3};
    std::vector<std::uint8_t> mask{1};
    Tensor loss = masked_cross_entropy(logits, targets, mask);
    CHECK(loss.item() >= 0.0f);
    CHECK(loss.item() < 1e-7f);
  }
  SUBCASE("masked-out rows do not contribute") {
    std::mt19937_64 rng(11);
    Tensor l3 = random_tensor<float>({3, 6}, rng, false);
    std::vector<int> t3{2, 4, 1};
    std::vector<std::uint8_t> m3{1, 0, 1};
    Tensor loss3 = masked_cross_entropy(l3, t3, m3);

    Tensor l2 = Tensor::zeros({2, 6});
    for (int j = 0; j < 6; ++j) {
      l2.values()[j] = l3.values()[j];
      l2.values()[6 + j] = l3.values()[12 + j];
    }
    std::vector<int> t2{2, 1};
    std::vector<std::uint8_t> m2{1, 1};
    Tensor loss2 = masked_cross_entropy(l2, t2, m2);
    CHECK(loss3.item() == loss2.item());
  }
  SUBCASE("empty mask raises EmptySupervision") {
    Tensor logits = Tensor::zeros({2, 4});
    std::vector<int> targets{0, 0};
    std::vector<std::uint8_t> mask{0, 0};
    CHECK_THROWS_AS(masked_cross_entropy(logits, targets, mask), EmptySupervisionError);
  }
  SUBCASE("bitwise invariance to logits at masked rows") {
    std::mt19937_64 rng(13);
    Tensor a = random_tensor<float>({4, 8}, rng, false);
    Tensor b = Tensor::from(a.shape, a.values());
    for (int j = 0; j < 8; ++j) b.values()[std::size_t(2) * 8 + j] = -999.0f;
    std::vector<int> targets{1, 2, 3, 4};
    std::vector<std::uint8_t> mask{1, 1, 0, 1};
    float la = masked_cross_entropy(a, targets, mask).item();
    float lb = masked_cross_entropy(b, targets, mask).item();
    CHECK(std::memcmp(&la, &lb, sizeof(float)) == 0);
  }
  SUBCASE("matches the reference on random inputs") {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
      Tensor logits = random_tensor<float>({5, 7}, rng, false);
      std::vector<int> targets(5);
      std::vector<std::uint8_t> mask(5, 0);
      std::uniform_int_distribution<int> td(0, 6);
      for (auto& t : targets) t = td(rng);
      mask[static_cast<std::size_t>(trial % 5)] = 1;
      mask[static_cast<std::size_t>((trial + 2) % 5)] = 1;
      double want = refs::ref_masked_ce(to_mat(logits), targets, mask);
      double got = masked_cross_entropy(logits, targets, mask).item();
      CHECK(std::abs(got - want) <= 1e-6 * std::max(1.0, std::abs(want)));
    }
  }
}

TEST_CASE("grad_check: quadratic, constant and epsilon contract") {
  TensorT<double> x = TensorT<double>::from({3}, {1.0, 2.0, 3.0}, true);
  auto f = [&] { return sum(mul(x, x)); };
  double err = grad_check(f, {&x}, 1e-5);
  CHECK(err < 1e-8);
  CHECK(x.grads()[0] == doctest::Approx(2.0));
  CHECK(x.grads()[1] == doctest::Approx(4.0));
  CHECK(x.grads()[2] == doctest::Approx(6.0));

  auto fconst = [&] {
    return sum(scale(mul(x, x), 0.0));
  };
  CHECK(grad_check(fconst, {&x}, 1e-4) == 0.0);

  CHECK_THROWS_AS(grad_check(f, {&x}, 1e-2), ConfigError);
  CHECK_THROWS_AS(grad_check(f, {&x}, 1e-7), ConfigError);

  auto fbad = [&] {
    TensorT<double> y = sum(mul(x, x));
    (*y.data)[0] = std::numeric_limits<double>::quiet_NaN();
    return y;
  };
  CHECK_THROWS_AS(grad_check(fbad, {&x}, 1e-4), OracleError);
}

TEST_CASE("grad_check: every op passes over random small inputs") {
  constexpr double kEps = 1e-4;
  constexpr double kTol = 1e-4;
  constexpr int kSeeds = 100;
  for (int seed = 0; seed < kSeeds; ++seed) {
    std::mt19937_64 rng(static_cast<std::uint64_t>(seed) + 1000);

    // matmul + add + scale chain
    {
      auto a = random_tensor<double>({4, 5}, rng, true);
      auto b = random_tensor<double>({5, 3}, rng, true);
      auto c = random_tensor<double>({4, 3}, rng, true);
      auto w = random_tensor<double>({4, 3}, rng, false);
      auto f = [&] { return sum(mul(add(scale(matmul(a, b), 0.7), c), w)); };
      CHECK(grad_check(f, {&a, &b, &c}, kEps) < kTol);
    }
    // transpose / reshape / concat / slices
    {
      auto a = random_tensor<double>({3, 4}, rng, true);
      auto b = random_tensor<double>({3, 2}, rng, true);
      auto w = random_tensor<double>({6, 3}, rng, false);
      auto f = [&] {
        auto cat = concat<double>({a, b}, 1);          // [3,6]
        auto t = transpose(cat);                       // [6,3]
        auto r = reshape(t, {3, 6});
        auto back = reshape(r, {6, 3});
        auto s = slice_rows(back, 1, 4);               // [4,3]
        auto s2 = slice_cols(s, 0, 3);
        return sum(mul(s2, slice_rows(w, 0, 4)));
      };
      CHECK(grad_check(f, {&a, &b}, kEps) < kTol);
    }
    // gather
    {
      auto table = random_tensor<double>({6, 4}, rng, true);
      std::vector<int> ids{3, 1, 3, 0};  // duplicate on purpose
      auto w = random_tensor<double>({4, 4}, rng, false);
      auto f = [&] { return sum(mul(gather_rows(table, ids), w)); };
      CHECK(grad_check(f, {&table}, kEps) < kTol);
    }
    // softmax / causal softmax
    {
      auto x = random_tensor<double>({4, 6}, rng, true);
      auto w = random_tensor<double>({4, 6}, rng, false);
      auto f = [&] { return sum(mul(softmax_rows(x), w)); };
      CHECK(grad_check(f, {&x}, kEps) < kTol);
      auto sq = random_tensor<double>({5, 5}, rng, true);
      auto wq = random_tensor<double>({5, 5}, rng, false);
      auto g = [&] { return sum(mul(causal_softmax_rows(sq), wq)); };
      CHECK(grad_check(g, {&sq}, kEps) < kTol);
    }
    // rmsnorm / silu
    {
      auto x = random_tensor<double>({3, 8}, rng, true);
      auto w = random_tensor<double>({8}, rng, true, 0.5, 1.5);
      auto ww = random_tensor<double>({3, 8}, rng, false);
      auto f = [&] { return sum(mul(rmsnorm_rows(x, w, 1e-5), ww)); };
      CHECK(grad_check(f, {&x, &w}, kEps) < kTol);
      auto y = random_tensor<double>({2, 6}, rng, true);
      auto wy = random_tensor<double>({2, 6}, rng, false);
      auto g = [&] { return sum(mul(silu(y), wy)); };
      CHECK(grad_check(g, {&y}, kEps) < kTol);
    }
    // masked cross entropy
    {
      auto logits = random_tensor<double>({5, 9}, rng, true);
      std::vector<int> targets(5);
      std::uniform_int_distribution<int> td(0, 8);
      for (auto& t : targets) t = td(rng);
      std::vector<std::uint8_t> mask{1, 0, 1, 1, 0};
      auto f = [&] { return masked_cross_entropy(logits, targets, mask); };
      CHECK(grad_check(f, {&logits}, kEps) < kTol);
    }
  }
}

TEST_CASE("gradient accumulation is additive until explicitly zeroed") {
  TensorT<double> x = TensorT<double>::from({2}, {1.0, 2.0}, true);
  auto run = [&] { backward(sum(mul(x, x))); };
  run();
  CHECK(x.grads()[0] == doctest::Approx(2.0));
  run();
  CHECK(x.grads()[0] == doctest::Approx(4.0));  // accumulated, not reset
  x.zero_grad();
  run();
  CHECK(x.grads()[0] == doctest::Approx(2.0));
}

TEST_CASE("backward visits shared subgraphs once") {
  TensorT<double> x = TensorT<double>::from({2}, {3.0, 4.0}, true);
  auto y = mul(x, x);
  auto z = add(y, y);  // same node twice as parent
  backward(sum(z));
  CHECK(x.grads()[0] == doctest::Approx(2.0 * 2.0 * 3.0));
  CHECK(x.grads()[1] == doctest::Approx(2.0 * 2.0 * 4.0));
}

TEST_CASE("no-grad mode skips graph construction") {
  Tensor x = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  {
    NoGradGuard guard;
    Tensor y = matmul(x, x);
    CHECK_FALSE(y.requires_grad);
    CHECK(y.node == nullptr);
  }
  Tensor y = matmul(x, x);
  CHECK(y.requires_grad);
  CHECK(y.node != nullptr);
}
