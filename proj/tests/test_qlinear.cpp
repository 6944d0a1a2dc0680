#include <cmath>
#include <random>

#include "doctest.h"
#include "lqa/qlinear.hpp"
#include "lqa/quant_core.hpp"
#include "oracles.hpp"

using namespace lqa;
using namespace lqa::qlinear;

TEST_CASE("identity matrix quantized symmetrically gives y == x") {
  const int n = 16;
  quant::Tensor eye{{n, n}, std::vector<float>(n * n, 0.0f)};
  for (int i = 0; i < n; ++i) eye.values[i * n + i] = 1.0f;
  quant::QuantConfig cfg;
  cfg.mode = quant::QuantMode::kSymmetric;
  cfg.bits = 8;
  cfg.group_size = 8;
  const auto qt = quant::QuantizeTensor(eye, cfg).tensor;
  std::vector<float> x(n);
  for (int i = 0; i < n; ++i) x[i] = 0.1f * i - 0.7f;
  CHECK(QMatVec(qt, x) == x);
}

TEST_CASE("zero matrix gives zero") {
  quant::Tensor z{{4, 8}, std::vector<float>(32, 0.0f)};
  quant::QuantConfig cfg;
  cfg.bits = 4;
  cfg.group_size = 8;
  const auto qt = quant::QuantizeTensor(z, cfg).tensor;
  const std::vector<float> x(8, 1.0f);
  for (float v : QMatVec(qt, x)) CHECK(v == 0.0f);
}

TEST_CASE("8x16 at b=8 g=8 matches dequantize-then-multiply") {
  std::mt19937_64 rng(8);
  std::normal_distribution<float> n(0.0f, 1.0f);
  quant::Tensor w{{8, 16}, {}};
  for (int i = 0; i < 128; ++i) w.values.push_back(n(rng));
  std::vector<float> x(16);
  for (auto& v : x) v = n(rng);
  quant::QuantConfig cfg;
  cfg.group_size = 8;
  const auto qt = quant::QuantizeTensor(w, cfg).tensor;
  const auto y = QMatVec(qt, x);
  const auto ref = testing::DenseMatVec(quant::DequantizeTensor(qt).values, 8, 16, x);
  double num = 0, den = 0;
  for (int i = 0; i < 8; ++i) {
    num += (y[i] - ref[i]) * (y[i] - ref[i]);
    den += ref[i] * ref[i];
  }
  CHECK(std::sqrt(num / den) < 1e-5);
  CHECK(QMatVecSerial(qt, x) == y);
}

TEST_CASE("l2 normalize") {
  const std::vector<float> v{3, 4};
  const auto r = L2Normalize(v);
  CHECK(r.vector[0] == doctest::Approx(0.6));
  CHECK(r.vector[1] == doctest::Approx(0.8));
  CHECK_FALSE(r.was_zero);
  const std::vector<float> unit{0, 1, 0};
  CHECK(L2Normalize(unit).vector == unit);
  const std::vector<float> zero{0, 0};
  const auto z = L2Normalize(zero);
  CHECK(z.was_zero);
  CHECK(z.vector == zero);
}

TEST_CASE("cosine logits") {
  const auto p = MakePrototypes(2, 2, {1, 0, 0, 1});
  const std::vector<float> f{1, 0};
  const auto l = CosineLogits(f, p);
  CHECK(l[0] == doctest::Approx(100.0));
  CHECK(l[1] == 0.0);

  const auto p3 = MakePrototypes(2, 3, {1, 0, 0, 0, 1, 0});
  const std::vector<float> ortho{0, 0, 1};
  for (double v : CosineLogits(ortho, p3)) CHECK(v == 0.0);

  // f.P = [1, 0.5]
  const float c = std::sqrt(0.75f);
  const auto hand = MakePrototypes(2, 2, {1, 0, 0.5f, c});
  const auto hl = CosineLogits(f, hand);
  CHECK(hl[0] == doctest::Approx(100.0));
  CHECK(hl[1] == doctest::Approx(50.0));

  CHECK_THROWS(MakePrototypes(1, 2, {2, 0}));
}

TEST_CASE("softmax and entropy") {
  const std::vector<double> zero{0, 0};
  const auto p = Softmax(zero);
  CHECK(p[0] == doctest::Approx(0.5));
  const std::vector<double> big{1000, 0};
  const auto q = Softmax(big);
  CHECK(q[0] == doctest::Approx(1.0));
  CHECK(q[1] == doctest::Approx(0.0));
  CHECK(std::isfinite(q[1]));

  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 3);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> v(7);
    for (auto& x : v) x = n(rng);
    CHECK(ArgMax(Softmax(v)) == ArgMax(v));
    const double h = NormalizedEntropy(Softmax(v));
    CHECK(h >= 0.0);
    CHECK(h <= 1.0);
  }

  const std::vector<double> uniform(5, 0.2);
  CHECK(NormalizedEntropy(uniform) == doctest::Approx(1.0));
  const std::vector<double> onehot{0, 1, 0};
  CHECK(NormalizedEntropy(onehot) == 0.0);
  const std::vector<double> two{0.9, 0.1};
  CHECK(NormalizedEntropy(two) == doctest::Approx(0.4690).epsilon(1e-4));
}

TEST_CASE("cosine logits ignore renormalizing an already unit feature") {
  const auto p = MakePrototypes(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  const std::vector<float> f{0.48f, 0.6f, 0.64f};
  const auto a = CosineLogits(f, p);
  const auto b = CosineLogits(L2Normalize(f).vector, p);
  CHECK(ArgMax(a) == ArgMax(b));
  for (int i = 0; i < 3; ++i) CHECK(a[i] == doctest::Approx(b[i]));
}
