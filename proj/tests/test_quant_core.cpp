#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "lqa/error.hpp"
#include "lqa/half.hpp"
#include "lqa/quant_core.hpp"
#include "oracles.hpp"

using namespace lqa;
using namespace lqa::quant;

namespace {

std::vector<float> Gaussian(std::mt19937_64& rng, size_t n, float stddev = 1.0f) {
  std::normal_distribution<float> dist(0.0f, stddev);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

QuantConfig Config(int bits, int group, QuantMode mode = QuantMode::kAsymmetric) {
  QuantConfig c;
  c.bits = bits;
  c.group_size = group;
  c.mode = mode;
  return c;
}

}  // namespace

TEST_CASE("zero group, b=4") {
  const std::vector<float> w{0, 0, 0, 0};
  const auto fit = FitAsymmetric(w, 4);
  CHECK(fit.squared_error == 0.0);
  for (int c : fit.codes) CHECK(c == fit.codes[0]);
  for (float v : DequantizeGroup(fit)) CHECK(v == 0.0f);
}

TEST_CASE("constant group dequantizes exactly") {
  const std::vector<float> w{0.7f, 0.7f, 0.7f, 0.7f};
  for (auto mode : {QuantMode::kAsymmetric, QuantMode::kSymmetric}) {
    const auto fit = mode == QuantMode::kAsymmetric ? FitAsymmetric(w, 4) : FitSymmetric(w, 4);
    for (float v : DequantizeGroup(fit)) CHECK(v == 0.7f);
    CHECK(fit.squared_error == 0.0);
  }
  const std::vector<float> neg{-0.3f, -0.3f, -0.3f};
  for (float v : DequantizeGroup(FitAsymmetric(neg, 2))) CHECK(v == -0.3f);
}

TEST_CASE("hand group [-1, -0.2, 0.3, 1.4] at b=2 is near the brute-force optimum") {
  const std::vector<float> w{-1.0f, -0.2f, 0.3f, 1.4f};
  const auto fit = FitAsymmetric(w, 2);
  const double best = testing::BruteForceAsymmetric(w, 2);
  CHECK(fit.squared_error <= 1.05 * best + 1e-12);
  CHECK(fit.squared_error <= fit.initial_squared_error);
}

TEST_CASE("symmetric grid-representable and zero groups") {
  const std::vector<float> w{0.5f, -1.5f, 1.0f};
  const auto fit = FitSymmetric(w, 8);
  CHECK(fit.zero_point == 0);
  CHECK(fit.squared_error == 0.0);
  CHECK(DequantizeGroup(fit) == w);

  const std::vector<float> z(6, 0.0f);
  const auto zf = FitSymmetric(z, 4);
  CHECK(zf.scale == kScaleGuard);
  for (int c : zf.codes) CHECK(c == 0);
  CHECK(zf.squared_error == 0.0);
}

TEST_CASE("random 8-element symmetric group at b=3 vs oracle") {
  std::mt19937_64 rng(3);
  const auto w = Gaussian(rng, 8);
  const auto fit = FitSymmetric(w, 3);
  CHECK(fit.squared_error <= 1.05 * testing::BruteForceSymmetric(w, 3) + 1e-12);
}

TEST_CASE("fits never do worse than their starting point") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int bits_choices[] = {1, 2, 3, 4, 8};
    const int bits = bits_choices[trial % 5];
    const auto w = Gaussian(rng, 3 + trial % 40);
    const auto a = FitAsymmetric(w, bits);
    CHECK(a.squared_error <= a.initial_squared_error);
    const auto s = FitSymmetric(w, bits);
    CHECK(s.squared_error <= s.initial_squared_error);
  }
}

TEST_CASE("symmetric dequantization by hand") {
  const std::vector<int32_t> codes{1, -1};
  CHECK(DequantizeCode(codes[0], 0.25f, 0) == 0.25f);
  CHECK(DequantizeCode(codes[1], 0.25f, 0) == -0.25f);
}

TEST_CASE("group layout follows rows with a tail group") {
  std::mt19937_64 rng(1);
  Tensor one{{128}, Gaussian(rng, 128)};
  const auto a = QuantizeTensor(one, Config(4, 64)).tensor;
  CHECK(a.group_count() == 2);
  CHECK(a.scales.size() == 2);

  Tensor tail{{100}, Gaussian(rng, 100)};
  const auto b = QuantizeTensor(tail, Config(4, 64)).tensor;
  CHECK(b.group_count() == 2);
  CHECK(b.scales.size() == 2);

  // the tail group gets its own fit: quantizing its 36 values alone gives the same metadata
  Tensor last{{36}, std::vector<float>(tail.values.begin() + 64, tail.values.end())};
  const auto c = QuantizeTensor(last, Config(4, 64)).tensor;
  CHECK(c.scales[0] == b.scales[1]);
  CHECK(c.zero_points[0] == b.zero_points[1]);

  Tensor rows{{3, 100}, Gaussian(rng, 300)};
  CHECK(QuantizeTensor(rows, Config(4, 64)).tensor.group_count() == 6);
}

TEST_CASE("8-bit beats 4-bit on a Gaussian tensor") {
  std::mt19937_64 rng(5);
  Tensor t{{4096}, Gaussian(rng, 4096)};
  const auto e8 = QuantizeTensor(t, Config(8, 128)).error;
  const auto e4 = QuantizeTensor(t, Config(4, 128)).error;
  CHECK(e8.rel_frobenius < e4.rel_frobenius);
  const auto e1 = QuantizeTensor(t, Config(1, 128)).error;
  CHECK(e1.squared_error > e8.squared_error);
}

TEST_CASE("grid-representable tensor survives quantize/dequantize exactly") {
  Tensor t{{2, 8}, {}};
  for (int i = 0; i < 16; ++i) t.values.push_back(0.25f * static_cast<float>(i - 7));
  for (auto mode : {QuantMode::kAsymmetric, QuantMode::kSymmetric}) {
    const auto r = QuantizeTensor(t, Config(8, 8, mode));
    CHECK(DequantizeTensor(r.tensor).values == t.values);
    CHECK(r.error.squared_error == 0.0);
  }
}

TEST_CASE("reported fit error equals the roundtrip error bit for bit") {
  std::mt19937_64 rng(9);
  for (int bits : {1, 2, 3, 4, 8}) {
    for (auto mode : {QuantMode::kAsymmetric, QuantMode::kSymmetric}) {
      Tensor t{{7, 45}, Gaussian(rng, 315, 0.05f)};
      const auto r = QuantizeTensor(t, Config(bits, 16, mode));
      const auto back = DequantizeTensor(r.tensor);
      const auto err = ReconstructionError(t.values, back.values);
      CHECK(err.squared_error == r.error.squared_error);
      CHECK(err.mse == r.error.mse);
      CHECK(err.rel_frobenius == r.error.rel_frobenius);
      for (float s : r.tensor.scales) CHECK(RoundToHalf(s) == s);
    }
  }
}

TEST_CASE("parallel and serial quantization agree exactly") {
  std::mt19937_64 rng(21);
  Tensor t{{33, 200}, Gaussian(rng, 6600)};
  for (auto mode : {QuantMode::kAsymmetric, QuantMode::kSymmetric}) {
    const auto p = QuantizeTensor(t, Config(3, 32, mode));
    const auto s = QuantizeTensorSerial(t, Config(3, 32, mode));
    CHECK(p.tensor == s.tensor);
    CHECK(p.error.squared_error == s.error.squared_error);
  }
}

TEST_CASE("packing layout") {
  const std::vector<uint32_t> a{1, 2, 3};
  CHECK(PackCodes(a, 4) == std::vector<uint8_t>{0x21, 0x03});
  const std::vector<uint32_t> b(8, 7);
  CHECK(PackCodes(b, 3) == std::vector<uint8_t>{0xFF, 0xFF, 0xFF});
  const std::vector<uint32_t> bad{16};
  CHECK_THROWS_AS(PackCodes(bad, 4), Error);
}

TEST_CASE("packing roundtrips random codes") {
  std::mt19937_64 rng(2);
  for (int bits : {1, 2, 3, 4, 8}) {
    std::uniform_int_distribution<uint32_t> code(0, (1u << bits) - 1);
    std::vector<uint32_t> codes(1000);
    for (auto& c : codes) c = code(rng);
    const auto packed = PackCodes(codes, bits);
    CHECK(packed.size() == (1000 * bits + 7) / 8);
    CHECK(UnpackCodes(packed, bits, codes.size()) == codes);
    for (size_t i = 0; i < codes.size(); ++i) CHECK(ReadCode(packed.data(), packed.size(), i, bits) == codes[i]);
  }
}

TEST_CASE("reconstruction error by hand") {
  const std::vector<float> w{1.0f, 0.0f};
  const std::vector<float> z{0.0f, 0.0f};
  const auto e = ReconstructionError(w, z);
  CHECK(e.mse == doctest::Approx(0.5));
  CHECK(e.rel_frobenius == doctest::Approx(1.0));
  const auto same = ReconstructionError(w, w);
  CHECK(same.mse == 0.0);
  CHECK(same.rel_frobenius == 0.0);
  const std::vector<float> shorter{1.0f};
  CHECK_THROWS_WITH(ReconstructionError(w, shorter), "shape mismatch in reconstruction_error");
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(ValidateConfig(Config(5, 64)), Error);
  CHECK_THROWS_AS(ValidateConfig(Config(4, 4)), Error);
  CHECK_THROWS_AS(ValidateConfig(Config(4, 1024)), Error);
  CHECK_NOTHROW(ValidateConfig(Config(3, 512)));
  CHECK(ParseQuantMode("sym") == QuantMode::kSymmetric);
  CHECK_THROWS_AS(ParseQuantMode("nf4"), Error);
}

TEST_CASE("record conversion validates metadata") {
  std::mt19937_64 rng(4);
  Tensor t{{4, 32}, Gaussian(rng, 128)};
  const auto qt = QuantizeTensor(t, Config(4, 16)).tensor;
  auto rec = ToRecord("vision.w", qt);
  CHECK(rec.payload.size() == qtk::QPackedPayloadBytes(rec.shape, 4, 16));
  CHECK(FromRecord(rec) == qt);
  rec.payload.pop_back();
  CHECK_THROWS_AS(FromRecord(rec), Error);
}
