#include <cmath>
#include <random>

#include "doctest.h"
#include "lqa/bench.hpp"
#include "lqa/error.hpp"
#include "lqa/json_io.hpp"
#include "lqa/tta_engine.hpp"

using namespace lqa;
using namespace lqa::tta;

namespace {

qlinear::Prototypes Axes(uint32_t classes, uint32_t dim) {
  std::vector<float> rows(static_cast<size_t>(classes) * dim, 0.0f);
  for (uint32_t c = 0; c < classes; ++c) rows[c * dim + c] = 1.0f;
  return qlinear::MakePrototypes(classes, dim, rows);
}

CacheEntry Entry(std::vector<float> f, std::vector<double> p, double h, uint64_t arrival) {
  return CacheEntry{std::move(f), std::move(p), h, arrival};
}

}  // namespace

TEST_CASE("empty caches leave logits untouched") {
  CacheState state;
  AdaptationConfig cfg;
  const std::vector<double> base{3.0, -1.0, 2.5};
  const std::vector<float> f{1, 0, 0};
  CHECK(CacheAdjust(base, f, state, cfg) == base);
}

TEST_CASE("one positive entry, hand evaluated") {
  CacheState state;
  state.positive.resize(2);
  state.positive[0].push_back(Entry({1, 0}, {1.0, 0.0}, 0.0, 0));
  AdaptationConfig cfg;
  cfg.pos.alpha = 1.0;
  cfg.pos.beta = 1.0;
  CHECK(AffinityWeight(1.0, 1.0, Affinity::kExponential) == 1.0);
  const std::vector<double> base{10.0, 20.0};
  const std::vector<float> f{1, 0};
  const auto out = CacheAdjust(base, f, state, cfg);
  CHECK(out[0] == doctest::Approx(11.0));
  CHECK(out[1] == doctest::Approx(20.0));
}

TEST_CASE("zero gains make the adjustment the identity") {
  CacheState state;
  state.positive.resize(2);
  state.negative.resize(2);
  state.positive[1].push_back(Entry({0.6f, 0.8f}, {0.3, 0.7}, 0.9, 0));
  state.negative[0].push_back(Entry({0.8f, 0.6f}, {0.6, 0.4}, 0.3, 1));
  AdaptationConfig cfg;
  const std::vector<double> base{1.0, 2.0};
  const std::vector<float> f{1, 0};

  auto off = cfg;
  off.neg.enabled = false;
  auto zero_mu = cfg;
  zero_mu.neg.alpha = 0.0;
  CHECK(CacheAdjust(base, f, state, zero_mu) == CacheAdjust(base, f, state, off));

  auto none = cfg;
  none.pos.alpha = 0.0;
  none.neg.alpha = 0.0;
  CHECK(CacheAdjust(base, f, state, none) == base);
}

TEST_CASE("confidence gate") {
  CacheState state;
  AdaptationConfig cfg;
  cfg.pos.tau = 0.9;
  const std::vector<float> f{1, 0};
  const std::vector<double> p{0.5, 0.5};
  CHECK_FALSE(AdmitPositive(f, p, 0, state, cfg));
  CHECK(state.positive_size() == 0);
}

TEST_CASE("fifo keeps the latest entries") {
  CacheState state;
  AdaptationConfig cfg;
  const std::vector<float> f{1, 0};
  const std::vector<double> p{0.9, 0.1};
  for (uint64_t a = 1; a <= 4; ++a) CHECK(AdmitPositive(f, p, a, state, cfg));
  REQUIRE(state.positive[0].size() == 3);
  CHECK(state.positive[0][0].arrival == 2);
  CHECK(state.positive[0][1].arrival == 3);
  CHECK(state.positive[0][2].arrival == 4);
}

TEST_CASE("entropy priority replaces the most uncertain incumbent") {
  CacheState state;
  state.positive.resize(2);
  state.positive[0].push_back(Entry({1, 0}, {0.99, 0.01}, 0.1, 0));
  state.positive[0].push_back(Entry({1, 0}, {0.97, 0.03}, 0.2, 1));
  state.positive[0].push_back(Entry({1, 0}, {0.94, 0.06}, 0.3, 2));
  AdaptationConfig cfg;
  cfg.eviction = Eviction::kEntropyPriority;
  // solve for p with normalized entropy 0.25
  double lo = 0.5, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const std::vector<double> q{mid, 1 - mid};
    (qlinear::NormalizedEntropy(q) > 0.25 ? lo : hi) = mid;
  }
  const std::vector<double> p{lo, 1 - lo};
  const std::vector<float> f{1, 0};
  CHECK(AdmitPositive(f, p, 3, state, cfg));
  REQUIRE(state.positive[0].size() == 3);
  std::vector<uint64_t> arrivals;
  for (const auto& e : state.positive[0]) arrivals.push_back(e.arrival);
  std::sort(arrivals.begin(), arrivals.end());
  CHECK(arrivals == std::vector<uint64_t>{0, 1, 3});

  const std::vector<double> worse{0.6, 0.4};
  CHECK_FALSE(AdmitPositive(f, worse, 4, state, cfg));
}

TEST_CASE("negative admission window and mask") {
  CacheState state;
  AdaptationConfig cfg;
  const std::vector<float> f{1, 0, 0};
  const std::vector<double> confident{0.99, 0.005, 0.005};
  CHECK(qlinear::NormalizedEntropy(confident) < 0.2);
  CHECK_FALSE(AdmitNegative(f, confident, 0, state, cfg));

  const std::vector<double> p{0.02, 0.6, 0.38};
  CHECK(MaskProbabilities(p, 0.03, 1.0) == std::vector<double>{0.0, 0.6, 0.38});

  double lo = 0.34, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    const std::vector<double> q{mid, (1 - mid) / 2, (1 - mid) / 2};
    (qlinear::NormalizedEntropy(q) > 0.35 ? lo : hi) = mid;
  }
  const std::vector<double> mid{lo, (1 - lo) / 2, (1 - lo) / 2};
  for (uint64_t a = 0; a < 5; ++a) CHECK(AdmitNegative(f, mid, a, state, cfg));
  CHECK(state.negative[0].size() == 2);
}

TEST_CASE("engine basics") {
  AdaptationConfig cfg;
  Engine engine(Axes(3, 4), cfg);
  const std::vector<float> f{0.2f, 1.0f, 0.1f, 0.3f};
  const auto first = engine.Step(f);
  CHECK(first.prediction == qlinear::ArgMax(first.base_logits));
  CHECK(first.logits == first.base_logits);

  for (int i = 0; i < 20; ++i) CHECK(engine.Step(f).prediction == first.prediction);

  const auto protos = engine.prototypes().rows;
  engine.Reset();
  CHECK(engine.prototypes().rows == protos);
  CHECK(engine.cache().positive_size() == 0);
  Engine fresh(Axes(3, 4), cfg);
  const auto a = engine.Step(f);
  const auto b = fresh.Step(f);
  CHECK(a.logits == b.logits);
  engine.Reset();
  const auto once = engine.cache();
  engine.Reset();
  CHECK(engine.cache() == once);

  const std::vector<float> wrong{1, 0};
  CHECK_THROWS_AS(engine.Step(wrong), Error);
}

TEST_CASE("disabled caches reproduce the baseline exactly") {
  bench::SynthSpec spec;
  spec.samples = 300;
  spec.seed = 3;
  spec.sigma = 1.0;
  spec.delta = 3.0;
  const auto s = bench::SynthStream(spec);
  AdaptationConfig cfg;
  cfg.pos.enabled = false;
  cfg.neg.enabled = false;
  Engine engine(qlinear::MakePrototypes(s.class_count, s.dim, s.prototypes), cfg);
  for (uint64_t i = 0; i < s.sample_count(); ++i) {
    const auto r = engine.Step({s.feature(i), s.dim});
    CHECK(r.logits == r.base_logits);
  }
}

TEST_CASE("cache bytes") {
  Engine engine(Axes(10, 64), AdaptationConfig{});
  CHECK(engine.BytesPerEntry() == 4 * 64 + 4 * 10 + 16);
  CHECK(engine.CacheBytes() == 0);
}

TEST_CASE("presets") {
  const auto c10 = Preset("cifar10");
  CHECK(c10.pos.alpha == 1.0);
  CHECK(c10.pos.beta == 8.0);
  CHECK(c10.pos.shot_capacity == 3);
  CHECK(c10.neg.shot_capacity == 2);
  CHECK(c10.neg.alpha == 0.117);
  CHECK(c10.neg.beta == 1.0);
  CHECK(c10.neg.entropy_lower == 0.2);
  CHECK(c10.neg.entropy_upper == 0.5);
  CHECK(c10.neg.mask_lower == 0.03);
  CHECK(c10.neg.mask_upper == 1.0);
  CHECK(Preset("caltech101").pos.alpha == 5.0);
  CHECK(Preset("caltech101").pos.beta == 5.0);
  CHECK(Preset("dtd").pos.beta == 3.0);
  CHECK(Preset("ucf101").pos.alpha == 3.0);
  CHECK(Preset("imagenet-a").pos.beta == 5.0);
  CHECK(PresetNames().size() == 7);
  CHECK_THROWS_AS(Preset("mnist"), Error);
}

TEST_CASE("config json") {
  const auto cfg = ConfigFromText(R"({"preset": "dtd", "pos": {"tau": 0.5}, "eviction": "entropy_priority"})");
  CHECK(cfg.pos.alpha == 2.0);
  CHECK(cfg.pos.tau == 0.5);
  CHECK(cfg.eviction == Eviction::kEntropyPriority);
  const auto back = ConfigFromText(ConfigToJson(cfg).dump());
  CHECK(ConfigToJson(back) == ConfigToJson(cfg));
  CHECK_THROWS_WITH(ConfigFromText(R"({"pos": {"alpha": "high"}})"), "config: field 'pos.alpha' must be a number");
  CHECK_THROWS_AS(ConfigFromText("{not json"), Error);
  CHECK_THROWS_AS(ConfigFromText(R"({"pos": {"shot_capacity": -1}})"), Error);
}
