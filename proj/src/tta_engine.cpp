#include "lqa/tta_engine.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lqa/error.hpp"

namespace lqa::tta {
namespace {

struct PositivePreset {
  double alpha;
  double beta;
};

const std::map<std::string, PositivePreset>& PositivePresets() {
  static const std::map<std::string, PositivePreset> presets = {
      {"cifar10", {1.0, 8.0}}, {"cifar100", {1.0, 8.0}}, {"caltech101", {5.0, 5.0}}, {"oxford", {2.0, 7.0}},
      {"dtd", {2.0, 3.0}},     {"ucf101", {3.0, 8.0}},   {"imagenet-a", {2.0, 5.0}},
  };
  return presets;
}

void Require(bool ok, const std::string& message) {
  if (!ok) throw Error(ErrorCode::kInvalidArgument, message);
}

bool Insert(ClassQueue& queue, CacheEntry entry, size_t capacity, Eviction eviction) {
  if (capacity == 0) return false;
  if (queue.size() < capacity) {
    queue.push_back(std::move(entry));
    return true;
  }
  if (eviction == Eviction::kFifo) {
    queue.pop_front();
    queue.push_back(std::move(entry));
    return true;
  }
  auto worst = std::max_element(queue.begin(), queue.end(),
                                [](const CacheEntry& a, const CacheEntry& b) { return a.entropy < b.entropy; });
  if (entry.entropy >= worst->entropy) return false;
  queue.erase(worst);
  queue.push_back(std::move(entry));
  return true;
}

double SumTerm(const std::vector<ClassQueue>& queues, std::span<const float> feature, double beta, Affinity mode,
               std::vector<double>& acc) {
  double total_weight = 0.0;
  for (const auto& queue : queues) {
    for (const auto& e : queue) {
      double sim = 0.0;
      for (size_t j = 0; j < feature.size(); ++j) sim += static_cast<double>(feature[j]) * e.feature[j];
      const double w = AffinityWeight(sim, beta, mode);
      total_weight += w;
      for (size_t c = 0; c < acc.size(); ++c) acc[c] += w * e.prob[c];
    }
  }
  return total_weight;
}

}  // namespace

const char* ToString(Eviction e) { return e == Eviction::kFifo ? "fifo" : "entropy_priority"; }
const char* ToString(Affinity a) { return a == Affinity::kExponential ? "exp" : "raw"; }
const char* ToString(GateSource g) { return g == GateSource::kBaseline ? "baseline" : "adjusted"; }

void ValidateConfig(const AdaptationConfig& cfg) {
  Require(cfg.pos.shot_capacity >= 0, "pos.shot_capacity must be non-negative");
  Require(cfg.neg.shot_capacity >= 0, "neg.shot_capacity must be non-negative");
  Require(cfg.pos.alpha >= 0.0, "pos.alpha must be non-negative");
  Require(cfg.neg.alpha >= 0.0, "neg.alpha must be non-negative");
  Require(cfg.pos.beta > 0.0, "pos.beta must be positive");
  Require(cfg.neg.beta > 0.0, "neg.beta must be positive");
  Require(cfg.pos.tau >= 0.0 && cfg.pos.tau <= 1.0, "pos.tau must be in [0, 1]");
  Require(cfg.neg.entropy_lower >= 0.0 && cfg.neg.entropy_lower < cfg.neg.entropy_upper &&
              cfg.neg.entropy_upper <= 1.0,
          "neg.entropy window must satisfy 0 <= lower < upper <= 1");
  Require(cfg.neg.mask_lower >= 0.0 && cfg.neg.mask_lower < cfg.neg.mask_upper && cfg.neg.mask_upper <= 1.0,
          "neg.mask window must satisfy 0 <= lower < upper <= 1");
  Require(cfg.logit_scale > 0.0, "logit_scale must be positive");
}

AdaptationConfig Preset(const std::string& name) {
  const auto& presets = PositivePresets();
  const auto it = presets.find(name);
  if (it == presets.end()) throw Error(ErrorCode::kInvalidArgument, "unknown adaptation preset: " + name);
  AdaptationConfig cfg;
  cfg.pos.alpha = it->second.alpha;
  cfg.pos.beta = it->second.beta;
  return cfg;
}

std::vector<std::string> PresetNames() {
  std::vector<std::string> names;
  for (const auto& [name, _] : PositivePresets()) names.push_back(name);
  return names;
}

size_t CacheState::positive_size() const {
  size_t n = 0;
  for (const auto& q : positive) n += q.size();
  return n;
}

size_t CacheState::negative_size() const {
  size_t n = 0;
  for (const auto& q : negative) n += q.size();
  return n;
}

double AffinityWeight(double similarity, double beta, Affinity mode) {
  return mode == Affinity::kRaw ? similarity : std::exp(-beta * (1.0 - similarity));
}

std::vector<double> CacheAdjust(std::span<const double> base_logits, std::span<const float> feature,
                                const CacheState& state, const AdaptationConfig& cfg) {
  std::vector<double> logits(base_logits.begin(), base_logits.end());
  if (cfg.pos.enabled && cfg.pos.alpha != 0.0 && state.positive_size() > 0) {
    std::vector<double> acc(logits.size(), 0.0);
    SumTerm(state.positive, feature, cfg.pos.beta, cfg.affinity, acc);
    for (size_t c = 0; c < logits.size(); ++c) logits[c] += cfg.pos.alpha * acc[c];
  }
  if (cfg.neg.enabled && cfg.neg.alpha != 0.0 && state.negative_size() > 0) {
    std::vector<double> acc(logits.size(), 0.0);
    SumTerm(state.negative, feature, cfg.neg.beta, cfg.affinity, acc);
    for (size_t c = 0; c < logits.size(); ++c) logits[c] -= cfg.neg.alpha * acc[c];
  }
  return logits;
}

bool AdmitPositive(std::span<const float> feature, std::span<const double> prob, uint64_t arrival,
                   CacheState& state, const AdaptationConfig& cfg) {
  if (!cfg.pos.enabled || prob.empty()) return false;
  const uint32_t cls = qlinear::ArgMax(prob);
  if (prob[cls] < cfg.pos.tau) return false;
  if (state.positive.size() < prob.size()) state.positive.resize(prob.size());
  CacheEntry entry{std::vector<float>(feature.begin(), feature.end()),
                   std::vector<double>(prob.begin(), prob.end()), qlinear::NormalizedEntropy(prob), arrival};
  return Insert(state.positive[cls], std::move(entry), static_cast<size_t>(cfg.pos.shot_capacity), cfg.eviction);
}

std::vector<double> MaskProbabilities(std::span<const double> prob, double lower, double upper) {
  std::vector<double> out(prob.size());
  for (size_t c = 0; c < prob.size(); ++c) out[c] = (prob[c] >= lower && prob[c] <= upper) ? prob[c] : 0.0;
  return out;
}

bool AdmitNegative(std::span<const float> feature, std::span<const double> prob, uint64_t arrival,
                   CacheState& state, const AdaptationConfig& cfg) {
  if (!cfg.neg.enabled || prob.empty()) return false;
  const double h = qlinear::NormalizedEntropy(prob);
  if (h < cfg.neg.entropy_lower || h > cfg.neg.entropy_upper) return false;
  const uint32_t cls = qlinear::ArgMax(prob);
  if (state.negative.size() < prob.size()) state.negative.resize(prob.size());
  CacheEntry entry{std::vector<float>(feature.begin(), feature.end()),
                   MaskProbabilities(prob, cfg.neg.mask_lower, cfg.neg.mask_upper), h, arrival};
  return Insert(state.negative[cls], std::move(entry), static_cast<size_t>(cfg.neg.shot_capacity), cfg.eviction);
}

Engine::Engine(qlinear::Prototypes prototypes, AdaptationConfig cfg)
    : prototypes_(std::move(prototypes)), cfg_(cfg) {
  ValidateConfig(cfg_);
  prototypes_.logit_scale = cfg_.logit_scale;
  Reset();
}

void Engine::Reset() {
  cache_.positive.assign(prototypes_.class_count, {});
  cache_.negative.assign(prototypes_.class_count, {});
  arrivals_ = 0;
}

StepResult Engine::Step(std::span<const float> raw_feature) {
  if (raw_feature.size() != prototypes_.dim)
    throw Error(ErrorCode::kMismatch, "dimension mismatch: feature has " + std::to_string(raw_feature.size()) +
                                          ", prototypes have " + std::to_string(prototypes_.dim));
  const auto normalized = qlinear::L2Normalize(raw_feature);
  const std::span<const float> f = normalized.vector;

  StepResult r;
  r.base_logits = qlinear::CosineLogits(f, prototypes_);
  r.logits = CacheAdjust(r.base_logits, f, cache_, cfg_);
  r.prediction = qlinear::ArgMax(r.logits);
  const auto adjusted = qlinear::Softmax(r.logits);
  r.confidence = adjusted[r.prediction];
  r.gate_prob = cfg_.gate_on == GateSource::kBaseline ? qlinear::Softmax(r.base_logits) : adjusted;
  r.gate_entropy = qlinear::NormalizedEntropy(r.gate_prob);

  const uint64_t arrival = arrivals_++;
  if (!normalized.was_zero) {
    r.admitted_positive = AdmitPositive(f, r.gate_prob, arrival, cache_, cfg_);
    r.admitted_negative = AdmitNegative(f, r.gate_prob, arrival, cache_, cfg_);
  }
  return r;
}

uint64_t Engine::BytesPerEntry() const { return 4ull * prototypes_.dim + 4ull * prototypes_.class_count + 16; }

uint64_t Engine::CacheBytes() const {
  return BytesPerEntry() * (cache_.positive_size() + cache_.negative_size());
}

}  // namespace lqa::tta
