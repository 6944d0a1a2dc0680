#pragma once

// Gradient-free streaming adaptation with positive and negative exemplar
// caches. For a unit feature f with baseline logits l0:
//
//   l_c = l0_c + lambda * sum_{i in C+} phi(f.e_i; beta+) p_ic
//              - mu     * sum_{j in C-} phi(f.e_j; beta-) pbar_jc
//
// with phi(z; beta) = exp(-beta (1 - z)), or phi(z) = z in raw mode.

#include <cstdint>
#include <deque>
#include <span>
#include <string>
#include <vector>

#include "lqa/qlinear.hpp"

namespace lqa::tta {

enum class Eviction { kFifo, kEntropyPriority };
enum class Affinity { kExponential, kRaw };
enum class GateSource { kBaseline, kAdjusted };

struct PositiveCacheConfig {
  bool enabled = true;
  int shot_capacity = 3;
  double alpha = 1.0;  // lambda
  double beta = 8.0;
  double tau = 0.0;    // confidence gate on max probability
};

struct NegativeCacheConfig {
  bool enabled = true;
  int shot_capacity = 2;
  double alpha = 0.117;  // mu
  double beta = 1.0;
  double entropy_lower = 0.2;
  double entropy_upper = 0.5;
  double mask_lower = 0.03;
  double mask_upper = 1.0;
};

struct AdaptationConfig {
  PositiveCacheConfig pos;
  NegativeCacheConfig neg;
  Eviction eviction = Eviction::kFifo;
  Affinity affinity = Affinity::kExponential;
  GateSource gate_on = GateSource::kBaseline;
  double logit_scale = 100.0;
};

void ValidateConfig(const AdaptationConfig& cfg);

// Per-dataset presets: cifar10, cifar100, caltech101, oxford, dtd, ucf101,
// imagenet-a. The negative cache settings are shared.
AdaptationConfig Preset(const std::string& name);
std::vector<std::string> PresetNames();

const char* ToString(Eviction e);
const char* ToString(Affinity a);
const char* ToString(GateSource g);

struct CacheEntry {
  std::vector<float> feature;  // unit norm
  std::vector<double> prob;    // for negative entries: the masked vector
  double entropy = 0.0;
  uint64_t arrival = 0;
};

using ClassQueue = std::deque<CacheEntry>;

struct CacheState {
  std::vector<ClassQueue> positive;  // indexed by class
  std::vector<ClassQueue> negative;

  size_t positive_size() const;
  size_t negative_size() const;
  bool operator==(const CacheState&) const = default;
};

inline bool operator==(const CacheEntry& a, const CacheEntry& b) {
  return a.feature == b.feature && a.prob == b.prob && a.entropy == b.entropy && a.arrival == b.arrival;
}

double AffinityWeight(double similarity, double beta, Affinity mode);

std::vector<double> CacheAdjust(std::span<const double> base_logits, std::span<const float> feature,
                                const CacheState& state, const AdaptationConfig& cfg);

// Both return true when the entry was stored.
bool AdmitPositive(std::span<const float> feature, std::span<const double> prob, uint64_t arrival,
                   CacheState& state, const AdaptationConfig& cfg);
bool AdmitNegative(std::span<const float> feature, std::span<const double> prob, uint64_t arrival,
                   CacheState& state, const AdaptationConfig& cfg);

// p_c if p_c lies in [lower, upper], else 0. Not renormalized.
std::vector<double> MaskProbabilities(std::span<const double> prob, double lower, double upper);

struct StepResult {
  uint32_t prediction = 0;
  std::vector<double> base_logits;
  std::vector<double> logits;
  double confidence = 0.0;      // max softmax of the adjusted logits
  std::vector<double> gate_prob;  // distribution that drove admission
  double gate_entropy = 0.0;
  bool admitted_positive = false;
  bool admitted_negative = false;
};

class Engine {
 public:
  Engine(qlinear::Prototypes prototypes, AdaptationConfig cfg);

  StepResult Step(std::span<const float> raw_feature);
  void Reset();

  const CacheState& cache() const { return cache_; }
  const qlinear::Prototypes& prototypes() const { return prototypes_; }
  const AdaptationConfig& config() const { return cfg_; }
  uint64_t steps() const { return arrivals_; }

  // Live cache bytes: (4 d + 4 C + 16) per stored entry.
  uint64_t CacheBytes() const;
  uint64_t BytesPerEntry() const;

 private:
  qlinear::Prototypes prototypes_;
  AdaptationConfig cfg_;
  CacheState cache_;
  uint64_t arrivals_ = 0;
};

}  // namespace lqa::tta
