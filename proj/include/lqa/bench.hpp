#pragma once

// Evaluation harness: synthetic shifted streams, streaming evaluation at batch
// size 1, memory accounting and bit/group sweeps.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lqa/qtk_format.hpp"
#include "lqa/quant_core.hpp"
#include "lqa/tta_engine.hpp"

namespace lqa::bench {

struct SynthSpec {
  uint32_t classes = 10;
  uint32_t dim = 64;
  uint64_t samples = 2000;
  double sigma = 0.3;  // intra-class noise
  double delta = 0.6;  // shared shift magnitude
  double rho = 0.1;    // prototype mismatch
  uint64_t seed = 0;
};

// Centroids are uniform on the unit sphere; noise vectors are isotropic
// Gaussians with per-coordinate std 1/sqrt(d) (unit expected norm). Labels are
// assigned round-robin.
qtk::FeatureStream SynthStream(const SynthSpec& spec);

// Argmax of cosine similarity against the prototypes, computed directly.
std::vector<uint32_t> ZeroShotPredictions(const qtk::FeatureStream& stream);

struct LayerBytes {
  std::string name;
  std::string modality;  // "vision", "text" or "other"
  qtk::DType dtype = qtk::DType::kFP32;
  uint64_t params = 0;
  uint64_t bytes = 0;
};

struct MemoryFootprint {
  std::vector<LayerBytes> layers;
  std::map<std::string, uint64_t> bytes_by_modality;
  uint64_t total_bytes = 0;
  uint64_t total_params = 0;
  double bits_per_weight = 0.0;
  double fp32_ratio = 0.0;  // fp32 bytes / total bytes
};

// Layout arithmetic only; does not look at payloads.
MemoryFootprint ComputeFootprint(const std::vector<qtk::TensorRecord>& container);

struct Budgets {
  std::optional<uint64_t> memory_bytes;    // B_M
  std::optional<double> latency_seconds;   // B_L
};

struct MetricsReport {
  uint64_t samples = 0;
  uint64_t correct = 0;
  double top1 = 0.0;
  uint64_t zero_shot_correct = 0;
  double zero_shot_top1 = 0.0;
  double latency_mean_s = 0.0;
  double latency_first10_s = 0.0;
  uint64_t model_bytes = 0;
  uint64_t cache_bytes_peak = 0;
  uint64_t total_bytes = 0;
  Budgets budgets;
  std::optional<bool> memory_ok;
  std::optional<bool> latency_ok;
  tta::AdaptationConfig config;
  uint64_t seed = 0;
  std::vector<uint32_t> predictions;
  uint64_t positive_admissions = 0;
  uint64_t negative_admissions = 0;
};

struct EvalOptions {
  Budgets budgets;
  uint64_t model_bytes = 0;
  uint64_t seed = 0;
};

MetricsReport RunEval(const qtk::FeatureStream& stream, tta::Engine& engine, const EvalOptions& options = {});

// Serialized with sorted keys. Timing fields are included only on request so
// that reports are reproducible byte for byte.
std::string ReportToText(const MetricsReport& report, bool include_timing);

struct SweepRow {
  int bits = 0;
  int group_size = 0;
  double rel_error = 0.0;  // mean relative Frobenius error over tensors
  double mse = 0.0;        // mean per-tensor mse
  uint64_t bytes = 0;      // quantized payload bytes over all tensors
  bool operator==(const SweepRow&) const = default;
};

// One row per (bits, group) pair, bits-major in the given order. Rows are
// computed in parallel.
std::vector<SweepRow> Sweep(const std::vector<qtk::TensorRecord>& container, const std::vector<int>& bits,
                            const std::vector<int>& groups, quant::QuantMode mode);
std::vector<SweepRow> SweepSerial(const std::vector<qtk::TensorRecord>& container, const std::vector<int>& bits,
                                  const std::vector<int>& groups, quant::QuantMode mode);

std::string SweepToCsv(const std::vector<SweepRow>& rows);

// Small two-modality model with CLIP-style tensor names (vision.blocks.0.*,
// vision.ln_post.*, vision.proj, text.*). Width 256 so every supported group
// size divides the rows evenly.
std::vector<qtk::TensorRecord> SynthModel(uint64_t seed);

// Gaussian tensors named "vision.gauss.N" for sweeps and tests.
std::vector<qtk::TensorRecord> GaussianContainer(int count, uint64_t rows, uint64_t cols, uint64_t seed);

}  // namespace lqa::bench
