#pragma once

// Per-layer precision plans: which tensors are quantized (and how) and which
// stay in fp16. Modality comes from the name prefix ("vision." / "text.").

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lqa/qtk_format.hpp"
#include "lqa/quant_core.hpp"

namespace lqa::select {

enum class Modality { kVision, kText };

const char* ToString(Modality m);
Modality ModalityOf(const std::string& tensor_name);  // throws on untagged names

struct LayerEntry {
  Modality modality = Modality::kVision;
  bool retain_fp16 = false;
  quant::QuantConfig config;  // ignored when retain_fp16

  bool operator==(const LayerEntry& o) const {
    return modality == o.modality && retain_fp16 == o.retain_fp16 &&
           (retain_fp16 || (config.bits == o.config.bits && config.group_size == o.config.group_size &&
                            config.mode == o.config.mode));
  }
};

struct QuantPlan {
  std::map<std::string, LayerEntry> layers;
  std::vector<std::string> retain;  // sorted tensor names
  std::vector<std::string> warnings;

  bool operator==(const QuantPlan& o) const { return layers == o.layers && retain == o.retain; }
};

// Squared reconstruction error per parameter under cfg.
double SensitivityScore(const quant::Tensor& w, const quant::QuantConfig& cfg);

struct SensitivityReport {
  std::map<std::string, double> scores;
  std::vector<std::string> ranking;  // descending score, ties by name
};

struct RetainSpec {
  // Top-k most sensitive tensors per modality when set.
  std::optional<int> auto_top_k;
  // Layer names or prefixes: "vision.proj" matches "vision.proj" and
  // "vision.proj.*". Every entry must match at least one tensor unless
  // allow_missing is set.
  std::vector<std::string> names;
  bool allow_missing = false;
};

struct PlanConfig {
  quant::QuantConfig vision;
  quant::QuantConfig text;
  RetainSpec retain;
};

PlanConfig Preset(const std::string& name);  // "lqa" or "lqa-lite"

SensitivityReport ScoreContainer(const std::vector<qtk::TensorRecord>& container, const PlanConfig& cfg);

QuantPlan BuildPlan(const std::vector<qtk::TensorRecord>& container, const PlanConfig& cfg);

struct AppliedLayer {
  std::string name;
  bool retained = false;
  quant::ErrorMetrics error;  // fp16 rounding error for retained tensors
  uint64_t bytes = 0;
};

struct ApplyResult {
  std::vector<qtk::TensorRecord> records;
  std::vector<AppliedLayer> layers;
};

ApplyResult ApplyPlan(const std::vector<qtk::TensorRecord>& container, const QuantPlan& plan);

// Plan files are JSON with one object per layer.
std::string PlanToText(const QuantPlan& plan);
QuantPlan PlanFromText(const std::string& text);

}  // namespace lqa::select
