#include "lqa/layer_select.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"
#include "lqa/error.hpp"

namespace lqa::select {
namespace {

bool MatchesLayer(const std::string& tensor, const std::string& layer) {
  return tensor == layer || (tensor.size() > layer.size() && tensor.compare(0, layer.size(), layer) == 0 &&
                             tensor[layer.size()] == '.');
}

const quant::QuantConfig& ConfigFor(Modality m, const PlanConfig& cfg) {
  return m == Modality::kVision ? cfg.vision : cfg.text;
}

}  // namespace

const char* ToString(Modality m) { return m == Modality::kVision ? "vision" : "text"; }

Modality ModalityOf(const std::string& name) {
  if (name.rfind("vision.", 0) == 0) return Modality::kVision;
  if (name.rfind("text.", 0) == 0) return Modality::kText;
  throw Error(ErrorCode::kInvalidArgument, "untagged layer: " + name + " (expected vision. or text. prefix)");
}

double SensitivityScore(const quant::Tensor& w, const quant::QuantConfig& cfg) {
  return quant::QuantizeTensor(w, cfg).error.mse;
}

PlanConfig Preset(const std::string& name) {
  PlanConfig cfg;
  if (name == "lqa") {
    cfg.vision = {8, 128, quant::QuantMode::kAsymmetric};
    cfg.text = {8, 128, quant::QuantMode::kSymmetric};
    cfg.retain.names = {"vision.ln_post", "vision.proj", "text.proj"};
  } else if (name == "lqa-lite") {
    cfg.vision = {4, 64, quant::QuantMode::kAsymmetric};
    cfg.text = {8, 256, quant::QuantMode::kAsymmetric};
    cfg.retain.names = {"vision.ln_post", "text.proj"};
  } else {
    throw Error(ErrorCode::kInvalidArgument, "bad preset: " + name + " (expected lqa or lqa-lite)");
  }
  cfg.retain.allow_missing = true;
  return cfg;
}

SensitivityReport ScoreContainer(const std::vector<qtk::TensorRecord>& container, const PlanConfig& cfg) {
  std::vector<double> scores(container.size());
  std::vector<Modality> modalities(container.size());
  for (size_t i = 0; i < container.size(); ++i) modalities[i] = ModalityOf(container[i].name);
  for (size_t i = 0; i < container.size(); ++i) {
    scores[i] = SensitivityScore(quant::TensorFromRecord(container[i]), ConfigFor(modalities[i], cfg));
  }
  SensitivityReport report;
  for (size_t i = 0; i < container.size(); ++i) report.scores[container[i].name] = scores[i];
  for (const auto& [name, _] : report.scores) report.ranking.push_back(name);
  std::stable_sort(report.ranking.begin(), report.ranking.end(), [&](const auto& a, const auto& b) {
    return report.scores.at(a) > report.scores.at(b);
  });
  return report;
}

QuantPlan BuildPlan(const std::vector<qtk::TensorRecord>& container, const PlanConfig& cfg) {
  quant::ValidateConfig(cfg.vision);
  quant::ValidateConfig(cfg.text);
  QuantPlan plan;
  for (const auto& rec : container) {
    if (plan.layers.count(rec.name)) throw Error(ErrorCode::kInvalidArgument, "duplicate name: " + rec.name);
    const Modality m = ModalityOf(rec.name);
    plan.layers[rec.name] = LayerEntry{m, false, ConfigFor(m, cfg)};
  }
  if (cfg.vision.bits <= cfg.text.bits)
    plan.warnings.push_back("vision bits (" + std::to_string(cfg.vision.bits) + ") not greater than text bits (" +
                            std::to_string(cfg.text.bits) + ")");

  std::set<std::string> retain;
  for (const auto& layer : cfg.retain.names) {
    bool matched = false;
    for (const auto& [name, _] : plan.layers) {
      if (MatchesLayer(name, layer)) {
        retain.insert(name);
        matched = true;
      }
    }
    if (!matched) {
      if (!cfg.retain.allow_missing) throw Error(ErrorCode::kNotFound, "unknown layer in retain list: " + layer);
      plan.warnings.push_back("retain entry matches no tensor: " + layer);
    }
  }

  if (cfg.retain.auto_top_k) {
    const int k = *cfg.retain.auto_top_k;
    if (k < 0) throw Error(ErrorCode::kInvalidArgument, "top-k must be non-negative");
    const SensitivityReport report = ScoreContainer(container, cfg);
    for (Modality m : {Modality::kVision, Modality::kText}) {
      int taken = 0;
      for (const auto& name : report.ranking) {
        if (taken >= k) break;
        if (plan.layers.at(name).modality != m || retain.count(name)) continue;
        retain.insert(name);
        ++taken;
      }
    }
  }

  for (const auto& name : retain) plan.layers.at(name).retain_fp16 = true;
  plan.retain.assign(retain.begin(), retain.end());
  return plan;
}

ApplyResult ApplyPlan(const std::vector<qtk::TensorRecord>& container, const QuantPlan& plan) {
  if (container.size() != plan.layers.size())
    throw Error(ErrorCode::kMismatch, "plan mismatch: plan has " + std::to_string(plan.layers.size()) +
                                          " layers, container has " + std::to_string(container.size()));
  ApplyResult result;
  for (const auto& rec : container) {
    const auto it = plan.layers.find(rec.name);
    if (it == plan.layers.end()) throw Error(ErrorCode::kMismatch, "plan mismatch: no entry for " + rec.name);
    const LayerEntry& entry = it->second;
    const quant::Tensor w = quant::TensorFromRecord(rec);
    AppliedLayer layer;
    layer.name = rec.name;
    if (entry.retain_fp16) {
      qtk::TensorRecord out = qtk::ToFP16Record(rec);
      layer.retained = true;
      layer.error = quant::ReconstructionError(w.values, qtk::RecordToFloats(out));
      layer.bytes = out.payload.size();
      result.records.push_back(std::move(out));
    } else {
      const auto q = quant::QuantizeTensor(w, entry.config);
      qtk::TensorRecord out = quant::ToRecord(rec.name, q.tensor);
      layer.error = q.error;
      layer.bytes = out.payload.size();
      result.records.push_back(std::move(out));
    }
    result.layers.push_back(std::move(layer));
  }
  return result;
}

std::string PlanToText(const QuantPlan& plan) {
  nlohmann::json layers = nlohmann::json::object();
  for (const auto& [name, entry] : plan.layers) {
    nlohmann::json j;
    j["modality"] = ToString(entry.modality);
    if (entry.retain_fp16) {
      j["action"] = "retain_fp16";
    } else {
      j["action"] = "quantize";
      j["mode"] = quant::ToString(entry.config.mode);
      j["bits"] = entry.config.bits;
      j["group_size"] = entry.config.group_size;
    }
    layers[name] = std::move(j);
  }
  nlohmann::json doc;
  doc["layers"] = std::move(layers);
  doc["retain"] = plan.retain;
  return doc.dump(2) + "\n";
}

QuantPlan PlanFromText(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, std::string("plan: malformed JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("layers") || !doc["layers"].is_object())
    throw Error(ErrorCode::kFormat, "plan: missing object field 'layers'");
  QuantPlan plan;
  std::set<std::string> retain;
  for (const auto& [name, j] : doc["layers"].items()) {
    const std::string where = "plan: layer '" + name + "'";
    if (!j.is_object() || !j.contains("action") || !j["action"].is_string())
      throw Error(ErrorCode::kFormat, where + " needs string field 'action'");
    LayerEntry entry;
    entry.modality = ModalityOf(name);
    const auto action = j["action"].get<std::string>();
    if (action == "retain_fp16") {
      entry.retain_fp16 = true;
      retain.insert(name);
    } else if (action == "quantize") {
      for (const char* key : {"bits", "group_size"})
        if (!j.contains(key) || !j[key].is_number_integer())
          throw Error(ErrorCode::kFormat, where + " needs integer field '" + key + "'");
      if (!j.contains("mode") || !j["mode"].is_string())
        throw Error(ErrorCode::kFormat, where + " needs string field 'mode'");
      entry.config.bits = j["bits"].get<int>();
      entry.config.group_size = j["group_size"].get<int>();
      entry.config.mode = quant::ParseQuantMode(j["mode"].get<std::string>());
      quant::ValidateConfig(entry.config);
    } else {
      throw Error(ErrorCode::kFormat, where + " has unknown action '" + action + "'");
    }
    plan.layers[name] = entry;
  }
  plan.retain.assign(retain.begin(), retain.end());
  return plan;
}

}  // namespace lqa::select
