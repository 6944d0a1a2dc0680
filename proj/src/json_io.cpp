#include "lqa/json_io.hpp"

#include <set>

#include "lqa/error.hpp"

namespace lqa::tta {
namespace {

using nlohmann::json;

[[noreturn]] void FieldError(const std::string& field, const std::string& what) {
  throw Error(ErrorCode::kInvalidArgument, "config: field '" + field + "' " + what);
}

void CheckKeys(const json& obj, const std::string& prefix, const std::set<std::string>& allowed) {
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) FieldError(prefix + key, "is not recognized");
}

void ReadBool(const json& obj, const std::string& prefix, const char* key, bool& out) {
  if (!obj.contains(key)) return;
  if (!obj[key].is_boolean()) FieldError(prefix + key, "must be a boolean");
  out = obj[key].get<bool>();
}

void ReadNumber(const json& obj, const std::string& prefix, const char* key, double& out) {
  if (!obj.contains(key)) return;
  if (!obj[key].is_number()) FieldError(prefix + key, "must be a number");
  out = obj[key].get<double>();
}

void ReadInt(const json& obj, const std::string& prefix, const char* key, int& out) {
  if (!obj.contains(key)) return;
  if (!obj[key].is_number_integer() || obj[key].get<int64_t>() < 0)
    FieldError(prefix + key, "must be a non-negative integer");
  out = obj[key].get<int>();
}

std::string ReadString(const json& obj, const char* key) {
  if (!obj[key].is_string()) FieldError(key, "must be a string");
  return obj[key].get<std::string>();
}

}  // namespace

AdaptationConfig ConfigFromText(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: malformed JSON: ") + e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::kInvalidArgument, "config: top level must be an object");
  CheckKeys(doc, "", {"preset", "pos", "neg", "eviction", "affinity", "gate_on", "logit_scale"});

  AdaptationConfig cfg;
  if (doc.contains("preset")) cfg = Preset(ReadString(doc, "preset"));

  if (doc.contains("pos")) {
    const json& pos = doc["pos"];
    if (!pos.is_object()) FieldError("pos", "must be an object");
    CheckKeys(pos, "pos.", {"enabled", "shot_capacity", "alpha", "beta", "tau"});
    ReadBool(pos, "pos.", "enabled", cfg.pos.enabled);
    ReadInt(pos, "pos.", "shot_capacity", cfg.pos.shot_capacity);
    ReadNumber(pos, "pos.", "alpha", cfg.pos.alpha);
    ReadNumber(pos, "pos.", "beta", cfg.pos.beta);
    ReadNumber(pos, "pos.", "tau", cfg.pos.tau);
  }
  if (doc.contains("neg")) {
    const json& neg = doc["neg"];
    if (!neg.is_object()) FieldError("neg", "must be an object");
    CheckKeys(neg, "neg.",
              {"enabled", "shot_capacity", "alpha", "beta", "entropy_lower", "entropy_upper", "mask_lower",
               "mask_upper"});
    ReadBool(neg, "neg.", "enabled", cfg.neg.enabled);
    ReadInt(neg, "neg.", "shot_capacity", cfg.neg.shot_capacity);
    ReadNumber(neg, "neg.", "alpha", cfg.neg.alpha);
    ReadNumber(neg, "neg.", "beta", cfg.neg.beta);
    ReadNumber(neg, "neg.", "entropy_lower", cfg.neg.entropy_lower);
    ReadNumber(neg, "neg.", "entropy_upper", cfg.neg.entropy_upper);
    ReadNumber(neg, "neg.", "mask_lower", cfg.neg.mask_lower);
    ReadNumber(neg, "neg.", "mask_upper", cfg.neg.mask_upper);
  }
  if (doc.contains("eviction")) {
    const auto v = ReadString(doc, "eviction");
    if (v == "fifo") cfg.eviction = Eviction::kFifo;
    else if (v == "entropy_priority") cfg.eviction = Eviction::kEntropyPriority;
    else FieldError("eviction", "must be \"fifo\" or \"entropy_priority\"");
  }
  if (doc.contains("affinity")) {
    const auto v = ReadString(doc, "affinity");
    if (v == "exp") cfg.affinity = Affinity::kExponential;
    else if (v == "raw") cfg.affinity = Affinity::kRaw;
    else FieldError("affinity", "must be \"exp\" or \"raw\"");
  }
  if (doc.contains("gate_on")) {
    const auto v = ReadString(doc, "gate_on");
    if (v == "baseline") cfg.gate_on = GateSource::kBaseline;
    else if (v == "adjusted") cfg.gate_on = GateSource::kAdjusted;
    else FieldError("gate_on", "must be \"baseline\" or \"adjusted\"");
  }
  ReadNumber(doc, "", "logit_scale", cfg.logit_scale);

  try {
    ValidateConfig(cfg);
  } catch (const Error& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("config: ") + e.what());
  }
  return cfg;
}

nlohmann::json ConfigToJson(const AdaptationConfig& cfg) {
  json j;
  j["pos"] = {{"enabled", cfg.pos.enabled}, {"shot_capacity", cfg.pos.shot_capacity}, {"alpha", cfg.pos.alpha},
              {"beta", cfg.pos.beta},       {"tau", cfg.pos.tau}};
  j["neg"] = {{"enabled", cfg.neg.enabled},
              {"shot_capacity", cfg.neg.shot_capacity},
              {"alpha", cfg.neg.alpha},
              {"beta", cfg.neg.beta},
              {"entropy_lower", cfg.neg.entropy_lower},
              {"entropy_upper", cfg.neg.entropy_upper},
              {"mask_lower", cfg.neg.mask_lower},
              {"mask_upper", cfg.neg.mask_upper}};
  j["eviction"] = ToString(cfg.eviction);
  j["affinity"] = ToString(cfg.affinity);
  j["gate_on"] = ToString(cfg.gate_on);
  j["logit_scale"] = cfg.logit_scale;
  return j;
}

}  // namespace lqa::tta
