#pragma once

#include <string>

#include "json.hpp"
#include "lqa/tta_engine.hpp"

namespace lqa::tta {

// Config files are JSON objects. An optional "preset" key selects the base
// values; any field below overrides it:
//
//   {"preset": "cifar10",
//    "pos": {"enabled": true, "shot_capacity": 3, "alpha": 1.0, "beta": 8.0, "tau": 0.0},
//    "neg": {"enabled": true, "shot_capacity": 2, "alpha": 0.117, "beta": 1.0,
//            "entropy_lower": 0.2, "entropy_upper": 0.5, "mask_lower": 0.03, "mask_upper": 1.0},
//    "eviction": "fifo", "affinity": "exp", "gate_on": "baseline", "logit_scale": 100.0}
//
// Unknown keys and wrongly typed values are rejected with a message naming
// the field.
AdaptationConfig ConfigFromText(const std::string& text);
nlohmann::json ConfigToJson(const AdaptationConfig& cfg);

}  // namespace lqa::tta
