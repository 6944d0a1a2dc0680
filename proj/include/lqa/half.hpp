#pragma once

#include <cstdint>

namespace lqa {

// IEEE 754 binary16 conversions. FloatToHalf rounds to nearest-even and
// handles subnormals, infinities and NaN.
uint16_t FloatToHalf(float value);
float HalfToFloat(uint16_t bits);

// Rounds through binary16 and back.
inline float RoundToHalf(float value) { return HalfToFloat(FloatToHalf(value)); }

}  // namespace lqa
