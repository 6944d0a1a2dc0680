#include <cmath>
#include <cstdint>
#include <limits>

#include "doctest.h"
#include "lqa/half.hpp"

using lqa::FloatToHalf;
using lqa::HalfToFloat;

TEST_CASE("every finite half roundtrips through float") {
  for (uint32_t h = 0; h < 0x10000; ++h) {
    const auto bits = static_cast<uint16_t>(h);
    if ((bits & 0x7C00) == 0x7C00) continue;
    CHECK(FloatToHalf(HalfToFloat(bits)) == bits);
  }
}

TEST_CASE("known half encodings") {
  CHECK(FloatToHalf(1.0f) == 0x3C00);
  CHECK(FloatToHalf(-2.0f) == 0xC000);
  CHECK(FloatToHalf(65504.0f) == 0x7BFF);
  CHECK(FloatToHalf(1e6f) == 0x7C00);
  CHECK(FloatToHalf(6.103515625e-05f) == 0x0400);
  CHECK(FloatToHalf(5.9604645e-08f) == 0x0001);
  CHECK(HalfToFloat(0x0001) == doctest::Approx(5.9604645e-08));
  CHECK(std::isnan(HalfToFloat(FloatToHalf(std::numeric_limits<float>::quiet_NaN()))));
}

TEST_CASE("rounding is to nearest even") {
  // 1 + 2^-11 sits halfway between 1 and 1 + 2^-10
  CHECK(FloatToHalf(1.0f + 0.00048828125f) == 0x3C00);
  CHECK(FloatToHalf(1.0f + 3 * 0.00048828125f) == 0x3C02);
  CHECK(FloatToHalf(0.1f) == 0x2E66);
}
