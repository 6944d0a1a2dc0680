#include <string>

#include "lqa/error.hpp"
#include "lqa/quant_core.hpp"

namespace lqa::quant {

std::vector<uint8_t> PackCodes(std::span<const uint32_t> codes, int bits) {
  if (!qtk::IsSupportedBits(bits))
    throw Error(ErrorCode::kInvalidArgument, "unsupported bits value " + std::to_string(bits));
  const uint32_t limit = 1u << bits;
  std::vector<uint8_t> out(qtk::PackedCodeBytes(codes.size(), bits), 0);
  uint64_t acc = 0;
  int filled = 0;
  size_t pos = 0;
  for (uint32_t code : codes) {
    if (code >= limit)
      throw Error(ErrorCode::kInvalidArgument,
                  "code out of range: " + std::to_string(code) + " at " + std::to_string(bits) + " bits");
    acc |= static_cast<uint64_t>(code) << filled;
    filled += bits;
    while (filled >= 8) {
      out[pos++] = static_cast<uint8_t>(acc);
      acc >>= 8;
      filled -= 8;
    }
  }
  if (filled > 0) out[pos] = static_cast<uint8_t>(acc);
  return out;
}

std::vector<uint32_t> UnpackCodes(std::span<const uint8_t> bytes, int bits, uint64_t count) {
  if (!qtk::IsSupportedBits(bits))
    throw Error(ErrorCode::kInvalidArgument, "unsupported bits value " + std::to_string(bits));
  if (bytes.size() != qtk::PackedCodeBytes(count, bits))
    throw Error(ErrorCode::kFormat, "corrupt packed length");
  std::vector<uint32_t> out(count);
  for (uint64_t i = 0; i < count; ++i) out[i] = ReadCode(bytes.data(), bytes.size(), i, bits);
  return out;
}

}  // namespace lqa::quant
