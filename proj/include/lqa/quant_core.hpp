#pragma once

// Group-wise weight quantizers.
//
// Asymmetric:  q = clip(round(w / s + z), 0, 2^b - 1),     w~ = s (q - z)
// Symmetric:   q = clip(round(w / s), -q_max, q_max),      w~ = s q,
//              q_max = 2^(b-1) - 1
//
// (s, z) are fitted per group by alternating least squares from the min-max
// starting point, so the error never exceeds the min-max fit. Up to 16 code
// levels the scale is also searched exactly for every zero-point (sweeping the
// rounding breakpoints of s); wider ranges search a window around the min-max
// scale. Data already on a uniform grid is reproduced exactly.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lqa/qtk_format.hpp"

namespace lqa::quant {

enum class QuantMode : uint8_t { kAsymmetric, kSymmetric };

const char* ToString(QuantMode mode);
QuantMode ParseQuantMode(const std::string& text);

inline constexpr int kMinGroupSize = 8;
inline constexpr int kMaxGroupSize = 512;
// Smallest scale ever emitted: the smallest normal binary16 value.
inline constexpr float kScaleGuard = 6.103515625e-05f;

struct QuantConfig {
  int bits = 8;
  int group_size = 128;
  QuantMode mode = QuantMode::kAsymmetric;
  int max_iters = 20;
  double rel_tol = 1e-6;
};

void ValidateConfig(const QuantConfig& cfg);

inline int32_t MaxCode(int bits) { return (int32_t{1} << bits) - 1; }
inline int32_t SymmetricQMax(int bits) { return (int32_t{1} << (bits - 1)) - 1; }

struct GroupFit {
  std::vector<int32_t> codes;  // [0, 2^b-1] asymmetric, [-q_max, q_max] symmetric
  float scale = 1.0f;
  int32_t zero_point = 0;  // always 0 for symmetric fits
  int bits = 0;
  QuantMode mode = QuantMode::kAsymmetric;
  double squared_error = 0.0;
  double initial_squared_error = 0.0;  // error at the min-max starting point
};

GroupFit FitAsymmetric(std::span<const float> group, int bits, int max_iters = 20, double rel_tol = 1e-6);
GroupFit FitSymmetric(std::span<const float> group, int bits, int max_iters = 20, double rel_tol = 1e-6);
GroupFit FitGroup(std::span<const float> group, const QuantConfig& cfg);

inline float DequantizeCode(int32_t code, float scale, int32_t zero_point) {
  return scale * static_cast<float>(code - zero_point);
}

std::vector<float> DequantizeGroup(const GroupFit& fit);

// Squared reconstruction error of (codes, scale, zero_point) against w, with
// dequantization done exactly as DequantizeCode does it.
double GroupSquaredError(std::span<const float> w, std::span<const int32_t> codes, float scale,
                         int32_t zero_point);

// Dense row-major tensor of rank 1 or 2.
struct Tensor {
  std::vector<uint64_t> shape;
  std::vector<float> values;

  uint64_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  uint64_t cols() const { return shape.empty() ? 0 : shape.back(); }
};

struct QuantizedTensor {
  std::vector<uint64_t> shape;
  int bits = 8;
  int group_size = 128;
  QuantMode mode = QuantMode::kAsymmetric;
  std::vector<uint8_t> packed;     // unsigned codes, LSB-first bitstream, row-major
  std::vector<float> scales;       // one per group, exactly representable in fp16
  std::vector<int32_t> zero_points;  // one per group

  uint64_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
  uint64_t cols() const { return shape.empty() ? 0 : shape.back(); }
  uint64_t numel() const { return rows() * cols(); }
  uint64_t groups_per_row() const { return (cols() + group_size - 1) / group_size; }
  uint64_t group_count() const { return rows() * groups_per_row(); }
  // Offset subtracted from the stored unsigned code: q_max for symmetric, 0 otherwise.
  int32_t code_offset() const { return mode == QuantMode::kSymmetric ? SymmetricQMax(bits) : 0; }

  bool operator==(const QuantizedTensor&) const = default;
};

struct ErrorMetrics {
  double squared_error = 0.0;
  double mse = 0.0;
  double rel_frobenius = 0.0;
};

ErrorMetrics ReconstructionError(std::span<const float> reference, std::span<const float> approx);

struct QuantizeResult {
  QuantizedTensor tensor;
  ErrorMetrics error;  // of the stored (fp16-scale) representation
};

// Groups are row-contiguous runs of group_size; the last group of a row may
// be shorter. Groups are fitted in parallel with OpenMP.
QuantizeResult QuantizeTensor(const Tensor& w, const QuantConfig& cfg);
// Single-threaded reference; produces bit-identical output.
QuantizeResult QuantizeTensorSerial(const Tensor& w, const QuantConfig& cfg);

Tensor DequantizeTensor(const QuantizedTensor& qt);

// Throws lqa::Error on inconsistent sizes.
void ValidateQuantized(const QuantizedTensor& qt);

// LSB-first bit packing. Codes must be < 2^bits.
std::vector<uint8_t> PackCodes(std::span<const uint32_t> codes, int bits);
std::vector<uint32_t> UnpackCodes(std::span<const uint8_t> bytes, int bits, uint64_t count);

inline uint32_t ReadCode(const uint8_t* data, uint64_t size, uint64_t index, int bits) {
  const uint64_t bit = index * static_cast<uint64_t>(bits);
  const uint64_t byte = bit >> 3;
  uint32_t window = data[byte];
  if (byte + 1 < size) window |= static_cast<uint32_t>(data[byte + 1]) << 8;
  return (window >> (bit & 7)) & ((1u << bits) - 1u);
}

qtk::TensorRecord ToRecord(std::string name, const QuantizedTensor& qt);
QuantizedTensor FromRecord(const qtk::TensorRecord& record);

// Reads an FP32/FP16 record as a dense tensor (rank 1 or 2).
Tensor TensorFromRecord(const qtk::TensorRecord& record);

}  // namespace lqa::quant
