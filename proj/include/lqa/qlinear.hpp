#pragma once

// Inference primitives for the quantized forward path: group-dequantizing
// matrix-vector product, normalization, prototype logits, softmax, entropy.

#include <cstdint>
#include <span>
#include <vector>

#include "lqa/quant_core.hpp"

namespace lqa::qlinear {

// y = W~ x with W~ dequantized one group at a time. Rows run in parallel.
std::vector<float> QMatVec(const quant::QuantizedTensor& w, std::span<const float> x);
// Single-threaded version of the same kernel.
std::vector<float> QMatVecSerial(const quant::QuantizedTensor& w, std::span<const float> x);

struct NormalizeResult {
  std::vector<float> vector;
  bool was_zero = false;
};

NormalizeResult L2Normalize(std::span<const float> v);

struct Prototypes {
  uint32_t class_count = 0;
  uint32_t dim = 0;
  std::vector<float> rows;  // class_count x dim, unit rows
  double logit_scale = 100.0;

  const float* row(uint32_t c) const { return rows.data() + static_cast<uint64_t>(c) * dim; }
};

// Throws if any row deviates from unit norm by more than 1e-6.
Prototypes MakePrototypes(uint32_t class_count, uint32_t dim, std::vector<float> rows, double logit_scale = 100.0);

std::vector<double> CosineLogits(std::span<const float> feature, const Prototypes& prototypes);

std::vector<double> Softmax(std::span<const double> logits);

// H(p) / ln(C), with 0 ln 0 = 0. Returns 0 for C == 1.
double NormalizedEntropy(std::span<const double> p);

// Index of the first maximum.
uint32_t ArgMax(std::span<const double> v);

}  // namespace lqa::qlinear
