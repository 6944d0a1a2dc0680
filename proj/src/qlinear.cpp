#include "lqa/qlinear.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "lqa/error.hpp"

namespace lqa::qlinear {
namespace {

void CheckMatVec(const quant::QuantizedTensor& w, std::span<const float> x) {
  if (w.shape.size() != 2) throw Error(ErrorCode::kInvalidArgument, "qmatvec needs a rank-2 tensor");
  if (x.size() != w.cols())
    throw Error(ErrorCode::kMismatch, "dimension mismatch: tensor has " + std::to_string(w.cols()) +
                                          " columns, input has " + std::to_string(x.size()));
  quant::ValidateQuantized(w);
}

float RowDot(const quant::QuantizedTensor& w, std::span<const float> x, uint64_t row) {
  const uint64_t cols = w.cols();
  const uint64_t per_row = w.groups_per_row();
  const int32_t offset = w.code_offset();
  std::array<double, quant::kMaxGroupSize> codes{};
  double acc = 0.0;
  for (uint64_t gi = 0; gi < per_row; ++gi) {
    const uint64_t g = row * per_row + gi;
    const uint64_t col0 = gi * w.group_size;
    const uint64_t n = std::min<uint64_t>(w.group_size, cols - col0);
    const uint64_t base = row * cols + col0;
    for (uint64_t j = 0; j < n; ++j)
      codes[j] = static_cast<int32_t>(quant::ReadCode(w.packed.data(), w.packed.size(), base + j, w.bits)) - offset -
                 w.zero_points[g];
    double group_acc = 0.0;
    for (uint64_t j = 0; j < n; ++j) group_acc += codes[j] * x[col0 + j];
    acc += static_cast<double>(w.scales[g]) * group_acc;
  }
  return static_cast<float>(acc);
}

}  // namespace

std::vector<float> QMatVec(const quant::QuantizedTensor& w, std::span<const float> x) {
  CheckMatVec(w, x);
  if (w.group_size > quant::kMaxGroupSize) throw Error(ErrorCode::kInvalidArgument, "group size too large");
  std::vector<float> y(w.rows());
  const auto rows = static_cast<int64_t>(w.rows());
#pragma omp parallel for schedule(static)
  for (int64_t r = 0; r < rows; ++r) y[r] = RowDot(w, x, static_cast<uint64_t>(r));
  return y;
}

std::vector<float> QMatVecSerial(const quant::QuantizedTensor& w, std::span<const float> x) {
  CheckMatVec(w, x);
  if (w.group_size > quant::kMaxGroupSize) throw Error(ErrorCode::kInvalidArgument, "group size too large");
  std::vector<float> y(w.rows());
  for (uint64_t r = 0; r < w.rows(); ++r) y[r] = RowDot(w, x, r);
  return y;
}

NormalizeResult L2Normalize(std::span<const float> v) {
  double sq = 0.0;
  for (float a : v) sq += static_cast<double>(a) * a;
  NormalizeResult out{std::vector<float>(v.begin(), v.end()), false};
  if (sq == 0.0) {
    out.was_zero = true;
    return out;
  }
  const double norm = std::sqrt(sq);
  for (auto& a : out.vector) a = static_cast<float>(a / norm);
  return out;
}

Prototypes MakePrototypes(uint32_t class_count, uint32_t dim, std::vector<float> rows, double logit_scale) {
  if (class_count == 0 || dim == 0) throw Error(ErrorCode::kInvalidArgument, "empty prototype matrix");
  if (rows.size() != static_cast<uint64_t>(class_count) * dim)
    throw Error(ErrorCode::kMismatch, "prototype matrix size mismatch");
  if (!(logit_scale > 0.0)) throw Error(ErrorCode::kInvalidArgument, "logit scale must be positive");
  Prototypes p{class_count, dim, std::move(rows), logit_scale};
  for (uint32_t c = 0; c < class_count; ++c) {
    double sq = 0.0;
    for (uint32_t j = 0; j < dim; ++j) sq += static_cast<double>(p.row(c)[j]) * p.row(c)[j];
    if (std::abs(std::sqrt(sq) - 1.0) > 1e-6)
      throw Error(ErrorCode::kInvalidArgument, "prototype row " + std::to_string(c) + " is not unit norm");
  }
  return p;
}

std::vector<double> CosineLogits(std::span<const float> feature, const Prototypes& prototypes) {
  if (feature.size() != prototypes.dim)
    throw Error(ErrorCode::kMismatch, "dimension mismatch: feature has " + std::to_string(feature.size()) +
                                          ", prototypes have " + std::to_string(prototypes.dim));
  std::vector<double> logits(prototypes.class_count);
  for (uint32_t c = 0; c < prototypes.class_count; ++c) {
    const float* row = prototypes.row(c);
    double dot = 0.0;
    for (uint32_t j = 0; j < prototypes.dim; ++j) dot += static_cast<double>(feature[j]) * row[j];
    logits[c] = prototypes.logit_scale * dot;
  }
  return logits;
}

std::vector<double> Softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double peak = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) sum += p[i] = std::exp(logits[i] - peak);
  for (auto& v : p) v /= sum;
  return p;
}

double NormalizedEntropy(std::span<const double> p) {
  if (p.size() <= 1) return 0.0;
  double h = 0.0;
  for (double v : p)
    if (v > 0.0) h -= v * std::log(v);
  return std::clamp(h / std::log(static_cast<double>(p.size())), 0.0, 1.0);
}

uint32_t ArgMax(std::span<const double> v) {
  return static_cast<uint32_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace lqa::qlinear
