#pragma once

// Test-only oracles. Kept independent of the library's fitting code.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace lqa::testing {

inline constexpr int kOracleScaleGrid = 10000;

// Minimum squared error of the asymmetric quantizer over every zero-point in
// [0, 2^b - 1] and a 10^4-point scale grid over (0, 2 * range].
inline double BruteForceAsymmetric(const std::vector<float>& w, int bits) {
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  const double range = static_cast<double>(*hi) - *lo;
  if (range == 0.0) return 0.0;
  const int max_code = (1 << bits) - 1;
  double best = std::numeric_limits<double>::infinity();
  for (int z = 0; z <= max_code; ++z) {
    for (int k = 1; k <= kOracleScaleGrid; ++k) {
      const double s = 2.0 * range * k / kOracleScaleGrid;
      double err = 0.0;
      for (float v : w) {
        const double q = std::clamp(std::round(v / s + z), 0.0, static_cast<double>(max_code));
        const double d = v - s * (q - z);
        err += d * d;
      }
      best = std::min(best, err);
    }
  }
  return best;
}

// Same search with the zero-point fixed at 0 and codes in [-q_max, q_max];
// the grid spans (0, 2 * max|w|].
inline double BruteForceSymmetric(const std::vector<float>& w, int bits) {
  double amax = 0.0;
  for (float v : w) amax = std::max(amax, std::abs(static_cast<double>(v)));
  const int qmax = (1 << (bits - 1)) - 1;
  double zero_err = 0.0;
  for (float v : w) zero_err += static_cast<double>(v) * v;
  if (amax == 0.0 || qmax == 0) return zero_err;
  double best = zero_err;
  for (int k = 1; k <= kOracleScaleGrid; ++k) {
    const double s = 2.0 * amax * k / kOracleScaleGrid;
    double err = 0.0;
    for (float v : w) {
      const double q = std::clamp(std::round(v / s), static_cast<double>(-qmax), static_cast<double>(qmax));
      const double d = v - s * q;
      err += d * d;
    }
    best = std::min(best, err);
  }
  return best;
}

// Dense W~ x with W~ given row-major.
inline std::vector<double> DenseMatVec(const std::vector<float>& w, uint64_t rows, uint64_t cols,
                                       const std::vector<float>& x) {
  std::vector<double> y(rows, 0.0);
  for (uint64_t r = 0; r < rows; ++r)
    for (uint64_t c = 0; c < cols; ++c) y[r] += static_cast<double>(w[r * cols + c]) * x[c];
  return y;
}

// Cosine argmax over raw float data, first maximum wins.
inline std::vector<uint32_t> ZeroShotArgmax(const std::vector<float>& features, const std::vector<float>& prototypes,
                                            uint32_t dim, uint32_t classes) {
  const uint64_t n = features.size() / dim;
  std::vector<uint32_t> out(n);
  for (uint64_t i = 0; i < n; ++i) {
    double fn = 0.0;
    for (uint32_t j = 0; j < dim; ++j) fn += static_cast<double>(features[i * dim + j]) * features[i * dim + j];
    fn = fn > 0.0 ? std::sqrt(fn) : 1.0;
    double best = -std::numeric_limits<double>::infinity();
    for (uint32_t c = 0; c < classes; ++c) {
      double dot = 0.0;
      for (uint32_t j = 0; j < dim; ++j)
        dot += static_cast<double>(features[i * dim + j]) * prototypes[static_cast<uint64_t>(c) * dim + j];
      if (dot / fn > best) {
        best = dot / fn;
        out[i] = c;
      }
    }
  }
  return out;
}

}  // namespace lqa::testing
