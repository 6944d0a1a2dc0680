#include "lqa/quant_core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "lqa/error.hpp"
#include "lqa/half.hpp"

namespace lqa::quant {
namespace {

// Code ranges up to this many levels get the exhaustive zero-point search;
// wider ones use this many descent starts around the min-max zero-point.
constexpr int kMaxExtraStarts = 16;
constexpr int kWideScaleStarts = 4;
// Relative scale window searched exactly for wide code ranges.
constexpr double kWindowLow = 0.97;
constexpr double kWindowHigh = 1.02;

struct Candidate {
  float scale = 1.0f;
  int32_t zero_point = 0;
  double error = std::numeric_limits<double>::infinity();
};

int32_t AssignAsymmetric(float w, float scale, int32_t zero_point, int32_t max_code) {
  const double q = std::round(static_cast<double>(w) / scale + zero_point);
  return static_cast<int32_t>(std::clamp(q, 0.0, static_cast<double>(max_code)));
}

int32_t AssignSymmetric(float w, float scale, int32_t qmax) {
  const double q = std::round(static_cast<double>(w) / scale);
  return static_cast<int32_t>(std::clamp(q, static_cast<double>(-qmax), static_cast<double>(qmax)));
}

float SanitizeScale(double s) {
  if (!(s > 0.0) || !std::isfinite(s)) return kScaleGuard;
  const auto f = static_cast<float>(s);
  return f > 0.0f ? f : kScaleGuard;
}

// Runs alternating minimization from (scale, zero_point) and returns the best
// state evaluated along the way.
Candidate DescendAsymmetric(std::span<const float> w, int32_t max_code, float scale, int32_t zero_point,
                            int max_iters, double rel_tol, std::vector<int32_t>& codes) {
  Candidate best;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= max_iters; ++it) {
    for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignAsymmetric(w[i], scale, zero_point, max_code);
    const double err = GroupSquaredError(w, codes, scale, zero_point);
    if (err < best.error) best = {scale, zero_point, err};
    if (err == 0.0 || it == max_iters) break;
    if (std::isfinite(prev) && prev - err <= rel_tol * prev) break;
    prev = err;

    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      const double c = codes[i] - zero_point;
      num += w[i] * c;
      den += c * c;
    }
    if (den > 0.0 && num > 0.0) scale = SanitizeScale(num / den);

    double shift = 0.0;
    for (size_t i = 0; i < w.size(); ++i) shift += codes[i] - static_cast<double>(w[i]) / scale;
    shift /= static_cast<double>(w.size());
    zero_point = static_cast<int32_t>(std::clamp(std::round(shift), 0.0, static_cast<double>(max_code)));
  }
  return best;
}

Candidate DescendSymmetric(std::span<const float> w, int32_t qmax, float scale, int max_iters, double rel_tol,
                           std::vector<int32_t>& codes) {
  Candidate best;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= max_iters; ++it) {
    for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignSymmetric(w[i], scale, qmax);
    const double err = GroupSquaredError(w, codes, scale, 0);
    if (err < best.error) best = {scale, 0, err};
    if (err == 0.0 || it == max_iters) break;
    if (std::isfinite(prev) && prev - err <= rel_tol * prev) break;
    prev = err;

    double num = 0.0, den = 0.0;
    for (size_t i = 0; i < w.size(); ++i) {
      num += static_cast<double>(w[i]) * codes[i];
      den += static_cast<double>(codes[i]) * codes[i];
    }
    if (den > 0.0 && num > 0.0) scale = SanitizeScale(num / den);
  }
  return best;
}

// Exact minimization over s > 0 of sum_i (w_i - s c_i(s))^2 with
// c_i(s) = clip(round(w_i / s), lo, hi), lo <= 0 <= hi. Codes are piecewise
// constant in s and change by one at s = |w_i| / (k + 1/2); between two such
// breakpoints the optimal s has the closed form A / B, so sweeping the
// breakpoints from large to small s visits every piece once.
struct ScanResult {
  double scale = 0.0;
  double error = std::numeric_limits<double>::infinity();
};

struct ScaleEvent {
  double scale;
  uint32_t index;
  int32_t step;  // +1 for positive w, -1 for negative w
  int32_t k;     // the code magnitude moves from k to k + 1 here
};

// All breakpoints with k < max_steps, sorted by decreasing scale. Ranges with
// smaller code bounds filter this list instead of rebuilding it.
std::vector<ScaleEvent> BuildScaleEvents(std::span<const float> w, int32_t max_steps) {
  std::vector<ScaleEvent> events;
  events.reserve(w.size() * static_cast<size_t>(max_steps));
  for (uint32_t i = 0; i < w.size(); ++i) {
    const double v = w[i];
    if (v == 0.0) continue;
    for (int32_t k = 0; k < max_steps; ++k) events.push_back({std::abs(v) / (k + 0.5), i, v > 0.0 ? 1 : -1, k});
  }
  std::sort(events.begin(), events.end(), [](const ScaleEvent& a, const ScaleEvent& b) {
    return a.scale > b.scale || (a.scale == b.scale && a.index < b.index);
  });
  return events;
}

ScanResult ScanScale(std::span<const float> w, const std::vector<ScaleEvent>& events, int32_t lo, int32_t hi) {
  double total = 0.0;
  for (float v : w) total += static_cast<double>(v) * v;
  auto active = [&](const ScaleEvent& ev) { return ev.step > 0 ? ev.k < hi : ev.k < -lo; };

  ScanResult best;
  std::vector<int32_t> codes(w.size(), 0);
  double a = 0.0, b = 0.0;  // sum w c, sum c^2
  size_t e = 0;
  while (e < events.size() && !active(events[e])) ++e;
  while (e < events.size()) {
    const double at = events[e].scale;
    for (; e < events.size() && events[e].scale == at; ++e) {
      const auto& ev = events[e];
      if (!active(ev)) continue;
      const int32_t c = codes[ev.index];
      a += w[ev.index] * static_cast<double>(ev.step);
      b += static_cast<double>((c + ev.step) * (c + ev.step) - c * c);
      codes[ev.index] = c + ev.step;
    }
    while (e < events.size() && !active(events[e])) ++e;
    const double next = e < events.size() ? events[e].scale : 0.0;
    if (b > 0.0) {
      const double s = std::clamp(a / b, next, at);
      if (s > 0.0) {
        const double err = total - 2.0 * s * a + s * s * b;
        if (err < best.error) best = {s, err};
      }
    }
  }
  return best;
}

// ScanScale restricted to s in [s_lo, s_hi]. Wide code ranges have about
// n * q_max breakpoints overall but only a few per element inside a narrow
// window, and the error is jagged enough there that descent misses the best
// piece.
ScanResult ScanScaleWindow(std::span<const float> w, int32_t lo, int32_t hi, double s_lo, double s_hi) {
  std::vector<ScaleEvent> events;
  std::vector<int32_t> codes(w.size(), 0);
  double total = 0.0, a = 0.0, b = 0.0;
  for (uint32_t i = 0; i < w.size(); ++i) {
    const double v = w[i];
    total += v * v;
    if (v == 0.0) continue;
    const int32_t limit = v > 0.0 ? hi : -lo;
    const double mag = std::abs(v);
    // first k whose breakpoint is at or below s_hi
    auto k = static_cast<int32_t>(std::clamp(std::floor(mag / s_hi - 0.5), 0.0, static_cast<double>(limit)));
    while (k < limit && mag / (k + 0.5) > s_hi) ++k;
    while (k > 0 && mag / (k - 0.5) <= s_hi) --k;
    const int32_t step = v > 0.0 ? 1 : -1;
    codes[i] = step * k;
    a += v * codes[i];
    b += static_cast<double>(k) * k;
    for (; k < limit && mag / (k + 0.5) >= s_lo; ++k) events.push_back({mag / (k + 0.5), i, step, k});
  }
  std::sort(events.begin(), events.end(), [](const ScaleEvent& x, const ScaleEvent& y) {
    return x.scale > y.scale || (x.scale == y.scale && x.index < y.index);
  });

  ScanResult best;
  auto consider = [&](double upper, double lower) {
    if (b <= 0.0) return;
    const double sc = std::clamp(a / b, lower, upper);
    if (!(sc > 0.0)) return;
    const double err = total - 2.0 * sc * a + sc * sc * b;
    if (err < best.error) best = {sc, err};
  };
  double upper = s_hi;
  size_t e = 0;
  while (true) {
    const double next = e < events.size() ? events[e].scale : s_lo;
    consider(upper, next);
    if (e >= events.size()) break;
    upper = events[e].scale;
    for (; e < events.size() && events[e].scale == upper; ++e) {
      const auto& ev = events[e];
      const int32_t c = codes[ev.index];
      a += w[ev.index] * static_cast<double>(ev.step);
      b += static_cast<double>((c + ev.step) * (c + ev.step) - c * c);
      codes[ev.index] = c + ev.step;
    }
  }
  return best;
}

// Data already on a uniform grid is reproduced exactly when the scale is the
// smallest gap between distinct values (symmetric grids also contain 0).
Candidate MinGapCandidate(std::span<const float> w, QuantMode mode, int32_t max_code, int32_t qmax,
                          std::vector<int32_t>& codes) {
  std::vector<float> v(w.begin(), w.end());
  if (mode == QuantMode::kSymmetric) v.push_back(0.0f);
  std::sort(v.begin(), v.end());
  double gap = std::numeric_limits<double>::infinity();
  for (size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[i - 1]) gap = std::min(gap, static_cast<double>(v[i]) - v[i - 1]);
  Candidate c;
  if (!std::isfinite(gap)) return c;
  c.scale = SanitizeScale(gap);
  if (mode == QuantMode::kAsymmetric) {
    c.zero_point = static_cast<int32_t>(
        std::clamp(std::round(-static_cast<double>(v.front()) / c.scale), 0.0, static_cast<double>(max_code)));
  }
  for (size_t i = 0; i < w.size(); ++i)
    codes[i] = mode == QuantMode::kAsymmetric ? AssignAsymmetric(w[i], c.scale, c.zero_point, max_code)
                                              : AssignSymmetric(w[i], c.scale, qmax);
  c.error = GroupSquaredError(w, codes, c.scale, c.zero_point);
  return c;
}

// When every code offset shares a factor g > 1 the same grid is reachable
// with scale * g and offsets / g. The coarser form often lands on an exactly
// representable scale (0.5 rather than 0.5 / 42), so it wins ties.
Candidate ReduceGrid(std::span<const float> w, const Candidate& best, QuantMode mode, int32_t max_code,
                     int32_t qmax, std::vector<int32_t>& codes) {
  for (size_t i = 0; i < w.size(); ++i)
    codes[i] = mode == QuantMode::kAsymmetric ? AssignAsymmetric(w[i], best.scale, best.zero_point, max_code)
                                              : AssignSymmetric(w[i], best.scale, qmax);
  int32_t g = 0;
  int32_t lo = 0, hi = 0;
  for (int32_t c : codes) {
    const int32_t o = c - best.zero_point;
    g = std::gcd(g, o);
    lo = std::min(lo, o);
    hi = std::max(hi, o);
  }
  if (g <= 1) return best;
  double num = 0.0, den = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    const double o = (codes[i] - best.zero_point) / g;
    num += w[i] * o;
    den += o * o;
  }
  if (!(den > 0.0 && num > 0.0)) return best;
  Candidate reduced{SanitizeScale(num / den), 0, best.error};
  if (mode == QuantMode::kAsymmetric) {
    const int32_t z_min = -lo / g;
    const int32_t z_max = max_code - hi / g;
    reduced.zero_point = std::clamp(static_cast<int32_t>(std::lround(static_cast<double>(best.zero_point) / g)),
                                    z_min, z_max);
  }
  for (size_t i = 0; i < w.size(); ++i)
    codes[i] = mode == QuantMode::kAsymmetric
                   ? AssignAsymmetric(w[i], reduced.scale, reduced.zero_point, max_code)
                   : AssignSymmetric(w[i], reduced.scale, qmax);
  reduced.error = GroupSquaredError(w, codes, reduced.scale, reduced.zero_point);
  return reduced.error <= best.error ? reduced : best;
}

void CheckFitArgs(std::span<const float> group, int bits) {
  if (group.empty()) throw Error(ErrorCode::kInvalidArgument, "empty group");
  if (!qtk::IsSupportedBits(bits))
    throw Error(ErrorCode::kInvalidArgument, "unsupported bits value " + std::to_string(bits));
}

void FinishFit(std::span<const float> w, GroupFit& fit) {
  fit.codes.resize(w.size());
  for (size_t i = 0; i < w.size(); ++i) {
    fit.codes[i] = fit.mode == QuantMode::kAsymmetric
                       ? AssignAsymmetric(w[i], fit.scale, fit.zero_point, MaxCode(fit.bits))
                       : AssignSymmetric(w[i], fit.scale, SymmetricQMax(fit.bits));
  }
  fit.squared_error = GroupSquaredError(w, fit.codes, fit.scale, fit.zero_point);
}

// Constant groups: max == min == c. Encoded exactly with s = max(|c|, guard).
bool FitConstant(std::span<const float> w, GroupFit& fit) {
  const auto [lo, hi] = std::minmax_element(w.begin(), w.end());
  if (*lo != *hi) return false;
  const float c = *lo;
  fit.codes.assign(w.size(), 0);
  fit.zero_point = 0;
  fit.scale = std::max(std::abs(c), kScaleGuard);
  if (c != 0.0f) {
    if (fit.mode == QuantMode::kAsymmetric) {
      if (c > 0.0f) {
        fit.codes.assign(w.size(), 1);
      } else {
        fit.zero_point = 1;
      }
    } else if (SymmetricQMax(fit.bits) >= 1) {
      fit.codes.assign(w.size(), c > 0.0f ? 1 : -1);
    }
  }
  fit.squared_error = GroupSquaredError(w, fit.codes, fit.scale, fit.zero_point);
  fit.initial_squared_error = fit.squared_error;
  return true;
}

}  // namespace

const char* ToString(QuantMode mode) {
  return mode == QuantMode::kAsymmetric ? "asymmetric" : "symmetric";
}

QuantMode ParseQuantMode(const std::string& text) {
  if (text == "asymmetric" || text == "asym") return QuantMode::kAsymmetric;
  if (text == "symmetric" || text == "sym") return QuantMode::kSymmetric;
  throw Error(ErrorCode::kInvalidArgument, "unknown quantization mode: " + text);
}

void ValidateConfig(const QuantConfig& cfg) {
  if (!qtk::IsSupportedBits(cfg.bits))
    throw Error(ErrorCode::kInvalidArgument, "unsupported bits value " + std::to_string(cfg.bits));
  if (cfg.group_size < kMinGroupSize || cfg.group_size > kMaxGroupSize)
    throw Error(ErrorCode::kInvalidArgument, "group size must be in [8, 512], got " + std::to_string(cfg.group_size));
  if (cfg.max_iters < 0) throw Error(ErrorCode::kInvalidArgument, "max_iters must be non-negative");
  if (!(cfg.rel_tol >= 0.0)) throw Error(ErrorCode::kInvalidArgument, "rel_tol must be non-negative");
}

double GroupSquaredError(std::span<const float> w, std::span<const int32_t> codes, float scale,
                         int32_t zero_point) {
  double sum = 0.0;
  for (size_t i = 0; i < w.size(); ++i) {
    const double d = static_cast<double>(w[i]) - DequantizeCode(codes[i], scale, zero_point);
    sum += d * d;
  }
  return sum;
}

GroupFit FitAsymmetric(std::span<const float> w, int bits, int max_iters, double rel_tol) {
  CheckFitArgs(w, bits);
  GroupFit fit;
  fit.bits = bits;
  fit.mode = QuantMode::kAsymmetric;
  if (FitConstant(w, fit)) return fit;

  const auto [lo_it, hi_it] = std::minmax_element(w.begin(), w.end());
  const double lo = *lo_it, hi = *hi_it;
  const int32_t max_code = MaxCode(bits);
  std::vector<int32_t> codes(w.size());

  const float s0 = SanitizeScale((hi - lo) / max_code);
  const auto z0 = static_cast<int32_t>(std::clamp(std::round(-lo / s0), 0.0, static_cast<double>(max_code)));
  Candidate best = DescendAsymmetric(w, max_code, s0, z0, 0, rel_tol, codes);
  fit.initial_squared_error = best.error;
  best = DescendAsymmetric(w, max_code, s0, z0, max_iters, rel_tol, codes);

  if (max_code + 1 <= kMaxExtraStarts) {
    // Narrow codes: exact scale search for every zero-point.
    const auto events = BuildScaleEvents(w, max_code);
    for (int32_t z = 0; z <= max_code; ++z) {
      const ScanResult scan = ScanScale(w, events, -z, max_code - z);
      if (!std::isfinite(scan.error)) continue;
      const float s = SanitizeScale(scan.scale);
      for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignAsymmetric(w[i], s, z, max_code);
      const double err = GroupSquaredError(w, codes, s, z);
      if (err < best.error) best = {s, z, err};
    }
  } else {
    // Wide codes: alternating descent from a window of zero-points around
    // z0, each with the smallest scale that covers [lo, hi], and a windowed
    // exact scale search next to z0.
    const int32_t z_lo = std::max(0, z0 - kMaxExtraStarts / 2);
    const int32_t z_hi = std::min(max_code, z0 + kMaxExtraStarts / 2);
    for (int32_t z = z_lo; z <= z_hi; ++z) {
      double s = 0.0;
      if (hi > 0.0 && z < max_code) s = std::max(s, hi / (max_code - z));
      if (lo < 0.0 && z > 0) s = std::max(s, -lo / z);
      if (s == 0.0) s = (hi - lo) / max_code;
      const Candidate c = DescendAsymmetric(w, max_code, SanitizeScale(s), z, max_iters, rel_tol, codes);
      if (c.error < best.error) best = c;
      if (std::abs(z - z0) > 1) continue;
      const ScanResult scan = ScanScaleWindow(w, -z, max_code - z, kWindowLow * s, kWindowHigh * s);
      if (std::isfinite(scan.error)) {
        const float sc = SanitizeScale(scan.scale);
        for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignAsymmetric(w[i], sc, z, max_code);
        const double err = GroupSquaredError(w, codes, sc, z);
        if (err < best.error) best = {sc, z, err};
      }
    }
  }

  if (const Candidate g = MinGapCandidate(w, QuantMode::kAsymmetric, max_code, 0, codes); g.error <= best.error)
    best = g;
  best = ReduceGrid(w, best, QuantMode::kAsymmetric, max_code, 0, codes);
  fit.scale = best.scale;
  fit.zero_point = best.zero_point;
  FinishFit(w, fit);
  return fit;
}

GroupFit FitSymmetric(std::span<const float> w, int bits, int max_iters, double rel_tol) {
  CheckFitArgs(w, bits);
  GroupFit fit;
  fit.bits = bits;
  fit.mode = QuantMode::kSymmetric;
  if (FitConstant(w, fit)) return fit;

  const int32_t qmax = SymmetricQMax(bits);
  double amax = 0.0;
  for (float v : w) amax = std::max(amax, static_cast<double>(std::abs(v)));
  if (qmax == 0) {
    // 1-bit symmetric has the single level 0.
    fit.scale = kScaleGuard;
    fit.codes.assign(w.size(), 0);
    fit.squared_error = GroupSquaredError(w, fit.codes, fit.scale, 0);
    fit.initial_squared_error = fit.squared_error;
    return fit;
  }

  std::vector<int32_t> codes(w.size());
  const float s0 = SanitizeScale(amax / qmax);
  Candidate best = DescendSymmetric(w, qmax, s0, 0, rel_tol, codes);
  fit.initial_squared_error = best.error;
  best = DescendSymmetric(w, qmax, s0, max_iters, rel_tol, codes);

  if (2 * qmax + 1 <= kMaxExtraStarts) {
    const ScanResult scan = ScanScale(w, BuildScaleEvents(w, qmax), -qmax, qmax);
    if (std::isfinite(scan.error)) {
      const float s = SanitizeScale(scan.scale);
      for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignSymmetric(w[i], s, qmax);
      const double err = GroupSquaredError(w, codes, s, 0);
      if (err < best.error) best = {s, 0, err};
    }
  } else {
    // Wide codes: exact search in a window around the min-max scale, plus
    // descent from a few clipped starting scales.
    const double s_mm = amax / qmax;
    const ScanResult scan = ScanScaleWindow(w, -qmax, qmax, kWindowLow * s_mm, kWindowHigh * s_mm);
    if (std::isfinite(scan.error)) {
      const float s = SanitizeScale(scan.scale);
      for (size_t i = 0; i < w.size(); ++i) codes[i] = AssignSymmetric(w[i], s, qmax);
      const double err = GroupSquaredError(w, codes, s, 0);
      if (err < best.error) best = {s, 0, err};
    }
    for (int k = 1; k <= kWideScaleStarts; ++k) {
      const float s = SanitizeScale(s_mm * (1.0 - 0.05 * k));
      const Candidate c = DescendSymmetric(w, qmax, s, max_iters, rel_tol, codes);
      if (c.error < best.error) best = c;
    }
  }

  if (const Candidate g = MinGapCandidate(w, QuantMode::kSymmetric, 0, qmax, codes); g.error <= best.error)
    best = g;
  best = ReduceGrid(w, best, QuantMode::kSymmetric, 0, qmax, codes);
  fit.scale = best.scale;
  fit.zero_point = 0;
  FinishFit(w, fit);
  return fit;
}

GroupFit FitGroup(std::span<const float> group, const QuantConfig& cfg) {
  return cfg.mode == QuantMode::kAsymmetric ? FitAsymmetric(group, cfg.bits, cfg.max_iters, cfg.rel_tol)
                                            : FitSymmetric(group, cfg.bits, cfg.max_iters, cfg.rel_tol);
}

std::vector<float> DequantizeGroup(const GroupFit& fit) {
  std::vector<float> out(fit.codes.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = DequantizeCode(fit.codes[i], fit.scale, fit.zero_point);
  return out;
}

ErrorMetrics ReconstructionError(std::span<const float> reference, std::span<const float> approx) {
  if (reference.size() != approx.size()) throw Error(ErrorCode::kMismatch, "shape mismatch in reconstruction_error");
  ErrorMetrics m;
  double ref_sq = 0.0;
  for (size_t i = 0; i < reference.size(); ++i) {
    const double d = static_cast<double>(reference[i]) - approx[i];
    m.squared_error += d * d;
    ref_sq += static_cast<double>(reference[i]) * reference[i];
  }
  m.mse = reference.empty() ? 0.0 : m.squared_error / static_cast<double>(reference.size());
  m.rel_frobenius = std::sqrt(m.squared_error) / std::max(std::sqrt(ref_sq), 1e-12);
  return m;
}

namespace {

void CheckTensor(const Tensor& w) {
  if (w.shape.size() != 1 && w.shape.size() != 2)
    throw Error(ErrorCode::kInvalidArgument, "unsupported rank " + std::to_string(w.shape.size()));
  if (w.rows() * w.cols() != w.values.size() || w.values.empty())
    throw Error(ErrorCode::kMismatch, "tensor values do not match shape");
}

QuantizedTensor MakeShell(const Tensor& w, const QuantConfig& cfg) {
  QuantizedTensor qt;
  qt.shape = w.shape;
  qt.bits = cfg.bits;
  qt.group_size = cfg.group_size;
  qt.mode = cfg.mode;
  qt.scales.resize(qt.group_count());
  qt.zero_points.resize(qt.group_count());
  return qt;
}

// Fits one group, snaps its scale to fp16 storage precision, re-derives the
// codes for the stored scale and writes codes (unsigned) and dequantized
// values for the group.
void QuantizeGroup(const Tensor& w, const QuantConfig& cfg, QuantizedTensor& qt, uint64_t g,
                   std::vector<uint32_t>& stored_codes, std::vector<float>& dequant) {
  const uint64_t per_row = qt.groups_per_row();
  const uint64_t row = g / per_row;
  const uint64_t begin = row * qt.cols() + (g % per_row) * cfg.group_size;
  const uint64_t end = std::min(begin + cfg.group_size, (row + 1) * qt.cols());
  const std::span<const float> group(w.values.data() + begin, end - begin);

  GroupFit fit = FitGroup(group, cfg);
  float stored = RoundToHalf(fit.scale);
  if (!(stored > 0.0f)) stored = HalfToFloat(0x0001);
  if (!std::isfinite(stored)) stored = HalfToFloat(0x7bff);
  if (stored != fit.scale) {
    fit.scale = stored;
    FinishFit(group, fit);
  }
  qt.scales[g] = fit.scale;
  qt.zero_points[g] = fit.zero_point;
  const int32_t offset = qt.code_offset();
  for (uint64_t i = 0; i < group.size(); ++i) {
    stored_codes[begin + i] = static_cast<uint32_t>(fit.codes[i] + offset);
    dequant[begin + i] = DequantizeCode(fit.codes[i], fit.scale, fit.zero_point);
  }
}

}  // namespace

QuantizeResult QuantizeTensor(const Tensor& w, const QuantConfig& cfg) {
  ValidateConfig(cfg);
  CheckTensor(w);
  QuantizeResult result;
  QuantizedTensor& qt = result.tensor;
  qt = MakeShell(w, cfg);
  std::vector<uint32_t> codes(w.values.size());
  std::vector<float> dequant(w.values.size());
  const auto groups = static_cast<int64_t>(qt.group_count());
#pragma omp parallel for schedule(dynamic, 4)
  for (int64_t g = 0; g < groups; ++g) QuantizeGroup(w, cfg, qt, static_cast<uint64_t>(g), codes, dequant);
  qt.packed = PackCodes(codes, cfg.bits);
  result.error = ReconstructionError(w.values, dequant);
  return result;
}

QuantizeResult QuantizeTensorSerial(const Tensor& w, const QuantConfig& cfg) {
  ValidateConfig(cfg);
  CheckTensor(w);
  QuantizeResult result;
  QuantizedTensor& qt = result.tensor;
  qt = MakeShell(w, cfg);
  std::vector<uint32_t> codes(w.values.size());
  std::vector<float> dequant(w.values.size());
  for (uint64_t g = 0; g < qt.group_count(); ++g) QuantizeGroup(w, cfg, qt, g, codes, dequant);
  qt.packed = PackCodes(codes, cfg.bits);
  result.error = ReconstructionError(w.values, dequant);
  return result;
}

void ValidateQuantized(const QuantizedTensor& qt) {
  if (!qtk::IsSupportedBits(qt.bits))
    throw Error(ErrorCode::kInvalidArgument, "unsupported bits value " + std::to_string(qt.bits));
  if (qt.shape.size() != 1 && qt.shape.size() != 2)
    throw Error(ErrorCode::kInvalidArgument, "unsupported rank " + std::to_string(qt.shape.size()));
  if (qt.group_size <= 0) throw Error(ErrorCode::kFormat, "bad group size");
  if (qt.packed.size() != qtk::PackedCodeBytes(qt.numel(), qt.bits))
    throw Error(ErrorCode::kFormat, "corrupt packed length");
  if (qt.scales.size() != qt.group_count() || qt.zero_points.size() != qt.group_count())
    throw Error(ErrorCode::kFormat, "group metadata count mismatch");
}

Tensor DequantizeTensor(const QuantizedTensor& qt) {
  ValidateQuantized(qt);
  Tensor out;
  out.shape = qt.shape;
  out.values.resize(qt.numel());
  const uint64_t cols = qt.cols();
  const uint64_t per_row = qt.groups_per_row();
  const int32_t offset = qt.code_offset();
  for (uint64_t i = 0; i < out.values.size(); ++i) {
    const uint64_t g = (i / cols) * per_row + (i % cols) / qt.group_size;
    const auto code = static_cast<int32_t>(ReadCode(qt.packed.data(), qt.packed.size(), i, qt.bits)) - offset;
    out.values[i] = DequantizeCode(code, qt.scales[g], qt.zero_points[g]);
  }
  return out;
}

qtk::TensorRecord ToRecord(std::string name, const QuantizedTensor& qt) {
  ValidateQuantized(qt);
  qtk::TensorRecord rec;
  rec.name = std::move(name);
  rec.dtype = qtk::DType::kQPacked;
  rec.bits = qt.bits;
  rec.group_size = qt.group_size;
  rec.symmetric = qt.mode == QuantMode::kSymmetric;
  rec.shape = qt.shape;
  rec.payload = qt.packed;
  const uint64_t meta_begin = rec.payload.size();
  rec.payload.resize(meta_begin + 4 * qt.group_count());
  uint8_t* scales = rec.payload.data() + meta_begin;
  uint8_t* zeros = scales + 2 * qt.group_count();
  for (uint64_t g = 0; g < qt.group_count(); ++g) {
    const uint16_t s = FloatToHalf(qt.scales[g]);
    const uint16_t z = FloatToHalf(static_cast<float>(qt.zero_points[g]));
    std::memcpy(scales + 2 * g, &s, 2);
    std::memcpy(zeros + 2 * g, &z, 2);
  }
  return rec;
}

QuantizedTensor FromRecord(const qtk::TensorRecord& record) {
  if (record.dtype != qtk::DType::kQPacked)
    throw Error(ErrorCode::kInvalidArgument, "tensor " + record.name + " is not quantized");
  qtk::ValidateRecord(record);
  QuantizedTensor qt;
  qt.shape = record.shape;
  qt.bits = record.bits;
  qt.group_size = record.group_size;
  qt.mode = record.symmetric ? QuantMode::kSymmetric : QuantMode::kAsymmetric;
  if (qt.shape.size() != 1 && qt.shape.size() != 2)
    throw Error(ErrorCode::kInvalidArgument, "unsupported rank for quantized tensor " + record.name);
  const uint64_t code_bytes = qtk::PackedCodeBytes(qt.numel(), qt.bits);
  const uint64_t groups = qt.group_count();
  qt.packed.assign(record.payload.begin(), record.payload.begin() + static_cast<std::ptrdiff_t>(code_bytes));
  qt.scales.resize(groups);
  qt.zero_points.resize(groups);
  const uint8_t* scales = record.payload.data() + code_bytes;
  const uint8_t* zeros = scales + 2 * groups;
  for (uint64_t g = 0; g < groups; ++g) {
    uint16_t s, z;
    std::memcpy(&s, scales + 2 * g, 2);
    std::memcpy(&z, zeros + 2 * g, 2);
    qt.scales[g] = HalfToFloat(s);
    const float zf = HalfToFloat(z);
    if (!(qt.scales[g] > 0.0f) || zf != std::round(zf) || zf < 0.0f || zf > static_cast<float>(MaxCode(qt.bits)))
      throw Error(ErrorCode::kFormat, "corrupt group metadata in tensor " + record.name);
    qt.zero_points[g] = static_cast<int32_t>(zf);
  }
  return qt;
}

Tensor TensorFromRecord(const qtk::TensorRecord& record) {
  if (record.shape.size() != 1 && record.shape.size() != 2)
    throw Error(ErrorCode::kInvalidArgument, "unsupported rank for tensor " + record.name);
  return Tensor{record.shape, qtk::RecordToFloats(record)};
}

}  // namespace lqa::quant
