#include "lqa/bench.hpp"

#include <algorithm>
#include <chrono>
#include <limits>
#include <cmath>
#include <cstdlib>
#include <iomanip>
#include <random>
#include <sstream>

#include "lqa/error.hpp"
#include "lqa/json_io.hpp"
#include "lqa/qlinear.hpp"

namespace lqa::bench {
namespace {

void Normalize(std::vector<double>& v) {
  double sq = 0.0;
  for (double a : v) sq += a * a;
  const double norm = std::sqrt(sq);
  if (norm > 0.0)
    for (double& a : v) a /= norm;
}

std::vector<double> GaussianVector(std::mt19937_64& rng, uint32_t d, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> v(d);
  for (double& a : v) a = normal(rng);
  return v;
}

void AppendAsFloat(std::vector<float>& out, const std::vector<double>& v) {
  for (double a : v) out.push_back(static_cast<float>(a));
}

const char* ModalityName(const std::string& name) {
  if (name.rfind("vision.", 0) == 0) return "vision";
  if (name.rfind("text.", 0) == 0) return "text";
  return "other";
}

SweepRow SweepOne(const std::vector<quant::Tensor>& tensors, int bits, int group, quant::QuantMode mode) {
  const quant::QuantConfig cfg{bits, group, mode};
  SweepRow row{bits, group, 0.0, 0.0, 0};
  for (const auto& t : tensors) {
    const auto q = quant::QuantizeTensorSerial(t, cfg);
    row.rel_error += q.error.rel_frobenius;
    row.mse += q.error.mse;
    row.bytes += qtk::QPackedPayloadBytes(t.shape, bits, group);
  }
  if (!tensors.empty()) {
    row.rel_error /= static_cast<double>(tensors.size());
    row.mse /= static_cast<double>(tensors.size());
  }
  return row;
}

std::vector<quant::Tensor> LoadTensors(const std::vector<qtk::TensorRecord>& container) {
  std::vector<quant::Tensor> tensors;
  tensors.reserve(container.size());
  for (const auto& rec : container) tensors.push_back(quant::TensorFromRecord(rec));
  return tensors;
}

void CheckSweepArgs(const std::vector<int>& bits, const std::vector<int>& groups) {
  for (int b : bits)
    for (int g : groups) quant::ValidateConfig({b, g});
}

}  // namespace

qtk::FeatureStream SynthStream(const SynthSpec& spec) {
  if (spec.dim < 2) throw Error(ErrorCode::kInvalidArgument, "synth: dim must be >= 2");
  if (spec.samples < 1) throw Error(ErrorCode::kInvalidArgument, "synth: samples must be >= 1");
  if (spec.classes < 1) throw Error(ErrorCode::kInvalidArgument, "synth: classes must be >= 1");
  if (!(spec.sigma >= 0.0 && spec.delta >= 0.0 && spec.rho >= 0.0))
    throw Error(ErrorCode::kInvalidArgument, "synth: sigma, delta and rho must be non-negative");

  std::mt19937_64 rng(spec.seed);
  const uint32_t d = spec.dim;
  const double noise_std = 1.0 / std::sqrt(static_cast<double>(d));

  std::vector<std::vector<double>> centroids;
  for (uint32_t c = 0; c < spec.classes; ++c) {
    auto v = GaussianVector(rng, d, 1.0);
    Normalize(v);
    centroids.push_back(std::move(v));
  }
  auto shift = GaussianVector(rng, d, 1.0);
  Normalize(shift);

  qtk::FeatureStream s;
  s.dim = d;
  s.class_count = spec.classes;
  s.prototypes.reserve(static_cast<uint64_t>(d) * spec.classes);
  for (uint32_t c = 0; c < spec.classes; ++c) {
    auto noise = GaussianVector(rng, d, noise_std);
    std::vector<double> p(d);
    for (uint32_t j = 0; j < d; ++j) p[j] = centroids[c][j] + spec.rho * noise[j];
    Normalize(p);
    AppendAsFloat(s.prototypes, p);
  }
  s.features.reserve(spec.samples * d);
  s.labels.reserve(spec.samples);
  for (uint64_t t = 0; t < spec.samples; ++t) {
    const auto y = static_cast<uint32_t>(t % spec.classes);
    auto noise = GaussianVector(rng, d, noise_std);
    std::vector<double> x(d);
    for (uint32_t j = 0; j < d; ++j) x[j] = centroids[y][j] + spec.sigma * noise[j] + spec.delta * shift[j];
    Normalize(x);
    AppendAsFloat(s.features, x);
    s.labels.push_back(y);
  }
  return s;
}

std::vector<uint32_t> ZeroShotPredictions(const qtk::FeatureStream& stream) {
  std::vector<uint32_t> out(stream.sample_count());
  for (uint64_t i = 0; i < stream.sample_count(); ++i) {
    const float* f = stream.feature(i);
    uint32_t best = 0;
    double best_sim = -std::numeric_limits<double>::infinity();
    for (uint32_t c = 0; c < stream.class_count; ++c) {
      const float* p = stream.prototype(c);
      double dot = 0.0, ff = 0.0;
      for (uint32_t j = 0; j < stream.dim; ++j) {
        dot += static_cast<double>(f[j]) * p[j];
        ff += static_cast<double>(f[j]) * f[j];
      }
      const double sim = ff > 0.0 ? dot / std::sqrt(ff) : 0.0;
      if (sim > best_sim) {
        best_sim = sim;
        best = c;
      }
    }
    out[i] = best;
  }
  return out;
}

MemoryFootprint ComputeFootprint(const std::vector<qtk::TensorRecord>& container) {
  MemoryFootprint fp;
  for (const auto& rec : container) {
    LayerBytes layer{rec.name, ModalityName(rec.name), rec.dtype, rec.numel(), 0};
    switch (rec.dtype) {
      case qtk::DType::kFP32: layer.bytes = 4 * layer.params; break;
      case qtk::DType::kFP16: layer.bytes = 2 * layer.params; break;
      case qtk::DType::kQPacked:
        layer.bytes = qtk::PackedCodeBytes(layer.params, rec.bits) + 4 * qtk::GroupCount(rec.shape, rec.group_size);
        break;
    }
    fp.bytes_by_modality[layer.modality] += layer.bytes;
    fp.total_bytes += layer.bytes;
    fp.total_params += layer.params;
    fp.layers.push_back(std::move(layer));
  }
  if (fp.total_params > 0) fp.bits_per_weight = 8.0 * static_cast<double>(fp.total_bytes) / fp.total_params;
  if (fp.total_bytes > 0) fp.fp32_ratio = 4.0 * static_cast<double>(fp.total_params) / fp.total_bytes;
  return fp;
}

MetricsReport RunEval(const qtk::FeatureStream& stream, tta::Engine& engine, const EvalOptions& options) {
  if (stream.dim != engine.prototypes().dim || stream.class_count != engine.prototypes().class_count)
    throw Error(ErrorCode::kMismatch, "dimension mismatch between stream and prototypes");
  using Clock = std::chrono::steady_clock;

  MetricsReport report;
  report.samples = stream.sample_count();
  report.config = engine.config();
  report.seed = options.seed;
  report.model_bytes = options.model_bytes;
  report.budgets = options.budgets;
  report.predictions.reserve(report.samples);

  double total_s = 0.0, first10_s = 0.0;
  for (uint64_t i = 0; i < stream.sample_count(); ++i) {
    const auto start = Clock::now();
    const tta::StepResult r = engine.Step({stream.feature(i), stream.dim});
    const double elapsed = std::chrono::duration<double>(Clock::now() - start).count();
    total_s += elapsed;
    if (i < 10) first10_s += elapsed;
    report.predictions.push_back(r.prediction);
    if (r.prediction == stream.labels[i]) ++report.correct;
    report.positive_admissions += r.admitted_positive;
    report.negative_admissions += r.admitted_negative;
    report.cache_bytes_peak = std::max(report.cache_bytes_peak, engine.CacheBytes());
  }

  const auto zero_shot = ZeroShotPredictions(stream);
  for (uint64_t i = 0; i < zero_shot.size(); ++i) report.zero_shot_correct += zero_shot[i] == stream.labels[i];

  if (report.samples > 0) {
    report.top1 = static_cast<double>(report.correct) / report.samples;
    report.zero_shot_top1 = static_cast<double>(report.zero_shot_correct) / report.samples;
    report.latency_mean_s = total_s / report.samples;
    report.latency_first10_s = first10_s / std::min<uint64_t>(10, report.samples);
  }
  report.total_bytes = report.model_bytes + report.cache_bytes_peak;
  if (report.budgets.memory_bytes) report.memory_ok = report.total_bytes <= *report.budgets.memory_bytes;
  if (report.budgets.latency_seconds) report.latency_ok = report.latency_mean_s <= *report.budgets.latency_seconds;
  return report;
}

std::string ReportToText(const MetricsReport& r, bool include_timing) {
  nlohmann::json j;
  j["samples"] = r.samples;
  j["correct"] = r.correct;
  j["top1"] = r.top1;
  j["zero_shot_correct"] = r.zero_shot_correct;
  j["zero_shot_top1"] = r.zero_shot_top1;
  j["positive_admissions"] = r.positive_admissions;
  j["negative_admissions"] = r.negative_admissions;
  j["memory"] = {{"model_bytes", r.model_bytes},
                 {"cache_bytes_peak", r.cache_bytes_peak},
                 {"total_bytes", r.total_bytes},
                 {"note", "static weight bytes plus peak live cache bytes"}};
  nlohmann::json budgets = nlohmann::json::object();
  if (r.budgets.memory_bytes) {
    budgets["memory_bytes"] = *r.budgets.memory_bytes;
    budgets["memory"] = *r.memory_ok ? "PASS" : "FAIL";
  }
  if (r.budgets.latency_seconds) {
    budgets["latency_seconds"] = *r.budgets.latency_seconds;
    budgets["latency"] = *r.latency_ok ? "PASS" : "FAIL";
  }
  j["budgets"] = budgets;
  if (include_timing) {
    j["latency"] = {{"mean_s", r.latency_mean_s}, {"first10_mean_s", r.latency_first10_s}};
  }
  j["config"] = tta::ConfigToJson(r.config);
  j["seed"] = r.seed;
  return j.dump(2) + "\n";
}

std::vector<SweepRow> Sweep(const std::vector<qtk::TensorRecord>& container, const std::vector<int>& bits,
                            const std::vector<int>& groups, quant::QuantMode mode) {
  CheckSweepArgs(bits, groups);
  const auto tensors = LoadTensors(container);
  std::vector<SweepRow> rows(bits.size() * groups.size());
  const auto n = static_cast<int64_t>(rows.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (int64_t i = 0; i < n; ++i) {
    const size_t bi = static_cast<size_t>(i) / groups.size();
    const size_t gi = static_cast<size_t>(i) % groups.size();
    rows[i] = SweepOne(tensors, bits[bi], groups[gi], mode);
  }
  return rows;
}

std::vector<SweepRow> SweepSerial(const std::vector<qtk::TensorRecord>& container, const std::vector<int>& bits,
                                  const std::vector<int>& groups, quant::QuantMode mode) {
  CheckSweepArgs(bits, groups);
  const auto tensors = LoadTensors(container);
  std::vector<SweepRow> rows;
  for (int b : bits)
    for (int g : groups) rows.push_back(SweepOne(tensors, b, g, mode));
  return rows;
}

std::string SweepToCsv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "bits,group_size,rel_error,mse,bytes\n";
  out << std::setprecision(9);
  for (const auto& r : rows) out << r.bits << ',' << r.group_size << ',' << r.rel_error << ',' << r.mse << ',' << r.bytes << '\n';
  return out.str();
}

std::vector<qtk::TensorRecord> SynthModel(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 0.02f);
  std::vector<qtk::TensorRecord> out;
  auto dense = [&](const std::string& name, uint64_t rows, uint64_t cols) {
    std::vector<float> v(rows * cols);
    for (float& x : v) x = normal(rng);
    out.push_back(qtk::MakeFP32Record(name, {rows, cols}, v));
  };
  auto norm = [&](const std::string& name, uint64_t width) {
    std::vector<float> gamma(width), beta(width);
    for (float& x : gamma) x = 1.0f + normal(rng);
    for (float& x : beta) x = normal(rng);
    out.push_back(qtk::MakeFP32Record(name + ".weight", {width}, gamma));
    out.push_back(qtk::MakeFP32Record(name + ".bias", {width}, beta));
  };
  constexpr uint64_t kWidth = 256;
  for (const std::string tower : {"vision", "text"}) {
    if (tower == "vision") {
      dense("vision.patch_embed.weight", kWidth, 192 + 64);
    } else {
      dense("text.token_embedding.weight", 512, kWidth);
    }
    const std::string block = tower + ".blocks.0.";
    norm(block + "ln_1", kWidth);
    dense(block + "attn.qkv.weight", 3 * kWidth, kWidth);
    dense(block + "attn.out.weight", kWidth, kWidth);
    norm(block + "ln_2", kWidth);
    dense(block + "mlp.fc1.weight", 2 * kWidth, kWidth);
    dense(block + "mlp.fc2.weight", kWidth, 2 * kWidth);
    norm(tower == "vision" ? "vision.ln_post" : "text.ln_final", kWidth);
    dense(tower + ".proj", kWidth, kWidth);
  }
  return out;
}

std::vector<qtk::TensorRecord> GaussianContainer(int count, uint64_t rows, uint64_t cols, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::vector<qtk::TensorRecord> out;
  for (int i = 0; i < count; ++i) {
    std::vector<float> values(rows * cols);
    for (float& v : values) v = normal(rng);
    std::vector<uint64_t> shape = rows == 1 ? std::vector<uint64_t>{cols} : std::vector<uint64_t>{rows, cols};
    out.push_back(qtk::MakeFP32Record("vision.gauss." + std::to_string(i), std::move(shape), values));
  }
  return out;
}

}  // namespace lqa::bench
