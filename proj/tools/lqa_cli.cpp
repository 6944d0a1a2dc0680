// Command-line front end: quantize, inspect, sensitivity, adapt, sweep, synth,
// footprint.

#include <omp.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "lqa/bench.hpp"
#include "lqa/error.hpp"
#include "lqa/json_io.hpp"
#include "lqa/layer_select.hpp"
#include "lqa/qtk_format.hpp"

namespace {

using lqa::Error;
using lqa::ErrorCode;

constexpr int kExitUsage = 2;
constexpr int kExitInternal = 3;

std::string ReadText(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kNotFound, "input not found: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void WriteText(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot open for writing: " + path);
  out << text;
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + path);
}

std::string ShapeString(const std::vector<uint64_t>& shape) {
  std::string s = "[";
  for (size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

void ApplyThreadCap() {
  if (const char* env = std::getenv("QTK_THREADS")) {
    const int n = std::atoi(env);
    if (n <= 0) throw Error(ErrorCode::kInvalidArgument, "QTK_THREADS must be a positive integer");
    omp_set_num_threads(n);
  }
}

struct QuantizeArgs {
  std::string input, out, preset, plan, report;
  int top_k = -1;
};

int RunQuantize(const QuantizeArgs& a) {
  const auto container = lqa::qtk::ReadContainer(a.input);
  lqa::select::QuantPlan plan;
  std::string source;
  if (!a.plan.empty()) {
    plan = lqa::select::PlanFromText(ReadText(a.plan));
    source = "plan:" + a.plan;
  } else {
    auto cfg = lqa::select::Preset(a.preset);
    if (a.top_k >= 0) cfg.retain.auto_top_k = a.top_k;
    plan = lqa::select::BuildPlan(container, cfg);
    source = "preset:" + a.preset;
  }
  for (const auto& w : plan.warnings) std::cerr << "warning: " << w << "\n";

  const auto applied = lqa::select::ApplyPlan(container, plan);
  lqa::qtk::WriteContainer(applied.records, a.out);

  nlohmann::json layers = nlohmann::json::object();
  for (const auto& layer : applied.layers) {
    const auto& entry = plan.layers.at(layer.name);
    nlohmann::json j{{"bytes", layer.bytes}, {"rel_error", layer.error.rel_frobenius}, {"mse", layer.error.mse}};
    if (layer.retained) {
      j["action"] = "retain_fp16";
    } else {
      j["action"] = "quantize";
      j["bits"] = entry.config.bits;
      j["group_size"] = entry.config.group_size;
      j["mode"] = lqa::quant::ToString(entry.config.mode);
    }
    layers[layer.name] = std::move(j);
  }
  const auto fp = lqa::bench::ComputeFootprint(applied.records);
  nlohmann::json report{{"source", source},
                        {"layers", layers},
                        {"retain", plan.retain},
                        {"warnings", plan.warnings},
                        {"total_bytes", fp.total_bytes},
                        {"bits_per_weight", fp.bits_per_weight}};
  WriteText(a.report.empty() ? a.out + ".report.json" : a.report, report.dump(2) + "\n");
  return 0;
}

int RunInspect(const std::string& input) {
  const auto records = lqa::qtk::ReadContainer(input);
  for (const auto& r : records) {
    const bool q = r.dtype == lqa::qtk::DType::kQPacked;
    std::string dtype = lqa::qtk::ToString(r.dtype);
    if (q) dtype += r.symmetric ? "-sym" : "-asym";
    std::printf("%s\t%s\t%s\t%s\t%s\t%llu\n", r.name.c_str(), dtype.c_str(),
                q ? std::to_string(r.bits).c_str() : "-", q ? std::to_string(r.group_size).c_str() : "-",
                ShapeString(r.shape).c_str(), static_cast<unsigned long long>(r.payload.size()));
  }
  return 0;
}

struct SensitivityArgs {
  std::string input, preset = "lqa", plan_out;
  int top_k = -1;
};

int RunSensitivity(const SensitivityArgs& a) {
  const auto container = lqa::qtk::ReadContainer(a.input);
  auto cfg = lqa::select::Preset(a.preset);
  const auto report = lqa::select::ScoreContainer(container, cfg);
  int rank = 0;
  for (const auto& name : report.ranking) {
    std::printf("%d\t%s\t%s\t%.9g\n", ++rank, name.c_str(), lqa::select::ToString(lqa::select::ModalityOf(name)),
                report.scores.at(name));
  }
  if (!a.plan_out.empty()) {
    cfg.retain.names.clear();
    cfg.retain.auto_top_k = a.top_k >= 0 ? a.top_k : 1;
    WriteText(a.plan_out, lqa::select::PlanToText(lqa::select::BuildPlan(container, cfg)));
  }
  return 0;
}

struct AdaptArgs {
  std::string features, config, preset, report, model, predictions;
  bool no_pos = false, no_neg = false, timing = false;
  uint64_t seed = 0;
  int64_t budget_memory = -1;
  double budget_latency = -1.0;
};

int RunAdapt(const AdaptArgs& a) {
  const auto loaded = lqa::qtk::ReadStream(a.features);
  if (loaded.prototypes_renormalized) std::cerr << "warning: prototype rows were renormalized\n";
  const auto& stream = loaded.stream;

  lqa::tta::AdaptationConfig cfg;
  if (!a.config.empty()) {
    cfg = lqa::tta::ConfigFromText(ReadText(a.config));
  } else {
    cfg = lqa::tta::Preset(a.preset.empty() ? "cifar10" : a.preset);
  }
  if (a.no_pos) cfg.pos.enabled = false;
  if (a.no_neg) cfg.neg.enabled = false;

  lqa::bench::EvalOptions options;
  options.seed = a.seed;
  if (!a.model.empty()) options.model_bytes = lqa::bench::ComputeFootprint(lqa::qtk::ReadContainer(a.model)).total_bytes;
  if (a.budget_memory >= 0) options.budgets.memory_bytes = static_cast<uint64_t>(a.budget_memory);
  if (a.budget_latency >= 0.0) options.budgets.latency_seconds = a.budget_latency;

  lqa::tta::Engine engine(lqa::qlinear::MakePrototypes(stream.class_count, stream.dim, stream.prototypes,
                                                       cfg.logit_scale),
                          cfg);
  const auto report = lqa::bench::RunEval(stream, engine, options);
  const std::string text = lqa::bench::ReportToText(report, a.timing || options.budgets.latency_seconds.has_value());
  if (a.report.empty()) {
    std::cout << text;
  } else {
    WriteText(a.report, text);
  }
  if (!a.predictions.empty()) {
    std::string csv = "index,label,prediction\n";
    for (uint64_t i = 0; i < report.predictions.size(); ++i)
      csv += std::to_string(i) + "," + std::to_string(stream.labels[i]) + "," +
             std::to_string(report.predictions[i]) + "\n";
    WriteText(a.predictions, csv);
  }
  return 0;
}

struct SweepArgs {
  std::string input, out, mode = "asymmetric";
  std::vector<int> bits{1, 2, 3, 4, 8};
  std::vector<int> groups{8, 16, 32, 64, 128, 256, 512};
  int gaussian = 0;
  uint64_t seed = 0;
};

int RunSweep(const SweepArgs& a) {
  std::vector<lqa::qtk::TensorRecord> container;
  if (!a.input.empty()) {
    container = lqa::qtk::ReadContainer(a.input);
  } else if (a.gaussian > 0) {
    container = lqa::bench::GaussianContainer(a.gaussian, 1, 4096, a.seed);
  } else {
    throw Error(ErrorCode::kInvalidArgument, "sweep needs --input or --gaussian");
  }
  const auto rows = lqa::bench::Sweep(container, a.bits, a.groups, lqa::quant::ParseQuantMode(a.mode));
  const auto csv = lqa::bench::SweepToCsv(rows);
  if (a.out.empty()) {
    std::cout << csv;
  } else {
    WriteText(a.out, csv);
  }
  return 0;
}

struct SynthArgs {
  lqa::bench::SynthSpec spec;
  std::string out, model_out;
};

int RunSynth(const SynthArgs& a) {
  if (a.out.empty() && a.model_out.empty()) throw Error(ErrorCode::kInvalidArgument, "synth needs --out or --model-out");
  if (!a.out.empty()) lqa::qtk::WriteStream(lqa::bench::SynthStream(a.spec), a.out);
  if (!a.model_out.empty()) lqa::qtk::WriteContainer(lqa::bench::SynthModel(a.spec.seed), a.model_out);
  return 0;
}

int RunFootprint(const std::string& input, const std::string& report_path) {
  const auto fp = lqa::bench::ComputeFootprint(lqa::qtk::ReadContainer(input));
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : fp.layers) {
    std::printf("%s\t%s\t%s\t%llu\n", l.name.c_str(), l.modality.c_str(), lqa::qtk::ToString(l.dtype),
                static_cast<unsigned long long>(l.bytes));
    layers.push_back({{"name", l.name}, {"modality", l.modality}, {"dtype", lqa::qtk::ToString(l.dtype)},
                      {"params", l.params}, {"bytes", l.bytes}});
  }
  for (const auto& [m, b] : fp.bytes_by_modality)
    std::printf("total[%s]\t%llu\n", m.c_str(), static_cast<unsigned long long>(b));
  std::printf("total\t%llu\nparams\t%llu\nbits_per_weight\t%.6f\nfp32_ratio\t%.6f\n",
              static_cast<unsigned long long>(fp.total_bytes), static_cast<unsigned long long>(fp.total_params),
              fp.bits_per_weight, fp.fp32_ratio);
  if (!report_path.empty()) {
    nlohmann::json j{{"layers", layers},
                     {"bytes_by_modality", fp.bytes_by_modality},
                     {"total_bytes", fp.total_bytes},
                     {"total_params", fp.total_params},
                     {"bits_per_weight", fp.bits_per_weight},
                     {"fp32_ratio", fp.fp32_ratio}};
    WriteText(report_path, j.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selective hybrid quantization and cache-based test-time adaptation toolkit", "lqa"};
  app.require_subcommand(1, 1);

  QuantizeArgs qa;
  auto* quantize = app.add_subcommand("quantize", "Quantize a QTK container with a preset or plan file");
  quantize->add_option("--input", qa.input, "Input QTK container")->required();
  quantize->add_option("--out", qa.out, "Output QTK container")->required();
  auto* preset_opt = quantize->add_option("--preset", qa.preset, "Preset: lqa | lqa-lite");
  auto* plan_opt = quantize->add_option("--plan", qa.plan, "Plan file (JSON)");
  preset_opt->excludes(plan_opt);
  quantize->add_option("--top-k", qa.top_k, "Also retain the k most sensitive tensors per modality");
  quantize->add_option("--report", qa.report, "Sidecar report path (default: <out>.report.json)");

  std::string inspect_input;
  auto* inspect = app.add_subcommand("inspect", "List the tensors of a QTK container");
  inspect->add_option("input", inspect_input, "QTK container")->required();

  SensitivityArgs sa;
  auto* sensitivity = app.add_subcommand("sensitivity", "Rank tensors by quantization sensitivity");
  sensitivity->add_option("--input", sa.input, "Input QTK container")->required();
  sensitivity->add_option("--preset", sa.preset, "Preset providing the per-modality configs")
      ->capture_default_str();
  sensitivity->add_option("--top-k", sa.top_k, "Tensors retained per modality in --plan-out");
  sensitivity->add_option("--plan-out", sa.plan_out, "Write an AUTO top-k plan here");

  AdaptArgs aa;
  auto* adapt = app.add_subcommand("adapt", "Stream a QFS file through the cache adapter");
  adapt->add_option("--features", aa.features, "Input QFS stream")->required();
  auto* config_opt = adapt->add_option("--config", aa.config, "Adaptation config (JSON)");
  adapt->add_option("--preset", aa.preset, "Adaptation preset (default cifar10)")->excludes(config_opt);
  adapt->add_option("--report", aa.report, "Report path (default: stdout)");
  adapt->add_flag("--no-pos", aa.no_pos, "Disable the positive cache");
  adapt->add_flag("--no-neg", aa.no_neg, "Disable the negative cache");
  adapt->add_option("--seed", aa.seed, "Seed echoed into the report")->capture_default_str();
  adapt->add_option("--model", aa.model, "QTK container counted in the memory total");
  adapt->add_option("--budget-memory", aa.budget_memory, "Memory budget in bytes");
  adapt->add_option("--budget-latency", aa.budget_latency, "Per-sample latency budget in seconds");
  adapt->add_flag("--timing", aa.timing, "Include wall-clock latency in the report");
  adapt->add_option("--predictions", aa.predictions, "Write per-sample predictions (CSV)");

  SweepArgs wa;
  auto* sweep = app.add_subcommand("sweep", "Reconstruction error and bytes over bits x group sizes");
  auto* sweep_input = sweep->add_option("--input", wa.input, "Input QTK container");
  sweep->add_option("--gaussian", wa.gaussian, "Use N seeded Gaussian 4096-element tensors instead")
      ->excludes(sweep_input);
  sweep->add_option("--bits", wa.bits, "Bit widths")->delimiter(',')->capture_default_str();
  sweep->add_option("--groups", wa.groups, "Group sizes")->delimiter(',')->capture_default_str();
  sweep->add_option("--mode", wa.mode, "asymmetric | symmetric")->capture_default_str();
  sweep->add_option("--seed", wa.seed, "Seed for --gaussian")->capture_default_str();
  sweep->add_option("--out", wa.out, "CSV output (default: stdout)");

  SynthArgs ya;
  auto* synth = app.add_subcommand("synth", "Generate a synthetic shifted feature stream and/or toy model");
  synth->add_option("--classes", ya.spec.classes)->capture_default_str();
  synth->add_option("--dim", ya.spec.dim)->capture_default_str();
  synth->add_option("--samples", ya.spec.samples)->capture_default_str();
  synth->add_option("--sigma", ya.spec.sigma, "Intra-class noise")->capture_default_str();
  synth->add_option("--delta", ya.spec.delta, "Shift magnitude")->capture_default_str();
  synth->add_option("--rho", ya.spec.rho, "Prototype mismatch")->capture_default_str();
  synth->add_option("--seed", ya.spec.seed)->capture_default_str();
  synth->add_option("--out", ya.out, "QFS output");
  synth->add_option("--model-out", ya.model_out, "Also write a toy fp32 QTK model here");

  std::string fp_input, fp_report;
  auto* footprint = app.add_subcommand("footprint", "Byte-exact memory breakdown of a QTK container");
  footprint->add_option("input", fp_input, "QTK container")->required();
  footprint->add_option("--report", fp_report, "Also write the breakdown as JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: usage: " << e.what() << "\n";
    return kExitUsage;
  }

  try {
    ApplyThreadCap();
    if (*quantize) {
      if (qa.preset.empty() && qa.plan.empty()) throw Error(ErrorCode::kInvalidArgument, "quantize needs --preset or --plan");
      return RunQuantize(qa);
    }
    if (*inspect) return RunInspect(inspect_input);
    if (*sensitivity) return RunSensitivity(sa);
    if (*adapt) return RunAdapt(aa);
    if (*sweep) return RunSweep(wa);
    if (*synth) return RunSynth(ya);
    if (*footprint) return RunFootprint(fp_input, fp_report);
  } catch (const Error& e) {
    std::cerr << "error: " << lqa::ToString(e.code()) << ": " << e.what() << "\n";
    return e.code() == ErrorCode::kInternal ? kExitInternal : kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: internal: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
