#include "csic/pipeline.hpp"

#include <cstdio>

#include "csic/engine.hpp"
#include "csic/model_io.hpp"
#include "csic/rng.hpp"

namespace csic {

std::optional<Profile> parse_profile(const std::string& text) {
  if (text == "desk") return Profile::kDesk;
  if (text == "full") return Profile::kFull;
  return std::nullopt;
}

const char* to_string(Profile profile) noexcept {
  return profile == Profile::kDesk ? "desk" : "full";
}

ProfileDefaults profile_defaults(Profile profile) {
  if (profile == Profile::kDesk) return {2000, 500, 50, 10};
  return {20000, 2000, 200, 40};
}

ModelSpec profile_model_spec(Profile profile, double gamma, std::uint64_t seed) {
  const ScenarioConfig scenario = ScenarioConfig::preset(Environment::kIndoor, profile, seed);
  ModelSpec spec;
  spec.rows = scenario.truncated_rows;
  spec.antennas = scenario.antennas;
  spec.gamma = gamma;
  spec.seed = seed;
  spec.validate();
  return spec;
}

DataSplit generate_split(const ScenarioConfig& config, std::size_t train, std::size_t test) {
  if (train == 0 || test == 0) fail(ErrorKind::kConfig, "train and test sample counts must be >= 1");
  const auto channels = generate(config, train + test);
  std::vector<ComplexMatrix> angular;
  angular.reserve(channels.size());
  for (const auto& h : channels) angular.push_back(to_angular_delay(h));
  const Dataset all = build_dataset(angular, config.truncated_rows);
  return {all.slice(0, train), all.slice(train, test)};
}

std::uint64_t scenario_seed(std::uint64_t seed, Environment env) {
  return mix_seed(seed, static_cast<std::uint64_t>(env) + 1);
}

std::string technique_label(const Model& model) {
  bool pruned = false, clustered = false, quantized = false;
  for (const auto& layer : model.layers) {
    if (!layer.has_weights()) continue;
    const WeightStore& w = layer.weights;
    if (const auto* s = w.get_if<SparseBitmap>()) {
      pruned = true;
      quantized = quantized || s->values.encoding() != ValueEncoding::kF32;
    } else if (const auto* c = w.get_if<Clustered>()) {
      clustered = true;
      quantized = quantized || c->centroids.encoding() != ValueEncoding::kF32;
    } else if (w.tag() != StoreTag::kDenseF32) {
      quantized = true;
    }
  }
  std::string label = pruned ? "prune" : clustered ? "cluster" : "";
  if (quantized) label += label.empty() ? "quantize" : "-quantize";
  return label.empty() ? "none" : label;
}

const char* to_string(SweepLevel level) noexcept {
  switch (level) {
    case SweepLevel::kFloat32: return "f32";
    case SweepLevel::kFloat16: return "f16";
    case SweepLevel::kDynamicRangeI8: return "dynamic-i8";
  }
  return "?";
}

std::optional<SweepLevel> parse_sweep_level(const std::string& text) {
  if (text == "f32" || text == "float32") return SweepLevel::kFloat32;
  if (auto q = parse_quant_level(text)) {
    return *q == QuantLevel::kFloat16 ? SweepLevel::kFloat16 : SweepLevel::kDynamicRangeI8;
  }
  return std::nullopt;
}

std::vector<SweepCell> run_sweep(const Model& model, const Dataset& train, const Dataset& indoor_test,
                                 const Dataset* outdoor_test, const SweepConfig& config) {
  if (config.sparsities.empty() || config.levels.empty()) {
    fail(ErrorKind::kConfig, "sweep needs at least one sparsity and one level");
  }
  if (config.bench_batch < 1) fail(ErrorKind::kConfig, "bench batch must be >= 1");
  std::vector<SweepCell> cells;
  const Tensor bench_input = indoor_test.batch(0, std::min<std::size_t>(config.bench_batch, indoor_test.count()));
  for (const double sparsity : config.sparsities) {
    PruneConfig prune;
    prune.ratio = sparsity;
    prune.validate();
    const Model tuned = fine_tune(prune_magnitude(model, prune), train, config.tune);
    for (const SweepLevel level : config.levels) {
      Model variant = tuned;
      if (level == SweepLevel::kFloat16) variant = quantize(tuned, QuantLevel::kFloat16);
      if (level == SweepLevel::kDynamicRangeI8) variant = quantize(tuned, QuantLevel::kDynamicRangeI8);
      const ExecutionPlan p = plan(variant, config.force_dense);
      SweepCell cell;
      cell.sparsity = sparsity;
      cell.level = level;
      char name[64];
      std::snprintf(name, sizeof name, "sparsity%.0f-%s", sparsity * 100.0, to_string(level));
      cell.report.model = name;
      cell.report.gamma = model.spec.gamma;
      cell.report.technique = sparsity > 0.0 ? "prune-quantize" : "quantize";
      if (level == SweepLevel::kFloat32) cell.report.technique = sparsity > 0.0 ? "prune" : "none";
      cell.report.size_bytes = size_of(variant);
      cell.report.timing = bench_inference(p, bench_input, config.warmup, config.runs);
      cell.report.indoor = evaluate(p, indoor_test);
      if (outdoor_test != nullptr) cell.report.outdoor = evaluate(p, *outdoor_test);
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

std::string sweep_grid_csv(const std::vector<SweepCell>& cells) {
  std::string out = "sparsity,level,size_bytes,inference_us_median,indoor_nmse_db,indoor_rho,outdoor_nmse_db,outdoor_rho\n";
  char buf[256];
  for (const auto& c : cells) {
    const auto& r = c.report;
    std::snprintf(buf, sizeof buf, "%.2f,%s,%zu,%.6g,", c.sparsity, to_string(c.level), r.size_bytes,
                  r.timing.median_us);
    out += buf;
    if (r.indoor) {
      std::snprintf(buf, sizeof buf, "%.6g,%.6g,", r.indoor->nmse_db, r.indoor->rho);
      out += buf;
    } else {
      out += ",,";
    }
    if (r.outdoor) {
      std::snprintf(buf, sizeof buf, "%.6g,%.6g", r.outdoor->nmse_db, r.outdoor->rho);
      out += buf;
    } else {
      out += ",";
    }
    out += "\n";
  }
  return out;
}

}  // namespace csic
