#pragma once

// End-to-end helpers shared by the command-line tool and the acceptance run:
// profile defaults, train/test dataset generation and the sparsity x
// quantization sweep.

#include <optional>
#include <string>
#include <vector>

#include "csic/channel.hpp"
#include "csic/compressor.hpp"
#include "csic/metrics.hpp"
#include "csic/model.hpp"

namespace csic {

std::optional<Profile> parse_profile(const std::string& text);
const char* to_string(Profile profile) noexcept;

struct ProfileDefaults {
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
  int epochs = 0;
  int fine_tune_epochs = 0;
};

ProfileDefaults profile_defaults(Profile profile);

/// Model spec whose input shape matches the profile.
ModelSpec profile_model_spec(Profile profile, double gamma, std::uint64_t seed);

struct DataSplit {
  Dataset train;
  Dataset test;
};

/// Generates train samples with indices [0, train) and test samples with
/// indices [train, train + test) and normalizes both with one global range.
DataSplit generate_split(const ScenarioConfig& config, std::size_t train, std::size_t test);

/// Scenario seed for an environment, derived from the run seed.
std::uint64_t scenario_seed(std::uint64_t seed, Environment env);

/// Compression applied to `model`, read off its weight stores: "none",
/// "prune", "quantize", "cluster", "prune-quantize" or "cluster-quantize".
std::string technique_label(const Model& model);

/// Precision of one sweep column. kFloat32 leaves the pruned model as is.
enum class SweepLevel : std::uint8_t { kFloat32, kFloat16, kDynamicRangeI8 };

const char* to_string(SweepLevel level) noexcept;
std::optional<SweepLevel> parse_sweep_level(const std::string& text);

struct SweepConfig {
  std::vector<double> sparsities{0.0, 0.3, 0.5, 0.7, 0.9};
  std::vector<SweepLevel> levels{SweepLevel::kFloat32, SweepLevel::kFloat16,
                                 SweepLevel::kDynamicRangeI8};
  FineTuneConfig tune;
  int warmup = 10;
  int runs = 100;
  int bench_batch = 1;
  bool force_dense = false;
};

struct SweepCell {
  double sparsity = 0.0;
  SweepLevel level = SweepLevel::kFloat32;
  BenchReport report;
};

/// For each sparsity: prune, fine-tune (also at sparsity 0, so every cell gets
/// the same budget), then quantize to each level, measure size, timing and
/// quality. Cells come out sparsity-major in the configured order.
std::vector<SweepCell> run_sweep(const Model& model, const Dataset& train, const Dataset& indoor_test,
                                 const Dataset* outdoor_test, const SweepConfig& config);

/// Plot-ready grid: sparsity, level, size and quality per cell.
std::string sweep_grid_csv(const std::vector<SweepCell>& cells);

}  // namespace csic
