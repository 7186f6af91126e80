#pragma once

// Reconstruction quality (NMSE, cosine similarity), latency measurement and
// CSV/JSON reports.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csic/channel.hpp"
#include "csic/engine.hpp"

namespace csic {

/// Reported in place of -inf dB for a perfect reconstruction.
inline constexpr double kNmseFloorDb = -300.0;

struct NmseResult {
  double ratio = 0.0;          // mean of |Hrec - H|^2 / |H|^2
  double db = kNmseFloorDb;    // 10 log10(ratio), floored
  std::size_t samples = 0;     // samples that entered the mean
  std::size_t excluded = 0;    // samples skipped for a zero-norm original
};

NmseResult nmse(std::span<const ComplexMatrix> original, std::span<const ComplexMatrix> reconstructed);

struct RhoResult {
  double rho = 0.0;
  std::size_t vectors = 0;   // per-row vectors that entered the mean
  std::size_t excluded = 0;  // vectors skipped for a zero norm
};

/// Mean over samples and delay rows of |h^H h_rec| / (|h| |h_rec|), where h is
/// one row (a vector over antennas). Throws kConfig if every row is zero.
RhoResult cosine_similarity(std::span<const ComplexMatrix> original,
                            std::span<const ComplexMatrix> reconstructed);

struct QualityReport {
  double nmse_db = 0.0;
  double rho = 0.0;
  std::size_t samples = 0;
  std::size_t excluded = 0;
};

/// Quality of `reconstructed` [S,2,rows,antennas] (normalized units) against
/// `truth`; both are mapped back to physical values with truth.norm first.
QualityReport evaluate_quality(const Dataset& truth, const Tensor& reconstructed);

/// Runs `data` through `p` in batches and scores the reconstruction.
QualityReport evaluate(const ExecutionPlan& p, const Dataset& data, int batch_size = 256);

// ------------------------------------------------------------------ timing ---

struct TimingReport {
  int warmup = 0;
  int runs = 0;
  double median_us = 0.0;
  double p5_us = 0.0;
  double p95_us = 0.0;
  double mean_us = 0.0;
  std::uint64_t macs = 0;
};

/// Linear-interpolated percentile (q in [0,1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

/// Times `fn` after `warmup` unmeasured calls. runs < 10 is a kConfig error.
TimingReport time_calls(const std::function<void()>& fn, int warmup, int runs);

/// Per-inference latency of `p` on a fixed input; MACs from one extra run.
TimingReport bench_inference(const ExecutionPlan& p, const Tensor& input, int warmup = 10,
                             int runs = 100);

// ----------------------------------------------------------------- reports ---

struct BenchReport {
  std::string model;
  double gamma = 0.0;
  std::string technique;
  std::size_t size_bytes = 0;
  TimingReport timing;
  std::optional<QualityReport> indoor;
  std::optional<QualityReport> outdoor;
};

std::string bench_csv_header();
std::string to_csv(std::span<const BenchReport> reports);
std::string to_json(std::span<const BenchReport> reports);
std::vector<BenchReport> parse_bench_json(const std::string& text);

/// Writes <stem>.csv and <stem>.json.
void emit_report(std::span<const BenchReport> reports, const std::filesystem::path& stem);

}  // namespace csic
