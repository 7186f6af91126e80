#pragma once

// Synthetic massive-MIMO channel generation, the angular-delay transform and
// the dataset container/file format used for training and evaluation.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "csic/tensor.hpp"

namespace csic {

using Complex = std::complex<double>;

/// Row-major complex matrix.
struct ComplexMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<Complex> data;

  ComplexMatrix() = default;
  ComplexMatrix(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c) {}

  Complex& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  const Complex& operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double frobenius_norm() const;
};

/// Channel in the spatial-frequency domain: subcarriers x transmit antennas.
using SpatialFreqChannel = ComplexMatrix;

enum class Environment : std::uint8_t { kIndoor, kOutdoor };

const char* to_string(Environment env) noexcept;

enum class Profile : std::uint8_t { kDesk, kFull };

struct ScenarioConfig {
  Environment environment = Environment::kIndoor;
  int paths = 6;
  int antennas = 16;         // Nt
  int subcarriers = 64;      // N-hat-c
  int truncated_rows = 16;   // N-tilde-c
  double delay_spread = 2.0;     // mean excess delay, in delay bins
  double first_arrival = 2.0;    // delay of the earliest path, in delay bins
  double max_delay = 12.0;       // cap on path delay, in delay bins
  std::uint64_t seed = 1;

  /// Preset for (environment, profile): indoor-like uses 6 paths and a short
  /// delay spread, outdoor-like 12 paths and a spread twice as long.
  static ScenarioConfig preset(Environment env, Profile profile, std::uint64_t seed);

  void validate() const;
};

/// One propagation path: complex gain, departure angle (rad), delay (bins).
struct PathSpec {
  Complex gain;
  double angle = 0.0;
  double delay = 0.0;
};

/// Sum of paths, each a gain times a ULA steering vector times a delay phase ramp.
SpatialFreqChannel synthesize(std::span<const PathSpec> paths, int antennas, int subcarriers);

/// Random paths for sample `index`; depends only on (config, index). Path power
/// decays exponentially with excess delay.
std::vector<PathSpec> draw_paths(const ScenarioConfig& config, std::uint64_t index);

/// `count` channels for sample indices [first_index, first_index + count).
std::vector<SpatialFreqChannel> generate(const ScenarioConfig& config, std::size_t count,
                                         std::uint64_t first_index = 0);

/// H = F_d * Hhat * F_a^H with unitary DFT matrices.
ComplexMatrix to_angular_delay(const SpatialFreqChannel& hhat);

/// Inverse of to_angular_delay: Hhat = F_d^H * H * F_a.
SpatialFreqChannel from_angular_delay(const ComplexMatrix& h);

/// Affine map between physical values and the [0,1] training range.
struct Normalization {
  float offset = 0.0f;
  float scale = 1.0f;

  /// Fits the map so [lo, hi] -> [0, 1]; a degenerate range maps to 0.5 with scale 1.
  static Normalization fit(double lo, double hi);
  float normalize(double x) const;
  double denormalize(float x) const { return static_cast<double>(x) * scale + offset; }
};

/// One truncated angular-delay matrix as real and imaginary planes [2, rows, antennas].
struct ChannelSample {
  Tensor planes;
  Normalization norm;
};

/// Keeps the first `rows` delay rows and normalizes with this matrix's own range.
ChannelSample truncate_and_normalize(const ComplexMatrix& h, int rows);

/// Collection of normalized samples sharing one normalization.
struct Dataset {
  int antennas = 0;
  int rows = 0;
  Normalization norm;
  Tensor samples;  // [count, 2, rows, antennas]

  std::size_t count() const { return samples.empty() ? 0 : static_cast<std::size_t>(samples.dim(0)); }
  std::size_t sample_size() const { return 2 * static_cast<std::size_t>(rows) * antennas; }

  /// Samples at the given positions stacked into [n, 2, rows, antennas].
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor batch(std::size_t first, std::size_t n) const;
  ChannelSample sample(std::size_t i) const;

  /// Samples [first, first + n) as a new dataset with the same normalization.
  Dataset slice(std::size_t first, std::size_t n) const;
};

/// Truncates every matrix to `rows` and normalizes with the global min/max
/// over all real and imaginary parts.
Dataset build_dataset(std::span<const ComplexMatrix> angular_delay, int rows);

/// Matrix of physical values [rows x antennas] for dataset-layout planes.
ComplexMatrix planes_to_matrix(std::span<const float> planes, int rows, int antennas,
                               const Normalization& norm);

inline constexpr std::uint16_t kDatasetFormatVersion = 1;
inline constexpr std::size_t kDatasetHeaderBytes = 22;

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset);
Dataset parse_dataset(std::span<const std::uint8_t> bytes);
void export_dataset(const Dataset& dataset, const std::filesystem::path& path);
Dataset import_dataset(const std::filesystem::path& path);

}  // namespace csic
