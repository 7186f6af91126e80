#include "csic/channel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "csic/byte_io.hpp"
#include "csic/rng.hpp"

namespace csic {
namespace {

// Twiddles w^j = exp(sign * 2*pi*i*j/n) / sqrt(n) for j in [0, n).
std::vector<Complex> twiddles(int n, double sign) {
  std::vector<Complex> t(static_cast<std::size_t>(n));
  const double norm = 1.0 / std::sqrt(static_cast<double>(n));
  for (int j = 0; j < n; ++j) {
    const double a = sign * 2.0 * std::numbers::pi * j / n;
    t[static_cast<std::size_t>(j)] = std::polar(norm, a);
  }
  return t;
}

// out = F * in along rows, where F[r][k] = tw[(r*k) mod n].
ComplexMatrix transform_rows(const ComplexMatrix& in, const std::vector<Complex>& tw) {
  const int n = in.rows;
  ComplexMatrix out(in.rows, in.cols);
  for (int r = 0; r < n; ++r) {
    Complex* dst = &out(r, 0);
    for (int k = 0; k < n; ++k) {
      const Complex f = tw[static_cast<std::size_t>((static_cast<long long>(r) * k) % n)];
      const Complex* src = &in(k, 0);
      for (int c = 0; c < in.cols; ++c) dst[c] += f * src[c];
    }
  }
  return out;
}

// out = in * G along columns, where G[m][p] = tw[(m*p) mod n].
ComplexMatrix transform_cols(const ComplexMatrix& in, const std::vector<Complex>& tw) {
  const int n = in.cols;
  ComplexMatrix out(in.rows, in.cols);
  for (int r = 0; r < in.rows; ++r) {
    for (int p = 0; p < n; ++p) {
      Complex s = 0.0;
      for (int m = 0; m < n; ++m) {
        s += in(r, m) * tw[static_cast<std::size_t>((static_cast<long long>(m) * p) % n)];
      }
      out(r, p) = s;
    }
  }
  return out;
}

}  // namespace

double ComplexMatrix::frobenius_norm() const {
  double s = 0.0;
  for (const auto& v : data) s += std::norm(v);
  return std::sqrt(s);
}

const char* to_string(Environment env) noexcept {
  return env == Environment::kIndoor ? "indoor" : "outdoor";
}

ScenarioConfig ScenarioConfig::preset(Environment env, Profile profile, std::uint64_t seed) {
  ScenarioConfig c;
  c.environment = env;
  if (profile == Profile::kDesk) {
    c.antennas = 16;
    c.subcarriers = 64;
    c.truncated_rows = 16;
  } else {
    c.antennas = 32;
    c.subcarriers = 256;
    c.truncated_rows = 32;
  }
  const double rows = c.truncated_rows;
  c.paths = env == Environment::kIndoor ? 6 : 12;
  c.delay_spread = env == Environment::kIndoor ? rows / 8.0 : rows / 4.0;
  c.first_arrival = 2.0;
  c.max_delay = rows - 4.0;
  c.seed = seed;
  return c;
}

void ScenarioConfig::validate() const {
  if (paths < 1) fail(ErrorKind::kConfig, "scenario: path count must be >= 1");
  if (antennas < 1 || subcarriers < 1 || truncated_rows < 1) {
    fail(ErrorKind::kConfig, "scenario: antenna, subcarrier and row counts must be positive");
  }
  if (truncated_rows > subcarriers) {
    fail(ErrorKind::kConfig, "scenario: truncated rows exceed subcarrier count");
  }
  if (!(delay_spread >= 0.0) || !(first_arrival >= 0.0) || !(max_delay >= first_arrival)) {
    fail(ErrorKind::kConfig, "scenario: invalid delay parameters");
  }
}

SpatialFreqChannel synthesize(std::span<const PathSpec> paths, int antennas, int subcarriers) {
  SpatialFreqChannel h(subcarriers, antennas);
  std::vector<Complex> steering(static_cast<std::size_t>(antennas));
  for (const auto& p : paths) {
    const double spatial = std::numbers::pi * std::sin(p.angle);
    for (int m = 0; m < antennas; ++m) steering[m] = std::polar(1.0, -spatial * m);
    for (int k = 0; k < subcarriers; ++k) {
      const Complex ramp = p.gain * std::polar(1.0, 2.0 * std::numbers::pi * k * p.delay / subcarriers);
      Complex* row = &h(k, 0);
      for (int m = 0; m < antennas; ++m) row[m] += ramp * steering[m];
    }
  }
  return h;
}

std::vector<PathSpec> draw_paths(const ScenarioConfig& config, std::uint64_t index) {
  Rng rng(mix_seed(config.seed, index));
  std::vector<PathSpec> paths(static_cast<std::size_t>(config.paths));
  const double gain_scale = 1.0 / std::sqrt(2.0 * config.paths);
  for (auto& p : paths) {
    const double re = rng.normal();
    const double im = rng.normal();
    p.gain = Complex(re, im) * gain_scale;
    p.angle = rng.uniform(-std::numbers::pi / 2, std::numbers::pi / 2);
    p.delay = std::min(config.first_arrival + rng.exponential(config.delay_spread), config.max_delay);
  }
  // Exponential power-delay profile, renormalized so the mean channel power
  // stays at one.
  const auto weight = [&](const PathSpec& p) {
    return config.delay_spread > 0.0 ? std::exp(-(p.delay - config.first_arrival) / config.delay_spread) : 1.0;
  };
  double total = 0.0;
  for (const auto& p : paths) total += weight(p);
  for (auto& p : paths) p.gain *= std::sqrt(weight(p) / total * config.paths);
  return paths;
}

std::vector<SpatialFreqChannel> generate(const ScenarioConfig& config, std::size_t count,
                                         std::uint64_t first_index) {
  config.validate();
  if (count < 1) fail(ErrorKind::kConfig, "generate: count must be >= 1");
  std::vector<SpatialFreqChannel> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto paths = draw_paths(config, first_index + i);
    out.push_back(synthesize(paths, config.antennas, config.subcarriers));
  }
  return out;
}

ComplexMatrix to_angular_delay(const SpatialFreqChannel& hhat) {
  // F_d Hhat, then (.) F_a^H where F_a^H[m][p] = conj(F_a[p][m]) = exp(+2 pi i m p / Nt).
  const ComplexMatrix delay = transform_rows(hhat, twiddles(hhat.rows, -1.0));
  return transform_cols(delay, twiddles(hhat.cols, +1.0));
}

SpatialFreqChannel from_angular_delay(const ComplexMatrix& h) {
  const ComplexMatrix freq = transform_rows(h, twiddles(h.rows, +1.0));
  return transform_cols(freq, twiddles(h.cols, -1.0));
}

Normalization Normalization::fit(double lo, double hi) {
  Normalization n;
  if (!(hi > lo)) {
    n.scale = 1.0f;
    n.offset = static_cast<float>(lo - 0.5);
    return n;
  }
  n.offset = static_cast<float>(lo);
  n.scale = static_cast<float>(hi - lo);
  return n;
}

float Normalization::normalize(double x) const {
  const double v = (x - static_cast<double>(offset)) / static_cast<double>(scale);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

namespace {

void fill_planes(const ComplexMatrix& h, int rows, const Normalization& norm, float* dst) {
  const std::size_t plane = static_cast<std::size_t>(rows) * h.cols;
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < h.cols; ++c) {
      const std::size_t i = static_cast<std::size_t>(r) * h.cols + c;
      dst[i] = norm.normalize(h(r, c).real());
      dst[plane + i] = norm.normalize(h(r, c).imag());
    }
  }
}

void extend_range(const ComplexMatrix& h, int rows, double& lo, double& hi) {
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < h.cols; ++c) {
      lo = std::min({lo, h(r, c).real(), h(r, c).imag()});
      hi = std::max({hi, h(r, c).real(), h(r, c).imag()});
    }
  }
}

void check_rows(const ComplexMatrix& h, int rows) {
  if (rows < 1 || rows > h.rows) {
    fail(ErrorKind::kConfig, "truncation rows " + std::to_string(rows) + " outside [1, " +
                                 std::to_string(h.rows) + "]");
  }
}

}  // namespace

ChannelSample truncate_and_normalize(const ComplexMatrix& h, int rows) {
  check_rows(h, rows);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  extend_range(h, rows, lo, hi);
  ChannelSample s;
  s.norm = Normalization::fit(lo, hi);
  s.planes = Tensor(Shape{2, rows, h.cols});
  fill_planes(h, rows, s.norm, s.planes.data());
  return s;
}

Dataset build_dataset(std::span<const ComplexMatrix> angular_delay, int rows) {
  if (angular_delay.empty()) fail(ErrorKind::kConfig, "build_dataset: no matrices");
  const int cols = angular_delay.front().cols;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (const auto& h : angular_delay) {
    check_rows(h, rows);
    if (h.cols != cols) fail(ErrorKind::kShape, "build_dataset: antenna counts differ");
    extend_range(h, rows, lo, hi);
  }
  Dataset d;
  d.antennas = cols;
  d.rows = rows;
  d.norm = Normalization::fit(lo, hi);
  d.samples = Tensor(Shape{static_cast<int>(angular_delay.size()), 2, rows, cols});
  const std::size_t stride = d.sample_size();
  for (std::size_t i = 0; i < angular_delay.size(); ++i) {
    fill_planes(angular_delay[i], rows, d.norm, d.samples.data() + i * stride);
  }
  return d;
}

Tensor Dataset::batch(std::span<const std::size_t> indices) const {
  const std::size_t stride = sample_size();
  Tensor out(Shape{static_cast<int>(indices.size()), 2, rows, antennas});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    if (indices[j] >= count()) fail(ErrorKind::kConfig, "dataset index out of range");
    std::copy_n(samples.data() + indices[j] * stride, stride, out.data() + j * stride);
  }
  return out;
}

Tensor Dataset::batch(std::size_t first, std::size_t n) const {
  std::vector<std::size_t> idx(n);
  for (std::size_t j = 0; j < n; ++j) idx[j] = first + j;
  return batch(idx);
}

ChannelSample Dataset::sample(std::size_t i) const {
  const std::size_t idx[1] = {i};
  return ChannelSample{batch(idx).reshaped(Shape{2, rows, antennas}), norm};
}

Dataset Dataset::slice(std::size_t first, std::size_t n) const {
  Dataset d;
  d.antennas = antennas;
  d.rows = rows;
  d.norm = norm;
  d.samples = batch(first, n);
  return d;
}

ComplexMatrix planes_to_matrix(std::span<const float> planes, int rows, int antennas,
                               const Normalization& norm) {
  ComplexMatrix m(rows, antennas);
  const std::size_t plane = static_cast<std::size_t>(rows) * antennas;
  for (std::size_t i = 0; i < plane; ++i) {
    m.data[i] = Complex(norm.denormalize(planes[i]), norm.denormalize(planes[plane + i]));
  }
  return m;
}

std::vector<std::uint8_t> serialize_dataset(const Dataset& dataset) {
  ByteWriter w;
  w.tag("CSID");
  w.u16(kDatasetFormatVersion);
  w.u16(static_cast<std::uint16_t>(dataset.antennas));
  w.u16(static_cast<std::uint16_t>(dataset.rows));
  w.u32(static_cast<std::uint32_t>(dataset.count()));
  w.f32(dataset.norm.offset);
  w.f32(dataset.norm.scale);
  for (float v : dataset.samples.values()) w.f32(v);
  return w.release();
}

Dataset parse_dataset(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("CSID", "dataset");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kDatasetFormatVersion) {
    throw FormatError(version_at, "unsupported dataset format version " + std::to_string(version) +
                                      " (expected " + std::to_string(kDatasetFormatVersion) + ")");
  }
  Dataset d;
  const std::size_t dims_at = r.offset();
  d.antennas = r.u16();
  d.rows = r.u16();
  if (d.antennas == 0 || d.rows == 0) throw FormatError(dims_at, "zero antenna or row count");
  const std::size_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  d.norm.offset = r.f32();
  d.norm.scale = r.f32();
  if (count == 0) throw FormatError(count_at, "dataset declares zero samples");
  const std::size_t payload = static_cast<std::size_t>(count) * d.sample_size() * sizeof(float);
  if (r.remaining() != payload) {
    throw FormatError(r.offset(), "header declares " + std::to_string(count) + " samples (" +
                                      std::to_string(payload) + " payload bytes) but " +
                                      std::to_string(r.remaining()) + " bytes follow");
  }
  d.samples = Tensor(Shape{static_cast<int>(count), 2, d.rows, d.antennas});
  for (auto& v : d.samples.values()) v = r.f32();
  return d;
}

void export_dataset(const Dataset& dataset, const std::filesystem::path& path) {
  const auto bytes = serialize_dataset(dataset);
  write_file(path, bytes);
}

Dataset import_dataset(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  return parse_dataset(bytes);
}

}  // namespace csic
