#include "csic/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "json.hpp"

#include "csic/byte_io.hpp"

namespace csic {

namespace {

void check_pairs(std::span<const ComplexMatrix> a, std::span<const ComplexMatrix> b) {
  if (a.size() != b.size()) {
    fail(ErrorKind::kShape, "sample counts differ: " + std::to_string(a.size()) + " vs " +
                                std::to_string(b.size()));
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].rows != b[i].rows || a[i].cols != b[i].cols) {
      fail(ErrorKind::kShape, "matrix shapes differ at sample " + std::to_string(i));
    }
  }
}

}  // namespace

NmseResult nmse(std::span<const ComplexMatrix> original, std::span<const ComplexMatrix> reconstructed) {
  check_pairs(original, reconstructed);
  NmseResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    double err = 0.0, ref = 0.0;
    for (std::size_t j = 0; j < original[i].data.size(); ++j) {
      err += std::norm(reconstructed[i].data[j] - original[i].data[j]);
      ref += std::norm(original[i].data[j]);
    }
    if (ref == 0.0) {
      ++r.excluded;
      continue;
    }
    sum += err / ref;
    ++r.samples;
  }
  if (r.samples == 0) fail(ErrorKind::kConfig, "NMSE: no sample with a nonzero original");
  r.ratio = sum / static_cast<double>(r.samples);
  r.db = r.ratio > 0.0 ? std::max(10.0 * std::log10(r.ratio), kNmseFloorDb) : kNmseFloorDb;
  return r;
}

RhoResult cosine_similarity(std::span<const ComplexMatrix> original,
                            std::span<const ComplexMatrix> reconstructed) {
  check_pairs(original, reconstructed);
  RhoResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const ComplexMatrix& h = original[i];
    const ComplexMatrix& g = reconstructed[i];
    for (int row = 0; row < h.rows; ++row) {
      Complex inner{0.0, 0.0};
      double hh = 0.0, gg = 0.0;
      for (int c = 0; c < h.cols; ++c) {
        inner += std::conj(h(row, c)) * g(row, c);
        hh += std::norm(h(row, c));
        gg += std::norm(g(row, c));
      }
      if (hh == 0.0 || gg == 0.0) {
        ++r.excluded;
        continue;
      }
      sum += std::min(1.0, std::abs(inner) / std::sqrt(hh * gg));
      ++r.vectors;
    }
  }
  if (r.vectors == 0) fail(ErrorKind::kConfig, "cosine similarity: every row vector is zero");
  r.rho = sum / static_cast<double>(r.vectors);
  return r;
}

QualityReport evaluate_quality(const Dataset& truth, const Tensor& reconstructed) {
  if (reconstructed.shape() != truth.samples.shape()) {
    fail(ErrorKind::kShape, "reconstruction " + shape_string(reconstructed.shape()) +
                                " does not match dataset " + shape_string(truth.samples.shape()));
  }
  const std::size_t per = truth.sample_size();
  std::vector<ComplexMatrix> a, b;
  a.reserve(truth.count());
  b.reserve(truth.count());
  for (std::size_t i = 0; i < truth.count(); ++i) {
    a.push_back(planes_to_matrix(truth.samples.values().subspan(i * per, per), truth.rows,
                                 truth.antennas, truth.norm));
    b.push_back(planes_to_matrix(reconstructed.values().subspan(i * per, per), truth.rows,
                                 truth.antennas, truth.norm));
  }
  const NmseResult n = nmse(a, b);
  const RhoResult rho = cosine_similarity(a, b);
  return {n.db, rho.rho, n.samples, n.excluded};
}

QualityReport evaluate(const ExecutionPlan& p, const Dataset& data, int batch_size) {
  if (data.count() == 0) fail(ErrorKind::kConfig, "cannot evaluate on an empty dataset");
  if (batch_size < 1) fail(ErrorKind::kConfig, "evaluation batch size must be positive");
  Tensor out(data.samples.shape());
  const std::size_t per = data.sample_size();
  for (std::size_t first = 0; first < data.count(); first += batch_size) {
    const std::size_t n = std::min<std::size_t>(batch_size, data.count() - first);
    const Tensor y = p.run(data.batch(first, n));
    std::copy(y.values().begin(), y.values().end(), out.data() + first * per);
  }
  return evaluate_quality(data, out);
}

// ------------------------------------------------------------------ timing ---

double percentile(std::vector<double> samples, double q) {
  if (samples.empty()) fail(ErrorKind::kConfig, "percentile of an empty sample");
  std::sort(samples.begin(), samples.end());
  const double pos = std::clamp(q, 0.0, 1.0) * static_cast<double>(samples.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, samples.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

TimingReport time_calls(const std::function<void()>& fn, int warmup, int runs) {
  if (runs < 10) fail(ErrorKind::kConfig, "timing needs at least 10 measured runs, got " + std::to_string(runs));
  if (warmup < 0) fail(ErrorKind::kConfig, "warmup count must be non-negative");
  for (int i = 0; i < warmup; ++i) fn();
  std::vector<double> us(static_cast<std::size_t>(runs));
  using Clock = std::chrono::steady_clock;
  for (auto& t : us) {
    const auto start = Clock::now();
    fn();
    t = std::chrono::duration<double, std::micro>(Clock::now() - start).count();
  }
  TimingReport r;
  r.warmup = warmup;
  r.runs = runs;
  r.median_us = percentile(us, 0.5);
  r.p5_us = percentile(us, 0.05);
  r.p95_us = percentile(us, 0.95);
  r.mean_us = std::accumulate(us.begin(), us.end(), 0.0) / static_cast<double>(runs);
  return r;
}

TimingReport bench_inference(const ExecutionPlan& p, const Tensor& input, int warmup, int runs) {
  if (runs < 10) fail(ErrorKind::kConfig, "timing needs at least 10 measured runs, got " + std::to_string(runs));
  KernelCounters counters;
  p.run(input, &counters);
  volatile float sink = 0.0f;
  TimingReport r = time_calls([&] { sink = sink + p.run(input)[0]; }, warmup, runs);
  r.macs = counters.macs;
  return r;
}

// ----------------------------------------------------------------- reports ---

namespace {

std::string number(double v) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

nlohmann::json quality_json(const std::optional<QualityReport>& q) {
  if (!q) return nullptr;
  return {{"nmse_db", q->nmse_db}, {"rho", q->rho}, {"samples", q->samples}, {"excluded", q->excluded}};
}

std::optional<QualityReport> quality_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return QualityReport{j.at("nmse_db").get<double>(), j.at("rho").get<double>(),
                       j.at("samples").get<std::size_t>(), j.at("excluded").get<std::size_t>()};
}

}  // namespace

std::string bench_csv_header() {
  return "gamma,model,size_bytes,inference_us_median,inference_us_p5,inference_us_p95,"
         "indoor_nmse_db,indoor_rho,outdoor_nmse_db,outdoor_rho,macs";
}

std::string to_csv(std::span<const BenchReport> reports) {
  std::string out = bench_csv_header() + "\n";
  for (const auto& r : reports) {
    out += number(r.gamma) + "," + r.model + "," + std::to_string(r.size_bytes) + "," +
           number(r.timing.median_us) + "," + number(r.timing.p5_us) + "," +
           number(r.timing.p95_us) + "," + (r.indoor ? number(r.indoor->nmse_db) : "") + "," +
           (r.indoor ? number(r.indoor->rho) : "") + "," +
           (r.outdoor ? number(r.outdoor->nmse_db) : "") + "," +
           (r.outdoor ? number(r.outdoor->rho) : "") + "," + std::to_string(r.timing.macs) + "\n";
  }
  return out;
}

std::string to_json(std::span<const BenchReport> reports) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : reports) {
    rows.push_back({{"model", r.model},
                    {"gamma", r.gamma},
                    {"technique", r.technique},
                    {"size_bytes", r.size_bytes},
                    {"timing",
                     {{"warmup", r.timing.warmup},
                      {"runs", r.timing.runs},
                      {"median_us", r.timing.median_us},
                      {"p5_us", r.timing.p5_us},
                      {"p95_us", r.timing.p95_us},
                      {"mean_us", r.timing.mean_us},
                      {"macs", r.timing.macs}}},
                    {"indoor", quality_json(r.indoor)},
                    {"outdoor", quality_json(r.outdoor)}});
  }
  return rows.dump(2) + "\n";
}

std::vector<BenchReport> parse_bench_json(const std::string& text) {
  std::vector<BenchReport> out;
  try {
    const auto rows = nlohmann::json::parse(text);
    for (const auto& j : rows) {
      BenchReport r;
      r.model = j.at("model").get<std::string>();
      r.gamma = j.at("gamma").get<double>();
      r.technique = j.at("technique").get<std::string>();
      r.size_bytes = j.at("size_bytes").get<std::size_t>();
      const auto& t = j.at("timing");
      r.timing.warmup = t.at("warmup").get<int>();
      r.timing.runs = t.at("runs").get<int>();
      r.timing.median_us = t.at("median_us").get<double>();
      r.timing.p5_us = t.at("p5_us").get<double>();
      r.timing.p95_us = t.at("p95_us").get<double>();
      r.timing.mean_us = t.at("mean_us").get<double>();
      r.timing.macs = t.at("macs").get<std::uint64_t>();
      r.indoor = quality_from(j.at("indoor"));
      r.outdoor = quality_from(j.at("outdoor"));
      out.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::kFormat, std::string("bench report JSON: ") + e.what());
  }
  return out;
}

void emit_report(std::span<const BenchReport> reports, const std::filesystem::path& stem) {
  const std::string csv = to_csv(reports);
  const std::string json = to_json(reports);
  auto path = stem;
  write_file(path.replace_extension(".csv"),
             {reinterpret_cast<const std::uint8_t*>(csv.data()), csv.size()});
  write_file(path.replace_extension(".json"),
             {reinterpret_cast<const std::uint8_t*>(json.data()), json.size()});
}

}  // namespace csic
