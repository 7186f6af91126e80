// Desk-scale acceptance run. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. All thresholds are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include "csic/compressor.hpp"
#include "csic/engine.hpp"
#include "csic/metrics.hpp"
#include "csic/model_io.hpp"
#include "csic/pipeline.hpp"
#include "csic/rng.hpp"
#include "csic/training.hpp"

using namespace csic;

namespace {

// Training setup shared by every trained model.
constexpr std::uint64_t kSeed = 1;
constexpr std::size_t kTrainSamples = 3000;
constexpr std::size_t kTestSamples = 1000;
constexpr int kEpochs = 50;
constexpr int kBatch = 16;
constexpr double kLearningRate = 1e-3;
constexpr int kFineTuneEpochs = 10;
constexpr double kFineTuneRate = 1e-4;

// Size reductions against the f32 model, in percent, minus the allowed slack.
constexpr double kSizeSlackPp = 3.0;
constexpr double kMinReductionI8 = 70.0;
constexpr double kMinReductionPrune = 40.0;
constexpr double kMinReductionCluster = 75.0;
constexpr double kMinReductionPruneQuant = 84.0;
constexpr double kMinReductionClusterQuant = 82.0;

// Latency ratios on the 512 x 512 layer.
constexpr int kBenchWidth = 512;
constexpr int kBenchBatch = 32;
constexpr int kBenchRounds = 15;
constexpr int kBenchWarmup = 5;
constexpr int kBenchRuns = 60;
constexpr double kMaxRatioAt80 = 0.7;
constexpr double kMaxRatioAt50 = 0.9;
constexpr double kForceDenseBand = 0.10;

constexpr double kQuantNmseDb = 0.1;
constexpr double kQuantRho = 0.005;
constexpr double kPruneRecoveryDb = 0.5;
constexpr double kSweepNearDb = 0.5;
constexpr double kTrainedNmseTargetDb = -10.0;

// Oracle tolerances.
constexpr double kGradRelError = 1e-4;
constexpr double kGradStep = 1e-6;
constexpr double kSparseAbs = 1e-6;
constexpr double kUnitarityRel = 1e-6;

int failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

template <typename... Args>
std::string fmt(const char* f, Args... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DataSplit make_split(Environment env) {
  const ScenarioConfig cfg = ScenarioConfig::preset(env, Profile::kDesk, scenario_seed(kSeed, env));
  return generate_split(cfg, kTrainSamples, kTestSamples);
}

Model train_model(double gamma, const Dataset& data) {
  const auto t0 = std::chrono::steady_clock::now();
  Model m = build_model(profile_model_spec(Profile::kDesk, gamma, kSeed));
  TrainConfig cfg;
  cfg.epochs = kEpochs;
  cfg.batch_size = kBatch;
  cfg.learning_rate = kLearningRate;
  cfg.seed = kSeed;
  train(m, data, cfg);
  std::printf("  trained gamma=%g (M=%d) in %.0f s, final loss %.3g\n", gamma, m.spec.codeword_size(),
              seconds_since(t0), m.loss_history.empty() ? 0.0 : m.loss_history.back());
  return m;
}

double reduction_pct(const Model& base, const Model& compressed) {
  return 100.0 * (1.0 - static_cast<double>(size_of(compressed)) / static_cast<double>(size_of(base)));
}

// ----------------------------------------------------------- criterion 1 ---

void check_sizes(const Model& base) {
  ClusterConfig cluster;
  cluster.k = 32;
  cluster.seed = kSeed;
  const Model pruned = prune_magnitude(base, PruneConfig{0.5, {}, 0});
  const Model clustered = cluster_weights(base, cluster);
  const Model q = quantize(base, QuantLevel::kDynamicRangeI8);
  const Model pq = quantize(pruned, QuantLevel::kDynamicRangeI8);
  const Model cq = quantize(clustered, QuantLevel::kDynamicRangeI8);

  struct Row {
    const char* name;
    double got, min;
  };
  const Row rows[] = {{"quantize-i8", reduction_pct(base, q), kMinReductionI8},
                      {"prune-50%", reduction_pct(base, pruned), kMinReductionPrune},
                      {"cluster-k32", reduction_pct(base, clustered), kMinReductionCluster},
                      {"prune+quantize", reduction_pct(base, pq), kMinReductionPruneQuant},
                      {"cluster+quantize", reduction_pct(base, cq), kMinReductionClusterQuant}};
  bool ok = true;
  std::string detail;
  for (const Row& r : rows) {
    const bool pass = r.got >= r.min - kSizeSlackPp;
    ok = ok && pass;
    detail += fmt("%s %.1f%% (>= %.0f-%.0f)%s; ", r.name, r.got, r.min, kSizeSlackPp, pass ? "" : " LOW");
  }
  const std::size_t smallest = std::min({size_of(q), size_of(pruned), size_of(clustered), size_of(cq)});
  const bool ordered = size_of(pq) < smallest;
  detail += fmt("prune+quantize smallest: %s (%zu vs %zu bytes)", ordered ? "yes" : "no", size_of(pq), smallest);
  report("1 size reductions", ok && ordered, detail);
}

// ----------------------------------------------------------- criterion 2 ---

void check_acceleration() {
  Rng rng(kSeed);
  std::vector<float> w(static_cast<std::size_t>(kBenchWidth) * kBenchWidth), bias(kBenchWidth),
      x(static_cast<std::size_t>(kBenchWidth) * kBenchBatch);
  for (auto& v : w) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : bias) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : x) v = static_cast<float>(rng.uniform(0, 1));

  const WeightStore dense = WeightStore::dense(w), p80 = prune_store(w, 0.8), p50 = prune_store(w, 0.5);
  // dense, sparse 80%, sparse 50%, forced-dense 80%, forced-dense 50%
  const DenseOperand ops[] = {DenseOperand::prepare(dense, kBenchWidth, kBenchWidth, bias),
                              DenseOperand::prepare(p80, kBenchWidth, kBenchWidth, bias),
                              DenseOperand::prepare(p50, kBenchWidth, kBenchWidth, bias),
                              DenseOperand::prepare(p80, kBenchWidth, kBenchWidth, bias, true),
                              DenseOperand::prepare(p50, kBenchWidth, kBenchWidth, bias, true)};
  std::vector<float> y(static_cast<std::size_t>(kBenchWidth) * kBenchBatch);

  // Variants are timed round-robin and compared within each round, so slow
  // drift in machine speed hits numerator and denominator alike.
  std::vector<double> ratios[5];
  double dense_us = 0.0;
  for (int round = 0; round < kBenchRounds; ++round) {
    double median[5];
    for (int v = 0; v < 5; ++v) {
      median[v] = time_calls([&] { ops[v].run(x.data(), y.data(), kBenchBatch); }, kBenchWarmup, kBenchRuns).median_us;
    }
    for (int v = 0; v < 5; ++v) ratios[v].push_back(median[v] / median[0]);
    dense_us += median[0] / kBenchRounds;
  }
  const double s80 = percentile(ratios[1], 0.5), s50 = percentile(ratios[2], 0.5);
  const double f80 = percentile(ratios[3], 0.5), f50 = percentile(ratios[4], 0.5);
  const bool ok = s80 <= kMaxRatioAt80 && s50 <= kMaxRatioAt50 && std::abs(f80 - 1.0) <= kForceDenseBand &&
                  std::abs(f50 - 1.0) <= kForceDenseBand;
  report("2 sparse acceleration", ok,
         fmt("dense %.1f us; median ratio over %d rounds: sparse80 %.2fx (<= %.1f), sparse50 %.2fx (<= %.1f); "
             "force-dense80 %.2fx, force-dense50 %.2fx (within 1 +- %.2f)",
             dense_us, kBenchRounds, s80, kMaxRatioAt80, s50, kMaxRatioAt50, f80, f50, kForceDenseBand));
}

// ----------------------------------------------------------- criterion 7 ---

bool oracle_gradients() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ModelSpec spec;
    spec.rows = 4;
    spec.antennas = 4;
    spec.seed = seed + 1;
    const Model model = build_model(spec);
    ParameterSet<double> params = gather_parameters<double>(model);
    Rng rng(seed + 50);
    for (auto& t : params.tensors)
      for (auto& v : t.values()) v += rng.uniform(-0.1, 0.1);
    BasicTensor<double> batch(Shape{3, 2, 4, 4});
    for (auto& v : batch.values()) v = rng.uniform(0, 1);
    ParameterSet<double> grads;
    reconstruction_loss<double>(model, params, batch, true, &grads);
    for (std::size_t k = 0; k < params.tensors.size(); ++k) {
      double diff = 0.0, na = 0.0, nn = 0.0;
      for (std::size_t i = 0; i < params.tensors[k].size(); ++i) {
        const double saved = params.tensors[k][i];
        params.tensors[k][i] = saved + kGradStep;
        const double up = reconstruction_loss<double>(model, params, batch, true);
        params.tensors[k][i] = saved - kGradStep;
        const double down = reconstruction_loss<double>(model, params, batch, true);
        params.tensors[k][i] = saved;
        const double numeric = (up - down) / (2.0 * kGradStep);
        diff += std::pow(grads.tensors[k][i] - numeric, 2);
        na += grads.tensors[k][i] * grads.tensors[k][i];
        nn += numeric * numeric;
      }
      const double scale = std::sqrt(std::max(na, nn));
      worst = std::max(worst, scale < 1e-9 ? std::sqrt(diff) : std::sqrt(diff) / scale);
    }
  }
  const bool ok = worst < kGradRelError;
  report("7a autodiff vs finite differences", ok, fmt("worst relative error %.2e over 10 seeds (< %.0e)", worst, kGradRelError));
  return ok;
}

struct RandomLayer {
  int inputs, outputs;
  std::vector<float> w, bias;
  Tensor x;
};

RandomLayer random_layer(Rng& rng) {
  RandomLayer l;
  l.inputs = 1 + static_cast<int>(rng.index(300));
  l.outputs = 1 + static_cast<int>(rng.index(80));
  l.w.resize(static_cast<std::size_t>(l.inputs) * l.outputs);
  l.bias.resize(l.outputs);
  for (auto& v : l.w) v = static_cast<float>(rng.uniform(-1, 1));
  for (auto& v : l.bias) v = static_cast<float>(rng.uniform(-1, 1));
  l.x = Tensor(Shape{1 + static_cast<int>(rng.index(45)), l.inputs});
  for (auto& v : l.x.values()) v = static_cast<float>(rng.uniform(-1, 1));
  return l;
}

// Integer reference for the dynamic int8 kernel, accumulating in 64 bits.
Tensor int8_reference(const QuantizedI8& q, const RandomLayer& l) {
  const int batch = l.x.dim(0);
  Tensor y(Shape{batch, l.outputs});
  for (int b = 0; b < batch; ++b) {
    const float* xb = l.x.data() + static_cast<std::size_t>(b) * l.inputs;
    const DynamicQuantParams p = activation_quant_params(std::min(0.0f, *std::min_element(xb, xb + l.inputs)),
                                                         std::max(0.0f, *std::max_element(xb, xb + l.inputs)));
    for (int m = 0; m < l.outputs; ++m) {
      long long acc = 0;
      for (int n = 0; n < l.inputs; ++n)
        acc += static_cast<long long>(q.values[static_cast<std::size_t>(n) * l.outputs + m]) *
               (quantize_activation(xb[n], p) - p.zero_point);
      y.at({b, m}) = l.bias[m] + (q.scale * p.scale) * static_cast<float>(acc);
    }
  }
  return y;
}

bool oracle_kernels() {
  Rng rng(kSeed + 100);
  int sparse_bad = 0, int8_bad = 0, sparse_int8_bad = 0, gather_bad = 0;
  double sparse_worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const RandomLayer l = random_layer(rng);
    const Shape shape{l.inputs, l.outputs};

    const WeightStore sparse = prune_store(l.w, rng.uniform(0.0, 0.99));
    const Tensor ys = sparse_dense_matvec(sparse, shape, l.bias, l.x);
    const Tensor yd = dense_layer(WeightStore::dense(sparse.decode()), shape, l.bias, l.x);
    double worst = 0.0;
    for (std::size_t i = 0; i < ys.size(); ++i) worst = std::max(worst, static_cast<double>(std::abs(ys[i] - yd[i])));
    sparse_worst = std::max(sparse_worst, worst);
    sparse_bad += worst > kSparseAbs;

    const WeightStore q = quantize_store(WeightStore::dense(l.w), QuantLevel::kDynamicRangeI8);
    int8_bad += !(dynamic_quant_matvec(q, shape, l.bias, l.x) == int8_reference(*q.get_if<QuantizedI8>(), l));

    const WeightStore sq = quantize_store(prune_store(l.w, rng.uniform(0.0, 0.95)), QuantLevel::kDynamicRangeI8);
    const auto& sb = *sq.get_if<SparseBitmap>();
    const auto& qv = std::get<QuantizedValues>(sb.values.storage());
    QuantizedI8 dq;
    dq.scale = qv.scale;
    dq.values.assign(sb.mask.size(), 0);
    for (std::size_t i = 0, next = 0; i < sb.mask.size(); ++i)
      if (sb.mask.test(i)) dq.values[i] = qv.q[next++];
    sparse_int8_bad += !(sparse_quant_matvec(sq, shape, l.bias, l.x) == int8_reference(dq, l));

    ClusterConfig cfg;
    cfg.k = static_cast<std::uint32_t>(std::min<std::size_t>(2 + rng.index(31), l.w.size()));
    cfg.max_iterations = 20;
    if (cfg.k >= 2) {
      const WeightStore c = cluster_store(l.w, cfg);
      gather_bad += !(clustered_gather_matvec(c, shape, l.bias, l.x) ==
                      dense_layer(WeightStore::dense(c.decode()), shape, l.bias, l.x));
    }
  }
  const bool ok = sparse_bad + int8_bad + sparse_int8_bad + gather_bad == 0;
  report("7b kernels vs densified oracles", ok,
         fmt("100 instances each; sparse f32 worst %.1e (<= %.0e), %d over; int8 %d mismatches; "
             "sparse int8 %d mismatches; gather %d mismatches",
             sparse_worst, kSparseAbs, sparse_bad, int8_bad, sparse_int8_bad, gather_bad));
  return ok;
}

bool oracle_kmeans() {
  Rng rng(kSeed + 200);
  int violations = 0, runs = 0;
  for (int trial = 0; trial < 25; ++trial) {
    std::vector<float> w(200 + rng.index(2000));
    for (auto& v : w) v = static_cast<float>(rng.normal() * rng.uniform(0.1, 2.0));
    for (const ClusterInit init : {ClusterInit::kKmeansPlusPlus, ClusterInit::kLinear, ClusterInit::kRandom, ClusterInit::kDensity}) {
      ClusterConfig cfg;
      cfg.k = 2 + static_cast<std::uint32_t>(rng.index(40));
      cfg.init = init;
      cfg.seed = static_cast<std::uint64_t>(trial);
      const KMeansResult r = kmeans(w, cfg);
      for (std::size_t i = 1; i < r.objective.size(); ++i) violations += r.objective[i] > r.objective[i - 1] * (1 + 1e-12);
      ++runs;
    }
  }
  report("7c k-means objective non-increasing", violations == 0, fmt("%d runs, %d increases", runs, violations));
  return violations == 0;
}

bool oracle_topk() {
  Rng rng(kSeed + 300);
  int bad = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.index(3000);
    std::vector<float> w(n);
    for (auto& v : w) v = static_cast<float>(std::round(rng.uniform(-1, 1) * 64) / 64);  // many ties
    const double ratio = rng.uniform(0.0, 0.99);
    const auto keep = magnitude_keep_mask(w, ratio);
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return std::fabs(w[a]) > std::fabs(w[b]); });
    const std::size_t removed = static_cast<std::size_t>(std::floor(static_cast<double>(n) * ratio + 1e-9));
    std::set<std::size_t> expected(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n - removed)), got;
    for (std::size_t i = 0; i < n; ++i)
      if (keep[i]) got.insert(i);
    bad += got != expected;
  }
  report("7d pruning top-k vs independent sort", bad == 0, fmt("100 instances, %d mismatches", bad));
  return bad == 0;
}

bool oracle_serialization() {
  Rng rng(kSeed + 400);
  int bad = 0;
  for (int i = 0; i < 21; ++i) {
    ModelSpec s;
    s.rows = 4 + 4 * static_cast<int>(rng.index(4));
    s.antennas = 4 + 4 * static_cast<int>(rng.index(4));
    s.gamma = 1.0 / (1 << rng.index(4));
    s.seed = static_cast<std::uint64_t>(i);
    Model m = build_model(s);
    ClusterConfig c;
    c.k = 2 + static_cast<std::uint32_t>(rng.index(30));
    c.max_iterations = 15;
    switch (i % 7) {
      case 0: break;
      case 1: m = prune_magnitude(m, PruneConfig{rng.uniform(0.0, 0.95), {}, 0}); break;
      case 2: m = quantize(m, QuantLevel::kDynamicRangeI8); break;
      case 3: m = quantize(m, QuantLevel::kFloat16); break;
      case 4: m = cluster_weights(m, c); break;
      case 5: m = quantize(prune_magnitude(m, PruneConfig{0.37, {}, 0}), QuantLevel::kDynamicRangeI8); break;
      default: m = quantize(cluster_weights(m, c), QuantLevel::kFloat16); break;
    }
    const auto bytes = serialize_model(m);
    const Model back = parse_model(bytes);
    Tensor x(Shape{2, 2, s.rows, s.antennas});
    for (auto& v : x.values()) v = static_cast<float>(rng.uniform(0, 1));
    bad += serialize_model(back) != bytes || bytes.size() != size_of(m) || !(run(plan(back), x) == run(plan(m), x));
  }
  report("7e serialization round trip", bad == 0, fmt("21 models over 7 compression states, %d unstable", bad));
  return bad == 0;
}

bool oracle_unitarity() {
  Rng rng(kSeed + 500);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ComplexMatrix h(1 + static_cast<int>(rng.index(64)), 1 + static_cast<int>(rng.index(32)));
    for (auto& v : h.data) v = Complex(rng.normal(), rng.normal());
    const double before = h.frobenius_norm(), after = to_angular_delay(h).frobenius_norm();
    worst = std::max(worst, std::abs(after - before) / before);
  }
  const bool ok = worst <= kUnitarityRel;
  report("7f angular-delay transform preserves the norm", ok, fmt("100 matrices, worst relative change %.1e (<= %.0e)", worst, kUnitarityRel));
  return ok;
}

bool oracle_metrics() {
  Rng rng(kSeed + 600);
  std::vector<ComplexMatrix> h, zero, scaled;
  for (int i = 0; i < 20; ++i) {
    ComplexMatrix m(16, 16);
    for (auto& v : m.data) v = Complex(rng.normal(), rng.normal());
    ComplexMatrix s = m;
    for (int r = 0; r < s.rows; ++r) {
      const Complex c = std::polar(rng.uniform(0.1, 10.0), rng.uniform(-std::numbers::pi, std::numbers::pi));
      for (int k = 0; k < s.cols; ++k) s(r, k) *= c;
    }
    zero.emplace_back(16, 16);
    scaled.push_back(std::move(s));
    h.push_back(std::move(m));
  }
  const double zero_db = nmse(h, zero).db;
  const double rho = cosine_similarity(h, scaled).rho;
  const bool ok = std::abs(zero_db) < 1e-12 && std::abs(rho - 1.0) < 1e-12;
  report("7g NMSE and rho analytic cases", ok, fmt("zero reconstruction %.2e dB; rho under per-row scaling %.15f", zero_db, rho));
  return ok;
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  std::printf("desk profile: %zu train / %zu test samples, %d epochs at batch %d, fine-tune %d epochs\n",
              kTrainSamples, kTestSamples, kEpochs, kBatch, kFineTuneEpochs);

  // Oracles and the microbenchmark need no trained model; run them first.
  const bool oracles = oracle_gradients() & oracle_kernels() & oracle_kmeans() & oracle_topk() &
                       oracle_serialization() & oracle_unitarity() & oracle_metrics();
  check_acceleration();

  const DataSplit indoor = make_split(Environment::kIndoor);
  const DataSplit outdoor = make_split(Environment::kOutdoor);
  const Model base = train_model(0.25, indoor.train);
  check_sizes(base);

  const QualityReport f32 = evaluate(plan(base), indoor.test);
  const QualityReport i8 = evaluate(plan(quantize(base, QuantLevel::kDynamicRangeI8)), indoor.test);
  report("3 int8 quantization is accuracy neutral",
         std::abs(i8.nmse_db - f32.nmse_db) <= kQuantNmseDb && std::abs(i8.rho - f32.rho) <= kQuantRho,
         fmt("NMSE f32 %.3f dB, i8 %.3f dB (|diff| %.3f <= %.1f); rho f32 %.5f, i8 %.5f (|diff| %.5f <= %.3f)",
             f32.nmse_db, i8.nmse_db, std::abs(i8.nmse_db - f32.nmse_db), kQuantNmseDb, f32.rho, i8.rho,
             std::abs(i8.rho - f32.rho), kQuantRho));

  SweepConfig sweep;
  sweep.tune.epochs = kFineTuneEpochs;
  sweep.tune.batch_size = kBatch;
  sweep.tune.learning_rate = kFineTuneRate;
  sweep.tune.seed = kSeed;
  sweep.warmup = 2;
  sweep.runs = 10;
  const auto t_sweep = std::chrono::steady_clock::now();
  const std::vector<SweepCell> cells = run_sweep(base, indoor.train, indoor.test, &outdoor.test, sweep);
  std::printf("  sweep of %zu cells in %.0f s\n", cells.size(), seconds_since(t_sweep));
  const auto cell = [&](double s, SweepLevel level) -> const SweepCell& {
    return *std::find_if(cells.begin(), cells.end(), [&](const SweepCell& c) { return c.sparsity == s && c.level == level; });
  };

  const double pruned50 = cell(0.5, SweepLevel::kFloat32).report.indoor->nmse_db;
  report("4 pruning recovers after fine-tuning", pruned50 - f32.nmse_db <= kPruneRecoveryDb,
         fmt("unpruned %.3f dB, 50%% pruned + %d epochs %.3f dB (gap %.3f <= %.1f)", f32.nmse_db, kFineTuneEpochs,
             pruned50, pruned50 - f32.nmse_db, kPruneRecoveryDb));

  bool shape_ok = true;
  std::string shape_detail;
  for (const SweepLevel level : sweep.levels) {
    const double at0 = cell(0.0, level).report.indoor->nmse_db;
    const double at90 = cell(0.9, level).report.indoor->nmse_db;
    double worst_other = -1e300, near_gap = 0.0;
    for (const double s : sweep.sparsities) {
      const double v = cell(s, level).report.indoor->nmse_db;
      if (s != 0.9) worst_other = std::max(worst_other, v);
      if (s <= 0.5) near_gap = std::max(near_gap, v - at0);
    }
    const bool ok = at90 > worst_other && near_gap <= kSweepNearDb;
    shape_ok = shape_ok && ok;
    shape_detail += fmt("%s: 0%% %.2f, 90%% %.2f dB (next worst %.2f), max gap at <=50%% %.2f dB; ", to_string(level),
                        at0, at90, worst_other, near_gap);
  }
  report("5 sweep shape", shape_ok, shape_detail + fmt("near band %.1f dB", kSweepNearDb));

  const Model m16 = train_model(1.0 / 16, indoor.train);
  const Model m64 = train_model(1.0 / 64, indoor.train);
  const double n16 = evaluate(plan(m16), indoor.test).nmse_db, n64 = evaluate(plan(m64), indoor.test).nmse_db;
  report("6 compression ratio ordering", f32.nmse_db <= n16 && n16 <= n64,
         fmt("NMSE gamma=1/4 %.3f <= 1/16 %.3f <= 1/64 %.3f dB", f32.nmse_db, n16, n64));

  report("7 oracle suites", oracles, "see 7a-7g");

  // Training-quality target from the model invariants; reported, not gating.
  const double train_nmse = evaluate(plan(base), indoor.train).nmse_db;
  std::printf("%s trained-model NMSE target (not gating): indoor training data %.3f dB (target < %.0f dB)\n",
              train_nmse < kTrainedNmseTargetDb ? "PASS" : "FAIL", train_nmse, kTrainedNmseTargetDb);

  std::printf("%d criteria failed, total %.0f s\n", failures, seconds_since(start));
  return failures == 0 ? 0 : 1;
}
