#include "csic/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "csic/rng.hpp"

namespace csic {

void PruneConfig::validate() const {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    fail(ErrorKind::kConfig, "sparsity ratio must lie in [0,1), got " + std::to_string(ratio));
  }
  if (fine_tune_epochs < 0) fail(ErrorKind::kConfig, "fine-tune epochs must be non-negative");
}

void ClusterConfig::validate() const {
  if (k < 2) fail(ErrorKind::kConfig, "cluster count k must be at least 2, got " + std::to_string(k));
  if (max_iterations < 1) fail(ErrorKind::kConfig, "k-means needs at least one iteration");
  if (!(tolerance >= 0.0)) fail(ErrorKind::kConfig, "k-means tolerance must be non-negative");
  if (fine_tune_epochs < 0) fail(ErrorKind::kConfig, "fine-tune epochs must be non-negative");
}

const char* to_string(QuantLevel level) noexcept {
  return level == QuantLevel::kFloat16 ? "f16" : "dynamic-i8";
}

std::optional<QuantLevel> parse_quant_level(const std::string& text) {
  if (text == "dynamic-i8" || text == "i8" || text == "int8") return QuantLevel::kDynamicRangeI8;
  if (text == "f16" || text == "float16") return QuantLevel::kFloat16;
  return std::nullopt;
}

const char* to_string(ClusterInit init) noexcept {
  switch (init) {
    case ClusterInit::kKmeansPlusPlus: return "kmeanspp";
    case ClusterInit::kLinear: return "linear";
    case ClusterInit::kRandom: return "random";
    case ClusterInit::kDensity: return "density";
  }
  return "unknown";
}

std::optional<ClusterInit> parse_cluster_init(const std::string& text) {
  if (text == "kmeanspp" || text == "kmeans++") return ClusterInit::kKmeansPlusPlus;
  if (text == "linear") return ClusterInit::kLinear;
  if (text == "random") return ClusterInit::kRandom;
  if (text == "density") return ClusterInit::kDensity;
  return std::nullopt;
}

// ---------------------------------------------------------------- pruning ---

std::vector<std::uint8_t> magnitude_keep_mask(std::span<const float> weights, double ratio) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    fail(ErrorKind::kConfig, "sparsity ratio must lie in [0,1), got " + std::to_string(ratio));
  }
  const std::size_t total = weights.size();
  const auto removed = static_cast<std::size_t>(std::floor(static_cast<double>(total) * ratio + 1e-9));
  std::vector<std::size_t> order(total);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const float ma = std::fabs(weights[a]), mb = std::fabs(weights[b]);
    if (ma != mb) return ma < mb;
    return a > b;
  });
  std::vector<std::uint8_t> keep(total, 1);
  for (std::size_t i = 0; i < removed; ++i) keep[order[i]] = 0;
  return keep;
}

WeightStore prune_store(std::span<const float> weights, double ratio) {
  const auto keep = magnitude_keep_mask(weights, ratio);
  Bitmap mask(weights.size());
  std::vector<float> values;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (keep[i]) {
      mask.set(i);
      values.push_back(weights[i]);
    }
  }
  return WeightStore(SparseBitmap{std::move(mask), ValueArray(std::move(values))});
}

namespace {

std::vector<std::size_t> resolve_targets(const Model& model, const std::vector<std::size_t>& chosen) {
  if (chosen.empty()) return model.dense_layers();
  for (std::size_t i : chosen) {
    if (i >= model.layers.size() || !model.layers[i].has_weights()) {
      fail(ErrorKind::kConfig, "layer " + std::to_string(i) + " has no weights to compress");
    }
  }
  return chosen;
}

void require_float_weights(const Layer& l, std::size_t index, bool allow_sparse) {
  const auto tag = l.weights.tag();
  const bool ok = tag == StoreTag::kDenseF32 ||
                  (allow_sparse && tag == StoreTag::kSparseBitmap &&
                   l.weights.get_if<SparseBitmap>()->values.encoding() == ValueEncoding::kF32);
  if (!ok) {
    fail(ErrorKind::kConfig, "layer " + std::to_string(index) + " holds " + to_string(tag) +
                                 " weights; this step needs f32 weights");
  }
}

}  // namespace

Model prune_magnitude(const Model& model, const PruneConfig& config) {
  config.validate();
  Model out = model;
  if (config.ratio == 0.0) return out;
  for (std::size_t i : resolve_targets(model, config.layers)) {
    Layer& l = out.layers[i];
    require_float_weights(l, i, true);
    l.weights = prune_store(l.weights.decode(), config.ratio);
  }
  return out;
}

double achieved_sparsity(const Model& model) {
  std::size_t total = 0, removed = 0;
  for (const auto& l : model.layers) {
    if (const auto* s = l.weights.get_if<SparseBitmap>()) {
      total += s->mask.size();
      removed += s->mask.size() - s->mask.popcount();
    }
  }
  return total ? static_cast<double>(removed) / static_cast<double>(total) : 0.0;
}

// ---------------------------------------------------------- fine-tuning ---

Model fine_tune(const Model& model, const Dataset& data, const FineTuneConfig& config) {
  Model out = model;
  if (config.epochs == 0) return out;
  TrainConfig tc;
  tc.epochs = config.epochs;
  tc.batch_size = config.batch_size;
  tc.learning_rate = config.learning_rate;
  tc.seed = config.seed;
  train(out, data, tc);
  return out;
}

// ---------------------------------------------------------- quantization ---

namespace {

ValueArray quantize_values(const ValueArray& values, QuantLevel level) {
  if (values.encoding() != ValueEncoding::kF32) {
    fail(ErrorKind::kConfig, "values are already quantized");
  }
  const auto& v = std::get<std::vector<float>>(values.storage());
  if (level == QuantLevel::kDynamicRangeI8) return ValueArray(quantize_symmetric(v));
  std::vector<std::uint16_t> half(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) half[i] = float_to_half(v[i]);
  return ValueArray(std::move(half));
}

}  // namespace

WeightStore quantize_store(const WeightStore& store, QuantLevel level) {
  switch (store.tag()) {
    case StoreTag::kDenseF32: {
      const auto& w = store.get_if<DenseF32>()->values;
      if (level == QuantLevel::kDynamicRangeI8) {
        auto q = quantize_symmetric(w);
        return WeightStore(QuantizedI8{std::move(q.q), q.scale});
      }
      std::vector<std::uint16_t> half(w.size());
      for (std::size_t i = 0; i < w.size(); ++i) half[i] = float_to_half(w[i]);
      return WeightStore(DenseF16{std::move(half)});
    }
    case StoreTag::kSparseBitmap: {
      const auto& s = *store.get_if<SparseBitmap>();
      return WeightStore(SparseBitmap{s.mask, quantize_values(s.values, level)});
    }
    case StoreTag::kClustered: {
      const auto& c = *store.get_if<Clustered>();
      return WeightStore(Clustered{c.k, c.indices, quantize_values(c.centroids, level)});
    }
    default:
      fail(ErrorKind::kConfig, std::string("cannot quantize a ") + to_string(store.tag()) +
                                   " store; it is already quantized");
  }
}

Model quantize(const Model& model, QuantLevel level) {
  Model out = model;
  for (std::size_t i : out.weight_layers()) {
    Layer& l = out.layers[i];
    try {
      l.weights = quantize_store(l.weights, level);
    } catch (const Error& e) {
      fail(e.kind(), "layer " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

// ------------------------------------------------------------- clustering ---

std::vector<double> kmeanspp_init(std::span<const float> weights, std::uint32_t k,
                                  std::uint64_t seed) {
  if (weights.empty()) fail(ErrorKind::kConfig, "k-means++ needs at least one weight");
  if (k < 1) fail(ErrorKind::kConfig, "k-means++ needs k >= 1");
  Rng rng(seed);
  const std::size_t n = weights.size();
  std::vector<double> centroids;
  centroids.push_back(weights[rng.index(n)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double d = weights[i] - centroids[0];
    d2[i] = d * d;
  }
  while (centroids.size() < k) {
    const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double cum = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        cum += d2[i];
        if (cum > r && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rng.index(n);
    }
    const double c = weights[pick];
    centroids.push_back(c);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = weights[i] - c;
      d2[i] = std::min(d2[i], d * d);
    }
  }
  return centroids;
}

std::vector<double> initial_centroids(std::span<const float> weights, std::uint32_t k,
                                      ClusterInit init, std::uint64_t seed) {
  if (weights.empty()) fail(ErrorKind::kConfig, "clustering needs at least one weight");
  if (init == ClusterInit::kKmeansPlusPlus) return kmeanspp_init(weights, k, seed);
  const auto [lo_it, hi_it] = std::minmax_element(weights.begin(), weights.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> c(k);
  switch (init) {
    case ClusterInit::kLinear:
      for (std::uint32_t j = 0; j < k; ++j) {
        c[j] = k == 1 ? 0.5 * (lo + hi) : lo + (hi - lo) * j / (k - 1);
      }
      break;
    case ClusterInit::kRandom: {
      Rng rng(seed);
      for (auto& v : c) v = rng.uniform(lo, hi);
      std::sort(c.begin(), c.end());
      break;
    }
    case ClusterInit::kDensity: {
      std::vector<float> sorted(weights.begin(), weights.end());
      std::sort(sorted.begin(), sorted.end());
      for (std::uint32_t j = 0; j < k; ++j) {
        const double q = (j + 0.5) / k;
        const auto idx = std::min(sorted.size() - 1, static_cast<std::size_t>(q * sorted.size()));
        c[j] = sorted[idx];
      }
      break;
    }
    default: break;
  }
  return c;
}

namespace {

// Nearest centroid for every weight; `centroids` must be ascending.
double assign_sorted(std::span<const float> weights, const std::vector<double>& centroids,
                     std::vector<std::uint32_t>& assignment) {
  std::vector<double> mid(centroids.size() > 0 ? centroids.size() - 1 : 0);
  for (std::size_t j = 0; j < mid.size(); ++j) mid[j] = 0.5 * (centroids[j] + centroids[j + 1]);
  double objective = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double w = weights[i];
    auto j = static_cast<std::uint32_t>(std::upper_bound(mid.begin(), mid.end(), w) - mid.begin());
    // Midpoints are rounded; settle against the neighbours directly.
    while (j > 0 && std::fabs(w - centroids[j - 1]) < std::fabs(w - centroids[j])) --j;
    while (j + 1 < centroids.size() && std::fabs(w - centroids[j + 1]) < std::fabs(w - centroids[j])) ++j;
    assignment[i] = j;
    const double d = w - centroids[j];
    objective += d * d;
  }
  return objective;
}

}  // namespace

KMeansResult kmeans(std::span<const float> weights, const ClusterConfig& config) {
  config.validate();
  const std::size_t n = weights.size();
  if (n == 0) fail(ErrorKind::kConfig, "k-means needs at least one weight");
  if (config.k > n) {
    fail(ErrorKind::kConfig, "k=" + std::to_string(config.k) + " exceeds the weight count " +
                                 std::to_string(n));
  }
  const std::uint32_t k = config.k;
  std::vector<double> c = initial_centroids(weights, k, config.init, config.seed);
  std::sort(c.begin(), c.end());

  KMeansResult result;
  std::vector<std::uint32_t> assignment(n);
  std::vector<double> sum(k);
  std::vector<std::size_t> count(k);
  std::vector<double> dist(n);

  for (int it = 0; it < config.max_iterations; ++it) {
    result.objective.push_back(assign_sorted(weights, c, assignment));

    std::fill(sum.begin(), sum.end(), 0.0);
    std::fill(count.begin(), count.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      sum[assignment[i]] += weights[i];
      ++count[assignment[i]];
    }
    bool any_empty = false;
    for (std::uint32_t j = 0; j < k; ++j) any_empty |= count[j] == 0;
    if (any_empty) {
      for (std::size_t i = 0; i < n; ++i) dist[i] = std::fabs(weights[i] - c[assignment[i]]);
    }
    std::vector<double> next(k);
    double movement = 0.0;
    for (std::uint32_t j = 0; j < k; ++j) {
      if (count[j] > 0) {
        next[j] = sum[j] / static_cast<double>(count[j]);
      } else {
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        next[j] = weights[far];
        dist[far] = -1.0;
      }
      movement = std::max(movement, std::fabs(next[j] - c[j]));
    }
    c = std::move(next);
    std::sort(c.begin(), c.end());
    ++result.iterations;
    if (movement < config.tolerance) break;
  }
  result.objective.push_back(assign_sorted(weights, c, assignment));
  result.centroids.assign(c.begin(), c.end());
  result.assignment = std::move(assignment);
  return result;
}

WeightStore cluster_store(std::span<const float> weights, const ClusterConfig& config) {
  const KMeansResult r = kmeans(weights, config);
  PackedIndices indices(weights.size(), index_bit_width(config.k));
  for (std::size_t i = 0; i < weights.size(); ++i) indices.set(i, r.assignment[i]);
  return WeightStore(Clustered{config.k, std::move(indices), ValueArray(r.centroids)});
}

Model cluster_weights(const Model& model, const ClusterConfig& config) {
  config.validate();
  Model out = model;
  for (std::size_t i : out.dense_layers()) {
    Layer& l = out.layers[i];
    require_float_weights(l, i, false);
    ClusterConfig layer_cfg = config;
    layer_cfg.seed = mix_seed(config.seed, i);
    l.weights = cluster_store(l.weights.get_if<DenseF32>()->values, layer_cfg);
  }
  return out;
}

// -------------------------------------------------------------- pipelines ---

Model prune_quantize(const Model& model, const Dataset& data, const PruneConfig& prune,
                     QuantLevel level, const FineTuneConfig& tune) {
  FineTuneConfig t = tune;
  t.epochs = prune.fine_tune_epochs;
  return quantize(fine_tune(prune_magnitude(model, prune), data, t), level);
}

Model cluster_quantize(const Model& model, const Dataset& data, const ClusterConfig& cluster,
                       QuantLevel level, const FineTuneConfig& tune) {
  FineTuneConfig t = tune;
  t.epochs = cluster.fine_tune_epochs;
  return quantize(fine_tune(cluster_weights(model, cluster), data, t), level);
}

}  // namespace csic
