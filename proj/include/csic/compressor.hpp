#pragma once

// Magnitude pruning, post-training quantization, k-means weight clustering,
// fine-tuning and the combined pipelines.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "csic/channel.hpp"
#include "csic/model.hpp"
#include "csic/training.hpp"

namespace csic {

struct PruneConfig {
  double ratio = 0.5;
  /// Layers to prune; empty means every dense layer.
  std::vector<std::size_t> layers;
  int fine_tune_epochs = 10;
  void validate() const;
};

enum class QuantLevel : std::uint8_t { kDynamicRangeI8, kFloat16 };

const char* to_string(QuantLevel level) noexcept;
std::optional<QuantLevel> parse_quant_level(const std::string& text);

enum class ClusterInit : std::uint8_t { kKmeansPlusPlus, kLinear, kRandom, kDensity };

const char* to_string(ClusterInit init) noexcept;
std::optional<ClusterInit> parse_cluster_init(const std::string& text);

struct ClusterConfig {
  std::uint32_t k = 32;
  ClusterInit init = ClusterInit::kKmeansPlusPlus;
  int max_iterations = 300;
  double tolerance = 1e-6;  // on the largest centroid movement
  std::uint64_t seed = 1;
  int fine_tune_epochs = 10;
  void validate() const;
};

struct FineTuneConfig {
  int epochs = 10;
  int batch_size = 64;
  double learning_rate = 1e-4;
  std::uint64_t seed = 1;
};

// ---------------------------------------------------------------- pruning ---

/// Flat positions that survive pruning `ratio` of `weights`: the smallest
/// floor(T*ratio) magnitudes are removed, ties removing the higher index first.
std::vector<std::uint8_t> magnitude_keep_mask(std::span<const float> weights, double ratio);

/// Sparse store keeping the surviving weights of `weights`.
WeightStore prune_store(std::span<const float> weights, double ratio);

/// Prunes the selected dense layers. Ratio 0 returns the model unchanged.
Model prune_magnitude(const Model& model, const PruneConfig& config);

/// Fraction of positions removed by the bitmap, over all sparse layers.
double achieved_sparsity(const Model& model);

// ---------------------------------------------------------- fine-tuning ---

/// Retrains with pruning masks and cluster assignments frozen.
Model fine_tune(const Model& model, const Dataset& data, const FineTuneConfig& config);

// ---------------------------------------------------------- quantization ---

/// Quantizes the weight tensor of every conv and dense layer. Sparse stores
/// quantize their nonzero values and keep the bitmap; clustered stores
/// quantize the centroid table. Biases and batch norm stay f32.
Model quantize(const Model& model, QuantLevel level);

WeightStore quantize_store(const WeightStore& store, QuantLevel level);

// ------------------------------------------------------------- clustering ---

/// D^2 seeding: the first centroid is uniform over `weights`; each next one is
/// drawn with probability proportional to the squared distance to the nearest
/// centroid chosen so far.
std::vector<double> kmeanspp_init(std::span<const float> weights, std::uint32_t k,
                                  std::uint64_t seed);

std::vector<double> initial_centroids(std::span<const float> weights, std::uint32_t k,
                                      ClusterInit init, std::uint64_t seed);

struct KMeansResult {
  std::vector<float> centroids;          // ascending
  std::vector<std::uint32_t> assignment; // centroid id per weight
  std::vector<double> objective;         // sum of squared distances after each assignment
  int iterations = 0;
};

/// Lloyd's algorithm on scalar weights. Empty clusters are re-seeded at the
/// point farthest from its assigned centroid.
KMeansResult kmeans(std::span<const float> weights, const ClusterConfig& config);

/// Clustered store for `weights`.
WeightStore cluster_store(std::span<const float> weights, const ClusterConfig& config);

/// Clusters every dense layer.
Model cluster_weights(const Model& model, const ClusterConfig& config);

// -------------------------------------------------------------- pipelines ---

/// prune_magnitude -> fine_tune -> quantize.
Model prune_quantize(const Model& model, const Dataset& data, const PruneConfig& prune,
                     QuantLevel level, const FineTuneConfig& tune);

/// cluster_weights -> fine_tune -> quantize.
Model cluster_quantize(const Model& model, const Dataset& data, const ClusterConfig& cluster,
                       QuantLevel level, const FineTuneConfig& tune);

}  // namespace csic
