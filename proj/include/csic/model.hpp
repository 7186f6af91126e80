#pragma once

// CsiNet-style encoder/decoder: layer list, construction and reference forward pass.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csic/tensor.hpp"
#include "csic/weight_store.hpp"

namespace csic {

enum class LayerKind : std::uint8_t {
  kConv2d = 0,
  kBatchNorm = 1,
  kLeakyRelu = 2,
  kSigmoid = 3,
  kFlatten = 4,
  kDense = 5,
  kReshape = 6,
  kSkipSave = 7,  // remember the current activation
  kSkipAdd = 8,   // add the most recently remembered activation
};

const char* to_string(LayerKind kind) noexcept;

struct Layer {
  LayerKind kind = LayerKind::kFlatten;

  // conv2d: [filters, channels, 3, 3]; dense: [inputs, outputs]
  Shape weight_shape;
  WeightStore weights;
  std::vector<float> bias;

  // batch norm, one entry per channel
  std::vector<float> gamma, beta, running_mean, running_var;

  float slope = 0.3f;  // leaky relu
  Shape target_shape;  // reshape, per-sample dims

  bool has_weights() const noexcept {
    return kind == LayerKind::kConv2d || kind == LayerKind::kDense;
  }
  int output_width() const;  // filters for conv, outputs for dense
  std::size_t parameter_count() const noexcept;
};

struct ModelSpec {
  int planes = 2;
  int rows = 16;      // truncated delay rows
  int antennas = 16;
  double gamma = 0.25;  // M / N
  float leaky_slope = 0.3f;
  std::uint64_t seed = 1;

  int feedback_size() const noexcept { return planes * rows * antennas; }  // N
  int codeword_size() const;                                                 // M
  Shape sample_shape() const { return {planes, rows, antennas}; }
  void validate() const;
};

class Model {
 public:
  ModelSpec spec;
  std::vector<Layer> layers;
  std::size_t encoder_layers = 0;  // layers [0, encoder_layers) form the encoder
  int epochs_seen = 0;
  std::vector<float> loss_history;

  std::size_t parameter_count() const noexcept;
  std::vector<std::size_t> dense_layers() const;
  std::vector<std::size_t> weight_layers() const;

  /// Throws kInvariant if a layer's stores disagree with its declared shape.
  void validate() const;
};

/// Builds the architecture for `spec` with He-uniform weights drawn from spec.seed.
Model build_model(const ModelSpec& spec);

/// Reference f32 forward pass over layers [first, last), batch-norm in
/// inference mode. Compressed stores are decoded to f32 first.
Tensor forward(const Model& model, const Tensor& input, std::size_t first, std::size_t last);

/// [B,2,rows,antennas] -> [B,M]. A single [2,rows,antennas] sample is also accepted.
Tensor encode(const Model& model, const Tensor& samples);

/// [B,M] -> [B,2,rows,antennas]. A single length-M codeword is also accepted.
Tensor decode(const Model& model, const Tensor& codewords);

/// decode(encode(x)).
Tensor reconstruct(const Model& model, const Tensor& samples);

}  // namespace csic
