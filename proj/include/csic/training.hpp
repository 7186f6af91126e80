#pragma once

// Reconstruction loss, gradients and Adam training for the model zoo.

#include <cstdint>
#include <functional>
#include <vector>

#include "csic/channel.hpp"
#include "csic/model.hpp"
#include "csic/ops.hpp"

namespace csic {

enum class ParameterRole : std::uint8_t { kWeight, kBias, kGamma, kBeta };

struct ParameterSlot {
  std::size_t layer = 0;
  ParameterRole role = ParameterRole::kWeight;
};

/// Trainable tensors in layer order: conv/dense weight then bias, batch-norm
/// gamma then beta.
std::vector<ParameterSlot> parameter_slots(const Model& model);

/// Dense copies of every trainable tensor, aligned with parameter_slots().
template <typename T>
struct ParameterSet {
  std::vector<BasicTensor<T>> tensors;
};

template <typename T>
ParameterSet<T> gather_parameters(const Model& model);

/// Mean squared reconstruction error of `batch` [B,2,rows,antennas] through the
/// model structure with parameters taken from `params`. When `grads` is given
/// it receives d(loss)/d(params). Batch norm uses batch statistics when
/// `training` is set; those statistics are written to `stats` (one entry per
/// batch-norm layer, in order).
template <typename T>
T reconstruction_loss(const Model& model, const ParameterSet<T>& params,
                      const BasicTensor<T>& batch, bool training,
                      ParameterSet<T>* grads = nullptr,
                      std::vector<ops::BatchNormCache<T>>* stats = nullptr);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 64;
  double learning_rate = 1e-3;
  std::uint64_t seed = 1;
  std::function<void(int epoch, double loss)> on_epoch;
};

struct TrainResult {
  std::vector<float> loss_history;  // mean training loss per epoch
};

/// Adam on reconstruction MSE with a per-epoch deterministic shuffle.
///
/// Sparse layers keep their bitmap: pruned positions get zero gradient and stay
/// exactly zero. Clustered layers keep their assignments; each centroid moves
/// by the mean gradient of its member weights. Quantized and f16 stores cannot
/// be trained. Batch-norm running statistics are updated with momentum 0.99.
TrainResult train(Model& model, const Dataset& data, const TrainConfig& config);

}  // namespace csic
