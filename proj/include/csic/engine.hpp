#pragma once

// Inference engine for models in any compression state.
//
// Dense layers run on feature-major activations ([features][batch]); every
// kernel walks one output neuron at a time and accumulates a tile of batch
// columns, so dense, sparse and gather kernels share one summation order.

#include <cstdint>
#include <span>
#include <vector>

#include "csic/model.hpp"
#include "csic/weight_store.hpp"

namespace csic {

enum class KernelKind : std::uint8_t {
  kDenseF32,
  kDenseF16,
  kSparse,
  kQuantized,
  kSparseQuantized,
  kClusteredGather,
  kConvF32,
  kBatchNorm,
  kLeakyRelu,
  kSigmoid,
  kFlatten,
  kReshape,
  kSkipSave,
  kSkipAdd,
};

const char* to_string(KernelKind kind) noexcept;

/// Work done by kernels; accumulated across calls until reset.
struct KernelCounters {
  std::uint64_t macs = 0;
  std::uint64_t bytes = 0;  // weight operand bytes read plus activation bytes in and out
};

/// Per-sample asymmetric int8 activation quantization: x ~ scale * (q - zero_point).
struct DynamicQuantParams {
  float scale = 1.0f;
  std::int8_t zero_point = 0;
};

/// Parameters covering [min(lo,0), max(hi,0)] with 253 steps, so that the
/// quantized range never clamps. A zero range gives scale 1, zero point 0.
DynamicQuantParams activation_quant_params(float lo, float hi) noexcept;

std::int8_t quantize_activation(float x, DynamicQuantParams p) noexcept;

/// Dense-layer weights re-laid out output-major for one kernel.
class DenseOperand {
 public:
  DenseOperand() = default;

  /// Picks the kernel matching the store. `force_dense` materializes the
  /// zeros of a sparse store and runs the matching dense kernel instead.
  static DenseOperand prepare(const WeightStore& store, int inputs, int outputs,
                              std::span<const float> bias, bool force_dense = false);

  KernelKind kind() const noexcept { return kind_; }
  int inputs() const noexcept { return inputs_; }
  int outputs() const noexcept { return outputs_; }
  /// Weights the kernel multiplies per batch column.
  std::uint64_t multiplied_weights() const noexcept;
  std::size_t operand_bytes() const noexcept;

  /// x: [inputs][batch] feature-major, y: [outputs][batch].
  void run(const float* x, float* y, int batch, KernelCounters* counters = nullptr) const;

 private:
  void run_float(const float* x, float* y, int batch) const;
  void run_sparse(const float* x, float* y, int batch) const;
  void run_gather(const float* x, float* y, int batch) const;
  void run_quantized(const float* x, float* y, int batch) const;

  KernelKind kind_ = KernelKind::kDenseF32;
  int inputs_ = 0;
  int outputs_ = 0;
  std::vector<float> bias_;

  std::vector<float> dense_;            // [outputs][inputs]
  std::vector<std::int8_t> qdense_;     // [outputs][inputs]
  std::vector<std::uint64_t> bitmap_;   // [outputs][words_per_row]
  std::vector<std::uint32_t> row_start_;
  std::vector<float> values_;           // nonzeros, output-major
  std::vector<std::int8_t> qvalues_;
  std::vector<std::int32_t> row_qsum_;  // sum of int8 weights per output
  float weight_scale_ = 1.0f;
  std::vector<std::uint32_t> indices_;  // [outputs][inputs]
  std::vector<float> centroids_;
  int words_per_row_ = 0;
  std::uint64_t nonzeros_ = 0;
};

/// One step per model layer.
struct PlanStep {
  KernelKind kernel = KernelKind::kFlatten;
  DenseOperand dense;
  Tensor conv_kernel;
  Tensor conv_bias;
  std::vector<float> gamma, beta, mean, var;
  float slope = 0.0f;
  Shape target_shape;
};

class ExecutionPlan {
 public:
  const std::vector<PlanStep>& steps() const noexcept { return steps_; }
  std::vector<KernelKind> kernels() const;
  /// Kernel kinds of the dense layers only, in order.
  std::vector<KernelKind> dense_kernels() const;
  /// Largest activation (floats per sample) any step produces.
  std::size_t scratch_floats_per_sample() const noexcept { return scratch_; }
  std::size_t encoder_steps() const noexcept { return encoder_steps_; }
  const Shape& sample_shape() const noexcept { return sample_shape_; }

  /// Runs steps [first, last) on a batch-major input.
  Tensor run(const Tensor& input, std::size_t first, std::size_t last,
             KernelCounters* counters = nullptr) const;
  Tensor run(const Tensor& input, KernelCounters* counters = nullptr) const {
    return run(input, 0, steps_.size(), counters);
  }

 private:
  friend ExecutionPlan plan(const Model& model, bool force_dense);
  std::vector<PlanStep> steps_;
  std::size_t encoder_steps_ = 0;
  std::size_t scratch_ = 0;
  Shape sample_shape_;
};

ExecutionPlan plan(const Model& model, bool force_dense = false);

/// Full forward pass through `p` for a batch [B,2,rows,antennas].
Tensor run(const ExecutionPlan& p, const Tensor& input, KernelCounters* counters = nullptr);

/// Single dense layer y = x W + b for x [B,inputs] with the kernel chosen
/// from the store. `shape` is [inputs, outputs].
Tensor dense_layer(const WeightStore& store, const Shape& shape, std::span<const float> bias,
                   const Tensor& input, bool force_dense = false,
                   KernelCounters* counters = nullptr);

/// Kernel entry points for a specific store variant; each rejects stores of
/// another kind with a kConfig error.
Tensor sparse_dense_matvec(const WeightStore& store, const Shape& shape,
                           std::span<const float> bias, const Tensor& input,
                           KernelCounters* counters = nullptr);
Tensor dynamic_quant_matvec(const WeightStore& store, const Shape& shape,
                            std::span<const float> bias, const Tensor& input,
                            KernelCounters* counters = nullptr);
Tensor sparse_quant_matvec(const WeightStore& store, const Shape& shape,
                           std::span<const float> bias, const Tensor& input,
                           KernelCounters* counters = nullptr);
Tensor clustered_gather_matvec(const WeightStore& store, const Shape& shape,
                               std::span<const float> bias, const Tensor& input,
                               KernelCounters* counters = nullptr);

}  // namespace csic
