#include "csic/engine.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

#include "csic/ops.hpp"

namespace csic {

const char* to_string(KernelKind kind) noexcept {
  switch (kind) {
    case KernelKind::kDenseF32: return "dense-f32";
    case KernelKind::kDenseF16: return "dense-f16";
    case KernelKind::kSparse: return "sparse";
    case KernelKind::kQuantized: return "quantized";
    case KernelKind::kSparseQuantized: return "sparse-quantized";
    case KernelKind::kClusteredGather: return "clustered-gather";
    case KernelKind::kConvF32: return "conv-f32";
    case KernelKind::kBatchNorm: return "batch-norm";
    case KernelKind::kLeakyRelu: return "leaky-relu";
    case KernelKind::kSigmoid: return "sigmoid";
    case KernelKind::kFlatten: return "flatten";
    case KernelKind::kReshape: return "reshape";
    case KernelKind::kSkipSave: return "skip-save";
    case KernelKind::kSkipAdd: return "skip-add";
  }
  return "unknown";
}

DynamicQuantParams activation_quant_params(float lo, float hi) noexcept {
  const double mn = std::min<double>(lo, 0.0);
  const double mx = std::max<double>(hi, 0.0);
  if (!(mx > mn)) return {};
  DynamicQuantParams p;
  p.scale = static_cast<float>((mx - mn) / 253.0);
  const double zp = std::round(-126.5 - mn / p.scale);
  p.zero_point = static_cast<std::int8_t>(std::clamp(zp, -127.0, 127.0));
  return p;
}

std::int8_t quantize_activation(float x, DynamicQuantParams p) noexcept {
  const float q = std::round(x / p.scale + static_cast<float>(p.zero_point));
  return static_cast<std::int8_t>(std::clamp(q, -127.0f, 127.0f));
}

namespace {

// Calls f.operator()<tile>(b0) over batch columns in tiles of 32, 8, then 1.
template <typename F>
void for_each_tile(int batch, F&& f) {
  int b = 0;
  for (; b + 32 <= batch; b += 32) f.template operator()<32>(b);
  for (; b + 8 <= batch; b += 8) f.template operator()<8>(b);
  for (; b < batch; ++b) f.template operator()<1>(b);
}

bool is_dense_kernel(KernelKind k) {
  switch (k) {
    case KernelKind::kDenseF32:
    case KernelKind::kDenseF16:
    case KernelKind::kSparse:
    case KernelKind::kQuantized:
    case KernelKind::kSparseQuantized:
    case KernelKind::kClusteredGather: return true;
    default: return false;
  }
}

std::vector<std::int64_t> value_slots(const Bitmap& mask) {
  std::vector<std::int64_t> slot(mask.size(), -1);
  std::int64_t next = 0;
  for (std::size_t i = 0; i < mask.size(); ++i) {
    if (mask.test(i)) slot[i] = next++;
  }
  return slot;
}

void check_store(const WeightStore& store, int inputs, int outputs) {
  if (inputs <= 0 || outputs <= 0) fail(ErrorKind::kShape, "dense layer dims must be positive");
  const std::size_t expected = static_cast<std::size_t>(inputs) * outputs;
  if (store.element_count() != expected) {
    fail(ErrorKind::kShape, "weight store holds " + std::to_string(store.element_count()) +
                                " elements, layer needs " + std::to_string(expected));
  }
  store.validate();
}

}  // namespace

DenseOperand DenseOperand::prepare(const WeightStore& store, int inputs, int outputs,
                                   std::span<const float> bias, bool force_dense) {
  check_store(store, inputs, outputs);
  if (bias.size() != static_cast<std::size_t>(outputs)) {
    fail(ErrorKind::kShape, "bias length " + std::to_string(bias.size()) + " != outputs " +
                                std::to_string(outputs));
  }
  DenseOperand op;
  op.inputs_ = inputs;
  op.outputs_ = outputs;
  op.bias_.assign(bias.begin(), bias.end());
  const std::size_t n_in = inputs, n_out = outputs;
  auto src = [&](std::size_t m, std::size_t n) { return n * n_out + m; };

  const auto to_output_major = [&](const std::vector<float>& w) {
    std::vector<float> out(w.size());
    for (std::size_t m = 0; m < n_out; ++m)
      for (std::size_t n = 0; n < n_in; ++n) out[m * n_in + n] = w[src(m, n)];
    return out;
  };

  const auto quantized_dense = [&](const std::vector<std::int8_t>& q, float scale) {
    op.kind_ = KernelKind::kQuantized;
    op.weight_scale_ = scale;
    op.qdense_.resize(q.size());
    op.row_qsum_.assign(n_out, 0);
    for (std::size_t m = 0; m < n_out; ++m) {
      for (std::size_t n = 0; n < n_in; ++n) {
        const std::int8_t v = q[src(m, n)];
        op.qdense_[m * n_in + n] = v;
        op.row_qsum_[m] += v;
      }
    }
  };

  switch (store.tag()) {
    case StoreTag::kDenseF32:
    case StoreTag::kDenseF16:
      op.kind_ = store.tag() == StoreTag::kDenseF32 ? KernelKind::kDenseF32 : KernelKind::kDenseF16;
      op.dense_ = to_output_major(store.decode());
      break;
    case StoreTag::kQuantizedI8: {
      const auto& q = *store.get_if<QuantizedI8>();
      quantized_dense(q.values, q.scale);
      break;
    }
    case StoreTag::kSparseBitmap: {
      const auto& s = *store.get_if<SparseBitmap>();
      const bool quantized = s.values.encoding() == ValueEncoding::kI8;
      if (force_dense) {
        if (quantized) {
          const auto& qv = std::get<QuantizedValues>(s.values.storage());
          const auto slot = value_slots(s.mask);
          std::vector<std::int8_t> full(s.mask.size(), 0);
          for (std::size_t i = 0; i < full.size(); ++i) {
            if (slot[i] >= 0) full[i] = qv.q[static_cast<std::size_t>(slot[i])];
          }
          quantized_dense(full, qv.scale);
        } else {
          op.kind_ = KernelKind::kDenseF32;
          op.dense_ = to_output_major(store.decode());
        }
        break;
      }
      op.kind_ = quantized ? KernelKind::kSparseQuantized : KernelKind::kSparse;
      op.words_per_row_ = static_cast<int>((n_in + 63) / 64);
      op.bitmap_.assign(n_out * op.words_per_row_, 0);
      op.row_start_.assign(n_out + 1, 0);
      op.row_qsum_.assign(n_out, 0);
      const auto slot = value_slots(s.mask);
      const QuantizedValues* qv = quantized ? &std::get<QuantizedValues>(s.values.storage()) : nullptr;
      if (qv) op.weight_scale_ = qv->scale;
      for (std::size_t m = 0; m < n_out; ++m) {
        for (std::size_t n = 0; n < n_in; ++n) {
          const std::int64_t k = slot[src(m, n)];
          if (k < 0) continue;
          op.bitmap_[m * op.words_per_row_ + n / 64] |= std::uint64_t{1} << (n % 64);
          if (qv) {
            const std::int8_t v = qv->q[static_cast<std::size_t>(k)];
            op.qvalues_.push_back(v);
            op.row_qsum_[m] += v;
          } else {
            op.values_.push_back(s.values.get(static_cast<std::size_t>(k)));
          }
        }
        op.row_start_[m + 1] = static_cast<std::uint32_t>(qv ? op.qvalues_.size() : op.values_.size());
      }
      op.nonzeros_ = op.row_start_[n_out];
      break;
    }
    case StoreTag::kClustered: {
      const auto& c = *store.get_if<Clustered>();
      op.kind_ = KernelKind::kClusteredGather;
      op.centroids_ = c.centroids.decode();
      op.indices_.resize(n_in * n_out);
      for (std::size_t m = 0; m < n_out; ++m)
        for (std::size_t n = 0; n < n_in; ++n) op.indices_[m * n_in + n] = c.indices.get(src(m, n));
      break;
    }
  }
  return op;
}

std::uint64_t DenseOperand::multiplied_weights() const noexcept {
  if (kind_ == KernelKind::kSparse || kind_ == KernelKind::kSparseQuantized) return nonzeros_;
  return static_cast<std::uint64_t>(inputs_) * outputs_;
}

std::size_t DenseOperand::operand_bytes() const noexcept {
  const std::size_t mn = static_cast<std::size_t>(inputs_) * outputs_;
  switch (kind_) {
    case KernelKind::kSparse: return bitmap_.size() * 8 + values_.size() * 4;
    case KernelKind::kSparseQuantized: return bitmap_.size() * 8 + qvalues_.size();
    case KernelKind::kQuantized: return mn;
    case KernelKind::kClusteredGather: return mn * 4 + centroids_.size() * 4;
    default: return mn * 4;
  }
}

void DenseOperand::run(const float* x, float* y, int batch, KernelCounters* counters) const {
  if (batch <= 0) fail(ErrorKind::kShape, "dense kernel: batch must be positive");
  switch (kind_) {
    case KernelKind::kDenseF32:
    case KernelKind::kDenseF16: run_float(x, y, batch); break;
    case KernelKind::kSparse: run_sparse(x, y, batch); break;
    case KernelKind::kClusteredGather: run_gather(x, y, batch); break;
    case KernelKind::kQuantized:
    case KernelKind::kSparseQuantized: run_quantized(x, y, batch); break;
    default: fail(ErrorKind::kInvariant, "dense operand holds a non-dense kernel kind");
  }
  if (counters) {
    counters->macs += multiplied_weights() * static_cast<std::uint64_t>(batch);
    counters->bytes += operand_bytes() +
                       4ull * (static_cast<std::uint64_t>(inputs_) + outputs_) * batch;
  }
}

void DenseOperand::run_float(const float* x, float* y, int batch) const {
  const int n_in = inputs_;
  for_each_tile(batch, [&]<int kTile>(int b0) {
    for (int m = 0; m < outputs_; ++m) {
      float acc[kTile];
      for (int b = 0; b < kTile; ++b) acc[b] = bias_[m];
      const float* w = dense_.data() + static_cast<std::size_t>(m) * n_in;
      for (int n = 0; n < n_in; ++n) {
        const float wn = w[n];
        const float* xr = x + static_cast<std::size_t>(n) * batch + b0;
        for (int b = 0; b < kTile; ++b) acc[b] += wn * xr[b];
      }
      float* yr = y + static_cast<std::size_t>(m) * batch + b0;
      for (int b = 0; b < kTile; ++b) yr[b] = acc[b];
    }
  });
}

void DenseOperand::run_sparse(const float* x, float* y, int batch) const {
  const int words = words_per_row_;
  for_each_tile(batch, [&]<int kTile>(int b0) {
    for (int m = 0; m < outputs_; ++m) {
      float acc[kTile];
      for (int b = 0; b < kTile; ++b) acc[b] = bias_[m];
      const float* v = values_.data() + row_start_[m];
      const std::uint64_t* row = bitmap_.data() + static_cast<std::size_t>(m) * words;
      for (int wd = 0; wd < words; ++wd) {
        std::uint64_t bits = row[wd];
        while (bits) {
          const int n = wd * 64 + std::countr_zero(bits);
          bits &= bits - 1;
          const float wn = *v++;
          const float* xr = x + static_cast<std::size_t>(n) * batch + b0;
          for (int b = 0; b < kTile; ++b) acc[b] += wn * xr[b];
        }
      }
      float* yr = y + static_cast<std::size_t>(m) * batch + b0;
      for (int b = 0; b < kTile; ++b) yr[b] = acc[b];
    }
  });
}

void DenseOperand::run_gather(const float* x, float* y, int batch) const {
  const int n_in = inputs_;
  for_each_tile(batch, [&]<int kTile>(int b0) {
    for (int m = 0; m < outputs_; ++m) {
      float acc[kTile];
      for (int b = 0; b < kTile; ++b) acc[b] = bias_[m];
      const std::uint32_t* idx = indices_.data() + static_cast<std::size_t>(m) * n_in;
      for (int n = 0; n < n_in; ++n) {
        const float wn = centroids_[idx[n]];
        const float* xr = x + static_cast<std::size_t>(n) * batch + b0;
        for (int b = 0; b < kTile; ++b) acc[b] += wn * xr[b];
      }
      float* yr = y + static_cast<std::size_t>(m) * batch + b0;
      for (int b = 0; b < kTile; ++b) yr[b] = acc[b];
    }
  });
}

void DenseOperand::run_quantized(const float* x, float* y, int batch) const {
  const int n_in = inputs_;
  const std::size_t cols = static_cast<std::size_t>(batch);

  // Per-column activation range, then int8 codes widened for the multiply.
  std::vector<float> lo(cols, 0.0f), hi(cols, 0.0f);
  for (int n = 0; n < n_in; ++n) {
    const float* xr = x + n * cols;
    for (std::size_t b = 0; b < cols; ++b) {
      lo[b] = std::min(lo[b], xr[b]);
      hi[b] = std::max(hi[b], xr[b]);
    }
  }
  std::vector<DynamicQuantParams> params(cols);
  std::vector<float> combined(cols);
  std::vector<std::int32_t> zero(cols);
  for (std::size_t b = 0; b < cols; ++b) {
    params[b] = activation_quant_params(lo[b], hi[b]);
    combined[b] = weight_scale_ * params[b].scale;
    zero[b] = params[b].zero_point;
  }
  std::vector<std::int32_t> xq(static_cast<std::size_t>(n_in) * cols);
  for (int n = 0; n < n_in; ++n) {
    for (std::size_t b = 0; b < cols; ++b) {
      xq[n * cols + b] = quantize_activation(x[n * cols + b], params[b]);
    }
  }

  const bool sparse = kind_ == KernelKind::kSparseQuantized;
  const int words = words_per_row_;
  for_each_tile(batch, [&]<int kTile>(int b0) {
    for (int m = 0; m < outputs_; ++m) {
      std::int32_t acc[kTile] = {};
      if (sparse) {
        const std::int8_t* v = qvalues_.data() + row_start_[m];
        const std::uint64_t* row = bitmap_.data() + static_cast<std::size_t>(m) * words;
        for (int wd = 0; wd < words; ++wd) {
          std::uint64_t bits = row[wd];
          while (bits) {
            const int n = wd * 64 + std::countr_zero(bits);
            bits &= bits - 1;
            const std::int32_t wn = *v++;
            const std::int32_t* xr = xq.data() + n * cols + b0;
            for (int b = 0; b < kTile; ++b) acc[b] += wn * xr[b];
          }
        }
      } else {
        const std::int8_t* w = qdense_.data() + static_cast<std::size_t>(m) * n_in;
        for (int n = 0; n < n_in; ++n) {
          const std::int32_t wn = w[n];
          const std::int32_t* xr = xq.data() + n * cols + b0;
          for (int b = 0; b < kTile; ++b) acc[b] += wn * xr[b];
        }
      }
      float* yr = y + static_cast<std::size_t>(m) * cols + b0;
      for (int b = 0; b < kTile; ++b) {
        const std::int32_t centered = acc[b] - zero[b0 + b] * row_qsum_[m];
        yr[b] = bias_[m] + combined[b0 + b] * static_cast<float>(centered);
      }
    }
  });
}

// ------------------------------------------------------------------ plan ---

std::vector<KernelKind> ExecutionPlan::kernels() const {
  std::vector<KernelKind> out;
  for (const auto& s : steps_) out.push_back(s.kernel);
  return out;
}

std::vector<KernelKind> ExecutionPlan::dense_kernels() const {
  std::vector<KernelKind> out;
  for (const auto& s : steps_) {
    if (is_dense_kernel(s.kernel)) out.push_back(s.kernel);
  }
  return out;
}

ExecutionPlan plan(const Model& model, bool force_dense) {
  model.validate();
  ExecutionPlan p;
  p.encoder_steps_ = model.encoder_layers;
  p.sample_shape_ = model.spec.sample_shape();
  Shape cur = p.sample_shape_;
  p.scratch_ = shape_numel(cur);

  for (const Layer& l : model.layers) {
    PlanStep s;
    switch (l.kind) {
      case LayerKind::kConv2d:
        s.kernel = KernelKind::kConvF32;
        s.conv_kernel = Tensor(l.weight_shape, l.weights.decode());
        s.conv_bias = Tensor(Shape{l.output_width()}, l.bias);
        cur[0] = l.output_width();
        break;
      case LayerKind::kDense:
        s.dense = DenseOperand::prepare(l.weights, l.weight_shape[0], l.weight_shape[1], l.bias,
                                        force_dense);
        s.kernel = s.dense.kind();
        cur = {l.weight_shape[1]};
        break;
      case LayerKind::kBatchNorm:
        s.kernel = KernelKind::kBatchNorm;
        s.gamma = l.gamma;
        s.beta = l.beta;
        s.mean = l.running_mean;
        s.var = l.running_var;
        break;
      case LayerKind::kLeakyRelu:
        s.kernel = KernelKind::kLeakyRelu;
        s.slope = l.slope;
        break;
      case LayerKind::kSigmoid: s.kernel = KernelKind::kSigmoid; break;
      case LayerKind::kFlatten:
        s.kernel = KernelKind::kFlatten;
        cur = {static_cast<int>(shape_numel(cur))};
        break;
      case LayerKind::kReshape:
        s.kernel = KernelKind::kReshape;
        s.target_shape = l.target_shape;
        cur = l.target_shape;
        break;
      case LayerKind::kSkipSave: s.kernel = KernelKind::kSkipSave; break;
      case LayerKind::kSkipAdd: s.kernel = KernelKind::kSkipAdd; break;
    }
    p.scratch_ = std::max(p.scratch_, shape_numel(cur));
    p.steps_.push_back(std::move(s));
  }
  return p;
}

namespace {

Tensor run_dense_step(const DenseOperand& op, const Tensor& x, KernelCounters* counters) {
  if (x.rank() != 2 || x.dim(1) != op.inputs()) {
    fail(ErrorKind::kShape, "dense step expects [B," + std::to_string(op.inputs()) + "], got " +
                                shape_string(x.shape()));
  }
  const int batch = x.dim(0), n_in = op.inputs(), n_out = op.outputs();
  std::vector<float> xt(static_cast<std::size_t>(n_in) * batch);
  for (int b = 0; b < batch; ++b)
    for (int n = 0; n < n_in; ++n)
      xt[static_cast<std::size_t>(n) * batch + b] = x[static_cast<std::size_t>(b) * n_in + n];
  std::vector<float> yt(static_cast<std::size_t>(n_out) * batch);
  op.run(xt.data(), yt.data(), batch, counters);
  Tensor y(Shape{batch, n_out});
  for (int b = 0; b < batch; ++b)
    for (int m = 0; m < n_out; ++m)
      y[static_cast<std::size_t>(b) * n_out + m] = yt[static_cast<std::size_t>(m) * batch + b];
  return y;
}

}  // namespace

Tensor ExecutionPlan::run(const Tensor& input, std::size_t first, std::size_t last,
                          KernelCounters* counters) const {
  if (first > last || last > steps_.size()) fail(ErrorKind::kConfig, "plan step range out of bounds");
  if (first == 0) {
    const bool ok = input.rank() == sample_shape_.size() + 1 &&
                    std::equal(sample_shape_.begin(), sample_shape_.end(), input.shape().begin() + 1);
    if (!ok) {
      fail(ErrorKind::kShape, "engine input " + shape_string(input.shape()) +
                                  " does not match [B," + shape_string(sample_shape_) + "]");
    }
  }
  Tensor x = input;
  std::vector<Tensor> saved;
  for (std::size_t i = first; i < last; ++i) {
    const PlanStep& s = steps_[i];
    if (is_dense_kernel(s.kernel)) {
      x = run_dense_step(s.dense, x, counters);
      continue;
    }
    switch (s.kernel) {
      case KernelKind::kConvF32: {
        x = ops::conv2d(x, s.conv_kernel, s.conv_bias);
        if (counters) {
          const std::uint64_t plane = static_cast<std::uint64_t>(x.dim(2)) * x.dim(3);
          counters->macs += static_cast<std::uint64_t>(x.dim(0)) * plane * s.conv_kernel.size();
          counters->bytes += 4ull * (s.conv_kernel.size() + x.size() +
                                     x.size() / s.conv_kernel.dim(0) * s.conv_kernel.dim(1));
        }
        break;
      }
      case KernelKind::kBatchNorm:
        x = ops::batch_norm_infer<float>(x, s.gamma, s.beta, s.mean, s.var);
        break;
      case KernelKind::kLeakyRelu: x = ops::leaky_relu(x, s.slope); break;
      case KernelKind::kSigmoid: x = ops::sigmoid(x); break;
      case KernelKind::kFlatten: {
        const int batch = x.dim(0);
        x = x.reshaped(Shape{batch, static_cast<int>(x.size() / batch)});
        break;
      }
      case KernelKind::kReshape: {
        Shape shape{x.dim(0)};
        shape.insert(shape.end(), s.target_shape.begin(), s.target_shape.end());
        x = x.reshaped(std::move(shape));
        break;
      }
      case KernelKind::kSkipSave: saved.push_back(x); break;
      case KernelKind::kSkipAdd:
        if (saved.empty()) fail(ErrorKind::kInvariant, "skip-add without a saved activation");
        x = ops::add(x, saved.back());
        saved.pop_back();
        break;
      default: fail(ErrorKind::kInvariant, "unexpected kernel in plan");
    }
  }
  return x;
}

Tensor run(const ExecutionPlan& p, const Tensor& input, KernelCounters* counters) {
  return p.run(input, counters);
}

// ------------------------------------------------------ standalone kernels ---

Tensor dense_layer(const WeightStore& store, const Shape& shape, std::span<const float> bias,
                   const Tensor& input, bool force_dense, KernelCounters* counters) {
  if (shape.size() != 2) fail(ErrorKind::kShape, "dense layer shape must be [inputs, outputs]");
  const DenseOperand op = DenseOperand::prepare(store, shape[0], shape[1], bias, force_dense);
  return run_dense_step(op, input, counters);
}

namespace {

void require_store(const WeightStore& store, StoreTag tag, bool quantized_values,
                   const char* kernel) {
  bool ok = store.tag() == tag;
  if (ok && tag == StoreTag::kSparseBitmap) {
    const bool q = store.get_if<SparseBitmap>()->values.encoding() == ValueEncoding::kI8;
    ok = q == quantized_values;
  }
  if (!ok) {
    fail(ErrorKind::kConfig, std::string(kernel) + " cannot run a " + to_string(store.tag()) +
                                 " store");
  }
}

}  // namespace

Tensor sparse_dense_matvec(const WeightStore& store, const Shape& shape,
                           std::span<const float> bias, const Tensor& input,
                           KernelCounters* counters) {
  require_store(store, StoreTag::kSparseBitmap, false, "sparse kernel");
  return dense_layer(store, shape, bias, input, false, counters);
}

Tensor dynamic_quant_matvec(const WeightStore& store, const Shape& shape,
                            std::span<const float> bias, const Tensor& input,
                            KernelCounters* counters) {
  require_store(store, StoreTag::kQuantizedI8, false, "quantized kernel");
  return dense_layer(store, shape, bias, input, false, counters);
}

Tensor sparse_quant_matvec(const WeightStore& store, const Shape& shape,
                           std::span<const float> bias, const Tensor& input,
                           KernelCounters* counters) {
  require_store(store, StoreTag::kSparseBitmap, true, "sparse-quantized kernel");
  return dense_layer(store, shape, bias, input, false, counters);
}

Tensor clustered_gather_matvec(const WeightStore& store, const Shape& shape,
                               std::span<const float> bias, const Tensor& input,
                               KernelCounters* counters) {
  require_store(store, StoreTag::kClustered, false, "gather kernel");
  return dense_layer(store, shape, bias, input, false, counters);
}

}  // namespace csic
