#include "csic/training.hpp"

#include <numeric>

#include "csic/adam.hpp"
#include "csic/rng.hpp"
#include "csic/tape.hpp"

namespace csic {

std::vector<ParameterSlot> parameter_slots(const Model& model) {
  std::vector<ParameterSlot> slots;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    const Layer& l = model.layers[i];
    if (l.has_weights()) {
      slots.push_back({i, ParameterRole::kWeight});
      slots.push_back({i, ParameterRole::kBias});
    } else if (l.kind == LayerKind::kBatchNorm) {
      slots.push_back({i, ParameterRole::kGamma});
      slots.push_back({i, ParameterRole::kBeta});
    }
  }
  return slots;
}

namespace {

template <typename T>
BasicTensor<T> make_tensor(Shape shape, const std::vector<float>& values) {
  return BasicTensor<T>(std::move(shape), std::vector<T>(values.begin(), values.end()));
}

template <typename T>
BasicTensor<T> slot_value(const Layer& l, ParameterRole role) {
  switch (role) {
    case ParameterRole::kWeight: return make_tensor<T>(l.weight_shape, l.weights.decode());
    case ParameterRole::kBias: return make_tensor<T>(Shape{l.output_width()}, l.bias);
    case ParameterRole::kGamma: return make_tensor<T>(Shape{static_cast<int>(l.gamma.size())}, l.gamma);
    case ParameterRole::kBeta: return make_tensor<T>(Shape{static_cast<int>(l.beta.size())}, l.beta);
  }
  return {};
}

}  // namespace

template <typename T>
ParameterSet<T> gather_parameters(const Model& model) {
  ParameterSet<T> set;
  for (const auto& slot : parameter_slots(model)) {
    set.tensors.push_back(slot_value<T>(model.layers[slot.layer], slot.role));
  }
  return set;
}

template <typename T>
T reconstruction_loss(const Model& model, const ParameterSet<T>& params,
                      const BasicTensor<T>& batch, bool training, ParameterSet<T>* grads,
                      std::vector<ops::BatchNormCache<T>>* stats) {
  Shape expected{0};
  const Shape per = model.spec.sample_shape();
  expected.insert(expected.end(), per.begin(), per.end());
  if (batch.rank() != expected.size() || !std::equal(per.begin(), per.end(), batch.shape().begin() + 1)) {
    fail(ErrorKind::kShape, "training batch " + shape_string(batch.shape()) +
                                " does not match model input " + shape_string(per));
  }
  const auto slots = parameter_slots(model);
  if (params.tensors.size() != slots.size()) {
    fail(ErrorKind::kShape, "parameter set does not match model layout");
  }

  Tape<T> tape;
  std::vector<Var> vars;
  vars.reserve(slots.size());
  for (const auto& p : params.tensors) {
    vars.push_back(grads ? tape.parameter(p) : tape.constant(p));
  }
  if (stats) stats->clear();

  const Var input = tape.constant(batch);
  Var x = input;
  std::vector<Var> saved;
  std::size_t next = 0;
  for (const Layer& l : model.layers) {
    switch (l.kind) {
      case LayerKind::kConv2d: {
        const Var w = vars[next++], b = vars[next++];
        x = tape.conv2d(x, w, b);
        break;
      }
      case LayerKind::kDense: {
        const Var w = vars[next++], b = vars[next++];
        x = tape.dense(x, w, b);
        break;
      }
      case LayerKind::kBatchNorm: {
        const Var g = vars[next++], b = vars[next++];
        if (training) {
          ops::BatchNormCache<T> cache;
          x = tape.batch_norm_train(x, g, b, stats ? &cache : nullptr);
          if (stats) stats->push_back(std::move(cache));
        } else {
          x = tape.batch_norm_infer(x, g, b, std::vector<T>(l.running_mean.begin(), l.running_mean.end()),
                                    std::vector<T>(l.running_var.begin(), l.running_var.end()));
        }
        break;
      }
      case LayerKind::kLeakyRelu: x = tape.leaky_relu(x, static_cast<T>(l.slope)); break;
      case LayerKind::kSigmoid: x = tape.sigmoid(x); break;
      case LayerKind::kFlatten: {
        const auto& v = tape.value(x);
        x = tape.reshape(x, Shape{v.dim(0), static_cast<int>(v.size() / v.dim(0))});
        break;
      }
      case LayerKind::kReshape: {
        Shape s{tape.value(x).dim(0)};
        s.insert(s.end(), l.target_shape.begin(), l.target_shape.end());
        x = tape.reshape(x, std::move(s));
        break;
      }
      case LayerKind::kSkipSave: saved.push_back(x); break;
      case LayerKind::kSkipAdd:
        if (saved.empty()) fail(ErrorKind::kInvariant, "skip-add without a saved activation");
        x = tape.add(x, saved.back());
        saved.pop_back();
        break;
    }
  }

  const Var loss = tape.mse(x, input);
  const T value = tape.value(loss)[0];
  if (grads) {
    tape.backward(loss);
    grads->tensors.clear();
    for (const Var v : vars) grads->tensors.push_back(tape.grad(v));
  }
  return value;
}

template ParameterSet<float> gather_parameters<float>(const Model&);
template ParameterSet<double> gather_parameters<double>(const Model&);
template float reconstruction_loss<float>(const Model&, const ParameterSet<float>&, const Tensor&,
                                          bool, ParameterSet<float>*,
                                          std::vector<ops::BatchNormCache<float>>*);
template double reconstruction_loss<double>(const Model&, const ParameterSet<double>&,
                                            const BasicTensor<double>&, bool,
                                            ParameterSet<double>*,
                                            std::vector<ops::BatchNormCache<double>>*);

namespace {

// How a weight tensor's gradient is constrained during training.
struct Constraint {
  std::vector<std::uint8_t> keep;         // sparse: 1 where the weight is trainable
  std::vector<std::uint32_t> assignment;  // clustered: centroid id per weight
  std::vector<std::uint32_t> members;     // clustered: member count per centroid
  bool clustered() const { return !assignment.empty(); }
};

Constraint constraint_for(const Layer& l, std::size_t index) {
  Constraint c;
  const std::string where = "layer " + std::to_string(index) + " (" + to_string(l.kind) + ")";
  switch (l.weights.tag()) {
    case StoreTag::kDenseF32: break;
    case StoreTag::kSparseBitmap: {
      const auto& s = *l.weights.get_if<SparseBitmap>();
      if (s.values.encoding() != ValueEncoding::kF32) {
        fail(ErrorKind::kConfig, where + ": sparse values are quantized and cannot be trained");
      }
      c.keep.resize(s.mask.size());
      for (std::size_t i = 0; i < c.keep.size(); ++i) c.keep[i] = s.mask.test(i) ? 1 : 0;
      break;
    }
    case StoreTag::kClustered: {
      const auto& s = *l.weights.get_if<Clustered>();
      if (s.centroids.encoding() != ValueEncoding::kF32) {
        fail(ErrorKind::kConfig, where + ": centroids are quantized and cannot be trained");
      }
      c.assignment = s.indices.unpack();
      c.members.assign(s.k, 0);
      for (auto a : c.assignment) ++c.members[a];
      break;
    }
    default:
      fail(ErrorKind::kConfig, where + ": " + to_string(l.weights.tag()) +
                                   " weights cannot be trained; train before quantizing");
  }
  return c;
}

WeightStore rebuild_store(const WeightStore& old, const Tensor& weights, const Tensor* centroids) {
  switch (old.tag()) {
    case StoreTag::kSparseBitmap: {
      const auto& s = *old.get_if<SparseBitmap>();
      std::vector<float> kept;
      kept.reserve(s.values.size());
      for (std::size_t i = 0; i < s.mask.size(); ++i) {
        if (s.mask.test(i)) kept.push_back(weights[i]);
      }
      return WeightStore(SparseBitmap{s.mask, ValueArray(std::move(kept))});
    }
    case StoreTag::kClustered: {
      const auto& s = *old.get_if<Clustered>();
      return WeightStore(Clustered{s.k, s.indices, ValueArray(centroids->storage())});
    }
    default:
      return WeightStore::dense(weights.storage());
  }
}

}  // namespace

TrainResult train(Model& model, const Dataset& data, const TrainConfig& config) {
  if (data.count() == 0) fail(ErrorKind::kConfig, "cannot train on an empty dataset");
  if (config.epochs < 1 || config.batch_size < 1 || !(config.learning_rate >= 0.0)) {
    fail(ErrorKind::kConfig, "training needs epochs >= 1, batch size >= 1 and a non-negative learning rate");
  }
  if (data.rows != model.spec.rows || data.antennas != model.spec.antennas) {
    fail(ErrorKind::kShape, "dataset dims (" + std::to_string(data.rows) + "x" +
                                std::to_string(data.antennas) + ") do not match the model (" +
                                std::to_string(model.spec.rows) + "x" +
                                std::to_string(model.spec.antennas) + ")");
  }

  const auto slots = parameter_slots(model);
  ParameterSet<float> params = gather_parameters<float>(model);

  // Optimizer operates on `trainable`; clustered weights train their centroid table.
  std::vector<Constraint> constraints(slots.size());
  std::vector<Tensor> trainable(slots.size());
  for (std::size_t s = 0; s < slots.size(); ++s) {
    const Layer& l = model.layers[slots[s].layer];
    if (slots[s].role == ParameterRole::kWeight) {
      constraints[s] = constraint_for(l, slots[s].layer);
      if (constraints[s].clustered()) {
        const auto table = l.weights.get_if<Clustered>()->centroids.decode();
        trainable[s] = Tensor(Shape{static_cast<int>(table.size())}, table);
        continue;
      }
    }
    trainable[s] = params.tensors[s];
  }

  std::vector<const Tensor*> const_ptrs;
  std::vector<Tensor*> ptrs;
  for (auto& t : trainable) {
    const_ptrs.push_back(&t);
    ptrs.push_back(&t);
  }
  OptimizerState opt(AdamConfig{config.learning_rate}, const_ptrs);

  std::vector<std::size_t> bn_layers;
  for (std::size_t i = 0; i < model.layers.size(); ++i) {
    if (model.layers[i].kind == LayerKind::kBatchNorm) bn_layers.push_back(i);
  }

  const std::size_t n = data.count();
  std::vector<std::size_t> order(n);
  TrainResult result;
  ParameterSet<float> grads;
  std::vector<ops::BatchNormCache<float>> stats;
  std::vector<Tensor> step_grads(slots.size());
  const float momentum = static_cast<float>(ops::kBatchNormMomentum);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(config.seed, static_cast<std::uint64_t>(model.epochs_seen + epoch)));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < n; first += config.batch_size) {
      const std::size_t count = std::min<std::size_t>(config.batch_size, n - first);
      const Tensor batch = data.batch(std::span(order).subspan(first, count));
      const float loss = reconstruction_loss<float>(model, params, batch, true, &grads, &stats);
      loss_sum += static_cast<double>(loss) * count;

      for (std::size_t s = 0; s < slots.size(); ++s) {
        Tensor& g = grads.tensors[s];
        const Constraint& c = constraints[s];
        if (!c.keep.empty()) {
          for (std::size_t i = 0; i < g.size(); ++i) {
            if (!c.keep[i]) g[i] = 0.0f;
          }
          step_grads[s] = std::move(g);
        } else if (c.clustered()) {
          Tensor cg(trainable[s].shape());
          for (std::size_t i = 0; i < g.size(); ++i) cg[c.assignment[i]] += g[i];
          for (std::size_t j = 0; j < cg.size(); ++j) {
            if (c.members[j]) cg[j] /= static_cast<float>(c.members[j]);
          }
          step_grads[s] = std::move(cg);
        } else {
          step_grads[s] = std::move(g);
        }
      }
      adam_step(opt, ptrs, step_grads);

      for (std::size_t s = 0; s < slots.size(); ++s) {
        const Constraint& c = constraints[s];
        if (c.clustered()) {
          Tensor& w = params.tensors[s];
          for (std::size_t i = 0; i < w.size(); ++i) w[i] = trainable[s][c.assignment[i]];
        } else {
          params.tensors[s] = trainable[s];
        }
      }
      for (std::size_t b = 0; b < bn_layers.size(); ++b) {
        Layer& l = model.layers[bn_layers[b]];
        for (std::size_t ch = 0; ch < l.running_mean.size(); ++ch) {
          l.running_mean[ch] = momentum * l.running_mean[ch] + (1.0f - momentum) * stats[b].mean[ch];
          l.running_var[ch] = momentum * l.running_var[ch] + (1.0f - momentum) * stats[b].var[ch];
        }
      }
    }
    const double epoch_loss = loss_sum / static_cast<double>(n);
    result.loss_history.push_back(static_cast<float>(epoch_loss));
    if (config.on_epoch) config.on_epoch(model.epochs_seen + epoch + 1, epoch_loss);
  }

  for (std::size_t s = 0; s < slots.size(); ++s) {
    Layer& l = model.layers[slots[s].layer];
    const Tensor& p = params.tensors[s];
    switch (slots[s].role) {
      case ParameterRole::kWeight:
        l.weights = rebuild_store(l.weights, p, constraints[s].clustered() ? &trainable[s] : nullptr);
        break;
      case ParameterRole::kBias: l.bias = p.storage(); break;
      case ParameterRole::kGamma: l.gamma = p.storage(); break;
      case ParameterRole::kBeta: l.beta = p.storage(); break;
    }
  }
  model.epochs_seen += config.epochs;
  model.loss_history.insert(model.loss_history.end(), result.loss_history.begin(),
                            result.loss_history.end());
  return result;
}

}  // namespace csic
