#include "csic/model.hpp"

#include <cmath>

#include "csic/ops.hpp"
#include "csic/rng.hpp"

namespace csic {

const char* to_string(LayerKind kind) noexcept {
  switch (kind) {
    case LayerKind::kConv2d: return "conv2d";
    case LayerKind::kBatchNorm: return "batch_norm";
    case LayerKind::kLeakyRelu: return "leaky_relu";
    case LayerKind::kSigmoid: return "sigmoid";
    case LayerKind::kFlatten: return "flatten";
    case LayerKind::kDense: return "dense";
    case LayerKind::kReshape: return "reshape";
    case LayerKind::kSkipSave: return "skip_save";
    case LayerKind::kSkipAdd: return "skip_add";
  }
  return "unknown";
}

int Layer::output_width() const {
  if (kind == LayerKind::kConv2d) return weight_shape.at(0);
  if (kind == LayerKind::kDense) return weight_shape.at(1);
  return 0;
}

std::size_t Layer::parameter_count() const noexcept {
  if (has_weights()) return shape_numel(weight_shape) + bias.size();
  if (kind == LayerKind::kBatchNorm) return gamma.size() + beta.size();
  return 0;
}

int ModelSpec::codeword_size() const {
  return static_cast<int>(std::lround(gamma * feedback_size()));
}

void ModelSpec::validate() const {
  if (planes <= 0 || rows <= 0 || antennas <= 0) {
    fail(ErrorKind::kConfig, "model dims must be positive, got (" + std::to_string(planes) + "," +
                                 std::to_string(rows) + "," + std::to_string(antennas) + ")");
  }
  if (!(gamma > 0.0 && gamma <= 1.0)) {
    fail(ErrorKind::kConfig, "compression ratio must lie in (0,1], got " + std::to_string(gamma));
  }
  if (codeword_size() < 1) {
    fail(ErrorKind::kConfig, "compression ratio " + std::to_string(gamma) +
                                 " rounds to an empty codeword for N=" +
                                 std::to_string(feedback_size()));
  }
  if (!(leaky_slope >= 0.0f && leaky_slope < 1.0f)) {
    fail(ErrorKind::kConfig, "leaky relu slope must lie in [0,1)");
  }
}

std::size_t Model::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.parameter_count();
  return n;
}

std::vector<std::size_t> Model::dense_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].kind == LayerKind::kDense) out.push_back(i);
  }
  return out;
}

std::vector<std::size_t> Model::weight_layers() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].has_weights()) out.push_back(i);
  }
  return out;
}

void Model::validate() const {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + ")";
    if (l.has_weights()) {
      if (l.weights.element_count() != shape_numel(l.weight_shape)) {
        fail(ErrorKind::kInvariant, where + ": weight store holds " +
                                        std::to_string(l.weights.element_count()) +
                                        " elements, shape " + shape_string(l.weight_shape) +
                                        " needs " + std::to_string(shape_numel(l.weight_shape)));
      }
      if (l.bias.size() != static_cast<std::size_t>(l.output_width())) {
        fail(ErrorKind::kInvariant, where + ": bias length mismatch");
      }
      l.weights.validate();
    }
    if (l.kind == LayerKind::kBatchNorm) {
      const std::size_t c = l.gamma.size();
      if (c == 0 || l.beta.size() != c || l.running_mean.size() != c || l.running_var.size() != c) {
        fail(ErrorKind::kInvariant, where + ": inconsistent per-channel parameter lengths");
      }
    }
  }
  if (encoder_layers == 0 || encoder_layers > layers.size()) {
    fail(ErrorKind::kInvariant, "encoder boundary out of range");
  }
}

namespace {

class Builder {
 public:
  Builder(Model& m, std::uint64_t seed) : model_(m), rng_(seed) {}

  void conv(int channels, int filters) {
    Layer l;
    l.kind = LayerKind::kConv2d;
    l.weight_shape = {filters, channels, 3, 3};
    l.weights = WeightStore::dense(init_weights(shape_numel(l.weight_shape), channels * 9));
    l.bias.assign(filters, 0.0f);
    model_.layers.push_back(std::move(l));
  }

  void dense(int inputs, int outputs) {
    Layer l;
    l.kind = LayerKind::kDense;
    l.weight_shape = {inputs, outputs};
    l.weights = WeightStore::dense(init_weights(shape_numel(l.weight_shape), inputs));
    l.bias.assign(outputs, 0.0f);
    model_.layers.push_back(std::move(l));
  }

  void batch_norm(int channels) {
    Layer l;
    l.kind = LayerKind::kBatchNorm;
    l.gamma.assign(channels, 1.0f);
    l.beta.assign(channels, 0.0f);
    l.running_mean.assign(channels, 0.0f);
    l.running_var.assign(channels, 1.0f);
    model_.layers.push_back(std::move(l));
  }

  void leaky_relu(float slope) {
    Layer l;
    l.kind = LayerKind::kLeakyRelu;
    l.slope = slope;
    model_.layers.push_back(std::move(l));
  }

  void simple(LayerKind kind) {
    Layer l;
    l.kind = kind;
    model_.layers.push_back(std::move(l));
  }

  void reshape(Shape target) {
    Layer l;
    l.kind = LayerKind::kReshape;
    l.target_shape = std::move(target);
    model_.layers.push_back(std::move(l));
  }

 private:
  std::vector<float> init_weights(std::size_t count, int fan_in) {
    const double limit = std::sqrt(6.0 / fan_in);
    std::vector<float> w(count);
    for (auto& v : w) v = static_cast<float>(rng_.uniform(-limit, limit));
    return w;
  }

  Model& model_;
  Rng rng_;
};

}  // namespace

Model build_model(const ModelSpec& spec) {
  spec.validate();
  Model m;
  m.spec = spec;
  const int n = spec.feedback_size();
  const int code = spec.codeword_size();
  const float slope = spec.leaky_slope;
  Builder b(m, spec.seed);

  b.conv(spec.planes, 2);
  b.batch_norm(2);
  b.leaky_relu(slope);
  b.simple(LayerKind::kFlatten);
  b.dense(n, code);
  m.encoder_layers = m.layers.size();

  b.dense(code, n);
  b.reshape(spec.sample_shape());
  for (int block = 0; block < 2; ++block) {
    b.simple(LayerKind::kSkipSave);
    b.conv(spec.planes, 8);
    b.batch_norm(8);
    b.leaky_relu(slope);
    b.conv(8, 16);
    b.batch_norm(16);
    b.leaky_relu(slope);
    b.conv(16, spec.planes);
    b.batch_norm(spec.planes);
    b.leaky_relu(slope);
    b.simple(LayerKind::kSkipAdd);
  }
  b.conv(spec.planes, spec.planes);
  b.simple(LayerKind::kSigmoid);
  return m;
}

Tensor forward(const Model& model, const Tensor& input, std::size_t first, std::size_t last) {
  if (first > last || last > model.layers.size()) {
    fail(ErrorKind::kConfig, "forward: layer range out of bounds");
  }
  Tensor x = input;
  std::vector<Tensor> saved;
  for (std::size_t i = first; i < last; ++i) {
    const Layer& l = model.layers[i];
    switch (l.kind) {
      case LayerKind::kConv2d:
        x = ops::conv2d(x, Tensor(l.weight_shape, l.weights.decode()),
                        Tensor(Shape{l.output_width()}, l.bias));
        break;
      case LayerKind::kDense:
        x = ops::dense(x, Tensor(l.weight_shape, l.weights.decode()),
                       Tensor(Shape{l.output_width()}, l.bias));
        break;
      case LayerKind::kBatchNorm:
        x = ops::batch_norm_infer<float>(x, l.gamma, l.beta, l.running_mean, l.running_var);
        break;
      case LayerKind::kLeakyRelu: x = ops::leaky_relu(x, l.slope); break;
      case LayerKind::kSigmoid: x = ops::sigmoid(x); break;
      case LayerKind::kFlatten: {
        const int batch = x.dim(0);
        x = x.reshaped(Shape{batch, static_cast<int>(x.size() / batch)});
        break;
      }
      case LayerKind::kReshape: {
        Shape s{x.dim(0)};
        s.insert(s.end(), l.target_shape.begin(), l.target_shape.end());
        x = x.reshaped(std::move(s));
        break;
      }
      case LayerKind::kSkipSave: saved.push_back(x); break;
      case LayerKind::kSkipAdd:
        if (saved.empty()) fail(ErrorKind::kInvariant, "skip-add without a saved activation");
        x = ops::add(x, saved.back());
        saved.pop_back();
        break;
    }
  }
  return x;
}

namespace {

Tensor as_batch(const Tensor& t, const Shape& per_sample, const char* what) {
  const std::size_t per = shape_numel(per_sample);
  Shape full{0};
  full.insert(full.end(), per_sample.begin(), per_sample.end());
  if (t.shape() == per_sample) {
    full[0] = 1;
    return t.reshaped(full);
  }
  const bool ok = t.rank() == per_sample.size() + 1 &&
                  Shape(t.shape().begin() + 1, t.shape().end()) == per_sample;
  if (!ok || per == 0) {
    fail(ErrorKind::kShape, std::string(what) + ": expected " + shape_string(per_sample) +
                                " per sample, got " + shape_string(t.shape()));
  }
  return t;
}

}  // namespace

Tensor encode(const Model& model, const Tensor& samples) {
  return forward(model, as_batch(samples, model.spec.sample_shape(), "encode"), 0,
                 model.encoder_layers);
}

Tensor decode(const Model& model, const Tensor& codewords) {
  return forward(model, as_batch(codewords, Shape{model.spec.codeword_size()}, "decode"),
                 model.encoder_layers, model.layers.size());
}

Tensor reconstruct(const Model& model, const Tensor& samples) {
  return decode(model, encode(model, samples));
}

}  // namespace csic
