#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "csic/channel.hpp"
#include "csic/model.hpp"
#include "csic/training.hpp"

using namespace csic;
using csic::test::random_tensor;

namespace {

ModelSpec spec_for(int rows, int antennas, double gamma, std::uint64_t seed = 1) {
  ModelSpec s;
  s.rows = rows;
  s.antennas = antennas;
  s.gamma = gamma;
  s.seed = seed;
  return s;
}

Dataset indoor_data(std::size_t count, std::uint64_t seed) {
  const ScenarioConfig c = ScenarioConfig::preset(Environment::kIndoor, Profile::kDesk, seed);
  std::vector<ComplexMatrix> angular;
  for (const auto& h : generate(c, count)) angular.push_back(to_angular_delay(h));
  return build_dataset(angular, c.truncated_rows);
}

Tensor take(const Tensor& x, int b) {
  const std::size_t n = x.size() / x.dim(0);
  Tensor out(Shape{1, x.dim(1), x.dim(2), x.dim(3)});
  std::copy_n(x.data() + b * n, n, out.data());
  return out;
}

}  // namespace

TEST_CASE("codeword length follows the compression ratio") {
  CHECK(spec_for(32, 32, 1.0 / 4).codeword_size() == 512);
  CHECK(spec_for(32, 32, 1.0 / 64).codeword_size() == 32);
  CHECK(spec_for(16, 16, 1.0 / 4).codeword_size() == 128);
  CHECK(spec_for(16, 16, 1.0 / 64).codeword_size() == 8);
  CHECK_THROWS_AS(spec_for(16, 16, 0.0).validate(), Error);
  CHECK_THROWS_AS(spec_for(16, 16, 1.5).validate(), Error);
  CHECK_THROWS_AS(spec_for(2, 2, 0.01).validate(), Error);
  CHECK_THROWS_AS(spec_for(0, 16, 0.25).validate(), Error);
}

TEST_CASE("parameter count equals the closed-form sum over the layer list") {
  for (const auto [rows, ants, gamma] : {std::tuple{16, 16, 0.25}, {32, 32, 1.0 / 16}, {8, 4, 0.5}}) {
    const Model m = build_model(spec_for(rows, ants, gamma));
    const std::size_t n = 2 * rows * ants, mm = m.spec.codeword_size();
    const auto conv = [](std::size_t in, std::size_t out) { return out * in * 9 + out; };
    const std::size_t head = conv(2, 2) + 2 * 2;
    const std::size_t block = conv(2, 8) + 2 * 8 + conv(8, 16) + 2 * 16 + conv(16, 2) + 2 * 2;
    const std::size_t dense = 2 * n * mm + n + mm;
    CHECK(m.parameter_count() == head + dense + 2 * block + conv(2, 2));
    CHECK(m.dense_layers().size() == 2);
    const auto& enc = m.layers[m.dense_layers()[0]];
    const auto& dec = m.layers[m.dense_layers()[1]];
    CHECK(enc.weight_shape == Shape{static_cast<int>(n), static_cast<int>(mm)});
    CHECK(dec.weight_shape == Shape{static_cast<int>(mm), static_cast<int>(n)});
  }
}

TEST_CASE("layer list follows the encoder/decoder structure") {
  const Model m = build_model(spec_for(16, 16, 0.25));
  using K = LayerKind;
  const std::vector<K> expected{
      K::kConv2d,   K::kBatchNorm, K::kLeakyRelu, K::kFlatten, K::kDense,     K::kDense,
      K::kReshape,  K::kSkipSave,  K::kConv2d,    K::kBatchNorm, K::kLeakyRelu, K::kConv2d,
      K::kBatchNorm, K::kLeakyRelu, K::kConv2d,   K::kBatchNorm, K::kLeakyRelu, K::kSkipAdd,
      K::kSkipSave, K::kConv2d,    K::kBatchNorm, K::kLeakyRelu, K::kConv2d,   K::kBatchNorm,
      K::kLeakyRelu, K::kConv2d,   K::kBatchNorm, K::kLeakyRelu, K::kSkipAdd,  K::kConv2d,
      K::kSigmoid};
  REQUIRE(m.layers.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) CHECK(m.layers[i].kind == expected[i]);
  CHECK(m.encoder_layers == 5);
  std::vector<int> widths;
  for (const auto& l : m.layers)
    if (l.kind == K::kConv2d) widths.push_back(l.output_width());
  CHECK(widths == std::vector<int>{2, 8, 16, 2, 8, 16, 2, 2});
  CHECK_NOTHROW(m.validate());
}

TEST_CASE("initial weights are fan-in scaled uniform and seed-determined") {
  const Model a = build_model(spec_for(16, 16, 0.25, 3));
  const Model b = build_model(spec_for(16, 16, 0.25, 3));
  const Model c = build_model(spec_for(16, 16, 0.25, 4));
  for (std::size_t i : a.weight_layers()) {
    const auto wa = a.layers[i].weights.decode();
    CHECK(wa == b.layers[i].weights.decode());
    CHECK(wa != c.layers[i].weights.decode());
    const auto& shape = a.layers[i].weight_shape;
    const double fan_in = a.layers[i].kind == LayerKind::kDense ? shape[0] : shape[1] * 9.0;
    const double limit = std::sqrt(6.0 / fan_in);
    for (float w : wa) CHECK(std::abs(w) <= limit);
  }
}

TEST_CASE("encode and decode") {
  const Model m = build_model(spec_for(16, 16, 1.0 / 16));
  Rng rng(5);
  const Tensor x = random_tensor({4, 2, 16, 16}, rng, 0.0, 1.0);

  SUBCASE("shapes and range") {
    const Tensor s = encode(m, x);
    CHECK(s.shape() == Shape{4, 32});
    const Tensor y = decode(m, s);
    CHECK(y.shape() == Shape{4, 2, 16, 16});
    for (float v : y.values()) {
      CHECK(v > 0.0f);
      CHECK(v < 1.0f);
    }
    CHECK(reconstruct(m, x) == y);
  }
  SUBCASE("pure and batch independent") {
    const Tensor s = encode(m, x);
    CHECK(encode(m, x) == s);
    for (int b = 0; b < 4; ++b) {
      const Tensor one = encode(m, take(x, b));
      for (int j = 0; j < 32; ++j) CHECK(one[j] == doctest::Approx(s.at({b, j})).epsilon(1e-6));
    }
    const Tensor single = encode(m, take(x, 0).reshaped(Shape{2, 16, 16}));
    CHECK(single.size() == 32);
  }
  SUBCASE("dimension mismatches are rejected") {
    CHECK_THROWS_AS(encode(m, Tensor(Shape{1, 2, 8, 16})), Error);
    CHECK_THROWS_AS(decode(m, Tensor(Shape{1, 31})), Error);
  }
}

TEST_CASE("zero input encodes to the bias-propagated constant") {
  Model m = build_model(spec_for(8, 4, 0.5));
  Rng rng(8);
  // Non-trivial biases and statistics so every stage contributes.
  for (auto& l : m.layers) {
    for (auto& v : l.bias) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : l.beta) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : l.gamma) v = static_cast<float>(rng.uniform(0.5, 1.5));
    for (auto& v : l.running_mean) v = static_cast<float>(rng.uniform(-1, 1));
    for (auto& v : l.running_var) v = static_cast<float>(rng.uniform(0.5, 2));
  }
  const Layer& conv = m.layers[0];
  const Layer& bn = m.layers[1];
  const Layer& dense = m.layers[4];
  const int plane = 8 * 4, mm = m.spec.codeword_size();
  std::vector<double> act(2);
  for (int c = 0; c < 2; ++c) {
    const double z = (conv.bias[c] - bn.running_mean[c]) / std::sqrt(bn.running_var[c] + 1e-3) * bn.gamma[c] + bn.beta[c];
    act[c] = z >= 0 ? z : 0.3 * z;
  }
  const auto w = dense.weights.decode();
  const Tensor s = encode(m, Tensor(Shape{1, 2, 8, 4}));
  for (int j = 0; j < mm; ++j) {
    double expected = dense.bias[j];
    for (int n = 0; n < 2 * plane; ++n) expected += act[n / plane] * w[static_cast<std::size_t>(n) * mm + j];
    CHECK(s[j] == doctest::Approx(expected).epsilon(1e-5));
  }
}

TEST_CASE("training") {
  const Dataset data = indoor_data(96, 2);

  SUBCASE("zero learning rate leaves parameters unchanged") {
    Model m = build_model(spec_for(16, 16, 0.25));
    const auto before = gather_parameters<float>(m);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.batch_size = 32;
    cfg.learning_rate = 0.0;
    train(m, data, cfg);
    const auto after = gather_parameters<float>(m);
    for (std::size_t i = 0; i < before.tensors.size(); ++i) CHECK(before.tensors[i] == after.tensors[i]);
    CHECK(m.epochs_seen == 1);
    CHECK(m.loss_history.size() == 1);
  }
  SUBCASE("fixed seed gives bitwise-identical weights") {
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    Model a = build_model(spec_for(16, 16, 0.25)), b = a;
    train(a, data, cfg);
    train(b, data, cfg);
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
      CHECK(a.layers[i].weights == b.layers[i].weights);
      CHECK(a.layers[i].running_mean == b.layers[i].running_mean);
    }
    CHECK(a.loss_history == b.loss_history);
  }
  SUBCASE("loss decreases over training") {
    Model m = build_model(spec_for(16, 16, 0.25));
    TrainConfig cfg;
    cfg.epochs = 12;
    cfg.batch_size = 16;
    const TrainResult r = train(m, data, cfg);
    REQUIRE(r.loss_history.size() == 12);
    CHECK(r.loss_history.back() < r.loss_history.front());
  }
  SUBCASE("bad inputs are rejected") {
    Model m = build_model(spec_for(16, 16, 0.25));
    TrainConfig cfg;
    cfg.batch_size = 0;
    CHECK_THROWS_AS(train(m, data, cfg), Error);
    Model other = build_model(spec_for(8, 16, 0.25));
    CHECK_THROWS_AS(train(other, data, TrainConfig{}), Error);
  }
}

TEST_CASE("validate catches a store that disagrees with its shape") {
  Model m = build_model(spec_for(16, 16, 0.25));
  const std::size_t d = m.dense_layers()[0];
  m.layers[d].weights = WeightStore::dense(std::vector<float>(10));
  try {
    m.validate();
    FAIL("expected an invariant error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::kInvariant);
  }
}
