#include "csic/model_io.hpp"

#include <cmath>

#include "csic/byte_io.hpp"

namespace csic {

namespace {

constexpr std::size_t kHeaderBytes = 4 + 2 + 30 + 4 + 2 + 2;

void write_dims(ByteWriter& w, const Shape& dims) {
  w.u8(static_cast<std::uint8_t>(dims.size()));
  for (int d : dims) w.u32(static_cast<std::uint32_t>(d));
}

void write_floats(ByteWriter& w, std::span<const float> v) {
  for (float x : v) w.f32(x);
}

void write_values(ByteWriter& w, const ValueArray& values) {
  switch (values.encoding()) {
    case ValueEncoding::kF32:
      write_floats(w, std::get<std::vector<float>>(values.storage()));
      break;
    case ValueEncoding::kF16:
      for (auto h : std::get<std::vector<std::uint16_t>>(values.storage())) w.u16(h);
      break;
    case ValueEncoding::kI8: {
      const auto& q = std::get<QuantizedValues>(values.storage());
      w.f32(q.scale);
      for (auto v : q.q) w.u8(static_cast<std::uint8_t>(v));
      break;
    }
  }
}

void write_store(ByteWriter& w, const WeightStore& store) {
  w.u8(static_cast<std::uint8_t>(store.tag()));
  switch (store.tag()) {
    case StoreTag::kDenseF32: write_floats(w, store.get_if<DenseF32>()->values); break;
    case StoreTag::kDenseF16:
      for (auto h : store.get_if<DenseF16>()->bits) w.u16(h);
      break;
    case StoreTag::kQuantizedI8: {
      const auto& q = *store.get_if<QuantizedI8>();
      w.f32(q.scale);
      for (auto v : q.values) w.u8(static_cast<std::uint8_t>(v));
      break;
    }
    case StoreTag::kSparseBitmap: {
      const auto& s = *store.get_if<SparseBitmap>();
      w.u8(static_cast<std::uint8_t>(s.values.encoding()));
      w.u32(static_cast<std::uint32_t>(s.values.size()));
      w.raw(s.mask.to_bytes());
      write_values(w, s.values);
      break;
    }
    case StoreTag::kClustered: {
      const auto& c = *store.get_if<Clustered>();
      w.u32(c.k);
      w.u8(static_cast<std::uint8_t>(c.centroids.encoding()));
      write_values(w, c.centroids);
      w.raw(c.indices.to_bytes());
      break;
    }
  }
}

// --------------------------------------------------------------- reading ---

Shape read_dims(ByteReader& r, const char* what) {
  const std::size_t at = r.offset();
  const int rank = r.u8();
  if (rank < 1 || rank > 4) throw FormatError(at, std::string(what) + ": bad rank " + std::to_string(rank));
  Shape dims;
  for (int i = 0; i < rank; ++i) {
    const std::size_t d_at = r.offset();
    const std::uint32_t d = r.u32();
    if (d == 0 || d > (1u << 24)) throw FormatError(d_at, std::string(what) + ": bad dimension");
    dims.push_back(static_cast<int>(d));
  }
  return dims;
}

std::vector<float> read_floats(ByteReader& r, std::size_t n) {
  r.need(4 * n);
  std::vector<float> v(n);
  for (auto& x : v) x = r.f32();
  return v;
}

float read_scale(ByteReader& r) {
  const std::size_t at = r.offset();
  const float s = r.f32();
  if (!(s > 0.0f) || !std::isfinite(s)) throw FormatError(at, "quantization scale must be positive");
  return s;
}

std::vector<std::int8_t> read_i8(ByteReader& r, std::size_t n) {
  auto raw = r.raw(n);
  std::vector<std::int8_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<std::int8_t>(raw[i]);
  return out;
}

std::vector<std::uint16_t> read_u16s(ByteReader& r, std::size_t n) {
  r.need(2 * n);
  std::vector<std::uint16_t> out(n);
  for (auto& h : out) h = r.u16();
  return out;
}

ValueArray read_values(ByteReader& r, ValueEncoding enc, std::size_t n) {
  switch (enc) {
    case ValueEncoding::kF32: return ValueArray(read_floats(r, n));
    case ValueEncoding::kF16: return ValueArray(read_u16s(r, n));
    case ValueEncoding::kI8: {
      QuantizedValues q;
      q.scale = read_scale(r);
      q.q = read_i8(r, n);
      return ValueArray(std::move(q));
    }
  }
  return {};
}

ValueEncoding read_encoding(ByteReader& r) {
  const std::size_t at = r.offset();
  const std::uint8_t e = r.u8();
  if (e > static_cast<std::uint8_t>(ValueEncoding::kI8)) {
    throw FormatError(at, "unknown value encoding " + std::to_string(e));
  }
  return static_cast<ValueEncoding>(e);
}

// Padding bits after the last used bit must be zero so parsing is an exact inverse.
void check_padding(std::span<const std::uint8_t> bytes, std::size_t used_bits, std::size_t at) {
  if (used_bits % 8 == 0 || bytes.empty()) return;
  const std::uint8_t mask = static_cast<std::uint8_t>(0xFFu << (used_bits % 8));
  if (bytes.back() & mask) throw FormatError(at + bytes.size() - 1, "nonzero padding bits");
}

WeightStore read_store(ByteReader& r, std::size_t count) {
  const std::size_t tag_at = r.offset();
  const std::uint8_t tag = r.u8();
  switch (static_cast<StoreTag>(tag)) {
    case StoreTag::kDenseF32: return WeightStore(DenseF32{read_floats(r, count)});
    case StoreTag::kDenseF16: return WeightStore(DenseF16{read_u16s(r, count)});
    case StoreTag::kQuantizedI8: {
      const float scale = read_scale(r);
      return WeightStore(QuantizedI8{read_i8(r, count), scale});
    }
    case StoreTag::kSparseBitmap: {
      const ValueEncoding enc = read_encoding(r);
      const std::size_t nnz_at = r.offset();
      const std::uint32_t nnz = r.u32();
      if (nnz > count) throw FormatError(nnz_at, "nonzero count exceeds weight count");
      const std::size_t bitmap_at = r.offset();
      const auto bytes = r.raw((count + 7) / 8);
      check_padding(bytes, count, bitmap_at);
      Bitmap mask = Bitmap::from_bytes(bytes, count);
      if (mask.popcount() != nnz) {
        throw FormatError(bitmap_at, "bitmap popcount " + std::to_string(mask.popcount()) +
                                         " != nonzero count " + std::to_string(nnz));
      }
      return WeightStore(SparseBitmap{std::move(mask), read_values(r, enc, nnz)});
    }
    case StoreTag::kClustered: {
      const std::size_t k_at = r.offset();
      const std::uint32_t k = r.u32();
      if (k < 1 || k > count) throw FormatError(k_at, "cluster count out of range");
      const ValueEncoding enc = read_encoding(r);
      ValueArray centroids = read_values(r, enc, k);
      const int width = index_bit_width(k);
      const std::size_t idx_at = r.offset();
      const auto bytes = r.raw((count * width + 7) / 8);
      check_padding(bytes, count * width, idx_at);
      PackedIndices indices = PackedIndices::from_bytes(bytes, count, width);
      for (std::size_t i = 0; i < count; ++i) {
        if (indices.get(i) >= k) throw FormatError(idx_at, "cluster index >= k at weight " + std::to_string(i));
      }
      return WeightStore(Clustered{k, std::move(indices), std::move(centroids)});
    }
  }
  throw FormatError(tag_at, "unknown weight store tag " + std::to_string(tag));
}

std::size_t layer_bytes(const Layer& l) {
  std::size_t n = 1;  // kind
  switch (l.kind) {
    case LayerKind::kConv2d:
    case LayerKind::kDense:
      n += 1 + 4 * l.weight_shape.size() + 1 + l.weights.payload_bytes() + 4 * l.bias.size();
      break;
    case LayerKind::kBatchNorm: n += 4 + 16 * l.gamma.size(); break;
    case LayerKind::kLeakyRelu: n += 4; break;
    case LayerKind::kReshape: n += 1 + 4 * l.target_shape.size(); break;
    default: break;
  }
  return n;
}

}  // namespace

std::vector<std::uint8_t> serialize_model(const Model& model) {
  model.validate();
  ByteWriter w;
  w.tag("CSIM");
  w.u16(kModelFormatVersion);
  const ModelSpec& s = model.spec;
  w.u16(static_cast<std::uint16_t>(s.planes));
  w.u16(static_cast<std::uint16_t>(s.rows));
  w.u16(static_cast<std::uint16_t>(s.antennas));
  w.u32(static_cast<std::uint32_t>(s.codeword_size()));
  w.f64(s.gamma);
  w.f32(s.leaky_slope);
  w.u64(s.seed);
  w.u32(static_cast<std::uint32_t>(model.epochs_seen));
  w.u16(static_cast<std::uint16_t>(model.layers.size()));
  w.u16(static_cast<std::uint16_t>(model.encoder_layers));

  for (const Layer& l : model.layers) {
    w.u8(static_cast<std::uint8_t>(l.kind));
    switch (l.kind) {
      case LayerKind::kConv2d:
      case LayerKind::kDense:
        write_dims(w, l.weight_shape);
        write_store(w, l.weights);
        write_floats(w, l.bias);
        break;
      case LayerKind::kBatchNorm:
        w.u32(static_cast<std::uint32_t>(l.gamma.size()));
        write_floats(w, l.gamma);
        write_floats(w, l.beta);
        write_floats(w, l.running_mean);
        write_floats(w, l.running_var);
        break;
      case LayerKind::kLeakyRelu: w.f32(l.slope); break;
      case LayerKind::kReshape: write_dims(w, l.target_shape); break;
      default: break;
    }
  }
  return w.release();
}

Model parse_model(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  r.expect_magic("CSIM", "model");
  const std::size_t version_at = r.offset();
  const std::uint16_t version = r.u16();
  if (version != kModelFormatVersion) {
    throw FormatError(version_at, "unsupported model format version " + std::to_string(version) +
                                      " (this build reads version " +
                                      std::to_string(kModelFormatVersion) + ")");
  }
  Model m;
  const std::size_t spec_at = r.offset();
  m.spec.planes = r.u16();
  m.spec.rows = r.u16();
  m.spec.antennas = r.u16();
  const std::uint32_t codeword = r.u32();
  m.spec.gamma = r.f64();
  m.spec.leaky_slope = r.f32();
  m.spec.seed = r.u64();
  try {
    m.spec.validate();
  } catch (const Error& e) {
    throw FormatError(spec_at, std::string("invalid model spec: ") + e.what());
  }
  if (static_cast<int>(codeword) != m.spec.codeword_size()) {
    throw FormatError(spec_at, "codeword length disagrees with the compression ratio");
  }
  m.epochs_seen = static_cast<int>(r.u32());
  const std::size_t count_at = r.offset();
  const std::size_t layer_count = r.u16();
  m.encoder_layers = r.u16();
  if (layer_count == 0 || m.encoder_layers == 0 || m.encoder_layers > layer_count) {
    throw FormatError(count_at, "bad layer counts");
  }

  for (std::size_t i = 0; i < layer_count; ++i) {
    const std::size_t at = r.offset();
    const std::uint8_t kind = r.u8();
    if (kind > static_cast<std::uint8_t>(LayerKind::kSkipAdd)) {
      throw FormatError(at, "unknown layer kind " + std::to_string(kind));
    }
    Layer l;
    l.kind = static_cast<LayerKind>(kind);
    switch (l.kind) {
      case LayerKind::kConv2d:
      case LayerKind::kDense: {
        const std::size_t dims_at = r.offset();
        l.weight_shape = read_dims(r, "weight shape");
        const bool conv = l.kind == LayerKind::kConv2d;
        if ((conv && (l.weight_shape.size() != 4 || l.weight_shape[2] != 3 || l.weight_shape[3] != 3)) ||
            (!conv && l.weight_shape.size() != 2)) {
          throw FormatError(dims_at, "weight shape " + shape_string(l.weight_shape) +
                                         " does not fit a " + to_string(l.kind) + " layer");
        }
        l.weights = read_store(r, shape_numel(l.weight_shape));
        l.bias = read_floats(r, static_cast<std::size_t>(l.output_width()));
        break;
      }
      case LayerKind::kBatchNorm: {
        const std::size_t c_at = r.offset();
        const std::uint32_t c = r.u32();
        if (c == 0 || c > (1u << 20)) throw FormatError(c_at, "bad batch-norm channel count");
        l.gamma = read_floats(r, c);
        l.beta = read_floats(r, c);
        l.running_mean = read_floats(r, c);
        l.running_var = read_floats(r, c);
        break;
      }
      case LayerKind::kLeakyRelu: l.slope = r.f32(); break;
      case LayerKind::kReshape: l.target_shape = read_dims(r, "reshape target"); break;
      default: break;
    }
    m.layers.push_back(std::move(l));
  }
  if (r.remaining() != 0) {
    throw FormatError(r.offset(), std::to_string(r.remaining()) + " trailing bytes after the last layer");
  }
  try {
    m.validate();
  } catch (const Error& e) {
    throw FormatError(bytes.size(), std::string("inconsistent model: ") + e.what());
  }
  return m;
}

std::size_t save_model(const Model& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  write_file(path, bytes);
  return bytes.size();
}

Model load_model(const std::filesystem::path& path) { return parse_model(read_file(path)); }

std::size_t size_of(const Model& model) {
  std::size_t n = kHeaderBytes;
  for (const Layer& l : model.layers) n += layer_bytes(l);
  return n;
}

}  // namespace csic
