#include "csic/weight_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace csic {

std::uint16_t float_to_half(float value) noexcept {
  const std::uint32_t f = std::bit_cast<std::uint32_t>(value);
  const std::uint32_t sign = (f >> 16) & 0x8000u;
  const std::uint32_t exp = (f >> 23) & 0xFFu;
  std::uint32_t mant = f & 0x7FFFFFu;

  if (exp == 0xFFu) {  // inf / nan
    return static_cast<std::uint16_t>(sign | 0x7C00u | (mant ? 0x200u : 0u));
  }
  const int e = static_cast<int>(exp) - 127 + 15;
  if (e >= 0x1F) return static_cast<std::uint16_t>(sign | 0x7C00u);
  if (e <= 0) {
    if (e < -10) return static_cast<std::uint16_t>(sign);
    mant |= 0x800000u;
    const int shift = 14 - e;
    std::uint32_t half = mant >> shift;
    const std::uint32_t rem = mant & ((1u << shift) - 1u);
    const std::uint32_t halfway = 1u << (shift - 1);
    if (rem > halfway || (rem == halfway && (half & 1u))) ++half;
    return static_cast<std::uint16_t>(sign | half);
  }
  std::uint32_t half = (static_cast<std::uint32_t>(e) << 10) | (mant >> 13);
  const std::uint32_t rem = mant & 0x1FFFu;
  if (rem > 0x1000u || (rem == 0x1000u && (half & 1u))) ++half;  // may carry into exponent
  return static_cast<std::uint16_t>(sign | half);
}

float half_to_float(std::uint16_t bits) noexcept {
  const std::uint32_t sign = static_cast<std::uint32_t>(bits & 0x8000u) << 16;
  std::uint32_t exp = (bits >> 10) & 0x1Fu;
  std::uint32_t mant = bits & 0x3FFu;
  std::uint32_t f;
  if (exp == 0) {
    if (mant == 0) {
      f = sign;
    } else {
      int e = -1;
      do {
        ++e;
        mant <<= 1;
      } while ((mant & 0x400u) == 0);
      f = sign | (static_cast<std::uint32_t>(127 - 15 - e) << 23) | ((mant & 0x3FFu) << 13);
    }
  } else if (exp == 0x1F) {
    f = sign | 0x7F800000u | (mant << 13);
  } else {
    f = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(f);
}

// ---------------------------------------------------------------- Bitmap ---

std::size_t Bitmap::popcount() const noexcept {
  std::size_t n = 0;
  for (auto w : words_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

std::vector<std::uint8_t> Bitmap::to_bytes() const {
  std::vector<std::uint8_t> out(byte_size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i >> 3] >> (8 * (i & 7)));
  }
  return out;
}

Bitmap Bitmap::from_bytes(std::span<const std::uint8_t> bytes, std::size_t bits) {
  Bitmap b(bits);
  for (std::size_t i = 0; i < bytes.size() && i < b.byte_size(); ++i) {
    b.words_[i >> 3] |= static_cast<std::uint64_t>(bytes[i]) << (8 * (i & 7));
  }
  if (bits % 64) b.words_.back() &= (std::uint64_t{1} << (bits % 64)) - 1;
  return b;
}

// --------------------------------------------------------- PackedIndices ---

int index_bit_width(std::uint32_t k) noexcept {
  return k <= 1 ? 0 : std::bit_width(k - 1);
}

PackedIndices::PackedIndices(std::size_t count, int bit_width)
    : count_(count), bit_width_(bit_width), words_((count * bit_width + 63) / 64 + 1, 0) {}

std::uint32_t PackedIndices::get(std::size_t i) const noexcept {
  if (bit_width_ == 0) return 0;
  const std::size_t bit = i * bit_width_;
  const std::size_t w = bit >> 6, off = bit & 63;
  std::uint64_t v = words_[w] >> off;
  if (off + bit_width_ > 64) v |= words_[w + 1] << (64 - off);
  return static_cast<std::uint32_t>(v & ((std::uint64_t{1} << bit_width_) - 1));
}

void PackedIndices::set(std::size_t i, std::uint32_t value) noexcept {
  if (bit_width_ == 0) return;
  const std::uint64_t mask = (std::uint64_t{1} << bit_width_) - 1;
  const std::uint64_t v = value & mask;
  const std::size_t bit = i * bit_width_;
  const std::size_t w = bit >> 6, off = bit & 63;
  words_[w] = (words_[w] & ~(mask << off)) | (v << off);
  if (off + bit_width_ > 64) {
    const int spill = static_cast<int>(off + bit_width_ - 64);
    const std::uint64_t hi_mask = (std::uint64_t{1} << spill) - 1;
    words_[w + 1] = (words_[w + 1] & ~hi_mask) | (v >> (64 - off));
  }
}

std::vector<std::uint32_t> PackedIndices::unpack() const {
  std::vector<std::uint32_t> out(count_);
  for (std::size_t i = 0; i < count_; ++i) out[i] = get(i);
  return out;
}

std::vector<std::uint8_t> PackedIndices::to_bytes() const {
  std::vector<std::uint8_t> out(byte_size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(words_[i >> 3] >> (8 * (i & 7)));
  }
  return out;
}

PackedIndices PackedIndices::from_bytes(std::span<const std::uint8_t> bytes, std::size_t count,
                                        int bit_width) {
  PackedIndices p(count, bit_width);
  const std::size_t n = std::min(bytes.size(), p.byte_size());
  for (std::size_t i = 0; i < n; ++i) {
    p.words_[i >> 3] |= static_cast<std::uint64_t>(bytes[i]) << (8 * (i & 7));
  }
  const std::size_t used = count * bit_width;
  if (used % 64) p.words_[used / 64] &= (std::uint64_t{1} << (used % 64)) - 1;
  return p;
}

// ----------------------------------------------------------- quantization ---

float symmetric_scale(float max_abs) noexcept {
  if (!(max_abs > 0.0f)) return 1.0f;
  const auto round_trip = [](float s) {
    const float top = static_cast<float>(static_cast<double>(s) * 127.0);
    return static_cast<float>(static_cast<double>(top) / 127.0);
  };
  return round_trip(static_cast<float>(static_cast<double>(max_abs) / 127.0));
}

QuantizedValues quantize_symmetric(std::span<const float> values) {
  float max_abs = 0.0f;
  for (float v : values) max_abs = std::max(max_abs, std::fabs(v));
  QuantizedValues out;
  out.q.resize(values.size(), 0);
  out.scale = symmetric_scale(max_abs);
  if (max_abs == 0.0f) return out;
  const double k = 127.0 / static_cast<double>(max_abs);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double r = std::round(static_cast<double>(values[i]) * k);
    out.q[i] = static_cast<std::int8_t>(std::clamp(r, -127.0, 127.0));
  }
  return out;
}

// ------------------------------------------------------------ ValueArray ---

std::size_t ValueArray::size() const noexcept {
  return std::visit(
      [](const auto& s) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, QuantizedValues>) {
          return s.q.size();
        } else {
          return s.size();
        }
      },
      storage_);
}

float ValueArray::get(std::size_t i) const noexcept {
  switch (storage_.index()) {
    case 0: return std::get<0>(storage_)[i];
    case 1: return half_to_float(std::get<1>(storage_)[i]);
    default: {
      const auto& q = std::get<2>(storage_);
      return static_cast<float>(q.q[i]) * q.scale;
    }
  }
}

std::vector<float> ValueArray::decode() const {
  std::vector<float> out(size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = get(i);
  return out;
}

std::size_t ValueArray::byte_size() const noexcept {
  switch (encoding()) {
    case ValueEncoding::kF32: return 4 * size();
    case ValueEncoding::kF16: return 2 * size();
    case ValueEncoding::kI8: return size() + 4;
  }
  return 0;
}

// ----------------------------------------------------------- WeightStore ---

const char* to_string(StoreTag tag) noexcept {
  switch (tag) {
    case StoreTag::kDenseF32: return "dense-f32";
    case StoreTag::kDenseF16: return "dense-f16";
    case StoreTag::kQuantizedI8: return "quantized-i8";
    case StoreTag::kSparseBitmap: return "sparse-bitmap";
    case StoreTag::kClustered: return "clustered";
  }
  return "unknown";
}

std::size_t WeightStore::element_count() const noexcept {
  switch (tag()) {
    case StoreTag::kDenseF32: return std::get<DenseF32>(v_).values.size();
    case StoreTag::kDenseF16: return std::get<DenseF16>(v_).bits.size();
    case StoreTag::kQuantizedI8: return std::get<QuantizedI8>(v_).values.size();
    case StoreTag::kSparseBitmap: return std::get<SparseBitmap>(v_).mask.size();
    case StoreTag::kClustered: return std::get<Clustered>(v_).indices.size();
  }
  return 0;
}

std::vector<float> WeightStore::decode() const {
  switch (tag()) {
    case StoreTag::kDenseF32: return std::get<DenseF32>(v_).values;
    case StoreTag::kDenseF16: {
      const auto& bits = std::get<DenseF16>(v_).bits;
      std::vector<float> out(bits.size());
      for (std::size_t i = 0; i < bits.size(); ++i) out[i] = half_to_float(bits[i]);
      return out;
    }
    case StoreTag::kQuantizedI8: {
      const auto& q = std::get<QuantizedI8>(v_);
      std::vector<float> out(q.values.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(q.values[i]) * q.scale;
      return out;
    }
    case StoreTag::kSparseBitmap: {
      const auto& s = std::get<SparseBitmap>(v_);
      std::vector<float> out(s.mask.size(), 0.0f);
      std::size_t j = 0;
      for (std::size_t i = 0; i < out.size(); ++i) {
        if (s.mask.test(i)) out[i] = s.values.get(j++);
      }
      return out;
    }
    case StoreTag::kClustered: {
      const auto& c = std::get<Clustered>(v_);
      const auto table = c.centroids.decode();
      std::vector<float> out(c.indices.size());
      for (std::size_t i = 0; i < out.size(); ++i) out[i] = table[c.indices.get(i)];
      return out;
    }
  }
  return {};
}

std::size_t WeightStore::payload_bytes() const noexcept {
  switch (tag()) {
    case StoreTag::kDenseF32: return 4 * element_count();
    case StoreTag::kDenseF16: return 2 * element_count();
    case StoreTag::kQuantizedI8: return 4 + element_count();
    case StoreTag::kSparseBitmap: {
      const auto& s = std::get<SparseBitmap>(v_);
      // encoding u8 + nonzero count u32 + bitmap + values
      return 1 + 4 + s.mask.byte_size() + s.values.byte_size();
    }
    case StoreTag::kClustered: {
      const auto& c = std::get<Clustered>(v_);
      // k u32 + encoding u8 + centroid table + packed indices
      return 4 + 1 + c.centroids.byte_size() + c.indices.byte_size();
    }
  }
  return 0;
}

std::size_t WeightStore::zero_count() const {
  const auto values = decode();
  return static_cast<std::size_t>(std::count(values.begin(), values.end(), 0.0f));
}

void WeightStore::validate() const {
  switch (tag()) {
    case StoreTag::kQuantizedI8:
      if (!(std::get<QuantizedI8>(v_).scale > 0.0f)) {
        fail(ErrorKind::kInvariant, "quantized store scale must be positive");
      }
      break;
    case StoreTag::kSparseBitmap: {
      const auto& s = std::get<SparseBitmap>(v_);
      if (s.mask.popcount() != s.values.size()) {
        fail(ErrorKind::kInvariant, "sparse store: bitmap popcount " +
                                        std::to_string(s.mask.popcount()) + " != value count " +
                                        std::to_string(s.values.size()));
      }
      break;
    }
    case StoreTag::kClustered: {
      const auto& c = std::get<Clustered>(v_);
      if (c.k < 1 || c.centroids.size() != c.k) {
        fail(ErrorKind::kInvariant, "clustered store: centroid table length must equal k >= 1");
      }
      if (c.indices.bit_width() != index_bit_width(c.k)) {
        fail(ErrorKind::kInvariant, "clustered store: index width does not match k");
      }
      for (std::size_t i = 0; i < c.indices.size(); ++i) {
        if (c.indices.get(i) >= c.k) {
          fail(ErrorKind::kInvariant, "clustered store: index " + std::to_string(c.indices.get(i)) +
                                          " >= k at position " + std::to_string(i));
        }
      }
      break;
    }
    default:
      break;
  }
}

}  // namespace csic
