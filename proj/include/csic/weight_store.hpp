#pragma once

// Compression state of a layer's weight tensor.

#include <cstdint>
#include <span>
#include <variant>
#include <vector>

#include "csic/error.hpp"

namespace csic {

/// IEEE binary16 conversions, round-to-nearest-even.
std::uint16_t float_to_half(float value) noexcept;
float half_to_float(std::uint16_t bits) noexcept;

/// Fixed-length bit set; serialized as ceil(n/8) bytes, bit i in byte i/8.
class Bitmap {
 public:
  Bitmap() = default;
  explicit Bitmap(std::size_t bits) : bits_(bits), words_((bits + 63) / 64, 0) {}

  std::size_t size() const noexcept { return bits_; }
  bool test(std::size_t i) const noexcept { return (words_[i >> 6] >> (i & 63)) & 1u; }
  void set(std::size_t i) noexcept { words_[i >> 6] |= std::uint64_t{1} << (i & 63); }
  std::size_t popcount() const noexcept;
  std::size_t byte_size() const noexcept { return (bits_ + 7) / 8; }
  const std::vector<std::uint64_t>& words() const noexcept { return words_; }

  std::vector<std::uint8_t> to_bytes() const;
  static Bitmap from_bytes(std::span<const std::uint8_t> bytes, std::size_t bits);

  friend bool operator==(const Bitmap&, const Bitmap&) = default;

 private:
  std::size_t bits_ = 0;
  std::vector<std::uint64_t> words_;
};

/// Bits needed per cluster index: ceil(log2 k); zero when k == 1.
int index_bit_width(std::uint32_t k) noexcept;

/// Array of unsigned integers packed LSB-first at a fixed bit width.
class PackedIndices {
 public:
  PackedIndices() = default;
  PackedIndices(std::size_t count, int bit_width);

  std::size_t size() const noexcept { return count_; }
  int bit_width() const noexcept { return bit_width_; }
  std::uint32_t get(std::size_t i) const noexcept;
  void set(std::size_t i, std::uint32_t value) noexcept;
  std::size_t byte_size() const noexcept { return (count_ * bit_width_ + 7) / 8; }

  std::vector<std::uint32_t> unpack() const;
  std::vector<std::uint8_t> to_bytes() const;
  static PackedIndices from_bytes(std::span<const std::uint8_t> bytes, std::size_t count,
                                  int bit_width);

  friend bool operator==(const PackedIndices&, const PackedIndices&) = default;

 private:
  std::size_t count_ = 0;
  int bit_width_ = 0;
  std::vector<std::uint64_t> words_;
};

/// int8 values sharing one symmetric scale: value = q * scale.
struct QuantizedValues {
  std::vector<std::int8_t> q;
  float scale = 1.0f;
  friend bool operator==(const QuantizedValues&, const QuantizedValues&) = default;
};

/// Symmetric per-tensor int8 quantization, q = round(w*127/max|w|) clamped to
/// [-127,127]. An all-zero input gets scale 1 and all-zero codes.
QuantizedValues quantize_symmetric(std::span<const float> values);

/// Scale for a tensor whose largest magnitude is `max_abs`, chosen so that
/// quantize -> dequantize -> quantize reproduces the same scale bit for bit.
float symmetric_scale(float max_abs) noexcept;

enum class ValueEncoding : std::uint8_t { kF32 = 0, kF16 = 1, kI8 = 2 };

/// Value list stored as f32, f16 or int8+scale. Used for sparse nonzeros and
/// cluster centroid tables.
class ValueArray {
 public:
  using Storage = std::variant<std::vector<float>, std::vector<std::uint16_t>, QuantizedValues>;

  ValueArray() = default;
  explicit ValueArray(std::vector<float> v) : storage_(std::move(v)) {}
  explicit ValueArray(std::vector<std::uint16_t> half) : storage_(std::move(half)) {}
  explicit ValueArray(QuantizedValues q) : storage_(std::move(q)) {}

  ValueEncoding encoding() const noexcept { return static_cast<ValueEncoding>(storage_.index()); }
  std::size_t size() const noexcept;
  float get(std::size_t i) const noexcept;
  std::vector<float> decode() const;
  /// Serialized payload bytes: 4n, 2n, or n + 4 (scale).
  std::size_t byte_size() const noexcept;
  const Storage& storage() const noexcept { return storage_; }

  friend bool operator==(const ValueArray&, const ValueArray&) = default;

 private:
  Storage storage_;
};

struct DenseF32 {
  std::vector<float> values;
  friend bool operator==(const DenseF32&, const DenseF32&) = default;
};

struct DenseF16 {
  std::vector<std::uint16_t> bits;
  friend bool operator==(const DenseF16&, const DenseF16&) = default;
};

struct QuantizedI8 {
  std::vector<std::int8_t> values;
  float scale = 1.0f;
  friend bool operator==(const QuantizedI8&, const QuantizedI8&) = default;
};

/// Pruned weights: bit i set iff position i is kept; kept values in position order.
struct SparseBitmap {
  Bitmap mask;
  ValueArray values;
  friend bool operator==(const SparseBitmap&, const SparseBitmap&) = default;
};

/// Clustered weights: every weight is centroids[indices[i]].
struct Clustered {
  std::uint32_t k = 0;
  PackedIndices indices;
  ValueArray centroids;
  friend bool operator==(const Clustered&, const Clustered&) = default;
};

enum class StoreTag : std::uint8_t {
  kDenseF32 = 0,
  kDenseF16 = 1,
  kQuantizedI8 = 2,
  kSparseBitmap = 3,
  kClustered = 4,
};

const char* to_string(StoreTag tag) noexcept;

class WeightStore {
 public:
  using Variant = std::variant<DenseF32, DenseF16, QuantizedI8, SparseBitmap, Clustered>;

  WeightStore() = default;
  explicit WeightStore(Variant v) : v_(std::move(v)) {}
  static WeightStore dense(std::vector<float> values) { return WeightStore(DenseF32{std::move(values)}); }

  StoreTag tag() const noexcept { return static_cast<StoreTag>(v_.index()); }
  const Variant& variant() const noexcept { return v_; }
  template <typename S> const S* get_if() const noexcept { return std::get_if<S>(&v_); }

  std::size_t element_count() const noexcept;

  /// Logical f32 weights (dequantized / expanded / densified).
  std::vector<float> decode() const;

  /// Serialized payload size of this store, excluding the tag byte.
  std::size_t payload_bytes() const noexcept;

  /// Number of stored weights that are exactly zero after decoding.
  std::size_t zero_count() const;

  /// Throws kInvariant if a variant invariant is broken.
  void validate() const;

  friend bool operator==(const WeightStore&, const WeightStore&) = default;

 private:
  Variant v_;
};

}  // namespace csic
