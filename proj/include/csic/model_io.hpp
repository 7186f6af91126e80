#pragma once

// "CSIM" model file: little-endian, no padding, no container compression.
// The serialized byte count is the model-size metric.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "csic/model.hpp"

namespace csic {

inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Model& model);

/// Parses a complete file; any truncation, bad tag or trailing byte is a
/// FormatError carrying the byte offset.
Model parse_model(std::span<const std::uint8_t> bytes);

/// Writes the model and returns the number of bytes written.
std::size_t save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

/// Exact serialized size, computed from the layout rules without serializing.
std::size_t size_of(const Model& model);

}  // namespace csic
