#pragma once

// Model and tensor interchange: a JSON manifest plus one raw little-endian blob.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

#include "specxai/linalg.hpp"
#include "specxai/netgraph.hpp"

namespace specxai::io {

inline constexpr int kFormatVersion = 1;

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);
std::string checksum_hex(std::uint64_t h);

/// Writes `path` (manifest) and a sibling weights file named in the manifest.
/// Weights are stored as float32; output is canonical, so saving a loaded
/// model reproduces both files byte for byte.
void save_model(const net::NetworkModel& model, const std::filesystem::path& path);

/// Throws IoError when a file cannot be read and FormatError (version,
/// corrupt blob, schema or shape chain) when the content is invalid.
net::NetworkModel load_model(const std::filesystem::path& path);

/// Manifest text without touching the filesystem; used by inspect-model.
std::string manifest_json(const net::NetworkModel& model);

enum class DType { Float32, Float64 };

/// Tensor container: manifest at `path`, data in a sibling blob.
void save_tensor(const Tensor& t, const std::filesystem::path& path, DType dtype = DType::Float64);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace specxai::io
