#pragma once

#include "flipbound/net.hpp"

#include <cstdint>
#include <filesystem>
#include <string_view>
#include <vector>

namespace flipbound {

/// Binary checkpoint layout, all integers uint32 little-endian:
///
///   "FLIPNET1"                  8-byte magic
///   layer_count
///   widths[layer_count + 1]     input width, then every layer's output width
///   class_count                 equals the last width
///   per layer: weights (row-major f64 LE), bias (f64 LE), sigma (f64 LE)
inline constexpr std::string_view kCheckpointMagic = "FLIPNET1";

std::vector<std::uint8_t> encode_checkpoint(const Network& net);
Network decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace flipbound
