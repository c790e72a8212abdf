#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>

#include "qhd/nn/network.hpp"

namespace qhd::nn {

// QNN1 layout, all integers little-endian:
//   "QNN1" | u32 version | u32 C, H, W | u32 layer count
//   per layer: u8 tag, then
//     Conv2d / TransposeConv2d: u32 kh, kw, out_maps, stride
//     MaxPool2d: u32 kh, kw, stride
//     Dense: u32 units, u8 has_maps, u32 C, H, W
//     Dropout: f64 drop_rate
//     Relu / Linear: nothing
//   parameter arrays as f64, layer order, weight before bias.
inline constexpr std::uint32_t kModelFormatVersion = 1;

void write_model(std::ostream& out, const Network& net);
Network read_model(std::istream& in);

void save_model(const Network& net, const std::filesystem::path& path);
/// Rejects files whose input geometry differs from `expected_input` when given.
Network load_model(const std::filesystem::path& path, std::optional<Shape3> expected_input = std::nullopt);

}  // namespace qhd::nn
