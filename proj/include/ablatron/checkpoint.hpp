#pragma once

#include "ablatron/network.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>

namespace ablatron {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout (all integers little-endian):
//   "ABLT" | u32 format_version | u32 layer_count
//   per layer: u8 kind | u8 activation | u32 in_c,in_h,in_w,out_c,out_h,out_w,
//              filter_count,kernel_h,kernel_w,stride,padding | u8 has_bias
//   parameter blob: per layer, weights then biases, f32 row-major
// Freeze flags are runtime state and are not persisted.

void write_checkpoint(const Network& net, std::ostream& out);
Network read_checkpoint(std::istream& in);

void save_checkpoint(const Network& net, const std::filesystem::path& path);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace ablatron
