#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gazeprobe/tensor.hpp"

namespace gazeprobe::gptw {

// GPTW1 container: "GPTW" | u32 version=1 | u32 count | per tensor
// { u16 name_len, name, u8 ndim, ndim x u32 dims, f32 data }. All little-endian.
inline constexpr char kMagic[4] = {'G', 'P', 'T', 'W'};
inline constexpr std::uint32_t kVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

std::vector<NamedTensor> read(const std::filesystem::path& path);
std::vector<NamedTensor> read_bytes(const std::string& bytes);

// Values are narrowed to float32 on write.
void write(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors);
std::string write_bytes(const std::vector<NamedTensor>& tensors);

}  // namespace gazeprobe::gptw
