#pragma once

// Binary checkpoint layout (all integers little-endian uint32):
//
//   "PEICKPT\0"                      8-byte magic
//   version                          currently 1
//   count                            number of parameters
//   repeated count times:
//     name_length, name bytes (no terminator)
//     rank, dims[rank]
//     values                         prod(dims) IEEE-754 float32, little-endian

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pei/autodiff.hpp"

namespace pei {

struct NamedArray {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  bool operator==(const NamedArray&) const = default;
};

constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> serialize_checkpoint(const std::vector<NamedArray>& arrays);
/// Throws std::runtime_error on a malformed buffer.
std::vector<NamedArray> deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_checkpoint(const std::filesystem::path& path);

template <typename T>
std::vector<NamedArray> to_named_arrays(const std::vector<ad::Parameter<T>>& params);
/// Copies checkpoint values into matching parameters. Throws ConfigError when
/// names, ranks or dims disagree.
template <typename T>
void assign_named_arrays(const std::vector<NamedArray>& arrays, std::vector<ad::Parameter<T>>& params);

}  // namespace pei
