#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "telroute/nn/matrix.hpp"

namespace telroute::nn {

// Binary file of named arrays:
//   "TELROUTE" | u32 version | u32 count | count x (u32 name length, name,
//   i32 rows, i32 cols, rows*cols little-endian doubles)
// Arrays are written in name order so equal contents give equal bytes.
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_arrays(const std::filesystem::path& path, const std::map<std::string, Matrix>& arrays);
std::map<std::string, Matrix> load_arrays(const std::filesystem::path& path);

}  // namespace telroute::nn
