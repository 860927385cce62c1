#include "telroute/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

namespace telroute::nn {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'T', 'E', 'L', 'R', 'O', 'U', 'T', 'E'};

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T take(std::istream& is, const std::string& what) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint while reading " + what);
  return v;
}

}  // namespace

void save_arrays(const std::filesystem::path& path, const std::map<std::string, Matrix>& arrays) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw CheckpointError("cannot open for writing: " + path.string());
  os.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(os, kCheckpointVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(arrays.size()));
  for (const auto& [name, m] : arrays) {
    put<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::int32_t>(os, m.rows);
    put<std::int32_t>(os, m.cols);
    os.write(reinterpret_cast<const char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
  }
  if (!os) throw CheckpointError("write failed: " + path.string());
}

std::map<std::string, Matrix> load_arrays(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open checkpoint: " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file: " + path.string());
  }
  const auto version = take<std::uint32_t>(is, "version");
  if (version != kCheckpointVersion) {
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = take<std::uint32_t>(is, "array count");
  std::map<std::string, Matrix> out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = take<std::uint32_t>(is, "name length");
    if (len > 4096) throw CheckpointError("corrupt array name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw CheckpointError("truncated checkpoint while reading name");
    const auto rows = take<std::int32_t>(is, name + " rows");
    const auto cols = take<std::int32_t>(is, name + " cols");
    if (rows < 0 || cols < 0) throw CheckpointError("negative shape for " + name);
    Matrix m(rows, cols);
    if (!is.read(reinterpret_cast<char*>(m.data.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw CheckpointError("truncated data for " + name);
    }
    out.emplace(std::move(name), std::move(m));
  }
  return out;
}

}  // namespace telroute::nn
