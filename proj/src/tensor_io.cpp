#include "condflow/tensor_io.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <vector>

namespace condflow {
namespace {

// This codebase targets little-endian hosts; serialization writes host bytes.
static_assert(std::endian::native == std::endian::little, "TSR1 i/o assumes little-endian");

constexpr char kMagic[4] = {'T', 'S', 'R', '1'};
constexpr std::uint32_t kMaxRank = 8;

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is, const std::string& what) {
  T v;
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("TSR1 read (" + what + "): truncated stream");
  return v;
}

}  // namespace

void write_tsr(std::ostream& os, const Tensor& t) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) put<std::uint64_t>(os, static_cast<std::uint64_t>(e));
  os.write(reinterpret_cast<const char*>(t.values().data()),
           static_cast<std::streamsize>(t.values().size() * sizeof(double)));
  if (!os) throw std::runtime_error("TSR1 write failed");
}

Tensor read_tsr(std::istream& is, const std::string& what) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("TSR1 read (" + what + "): bad magic");
  const auto rank = get<std::uint32_t>(is, what);
  if (rank > kMaxRank)
    throw std::runtime_error("TSR1 read (" + what + "): rank " + std::to_string(rank) +
                             " exceeds limit " + std::to_string(kMaxRank));
  Shape shape(rank);
  std::uint64_t n = 1;
  for (auto& e : shape) {
    const auto v = get<std::uint64_t>(is, what);
    if (v == 0 || v > static_cast<std::uint64_t>(std::numeric_limits<std::int64_t>::max()))
      throw std::runtime_error("TSR1 read (" + what + "): invalid extent " + std::to_string(v));
    e = static_cast<std::int64_t>(v);
    if (n > (1ull << 32) / v)  // cap total elements at 2^32
      throw std::runtime_error("TSR1 read (" + what + "): element count overflows");
    n *= v;
  }
  std::vector<double> data(n);
  is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("TSR1 read (" + what + "): truncated payload");
  return Tensor::from_vector(shape, std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for write: " + path);
  write_tsr(os, t);
  os.close();
  if (!os) throw std::runtime_error("write failed: " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open: " + path);
  Tensor t = read_tsr(is, path);
  is.peek();
  if (!is.eof()) throw std::runtime_error("TSR1 read (" + path + "): trailing bytes");
  return t;
}

}  // namespace condflow
