#include "exnet/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <limits>

namespace exnet {

namespace io {

namespace {

template <typename U>
void write_le(std::ostream& os, U v) {
  char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw FormatError("unexpected end of stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u8(std::ostream& os, std::uint8_t v) { write_le(os, v); }
void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_le(os, v); }
void write_bytes(std::ostream& os, const std::string& bytes) {
  os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::uint8_t read_u8(std::istream& is) { return read_le<std::uint8_t>(is); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }
std::uint64_t read_u64(std::istream& is) { return read_le<std::uint64_t>(is); }

std::string read_bytes(std::istream& is, std::size_t n) {
  std::string out(n, '\0');
  if (n && !is.read(out.data(), static_cast<std::streamsize>(n))) {
    throw FormatError("unexpected end of stream");
  }
  return out;
}

}  // namespace io

namespace {

template <typename T>
using Bits = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;

constexpr std::uint64_t kMaxRank = 8;
constexpr std::uint64_t kMaxElements = std::uint64_t{1} << 32;

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kTensorMagic, 4);
  io::write_u64(os, t.rank());
  for (const std::size_t d : t.shape()) io::write_u64(os, d);
  std::string buf(t.size() * sizeof(T), '\0');
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<Bits<T>>(t[i]);
    for (std::size_t b = 0; b < sizeof(T); ++b) {
      buf[i * sizeof(T) + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
  }
  io::write_bytes(os, buf);
  if (!os) throw FormatError("failed writing tensor");
}

template <typename T>
Tensor<T> read_tensor(std::istream& is) {
  const std::string magic = io::read_bytes(is, 4);
  if (std::memcmp(magic.data(), kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  const std::uint64_t rank = io::read_u64(is);
  if (rank == 0 || rank > kMaxRank) throw FormatError("bad tensor rank " + std::to_string(rank));
  Shape shape(rank);
  std::uint64_t count = 1;
  for (auto& d : shape) {
    const std::uint64_t v = io::read_u64(is);
    if (v == 0 || v > kMaxElements) throw FormatError("bad tensor dimension " + std::to_string(v));
    count *= v;
    if (count > kMaxElements) throw FormatError("tensor too large");
    d = static_cast<std::size_t>(v);
  }
  // Chunked so a corrupt header cannot trigger one huge allocation.
  constexpr std::uint64_t kChunk = std::uint64_t{1} << 18;
  std::vector<T> data;
  data.reserve(static_cast<std::size_t>(std::min(count, kChunk)));
  for (std::uint64_t done = 0; done < count;) {
    const std::uint64_t n = std::min(kChunk, count - done);
    const std::string buf = io::read_bytes(is, static_cast<std::size_t>(n * sizeof(T)));
    for (std::size_t i = 0; i < n; ++i) {
      Bits<T> bits = 0;
      for (std::size_t b = 0; b < sizeof(T); ++b) {
        bits |= static_cast<Bits<T>>(static_cast<unsigned char>(buf[i * sizeof(T) + b])) << (8 * b);
      }
      data.push_back(std::bit_cast<T>(bits));
    }
    done += n;
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor<float>(std::istream&);
template Tensor<double> read_tensor<double>(std::istream&);

}  // namespace exnet
