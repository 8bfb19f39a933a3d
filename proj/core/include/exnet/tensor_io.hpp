#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>

#include "exnet/tensor.hpp"

namespace exnet {

/// Tensor stream layout (all integers little-endian):
///
///   "EXT1"            4 bytes magic
///   rank              u64
///   dims[rank]        u64 each
///   elements          product(dims) values, little-endian IEEE-754,
///                     4 bytes (float) or 8 bytes (double)
///
/// The element width is not stored; the enclosing container (checkpoint
/// header) records it.
inline constexpr char kTensorMagic[4] = {'E', 'X', 'T', '1'};

namespace io {

void write_u8(std::ostream& os, std::uint8_t v);
void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_bytes(std::ostream& os, const std::string& bytes);

std::uint8_t read_u8(std::istream& is);
std::uint32_t read_u32(std::istream& is);
std::uint64_t read_u64(std::istream& is);
std::string read_bytes(std::istream& is, std::size_t n);

}  // namespace io

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);

/// Throws FormatError on bad magic, absurd rank, zero dims or truncation.
template <typename T>
Tensor<T> read_tensor(std::istream& is);

}  // namespace exnet
