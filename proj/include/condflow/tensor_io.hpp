#pragma once
// TSR1 tensor serialization: "TSR1" magic, u32 rank, rank x u64 extents,
// float64 payload, all little-endian, data row-major.  Stream variants are
// reused by the checkpoint format to embed tensors.

#include <iosfwd>
#include <string>

#include "condflow/tensor.hpp"

namespace condflow {

void write_tsr(std::ostream& os, const Tensor& t);
Tensor read_tsr(std::istream& is, const std::string& what);

void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);  // rejects trailing bytes

}  // namespace condflow
