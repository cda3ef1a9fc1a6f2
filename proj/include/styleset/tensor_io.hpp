#pragma once

// On-disk formats. Everything is little-endian.
//
//   SATN tensor dump:  "SATN", u32 version(=1), u32 ndim, ndim x u64 dims,
//                      raw float32 data.
//   SAWT weights:      "SAWT", u32 version(=1), u32 count, then per tensor
//                      (u32 name length, UTF-8 name, embedded SATN record).
//   Trajectory:        concatenated SATN records plus a text sidecar index
//                      with one "t offset" pair per line.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "styleset/tensor.hpp"

namespace styleset {

void write_satn(std::ostream& out, const Tensor& t);
Tensor read_satn(std::istream& in);

void save_satn(const std::string& path, const Tensor& t);
Tensor load_satn(const std::string& path);

// Order-preserving named tensor container.
using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

void save_sawt(const std::string& path, const NamedTensors& tensors);
NamedTensors load_sawt(const std::string& path);

// States indexed by t. Writes `path` (binary) and `path + ".idx"` (text).
void save_trajectory(const std::string& path, const std::vector<Tensor>& states);
std::vector<Tensor> load_trajectory(const std::string& path);

}  // namespace styleset
