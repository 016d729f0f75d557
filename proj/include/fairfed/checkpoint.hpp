/*
 * Copyright 2026 The FairFed Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#ifndef FAIRFED_CHECKPOINT_HPP_
#define FAIRFED_CHECKPOINT_HPP_

// Model checkpoint layout (all integers and doubles little-endian):
//
//   bytes 0..3   magic "FFCK"
//   u32          format version (1)
//   u32          number of dimensions D (= layers + 1)
//   u32 x D      layer dimensions, input first, e.g. 14 100 100 100 1
//   f64 x N      parameters in flat order: for each layer, the weight matrix
//                row-major as (outputs x inputs), then the bias vector
//
// N is the sum over layers of outputs * (inputs + 1).

#include <algorithm>
#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include "fairfed/common.hpp"
#include "fairfed/mlp_model.hpp"

namespace fairfed {

inline constexpr std::array<char, 4> kCheckpointMagic = {'F', 'F', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

template <typename T>
void put_le(std::ostream& os, T value) {
  std::array<unsigned char, sizeof(T)> bytes;
  std::memcpy(bytes.data(), &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& is) {
  std::array<unsigned char, sizeof(T)> bytes;
  if (!is.read(reinterpret_cast<char*>(bytes.data()), sizeof(T))) {
    throw Error("checkpoint: truncated file");
  }
  if constexpr (std::endian::native == std::endian::big) {
    std::reverse(bytes.begin(), bytes.end());
  }
  T value;
  std::memcpy(&value, bytes.data(), sizeof(T));
  return value;
}

}  // namespace detail

inline void write_checkpoint(std::ostream& os, const ModelParams& m) {
  validate_model(m);
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  detail::put_le<std::uint32_t>(os, kCheckpointVersion);
  const auto dims = layer_dims(m);
  detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dims.size()));
  for (std::size_t d : dims) {
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  }
  m.for_each([&](double v) { detail::put_le<double>(os, v); });
  if (!os) throw Error("checkpoint: write failed");
}

inline ModelParams read_checkpoint(std::istream& is) {
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic) {
    throw Error("checkpoint: bad magic");
  }
  const auto version = detail::get_le<std::uint32_t>(is);
  if (version != kCheckpointVersion) {
    throw Error(str_cat("checkpoint: unsupported version ", version));
  }
  const auto n_dims = detail::get_le<std::uint32_t>(is);
  if (n_dims < 2) throw Error("checkpoint: fewer than two dimensions");
  std::vector<std::size_t> dims(n_dims);
  for (auto& d : dims) d = detail::get_le<std::uint32_t>(is);
  ModelParams m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.layers.emplace_back(dims[i], dims[i + 1]);
  }
  m.for_each([&](double& v) { v = detail::get_le<double>(is); });
  validate_model(m);
  return m;
}

inline void save_checkpoint(const std::filesystem::path& path,
                            const ModelParams& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(str_cat("cannot write checkpoint '", path.string(), "'"));
  write_checkpoint(os, m);
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(str_cat("cannot read checkpoint '", path.string(), "'"));
  return read_checkpoint(is);
}

}  // namespace fairfed

#endif  // FAIRFED_CHECKPOINT_HPP_
