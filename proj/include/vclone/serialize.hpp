// Copyright (c) 2026 The vclone Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat binary tensor container.
//
//   header : "VCLT" | version u32
//   record : name_len u32 | name (UTF-8) | dtype u8 | rank u32 |
//            dims u64[rank] | values (little-endian, dtype-sized)
//
// Records repeat until end of file. dtype: 0 = f32, 1 = f64, 2 = i64, 3 = u8.

#ifndef VCLONE_SERIALIZE_HPP_
#define VCLONE_SERIALIZE_HPP_

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "vclone/tensor.hpp"

namespace vclone {

static_assert(std::endian::native == std::endian::little,
              "container I/O assumes a little-endian host");

enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kI64 = 2, kU8 = 3 };

inline std::size_t dtype_size(DType d) {
  switch (d) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI64: return 8;
    case DType::kU8: return 1;
  }
  throw std::invalid_argument("unknown dtype");
}

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class TensorArchive {
 public:
  static constexpr char kMagic[4] = {'V', 'C', 'L', 'T'};
  static constexpr std::uint32_t kVersion = 1;

  struct Record {
    std::string name;
    DType dtype = DType::kF32;
    Shape shape;
    std::vector<char> bytes;
  };

  template <typename T>
  void put(const std::string& name, const Tensor<T>& t) {
    static_assert(std::is_same_v<T, float> || std::is_same_v<T, double>);
    put_raw(name, std::is_same_v<T, float> ? DType::kF32 : DType::kF64,
            t.shape(), t.data().data(), t.size() * sizeof(T));
  }

  void put_i64(const std::string& name, const std::vector<std::int64_t>& v) {
    put_raw(name, DType::kI64, Shape{v.size()}, v.data(), v.size() * 8);
  }

  void put_string(const std::string& name, const std::string& s) {
    put_raw(name, DType::kU8, Shape{s.size()}, s.data(), s.size());
  }

  bool contains(const std::string& name) const { return index_.count(name) > 0; }

  const Record& record(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw FormatError("no tensor named '" + name + "'");
    return records_[it->second];
  }

  const std::vector<Record>& records() const { return records_; }

  /// Reads a floating tensor, converting between f32 and f64 if needed.
  template <typename T>
  Tensor<T> get(const std::string& name) const {
    const Record& r = record(name);
    const std::size_t n = numel(r.shape);
    std::vector<T> out(n);
    if (r.dtype == DType::kF32) {
      std::vector<float> tmp(n);
      std::memcpy(tmp.data(), r.bytes.data(), n * 4);
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
    } else if (r.dtype == DType::kF64) {
      std::vector<double> tmp(n);
      std::memcpy(tmp.data(), r.bytes.data(), n * 8);
      for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<T>(tmp[i]);
    } else {
      throw FormatError("tensor '" + name + "' is not floating point");
    }
    return Tensor<T>(r.shape, std::move(out));
  }

  std::vector<std::int64_t> get_i64(const std::string& name) const {
    const Record& r = record(name);
    if (r.dtype != DType::kI64) throw FormatError("'" + name + "' is not i64");
    std::vector<std::int64_t> out(numel(r.shape));
    std::memcpy(out.data(), r.bytes.data(), r.bytes.size());
    return out;
  }

  std::string get_string(const std::string& name) const {
    const Record& r = record(name);
    if (r.dtype != DType::kU8) throw FormatError("'" + name + "' is not u8");
    return std::string(r.bytes.begin(), r.bytes.end());
  }

  void write(std::ostream& os) const {
    os.write(kMagic, 4);
    write_u32(os, kVersion);
    for (const auto& r : records_) {
      write_u32(os, static_cast<std::uint32_t>(r.name.size()));
      os.write(r.name.data(), static_cast<std::streamsize>(r.name.size()));
      const auto d = static_cast<std::uint8_t>(r.dtype);
      os.write(reinterpret_cast<const char*>(&d), 1);
      write_u32(os, static_cast<std::uint32_t>(r.shape.size()));
      for (auto dim : r.shape) {
        const std::uint64_t v = dim;
        os.write(reinterpret_cast<const char*>(&v), 8);
      }
      os.write(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()));
    }
    if (!os) throw std::runtime_error("tensor archive: write failed");
  }

  static TensorArchive read(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
      throw FormatError("not a VCLT container (bad magic)");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kVersion) {
      throw FormatError("unsupported VCLT version " + std::to_string(version));
    }
    TensorArchive ar;
    while (true) {
      std::uint32_t name_len = 0;
      if (!is.read(reinterpret_cast<char*>(&name_len), 4)) {
        if (is.gcount() == 0) break;
        throw FormatError("truncated record header");
      }
      Record r;
      r.name.resize(name_len);
      std::uint8_t d = 0;
      if (!is.read(r.name.data(), name_len) ||
          !is.read(reinterpret_cast<char*>(&d), 1)) {
        throw FormatError("truncated record name");
      }
      if (d > 3) throw FormatError("unknown dtype " + std::to_string(d));
      r.dtype = static_cast<DType>(d);
      const std::uint32_t rank = read_u32(is);
      for (std::uint32_t i = 0; i < rank; ++i) {
        std::uint64_t dim = 0;
        if (!is.read(reinterpret_cast<char*>(&dim), 8)) {
          throw FormatError("truncated dims for '" + r.name + "'");
        }
        r.shape.push_back(static_cast<std::size_t>(dim));
      }
      r.bytes.resize(numel(r.shape) * dtype_size(r.dtype));
      if (!is.read(r.bytes.data(), static_cast<std::streamsize>(r.bytes.size()))) {
        throw FormatError("truncated values for '" + r.name + "'");
      }
      ar.add(std::move(r));
    }
    return ar;
  }

  void save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
    write(os);
  }

  static TensorArchive load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open '" + path + "'");
    return read(is);
  }

 private:
  void put_raw(const std::string& name, DType d, Shape shape, const void* src,
               std::size_t nbytes) {
    Record r;
    r.name = name;
    r.dtype = d;
    r.shape = std::move(shape);
    r.bytes.resize(nbytes);
    if (nbytes) std::memcpy(r.bytes.data(), src, nbytes);
    add(std::move(r));
  }

  void add(Record r) {
    auto it = index_.find(r.name);
    if (it != index_.end()) {
      records_[it->second] = std::move(r);
      return;
    }
    index_[r.name] = records_.size();
    records_.push_back(std::move(r));
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), 4);
  }

  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    if (!is.read(reinterpret_cast<char*>(&v), 4)) {
      throw FormatError("truncated u32 field");
    }
    return v;
  }

  std::vector<Record> records_;
  std::map<std::string, std::size_t> index_;
};

/// 64-bit FNV-1a; stable across platforms, used for config fingerprints.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace vclone

#endif  // VCLONE_SERIALIZE_HPP_
