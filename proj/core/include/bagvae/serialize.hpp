#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bagvae/tensor.hpp"

namespace bagvae {

/// Single-file tensor container. Layout: "BVAE1\n", then header lines
///   meta <key> <value...>
///   tensor <name> <dtype> <rank> <dim...> <offset>
/// terminated by "end\n", followed by the payload. dtype f32 holds
/// little-endian 32-bit floats (upcast to double on load); dtype u8 holds raw
/// bytes for string tables. Offsets are relative to the payload start.
class Container {
 public:
  struct Entry {
    std::string name;
    std::string dtype;
    std::vector<std::size_t> shape;
    std::vector<double> f64;
    std::vector<std::uint8_t> bytes;
  };

  void put_meta(const std::string& key, const std::string& value);
  void put_tensor(const std::string& name, const Tensor& t);
  void put_bytes(const std::string& name, const std::vector<std::uint8_t>& b);

  bool has(const std::string& name) const;
  bool has_meta(const std::string& key) const;
  Tensor tensor(const std::string& name) const;
  const std::vector<std::uint8_t>& bytes(const std::string& name) const;
  std::string meta_value(const std::string& key) const;

  const std::vector<Entry>& entries() const { return entries_; }
  const std::vector<std::pair<std::string, std::string>>& meta() const {
    return meta_;
  }

  void save(const std::string& path) const;
  static Container load(const std::string& path);

 private:
  const Entry& find(const std::string& name) const;
  std::vector<std::pair<std::string, std::string>> meta_;
  std::vector<Entry> entries_;
};

/// FNV-1a 64-bit over a string; used for config fingerprints.
std::uint64_t fnv1a64(const std::string& s);

}  // namespace bagvae
