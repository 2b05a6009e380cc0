#pragma once

// Named parameter collections and their binary container.
//
// Container layout (all integers u32 little-endian, floats IEEE-754 binary64
// little-endian):
//
//   "JSCQ"  version(=1)  metadata_len  metadata[metadata_len]  count
//   count x { name_len  name[name_len]  rank  dims[rank]  values[prod(dims)] }
//
// `metadata` is free-form UTF-8 text; model checkpoints store their
// configuration there as key=value lines.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "jscq/tensor.hpp"

namespace jscq {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParameterSet {
 public:
  Tensor& add(std::string name, Tensor tensor);
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;

  std::vector<std::pair<std::string, Tensor>>& entries() { return entries_; }
  const std::vector<std::pair<std::string, Tensor>>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;

  void zero_grad();
  // Deep copy with fresh leaves that keep the requires_grad flags.
  ParameterSet clone() const;
  // Copies values from `other` (same names and shapes) into this set.
  void assign_values(const ParameterSet& other);

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

inline constexpr std::uint32_t kContainerVersion = 1;

void write_parameters(std::ostream& out, const ParameterSet& params, std::string_view metadata = {});

struct LoadedParameters {
  ParameterSet params;
  std::string metadata;
};

LoadedParameters read_parameters(std::istream& in);

void save_parameters(const std::string& path, const ParameterSet& params,
                     std::string_view metadata = {});
LoadedParameters load_parameters(const std::string& path);

}  // namespace jscq
