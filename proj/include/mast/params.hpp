#pragma once

#include <string>
#include <vector>

#include "mast/tensor.hpp"

namespace mast {

/// Ordered collection of named parameter tensors. Order is registration
/// order and is part of the serialized layout (files are byte-reproducible).
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor t);
  bool contains(const std::string& name) const;
  Tensor& get(const std::string& name);
  const Tensor& get(const std::string& name) const;

  std::size_t count() const { return entries_.size(); }
  const std::string& name(std::size_t i) const { return entries_[i].name; }
  Tensor& tensor(std::size_t i) { return entries_[i].tensor; }
  const Tensor& tensor(std::size_t i) const { return entries_[i].tensor; }

  std::int64_t total_elements() const;
  void zero_all_grads();

  /// Deep copy: same names/shapes/values, fresh storage, requires_grad kept.
  ParamSet clone() const;
  /// Copy values from src (same layout required).
  void copy_values_from(const ParamSet& src);

 private:
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::vector<Entry> entries_;
  std::vector<std::string> index_;  // sorted view not needed; linear lookup
};

// Versioned binary container: magic "MAST", u32 LE version, u32 LE count,
// then per tensor: u32 LE name length, UTF-8 name, u32 LE rank, u32 LE dims,
// f64 LE values.
inline constexpr std::uint32_t kContainerVersion = 1;

void save_params(const ParamSet& params, const std::string& path);
/// Appends every stored tensor into `out` in file order.
void load_params(ParamSet& out, const std::string& path);

}  // namespace mast
