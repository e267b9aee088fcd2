#pragma once

#include <string>
#include <vector>

#include "csf/common.hpp"
#include "csf/rng.hpp"
#include "csf/tensor.hpp"

namespace csf {

// Ordered collection of named tensors owned by a model. Trainable entries
// participate in autodiff and optimization; buffers (running statistics)
// are saved and restored but never receive gradients. Registration order is
// the canonical order for initialization, optimizer state, and checkpoints.
class ParamRegistry {
 public:
  struct Entry {
    std::string name;
    Tensor tensor;
    bool trainable = true;
  };

  // Kaiming-uniform fan-in init: U(-b, b) with b = sqrt(6 / fan_in). The
  // stream is derived from (seed, "init", ordinal), so values depend only on
  // the registration order, not on how other streams were consumed.
  Tensor add_kaiming(const std::string& name, Shape shape, Index fan_in, std::uint64_t seed);
  Tensor add_zeros(const std::string& name, Shape shape);
  Tensor add_ones(const std::string& name, Shape shape);
  Tensor add_buffer(const std::string& name, Tensor tensor);  // not trainable

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Tensor> trainable() const;
  Tensor& find(const std::string& name);
  bool contains(const std::string& name) const;
  Index total_size() const;

  void zero_grads();

 private:
  Tensor add_entry(const std::string& name, Tensor tensor, bool trainable);
  std::vector<Entry> entries_;
  std::size_t ordinal_ = 0;
};

}  // namespace csf
