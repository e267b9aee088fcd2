#include "csf/params.hpp"

#include <cmath>
#include <stdexcept>

namespace csf {

Tensor ParamRegistry::add_entry(const std::string& name, Tensor tensor, bool trainable) {
  if (contains(name)) throw std::invalid_argument("params: duplicate name '" + name + "'");
  tensor.set_requires_grad(trainable);
  entries_.push_back(Entry{name, tensor, trainable});
  return tensor;
}

Tensor ParamRegistry::add_kaiming(const std::string& name, Shape shape, Index fan_in,
                                  std::uint64_t seed) {
  if (fan_in <= 0) throw std::invalid_argument("params: fan_in must be positive for '" + name + "'");
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  Rng rng = derive_rng(seed, {"init", std::to_string(ordinal_)});
  ++ordinal_;
  Tensor t = Tensor::uniform(std::move(shape), -bound, bound, rng);
  return add_entry(name, std::move(t), true);
}

Tensor ParamRegistry::add_zeros(const std::string& name, Shape shape) {
  ++ordinal_;
  return add_entry(name, Tensor::zeros(std::move(shape)), true);
}

Tensor ParamRegistry::add_ones(const std::string& name, Shape shape) {
  ++ordinal_;
  return add_entry(name, Tensor::full(std::move(shape), 1.0), true);
}

Tensor ParamRegistry::add_buffer(const std::string& name, Tensor tensor) {
  return add_entry(name, std::move(tensor), false);
}

std::vector<Tensor> ParamRegistry::trainable() const {
  std::vector<Tensor> out;
  for (const Entry& e : entries_)
    if (e.trainable) out.push_back(e.tensor);
  return out;
}

Tensor& ParamRegistry::find(const std::string& name) {
  for (Entry& e : entries_)
    if (e.name == name) return e.tensor;
  throw std::invalid_argument("params: no entry named '" + name + "'");
}

bool ParamRegistry::contains(const std::string& name) const {
  for (const Entry& e : entries_)
    if (e.name == name) return true;
  return false;
}

Index ParamRegistry::total_size() const {
  Index n = 0;
  for (const Entry& e : entries_) n += e.tensor.size();
  return n;
}

void ParamRegistry::zero_grads() {
  for (Entry& e : entries_)
    if (e.trainable) e.tensor.zero_grad();
}

}  // namespace csf
