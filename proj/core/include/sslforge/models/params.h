#ifndef SSLFORGE_MODELS_PARAMS_H_
#define SSLFORGE_MODELS_PARAMS_H_

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "sslforge/tensor/tensor.h"

namespace sslforge {

// Ordered collection of named parameter tensors. Updating a parameter
// replaces its tensor with a new leaf; tensors themselves are never mutated.
class ParamSet {
 public:
  // Adds a trainable leaf. `decay` marks the tensor as subject to weight decay.
  void add(std::string name, Tensor value, bool decay);

  std::size_t size() const { return tensors_.size(); }
  bool contains(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  const Tensor& at(std::size_t i) const { return tensors_[i]; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  bool decays(std::size_t i) const { return decay_[i]; }
  std::size_t index_of(std::string_view name) const;

  // Replaces tensor i by a leaf holding `values`, tracked iff the old one was.
  void set_values(std::size_t i, std::vector<double> values);

  // Copy with every tensor turned into an untracked constant.
  ParamSet frozen() const;
  // Copy with every tensor a fresh gradient-recording leaf.
  ParamSet trainable() const;

  std::size_t num_scalars() const;
  bool same_layout(const ParamSet& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::vector<bool> decay_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace sslforge

#endif  // SSLFORGE_MODELS_PARAMS_H_
