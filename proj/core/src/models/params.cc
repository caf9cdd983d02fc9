#include "sslforge/models/params.h"

#include <fmt/format.h>

#include "sslforge/common/error.h"

namespace sslforge {

void ParamSet::add(std::string name, Tensor value, bool decay) {
  if (index_.contains(name)) throw SpecError("duplicate parameter name " + name);
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(value.requires_grad() && value.is_leaf() ? value : value.with_grad());
  decay_.push_back(decay);
}

bool ParamSet::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

std::size_t ParamSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw SpecError(fmt::format("no parameter named {}", name));
  return it->second;
}

const Tensor& ParamSet::get(std::string_view name) const { return tensors_[index_of(name)]; }

void ParamSet::set_values(std::size_t i, std::vector<double> values) {
  const Tensor& old = tensors_[i];
  tensors_[i] = old.requires_grad() ? Tensor::parameter(old.shape(), std::move(values))
                                    : Tensor(old.shape(), std::move(values));
}

ParamSet ParamSet::frozen() const {
  ParamSet out = *this;
  for (Tensor& t : out.tensors_) t = t.detach();
  return out;
}

ParamSet ParamSet::trainable() const {
  ParamSet out = *this;
  for (Tensor& t : out.tensors_) t = t.with_grad();
  return out;
}

std::size_t ParamSet::num_scalars() const {
  std::size_t n = 0;
  for (const Tensor& t : tensors_) n += t.size();
  return n;
}

bool ParamSet::same_layout(const ParamSet& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].shape() != other.tensors_[i].shape()) return false;
  }
  return true;
}

}  // namespace sslforge
