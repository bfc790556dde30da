// SPDX-License-Identifier: Apache-2.0
#include "mdunet/params.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "mdunet/error.hpp"

namespace mdunet {

int ParamStore::add(std::string name, std::vector<int> shape) {
  require(!by_name_.contains(name), ErrorKind::Internal, "duplicate parameter " + name);
  const auto n = static_cast<std::size_t>(
      std::accumulate(shape.begin(), shape.end(), 1LL, std::multiplies<long long>()));
  const int idx = static_cast<int>(params_.size());
  by_name_.emplace(name, idx);
  params_.push_back(Param{std::move(name), std::move(shape), std::vector<float>(n, 0.0f),
                          std::vector<float>(n, 0.0f)});
  return idx;
}

int ParamStore::index_of(const std::string& name) const {
  const auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

std::size_t ParamStore::scalar_count() const noexcept {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

}  // namespace mdunet
