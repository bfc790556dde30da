// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

namespace mdunet {

/// One named trainable array with its accumulated gradient.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<float> value;
  std::vector<float> grad;

  std::size_t size() const noexcept { return value.size(); }
};

/// Flat registry of every trainable array in a network. Layers refer to
/// their parameters by index, which keeps the network copyable.
class ParamStore {
 public:
  int add(std::string name, std::vector<int> shape);

  Param& operator[](int idx) { return params_[static_cast<std::size_t>(idx)]; }
  const Param& operator[](int idx) const {
    return params_[static_cast<std::size_t>(idx)];
  }
  std::vector<Param>& all() noexcept { return params_; }
  const std::vector<Param>& all() const noexcept { return params_; }

  int index_of(const std::string& name) const;  // -1 when absent
  std::size_t scalar_count() const noexcept;
  void zero_grad();

 private:
  std::vector<Param> params_;
  std::map<std::string, int> by_name_;
};

}  // namespace mdunet
