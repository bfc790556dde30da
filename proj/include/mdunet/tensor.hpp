// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace mdunet {

/// Spatial extent of a single 2D sample.
struct Shape2 {
  int height = 0;
  int width = 0;

  std::size_t pixels() const noexcept {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const Shape2&, const Shape2&) = default;
};

std::string to_string(const Shape2& s);

/// Channel-major (C, H, W) dense array of one sample. All network work is
/// done per sample; batching is gradient accumulation in the trainer.
template <typename T>
struct Array3 {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Array3() = default;
  Array3(int c, int h, int w, T fill = T{})
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {}

  Shape2 spatial() const noexcept { return {height, width}; }
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(height) * width;
  }
  std::size_t size() const noexcept { return data.size(); }

  T& operator()(int c, int y, int x) {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  const T& operator()(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::span<T> channel(int c) {
    return {data.data() + static_cast<std::size_t>(c) * plane(), plane()};
  }
  std::span<const T> channel(int c) const {
    return {data.data() + static_cast<std::size_t>(c) * plane(), plane()};
  }

  friend bool operator==(const Array3&, const Array3&) = default;
};

using Tensor = Array3<float>;

/// Row-major (H, W) single-plane map.
template <typename T>
struct Plane {
  Shape2 shape;
  std::vector<T> data;

  Plane() = default;
  explicit Plane(Shape2 s, T fill = T{}) : shape(s), data(s.pixels(), fill) {}
  Plane(Shape2 s, std::vector<T> values) : shape(s), data(std::move(values)) {}

  T& operator()(int y, int x) {
    return data[static_cast<std::size_t>(y) * shape.width + x];
  }
  const T& operator()(int y, int x) const {
    return data[static_cast<std::size_t>(y) * shape.width + x];
  }
  std::size_t size() const noexcept { return data.size(); }

  friend bool operator==(const Plane&, const Plane&) = default;
};

using Mask = Plane<unsigned char>;

}  // namespace mdunet
