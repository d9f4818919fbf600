// Copyright (c) 2026 The streamg2p Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "streamg2p/common.hpp"
#include "streamg2p/rng.hpp"

namespace streamg2p {

// Allocator that default-initializes trivial scalars: freshly sized buffers
// are left uninitialized instead of being zeroed. Operation outputs that are
// fully overwritten use Tensor::uninit to skip the memset.
template <typename T>
struct DefaultInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = DefaultInitAllocator<U>;
  };
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    if constexpr (sizeof...(Args) == 0)
      ::new (static_cast<void*>(p)) U;
    else
      ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

// Dense row-major tensor of rank 1 or 2. Scalar type is float (inference
// default) or double (training / gradient checks). Tensors are plain values;
// gradient accumulators live in Param so that activations stay lightweight.
template <typename S>
struct Tensor {
  using Buffer = std::vector<S, DefaultInitAllocator<S>>;
  std::vector<int64_t> shape;
  Buffer data;

  Tensor() = default;
  Tensor(std::vector<int64_t> shape_in, S fill = S(0)) : shape(std::move(shape_in)) {
    data.resize(static_cast<size_t>(numel_of(shape)));
    std::fill(data.begin(), data.end(), fill);
  }

  // Allocates without initializing; every element must be written before use.
  static Tensor uninit(std::vector<int64_t> shape_in) {
    Tensor t;
    t.shape = std::move(shape_in);
    t.data.resize(static_cast<size_t>(numel_of(t.shape)));
    return t;
  }

  static int64_t numel_of(const std::vector<int64_t>& sh) {
    int64_t n = 1;
    for (int64_t d : sh) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  S& at(int64_t r, int64_t c) { return data[static_cast<size_t>(r * cols() + c)]; }
  S at(int64_t r, int64_t c) const { return data[static_cast<size_t>(r * cols() + c)]; }
  S& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
  S operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& other) const { return shape == other.shape; }

  void fill(S v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }

  template <typename T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<T>(data[i]);
    return out;
  }
};

template <typename S>
Tensor<S> zeros(std::vector<int64_t> shape) {
  return Tensor<S>(std::move(shape), S(0));
}

template <typename S>
Tensor<S> full(std::vector<int64_t> shape, S v) {
  return Tensor<S>(std::move(shape), v);
}

template <typename S>
Tensor<S> from_rows(const std::vector<std::vector<S>>& rows) {
  if (rows.empty()) return Tensor<S>({0, 0});
  Tensor<S> t({static_cast<int64_t>(rows.size()), static_cast<int64_t>(rows[0].size())});
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size()) throw ShapeError("from_rows: ragged rows");
    for (size_t c = 0; c < rows[r].size(); ++c) t.at(r, c) = rows[r][c];
  }
  return t;
}

template <typename S>
Tensor<S> rand_uniform(std::vector<int64_t> shape, Rng& rng, double lo, double hi) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.uniform(lo, hi));
  return t;
}

template <typename S>
Tensor<S> rand_normal(std::vector<int64_t> shape, Rng& rng, double stddev) {
  Tensor<S> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<S>(rng.normal() * stddev);
  return t;
}

// Named parameter: a value tensor plus a same-shape gradient accumulator.
template <typename S>
struct Param {
  std::string name;
  Tensor<S> value;
  Tensor<S> grad;

  void set_shape(std::vector<int64_t> shape) {
    value = Tensor<S>(shape);
    grad = Tensor<S>(std::move(shape));
  }
  void zero_grad() { grad.fill(S(0)); }
};

}  // namespace streamg2p
