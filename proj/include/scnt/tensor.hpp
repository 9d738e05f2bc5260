#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "scnt/rng.hpp"

namespace scnt {

struct Shape4 {
  int n = 0, c = 0, h = 0, w = 0;
  bool operator==(const Shape4&) const = default;
  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense rank-4 array in row-major (n outermost) order. The shape is fixed at
// construction; element storage is the only mutable part.
template <typename T>
class BasicTensor {
 public:
  BasicTensor() = default;
  BasicTensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
    if (n < 0 || c < 0 || h < 0 || w < 0)
      throw std::invalid_argument("tensor: negative dimension " + shape_.str());
    data_.assign(shape_.numel(), T(0));
  }
  explicit BasicTensor(Shape4 s) : BasicTensor(s.n, s.c, s.h, s.w) {}
  BasicTensor(Shape4 s, std::vector<T> values) : shape_(s), data_(std::move(values)) {
    if (data_.size() != shape_.numel())
      throw std::invalid_argument("tensor: data length " + std::to_string(data_.size()) +
                                  " does not match shape " + shape_.str());
  }

  const Shape4& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  std::size_t index(int in, int ic, int ih, int iw) const {
    return ((static_cast<std::size_t>(in) * shape_.c + ic) * shape_.h + ih) * shape_.w + iw;
  }
  T& at(int in, int ic, int ih, int iw) { return data_[index(in, ic, ih, iw)]; }
  const T& at(int in, int ic, int ih, int iw) const { return data_[index(in, ic, ih, iw)]; }

  void fill(T v) { data_.assign(data_.size(), v); }
  void zero() { fill(T(0)); }

  void fill_uniform(Rng& rng, T lo, T hi) {
    for (auto& v : data_) v = lo + (hi - lo) * static_cast<T>(rng.next_float());
  }
  void fill_normal(Rng& rng, T mean, T stddev) {
    for (auto& v : data_) v = mean + stddev * static_cast<T>(rng.next_normal());
  }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out.data()[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape4 shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

// A learnable value with its gradient accumulator. Gradients are added into
// `grad` by backward passes and cleared by the optimizer step.
template <typename T>
struct BasicParameter {
  std::string name;
  BasicTensor<T> value;
  BasicTensor<T> grad;

  BasicParameter() = default;
  BasicParameter(std::string n, BasicTensor<T> v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.zero(); }
};

using Parameter = BasicParameter<float>;

}  // namespace scnt
