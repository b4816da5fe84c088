#pragma once

#include <Eigen/Dense>
#include <array>
#include <cassert>
#include <cstring>
#include <initializer_list>
#include <sstream>
#include <string>
#include <vector>

#include "axialvig/common.hpp"
#include "axialvig/rng.hpp"

namespace axialvig {

// Dense shape of rank 1..4. Rank-4 tensors are NCHW feature maps; element
// (n,c,h,w) lives at linear index ((n*C + c)*H + h)*W + w.
class Shape {
 public:
  Shape() = default;

  Shape(std::initializer_list<Index> extents) {
    if (extents.size() < 1 || extents.size() > 4)
      throw ShapeError("shape rank must be between 1 and 4, got " +
                       std::to_string(extents.size()));
    rank_ = static_cast<int>(extents.size());
    int i = 0;
    for (Index e : extents) {
      if (e < 1)
        throw ShapeError("shape axis " + std::to_string(i) +
                         " must be >= 1, got " + std::to_string(e));
      d_[i++] = e;
    }
  }

  static Shape nchw(Index n, Index c, Index h, Index w) {
    return Shape{n, c, h, w};
  }

  int rank() const { return rank_; }
  Index operator[](int i) const {
    assert(i >= 0 && i < rank_);
    return d_[i];
  }

  Index numel() const {
    if (rank_ == 0) return 0;
    Index p = 1;
    for (int i = 0; i < rank_; ++i) p *= d_[i];
    return p;
  }

  bool operator==(const Shape& o) const {
    if (rank_ != o.rank_) return false;
    for (int i = 0; i < rank_; ++i)
      if (d_[i] != o.d_[i]) return false;
    return true;
  }
  bool operator!=(const Shape& o) const { return !(*this == o); }

  std::string str() const {
    std::ostringstream os;
    os << '(';
    for (int i = 0; i < rank_; ++i) os << (i ? "," : "") << d_[i];
    os << ')';
    return os.str();
  }

 private:
  std::array<Index, 4> d_{1, 1, 1, 1};
  int rank_ = 0;
};

// Contiguous row-major dense tensor over f32 or f64. Values are intended to
// be immutable once built; mutation is confined to construction helpers and
// the autodiff tape, so read-only sharing across threads is safe.
template <typename S>
class Tensor {
 public:
  using Scalar = S;

  Tensor() = default;

  explicit Tensor(Shape shape)
      : shape_(shape), data_(Storage::Zero(shape.numel())) {}

  static Tensor zeros(Shape shape) { return Tensor(shape); }

  static Tensor full(Shape shape, S value) {
    Tensor t(shape);
    t.data_.setConstant(value);
    return t;
  }

  static Tensor from(Shape shape, const std::vector<S>& values) {
    if (static_cast<Index>(values.size()) != shape.numel())
      throw ShapeError("tensor data length " + std::to_string(values.size()) +
                       " does not match shape " + shape.str());
    Tensor t(shape);
    for (Index i = 0; i < t.numel(); ++i) t.data_[i] = values[i];
    return t;
  }

  static Tensor uniform(Shape shape, SplitMix64& rng, S lo, S hi) {
    Tensor t(shape);
    for (Index i = 0; i < t.numel(); ++i)
      t.data_[i] = static_cast<S>(rng.uniform(static_cast<double>(lo),
                                              static_cast<double>(hi)));
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return shape_.rank(); }
  Index dim(int i) const { return shape_[i]; }
  Index numel() const { return data_.size(); }
  bool empty() const { return data_.size() == 0; }

  // NCHW accessors (rank-4 only).
  Index n() const { return shape_[0]; }
  Index c() const { return shape_[1]; }
  Index h() const { return shape_[2]; }
  Index w() const { return shape_[3]; }

  S* data() { return data_.data(); }
  const S* data() const { return data_.data(); }

  S& operator[](Index i) {
    assert(i >= 0 && i < numel());
    return data_[i];
  }
  S operator[](Index i) const {
    assert(i >= 0 && i < numel());
    return data_[i];
  }

  Index offset(Index n, Index c, Index h, Index w) const {
    assert(rank() == 4);
    return ((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w;
  }

  S& at(Index n, Index c, Index h, Index w) { return data_[offset(n, c, h, w)]; }
  S at(Index n, Index c, Index h, Index w) const {
    return data_[offset(n, c, h, w)];
  }

  // Same buffer under a new shape; element count must match.
  Tensor reshaped(Shape s) const {
    if (s.numel() != numel())
      throw ShapeError("reshape from " + shape_.str() + " to " + s.str() +
                       " changes element count");
    Tensor t = *this;
    t.shape_ = s;
    return t;
  }

  auto vec() { return Eigen::Map<Storage>(data_.data(), data_.size()); }
  auto vec() const {
    return Eigen::Map<const Storage>(data_.data(), data_.size());
  }

  bool same_bits(const Tensor& o) const {
    if (shape_ != o.shape_) return false;
    return std::memcmp(data_.data(), o.data_.data(),
                       sizeof(S) * static_cast<std::size_t>(numel())) == 0;
  }

 private:
  using Storage = Eigen::Matrix<S, Eigen::Dynamic, 1>;
  Shape shape_;
  Storage data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace axialvig
