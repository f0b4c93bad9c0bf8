#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace egan {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor. Images use NHWC layout throughout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0)) : shape_(std::move(shape)) {
    data_.assign(count(shape_), fill);
  }
  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != count(shape_))
      throw DimensionError("tensor data size " + std::to_string(data_.size()) +
                           " does not match shape " + shape_string(shape_));
  }

  static std::size_t count(const Shape& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw DimensionError("negative dimension in " + shape_string(shape));
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Number of elements per leading-dimension row.
  std::size_t row_size() const { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

  void reshape(Shape shape) {
    if (count(shape) != data_.size())
      throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    shape_ = std::move(shape);
  }
  Tensor reshaped(Shape shape) const {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  /// Rows [begin, end) along the leading dimension.
  Tensor rows(int begin, int end) const {
    if (rank() == 0 || begin < 0 || end > shape_[0] || begin > end)
      throw DimensionError("row slice out of range for " + shape_string(shape_));
    Shape s = shape_;
    s[0] = end - begin;
    const std::size_t rs = row_size();
    return Tensor(s, std::vector<T>(data_.begin() + begin * rs, data_.begin() + end * rs));
  }

  Tensor row(int i) const {
    Tensor r = rows(i, i + 1);
    Shape s(shape_.begin() + 1, shape_.end());
    r.reshape(s);
    return r;
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Concatenates tensors along the leading dimension; trailing dims must agree.
template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) return {};
  Shape s = parts.front().shape();
  int total = 0;
  for (const auto& p : parts) {
    if (p.rank() != static_cast<int>(s.size()) || !std::equal(s.begin() + 1, s.end(), p.shape().begin() + 1))
      throw DimensionError("concat_rows: incompatible shapes " + shape_string(s) + " and " +
                           shape_string(p.shape()));
    total += p.dim(0);
  }
  s[0] = total;
  std::vector<T> values;
  values.reserve(Tensor<T>::count(s));
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  return Tensor<T>(s, std::move(values));
}

template <typename T>
Tensor<T> concat_rows(const Tensor<T>& a, const Tensor<T>& b) {
  const Tensor<T> parts[] = {a, b};
  return concat_rows<T>(parts);
}

/// Concatenates 2-D tensors along the last dimension (feature concatenation).
template <typename T>
Tensor<T> concat_features(std::span<const Tensor<T>* const> parts) {
  if (parts.empty()) return {};
  const int n = parts.front()->dim(0);
  int width = 0;
  for (const auto* p : parts) {
    if (p->rank() != 2 || p->dim(0) != n)
      throw DimensionError("concat_features: expected matching N×k matrices, got " + shape_string(p->shape()));
    width += p->dim(1);
  }
  Tensor<T> out({n, width});
  for (int i = 0; i < n; ++i) {
    T* dst = out.data() + static_cast<std::size_t>(i) * width;
    for (const auto* p : parts) {
      const int k = p->dim(1);
      std::copy_n(p->data() + static_cast<std::size_t>(i) * k, k, dst);
      dst += k;
    }
  }
  return out;
}

/// Inverse of concat_features: splits columns of an N×(sum widths) matrix.
template <typename T>
std::vector<Tensor<T>> split_features(const Tensor<T>& x, std::span<const int> widths) {
  const int n = x.dim(0);
  const int total = std::accumulate(widths.begin(), widths.end(), 0);
  if (x.rank() != 2 || x.dim(1) != total) throw DimensionError("split_features: width mismatch");
  std::vector<Tensor<T>> out;
  for (int w : widths) out.emplace_back(Shape{n, w});
  for (int i = 0; i < n; ++i) {
    const T* src = x.data() + static_cast<std::size_t>(i) * total;
    for (std::size_t p = 0; p < widths.size(); ++p) {
      std::copy_n(src, widths[p], out[p].data() + static_cast<std::size_t>(i) * widths[p]);
      src += widths[p];
    }
  }
  return out;
}

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

template <typename T>
MatrixMap<T> as_matrix(Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<std::size_t>(rows * cols) != t.size()) throw DimensionError("as_matrix: size mismatch");
  return MatrixMap<T>(t.data(), rows, cols);
}
template <typename T>
ConstMatrixMap<T> as_matrix(const Tensor<T>& t, Eigen::Index rows, Eigen::Index cols) {
  if (static_cast<std::size_t>(rows * cols) != t.size()) throw DimensionError("as_matrix: size mismatch");
  return ConstMatrixMap<T>(t.data(), rows, cols);
}

}  // namespace egan
