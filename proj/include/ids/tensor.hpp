#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace ids {

#ifdef IDS_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t num_elements(const Shape& shape);

/// Dense row-major N-dimensional array. Plain value type; gradients live on
/// the autodiff node that owns a tensor (see autodiff.hpp).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, Real fill = Real(0));
  Tensor(Shape shape, std::vector<Real> data);

  static Tensor scalar(Real value);
  static Tensor vector(std::initializer_list<Real> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::initializer_list<Real> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real& at(std::size_t i, std::size_t j);
  Real at(std::size_t i, std::size_t j) const;
  Real& at(std::size_t i, std::size_t j, std::size_t k);
  Real at(std::size_t i, std::size_t j, std::size_t k) const;

  /// Same data under a new shape with an equal element count.
  Tensor reshaped(Shape shape) const;
  void fill(Real value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<Real> data_;
};

bool all_finite(const Tensor& t);

}  // namespace ids
