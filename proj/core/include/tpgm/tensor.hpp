#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace tpgm {

/// Dense rank-1 or rank-2 array of doubles, row-major.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros_vector(std::size_t n);
  static Tensor zeros_matrix(std::size_t rows, std::size_t cols);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);
  static Tensor zeros_like(const Tensor& other);

  std::size_t rank() const { return shape_.size(); }
  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  /// Rank-1 tensors are viewed as n x 1.
  std::size_t rows() const { return shape_[0]; }
  std::size_t cols() const { return rank() == 2 ? shape_[1] : 1; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  std::string shape_string() const;

  Tensor& operator+=(const Tensor& other);
  Tensor& operator-=(const Tensor& other);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

Tensor operator+(Tensor a, const Tensor& b);
Tensor operator-(Tensor a, const Tensor& b);
Tensor operator*(double s, Tensor a);

/// Throws ShapeError unless a and b have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);
/// Throws NumericDomainError if any entry is NaN or infinite.
void require_finite(const Tensor& t, const char* what);

double dot(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& m);
/// Matrix product of rank-2 tensors (rank-1 operands are n x 1).
Tensor matmul(const Tensor& a, const Tensor& b);
/// m * v for an r x c matrix and a length-c vector.
Tensor matvec(const Tensor& m, const Tensor& v);
/// m^T * v for an r x c matrix and a length-r vector.
Tensor matvec_transposed(const Tensor& m, const Tensor& v);
Tensor column(const Tensor& m, std::size_t c);

}  // namespace tpgm
