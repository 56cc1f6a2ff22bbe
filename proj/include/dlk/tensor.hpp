#pragma once

// Dense row-major containers and the handful of linear-algebra primitives the
// rest of the library is written against. Everything is double precision.
//
// Shape rules are strict: the only implicit broadcast is add_row_broadcast
// (bias row added to every row of a batch). Any other mismatch throws
// ShapeError.

#include <array>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dlk {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Vector {
 public:
  Vector() = default;
  explicit Vector(std::size_t len, double fill = 0.0) : data_(len, fill) {}
  Vector(std::initializer_list<double> values) : data_(values) {}
  explicit Vector(std::vector<double> values) : data_(std::move(values)) {}

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& raw() const { return data_; }

  auto begin() { return data_.begin(); }
  auto end() { return data_.end(); }
  auto begin() const { return data_.begin(); }
  auto end() const { return data_.end(); }

  bool operator==(const Vector&) const = default;

 private:
  std::vector<double> data_;
};

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  /// Builds from nested row lists; every row must have the same length.
  static Matrix from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Matrix identity(std::size_t n);
  static Matrix zeros(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 0.0); }
  static Matrix ones(std::size_t rows, std::size_t cols) { return Matrix(rows, cols, 1.0); }
  /// Single-column matrix holding v.
  static Matrix column(const Vector& v);
  /// Single-row matrix holding v.
  static Matrix row_vector(const Vector& v);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }
  Vector row_copy(std::size_t i) const;

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& raw() const { return data_; }

  std::string shape_string() const;
  bool same_shape(const Matrix& other) const { return rows_ == other.rows_ && cols_ == other.cols_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Rank-4 row-major tensor. Images are stored as [batch, channel, height, width]
/// and kernels as [out_channel, in_channel, height, width].
class Tensor4 {
 public:
  using Dims = std::array<std::size_t, 4>;

  Tensor4() = default;
  explicit Tensor4(Dims dims, double fill = 0.0);
  Tensor4(Dims dims, std::vector<double> data);

  const Dims& dims() const { return dims_; }
  std::size_t dim(std::size_t axis) const { return dims_[axis]; }
  std::size_t size() const { return data_.size(); }

  std::size_t offset(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return ((a * dims_[1] + b) * dims_[2] + c) * dims_[3] + d;
  }
  double& operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[offset(a, b, c, d)];
  }
  double operator()(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[offset(a, b, c, d)];
  }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  const std::vector<double>& raw() const { return data_; }

  std::string shape_string() const;

  bool operator==(const Tensor4&) const = default;

 private:
  Dims dims_{0, 0, 0, 0};
  std::vector<double> data_;
};

std::string shape_string(const Tensor4::Dims& dims);

/// Mutable view of one parameter array, labelled for reports.
struct NamedBlock {
  std::string name;
  std::span<double> values;
};

// Matrix algebra.
Matrix matmul(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& a, const Vector& x);
/// aᵀx without materializing the transpose.
Vector matvec_transposed(const Matrix& a, const Vector& x);
Matrix transpose(const Matrix& a);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix add(const Matrix& a, const Matrix& b);
Matrix subtract(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double factor);
/// Entry k is the sum of column k.
Vector column_sum(const Matrix& a);
/// Adds v to every row of a.
Matrix add_row_broadcast(const Matrix& a, const Vector& v);
/// u vᵀ
Matrix outer(const Vector& u, const Vector& v);
Matrix map(const Matrix& a, const std::function<double(double)>& fn);

/// ⟨A,B⟩ = tr(BᵀA) = Σ aᵢⱼ bᵢⱼ.
double trace_inner(const Matrix& a, const Matrix& b);
double trace_inner(const Tensor4& a, const Tensor4& b);
double trace(const Matrix& a);
double frobenius_norm(const Matrix& a);

// Vector algebra.
double dot(const Vector& a, const Vector& b);
double norm(const Vector& a);
Vector add(const Vector& a, const Vector& b);
Vector subtract(const Vector& a, const Vector& b);
Vector scale(const Vector& a, double factor);
Vector hadamard(const Vector& a, const Vector& b);
Vector map(const Vector& a, const std::function<double(double)>& fn);

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix operator*(double factor, const Matrix& a);
Vector operator+(const Vector& a, const Vector& b);
Vector operator-(const Vector& a, const Vector& b);
Vector operator*(double factor, const Vector& a);

/// In-place accumulation helpers used by backward passes.
void add_inplace(Matrix& target, const Matrix& increment);
void add_inplace(Vector& target, const Vector& increment);
void add_inplace(Tensor4& target, const Tensor4& increment);

double max_abs_difference(std::span<const double> a, std::span<const double> b);

}  // namespace dlk
