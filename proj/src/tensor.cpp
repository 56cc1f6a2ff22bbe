#include "dlk/tensor.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace dlk {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) {
    throw ShapeError(fmt::format("{}: shape mismatch {} vs {}", op, a.shape_string(), b.shape_string()));
  }
}

void require_same_size(const Vector& a, const Vector& b, const char* op) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("{}: length mismatch {} vs {}", op, a.size(), b.size()));
  }
}

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill) : rows_(rows), cols_(cols) {
  if (rows == 0 || cols == 0) {
    throw ShapeError(fmt::format("matrix dimensions must be positive, got ({}, {})", rows, cols));
  }
  data_.assign(rows * cols, fill);
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows == 0 || cols == 0) {
    throw ShapeError(fmt::format("matrix dimensions must be positive, got ({}, {})", rows, cols));
  }
  if (data_.size() != rows * cols) {
    throw ShapeError(fmt::format("matrix ({}, {}) needs {} values, got {}", rows, cols, rows * cols, data_.size()));
  }
}

Matrix Matrix::from_rows(std::initializer_list<std::initializer_list<double>> rows) {
  if (rows.size() == 0) throw ShapeError("from_rows: no rows");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> data;
  data.reserve(rows.size() * cols);
  for (const auto& r : rows) {
    if (r.size() != cols) throw ShapeError("from_rows: ragged rows");
    data.insert(data.end(), r.begin(), r.end());
  }
  return Matrix(rows.size(), cols, std::move(data));
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::column(const Vector& v) { return Matrix(v.size(), 1, v.raw()); }

Matrix Matrix::row_vector(const Vector& v) { return Matrix(1, v.size(), v.raw()); }

Vector Matrix::row_copy(std::size_t i) const {
  auto r = row(i);
  return Vector(std::vector<double>(r.begin(), r.end()));
}

std::string Matrix::shape_string() const { return fmt::format("({}x{})", rows_, cols_); }

Tensor4::Tensor4(Dims dims, double fill) : dims_(dims) {
  data_.assign(dims[0] * dims[1] * dims[2] * dims[3], fill);
}

Tensor4::Tensor4(Dims dims, std::vector<double> data) : dims_(dims), data_(std::move(data)) {
  if (data_.size() != dims[0] * dims[1] * dims[2] * dims[3]) {
    throw ShapeError(fmt::format("tensor {} needs {} values, got {}", dlk::shape_string(dims),
                                 dims[0] * dims[1] * dims[2] * dims[3], data_.size()));
  }
}

std::string Tensor4::shape_string() const { return dlk::shape_string(dims_); }

std::string shape_string(const Tensor4::Dims& dims) {
  return fmt::format("({}x{}x{}x{})", dims[0], dims[1], dims[2], dims[3]);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError(fmt::format("matmul: {} times {}", a.shape_string(), b.shape_string()));
  }
  Matrix out(a.rows(), b.cols());
  // i-k-j order keeps the inner loop contiguous in both b and out.
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto out_row = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto b_row = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) out_row[j] += aik * b_row[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& a, const Vector& x) {
  if (a.cols() != x.size()) {
    throw ShapeError(fmt::format("matvec: {} times vector of length {}", a.shape_string(), x.size()));
  }
  Vector out(a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < a.cols(); ++j) acc += r[j] * x[j];
    out[i] = acc;
  }
  return out;
}

Vector matvec_transposed(const Matrix& a, const Vector& x) {
  if (a.rows() != x.size()) {
    throw ShapeError(fmt::format("matvec_transposed: {}^T times vector of length {}", a.shape_string(), x.size()));
  }
  Vector out(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j] * x[i];
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bv[i];
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  add_inplace(out, b);
  return out;
}

Matrix subtract(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "subtract");
  Matrix out = a;
  auto o = out.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bv[i];
  return out;
}

Matrix scale(const Matrix& a, double factor) {
  Matrix out = a;
  for (double& v : out.values()) v *= factor;
  return out;
}

Vector column_sum(const Matrix& a) {
  Vector out(a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto r = a.row(i);
    for (std::size_t j = 0; j < a.cols(); ++j) out[j] += r[j];
  }
  return out;
}

Matrix add_row_broadcast(const Matrix& a, const Vector& v) {
  if (a.cols() != v.size()) {
    throw ShapeError(fmt::format("add_row_broadcast: {} plus row of length {}", a.shape_string(), v.size()));
  }
  Matrix out = a;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < out.cols(); ++j) r[j] += v[j];
  }
  return out;
}

Matrix outer(const Vector& u, const Vector& v) {
  Matrix out(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) out(i, j) = u[i] * v[j];
  return out;
}

Matrix map(const Matrix& a, const std::function<double(double)>& fn) {
  Matrix out = a;
  for (double& v : out.values()) v = fn(v);
  return out;
}

double trace_inner(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "trace_inner");
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

double trace_inner(const Tensor4& a, const Tensor4& b) {
  if (a.dims() != b.dims()) {
    throw ShapeError(fmt::format("trace_inner: shape mismatch {} vs {}", a.shape_string(), b.shape_string()));
  }
  double acc = 0.0;
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < av.size(); ++i) acc += av[i] * bv[i];
  return acc;
}

double trace(const Matrix& a) {
  if (a.rows() != a.cols()) throw ShapeError(fmt::format("trace: {} is not square", a.shape_string()));
  double acc = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, i);
  return acc;
}

double frobenius_norm(const Matrix& a) { return std::sqrt(trace_inner(a, a)); }

double dot(const Vector& a, const Vector& b) {
  require_same_size(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

double norm(const Vector& a) { return std::sqrt(dot(a, a)); }

Vector add(const Vector& a, const Vector& b) {
  require_same_size(a, b, "add");
  Vector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] += b[i];
  return out;
}

Vector subtract(const Vector& a, const Vector& b) {
  require_same_size(a, b, "subtract");
  Vector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

Vector scale(const Vector& a, double factor) {
  Vector out = a;
  for (double& v : out) v *= factor;
  return out;
}

Vector hadamard(const Vector& a, const Vector& b) {
  require_same_size(a, b, "hadamard");
  Vector out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] *= b[i];
  return out;
}

Vector map(const Vector& a, const std::function<double(double)>& fn) {
  Vector out = a;
  for (double& v : out) v = fn(v);
  return out;
}

Matrix operator+(const Matrix& a, const Matrix& b) { return add(a, b); }
Matrix operator-(const Matrix& a, const Matrix& b) { return subtract(a, b); }
Matrix operator*(double factor, const Matrix& a) { return scale(a, factor); }
Vector operator+(const Vector& a, const Vector& b) { return add(a, b); }
Vector operator-(const Vector& a, const Vector& b) { return subtract(a, b); }
Vector operator*(double factor, const Vector& a) { return scale(a, factor); }

void add_inplace(Matrix& target, const Matrix& increment) {
  require_same_shape(target, increment, "add_inplace");
  auto t = target.values();
  auto inc = increment.values();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += inc[i];
}

void add_inplace(Vector& target, const Vector& increment) {
  require_same_size(target, increment, "add_inplace");
  for (std::size_t i = 0; i < target.size(); ++i) target[i] += increment[i];
}

void add_inplace(Tensor4& target, const Tensor4& increment) {
  if (target.dims() != increment.dims()) {
    throw ShapeError(fmt::format("add_inplace: shape mismatch {} vs {}", target.shape_string(), increment.shape_string()));
  }
  auto t = target.values();
  auto inc = increment.values();
  for (std::size_t i = 0; i < t.size(); ++i) t[i] += inc[i];
}

double max_abs_difference(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ShapeError(fmt::format("max_abs_difference: length mismatch {} vs {}", a.size(), b.size()));
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

}  // namespace dlk
