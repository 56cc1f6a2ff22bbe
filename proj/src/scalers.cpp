#include "dlk/scalers.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

namespace dlk {

ScalerParams fit_scaler(const Matrix& x, ScalerKind kind) {
  ScalerParams p;
  p.kind = kind;
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  p.lo = Vector(d);
  p.hi = Vector(d);
  for (std::size_t j = 0; j < d; ++j) {
    if (kind == ScalerKind::MinMax) {
      double lo = x(0, j);
      double hi = x(0, j);
      for (std::size_t i = 1; i < n; ++i) {
        lo = std::min(lo, x(i, j));
        hi = std::max(hi, x(i, j));
      }
      p.lo[j] = lo;
      p.hi[j] = hi;
    } else {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += x(i, j);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) var += (x(i, j) - mean) * (x(i, j) - mean);
      var /= static_cast<double>(n);
      p.lo[j] = mean;
      p.hi[j] = std::sqrt(var);
    }
  }
  return p;
}

Matrix transform(const Matrix& x, const ScalerParams& params) {
  if (x.cols() != params.lo.size() || x.cols() != params.hi.size()) {
    throw ShapeError(fmt::format("scaler fitted on {} columns applied to {}", params.lo.size(), x.shape_string()));
  }
  Matrix out(x.rows(), x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    const double offset = params.lo[j];
    const double width = params.kind == ScalerKind::MinMax ? params.hi[j] - params.lo[j] : params.hi[j];
    for (std::size_t i = 0; i < x.rows(); ++i) {
      out(i, j) = width > 0.0 ? (x(i, j) - offset) / width : 0.0;
    }
  }
  return out;
}

}  // namespace dlk
