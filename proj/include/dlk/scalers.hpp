#pragma once

#include <string>

#include "dlk/tensor.hpp"

namespace dlk {

enum class ScalerKind { MinMax, Standard };

/// Per-column statistics. MinMax fills lo/hi (min, max); Standard fills
/// lo/hi with (mean, population standard deviation).
struct ScalerParams {
  ScalerKind kind = ScalerKind::MinMax;
  Vector lo;
  Vector hi;
};

ScalerParams fit_scaler(const Matrix& x, ScalerKind kind);

/// Applies the fitted per-column map. Constant columns (max == min, or σ == 0)
/// map to 0.
Matrix transform(const Matrix& x, const ScalerParams& params);

}  // namespace dlk
