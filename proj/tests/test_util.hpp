#pragma once

#include <cmath>
#include <fstream>
#include <string>

#include <gtest/gtest.h>
#include <json.hpp>

#include "dlk/tensor.hpp"

namespace dlk::test {

using nlohmann::json;

inline const json& oracles() {
  static const json data = [] {
    std::ifstream in(std::string(DLK_FIXTURE_DIR) + "/oracles.json");
    if (!in) throw std::runtime_error("missing oracles.json");
    return json::parse(in);
  }();
  return data;
}

inline Matrix to_matrix(const json& rows) {
  std::vector<double> data;
  for (const auto& r : rows)
    for (double v : r) data.push_back(v);
  return Matrix(rows.size(), rows[0].size(), std::move(data));
}

inline Vector to_vector(const json& values) { return Vector(values.get<std::vector<double>>()); }

inline Tensor4 to_tensor(const json& t) {
  const auto d = t["dims"].get<std::vector<std::size_t>>();
  return Tensor4({d[0], d[1], d[2], d[3]}, t["data"].get<std::vector<double>>());
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300});
}

/// Max over entries of |a − e| / max(|a|, |e|, floor).
inline double max_rel_error(std::span<const double> a, std::span<const double> e, double floor = 1e-12) {
  EXPECT_EQ(a.size(), e.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < std::min(a.size(), e.size()); ++i) {
    worst = std::max(worst, std::abs(a[i] - e[i]) / std::max({std::abs(a[i]), std::abs(e[i]), floor}));
  }
  return worst;
}

}  // namespace dlk::test
