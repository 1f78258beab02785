#pragma once

// Internal JSON helpers shared by the persistence code. Matrices are
// stored row-major with explicit dimensions.

#include <nlohmann/json.hpp>
#include <stdexcept>
#include <vector>

#include "polishfb/rbf.hpp"
#include "polishfb/types.hpp"

namespace polishfb::detail {

inline nlohmann::json mat_to_json(const MatX& w) {
  std::vector<double> flat(static_cast<std::size_t>(w.size()));
  for (Eigen::Index r = 0; r < w.rows(); ++r)
    for (Eigen::Index c = 0; c < w.cols(); ++c)
      flat[static_cast<std::size_t>(r * w.cols() + c)] = w(r, c);
  return {{"rows", w.rows()}, {"cols", w.cols()}, {"data", flat}};
}

inline MatX mat_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto flat = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(flat.size()) != rows * cols) {
    throw std::runtime_error("json: matrix size mismatch");
  }
  MatX w(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c)
      w(r, c) = flat[static_cast<std::size_t>(r * cols + c)];
  return w;
}

inline nlohmann::json vec_to_json(const VecX& v) {
  return std::vector<double>(v.begin(), v.end());
}

inline VecX vec_from_json(const nlohmann::json& j) {
  const auto flat = j.get<std::vector<double>>();
  return Eigen::Map<const VecX>(flat.data(), static_cast<Eigen::Index>(flat.size()));
}

inline nlohmann::json basis_to_json(const RbfBasis& b) {
  return {{"count", b.size()},
          {"centers", vec_to_json(b.centers)},
          {"widths", vec_to_json(b.widths)}};
}

inline RbfBasis basis_from_json(const nlohmann::json& j) {
  RbfBasis b;
  b.centers = vec_from_json(j.at("centers"));
  b.widths = vec_from_json(j.at("widths"));
  if (b.centers.size() != b.widths.size() ||
      b.size() != j.at("count").get<int>()) {
    throw std::runtime_error("json: basis size mismatch");
  }
  return b;
}

} // namespace polishfb::detail
