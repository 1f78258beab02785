#pragma once

#include "polishfb/types.hpp"

namespace polishfb {

/// Gaussian radial basis over the phase interval.
///
/// Centers c_i = i/M for i = 1..M; widths h_i = 1/(2 (c_{i+1} - c_i)^2)
/// with the last width duplicated. For the uniform spacing used here all
/// widths equal M^2/2.
struct RbfBasis {
  VecX centers;
  VecX widths;

  static RbfBasis make(int count);

  int size() const { return static_cast<int>(centers.size()); }

  /// Raw activations psi_i(s) = exp(-h_i (s - c_i)^2).
  VecX raw(double s) const;

  /// Normalized activations psi_i(s) / sum_j psi_j(s); sums to 1.
  VecX normalized(double s) const;
};

} // namespace polishfb
