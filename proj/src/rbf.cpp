#include "polishfb/rbf.hpp"

#include <cmath>
#include <stdexcept>

namespace polishfb {

RbfBasis RbfBasis::make(int count) {
  if (count < 1) throw std::invalid_argument("RbfBasis: count must be >= 1");
  RbfBasis b;
  b.centers.resize(count);
  b.widths.resize(count);
  const int m = count;
  for (int i = 0; i < m; ++i) {
    b.centers[i] = static_cast<double>(i + 1) / m;
  }
  for (int i = 0; i + 1 < m; ++i) {
    const double dc = b.centers[i + 1] - b.centers[i];
    b.widths[i] = 1.0 / (2.0 * dc * dc);
  }
  b.widths[m - 1] = (m >= 2) ? b.widths[m - 2] : 0.5 * m * m;
  return b;
}

VecX RbfBasis::raw(double s) const {
  VecX psi(size());
  for (int i = 0; i < size(); ++i) {
    const double d = s - centers[i];
    psi[i] = std::exp(-widths[i] * d * d);
  }
  return psi;
}

VecX RbfBasis::normalized(double s) const {
  VecX psi = raw(s);
  return psi / psi.sum(); // strictly positive denominator
}

} // namespace polishfb
