#include "polishfb/quaternion.hpp"

#include <cmath>
#include <stdexcept>

namespace polishfb {

UnitQuaternion::UnitQuaternion(double w_, double x_, double y_, double z_)
    : w(w_), x(x_), y(y_), z(z_) {
  const double n = std::sqrt(w * w + x * x + y * y + z * z);
  if (!(n > 0.0) || !std::isfinite(n)) {
    throw std::invalid_argument("UnitQuaternion: non-normalizable components");
  }
  if (std::abs(n - 1.0) > 1e-12) { // keep already-unit values bit-stable
    w /= n;
    x /= n;
    y /= n;
    z /= n;
  }
  if (w < 0.0) { // canonical hemisphere
    w = -w;
    x = -x;
    y = -y;
    z = -z;
  }
}

UnitQuaternion UnitQuaternion::from_axis_angle(const Vec3& axis, double angle) {
  const double n = axis.norm();
  if (n < 1e-12) return identity();
  const double half = 0.5 * angle;
  const Vec3 u = axis / n;
  return {std::cos(half), std::sin(half) * u.x(), std::sin(half) * u.y(),
          std::sin(half) * u.z()};
}

UnitQuaternion UnitQuaternion::conjugate() const {
  UnitQuaternion q;
  q.w = w;
  q.x = -x;
  q.y = -y;
  q.z = -z;
  return q;
}

double UnitQuaternion::norm() const {
  return std::sqrt(w * w + x * x + y * y + z * z);
}

UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b) {
  return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
          a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
          a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
          a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

Vec3 quat_log(const UnitQuaternion& q) {
  const Vec3 v(q.x, q.y, q.z);
  const double vn = v.norm();
  if (vn < 1e-6) {
    // theta/sin(theta) ~ 1 + vn^2/6, second order in vn
    return v * (1.0 + vn * vn / 6.0);
  }
  const double theta = std::acos(std::clamp(q.w, -1.0, 1.0));
  return v * (theta / vn);
}

UnitQuaternion quat_exp(const Vec3& r) {
  const double n = r.norm();
  if (n < 1e-6) {
    const double scale = 1.0 - n * n / 6.0; // sin(n)/n, second order
    return {std::cos(n), r.x() * scale, r.y() * scale, r.z() * scale};
  }
  const double scale = std::sin(n) / n;
  return {std::cos(n), r.x() * scale, r.y() * scale, r.z() * scale};
}

Vec3 orientation_error(const UnitQuaternion& q_goal, const UnitQuaternion& q) {
  return 2.0 * quat_log(quat_mul(q_goal, q.conjugate()));
}

} // namespace polishfb
