#pragma once

#include "polishfb/types.hpp"

namespace polishfb {

/// Unit quaternion in (w, x, y, z) storage order.
///
/// Construction renormalizes and canonicalizes to the w >= 0 hemisphere,
/// so q and -q collapse to one representative and orientation errors
/// derived from the log map stay continuous.
struct UnitQuaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  UnitQuaternion() = default;
  UnitQuaternion(double w_, double x_, double y_, double z_);

  static UnitQuaternion identity() { return {}; }
  static UnitQuaternion from_axis_angle(const Vec3& axis, double angle);

  UnitQuaternion conjugate() const;
  double norm() const;
};

/// Hamilton product, renormalized.
UnitQuaternion quat_mul(const UnitQuaternion& a, const UnitQuaternion& b);

/// Log map, half-angle convention: log(q) = arccos(w) * v / ||v||.
/// Series expansion near the identity keeps the map continuous.
Vec3 quat_log(const UnitQuaternion& q);

/// Exponential map, inverse of quat_log on the w >= 0 hemisphere.
UnitQuaternion quat_exp(const Vec3& r);

/// Goal-relative orientation error e = 2 log(q_goal * conj(q)).
Vec3 orientation_error(const UnitQuaternion& q_goal, const UnitQuaternion& q);

} // namespace polishfb
