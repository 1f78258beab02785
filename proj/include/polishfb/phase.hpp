#pragma once

namespace polishfb {

/// Default decay rate of the canonical system, ln(100): the phase reaches
/// ~0.01 after one temporal scale tau.
double canonical_alpha();

/// State of the first-order canonical system tau * ds/dt = -alpha_s * s.
///
/// s starts at 1 and decays toward 0; u is the instantaneous phase
/// velocity ds/dt, kept consistent with s at every step.
struct PhaseState {
  double s = 1.0;    ///< phase, in (0, 1]
  double u = 0.0;    ///< phase velocity ds/dt, 1/s
  double tau = 1.0;  ///< temporal scaling, seconds

  static PhaseState initial(double tau, double alpha_s = canonical_alpha());
};

/// One explicit-Euler step of the canonical system.
/// Rejects dt <= 0 and steps large enough to drive s non-positive.
PhaseState canonical_step(const PhaseState& ph, double alpha_s, double dt);

} // namespace polishfb
