#include "polishfb/phase.hpp"

#include <cmath>
#include <stdexcept>

namespace polishfb {

double canonical_alpha() { return std::log(100.0); }

PhaseState PhaseState::initial(double tau, double alpha_s) {
  if (!(tau > 0.0)) throw std::invalid_argument("PhaseState: tau must be > 0");
  PhaseState ph;
  ph.s = 1.0;
  ph.u = -alpha_s / tau;
  ph.tau = tau;
  return ph;
}

PhaseState canonical_step(const PhaseState& ph, double alpha_s, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("canonical_step: dt must be > 0");
  const double decay = alpha_s * dt / ph.tau;
  if (decay >= 1.0) {
    throw std::invalid_argument("canonical_step: dt too large, phase would hit zero");
  }
  PhaseState next = ph;
  next.s = ph.s * (1.0 - decay);
  next.u = -alpha_s * next.s / ph.tau;
  return next;
}

} // namespace polishfb
