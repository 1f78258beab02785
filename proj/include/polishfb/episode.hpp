#pragma once

#include <filesystem>
#include <vector>

#include "polishfb/quaternion.hpp"
#include "polishfb/types.hpp"

namespace polishfb {

/// One time-stamped sample of an executed episode: tool pose plus the
/// measured Cartesian wrench (force N, torque N m).
struct EpisodeSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  UnitQuaternion q;
  Vec6 f = Vec6::Zero();
};

/// A recorded episode, nominally sampled at 50 Hz.
struct EpisodeRecord {
  std::vector<EpisodeSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  double duration() const {
    return samples.empty() ? 0.0 : samples.back().t - samples.front().t;
  }
};

/// Enforces the recorded-data contract: strictly increasing t with
/// spacing dt +- 1e-9 and unit-norm quaternions. Throws on violation.
void validate_episode(const EpisodeRecord& rec, double dt = 0.02);

/// CSV round-trip. Header `t,px,py,pz,qw,qx,qy,qz,fx,fy,fz,tx,ty,tz`,
/// UTF-8, '.' decimal separator, shortest round-trip float formatting so
/// parse(serialize(rec)) is lossless and re-serialization is byte-stable.
void write_episode_csv(const std::filesystem::path& path, const EpisodeRecord& rec);
EpisodeRecord read_episode_csv(const std::filesystem::path& path);

} // namespace polishfb
