#include "polishfb/episode.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

namespace polishfb {

namespace {

constexpr const char* kHeader = "t,px,py,pz,qw,qx,qy,qz,fx,fy,fz,tx,ty,tz";

void append_double(std::string& out, double v) {
  std::array<char, 32> buf;
  auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) throw std::runtime_error("episode csv: float format failed");
  out.append(buf.data(), ptr);
}

double parse_double(std::string_view field, const std::filesystem::path& path) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) {
    throw std::runtime_error("episode csv: bad numeric field '" + std::string(field) +
                             "' in " + path.string());
  }
  return v;
}

} // namespace

void validate_episode(const EpisodeRecord& rec, double dt) {
  for (std::size_t k = 0; k < rec.samples.size(); ++k) {
    const auto& s = rec.samples[k];
    if (std::abs(s.q.norm() - 1.0) > 1e-6) {
      throw std::runtime_error("episode: non-unit quaternion at row " + std::to_string(k));
    }
    if (k > 0) {
      const double spacing = s.t - rec.samples[k - 1].t;
      if (!(spacing > 0.0) || std::abs(spacing - dt) > 1e-9) {
        throw std::runtime_error("episode: bad sample spacing at row " + std::to_string(k));
      }
    }
  }
}

void write_episode_csv(const std::filesystem::path& path, const EpisodeRecord& rec) {
  std::string out;
  out.reserve(rec.samples.size() * 200 + 64);
  out += kHeader;
  out += '\n';
  for (const auto& s : rec.samples) {
    append_double(out, s.t);
    const double row[13] = {s.p.x(), s.p.y(), s.p.z(), s.q.w,    s.q.x,
                            s.q.y,   s.q.z,   s.f[0],  s.f[1],   s.f[2],
                            s.f[3],  s.f[4],  s.f[5]};
    for (double v : row) {
      out += ',';
      append_double(out, v);
    }
    out += '\n';
  }
  std::ofstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("episode csv: cannot open for write: " + path.string());
  file << out;
  if (!file) throw std::runtime_error("episode csv: write failed: " + path.string());
}

EpisodeRecord read_episode_csv(const std::filesystem::path& path) {
  std::ifstream file(path, std::ios::binary);
  if (!file) throw std::runtime_error("episode csv: cannot open: " + path.string());
  std::string line;
  if (!std::getline(file, line) || line != kHeader) {
    throw std::runtime_error("episode csv: missing or unexpected header in " + path.string());
  }
  EpisodeRecord rec;
  while (std::getline(file, line)) {
    if (line.empty()) continue;
    std::array<double, 14> v{};
    std::size_t pos = 0;
    for (int i = 0; i < 14; ++i) {
      const std::size_t comma = line.find(',', pos);
      const bool last = (i == 13);
      if (last != (comma == std::string::npos)) {
        throw std::runtime_error("episode csv: wrong field count in " + path.string());
      }
      const std::size_t end = last ? line.size() : comma;
      v[i] = parse_double(std::string_view(line).substr(pos, end - pos), path);
      pos = end + 1;
    }
    EpisodeSample s;
    s.t = v[0];
    s.p = Vec3(v[1], v[2], v[3]);
    s.q = UnitQuaternion(v[4], v[5], v[6], v[7]);
    for (int i = 0; i < 6; ++i) s.f[i] = v[8 + i];
    rec.samples.push_back(s);
  }
  return rec;
}

} // namespace polishfb
