#pragma once

#include <cmath>
#include <optional>

#include <Eigen/Core>

namespace spinrally {

using Vec3 = Eigen::Vector3d;

inline const Vec3 kGravity{0.0, 0.0, -9.81};

/// ITTF table. Robot court is x in [-length/2, 0], opponent court x in [0, length/2],
/// net plane x = 0, table surface at z = height.
struct TableGeometry {
  double length = 2.74;
  double width = 1.525;
  double height = 0.76;
  double net_height = 0.1525;
  double net_overhang = 0.1525;  // net posts stand this far outside each sideline
  double bounds = 6.0;           // |x|,|y| beyond this is out of bounds

  double net_top() const { return height + net_height; }
  bool over_table(double x, double y) const {
    return std::abs(x) <= 0.5 * length && std::abs(y) <= 0.5 * width;
  }
};

enum class Surface { table, net, floor };

struct SurfaceCrossing {
  Surface surface;
  double fraction;  // in [0, 1] along the step
};

/// Fraction along prev->next at which the net plane x = 0 is crossed, if it is.
inline std::optional<double> net_plane_fraction(const Vec3& prev, const Vec3& next) {
  if ((prev.x() > 0.0 && next.x() <= 0.0) || (prev.x() < 0.0 && next.x() >= 0.0)) {
    return prev.x() / (prev.x() - next.x());
  }
  return std::nullopt;
}

/// True if a ball centre passing the net plane at (y, z) touches the net.
inline bool hits_net(const TableGeometry& g, double y, double z, double r) {
  return z < g.net_top() + r && z > g.height - r && std::abs(y) <= 0.5 * g.width + g.net_overhang;
}

/// Earliest contact of a ball of radius r with the table top, the net or the
/// floor while its centre moves from prev to next.
inline std::optional<SurfaceCrossing> detect_surface_crossing(const Vec3& prev, const Vec3& next,
                                                              const TableGeometry& g, double r) {
  std::optional<SurfaceCrossing> best;
  auto consider = [&](Surface s, double f) {
    if (!best || f < best->fraction) best = SurfaceCrossing{s, f};
  };

  const double top = g.height + r;
  if (prev.z() >= top && next.z() < top) {
    const double f = (prev.z() - top) / (prev.z() - next.z());
    const Vec3 c = prev + f * (next - prev);
    if (g.over_table(c.x(), c.y())) consider(Surface::table, f);
  }
  if (auto f = net_plane_fraction(prev, next)) {
    const Vec3 c = prev + *f * (next - prev);
    if (hits_net(g, c.y(), c.z(), r)) consider(Surface::net, *f);
  }
  if (prev.z() >= r && next.z() < r) {
    consider(Surface::floor, (prev.z() - r) / (prev.z() - next.z()));
  }
  return best;
}

}  // namespace spinrally
