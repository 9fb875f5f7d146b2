// Prints how backspin and topspin change a table bounce.
#include <cstdio>

#include "spinrally/contact.hpp"

int main() {
  using namespace spinrally;
  const SurfaceFrame table{Vec3(0.0, 0.0, 0.76), Vec3::UnitZ(), Vec3::Zero()};
  const BallProperties ball;
  std::printf("%10s %10s %10s %10s\n", "w_y in", "v_x out", "v_z out", "w_y out");
  for (double wy : {-300.0, -150.0, 0.0, 150.0, 300.0}) {
    const BallState in{Vec3(0.0, 0.0, 0.78), Vec3(2.0, 0.0, -2.0), Vec3(0.0, wy, 0.0)};
    const ContactResult r = resolve_bounce(in, table, ContactParams::table(), ball);
    std::printf("%10.1f %10.4f %10.4f %10.2f\n", wy, r.ball.v.x(), r.ball.v.z(), r.ball.w.y());
  }
}
