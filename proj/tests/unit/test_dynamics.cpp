#include <catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "spinrally/dynamics.hpp"

using namespace spinrally;
using Catch::Approx;

namespace {

// Classic RK4 on (p, v) with constant spin; independent of step_ball.
BallState rk4_step(const BallState& s, const AeroCoefficients& a, double h) {
  auto acc = [&](const Vec3& v) { return Vec3(kGravity - a.k_d * v.norm() * v + a.k_m * s.w.cross(v)); };
  const Vec3 k1v = acc(s.v), k1p = s.v;
  const Vec3 k2v = acc(s.v + 0.5 * h * k1v), k2p = s.v + 0.5 * h * k1v;
  const Vec3 k3v = acc(s.v + 0.5 * h * k2v), k3p = s.v + 0.5 * h * k2v;
  const Vec3 k4v = acc(s.v + h * k3v), k4p = s.v + h * k3v;
  BallState o = s;
  o.v = s.v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v);
  o.p = s.p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p);
  return o;
}

// Table-plane contact point of an RK4 flight, refined by bisection on the step.
Vec3 rk4_table_contact(BallState s, const AeroCoefficients& a, double h, double r) {
  const TableGeometry g;
  const double top = g.height + r;
  for (int k = 0; k < 10'000'000; ++k) {
    const BallState n = rk4_step(s, a, h);
    if (n.p.z() < top) {
      double lo = 0.0, hi = h;
      for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (rk4_step(s, a, mid).p.z() < top ? hi : lo) = mid;
      }
      return rk4_step(s, a, 0.5 * (lo + hi)).p;
    }
    s = n;
  }
  FAIL("no contact");
  return {};
}

BallState serve() {
  BallState s;
  s.p = {1.2, 0.1, 1.05};
  s.v = {-5.5, -0.3, 0.5};
  s.w = {0.0, 20.0, 30.0};
  return s;
}

}  // namespace

TEST_CASE("aero_accel hand values") {
  BallState s;
  s.w = {3, 4, 5};
  CHECK(aero_accel(s, {0.1, 0.05}) == Vec3(0, 0, -9.81));

  s.v = {1, 2, 3};
  CHECK(aero_accel(s, {0.0, 0.0}) == Vec3(0, 0, -9.81));

  s = {};
  s.v = {3, 4, 0};
  const Vec3 d = aero_accel(s, {0.1, 0.0});
  CHECK(d.x() == Approx(-1.5).epsilon(1e-15));
  CHECK(d.y() == Approx(-2.0).epsilon(1e-15));
  CHECK(d.z() == -9.81);

  s = {};
  s.v = {1, 0, 0};
  s.w = {0, 0, 10};
  const Vec3 m = aero_accel(s, {0.0, 0.05});
  CHECK(m.x() == 0.0);
  CHECK(m.y() == Approx(0.5).epsilon(1e-15));
  CHECK(m.z() == -9.81);
}

TEST_CASE("step_ball update rule") {
  BallState s;
  s.p = {0, 0, 1};
  CHECK(step_ball(s, {}, 0.0) == s);

  const BallState n = step_ball(s, {}, 0.01);
  CHECK(n.v.z() == Approx(-0.0981).epsilon(1e-14));
  CHECK(n.p.z() == Approx(1.0 - 0.000981).epsilon(1e-14));
  CHECK(n.v.x() == 0.0);
  CHECK(n.w == s.w);
}

TEST_CASE("free flight keeps spin, clamps it and optionally decays it") {
  BallState s = serve();
  const BallState n = step_ball(s, {0.1, 0.05}, 1.0 / 360.0);
  CHECK(n.w == s.w);

  s.w = {0, 0, 900};
  CHECK(step_ball(s, {}, 0.001).w.norm() == Approx(600.0).epsilon(1e-12));

  FlightOptions opt;
  opt.spin_decay = 2.0;
  s.w = {0, 100, 0};
  CHECK(step_ball(s, {}, 0.5, opt).w.y() == Approx(100.0 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("drag-only flight without gravity never speeds up") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-10, 10);
  FlightOptions opt;
  opt.gravity = Vec3::Zero();
  for (int trial = 0; trial < 200; ++trial) {
    BallState s;
    s.v = {u(rng), u(rng), u(rng)};
    s.w = {u(rng), u(rng), u(rng)};
    const AeroCoefficients a{0.05 + 0.01 * std::abs(u(rng)), 0.0};
    double prev = s.v.norm();
    for (int k = 0; k < 100; ++k) {
      s = step_ball(s, a, 1.0 / 360.0, opt);
      CHECK(s.v.norm() <= prev);
      prev = s.v.norm();
    }
  }
}

TEST_CASE("no forces leaves velocity and kinetic energy unchanged") {
  FlightOptions opt;
  opt.gravity = Vec3::Zero();
  BallState s = serve();
  const Vec3 v0 = s.v;
  for (int k = 0; k < 1000; ++k) s = step_ball(s, {}, 1.0 / 360.0, opt);
  CHECK(s.v == v0);
}

TEST_CASE("Magnus acceleration is orthogonal to velocity") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int trial = 0; trial < 1000; ++trial) {
    BallState s;
    s.v = 10.0 * Vec3(u(rng), u(rng), u(rng));
    s.w = 400.0 * Vec3(u(rng), u(rng), u(rng));
    const Vec3 m = aero_accel(s, {0.0, 0.08}, Vec3::Zero());
    CHECK(std::abs(m.dot(s.v)) <= 1e-12 * std::max(1.0, m.norm() * s.v.norm()));
  }
}

TEST_CASE("simulate_flight examples") {
  const TableGeometry g;
  const double r = BallProperties{}.radius;

  SECTION("free-fall drop meets the table at the closed-form time") {
    BallState s;
    s.p = {-0.5, 0.0, 1.0 + g.height};
    const double exact = std::sqrt(2.0 * (1.0 - r) / 9.81);
    const FlightResult f = simulate_flight(s, {}, 1.0 / 720.0, 2.0, g, r);
    REQUIRE(f.event);
    CHECK(f.event->surface == Surface::table);
    CHECK(std::abs(f.event->t - exact) < 1e-3);

    // Semi-implicit Euler leads free fall by half a step.
    const double dt = 1.0 / 360.0;
    const FlightResult c = simulate_flight(s, {}, dt, 2.0, g, r);
    REQUIRE(c.event);
    CHECK(std::abs((exact - c.event->t) - 0.5 * dt) < 1e-4);
  }

  SECTION("short upward launch produces no event") {
    BallState s;
    s.p = {-3.0, 0.0, 1.0};
    s.v = {-1.0, 0.0, 2.0};
    const FlightResult f = simulate_flight(s, {}, 1.0 / 360.0, 0.01, g, r);
    CHECK_FALSE(f.event);
    CHECK(f.samples.size() >= 1);
  }

  SECTION("contact point agrees with a fine RK4 reference") {
    const AeroCoefficients a{0.12, 0.04};
    const double dt = 1.0 / 360.0;
    const Vec3 ref = rk4_table_contact(serve(), a, dt / 100.0, r);
    const FlightResult fine = simulate_flight(serve(), a, dt / 100.0, 2.0, g, r);
    REQUIRE(fine.event);
    REQUIRE(fine.event->surface == Surface::table);
    CHECK((fine.event->ball.p - ref).norm() < 1e-3);

    // At the production step the first-order error is about a centimetre.
    const FlightResult coarse = simulate_flight(serve(), a, dt, 2.0, g, r);
    REQUIRE(coarse.event);
    CHECK((coarse.event->ball.p - ref).norm() < 2e-2);
  }
}

TEST_CASE("contact point converges at first order in dt") {
  const TableGeometry g;
  const AeroCoefficients a{0.12, 0.04};
  const Vec3 ref = rk4_table_contact(serve(), a, 1.0 / 36000.0, BallProperties{}.radius);
  auto err = [&](double dt) {
    const FlightResult f = simulate_flight(serve(), a, dt, 2.0, g);
    REQUIRE(f.event);
    return (f.event->ball.p - ref).norm();
  };
  const double e1 = err(1.0 / 180.0), e2 = err(1.0 / 360.0), e3 = err(1.0 / 720.0);
  // Halving dt roughly halves the error.
  CHECK(e1 / e2 > 1.5);
  CHECK(e1 / e2 < 2.7);
  CHECK(e2 / e3 > 1.5);
  CHECK(e2 / e3 < 2.7);
}

TEST_CASE("flight is bit-identical across runs") {
  const TableGeometry g;
  const FlightResult a = simulate_flight(serve(), {0.1, 0.05}, 1.0 / 360.0, 2.0, g);
  const FlightResult b = simulate_flight(serve(), {0.1, 0.05}, 1.0 / 360.0, 2.0, g);
  REQUIRE(a.samples.size() == b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) CHECK(a.samples[i].ball == b.samples[i].ball);
  REQUIRE(a.event);
  REQUIRE(b.event);
  CHECK(a.event->ball == b.event->ball);
}

TEST_CASE("hollow-sphere inertia default") {
  const BallProperties b;
  CHECK(b.inertia == Approx(2.0 / 3.0 * b.mass * b.radius * b.radius).epsilon(1e-12));
  const BallProperties h = BallProperties::hollow(3e-3, 0.021);
  CHECK(h.inertia == Approx(2.0 / 3.0 * 3e-3 * 0.021 * 0.021).epsilon(1e-15));
}
