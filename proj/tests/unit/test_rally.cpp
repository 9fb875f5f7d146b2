#include <catch_amalgamated.hpp>

#include <random>
#include <set>

#include "spinrally/rally.hpp"

using namespace spinrally;
using S = TrajectoryState;
using E = EventKind;
using R = TerminalReason;

namespace {

RallyEvent ev(E k, double t = 0.0) { return {k, t, {}}; }

std::vector<RallyEvent> evs(std::initializer_list<E> ks) {
  std::vector<RallyEvent> v;
  double t = 0.0;
  for (E k : ks) v.push_back(ev(k, t += 0.1));
  return v;
}

bool is_terminal(const Advance& a, R r) {
  const auto* t = std::get_if<Terminal>(&a);
  return t && t->reason == r;
}

BallState at(double x, double y, double z, Vec3 v = Vec3(-5, 0, -1)) { return {Vec3(x, y, z), v, Vec3::Zero()}; }

}  // namespace

TEST_CASE("advance_state examples") {
  CHECK(std::get<S>(advance_state(S::T0, E::launch)) == S::T01);
  CHECK(std::get<S>(advance_state(S::T12, E::racket_contact)) == S::T2);
  CHECK(is_terminal(advance_state(S::T01, E::bounce_opponent_court), R::wrong_first_bounce));
  CHECK(is_terminal(advance_state(S::T23, E::floor_contact), R::missed_opponent_court));
}

TEST_CASE("the legal cycle returns to T0 after eight transitions") {
  S s = S::T0;
  int transitions = 0;
  auto apply = [&](E e) {
    s = std::get<S>(advance_state(s, e));
    ++transitions;
  };
  auto tick = [&] {
    REQUIRE(is_instantaneous(s));
    s = auto_advance(s);
    ++transitions;
  };
  apply(E::launch);
  CHECK(s == S::T01);
  apply(E::bounce_robot_court);
  CHECK(s == S::T1);
  tick();
  CHECK(s == S::T12);
  apply(E::racket_contact);
  CHECK(s == S::T2);
  tick();
  CHECK(s == S::T23);
  apply(E::bounce_opponent_court);
  CHECK(s == S::T3);
  tick();
  CHECK(s == S::T30);
  apply(E::launch);
  CHECK(s == S::T0);
  CHECK(transitions == 8);
}

TEST_CASE("net crossings keep the continuous state") {
  CHECK(std::get<S>(advance_state(S::T01, E::net_crossed)) == S::T01);
  CHECK(std::get<S>(advance_state(S::T23, E::net_crossed)) == S::T23);
}

TEST_CASE("fuzzed event streams never jump more than one state") {
  std::mt19937_64 rng(7);
  std::uniform_int_distribution<int> pick(0, 8);
  for (int run = 0; run < 20'000; ++run) {
    S s = S::T0;
    for (int k = 0; k < 40; ++k) {
      if (is_instantaneous(s) && s != S::T0 && (rng() & 1)) {
        const S n = auto_advance(s);
        CHECK(index_of(n) == (index_of(s) + 1) % 8);
        s = n;
        continue;
      }
      const Advance a = advance_state(s, static_cast<E>(pick(rng)));
      if (std::holds_alternative<Terminal>(a)) break;
      const S n = std::get<S>(a);
      const int step = (index_of(n) - index_of(s) + 8) % 8;
      CHECK(step <= 1);
      s = n;
    }
  }
}

TEST_CASE("every terminal reason is reachable") {
  std::set<R> seen;
  auto note = [&](S s, E e) {
    const Advance a = advance_state(s, e);
    if (const auto* t = std::get_if<Terminal>(&a)) seen.insert(t->reason);
  };
  note(S::T01, E::bounce_opponent_court);  // wrong_first_bounce
  note(S::T01, E::net_contact);            // net_inbound
  note(S::T01, E::floor_contact);          // missed_robot_court
  note(S::T01, E::racket_contact);         // volley
  note(S::T12, E::bounce_robot_court);     // double_bounce
  note(S::T12, E::out_of_bounds);          // missed_ball
  note(S::T23, E::bounce_robot_court);     // own_court
  note(S::T23, E::net_contact);            // net_return
  note(S::T23, E::out_of_bounds);          // missed_opponent_court
  note(S::T23, E::racket_contact);         // double_hit
  note(S::T12, E::body_contact);           // body_contact
  note(S::T1, E::racket_contact);          // skipped_state
  // time_limit is raised by the arena, not by the cycle.
  CHECK(seen.size() == kNumTerminalReasons - 1);
  CHECK_FALSE(seen.count(R::time_limit));

  std::set<std::string_view> names;
  for (int i = 0; i < kNumTerminalReasons; ++i) names.insert(to_string(static_cast<R>(i)));
  CHECK(names.size() == static_cast<std::size_t>(kNumTerminalReasons));
  for (auto n : names)
    for (char c : n) CHECK(((c >= 'a' && c <= 'z') || c == '_'));
}

TEST_CASE("events out of an instantaneous state skip a state") {
  for (S s : {S::T1, S::T2, S::T3}) {
    for (int k = 0; k < 9; ++k) {
      const E e = static_cast<E>(k);
      const Advance a = advance_state(s, e);
      if (e == E::body_contact) {
        CHECK(is_terminal(a, R::body_contact));
      } else {
        CHECK(is_terminal(a, R::skipped_state));
      }
    }
  }
}

TEST_CASE("classify_event examples") {
  const TableGeometry g;
  const double r = 0.02;

  SECTION("high crossing of the net plane") {
    auto e = classify_event(at(0.01, 0, g.height + 0.30), at(-0.01, 0, g.height + 0.30), g, {}, 1.0, 0.01);
    REQUIRE(e);
    CHECK(e->kind == E::net_crossed);
  }
  SECTION("low crossing hits the net") {
    auto e = classify_event(at(0.01, 0, g.height + 0.05), at(-0.01, 0, g.height + 0.05), g, {}, 1.0, 0.01);
    REQUIRE(e);
    CHECK(e->kind == E::net_contact);
  }
  SECTION("descending through the table on the robot half") {
    auto e = classify_event(at(-0.5, 0, g.height + r + 0.01), at(-0.5, 0, g.height + r - 0.01), g, {}, 1.0,
                            0.01);
    REQUIRE(e);
    CHECK(e->kind == E::bounce_robot_court);
    CHECK(e->time == Catch::Approx(0.995));
  }
  SECTION("descending on the opponent half, and x = 0 counts as the opponent court") {
    auto e = classify_event(at(0.5, 0, g.height + r + 0.01), at(0.5, 0, g.height + r - 0.01), g, {}, 1.0, 0.01);
    REQUIRE(e);
    CHECK(e->kind == E::bounce_opponent_court);
    auto edge = classify_crossing(at(0.0, 0.8, g.height + r + 0.01), at(0.0, 0.7, g.height + r - 0.01), g, r);
    REQUIRE(edge);
    CHECK(edge->kind == E::bounce_opponent_court);
  }
  SECTION("floor and out of bounds") {
    auto f = classify_event(at(-2.0, 0, 0.03), at(-2.0, 0, 0.01), g, {}, 1.0, 0.01);
    REQUIRE(f);
    CHECK(f->kind == E::floor_contact);
    auto o = classify_event(at(-5.99, 0, 3.0), at(-6.01, 0, 3.0), g, {}, 1.0, 0.01);
    REQUIRE(o);
    CHECK(o->kind == E::out_of_bounds);
  }
  SECTION("robot contacts take precedence") {
    const BallState a = at(-0.5, 0, g.height + r + 0.01), b = at(-0.5, 0, g.height + r - 0.01);
    CHECK(classify_event(a, b, g, {true, false}, 1.0, 0.01)->kind == E::racket_contact);
    CHECK(classify_event(a, b, g, {false, true}, 1.0, 0.01)->kind == E::body_contact);
  }
  SECTION("quiet step") {
    CHECK_FALSE(classify_event(at(-0.5, 0, 1.2), at(-0.52, 0, 1.2), g, {}, 1.0, 0.01));
  }
  SECTION("outside the table the table plane is not a surface") {
    auto e = classify_event(at(-1.6, 0, g.height + r + 0.01), at(-1.6, 0, g.height + r - 0.01), g, {}, 1.0,
                            0.01);
    CHECK_FALSE(e);
  }
}

TEST_CASE("is_valid_rally examples") {
  CHECK(is_valid_rally(evs({E::launch, E::net_crossed, E::bounce_robot_court})));
  CHECK_FALSE(is_valid_rally(evs({E::launch, E::bounce_opponent_court, E::net_crossed, E::bounce_robot_court})));
  CHECK_FALSE(is_valid_rally(evs({E::launch, E::net_contact, E::bounce_robot_court})));
  CHECK_FALSE(is_valid_rally(evs({E::launch, E::bounce_robot_court})));
  CHECK_FALSE(is_valid_rally(evs({E::net_crossed, E::bounce_robot_court})));
  CHECK_FALSE(is_valid_rally({}));
  CHECK(is_valid_rally(evs({E::launch, E::net_crossed, E::net_crossed, E::bounce_robot_court, E::floor_contact})));
}

TEST_CASE("validity is prefix-monotone") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> pick(0, 8);
  for (int run = 0; run < 20'000; ++run) {
    std::vector<RallyEvent> v{ev(E::launch)};
    bool poisoned = false;
    bool reached = false;
    for (int k = 0; k < 8; ++k) {
      const E e = static_cast<E>(pick(rng));
      v.push_back(ev(e, k + 1.0));
      if (!reached && e == E::bounce_robot_court) reached = true;
      if (!reached && e != E::net_crossed && e != E::bounce_robot_court) poisoned = true;
      if (poisoned) CHECK_FALSE(is_valid_rally(v));
    }
  }
}

TEST_CASE("driven bounce detection") {
  const TableGeometry g;
  const double r = 0.02;
  const BallState down{Vec3(-0.5, 0, g.height + r + 0.01), Vec3(-4, 0, -2), Vec3::Zero()};
  const BallState up{Vec3(-0.52, 0, g.height + r + 0.012), Vec3(-4, 0, 2), Vec3::Zero()};
  CHECK(driven_bounce(down, up, g, r) == E::bounce_robot_court);
  BallState high = up;
  high.p.z() += 0.2;
  CHECK_FALSE(driven_bounce(down, high, g, r));
  BallState far = up;
  far.p.x() = 1.0;
  CHECK(driven_bounce(down, far, g, r) == E::bounce_opponent_court);
}
