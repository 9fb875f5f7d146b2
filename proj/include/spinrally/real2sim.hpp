#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "spinrally/arena.hpp"
#include "spinrally/errors.hpp"
#include "spinrally/policy.hpp"
#include "spinrally/rally.hpp"

namespace spinrally {

/// One captured frame: time in milliseconds, position in millimetres.
struct RecordedSample {
  double t_ms = 0.0;
  Vec3 p_mm = Vec3::Zero();
  bool present = true;
  bool filled = false;  // position reconstructed by fill_gaps

  bool usable() const { return present || filled; }
};

struct EstimatedState {
  double t = 0.0;  // s
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  bool filled = false;
  bool edge = false;  // difference stencil reaches a truncated smoothing window
};

inline constexpr const char* kRecordingCsvHeader = "t_ms,x_mm,y_mm,z_mm,present";

// ---------------------------------------------------------------------------
// Trajectory CSV

inline std::vector<RecordedSample> read_recording_csv(std::istream& is) {
  std::vector<RecordedSample> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kRecordingCsvHeader) throw ParseError("line 1: expected header '" + std::string(kRecordingCsvHeader) + "'");
  int lineno = 1;
  std::optional<double> last_t;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = "line " + std::to_string(lineno);
    std::array<double, 4> f{};
    std::string cell;
    std::stringstream ss(line);
    int n = 0;
    bool present = true;
    while (std::getline(ss, cell, ',')) {
      if (n > 4) throw ParseError(where + ": too many fields");
      if (n == 4) {
        if (cell == "1") present = true;
        else if (cell == "0") present = false;
        else throw ParseError(where + ": present must be 0 or 1");
      } else {
        try {
          std::size_t used = 0;
          f[n] = std::stod(cell, &used);
          if (used != cell.size() || !std::isfinite(f[n])) throw std::invalid_argument(cell);
        } catch (const std::exception&) {
          throw ParseError(where + ": bad number '" + cell + "'");
        }
      }
      ++n;
    }
    if (n != 5) throw ParseError(where + ": expected 5 fields");
    if (present) {
      if (last_t && f[0] <= *last_t) throw NonMonotonicTime(where + ": timestamp not increasing");
      last_t = f[0];
    }
    out.push_back({f[0], {f[1], f[2], f[3]}, present, false});
  }
  return out;
}

inline std::vector<RecordedSample> load_recorded(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path);
  return read_recording_csv(is);
}

inline void write_recording_csv(std::ostream& os, std::span<const RecordedSample> samples) {
  const auto prec = os.precision(17);
  os << kRecordingCsvHeader << '\n';
  for (const auto& s : samples) {
    os << s.t_ms << ',' << s.p_mm.x() << ',' << s.p_mm.y() << ',' << s.p_mm.z() << ','
       << (s.present ? 1 : 0) << '\n';
  }
  os.precision(prec);
}

// ---------------------------------------------------------------------------
// Gap completion and state estimation

/// Reconstructs absent frames by extrapolating the quadratic through the last
/// three known frames (linear when only two are known). Present frames are
/// returned untouched.
inline std::vector<RecordedSample> fill_gaps(std::vector<RecordedSample> s) {
  std::vector<std::size_t> known;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i].present) {
      known.push_back(i);
      continue;
    }
    if (known.size() < 2) throw LeadingGap("absent frame before two present frames");
    const std::size_t k = std::min<std::size_t>(3, known.size());
    const double t = s[i].t_ms;
    Vec3 p = Vec3::Zero();
    for (std::size_t a = known.size() - k; a < known.size(); ++a) {
      double w = 1.0;
      for (std::size_t b = known.size() - k; b < known.size(); ++b) {
        if (a == b) continue;
        w *= (t - s[known[b]].t_ms) / (s[known[a]].t_ms - s[known[b]].t_ms);
      }
      p += w * s[known[a]].p_mm;
    }
    s[i].p_mm = p;
    s[i].filled = true;
    known.push_back(i);
  }
  return s;
}

enum class SmoothingFilter { moving_average, savitzky_golay };

/// Centred moving average; the window shrinks symmetrically at the ends so that
/// linear motion is reproduced exactly.
inline std::vector<Vec3> moving_average(std::span<const Vec3> p, int window) {
  const int n = static_cast<int>(p.size());
  std::vector<Vec3> out(p.size());
  for (int i = 0; i < n; ++i) {
    const int half = std::min({window / 2, i, n - 1 - i});
    Vec3 acc = Vec3::Zero();
    for (int k = i - half; k <= i + half; ++k) acc += p[k];
    out[i] = acc / (2 * half + 1);
  }
  return out;
}

/// Local quadratic least squares over `window` frames (shifted inside the
/// series at the ends), evaluated at each frame.
inline std::vector<Vec3> savitzky_golay(std::span<const double> t, std::span<const Vec3> p, int window) {
  const int n = static_cast<int>(p.size());
  const int w = std::min(window, n);
  std::vector<Vec3> out(p.size());
  for (int i = 0; i < n; ++i) {
    const int lo = std::clamp(i - w / 2, 0, n - w);
    Eigen::MatrixXd A(w, 3);
    Eigen::MatrixXd b(w, 3);
    for (int k = 0; k < w; ++k) {
      const double dt = t[lo + k] - t[i];
      A.row(k) << 1.0, dt, dt * dt;
      b.row(k) = p[lo + k].transpose();
    }
    const Eigen::MatrixXd c = A.colPivHouseholderQr().solve(b);
    out[i] = c.row(0).transpose();
  }
  return out;
}

/// Range of indices whose three-point difference stencil sees only full
/// smoothing windows.
inline std::pair<std::size_t, std::size_t> interior_range(std::size_t n, int window) {
  const std::size_t half = static_cast<std::size_t>(window / 2);
  if (n < 2 * half + 3) return {0, 0};
  return {half + 1, n - half - 1};  // [first, last)
}

/// Smoothed positions, then first and second differences on the (possibly
/// non-uniform) time grid. Units become s and m. Absent frames are filled first.
inline std::vector<EstimatedState> estimate_states(std::vector<RecordedSample> samples, int window = 7,
                                                   SmoothingFilter filter = SmoothingFilter::moving_average) {
  if (window < 3 || window % 2 == 0) throw std::invalid_argument("window must be odd and >= 3");
  if (std::any_of(samples.begin(), samples.end(), [](const auto& s) { return !s.usable(); }))
    samples = fill_gaps(std::move(samples));
  const std::size_t n = samples.size();
  if (n < 3) throw TooFewSamples("need at least 3 samples");
  std::vector<double> t(n);
  std::vector<Vec3> raw(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = samples[i].t_ms * 1e-3;
    raw[i] = samples[i].p_mm * 1e-3;
    if (i > 0 && !(t[i] > t[i - 1])) throw NonMonotonicTime("timestamp not increasing");
  }
  const std::vector<Vec3> p = filter == SmoothingFilter::moving_average
                                  ? moving_average(raw, window)
                                  : savitzky_golay(t, raw, window);

  std::vector<EstimatedState> out(n);
  const auto [first, last] = interior_range(n, window);
  auto accel = [&](std::size_t i) {  // second difference centred on i
    const Vec3 s0 = (p[i] - p[i - 1]) / (t[i] - t[i - 1]);
    const Vec3 s1 = (p[i + 1] - p[i]) / (t[i + 1] - t[i]);
    return Vec3(2.0 * (s1 - s0) / (t[i + 1] - t[i - 1]));
  };
  for (std::size_t i = 0; i < n; ++i) {
    EstimatedState& e = out[i];
    e.t = t[i];
    e.p = p[i];
    e.filled = samples[i].filled;
    e.edge = filter == SmoothingFilter::moving_average ? (i < first || i >= last) : (i == 0 || i == n - 1);
    if (i == 0) {
      e.v = (p[1] - p[0]) / (t[1] - t[0]);
      e.a = accel(1);
    } else if (i == n - 1) {
      e.v = (p[i] - p[i - 1]) / (t[i] - t[i - 1]);
      e.a = accel(i - 1);
    } else {
      e.v = (p[i + 1] - p[i - 1]) / (t[i + 1] - t[i - 1]);
      e.a = accel(i);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Aerodynamic fit

struct AeroFit {
  AeroCoefficients aero;
  double rms_residual = 0.0;  // m/s^2 from fit_aero, m from refine_aero
  std::size_t used = 0;       // states in the fit
};

/// Least squares for a - g = -k_d |v| v + k_m (w x v) with non-negative
/// coefficients. With zero spin k_m is not identifiable and stays 0.
inline AeroFit fit_aero(std::span<const EstimatedState> states, const Vec3& spin = Vec3::Zero(),
                        const Vec3& gravity = kGravity) {
  std::vector<const EstimatedState*> use;
  for (std::size_t i = 1; i + 1 < states.size(); ++i)
    if (!states[i].filled && !states[i].edge) use.push_back(&states[i]);
  if (use.size() < 10) throw TooFewSamples("aero fit needs at least 10 interior states");

  const bool with_magnus = spin.norm() > 0.0;
  Eigen::Matrix2d ata = Eigen::Matrix2d::Zero();
  Eigen::Vector2d atb = Eigen::Vector2d::Zero();
  double vmax = 0.0;
  for (const auto* s : use) {
    const Vec3 c1 = -s->v.norm() * s->v;
    const Vec3 c2 = spin.cross(s->v);
    const Vec3 y = s->a - gravity;
    ata(0, 0) += c1.dot(c1);
    ata(0, 1) += c1.dot(c2);
    ata(1, 1) += c2.dot(c2);
    atb(0) += c1.dot(y);
    atb(1) += c2.dot(y);
    vmax = std::max(vmax, s->v.norm());
  }
  ata(1, 0) = ata(0, 1);
  if (vmax < 1e-3 || ata(0, 0) < 1e-12) throw IllConditioned("ball velocity near zero throughout");

  auto solve_single = [&](int k) { return std::max(0.0, atb(k) / ata(k, k)); };
  Eigen::Vector2d x = Eigen::Vector2d::Zero();
  if (!with_magnus || ata(1, 1) < 1e-12) {
    x(0) = solve_single(0);
  } else {
    const double det = ata.determinant();
    if (std::abs(det) < 1e-12 * ata(0, 0) * ata(1, 1)) throw IllConditioned("drag and Magnus columns collinear");
    x = ata.inverse() * atb;
    if (x(0) < 0.0 || x(1) < 0.0) {
      // Best feasible point lies on a face of the non-negative quadrant.
      auto cost = [&](const Eigen::Vector2d& z) { return z.dot(ata * z) - 2.0 * z.dot(atb); };
      const Eigen::Vector2d a(solve_single(0), 0.0);
      const Eigen::Vector2d b(0.0, solve_single(1));
      x = cost(a) <= cost(b) ? a : b;
    }
  }

  AeroFit fit;
  fit.aero = {x(0), with_magnus ? x(1) : 0.0};
  fit.used = use.size();
  double ss = 0.0;
  for (const auto* s : use) {
    const Vec3 pred = gravity - fit.aero.k_d * s->v.norm() * s->v + fit.aero.k_m * spin.cross(s->v);
    ss += (s->a - pred).squaredNorm();
  }
  fit.rms_residual = std::sqrt(ss / (3.0 * static_cast<double>(use.size())));
  return fit;
}

struct PositionObservation {
  double t = 0.0;  // s
  Vec3 p = Vec3::Zero();  // m
};

/// Free flight from `start` at t0, RK4 with constant spin, sampled at `times`.
inline std::vector<Vec3> shoot_flight(const BallState& start, double t0, const AeroCoefficients& aero,
                                      std::span<const double> times, const Vec3& gravity,
                                      double max_step = 1e-3) {
  std::vector<Vec3> out;
  out.reserve(times.size());
  Vec3 p = start.p, v = start.v;
  const Vec3 w = start.w;
  auto acc = [&](const Vec3& u) { return aero_accel(BallState{Vec3::Zero(), u, w}, aero, gravity); };
  double t = t0;
  for (double target : times) {
    const double span = target - t;
    const int n = std::max(1, static_cast<int>(std::ceil(span / max_step)));
    const double h = span / n;
    for (int k = 0; k < n && span > 0.0; ++k) {
      const Vec3 k1v = acc(v), k1p = v;
      const Vec3 k2v = acc(v + 0.5 * h * k1v), k2p = v + 0.5 * h * k1v;
      const Vec3 k3v = acc(v + 0.5 * h * k2v), k3p = v + 0.5 * h * k2v;
      const Vec3 k4v = acc(v + h * k3v), k4p = v + h * k3v;
      p += h / 6.0 * (k1p + 2.0 * k2p + 2.0 * k3p + k4p);
      v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    t = std::max(t, target);
    out.push_back(p);
  }
  return out;
}

/// Levenberg-Marquardt on raw positions over (p0, v0, k_d[, k_m]), started
/// from a derivative-based fit. Position residuals average the sensor noise
/// over the whole flight instead of amplifying it through second differences.
inline AeroFit refine_aero(std::span<const PositionObservation> obs, const BallState& start, double t0,
                           const AeroCoefficients& initial, const Vec3& spin = Vec3::Zero(),
                           const Vec3& gravity = kGravity, int max_iterations = 30) {
  if (obs.size() < 10) throw TooFewSamples("trajectory refinement needs at least 10 positions");
  const bool with_magnus = spin.norm() > 0.0;
  const int np = with_magnus ? 8 : 7;
  std::vector<double> times(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) times[i] = obs[i].t;

  auto unpack = [&](const Eigen::VectorXd& x, BallState& s, AeroCoefficients& a) {
    s = {x.segment<3>(0), x.segment<3>(3), spin};
    a = {x[6], with_magnus ? x[7] : 0.0};
  };
  auto residual = [&](const Eigen::VectorXd& x) {
    BallState s;
    AeroCoefficients a;
    unpack(x, s, a);
    const std::vector<Vec3> sim = shoot_flight(s, t0, a, times, gravity);
    Eigen::VectorXd r(3 * static_cast<Eigen::Index>(obs.size()));
    for (std::size_t i = 0; i < obs.size(); ++i) r.segment<3>(3 * static_cast<Eigen::Index>(i)) = sim[i] - obs[i].p;
    return r;
  };

  Eigen::VectorXd x(np);
  x.segment<3>(0) = start.p;
  x.segment<3>(3) = start.v;
  x[6] = initial.k_d;
  if (with_magnus) x[7] = initial.k_m;
  Eigen::VectorXd r = residual(x);
  double cost = r.squaredNorm();
  double mu = 1e-3;
  for (int it = 0; it < max_iterations; ++it) {
    Eigen::MatrixXd J(r.size(), np);
    for (int j = 0; j < np; ++j) {
      Eigen::VectorXd xp = x;
      const double h = 1e-7 * std::max(1.0, std::abs(x[j]));
      xp[j] += h;
      J.col(j) = (residual(xp) - r) / h;
    }
    const Eigen::MatrixXd jtj = J.transpose() * J;
    const Eigen::VectorXd jtr = J.transpose() * r;
    bool improved = false;
    for (int tries = 0; tries < 10 && !improved; ++tries) {
      Eigen::MatrixXd lhs = jtj;
      lhs.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
      Eigen::VectorXd xn = x - lhs.ldlt().solve(jtr);
      xn[6] = std::max(0.0, xn[6]);
      if (with_magnus) xn[7] = std::max(0.0, xn[7]);
      const Eigen::VectorXd rn = residual(xn);
      const double cn = rn.squaredNorm();
      if (cn < cost) {
        const double gain = (cost - cn) / std::max(cost, 1e-300);
        x = xn;
        r = rn;
        cost = cn;
        mu = std::max(mu * 0.3, 1e-9);
        improved = true;
        if (gain < 1e-12) it = max_iterations;
      } else {
        mu *= 10.0;
      }
    }
    if (!improved) break;
  }

  AeroFit fit;
  BallState s;
  unpack(x, s, fit.aero);
  fit.used = obs.size();
  fit.rms_residual = std::sqrt(cost / static_cast<double>(r.size()));  // m
  return fit;
}

// ---------------------------------------------------------------------------
// Simulator export

/// Ball-only simulation with table bounces, the same integrator and contact
/// model as the arena; stops when the ball leaves play or after t_max.
inline std::vector<FlightSample> simulate_ball_path(const RallySeed& seed, const ArenaConfig& cfg,
                                                    double dt, double t_max) {
  std::vector<FlightSample> out{{0.0, seed.ball()}};
  BallState s = seed.ball();
  const auto steps = static_cast<long>(std::ceil(t_max / dt - 1e-9));
  for (long k = 0; k < steps; ++k) {
    BallState next = step_ball(s, seed.aero, dt, cfg.flight);
    if (auto hit = detect_surface_crossing(s.p, next.p, cfg.table, cfg.ball.radius)) {
      const BallState at = lerp(s, next, hit->fraction);
      if (hit->surface != Surface::table) {
        out.push_back({(k + hit->fraction) * dt, at});
        return out;
      }
      const SurfaceFrame table{Vec3(at.p.x(), at.p.y(), cfg.table.height), Vec3::UnitZ(), Vec3::Zero()};
      BallState post = resolve_bounce(at, table, cfg.table_contact, cfg.ball).ball;
      post.w = clamp_spin(post.w, cfg.flight.max_spin);
      next = step_ball(post, seed.aero, (1.0 - hit->fraction) * dt, cfg.flight);
    }
    s = next;
    out.push_back({(k + 1) * dt, s});
    if (std::abs(s.p.x()) > cfg.table.bounds || std::abs(s.p.y()) > cfg.table.bounds) break;
  }
  return out;
}

/// Samples a simulated path at `rate_hz` (linear interpolation between
/// integrator states) and converts to the recording units.
inline std::vector<RecordedSample> export_recording(std::span<const FlightSample> path, double rate_hz) {
  std::vector<RecordedSample> out;
  if (path.empty()) return out;
  const double period = 1.0 / rate_hz;
  std::size_t j = 0;
  for (long k = 0;; ++k) {
    const double t = k * period;
    if (t > path.back().t + 1e-12) break;
    while (j + 1 < path.size() && path[j + 1].t < t) ++j;
    Vec3 p = path[j].ball.p;
    if (j + 1 < path.size()) {
      const double span = path[j + 1].t - path[j].t;
      const double f = span > 0.0 ? std::clamp((t - path[j].t) / span, 0.0, 1.0) : 0.0;
      p = path[j].ball.p + f * (path[j + 1].ball.p - path[j].ball.p);
    }
    out.push_back({t * 1e3, p * 1e3, true, false});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replay

/// Rally events of a recorded path: launch, then net crossings and the first
/// contact, up to the first event that is not a net crossing.
inline std::vector<RallyEvent> recorded_events(std::span<const EstimatedState> states,
                                               const TableGeometry& geom, double ball_radius) {
  std::vector<RallyEvent> ev;
  if (states.empty()) return ev;
  auto ball = [](const EstimatedState& s) { return BallState{s.p, s.v, Vec3::Zero()}; };
  ev.push_back({EventKind::launch, states.front().t, ball(states.front())});
  for (std::size_t i = 1; i < states.size(); ++i) {
    const BallState a = ball(states[i - 1]);
    const BallState b = ball(states[i]);
    const double dt = states[i].t - states[i - 1].t;
    std::optional<RallyEvent> e;
    if (auto c = classify_crossing(a, b, geom, ball_radius)) {
      e = RallyEvent{c->kind, states[i - 1].t + c->fraction * dt, lerp(a, b, c->fraction)};
    } else if (auto k = driven_bounce(a, b, geom, ball_radius)) {
      e = RallyEvent{*k, states[i].t, b};
    }
    if (!e) continue;
    ev.push_back(*e);
    if (e->kind != EventKind::net_crossed) break;
  }
  return ev;
}

/// Kinematic source for the arena: states are shifted to start at t = 0 and
/// linearly interpolated; past the last state the ball is handed over.
inline RallyEnv::BallDriver make_driver(std::vector<EstimatedState> states, Vec3 spin) {
  const double t0 = states.empty() ? 0.0 : states.front().t;
  for (auto& s : states) s.t -= t0;
  return [states = std::move(states), spin](double t) -> std::optional<BallState> {
    if (states.empty() || t > states.back().t) return std::nullopt;
    auto it = std::upper_bound(states.begin(), states.end(), t,
                               [](double x, const EstimatedState& s) { return x < s.t; });
    if (it == states.begin()) return BallState{states.front().p, states.front().v, spin};
    const EstimatedState& b = it == states.end() ? states.back() : *it;
    const EstimatedState& a = *(it - 1);
    const double span = b.t - a.t;
    const double f = span > 0.0 ? (t - a.t) / span : 0.0;
    return BallState{a.p + f * (b.p - a.p), a.v + f * (b.v - a.v), spin};
  };
}

struct ReplayOptions {
  int window = 7;
  SmoothingFilter filter = SmoothingFilter::moving_average;
  Vec3 spin = Vec3::Zero();                 // assumed constant ball spin, rad/s
  std::optional<AeroCoefficients> aero;     // skips the fit when set
  AeroCoefficients fallback_aero{0.1, 0.0};  // when the inbound flight cannot be fitted
};

struct ReplayReport {
  EpisodeSummary episode;
  AeroCoefficients aero;
  bool aero_fitted = false;
  double fit_residual = 0.0;
};

/// Derivative-based fit refined against raw positions over the same flight
/// interval. Falls back to the derivative fit when too few raw frames remain.
inline AeroFit fit_aero_refined(std::span<const EstimatedState> states,
                                std::span<const PositionObservation> raw, const Vec3& spin = Vec3::Zero(),
                                const Vec3& gravity = kGravity) {
  const AeroFit coarse = fit_aero(states, spin, gravity);
  const auto first = std::find_if(states.begin(), states.end(),
                                  [](const EstimatedState& s) { return !s.edge && !s.filled; });
  if (first == states.end()) return coarse;
  const double t_end = states.back().t;
  std::vector<PositionObservation> obs;
  for (const auto& o : raw)
    if (o.t >= first->t && o.t <= t_end) obs.push_back(o);
  if (obs.size() < 10) return coarse;
  return refine_aero(obs, BallState{first->p, first->v, spin}, first->t, coarse.aero, spin, gravity);
}

inline std::vector<PositionObservation> present_positions(std::span<const RecordedSample> samples) {
  std::vector<PositionObservation> out;
  for (const auto& s : samples)
    if (s.present) out.push_back({s.t_ms * 1e-3, s.p_mm * 1e-3});
  return out;
}

namespace detail {

inline ReplayReport replay_impl(const std::vector<EstimatedState>& states,
                                std::span<const PositionObservation> raw, RallyEnv& env, Policy& policy,
                                const ReplayOptions& opt) {
  const ArenaConfig& cfg = env.config();
  const auto events = recorded_events(states, cfg.table, cfg.ball.radius);
  if (!is_valid_rally(events)) throw InvalidInbound("recorded trajectory is not a valid inbound rally");

  ReplayReport rep;
  if (opt.aero) {
    rep.aero = *opt.aero;
  } else {
    // Free flight before the robot-court bounce.
    const double t_bounce = events.back().time;
    std::vector<EstimatedState> flight;
    for (const auto& s : states)
      if (s.t < t_bounce - 0.02) flight.push_back(s);
    try {
      const AeroFit fit = raw.empty() ? fit_aero(flight, opt.spin, cfg.flight.gravity)
                                      : fit_aero_refined(flight, raw, opt.spin, cfg.flight.gravity);
      rep.aero = fit.aero;
      rep.aero_fitted = true;
      rep.fit_residual = fit.rms_residual;
    } catch (const TooFewSamples&) {
      rep.aero = opt.fallback_aero;
    } catch (const IllConditioned&) {
      rep.aero = opt.fallback_aero;
    }
  }

  RallySeed seed;
  seed.p0 = states.front().p;
  seed.v0 = states.front().v;
  seed.w0 = opt.spin;
  seed.aero = rep.aero;
  env.set_ball_driver(make_driver(states, opt.spin));
  rep.episode = run_episode(env, policy, seed);
  env.set_ball_driver(nullptr);
  return rep;
}

}  // namespace detail

/// Drives the recorded ball through the inbound phase, then simulates it from
/// the first racket contact (or the end of the recording) onwards.
inline ReplayReport replay(const std::vector<EstimatedState>& states, RallyEnv& env, Policy& policy,
                           const ReplayOptions& opt = {}) {
  return detail::replay_impl(states, {}, env, policy, opt);
}

/// As above; the raw frames additionally sharpen the aero fit.
inline ReplayReport replay(const std::vector<RecordedSample>& samples, RallyEnv& env, Policy& policy,
                           const ReplayOptions& opt = {}) {
  const std::vector<PositionObservation> raw = present_positions(samples);
  return detail::replay_impl(estimate_states(samples, opt.window, opt.filter), raw, env, policy, opt);
}

}  // namespace spinrally
