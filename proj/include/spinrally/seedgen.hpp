#pragma once

#include <atomic>
#include <cstdint>
#include <deque>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "spinrally/errors.hpp"
#include "spinrally/parallel.hpp"
#include "spinrally/rally.hpp"
#include "spinrally/rng.hpp"

namespace spinrally {

/// Initial ball state plus aero coefficients; replays one inbound flight exactly.
struct RallySeed {
  Vec3 p0 = Vec3::Zero();
  Vec3 v0 = Vec3::Zero();
  Vec3 w0 = Vec3::Zero();
  AeroCoefficients aero;

  BallState ball() const { return {p0, v0, w0}; }
  bool operator==(const RallySeed& o) const {
    return p0 == o.p0 && v0 == o.v0 && w0 == o.w0 && aero == o.aero;
  }
};

struct Range {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double x) const { return x >= lo && x <= hi; }
};

struct SeedRanges {
  std::array<Range, 3> p{{{0.3, 1.3}, {-0.6, 0.6}, {0.9, 1.3}}};
  std::array<Range, 3> v{{{-8.0, -3.0}, {-2.0, 2.0}, {-1.0, 3.0}}};
  std::array<Range, 3> w{{{-400.0, 400.0}, {-400.0, 400.0}, {-400.0, 400.0}}};
  Range k_d{0.05, 0.2};
  Range k_m{0.01, 0.08};

  bool contains(const RallySeed& s) const {
    for (int i = 0; i < 3; ++i) {
      if (!p[i].contains(s.p0[i]) || !v[i].contains(s.v0[i]) || !w[i].contains(s.w0[i]))
        return false;
    }
    return k_d.contains(s.aero.k_d) && k_m.contains(s.aero.k_m);
  }
};

/// Independent uniform draw of every field.
inline RallySeed sample_candidate(Rng& rng, const SeedRanges& r) {
  RallySeed s;
  for (int i = 0; i < 3; ++i) s.p0[i] = uniform(rng, r.p[i].lo, r.p[i].hi);
  for (int i = 0; i < 3; ++i) s.v0[i] = uniform(rng, r.v[i].lo, r.v[i].hi);
  for (int i = 0; i < 3; ++i) s.w0[i] = uniform(rng, r.w[i].lo, r.w[i].hi);
  s.aero.k_d = uniform(rng, r.k_d.lo, r.k_d.hi);
  s.aero.k_m = uniform(rng, r.k_m.lo, r.k_m.hi);
  return s;
}

struct RolloutSettings {
  TableGeometry geom;
  BallProperties props;
  FlightOptions flight;
  double dt = 1.0 / 360.0;  // must equal the arena physics substep for exact replay
  double t_max = 3.0;
};

/// Incremental flight of one candidate until its first surface contact or
/// timeout. Stepping in chunks yields exactly the same events as one pass.
class CandidateRollout {
 public:
  CandidateRollout() = default;
  CandidateRollout(const RallySeed& seed, const RolloutSettings& settings)
      : seed_(seed), settings_(&settings), ball_(seed.ball()) {
    events_.push_back({EventKind::launch, 0.0, ball_});
  }

  bool finished() const { return finished_; }
  bool valid() const { return finished_ && is_valid_rally(events_); }
  const RallySeed& seed() const { return seed_; }
  const std::vector<RallyEvent>& events() const { return events_; }

  void advance(long max_steps) {
    const auto& s = *settings_;
    for (long k = 0; k < max_steps && !finished_; ++k) {
      const BallState next = step_ball(ball_, seed_.aero, s.dt, s.flight);
      ++steps_;
      const double t_next = static_cast<double>(steps_) * s.dt;
      if (auto ev = classify_event(ball_, next, s.geom, {}, t_next, s.dt, s.props.radius)) {
        events_.push_back(*ev);
        if (ev->kind != EventKind::net_crossed) finished_ = true;
      }
      ball_ = next;
      if (!finished_ && t_next >= s.t_max) finished_ = true;
    }
  }

 private:
  RallySeed seed_;
  const RolloutSettings* settings_ = nullptr;
  BallState ball_;
  long steps_ = 0;
  bool finished_ = false;
  std::vector<RallyEvent> events_;
};

struct RolloutResult {
  std::vector<RallyEvent> events;
  bool valid = false;
};

inline RolloutResult rollout_candidate(const RallySeed& seed, const RolloutSettings& settings) {
  CandidateRollout r(seed, settings);
  while (!r.finished()) r.advance(1 << 20);
  return {r.events(), r.valid()};
}

/// Bounded FIFO shared between generators (producers) and env resets
/// (consumers). Never blocks waiting for data.
class SeedBuffer {
 public:
  explicit SeedBuffer(std::size_t capacity) : capacity_(capacity) {}

  bool push(const RallySeed& s) {
    std::lock_guard lock(mu_);
    if (fifo_.size() >= capacity_) return false;
    fifo_.push_back(s);
    return true;
  }

  std::optional<RallySeed> pop() {
    std::lock_guard lock(mu_);
    if (fifo_.empty()) return std::nullopt;
    RallySeed s = fifo_.front();
    fifo_.pop_front();
    return s;
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return fifo_.size();
  }
  std::size_t capacity() const { return capacity_; }
  bool full() const { return size() >= capacity_; }

 private:
  std::size_t capacity_;
  mutable std::mutex mu_;
  std::deque<RallySeed> fifo_;
};

struct GeneratorStats {
  std::uint64_t tried = 0;
  std::uint64_t valid = 0;
  std::uint64_t pushed = 0;
  double valid_rate() const { return tried ? static_cast<double>(valid) / tried : 0.0; }
};

/// Candidate i always draws from the same stream, whichever worker runs it.
inline RallySeed candidate_at(std::uint64_t base_seed, std::uint64_t index, const SeedRanges& r) {
  Rng rng = make_rng(base_seed, Stream::candidate, index);
  return sample_candidate(rng, r);
}

/// Free-running generator: workers sample, roll out and push valid seeds until
/// `stop` is raised (or max_candidates have been tried, when non-zero).
inline GeneratorStats run_generator(unsigned workers, SeedBuffer& buffer, const SeedRanges& ranges,
                                    const RolloutSettings& settings, const std::atomic<bool>& stop,
                                    std::uint64_t base_seed, std::uint64_t max_candidates = 0) {
  std::atomic<std::uint64_t> next{0}, tried{0}, valid{0}, pushed{0};
  auto work = [&] {
    while (!stop.load(std::memory_order_relaxed)) {
      const std::uint64_t i = next.fetch_add(1);
      if (max_candidates && i >= max_candidates) break;
      const RallySeed s = candidate_at(base_seed, i, ranges);
      const bool ok = rollout_candidate(s, settings).valid;
      tried.fetch_add(1);
      if (ok) {
        valid.fetch_add(1);
        if (buffer.push(s)) pushed.fetch_add(1);
      }
    }
  };
  std::vector<std::thread> threads;
  for (unsigned w = 1; w < std::max(1u, workers); ++w) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  return {tried.load(), valid.load(), pushed.load()};
}

/// Deterministic corpus: the first `count` valid candidates in index order,
/// independent of the worker count.
inline std::vector<RallySeed> generate_valid_seeds(std::size_t count, const SeedRanges& ranges,
                                                   const RolloutSettings& settings,
                                                   std::uint64_t base_seed, WorkerPool& pool,
                                                   GeneratorStats* stats = nullptr,
                                                   std::uint64_t max_candidates = 50'000'000) {
  std::vector<RallySeed> out;
  GeneratorStats st;
  constexpr std::size_t kChunk = 1024;
  std::vector<std::optional<RallySeed>> chunk(kChunk);
  std::uint64_t base = 0;
  while (out.size() < count && base < max_candidates) {
    pool.parallel_for(kChunk, [&](std::size_t j) {
      const RallySeed s = candidate_at(base_seed, base + j, ranges);
      chunk[j] = rollout_candidate(s, settings).valid ? std::optional(s) : std::nullopt;
    });
    for (std::size_t j = 0; j < kChunk && out.size() < count; ++j) {
      ++st.tried;
      if (chunk[j]) {
        ++st.valid;
        out.push_back(*chunk[j]);
      }
    }
    base += kChunk;
  }
  st.pushed = out.size();
  if (stats) *stats = st;
  return out;
}

/// Lock-step generator environments advanced alongside the training batch.
/// Each environment works through its own candidate stream; valid seeds are
/// pushed in environment order after every step.
class GeneratorBank {
 public:
  GeneratorBank(std::size_t count, const SeedRanges& ranges, const RolloutSettings& settings,
                std::uint64_t run_seed)
      : ranges_(ranges), settings_(settings) {
    rngs_.reserve(count);
    rollouts_.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      rngs_.push_back(make_rng(run_seed, Stream::generator, i));
      rollouts_[i] = CandidateRollout(sample_candidate(rngs_[i], ranges_), settings_);
    }
  }

  GeneratorBank(const GeneratorBank&) = delete;
  GeneratorBank& operator=(const GeneratorBank&) = delete;

  std::size_t size() const { return rollouts_.size(); }
  const GeneratorStats& stats() const { return stats_; }

  void step(long substeps, SeedBuffer& buffer, WorkerPool* pool = nullptr) {
    auto adv = [&](std::size_t i) { rollouts_[i].advance(substeps); };
    if (pool) {
      pool->parallel_for(rollouts_.size(), adv);
    } else {
      for (std::size_t i = 0; i < rollouts_.size(); ++i) adv(i);
    }
    for (std::size_t i = 0; i < rollouts_.size(); ++i) {
      if (!rollouts_[i].finished()) continue;
      ++stats_.tried;
      if (rollouts_[i].valid()) {
        ++stats_.valid;
        if (buffer.push(rollouts_[i].seed())) ++stats_.pushed;
      }
      rollouts_[i] = CandidateRollout(sample_candidate(rngs_[i], ranges_), settings_);
    }
  }

 private:
  SeedRanges ranges_;
  RolloutSettings settings_;
  std::vector<Rng> rngs_;
  std::vector<CandidateRollout> rollouts_;
  GeneratorStats stats_;
};

inline constexpr const char* kSeedCsvHeader =
    "p0_x,p0_y,p0_z,v0_x,v0_y,v0_z,w0_x,w0_y,w0_z,k_d,k_m";

inline void write_seeds_csv(std::ostream& os, const std::vector<RallySeed>& seeds) {
  os << kSeedCsvHeader << '\n' << std::setprecision(17);
  for (const auto& s : seeds) {
    os << s.p0.x() << ',' << s.p0.y() << ',' << s.p0.z() << ',' << s.v0.x() << ',' << s.v0.y()
       << ',' << s.v0.z() << ',' << s.w0.x() << ',' << s.w0.y() << ',' << s.w0.z() << ','
       << s.aero.k_d << ',' << s.aero.k_m << '\n';
  }
}

inline std::vector<RallySeed> read_seeds_csv(std::istream& is) {
  std::vector<RallySeed> out;
  std::string line;
  if (!std::getline(is, line)) return out;
  if (line != kSeedCsvHeader) throw ParseError("seed csv line 1: unexpected header");
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::array<double, 11> f{};
    std::stringstream ss(line);
    std::string cell;
    int n = 0;
    while (std::getline(ss, cell, ',')) {
      if (n >= 11) throw ParseError("seed csv line " + std::to_string(lineno) + ": too many fields");
      try {
        std::size_t used = 0;
        f[n] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::exception&) {
        throw ParseError("seed csv line " + std::to_string(lineno) + ": bad number '" + cell + "'");
      }
      ++n;
    }
    if (n != 11) throw ParseError("seed csv line " + std::to_string(lineno) + ": expected 11 fields");
    RallySeed s;
    s.p0 = {f[0], f[1], f[2]};
    s.v0 = {f[3], f[4], f[5]};
    s.w0 = {f[6], f[7], f[8]};
    s.aero = {f[9], f[10]};
    out.push_back(s);
  }
  return out;
}

}  // namespace spinrally
