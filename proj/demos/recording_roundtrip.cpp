// Simulates an inbound ball, exports it as a recording, and fits the drag and
// Magnus coefficients back from positions alone.
#include <cstdio>
#include <iostream>

#include "spinrally/real2sim.hpp"

int main() {
  using namespace spinrally;
  ArenaConfig cfg;
  RallySeed seed;
  seed.p0 = {1.2, 0.1, 1.05};
  seed.v0 = {-5.5, -0.3, 1.2};
  seed.w0 = {0.0, 120.0, 0.0};
  seed.aero = {0.12, 0.04};

  // Fine integration so that the recording approximates continuous flight.
  auto path = simulate_ball_path(seed, cfg, 1.0 / 3600.0, 0.4);
  const auto rec = export_recording(path, 200.0);
  write_recording_csv(std::cout, std::span(rec).first(std::min<std::size_t>(5, rec.size())));

  const auto states = estimate_states(rec, 7);
  std::vector<EstimatedState> flight;
  for (const auto& s : states)
    if (s.p.z() > cfg.table.height + 0.05) flight.push_back(s);
  const AeroFit fit = fit_aero(flight, seed.w0);
  std::printf("true k_d %.4f k_m %.4f | fitted k_d %.4f k_m %.4f (rms %.3g m/s^2)\n", seed.aero.k_d,
              seed.aero.k_m, fit.aero.k_d, fit.aero.k_m, fit.rms_residual);
}
