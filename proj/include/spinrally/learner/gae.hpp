#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace spinrally {

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

/// Backward GAE recursion. dones[t] marks that step t ended its episode, so
/// neither the next value nor later deltas leak across the boundary.
inline GaeResult compute_gae(std::span<const double> rewards, std::span<const double> values,
                             std::span<const std::uint8_t> dones, double bootstrap_value, double gamma,
                             double lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw std::invalid_argument("GAE length mismatch");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_value = bootstrap_value;
  double running = 0.0;
  for (std::size_t k = n; k-- > 0;) {
    const double live = dones[k] ? 0.0 : 1.0;
    const double delta = rewards[k] + gamma * next_value * live - values[k];
    running = delta + gamma * lambda * live * running;
    out.advantages[k] = running;
    out.returns[k] = running + values[k];
    next_value = values[k];
  }
  return out;
}

}  // namespace spinrally
