#pragma once

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "spinrally/errors.hpp"
#include "spinrally/learner/moments.hpp"
#include "spinrally/learner/network.hpp"

namespace spinrally {

inline constexpr std::array<char, 8> kCheckpointMagic{'S', 'P', 'R', 'L', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::uint64_t config_hash = 0;
  int stage = 0;  // last completed stage, 0 if none
  int epoch = -1; // last completed global epoch
  PolicyParams params;
  RunningMoments moments;
};

namespace ckpt_detail {

template <class T>
void put(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T get(std::istream& is) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw CheckpointError("truncated checkpoint");
  return v;
}

inline void put_doubles(std::ostream& os, const Eigen::VectorXd& v) {
  put<std::uint64_t>(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline Eigen::VectorXd get_doubles(std::istream& is, std::uint64_t expected) {
  const auto n = get<std::uint64_t>(is);
  if (n != expected) throw CheckpointError("checkpoint array length mismatch");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  if (!is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double))))
    throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace ckpt_detail

/// Layout: magic, version, config hash, stage, epoch, network shape, flat
/// parameters, moment count/mean/M2. Host byte order (little endian).
inline void write_checkpoint(std::ostream& os, const Checkpoint& c) {
  using namespace ckpt_detail;
  os.write(kCheckpointMagic.data(), kCheckpointMagic.size());
  put(os, kCheckpointVersion);
  put(os, c.config_hash);
  put<std::int32_t>(os, c.stage);
  put<std::int32_t>(os, c.epoch);
  const NetworkShape& s = c.params.shape();
  for (int x : {s.obs_dim, s.hidden, s.layers, s.act_dim}) put<std::int32_t>(os, x);
  put_doubles(os, c.params.flat());
  put(os, c.moments.count);
  put_doubles(os, c.moments.mean);
  put_doubles(os, c.moments.m2);
}

inline Checkpoint read_checkpoint(std::istream& is) {
  using namespace ckpt_detail;
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kCheckpointMagic)
    throw CheckpointError("not a checkpoint file");
  if (get<std::uint32_t>(is) != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version");
  Checkpoint c;
  c.config_hash = get<std::uint64_t>(is);
  c.stage = get<std::int32_t>(is);
  c.epoch = get<std::int32_t>(is);
  NetworkShape s;
  s.obs_dim = get<std::int32_t>(is);
  s.hidden = get<std::int32_t>(is);
  s.layers = get<std::int32_t>(is);
  s.act_dim = get<std::int32_t>(is);
  if (s.obs_dim < 1 || s.hidden < 1 || s.layers < 1 || s.act_dim < 1 || s.hidden > 1 << 16 || s.layers > 64)
    throw CheckpointError("corrupt network shape");
  c.params = PolicyParams(s);
  c.params.flat() = get_doubles(is, static_cast<std::uint64_t>(c.params.size()));
  c.moments = RunningMoments(s.obs_dim);
  c.moments.count = get<double>(is);
  c.moments.mean = get_doubles(is, static_cast<std::uint64_t>(s.obs_dim));
  c.moments.m2 = get_doubles(is, static_cast<std::uint64_t>(s.obs_dim));
  if (!c.params.flat().allFinite()) throw CheckpointError("checkpoint holds non-finite parameters");
  return c;
}

/// Writes to a sibling temporary and renames, so a crash never leaves a
/// half-written checkpoint behind.
inline void save_checkpoint(const std::string& path, const Checkpoint& c) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw CheckpointError("cannot write " + tmp);
    write_checkpoint(os, c);
    if (!os) throw CheckpointError("write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0) throw CheckpointError("cannot rename " + tmp);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw CheckpointError("cannot open " + path);
  return read_checkpoint(is);
}

}  // namespace spinrally
