#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace cohiclust {

template <class S>
using MatX = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <class S>
using VecX = Eigen::Matrix<S, Eigen::Dynamic, 1>;

using MatXd = MatX<double>;
using MatXf = MatX<float>;
using VecXd = VecX<double>;
using VecXf = VecX<float>;

// Thrown when a component's internal consistency check fails (a bug, not bad input).
struct internal_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Operation called in a state that does not admit it (e.g. pruning past the floor).
struct invalid_state_error : std::logic_error {
  using std::logic_error::logic_error;
};

// Non-finite values or numerically undefined requests (e.g. cosine of a zero vector).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed files: checkpoints, IDX archives, configs, CSV.
struct format_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic stream derivation: every stochastic consumer mixes the run seed
// with its own tags so results never depend on call order.
inline std::mt19937_64 derive_rng(uint64_t seed, uint64_t tag_a, uint64_t tag_b = 0,
                                  uint64_t tag_c = 0) {
  uint64_t s = splitmix64(seed ^ 0xc0481c1d5745ULL);
  s = splitmix64(s ^ tag_a);
  s = splitmix64(s ^ tag_b);
  s = splitmix64(s ^ tag_c);
  return std::mt19937_64(s);
}

}  // namespace cohiclust
