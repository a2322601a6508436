#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "types.hpp"

namespace subzero {

struct SamplingConfig
{
  double R = 4.0;            // acceleration along phase encode
  Index acs_lines = 8;       // fully sampled centre lines
  double r = 0.4;            // fraction of Omega \ Gamma assigned to Lambda
  double gamma_ratio = 0.2;  // fraction of non-ACS Omega held out as Gamma
  std::uint64_t seed = 0;
  Index shift_step = 1;      // lines per echo
  bool augment = true;       // pooled cross-echo division draws
  bool exclude_gamma_from_delta = false;

  void validate() const
  {
    require(R >= 1, "acceleration R must be >= 1");
    require(r > 0 && r < 1, "division ratio r must lie in (0, 1)");
    require(gamma_ratio > 0 && gamma_ratio < 1, "gamma ratio must lie in (0, 1)");
    require(acs_lines >= 0, "acs line count must be non-negative");
  }
};

// Phase-encode indices [first, first + count) of the centred ACS block.
inline std::pair<Index, Index> acs_range(Index N, Index acs_lines)
{
  Index const first = N / 2 - acs_lines / 2;
  return {first, first + acs_lines};
}

inline bool is_acs(Index n, Index N, Index acs_lines)
{
  auto const [lo, hi] = acs_range(N, acs_lines);
  return n >= lo && n < hi;
}

inline Index count(Mask const &m)
{
  Index c = 0;
  for (Index i = 0; i < m.size(); i++) {
    c += m.data()[i] ? 1 : 0;
  }
  return c;
}

inline Mask mask_and(Mask const &a, Mask const &b)
{
  Mask out(a.dimensions());
  for (Index i = 0; i < a.size(); i++) {
    out.data()[i] = (a.data()[i] && b.data()[i]) ? 1 : 0;
  }
  return out;
}

inline Mask mask_or(Mask const &a, Mask const &b)
{
  Mask out(a.dimensions());
  for (Index i = 0; i < a.size(); i++) {
    out.data()[i] = (a.data()[i] || b.data()[i]) ? 1 : 0;
  }
  return out;
}

// a AND NOT b
inline Mask mask_minus(Mask const &a, Mask const &b)
{
  Mask out(a.dimensions());
  for (Index i = 0; i < a.size(); i++) {
    out.data()[i] = (a.data()[i] && !b.data()[i]) ? 1 : 0;
  }
  return out;
}

inline bool is_subset(Mask const &a, Mask const &b)
{
  for (Index i = 0; i < a.size(); i++) {
    if (a.data()[i] && !b.data()[i]) {
      return false;
    }
  }
  return true;
}

inline bool is_disjoint(Mask const &a, Mask const &b)
{
  for (Index i = 0; i < a.size(); i++) {
    if (a.data()[i] && b.data()[i]) {
      return false;
    }
  }
  return true;
}

inline bool masks_equal(Mask const &a, Mask const &b)
{
  return a.dimensions() == b.dimensions() && std::equal(a.data(), a.data() + a.size(), b.data());
}

inline Index count_echo(Mask const &m, Index t)
{
  Index c = 0;
  for (Index i = 0; i < m.dimension(0); i++) {
    for (Index n = 0; n < m.dimension(1); n++) {
      c += m(i, n, t) ? 1 : 0;
    }
  }
  return c;
}

// Uniform sample of k distinct elements, in the order drawn.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> pool, Index k, std::mt19937_64 &rng)
{
  for (Index i = 0; i < k; i++) {
    std::uniform_int_distribution<Index> pick(i, static_cast<Index>(pool.size()) - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(k);
  return pool;
}

// Per echo floor(N / R) phase-encode lines: the ACS block plus uniformly
// drawn lines. Readout is fully sampled.
inline Mask generate_omega(Index M, Index N, Index T, SamplingConfig const &cfg)
{
  require(M >= 1 && N >= 1 && T >= 1, "mask dims must be positive");
  require(cfg.R >= 1, "acceleration R must be >= 1");
  require(cfg.acs_lines >= 0 && cfg.acs_lines <= N, "acs lines out of range");
  Index const lines = static_cast<Index>(std::floor(static_cast<double>(N) / cfg.R + 1e-12));
  if (cfg.R > 1 && lines < cfg.acs_lines + 1) {
    throw DomainError("R = " + std::to_string(cfg.R) + " with " + std::to_string(cfg.acs_lines) +
                      " ACS lines is infeasible for N = " + std::to_string(N));
  }
  std::vector<Index> outer;
  for (Index n = 0; n < N; n++) {
    if (!is_acs(n, N, cfg.acs_lines)) {
      outer.push_back(n);
    }
  }
  Index const extra = std::min<Index>(lines - cfg.acs_lines, static_cast<Index>(outer.size()));
  std::mt19937_64 rng(cfg.seed);
  Mask omega(M, N, T);
  omega.setZero();
  for (Index t = 0; t < T; t++) {
    std::vector<Index> picked = sample_without_replacement(outer, extra, rng);
    for (Index n = 0; n < N; n++) {
      if (is_acs(n, N, cfg.acs_lines)) {
        picked.push_back(n);
      }
    }
    for (Index n : picked) {
      for (Index m = 0; m < M; m++) {
        omega(m, n, t) = 1;
      }
    }
  }
  return omega;
}

// Echo t takes echo 0's non-ACS lines, circularly shifted by t * shift_step
// positions along the sequence of non-ACS phase-encode indices. ACS lines are
// left as they are, so every echo keeps echo 0's line count.
inline Mask shift_mask_across_echoes(Mask const &omega, Index shift_step, Index acs_lines)
{
  if (shift_step == 0) {
    return omega;
  }
  Index const M = omega.dimension(0), N = omega.dimension(1), T = omega.dimension(2);
  std::vector<Index> outer;
  for (Index n = 0; n < N; n++) {
    if (!is_acs(n, N, acs_lines)) {
      outer.push_back(n);
    }
  }
  Index const P = static_cast<Index>(outer.size());
  Mask out = omega;
  if (P == 0) {
    return out;
  }
  for (Index t = 1; t < T; t++) {
    for (Index n = 0; n < N; n++) {
      if (is_acs(n, N, acs_lines)) {
        for (Index m = 0; m < M; m++) {
          out(m, n, t) = omega(m, n, 0);
        }
      }
    }
    Index const s = ((t * shift_step) % P + P) % P;
    for (Index j = 0; j < P; j++) {
      Index const src = outer[j];
      Index const dst = outer[(j + s) % P];
      for (Index m = 0; m < M; m++) {
        out(m, dst, t) = omega(m, src, 0);
      }
    }
  }
  return out;
}

// Flat indices of sampled points outside the ACS block.
inline std::vector<Index> non_acs_points(Mask const &m, Index acs_lines)
{
  Index const M = m.dimension(0), N = m.dimension(1), T = m.dimension(2);
  std::vector<Index> pts;
  for (Index i = 0; i < M; i++) {
    for (Index n = 0; n < N; n++) {
      if (is_acs(n, N, acs_lines)) {
        continue;
      }
      for (Index t = 0; t < T; t++) {
        if (m(i, n, t)) {
          pts.push_back((i * N + n) * T + t);
        }
      }
    }
  }
  return pts;
}

struct GammaSplit
{
  Mask gamma;
  Mask rest;
};

// Holds out round(gamma_ratio * |non-ACS Omega|) uniformly chosen points.
inline GammaSplit split_gamma(Mask const &omega, double gamma_ratio, std::uint64_t seed, Index acs_lines)
{
  require(gamma_ratio > 0 && gamma_ratio < 1, "gamma ratio must lie in (0, 1)");
  std::vector<Index> const pts = non_acs_points(omega, acs_lines);
  Index const k = static_cast<Index>(std::llround(gamma_ratio * static_cast<double>(pts.size())));
  std::mt19937_64 rng(seed);
  GammaSplit out{Mask(omega.dimensions()), omega};
  out.gamma.setZero();
  for (Index p : sample_without_replacement(pts, k, rng)) {
    out.gamma.data()[p] = 1;
    out.rest.data()[p] = 0;
  }
  if (count(out.rest) == 0) {
    throw DomainError("split_gamma: nothing left after removing Gamma");
  }
  return out;
}

struct Division
{
  Mask theta; // data consistency
  Mask lam;   // self-supervised loss
};

// Lambda takes round(r * |rest|) points of `rest`, never from the ACS block;
// Theta is the remainder. With `augment` the draw pools every echo so only
// the global ratio is fixed. Without it each echo gets floor or ceil of
// r * |rest_t| points, apportioned by largest remainder so the total still
// equals round(r * |rest|).
inline Division draw_division(Mask const &rest, double r, std::uint64_t seed, bool augment, Index acs_lines)
{
  require(r > 0 && r < 1, "division ratio r must lie in (0, 1)");
  Index const total = count(rest);
  require(total > 0, "draw_division: empty mask");
  Index const T = rest.dimension(2);
  Index const k = static_cast<Index>(std::llround(r * static_cast<double>(total)));
  if (k == 0 || k == total) {
    throw DomainError("division ratio " + std::to_string(r) + " leaves Theta or Lambda empty for " +
                      std::to_string(total) + " points");
  }
  std::vector<Index> const pts = non_acs_points(rest, acs_lines);
  if (k > static_cast<Index>(pts.size())) {
    throw DomainError("division needs " + std::to_string(k) + " Lambda points but only " +
                      std::to_string(pts.size()) + " non-ACS points are available");
  }
  std::mt19937_64 rng(seed);
  Division d{rest, Mask(rest.dimensions())};
  d.lam.setZero();
  auto take = [&](Index p) {
    d.lam.data()[p] = 1;
    d.theta.data()[p] = 0;
  };
  if (augment) {
    for (Index p : sample_without_replacement(pts, k, rng)) {
      take(p);
    }
    return d;
  }
  // Per-echo quotas.
  std::vector<std::vector<Index>> per_echo(static_cast<std::size_t>(T));
  for (Index p : pts) {
    per_echo[static_cast<std::size_t>(p % T)].push_back(p);
  }
  std::vector<Index> quota(static_cast<std::size_t>(T));
  std::vector<std::pair<double, Index>> remainders;
  Index assigned = 0;
  for (Index t = 0; t < T; t++) {
    double const want = r * static_cast<double>(count_echo(rest, t));
    Index q = static_cast<Index>(std::floor(want + 1e-9));
    q = std::min<Index>(q, static_cast<Index>(per_echo[t].size()));
    quota[t] = q;
    assigned += q;
    remainders.emplace_back(want - static_cast<double>(q), t);
  }
  std::stable_sort(remainders.begin(), remainders.end(), [](auto const &a, auto const &b) { return a.first > b.first; });
  bool progress = true;
  while (assigned < k && progress) {
    progress = false;
    for (auto const &[rem, t] : remainders) {
      if (assigned >= k) {
        break;
      }
      if (quota[t] < static_cast<Index>(per_echo[t].size())) {
        quota[t]++;
        assigned++;
        progress = true;
      }
    }
  }
  if (assigned != k) {
    throw DomainError("per-echo division cannot meet the global ratio without touching ACS lines");
  }
  for (Index t = 0; t < T; t++) {
    for (Index p : sample_without_replacement(per_echo[t], quota[t], rng)) {
      take(p);
    }
  }
  return d;
}

// Omega AND NOT (Theta OR Lambda)
inline Mask compute_delta(Mask const &omega, Mask const &theta, Mask const &lam)
{
  return mask_minus(omega, mask_or(theta, lam));
}

// The full set of masks for one training step.
struct MaskSet
{
  Mask omega;
  Mask gamma;
  std::vector<Mask> theta;
  std::vector<Mask> lam;

  Mask rest() const { return mask_minus(omega, gamma); }

  Mask delta(std::size_t k) const { return compute_delta(omega, theta.at(k), lam.at(k)); }

  // Points used by none of the sub-networks. Gamma is optionally removed.
  Mask shared_delta(bool exclude_gamma) const
  {
    Mask d = omega;
    for (std::size_t k = 0; k < theta.size(); k++) {
      d = mask_and(d, delta(k));
    }
    return exclude_gamma ? mask_minus(d, gamma) : d;
  }
};

// Checks every subset/disjointness/ratio relation; returns an empty string
// when the set is valid, otherwise a description of the first violation.
inline std::string validate_mask_set(MaskSet const &s, double r)
{
  if (!is_subset(s.gamma, s.omega)) {
    return "gamma not inside omega";
  }
  Mask const rest = s.rest();
  double const nrest = static_cast<double>(count(rest));
  for (std::size_t k = 0; k < s.theta.size(); k++) {
    auto const &th = s.theta[k];
    auto const &la = s.lam[k];
    if (!is_subset(th, rest) || !is_subset(la, rest)) {
      return "theta/lambda " + std::to_string(k) + " not inside omega \\ gamma";
    }
    if (!is_disjoint(th, la)) {
      return "theta/lambda " + std::to_string(k) + " overlap";
    }
    if (!is_disjoint(s.gamma, th) || !is_disjoint(s.gamma, la)) {
      return "gamma intersects theta/lambda " + std::to_string(k);
    }
    Mask const d = s.delta(k);
    Mask const cover = mask_or(mask_or(th, la), mask_or(s.gamma, mask_minus(d, s.gamma)));
    if (!masks_equal(cover, s.omega)) {
      return "partition of omega broken for pair " + std::to_string(k);
    }
    if (!is_subset(s.gamma, d)) {
      return "gamma not inside delta " + std::to_string(k);
    }
    double const ratio = static_cast<double>(count(la)) / nrest;
    if (std::abs(ratio - r) > 1.0 / nrest + 1e-12) {
      return "division ratio " + std::to_string(ratio) + " deviates from r";
    }
  }
  return {};
}

} // namespace subzero
