#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <random>

#include "linops.hpp"
#include "signal_dictionary.hpp"
#include "types.hpp"

namespace subzero {

struct ParameterMaps
{
  RealMap m0;                  // proton density, 0 outside support
  RealMap relax;               // T2 or T1 in ms, 0 outside support
  Tensor<std::uint8_t, 2> support;
  SignalModel model = SignalModel::T2Decay;
};

inline std::array<double, 4> tissue_relaxation(SignalModel model)
{
  if (model == SignalModel::T2Decay) {
    return {40.0, 80.0, 120.0, 200.0};
  }
  return {400.0, 800.0, 1200.0, 2000.0};
}

inline constexpr std::array<double, 4> kTissueDensity{0.75, 0.9, 1.0, 0.85};

// Piecewise-constant ellipse phantom: an outer ellipse and four inner ones,
// each tissue class drawn from the model's four relaxation values. The seed
// jitters geometry and permutes the class assignment.
inline ParameterMaps make_phantom(Index M, Index N, SignalModel model, std::uint64_t seed)
{
  require(M >= 16 && N >= 16, "phantom needs M, N >= 16");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);

  struct Ellipse
  {
    double cx, cy, ax, ay, angle;
    int tissue;
  };
  std::array<int, 4> classes{0, 1, 2, 3};
  std::shuffle(classes.begin(), classes.end(), rng);
  std::vector<Ellipse> ellipses{
      {0.0, 0.0, 0.85, 0.72, 0.0, classes[0]},
      {-0.35, -0.1, 0.28, 0.42, 0.3, classes[1]},
      {0.35, -0.05, 0.25, 0.38, -0.3, classes[2]},
      {0.0, 0.45, 0.3, 0.16, 0.0, classes[3]},
      {0.05, -0.5, 0.14, 0.12, 0.0, classes[1]},
  };
  for (auto &e : ellipses) {
    e.cx += 0.03 * jitter(rng);
    e.cy += 0.03 * jitter(rng);
    e.ax *= 1.0 + 0.08 * jitter(rng);
    e.ay *= 1.0 + 0.08 * jitter(rng);
    e.angle += 0.1 * jitter(rng);
  }
  auto const relax_values = tissue_relaxation(model);

  ParameterMaps maps{RealMap(M, N), RealMap(M, N), Tensor<std::uint8_t, 2>(M, N), model};
  maps.m0.setZero();
  maps.relax.setZero();
  maps.support.setZero();
  for (Index m = 0; m < M; m++) {
    double const px = (static_cast<double>(m) - static_cast<double>(M) / 2) / (static_cast<double>(M) / 2);
    for (Index n = 0; n < N; n++) {
      double const py = (static_cast<double>(n) - static_cast<double>(N) / 2) / (static_cast<double>(N) / 2);
      for (auto const &e : ellipses) {
        double const c = std::cos(e.angle), s = std::sin(e.angle);
        double const u = (c * (px - e.cx) + s * (py - e.cy)) / e.ax;
        double const v = (-s * (px - e.cx) + c * (py - e.cy)) / e.ay;
        if (u * u + v * v <= 1.0) {
          maps.m0(m, n) = kTissueDensity[e.tissue];
          maps.relax(m, n) = relax_values[e.tissue];
          maps.support(m, n) = 1;
        }
      }
    }
  }
  return maps;
}

// Smooth complex receive fields: a Gaussian envelope centred outside the FOV
// times a first-order complex polynomial, then SOS-normalised at every voxel.
// The fields are non-zero everywhere, so the normalisation support is the
// whole FOV.
inline Sensitivities<double> simulate_coils(Index M, Index N, Index C, std::uint64_t seed)
{
  require(C >= 1, "need at least one coil");
  require(M >= 1 && N >= 1, "coil maps need positive dims");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  Sensitivities<double> S(M, N, C);
  double const pi = std::acos(-1.0);
  for (Index c = 0; c < C; c++) {
    double const theta = 2 * pi * static_cast<double>(c) / static_cast<double>(C) + 0.2 * u(rng);
    double const cx = 1.3 * std::cos(theta), cy = 1.3 * std::sin(theta);
    double const width = 1.0 + 0.1 * u(rng);
    Cx<double> const a(0.15 * u(rng), 0.3 * u(rng));
    Cx<double> const b(0.15 * u(rng), 0.3 * u(rng));
    Cx<double> const phase = std::polar(1.0, pi * u(rng));
    for (Index m = 0; m < M; m++) {
      double const px = (static_cast<double>(m) - static_cast<double>(M) / 2) / (static_cast<double>(M) / 2);
      for (Index n = 0; n < N; n++) {
        double const py = (static_cast<double>(n) - static_cast<double>(N) / 2) / (static_cast<double>(N) / 2);
        double const r2 = (px - cx) * (px - cx) + (py - cy) * (py - cy);
        S(m, n, c) = phase * (1.0 + a * px + b * py) * std::exp(-r2 / (2 * width * width));
      }
    }
  }
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      double sos = 0;
      for (Index c = 0; c < C; c++) {
        sos += std::norm(S(m, n, c));
      }
      double const inv = 1.0 / std::sqrt(sos);
      for (Index c = 0; c < C; c++) {
        S(m, n, c) *= inv;
      }
    }
  }
  return S;
}

struct SimulatedScan
{
  KSpace<double> y_full; // (M, N, C, T)
  Images<double> x_true; // (M, N, T)
};

// Noise-free echo images from the signal model.
inline Images<double> echo_images(ParameterMaps const &maps, EchoTiming const &timing)
{
  Index const M = maps.m0.dimension(0), N = maps.m0.dimension(1), T = timing.size();
  require(timing.model == maps.model, "timing model differs from phantom model");
  Images<double> x(M, N, T);
  x.setZero();
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      if (!maps.support(m, n)) continue;
      Eigen::VectorXd const s = simulate_signal(maps.m0(m, n), maps.relax(m, n), timing);
      for (Index t = 0; t < T; t++) {
        x(m, n, t) = s[t];
      }
    }
  }
  return x;
}

// Fully sampled multi-coil k-space with circular complex Gaussian noise of
// standard deviation noise_sigma per real/imaginary component.
inline SimulatedScan simulate_kspace(
    ParameterMaps const &maps, EchoTiming const &timing, Sensitivities<double> const &sens, double noise_sigma, std::uint64_t seed)
{
  require(noise_sigma >= 0, "noise sigma must be non-negative");
  Index const M = maps.m0.dimension(0), N = maps.m0.dimension(1), T = timing.size();
  require(sens.dimension(0) == M && sens.dimension(1) == N, "coil maps do not match phantom dims");
  SimulatedScan scan{KSpace<double>(), echo_images(maps, timing)};
  Mask full(M, N, T);
  full.setConstant(1);
  scan.y_full = forward(Coeffs<double>(scan.x_true), sens, identity_basis<double>(T), full);
  if (noise_sigma > 0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, noise_sigma);
    for (Index i = 0; i < scan.y_full.size(); i++) {
      double const re = g(rng);
      double const im = g(rng);
      scan.y_full.data()[i] += Cx<double>(re, im);
    }
  }
  return scan;
}

// Absolute noise level for a fraction of the peak k-space magnitude.
inline double noise_sigma_for_peak(KSpace<double> const &y, double fraction)
{
  double peak = 0;
  for (Index i = 0; i < y.size(); i++) {
    peak = std::max(peak, std::abs(y.data()[i]));
  }
  return fraction * peak;
}

} // namespace subzero
