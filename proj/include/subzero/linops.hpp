#pragma once

#include <cmath>
#include <optional>
#include <vector>

#include "fft.hpp"
#include "signal_dictionary.hpp"
#include "types.hpp"

namespace subzero {

// Geometry shared by the encoding operators.
struct EncodingDims
{
  Index M, N, C, T, B;
};

template <typename S>
EncodingDims check_encoding(Sensitivities<S> const &sens, SubspaceBasis<S> const &basis, Mask const &mask)
{
  EncodingDims d{sens.dimension(0), sens.dimension(1), sens.dimension(2), basis.echoes(), basis.rank()};
  if (!same_dims(mask, {d.M, d.N, d.T})) {
    throw DomainError("mask dims " + dims_string(mask) + " do not match sensitivities/basis (" +
                      std::to_string(d.M) + ", " + std::to_string(d.N) + ", " + std::to_string(d.T) + ")");
  }
  return d;
}

// Sensitivities must be SOS-normalised wherever any coil is non-zero.
template <typename S>
bool sensitivities_normalized(Sensitivities<S> const &sens, double tol = 1e-6)
{
  Index const M = sens.dimension(0), N = sens.dimension(1), C = sens.dimension(2);
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      double sos = 0;
      for (Index c = 0; c < C; c++) {
        sos += std::norm(sens(m, n, c));
      }
      if (sos != 0 && std::abs(sos - 1.0) > tol) {
        return false;
      }
    }
  }
  return true;
}

// y = mask * F(S_c * (phi alpha))
template <typename S>
KSpace<S> forward(Coeffs<S> const &alpha, Sensitivities<S> const &sens, SubspaceBasis<S> const &basis, Mask const &mask)
{
  auto const d = check_encoding(sens, basis, mask);
  if (!same_dims(alpha, {d.M, d.N, d.B})) {
    throw DomainError("forward: coefficient dims " + dims_string(alpha) + " inconsistent with encoding");
  }
  Images<S> const x = expand_subspace(alpha, basis);
  KSpace<S> y(d.M, d.N, d.C, d.T);
  for (Index m = 0; m < d.M; m++) {
    for (Index n = 0; n < d.N; n++) {
      for (Index c = 0; c < d.C; c++) {
        Cx<S> const s = sens(m, n, c);
        for (Index t = 0; t < d.T; t++) {
          y(m, n, c, t) = s * x(m, n, t);
        }
      }
    }
  }
  fft2c_batch<S, 4>(y, false);
  for (Index m = 0; m < d.M; m++) {
    for (Index n = 0; n < d.N; n++) {
      for (Index c = 0; c < d.C; c++) {
        for (Index t = 0; t < d.T; t++) {
          if (!mask(m, n, t)) {
            y(m, n, c, t) = Cx<S>(0);
          }
        }
      }
    }
  }
  return y;
}

// Coil-combined images sum_c conj(S_c) F^H (mask * y), before the subspace projection.
template <typename S>
Images<S> adjoint_images(KSpace<S> const &y, Sensitivities<S> const &sens, Mask const &mask)
{
  Index const M = y.dimension(0), N = y.dimension(1), C = y.dimension(2), T = y.dimension(3);
  if (!same_dims(sens, {M, N, C}) || !same_dims(mask, {M, N, T})) {
    throw DomainError("adjoint: k-space " + dims_string(y) + " inconsistent with sensitivities " +
                      dims_string(sens) + " or mask " + dims_string(mask));
  }
  KSpace<S> k(M, N, C, T);
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      for (Index c = 0; c < C; c++) {
        for (Index t = 0; t < T; t++) {
          k(m, n, c, t) = mask(m, n, t) ? y(m, n, c, t) : Cx<S>(0);
        }
      }
    }
  }
  fft2c_batch<S, 4>(k, true);
  Images<S> x(M, N, T);
  x.setZero();
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      for (Index c = 0; c < C; c++) {
        Cx<S> const s = std::conj(sens(m, n, c));
        for (Index t = 0; t < T; t++) {
          x(m, n, t) += s * k(m, n, c, t);
        }
      }
    }
  }
  return x;
}

// alpha = phi^H S^H F^H (mask * y)
template <typename S>
Coeffs<S> adjoint(KSpace<S> const &y, Sensitivities<S> const &sens, SubspaceBasis<S> const &basis, Mask const &mask)
{
  auto const d = check_encoding(sens, basis, mask);
  if (!same_dims(y, {d.M, d.N, d.C, d.T})) {
    throw DomainError("adjoint: k-space dims " + dims_string(y) + " inconsistent with encoding");
  }
  return project_signals(adjoint_images(y, sens, mask), basis);
}

// A^H A alpha
template <typename S>
Coeffs<S> normal(Coeffs<S> const &alpha, Sensitivities<S> const &sens, SubspaceBasis<S> const &basis, Mask const &mask)
{
  return adjoint(forward(alpha, sens, basis, mask), sens, basis, mask);
}

template <typename S, int R>
S real_dot(Tensor<Cx<S>, R> const &a, Tensor<Cx<S>, R> const &b)
{
  S acc = 0;
  for (Index i = 0; i < a.size(); i++) {
    acc += a.data()[i].real() * b.data()[i].real() + a.data()[i].imag() * b.data()[i].imag();
  }
  return acc;
}

template <typename S, int R>
Cx<S> cdot(Tensor<Cx<S>, R> const &a, Tensor<Cx<S>, R> const &b)
{
  Cx<S> acc = 0;
  for (Index i = 0; i < a.size(); i++) {
    acc += std::conj(a.data()[i]) * b.data()[i];
  }
  return acc;
}

template <typename S, int R>
S norm2(Tensor<Cx<S>, R> const &a)
{
  return std::sqrt(real_dot(a, a));
}

// Residual below which CG stops early.
inline constexpr double kCgTolerance = 1e-9;

struct CgTrace
{
  std::vector<double> residuals; // ||b - (A^H A + mu I) x_k||, k = 0..iterations
};

// Approximately solves (A^H A + mu I) alpha = A^H y + mu z by conjugate
// gradient started from z. Stops after `iters` iterations or once the
// residual drops below kCgTolerance.
template <typename S>
Coeffs<S> cg_solve_dc(
    Coeffs<S> const &z,
    KSpace<S> const &y,
    double mu,
    Index iters,
    Sensitivities<S> const &sens,
    SubspaceBasis<S> const &basis,
    Mask const &mask,
    CgTrace *trace = nullptr)
{
  if (!(mu > 0)) {
    throw DomainError("cg_solve_dc: mu must be positive, got " + std::to_string(mu));
  }
  require(iters >= 1, "cg_solve_dc: need at least one iteration");
  S const smu = static_cast<S>(mu);
  auto apply = [&](Coeffs<S> const &p) -> Coeffs<S> {
    Coeffs<S> out = normal(p, sens, basis, mask);
    out += p * Cx<S>(smu);
    return out;
  };
  Coeffs<S> x = z;
  Coeffs<S> r = adjoint(y, sens, basis, mask);
  r += z * Cx<S>(smu);
  r -= apply(x);
  Coeffs<S> p = r;
  S rr = real_dot(r, r);
  if (trace) {
    trace->residuals.assign(1, std::sqrt(static_cast<double>(rr)));
  }
  for (Index it = 0; it < iters; it++) {
    if (std::sqrt(static_cast<double>(rr)) < kCgTolerance) {
      break;
    }
    Coeffs<S> const q = apply(p);
    S const a = rr / real_dot(p, q);
    x += p * Cx<S>(a);
    r -= q * Cx<S>(a);
    S const rr_new = real_dot(r, r);
    if (trace) {
      trace->residuals.push_back(std::sqrt(static_cast<double>(rr_new)));
    }
    p = r + p * Cx<S>(rr_new / rr);
    rr = rr_new;
  }
  return x;
}

} // namespace subzero
