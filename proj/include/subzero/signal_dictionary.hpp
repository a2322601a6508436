#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/SVD>

#include "types.hpp"

namespace subzero {

enum class SignalModel { T2Decay, T1InversionRecovery };

inline std::string to_string(SignalModel m)
{
  return m == SignalModel::T2Decay ? "t2" : "t1";
}

inline SignalModel signal_model_from_string(std::string const &s)
{
  if (s == "t2" || s == "T2" || s == "t2_decay") {
    return SignalModel::T2Decay;
  }
  if (s == "t1" || s == "T1" || s == "t1_ir") {
    return SignalModel::T1InversionRecovery;
  }
  throw DomainError("unknown signal model '" + s + "'");
}

// Echo times (T2 decay) or inversion times (T1 recovery) in milliseconds.
struct EchoTiming
{
  std::vector<double> times;
  SignalModel model = SignalModel::T2Decay;

  Index size() const { return static_cast<Index>(times.size()); }

  void validate() const
  {
    require(times.size() >= 2, "echo timing needs at least two time points");
    for (std::size_t i = 0; i < times.size(); i++) {
      require(std::isfinite(times[i]) && times[i] > 0, "echo times must be positive");
      require(i == 0 || times[i] > times[i - 1], "echo times must be strictly increasing");
    }
  }

  // TE = first, 2*first, ... (count points)
  static EchoTiming uniform(double first, double step, Index count, SignalModel model)
  {
    EchoTiming t;
    t.model = model;
    for (Index i = 0; i < count; i++) {
      t.times.push_back(first + step * static_cast<double>(i));
    }
    return t;
  }

  // 16 echoes spanning TE = 11.5 ... 368 ms
  static EchoTiming t2_default() { return uniform(11.5, (368.0 - 11.5) / 15.0, 16, SignalModel::T2Decay); }

  // 9 inversion times, TI = 100 ... 2000 ms, evenly spaced
  static EchoTiming t1_default() { return uniform(100.0, 1900.0 / 8.0, 9, SignalModel::T1InversionRecovery); }
};

struct RelaxationGrid
{
  std::vector<double> values;

  Index size() const { return static_cast<Index>(values.size()); }

  static RelaxationGrid log_spaced(double lo, double hi, Index count)
  {
    require(lo > 0 && hi > lo && count >= 2, "log-spaced grid needs 0 < lo < hi and count >= 2");
    RelaxationGrid g;
    double const a = std::log(lo), b = std::log(hi);
    for (Index i = 0; i < count; i++) {
      g.values.push_back(std::exp(a + (b - a) * static_cast<double>(i) / static_cast<double>(count - 1)));
    }
    return g;
  }

  static RelaxationGrid t2_default() { return log_spaced(1.0, 1000.0, 256); }
  static RelaxationGrid t1_default() { return log_spaced(50.0, 5000.0, 256); }
};

struct SignalDictionary
{
  Eigen::MatrixXd atoms; // (T, K), unit-norm columns
  EchoTiming timing;
  RelaxationGrid grid;
};

template <typename S>
struct SubspaceBasis
{
  Basis<S> phi; // (T, B), orthonormal columns
  Index rank() const { return phi.cols(); }
  Index echoes() const { return phi.rows(); }
};

inline void check_signal_args(double m0, double relax)
{
  if (!(relax > 0) || !std::isfinite(relax)) {
    throw DomainError("relaxation constant must be positive, got " + std::to_string(relax));
  }
  if (!(m0 >= 0) || !std::isfinite(m0)) {
    throw DomainError("proton density must be non-negative, got " + std::to_string(m0));
  }
}

inline Eigen::VectorXd simulate_t2_decay(double m0, double t2, EchoTiming const &timing)
{
  check_signal_args(m0, t2);
  require(timing.model == SignalModel::T2Decay, "simulate_t2_decay needs T2 timing");
  Eigen::VectorXd s(timing.size());
  for (Index t = 0; t < s.size(); t++) {
    s[t] = m0 * std::exp(-timing.times[t] / t2);
  }
  return s;
}

inline Eigen::VectorXd simulate_t1_ir(double m0, double t1, EchoTiming const &timing)
{
  check_signal_args(m0, t1);
  require(timing.model == SignalModel::T1InversionRecovery, "simulate_t1_ir needs T1 timing");
  Eigen::VectorXd s(timing.size());
  for (Index t = 0; t < s.size(); t++) {
    s[t] = m0 * (1.0 - 2.0 * std::exp(-timing.times[t] / t1));
  }
  return s;
}

inline Eigen::VectorXd simulate_signal(double m0, double relax, EchoTiming const &timing)
{
  return timing.model == SignalModel::T2Decay ? simulate_t2_decay(m0, relax, timing)
                                              : simulate_t1_ir(m0, relax, timing);
}

// Duplicate grid values produce duplicate columns; that is allowed.
inline SignalDictionary build_dictionary(RelaxationGrid const &grid, EchoTiming const &timing)
{
  require(grid.size() > 0, "relaxation grid is empty");
  SignalDictionary dict{Eigen::MatrixXd(timing.size(), grid.size()), timing, grid};
  for (Index k = 0; k < grid.size(); k++) {
    Eigen::VectorXd s = simulate_signal(1.0, grid.values[k], timing);
    double const norm = s.norm();
    if (!(norm >= 1e-12)) {
      throw DegenerateError("dictionary atom " + std::to_string(k) + " has zero norm");
    }
    dict.atoms.col(k) = s / norm;
  }
  return dict;
}

// Leading B left singular vectors of the dictionary. Each column is rotated so
// that its largest-magnitude entry is real and positive.
template <typename S = double>
SubspaceBasis<S> compute_basis(SignalDictionary const &dict, Index B)
{
  Index const T = dict.atoms.rows();
  Index const K = dict.atoms.cols();
  if (B < 1 || B > std::min(T, K)) {
    throw DomainError("basis count " + std::to_string(B) + " outside [1, " + std::to_string(std::min(T, K)) + "]");
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dict.atoms, Eigen::ComputeThinU);
  Basis<double> phi = svd.matrixU().leftCols(B).cast<Cx<double>>();
  for (Index b = 0; b < B; b++) {
    Index imax = 0;
    phi.col(b).cwiseAbs().maxCoeff(&imax);
    Cx<double> const v = phi(imax, b);
    phi.col(b) *= std::conj(v) / std::abs(v);
  }
  return SubspaceBasis<S>{phi.template cast<Cx<S>>()};
}

template <typename S = double>
SubspaceBasis<S> identity_basis(Index T)
{
  return SubspaceBasis<S>{Basis<S>::Identity(T, T)};
}

// Per-voxel coefficients alpha_b = sum_t x_t conj(phi_tb).
template <typename S>
Coeffs<S> project_signals(Images<S> const &x, SubspaceBasis<S> const &basis)
{
  Index const M = x.dimension(0), N = x.dimension(1), T = x.dimension(2);
  if (T != basis.echoes()) {
    throw DomainError("project_signals: images have " + std::to_string(T) + " echoes, basis has " +
                      std::to_string(basis.echoes()));
  }
  Index const B = basis.rank();
  Coeffs<S> alpha(M, N, B);
  using RowMat = Eigen::Matrix<Cx<S>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMat const> X(x.data(), M * N, T);
  Eigen::Map<RowMat> A(alpha.data(), M * N, B);
  A.noalias() = X * basis.phi.conjugate();
  return alpha;
}

// Per-voxel x_t = sum_b phi_tb alpha_b.
template <typename S>
Images<S> expand_subspace(Coeffs<S> const &alpha, SubspaceBasis<S> const &basis)
{
  Index const M = alpha.dimension(0), N = alpha.dimension(1), B = alpha.dimension(2);
  if (B != basis.rank()) {
    throw DomainError("expand_subspace: coefficients have " + std::to_string(B) + " channels, basis has " +
                      std::to_string(basis.rank()));
  }
  Index const T = basis.echoes();
  Images<S> x(M, N, T);
  using RowMat = Eigen::Matrix<Cx<S>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMat const> A(alpha.data(), M * N, B);
  Eigen::Map<RowMat> X(x.data(), M * N, T);
  X.noalias() = A * basis.phi.transpose();
  return x;
}

// Largest relative residual ||(I - phi phi^H) a|| over dictionary atoms.
inline double max_projection_residual(SignalDictionary const &dict, SubspaceBasis<double> const &basis)
{
  Eigen::MatrixXcd const atoms = dict.atoms.cast<Cx<double>>();
  Eigen::MatrixXcd const res = atoms - basis.phi * (basis.phi.adjoint() * atoms);
  return res.colwise().norm().maxCoeff();
}

} // namespace subzero
