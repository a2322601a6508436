#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "linops.hpp"
#include "phantom.hpp"
#include "sampling.hpp"
#include "signal_dictionary.hpp"
#include "trainer.hpp"

namespace subzero {

// Per echo || |recon_t| - |ref_t| ||_2 / || |ref_t| ||_2.
inline std::vector<double> rmse_per_echo(Images<double> const &recon, Images<double> const &ref)
{
  require(recon.dimensions() == ref.dimensions(), "rmse_per_echo: shape mismatch " + dims_string(recon) + " vs " + dims_string(ref));
  Index const M = ref.dimension(0), N = ref.dimension(1), T = ref.dimension(2);
  std::vector<double> out(static_cast<std::size_t>(T));
  for (Index t = 0; t < T; t++) {
    double num = 0, den = 0;
    for (Index m = 0; m < M; m++) {
      for (Index n = 0; n < N; n++) {
        double const a = std::abs(recon(m, n, t)), b = std::abs(ref(m, n, t));
        num += (a - b) * (a - b);
        den += b * b;
      }
    }
    if (den == 0) {
      throw DegenerateError("rmse_per_echo: reference echo " + std::to_string(t) + " is zero");
    }
    out[static_cast<std::size_t>(t)] = std::sqrt(num / den);
  }
  return out;
}

inline double mean(std::vector<double> const &v)
{
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median(std::vector<double> v)
{
  require(!v.empty(), "median of an empty set");
  std::sort(v.begin(), v.end());
  std::size_t const h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

// Fraction of the peak voxel norm below which voxels are not fitted.
inline constexpr double kMapThreshold = 0.05;

// Dictionary matching: each voxel takes the grid value of the atom with the
// largest |<x, atom>| / ||x||. Voxels under 5% of the peak norm map to 0.
inline RealMap fit_relaxation_map(Images<double> const &x, SignalDictionary const &dict)
{
  Index const M = x.dimension(0), N = x.dimension(1), T = x.dimension(2);
  require(dict.atoms.cols() > 0, "fit_relaxation_map: empty dictionary");
  require(dict.atoms.rows() == T, "fit_relaxation_map: dictionary has " + std::to_string(dict.atoms.rows()) +
                                      " time points, images have " + std::to_string(T));
  using RowMat = Eigen::Matrix<Cx<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<RowMat const> X(x.data(), M * N, T);
  Eigen::MatrixXcd const corr = X * dict.atoms.cast<Cx<double>>();
  Eigen::VectorXd const norms = X.rowwise().norm();
  double const peak = norms.size() ? norms.maxCoeff() : 0.0;
  RealMap out(M, N);
  out.setZero();
  for (Index v = 0; v < M * N; v++) {
    if (!(norms[v] > kMapThreshold * peak) || norms[v] == 0) {
      continue;
    }
    Index best = 0;
    corr.row(v).cwiseAbs().maxCoeff(&best);
    out.data()[v] = dict.grid.values[static_cast<std::size_t>(best)];
  }
  return out;
}

// Median |fit - truth| / truth over the support; unfitted voxels count as 1.
inline double map_error(RealMap const &fit, RealMap const &truth, Tensor<std::uint8_t, 2> const &support)
{
  std::vector<double> errs;
  for (Index i = 0; i < truth.size(); i++) {
    if (support.data()[i] && truth.data()[i] > 0) {
      errs.push_back(std::abs(fit.data()[i] - truth.data()[i]) / truth.data()[i]);
    }
  }
  return median(errs);
}

struct EvalReport
{
  std::vector<double> per_echo_rmse;
  double mean_rmse = 0;
  std::optional<double> map_error;
};

inline EvalReport evaluate(Images<double> const &recon, Images<double> const &ref)
{
  EvalReport r;
  r.per_echo_rmse = rmse_per_echo(recon, ref);
  r.mean_rmse = mean(r.per_echo_rmse);
  return r;
}

enum class Method { ZeroFilled, Sense, Subspace, Zsss, Zssssub, Subzero };

struct MethodToggles
{
  bool use_subspace = false;
  bool parallel = false;
  bool se_conv = false;
  bool augment = false;

  bool operator==(MethodToggles const &) const = default;
};

struct MethodSpec
{
  Method method = Method::ZeroFilled;
  MethodToggles toggles;

  bool learned() const { return method == Method::Zsss || method == Method::Zssssub || method == Method::Subzero; }

  static MethodSpec make(Method m)
  {
    switch (m) {
    case Method::Subspace: return {m, {true, false, false, false}};
    case Method::Zsss: return {m, {false, false, false, false}};
    case Method::Zssssub: return {m, {true, false, false, false}};
    case Method::Subzero: return {m, {true, true, true, true}};
    default: return {m, {}};
    }
  }

  void validate() const
  {
    auto const &t = toggles;
    int const extras = int(t.parallel) + int(t.se_conv) + int(t.augment);
    switch (method) {
    case Method::Zsss:
      require(!t.use_subspace && !t.parallel, "ZSSS uses the identity basis and a single network");
      break;
    case Method::Zssssub:
      require(t.use_subspace && extras <= 1, "ZSSSSub allows the subspace plus at most one ablation toggle");
      break;
    case Method::Subzero:
      require(t.use_subspace, "SubZero needs the subspace model");
      break;
    default:
      break;
    }
  }

  std::string label() const
  {
    switch (method) {
    case Method::ZeroFilled: return "zero_filled";
    case Method::Sense: return "sense";
    case Method::Subspace: return "subspace";
    case Method::Zsss: return "zsss";
    case Method::Subzero: return "subzero";
    case Method::Zssssub: {
      std::string s = "zssssub";
      if (toggles.se_conv) s += "+se";
      if (toggles.augment) s += "+aug";
      if (toggles.parallel) s += "+par";
      return s;
    }
    }
    return "unknown";
  }

  // "zero_filled", "sense", "subspace", "zsss", "zssssub", "zssssub+se",
  // "zssssub+aug", "zssssub+par", "subzero"
  static MethodSpec parse(std::string const &name)
  {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (std::size_t pos; (pos = name.find('+', start)) != std::string::npos; start = pos + 1) {
      parts.push_back(name.substr(start, pos - start));
    }
    parts.push_back(name.substr(start));
    std::string const base = parts.front();
    std::vector<std::string> const extras(parts.begin() + 1, parts.end());
    MethodSpec m;
    if (base == "zero_filled" || base == "zf") m = make(Method::ZeroFilled);
    else if (base == "sense") m = make(Method::Sense);
    else if (base == "subspace") m = make(Method::Subspace);
    else if (base == "zsss") m = make(Method::Zsss);
    else if (base == "zssssub") m = make(Method::Zssssub);
    else if (base == "subzero") m = make(Method::Subzero);
    else throw DomainError("unknown method '" + name + "'");
    for (auto const &e : extras) {
      if (e == "se") m.toggles.se_conv = true;
      else if (e == "aug") m.toggles.augment = true;
      else if (e == "par") m.toggles.parallel = true;
      else throw DomainError("unknown method toggle '" + e + "'");
    }
    m.validate();
    return m;
  }
};

struct BaselineConfig
{
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig train;
  Index linear_cg_iters = 100; // SENSE and subspace baselines
  double tikhonov = 1e-6;
};

struct BaselineResult
{
  Images<double> x;
  std::optional<TrainResult> training;
};

inline Images<double> zero_filled(KSpace<double> const &y, Mask const &omega, Sensitivities<double> const &sens)
{
  return adjoint_images(y, sens, omega);
}

// Per-echo CG least squares with a tiny Tikhonov term and no temporal model.
inline Images<double> sense_recon(
    KSpace<double> const &y, Mask const &omega, Sensitivities<double> const &sens, Index iters, double tikhonov)
{
  Index const M = y.dimension(0), N = y.dimension(1), C = y.dimension(2), T = y.dimension(3);
  auto const one = identity_basis<double>(1);
  Images<double> x(M, N, T);
  for (Index t = 0; t < T; t++) {
    KSpace<double> yt(M, N, C, 1);
    Mask mt(M, N, 1);
    for (Index m = 0; m < M; m++) {
      for (Index n = 0; n < N; n++) {
        mt(m, n, 0) = omega(m, n, t);
        for (Index c = 0; c < C; c++) {
          yt(m, n, c, 0) = y(m, n, c, t);
        }
      }
    }
    Coeffs<double> z(M, N, 1);
    z.setZero();
    Coeffs<double> const xt = cg_solve_dc(z, yt, tikhonov, iters, sens, one, mt);
    for (Index m = 0; m < M; m++) {
      for (Index n = 0; n < N; n++) {
        x(m, n, t) = xt(m, n, 0);
      }
    }
  }
  return x;
}

// Linear subspace reconstruction: CG on the coefficient normal equations.
inline Images<double> subspace_recon(
    KSpace<double> const &y,
    Mask const &omega,
    Sensitivities<double> const &sens,
    SubspaceBasis<double> const &basis,
    Index iters,
    double tikhonov)
{
  Coeffs<double> z(sens.dimension(0), sens.dimension(1), basis.rank());
  z.setZero();
  return expand_subspace(cg_solve_dc(z, y, tikhonov, iters, sens, basis, omega), basis);
}

// Basis and configs a learned method trains with.
struct LearnedSetup
{
  SubspaceBasis<double> basis;
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig train;
};

inline LearnedSetup learned_setup(MethodSpec const &spec, SubspaceBasis<double> const &basis, BaselineConfig const &cfg)
{
  spec.validate();
  require(spec.learned(), spec.label() + " is not a learned method");
  LearnedSetup s{spec.toggles.use_subspace ? basis : identity_basis<double>(basis.echoes()), cfg.sampling, cfg.model,
                 cfg.train};
  s.sampling.augment = spec.toggles.augment;
  s.model.reg.in_channels = 2 * s.basis.rank();
  s.model.reg.se_conv = spec.toggles.se_conv;
  s.train.parallel = spec.toggles.parallel;
  return s;
}

inline BaselineResult run_baseline(
    MethodSpec const &spec,
    KSpace<double> const &y,
    Mask const &omega,
    Sensitivities<double> const &sens,
    SubspaceBasis<double> const &basis,
    BaselineConfig const &cfg,
    EpochCallback const &on_epoch = {})
{
  spec.validate();
  switch (spec.method) {
  case Method::ZeroFilled: return {zero_filled(y, omega, sens), std::nullopt};
  case Method::Sense: return {sense_recon(y, omega, sens, cfg.linear_cg_iters, cfg.tikhonov), std::nullopt};
  case Method::Subspace:
    return {subspace_recon(y, omega, sens, basis, cfg.linear_cg_iters, cfg.tikhonov), std::nullopt};
  default: break;
  }
  LearnedSetup const s = learned_setup(spec, basis, cfg);
  TrainResult tr = train(y, omega, sens, s.basis, s.sampling, s.model, s.train, on_epoch);
  Reconstruction rec = infer(tr.model, y, omega, sens, s.basis);
  return {std::move(rec.x), std::move(tr)};
}

} // namespace subzero
