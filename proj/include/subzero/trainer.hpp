#pragma once

#include <cmath>
#include <functional>
#include <iostream>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "linops.hpp"
#include "sampling.hpp"
#include "unrolled.hpp"

namespace subzero {

struct TrainConfig
{
  Index max_epochs = 200;
  double lr = 5e-4;
  double mu_lr = 5e-4;        // step size for log(mu)
  Index patience = 15;
  std::uint64_t seed = 0;
  double lambda_diff = 1.0;
  Index redraw_every = 1;     // steps between Theta/Lambda redraws
  Index steps_per_epoch = 1;  // gradient steps between Gamma evaluations
  bool parallel = true;       // two weight-shared sub-networks
  bool mse_loss = false;      // plain MSE instead of the normalised L1 + L2 loss
  bool diff_in_image_space = false;

  void validate() const
  {
    require(max_epochs >= 1, "max_epochs must be >= 1");
    require(lr > 0, "learning rate must be positive");
    require(mu_lr >= 0, "mu learning rate must be non-negative");
    require(patience >= 1, "patience must be >= 1");
    require(lambda_diff >= 0, "lambda_diff must be non-negative");
    require(redraw_every >= 1, "redraw_every must be >= 1");
    require(steps_per_epoch >= 1, "steps_per_epoch must be >= 1");
  }
};

struct LossReport
{
  Index epoch = 0;
  double recon1 = 0;
  double recon2 = 0;
  double diff = 0;
  double total = 0;
  double gamma_val = 0;
  bool stopped_early = false;
};

// ||r||_2 / ||y_L||_2 + ||r||_1 / ||y_L||_1 on the Lambda samples, or the
// mean squared residual there when `mse` is set.
template <typename S>
double recon_loss(KSpace<S> const &y_pred, KSpace<S> const &y_true, Mask const &lam, bool mse = false)
{
  Index const M = y_true.dimension(0), N = y_true.dimension(1), C = y_true.dimension(2), T = y_true.dimension(3);
  require(y_pred.dimensions() == y_true.dimensions(), "recon_loss: prediction and target dims differ");
  require(same_dims(lam, {M, N, T}), "recon_loss: mask dims inconsistent with k-space");
  double r2 = 0, r1 = 0, y2 = 0, y1 = 0;
  Index n = 0;
  for (Index m = 0; m < M; m++) {
    for (Index k = 0; k < N; k++) {
      for (Index c = 0; c < C; c++) {
        for (Index t = 0; t < T; t++) {
          if (!lam(m, k, t)) continue;
          Cx<S> const yt = y_true(m, k, c, t);
          double const r = std::abs(y_pred(m, k, c, t) - yt);
          r2 += r * r;
          r1 += r;
          y2 += std::norm(yt);
          y1 += std::abs(yt);
          n++;
        }
      }
    }
  }
  if (mse) {
    require(n > 0, "recon_loss: empty loss mask");
    return r2 / static_cast<double>(n);
  }
  if (y2 == 0) {
    throw DegenerateError("recon_loss: target is zero on the loss mask");
  }
  return std::sqrt(r2) / std::sqrt(y2) + r1 / y1;
}

// Mean squared difference of the two reconstructions' k-space, F S x, over
// the Delta samples: sum |E x1 - E x2|^2 / (|Delta| C). Empty Delta gives 0.
template <typename S>
double diff_loss(Images<S> const &x1, Images<S> const &x2, Mask const &delta, Sensitivities<S> const &sens)
{
  require(x1.dimensions() == x2.dimensions(), "diff_loss: image dims differ");
  Index const nd = count(delta);
  if (nd == 0) {
    std::cerr << "warning: diff_loss over an empty Delta set is 0\n";
    return 0.0;
  }
  Images<S> const d = x1 - x2;
  auto const basis = identity_basis<S>(x1.dimension(2));
  KSpace<S> const k = forward(Coeffs<S>(d), sens, basis, delta);
  S const n = norm2(k);
  return static_cast<double>(n * n) / static_cast<double>(nd * sens.dimension(2));
}

// Adam on a flat parameter vector.
class Adam
{
public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps)
  {
  }

  // Per-coordinate step sizes; an empty vector means the scalar rate.
  void set_rates(ad::Vec rates) { rates_ = std::move(rates); }

  void step(ad::Vec &theta, ad::Vec const &g)
  {
    if (m_.size() == 0) {
      m_ = ad::Vec::Zero(theta.size());
      v_ = ad::Vec::Zero(theta.size());
    }
    t_++;
    m_ = b1_ * m_ + (1 - b1_) * g;
    v_ = b2_ * v_ + (1 - b2_) * g.square();
    double const c1 = 1 - std::pow(b1_, static_cast<double>(t_));
    double const c2 = 1 - std::pow(b2_, static_cast<double>(t_));
    ad::Vec const dir = (m_ / c1) / ((v_ / c2).sqrt() + eps_);
    if (rates_.size() == theta.size()) {
      theta -= rates_ * dir;
    } else {
      theta -= lr_ * dir;
    }
  }

private:
  double lr_, b1_, b2_, eps_;
  ad::Vec m_, v_, rates_;
  Index t_ = 0;
};

// Masked copy of y.
inline KSpace<double> apply_mask(KSpace<double> const &y, Mask const &mask)
{
  KSpace<double> out = y;
  Index const M = y.dimension(0), N = y.dimension(1), C = y.dimension(2), T = y.dimension(3);
  for (Index m = 0; m < M; m++) {
    for (Index n = 0; n < N; n++) {
      for (Index c = 0; c < C; c++) {
        for (Index t = 0; t < T; t++) {
          if (!mask(m, n, t)) out(m, n, c, t) = 0;
        }
      }
    }
  }
  return out;
}

struct StepLoss
{
  double recon1 = 0;
  double recon2 = 0;
  double diff = 0;
  double total = 0;
  ad::Vec grad; // empty unless requested
};

namespace detail {

inline ad::Var recon_loss_var(ad::Var y_pred, KSpace<double> const &y_lam, Index count, bool mse)
{
  ad::Tape &tape = *y_pred.tape();
  ad::Var const r = ad::sub(y_pred, tape.constant(pack(y_lam)));
  if (mse) {
    return ad::scale(ad::dot(r, r), 1.0 / static_cast<double>(count));
  }
  double const n2 = norm2(y_lam);
  double n1 = 0;
  for (Index i = 0; i < y_lam.size(); i++) {
    n1 += std::abs(y_lam.data()[i]);
  }
  if (n2 == 0) {
    throw DegenerateError("recon_loss: target is zero on the loss mask");
  }
  return ad::add(ad::scale(ad::l2norm(r), 1.0 / n2), ad::scale(ad::complex_l1(r), 1.0 / n1));
}

} // namespace detail

// Loss of one training step for fixed masks. `masks.theta/lam` hold one
// pair per sub-network. L = recon_1 + recon_2 + lambda_diff * diff.
inline StepLoss step_loss(
    Model const &model,
    Encoding const &enc,
    KSpace<double> const &y,
    MaskSet const &masks,
    TrainConfig const &cfg,
    bool exclude_gamma_from_delta,
    bool want_grad)
{
  std::size_t const nets = masks.theta.size();
  require(nets == 1 || nets == 2, "step_loss: one or two sub-networks supported");
  ad::Tape tape;
  ParameterBinding const p(tape, model.params, want_grad);
  std::vector<ad::Var> alphas;
  std::vector<ad::Var> recon;
  for (std::size_t k = 0; k < nets; k++) {
    KSpace<double> const y_theta = apply_mask(y, masks.theta[k]);
    ad::Var const a = unrolled_forward(tape, model, p, enc, y_theta, masks.theta[k]);
    alphas.push_back(a);
    ad::Var const pred = ad::linear(a, enc.forward_map(masks.lam[k]), enc.adjoint_map(masks.lam[k]));
    recon.push_back(detail::recon_loss_var(
        pred, apply_mask(y, masks.lam[k]), count(masks.lam[k]) * enc.C(), cfg.mse_loss));
  }
  StepLoss out;
  out.recon1 = recon[0].scalar();
  ad::Var total = recon[0];
  if (nets == 2) {
    out.recon2 = recon[1].scalar();
    total = ad::add(total, recon[1]);
    ad::Var const d = ad::sub(alphas[0], alphas[1]);
    ad::Var diff;
    if (cfg.diff_in_image_space) {
      diff = ad::scale(ad::dot(d, d), 1.0 / static_cast<double>(enc.M() * enc.N() * enc.T()));
    } else {
      Mask const delta = masks.shared_delta(exclude_gamma_from_delta);
      Index const nd = count(delta);
      if (nd > 0) {
        ad::Var const kd = ad::linear(d, enc.forward_map(delta), enc.adjoint_map(delta));
        diff = ad::scale(ad::dot(kd, kd), 1.0 / static_cast<double>(nd * enc.C()));
      }
    }
    if (diff.tape()) {
      out.diff = diff.scalar();
      total = ad::add(total, ad::scale(diff, cfg.lambda_diff));
    }
  }
  out.total = out.recon1 + out.recon2 + cfg.lambda_diff * out.diff;
  if (!std::isfinite(total.scalar())) {
    throw NumericError("non-finite training loss (recon1 = " + std::to_string(out.recon1) +
                       ", recon2 = " + std::to_string(out.recon2) + ", diff = " + std::to_string(out.diff) +
                       ", mu = " + std::to_string(model.mu()) + ")");
  }
  if (want_grad) {
    tape.backward(total);
    out.grad = p.gradient(tape);
  }
  return out;
}

// Deterministic stream of Theta/Lambda divisions of Omega \ Gamma.
class DivisionSampler
{
public:
  DivisionSampler(Mask rest, double r, bool augment, Index acs_lines, std::uint64_t seed)
      : rest_(std::move(rest)), r_(r), augment_(augment), acs_(acs_lines), rng_(seed)
  {
  }

  Division next() { return draw_division(rest_, r_, rng_(), augment_, acs_); }

private:
  Mask rest_;
  double r_;
  bool augment_;
  Index acs_;
  std::mt19937_64 rng_;
};

// Scale that brings the zero-filled coefficients to unit peak magnitude.
inline double data_scale(KSpace<double> const &y, Mask const &omega, Sensitivities<double> const &sens, SubspaceBasis<double> const &basis)
{
  Coeffs<double> const a0 = adjoint(y, sens, basis, omega);
  double peak = 0;
  for (Index i = 0; i < a0.size(); i++) {
    peak = std::max(peak, std::abs(a0.data()[i]));
  }
  return peak > 0 ? peak : 1.0;
}

struct TrainResult
{
  Model model;                 // parameters of the best-Gamma epoch
  std::vector<LossReport> history;
  Index best_epoch = 0;        // 0 means the initial parameters
  double initial_gamma = 0;
  double best_gamma = 0;
  bool stopped_early = false;
  bool never_improved = false;
  MaskSet masks;               // Omega, Gamma and the last division drawn
};

using EpochCallback = std::function<void(LossReport const &)>;

// Scan-specific self-supervised training. Gamma is split once; every
// `redraw_every` steps each sub-network draws a fresh (Theta, Lambda) pair
// from Omega \ Gamma. After each epoch the Gamma loss of a reconstruction
// with DC on Omega \ Gamma decides early stopping.
inline TrainResult train(
    KSpace<double> const &y,
    Mask const &omega,
    Sensitivities<double> const &sens,
    SubspaceBasis<double> const &basis,
    SamplingConfig const &mask_cfg,
    ModelConfig const &model_cfg,
    TrainConfig const &cfg,
    EpochCallback const &on_epoch = {})
{
  cfg.validate();
  mask_cfg.validate();
  check_encoding(sens, basis, omega);
  require(model_cfg.reg.in_channels == 2 * basis.rank(), "network channels do not match 2B");

  double const scale = data_scale(y, omega, sens, basis);
  KSpace<double> const ys = y * Cx<double>(1.0 / scale);
  Encoding const enc(sens, basis);

  TrainResult res{init_model(model_cfg, cfg.seed), {}, 0, 0, 0, false, false, {}};
  Model model = res.model;

  auto split = split_gamma(omega, mask_cfg.gamma_ratio, mask_cfg.seed, mask_cfg.acs_lines);
  MaskSet masks{omega, split.gamma, {}, {}};
  Mask const rest = split.rest;
  KSpace<double> const y_rest = apply_mask(ys, rest);
  KSpace<double> const y_gamma = apply_mask(ys, masks.gamma);
  require(count(masks.gamma) > 0, "train: Gamma is empty, early stopping needs held-out samples");

  auto gamma_loss = [&](Model const &m) {
    Reconstruction const rec = unrolled_forward(y_rest, rest, sens, basis, m);
    return recon_loss(forward(rec.alpha, sens, basis, masks.gamma), y_gamma, masks.gamma, cfg.mse_loss);
  };

  std::size_t const nets = cfg.parallel ? 2 : 1;
  DivisionSampler sampler(rest, mask_cfg.r, mask_cfg.augment, mask_cfg.acs_lines, cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Adam opt(cfg.lr);
  ad::Vec theta = model.params.flatten();
  if (model.params.contains("log_mu")) {
    ad::Vec rates = ad::Vec::Constant(theta.size(), cfg.lr);
    rates[0] = cfg.mu_lr;
    opt.set_rates(rates);
  }

  res.initial_gamma = gamma_loss(model);
  res.best_gamma = res.initial_gamma;
  Index step = 0;
  for (Index epoch = 1; epoch <= cfg.max_epochs; epoch++) {
    LossReport rep;
    rep.epoch = epoch;
    for (Index s = 0; s < cfg.steps_per_epoch; s++, step++) {
      if (step % cfg.redraw_every == 0) {
        masks.theta.clear();
        masks.lam.clear();
        for (std::size_t k = 0; k < nets; k++) {
          Division d = sampler.next();
          masks.theta.push_back(std::move(d.theta));
          masks.lam.push_back(std::move(d.lam));
        }
      }
      StepLoss const l = step_loss(model, enc, ys, masks, cfg, mask_cfg.exclude_gamma_from_delta, true);
      rep.recon1 += l.recon1;
      rep.recon2 += l.recon2;
      rep.diff += l.diff;
      opt.step(theta, l.grad);
      model.params.unflatten(theta);
      if (!std::isfinite(model.mu()) || !(model.mu() > 0)) {
        throw NumericError("mu left the positive reals at step " + std::to_string(step));
      }
    }
    double const inv = 1.0 / static_cast<double>(cfg.steps_per_epoch);
    rep.recon1 *= inv;
    rep.recon2 *= inv;
    rep.diff *= inv;
    rep.total = rep.recon1 + rep.recon2 + cfg.lambda_diff * rep.diff;
    rep.gamma_val = gamma_loss(model);
    if (!std::isfinite(rep.gamma_val)) {
      throw NumericError("non-finite Gamma loss at epoch " + std::to_string(epoch));
    }
    if (rep.gamma_val < res.best_gamma) {
      res.best_gamma = rep.gamma_val;
      res.best_epoch = epoch;
      res.model = model;
    }
    bool const stop = epoch - res.best_epoch >= cfg.patience && epoch < cfg.max_epochs;
    rep.stopped_early = stop;
    res.history.push_back(rep);
    if (on_epoch) {
      on_epoch(rep);
    }
    if (stop) {
      res.stopped_early = true;
      break;
    }
  }
  res.never_improved = res.best_epoch == 0;
  res.masks = std::move(masks);
  return res;
}

// Reconstruction with DC on every acquired sample. The two sub-networks
// share weights, so a single pass covers both.
inline Reconstruction infer(
    Model const &model,
    KSpace<double> const &y,
    Mask const &omega,
    Sensitivities<double> const &sens,
    SubspaceBasis<double> const &basis)
{
  double const scale = data_scale(y, omega, sens, basis);
  Reconstruction rec = unrolled_forward(y * Cx<double>(1.0 / scale), omega, sens, basis, model);
  rec.alpha = rec.alpha * Cx<double>(scale);
  rec.x = rec.x * Cx<double>(scale);
  return rec;
}

} // namespace subzero
