#pragma once

#include <cmath>
#include <cstring>
#include <optional>
#include <random>
#include <string>

#include "autograd.hpp"
#include "linops.hpp"
#include "network.hpp"
#include "signal_dictionary.hpp"

namespace subzero {

struct UnrollConfig
{
  Index unrolls = 5;
  Index cg_iters = 5;
  double mu_init = 0.05;
  bool share_weights_across_unrolls = true;
  std::optional<double> mu_fixed; // replaces the learnable mu when set

  void validate() const
  {
    require(unrolls >= 1, "need at least one unroll");
    require(cg_iters >= 1, "need at least one CG iteration");
    require(mu_init > 0, "mu_init must be positive");
    require(!mu_fixed || *mu_fixed > 0, "fixed mu must be positive");
  }
};

struct ModelConfig
{
  RegularizerConfig reg;
  UnrollConfig unroll;
};

struct Model
{
  ModelConfig cfg;
  ParameterSet params;

  std::string prefix(Index unroll) const
  {
    return cfg.unroll.share_weights_across_unrolls ? std::string("reg/") : "unroll" + std::to_string(unroll) + "/";
  }

  double mu() const
  {
    return cfg.unroll.mu_fixed ? *cfg.unroll.mu_fixed : std::exp(params["log_mu"].value[0]);
  }
};

// mu is stored as log(mu) so it stays positive under any update.
inline Model init_model(ModelConfig const &cfg, std::uint64_t seed)
{
  cfg.reg.validate();
  cfg.unroll.validate();
  Model model{cfg, {}};
  std::mt19937_64 rng(seed);
  if (!cfg.unroll.mu_fixed) {
    model.params.add("log_mu", {1}, ad::Vec::Constant(1, std::log(cfg.unroll.mu_init)));
  }
  Index const copies = cfg.unroll.share_weights_across_unrolls ? 1 : cfg.unroll.unrolls;
  for (Index i = 0; i < copies; i++) {
    init_regularizer(model.params, model.prefix(i), cfg.reg, rng);
  }
  return model;
}

template <typename T, int R>
ad::Vec pack(Tensor<Cx<T>, R> const &t)
{
  ad::Vec v(2 * t.size());
  for (Index i = 0; i < t.size(); i++) {
    v[2 * i] = static_cast<double>(t.data()[i].real());
    v[2 * i + 1] = static_cast<double>(t.data()[i].imag());
  }
  return v;
}

template <int R>
void unpack_into(ad::Vec const &v, Tensor<Cx<double>, R> &t)
{
  if (v.size() != 2 * t.size()) {
    throw DomainError("unpack: size mismatch");
  }
  std::memcpy(static_cast<void *>(t.data()), v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
}

// The encoding chain as linear maps on packed arrays.
class Encoding
{
public:
  Encoding(Sensitivities<double> const &sens, SubspaceBasis<double> const &basis)
      : sens_(&sens), basis_(&basis)
  {
  }

  Index M() const { return sens_->dimension(0); }
  Index N() const { return sens_->dimension(1); }
  Index C() const { return sens_->dimension(2); }
  Index T() const { return basis_->echoes(); }
  Index B() const { return basis_->rank(); }
  Sensitivities<double> const &sens() const { return *sens_; }
  SubspaceBasis<double> const &basis() const { return *basis_; }

  ad::LinearMap forward_map(Mask mask) const
  {
    return [this, mask](ad::Vec const &v) {
      Coeffs<double> a(M(), N(), B());
      unpack_into(v, a);
      return pack(forward(a, *sens_, *basis_, mask));
    };
  }

  ad::LinearMap adjoint_map(Mask mask) const
  {
    return [this, mask](ad::Vec const &v) {
      KSpace<double> y(M(), N(), C(), T());
      unpack_into(v, y);
      return pack(adjoint(y, *sens_, *basis_, mask));
    };
  }

  ad::LinearMap normal_map(Mask mask) const
  {
    return [this, mask](ad::Vec const &v) {
      Coeffs<double> a(M(), N(), B());
      unpack_into(v, a);
      return pack(normal(a, *sens_, *basis_, mask));
    };
  }

private:
  Sensitivities<double> const *sens_;
  SubspaceBasis<double> const *basis_;
};

// CG on the tape: every iteration is recorded so gradients flow through the
// step sizes as well as the iterates.
inline ad::Var cg_dc(ad::Var z, ad::Var rhs_data, ad::Var mu, Index iters, ad::LinearMap const &normal_op)
{
  ad::Var const b = ad::add(rhs_data, ad::scale(z, mu));
  ad::Var x = z;
  ad::Var r = ad::sub(b, ad::shifted_selfadjoint(x, mu, normal_op));
  ad::Var p = r;
  ad::Var rr = ad::dot(r, r);
  for (Index it = 0; it < iters; it++) {
    if (std::sqrt(rr.scalar()) < kCgTolerance) {
      break;
    }
    ad::Var const q = ad::shifted_selfadjoint(p, mu, normal_op);
    ad::Var const a = ad::div(rr, ad::dot(p, q));
    x = ad::add(x, ad::scale(p, a));
    r = ad::sub(r, ad::scale(q, a));
    ad::Var const rr_new = ad::dot(r, r);
    p = ad::add(r, ad::scale(p, ad::div(rr_new, rr)));
    rr = rr_new;
  }
  return x;
}

inline ad::Var mu_var(ad::Tape &tape, Model const &model, ParameterBinding const &p)
{
  if (model.cfg.unroll.mu_fixed) {
    return tape.constant(ad::Vec::Constant(1, *model.cfg.unroll.mu_fixed));
  }
  return ad::exp(p["log_mu"]);
}

// alpha^0 = A^H y_dc; then `unrolls` times: z = regularize(alpha),
// alpha = CG data consistency on the `dc_mask` samples.
inline ad::Var unrolled_forward(
    ad::Tape &tape,
    Model const &model,
    ParameterBinding const &p,
    Encoding const &enc,
    KSpace<double> const &y,
    Mask const &dc_mask)
{
  Coeffs<double> const a0 = adjoint(y, enc.sens(), enc.basis(), dc_mask);
  ad::Var const rhs = tape.constant(pack(a0));
  ad::Var const mu = mu_var(tape, model, p);
  ad::LinearMap const nmap = enc.normal_map(dc_mask);
  ad::Var alpha = rhs;
  for (Index i = 0; i < model.cfg.unroll.unrolls; i++) {
    ad::Var const z = regularize(alpha, p, model.prefix(i), model.cfg.reg, enc.M(), enc.N());
    alpha = cg_dc(z, rhs, mu, model.cfg.unroll.cg_iters, nmap);
  }
  return alpha;
}

struct Reconstruction
{
  Coeffs<double> alpha;
  Images<double> x;
};

// Gradient-free evaluation of the unrolled network.
inline Reconstruction unrolled_forward(
    KSpace<double> const &y,
    Mask const &dc_mask,
    Sensitivities<double> const &sens,
    SubspaceBasis<double> const &basis,
    Model const &model)
{
  check_encoding(sens, basis, dc_mask);
  require(model.cfg.reg.in_channels == 2 * basis.rank(), "network channels do not match 2B");
  ad::Tape tape;
  ParameterBinding const p(tape, model.params, false);
  Encoding const enc(sens, basis);
  ad::Var const a = unrolled_forward(tape, model, p, enc, y, dc_mask);
  Reconstruction out{Coeffs<double>(enc.M(), enc.N(), enc.B()), {}};
  unpack_into(a.value(), out.alpha);
  out.x = expand_subspace(out.alpha, basis);
  return out;
}

// Gradient-free z = regularize(alpha) with the first unroll's weights.
inline Coeffs<double> regularize(Coeffs<double> const &alpha, Model const &model)
{
  ad::Tape tape;
  ParameterBinding const p(tape, model.params, false);
  ad::Var const z =
      regularize(tape.constant(pack(alpha)), p, model.prefix(0), model.cfg.reg, alpha.dimension(0), alpha.dimension(1));
  Coeffs<double> out(alpha.dimensions());
  unpack_into(z.value(), out);
  return out;
}

} // namespace subzero
