#pragma once

#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "autograd.hpp"
#include "types.hpp"

namespace subzero {

struct SEBlockConfig
{
  Index channels = 64;
  Index reduction = 8;

  // Bottleneck width, rounded up.
  Index hidden() const { return (channels + reduction - 1) / reduction; }
};

struct RegularizerConfig
{
  Index resnet_blocks = 10;
  Index features = 64;
  Index kernel = 3;
  Index in_channels = 6; // 2B
  bool se_conv = true;
  Index se_reduction = 8;
  bool se_everywhere = false;
  double residual_scale = 0.1;

  void validate() const
  {
    require(resnet_blocks >= 1, "need at least one resnet block");
    require(in_channels >= 1 && features >= in_channels, "features must be >= in_channels");
    require(kernel >= 1 && kernel % 2 == 1, "kernel size must be odd");
    require(se_reduction >= 1 && features >= se_reduction, "SE reduction must lie in [1, features]");
  }
};

struct Parameter
{
  std::string name;
  std::vector<Index> shape;
  ad::Vec value;
};

// Ordered, named parameter storage. Every sub-network and (by default) every
// unroll reads from the same instance.
class ParameterSet
{
public:
  Parameter &add(std::string name, std::vector<Index> shape, ad::Vec value)
  {
    if (index_.count(name)) {
      throw DomainError("duplicate parameter " + name);
    }
    index_[name] = params_.size();
    params_.push_back(Parameter{std::move(name), std::move(shape), std::move(value)});
    return params_.back();
  }

  Parameter &operator[](std::string const &name) { return params_.at(find(name)); }
  Parameter const &operator[](std::string const &name) const { return params_.at(find(name)); }
  bool contains(std::string const &name) const { return index_.count(name) > 0; }

  std::vector<Parameter> &all() { return params_; }
  std::vector<Parameter> const &all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  Index scalar_count() const
  {
    Index n = 0;
    for (auto const &p : params_) {
      n += p.value.size();
    }
    return n;
  }

  ad::Vec flatten() const
  {
    ad::Vec out(scalar_count());
    Index o = 0;
    for (auto const &p : params_) {
      out.segment(o, p.value.size()) = p.value;
      o += p.value.size();
    }
    return out;
  }

  void unflatten(ad::Vec const &v)
  {
    require(v.size() == scalar_count(), "unflatten: size mismatch");
    Index o = 0;
    for (auto &p : params_) {
      p.value = v.segment(o, p.value.size());
      o += p.value.size();
    }
  }

private:
  std::size_t find(std::string const &name) const
  {
    auto it = index_.find(name);
    if (it == index_.end()) {
      throw DomainError("unknown parameter " + name);
    }
    return it->second;
  }

  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

// Tape leaves for a parameter set; one binding per step is shared by every
// forward pass in that step.
class ParameterBinding
{
public:
  ParameterBinding(ad::Tape &tape, ParameterSet const &params, bool trainable)
  {
    for (auto const &p : params.all()) {
      vars_[p.name] = trainable ? tape.leaf(p.value) : tape.constant(p.value);
      order_.push_back(p.name);
    }
  }

  ad::Var operator[](std::string const &name) const
  {
    auto it = vars_.find(name);
    if (it == vars_.end()) {
      throw DomainError("unbound parameter " + name);
    }
    return it->second;
  }

  // Gradients in ParameterSet order, after tape.backward().
  ad::Vec gradient(ad::Tape const &tape) const
  {
    Index n = 0;
    for (auto const &name : order_) {
      n += vars_.at(name).size();
    }
    ad::Vec out(n);
    Index o = 0;
    for (auto const &name : order_) {
      ad::Var const v = vars_.at(name);
      out.segment(o, v.size()) = tape.grad(v);
      o += v.size();
    }
    return out;
  }

private:
  std::map<std::string, ad::Var> vars_;
  std::vector<std::string> order_;
};

namespace detail {

inline ad::Vec he_normal(Index n, Index fan_in, std::mt19937_64 &rng, double gain = 1.0)
{
  std::normal_distribution<double> dist(0.0, gain * std::sqrt(2.0 / static_cast<double>(fan_in)));
  ad::Vec v(n);
  for (Index i = 0; i < n; i++) {
    v[i] = dist(rng);
  }
  return v;
}

inline void add_conv(ParameterSet &ps, std::string const &name, Index k, Index cin, Index cout, std::mt19937_64 &rng, bool zero)
{
  Index const n = k * k * cin * cout;
  ps.add(name + ".w", {k, k, cin, cout}, zero ? ad::Vec(ad::Vec::Zero(n)) : he_normal(n, k * k * cin, rng));
  ps.add(name + ".b", {cout}, ad::Vec::Zero(cout));
}

inline void add_se(ParameterSet &ps, std::string const &name, Index channels, Index reduction, std::mt19937_64 &rng)
{
  SEBlockConfig const se{channels, reduction};
  Index const h = se.hidden();
  ps.add(name + ".se1", {h, channels}, he_normal(h * channels, channels, rng));
  ps.add(name + ".se2", {channels, h}, he_normal(channels * h, h, rng));
}

} // namespace detail

// Registers the regularizer's parameters under `prefix`. The output
// convolution starts at zero so the residual map is the identity.
inline void init_regularizer(ParameterSet &ps, std::string const &prefix, RegularizerConfig const &cfg, std::mt19937_64 &rng)
{
  cfg.validate();
  Index const k = cfg.kernel, F = cfg.features;
  detail::add_conv(ps, prefix + "in", k, cfg.in_channels, F, rng, false);
  if (cfg.se_conv && cfg.se_everywhere) {
    detail::add_se(ps, prefix + "in", F, cfg.se_reduction, rng);
  }
  for (Index i = 0; i < cfg.resnet_blocks; i++) {
    std::string const b = prefix + "block" + std::to_string(i);
    detail::add_conv(ps, b + ".conv1", k, F, F, rng, false);
    detail::add_conv(ps, b + ".conv2", k, F, F, rng, false);
    if (cfg.se_conv) {
      detail::add_se(ps, b, F, cfg.se_reduction, rng);
    }
  }
  detail::add_conv(ps, prefix + "out", k, F, cfg.in_channels, rng, true);
  if (cfg.se_conv && cfg.se_everywhere) {
    Index const r = std::min(cfg.se_reduction, cfg.in_channels);
    detail::add_se(ps, prefix + "out", cfg.in_channels, r, rng);
  }
}

// Spatial mean of each channel of an (H*W, F) map.
inline ad::Var se_squeeze(ad::Var x, Index pixels, Index F)
{
  return ad::channel_mean(x, pixels, F);
}

// sigmoid(W2 relu(W1 d)), W1 (hidden, F), W2 (F, hidden)
inline ad::Var se_excite(ad::Var descriptor, ad::Var w1, ad::Var w2, SEBlockConfig const &se)
{
  Index const h = se.hidden();
  return ad::sigmoid(ad::matvec(w2, ad::relu(ad::matvec(w1, descriptor, h, se.channels)), se.channels, h));
}

// Squeeze-and-excitation: rescale each channel by its learned attention weight.
inline ad::Var se_block(ad::Var x, ad::Var w1, ad::Var w2, Index pixels, SEBlockConfig const &se)
{
  ad::Var const s = se_excite(se_squeeze(x, pixels, se.channels), w1, w2, se);
  return ad::channel_scale(x, s, pixels, se.channels);
}

// z = alpha + Net(alpha) on a packed (H, W, 2B) map.
inline ad::Var regularize(
    ad::Var alpha, ParameterBinding const &p, std::string const &prefix, RegularizerConfig const &cfg, Index H, Index W)
{
  Index const F = cfg.features, k = cfg.kernel, P = H * W;
  if (alpha.size() != P * cfg.in_channels) {
    throw DomainError("regularize: input has " + std::to_string(alpha.size()) + " values, expected " +
                      std::to_string(P * cfg.in_channels));
  }
  auto conv = [&](ad::Var x, std::string const &name, Index cin, Index cout) {
    return ad::conv2d(x, p[name + ".w"], p[name + ".b"], ad::ConvShape{H, W, cin, cout, k});
  };
  ad::Var h = conv(alpha, prefix + "in", cfg.in_channels, F);
  if (cfg.se_conv && cfg.se_everywhere) {
    h = se_block(h, p[prefix + "in.se1"], p[prefix + "in.se2"], P, {F, cfg.se_reduction});
  }
  for (Index i = 0; i < cfg.resnet_blocks; i++) {
    std::string const b = prefix + "block" + std::to_string(i);
    ad::Var r = conv(ad::relu(conv(h, b + ".conv1", F, F)), b + ".conv2", F, F);
    if (cfg.se_conv) {
      r = se_block(r, p[b + ".se1"], p[b + ".se2"], P, {F, cfg.se_reduction});
    }
    h = ad::add(h, ad::scale(r, cfg.residual_scale));
  }
  ad::Var out = conv(h, prefix + "out", F, cfg.in_channels);
  if (cfg.se_conv && cfg.se_everywhere) {
    Index const r = std::min(cfg.se_reduction, cfg.in_channels);
    out = se_block(out, p[prefix + "out.se1"], p[prefix + "out.se2"], P, {cfg.in_channels, r});
  }
  ad::Var z = ad::add(alpha, out);
  if (!z.value().allFinite()) {
    throw NumericError("regularizer produced non-finite activations (max |input| = " +
                       std::to_string(alpha.value().abs().maxCoeff()) + ")");
  }
  return z;
}

} // namespace subzero
