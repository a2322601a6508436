#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "eval.hpp"
#include "sampling.hpp"
#include "signal_dictionary.hpp"
#include "trainer.hpp"
#include "unrolled.hpp"

namespace subzero {

using Json = nlohmann::json;

struct PhantomConfig
{
  Index M = 64;
  Index N = 64;
  Index T = 8;
  Index C = 4;
  SignalModel model = SignalModel::T2Decay;
  double first_time = 11.5; // TE or TI of the first image, ms
  double time_step = 11.5;
  double noise = 0.005;     // fraction of peak k-space magnitude
  std::uint64_t seed = 1;

  EchoTiming timing() const { return EchoTiming::uniform(first_time, time_step, T, model); }
};

struct BasisConfig
{
  Index rank = 3;
  double grid_lo = 1.0;
  double grid_hi = 1000.0;
  Index grid_count = 256;

  RelaxationGrid grid() const { return RelaxationGrid::log_spaced(grid_lo, grid_hi, grid_count); }
};

struct RunConfig
{
  PhantomConfig phantom;
  BasisConfig basis;
  SamplingConfig sampling;
  ModelConfig model;
  TrainConfig train;
  std::string method = "subzero";
  Index linear_cg_iters = 100;
  double tikhonov = 1e-6;
  Index draws = 1; // Theta/Lambda pairs written by `masks`

  BaselineConfig baseline() const { return {sampling, model, train, linear_cg_iters, tikhonov}; }
};

namespace detail {

// Copies j[key] into v when present.
template <typename T>
void take(Json const &j, char const *key, T &v, std::set<std::string> &seen)
{
  seen.insert(key);
  if (j.contains(key)) {
    try {
      v = j.at(key).get<T>();
    } catch (Json::exception const &e) {
      throw DomainError(std::string("config key '") + key + "': " + e.what());
    }
  }
}

inline void reject_unknown(Json const &j, std::set<std::string> const &seen, char const *section)
{
  if (!j.is_object()) {
    throw DomainError(std::string("config section '") + section + "' must be an object");
  }
  for (auto const &[k, v] : j.items()) {
    if (!seen.count(k)) {
      throw DomainError(std::string("unknown config key '") + k + "' in section '" + section + "'");
    }
  }
}

} // namespace detail

inline void to_json(Json &j, PhantomConfig const &c)
{
  j = Json{{"M", c.M}, {"N", c.N}, {"T", c.T}, {"C", c.C}, {"model", to_string(c.model)},
           {"first_time", c.first_time}, {"time_step", c.time_step}, {"noise", c.noise}, {"seed", c.seed}};
}

inline void from_json(Json const &j, PhantomConfig &c)
{
  std::set<std::string> seen;
  std::string model = to_string(c.model);
  detail::take(j, "M", c.M, seen);
  detail::take(j, "N", c.N, seen);
  detail::take(j, "T", c.T, seen);
  detail::take(j, "C", c.C, seen);
  detail::take(j, "model", model, seen);
  detail::take(j, "first_time", c.first_time, seen);
  detail::take(j, "time_step", c.time_step, seen);
  detail::take(j, "noise", c.noise, seen);
  detail::take(j, "seed", c.seed, seen);
  detail::reject_unknown(j, seen, "phantom");
  c.model = signal_model_from_string(model);
}

inline void to_json(Json &j, BasisConfig const &c)
{
  j = Json{{"rank", c.rank}, {"grid_lo", c.grid_lo}, {"grid_hi", c.grid_hi}, {"grid_count", c.grid_count}};
}

inline void from_json(Json const &j, BasisConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "rank", c.rank, seen);
  detail::take(j, "grid_lo", c.grid_lo, seen);
  detail::take(j, "grid_hi", c.grid_hi, seen);
  detail::take(j, "grid_count", c.grid_count, seen);
  detail::reject_unknown(j, seen, "basis");
}

inline void to_json(Json &j, SamplingConfig const &c)
{
  j = Json{{"R", c.R}, {"acs_lines", c.acs_lines}, {"r", c.r}, {"gamma_ratio", c.gamma_ratio}, {"seed", c.seed},
           {"shift_step", c.shift_step}, {"augment", c.augment}, {"exclude_gamma_from_delta", c.exclude_gamma_from_delta}};
}

inline void from_json(Json const &j, SamplingConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "R", c.R, seen);
  detail::take(j, "acs_lines", c.acs_lines, seen);
  detail::take(j, "r", c.r, seen);
  detail::take(j, "gamma_ratio", c.gamma_ratio, seen);
  detail::take(j, "seed", c.seed, seen);
  detail::take(j, "shift_step", c.shift_step, seen);
  detail::take(j, "augment", c.augment, seen);
  detail::take(j, "exclude_gamma_from_delta", c.exclude_gamma_from_delta, seen);
  detail::reject_unknown(j, seen, "sampling");
}

inline void to_json(Json &j, RegularizerConfig const &c)
{
  j = Json{{"resnet_blocks", c.resnet_blocks}, {"features", c.features}, {"kernel", c.kernel},
           {"in_channels", c.in_channels}, {"se_conv", c.se_conv}, {"se_reduction", c.se_reduction},
           {"se_everywhere", c.se_everywhere}, {"residual_scale", c.residual_scale}};
}

inline void from_json(Json const &j, RegularizerConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "resnet_blocks", c.resnet_blocks, seen);
  detail::take(j, "features", c.features, seen);
  detail::take(j, "kernel", c.kernel, seen);
  detail::take(j, "in_channels", c.in_channels, seen);
  detail::take(j, "se_conv", c.se_conv, seen);
  detail::take(j, "se_reduction", c.se_reduction, seen);
  detail::take(j, "se_everywhere", c.se_everywhere, seen);
  detail::take(j, "residual_scale", c.residual_scale, seen);
  detail::reject_unknown(j, seen, "model.reg");
}

inline void to_json(Json &j, UnrollConfig const &c)
{
  j = Json{{"unrolls", c.unrolls}, {"cg_iters", c.cg_iters}, {"mu_init", c.mu_init},
           {"share_weights_across_unrolls", c.share_weights_across_unrolls}};
  j["mu_fixed"] = c.mu_fixed ? Json(*c.mu_fixed) : Json(nullptr);
}

inline void from_json(Json const &j, UnrollConfig &c)
{
  std::set<std::string> seen{"mu_fixed"};
  detail::take(j, "unrolls", c.unrolls, seen);
  detail::take(j, "cg_iters", c.cg_iters, seen);
  detail::take(j, "mu_init", c.mu_init, seen);
  detail::take(j, "share_weights_across_unrolls", c.share_weights_across_unrolls, seen);
  if (j.contains("mu_fixed")) {
    if (j["mu_fixed"].is_null()) {
      c.mu_fixed.reset();
    } else {
      c.mu_fixed = j["mu_fixed"].get<double>();
    }
  }
  detail::reject_unknown(j, seen, "model.unroll");
}

inline void to_json(Json &j, ModelConfig const &c) { j = Json{{"reg", c.reg}, {"unroll", c.unroll}}; }

inline void from_json(Json const &j, ModelConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "reg", c.reg, seen);
  detail::take(j, "unroll", c.unroll, seen);
  detail::reject_unknown(j, seen, "model");
}

inline void to_json(Json &j, TrainConfig const &c)
{
  j = Json{{"max_epochs", c.max_epochs}, {"lr", c.lr}, {"mu_lr", c.mu_lr}, {"patience", c.patience},
           {"seed", c.seed}, {"lambda_diff", c.lambda_diff}, {"redraw_every", c.redraw_every},
           {"steps_per_epoch", c.steps_per_epoch}, {"parallel", c.parallel}, {"mse_loss", c.mse_loss},
           {"diff_in_image_space", c.diff_in_image_space}};
}

inline void from_json(Json const &j, TrainConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "max_epochs", c.max_epochs, seen);
  detail::take(j, "lr", c.lr, seen);
  detail::take(j, "mu_lr", c.mu_lr, seen);
  detail::take(j, "patience", c.patience, seen);
  detail::take(j, "seed", c.seed, seen);
  detail::take(j, "lambda_diff", c.lambda_diff, seen);
  detail::take(j, "redraw_every", c.redraw_every, seen);
  detail::take(j, "steps_per_epoch", c.steps_per_epoch, seen);
  detail::take(j, "parallel", c.parallel, seen);
  detail::take(j, "mse_loss", c.mse_loss, seen);
  detail::take(j, "diff_in_image_space", c.diff_in_image_space, seen);
  detail::reject_unknown(j, seen, "train");
}

inline void to_json(Json &j, RunConfig const &c)
{
  j = Json{{"phantom", c.phantom}, {"basis", c.basis}, {"sampling", c.sampling}, {"model", c.model},
           {"train", c.train}, {"method", c.method}, {"linear_cg_iters", c.linear_cg_iters},
           {"tikhonov", c.tikhonov}, {"draws", c.draws}};
}

inline void from_json(Json const &j, RunConfig &c)
{
  std::set<std::string> seen;
  detail::take(j, "phantom", c.phantom, seen);
  detail::take(j, "basis", c.basis, seen);
  detail::take(j, "sampling", c.sampling, seen);
  detail::take(j, "model", c.model, seen);
  detail::take(j, "train", c.train, seen);
  detail::take(j, "method", c.method, seen);
  detail::take(j, "linear_cg_iters", c.linear_cg_iters, seen);
  detail::take(j, "tikhonov", c.tikhonov, seen);
  detail::take(j, "draws", c.draws, seen);
  detail::reject_unknown(j, seen, "top level");
}

inline Json to_json(LossReport const &r)
{
  return Json{{"epoch", r.epoch}, {"recon1", r.recon1}, {"recon2", r.recon2}, {"diff", r.diff},
              {"total", r.total}, {"gamma", r.gamma_val}, {"stopped_early", r.stopped_early}};
}

inline LossReport loss_report_from_json(Json const &j)
{
  LossReport r;
  r.epoch = j.at("epoch").get<Index>();
  r.recon1 = j.at("recon1").get<double>();
  r.recon2 = j.at("recon2").get<double>();
  r.diff = j.at("diff").get<double>();
  r.total = j.at("total").get<double>();
  r.gamma_val = j.at("gamma").get<double>();
  r.stopped_early = j.at("stopped_early").get<bool>();
  return r;
}

inline RunConfig parse_config(std::string const &text, std::string const &origin = "config")
{
  Json j;
  try {
    j = Json::parse(text);
  } catch (Json::parse_error const &e) {
    throw DomainError(origin + ": " + e.what());
  }
  return j.get<RunConfig>();
}

inline RunConfig load_config(std::string const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read config " + path);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

inline std::string dump_config(RunConfig const &c) { return Json(c).dump(2) + "\n"; }

// JSON lines: one record per epoch.
inline std::vector<LossReport> read_history(std::string const &path)
{
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot read history " + path);
  }
  std::vector<LossReport> out;
  std::string line;
  Index n = 0;
  while (std::getline(in, line)) {
    n++;
    if (line.empty()) continue;
    try {
      out.push_back(loss_report_from_json(Json::parse(line)));
    } catch (Json::exception const &e) {
      throw IoError(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

} // namespace subzero
