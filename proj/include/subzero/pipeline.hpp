#pragma once

#include "config.hpp"
#include "phantom.hpp"

// Glue shared by the command-line tool and the acceptance runs.
namespace subzero {

struct PhantomScan
{
  ParameterMaps maps;
  EchoTiming timing;
  Sensitivities<double> sens;
  KSpace<double> y_full;
  Images<double> x_true;
  double noise_sigma = 0;
};

// Coils use seed + 1 and noise seed + 2.
inline PhantomScan simulate_phantom_scan(PhantomConfig const &cfg)
{
  require(cfg.noise >= 0, "noise fraction must be non-negative");
  PhantomScan s;
  s.timing = cfg.timing();
  s.timing.validate();
  s.maps = make_phantom(cfg.M, cfg.N, cfg.model, cfg.seed);
  s.sens = simulate_coils(cfg.M, cfg.N, cfg.C, cfg.seed + 1);
  SimulatedScan clean = simulate_kspace(s.maps, s.timing, s.sens, 0.0, cfg.seed + 2);
  s.x_true = std::move(clean.x_true);
  if (cfg.noise > 0) {
    s.noise_sigma = noise_sigma_for_peak(clean.y_full, cfg.noise);
    s.y_full = simulate_kspace(s.maps, s.timing, s.sens, s.noise_sigma, cfg.seed + 2).y_full;
  } else {
    s.y_full = std::move(clean.y_full);
  }
  return s;
}

// Omega for echo 0 shifted across echoes.
inline Mask acquisition_mask(Index M, Index N, Index T, SamplingConfig const &cfg)
{
  cfg.validate();
  require(cfg.shift_step >= 0, "shift step must be non-negative");
  return shift_mask_across_echoes(generate_omega(M, N, T, cfg), cfg.shift_step, cfg.acs_lines);
}

inline SignalDictionary dictionary_for(BasisConfig const &cfg, EchoTiming const &timing)
{
  return build_dictionary(cfg.grid(), timing);
}

} // namespace subzero
