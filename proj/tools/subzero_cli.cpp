#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "subzero/pipeline.hpp"
#include "subzero/plots.hpp"
#include "subzero/store.hpp"

using namespace subzero;
namespace fs = std::filesystem;

namespace {

constexpr int kUsage = 1;

int exit_code(ErrorCategory c)
{
  switch (c) {
  case ErrorCategory::Domain: return 2;
  case ErrorCategory::Numeric: return 3;
  case ErrorCategory::Degenerate: return 4;
  case ErrorCategory::Io: return 5;
  }
  return 6;
}

template <typename T>
void set_if(std::optional<T> const &v, T &dst)
{
  if (v) dst = *v;
}

// Options every subcommand shares.
struct Common
{
  std::string config;
  std::string out;
};

void add_common(CLI::App *cmd, Common &c, std::string const &out_help)
{
  cmd->add_option("--config", c.config, "JSON config file; flags override its values");
  cmd->add_option("--out,-o", c.out, out_help)->required();
}

RunConfig base_config(Common const &c) { return c.config.empty() ? RunConfig{} : load_config(c.config); }

void write_snapshot(std::string const &out, RunConfig const &cfg)
{
  plots::write_file(out + ".config.json", dump_config(cfg));
}

KSpace<double> masked(KSpace<double> const &y, Mask const &omega)
{
  require(y.dimension(0) == omega.dimension(0) && y.dimension(1) == omega.dimension(1) &&
              y.dimension(3) == omega.dimension(2),
          "mask dims do not match the scan");
  return apply_mask(y, omega);
}

struct PhantomFlags
{
  std::optional<Index> M, N, T, C;
  std::optional<std::string> model;
  std::optional<double> first_time, time_step, noise;
  std::optional<std::uint64_t> seed;

  void add(CLI::App *cmd)
  {
    cmd->add_option("--M", M, "readout size");
    cmd->add_option("--N", N, "phase-encode size");
    cmd->add_option("--T", T, "echo count");
    cmd->add_option("--C", C, "coil count");
    cmd->add_option("--model", model, "t2 or t1");
    cmd->add_option("--first-time", first_time, "first TE or TI in ms");
    cmd->add_option("--time-step", time_step, "TE or TI spacing in ms");
    cmd->add_option("--noise", noise, "noise std as a fraction of peak k-space magnitude");
    cmd->add_option("--seed", seed, "phantom seed");
  }

  void apply_to(PhantomConfig &p) const
  {
    set_if(M, p.M);
    set_if(N, p.N);
    set_if(T, p.T);
    set_if(C, p.C);
    if (model) p.model = signal_model_from_string(*model);
    set_if(first_time, p.first_time);
    set_if(time_step, p.time_step);
    set_if(noise, p.noise);
    set_if(seed, p.seed);
  }
};

struct SamplingFlags
{
  std::optional<double> R, r, gamma_ratio;
  std::optional<Index> acs, shift_step;
  std::optional<std::uint64_t> seed;
  std::optional<bool> augment;

  void add(CLI::App *cmd)
  {
    cmd->add_option("--R", R, "acceleration");
    cmd->add_option("--acs", acs, "ACS lines");
    cmd->add_option("--r", r, "Lambda fraction of Omega without Gamma");
    cmd->add_option("--gamma-ratio", gamma_ratio, "held-out fraction of non-ACS Omega");
    cmd->add_option("--seed", seed, "mask seed");
    cmd->add_option("--shift-step", shift_step, "line shift per echo");
    cmd->add_flag("--augment,!--no-augment", augment, "cross-echo division draws");
  }

  void apply_to(SamplingConfig &s) const
  {
    set_if(R, s.R);
    set_if(r, s.r);
    set_if(gamma_ratio, s.gamma_ratio);
    set_if(acs, s.acs_lines);
    set_if(shift_step, s.shift_step);
    set_if(seed, s.seed);
    set_if(augment, s.augment);
  }
};

struct TrainFlags
{
  std::optional<Index> epochs, patience, steps, features, blocks, unrolls, cg_iters;
  std::optional<double> lr, mu_lr, lambda_diff;
  std::optional<std::uint64_t> seed;

  void add(CLI::App *cmd)
  {
    cmd->add_option("--epochs", epochs, "max epochs");
    cmd->add_option("--patience", patience, "early-stopping patience");
    cmd->add_option("--steps-per-epoch", steps, "gradient steps between Gamma checks");
    cmd->add_option("--lr", lr, "Adam step size");
    cmd->add_option("--mu-lr", mu_lr, "Adam step size for log(mu)");
    cmd->add_option("--lambda-diff", lambda_diff, "weight of the difference loss");
    cmd->add_option("--train-seed", seed, "initialisation and division seed");
    cmd->add_option("--features", features, "network feature channels");
    cmd->add_option("--blocks", blocks, "resnet blocks");
    cmd->add_option("--unrolls", unrolls, "unrolled iterations");
    cmd->add_option("--cg-iters", cg_iters, "CG iterations per data-consistency step");
  }

  void apply_to(RunConfig &c) const
  {
    set_if(epochs, c.train.max_epochs);
    set_if(patience, c.train.patience);
    set_if(steps, c.train.steps_per_epoch);
    set_if(lr, c.train.lr);
    set_if(mu_lr, c.train.mu_lr);
    set_if(lambda_diff, c.train.lambda_diff);
    set_if(seed, c.train.seed);
    set_if(features, c.model.reg.features);
    set_if(blocks, c.model.reg.resnet_blocks);
    set_if(unrolls, c.model.unroll.unrolls);
    set_if(cg_iters, c.model.unroll.cg_iters);
  }
};

// Sampling settings recorded by `masks` take precedence over the config.
void adopt_sampling(io::Container const &masks_file, RunConfig &cfg)
{
  if (auto s = store::read_sampling(masks_file)) cfg.sampling = *s;
}

std::optional<double> map_error_for(store::Scan const &scan, Images<double> const &x, std::string const &basis_path,
                                    RealMap *fit_out = nullptr)
{
  if (basis_path.empty() || !scan.maps) return std::nullopt;
  auto const b = store::read_basis(io::Container::open(basis_path));
  RealMap const fit = fit_relaxation_map(x, b.dict);
  if (fit_out) *fit_out = fit;
  return map_error(fit, scan.maps->relax, scan.maps->support);
}

Images<double> const &require_truth(store::Scan const &scan, std::string const &path)
{
  if (!scan.x_true) {
    throw DomainError(path + " has no x_true reference to evaluate against");
  }
  return *scan.x_true;
}

Json report_json(std::string const &label, EvalReport const &r)
{
  Json j{{"method", label}, {"mean_rmse", r.mean_rmse}, {"per_echo_rmse", r.per_echo_rmse}};
  j["map_error"] = r.map_error ? Json(*r.map_error) : Json(nullptr);
  return j;
}

} // namespace

int main(int argc, char **argv)
{
  CLI::App app{"SubZero: zero-shot self-supervised subspace MRI reconstruction"};
  app.require_subcommand(1);

  // simulate
  Common sim_c;
  PhantomFlags sim_f;
  auto *sim = app.add_subcommand("simulate", "simulate a multi-coil phantom scan");
  add_common(sim, sim_c, "scan container");
  sim_f.add(sim);

  // basis
  Common bas_c;
  std::string bas_scan;
  std::optional<Index> bas_rank, bas_count;
  std::optional<double> bas_lo, bas_hi;
  auto *bas = app.add_subcommand("basis", "build the signal dictionary and subspace basis");
  add_common(bas, bas_c, "basis container");
  bas->add_option("--scan", bas_scan, "scan whose echo times are used (otherwise the phantom config)");
  bas->add_option("--rank,-B", bas_rank, "subspace rank");
  bas->add_option("--grid-lo", bas_lo, "smallest relaxation value, ms");
  bas->add_option("--grid-hi", bas_hi, "largest relaxation value, ms");
  bas->add_option("--grid-count", bas_count, "log-spaced grid size");

  // masks
  Common msk_c;
  std::string msk_scan;
  std::optional<Index> msk_draws;
  SamplingFlags msk_f;
  auto *msk = app.add_subcommand("masks", "draw Omega, Gamma and Theta/Lambda divisions");
  add_common(msk, msk_c, "mask container");
  msk->add_option("--scan", msk_scan, "scan giving M, N, T (otherwise the phantom config)");
  msk->add_option("--draws", msk_draws, "Theta/Lambda pairs to store");
  msk_f.add(msk);

  // train
  Common trn_c;
  std::string trn_scan, trn_basis, trn_masks, trn_history;
  std::optional<std::string> trn_method;
  TrainFlags trn_f;
  auto *trn = app.add_subcommand("train", "scan-specific self-supervised training");
  add_common(trn, trn_c, "model container");
  trn->add_option("--scan", trn_scan, "scan container")->required();
  trn->add_option("--basis", trn_basis, "basis container")->required();
  trn->add_option("--masks", trn_masks, "mask container")->required();
  trn->add_option("--history", trn_history, "JSON-lines loss history (default <out>.history.jsonl)");
  trn->add_option("--method", trn_method, "zsss, zssssub[+se|+aug|+par] or subzero");
  trn_f.add(trn);

  // reconstruct
  Common rec_c;
  std::string rec_scan, rec_basis, rec_masks, rec_model;
  std::optional<std::string> rec_method;
  auto *rec = app.add_subcommand("reconstruct", "reconstruct with a trained model or a baseline");
  add_common(rec, rec_c, "reconstruction container");
  rec->add_option("--scan", rec_scan, "scan container")->required();
  rec->add_option("--masks", rec_masks, "mask container")->required();
  rec->add_option("--basis", rec_basis, "basis container");
  rec->add_option("--model", rec_model, "trained model (learned methods)");
  rec->add_option("--method", rec_method, "zero_filled, sense, subspace, or the model's method");

  // eval
  Common evl_c;
  std::string evl_scan, evl_basis;
  std::vector<std::string> evl_recons;
  auto *evl = app.add_subcommand("eval", "per-echo RMSE and relaxation-map error");
  add_common(evl, evl_c, "output directory for metrics.txt and metrics.jsonl");
  evl->add_option("--scan", evl_scan, "scan with x_true")->required();
  evl->add_option("--recon", evl_recons, "reconstruction containers")->required();
  evl->add_option("--basis", evl_basis, "basis container; enables the map error");

  // plot
  Common plt_c;
  std::string plt_scan, plt_recon, plt_basis, plt_history;
  auto *plt = app.add_subcommand("plot", "charts, montages and a metrics table");
  add_common(plt, plt_c, "output directory");
  plt->add_option("--scan", plt_scan, "scan with x_true")->required();
  plt->add_option("--recon", plt_recon, "reconstruction container")->required();
  plt->add_option("--basis", plt_basis, "basis container; enables the map panels");
  plt->add_option("--history", plt_history, "JSON-lines loss history");

  try {
    app.parse(argc, argv);
  } catch (CLI::CallForHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForAllHelp const &e) {
    return app.exit(e);
  } catch (CLI::CallForVersion const &e) {
    return app.exit(e);
  } catch (CLI::ParseError const &e) {
    std::cerr << "error [usage]: " << e.what() << "\n";
    return kUsage;
  }

  try {
    if (*sim) {
      RunConfig cfg = base_config(sim_c);
      sim_f.apply_to(cfg.phantom);
      write_snapshot(sim_c.out, cfg);
      PhantomScan s = simulate_phantom_scan(cfg.phantom);
      auto f = io::Container::create(sim_c.out);
      store::write_scan(f, {s.y_full, s.sens, s.x_true, s.maps, s.timing});
      f.write_vector("noise_sigma", {s.noise_sigma});
      std::cout << "simulate: " << cfg.phantom.M << "x" << cfg.phantom.N << " T=" << cfg.phantom.T
                << " C=" << cfg.phantom.C << " noise_sigma=" << s.noise_sigma << " -> " << sim_c.out << "\n";
    } else if (*bas) {
      RunConfig cfg = base_config(bas_c);
      set_if(bas_rank, cfg.basis.rank);
      set_if(bas_lo, cfg.basis.grid_lo);
      set_if(bas_hi, cfg.basis.grid_hi);
      set_if(bas_count, cfg.basis.grid_count);
      write_snapshot(bas_c.out, cfg);
      EchoTiming timing = cfg.phantom.timing();
      if (!bas_scan.empty()) {
        auto const f = io::Container::open(bas_scan);
        timing.times = f.read_vector("times");
        timing.model = signal_model_from_string(f.read_text("model"));
      }
      store::BasisFile b;
      b.dict = dictionary_for(cfg.basis, timing);
      b.basis = compute_basis<double>(b.dict, cfg.basis.rank);
      auto f = io::Container::create(bas_c.out);
      store::write_basis(f, b);
      std::cout << "basis: B=" << b.basis.rank() << " T=" << b.basis.echoes() << " atoms=" << b.dict.grid.size()
                << " max projection residual=" << max_projection_residual(b.dict, b.basis) << " -> " << bas_c.out
                << "\n";
    } else if (*msk) {
      RunConfig cfg = base_config(msk_c);
      msk_f.apply_to(cfg.sampling);
      set_if(msk_draws, cfg.draws);
      require(cfg.draws >= 0, "draws must be non-negative");
      write_snapshot(msk_c.out, cfg);
      Index M = cfg.phantom.M, N = cfg.phantom.N, T = cfg.phantom.T;
      if (!msk_scan.empty()) {
        auto const d = io::Container::open(msk_scan).dims("kspace");
        M = d.at(0);
        N = d.at(1);
        T = d.at(3);
      }
      MaskSet s;
      s.omega = acquisition_mask(M, N, T, cfg.sampling);
      auto const split = split_gamma(s.omega, cfg.sampling.gamma_ratio, cfg.sampling.seed, cfg.sampling.acs_lines);
      s.gamma = split.gamma;
      for (Index k = 0; k < cfg.draws; k++) {
        Division d = draw_division(split.rest, cfg.sampling.r, cfg.sampling.seed + 1 + static_cast<std::uint64_t>(k),
                                   cfg.sampling.augment, cfg.sampling.acs_lines);
        s.theta.push_back(std::move(d.theta));
        s.lam.push_back(std::move(d.lam));
      }
      if (auto const bad = validate_mask_set(s, cfg.sampling.r); !bad.empty()) {
        throw NumericError("mask invariant violated: " + bad);
      }
      auto f = io::Container::create(msk_c.out);
      store::write_masks(f, s, cfg.sampling);
      std::cout << "masks: |Omega|=" << count(s.omega) << " |Gamma|=" << count(s.gamma) << " draws=" << cfg.draws
                << " -> " << msk_c.out << "\n";
    } else if (*trn) {
      RunConfig cfg = base_config(trn_c);
      trn_f.apply_to(cfg);
      set_if(trn_method, cfg.method);
      auto const masks_file = io::Container::open(trn_masks);
      adopt_sampling(masks_file, cfg);
      MethodSpec const spec = MethodSpec::parse(cfg.method);
      if (!spec.learned()) {
        throw DomainError(spec.label() + " has nothing to train; use reconstruct");
      }
      write_snapshot(trn_c.out, cfg);
      auto const scan = store::read_scan(io::Container::open(trn_scan));
      auto const b = store::read_basis(io::Container::open(trn_basis));
      Mask const omega = store::read_masks(masks_file).omega;
      LearnedSetup const setup = learned_setup(spec, b.basis, cfg.baseline());
      std::string const hist_path = trn_history.empty() ? trn_c.out + ".history.jsonl" : trn_history;
      std::ofstream hist(hist_path, std::ios::trunc);
      if (!hist) throw IoError("cannot write " + hist_path);
      TrainResult const tr =
          train(masked(scan.kspace, omega), omega, scan.sens, setup.basis, setup.sampling, setup.model, setup.train,
                [&](LossReport const &r) {
                  hist << to_json(r).dump() << "\n";
                  hist.flush();
                });
      if (!hist) throw IoError("write failed for " + hist_path);
      auto f = io::Container::create(trn_c.out);
      store::write_model(f, tr.model, spec.label());
      f.write_vector("best_epoch", {static_cast<double>(tr.best_epoch)});
      std::cout << "train: " << spec.label() << " epochs=" << tr.history.size() << " best_epoch=" << tr.best_epoch
                << " best_gamma=" << tr.best_gamma << (tr.stopped_early ? " (early stop)" : "")
                << (tr.never_improved ? " (never improved, initial parameters kept)" : "") << " -> " << trn_c.out
                << "\n";
    } else if (*rec) {
      RunConfig cfg = base_config(rec_c);
      auto const masks_file = io::Container::open(rec_masks);
      adopt_sampling(masks_file, cfg);
      std::optional<Model> model;
      if (!rec_model.empty()) {
        std::string stored;
        model = store::read_model(io::Container::open(rec_model), &stored);
        cfg.method = stored;
        cfg.model = model->cfg;
      }
      set_if(rec_method, cfg.method);
      MethodSpec const spec = MethodSpec::parse(cfg.method);
      write_snapshot(rec_c.out, cfg);
      auto const scan = store::read_scan(io::Container::open(rec_scan));
      Mask const omega = store::read_masks(masks_file).omega;
      KSpace<double> const y = masked(scan.kspace, omega);
      SubspaceBasis<double> basis = identity_basis<double>(scan.timing.size());
      if (!rec_basis.empty()) {
        basis = store::read_basis(io::Container::open(rec_basis)).basis;
      } else if (spec.method == Method::Subspace || (spec.learned() && spec.toggles.use_subspace)) {
        throw DomainError(spec.label() + " needs --basis");
      }
      Images<double> x;
      if (spec.learned()) {
        if (!model) throw DomainError(spec.label() + " needs --model from `train`");
        LearnedSetup const setup = learned_setup(spec, basis, cfg.baseline());
        x = infer(*model, y, omega, scan.sens, setup.basis).x;
      } else {
        x = run_baseline(spec, y, omega, scan.sens, basis, cfg.baseline()).x;
      }
      auto f = io::Container::create(rec_c.out);
      store::write_recon(f, x, spec.label());
      std::cout << "reconstruct: " << spec.label() << " -> " << rec_c.out << "\n";
    } else if (*evl) {
      RunConfig const cfg = base_config(evl_c);
      write_snapshot(evl_c.out, cfg);
      auto const scan = store::read_scan(io::Container::open(evl_scan));
      Images<double> const &ref = require_truth(scan, evl_scan);
      std::vector<std::pair<std::string, EvalReport>> rows;
      for (auto const &path : evl_recons) {
        auto const f = io::Container::open(path);
        Images<double> const x = f.read_complex<3>("recon");
        EvalReport r = evaluate(x, ref);
        r.map_error = map_error_for(scan, x, evl_basis);
        rows.emplace_back(f.contains("method") ? f.read_text("method") : fs::path(path).stem().string(), r);
      }
      fs::create_directories(evl_c.out);
      std::string jsonl;
      for (auto const &[label, r] : rows) {
        jsonl += report_json(label, r).dump() + "\n";
      }
      plots::write_file(fs::path(evl_c.out) / "metrics.jsonl", jsonl);
      std::string const table = plots::metrics_table(rows);
      plots::write_file(fs::path(evl_c.out) / "metrics.txt", table);
      std::cout << table;
    } else if (*plt) {
      RunConfig const cfg = base_config(plt_c);
      write_snapshot(plt_c.out, cfg);
      auto const scan = store::read_scan(io::Container::open(plt_scan));
      auto const f = io::Container::open(plt_recon);
      plots::PlotInputs in;
      in.label = f.contains("method") ? f.read_text("method") : "recon";
      in.recon = f.read_complex<3>("recon");
      in.ref = require_truth(scan, plt_scan);
      in.report = evaluate(*in.recon, *in.ref);
      RealMap fit;
      in.report.map_error = map_error_for(scan, *in.recon, plt_basis, &fit);
      if (in.report.map_error) {
        in.fitted_map = fit;
        in.true_map = scan.maps->relax;
      }
      std::vector<LossReport> const history = plt_history.empty() ? std::vector<LossReport>{} : read_history(plt_history);
      for (auto const &name : plots::emit_plots(in, history, plt_c.out)) {
        std::cout << "plot: " << (fs::path(plt_c.out) / name).string() << "\n";
      }
    }
  } catch (Error const &e) {
    std::cerr << "error [" << category_name(e.category()) << "]: " << e.what() << "\n";
    return exit_code(e.category());
  } catch (fs::filesystem_error const &e) {
    std::cerr << "error [io]: " << e.what() << "\n";
    return exit_code(ErrorCategory::Io);
  } catch (std::exception const &e) {
    std::cerr << "error [internal]: " << e.what() << "\n";
    return 6;
  }
  return 0;
}
