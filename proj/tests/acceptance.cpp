// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// writes the same lines to acceptance_report.txt. Exits nonzero on a crash,
// or on any FAIL when run with --strict.

#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>

#include "subzero/pipeline.hpp"
#include "test_util.hpp"

using namespace subzero;
using namespace subzero::testing;

namespace {

struct Outcome
{
  bool pass = false;
  std::string detail;
};

struct Criterion
{
  int id;
  std::string name;
  double budget_s; // wall-clock budget; 0 means none
  std::function<Outcome()> run;
};

std::string num(double v)
{
  std::ostringstream s;
  s << std::setprecision(4) << v;
  return s.str();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

// --- 1 -------------------------------------------------------------------

// <a, b> of single-precision arrays, summed in double
template <int R>
Cx<double> dot_double(Tensor<Cx<float>, R> const &a, Tensor<Cx<float>, R> const &b)
{
  Cx<double> s = 0;
  for (Index i = 0; i < a.size(); i++) {
    s += std::conj(Cx<double>(a.data()[i])) * Cx<double>(b.data()[i]);
  }
  return s;
}

Outcome adjoint_correctness()
{
  std::mt19937_64 rng(101);
  std::uniform_int_distribution<Index> dim(8, 40), coils(1, 6), echoes(2, 12);
  double worst = 0;
  for (int trial = 0; trial < 100; trial++) {
    Index const M = dim(rng), N = dim(rng), C = coils(rng), T = echoes(rng);
    Index const B = std::uniform_int_distribution<Index>(1, T)(rng);
    auto const basis = random_basis<float>(T, B, rng);
    auto const sens = random_sens<float>(M, N, C, rng());
    auto const mask = random_mask(M, N, T, 0.3, rng);
    auto const a = random_cx<float, 3>({M, N, B}, rng);
    auto const y = random_cx<float, 4>({M, N, C, T}, rng);
    Cx<double> const lhs = dot_double(forward(a, sens, basis, mask), y);
    Cx<double> const rhs = dot_double(a, adjoint(y, sens, basis, mask));
    worst = std::max(worst, std::abs(lhs - rhs) / std::max(std::abs(lhs), std::abs(rhs)));
  }
  return {worst < 1e-5, "worst |<Aa,y> - <a,A^H y>| / |<Aa,y>| = " + num(worst) + " (bound 1e-5, float)"};
}

// --- 2 -------------------------------------------------------------------

Outcome basis_validity()
{
  struct Case
  {
    char const *label;
    EchoTiming timing;
    RelaxationGrid grid;
    Index B;
  };
  Case const cases[] = {{"T2 T=16 B=3", EchoTiming::t2_default(), RelaxationGrid::t2_default(), 3},
                        {"T1 T=9 B=4", EchoTiming::t1_default(), RelaxationGrid::t1_default(), 4}};
  bool pass = true;
  std::string detail;
  for (auto const &c : cases) {
    auto const dict = build_dictionary(c.grid, c.timing);
    auto const basis = compute_basis<double>(dict, c.B);
    double const ortho =
        (basis.phi.adjoint() * basis.phi - Eigen::MatrixXcd::Identity(c.B, c.B)).cwiseAbs().maxCoeff();
    // independent route: residual against the top-B left singular vectors
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(dict.atoms, Eigen::ComputeThinU);
    Eigen::MatrixXd const U = svd.matrixU().leftCols(c.B);
    double oracle = 0;
    for (Index k = 0; k < dict.atoms.cols(); k++) {
      Eigen::VectorXd const s = dict.atoms.col(k);
      oracle = std::max(oracle, (s - U * (U.transpose() * s)).norm() / s.norm());
    }
    double const resid = max_projection_residual(dict, basis);
    bool const ok = ortho < 1e-10 && resid < 1e-2 && std::abs(resid - oracle) < 1e-8;
    pass = pass && ok;
    detail += std::string(detail.empty() ? "" : "; ") + c.label + ": |Phi^H Phi - I| = " + num(ortho) +
              ", max residual = " + num(resid) + " (SVD oracle " + num(oracle) + ", bound 1e-2)";
  }
  return {pass, detail};
}

// --- 3 -------------------------------------------------------------------

Outcome cg_exactness()
{
  Index const M = 4, N = 4, C = 2, T = 3, B = 2, dim = M * N * B;
  std::mt19937_64 rng(303);
  auto const basis = random_basis<double>(T, B, rng);
  auto const sens = random_sens<double>(M, N, C, 5);
  auto const mask = random_mask(M, N, T, 0.5, rng);
  auto const y = apply_mask(random_cx<double, 4>({M, N, C, T}, rng), mask);
  auto const z = random_cx<double, 3>({M, N, B}, rng);
  double const mu = 0.05;

  // dense A from unit vectors
  Eigen::MatrixXcd A(M * N * C * T, dim);
  for (Index j = 0; j < dim; j++) {
    Coeffs<double> e(M, N, B);
    e.setZero();
    e.data()[j] = 1;
    auto const col = forward(e, sens, basis, mask);
    A.col(j) = Eigen::Map<Eigen::VectorXcd const>(col.data(), col.size());
  }
  Eigen::Map<Eigen::VectorXcd const> yv(y.data(), y.size());
  Eigen::Map<Eigen::VectorXcd const> zv(z.data(), z.size());
  Eigen::MatrixXcd const G = A.adjoint() * A + mu * Eigen::MatrixXcd::Identity(dim, dim);
  Eigen::VectorXcd const direct = G.ldlt().solve(A.adjoint() * yv + mu * zv);

  auto const x = cg_solve_dc(z, y, mu, dim, sens, basis, mask);
  Eigen::Map<Eigen::VectorXcd const> xv(x.data(), x.size());
  double const err = (xv - direct).norm() / direct.norm();
  return {err < 1e-8, "relative difference to the direct solve after " + std::to_string(dim) +
                          " iterations = " + num(err) + " (bound 1e-8)"};
}

// --- 4 -------------------------------------------------------------------

Outcome gradient_fidelity()
{
  Index const M = 8, N = 8, C = 2, T = 4, B = 2;
  std::mt19937_64 rng(404);
  auto const basis = random_basis<double>(T, B, rng);
  auto const sens = random_sens<double>(M, N, C, 7);
  SamplingConfig sc;
  sc.R = 2;
  sc.acs_lines = 2;
  sc.seed = 9;
  MaskSet masks;
  masks.omega = generate_omega(M, N, T, sc);
  auto const split = split_gamma(masks.omega, sc.gamma_ratio, sc.seed, sc.acs_lines);
  masks.gamma = split.gamma;
  for (int k = 0; k < 2; k++) {
    auto d = draw_division(split.rest, sc.r, 20 + k, true, sc.acs_lines);
    masks.theta.push_back(d.theta);
    masks.lam.push_back(d.lam);
  }
  auto const y = apply_mask(random_cx<double, 4>({M, N, C, T}, rng), masks.omega);

  ModelConfig mc;
  mc.reg.features = 8;
  mc.reg.resnet_blocks = 1;
  mc.reg.in_channels = 2 * B;
  mc.reg.se_reduction = 2;
  mc.unroll.unrolls = 2;
  mc.unroll.cg_iters = 3;
  Model model = init_model(mc, 11);
  ad::Vec theta = model.params.flatten();
  std::normal_distribution<double> g(0.0, 0.1);
  for (Index i = 1; i < theta.size(); i++) {
    theta[i] += g(rng);
  }
  model.params.unflatten(theta);

  Encoding const enc(sens, basis);
  TrainConfig cfg;
  auto const loss = [&](ad::Vec const &p) {
    Model q = model;
    q.params.unflatten(p);
    return step_loss(q, enc, y, masks, cfg, false, false).total;
  };
  ad::Vec const grad = step_loss(model, enc, y, masks, cfg, false, true).grad;
  ad::Vec fd(theta.size());
  double const h = 1e-6;
  for (Index i = 0; i < theta.size(); i++) {
    ad::Vec a = theta, b = theta;
    a[i] += h;
    b[i] -= h;
    fd[i] = (loss(a) - loss(b)) / (2 * h);
  }
  double const err = std::sqrt((grad - fd).square().sum() / fd.square().sum());
  double const mu_err = std::abs(grad[0] - fd[0]) / std::abs(fd[0]);
  return {err < 1e-4 && mu_err < 1e-4, std::to_string(theta.size()) + " parameters: ||g - g_fd|| / ||g_fd|| = " +
                                           num(err) + ", log(mu) entry " + num(mu_err) + " (bound 1e-4)"};
}

// --- 5 -------------------------------------------------------------------

Outcome mask_algebra()
{
  std::mt19937_64 rng(505);
  std::uniform_real_distribution<double> u(0, 1);
  int failures = 0, draws = 0, infeasible = 0;
  std::string first;
  for (bool augment : {false, true}) {
    for (int i = 0; i < 1000;) {
      SamplingConfig sc;
      Index const M = std::uniform_int_distribution<Index>(2, 12)(rng);
      Index const N = std::uniform_int_distribution<Index>(24, 80)(rng);
      Index const T = std::uniform_int_distribution<Index>(1, 10)(rng);
      sc.R = 2 + 4 * u(rng);
      sc.acs_lines = std::uniform_int_distribution<Index>(0, 6)(rng);
      sc.r = 0.15 + 0.6 * u(rng);
      sc.gamma_ratio = 0.05 + 0.35 * u(rng);
      sc.seed = rng();
      sc.shift_step = std::uniform_int_distribution<Index>(0, 3)(rng);
      sc.augment = augment;
      MaskSet s;
      try {
        s.omega = shift_mask_across_echoes(generate_omega(M, N, T, sc), sc.shift_step, sc.acs_lines);
        auto const split = split_gamma(s.omega, sc.gamma_ratio, sc.seed, sc.acs_lines);
        s.gamma = split.gamma;
        for (int k = 0; k < 2; k++) {
          auto d = draw_division(split.rest, sc.r, rng(), augment, sc.acs_lines);
          s.theta.push_back(d.theta);
          s.lam.push_back(d.lam);
        }
      } catch (DomainError const &) {
        infeasible++; // e.g. too few non-ACS lines for the Lambda quota
        continue;
      }
      i++;
      draws++;
      std::string const bad = validate_mask_set(s, sc.r);
      if (!bad.empty()) {
        if (failures++ == 0) first = bad;
      }
    }
  }
  return {failures == 0, std::to_string(draws) + " draws (1000 per augment mode, " + std::to_string(infeasible) +
                             " infeasible configs redrawn), " + std::to_string(failures) + " violations" +
                             (first.empty() ? "" : ": " + first)};
}

// --- shared phantom problem ------------------------------------------------

struct Problem
{
  PhantomScan scan;
  SubspaceBasis<double> basis;
  SignalDictionary dict;
  Mask omega;
  KSpace<double> y;
  BaselineConfig cfg;
};

// Reduced network for the CPU budget: 16 features, 2 resnet blocks, with
// 5 unrolls and 5 CG iterations as in the full configuration.
ModelConfig reduced_model()
{
  ModelConfig mc;
  mc.reg.features = 16;
  mc.reg.resnet_blocks = 2;
  mc.reg.se_reduction = 4;
  return mc;
}

Problem phantom_problem(double noise, Index M = 64, Index T = 8, Index C = 4, Index acs = 8)
{
  Problem p;
  PhantomConfig pc;
  pc.M = pc.N = M;
  pc.T = T;
  pc.C = C;
  pc.noise = noise;
  p.scan = simulate_phantom_scan(pc);
  p.dict = build_dictionary(RelaxationGrid::t2_default(), p.scan.timing);
  p.basis = compute_basis<double>(p.dict, 3);
  p.cfg.sampling.R = 4;
  p.cfg.sampling.acs_lines = acs;
  p.cfg.sampling.seed = 4;
  p.cfg.model = reduced_model();
  p.cfg.train.lr = 3e-3;
  p.cfg.train.mu_lr = 3e-3;
  p.cfg.train.max_epochs = 500;
  p.cfg.train.patience = 25;
  p.omega = acquisition_mask(M, M, T, p.cfg.sampling);
  p.y = apply_mask(p.scan.y_full, p.omega);
  return p;
}

bool same_history(std::vector<LossReport> const &a, std::vector<LossReport> const &b)
{
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); i++) {
    if (a[i].epoch != b[i].epoch || a[i].recon1 != b[i].recon1 || a[i].recon2 != b[i].recon2 ||
        a[i].diff != b[i].diff || a[i].total != b[i].total || a[i].gamma_val != b[i].gamma_val ||
        a[i].stopped_early != b[i].stopped_early) {
      return false;
    }
  }
  return true;
}

bool bit_identical(Images<double> const &a, Images<double> const &b)
{
  return a.dimensions() == b.dimensions() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(Cx<double>)) == 0;
}

// --- 6 -------------------------------------------------------------------

Outcome reduction_identities()
{
  Problem p = phantom_problem(0.005, 32, 4, 2, 4);
  p.cfg.model.reg.features = 8;
  p.cfg.model.reg.resnet_blocks = 1;
  p.cfg.model.reg.se_reduction = 2;
  p.cfg.model.unroll.unrolls = 2;
  p.cfg.model.unroll.cg_iters = 3;
  p.cfg.train.max_epochs = 4;
  p.cfg.train.seed = 21;
  p.basis = compute_basis<double>(p.dict, 2);

  MethodSpec off = MethodSpec::make(Method::Subzero);
  off.toggles = {true, false, false, false};
  auto const a = run_baseline(off, p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  auto const b = run_baseline(MethodSpec::make(Method::Zssssub), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  bool const sub_ok = bit_identical(a.x, b.x) && same_history(a.training->history, b.training->history);

  auto const eye = identity_basis<double>(p.scan.timing.size());
  auto const c = run_baseline(MethodSpec::make(Method::Zsss), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  auto const d = run_baseline(MethodSpec::make(Method::Zssssub), p.y, p.omega, p.scan.sens, eye, p.cfg);
  bool const zsss_ok = bit_identical(c.x, d.x) && same_history(c.training->history, d.training->history);
  return {sub_ok && zsss_ok, std::string("SubZero with toggles off vs ZSSSSub: ") +
                                 (sub_ok ? "bit-identical" : "DIFFERENT") + "; ZSSS vs ZSSSSub at Phi = I: " +
                                 (zsss_ok ? "bit-identical" : "DIFFERENT")};
}

// --- 7 -------------------------------------------------------------------

Outcome end_to_end()
{
  double const cpu0 = cpu_seconds();
  Problem const p = phantom_problem(0.005);
  auto const rmse = [&](Images<double> const &x) { return mean(rmse_per_echo(x, p.scan.x_true)); };
  double const zf = rmse(zero_filled(p.y, p.omega, p.scan.sens));
  auto const sub = run_baseline(MethodSpec::make(Method::Zssssub), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  auto const sz = run_baseline(MethodSpec::make(Method::Subzero), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  double const r_sub = rmse(sub.x), r_sz = rmse(sz.x);
  double const cpu = cpu_seconds() - cpu0;
  bool const order = r_sz <= r_sub && r_sub < zf;
  bool const half = r_sz < 0.5 * zf;
  bool const early = sz.training->stopped_early;
  bool const budget = cpu <= 30 * 60;
  std::string detail = "mean RMSE SubZero " + num(r_sz) + ", ZSSSSub " + num(r_sub) + ", zero-filled " + num(zf) +
                       "; ordering " + (order ? "ok" : "VIOLATED") + "; SubZero < 0.5 x ZF (" + num(0.5 * zf) +
                       ") " + (half ? "ok" : "NOT MET") + "; early stop at epoch " +
                       std::to_string(sz.training->history.size()) + " of " +
                       std::to_string(p.cfg.train.max_epochs) + (early ? "" : " (NOT TRIGGERED)") + "; CPU " +
                       num(cpu) + " s of 1800";
  return {order && half && early && budget, detail};
}

// --- 8 -------------------------------------------------------------------

// Measured 0.0926 on the reference build: the noiseless run stops early at
// epoch 40 (best Gamma at 15). Frozen as the regression bound.
constexpr double kMapErrorFrozen = 0.0927;

Outcome mapping_accuracy()
{
  Problem p = phantom_problem(0.0);
  p.cfg.train.lr = TrainConfig{}.lr;
  p.cfg.train.mu_lr = TrainConfig{}.mu_lr;
  auto const sz = run_baseline(MethodSpec::make(Method::Subzero), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  double const err = map_error(fit_relaxation_map(sz.x, p.dict), p.scan.maps.relax, p.scan.maps.support);
  return {err < 0.10 && err <= kMapErrorFrozen, "median |T2 fit - T2| / T2 over support = " + num(err) +
                                                     " (bound 0.10, frozen regression bound " +
                                                     num(kMapErrorFrozen) + "), training stopped at epoch " +
                                                     std::to_string(sz.training->history.size())};
}

// --- 9 -------------------------------------------------------------------

Outcome determinism()
{
  auto const once = [] {
    Problem p = phantom_problem(0.005);
    p.cfg.train.max_epochs = 6;
    return run_baseline(MethodSpec::make(Method::Subzero), p.y, p.omega, p.scan.sens, p.basis, p.cfg);
  };
  auto const a = once();
  auto const b = once();
  bool const hist = same_history(a.training->history, b.training->history);
  bool const recon = bit_identical(a.x, b.x);
  return {hist && recon, std::string("loss histories ") + (hist ? "identical" : "DIFFER") + " (" +
                             std::to_string(a.training->history.size()) + " epochs), reconstructions " +
                             (recon ? "bit-identical" : "DIFFER")};
}

} // namespace

int main(int argc, char **argv)
{
  bool strict = false;
  std::vector<int> only;
  for (int i = 1; i < argc; i++) {
    if (std::strcmp(argv[i], "--strict") == 0) {
      strict = true;
    } else {
      only.push_back(std::atoi(argv[i]));
    }
  }
  std::vector<Criterion> const criteria{
      {1, "adjoint correctness", 10, adjoint_correctness},
      {2, "basis validity", 5, basis_validity},
      {3, "CG exactness", 1, cg_exactness},
      {4, "gradient fidelity", 60, gradient_fidelity},
      {5, "mask algebra", 10, mask_algebra},
      {6, "reduction identities", 300, reduction_identities},
      {7, "end-to-end ordering", 1800, end_to_end},
      {8, "mapping accuracy", 0, mapping_accuracy},
      {9, "determinism", 0, determinism},
  };
  std::ofstream report("acceptance_report.txt");
  int failed = 0;
  for (auto const &c : criteria) {
    if (!only.empty() && std::find(only.begin(), only.end(), c.id) == only.end()) continue;
    auto const t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (std::exception const &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    double const secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool const in_time = c.budget_s == 0 || secs <= c.budget_s;
    bool const pass = o.pass && in_time;
    failed += pass ? 0 : 1;
    std::ostringstream line;
    line << (pass ? "PASS" : "FAIL") << " [" << c.id << "] " << c.name << ": " << o.detail << " | " << std::fixed
         << std::setprecision(2) << secs << " s";
    if (c.budget_s > 0) {
      line << " of " << c.budget_s << " s" << (in_time ? "" : " (OVER BUDGET)");
    }
    std::cout << line.str() << std::endl;
    report << line.str() << "\n";
  }
  std::cout << failed << " criteria failed" << std::endl;
  report << failed << " criteria failed\n";
  return strict && failed > 0 ? 1 : 0;
}
