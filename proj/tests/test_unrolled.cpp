#include <gtest/gtest.h>

#include "subzero/unrolled.hpp"
#include "test_util.hpp"

using namespace subzero;
using namespace subzero::testing;

namespace {

struct Problem
{
  Sensitivities<double> sens;
  SubspaceBasis<double> basis;
  Mask mask;
  KSpace<double> y;
};

Problem small_problem(Index M, Index N, Index C, Index T, Index B, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  Problem p{random_sens<double>(M, N, C, seed), random_basis<double>(T, B, rng), random_mask(M, N, T, 0.5, rng), {}};
  auto const a = random_cx<double, 3>({M, N, B}, rng);
  p.y = forward(a, p.sens, p.basis, p.mask);
  return p;
}

ModelConfig small_config(Index B, Index blocks = 1, Index features = 8)
{
  ModelConfig cfg;
  cfg.reg.resnet_blocks = blocks;
  cfg.reg.features = features;
  cfg.reg.in_channels = 2 * B;
  cfg.reg.se_reduction = 4;
  cfg.unroll.unrolls = 3;
  cfg.unroll.cg_iters = 4;
  return cfg;
}

double rel(Coeffs<double> const &a, Coeffs<double> const &b)
{
  Coeffs<double> const d = a - b;
  return norm2(d) / std::max(norm2(b), 1e-300);
}

} // namespace

TEST(Unrolled, ZeroDataGivesZero)
{
  auto p = small_problem(8, 8, 2, 4, 2, 1);
  p.y.setZero();
  auto const model = init_model(small_config(2), 3);
  auto const r = unrolled_forward(p.y, p.mask, p.sens, p.basis, model);
  EXPECT_EQ(norm2(r.alpha), 0.0);
  EXPECT_EQ(r.x.dimension(2), 4);
}

TEST(Unrolled, EmptyDataConsistencyMaskGivesZero)
{
  auto const p = small_problem(8, 8, 2, 4, 2, 2);
  auto cfg = small_config(2);
  cfg.unroll.unrolls = 1;
  auto const model = init_model(cfg, 3);
  Mask empty(p.mask.dimensions());
  empty.setZero();
  auto const r = unrolled_forward(p.y, empty, p.sens, p.basis, model);
  EXPECT_EQ(norm2(r.alpha), 0.0);
}

TEST(Unrolled, InitializedNetworkReducesToRepeatedDataConsistency)
{
  auto const p = small_problem(12, 10, 3, 5, 2, 4);
  auto cfg = small_config(2);
  cfg.unroll.unrolls = 4;
  cfg.unroll.cg_iters = 3;
  auto const model = init_model(cfg, 5);
  auto const r = unrolled_forward(p.y, p.mask, p.sens, p.basis, model);

  Coeffs<double> a = adjoint(p.y, p.sens, p.basis, p.mask);
  for (int i = 0; i < 4; i++) {
    a = cg_solve_dc(a, p.y, 0.05, 3, p.sens, p.basis, p.mask);
  }
  EXPECT_LT(rel(r.alpha, a), 1e-10);
}

TEST(Unrolled, SmallMuMatchesSubspaceLeastSquares)
{
  // Well-conditioned case: densely sampled with several coils.
  std::mt19937_64 rng(6);
  Index const M = 8, N = 8, T = 4, B = 2;
  auto const sens = random_sens<double>(M, N, 4, 6);
  auto const basis = random_basis<double>(T, B, rng);
  auto const mask = random_mask(M, N, T, 0.8, rng);
  auto const truth = random_cx<double, 3>({M, N, B}, rng);
  auto const y = forward(truth, sens, basis, mask);

  auto cfg = small_config(B);
  cfg.unroll.unrolls = 5;
  cfg.unroll.cg_iters = 10;
  cfg.unroll.mu_fixed = 1e-6;
  auto const model = init_model(cfg, 7);
  auto const r = unrolled_forward(y, mask, sens, basis, model);

  Coeffs<double> zero(M, N, B);
  zero.setZero();
  auto const ls = cg_solve_dc(zero, y, 1e-6, 100, sens, basis, mask);
  EXPECT_LT(rel(r.alpha, ls), 1e-3);
}

TEST(Unrolled, WeightSharing)
{
  auto cfg = small_config(2);
  auto const shared = init_model(cfg, 1);
  for (Index i = 0; i < cfg.unroll.unrolls; i++) EXPECT_EQ(shared.prefix(i), "reg/");
  EXPECT_TRUE(shared.params.contains("reg/in.w"));
  EXPECT_FALSE(shared.params.contains("unroll0/in.w"));

  cfg.unroll.share_weights_across_unrolls = false;
  auto const separate = init_model(cfg, 1);
  EXPECT_TRUE(separate.params.contains("unroll2/out.w"));
  EXPECT_EQ(separate.params.scalar_count() - 1, 3 * (shared.params.scalar_count() - 1));

  // mutating the shared weights changes every unroll
  auto const p = small_problem(8, 8, 2, 4, 2, 8);
  auto m = init_model(small_config(2), 9);
  auto const before = unrolled_forward(p.y, p.mask, p.sens, p.basis, m);
  m.params["reg/out.b"].value.setConstant(0.01);
  auto const after = unrolled_forward(p.y, p.mask, p.sens, p.basis, m);
  EXPECT_GT(rel(after.alpha, before.alpha), 1e-6);
}

TEST(Unrolled, MuParameterization)
{
  auto cfg = small_config(2);
  auto const m = init_model(cfg, 1);
  EXPECT_NEAR(m.mu(), 0.05, 1e-15);
  cfg.unroll.mu_fixed = 0.2;
  auto const f = init_model(cfg, 1);
  EXPECT_FALSE(f.params.contains("log_mu"));
  EXPECT_EQ(f.mu(), 0.2);
  cfg.unroll.mu_fixed.reset();
  cfg.unroll.mu_init = -1;
  EXPECT_THROW(init_model(cfg, 1), DomainError);
}

TEST(Unrolled, ChannelMismatchRejected)
{
  auto const p = small_problem(8, 8, 2, 4, 2, 1);
  auto const model = init_model(small_config(3), 1);
  EXPECT_THROW(unrolled_forward(p.y, p.mask, p.sens, p.basis, model), DomainError);
}

TEST(Unrolled, GradientMatchesFiniteDifferences)
{
  auto const p = small_problem(8, 8, 2, 4, 2, 11);
  auto cfg = small_config(2, 1, 8);
  cfg.unroll.unrolls = 2;
  cfg.unroll.cg_iters = 3;
  auto model = init_model(cfg, 12);
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 0.2);
  for (Index i = 0; i < model.params["reg/out.w"].value.size(); i++) model.params["reg/out.w"].value[i] = g(rng);
  ad::Vec v(2 * 8 * 8 * 2);
  for (Index i = 0; i < v.size(); i++) v[i] = g(rng);

  Encoding const enc(p.sens, p.basis);
  auto f = [&](ad::Vec const &flat) {
    Model q = model;
    q.params.unflatten(flat);
    ad::Tape t;
    ParameterBinding const b(t, q.params, false);
    return (unrolled_forward(t, q, b, enc, p.y, p.mask).value() * v).sum();
  };
  ad::Tape t;
  ParameterBinding const b(t, model.params, true);
  t.backward(ad::dot(unrolled_forward(t, model, b, enc, p.y, p.mask), t.constant(v)));
  ad::Vec const grad = b.gradient(t);
  EXPECT_NE(grad[0], 0.0); // log_mu
  EXPECT_LT(fd_directional_error(f, model.params.flatten(), grad, 6, rng), 1e-4);

  // log_mu alone
  ad::Vec e = ad::Vec::Zero(grad.size());
  e[0] = 1;
  double const h = 1e-6;
  ad::Vec const x0 = model.params.flatten();
  double const fd = (f(x0 + h * e) - f(x0 - h * e)) / (2 * h);
  EXPECT_NEAR(grad[0], fd, 1e-4 * std::abs(fd));
}

TEST(Unrolled, PackRoundTrip)
{
  std::mt19937_64 rng(1);
  auto const a = random_cx<double, 3>({3, 4, 2}, rng);
  Coeffs<double> b(3, 4, 2);
  unpack_into(pack(a), b);
  EXPECT_EQ(norm2(Coeffs<double>(a - b)), 0.0);
  EXPECT_THROW(unpack_into(ad::Vec::Zero(3), b), DomainError);
}
