#include <gtest/gtest.h>

#include <set>

#include "subzero/phantom.hpp"
#include "test_util.hpp"

using namespace subzero;

TEST(Phantom, Geometry)
{
  for (auto model : {SignalModel::T2Decay, SignalModel::T1InversionRecovery}) {
    auto const p = make_phantom(64, 48, model, 3);
    Index area = 0;
    std::set<double> values;
    auto const allowed = tissue_relaxation(model);
    for (Index i = 0; i < p.support.size(); i++) {
      if (p.support.data()[i]) {
        area++;
        EXPECT_GT(p.relax.data()[i], 0.0);
        EXPECT_GT(p.m0.data()[i], 0.0);
        values.insert(p.relax.data()[i]);
      } else {
        EXPECT_EQ(p.relax.data()[i], 0.0);
        EXPECT_EQ(p.m0.data()[i], 0.0);
      }
    }
    EXPECT_GT(area, 0);
    EXPECT_LT(area, 64 * 48);
    EXPECT_EQ(values.size(), 4u);
    for (double v : values) EXPECT_NE(std::find(allowed.begin(), allowed.end(), v), allowed.end());
  }
  EXPECT_THROW(make_phantom(8, 64, SignalModel::T2Decay, 1), DomainError);
}

TEST(Phantom, SeedDeterminism)
{
  auto const a = make_phantom(32, 32, SignalModel::T2Decay, 7);
  auto const b = make_phantom(32, 32, SignalModel::T2Decay, 7);
  auto const c = make_phantom(32, 32, SignalModel::T2Decay, 8);
  EXPECT_TRUE(std::equal(a.relax.data(), a.relax.data() + a.relax.size(), b.relax.data()));
  EXPECT_FALSE(std::equal(a.relax.data(), a.relax.data() + a.relax.size(), c.relax.data()));
}

TEST(Coils, SingleCoilHasUnitMagnitude)
{
  auto const s = simulate_coils(16, 20, 1, 3);
  for (Index i = 0; i < s.size(); i++) EXPECT_NEAR(std::abs(s.data()[i]), 1.0, 1e-12);
}

TEST(Coils, RootSumOfSquaresIsOne)
{
  auto const s = simulate_coils(32, 24, 6, 4);
  EXPECT_TRUE(sensitivities_normalized(s, 1e-6));
  for (Index m = 0; m < 32; m++)
    for (Index n = 0; n < 24; n++) {
      double sos = 0;
      for (Index c = 0; c < 6; c++) sos += std::norm(s(m, n, c));
      EXPECT_NEAR(sos, 1.0, 1e-6);
    }
  EXPECT_THROW(simulate_coils(4, 4, 0, 1), DomainError);
}

TEST(Coils, Smoothness)
{
  // Neighbouring-voxel differences scale like 1/M for smooth fields.
  for (Index M : {32, 64}) {
    auto const s = simulate_coils(M, M, 4, 5);
    double worst = 0;
    for (Index m = 0; m + 1 < M; m++)
      for (Index n = 0; n + 1 < M; n++)
        for (Index c = 0; c < 4; c++) {
          worst = std::max(worst, std::abs(s(m + 1, n, c) - s(m, n, c)));
          worst = std::max(worst, std::abs(s(m, n + 1, c) - s(m, n, c)));
        }
    EXPECT_LT(worst * double(M), 4.0) << "M = " << M;
  }
}

TEST(Kspace, NoiselessRoundTrip)
{
  auto const maps = make_phantom(32, 32, SignalModel::T2Decay, 1);
  auto const timing = EchoTiming::uniform(11.5, 11.5, 8, SignalModel::T2Decay);
  auto const sens = simulate_coils(32, 32, 4, 2);
  auto const scan = simulate_kspace(maps, timing, sens, 0.0, 0);
  Mask full(32, 32, 8);
  full.setConstant(1);
  Images<double> const x = adjoint_images(scan.y_full, sens, full);
  for (Index i = 0; i < x.size(); i++) EXPECT_NEAR(std::abs(x.data()[i] - scan.x_true.data()[i]), 0.0, 1e-6);

  // echo signal follows the model exactly
  for (Index m = 0; m < 32; m++)
    for (Index n = 0; n < 32; n++)
      if (maps.support(m, n)) {
        double const want = maps.m0(m, n) * std::exp(-timing.times[3] / maps.relax(m, n));
        EXPECT_NEAR(scan.x_true(m, n, 3).real(), want, 1e-12);
      }
}

TEST(Kspace, ZeroPhantomGivesZeroData)
{
  auto maps = make_phantom(16, 16, SignalModel::T2Decay, 1);
  maps.m0.setZero();
  auto const timing = EchoTiming::uniform(10, 10, 4, SignalModel::T2Decay);
  auto const scan = simulate_kspace(maps, timing, simulate_coils(16, 16, 2, 1), 0.0, 0);
  for (Index i = 0; i < scan.y_full.size(); i++) EXPECT_EQ(scan.y_full.data()[i], Cx<double>(0));
}

TEST(Kspace, NoiseStandardDeviation)
{
  auto maps = make_phantom(16, 16, SignalModel::T2Decay, 1);
  maps.m0.setZero();
  auto const timing = EchoTiming::uniform(10, 10, 20, SignalModel::T2Decay);
  double const sigma = 0.37;
  auto const scan = simulate_kspace(maps, timing, simulate_coils(16, 16, 2, 1), sigma, 9);
  // 16*16*2*20 = 10240 complex samples
  double s2 = 0;
  for (Index i = 0; i < scan.y_full.size(); i++) s2 += std::norm(scan.y_full.data()[i]);
  double const est = std::sqrt(s2 / (2.0 * double(scan.y_full.size())));
  EXPECT_NEAR(est, sigma, 0.05 * sigma);
  EXPECT_THROW(simulate_kspace(maps, timing, simulate_coils(16, 16, 2, 1), -1.0, 0), DomainError);
}

TEST(Kspace, NoiseForPeakFraction)
{
  KSpace<double> y(2, 2, 1, 1);
  y.setZero();
  y(1, 1, 0, 0) = Cx<double>(3, 4);
  EXPECT_DOUBLE_EQ(noise_sigma_for_peak(y, 0.005), 0.025);
}

TEST(Phantom, LiesInCoveringSubspace)
{
  auto const maps = make_phantom(32, 32, SignalModel::T2Decay, 2);
  auto const timing = EchoTiming::uniform(11.5, 11.5, 8, SignalModel::T2Decay);
  auto const x = echo_images(maps, timing);
  auto const basis = compute_basis<double>(build_dictionary(RelaxationGrid::log_spaced(40, 200, 256), timing), 3);
  Eigen::MatrixXcd const P = basis.phi * basis.phi.adjoint();
  double worst = 0;
  for (Index m = 0; m < 32; m++)
    for (Index n = 0; n < 32; n++) {
      if (!maps.support(m, n)) continue;
      Eigen::VectorXcd s(8);
      for (Index t = 0; t < 8; t++) s[t] = x(m, n, t);
      worst = std::max(worst, (s - P * s).norm() / s.norm());
    }
  EXPECT_LT(worst, 1e-3);
}
