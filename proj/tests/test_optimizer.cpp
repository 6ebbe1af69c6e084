#include "mfgrec/optimizer.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mfgrec/experiments.hpp"

using namespace mfgrec;

namespace {

Dataset small_dataset(TestCase c = TestCase::Poly) {
  const GridSpec fine = GridSpec::make_2d(41, 41, 21, 1.0, 1.0, 1.0);
  const GridSpec coarse = GridSpec::make_2d(11, 11, 6, 1.0, 1.0, 1.0);
  GeneratorSpec spec{test_generator(c, fine), gaussian_m0(fine), fine, coarse};
  auto coeffs = MfgCoefficients::defaults(fine);
  return generate_dataset(spec, coeffs);
}

Dataset zero_problem(const GridSpec& g) {
  MfgCoefficients coeffs = MfgCoefficients::defaults(g);
  coeffs.s = Field(g);
  coeffs.f = Field(g);
  coeffs.kernel = Kernel::constant(0.0);
  Dataset ds;
  ds.uT = SpatialField(g);
  ds.p0 = SpatialField(g);
  ds.pT = SpatialField(g);
  ds.truth_u = Field(g);
  ds.truth_p = Field(g);
  ds.coeffs = coeffs;
  return ds;
}

}  // namespace

TEST(InitialGuess, DensityShiftIsIdenticallyZero) {
  const Dataset ds = small_dataset();
  const ShiftedPair z0 = initial_guess(ds);
  EXPECT_EQ(max_abs(z0.w), 0.0);
}

TEST(InitialGuess, ValueShiftVanishesAtTerminalTime) {
  const Dataset ds = small_dataset();
  const GridSpec& g = ds.grid();
  const ShiftedPair z0 = initial_guess(ds);
  for (int m = 0; m < g.n_space(); ++m)
    EXPECT_EQ(z0.v.level(g.nt - 1)[m], 0.0);
  // assembled u(0) is constant in t, equal to the terminal data
  const Lifting lift = make_lifting(ds);
  auto [u, p] = assemble(z0, lift);
  for (int k = 0; k < g.nt; ++k)
    for (int m = 0; m < g.n_space(); ++m)
      EXPECT_NEAR(u.level(k)[m], ds.uT.values[m], 1e-14);
}

TEST(InitialGuess, ZeroTerminalDataGivesZeroShift) {
  Dataset ds = small_dataset();
  ds.uT = SpatialField(ds.grid());
  const ShiftedPair z0 = initial_guess(ds);
  EXPECT_EQ(max_abs(z0.v), 0.0);
}

TEST(NormMonitor, ZeroPairZeroLift) {
  const GridSpec g = GridSpec::unit(7, 7, 4);
  const Dataset ds = zero_problem(g);
  const Lifting lift = make_lifting(ds);
  FunctionalParams params;
  const auto r = norm_monitor(params, ShiftedPair::zeros(g), lift, 1.0);
  EXPECT_EQ(r.value, 0.0);
  EXPECT_TRUE(r.inside);
}

TEST(NormMonitor, InfiniteRadiusAlwaysInside) {
  const Dataset ds = small_dataset();
  const Lifting lift = make_lifting(ds);
  FunctionalParams params;
  ShiftedPair pair = ShiftedPair::zeros(ds.grid());
  for (double& v : pair.v.values) v = 0.42;
  enforce_pair_constraints(pair);
  const auto r = norm_monitor(params, pair, lift,
                              std::numeric_limits<double>::infinity());
  EXPECT_TRUE(r.inside);
  EXPECT_GT(r.value, 0.0);
}

TEST(NormMonitor, HomogeneousInPairScaling) {
  const GridSpec g = GridSpec::unit(9, 9, 5);
  const Dataset ds = zero_problem(g);
  const Lifting lift = make_lifting(ds);  // zero lifting
  FunctionalParams params;
  ShiftedPair pair = ShiftedPair::zeros(g);
  for (std::size_t m = 0; m < pair.v.values.size(); ++m) {
    pair.v.values[m] = std::sin(0.01 * static_cast<double>(m));
    pair.w.values[m] = std::cos(0.013 * static_cast<double>(m));
  }
  enforce_pair_constraints(pair);
  ShiftedPair doubled = pair;
  for (double& v : doubled.v.values) v *= 2.0;
  for (double& v : doubled.w.values) v *= 2.0;
  const double n1 = norm_monitor(params, pair, lift, 1.0).value;
  const double n2 = norm_monitor(params, doubled, lift, 1.0).value;
  EXPECT_NEAR(n2, 2.0 * n1, 1e-10 * n2);
}

TEST(Descend, PureQuadraticSanityProblem) {
  // zero couplings and data, gamma > 0: a positive quadratic whose
  // minimizer is the zero pair; descent is linear at a gamma-dependent rate
  const GridSpec g = GridSpec::make_2d(9, 9, 5, 1.0, 1.0, 0.25);
  const Dataset ds = zero_problem(g);
  FunctionalParams params;
  params.gamma = 1.0;
  OptimizerConfig config;
  config.max_iters = 400;
  config.grad_tol = 1e-12;
  // start away from the minimizer
  ShiftedPair start = ShiftedPair::zeros(g);
  for (std::size_t m = 0; m < start.v.values.size(); ++m) {
    start.v.values[m] = 0.1 * std::sin(0.37 * static_cast<double>(m));
    start.w.values[m] = 0.1 * std::cos(0.53 * static_cast<double>(m));
  }
  enforce_pair_constraints(start);
  const RunReport report = descend(config, params, ds.coeffs, ds, &start);

  ASSERT_GE(report.history.size(), 2u);
  const double j0 = report.history.front().j_total;
  const double jN = report.history.back().j_total;
  EXPECT_LT(jN, 1e-6 * j0);
  for (std::size_t i = 1; i < report.history.size(); ++i)
    EXPECT_LE(report.history[i].j_total, report.history[i - 1].j_total);
  // overall geometric decrease on the tail half
  const std::size_t n = report.history.size();
  const double j_half = report.history[n / 2].j_total;
  if (jN > 0.0 && n > n / 2 + 1) {
    const double per_iter =
        std::pow(jN / j_half, 1.0 / static_cast<double>(n - 1 - n / 2));
    EXPECT_LT(per_iter, 0.999);
  }
}

TEST(Descend, TruthStartStaysNearTruth) {
  const Dataset ds = small_dataset();
  FunctionalParams params;
  const Lifting lift = make_lifting(ds);
  const ShiftedPair truth_shift = shift_pair(ds.truth_u, ds.truth_p, lift);

  // J at the truth is the weighted discretization-error energy
  const double j_truth = eval_j(params, ds.coeffs, truth_shift, lift).total();
  EXPECT_GT(j_truth, 0.0);

  OptimizerConfig config;
  config.max_iters = 8;
  const RunReport report =
      descend(config, params, ds.coeffs, ds, &truth_shift);
  ASSERT_FALSE(report.history.empty());
  const double u_err_start = report.history.front().u_err;
  const double p_err_start = report.history.front().p_err;
  EXPECT_LT(u_err_start, 1e-10);  // started at the truth
  EXPECT_LT(p_err_start, 1e-10);
  // descent never leaves the truth's neighborhood: J only decreases from
  // the near-stationary value and errors stay at discretization scale
  EXPECT_LE(report.history.back().j_total, j_truth);
  EXPECT_LT(report.history.back().u_err, 0.05);
  EXPECT_LT(report.history.back().p_err, 0.05);
}

TEST(Descend, MonotoneAndConstraintExactOnSmallProblem) {
  const Dataset ds = small_dataset(TestCase::Trig);
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 40;
  const RunReport report = descend(config, params, ds.coeffs, ds);
  ASSERT_FALSE(report.history.empty());
  for (std::size_t i = 1; i < report.history.size(); ++i)
    EXPECT_LE(report.history[i].j_total, report.history[i - 1].j_total);
  for (const auto& rec : report.history)
    EXPECT_EQ(rec.constraint_violation, 0.0);
  // iterates report errors against the known truth
  EXPECT_GE(report.history.back().u_err, 0.0);
  EXPECT_GE(report.history.back().p_err, 0.0);
}

TEST(Descend, QuadratureMetricAlsoDescends) {
  const Dataset ds = small_dataset();
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 15;
  config.metric = OptimizerConfig::Metric::Quadrature;
  const RunReport report = descend(config, params, ds.coeffs, ds);
  for (std::size_t i = 1; i < report.history.size(); ++i)
    EXPECT_LE(report.history[i].j_total, report.history[i - 1].j_total);
}

TEST(Descend, LbfgsAcceleratorKeepsMonotonicity) {
  const Dataset ds = small_dataset();
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 30;
  config.lbfgs = true;
  const RunReport report = descend(config, params, ds.coeffs, ds);
  for (std::size_t i = 1; i < report.history.size(); ++i)
    EXPECT_LE(report.history[i].j_total, report.history[i - 1].j_total);
  // acceleration should not lose to plain descent over the same budget
  OptimizerConfig plain = config;
  plain.lbfgs = false;
  const RunReport base = descend(plain, params, ds.coeffs, ds);
  EXPECT_LE(report.history.back().j_total,
            1.5 * base.history.back().j_total);
}

TEST(Descend, DeterministicRunsProduceIdenticalHistories) {
  const Dataset ds = small_dataset();
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 10;
  const RunReport a = descend(config, params, ds.coeffs, ds);
  const RunReport b = descend(config, params, ds.coeffs, ds);
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    EXPECT_EQ(a.history[i].j_total, b.history[i].j_total);
    EXPECT_EQ(a.history[i].grad_norm, b.history[i].grad_norm);
    EXPECT_EQ(a.history[i].step, b.history[i].step);
  }
}

TEST(Descend, TwoTimeLevelGridHasOnlyValueUnknowns) {
  // with nt = 2 both density levels are measured; only v(.,0) stays free
  const GridSpec fine = GridSpec::make_2d(21, 21, 21, 1.0, 1.0, 1.0);
  const GridSpec coarse = GridSpec::make_2d(11, 11, 2, 1.0, 1.0, 1.0);
  GeneratorSpec gen{test_generator(TestCase::Poly, fine), gaussian_m0(fine),
                    fine, coarse};
  auto coeffs = MfgCoefficients::defaults(fine);
  const Dataset ds = generate_dataset(gen, coeffs);
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 30;
  const RunReport report = descend(config, params, ds.coeffs, ds);
  ASSERT_FALSE(report.history.empty());
  EXPECT_EQ(max_abs(report.final_pair.w), 0.0);
  for (std::size_t i = 1; i < report.history.size(); ++i)
    EXPECT_LE(report.history[i].j_total, report.history[i - 1].j_total);
}

TEST(Descend, NonFiniteObjectiveAborts) {
  Dataset ds = small_dataset();
  ds.coeffs.F1.values[ds.coeffs.F1.values.size() / 2] =
      std::numeric_limits<double>::infinity();
  FunctionalParams params;
  OptimizerConfig config;
  config.max_iters = 3;
  EXPECT_THROW(descend(config, params, ds.coeffs, ds), NumericError);
}

TEST(Descend, ReportsConvergedStatusWhenToleranceMet) {
  const GridSpec g = GridSpec::unit(7, 7, 4);
  Dataset ds = zero_problem(g);
  ds.uT = SpatialField(g, 0.05);
  FunctionalParams params;
  params.gamma = 0.01;
  OptimizerConfig config;
  config.max_iters = 2000;
  config.grad_tol = 1e-6;
  const RunReport report = descend(config, params, ds.coeffs, ds);
  EXPECT_EQ(report.status, RunStatus::Converged);
  EXPECT_LT(report.history.back().grad_norm, config.grad_tol);
}
