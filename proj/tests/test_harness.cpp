#include <gtest/gtest.h>

#include "mfcz/harness.hpp"

using namespace mfcz;

namespace {

const Grid kLine(1, 0.0, 1.0, 256);

std::vector<CaseTuple> cases_of(FamilyKind kind, int count, int arity, const Grid& g, bool normalize = false,
                                std::uint64_t seed = 5)
{
  return family_cases(TestFamily{kind, count, seed, arity, normalize}, g);
}

CaseTuple zeros(const Grid& g, int m) { return CaseTuple(static_cast<std::size_t>(m), GridFunction(g)); }

GridFunction indicator(const Grid& g, double a, double b)
{
  return GridFunction::sample(g, [&](Point x) { return x[0] > a && x[0] < b ? 1.0 : 0.0; });
}

}  // namespace

TEST(Family, DeterministicNestedAndInside)
{
  for (FamilyKind kind : {FamilyKind::indicator_sums, FamilyKind::smooth_bumps, FamilyKind::mean_zero_oscillations,
                          FamilyKind::power_spikes}) {
    for (int dim : {1, 2}) {
      const Grid g(dim, -1.0, 2.0, dim == 1 ? 128 : 32);
      const TestFamily small{kind, 4, 9, 2, true}, big{kind, 8, 9, 2, true};
      for (int c = 0; c < 4; ++c)
        for (int j = 0; j < 2; ++j) {
          const GridFunction a = small.member(g, c, j), b = big.member(g, c, j);
          EXPECT_EQ(a.values()[0], 0.0);
          for (std::size_t k = 0; k < g.cell_count(); ++k) {
            EXPECT_EQ(a[k], b[k]);
            EXPECT_TRUE(std::isfinite(a[k]));
            const Point x = g.center(k);
            const bool central = std::abs(x[0] - 0.0) < 0.5 && (dim == 1 || std::abs(x[1]) < 0.5);
            if (!central) {
              EXPECT_EQ(a[k], 0.0) << to_string(kind);
            }
          }
          if (!a.is_zero()) {
            EXPECT_NEAR(lp_norm(a, 1.0), 1.0, 1e-12);
          }
        }
    }
  }
  const Grid g(1, 0.0, 1.0, 512);
  const TestFamily osc{FamilyKind::mean_zero_oscillations, 6, 3, 1, false};
  for (int c = 0; c < 6; ++c) EXPECT_NEAR(integrate(osc.member(g, c, 0)), 0.0, 1e-12);
  EXPECT_THROW(osc.member(g, 6, 0), std::out_of_range);
  EXPECT_THROW(TestFamily::from_json(json{{"kind", "sawtooth"}}), std::invalid_argument);
  const TestFamily back = TestFamily::from_json(osc.to_json());
  EXPECT_EQ(back.to_json(), osc.to_json());
}

TEST(Report, ZeroRhsCasesAreTrivialOrViolations)
{
  InequalityReport r;
  r.add_case(0.0, 0.0);
  r.add_case(2.0, 4.0);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.trivial, 1);
  EXPECT_EQ(r.counted(), 1);
  EXPECT_EQ(r.constant, 0.5);
  r.add_case(1.0, 0.0);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.constant, 0.5);
}

TEST(EndpointWeak, ZeroInputIsTrivial)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const std::vector<CaseTuple> cases{zeros(kLine, 2)};
  const auto r = check_endpoint_weak(k, cases);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.trivial, 1);
  EXPECT_EQ(r.constant, 0.0);
}

TEST(EndpointWeak, RieszOfIndicatorAgreesAcrossResolutions)
{
  const Kernel k = riesz_kernel(1, 1, 0.5);
  auto run = [&](const Grid& g) {
    const std::vector<CaseTuple> cases{{indicator(g, 0.0, 1.0)}};
    return check_endpoint_weak(k, cases);
  };
  const Grid g(1, -2.0, 4.0, 512);
  const auto r = refinement_stability(run, g);
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  EXPECT_GT(r.constant, 0.0);
  EXPECT_NEAR(r.refinement->ratio, 1.0, 0.05);
}

TEST(EndpointWeak, IndicatorPairsAreRefinementStable)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const TestFamily fam{FamilyKind::indicator_sums, 10, 21, 2, true};
  const auto r = refinement_stability(
      [&](const Grid& g) { return check_endpoint_weak(k, family_cases(fam, g)); }, Grid(1, 0.0, 1.0, 128));
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  EXPECT_EQ(r.counted(), 10);
  const json& levels = r.diagnostics.at("levels");
  ASSERT_EQ(levels.size(), 3u);
  for (const auto& l : levels) EXPECT_LE(l.at("cz_measure_constant").get<double>(), 1.0 + 1e-12);
}

TEST(EndpointWeak, BrokenKernelFailsAndPropagates)
{
  const Kernel k = broken_kernel(1, 1, 0.5, 2.0);
  const TestFamily fam{FamilyKind::smooth_bumps, 3, 2, 1, true};
  const auto r = refinement_stability(
      [&](const Grid& g) { return check_endpoint_weak(k, family_cases(fam, g)); }, Grid(1, 0.0, 1.0, 128));
  EXPECT_FALSE(r.pass);
  EXPECT_FALSE(r.failures.empty());
  const auto healthy = check_endpoint_weak(riesz_kernel(1, 1, 0.5), family_cases(fam, kLine));
  EXPECT_TRUE(healthy.pass);
  EXPECT_NEAR(healthy.diagnostics.at("kernel_size_ratio").get<double>(), 1.0, 1e-12);
}

TEST(EndpointWeak, EnlargingTheFamilyNeverLowersTheConstant)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  double prev = 0.0;
  for (int count : {2, 5, 9}) {
    const auto r = check_endpoint_weak(k, cases_of(FamilyKind::smooth_bumps, count, 2, kLine, true));
    EXPECT_GE(r.constant, prev);
    prev = r.constant;
  }
}

TEST(Weighted, UnitWeightsMatchTheUnweightedComputation)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto cases = cases_of(FamilyKind::smooth_bumps, 4, 2, kLine);
  const WeightVector v = WeightVectorSpec{{WeightSpec::constant(1.0), WeightSpec::constant(1.0)}, {2.0, 2.0}, 2.0}.build(kLine);
  const auto r = check_weighted(k, v, cases, NormKind::strong);
  EXPECT_TRUE(r.pass);
  double direct = 0.0;
  for (const auto& c : cases) {
    const GridFunction t = apply_T(k, c).result;
    direct = std::max(direct, lp_norm(t, 2.0) / (lp_norm(c[0], 2.0) * lp_norm(c[1], 2.0)));
  }
  EXPECT_NEAR(r.constant, direct, 1e-12 * direct);
}

TEST(Weighted, PowerWeightsAreStableAndEndpointWeakFormFinite)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const TestFamily fam{FamilyKind::smooth_bumps, 4, 8, 2, false};
  const WeightVectorSpec strong{{WeightSpec::power(0.1), WeightSpec::power(0.1)}, {2.0, 2.0}, 2.0};
  const auto r = refinement_stability(
      [&](const Grid& g) { return check_weighted(k, strong.build(g), family_cases(fam, g), NormKind::strong); },
      Grid(1, -0.5, 1.0, 128));
  EXPECT_TRUE(r.pass) << r.to_json().dump();

  const WeightVectorSpec endpoint{{WeightSpec::power(0.1), WeightSpec::power(0.1)}, {1.0, 2.0}, 1.0};
  const auto w = refinement_stability(
      [&](const Grid& g) { return check_weighted(k, endpoint.build(g), family_cases(fam, g), NormKind::weak); },
      Grid(1, -0.5, 1.0, 128));
  EXPECT_TRUE(w.pass) << w.to_json().dump();
  EXPECT_GT(w.constant, 0.0);
}

TEST(Weighted, InadmissibleExponentsThrow)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto cases = cases_of(FamilyKind::smooth_bumps, 1, 2, kLine);
  const auto unit = [&](std::vector<double> P, double q) {
    return WeightVectorSpec{{WeightSpec::constant(1.0), WeightSpec::constant(1.0)}, std::move(P), q}.build(kLine);
  };
  EXPECT_THROW(check_weighted(k, unit({2.0, 2.0}, 3.0), cases, NormKind::strong), std::invalid_argument);
  EXPECT_THROW(check_weighted(k, unit({1.0, 2.0}, 1.0), cases, NormKind::strong), std::invalid_argument);
  EXPECT_THROW(check_weighted(k, unit({1.0, 1.0}, 1.0), cases, NormKind::weak), std::invalid_argument);
}

TEST(SharpPointwise, ZeroAndRange)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  EXPECT_DOUBLE_EQ(default_sharp_delta(k), 0.5 / 1.5);
  const std::vector<CaseTuple> z{zeros(kLine, 2)};
  const auto r = check_sharp_pointwise(k, 0.25, z);
  EXPECT_TRUE(r.pass);
  EXPECT_EQ(r.trivial, 1);
  EXPECT_THROW(check_sharp_pointwise(k, 1.0, z), std::invalid_argument);
  EXPECT_THROW(check_sharp_pointwise(k, 0.7, z), std::invalid_argument);
  EXPECT_THROW(check_sharp_pointwise(k, 0.0, z), std::invalid_argument);
}

TEST(SharpPointwise, IndicatorPairsStable)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const TestFamily fam{FamilyKind::indicator_sums, 6, 14, 2, false};
  const auto r = refinement_stability(
      [&](const Grid& g) { return check_sharp_pointwise(k, default_sharp_delta(k), family_cases(fam, g)); },
      Grid(1, 0.0, 1.0, 128));
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  EXPECT_GT(r.constant, 0.0);
}

// Exact covariance needs all of R^n; cubes clipped to the box move relative to the data, so a
// shifted family is only expected to land close to the original constant.
TEST(SharpPointwise, WholeCellShiftsKeepTheRatioClose)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto base = cases_of(FamilyKind::indicator_sums, 3, 2, kLine);
  const double r0 = check_sharp_pointwise(k, 0.25, base).constant;
  for (int shift : {-7, 5}) {
    std::vector<CaseTuple> moved;
    for (const auto& c : base) moved.push_back({shift_cells(c[0], {shift, 0}), shift_cells(c[1], {shift, 0})});
    EXPECT_NEAR(check_sharp_pointwise(k, 0.25, moved).constant, r0, 0.1 * r0);
  }
}

TEST(TvsMaximal, ZeroUnitWeightAndRange)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const std::vector<CaseTuple> z{zeros(kLine, 2)};
  const auto zr = check_T_vs_maximal(k, WeightSpec::constant(1.0), 2.0, z, NormKind::strong);
  EXPECT_TRUE(zr.pass);
  EXPECT_EQ(zr.trivial, 1);

  const TestFamily fam{FamilyKind::indicator_sums, 6, 4, 2, false};
  const auto r = refinement_stability(
      [&](const Grid& g) {
        return check_T_vs_maximal(k, WeightSpec::constant(1.0), 2.0, family_cases(fam, g), NormKind::strong);
      },
      Grid(1, 0.0, 1.0, 128));
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  EXPECT_TRUE(r.diagnostics.at("ainf").at("member").get<bool>());

  const auto weak = check_T_vs_maximal(k, WeightSpec::constant(1.0), 1.0 / 1.5, family_cases(fam, kLine), NormKind::weak);
  EXPECT_TRUE(weak.pass);
  EXPECT_THROW(check_T_vs_maximal(k, WeightSpec::constant(1.0), 1.0 / 1.5, z, NormKind::strong), std::invalid_argument);
  EXPECT_THROW(check_T_vs_maximal(k, WeightSpec::constant(1.0), 0.5, z, NormKind::weak), std::invalid_argument);
}

TEST(TvsMaximal, WeakNormsNeverExceedStrongNorms)
{
  // Each side separately: ||g||_{L^{q,inf}(w)} <= ||g||_{L^q(w)}.
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const Weight w = power_weight(0.3, kLine);
  for (const auto& c : cases_of(FamilyKind::power_spikes, 5, 2, kLine)) {
    const GridFunction t = apply_T(k, c).result;
    const GridFunction m = multilinear_frac_maximal(c, 0.5);
    EXPECT_LE(weighted_weak_norm(t, 2.0, w), weighted_lp_norm(t, 2.0, w) * (1.0 + 1e-12));
    EXPECT_LE(weighted_weak_norm(m, 2.0, w), weighted_lp_norm(m, 2.0, w) * (1.0 + 1e-12));
  }
}

TEST(FeffermanStein, OscillatoryFamiliesFinite)
{
  const TestFamily fam{FamilyKind::mean_zero_oscillations, 6, 12, 1, false};
  for (double delta : {1.0, 0.5}) {
    const auto r = refinement_stability(
        [&](const Grid& g) { return check_fefferman_stein(family_cases(fam, g), delta, 2.0, WeightSpec::constant(1.0)); },
        Grid(1, 0.0, 1.0, 128));
    EXPECT_TRUE(r.pass) << r.to_json().dump();
    EXPECT_GT(r.constant, 0.0);
    EXPECT_TRUE(std::isfinite(r.diagnostics.at("weak_constant").get<double>()));
  }
}

TEST(FeffermanStein, ConstantFunctionIsFlagged)
{
  const std::vector<CaseTuple> c{{GridFunction::constant(kLine, 3.0)}};
  const auto r = check_fefferman_stein(c, 1.0, 1.0, WeightSpec::constant(1.0));
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.trivial, 1);
}

TEST(Kolmogorov, IndicatorIsExactlyOne)
{
  const GridFunction chi = GridFunction::sample(kLine, [](Point x) { return x[0] > 0.25 && x[0] < 0.5 ? 1.0 : 0.0; });
  const std::vector<CaseTuple> cases{{chi}, {GridFunction(kLine)}};
  for (auto [p, q] : {std::pair{1.0, 2.0}, std::pair{0.5, 3.0}, std::pair{2.0, 7.0}}) {
    const auto r = check_kolmogorov(cases, p, q, Cube{{64, 0}, 64});
    EXPECT_TRUE(r.pass);
    EXPECT_NEAR(r.cases[0].ratio, 1.0, 1e-12);
    EXPECT_TRUE(r.cases[1].trivial);
    EXPECT_NEAR(r.diagnostics.at("form_ii_constant").get<double>(), 1.0, 1e-12);
  }
  EXPECT_THROW(check_kolmogorov(cases, 2.0, 2.0, Cube{{0, 0}, 8}), std::invalid_argument);
  EXPECT_THROW(check_kolmogorov(cases, 1.0, 2.0, Cube{{250, 0}, 8}), std::out_of_range);
}

TEST(Kolmogorov, RandomFamilyConstantFiniteAndFormsAgree)
{
  const auto cases = cases_of(FamilyKind::power_spikes, 100, 1, kLine);
  const auto r = check_kolmogorov(cases, 1.0, 2.0, Cube{{64, 0}, 128});
  EXPECT_TRUE(r.pass);
  EXPECT_TRUE(std::isfinite(r.constant));
  // The two forms differ by the factor |Q|^{alpha/n} on both sides.
  EXPECT_NEAR(r.diagnostics.at("form_ii_constant").get<double>(), r.constant, 1e-12 * r.constant);
  // Classical bound: the weak norm controls the strong one below q with constant (q/(q-p))^{1/p} = 2.
  EXPECT_LE(r.constant, 2.0);
}

TEST(VarExp, ConstantExponentsMatchTheUnweightedBound)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto cases = cases_of(FamilyKind::smooth_bumps, 4, 2, kLine);
  const std::vector<ExponentSpec> ps{ExponentSpec::constant(2.0), ExponentSpec::constant(2.0)};
  const std::vector<double> split{0.25, 0.25};
  const auto r = check_varexp_bound(k, ps, split, cases);
  ASSERT_TRUE(r.pass) << r.to_json().dump();
  const WeightVector v = WeightVectorSpec{{WeightSpec::constant(1.0), WeightSpec::constant(1.0)}, {2.0, 2.0}, 2.0}.build(kLine);
  const auto classical = check_weighted(k, v, cases, NormKind::strong);
  EXPECT_NEAR(r.constant, classical.constant, 1e-8 * classical.constant);

  const std::vector<CaseTuple> z{zeros(kLine, 2)};
  const auto zr = check_varexp_bound(k, ps, split, z);
  EXPECT_TRUE(zr.pass);
  EXPECT_EQ(zr.trivial, 1);
}

TEST(VarExp, RampExponentsStable)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const ExponentSpec ramp{json{{"type", "ramp"}, {"base", 1.8}, {"amp", 0.6}, {"radius", 1.0}}};
  const std::vector<ExponentSpec> ps{ramp, ramp};
  const std::vector<double> split{0.25, 0.25};
  const TestFamily fam{FamilyKind::smooth_bumps, 4, 31, 2, false};
  const auto r = refinement_stability(
      [&](const Grid& g) { return check_varexp_bound(k, ps, split, family_cases(fam, g)); }, Grid(1, -1.0, 2.0, 128));
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  const json& chain = r.diagnostics.at("chain");
  // Holder with variable exponents costs at most 2^{m-1} on the middle link.
  EXPECT_LE(chain.at("M_alpha_over_split_product").get<double>(), 2.0);
}

TEST(VarExp, RangeViolationsAreReportedNotClamped)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto cases = cases_of(FamilyKind::smooth_bumps, 2, 2, kLine);
  const std::vector<double> split{0.25, 0.25};
  const std::vector<ExponentSpec> big{ExponentSpec::constant(5.0), ExponentSpec::constant(2.0)};
  const auto r = check_varexp_bound(k, big, split, cases);
  EXPECT_FALSE(r.pass);
  EXPECT_TRUE(r.cases.empty());
  const std::vector<ExponentSpec> jumpy{ExponentSpec{json{{"type", "jump"}, {"low", 1.5}, {"high", 2.5}, {"at", 0.5}}},
                                        ExponentSpec::constant(2.0)};
  EXPECT_FALSE(check_varexp_bound(k, jumpy, split, cases).pass);
  const std::vector<double> bad{0.25, 0.5};
  EXPECT_THROW(check_varexp_bound(k, big, bad, cases), std::invalid_argument);
}

TEST(ProductDomination, HoldsWithConstantOneAndEqualityAtIndicatorCentre)
{
  const Grid g(1, 0.0, 1.0, 128);
  const std::vector<double> split{0.5, 0.5};
  const auto r = check_product_domination(cases_of(FamilyKind::power_spikes, 10, 2, g), 1.0, split);
  EXPECT_TRUE(r.pass) << r.to_json().dump();
  EXPECT_LE(r.constant, 1.0 + kProductDominationSlack);

  const GridFunction chi = indicator(g, 0.375, 0.625);
  const std::vector<CaseTuple> same{{chi, chi}};
  const GridFunction lhs = multilinear_frac_maximal(same[0], 1.0);
  const GridFunction rhs = frac_maximal(chi, 0.5);
  const std::size_t centre = 64;
  EXPECT_NEAR(lhs[centre], rhs[centre] * rhs[centre], 1e-15);
  const auto eq = check_product_domination(same, 1.0, split);
  EXPECT_TRUE(eq.pass);
  EXPECT_NEAR(eq.constant, 1.0, 1e-12);

  const std::vector<CaseTuple> zero_slot{{chi, GridFunction(g)}};
  const auto z = check_product_domination(zero_slot, 1.0, split);
  EXPECT_TRUE(z.pass);
  EXPECT_EQ(z.trivial, 1);
  const std::vector<double> bad{0.25, 0.5};
  EXPECT_THROW(check_product_domination(same, 1.0, bad), std::invalid_argument);

  const auto ref = refinement_stability(
      [&](const Grid& gg) {
        const GridFunction c = indicator(gg, 0.375, 0.625);
        const std::vector<CaseTuple> cs{{c, c}};
        return check_product_domination(cs, 1.0, split);
      },
      g);
  EXPECT_NEAR(ref.refinement->ratio, 1.0, 1e-12);
}

TEST(Reports, DeterministicAcrossThreadCounts)
{
  const Kernel k = riesz_kernel(2, 1, 0.5);
  const auto cases = cases_of(FamilyKind::indicator_sums, 6, 2, kLine, true);
  HarnessOptions one, four;
  four.threads = 4;
  const auto a = check_endpoint_weak(k, cases, {}, one).to_json().dump();
  const auto b = check_endpoint_weak(k, cases, {}, four).to_json().dump();
  EXPECT_EQ(a, b);
}
