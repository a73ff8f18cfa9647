// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "mfcz/mfcz.hpp"

using namespace mfcz;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

/// Collects sub-conditions; the first failing one is kept as the detail.
class Verdict {
 public:
  void require(bool ok, const std::string& what)
  {
    if (!ok && pass_) {
      pass_ = false;
      why_ = what;
    }
  }
  void note(const std::string& s) { notes_ += (notes_.empty() ? "" : "; ") + s; }
  Outcome done() const { return {pass_, pass_ ? notes_ : why_ + (notes_.empty() ? "" : " [" + notes_ + "]")}; }

 private:
  bool pass_ = true;
  std::string why_, notes_;
};

std::string fmt(double v, int prec = 6)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", prec, v);
  return buf;
}

GridFunction indicator(const Grid& g, double a, double b)
{
  return GridFunction::sample(g, [&](Point x) { return x[0] >= a && x[0] < b ? 1.0 : 0.0; });
}

/// Noise plus a few tall plateaus, normalised to ||f||_1 = 1.
GridFunction spiky(const Grid& g, std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> v(g.cell_count());
  for (double& x : v) x = rng.uniform(-1.0, 1.0);
  for (int s = 0; s < 6; ++s) {
    const std::size_t at = rng.below(g.cell_count() - 16);
    const double amp = rng.uniform(10.0, 400.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const std::size_t len = 1 + rng.below(16);
    for (std::size_t k = at; k < at + len; ++k) v[k] += amp;
  }
  GridFunction f(g, std::move(v));
  return (1.0 / lp_norm(f, 1.0)) * f;
}

GridFunction random_positive(const Grid& g, std::uint64_t seed)
{
  Rng rng(seed);
  std::vector<double> v(g.cell_count());
  for (double& x : v) x = rng.uniform() < 0.2 ? 0.0 : std::exp(rng.normal());
  return GridFunction(g, std::move(v));
}

/// Cases drawn from several family kinds, `per_kind` each, every slot normalised if asked.
std::vector<CaseTuple> mixed_cases(const Grid& g, std::vector<FamilyKind> kinds, int per_kind, int arity,
                                   bool normalize, std::uint64_t seed)
{
  std::vector<CaseTuple> out;
  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const TestFamily fam{kinds[i], per_kind, derive_seed(seed, 0xacce, i), arity, normalize};
    for (auto& c : family_cases(fam, g)) out.push_back(std::move(c));
  }
  return out;
}

// ---------------------------------------------------------------------------------------------

Outcome dini_calculus()
{
  Verdict v;
  const double a = dini_integral(Modulus::power(1.0), 1.0).value;
  const double b = dini_integral(Modulus::power(0.25), 2.0).value;
  const double c = dini_integral(Modulus::log_power(2.0), 1.0).value;
  const DiniResult d = log_dini_integral(Modulus::log_power(2.0), 1.0, 1);
  v.require(std::abs(a - 1.0) <= 1e-6, "omega = t, a = 1 gave " + fmt(a, 12));
  v.require(std::abs(b - 2.0) <= 1e-6, "omega = t^{1/4}, a = 2 gave " + fmt(b, 12));
  v.require(std::abs(c - 1.0) <= 1e-4, "omega = (1 + log 1/t)^{-2}, a = 1 gave " + fmt(c, 12));
  v.require(!d.converged && std::isinf(d.value), "log-Dini integral of (1 + log 1/t)^{-2} not declared divergent");
  v.note("values " + fmt(a, 10) + ", " + fmt(b, 10) + ", " + fmt(c, 8) + "; log-Dini divergent");
  return v.done();
}

Outcome operator_quadrature()
{
  Verdict v;
  const Kernel k = riesz_kernel(1, 1, 0.5);
  auto at_zero = [&](int cells) {
    const Grid g(1, -4.0, 8.0, cells);
    const GridFunction f = indicator(g, 0.0, 1.0);
    return apply_T_at(k, std::span<const GridFunction>(&f, 1), {0.0, 0.0});
  };
  const double e256 = std::abs(at_zero(256) - 2.0), e512 = std::abs(at_zero(512) - 2.0),
               e1024 = std::abs(at_zero(1024) - 2.0);
  v.require(e512 <= 0.05, "error at N=512 is " + fmt(e512));
  v.require(e512 / e256 <= 0.8, "error ratio 256->512 is " + fmt(e512 / e256));
  v.require(e1024 / e512 <= 0.8, "error ratio 512->1024 is " + fmt(e1024 / e512));
  v.note("errors " + fmt(e256, 3) + ", " + fmt(e512, 3) + ", " + fmt(e1024, 3));
  return v.done();
}

Outcome tail_bound()
{
  Verdict v;
  const double lhs = tail_integral_check(1, 2, 0.5, 1.0).lhs;
  v.require(std::abs(lhs - 4.0) <= 1e-3, "lhs at a = 1 is " + fmt(lhs, 10));
  double lo = kInf, hi = 0.0;
  for (double a : {0.25, 1.0, 4.0}) {
    const double c = tail_integral_check(1, 2, 0.5, a).bound_constant;
    lo = std::min(lo, c);
    hi = std::max(hi, c);
  }
  v.require(hi - lo <= 1e-3, "bound constant spread " + fmt(hi - lo));
  v.note("lhs " + fmt(lhs, 10) + ", spread " + fmt(hi - lo, 3));
  return v.done();
}

Outcome cz_decomposition()
{
  Verdict v;
  const Grid g(1, 0.0, 1.0, 1024);
  std::size_t cubes = 0;
  double worst_recon = 0.0, worst_mean = 0.0, worst_good = 0.0, worst_p4 = 0.0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    const GridFunction f = spiky(g, derive_seed(4, 0xc2, s));
    for (double height : {2.0, 8.0, 32.0}) {
      // height = (lambda gamma)^{n/(mn - alpha)} with m = 1, n = 1, alpha = 1/2.
      const CZExponents e{1, 1, 0.5, std::sqrt(height), 1.0};
      const CZDecomposition d = cz_decompose(f, e.height());
      const CZReport r = verify_cz_properties(d, e);
      cubes += r.cube_count;
      worst_recon = std::max(worst_recon, r.reconstruction_error);
      worst_mean = std::max(worst_mean, r.mean_zero_max);
      worst_good = std::max(worst_good, r.good_sup_ratio);
      worst_p4 = std::max(worst_p4, r.p4_constant);
      const std::string tag = "seed " + std::to_string(s) + ", height " + fmt(height);
      v.require(r.reconstruction_error <= 1e-12, tag + ": reconstruction error " + fmt(r.reconstruction_error));
      v.require(r.support_ok && r.disjoint, tag + ": piece support");
      v.require(r.mean_zero_max <= 1e-10, tag + ": piece mean " + fmt(r.mean_zero_max));
      v.require(r.good_sup_ratio <= 2.0, tag + ": ||g||_inf / height = " + fmt(r.good_sup_ratio));
      v.require(r.maximal, tag + ": parent maximality");
      v.require(r.p4_constant <= 1.0 + 1e-12, tag + ": P4 constant " + fmt(r.p4_constant));
    }
  }
  v.note(std::to_string(cubes) + " cubes; max recon " + fmt(worst_recon, 3) + ", mean " + fmt(worst_mean, 3) +
         ", good/height " + fmt(worst_good, 4) + ", P4 " + fmt(worst_p4, 4));
  return v.done();
}

Outcome weight_sanity()
{
  Verdict v;
  double min_constant = kInf;
  auto a2 = [&](const Weight& w) {
    const double c = ap_constant(w, 2.0);
    min_constant = std::min(min_constant, c);
    return c;
  };
  const Grid g512(1, -1.0, 2.0, 512), g1024(1, -1.0, 2.0, 1024), g256(1, -1.0, 2.0, 256);
  const double one = a2(Weight(GridFunction::constant(g512, 1.0)));
  v.require(one == 1.0, "A_2(1) = " + fmt(one, 17));
  const double h512 = a2(power_weight(0.5, g512)), h1024 = a2(power_weight(0.5, g1024));
  v.require(std::abs(h1024 / h512 - 1.0) <= 0.05, "A_2(|x|^{1/2}) moved by " + fmt(h1024 / h512 - 1.0));
  const double d256 = a2(power_weight(-1.5, g256)), d512 = a2(power_weight(-1.5, g512)),
               d1024 = a2(power_weight(-1.5, g1024));
  v.require(d256 < d512 && d512 < d1024, "A_2(|x|^{-1.5}) not increasing: " + fmt(d256) + ", " + fmt(d512) + ", " + fmt(d1024));
  v.require(min_constant >= 1.0 - 1e-12, "A-constant below 1: " + fmt(min_constant, 17));
  v.note("A_2(|x|^1/2) " + fmt(h512, 5) + " -> " + fmt(h1024, 5) + "; A_2(|x|^-1.5) " + fmt(d256, 4) + ", " + fmt(d512, 4) +
         ", " + fmt(d1024, 4));
  return v.done();
}

Outcome luxemburg_norms()
{
  Verdict v;
  const Grid g(1, -1.0, 2.0, 512);
  double collapse = 0.0, ball = 0.0, holder = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    Rng rng(derive_seed(6, 1, s));
    const double q = rng.uniform(1.1, 6.0);
    const GridFunction f = random_positive(g, derive_seed(6, 2, s));
    const double a = luxemburg_norm(f, ExponentFunction::constant(g, q)), b = lp_norm(f, q);
    collapse = std::max(collapse, std::abs(a - b) / b);

    const ExponentFunction p = ExponentSpec{json{{"type", "bump"},
                                                 {"base", rng.uniform(1.2, 2.0)},
                                                 {"amp", rng.uniform(0.2, 2.0)},
                                                 {"center", rng.uniform(-0.5, 0.5)},
                                                 {"width", rng.uniform(0.1, 0.8)}}}
                                   .build(g);
    const double nf = luxemburg_norm(f, p);
    ball = std::max(ball, std::abs(modular((1.0 / nf) * f, p) - 1.0));
  }
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng rng(derive_seed(6, 3, s));
    const ExponentFunction p = ExponentSpec{json{{"type", "ramp"},
                                                 {"base", rng.uniform(1.1, 2.5)},
                                                 {"amp", rng.uniform(-0.05, 2.0)},
                                                 {"radius", rng.uniform(0.2, 1.0)}}}
                                   .build(g);
    const HolderCheck h = check_generalized_holder(random_positive(g, derive_seed(6, 4, s)),
                                                   random_positive(g, derive_seed(6, 5, s)), p);
    holder = std::max(holder, h.ratio);
  }
  v.require(collapse <= 1e-8, "constant-exponent norm differs from L^q by " + fmt(collapse));
  v.require(ball <= 1e-8, "modular of the normalised function misses 1 by " + fmt(ball));
  v.require(holder <= 2.0, "generalised Holder ratio " + fmt(holder));
  v.note("collapse " + fmt(collapse, 3) + ", unit ball " + fmt(ball, 3) + ", Holder ratio " + fmt(holder, 4));
  return v.done();
}

Outcome product_domination()
{
  Verdict v;
  const Grid g(1, 0.0, 1.0, 256);
  const auto cases = mixed_cases(g, {FamilyKind::indicator_sums, FamilyKind::smooth_bumps,
                                     FamilyKind::mean_zero_oscillations, FamilyKind::power_spikes},
                                 5, 2, false, 7);
  const std::vector<double> split{0.5, 0.5};
  const InequalityReport r = check_product_domination(cases, 1.0, split);
  v.require(r.counted() == 20, "expected 20 counted pairs, got " + std::to_string(r.counted()));
  v.require(r.pass, r.failures.empty() ? "check failed" : r.failures.front());
  v.require(r.constant <= 1.0 + kProductDominationSlack, "pointwise constant " + fmt(r.constant, 17));
  v.note("max pointwise ratio " + fmt(r.constant, 15));
  return v.done();
}

Outcome sharp_pointwise()
{
  Verdict v;
  const Kernel k = riesz_kernel(2, 1, 0.5);
  auto run = [&](const Grid& g) {
    const auto cases = mixed_cases(g, {FamilyKind::indicator_sums, FamilyKind::smooth_bumps}, 10, 2, false, 8);
    return check_sharp_pointwise(k, 0.25, cases);
  };
  const InequalityReport r = refinement_stability(run, Grid(1, 0.0, 1.0, 128));
  v.require(r.counted() == 20, "expected 20 counted pairs, got " + std::to_string(r.counted()));
  v.require(std::isfinite(r.constant) && r.constant > 0.0, "sup ratio " + fmt(r.constant));
  v.require(r.pass, r.failures.empty() ? "check failed" : r.failures.front());
  v.note("sup ratio " + fmt(r.constant, 5) + " -> " + fmt(r.refinement->fine_constant, 5) + ", refinement ratio " +
         fmt(r.refinement->ratio, 5));
  return v.done();
}

Outcome endpoint_weak()
{
  Verdict v;
  const Kernel k = riesz_kernel(2, 1, 0.5);
  auto run = [&](const Grid& g) {
    const auto cases = mixed_cases(g, {FamilyKind::indicator_sums, FamilyKind::smooth_bumps, FamilyKind::power_spikes,
                                       FamilyKind::mean_zero_oscillations, FamilyKind::indicator_sums},
                                   10, 2, true, 9);
    return check_endpoint_weak(k, cases);
  };
  const InequalityReport r = refinement_stability(run, Grid(1, 0.0, 1.0, 256));
  v.require(r.counted() == 50, "expected 50 counted cases, got " + std::to_string(r.counted()));
  v.require(std::isfinite(r.constant) && r.constant > 0.0, "constant " + fmt(r.constant));
  v.require(r.pass, r.failures.empty() ? "check failed" : r.failures.front());
  v.note("constant " + fmt(r.constant, 5) + " -> " + fmt(r.refinement->fine_constant, 5) + ", refinement ratio " +
         fmt(r.refinement->ratio, 5));
  return v.done();
}

Outcome kolmogorov()
{
  Verdict v;
  const Grid g(1, 0.0, 1.0, 256);
  const Cube q{{64, 0}, 128};
  const GridFunction chi = GridFunction::sample(g, [](Point x) { return x[0] >= 0.25 && x[0] < 0.75 ? 1.0 : 0.0; });
  const std::vector<CaseTuple> exact{{chi}};
  const InequalityReport e = check_kolmogorov(exact, 1.0, 2.0, q);
  v.require(std::abs(e.constant - 1.0) <= 1e-12, "indicator ratio " + fmt(e.constant, 17));
  const auto cases = mixed_cases(g, {FamilyKind::indicator_sums, FamilyKind::smooth_bumps, FamilyKind::power_spikes,
                                     FamilyKind::mean_zero_oscillations},
                                 25, 1, false, 10);
  const InequalityReport r = check_kolmogorov(cases, 1.0, 2.0, q);
  v.require(r.pass && std::isfinite(r.constant) && r.counted() == 100, "random-family constant " + fmt(r.constant));
  v.note("indicator ratio " + fmt(e.constant, 17) + ", random constant " + fmt(r.constant, 5));
  return v.done();
}

Outcome determinism()
{
  Verdict v;
#ifdef MFCZ_SMOKE_CONFIG
  const std::filesystem::path config = MFCZ_SMOKE_CONFIG;
#else
  const std::filesystem::path config = "configs/smoke.json";
#endif
  const auto root = std::filesystem::temp_directory_path() / "mfcz_acceptance_smoke";
  std::filesystem::remove_all(root);
  std::ostringstream diag;
  const int a = run_command(config, root / "a", {}, diag), b = run_command(config, root / "b", {}, diag);
  v.require(a == kExitPass && b == kExitPass, "smoke run exit codes " + std::to_string(a) + ", " + std::to_string(b) +
                                                  ": " + diag.str());
  auto slurp = [](const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
  };
  const std::string ra = slurp(root / "a" / "report.json"), rb = slurp(root / "b" / "report.json");
  v.require(!ra.empty() && ra == rb, "report.json differs between runs");
  v.note(std::to_string(ra.size()) + " identical bytes");
  std::filesystem::remove_all(root);
  return v.done();
}

struct Criterion {
  int id;
  const char* name;
  double budget_seconds;
  std::function<Outcome()> run;
};

}  // namespace

int main()
{
  const std::vector<Criterion> criteria = {
      {1, "dini-calculus", 1.0, dini_calculus},
      {2, "operator-quadrature", 5.0, operator_quadrature},
      {3, "tail-bound", 1.0, tail_bound},
      {4, "cz-decomposition", 30.0, cz_decomposition},
      {5, "weight-sanity", 60.0, weight_sanity},
      {6, "luxemburg-norms", 30.0, luxemburg_norms},
      {7, "product-domination", 60.0, product_domination},
      {8, "sharp-pointwise", 300.0, sharp_pointwise},
      {9, "endpoint-weak", 600.0, endpoint_weak},
      {10, "kolmogorov", 5.0, kolmogorov},
      {11, "determinism", 10.0, determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.pass && secs > c.budget_seconds) o = {false, "took " + fmt(secs, 3) + " s, budget " + fmt(c.budget_seconds) + " s"};
    if (!o.pass) ++failed;
    std::printf("AC%-2d %s %-20s %8.3fs  %s\n", c.id, o.pass ? "PASS" : "FAIL", c.name, secs, o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
