#ifndef MFCZ_HARNESS_HPP
#define MFCZ_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "czdecomp.hpp"
#include "family.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "operators.hpp"
#include "parallel.hpp"
#include "varexp.hpp"
#include "weights.hpp"

namespace mfcz {

/// One input tuple (f_1, ..., f_m) of a check.
using CaseTuple = std::vector<GridFunction>;

inline std::vector<CaseTuple> family_cases(const TestFamily& fam, const Grid& g)
{
  std::vector<CaseTuple> out;
  out.reserve(static_cast<std::size_t>(fam.count));
  for (int c = 0; c < fam.count; ++c) out.push_back(fam.tuple(g, c));
  return out;
}

struct CaseResult {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool trivial = false;
};

struct RefinementInfo {
  int cells = 0;
  int fine_cells = 0;
  double fine_constant = 0.0;
  double ratio = 0.0;
  bool stable = false;
};

/// Result of one empirical inequality check over a family of cases.
///
/// Cases with RHS at or below the zero tolerance are tallied as trivial and must have LHS at or
/// below it too; the empirical constant is the max ratio over the remaining cases.
struct InequalityReport {
  std::string check;
  json params = json::object();
  std::vector<CaseResult> cases;
  int trivial = 0;
  double constant = 0.0;
  std::optional<RefinementInfo> refinement;
  json diagnostics = json::object();
  std::vector<std::string> failures;
  bool pass = true;

  void add_case(double lhs, double rhs, double zero_tol = 0.0)
  {
    CaseResult c{lhs, rhs, 0.0, false};
    if (!(rhs > zero_tol)) {
      c.trivial = true;
      ++trivial;
      if (lhs > zero_tol) fail("case " + std::to_string(cases.size()) + ": LHS " + format_double(lhs) +
                               " is nonzero where RHS vanishes");
    } else {
      c.ratio = lhs / rhs;
      if (!std::isfinite(c.ratio)) fail("case " + std::to_string(cases.size()) + ": non-finite ratio");
      else constant = std::max(constant, c.ratio);
    }
    cases.push_back(c);
  }

  void fail(std::string why)
  {
    pass = false;
    failures.push_back(std::move(why));
  }

  int counted() const noexcept { return static_cast<int>(cases.size()) - trivial; }

  json to_json() const
  {
    json cs = json::array();
    for (const auto& c : cases)
      cs.push_back(json{{"lhs", c.lhs}, {"rhs", c.rhs}, {"ratio", c.ratio}, {"trivial", c.trivial}});
    json j = {{"check", check},           {"params", params},   {"constant", constant},
              {"counted_cases", counted()}, {"trivial_cases", trivial}, {"pass", pass},
              {"failures", failures},     {"diagnostics", diagnostics}, {"cases", cs}};
    if (refinement)
      j["refinement"] = json{{"N", refinement->cells},
                             {"fine_N", refinement->fine_cells},
                             {"fine_constant", refinement->fine_constant},
                             {"ratio", refinement->ratio},
                             {"stable", refinement->stable}};
    return j;
  }

  /// Rows "check,case,lhs,rhs,ratio,trivial" without a header.
  void write_case_rows(std::ostream& os) const
  {
    for (std::size_t k = 0; k < cases.size(); ++k)
      os << check << ',' << k << ',' << format_double(cases[k].lhs) << ',' << format_double(cases[k].rhs) << ','
         << format_double(cases[k].ratio) << ',' << (cases[k].trivial ? 1 : 0) << '\n';
  }
};

enum class NormKind { strong, weak };

inline const char* to_string(NormKind k) noexcept { return k == NormKind::strong ? "strong" : "weak"; }

inline NormKind norm_kind_from_string(const std::string& s)
{
  if (s == "strong") return NormKind::strong;
  if (s == "weak") return NormKind::weak;
  throw std::invalid_argument("unknown norm kind '" + s + "' (expected strong or weak)");
}

struct HarnessOptions {
  int threads = 1;
  CubeMode mode = CubeMode::full;
  bool allow_large = false;
  /// Samples used by the kernel size gate.
  int kernel_samples = 4000;
};

namespace detail {

inline constexpr double kZeroTolerance = 1e-8;
inline constexpr double kKernelGateSlack = 1e-9;

/// The checks only mean something for kernels meeting their declared size estimate.
inline void kernel_gate(const Kernel& k, const HarnessOptions& o, InequalityReport& r)
{
  const double measured = verify_size(k, o.kernel_samples);
  const double ratio = measured / k.size_constant();
  r.diagnostics["kernel_size_ratio"] = ratio;
  if (!(ratio <= 1.0 + kKernelGateSlack))
    r.fail("kernel size estimate violated: measured " + format_double(measured) + " > declared " +
           format_double(k.size_constant()));
}

inline void require_cases(std::span<const CaseTuple> cases, int arity)
{
  for (const auto& c : cases) {
    if (static_cast<int>(c.size()) != arity)
      throw std::invalid_argument("case has " + std::to_string(c.size()) + " functions, expected " +
                                  std::to_string(arity));
    for (const auto& f : c) require_same_grid(cases[0][0], f);
  }
}

inline bool all_zero(const CaseTuple& c)
{
  for (const auto& f : c)
    if (f.is_zero()) return true;
  return false;
}

inline double product_lp(const CaseTuple& c, double p)
{
  double prod = 1.0;
  for (const auto& f : c) prod *= lp_norm(f, p);
  return prod;
}

inline OperatorOutput apply_case(const Kernel& k, const CaseTuple& c, const HarnessOptions& o)
{
  ApplyOptions a;
  a.allow_large = o.allow_large;
  return apply_T(k, c, a);
}

inline json kernel_params(const Kernel& k)
{
  return json{{"kernel", k.descriptor()}, {"m", k.arity()}, {"n", k.dim()}, {"alpha", k.alpha()}};
}

/// Runs body(case) -> (lhs, rhs) in parallel and records results in case order.
template <class Body>
void run_cases(std::span<const CaseTuple> cases, const HarnessOptions& o, InequalityReport& r, double zero_tol,
               Body&& body)
{
  std::vector<std::pair<double, double>> out(cases.size());
  parallel_for(cases.size(), o.threads, [&](std::size_t i) { out[i] = body(cases[i], i); });
  for (const auto& [lhs, rhs] : out) r.add_case(lhs, rhs, zero_tol);
}

}  // namespace detail

// ---------------------------------------------------------------------------------------------
// Endpoint weak type
// ---------------------------------------------------------------------------------------------

struct EndpointOptions {
  /// Levels at which the distribution and Calderon-Zygmund diagnostics are recorded.
  std::vector<double> lambdas{1.0, 4.0, 16.0};
  double gamma = 1.0;
};

/// ||T f||_{L^{n/(mn-alpha), inf}} / prod ||f_j||_1 over the cases.
inline InequalityReport check_endpoint_weak(const Kernel& k, std::span<const CaseTuple> cases,
                                            const EndpointOptions& e = {}, const HarnessOptions& o = {})
{
  InequalityReport r;
  r.check = "endpoint-weak";
  r.params = detail::kernel_params(k);
  const double q = static_cast<double>(k.dim()) / k.homogeneity();
  r.params["q"] = q;
  r.params["lambdas"] = e.lambdas;
  r.params["gamma"] = e.gamma;
  if (!(e.gamma > 0.0)) throw std::invalid_argument("gamma must be positive");
  for (double l : e.lambdas)
    if (!(l > 0.0)) throw std::invalid_argument("lambda levels must be positive");
  detail::require_cases(cases, k.arity());
  detail::kernel_gate(k, o, r);

  // Per case and level: lambda^q |{|Tf| > lambda}| / prod ||f_j||_1^q and the normalised measure
  // of the cubes selected at height (lambda gamma)^{n/(mn-alpha)}.
  const std::size_t levels = e.lambdas.size();
  std::vector<double> level_c(cases.size() * levels, 0.0), cz_c(cases.size() * levels, 0.0);
  std::vector<double> bias(cases.size(), 0.0);
  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t i) -> std::pair<double, double> {
    if (detail::all_zero(c)) return {0.0, 0.0};
    const OperatorOutput t = detail::apply_case(k, c, o);
    const double rhs = detail::product_lp(c, 1.0);
    bias[i] = t.bias_bound;
    const double vol = t.result.grid().cell_volume();
    for (std::size_t l = 0; l < levels; ++l) {
      const double lambda = e.lambdas[l];
      double above = 0.0;
      for (double v : t.result.values())
        if (std::abs(v) > lambda) above += vol;
      level_c[i * levels + l] = std::pow(lambda, q) * above / std::pow(rhs, q);
      const double height = std::pow(lambda * e.gamma, q);
      double selected = 0.0;
      for (const auto& f : c) {
        const GridFunction fn = (1.0 / lp_norm(f, 1.0)) * f;
        const double box_avg = integrate(fn.abs()) / std::pow(f.grid().box().side, f.grid().dim());
        if (height > box_avg) selected += cz_decompose(fn, height).selected_measure;
      }
      cz_c[i * levels + l] = selected * height / static_cast<double>(c.size());
    }
    return {weak_lq_norm(t.result, q), rhs};
  });

  json per_level = json::array();
  for (std::size_t l = 0; l < levels; ++l) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < cases.size(); ++i) {
      a = std::max(a, level_c[i * levels + l]);
      b = std::max(b, cz_c[i * levels + l]);
    }
    per_level.push_back(json{{"lambda", e.lambdas[l]}, {"level_set_constant", a}, {"cz_measure_constant", b}});
  }
  r.diagnostics["levels"] = per_level;
  r.diagnostics["max_diagonal_bias"] = bias.empty() ? 0.0 : *std::max_element(bias.begin(), bias.end());
  r.diagnostics["note"] = "boundedness of T is measured here, not assumed";
  if (!std::isfinite(r.constant)) r.fail("empirical constant is not finite");
  return r;
}

// ---------------------------------------------------------------------------------------------
// Multiple-weight bound
// ---------------------------------------------------------------------------------------------

/// ||T f||_{L^q(v^q)} / prod ||f_j||_{L^{p_j}(w_j^{p_j})} (weak-type target when kind is weak).
inline InequalityReport check_weighted(const Kernel& k, const WeightVector& v, std::span<const CaseTuple> cases,
                                       NormKind kind, const HarnessOptions& o = {})
{
  v.validate();
  if (v.arity() != k.arity()) throw std::invalid_argument("weight vector arity does not match the kernel");
  const int n = k.dim();
  const double p = v.p();
  const double inv_q = 1.0 / p - k.alpha() / n;
  if (!(inv_q > 0.0)) throw std::invalid_argument("need 1/p - alpha/n > 0, got " + format_double(inv_q));
  if (!(v.q > 0.0) || std::abs(1.0 / v.q - inv_q) > 1e-9)
    throw std::invalid_argument("q must satisfy 1/q = 1/p - alpha/n = " + format_double(inv_q));
  const bool has_endpoint = std::any_of(v.P.begin(), v.P.end(), [](double pj) { return pj == 1.0; });
  if (kind == NormKind::strong && has_endpoint)
    throw std::invalid_argument("strong-type bound needs every p_j > 1; use the weak form");

  InequalityReport r;
  r.check = "weighted";
  r.params = detail::kernel_params(k);
  r.params["P"] = v.P;
  r.params["q"] = v.q;
  r.params["norm"] = to_string(kind);
  detail::require_cases(cases, k.arity());
  if (!cases.empty() && !(cases[0][0].grid() == v.w[0].grid()))
    throw std::invalid_argument("weights and cases live on different grids");
  detail::kernel_gate(k, o, r);

  const double apq = multi_apq_constant(v, o.mode);
  r.diagnostics["apq_constant"] = apq;
  if (!std::isfinite(apq)) r.fail("weight vector has no finite A_{P,q} constant");

  const Weight target = derived_weights(v).second.power(v.q);
  std::vector<Weight> source;
  for (std::size_t j = 0; j < v.w.size(); ++j) source.push_back(v.w[j].power(v.P[j]));

  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t) -> std::pair<double, double> {
    if (detail::all_zero(c)) return {0.0, 0.0};
    const GridFunction t = detail::apply_case(k, c, o).result;
    double rhs = 1.0;
    for (std::size_t j = 0; j < c.size(); ++j) rhs *= weighted_lp_norm(c[j], v.P[j], source[j]);
    const double lhs = kind == NormKind::strong ? weighted_lp_norm(t, v.q, target) : weighted_weak_norm(t, v.q, target);
    return {lhs, rhs};
  });
  return r;
}

// ---------------------------------------------------------------------------------------------
// Pointwise sharp maximal bound
// ---------------------------------------------------------------------------------------------

/// Default exponent 1/2 min(1, n/(mn - alpha)), inside the admissible range.
inline double default_sharp_delta(const Kernel& k) { return 0.5 * std::min(1.0, k.dim() / k.homogeneity()); }

/// sup_x M^#_delta(T f)(x) / M_alpha(f)(x) over cells where the right side is positive.
inline InequalityReport check_sharp_pointwise(const Kernel& k, double delta, std::span<const CaseTuple> cases,
                                              const HarnessOptions& o = {})
{
  if (!(delta > 0.0 && delta < 1.0 && delta < k.dim() / k.homogeneity()))
    throw std::invalid_argument("delta must satisfy 0 < delta < min(1, n/(mn - alpha)), got " + format_double(delta));
  InequalityReport r;
  r.check = "sharp-pointwise";
  r.params = detail::kernel_params(k);
  r.params["delta"] = delta;
  r.params["cubes"] = to_string(o.mode);
  detail::require_cases(cases, k.arity());
  detail::kernel_gate(k, o, r);

  std::vector<CaseResult> out(cases.size());
  std::vector<int> bad(cases.size(), 0);
  parallel_for(cases.size(), o.threads, [&](std::size_t i) {
    const CaseTuple& c = cases[i];
    if (detail::all_zero(c)) {
      out[i] = {0.0, 0.0, 0.0, true};
      return;
    }
    const GridFunction t = detail::apply_case(k, c, o).result;
    const GridFunction lhs = sharp_maximal(t, delta, o.mode);
    const GridFunction rhs = multilinear_frac_maximal(c, k.alpha(), o.mode);
    const double tol = detail::kZeroTolerance * std::max(lhs.max_abs(), rhs.max_abs());
    CaseResult best{0.0, 0.0, 0.0, true};
    for (std::size_t cell = 0; cell < lhs.size(); ++cell) {
      if (rhs[cell] <= tol) {
        if (lhs[cell] > tol) ++bad[i];
        continue;
      }
      const double ratio = lhs[cell] / rhs[cell];
      if (best.trivial || ratio > best.ratio) best = {lhs[cell], rhs[cell], ratio, false};
    }
    out[i] = best;
  });
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (bad[i] > 0) r.fail("case " + std::to_string(i) + ": " + std::to_string(bad[i]) +
                           " cells with LHS > 0 where the maximal function vanishes");
    r.add_case(out[i].lhs, out[i].rhs);
  }
  return r;
}

// ---------------------------------------------------------------------------------------------
// Weighted operator vs maximal function
// ---------------------------------------------------------------------------------------------

/// ||T f||_{L^q(w)} / ||M_alpha f||_{L^q(w)}, or the weak-norm version. The weight must pass the
/// A_infinity surrogate; strong form needs q > n/(mn - alpha), weak form q >= n/(mn - alpha).
inline InequalityReport check_T_vs_maximal(const Kernel& k, const WeightSpec& w, double q,
                                           std::span<const CaseTuple> cases, NormKind kind,
                                           const HarnessOptions& o = {})
{
  const double q0 = k.dim() / k.homogeneity();
  if (kind == NormKind::strong ? !(q > q0) : !(q >= q0))
    throw std::invalid_argument("q = " + format_double(q) + " is below the range starting at n/(mn - alpha) = " +
                                format_double(q0));
  InequalityReport r;
  r.check = "T-vs-maximal";
  r.params = detail::kernel_params(k);
  r.params["q"] = q;
  r.params["weight"] = w.descriptor;
  r.params["norm"] = to_string(kind);
  detail::require_cases(cases, k.arity());
  detail::kernel_gate(k, o, r);
  if (cases.empty()) return r;

  const Grid& g = cases[0][0].grid();
  const AinfResult ainf = ainf_surrogate(w, g, o.mode);
  r.diagnostics["ainf"] = json{{"member", ainf.member}, {"p", ainf.p}, {"constant", ainf.constant},
                               {"ratio", ainf.ratio}};
  if (!ainf.member) r.fail("weight fails the A_infinity surrogate");
  const Weight wt = w.build(g);

  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t) -> std::pair<double, double> {
    if (detail::all_zero(c)) return {0.0, 0.0};
    const GridFunction t = detail::apply_case(k, c, o).result;
    const GridFunction m = multilinear_frac_maximal(c, k.alpha(), o.mode);
    if (kind == NormKind::strong) return {weighted_lp_norm(t, q, wt), weighted_lp_norm(m, q, wt)};
    return {weighted_weak_norm(t, q, wt), weighted_weak_norm(m, q, wt)};
  });
  return r;
}

// ---------------------------------------------------------------------------------------------
// Fefferman-Stein
// ---------------------------------------------------------------------------------------------

/// int (M_delta f)^p w / int (M^#_delta f)^p w; the weak-norm ratio is kept as a diagnostic.
/// Constant functions have vanishing sharp maximal function on a bounded box and are flagged;
/// families for this check should be mean-zero or compactly supported.
inline InequalityReport check_fefferman_stein(std::span<const CaseTuple> cases, double delta, double p,
                                              const WeightSpec& w, const HarnessOptions& o = {})
{
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  if (!(p > 0.0) || !std::isfinite(p)) throw std::invalid_argument("p must be positive and finite");
  InequalityReport r;
  r.check = "fefferman-stein";
  r.params = json{{"delta", delta}, {"p", p}, {"weight", w.descriptor}, {"cubes", to_string(o.mode)}};
  detail::require_cases(cases, 1);
  if (cases.empty()) return r;

  const Grid& g = cases[0][0].grid();
  const AinfResult ainf = ainf_surrogate(w, g, o.mode);
  r.diagnostics["ainf"] = json{{"member", ainf.member}, {"p", ainf.p}, {"constant", ainf.constant},
                               {"ratio", ainf.ratio}};
  if (!ainf.member) r.fail("weight fails the A_infinity surrogate");
  const Weight wt = w.build(g);

  std::vector<double> weak(cases.size(), 0.0);
  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t i) -> std::pair<double, double> {
    if (c[0].is_zero()) return {0.0, 0.0};
    const GridFunction md = m_delta(c[0], delta, o.mode);
    const GridFunction ms = sharp_maximal(c[0], delta, o.mode);
    const double wl = weighted_weak_norm(md, p, wt), wr = weighted_weak_norm(ms, p, wt);
    if (wr > 0.0) weak[i] = wl / wr;
    return {std::pow(weighted_lp_norm(md, p, wt), p), std::pow(weighted_lp_norm(ms, p, wt), p)};
  });
  r.diagnostics["weak_constant"] = weak.empty() ? 0.0 : *std::max_element(weak.begin(), weak.end());
  return r;
}

// ---------------------------------------------------------------------------------------------
// Kolmogorov
// ---------------------------------------------------------------------------------------------

namespace detail {

inline std::vector<double> values_on_cube(const GridFunction& f, const Cube& q)
{
  std::vector<double> v;
  q.for_each_cell(f.grid(), [&](std::size_t k) { v.push_back(f[k]); });
  return v;
}

}  // namespace detail

/// Form (i): |Q|^{-1/p} ||f||_{L^p(Q)} / (|Q|^{-1/q} ||f||_{L^{q,inf}(Q)}); form (ii) uses
/// ||f||_{L^p(Q)} / (|Q|^{alpha/n} ||f||_{L^{q,inf}(Q)}) with alpha/n = 1/p - 1/q.
inline InequalityReport check_kolmogorov(std::span<const CaseTuple> cases, double p, double q, const Cube& cube,
                                         const HarnessOptions& o = {})
{
  if (!(p > 0.0) || !(q > p) || !std::isfinite(q)) throw std::invalid_argument("Kolmogorov check needs 0 < p < q < inf");
  InequalityReport r;
  r.check = "kolmogorov";
  r.params = json{{"p", p}, {"q", q}, {"cube", {{"corner", cube.corner}, {"side", cube.side}}}};
  detail::require_cases(cases, 1);
  if (cases.empty()) return r;
  const Grid& g = cases[0][0].grid();
  if (!cube.inside(g)) throw std::out_of_range("Kolmogorov cube lies outside the grid");
  const int n = g.dim();
  const double alpha = n * (1.0 / p - 1.0 / q);
  const double measure = cube.measure(g);
  r.params["alpha"] = alpha;

  std::vector<double> form2(cases.size(), 0.0);
  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t i) -> std::pair<double, double> {
    const std::vector<double> v = detail::values_on_cube(c[0], cube);
    double s = 0.0;
    for (double x : v) s += std::pow(std::abs(x), p);
    const double lp = std::pow(g.cell_volume() * s, 1.0 / p);
    const std::vector<double> mu(v.size(), g.cell_volume());
    const double weak = detail::weak_norm_from_samples(v, mu, q);
    const double rhs2 = std::pow(measure, alpha / n) * weak;
    if (rhs2 > 0.0) form2[i] = lp / rhs2;
    return {std::pow(measure, -1.0 / p) * lp, std::pow(measure, -1.0 / q) * weak};
  });
  r.diagnostics["form_ii_constant"] = form2.empty() ? 0.0 : *std::max_element(form2.begin(), form2.end());
  return r;
}

// ---------------------------------------------------------------------------------------------
// Variable exponents
// ---------------------------------------------------------------------------------------------

namespace detail {

inline constexpr double kLogHolderGate = 1.1;

inline void require_split(double alpha, std::span<const double> split, int m, int n)
{
  if (static_cast<int>(split.size()) != m) throw std::invalid_argument("alpha split needs one entry per slot");
  double s = 0.0;
  for (double a : split) {
    if (!(a > 0.0 && a < n)) throw std::invalid_argument("each alpha_i must lie in (0, n)");
    s += a;
  }
  if (std::abs(s - alpha) > 1e-12 * std::max(1.0, alpha))
    throw std::invalid_argument("alpha split sums to " + format_double(s) + ", expected " + format_double(alpha));
}

inline ExponentFunction shifted_inverse(std::span<const ExponentFunction> ps, double shift)
{
  const Grid& g = ps[0].grid();
  std::vector<double> v(g.cell_count(), 0.0);
  for (const auto& p : ps)
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += 1.0 / p[k];
  for (double& x : v) x = 1.0 / (x - shift);
  return ExponentFunction(GridFunction(g, std::move(v)));
}

}  // namespace detail

/// ||T f||_{q(.)} / prod ||f_j||_{p_j(.)} with 1/q = sum 1/p_j - alpha/n, plus the chain through
/// the multilinear fractional maximal function and the product of the split maximal functions.
/// Range violations of the exponents are reported as failures and no cases are run.
inline InequalityReport check_varexp_bound(const Kernel& k, std::span<const ExponentSpec> specs,
                                           std::span<const double> split, std::span<const CaseTuple> cases,
                                           const HarnessOptions& o = {})
{
  const int m = k.arity(), n = k.dim();
  if (static_cast<int>(specs.size()) != m) throw std::invalid_argument("need one exponent per slot");
  detail::require_split(k.alpha(), split, m, n);
  InequalityReport r;
  r.check = "varexp-bound";
  r.params = detail::kernel_params(k);
  json ex = json::array();
  for (const auto& s : specs) ex.push_back(s.descriptor);
  r.params["exponents"] = ex;
  r.params["split"] = std::vector<double>(split.begin(), split.end());
  detail::require_cases(cases, m);
  detail::kernel_gate(k, o, r);
  if (cases.empty()) return r;

  const Grid& g = cases[0][0].grid();
  std::vector<ExponentFunction> ps, qs;
  json gates = json::array();
  for (int j = 0; j < m; ++j) {
    const ExponentFunction pj = specs[static_cast<std::size_t>(j)].build(g);
    const ExponentFunction fine = specs[static_cast<std::size_t>(j)].build(g.refined(2));
    const LogHolderConstants a = log_holder_constants(pj), b = log_holder_constants(fine);
    const double ratio = a.c_loc > 0.0 ? b.c_loc / a.c_loc : (b.c_loc > 0.0 ? kInf : 1.0);
    const double ai = split[static_cast<std::size_t>(j)];
    gates.push_back(json{{"slot", j + 1}, {"p_minus", pj.q_minus()}, {"p_plus", pj.q_plus()},
                         {"c_loc", a.c_loc}, {"c_loc_fine", b.c_loc}, {"c_loc_ratio", ratio},
                         {"c_inf", a.c_inf}});
    const std::string tag = "p_" + std::to_string(j + 1);
    if (!pj.in_class_P()) r.fail(tag + " leaves the class 1 < p_- <= p_+ < inf");
    if (!(ratio <= detail::kLogHolderGate)) r.fail(tag + " fails the log-Holder gate (C_loc ratio " + format_double(ratio) + ")");
    if (!(pj.q_plus() < n / ai)) r.fail(tag + ": p_+ = " + format_double(pj.q_plus()) + " is not below n/alpha_i = " + format_double(n / ai));
    ps.push_back(pj);
  }
  r.diagnostics["exponent_gates"] = gates;
  if (!r.pass) return r;

  const ExponentFunction q = detail::shifted_inverse(ps, k.alpha() / n);
  for (int j = 0; j < m; ++j) {
    const ExponentFunction one[] = {ps[static_cast<std::size_t>(j)]};
    qs.push_back(detail::shifted_inverse(one, split[static_cast<std::size_t>(j)] / n));
  }
  r.diagnostics["q_minus"] = q.q_minus();
  r.diagnostics["q_plus"] = q.q_plus();
  if (!(q.q_minus() > 1.0) || !std::isfinite(q.q_plus())) {
    r.fail("target exponent q(.) leaves (1, inf): q_- = " + format_double(q.q_minus()));
    return r;
  }

  std::vector<double> c_t(cases.size(), 0.0), c_prod(cases.size(), 0.0), c_split(cases.size(), 0.0);
  detail::run_cases(cases, o, r, 0.0, [&](const CaseTuple& c, std::size_t i) -> std::pair<double, double> {
    if (detail::all_zero(c)) return {0.0, 0.0};
    const GridFunction t = detail::apply_case(k, c, o).result;
    const GridFunction mf = multilinear_frac_maximal(c, k.alpha(), o.mode);
    double rhs = 1.0, split_norms = 1.0;
    for (int j = 0; j < m; ++j) {
      const auto sj = static_cast<std::size_t>(j);
      rhs *= luxemburg_norm(c[sj], ps[sj]);
      split_norms *= luxemburg_norm(frac_maximal(c[sj], split[sj], o.mode), qs[sj]);
    }
    const double lhs = luxemburg_norm(t, q), m_norm = luxemburg_norm(mf, q);
    c_t[i] = lhs / m_norm;
    c_prod[i] = m_norm / split_norms;
    c_split[i] = split_norms / rhs;
    return {lhs, rhs};
  });
  auto maxv = [](const std::vector<double>& v) { return v.empty() ? 0.0 : *std::max_element(v.begin(), v.end()); };
  r.diagnostics["chain"] = json{{"T_over_M_alpha", maxv(c_t)},
                                {"M_alpha_over_split_product", maxv(c_prod)},
                                {"split_product_over_inputs", maxv(c_split)}};
  return r;
}

// ---------------------------------------------------------------------------------------------
// Product domination
// ---------------------------------------------------------------------------------------------

/// Tolerance for the exact pointwise bound; covers rounding in the products of cube averages.
inline constexpr double kProductDominationSlack = 1e-12;

/// M_alpha(f)(x) <= prod_i M_{alpha_i} f_i(x) at every cell, with constant 1.
inline InequalityReport check_product_domination(std::span<const CaseTuple> cases, double alpha,
                                                 std::span<const double> split, const HarnessOptions& o = {})
{
  if (cases.empty()) {
    InequalityReport r;
    r.check = "product-domination";
    return r;
  }
  const int m = static_cast<int>(cases[0].size()), n = cases[0][0].grid().dim();
  detail::require_split(alpha, split, m, n);
  InequalityReport r;
  r.check = "product-domination";
  r.params = json{{"alpha", alpha}, {"split", std::vector<double>(split.begin(), split.end())}, {"m", m},
                  {"n", n}, {"cubes", to_string(o.mode)}};
  detail::require_cases(cases, m);

  std::vector<CaseResult> out(cases.size());
  std::vector<int> bad(cases.size(), 0);
  parallel_for(cases.size(), o.threads, [&](std::size_t i) {
    const CaseTuple& c = cases[i];
    const GridFunction lhs = multilinear_frac_maximal(c, alpha, o.mode);
    std::vector<double> rhs(lhs.size(), 1.0);
    for (int j = 0; j < m; ++j) {
      const GridFunction mj = frac_maximal(c[static_cast<std::size_t>(j)], split[static_cast<std::size_t>(j)], o.mode);
      for (std::size_t k = 0; k < rhs.size(); ++k) rhs[k] *= mj[k];
    }
    CaseResult best{0.0, 0.0, 0.0, true};
    for (std::size_t k = 0; k < rhs.size(); ++k) {
      if (rhs[k] == 0.0) {
        if (lhs[k] != 0.0) ++bad[i];
        continue;
      }
      const double ratio = lhs[k] / rhs[k];
      if (best.trivial || ratio > best.ratio) best = {lhs[k], rhs[k], ratio, false};
    }
    out[i] = best;
  });
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (bad[i] > 0) r.fail("case " + std::to_string(i) + ": " + std::to_string(bad[i]) + " cells with LHS > 0 = RHS");
    r.add_case(out[i].lhs, out[i].rhs);
  }
  r.diagnostics["bound"] = 1.0;
  if (r.constant > 1.0 + kProductDominationSlack)
    r.fail("pointwise constant " + format_double(r.constant) + " exceeds 1");
  return r;
}

// ---------------------------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------------------------

inline constexpr double kRefinementLow = 0.5;
inline constexpr double kRefinementHigh = 2.0;

/// Ratio of empirical constants; 1 when both vanish.
inline double constant_ratio(double coarse, double fine)
{
  if (coarse == 0.0) return fine == 0.0 ? 1.0 : kInf;
  return fine / coarse;
}

/// Runs check(grid) at N and factor N and returns the coarse report annotated with the ratio.
/// Failures of either run propagate; the report passes only if the ratio lies in [1/2, 2].
template <class Check>
InequalityReport refinement_stability(Check&& check, const Grid& grid, int factor = 2)
{
  if (factor < 2) throw std::invalid_argument("refinement factor must be at least 2");
  InequalityReport coarse = check(grid);
  const Grid fine_grid = grid.refined(factor);
  const InequalityReport fine = check(fine_grid);
  RefinementInfo info;
  info.cells = grid.cells_per_side();
  info.fine_cells = fine_grid.cells_per_side();
  info.fine_constant = fine.constant;
  info.ratio = constant_ratio(coarse.constant, fine.constant);
  info.stable = info.ratio >= kRefinementLow && info.ratio <= kRefinementHigh;
  coarse.refinement = info;
  for (const auto& f : fine.failures) coarse.fail("refined run: " + f);
  if (!info.stable) coarse.fail("refinement ratio " + format_double(info.ratio) + " outside [1/2, 2]");
  return coarse;
}

}  // namespace mfcz

#endif  // MFCZ_HARNESS_HPP
