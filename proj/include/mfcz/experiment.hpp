#ifndef MFCZ_EXPERIMENT_HPP
#define MFCZ_EXPERIMENT_HPP

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "czdecomp.hpp"
#include "family.hpp"
#include "grid.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "kernel.hpp"
#include "varexp.hpp"
#include "weights.hpp"

namespace mfcz {

/// Invalid experiment configuration (CLI exit code 2).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

enum ExitCode : int { kExitPass = 0, kExitCheckFailed = 1, kExitInvalidConfig = 2, kExitCapExceeded = 3 };

// ---------------------------------------------------------------------------------------------
// Check registry
// ---------------------------------------------------------------------------------------------

struct CheckInfo {
  std::string name;
  std::string statement;
  std::vector<std::pair<std::string, std::string>> params;
  std::string pass_criteria;
  std::vector<std::string> sweepable;
  /// Number of input functions per case: 0 for the kernel arity, -1 when the check has no family.
  int arity = 0;
  bool uses_operator = false;
};

inline const std::vector<CheckInfo>& check_registry()
{
  static const std::vector<CheckInfo> registry = {
      {"endpoint-weak",
       "T maps L^1 x ... x L^1 boundedly into weak L^{n/(mn-alpha)}: ||T f||_{n/(mn-alpha),inf} <= C prod ||f_j||_1.",
       {{"lambdas", "levels for the distribution and Calderon-Zygmund diagnostics (default [1, 4, 16])"},
        {"gamma", "scale in the CZ height (lambda gamma)^{n/(mn-alpha)} (default 1)"}},
       "kernel meets its size estimate; finite constant over the L^1-normalised family; refinement ratio in [1/2, 2]",
       {"alpha", "lambda", "gamma", "N"},
       0,
       true},
      {"weighted",
       "For (w_1..w_m) in A_{P,q} with 1/q = 1/p - alpha/n: ||T f||_{L^q(v^q)} <= C prod ||f_j||_{L^{p_j}(w_j^{p_j})}, "
       "v = prod w_j; weak L^{q,inf}(v^q) on the left when some p_j = 1.",
       {{"weights", "{weights: [weight...], P: [p_j...], q} (q defaults to the admissible value)"},
        {"norm", "strong or weak (default weak if some p_j = 1)"}},
       "finite A_{P,q} constant; finite empirical constant; refinement ratio in [1/2, 2]",
       {"alpha", "q", "a", "N"},
       0,
       true},
      {"sharp-pointwise",
       "For 0 < delta < min(1, n/(mn-alpha)): M^#_delta(T f)(x) <= C M_alpha(f)(x) at every point.",
       {{"delta", "sharp maximal exponent (default 1/2 min(1, n/(mn-alpha)))"}},
       "LHS vanishes wherever RHS does (1e-8 relative); finite sup ratio; refinement ratio in [1/2, 2]",
       {"alpha", "delta", "N"},
       0,
       true},
      {"T-vs-maximal",
       "For w in A_inf: ||T f||_{L^q(w)} <= C ||M_alpha f||_{L^q(w)} when q > n/(mn-alpha), and the weak-norm "
       "version when q >= n/(mn-alpha).",
       {{"q", "target exponent (default n/(mn-alpha) + 1)"},
        {"norm", "strong or weak (default strong)"},
        {"weight", "weight descriptor (default constant 1)"}},
       "weight passes the A_inf surrogate; finite constant; refinement ratio in [1/2, 2]",
       {"alpha", "q", "a", "N"},
       0,
       true},
      {"fefferman-stein",
       "For w in A_inf: int (M_delta f)^p w <= C int (M^#_delta f)^p w whenever the left side is finite; "
       "the weak-norm ratio is recorded alongside.",
       {{"delta", "exponent in (0, 1] (default 1)"},
        {"p", "integrability exponent (default 2)"},
        {"weight", "weight descriptor (default constant 1)"}},
       "weight passes the A_inf surrogate; no case with LHS > 0 = RHS; refinement ratio in [1/2, 2]",
       {"delta", "q", "a", "N"},
       1,
       false},
      {"kolmogorov",
       "For 0 < p < q: |Q|^{-1/p} ||f||_{L^p(Q)} <= C |Q|^{-1/q} ||f||_{L^{q,inf}(Q)}, equivalently "
       "||f||_{L^p(Q)} <= C |Q|^{alpha/n} ||f||_{L^{q,inf}(Q)} with alpha/n = 1/p - 1/q.",
       {{"p", "inner exponent (default 1)"},
        {"q", "outer exponent (default 2)"},
        {"cube", "{corner: [fractions of the box], side: fraction} (default the central half)"}},
       "finite constant; refinement ratio in [1/2, 2]",
       {"q", "N"},
       1,
       false},
      {"varexp-bound",
       "For log-Holder exponents p_j(.) with p_j+ < n/alpha_j and 0 < 1/q(.) = sum 1/p_j(.) - alpha/n < 1: "
       "||T f||_{q(.)} <= C prod ||f_j||_{p_j(.)}, via M_alpha(f) <= prod M_{alpha_j} f_j.",
       {{"exponents", "one exponent descriptor per slot"},
        {"split", "alpha_j with sum alpha (default alpha/m each)"}},
       "exponent gates pass; finite constant; refinement ratio in [1/2, 2]",
       {"alpha", "N"},
       0,
       true},
      {"product-domination",
       "M_alpha(f)(x) <= prod_j M_{alpha_j} f_j(x) with alpha = sum alpha_j, constant exactly 1.",
       {{"alpha", "total order (default the kernel order)"}, {"split", "alpha_j (default alpha/m each)"}},
       "pointwise constant <= 1 + 1e-12 at every cell of every case",
       {"alpha", "N"},
       0,
       false},
      {"tail-integral",
       "For m = 2 and alpha < n: int_{R^n} (a + |t|)^{-(2n-alpha)} dt = c a^{alpha-n}; the constant "
       "lhs a^{n-alpha} does not depend on the frozen distance a.",
       {{"alpha", "order (default the kernel order)"}, {"a", "frozen distances (default [1/4, 1, 4])"}},
       "max/min of lhs a^{n-alpha} over the distances within 1 + 1e-3",
       {"alpha", "a"},
       -1,
       false},
      {"ap-constant",
       "A_p constant sup_Q avg(w) avg(w^{1-p'})^{p-1} of a single weight; finite and refinement-stable "
       "exactly for weights in A_p.",
       {{"weight", "weight descriptor (default power with a = 0)"}, {"p", "exponent >= 1 (default 2)"}},
       "constant >= 1 - 1e-12; refinement ratio in [1/2, 2]",
       {"a", "q", "N"},
       -1,
       false},
      {"cz-properties",
       "Calderon-Zygmund decomposition at height (lambda gamma)^{n/(mn-alpha)}: reconstruction, support, "
       "mean zero, selected-measure, L^1 and L^s bounds of the good and bad parts.",
       {{"lambda", "level (default 1)"}, {"gamma", "scale (default 1)"}},
       "every property holds on every case; P4 constant is the reported ratio",
       {"alpha", "lambda", "gamma", "N"},
       1,
       false},
  };
  return registry;
}

inline const CheckInfo* find_check(const std::string& name)
{
  for (const auto& c : check_registry())
    if (c.name == name) return &c;
  return nullptr;
}

inline std::string check_names()
{
  std::string s;
  for (const auto& c : check_registry()) s += (s.empty() ? "" : ", ") + c.name;
  return s;
}

inline std::string describe_check(const std::string& name)
{
  const CheckInfo* c = find_check(name);
  if (!c) throw ConfigError("unknown check '" + name + "'; valid names: " + check_names());
  std::ostringstream os;
  os << c->name << "\n  statement: " << c->statement << "\n  parameters:\n";
  for (const auto& [p, d] : c->params) os << "    " << p << ": " << d << "\n";
  os << "  pass: " << c->pass_criteria << "\n  sweepable:";
  for (const auto& s : c->sweepable) os << ' ' << s;
  os << "\n";
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------------------------

struct Caps {
  std::size_t max_cells = std::size_t{1} << 22;
  int max_cases = 10000;
  /// Wall-clock budget checked between checks; 0 disables it.
  double seconds = 0.0;
};

/// Seeds of check families: derive_seed(config seed, kCheckSeedStream, check index).
inline constexpr std::uint64_t kCheckSeedStream = 0xc4ec;

struct ExperimentConfig {
  json raw;
  std::uint64_t seed = 1;
  json grid;
  json kernel;
  json family;
  bool refine = true;
  bool allow_large = false;
  CubeMode mode = CubeMode::full;
  int threads = 1;
  Caps caps;
  std::vector<json> checks;

  static ExperimentConfig from_json(const json& j, const std::filesystem::path& base_dir = {});
};

namespace detail {

inline void resolve_paths(json& j, const std::filesystem::path& base)
{
  if (j.is_object()) {
    if (j.contains("type") && j["type"] == "file" && j.contains("path")) {
      std::filesystem::path p = j["path"].get<std::string>();
      if (p.is_relative() && !base.empty()) p = base / p;
      if (!std::filesystem::exists(p)) throw ConfigError("referenced file does not exist: " + p.string());
      j["path"] = p.lexically_normal().string();
    }
    for (auto& [key, v] : j.items()) resolve_paths(v, base);
  } else if (j.is_array()) {
    for (auto& v : j) resolve_paths(v, base);
  }
}

inline const std::vector<std::string>& known_config_keys()
{
  static const std::vector<std::string> keys = {"seed", "grid", "kernel", "family", "refine", "allow_large",
                                                "cube_mode", "threads", "caps", "checks", "description"};
  return keys;
}

}  // namespace detail

inline ExperimentConfig ExperimentConfig::from_json(const json& j, const std::filesystem::path& base_dir)
{
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, v] : j.items())
    if (std::find(detail::known_config_keys().begin(), detail::known_config_keys().end(), key) ==
        detail::known_config_keys().end())
      throw ConfigError("unknown config key '" + key + "'");
  ExperimentConfig c;
  c.raw = j;
  detail::resolve_paths(c.raw, base_dir);
  try {
    c.seed = c.raw.value("seed", std::uint64_t{1});
    c.grid = c.raw.at("grid");
    c.kernel = c.raw.value("kernel", json{{"type", "riesz"}, {"m", 1}, {"n", c.grid.value("n", 1)}, {"alpha", 0.5}});
    c.family = c.raw.value("family", json::object());
    c.refine = c.raw.value("refine", true);
    c.allow_large = c.raw.value("allow_large", false);
    c.mode = cube_mode_from_string(c.raw.value("cube_mode", std::string("full")));
    c.threads = c.raw.value("threads", 1);
    if (c.raw.contains("caps")) {
      const json& caps = c.raw["caps"];
      c.caps.max_cells = caps.value("max_cells", c.caps.max_cells);
      c.caps.max_cases = caps.value("max_cases", c.caps.max_cases);
      c.caps.seconds = caps.value("seconds", c.caps.seconds);
    }
    if (c.raw.contains("checks")) {
      if (!c.raw["checks"].is_array()) throw ConfigError("'checks' must be an array");
      for (const auto& ch : c.raw["checks"]) c.checks.push_back(ch);
    }
    grid_from_header(c.grid);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  if (c.caps.max_cases < 0 || c.caps.seconds < 0.0) throw ConfigError("caps must be non-negative");
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path)
{
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const std::exception& e) {
    throw ConfigError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j, path.parent_path());
}

// ---------------------------------------------------------------------------------------------
// Planning: every check is validated and turned into a grid -> report function before compute.
// ---------------------------------------------------------------------------------------------

struct PlannedCheck {
  std::string name;
  json spec;
  bool grid_dependent = true;
  bool uses_operator = false;
  int arity = 1;
  int cases = 0;
  std::function<InequalityReport(const Grid&)> run;
};

namespace detail {

inline json merged(const json& base, const json& over)
{
  json out = base.is_object() ? base : json::object();
  if (over.is_object())
    for (const auto& [k, v] : over.items()) out[k] = v;
  return out;
}

template <class T>
T get_or(const json& j, const std::string& key, T fallback)
{
  try {
    return j.contains(key) ? j.at(key).get<T>() : fallback;
  } catch (const std::exception& e) {
    throw ConfigError("parameter '" + key + "': " + e.what());
  }
}

inline std::vector<double> equal_split(double alpha, int m) { return std::vector<double>(static_cast<std::size_t>(m), alpha / m); }

inline Cube cube_from_fractions(const json& spec, const Grid& g)
{
  const int n = g.dim(), cells = g.cells_per_side();
  std::vector<double> corner(static_cast<std::size_t>(n), 0.25);
  double side = 0.5;
  if (spec.is_object()) {
    if (spec.contains("corner")) corner = spec["corner"].get<std::vector<double>>();
    side = spec.value("side", side);
  }
  if (static_cast<int>(corner.size()) != n) throw ConfigError("cube corner needs n entries");
  Cube q{{0, 0}, std::max(1, static_cast<int>(std::lround(side * cells)))};
  for (int a = 0; a < n; ++a) q.corner[static_cast<std::size_t>(a)] = static_cast<int>(std::lround(corner[static_cast<std::size_t>(a)] * cells));
  if (!q.inside(g)) throw ConfigError("Kolmogorov cube does not fit in the box");
  return q;
}

}  // namespace detail

inline PlannedCheck plan_check(const ExperimentConfig& cfg, const json& spec, std::size_t index,
                               const HarnessOptions& opts)
{
  if (!spec.is_object() || !spec.contains("name")) throw ConfigError("check " + std::to_string(index) + " needs a name");
  const std::string name = spec["name"].get<std::string>();
  const CheckInfo* info = find_check(name);
  if (!info) throw ConfigError("unknown check '" + name + "'; valid names: " + check_names());

  PlannedCheck p;
  p.name = name;
  p.spec = spec;
  p.uses_operator = info->uses_operator;
  const Grid base = grid_from_header(cfg.grid);
  const int n = base.dim();

  try {
    const json kspec = spec.value("kernel", cfg.kernel);
    const Kernel k = kernel_from_json(kspec);
    if (k.dim() != n) throw ConfigError("kernel dimension " + std::to_string(k.dim()) + " does not match grid dimension " + std::to_string(n));
    p.arity = info->arity == 0 ? k.arity() : std::max(info->arity, 1);

    json fam_json = detail::merged(cfg.family, spec.value("family", json::object()));
    if (!fam_json.contains("seed")) fam_json["seed"] = derive_seed(cfg.seed, kCheckSeedStream, index);
    fam_json["arity"] = p.arity;
    if (name == "endpoint-weak" || name == "cz-properties") fam_json["normalize_l1"] = true;
    if (name == "fefferman-stein" && !fam_json.contains("kind")) fam_json["kind"] = "mean_zero_oscillations";
    const TestFamily fam = TestFamily::from_json(fam_json);
    p.cases = info->arity < 0 ? 1 : fam.count;
    p.spec["family"] = fam.to_json();

    const HarnessOptions o = opts;
    if (name == "endpoint-weak") {
      EndpointOptions e;
      e.lambdas = detail::get_or(spec, "lambdas", e.lambdas);
      e.gamma = detail::get_or(spec, "gamma", e.gamma);
      if (!(e.gamma > 0.0)) throw ConfigError("gamma must be positive");
      for (double l : e.lambdas)
        if (!(l > 0.0)) throw ConfigError("lambda levels must be positive");
      p.run = [k, fam, e, o](const Grid& g) { return check_endpoint_weak(k, family_cases(fam, g), e, o); };
    } else if (name == "weighted") {
      if (!spec.contains("weights")) throw ConfigError("weighted check needs 'weights'");
      WeightVectorSpec ws = WeightVectorSpec::from_json(spec["weights"]);
      if (static_cast<int>(ws.weights.size()) != k.arity() || ws.P.size() != ws.weights.size())
        throw ConfigError("weighted check needs one weight and one p_j per slot");
      double inv_p = 0.0;
      for (double pj : ws.P) {
        if (!(pj >= 1.0)) throw ConfigError("p_j must be >= 1");
        inv_p += 1.0 / pj;
      }
      const double inv_q = inv_p - k.alpha() / n;
      if (!(inv_q > 0.0)) throw ConfigError("1/p - alpha/n must be positive");
      if (!(ws.q > 0.0)) ws.q = 1.0 / inv_q;
      const bool endpoint = std::any_of(ws.P.begin(), ws.P.end(), [](double v) { return v == 1.0; });
      const NormKind kind = norm_kind_from_string(spec.value("norm", std::string(endpoint ? "weak" : "strong")));
      p.spec["weights"] = ws.to_json();
      p.run = [k, fam, ws, kind, o](const Grid& g) { return check_weighted(k, ws.build(g), family_cases(fam, g), kind, o); };
    } else if (name == "sharp-pointwise") {
      const double delta = detail::get_or(spec, "delta", default_sharp_delta(k));
      if (!(delta > 0.0 && delta < 1.0 && delta < n / k.homogeneity()))
        throw ConfigError("delta must lie in (0, min(1, n/(mn-alpha)))");
      p.spec["delta"] = delta;
      p.run = [k, fam, delta, o](const Grid& g) { return check_sharp_pointwise(k, delta, family_cases(fam, g), o); };
    } else if (name == "T-vs-maximal") {
      const double q0 = n / k.homogeneity();
      const double q = detail::get_or(spec, "q", q0 + 1.0);
      const NormKind kind = norm_kind_from_string(spec.value("norm", std::string("strong")));
      if (kind == NormKind::strong ? !(q > q0) : !(q >= q0)) throw ConfigError("q is below n/(mn-alpha)");
      const WeightSpec w{spec.value("weight", json{{"type", "constant"}, {"c", 1.0}})};
      w.build(base);
      p.spec["q"] = q;
      p.run = [k, fam, w, q, kind, o](const Grid& g) { return check_T_vs_maximal(k, w, q, family_cases(fam, g), kind, o); };
    } else if (name == "fefferman-stein") {
      const double delta = detail::get_or(spec, "delta", 1.0);
      const double pp = detail::get_or(spec, "p", 2.0);
      if (!(delta > 0.0 && delta <= 1.0)) throw ConfigError("delta must lie in (0, 1]");
      if (!(pp > 0.0)) throw ConfigError("p must be positive");
      const WeightSpec w{spec.value("weight", json{{"type", "constant"}, {"c", 1.0}})};
      w.build(base);
      p.run = [fam, delta, pp, w, o](const Grid& g) { return check_fefferman_stein(family_cases(fam, g), delta, pp, w, o); };
    } else if (name == "kolmogorov") {
      const double pp = detail::get_or(spec, "p", 1.0), q = detail::get_or(spec, "q", 2.0);
      if (!(pp > 0.0 && q > pp)) throw ConfigError("Kolmogorov check needs 0 < p < q");
      const json cube = spec.value("cube", json::object());
      detail::cube_from_fractions(cube, base);
      p.run = [fam, pp, q, cube, o](const Grid& g) {
        return check_kolmogorov(family_cases(fam, g), pp, q, detail::cube_from_fractions(cube, g), o);
      };
    } else if (name == "varexp-bound") {
      if (!spec.contains("exponents") || !spec["exponents"].is_array()) throw ConfigError("varexp-bound needs 'exponents'");
      std::vector<ExponentSpec> ex;
      for (const auto& e : spec["exponents"]) ex.push_back(ExponentSpec{e});
      if (static_cast<int>(ex.size()) != k.arity()) throw ConfigError("varexp-bound needs one exponent per slot");
      for (const auto& e : ex) e.build(base);
      const std::vector<double> split = detail::get_or(spec, "split", detail::equal_split(k.alpha(), k.arity()));
      detail::require_split(k.alpha(), split, k.arity(), n);
      p.run = [k, ex, split, fam, o](const Grid& g) { return check_varexp_bound(k, ex, split, family_cases(fam, g), o); };
    } else if (name == "product-domination") {
      const double alpha = detail::get_or(spec, "alpha", k.alpha());
      const std::vector<double> split = detail::get_or(spec, "split", detail::equal_split(alpha, k.arity()));
      detail::require_split(alpha, split, static_cast<int>(split.size()), n);
      p.arity = static_cast<int>(split.size());
      TestFamily f2 = fam;
      f2.arity = p.arity;
      p.spec["family"] = f2.to_json();
      p.run = [f2, alpha, split, o](const Grid& g) { return check_product_domination(family_cases(f2, g), alpha, split, o); };
    } else if (name == "tail-integral") {
      const double alpha = detail::get_or(spec, "alpha", k.alpha());
      std::vector<double> as{0.25, 1.0, 4.0};
      if (spec.contains("a")) as = spec["a"].is_array() ? spec["a"].get<std::vector<double>>() : std::vector<double>{spec["a"].get<double>()};
      if (!(alpha > 0.0 && alpha < n)) throw ConfigError("tail integral needs 0 < alpha < n");
      for (double a : as)
        if (!(a > 0.0)) throw ConfigError("frozen distances must be positive");
      p.grid_dependent = false;
      p.run = [n, alpha, as](const Grid&) {
        InequalityReport r;
        r.check = "tail-integral";
        r.params = json{{"n", n}, {"m", 2}, {"alpha", alpha}, {"a", as}};
        double lo = kInf, hi = 0.0;
        for (double a : as) {
          const TailIntegral t = tail_integral_check(n, 2, alpha, a);
          r.add_case(t.lhs, std::pow(a, alpha - n));
          lo = std::min(lo, t.bound_constant);
          hi = std::max(hi, t.bound_constant);
        }
        const double spread = as.empty() ? 0.0 : hi / lo - 1.0;
        r.diagnostics["spread"] = spread;
        if (n == 1) r.diagnostics["closed_form"] = 2.0 / (1.0 - alpha);
        if (!(spread <= 1e-3)) r.fail("bound constant varies by " + format_double(spread) + " across distances");
        return r;
      };
    } else if (name == "ap-constant") {
      const WeightSpec w{spec.value("weight", json{{"type", "power"}, {"a", 0.0}})};
      const double pp = detail::get_or(spec, "p", 2.0);
      if (!(pp >= 1.0)) throw ConfigError("A_p needs p >= 1");
      w.build(base);
      const CubeMode mode = o.mode;
      p.run = [w, pp, mode](const Grid& g) {
        InequalityReport r;
        r.check = "ap-constant";
        r.params = json{{"weight", w.descriptor}, {"p", pp}, {"cubes", to_string(mode)}};
        const double c = ap_constant(w.build(g), pp, mode);
        r.add_case(c, 1.0);
        if (!(c >= 1.0 - 1e-12)) r.fail("A_p constant " + format_double(c) + " below 1");
        return r;
      };
    } else if (name == "cz-properties") {
      const double lambda = detail::get_or(spec, "lambda", 1.0), gamma = detail::get_or(spec, "gamma", 1.0);
      if (!(lambda > 0.0 && gamma > 0.0)) throw ConfigError("lambda and gamma must be positive");
      const CZExponents e{k.arity(), n, k.alpha(), lambda, gamma};
      p.run = [fam, e, o](const Grid& g) {
        InequalityReport r;
        r.check = "cz-properties";
        r.params = json{{"m", e.m}, {"n", e.n}, {"alpha", e.alpha}, {"lambda", e.lambda}, {"gamma", e.gamma},
                        {"height", e.height()}};
        const auto cases = family_cases(fam, g);
        std::vector<CZReport> out(cases.size());
        std::vector<char> skipped(cases.size(), 0);
        parallel_for(cases.size(), o.threads, [&](std::size_t i) {
          const GridFunction& f = cases[i][0];
          const double box_avg = integrate(f.abs()) / std::pow(g.box().side, g.dim());
          if (f.is_zero() || !(e.height() > box_avg)) {
            skipped[i] = 1;
            return;
          }
          out[i] = verify_cz_properties(cz_decompose(f, e.height()), e);
        });
        int skip = 0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
          if (skipped[i]) {
            ++skip;
            r.add_case(0.0, 0.0);
            continue;
          }
          r.add_case(out[i].p4_constant, 1.0);
          if (!out[i].pass) r.fail("case " + std::to_string(i) + ": " + out[i].to_json().dump());
        }
        r.diagnostics["below_box_average"] = skip;
        return r;
      };
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const ResourceCapExceeded&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError("check " + std::to_string(index) + " (" + name + "): " + e.what());
  }
  return p;
}

// ---------------------------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------------------------

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  std::optional<std::size_t> cap_cells;
  std::optional<double> cap_seconds;
};

inline void apply_overrides(ExperimentConfig& c, const RunOverrides& o)
{
  if (o.seed) {
    c.seed = *o.seed;
    c.raw["seed"] = *o.seed;
  }
  if (o.threads) {
    if (*o.threads < 1) throw ConfigError("threads must be at least 1");
    c.threads = *o.threads;
  }
  if (o.cap_cells) c.caps.max_cells = *o.cap_cells;
  if (o.cap_seconds) {
    if (*o.cap_seconds < 0.0) throw ConfigError("cap-seconds must be non-negative");
    c.caps.seconds = *o.cap_seconds;
  }
}

struct ExperimentResult {
  std::vector<InequalityReport> reports;
  bool pass = true;
  std::vector<std::string> failures;

  json to_json(const ExperimentConfig& cfg) const
  {
    json checks = json::array();
    for (std::size_t i = 0; i < reports.size(); ++i) {
      json r = reports[i].to_json();
      r["index"] = i;
      checks.push_back(std::move(r));
    }
    // Thread count and caps never change results, so they stay out of the report.
    json config = cfg.raw;
    config.erase("threads");
    config.erase("caps");
    config["seed"] = cfg.seed;
    return json{{"config", config}, {"pass", pass}, {"failures", failures}, {"checks", checks}};
  }
};

namespace detail {

inline void enforce_caps(const ExperimentConfig& cfg, const PlannedCheck& p, const Grid& g)
{
  const Grid top = cfg.refine && p.grid_dependent ? g.refined(2) : g;
  if (p.grid_dependent && top.cell_count() > cfg.caps.max_cells)
    throw ResourceCapExceeded("check '" + p.name + "' needs " + std::to_string(top.cell_count()) +
                              " cells, above the cap of " + std::to_string(cfg.caps.max_cells));
  if (p.cases > cfg.caps.max_cases)
    throw ResourceCapExceeded("check '" + p.name + "' has " + std::to_string(p.cases) + " cases, above the cap of " +
                              std::to_string(cfg.caps.max_cases));
  if (p.uses_operator) {
    ApplyOptions a;
    a.allow_large = cfg.allow_large;
    check_operator_cap(top, p.arity, a);
  }
}

}  // namespace detail

/// Validates and caps every check first, then runs them in order. Throws ConfigError or
/// ResourceCapExceeded; check failures are recorded in the result.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg)
{
  HarnessOptions opts;
  opts.threads = cfg.threads;
  opts.mode = cfg.mode;
  opts.allow_large = cfg.allow_large;
  const Grid g = grid_from_header(cfg.grid);

  std::vector<PlannedCheck> plan;
  for (std::size_t i = 0; i < cfg.checks.size(); ++i) plan.push_back(plan_check(cfg, cfg.checks[i], i, opts));
  for (const auto& p : plan) detail::enforce_caps(cfg, p, g);

  const auto start = std::chrono::steady_clock::now();
  auto over_budget = [&] {
    const double used = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return cfg.caps.seconds > 0.0 && used > cfg.caps.seconds;
  };
  ExperimentResult res;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (over_budget()) throw ResourceCapExceeded("wall-clock budget exhausted before check " + std::to_string(i));
    InequalityReport r;
    try {
      r = cfg.refine && plan[i].grid_dependent ? refinement_stability(plan[i].run, g) : plan[i].run(g);
    } catch (const ResourceCapExceeded&) {
      throw;
    } catch (const std::invalid_argument& e) {
      throw ConfigError("check " + std::to_string(i) + " (" + plan[i].name + "): " + e.what());
    }
    r.params["spec"] = plan[i].spec;
    if (!r.pass) {
      res.pass = false;
      for (const auto& f : r.failures) res.failures.push_back("check " + std::to_string(i) + " (" + r.check + "): " + f);
    }
    res.reports.push_back(std::move(r));
  }
  if (over_budget()) throw ResourceCapExceeded("wall-clock budget exhausted");
  return res;
}

namespace detail {

inline void write_text(const std::filesystem::path& path, const std::string& text)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

inline std::string plot_name(std::size_t index, const std::string& check)
{
  std::ostringstream os;
  os << (index < 10 ? "0" : "") << index << '_' << check << ".csv";
  return os.str();
}

}  // namespace detail

/// Writes report.json, cases.csv and plotdata/NN_check.csv (case, ratio) under dir.
inline void write_experiment(const ExperimentConfig& cfg, const ExperimentResult& res, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir / "plotdata");
  detail::write_text(dir / "report.json", res.to_json(cfg).dump(2) + "\n");
  std::ostringstream cases;
  cases << "index,check,case,lhs,rhs,ratio,trivial\n";
  for (std::size_t i = 0; i < res.reports.size(); ++i) {
    std::ostringstream rows;
    res.reports[i].write_case_rows(rows);
    std::istringstream in(rows.str());
    for (std::string line; std::getline(in, line);) cases << i << ',' << line << '\n';
    std::ostringstream plot;
    plot << "case,ratio,trivial\n";
    for (std::size_t k = 0; k < res.reports[i].cases.size(); ++k)
      plot << k << ',' << format_double(res.reports[i].cases[k].ratio) << ',' << (res.reports[i].cases[k].trivial ? 1 : 0)
           << '\n';
    detail::write_text(dir / "plotdata" / detail::plot_name(i, res.reports[i].check), plot.str());
  }
  detail::write_text(dir / "cases.csv", cases.str());
}

/// `run`: exit 0 if every check passes, 1 on a failed check, 2 on invalid config, 3 on a cap.
inline int run_command(const std::filesystem::path& config_path, const std::filesystem::path& out_dir,
                       const RunOverrides& overrides, std::ostream& diag)
{
  try {
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, overrides);
    const ExperimentResult res = run_experiment(cfg);
    write_experiment(cfg, res, out_dir);
    for (const auto& f : res.failures) diag << "FAIL " << f << "\n";
    return res.pass ? kExitPass : kExitCheckFailed;
  } catch (const ConfigError& e) {
    diag << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const ResourceCapExceeded& e) {
    diag << "resource cap exceeded: " << e.what() << "\n";
    return kExitCapExceeded;
  }
}

// ---------------------------------------------------------------------------------------------
// Sweeps
// ---------------------------------------------------------------------------------------------

inline const std::vector<std::string>& sweep_parameters()
{
  static const std::vector<std::string> p = {"alpha", "delta", "q", "lambda", "gamma", "N", "a"};
  return p;
}

namespace detail {

inline void set_kernel_alpha(json& k, double alpha)
{
  const std::string type = k.at("type").get<std::string>();
  if (type == "scaled") set_kernel_alpha(k["kernel"], alpha);
  else if (type == "sum")
    for (auto& t : k["terms"]) set_kernel_alpha(t, alpha);
  else k["alpha"] = alpha;
}

inline void set_power_exponent(json& j, double a)
{
  if (j.is_object()) {
    if (j.value("type", std::string()) == "power") j["a"] = a;
    for (auto& [key, v] : j.items()) set_power_exponent(v, a);
  } else if (j.is_array()) {
    for (auto& v : j) set_power_exponent(v, a);
  }
}

}  // namespace detail

/// Config with `param` set to `value` in the base check (the check list is reduced to it).
inline ExperimentConfig with_parameter(const ExperimentConfig& cfg, std::size_t check_index, const std::string& param,
                                       double value)
{
  if (check_index >= cfg.checks.size()) throw ConfigError("sweep needs a base check; the config has none at that index");
  json check = cfg.checks[check_index];
  const std::string name = check.value("name", std::string());
  const CheckInfo* info = find_check(name);
  if (!info) throw ConfigError("unknown check '" + name + "'; valid names: " + check_names());
  if (std::find(sweep_parameters().begin(), sweep_parameters().end(), param) == sweep_parameters().end())
    throw ConfigError("unknown sweep parameter '" + param + "' (expected alpha, delta, q, lambda, gamma, N or a)");
  if (std::find(info->sweepable.begin(), info->sweepable.end(), param) == info->sweepable.end())
    throw ConfigError("parameter '" + param + "' does not apply to check '" + name + "'");

  ExperimentConfig out = cfg;
  if (param == "N") {
    const double r = std::round(value);
    if (r != value || r < 1) throw ConfigError("N must be a positive integer");
    out.grid["N"] = static_cast<int>(r);
    out.raw["grid"] = out.grid;
  } else if (param == "alpha") {
    if (name == "tail-integral" || name == "product-domination") {
      check["alpha"] = value;
      check.erase("split");
    } else {
      json k = check.value("kernel", cfg.kernel);
      detail::set_kernel_alpha(k, value);
      check["kernel"] = k;
      check.erase("split");
    }
  } else if (param == "delta") {
    check["delta"] = value;
  } else if (param == "q") {
    if (name == "fefferman-stein" || name == "ap-constant") check["p"] = value;
    else if (name == "weighted") check["weights"]["q"] = value;
    else check["q"] = value;
  } else if (param == "lambda") {
    if (name == "endpoint-weak") check["lambdas"] = json::array({value});
    else check["lambda"] = value;
  } else if (param == "gamma") {
    check["gamma"] = value;
  } else if (param == "a") {
    if (name == "tail-integral") {
      check["a"] = json::array({value});
    } else if (name == "ap-constant") {
      check["weight"] = json{{"type", "power"}, {"a", value}};
    } else if (name == "weighted" || check.contains("weight")) {
      json& target = name == "weighted" ? check["weights"] : check["weight"];
      const json before = target;
      detail::set_power_exponent(target, value);
      if (target == before && value != before.value("a", value))
        throw ConfigError("sweeping 'a' needs a power weight in check '" + name + "'");
    } else {
      check["weight"] = json{{"type", "power"}, {"a", value}};
    }
  }
  // The base check keeps its family seed, so every sweep row sees the same cases.
  if (!check.contains("family") || !check["family"].contains("seed")) {
    json fam = check.value("family", json::object());
    fam["seed"] = derive_seed(cfg.seed, kCheckSeedStream, check_index);
    check["family"] = fam;
  }
  out.checks = {check};
  out.raw["checks"] = json::array({check});
  out.refine = true;
  return out;
}

struct SweepRow {
  double value = 0.0;
  InequalityReport report;
};

inline std::vector<SweepRow> run_sweep(const ExperimentConfig& cfg, std::size_t check_index, const std::string& param,
                                       const std::vector<double>& values)
{
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  std::vector<ExperimentConfig> configs;
  for (double v : values) configs.push_back(with_parameter(cfg, check_index, param, v));
  // Validate and cap every row before running any of them.
  for (const auto& c : configs) {
    HarnessOptions o;
    const PlannedCheck p = plan_check(c, c.checks[0], check_index, o);
    detail::enforce_caps(c, p, grid_from_header(c.grid));
  }
  std::vector<SweepRow> rows;
  const auto start = std::chrono::steady_clock::now();
  for (std::size_t i = 0; i < configs.size(); ++i) {
    if (cfg.caps.seconds > 0.0 &&
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count() > cfg.caps.seconds)
      throw ResourceCapExceeded("wall-clock budget exhausted during the sweep");
    ExperimentConfig c = configs[i];
    c.caps.seconds = 0.0;
    ExperimentResult r = run_experiment(c);
    rows.push_back({values[i], std::move(r.reports.at(0))});
  }
  return rows;
}

inline void write_sweep(const ExperimentConfig& cfg, const std::string& param, const std::vector<SweepRow>& rows,
                        const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir / "plotdata");
  std::ostringstream csv, plot;
  csv << param << ",constant,refinement_ratio,pass\n";
  plot << param << ",constant,refinement_ratio\n";
  json jr = json::array();
  bool pass = true;
  for (const auto& row : rows) {
    const double ratio = row.report.refinement ? row.report.refinement->ratio : 1.0;
    csv << format_double(row.value) << ',' << format_double(row.report.constant) << ',' << format_double(ratio) << ','
        << (row.report.pass ? 1 : 0) << '\n';
    plot << format_double(row.value) << ',' << format_double(row.report.constant) << ',' << format_double(ratio) << '\n';
    json r = row.report.to_json();
    r["value"] = row.value;
    jr.push_back(std::move(r));
    pass = pass && row.report.pass;
  }
  json config = cfg.raw;
  config.erase("threads");
  config.erase("caps");
  config["seed"] = cfg.seed;
  const json report = {{"config", config}, {"sweep", param}, {"pass", pass}, {"rows", jr}};
  detail::write_text(dir / "report.json", report.dump(2) + "\n");
  detail::write_text(dir / "sweep.csv", csv.str());
  detail::write_text(dir / "plotdata" / ("sweep_" + param + ".csv"), plot.str());
  std::ostringstream cases;
  cases << param << ",check,case,lhs,rhs,ratio,trivial\n";
  for (const auto& row : rows) {
    std::ostringstream rws;
    row.report.write_case_rows(rws);
    std::istringstream in(rws.str());
    for (std::string line; std::getline(in, line);) cases << format_double(row.value) << ',' << line << '\n';
  }
  detail::write_text(dir / "cases.csv", cases.str());
}

/// `sweep`: runs the base check (index `check_index`) once per value with refinement.
inline int sweep_command(const std::filesystem::path& config_path, const std::string& param,
                         const std::vector<double>& values, std::size_t check_index,
                         const std::filesystem::path& out_dir, const RunOverrides& overrides, std::ostream& diag)
{
  try {
    ExperimentConfig cfg = load_config(config_path);
    apply_overrides(cfg, overrides);
    const auto rows = run_sweep(cfg, check_index, param, values);
    write_sweep(cfg, param, rows, out_dir);
    bool pass = true;
    for (const auto& row : rows)
      for (const auto& f : row.report.failures) {
        pass = false;
        diag << "FAIL " << param << " = " << format_double(row.value) << ": " << f << "\n";
      }
    return pass ? kExitPass : kExitCheckFailed;
  } catch (const ConfigError& e) {
    diag << "invalid config: " << e.what() << "\n";
    return kExitInvalidConfig;
  } catch (const ResourceCapExceeded& e) {
    diag << "resource cap exceeded: " << e.what() << "\n";
    return kExitCapExceeded;
  }
}

}  // namespace mfcz

#endif  // MFCZ_EXPERIMENT_HPP
