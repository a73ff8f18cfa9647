#ifndef MFCZ_WEIGHTS_HPP
#define MFCZ_WEIGHTS_HPP

#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "cube_sweep.hpp"
#include "grid.hpp"
#include "io.hpp"
#include "operators.hpp"

namespace mfcz {

class Weight {
 public:
  explicit Weight(GridFunction w) : w_(std::move(w))
  {
    for (double v : w_.values())
      if (!(v > 0.0)) throw std::invalid_argument("weights must be strictly positive");
  }

  const GridFunction& values() const noexcept { return w_; }
  const Grid& grid() const noexcept { return w_.grid(); }
  double operator[](std::size_t k) const noexcept { return w_[k]; }

  /// w^e cellwise.
  Weight power(double e) const
  {
    return Weight(w_.map([e](double v) { return std::pow(v, e); }));
  }

 private:
  GridFunction w_;
};

/// max(|x|, h/2)^a, floored at half a cell so the origin cell stays finite.
inline Weight power_weight(double a, const Grid& g)
{
  const double floor = 0.5 * g.h();
  return Weight(GridFunction::sample(g, [&](Point x) {
    return a == 0.0 ? 1.0 : std::pow(std::max(norm(x, g.dim()), floor), a);
  }));
}

/// Weight descriptor that can be rebuilt on any grid: power, constant or file.
struct WeightSpec {
  json descriptor;

  static WeightSpec power(double a) { return {json{{"type", "power"}, {"a", a}}}; }
  static WeightSpec constant(double c) { return {json{{"type", "constant"}, {"c", c}}}; }

  Weight build(const Grid& g) const
  {
    const std::string type = descriptor.at("type").get<std::string>();
    if (type == "power") return power_weight(descriptor.at("a").get<double>(), g);
    if (type == "constant") {
      const double c = descriptor.at("c").get<double>();
      if (!(c > 0.0)) throw std::invalid_argument("constant weight must be positive");
      return Weight(GridFunction::constant(g, c));
    }
    if (type == "file") return Weight(load_on_grid(descriptor.at("path").get<std::string>(), g));
    throw std::invalid_argument("unknown weight type '" + type + "' (expected power, constant or file)");
  }
};

/// Weights w_1..w_m with exponents P and (for the fractional class) a target q.
struct WeightVector {
  std::vector<Weight> w;
  std::vector<double> P;
  double q = 0.0;

  int arity() const noexcept { return static_cast<int>(w.size()); }

  /// 1/p = sum_j 1/p_j.
  double p() const
  {
    double s = 0.0;
    for (double pj : P) s += 1.0 / pj;
    return 1.0 / s;
  }

  void validate() const
  {
    if (w.empty() || w.size() != P.size()) throw std::invalid_argument("weight vector needs one exponent per weight");
    for (const auto& wj : w)
      if (!(wj.grid() == w[0].grid())) throw std::invalid_argument("weights live on different grids");
    for (double pj : P)
      if (!(pj >= 1.0) || !std::isfinite(pj)) throw std::invalid_argument("exponents p_j must lie in [1, inf)");
  }
};

struct WeightVectorSpec {
  std::vector<WeightSpec> weights;
  std::vector<double> P;
  double q = 0.0;

  WeightVector build(const Grid& g) const
  {
    WeightVector v;
    for (const auto& s : weights) v.w.push_back(s.build(g));
    v.P = P;
    v.q = q;
    v.validate();
    return v;
  }

  json to_json() const
  {
    json ws = json::array();
    for (const auto& s : weights) ws.push_back(s.descriptor);
    return json{{"weights", ws}, {"P", P}, {"q", q}};
  }

  static WeightVectorSpec from_json(const json& j)
  {
    WeightVectorSpec s;
    for (const auto& d : j.at("weights")) s.weights.push_back(WeightSpec{d});
    s.P = j.at("P").get<std::vector<double>>();
    s.q = j.value("q", 0.0);
    return s;
  }
};

/// Conjugate exponent; 1 maps to +inf.
inline double conjugate_exponent(double p) { return p == 1.0 ? kInf : p / (p - 1.0); }

/// A_p constant over the cube family. p > 1: sup_Q avg(w) avg(w^{1-p'})^{p-1}; p = 1: max Mw / w.
inline double ap_constant(const Weight& w, double p, CubeMode mode = CubeMode::full)
{
  if (!(p >= 1.0)) throw std::invalid_argument("A_p needs p >= 1");
  const Grid& g = w.grid();
  if (p == 1.0) {
    const GridFunction mw = hl_maximal(w.values(), mode);
    double best = 0.0;
    for (std::size_t k = 0; k < g.cell_count(); ++k) best = std::max(best, mw[k] / w[k]);
    return best;
  }
  const double pp = conjugate_exponent(p);
  WindowSum a(w.values()), b(w.power(1.0 - pp).values());
  return max_over_cubes(
      g, mode,
      [&] {
        a.grow();
        b.grow();
      },
      [&](const Cube& q) {
        const double cnt = static_cast<double>(q.cell_count(g.dim()));
        return (a.at(q.corner) / cnt) * std::pow(b.at(q.corner) / cnt, p - 1.0);
      });
}

namespace detail {

/// sup_Q (avg lead)^{1/lead_exp} prod_j factor_j(Q), where factor_j is (avg w_j^{e_j})^{1/r_j}
/// or, for the p_j = 1 branch, (min_Q w_j)^{-1}.
inline double multi_weight_sup(const GridFunction& lead, double lead_root, const WeightVector& v,
                               const std::vector<double>& powers, CubeMode mode)
{
  const Grid& g = lead.grid();
  const std::size_t m = v.w.size();
  WindowSum lead_sum(lead);
  std::vector<std::optional<WindowSum>> sums(m);
  std::vector<std::optional<WindowMin>> mins(m);
  for (std::size_t j = 0; j < m; ++j) {
    if (v.P[j] == 1.0) mins[j].emplace(v.w[j].values());
    else sums[j].emplace(v.w[j].power(powers[j]).values());
  }
  return max_over_cubes(
      g, mode,
      [&] {
        lead_sum.grow();
        for (std::size_t j = 0; j < m; ++j) {
          if (sums[j]) sums[j]->grow();
          if (mins[j]) mins[j]->grow();
        }
      },
      [&](const Cube& q) {
        const double cnt = static_cast<double>(q.cell_count(g.dim()));
        double val = std::pow(lead_sum.at(q.corner) / cnt, 1.0 / lead_root);
        for (std::size_t j = 0; j < m; ++j) {
          if (mins[j]) val /= mins[j]->at(q.corner);
          else val *= std::pow(sums[j]->at(q.corner) / cnt, 1.0 / conjugate_exponent(v.P[j]));
        }
        return val;
      });
}

}  // namespace detail

/// Derived weights u = prod w_j^{p/p_j} and v = prod w_j.
inline std::pair<Weight, Weight> derived_weights(const WeightVector& v)
{
  v.validate();
  const double p = v.p();
  const Grid& g = v.w[0].grid();
  std::vector<double> u(g.cell_count(), 1.0), prod(g.cell_count(), 1.0);
  for (std::size_t j = 0; j < v.w.size(); ++j)
    for (std::size_t k = 0; k < g.cell_count(); ++k) {
      u[k] *= std::pow(v.w[j][k], p / v.P[j]);
      prod[k] *= v.w[j][k];
    }
  return {Weight(GridFunction(g, std::move(u))), Weight(GridFunction(g, std::move(prod)))};
}

/// A_P constant: sup_Q (avg u)^{1/p} prod_j (avg w_j^{1-p_j'})^{1/p_j'}.
inline double multi_ap_constant(const WeightVector& v, CubeMode mode = CubeMode::full)
{
  v.validate();
  const auto [u, prod] = derived_weights(v);
  std::vector<double> powers;
  for (double pj : v.P) powers.push_back(pj == 1.0 ? 0.0 : 1.0 - conjugate_exponent(pj));
  return detail::multi_weight_sup(u.values(), v.p(), v, powers, mode);
}

/// A_{P,q} constant: sup_Q (avg v^q)^{1/q} prod_j (avg w_j^{-p_j'})^{1/p_j'}.
inline double multi_apq_constant(const WeightVector& v, CubeMode mode = CubeMode::full)
{
  v.validate();
  if (!(v.q > 0.0)) throw std::invalid_argument("A_{P,q} needs q > 0");
  const auto [u, prod] = derived_weights(v);
  std::vector<double> powers;
  for (double pj : v.P) powers.push_back(pj == 1.0 ? 0.0 : -conjugate_exponent(pj));
  return detail::multi_weight_sup(prod.power(v.q).values(), v.q, v, powers, mode);
}

/// Weighted L^p norm (int |f|^p w)^{1/p}.
inline double weighted_lp_norm(const GridFunction& f, double p, const Weight& w)
{
  if (!(p > 0.0)) throw std::invalid_argument("weighted norm needs p > 0");
  require_same_grid(f, w.values());
  if (std::isinf(p)) return f.max_abs();
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += std::pow(std::abs(f[k]), p) * w[k];
  return std::pow(f.grid().cell_volume() * s, 1.0 / p);
}

/// Weighted weak norm sup_t t w({|f| >= t})^{1/p}.
inline double weighted_weak_norm(const GridFunction& f, double p, const Weight& w)
{
  if (!(p > 0.0)) throw std::invalid_argument("weighted weak norm needs p > 0");
  require_same_grid(f, w.values());
  std::vector<double> mu(f.size());
  for (std::size_t k = 0; k < f.size(); ++k) mu[k] = w[k] * f.grid().cell_volume();
  return detail::weak_norm_from_samples(f.values(), mu, p);
}

enum class WeightClass { AP, APq };

struct ImpliedConstant {
  std::string name;        ///< e.g. "w_1^{1-p_1'} in A_{m p_1'}"
  bool applicable = true;  ///< false for the A_{P,q} slots with p_j = 1
  double at_n = 0.0;
  double at_2n = 0.0;
  double ratio = 0.0;      ///< at_2n / at_n
  bool stable = false;     ///< finite at both and ratio within [1/2, 2]
};

struct ImplicationReport {
  WeightClass kind = WeightClass::AP;
  double hypothesis_n = 0.0;
  double hypothesis_2n = 0.0;
  bool hypothesis_stable = false;
  std::vector<ImpliedConstant> implied;
  bool pass = true;  ///< vacuous when the hypothesis is not stable

  json to_json() const
  {
    json items = json::array();
    for (const auto& c : implied)
      items.push_back(json{{"name", c.name}, {"applicable", c.applicable}, {"at_n", c.at_n}, {"at_2n", c.at_2n},
                           {"ratio", c.ratio}, {"stable", c.stable}});
    return json{{"kind", kind == WeightClass::AP ? "AP" : "APq"},
                {"hypothesis_n", hypothesis_n},
                {"hypothesis_2n", hypothesis_2n},
                {"hypothesis_stable", hypothesis_stable},
                {"implied", items},
                {"pass", pass}};
  }
};

inline bool refinement_stable(double a, double b)
{
  return std::isfinite(a) && std::isfinite(b) && a > 0.0 && b / a >= 0.5 && b / a <= 2.0;
}

/// Checks the characterisation of the multiple-weight classes: when the class constant is stable
/// under one refinement, every implied single-weight constant must be too.
inline ImplicationReport check_weight_implications(const WeightVectorSpec& spec, const Grid& grid, WeightClass kind,
                                                   CubeMode mode = CubeMode::full)
{
  ImplicationReport r;
  r.kind = kind;
  const Grid fine = grid.refined(2);
  const WeightVector v1 = spec.build(grid), v2 = spec.build(fine);
  const int m = v1.arity();
  const double p = v1.p();
  if (kind == WeightClass::APq && !(v1.q > 0.0)) throw std::invalid_argument("A_{P,q} implications need q > 0");

  auto hyp = [&](const WeightVector& v) { return kind == WeightClass::AP ? multi_ap_constant(v, mode) : multi_apq_constant(v, mode); };
  r.hypothesis_n = hyp(v1);
  r.hypothesis_2n = hyp(v2);
  r.hypothesis_stable = refinement_stable(r.hypothesis_n, r.hypothesis_2n);

  auto add = [&](std::string name, auto&& constant) {
    ImpliedConstant c;
    c.name = std::move(name);
    c.at_n = constant(v1);
    c.at_2n = constant(v2);
    c.ratio = c.at_2n / c.at_n;
    c.stable = refinement_stable(c.at_n, c.at_2n);
    r.implied.push_back(c);
  };
  for (int j = 0; j < m; ++j) {
    const double pj = v1.P[static_cast<std::size_t>(j)];
    const std::string idx = std::to_string(j + 1);
    if (pj == 1.0) {
      if (kind == WeightClass::AP) {
        add("w_" + idx + "^{1/m} in A_1", [&](const WeightVector& v) {
          return ap_constant(v.w[static_cast<std::size_t>(j)].power(1.0 / m), 1.0, mode);
        });
      } else {
        ImpliedConstant c;
        c.name = "w_" + idx + "^{-p_" + idx + "'} with p_" + idx + " = 1";
        c.applicable = false;
        r.implied.push_back(c);
      }
      continue;
    }
    const double pp = conjugate_exponent(pj);
    const double e = kind == WeightClass::AP ? 1.0 - pp : -pp;
    const std::string label = kind == WeightClass::AP ? "^{1-p_" + idx + "'}" : "^{-p_" + idx + "'}";
    add("w_" + idx + label + " in A_{m p_" + idx + "'}", [&](const WeightVector& v) {
      return ap_constant(v.w[static_cast<std::size_t>(j)].power(e), m * pp, mode);
    });
  }
  if (kind == WeightClass::AP) {
    add("u in A_{mp}", [&](const WeightVector& v) { return ap_constant(derived_weights(v).first, m * p, mode); });
  } else {
    add("v^q in A_{mq}", [&](const WeightVector& v) {
      return ap_constant(derived_weights(v).second.power(v.q), m * v.q, mode);
    });
  }
  if (r.hypothesis_stable)
    for (const auto& c : r.implied) r.pass = r.pass && (!c.applicable || c.stable);
  return r;
}

/// Exponents tried by the A_infinity surrogate.
inline constexpr double kAinfExponents[] = {1.5, 2.0, 4.0, 8.0, 16.0};

struct AinfResult {
  bool member = false;
  double p = 0.0;          ///< first exponent that passed
  double constant = 0.0;   ///< its A_p constant on the base grid
  double ratio = 0.0;      ///< refinement ratio of that constant
};

/// A weight passes if A_p is finite and grows by at most 20% under one refinement for some
/// p in {1.5, 2, 4, 8, 16}.
inline AinfResult ainf_surrogate(const WeightSpec& spec, const Grid& grid, CubeMode mode = CubeMode::full)
{
  const Weight w1 = spec.build(grid), w2 = spec.build(grid.refined(2));
  for (double p : kAinfExponents) {
    const double a = ap_constant(w1, p, mode), b = ap_constant(w2, p, mode);
    if (std::isfinite(a) && std::isfinite(b) && b <= 1.2 * a) return {true, p, a, b / a};
  }
  return {};
}

}  // namespace mfcz

#endif  // MFCZ_WEIGHTS_HPP
