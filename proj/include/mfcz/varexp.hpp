#ifndef MFCZ_VAREXP_HPP
#define MFCZ_VAREXP_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grid.hpp"
#include "io.hpp"
#include "operators.hpp"

namespace mfcz {

/// Cellwise exponent q(x) with its essential range [q_-, q_+].
class ExponentFunction {
 public:
  explicit ExponentFunction(GridFunction q) : q_(std::move(q))
  {
    lo_ = kInf;
    hi_ = -kInf;
    for (double v : q_.values()) {
      lo_ = std::min(lo_, v);
      hi_ = std::max(hi_, v);
    }
  }

  static ExponentFunction constant(const Grid& g, double q) { return ExponentFunction(GridFunction::constant(g, q)); }

  const GridFunction& values() const noexcept { return q_; }
  const Grid& grid() const noexcept { return q_.grid(); }
  double operator[](std::size_t k) const noexcept { return q_[k]; }
  double q_minus() const noexcept { return lo_; }
  double q_plus() const noexcept { return hi_; }

  /// 1 < q_- <= q_+ < inf.
  bool in_class_P() const noexcept { return lo_ > 1.0 && std::isfinite(hi_); }
  /// 0 < q_- <= q_+ < inf.
  bool in_class_P0() const noexcept { return lo_ > 0.0 && std::isfinite(hi_); }

 private:
  GridFunction q_;
  double lo_ = 0.0;
  double hi_ = 0.0;
};

namespace detail {

inline void require_same_exponent_grid(const GridFunction& f, const ExponentFunction& q)
{
  if (!(f.grid() == q.grid())) throw std::invalid_argument("function and exponent live on different grids");
}

inline double modular_scaled(const GridFunction& f, const ExponentFunction& q, double eta)
{
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) {
    const double v = std::abs(f[k]) / eta;
    if (v != 0.0) s += std::pow(v, q[k]);
  }
  return f.grid().cell_volume() * s;
}

}  // namespace detail

/// F_q(f) = int |f|^{q(x)} dx.
inline double modular(const GridFunction& f, const ExponentFunction& q)
{
  detail::require_same_exponent_grid(f, q);
  return detail::modular_scaled(f, q, 1.0);
}

inline constexpr int kLuxemburgMaxIterations = 200;

/// inf{eta > 0 : F_q(f / eta) <= 1}, by bracketing and bisection to relative tolerance 1e-10.
inline double luxemburg_norm(const GridFunction& f, const ExponentFunction& q)
{
  detail::require_same_exponent_grid(f, q);
  if (!q.in_class_P0()) throw std::invalid_argument("Luxemburg norm needs 0 < q_- and q_+ < inf");
  if (f.is_zero()) return 0.0;
  double lo = 1.0, hi = 1.0;
  if (detail::modular_scaled(f, q, 1.0) > 1.0) {
    while (detail::modular_scaled(f, q, hi) > 1.0) hi *= 2.0;
    lo = hi / 2.0;
  } else {
    while (detail::modular_scaled(f, q, lo) <= 1.0) lo /= 2.0;
    hi = lo * 2.0;
  }
  for (int it = 0; it < kLuxemburgMaxIterations && hi - lo > 1e-10 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (detail::modular_scaled(f, q, mid) > 1.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

/// q'(x) = q(x) / (q(x) - 1).
inline ExponentFunction conjugate(const ExponentFunction& q)
{
  if (!(q.q_minus() > 1.0)) throw std::invalid_argument("conjugate exponent needs q_- > 1");
  return ExponentFunction(q.values().map([](double v) { return v / (v - 1.0); }));
}

struct LogHolderConstants {
  double c_loc = 0.0;
  double c_inf = 0.0;
  double q_inf = 0.0;
  double ring_radius = 0.0;  ///< smallest |x| over the boundary ring used for q_inf
};

/// Empirical log-Hoelder constants on the grid. q_inf is the average over the outermost ring of cells.
inline LogHolderConstants log_holder_constants(const ExponentFunction& q)
{
  const Grid& g = q.grid();
  const int n = g.dim(), cells = g.cells_per_side();
  LogHolderConstants r;
  double ring_sum = 0.0;
  std::size_t ring_count = 0;
  r.ring_radius = kInf;
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    const Index i = g.index(k);
    bool ring = false;
    for (int a = 0; a < n; ++a) ring = ring || i[a] == 0 || i[a] == cells - 1;
    if (ring) {
      ring_sum += q[k];
      ++ring_count;
      r.ring_radius = std::min(r.ring_radius, norm(g.center(k), n));
    }
  }
  r.q_inf = ring_sum / static_cast<double>(ring_count);

  const int reach = static_cast<int>(std::floor(0.5 / g.h() + 1e-9));
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    const Index i = g.index(k);
    const Point x = g.center(k);
    r.c_inf = std::max(r.c_inf, std::abs(q[k] - r.q_inf) * std::log(std::exp(1.0) + norm(x, n)));
    // Pairs with the partner ahead of k in flat order, within distance 1/2.
    for (int d1 = 0; d1 <= (n == 2 ? reach : 0); ++d1)
      for (int d0 = -reach; d0 <= reach; ++d0) {
        if (d1 == 0 && d0 <= 0) continue;
        const Index j{i[0] + d0, i[1] + d1};
        if (j[0] < 0 || j[0] >= cells || (n == 2 && j[1] >= cells)) continue;
        const double dist = g.h() * std::hypot(static_cast<double>(d0), static_cast<double>(d1));
        if (dist > 0.5) continue;
        r.c_loc = std::max(r.c_loc, std::abs(q[k] - q[g.flat(j)]) * -std::log(dist));
      }
  }
  return r;
}

/// 1/p = sum_j 1/p_j cellwise. Class membership of the result is left to the caller (not clamped).
inline ExponentFunction harmonic_exponent_sum(std::span<const ExponentFunction> qs)
{
  if (qs.empty()) throw std::invalid_argument("harmonic sum needs at least one exponent");
  const Grid& g = qs[0].grid();
  for (const auto& q : qs)
    if (!(q.grid() == g)) throw std::invalid_argument("exponents live on different grids");
  if (qs.size() == 1) return qs[0];
  std::vector<double> v(g.cell_count(), 0.0);
  for (const auto& q : qs)
    for (std::size_t k = 0; k < v.size(); ++k) v[k] += 1.0 / q[k];
  for (double& x : v) x = 1.0 / x;
  return ExponentFunction(GridFunction(g, std::move(v)));
}

struct HolderCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double ratio = 0.0;
  bool pass = true;
};

/// int |f g| against ||f||_{p(.)} ||g||_{p'(.)}; the ceiling is 2.
inline HolderCheck check_generalized_holder(const GridFunction& f, const GridFunction& g, const ExponentFunction& p)
{
  require_same_grid(f, g);
  if (!p.in_class_P()) throw std::invalid_argument("generalized Hoelder check needs p in the class P");
  HolderCheck r;
  double s = 0.0;
  for (std::size_t k = 0; k < f.size(); ++k) s += std::abs(f[k] * g[k]);
  r.lhs = f.grid().cell_volume() * s;
  r.rhs = luxemburg_norm(f, p) * luxemburg_norm(g, conjugate(p));
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  r.pass = r.ratio <= 2.0;
  return r;
}

/// ||f_1 ... f_m||_{q(.)} against prod_j ||f_j||_{q_j(.)}, with 1/q = sum 1/q_j; ceiling 2^{m-1}.
inline HolderCheck check_multi_holder(std::span<const GridFunction> fs, std::span<const ExponentFunction> qs,
                                      const ExponentFunction& q)
{
  if (fs.empty() || fs.size() != qs.size()) throw std::invalid_argument("one exponent per function is required");
  const Grid& g = q.grid();
  for (std::size_t k = 0; k < g.cell_count(); ++k) {
    double s = 0.0;
    for (const auto& qj : qs) s += 1.0 / qj[k];
    if (std::abs(1.0 / q[k] - s) > 1e-10) throw std::invalid_argument("exponents do not satisfy 1/q = sum 1/q_j");
  }
  std::vector<double> prod(g.cell_count(), 1.0);
  for (const auto& f : fs) {
    detail::require_same_exponent_grid(f, q);
    for (std::size_t k = 0; k < prod.size(); ++k) prod[k] *= f[k];
  }
  HolderCheck r;
  r.lhs = luxemburg_norm(GridFunction(g, std::move(prod)), q);
  r.rhs = 1.0;
  for (std::size_t j = 0; j < fs.size(); ++j) r.rhs *= luxemburg_norm(fs[j], qs[j]);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  r.pass = r.ratio <= std::ldexp(1.0, static_cast<int>(fs.size()) - 1);
  return r;
}

/// Luxemburg average with Young function e^t - 1 (the exp L dual of L log L) on a cube.
inline double orlicz_expl_average(const GridFunction& f, const Cube& q)
{
  if (!q.inside(f.grid())) throw std::out_of_range("cube lies outside the grid");
  std::vector<double> v;
  detail::gather(f, q, v);
  double top = 0.0;
  for (double x : v) top = std::max(top, std::abs(x));
  if (top == 0.0) return 0.0;
  auto modular = [&](double lambda) {
    double s = 0.0;
    for (double x : v) s += std::expm1(std::min(std::abs(x) / lambda, 700.0));
    return s / static_cast<double>(v.size());
  };
  double lo = 1e-3 * top, hi = 1e6 * top;
  for (int it = 0; it < 400 && hi - lo > 1e-10 * hi; ++it) {
    const double mid = hi > 2.0 * lo ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (modular(mid) > 1.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

/// avg_Q |f g| against ||f||_{exp L, Q} ||g||_{L log L, Q}. No ceiling is asserted; the ratio is reported.
inline HolderCheck check_orlicz_holder(const GridFunction& f, const GridFunction& g, const Cube& q)
{
  require_same_grid(f, g);
  HolderCheck r;
  double s = 0.0;
  q.for_each_cell(f.grid(), [&](std::size_t k) { s += std::abs(f[k] * g[k]); });
  r.lhs = s / static_cast<double>(q.cell_count(f.grid().dim()));
  r.rhs = orlicz_expl_average(f, q) * orlicz_llogl_average(g, q);
  r.ratio = r.rhs > 0.0 ? r.lhs / r.rhs : 0.0;
  return r;
}

/// Catalog exponents: constant, bump, ramp, jump, or a grid-function file.
///
///   {"type": "constant", "value": q}
///   {"type": "bump", "base": b, "amp": a, "center": c, "width": w}   b + a exp(-|x - c|^2 / w^2)
///   {"type": "ramp", "base": b, "amp": a, "radius": r}                b + a min(1, |x| / r)
///   {"type": "jump", "low": l, "high": h, "at": t}                    h if x_0 > t else l
///   {"type": "file", "path": p}
struct ExponentSpec {
  json descriptor;

  static ExponentSpec constant(double q) { return {json{{"type", "constant"}, {"value", q}}}; }

  ExponentFunction build(const Grid& g) const
  {
    const std::string type = descriptor.at("type").get<std::string>();
    const int n = g.dim();
    if (type == "constant") return ExponentFunction::constant(g, descriptor.at("value").get<double>());
    if (type == "bump") {
      const double b = descriptor.at("base").get<double>(), a = descriptor.at("amp").get<double>();
      const double c = descriptor.value("center", 0.0), w = descriptor.value("width", 1.0);
      if (!(w > 0.0)) throw std::invalid_argument("bump exponent width must be positive");
      return ExponentFunction(GridFunction::sample(g, [&](Point x) {
        const double r = norm(Point{x[0] - c, n == 2 ? x[1] - c : 0.0}, n);
        return b + a * std::exp(-(r * r) / (w * w));
      }));
    }
    if (type == "ramp") {
      const double b = descriptor.at("base").get<double>(), a = descriptor.at("amp").get<double>();
      const double r0 = descriptor.value("radius", 1.0);
      if (!(r0 > 0.0)) throw std::invalid_argument("ramp exponent radius must be positive");
      return ExponentFunction(GridFunction::sample(g, [&](Point x) { return b + a * std::min(1.0, norm(x, n) / r0); }));
    }
    if (type == "jump") {
      const double lo = descriptor.at("low").get<double>(), hi = descriptor.at("high").get<double>();
      const double at = descriptor.value("at", 0.0);
      return ExponentFunction(GridFunction::sample(g, [&](Point x) { return x[0] > at ? hi : lo; }));
    }
    if (type == "file") return ExponentFunction(load_on_grid(descriptor.at("path").get<std::string>(), g));
    throw std::invalid_argument("unknown exponent type '" + type + "' (expected constant, bump, ramp, jump or file)");
  }
};

}  // namespace mfcz

#endif  // MFCZ_VAREXP_HPP
