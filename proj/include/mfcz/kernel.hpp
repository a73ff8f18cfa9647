#ifndef MFCZ_KERNEL_HPP
#define MFCZ_KERNEL_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "grid.hpp"
#include "random.hpp"

namespace mfcz {

using json = nlohmann::json;

// ---------------------------------------------------------------------------------------------
// Regularity moduli
// ---------------------------------------------------------------------------------------------

/// Nondecreasing modulus omega: [0, inf) -> [0, inf) with 0 < omega(1) < inf.
///
/// Built-in forms: power  c t^eps;  log-power  c (1 + log 1/t)^{-beta} for t <= 1 and c beyond;
/// table  piecewise-linear through (t_i, w_i), constant outside the table.
class Modulus {
 public:
  enum class Kind { power, log_power, table, custom };

  static Modulus power(double exponent, double scale = 1.0)
  {
    if (!(exponent > 0.0)) throw std::invalid_argument("power modulus exponent must be positive");
    Modulus m(Kind::power);
    m.param_ = exponent;
    m.scale_ = scale;
    m.validate();
    return m;
  }

  static Modulus log_power(double beta, double scale = 1.0)
  {
    if (!(beta > 0.0)) throw std::invalid_argument("log-power modulus exponent must be positive");
    Modulus m(Kind::log_power);
    m.param_ = beta;
    m.scale_ = scale;
    m.validate();
    return m;
  }

  static Modulus table(std::vector<double> t, std::vector<double> w)
  {
    if (t.size() != w.size() || t.empty()) throw std::invalid_argument("modulus table needs matching non-empty columns");
    if (!std::is_sorted(t.begin(), t.end()) || std::adjacent_find(t.begin(), t.end()) != t.end())
      throw std::invalid_argument("modulus table abscissae must be strictly increasing");
    Modulus m(Kind::table);
    m.t_ = std::move(t);
    m.w_ = std::move(w);
    m.validate();
    return m;
  }

  /// Arbitrary code-supplied modulus; validated on dyadic samples only.
  static Modulus custom(std::function<double(double)> fn, std::string label = "custom")
  {
    Modulus m(Kind::custom);
    m.fn_ = std::move(fn);
    m.label_ = std::move(label);
    m.validate();
    return m;
  }

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  double parameter() const noexcept { return param_; }

  double operator()(double t) const
  {
    if (t < 0.0) t = 0.0;
    switch (kind_) {
      case Kind::power: return scale_ * std::pow(t, param_);
      case Kind::log_power: return t >= 1.0 ? scale_ : t <= 0.0 ? 0.0 : scale_ * std::pow(1.0 - std::log(t), -param_);
      case Kind::table: {
        if (t <= t_.front()) return w_.front();
        if (t >= t_.back()) return w_.back();
        const auto it = std::upper_bound(t_.begin(), t_.end(), t);
        const std::size_t k = static_cast<std::size_t>(it - t_.begin());
        const double u = (t - t_[k - 1]) / (t_[k] - t_[k - 1]);
        return w_[k - 1] + u * (w_[k] - w_[k - 1]);
      }
      case Kind::custom: return fn_(t);
    }
    return 0.0;
  }

  json descriptor() const
  {
    switch (kind_) {
      case Kind::power: return {{"type", "power"}, {"exponent", param_}, {"scale", scale_}};
      case Kind::log_power: return {{"type", "log_power"}, {"beta", param_}, {"scale", scale_}};
      case Kind::table: return {{"type", "table"}, {"t", t_}, {"w", w_}};
      case Kind::custom: return {{"type", "custom"}, {"label", label_}};
    }
    return {};
  }

  static Modulus from_json(const json& j)
  {
    const std::string type = j.at("type").get<std::string>();
    if (type == "power") return power(j.at("exponent").get<double>(), j.value("scale", 1.0));
    if (type == "log_power") return log_power(j.at("beta").get<double>(), j.value("scale", 1.0));
    if (type == "table") return table(j.at("t").get<std::vector<double>>(), j.at("w").get<std::vector<double>>());
    throw std::invalid_argument("unknown modulus type '" + type + "'");
  }

 private:
  explicit Modulus(Kind k) : kind_(k) {}

  void validate() const
  {
    if (!(scale_ > 0.0) || !std::isfinite(scale_)) throw std::invalid_argument("modulus scale must be positive");
    const double at_one = (*this)(1.0);
    if (!(at_one > 0.0) || !std::isfinite(at_one)) throw std::invalid_argument("modulus must satisfy 0 < omega(1) < inf");
    double prev = -1.0;
    for (int j = 60; j >= 0; --j) {
      const double v = (*this)(std::ldexp(1.0, -j));
      if (!(v >= 0.0) || v < prev) throw std::invalid_argument("modulus must be non-negative and nondecreasing");
      prev = v;
    }
  }

  Kind kind_;
  double param_ = 1.0;
  double scale_ = 1.0;
  std::vector<double> t_, w_;
  std::function<double(double)> fn_;
  std::string label_;
};

/// Value of a Dini-type integral together with its dyadic-sum proxy.
struct DiniResult {
  double value = 0.0;       ///< +inf when divergence is declared
  double dyadic_sum = 0.0;  ///< sum_{j=0..60} omega(2^-j)^a (1 + j ln 2)^k
  bool converged = true;
};

namespace detail {

inline constexpr int kDiniLevels = 60;
inline constexpr int kDiniNodes = 100000;
inline constexpr double kDiniTailThreshold = 1e-3;

// int_0^1 omega(t)^a (1 + log 1/t)^k dt/t, via u = log(1/t).
inline DiniResult dini_quadrature(const Modulus& omega, double a, int k)
{
  const double upper = kDiniLevels * std::log(2.0);
  auto integrand = [&](double u) {
    const double w = omega(std::exp(-u));
    return (w > 0.0 ? std::pow(w, a) : 0.0) * (k == 0 ? 1.0 : std::pow(1.0 + u, k));
  };
  const double du = upper / (kDiniNodes - 1);
  double total = 0.0, last_block = 0.0;
  const double last_block_start = upper - std::log(2.0);
  double prev = integrand(0.0);
  for (int i = 1; i < kDiniNodes; ++i) {
    const double u = i * du;
    const double cur = integrand(u);
    const double piece = 0.5 * du * (prev + cur);
    total += piece;
    if (u > last_block_start) last_block += piece;
    prev = cur;
  }

  DiniResult r;
  for (int j = 0; j <= kDiniLevels; ++j) r.dyadic_sum += integrand(j * std::log(2.0));

  // Cauchy test: the partial integral still grows by more than the threshold over the last dyadic block.
  if (last_block > kDiniTailThreshold) {
    r.value = kInf;
    r.converged = false;
    return r;
  }
  // Tail beyond the cutoff from a local power-law fit g(u) ~ c (1+u)^{-p}.
  const double g_end = integrand(upper), g_mid = integrand(0.5 * upper);
  double tail = 0.0;
  if (g_end > 0.0 && g_mid > 0.0) {
    const double p = std::log(g_mid / g_end) / std::log((1.0 + upper) / (1.0 + 0.5 * upper));
    if (p <= 1.0) {
      r.value = kInf;
      r.converged = false;
      return r;
    }
    tail = g_end * (1.0 + upper) / (p - 1.0);
  }
  r.value = total + tail;
  return r;
}

}  // namespace detail

/// int_0^1 omega(t)^a dt / t.
inline DiniResult dini_integral(const Modulus& omega, double a)
{
  if (!(a > 0.0)) throw std::invalid_argument("Dini exponent a must be positive");
  return detail::dini_quadrature(omega, a, 0);
}

/// int_0^1 omega(t)^a (1 + log 1/t)^k dt / t.
inline DiniResult log_dini_integral(const Modulus& omega, double a, int k)
{
  if (!(a > 0.0)) throw std::invalid_argument("Dini exponent a must be positive");
  if (k < 1) throw std::invalid_argument("log-Dini power k must be at least 1");
  return detail::dini_quadrature(omega, a, k);
}

// ---------------------------------------------------------------------------------------------
// Kernels
// ---------------------------------------------------------------------------------------------

/// m-linear fractional kernel K(x, y_1, ..., y_m) on R^n, n <= 2.
///
/// Kernels whose value depends only on s = sum_j |x - y_j| carry a radial profile phi(s);
/// the operator code uses it for table-driven evaluation.
class Kernel {
 public:
  using Eval = std::function<double(const Point&, std::span<const Point>)>;
  using Profile = std::function<double(double)>;

  Kernel(int m, int n, double alpha, double size_constant, Modulus modulus, Eval eval, std::optional<Profile> profile,
         json descriptor)
      : m_(m), n_(n), alpha_(alpha), size_constant_(size_constant), modulus_(std::move(modulus)),
        eval_(std::move(eval)), profile_(std::move(profile)), descriptor_(std::move(descriptor))
  {
    if (m < 1) throw std::invalid_argument("kernel arity must be at least 1");
    if (n != 1 && n != 2) throw std::invalid_argument("kernel dimension must be 1 or 2");
    if (!(alpha > 0.0 && alpha < m * n)) throw std::invalid_argument("kernel order alpha must lie in (0, mn)");
    if (!(size_constant > 0.0)) throw std::invalid_argument("kernel size constant must be positive");
  }

  int arity() const noexcept { return m_; }
  int dim() const noexcept { return n_; }
  double alpha() const noexcept { return alpha_; }
  /// mn - alpha.
  double homogeneity() const noexcept { return m_ * n_ - alpha_; }
  double size_constant() const noexcept { return size_constant_; }
  const Modulus& modulus() const noexcept { return modulus_; }
  const std::optional<Profile>& profile() const noexcept { return profile_; }
  const json& descriptor() const noexcept { return descriptor_; }

  /// Off-diagonal evaluation; callers never pass x == y_j for all j.
  double operator()(const Point& x, std::span<const Point> ys) const { return eval_(x, ys); }

  double distance_sum(const Point& x, std::span<const Point> ys) const
  {
    double s = 0.0;
    for (const Point& y : ys) s += distance(x, y, n_);
    return s;
  }

  /// c K, with size constant c A.
  Kernel scaled(double c) const
  {
    if (!(c > 0.0)) throw std::invalid_argument("kernel scale must be positive");
    Eval e = [inner = eval_, c](const Point& x, std::span<const Point> ys) { return c * inner(x, ys); };
    std::optional<Profile> p;
    if (profile_) p = [inner = *profile_, c](double s) { return c * inner(s); };
    json d = {{"type", "scaled"}, {"factor", c}, {"kernel", descriptor_}};
    return Kernel(m_, n_, alpha_, c * size_constant_, modulus_, std::move(e), std::move(p), std::move(d));
  }

  Kernel with_regularity(Modulus modulus) const
  {
    Kernel k = *this;
    k.modulus_ = std::move(modulus);
    return k;
  }

 private:
  int m_;
  int n_;
  double alpha_;
  double size_constant_;
  Modulus modulus_;
  Eval eval_;
  std::optional<Profile> profile_;
  json descriptor_;
};

/// Slot of a smoothness estimate: 0 is the x variable, j >= 1 is y_j.
struct KernelSlot {
  int index = 0;
  static KernelSlot x() { return {0}; }
  static KernelSlot y(int j) { return {j}; }
};

namespace detail {

inline constexpr std::uint64_t kSizeStream = 0x51ce;
inline constexpr std::uint64_t kRegularityStream = 0x7e9a;
inline constexpr std::uint64_t kDefaultKernelSeed = 20240229;
inline constexpr int kCalibrationSamples = 20000;

inline Point random_point(Rng& rng, int n)
{
  Point p{rng.uniform(-1.0, 1.0), 0.0};
  if (n == 2) p[1] = rng.uniform(-1.0, 1.0);
  return p;
}

inline Point random_direction(Rng& rng, int n)
{
  if (n == 1) return {rng.uniform() < 0.5 ? -1.0 : 1.0, 0.0};
  const double th = rng.uniform(0.0, 6.283185307179586);
  return {std::cos(th), std::sin(th)};
}

}  // namespace detail

/// sup over random off-diagonal samples of |K| (sum_j |x - y_j|)^{mn - alpha}. Deterministic in seed;
/// the first k samples of a larger run are exactly the samples of a k-sample run.
inline double verify_size(const Kernel& k, int samples, std::uint64_t seed = detail::kDefaultKernelSeed)
{
  double best = 0.0;
  std::vector<Point> ys(static_cast<std::size_t>(k.arity()));
  for (int i = 0; i < samples; ++i) {
    Rng rng(derive_seed(seed, detail::kSizeStream, static_cast<std::uint64_t>(i)));
    // Random scale so that both the near-diagonal and far regimes are probed.
    const double scale = std::ldexp(1.0, static_cast<int>(rng.below(25)) - 12);
    Point x = detail::random_point(rng, k.dim());
    for (auto& y : ys) {
      const Point d = detail::random_point(rng, k.dim());
      y = {x[0] + scale * d[0], x[1] + scale * d[1]};
    }
    const double s = k.distance_sum(x, ys);
    if (!(s > 0.0)) continue;
    best = std::max(best, std::abs(k(x, ys)) * std::pow(s, k.homogeneity()));
  }
  return best;
}

/// Empirical constant of the smoothness estimate in the given slot against modulus omega:
/// sup |K(.., z, ..) - K(.., z', ..)| s^{mn - alpha} / omega(|z - z'| / s) over samples with
/// |z - z'| <= max_j |x - y_j| / 2. Returns +inf if omega vanishes where the kernel moves.
inline double verify_regularity(const Kernel& k, const Modulus& omega, KernelSlot slot, int samples,
                                std::uint64_t seed = detail::kDefaultKernelSeed)
{
  if (slot.index < 0 || slot.index > k.arity())
    throw std::invalid_argument("kernel slot " + std::to_string(slot.index) + " out of range");
  double best = 0.0;
  const int n = k.dim();
  std::vector<Point> ys(static_cast<std::size_t>(k.arity())), ys2;
  for (int i = 0; i < samples; ++i) {
    Rng rng(derive_seed(seed, detail::kRegularityStream + static_cast<std::uint64_t>(slot.index),
                        static_cast<std::uint64_t>(i)));
    const Point x = detail::random_point(rng, n);
    double max_d = 0.0;
    for (auto& y : ys) {
      y = detail::random_point(rng, n);
      max_d = std::max(max_d, distance(x, y, n));
    }
    if (!(max_d > 0.0)) continue;
    // Bias towards small displacements, where the modulus matters most.
    const double u = rng.uniform();
    const double t = 0.5 * max_d * std::max(u * u * u, 1e-9);
    const Point dir = detail::random_direction(rng, n);
    const double s = k.distance_sum(x, ys);
    const double base = k(x, ys);
    double moved = 0.0;
    if (slot.index == 0) {
      const Point x2{x[0] + t * dir[0], x[1] + t * dir[1]};
      if (!(k.distance_sum(x2, ys) > 0.0)) continue;
      moved = k(x2, ys);
    } else {
      ys2 = ys;
      Point& y = ys2[static_cast<std::size_t>(slot.index - 1)];
      y = {y[0] + t * dir[0], y[1] + t * dir[1]};
      if (!(k.distance_sum(x, ys2) > 0.0)) continue;
      moved = k(x, ys2);
    }
    const double diff = std::abs(base - moved) * std::pow(s, k.homogeneity());
    const double w = omega(t / s);
    if (w <= 0.0) {
      if (diff > 0.0) return kInf;
      continue;
    }
    best = std::max(best, diff / w);
  }
  return best;
}

namespace detail {

inline Kernel radial_kernel(int m, int n, double alpha, double size_constant, Modulus modulus,
                            Kernel::Profile profile, json descriptor)
{
  Kernel::Eval eval = [profile, n](const Point& x, std::span<const Point> ys) {
    double s = 0.0;
    for (const Point& y : ys) s += distance(x, y, n);
    return profile(s);
  };
  return Kernel(m, n, alpha, size_constant, std::move(modulus), std::move(eval), std::move(profile),
                std::move(descriptor));
}

}  // namespace detail

/// Prototype kernel (sum_j |x - y_j|)^{alpha - mn} with A = 1 and a Lipschitz modulus c t whose
/// constant c is calibrated over all slots with verify_regularity.
inline Kernel riesz_kernel(int m, int n, double alpha)
{
  if (m < 1 || (n != 1 && n != 2)) throw std::invalid_argument("riesz kernel needs m >= 1 and n in {1, 2}");
  if (!(alpha > 0.0 && alpha < m * n)) throw std::invalid_argument("riesz kernel order alpha must lie in (0, mn)");
  const double expo = alpha - m * n;
  json d = {{"type", "riesz"}, {"m", m}, {"n", n}, {"alpha", alpha}};
  Kernel k = detail::radial_kernel(
      m, n, alpha, 1.0, Modulus::power(1.0), [expo](double s) { return std::pow(s, expo); }, d);
  double c = 0.0;
  for (int slot = 0; slot <= m; ++slot)
    c = std::max(c, verify_regularity(k, Modulus::power(1.0), KernelSlot{slot}, detail::kCalibrationSamples));
  return k.with_regularity(Modulus::power(1.0, c));
}

/// Kernel that claims the riesz size constant A = 1 but decays like s^{alpha - mn - excess}:
/// a fault-injection case whose size estimate fails near the diagonal.
inline Kernel broken_kernel(int m, int n, double alpha, double excess)
{
  if (!(excess > 0.0)) throw std::invalid_argument("broken kernel excess must be positive");
  const double expo = alpha - m * n - excess;
  json d = {{"type", "broken"}, {"m", m}, {"n", n}, {"alpha", alpha}, {"excess", excess}};
  return detail::radial_kernel(
      m, n, alpha, 1.0, Modulus::power(1.0), [expo](double s) { return std::pow(s, expo); }, std::move(d));
}

/// Pointwise sum of kernels with the same (m, n, alpha); size constants add.
inline Kernel sum_kernel(const std::vector<Kernel>& terms)
{
  if (terms.empty()) throw std::invalid_argument("sum kernel needs at least one term");
  const Kernel& first = terms.front();
  json parts = json::array();
  bool radial = true;
  double a = 0.0;
  for (const Kernel& t : terms) {
    if (t.arity() != first.arity() || t.dim() != first.dim() || t.alpha() != first.alpha())
      throw std::invalid_argument("sum kernel terms must share m, n and alpha");
    radial = radial && t.profile().has_value();
    a += t.size_constant();
    parts.push_back(t.descriptor());
  }
  Kernel::Eval eval = [terms](const Point& x, std::span<const Point> ys) {
    double v = 0.0;
    for (const Kernel& t : terms) v += t(x, ys);
    return v;
  };
  std::optional<Kernel::Profile> profile;
  if (radial)
    profile = [terms](double s) {
      double v = 0.0;
      for (const Kernel& t : terms) v += (*t.profile())(s);
      return v;
    };
  // Same-homogeneity terms share the worst modulus scale.
  const Modulus* worst = &first.modulus();
  for (const Kernel& t : terms)
    if (t.modulus()(1.0) > (*worst)(1.0)) worst = &t.modulus();
  return Kernel(first.arity(), first.dim(), first.alpha(), a, *worst, std::move(eval), std::move(profile),
                json{{"type", "sum"}, {"terms", parts}});
}

/// Builds a kernel from its JSON descriptor {type, params...}.
inline Kernel kernel_from_json(const json& j)
{
  const std::string type = j.at("type").get<std::string>();
  if (type == "riesz") return riesz_kernel(j.at("m").get<int>(), j.at("n").get<int>(), j.at("alpha").get<double>());
  if (type == "broken")
    return broken_kernel(j.at("m").get<int>(), j.at("n").get<int>(), j.at("alpha").get<double>(),
                         j.value("excess", 2.0));
  if (type == "scaled") return kernel_from_json(j.at("kernel")).scaled(j.at("factor").get<double>());
  if (type == "sum") {
    std::vector<Kernel> terms;
    for (const auto& t : j.at("terms")) terms.push_back(kernel_from_json(t));
    return sum_kernel(terms);
  }
  throw std::invalid_argument("unknown kernel type '" + type + "' (expected riesz, broken, scaled or sum)");
}

// ---------------------------------------------------------------------------------------------
// Frozen-variable tail integral for m = 2
// ---------------------------------------------------------------------------------------------

struct TailIntegral {
  double lhs = 0.0;             ///< int_{R^n} (a + |t|)^{-(2n - alpha)} dt
  double bound_constant = 0.0;  ///< lhs * a^{n - alpha}
};

/// int_{R^n} (a + |t|)^{-(2n - alpha)} dt, with a = |x - y_1| the frozen distance.
/// Radial Gauss-Legendre quadrature on geometric panels up to R = 1e6 a plus the closed-form tail.
inline TailIntegral tail_integral_check(int n, int m, double alpha, double a)
{
  if (m != 2) throw std::invalid_argument("tail integral check is implemented for m = 2");
  if (n != 1 && n != 2) throw std::invalid_argument("tail integral check needs n in {1, 2}");
  if (!(alpha > 0.0)) throw std::invalid_argument("alpha must be positive");
  if (alpha >= n) throw std::invalid_argument("tail integral bound requires alpha < n");
  if (!(a > 0.0)) throw std::invalid_argument("frozen distance a must be positive");

  const double beta = 2.0 * n - alpha;
  const double sphere = n == 1 ? 2.0 : 2.0 * 3.141592653589793;
  auto f = [&](double r) { return std::pow(r, n - 1) * std::pow(a + r, -beta); };

  static constexpr double gx[8] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                   -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                   0.7966664774136267,  0.9602898564975363};
  static constexpr double gw[8] = {0.1012285362903763, 0.2223810344533745, 0.3137066483856798,
                                   0.3626837833783620, 0.3626837833783620, 0.3137066483856798,
                                   0.2223810344533745, 0.1012285362903763};
  auto panel = [&](double lo, double hi) {
    const double c = 0.5 * (lo + hi), r = 0.5 * (hi - lo);
    double s = 0.0;
    for (int i = 0; i < 8; ++i) s += gw[i] * f(c + r * gx[i]);
    return s * r;
  };

  // Panels [0, a/64], then geometric with ratio 2^{1/8} up to R.
  const double big_r = 1e6 * a;
  double total = 0.0;
  double lo = 0.0, hi = a / 64.0;
  const double ratio = std::exp2(0.125);
  while (lo < big_r) {
    total += panel(lo, hi);
    lo = hi;
    hi = std::min(hi * ratio, big_r);
  }
  // Closed-form tails beyond R.
  double tail = 0.0;
  if (n == 1) {
    tail = std::pow(a + big_r, 1.0 - beta) / (beta - 1.0);
  } else {
    tail = std::pow(a + big_r, 2.0 - beta) / (beta - 2.0) - a * std::pow(a + big_r, 1.0 - beta) / (beta - 1.0);
  }
  TailIntegral out;
  out.lhs = sphere * (total + tail);
  out.bound_constant = out.lhs * std::pow(a, n - alpha);
  return out;
}

}  // namespace mfcz

#endif  // MFCZ_KERNEL_HPP
