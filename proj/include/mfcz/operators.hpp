#ifndef MFCZ_OPERATORS_HPP
#define MFCZ_OPERATORS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cube_sweep.hpp"
#include "grid.hpp"
#include "kernel.hpp"
#include "parallel.hpp"

namespace mfcz {

// ---------------------------------------------------------------------------------------------
// The multilinear fractional operator
// ---------------------------------------------------------------------------------------------

struct OperatorOutput {
  GridFunction result;
  /// Estimated magnitude of the omitted diagonal cell: A prod ||f_j||_inf c h^alpha.
  double bias_bound = 0.0;
};

struct ApplyOptions {
  /// Lift the desk-scale size caps.
  bool allow_large = false;
  int threads = 1;
  /// Sub-cells per axis used on near-diagonal cells; 0 picks 16 in 1D and 4 in 2D.
  int near_subdivisions = 0;
};

namespace detail {

inline int near_subdivisions(const ApplyOptions& o, int n)
{
  if (o.near_subdivisions > 0) return o.near_subdivisions;
  return n == 1 ? 16 : 4;
}

inline void check_operator_inputs(const Kernel& k, std::span<const GridFunction> fs)
{
  if (static_cast<int>(fs.size()) != k.arity())
    throw std::invalid_argument("kernel arity " + std::to_string(k.arity()) + " does not match " +
                                std::to_string(fs.size()) + " input functions");
  for (const auto& f : fs) {
    require_same_grid(fs[0], f);
    if (f.grid().dim() != k.dim()) throw std::invalid_argument("kernel dimension does not match the grid");
  }
}

inline void check_operator_cap(const Grid& g, int m, const ApplyOptions& o)
{
  if (o.allow_large) return;
  const int n = g.cells_per_side();
  int cap = 0;
  if (m == 1) cap = g.dim() == 1 ? 16384 : 128;
  else if (m == 2) cap = g.dim() == 1 ? 512 : 32;
  else cap = g.dim() == 1 ? 64 : 8;
  if (n > cap)
    throw ResourceCapExceeded("operator with m = " + std::to_string(m) + " on " + std::to_string(n) +
                              " cells per side exceeds the desk-scale cap of " + std::to_string(cap));
}

inline double diagonal_bias(const Kernel& k, std::span<const GridFunction> fs)
{
  const Grid& g = fs[0].grid();
  const int n = g.dim();
  double prod = k.size_constant();
  for (const auto& f : fs) prod *= f.max_abs();
  const double sphere = n == 1 ? 2.0 : 2.0 * 3.141592653589793;
  const double c = k.arity() * sphere * std::pow(std::sqrt(static_cast<double>(n)) / 2.0, k.alpha()) / k.alpha();
  return prod * c * std::pow(g.h(), k.alpha());
}

/// Cell relation to an evaluation point: its own cell (omitted), a near neighbour (sub-cell
/// quadrature), or far (one midpoint evaluation).
enum class CellRelation { diagonal, near, far };

inline CellRelation relate(const Grid& g, const Point& x, std::size_t cell)
{
  const Point c = g.center(cell);
  bool diag = true, near = true;
  for (int a = 0; a < g.dim(); ++a) {
    const double d = std::abs(c[a] - x[a]);
    diag = diag && d <= 1e-12 * g.h();
    near = near && d <= 1.5 * g.h() * (1.0 + 1e-9);
  }
  return diag ? CellRelation::diagonal : near ? CellRelation::near : CellRelation::far;
}

/// Integral of K(x, .) over a product of near cells, by midpoint sub-cells.
inline double near_tuple_weight(const Kernel& k, const Grid& g, const Point& x, std::span<const std::size_t> cells,
                                int sub)
{
  const int m = k.arity(), n = g.dim();
  const double hs = g.h() / sub;
  const int per_cell = n == 1 ? sub : sub * sub;
  std::vector<int> idx(static_cast<std::size_t>(m), 0);
  std::vector<Point> ys(static_cast<std::size_t>(m));
  const double vol = std::pow(n == 1 ? hs : hs * hs, m);
  double total = 0.0;
  while (true) {
    for (int j = 0; j < m; ++j) {
      const Point c = g.center(cells[j]);
      const int a0 = idx[j] % sub, a1 = idx[j] / sub;
      ys[j] = {c[0] - 0.5 * g.h() + (a0 + 0.5) * hs, n == 2 ? c[1] - 0.5 * g.h() + (a1 + 0.5) * hs : 0.0};
    }
    if (k.distance_sum(x, ys) > 0.0) total += k(x, ys);
    int j = 0;
    while (j < m && ++idx[j] == per_cell) idx[j++] = 0;
    if (j == m) break;
  }
  return total * vol;
}

/// T(f)(x) at an arbitrary point by enumerating cell tuples with non-zero input product.
inline double apply_at_point(const Kernel& k, std::span<const GridFunction> fs, const Point& x, int sub)
{
  const Grid& g = fs[0].grid();
  const int m = k.arity();
  const double cell_vol = std::pow(g.cell_volume(), m);
  std::vector<std::vector<std::size_t>> support(static_cast<std::size_t>(m));
  std::vector<CellRelation> rel(g.cell_count());
  for (std::size_t c = 0; c < g.cell_count(); ++c) rel[c] = relate(g, x, c);
  for (int j = 0; j < m; ++j)
    for (std::size_t c = 0; c < g.cell_count(); ++c)
      if (fs[j][c] != 0.0 && rel[c] != CellRelation::diagonal) support[j].push_back(c);
  for (const auto& s : support)
    if (s.empty()) return 0.0;

  std::vector<std::size_t> pos(static_cast<std::size_t>(m), 0), cells(static_cast<std::size_t>(m));
  std::vector<Point> ys(static_cast<std::size_t>(m));
  double total = 0.0;
  while (true) {
    double prod = 1.0;
    bool all_near = true;
    for (int j = 0; j < m; ++j) {
      cells[j] = support[j][pos[j]];
      prod *= fs[j][cells[j]];
      ys[j] = g.center(cells[j]);
      all_near = all_near && rel[cells[j]] == CellRelation::near;
    }
    if (all_near) total += prod * near_tuple_weight(k, g, x, cells, sub);
    else total += prod * k(x, ys) * cell_vol;
    int j = 0;
    while (j < m && ++pos[j] == support[j].size()) pos[j++] = 0;
    if (j == m) break;
  }
  return total;
}

/// Radial kernels in one dimension: with d_j = |i_j - x| in cells, T(x) = sum_s w[s] G[s] where
/// G is the m-fold convolution of the distance histograms of the inputs. w[m] is the near weight.
inline GridFunction apply_radial_1d(const Kernel& k, std::span<const GridFunction> fs, int sub, int threads)
{
  const Grid& g = fs[0].grid();
  const int n_cells = g.cells_per_side(), m = k.arity();
  const auto& phi = *k.profile();
  const double hm = std::pow(g.h(), m);
  std::vector<double> w(static_cast<std::size_t>(m * (n_cells - 1) + 1), 0.0);
  for (std::size_t s = 1; s < w.size(); ++s) w[s] = phi(static_cast<double>(s) * g.h()) * hm;
  {
    // All y_j in the right-hand neighbour; by reflection symmetry this covers every near tuple.
    const Point x = g.center(std::size_t{0});
    std::vector<std::size_t> cells(static_cast<std::size_t>(m), 1);
    w[static_cast<std::size_t>(m)] = near_tuple_weight(k, g, x, cells, sub);
  }
  std::vector<double> out(g.cell_count(), 0.0);
  parallel_for(g.cell_count(), threads, [&](std::size_t xi) {
    const int x = static_cast<int>(xi);
    std::vector<double> acc, hist, next;
    for (int j = 0; j < m; ++j) {
      hist.assign(static_cast<std::size_t>(n_cells), 0.0);
      for (int i = 0; i < n_cells; ++i)
        if (i != x) hist[static_cast<std::size_t>(std::abs(i - x))] += fs[j][static_cast<std::size_t>(i)];
      if (j == 0) {
        acc = hist;
        continue;
      }
      next.assign(acc.size() + hist.size() - 1, 0.0);
      for (std::size_t a = 1; a < acc.size(); ++a) {
        if (acc[a] == 0.0) continue;
        for (std::size_t b = 1; b < hist.size(); ++b) next[a + b] += acc[a] * hist[b];
      }
      acc.swap(next);
    }
    double t = 0.0;
    for (std::size_t s = 1; s < acc.size(); ++s) t += w[s] * acc[s];
    out[xi] = t;
  });
  return GridFunction(g, std::move(out));
}

}  // namespace detail

/// T(f_1, ..., f_m)(x) = int K(x, y) prod f_j(y_j) dy at every cell centre.
///
/// Tuples with some y_j in the cell of x are omitted; tuples whose cells all neighbour x are
/// integrated on sub-cells; everything else uses one midpoint evaluation per cell tuple.
inline OperatorOutput apply_T(const Kernel& k, std::span<const GridFunction> fs, const ApplyOptions& opts = {})
{
  detail::check_operator_inputs(k, fs);
  const Grid& g = fs[0].grid();
  detail::check_operator_cap(g, k.arity(), opts);
  const int sub = detail::near_subdivisions(opts, g.dim());
  OperatorOutput out{GridFunction(g), detail::diagonal_bias(k, fs)};
  if (g.dim() == 1 && k.profile()) {
    out.result = detail::apply_radial_1d(k, fs, sub, opts.threads);
    return out;
  }
  std::vector<double> v(g.cell_count(), 0.0);
  parallel_for(g.cell_count(), opts.threads,
               [&](std::size_t c) { v[c] = detail::apply_at_point(k, fs, g.center(c), sub); });
  out.result = GridFunction(g, std::move(v));
  return out;
}

/// T(f)(x) at an arbitrary point of the box (the cell whose centre equals x, if any, is omitted).
inline double apply_T_at(const Kernel& k, std::span<const GridFunction> fs, const Point& x,
                         const ApplyOptions& opts = {})
{
  detail::check_operator_inputs(k, fs);
  const Grid& g = fs[0].grid();
  return detail::apply_at_point(k, fs, x, detail::near_subdivisions(opts, g.dim()));
}

// ---------------------------------------------------------------------------------------------
// Maximal functions
// ---------------------------------------------------------------------------------------------

namespace detail {

inline std::vector<GridFunction> powered_abs(std::span<const GridFunction> fs, double r)
{
  std::vector<GridFunction> out;
  out.reserve(fs.size());
  for (const auto& f : fs)
    out.push_back(r == 1.0 ? f.abs() : f.map([r](double v) { return std::pow(std::abs(v), r); }));
  return out;
}

inline void require_common_grid(std::span<const GridFunction> fs)
{
  if (fs.empty()) throw std::invalid_argument("at least one input function is required");
  for (const auto& f : fs) require_same_grid(fs[0], f);
}

/// sup_Q |Q|^{alpha/n} prod_j (avg_Q g_j)^{1/r} for non-negative g_j.
inline GridFunction product_of_averages_sup(std::span<const GridFunction> gs, double alpha, double r, CubeMode mode)
{
  const Grid& grid = gs[0].grid();
  std::vector<WindowSum> sums;
  sums.reserve(gs.size());
  for (const auto& g : gs) sums.emplace_back(g);
  const double expo = alpha / grid.dim();
  return sup_over_cubes(
      grid, mode, [&] { for (auto& s : sums) s.grow(); },
      [&](const Cube& q) {
        const double cnt = static_cast<double>(q.cell_count(grid.dim()));
        double prod = 1.0;
        for (const auto& s : sums) {
          const double avg = s.at(q.corner) / cnt;
          prod *= r == 1.0 ? avg : std::pow(avg, 1.0 / r);
        }
        return alpha == 0.0 ? prod : std::pow(q.measure(grid), expo) * prod;
      });
}

inline double llogl_modular(std::span<const double> values, double lambda)
{
  double s = 0.0;
  for (double v : values) {
    const double t = std::abs(v) / lambda;
    s += t * std::log(2.718281828459045 + t);
  }
  return s / static_cast<double>(values.size());
}

/// Luxemburg L log L average of a list of cell values.
inline double llogl_average(std::span<const double> values)
{
  double top = 0.0;
  for (double v : values) top = std::max(top, std::abs(v));
  if (top == 0.0) return 0.0;
  double lo = 1e-12 * top, hi = 1e6 * top;
  // Geometric bisection until the bracket is within a factor 2, then arithmetic.
  for (int it = 0; it < 400 && hi - lo > 1e-10 * hi; ++it) {
    const double mid = hi > 2.0 * lo ? std::sqrt(lo * hi) : 0.5 * (lo + hi);
    if (llogl_modular(values, mid) > 1.0) lo = mid;
    else hi = mid;
  }
  return hi;
}

inline void gather(const GridFunction& f, const Cube& q, std::vector<double>& buf)
{
  buf.clear();
  q.for_each_cell(f.grid(), [&](std::size_t k) { buf.push_back(f[k]); });
}

}  // namespace detail

/// Multilinear fractional maximal function sup_{Q containing x} |Q|^{alpha/n} prod_j avg_Q |f_j|.
inline GridFunction multilinear_frac_maximal(std::span<const GridFunction> fs, double alpha,
                                             CubeMode mode = CubeMode::full)
{
  detail::require_common_grid(fs);
  const int mn = static_cast<int>(fs.size()) * fs[0].grid().dim();
  if (!(alpha >= 0.0 && alpha < mn)) throw std::invalid_argument("alpha must lie in [0, mn)");
  const auto gs = detail::powered_abs(fs, 1.0);
  return detail::product_of_averages_sup(gs, alpha, 1.0, mode);
}

/// Hardy-Littlewood maximal function.
inline GridFunction hl_maximal(const GridFunction& f, CubeMode mode = CubeMode::full)
{
  return multilinear_frac_maximal(std::span<const GridFunction>(&f, 1), 0.0, mode);
}

/// Fractional maximal function sup_Q |Q|^{alpha/n} avg_Q |f|, 0 < alpha < n.
inline GridFunction frac_maximal(const GridFunction& f, double alpha, CubeMode mode = CubeMode::full)
{
  if (!(alpha > 0.0 && alpha < f.grid().dim())) throw std::invalid_argument("fractional order must lie in (0, n)");
  return multilinear_frac_maximal(std::span<const GridFunction>(&f, 1), alpha, mode);
}

/// sup_Q |Q|^{alpha/n} prod_j (avg_Q |f_j|^r)^{1/r}, r > 1.
inline GridFunction multilinear_frac_maximal_r(std::span<const GridFunction> fs, double alpha, double r,
                                               CubeMode mode = CubeMode::full)
{
  detail::require_common_grid(fs);
  if (!(r > 1.0)) throw std::invalid_argument("power r must exceed 1");
  const int mn = static_cast<int>(fs.size()) * fs[0].grid().dim();
  if (!(alpha >= 0.0 && alpha < mn)) throw std::invalid_argument("alpha must lie in [0, mn)");
  const auto gs = detail::powered_abs(fs, r);
  return detail::product_of_averages_sup(gs, alpha, r, mode);
}

/// M_delta f = M(|f|^delta)^{1/delta}.
inline GridFunction m_delta(const GridFunction& f, double delta, CubeMode mode = CubeMode::full)
{
  if (!(delta > 0.0)) throw std::invalid_argument("delta must be positive");
  const GridFunction g = delta == 1.0 ? f.abs() : f.map([delta](double v) { return std::pow(std::abs(v), delta); });
  const GridFunction mg = hl_maximal(g, mode);
  return delta == 1.0 ? mg : mg.map([delta](double v) { return std::pow(v, 1.0 / delta); });
}

/// Sharp maximal function in mean-oscillation form; delta < 1 gives M^#(|f|^delta)^{1/delta}.
inline GridFunction sharp_maximal(const GridFunction& f, double delta = 1.0, CubeMode mode = CubeMode::full)
{
  if (!(delta > 0.0 && delta <= 1.0)) throw std::invalid_argument("delta must lie in (0, 1]");
  const GridFunction g = delta == 1.0 ? f : f.map([delta](double v) { return std::pow(std::abs(v), delta); });
  const Grid& grid = g.grid();
  WindowSum sums(g);
  const GridFunction osc = sup_over_cubes(
      grid, mode, [&] { sums.grow(); },
      [&](const Cube& q) {
        const double cnt = static_cast<double>(q.cell_count(grid.dim()));
        const double mean = sums.at(q.corner) / cnt;
        double dev = 0.0;
        q.for_each_cell(grid, [&](std::size_t k) { dev += std::abs(g[k] - mean); });
        return dev / cnt;
      });
  return delta == 1.0 ? osc : osc.map([delta](double v) { return std::pow(v, 1.0 / delta); });
}

/// Luxemburg average ||f||_{L log L, Q} = inf{lambda > 0 : avg_Q (|f|/lambda) log(e + |f|/lambda) <= 1}.
inline double orlicz_llogl_average(const GridFunction& f, const Cube& q)
{
  if (!q.inside(f.grid())) throw std::out_of_range("cube lies outside the grid");
  std::vector<double> buf;
  detail::gather(f, q, buf);
  return detail::llogl_average(buf);
}

/// Slot selector for the L log L maximal functions.
struct LlogLSlots {
  static constexpr int all = -1;
  int slot = all;
};

/// sup_Q |Q|^{alpha/n} prod_j a_j(Q), with a_j the L log L average in the selected slot(s)
/// and the plain average of |f_j| elsewhere.
inline GridFunction multilinear_frac_maximal_llogl(std::span<const GridFunction> fs, double alpha, LlogLSlots slots,
                                                   CubeMode mode = CubeMode::full)
{
  detail::require_common_grid(fs);
  const int m = static_cast<int>(fs.size());
  const Grid& grid = fs[0].grid();
  if (!(alpha >= 0.0 && alpha < m * grid.dim())) throw std::invalid_argument("alpha must lie in [0, mn)");
  if (slots.slot != LlogLSlots::all && (slots.slot < 0 || slots.slot >= m))
    throw std::invalid_argument("L log L slot " + std::to_string(slots.slot) + " out of range");
  const auto gs = detail::powered_abs(fs, 1.0);
  std::vector<WindowSum> sums;
  for (const auto& g : gs) sums.emplace_back(g);
  std::vector<double> buf;
  return sup_over_cubes(
      grid, mode, [&] { for (auto& s : sums) s.grow(); },
      [&](const Cube& q) {
        const double cnt = static_cast<double>(q.cell_count(grid.dim()));
        double prod = 1.0;
        for (int j = 0; j < m && prod != 0.0; ++j) {
          if (slots.slot == LlogLSlots::all || slots.slot == j) {
            detail::gather(gs[j], q, buf);
            prod *= detail::llogl_average(buf);
          } else {
            prod *= sums[j].at(q.corner) / cnt;
          }
        }
        return alpha == 0.0 ? prod : std::pow(q.measure(grid), alpha / grid.dim()) * prod;
      });
}

/// M^k f.
inline GridFunction iterated_maximal(const GridFunction& f, int k, CubeMode mode = CubeMode::full)
{
  if (k < 1) throw std::invalid_argument("iteration count must be at least 1");
  GridFunction out = hl_maximal(f, mode);
  for (int i = 1; i < k; ++i) out = hl_maximal(out, mode);
  return out;
}

}  // namespace mfcz

#endif  // MFCZ_OPERATORS_HPP
