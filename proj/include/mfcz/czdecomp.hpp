#ifndef MFCZ_CZDECOMP_HPP
#define MFCZ_CZDECOMP_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grid.hpp"
#include "io.hpp"

namespace mfcz {

/// One bad piece b_k = (f - f_Q) chi_Q, stored on the full grid.
struct CZPiece {
  Cube cube;
  double average = 0.0;      ///< signed average f_Q
  double abs_average = 0.0;  ///< average of |f| on Q
  GridFunction piece;
};

struct CZDecomposition {
  GridFunction f;
  double height = 0.0;
  GridFunction good;
  std::vector<CZPiece> pieces;
  double selected_measure = 0.0;
};

namespace detail {

inline double abs_average(const GridFunction& f, const Cube& q)
{
  double s = 0.0;
  q.for_each_cell(f.grid(), [&](std::size_t k) { s += std::abs(f[k]); });
  return s / static_cast<double>(q.cell_count(f.grid().dim()));
}

inline void dyadic_children(const Cube& q, int dim, std::vector<Cube>& out)
{
  const int s = q.side / 2;
  for (int b1 = 0; b1 < (dim == 2 ? 2 : 1); ++b1)
    for (int b0 = 0; b0 < 2; ++b0) out.push_back(Cube{{q.corner[0] + b0 * s, q.corner[1] + b1 * s}, s});
}

}  // namespace detail

/// Dyadic stopping-time decomposition at the given height.
///
/// Descends from the whole box and selects the first dyadic cube whose average of |f| exceeds the
/// height. The box average itself must not exceed the height.
inline CZDecomposition cz_decompose(const GridFunction& f, double height)
{
  if (!(height > 0.0) || !std::isfinite(height)) throw std::invalid_argument("height must be positive and finite");
  const Grid& g = f.grid();
  const Cube box{{0, 0}, g.cells_per_side()};
  const double top = detail::abs_average(f, box);
  if (top > height)
    throw std::invalid_argument("height " + format_double(height) + " is below the box average " + format_double(top) +
                                " of |f|; the decomposition needs a larger height on this finite domain");

  CZDecomposition d{f, height, f, {}, 0.0};
  std::vector<double> good(f.values().begin(), f.values().end());
  std::vector<Cube> stack, kids;
  if (box.side > 1) detail::dyadic_children(box, g.dim(), stack);
  std::reverse(stack.begin(), stack.end());
  while (!stack.empty()) {
    const Cube q = stack.back();
    stack.pop_back();
    const double a = detail::abs_average(f, q);
    if (a > height) {
      const double mean = average_on_cube(f, q);
      std::vector<double> b(g.cell_count(), 0.0);
      q.for_each_cell(g, [&](std::size_t k) {
        b[k] = f[k] - mean;
        good[k] = mean;
      });
      d.pieces.push_back(CZPiece{q, mean, a, GridFunction(g, std::move(b))});
      d.selected_measure += q.measure(g);
      continue;
    }
    if (q.side == 1) continue;
    kids.clear();
    detail::dyadic_children(q, g.dim(), kids);
    for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
  }
  d.good = GridFunction(g, std::move(good));
  return d;
}

/// g + sum_k b_k.
inline GridFunction reconstruct(const CZDecomposition& d)
{
  std::vector<double> v(d.good.values().begin(), d.good.values().end());
  for (const auto& p : d.pieces) p.cube.for_each_cell(d.f.grid(), [&](std::size_t k) { v[k] += p.piece[k]; });
  return GridFunction(d.f.grid(), std::move(v));
}

/// Exponent bookkeeping for the height (lambda gamma)^{n/(mn - alpha)}.
struct CZExponents {
  int m = 1;
  int n = 1;
  double alpha = 0.5;
  double lambda = 1.0;
  double gamma = 1.0;

  double height() const { return std::pow(lambda * gamma, n / (m * n - alpha)); }
};

struct CZReport {
  std::size_t cube_count = 0;
  bool support_ok = true;       ///< every piece vanishes off its cube
  double mean_zero_max = 0.0;   ///< max_k |int b_k| / ||f||_1
  bool mean_zero_ok = true;
  double p3_constant = 0.0;     ///< max_k int|b_k| / (height |Q_k|); expected <= 2^{n+1}
  double p4_constant = 0.0;     ///< height sum_k |Q_k| / ||f||_1; expected <= 1
  double p5_constant = 0.0;     ///< ||b||_1 / ||f||_1; expected <= 2
  std::map<std::string, double> p6_constants;  ///< ||g||_s / (height^{1/s'} ||f||_1^{1/s}); expected <= 2^n
  double good_sup_ratio = 0.0;  ///< ||g||_inf / height; expected <= 2^n
  bool disjoint = true;
  bool maximal = true;          ///< dyadic parent average <= height < own average <= 2^n height
  double reconstruction_error = 0.0;
  bool pass = true;

  json to_json() const
  {
    return json{{"cube_count", cube_count},         {"support_ok", support_ok},
                {"mean_zero_max", mean_zero_max},   {"mean_zero_ok", mean_zero_ok},
                {"p3_constant", p3_constant},       {"p4_constant", p4_constant},
                {"p5_constant", p5_constant},       {"p6_constants", p6_constants},
                {"good_sup_ratio", good_sup_ratio}, {"disjoint", disjoint},
                {"maximal", maximal},               {"reconstruction_error", reconstruction_error},
                {"pass", pass}};
  }
};

inline CZReport verify_cz_properties(const CZDecomposition& d, const CZExponents& e)
{
  const double expected = e.height();
  if (std::abs(d.height - expected) > 1e-12 * expected)
    throw std::invalid_argument("decomposition height " + format_double(d.height) + " does not match (lambda gamma)^{n/(mn-alpha)} = " +
                                format_double(expected));
  const Grid& g = d.f.grid();
  const int n = g.dim();
  const double two_n = std::ldexp(1.0, n);
  const double f1 = lp_norm(d.f, 1.0);
  const double h = d.height;
  CZReport r;
  r.cube_count = d.pieces.size();

  std::vector<int> owner(g.cell_count(), -1);
  double bad_l1 = 0.0;
  for (std::size_t i = 0; i < d.pieces.size(); ++i) {
    const CZPiece& p = d.pieces[i];
    for (std::size_t k = 0; k < g.cell_count(); ++k)
      if (p.piece[k] != 0.0 && !p.cube.contains(g.index(k), n)) r.support_ok = false;
    p.cube.for_each_cell(g, [&](std::size_t k) {
      if (owner[k] >= 0) r.disjoint = false;
      owner[k] = static_cast<int>(i);
    });
    const double integral = integrate(p.piece);
    const double l1 = lp_norm(p.piece, 1.0);
    bad_l1 += l1;
    r.mean_zero_max = std::max(r.mean_zero_max, f1 > 0.0 ? std::abs(integral) / f1 : std::abs(integral));
    r.p3_constant = std::max(r.p3_constant, l1 / (h * p.cube.measure(g)));

    const double own = detail::abs_average(d.f, p.cube);
    if (!(own > h && own <= two_n * h * (1.0 + 1e-12))) r.maximal = false;
    if (p.cube.side < g.cells_per_side()) {
      const int ps = 2 * p.cube.side;
      const Cube parent{{p.cube.corner[0] / ps * ps, n == 2 ? p.cube.corner[1] / ps * ps : 0}, ps};
      if (detail::abs_average(d.f, parent) > h) r.maximal = false;
    }
  }
  r.mean_zero_ok = r.mean_zero_max <= 1e-10;
  r.p4_constant = f1 > 0.0 ? h * d.selected_measure / f1 : 0.0;
  r.p5_constant = f1 > 0.0 ? bad_l1 / f1 : 0.0;
  r.good_sup_ratio = d.good.max_abs() / h;
  for (double s : {1.0, 2.0, 4.0, kInf}) {
    const double gs = lp_norm(d.good, s);
    const double inv_sp = std::isinf(s) ? 1.0 : 1.0 - 1.0 / s;
    const double inv_s = std::isinf(s) ? 0.0 : 1.0 / s;
    const double denom = std::pow(h, inv_sp) * std::pow(f1, inv_s);
    r.p6_constants[std::isinf(s) ? "inf" : format_double(s)] = denom > 0.0 ? gs / denom : 0.0;
  }
  const GridFunction back = reconstruct(d);
  for (std::size_t k = 0; k < g.cell_count(); ++k)
    r.reconstruction_error = std::max(r.reconstruction_error, std::abs(back[k] - d.f[k]));

  bool p6_ok = true;
  for (const auto& [s, c] : r.p6_constants) p6_ok = p6_ok && c <= two_n * (1.0 + 1e-12);
  r.pass = r.support_ok && r.mean_zero_ok && r.disjoint && r.maximal && r.p3_constant <= 2.0 * two_n * (1.0 + 1e-12) &&
           r.p4_constant <= 1.0 + 1e-12 && r.p5_constant <= 2.0 + 1e-12 && p6_ok &&
           r.good_sup_ratio <= two_n * (1.0 + 1e-12) && r.reconstruction_error <= 1e-12;
  return r;
}

inline json cz_to_json(const CZDecomposition& d)
{
  json cubes = json::array();
  for (const auto& p : d.pieces)
    cubes.push_back(json{{"corner", {p.cube.corner[0], p.cube.corner[1]}}, {"side", p.cube.side}, {"average", p.average}});
  return json{{"height", d.height}, {"grid", grid_header(d.f.grid())}, {"selected_measure", d.selected_measure},
              {"cubes", cubes}};
}

/// Writes decomposition.json, good.csv and piece_<k>.csv into `dir`.
inline void write_cz(const CZDecomposition& d, const std::filesystem::path& dir)
{
  std::filesystem::create_directories(dir);
  json j = cz_to_json(d);
  j["good"] = "good.csv";
  for (std::size_t k = 0; k < d.pieces.size(); ++k) {
    const std::string name = "piece_" + std::to_string(k) + ".csv";
    j["cubes"][k]["piece"] = name;
    save_grid_function(d.pieces[k].piece, dir / name);
  }
  save_grid_function(d.good, dir / "good.csv");
  std::ofstream(dir / "decomposition.json") << j.dump(2) << "\n";
}

}  // namespace mfcz

#endif  // MFCZ_CZDECOMP_HPP
