#ifndef MFCZ_GRID_HPP
#define MFCZ_GRID_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfcz {

/// A point of R^n, n <= 2. The second coordinate is ignored in one dimension.
using Point = std::array<double, 2>;
using Index = std::array<int, 2>;

/// Raised when a computation would exceed a configured size or time budget.
struct ResourceCapExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Half-open box [lo, lo + side)^n.
struct Box {
  int dim = 1;
  Point lo{0.0, 0.0};
  double side = 1.0;

  bool operator==(const Box&) const = default;
};

/// Uniform cell-centred grid with a power-of-two number of cells per side.
class Grid {
 public:
  Grid(const Box& box, int cells_per_side) : box_(box), cells_(cells_per_side)
  {
    if (box.dim != 1 && box.dim != 2) throw std::invalid_argument("grid dimension must be 1 or 2");
    if (!(box.side > 0.0) || !std::isfinite(box.side)) throw std::invalid_argument("box side must be positive");
    if (cells_per_side < 1 || (cells_per_side & (cells_per_side - 1)) != 0)
      throw std::invalid_argument("cells per side must be a power of two, got " + std::to_string(cells_per_side));
    h_ = box.side / cells_per_side;
    if (box_.dim == 1) box_.lo[1] = 0.0;  // unused axis; keeps grid equality meaningful
  }

  Grid(int dim, double lo, double side, int cells_per_side)
      : Grid(Box{dim, Point{lo, lo}, side}, cells_per_side)
  {}

  const Box& box() const noexcept { return box_; }
  int dim() const noexcept { return box_.dim; }
  int cells_per_side() const noexcept { return cells_; }
  double h() const noexcept { return h_; }
  double cell_volume() const noexcept { return dim() == 1 ? h_ : h_ * h_; }
  std::size_t cell_count() const noexcept
  {
    return dim() == 1 ? static_cast<std::size_t>(cells_) : static_cast<std::size_t>(cells_) * cells_;
  }

  /// Axis 0 varies fastest.
  std::size_t flat(const Index& i) const noexcept
  {
    return dim() == 1 ? static_cast<std::size_t>(i[0])
                      : static_cast<std::size_t>(i[1]) * cells_ + static_cast<std::size_t>(i[0]);
  }
  Index index(std::size_t flat) const noexcept
  {
    if (dim() == 1) return {static_cast<int>(flat), 0};
    return {static_cast<int>(flat % cells_), static_cast<int>(flat / cells_)};
  }

  Point center(const Index& i) const noexcept
  {
    Point p{0.0, 0.0};
    for (int a = 0; a < dim(); ++a) p[a] = box_.lo[a] + (i[a] + 0.5) * h_;
    return p;
  }
  Point center(std::size_t flat_index) const noexcept { return center(index(flat_index)); }

  bool contains(const Point& x) const noexcept
  {
    for (int a = 0; a < dim(); ++a)
      if (!(x[a] >= box_.lo[a] && x[a] < box_.lo[a] + box_.side)) return false;
    return true;
  }

  /// Cell containing x.
  Index locate(const Point& x) const
  {
    if (!contains(x)) throw std::out_of_range("point outside the grid box");
    Index i{0, 0};
    for (int a = 0; a < dim(); ++a)
      i[a] = std::clamp(static_cast<int>(std::floor((x[a] - box_.lo[a]) / h_)), 0, cells_ - 1);
    return i;
  }

  /// Same box, `factor` times as many cells per side.
  Grid refined(int factor = 2) const { return Grid(box_, cells_ * factor); }

  bool operator==(const Grid&) const = default;

 private:
  Box box_;
  int cells_;
  double h_ = 0.0;
};

inline double norm(const Point& v, int dim) noexcept
{
  return dim == 1 ? std::abs(v[0]) : std::hypot(v[0], v[1]);
}
inline double distance(const Point& a, const Point& b, int dim) noexcept
{
  return norm(Point{a[0] - b[0], a[1] - b[1]}, dim);
}

/// Grid-aligned cube given by its lower-corner cell index and its side in cells.
struct Cube {
  Index corner{0, 0};
  int side = 1;

  bool operator==(const Cube&) const = default;

  std::size_t cell_count(int dim) const noexcept
  {
    return dim == 1 ? static_cast<std::size_t>(side) : static_cast<std::size_t>(side) * side;
  }
  double side_length(const Grid& g) const noexcept { return side * g.h(); }
  double measure(const Grid& g) const noexcept
  {
    return g.dim() == 1 ? side_length(g) : side_length(g) * side_length(g);
  }
  bool inside(const Grid& g) const noexcept
  {
    if (side < 1) return false;
    for (int a = 0; a < g.dim(); ++a)
      if (corner[a] < 0 || corner[a] + side > g.cells_per_side()) return false;
    return true;
  }
  bool contains(const Index& i, int dim) const noexcept
  {
    for (int a = 0; a < dim; ++a)
      if (i[a] < corner[a] || i[a] >= corner[a] + side) return false;
    return true;
  }

  /// Calls fn(flat) for every cell of the cube, axis 0 fastest.
  template <class Fn>
  void for_each_cell(const Grid& g, Fn&& fn) const
  {
    if (g.dim() == 1) {
      for (int i = corner[0]; i < corner[0] + side; ++i) fn(static_cast<std::size_t>(i));
    } else {
      for (int j = corner[1]; j < corner[1] + side; ++j)
        for (int i = corner[0]; i < corner[0] + side; ++i) fn(g.flat({i, j}));
    }
  }
};

/// Real function sampled at the cell centres of a grid.
class GridFunction {
 public:
  explicit GridFunction(const Grid& grid) : grid_(grid), values_(grid.cell_count(), 0.0) {}

  GridFunction(const Grid& grid, std::vector<double> values) : grid_(grid), values_(std::move(values))
  {
    if (values_.size() != grid_.cell_count())
      throw std::invalid_argument("value count " + std::to_string(values_.size()) + " does not match cell count " +
                                  std::to_string(grid_.cell_count()));
    for (double v : values_)
      if (!std::isfinite(v)) throw std::invalid_argument("grid function values must be finite");
  }

  /// Samples fn(center) at every cell.
  template <class Fn>
  static GridFunction sample(const Grid& grid, Fn&& fn)
  {
    std::vector<double> v(grid.cell_count());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(grid.center(k));
    return GridFunction(grid, std::move(v));
  }

  static GridFunction constant(const Grid& grid, double c)
  {
    return GridFunction(grid, std::vector<double>(grid.cell_count(), c));
  }

  const Grid& grid() const noexcept { return grid_; }
  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  double operator[](std::size_t k) const noexcept { return values_[k]; }
  double at(const Index& i) const noexcept { return values_[grid_.flat(i)]; }

  /// Cellwise transform.
  template <class Fn>
  GridFunction map(Fn&& fn) const
  {
    std::vector<double> v(values_.size());
    for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(values_[k]);
    return GridFunction(grid_, std::move(v));
  }

  GridFunction abs() const
  {
    return map([](double v) { return std::abs(v); });
  }

  double max_abs() const noexcept
  {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  bool is_zero() const noexcept
  {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return v == 0.0; });
  }

 private:
  Grid grid_;
  std::vector<double> values_;
};

inline void require_same_grid(const GridFunction& a, const GridFunction& b)
{
  if (!(a.grid() == b.grid())) throw std::invalid_argument("grid functions live on different grids");
}

/// Cellwise binary combination of two functions on the same grid.
template <class Fn>
GridFunction combine(const GridFunction& a, const GridFunction& b, Fn&& fn)
{
  require_same_grid(a, b);
  std::vector<double> v(a.size());
  for (std::size_t k = 0; k < v.size(); ++k) v[k] = fn(a[k], b[k]);
  return GridFunction(a.grid(), std::move(v));
}

inline GridFunction operator+(const GridFunction& a, const GridFunction& b)
{
  return combine(a, b, std::plus<>{});
}
inline GridFunction operator-(const GridFunction& a, const GridFunction& b)
{
  return combine(a, b, std::minus<>{});
}
inline GridFunction operator*(double c, const GridFunction& f)
{
  return f.map([c](double v) { return c * v; });
}

/// Translation by whole cells; cells shifted in from outside are zero.
inline GridFunction shift_cells(const GridFunction& f, const Index& offset)
{
  const Grid& g = f.grid();
  GridFunction out(g);
  std::vector<double> v(g.cell_count(), 0.0);
  for (std::size_t k = 0; k < v.size(); ++k) {
    Index src = g.index(k);
    bool ok = true;
    for (int a = 0; a < g.dim(); ++a) {
      src[a] -= offset[a];
      ok = ok && src[a] >= 0 && src[a] < g.cells_per_side();
    }
    if (ok) v[k] = f.at(src);
  }
  return GridFunction(g, std::move(v));
}

/// Midpoint quadrature: h^n times the sum of cell values.
inline double integrate(const GridFunction& f)
{
  return f.grid().cell_volume() * std::accumulate(f.values().begin(), f.values().end(), 0.0);
}

/// Mean of the cell values inside Q.
inline double average_on_cube(const GridFunction& f, const Cube& q)
{
  if (!q.inside(f.grid())) throw std::out_of_range("cube lies outside the grid");
  double sum = 0.0;
  q.for_each_cell(f.grid(), [&](std::size_t k) { sum += f[k]; });
  return sum / static_cast<double>(q.cell_count(f.grid().dim()));
}

enum class CubeMode { full, dyadic };

inline const char* to_string(CubeMode m) noexcept { return m == CubeMode::full ? "full" : "dyadic"; }

inline CubeMode cube_mode_from_string(const std::string& s)
{
  if (s == "full") return CubeMode::full;
  if (s == "dyadic") return CubeMode::dyadic;
  throw std::invalid_argument("unknown cube mode '" + s + "' (expected full or dyadic)");
}

/// Grid cubes containing the cell of x: every side and offset (full) or the dyadic ancestors (dyadic).
/// Sorted by side, then corner lexicographically.
inline std::vector<Cube> cube_family(const Grid& grid, const Point& x, CubeMode mode)
{
  const Index c = grid.locate(x);
  const int n = grid.cells_per_side();
  std::vector<Cube> out;
  for (int s = 1; s <= n; ++s) {
    if (mode == CubeMode::dyadic) {
      if ((s & (s - 1)) != 0) continue;
      Index corner{(c[0] / s) * s, grid.dim() == 2 ? (c[1] / s) * s : 0};
      out.push_back(Cube{corner, s});
      continue;
    }
    const int lo0 = std::max(0, c[0] - s + 1), hi0 = std::min(c[0], n - s);
    if (grid.dim() == 1) {
      for (int o = lo0; o <= hi0; ++o) out.push_back(Cube{{o, 0}, s});
    } else {
      const int lo1 = std::max(0, c[1] - s + 1), hi1 = std::min(c[1], n - s);
      for (int o0 = lo0; o0 <= hi0; ++o0)
        for (int o1 = lo1; o1 <= hi1; ++o1) out.push_back(Cube{{o0, o1}, s});
    }
  }
  return out;
}

/// (int |f|^p)^{1/p}; p = infinity gives the max norm.
inline double lp_norm(const GridFunction& f, double p)
{
  if (!(p > 0.0)) throw std::invalid_argument("lp_norm requires p > 0");
  if (std::isinf(p)) return f.max_abs();
  double s = 0.0;
  for (double v : f.values()) s += std::pow(std::abs(v), p);
  return std::pow(f.grid().cell_volume() * s, 1.0 / p);
}

namespace detail {

/// sup_t t * mu({|f| >= t})^{1/q} where mu(cell k) = cell_measure[k]; the sup is attained at a sample value.
inline double weak_norm_from_samples(std::span<const double> values, std::span<const double> cell_measure,
                                     double q)
{
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double va = std::abs(values[a]), vb = std::abs(values[b]);
    return va != vb ? va > vb : a < b;
  });
  double best = 0.0, measure = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    const double t = std::abs(values[order[r]]);
    if (t == 0.0) break;
    measure += cell_measure[order[r]];
    const bool last_of_level = r + 1 == order.size() || std::abs(values[order[r + 1]]) != t;
    if (last_of_level) best = std::max(best, t * std::pow(measure, 1.0 / q));
  }
  return best;
}

}  // namespace detail

/// Weak L^q quasi-norm sup_t t |{|f| > t}|^{1/q}.
inline double weak_lq_norm(const GridFunction& f, double q)
{
  if (!(q > 0.0)) throw std::invalid_argument("weak_lq_norm requires q > 0");
  const std::vector<double> mu(f.size(), f.grid().cell_volume());
  return detail::weak_norm_from_samples(f.values(), mu, q);
}

}  // namespace mfcz

#endif  // MFCZ_GRID_HPP
