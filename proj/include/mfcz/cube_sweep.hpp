#ifndef MFCZ_CUBE_SWEEP_HPP
#define MFCZ_CUBE_SWEEP_HPP

// Scale-by-scale enumeration of the grid cube family.
//
// Cube reductions are grown one side length at a time (a cube of side s+1 is the cube of side s
// plus one strip per axis), so the cost per scale is O(cells) and the arithmetic for a cube only
// depends on the values inside it. The latter makes every operator built here exactly covariant
// under whole-cell translations.

#include <algorithm>
#include <cstddef>
#include <deque>
#include <vector>

#include "grid.hpp"

namespace mfcz {

struct SumOp {
  static double apply(double a, double b) noexcept { return a + b; }
};
struct MinOp {
  static double apply(double a, double b) noexcept { return std::min(a, b); }
};
struct MaxOp {
  static double apply(double a, double b) noexcept { return std::max(a, b); }
};

/// Reduction of a grid function over every cube of the current side length.
template <class Op>
class WindowReduce {
 public:
  explicit WindowReduce(const GridFunction& f)
      : dim_(f.grid().dim()), n_(f.grid().cells_per_side()), f_(f.values().begin(), f.values().end()), cube_(f_)
  {
    if (dim_ == 2) {
      row_ = f_;
      col_ = f_;
    }
  }

  int side() const noexcept { return side_; }

  /// Side s -> s + 1.
  void grow()
  {
    const int s = side_;
    if (s >= n_) return;
    if (dim_ == 1) {
      for (int o = 0; o + s < n_; ++o) cube_[o] = Op::apply(cube_[o], f_[o + s]);
    } else {
      for (int o1 = 0; o1 + s < n_; ++o1)
        for (int o0 = 0; o0 + s < n_; ++o0) {
          double& c = cube_[at2(o0, o1)];
          c = Op::apply(c, row_[at2(o0, o1 + s)]);
          c = Op::apply(c, col_[at2(o0 + s, o1)]);
          c = Op::apply(c, f_[at2(o0 + s, o1 + s)]);
        }
      // row_[o0, r] covers cells (o0 .. o0+s-1, r); col_[c, o1] covers cells (c, o1 .. o1+s-1).
      for (int r = 0; r < n_; ++r)
        for (int o0 = 0; o0 + s < n_; ++o0) row_[at2(o0, r)] = Op::apply(row_[at2(o0, r)], f_[at2(o0 + s, r)]);
      for (int o1 = 0; o1 + s < n_; ++o1)
        for (int c = 0; c < n_; ++c) col_[at2(c, o1)] = Op::apply(col_[at2(c, o1)], f_[at2(c, o1 + s)]);
    }
    ++side_;
  }

  /// Reduction over the cube of the current side with the given corner.
  double at(const Index& corner) const noexcept
  {
    return dim_ == 1 ? cube_[corner[0]] : cube_[at2(corner[0], corner[1])];
  }

 private:
  std::size_t at2(int i0, int i1) const noexcept { return static_cast<std::size_t>(i1) * n_ + i0; }

  int dim_;
  int n_;
  int side_ = 1;
  std::vector<double> f_;
  std::vector<double> cube_;
  std::vector<double> row_;
  std::vector<double> col_;
};

using WindowSum = WindowReduce<SumOp>;
using WindowMin = WindowReduce<MinOp>;

namespace detail {

/// out[x] = max(out[x], max_{o in [x-s+1, x], 0 <= o < count} v[o]) along one line (strided access).
inline void sliding_max_line(const double* v, std::size_t v_stride, int count, int s, double* out,
                             std::size_t out_stride, int n)
{
  std::deque<int> dq;
  int next = 0;
  for (int x = 0; x < n; ++x) {
    while (next <= x && next < count) {
      while (!dq.empty() && v[dq.back() * v_stride] <= v[next * v_stride]) dq.pop_back();
      dq.push_back(next);
      ++next;
    }
    while (!dq.empty() && dq.front() < x - s + 1) dq.pop_front();
    if (!dq.empty()) {
      double& o = out[x * out_stride];
      o = std::max(o, v[dq.front() * v_stride]);
    }
  }
}

inline bool is_power_of_two(int s) noexcept { return s > 0 && (s & (s - 1)) == 0; }

}  // namespace detail

/// Visits the cube family one side length at a time.
///
/// `advance()` is called before every side s > 1 (use it to grow WindowReduce state);
/// `visit(side, corners)` receives the admissible corners of that side.
template <class Advance, class Visit>
void for_each_scale(const Grid& grid, CubeMode mode, Advance&& advance, Visit&& visit)
{
  const int n = grid.cells_per_side();
  std::vector<Index> corners;
  for (int s = 1; s <= n; ++s) {
    if (s > 1) advance();
    if (mode == CubeMode::dyadic && !detail::is_power_of_two(s)) continue;
    const int step = mode == CubeMode::dyadic ? s : 1;
    corners.clear();
    if (grid.dim() == 1) {
      for (int o = 0; o + s <= n; o += step) corners.push_back({o, 0});
    } else {
      for (int o1 = 0; o1 + s <= n; o1 += step)
        for (int o0 = 0; o0 + s <= n; o0 += step) corners.push_back({o0, o1});
    }
    visit(s, corners);
  }
}

/// Pointwise sup over the cube family: out[x] = max over cubes Q containing x of value(Q).
/// Cubes with no admissible value should return 0 (all maximal operators here are non-negative).
template <class Advance, class Value>
GridFunction sup_over_cubes(const Grid& grid, CubeMode mode, Advance&& advance, Value&& value)
{
  const int n = grid.cells_per_side();
  std::vector<double> out(grid.cell_count(), 0.0);
  std::vector<double> vals;
  for_each_scale(grid, mode, advance, [&](int s, const std::vector<Index>& corners) {
    vals.resize(corners.size());
    for (std::size_t k = 0; k < corners.size(); ++k) vals[k] = value(Cube{corners[k], s});
    if (mode == CubeMode::dyadic) {
      const int per_axis = n / s;
      for (std::size_t k = 0; k < out.size(); ++k) {
        const Index i = grid.index(k);
        const std::size_t slot = grid.dim() == 1 ? static_cast<std::size_t>(i[0] / s)
                                                 : static_cast<std::size_t>(i[1] / s) * per_axis + i[0] / s;
        out[k] = std::max(out[k], vals[slot]);
      }
      return;
    }
    const int count = n - s + 1;
    if (grid.dim() == 1) {
      detail::sliding_max_line(vals.data(), 1, count, s, out.data(), 1, n);
      return;
    }
    // Separable: window max along axis 0 into tmp[x0, o1], then along axis 1.
    std::vector<double> tmp(static_cast<std::size_t>(n) * count, 0.0);
    for (int o1 = 0; o1 < count; ++o1)
      detail::sliding_max_line(vals.data() + static_cast<std::size_t>(o1) * count, 1, count, s,
                               tmp.data() + static_cast<std::size_t>(o1) * n, 1, n);
    for (int x0 = 0; x0 < n; ++x0)
      detail::sliding_max_line(tmp.data() + x0, n, count, s, out.data() + x0, n, n);
  });
  return GridFunction(grid, std::move(out));
}

/// Global sup of value(Q) over the whole cube family (every cube of the grid, or every dyadic cube).
template <class Advance, class Value>
double max_over_cubes(const Grid& grid, CubeMode mode, Advance&& advance, Value&& value)
{
  double best = -kInf;
  for_each_scale(grid, mode, advance, [&](int s, const std::vector<Index>& corners) {
    for (const Index& c : corners) best = std::max(best, value(Cube{c, s}));
  });
  return best;
}

}  // namespace mfcz

#endif  // MFCZ_CUBE_SWEEP_HPP
