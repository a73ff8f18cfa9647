#ifndef MFCZ_FAMILY_HPP
#define MFCZ_FAMILY_HPP

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grid.hpp"
#include "random.hpp"

namespace mfcz {

enum class FamilyKind { indicator_sums, smooth_bumps, mean_zero_oscillations, power_spikes };

inline const char* to_string(FamilyKind k) noexcept
{
  switch (k) {
    case FamilyKind::indicator_sums: return "indicator_sums";
    case FamilyKind::smooth_bumps: return "smooth_bumps";
    case FamilyKind::mean_zero_oscillations: return "mean_zero_oscillations";
    case FamilyKind::power_spikes: return "power_spikes";
  }
  return "?";
}

inline FamilyKind family_kind_from_string(const std::string& s)
{
  for (FamilyKind k : {FamilyKind::indicator_sums, FamilyKind::smooth_bumps, FamilyKind::mean_zero_oscillations,
                       FamilyKind::power_spikes})
    if (s == to_string(k)) return k;
  throw std::invalid_argument("unknown family kind '" + s +
                              "' (expected indicator_sums, smooth_bumps, mean_zero_oscillations or power_spikes)");
}

namespace detail {

inline constexpr std::uint64_t kFamilyStream = 0xfa31;

/// One feature of a generated function, in box coordinates. Features are continuous so the same
/// case can be resampled on any grid.
struct Feature {
  Point center{};
  double radius = 0.0;
  double amp = 0.0;
  double shape = 0.0;  // frequency, spike exponent or unused
  double phase = 0.0;
};

}  // namespace detail

/// Seeded generator of bounded test functions supported in the central half of the box.
/// Case c, slot j depends only on (seed, c, j), so families of different sizes are nested.
struct TestFamily {
  FamilyKind kind = FamilyKind::indicator_sums;
  int count = 1;
  std::uint64_t seed = 1;
  int arity = 1;
  bool normalize_l1 = false;

  json to_json() const
  {
    return json{{"kind", to_string(kind)}, {"count", count}, {"seed", seed}, {"arity", arity},
                {"normalize_l1", normalize_l1}};
  }

  static TestFamily from_json(const json& j, std::uint64_t default_seed = 1)
  {
    TestFamily f;
    f.kind = family_kind_from_string(j.value("kind", std::string("indicator_sums")));
    f.count = j.value("count", 1);
    f.seed = j.value("seed", default_seed);
    f.arity = j.value("arity", 1);
    f.normalize_l1 = j.value("normalize_l1", false);
    f.validate();
    return f;
  }

  void validate() const
  {
    if (count < 0) throw std::invalid_argument("family count must be non-negative");
    if (arity < 1) throw std::invalid_argument("family arity must be at least 1");
  }

  GridFunction member(const Grid& g, int c, int slot) const
  {
    if (c < 0 || c >= count) throw std::out_of_range("family case " + std::to_string(c) + " out of range");
    if (slot < 0 || slot >= arity) throw std::out_of_range("family slot " + std::to_string(slot) + " out of range");
    Rng rng(derive_seed(seed, detail::kFamilyStream + static_cast<std::uint64_t>(slot), static_cast<std::uint64_t>(c)));
    GridFunction f = generate(g, rng);
    if (normalize_l1) {
      const double l1 = lp_norm(f, 1.0);
      if (l1 > 0.0) f = (1.0 / l1) * f;
    }
    return f;
  }

  std::vector<GridFunction> tuple(const Grid& g, int c) const
  {
    std::vector<GridFunction> out;
    for (int j = 0; j < arity; ++j) out.push_back(member(g, c, j));
    return out;
  }

 private:
  GridFunction generate(const Grid& g, Rng& rng) const
  {
    const Box& b = g.box();
    const int n = g.dim();
    const double side = b.side;
    const int features = 1 + static_cast<int>(rng.below(3));
    std::vector<detail::Feature> fs(static_cast<std::size_t>(features));
    for (auto& ft : fs) {
      ft.radius = side * rng.uniform(1.0 / 64.0, 1.0 / 8.0);
      // Keep the whole feature inside [lo + side/4, lo + 3 side/4].
      for (int a = 0; a < n; ++a)
        ft.center[static_cast<std::size_t>(a)] =
            b.lo[static_cast<std::size_t>(a)] + rng.uniform(side / 4.0 + ft.radius, 3.0 * side / 4.0 - ft.radius);
      ft.amp = rng.uniform(0.5, 2.0);
      ft.shape = rng.uniform(0.0, 1.0);
      ft.phase = rng.uniform(0.0, 6.283185307179586);
    }
    auto dist = [n](const Point& x, const Point& c) { return distance(x, c, n); };

    switch (kind) {
      case FamilyKind::indicator_sums:
        return GridFunction::sample(g, [&](Point x) {
          double v = 0.0;
          for (const auto& ft : fs) {
            bool in = true;
            for (int a = 0; a < n; ++a)
              in = in && std::abs(x[static_cast<std::size_t>(a)] - ft.center[static_cast<std::size_t>(a)]) < ft.radius;
            if (in) v += ft.amp;
          }
          return v;
        });
      case FamilyKind::smooth_bumps:
        return GridFunction::sample(g, [&](Point x) {
          double v = 0.0;
          for (const auto& ft : fs) {
            const double r = dist(x, ft.center) / ft.radius;
            if (r < 1.0) v += ft.amp * (1.0 - r * r) * (1.0 - r * r);
          }
          return v;
        });
      case FamilyKind::power_spikes:
        return GridFunction::sample(g, [&](Point x) {
          double v = 0.0;
          for (const auto& ft : fs) {
            const double r = dist(x, ft.center);
            if (r >= ft.radius) continue;
            // Exponent in (0, 0.45 n), floored at 1/1024 of the side so the function stays bounded.
            const double beta = 0.45 * n * ft.shape + 0.01;
            v += ft.amp * std::pow(std::max(r, side / 1024.0) / ft.radius, -beta);
          }
          return v;
        });
      case FamilyKind::mean_zero_oscillations: {
        GridFunction f = GridFunction::sample(g, [&](Point x) {
          double v = 0.0;
          for (const auto& ft : fs) {
            const double r = dist(x, ft.center) / ft.radius;
            if (r >= 1.0) continue;
            const double freq = 1.0 + std::floor(6.0 * ft.shape);
            v += ft.amp * std::sin(freq * 3.141592653589793 * r + ft.phase);
          }
          return v;
        });
        // Remove the discrete mean on the support so every sample integrates to zero.
        double sum = 0.0;
        std::size_t support = 0;
        std::vector<bool> in(g.cell_count(), false);
        for (std::size_t k = 0; k < g.cell_count(); ++k)
          for (const auto& ft : fs)
            if (dist(g.center(k), ft.center) < ft.radius) in[k] = true;
        for (std::size_t k = 0; k < g.cell_count(); ++k)
          if (in[k]) {
            sum += f[k];
            ++support;
          }
        if (support == 0) return f;
        const double mean = sum / static_cast<double>(support);
        std::vector<double> v(f.values().begin(), f.values().end());
        for (std::size_t k = 0; k < v.size(); ++k)
          if (in[k]) v[k] -= mean;
        return GridFunction(g, std::move(v));
      }
    }
    throw std::logic_error("unhandled family kind");
  }
};

}  // namespace mfcz

#endif  // MFCZ_FAMILY_HPP
