#ifndef MFCZ_IO_HPP
#define MFCZ_IO_HPP

// GridFunction files. CSV: a "# {json header}" line followed by "index,value" rows. Binary: a magic
// line, the same JSON header on one line, then the raw doubles. Both round-trip bit-exactly.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "grid.hpp"

namespace mfcz {

using json = nlohmann::json;

inline json grid_header(const Grid& g)
{
  json lo = json::array();
  for (int a = 0; a < g.dim(); ++a) lo.push_back(g.box().lo[a]);
  return json{{"n", g.dim()}, {"lo", lo}, {"L", g.box().side}, {"N", g.cells_per_side()}};
}

inline Grid grid_from_header(const json& j)
{
  const int n = j.at("n").get<int>();
  Point lo{0.0, 0.0};
  const json& jl = j.at("lo");
  if (jl.is_number()) {
    lo = {jl.get<double>(), jl.get<double>()};
  } else {
    if (static_cast<int>(jl.size()) != n) throw std::invalid_argument("grid header 'lo' must have n entries");
    for (int a = 0; a < n; ++a) lo[a] = jl.at(static_cast<std::size_t>(a)).get<double>();
  }
  return Grid(Box{n, lo, j.at("L").get<double>()}, j.at("N").get<int>());
}

inline std::string format_double(double v)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const GridFunction& f, std::ostream& os)
{
  os << "# " << grid_header(f.grid()).dump() << "\n";
  for (std::size_t k = 0; k < f.size(); ++k) os << k << ',' << format_double(f[k]) << "\n";
}

inline GridFunction read_csv(std::istream& is)
{
  std::string line;
  if (!std::getline(is, line) || line.rfind("# ", 0) != 0) throw std::invalid_argument("missing grid header line");
  const Grid g = grid_from_header(json::parse(line.substr(2)));
  std::vector<double> v(g.cell_count(), 0.0);
  std::vector<bool> seen(g.cell_count(), false);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw std::invalid_argument("malformed grid function row '" + line + "'");
    const std::size_t k = std::stoull(line.substr(0, comma));
    if (k >= v.size()) throw std::invalid_argument("grid function row index out of range");
    v[k] = std::stod(line.substr(comma + 1));
    seen[k] = true;
  }
  for (bool s : seen)
    if (!s) throw std::invalid_argument("grid function file is missing cells");
  return GridFunction(g, std::move(v));
}

inline constexpr const char* kBinaryMagic = "MFCZ-GRIDFUNCTION-1";

inline void write_binary(const GridFunction& f, std::ostream& os)
{
  os << kBinaryMagic << "\n" << grid_header(f.grid()).dump() << "\n";
  os.write(reinterpret_cast<const char*>(f.values().data()), static_cast<std::streamsize>(f.size() * sizeof(double)));
}

inline GridFunction read_binary(std::istream& is)
{
  std::string magic, header;
  if (!std::getline(is, magic) || magic != kBinaryMagic) throw std::invalid_argument("not a binary grid function file");
  if (!std::getline(is, header)) throw std::invalid_argument("missing grid header");
  const Grid g = grid_from_header(json::parse(header));
  std::vector<double> v(g.cell_count());
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
  if (is.gcount() != static_cast<std::streamsize>(v.size() * sizeof(double)))
    throw std::invalid_argument("binary grid function file is truncated");
  return GridFunction(g, std::move(v));
}

/// ".csv" selects the text format, anything else the binary one.
inline void save_grid_function(const GridFunction& f, const std::filesystem::path& path)
{
  const bool csv = path.extension() == ".csv";
  std::ofstream os(path, csv ? std::ios::out : std::ios::out | std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  csv ? write_csv(f, os) : write_binary(f, os);
}

inline GridFunction load_grid_function(const std::filesystem::path& path)
{
  const bool csv = path.extension() == ".csv";
  std::ifstream is(path, csv ? std::ios::in : std::ios::in | std::ios::binary);
  if (!is) throw std::invalid_argument("cannot read grid function file " + path.string());
  return csv ? read_csv(is) : read_binary(is);
}

/// Loads a grid function and resamples it onto `target` if the grids differ (piecewise constant lookup).
inline GridFunction load_on_grid(const std::filesystem::path& path, const Grid& target)
{
  GridFunction f = load_grid_function(path);
  if (f.grid() == target) return f;
  const Grid src = f.grid();
  return GridFunction::sample(target, [&](Point x) {
    if (!src.contains(x)) return 0.0;
    return f.at(src.locate(x));
  });
}

}  // namespace mfcz

#endif  // MFCZ_IO_HPP
