#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>

#include <json.hpp>

#include "dynamics.hpp"

#ifndef QRDYN_VERSION
#define QRDYN_VERSION "0.1.0"
#endif

namespace qrdyn::io {

using json = nlohmann::ordered_json;
namespace fs = std::filesystem;

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// FNV-1a 64-bit digest of a byte range.
inline std::uint64_t fnv1a(const char* data, std::size_t size, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (std::size_t i = 0; i < size; ++i) {
    h ^= static_cast<unsigned char>(data[i]);
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::string file_digest(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::uint64_t h = 0xcbf29ce484222325ULL;
  std::array<char, 1 << 16> buf;
  while (in) {
    in.read(buf.data(), buf.size());
    h = fnv1a(buf.data(), static_cast<std::size_t>(in.gcount()), h);
  }
  return hex64(h);
}

inline std::ofstream open_output(const fs::path& path, bool binary = false) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, binary ? std::ios::binary : std::ios::out);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

/// Binary 8-bit graymap, rows top to bottom.
inline void write_pgm(const fs::path& path, int width, int height, const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != static_cast<std::size_t>(width) * height) throw IoError("pgm: pixel count mismatch");
  auto out = open_output(path, true);
  out << "P5\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
}

struct Graymap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> pixels;
};

inline Graymap read_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::string magic;
  Graymap g;
  int maxval = 0;
  if (!(in >> magic >> g.width >> g.height >> maxval) || magic != "P5" || maxval != 255)
    throw IoError("not an 8-bit P5 graymap: " + path.string());
  in.get();
  g.pixels.resize(static_cast<std::size_t>(g.width) * g.height);
  in.read(reinterpret_cast<char*>(g.pixels.data()), static_cast<std::streamsize>(g.pixels.size()));
  if (!in) throw IoError("truncated graymap: " + path.string());
  return g;
}

inline void write_json(const fs::path& path, const json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

/// Gray levels: escaping 255, bounded 0, undecided 128, basin k 40 + 20 (k mod 8).
inline std::uint8_t label_gray(const OrbitClass& c) {
  switch (c.label) {
    case Label::Escaping: return 255;
    case Label::Bounded: return 0;
    case Label::Undecided: return 128;
    case Label::Basin: return static_cast<std::uint8_t>(40 + 20 * (std::max(c.basin_id, 0) % 8));
  }
  return 128;
}

inline json label_legend(const MapSpec& map) {
  json legend = json::array();
  legend.push_back({{"gray", 255}, {"label", "escaping"}});
  legend.push_back({{"gray", 0}, {"label", "bounded"}});
  legend.push_back({{"gray", 128}, {"label", "undecided"}});
  for (std::size_t k = 0; k < map.attractors.size(); ++k) {
    OrbitClass c;
    c.label = Label::Basin;
    c.basin_id = static_cast<int>(k);
    const auto& a = map.attractors[k];
    legend.push_back({{"gray", label_gray(c)}, {"label", "basin"}, {"basin_id", k}, {"attractor", {a[0], a[1], a[2]}}});
  }
  return legend;
}

inline json box_json(const Box& b) {
  json lo = json::array(), hi = json::array();
  for (int a = 0; a < b.dim; ++a) {
    lo.push_back(b.lo[a]);
    hi.push_back(b.hi[a]);
  }
  return {{"dim", b.dim}, {"lo", lo}, {"hi", hi}};
}

inline json grid_json(const Grid& g) {
  json res = json::array();
  for (int a = 0; a < g.window.dim; ++a) res.push_back(g.res[a]);
  return {{"window", box_json(g.window)}, {"resolution", res}, {"layout", "cell centers, x fastest, PGM rows top = max y"}};
}

/// Cell values as PGM images: one image for a planar grid, one per z index
/// for a spatial grid (stem_z000.pgm, ...). Returns the written paths.
inline std::vector<fs::path> write_grid_images(const fs::path& stem, const Grid& grid,
                                               const std::function<std::uint8_t(std::size_t)>& value) {
  const int nx = grid.res[0], ny = grid.res[1], nz = grid.res[2];
  std::vector<fs::path> written;
  for (int k = 0; k < nz; ++k) {
    std::vector<std::uint8_t> px(static_cast<std::size_t>(nx) * ny);
    for (int j = 0; j < ny; ++j)
      for (int i = 0; i < nx; ++i) px[static_cast<std::size_t>(ny - 1 - j) * nx + i] = value(grid.index(i, j, k));
    fs::path path = stem;
    if (grid.window.dim == 3) {
      std::ostringstream name;
      name << stem.filename().string() << "_z" << std::setw(3) << std::setfill('0') << k << ".pgm";
      path = stem.parent_path() / name.str();
    } else {
      path += ".pgm";
    }
    write_pgm(path, nx, ny, px);
    written.push_back(path);
  }
  return written;
}

/// Header "x,y" or "x,y,z"; 17 significant digits.
inline void write_points_csv(const fs::path& path, const std::vector<Point>& points, int dim) {
  auto out = open_output(path);
  out << (dim == 3 ? "x,y,z\n" : "x,y\n");
  out << std::setprecision(17);
  for (const auto& p : points) {
    out << p[0] << ',' << p[1];
    if (dim == 3) out << ',' << p[2];
    out << '\n';
  }
}

struct PointCloud {
  int dim = 2;
  std::vector<Point> points;
};

inline PointCloud read_points_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  PointCloud cloud;
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty csv: " + path.string());
  cloud.dim = static_cast<int>(std::count(line.begin(), line.end(), ',')) + 1;
  if (cloud.dim != 2 && cloud.dim != 3) throw IoError("csv header must name 2 or 3 columns: " + path.string());
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (line.empty()) continue;
    Point p{};
    std::istringstream fields(line);
    std::string cell;
    for (int a = 0; a < cloud.dim; ++a) {
      if (!std::getline(fields, cell, ',')) throw IoError("csv row " + std::to_string(row) + ": missing column");
      try {
        std::size_t used = 0;
        p[a] = std::stod(cell, &used);
        if (used != cell.size()) throw std::invalid_argument(cell);
      } catch (const std::logic_error&) {
        throw IoError("csv row " + std::to_string(row) + ": bad number '" + cell + "'");
      }
    }
    cloud.points.push_back(p);
  }
  return cloud;
}

/// Record of one run: inputs, knobs, seeds and every artifact with its digest.
struct RunManifest {
  std::string command;
  std::string map;
  std::map<std::string, double> params;
  json knobs = json::object();
  std::vector<std::uint64_t> seeds;
  json grid = nullptr;
  std::string version = QRDYN_VERSION;
  double wall_clock_seconds = 0.0;
  std::vector<fs::path> outputs;

  json to_json() const {
    json files = json::array();
    for (const auto& p : outputs) files.push_back({{"path", p.filename().string()}, {"fnv1a64", file_digest(p)}});
    return {{"command", command}, {"map", map},          {"params", params},
            {"knobs", knobs},     {"seeds", seeds},      {"grid", grid},
            {"version", version}, {"wall_clock_seconds", wall_clock_seconds}, {"outputs", files}};
  }
};

}  // namespace qrdyn::io
