#pragma once

#include <iostream>

#include <CLI11.hpp>

#include "calculus.hpp"
#include "capacity.hpp"
#include "dynamics.hpp"
#include "io.hpp"
#include "julia.hpp"
#include "maps.hpp"
#include "pits.hpp"
#include "precision.hpp"

namespace qrdyn::cli {

using io::json;
namespace fs = std::filesystem;

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2, kNumeric = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline double parse_number(const std::string& text, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size() && std::isfinite(v)) return v;
  } catch (const std::logic_error&) {
  }
  throw UsageError(what + ": '" + text + "' is not a number");
}

inline std::vector<double> parse_list(const std::string& text, const std::string& what) {
  std::vector<double> out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) out.push_back(parse_number(item, what));
  if (out.empty()) throw UsageError(what + ": empty list");
  return out;
}

/// "key=value" pairs; later repeats override earlier ones.
inline std::map<std::string, double> parse_params(const std::vector<std::string>& items) {
  std::map<std::string, double> out;
  for (const auto& item : items) {
    const auto eq = item.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == item.size())
      throw UsageError("--param expects key=value, got '" + item + "'");
    out[item.substr(0, eq)] = parse_number(item.substr(eq + 1), "--param " + item.substr(0, eq));
  }
  return out;
}

/// x0,x1,y0,y1 or x0,x1,y0,y1,z0,z1.
inline Box parse_window(const std::string& text) {
  const auto v = parse_list(text, "--window");
  if (v.size() == 4 && v[0] < v[1] && v[2] < v[3]) return Box::planar(v[0], v[1], v[2], v[3]);
  if (v.size() == 6 && v[0] < v[1] && v[2] < v[3] && v[4] < v[5]) return Box::spatial(v[0], v[1], v[2], v[3], v[4], v[5]);
  throw UsageError("--window expects x0,x1,y0,y1[,z0,z1] with increasing bounds, got '" + text + "'");
}

inline Point parse_point(const std::string& text, int dim) {
  const auto v = parse_list(text, "point");
  if (static_cast<int>(v.size()) != dim)
    throw UsageError("point '" + text + "' needs " + std::to_string(dim) + " coordinates");
  Point p{};
  for (int a = 0; a < dim; ++a) p[a] = v[a];
  return p;
}

inline json point_json(const Point& p, int dim) {
  json out = json::array();
  for (int a = 0; a < dim; ++a) out.push_back(p[a]);
  return out;
}

inline Box bounding_box(const std::vector<Point>& pts, int dim, double margin) {
  if (pts.empty()) throw UsageError("no points");
  Box b{pts.front(), pts.front(), dim};
  for (const auto& p : pts)
    for (int a = 0; a < dim; ++a) {
      b.lo[a] = std::min(b.lo[a], p[a]);
      b.hi[a] = std::max(b.hi[a], p[a]);
    }
  for (int a = 0; a < dim; ++a) {
    const double pad = margin * std::max(b.extent(a), 1e-9);
    b.lo[a] -= pad;
    b.hi[a] += pad;
  }
  return b;
}

/// Options shared by the map-driven subcommands.
struct Common {
  std::string map = "exp";
  std::vector<std::string> params;
  unsigned threads = 0;
  std::uint64_t seed = 1;
  std::string out_dir = ".";
  std::string name;
};

class Runner {
 public:
  Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}

  int run(int argc, const char* const* argv) {
    CLI::App app{"Dynamics of entire quasiregular maps: classification, Julia sets, pits and capacity"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(QRDYN_VERSION));
    add_list_maps(app);
    add_classify(app);
    add_fixed_points(app);
    add_julia(app);
    add_boxdim(app);
    add_pits(app);
    add_capacity(app);
    add_dilatation(app);
    add_harnack(app);
    try {
      app.parse(argc, argv);
    } catch (const CLI::Success& e) {
      return app.exit(e, out_, err_);
    } catch (const CLI::ParseError& e) {
      app.exit(e, out_, err_);
      return kUsage;
    }
    try {
      start_ = std::chrono::steady_clock::now();
      action_();
      return kOk;
    } catch (const UsageError& e) {
      err_ << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const ParameterError& e) {
      err_ << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const DomainError& e) {
      err_ << "usage error: " << e.what() << '\n';
      return kUsage;
    } catch (const NumericError& e) {
      err_ << "numeric failure: " << e.what() << " (best value " << e.best_value << ", residual " << e.residual
           << ")\n";
      return kNumeric;
    } catch (const std::exception& e) {
      err_ << "error: " << e.what() << '\n';
      return kFailure;
    }
  }

 private:
  std::ostream& out_;
  std::ostream& err_;
  std::function<void()> action_;
  std::chrono::steady_clock::time_point start_;

  static void add_common(CLI::App* sub, Common& c, bool with_map = true) {
    if (with_map) {
      sub->add_option("--map", c.map, "Registered map name (see list-maps)")->capture_default_str();
      sub->add_option("--param", c.params, "Map parameter key=value (repeatable)");
    }
    sub->add_option("--threads", c.threads, "Worker count (default: QRDYN_THREADS, else all cores)");
    sub->add_option("--seed", c.seed, "Base random seed")->capture_default_str();
    sub->add_option("--out", c.out_dir, "Output directory")->capture_default_str();
    sub->add_option("--name", c.name, "Artifact file stem (default: the subcommand)");
  }

  static MapSpec build_map(const Common& c) { return maps::make_map(c.map, parse_params(c.params)); }

  static fs::path stem(const Common& c, const std::string& fallback) {
    return fs::path(c.out_dir) / (c.name.empty() ? fallback : c.name);
  }

  io::RunManifest manifest(const std::string& command, const Common& c, const MapSpec* map) const {
    io::RunManifest m;
    m.command = command;
    if (map) {
      m.map = map->name;
      m.params = map->params;
    }
    m.seeds = {c.seed};
    return m;
  }

  void finish(io::RunManifest& m, const fs::path& base, json summary) {
    m.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    fs::path path = base;
    path += ".manifest.json";
    io::write_json(path, m.to_json());
    summary["manifest"] = path.string();
    out_ << summary.dump(2) << '\n';
  }

  static void check_dim(const MapSpec& map, const Box& window) {
    if (window.dim != map.dimension)
      throw UsageError("map '" + map.name + "' is " + std::to_string(map.dimension) + "-dimensional but the window is " +
                       std::to_string(window.dim) + "-dimensional");
  }

  // list-maps ---------------------------------------------------------------

  void add_list_maps(CLI::App& app) {
    auto* sub = app.add_subcommand("list-maps", "List registered maps and their default parameters");
    auto as_json = std::make_shared<bool>(false);
    sub->add_flag("--json", *as_json, "Emit JSON");
    sub->callback([this, as_json] {
      action_ = [this, as_json] {
        json all = json::array();
        for (const auto& info : maps::registered_maps()) {
          if (*as_json) {
            all.push_back({{"name", info.name}, {"dimension", info.dimension}, {"defaults", info.defaults},
                           {"description", info.description}});
            continue;
          }
          out_ << std::left << std::setw(14) << info.name << " dim=" << info.dimension << "  ";
          bool first = true;
          for (const auto& [k, v] : info.defaults) {
            out_ << (first ? "" : ",") << k << '=' << v;
            first = false;
          }
          out_ << "  " << info.description << '\n';
        }
        if (*as_json) out_ << all.dump(2) << '\n';
      };
    });
  }

  // classify ----------------------------------------------------------------

  struct ClassifyArgs {
    Common common;
    std::string window;
    int res = 256;
    ClassifyBudget budget;
  };

  void add_classify(CLI::App& app) {
    auto args = std::make_shared<ClassifyArgs>();
    auto* sub = app.add_subcommand("classify", "Label grid cells as escaping, bounded or basin");
    add_common(sub, args->common);
    sub->add_option("--window", args->window, "x0,x1,y0,y1[,z0,z1]")->required();
    sub->add_option("--res", args->res, "Cells per axis")->capture_default_str()->check(CLI::Range(1, 1 << 14));
    sub->add_option("--kmax", args->budget.k_max, "Iteration budget")->capture_default_str();
    sub->add_option("--escape", args->budget.escape_threshold, "Escape modulus")->capture_default_str();
    sub->add_option("--bound", args->budget.bound_threshold, "Bounded-orbit modulus")->capture_default_str();
    sub->add_option("--basin-tol", args->budget.basin_tol, "Basin capture distance")->capture_default_str();
    sub->callback([this, args] { action_ = [this, args] { classify(*args); }; });
  }

  void classify(const ClassifyArgs& a) {
    const MapSpec map = build_map(a.common);
    const Box window = parse_window(a.window);
    check_dim(map, window);
    const Grid grid = window.dim == 3 ? Grid::spatial(window, a.res, a.res, a.res) : Grid::planar(window, a.res, a.res);
    const auto labeled = dynamics::classify_grid(map, grid, a.budget, resolve_threads(a.common.threads));
    const fs::path base = stem(a.common, "classify");
    auto m = manifest("classify", a.common, &map);
    m.grid = io::grid_json(grid);
    m.knobs = {{"k_max", a.budget.k_max},
               {"escape_threshold", a.budget.escape_threshold},
               {"bound_threshold", a.budget.bound_threshold},
               {"basin_tol", a.budget.basin_tol}};
    m.outputs = io::write_grid_images(base, grid, [&](std::size_t i) { return io::label_gray(labeled.cells[i]); });
    fs::path legend = base;
    legend += ".legend.json";
    io::write_json(legend, {{"legend", io::label_legend(map)}, {"grid", io::grid_json(grid)}});
    m.outputs.push_back(legend);

    std::map<std::string, std::size_t> counts;
    for (const auto& c : labeled.cells)
    {
      std::string key = c.label == Label::Basin ? "basin_" + std::to_string(c.basin_id) : label_name(c.label);
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
      counts[key]++;
    }
    json fractions = json::object();
    for (const auto& [k, v] : counts) fractions[k] = static_cast<double>(v) / static_cast<double>(grid.size());
    finish(m, base, {{"command", "classify"}, {"map", map.name}, {"cells", grid.size()}, {"fractions", fractions}});
  }

  // fixed-points ------------------------------------------------------------

  struct FixedArgs {
    Common common;
    std::string window;
    int period = 1;
    std::size_t seeds = 400;
  };

  void add_fixed_points(CLI::App& app) {
    auto args = std::make_shared<FixedArgs>();
    auto* sub = app.add_subcommand("fixed-points", "Newton search for fixed and periodic points");
    add_common(sub, args->common);
    sub->add_option("--window", args->window, "Search region x0,x1,y0,y1[,z0,z1]")->required();
    sub->add_option("--period", args->period, "Period")->capture_default_str()->check(CLI::PositiveNumber);
    sub->add_option("--seeds", args->seeds, "Newton starts (lattice)")->capture_default_str();
    sub->callback([this, args] { action_ = [this, args] { fixed_points(*args); }; });
  }

  void fixed_points(const FixedArgs& a) {
    const MapSpec map = build_map(a.common);
    const Box window = parse_window(a.window);
    check_dim(map, window);
    const auto search = dynamics::find_fixed_points(map, window, a.period, a.seeds);
    const fs::path base = stem(a.common, "fixed_points");
    fs::path csv = base;
    csv += ".csv";
    {
      auto f = io::open_output(csv);
      f << "x,y,z,period,multiplier,stability,residual\n" << std::setprecision(17);
      for (const auto& r : search.records)
        f << r.location[0] << ',' << r.location[1] << ',' << r.location[2] << ',' << r.period << ','
          << r.multiplier_estimate << ',' << stability_name(r.stability) << ',' << r.residual << '\n';
    }
    auto m = manifest("fixed-points", a.common, &map);
    m.knobs = {{"period", a.period}, {"seeds", a.seeds}, {"window", io::box_json(window)}};
    m.outputs = {csv};
    json recs = json::array();
    for (const auto& r : search.records)
      recs.push_back({{"location", point_json(r.location, map.dimension)},
                      {"multiplier", r.multiplier_estimate},
                      {"stability", stability_name(r.stability)},
                      {"residual", r.residual}});
    finish(m, base,
           {{"command", "fixed-points"}, {"map", map.name}, {"records", recs}, {"continuum", search.continuum},
            {"seeds_used", search.seeds_used}, {"seeds_converged", search.seeds_converged}});
  }

  // julia -------------------------------------------------------------------

  struct JuliaArgs {
    Common common;
    std::string method = "boundary";
    std::string window;
    int res = 256;
    int kmax = 500;
    std::string start;
    std::size_t steps = 2000;
    int branch_window = 3;
    std::string precision = "auto";
    int burn_in = 50;
    std::size_t per_chain = 50;
    std::vector<std::string> points;
    std::string points_csv;
    double rho = 0.05;
    int depth = 30;
  };

  void add_julia(CLI::App& app) {
    auto args = std::make_shared<JuliaArgs>();
    auto* sub = app.add_subcommand("julia", "Julia-set estimates: grid boundary, backward orbits, spreading test");
    add_common(sub, args->common);
    sub->add_option("--method", args->method, "boundary, backward or spreading")
        ->capture_default_str()
        ->check(CLI::IsMember({"boundary", "backward", "spreading"}));
    sub->add_option("--window", args->window, "boundary: grid window; backward: recording window");
    sub->add_option("--res", args->res, "boundary: cells per axis")->capture_default_str();
    sub->add_option("--kmax", args->kmax, "boundary: iteration budget")->capture_default_str();
    sub->add_option("--start", args->start, "backward: starting point x,y[,z]");
    sub->add_option("--steps", args->steps, "backward: recorded points")->capture_default_str();
    sub->add_option("--branch-window", args->branch_window, "backward: largest branch index")->capture_default_str();
    sub->add_option("--precision", args->precision, "backward: auto, double or high")
        ->capture_default_str()
        ->check(CLI::IsMember({"auto", "double", "high"}));
    sub->add_option("--burn-in", args->burn_in, "backward: unrecorded steps per chain")->capture_default_str();
    sub->add_option("--per-chain", args->per_chain, "backward: recorded points per chain")->capture_default_str();
    sub->add_option("--point", args->points, "spreading: test point x,y[,z] (repeatable)");
    sub->add_option("--points-csv", args->points_csv, "spreading: CSV of test points");
    sub->add_option("--rho", args->rho, "spreading: ball radius")->capture_default_str();
    sub->add_option("--depth", args->depth, "spreading: forward iterations")->capture_default_str();
    sub->callback([this, args] { action_ = [this, args] { julia(*args); }; });
  }

  void julia(const JuliaArgs& a) {
    const MapSpec map = build_map(a.common);
    const unsigned threads = resolve_threads(a.common.threads);
    const fs::path base = stem(a.common, "julia_" + a.method);
    auto m = manifest("julia", a.common, &map);
    m.knobs = {{"method", a.method}};
    json summary = {{"command", "julia"}, {"method", a.method}, {"map", map.name}};

    if (a.method == "spreading") {
      std::vector<Point> xs;
      for (const auto& p : a.points) xs.push_back(parse_point(p, map.dimension));
      if (!a.points_csv.empty()) {
        const auto cloud = io::read_points_csv(a.points_csv);
        if (cloud.dim != map.dimension) throw UsageError("--points-csv dimension does not match the map");
        xs.insert(xs.end(), cloud.points.begin(), cloud.points.end());
      }
      if (xs.empty()) throw UsageError("spreading needs --point or --points-csv");
      SpreadingOptions opts;
      opts.threads = threads;
      const auto verdicts = julia::julia_membership_spreading(map, xs, a.rho, a.depth, std::nullopt, 0, opts);
      json rows = json::array();
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const auto& v = verdicts[i];
        rows.push_back({{"point", point_json(xs[i], map.dimension)},
                        {"julia_positive", v.julia_positive},
                        {"coverage_fraction", v.coverage_fraction},
                        {"missed_cells", v.missed_cells},
                        {"cells_total", v.cells_total},
                        {"cells_excluded", v.cells_excluded},
                        {"radius_used", v.radius_used},
                        {"depth_used", v.depth_used},
                        {"threshold", v.threshold}});
      }
      fs::path path = base;
      path += ".json";
      io::write_json(path, {{"verdicts", rows}});
      m.knobs["rho"] = a.rho;
      m.knobs["depth"] = a.depth;
      m.outputs = {path};
      summary["verdicts"] = rows;
      finish(m, base, summary);
      return;
    }

    JuliaSample sample;
    if (a.method == "boundary") {
      if (a.window.empty()) throw UsageError("boundary needs --window");
      const Box window = parse_window(a.window);
      check_dim(map, window);
      const Grid grid =
          window.dim == 3 ? Grid::spatial(window, a.res, a.res, a.res) : Grid::planar(window, a.res, a.res);
      ClassifyBudget budget;
      budget.k_max = a.kmax;
      sample = julia::julia_boundary_estimate(map, dynamics::classify_grid(map, grid, budget, threads));
      m.grid = io::grid_json(grid);
      m.knobs["k_max"] = a.kmax;
    } else {
      if (a.start.empty()) throw UsageError("backward needs --start");
      const Point start = parse_point(a.start, map.dimension);
      julia::BackwardOptions opts;
      opts.burn_in = a.burn_in;
      opts.points_per_chain = a.per_chain;
      opts.threads = threads;
      if (!a.window.empty()) opts.window = parse_window(a.window);
      const bool high = a.precision == "high" || (a.precision == "auto" && map.name == "zorich");
      if (high) {
        if (map.name != "zorich") throw UsageError("--precision high is available for the zorich map only");
        const auto hp = maps::make_zorich<HighPrecision>(map.param("a"), map.param("M"));
        sample = narrow(julia::backward_orbit_sample(hp, BasicPoint<HighPrecision>{start[0], start[1], start[2]},
                                                     a.steps, a.branch_window, a.common.seed, opts));
      } else {
        sample = julia::backward_orbit_sample(map, start, a.steps, a.branch_window, a.common.seed, opts);
      }
      m.knobs.update({{"start", point_json(start, map.dimension)},
                      {"steps", a.steps},
                      {"branch_window", a.branch_window},
                      {"burn_in", a.burn_in},
                      {"points_per_chain", a.per_chain},
                      {"precision", high ? "mpfr-512" : "double"}});
      summary["max_roundtrip_residual"] = sample.max_roundtrip_residual;
      summary["partial"] = sample.partial;
      summary["warnings"] = sample.warnings;
    }
    fs::path csv = base;
    csv += ".csv";
    io::write_points_csv(csv, sample.points, map.dimension);
    m.outputs = {csv};
    summary["points"] = sample.points.size();
    finish(m, base, summary);
  }

  // boxdim ------------------------------------------------------------------

  struct BoxdimArgs {
    Common common;
    std::string csv;
    std::string window;
    std::string scales;
  };

  void add_boxdim(CLI::App& app) {
    auto args = std::make_shared<BoxdimArgs>();
    auto* sub = app.add_subcommand("boxdim", "Box-counting dimension of a CSV point cloud");
    add_common(sub, args->common, false);
    sub->add_option("--csv", args->csv, "Point cloud (x,y[,z] header)")->required();
    sub->add_option("--window", args->window, "Counting window (default: bounding box)");
    sub->add_option("--scales", args->scales, "Cell sizes (default: extent / 8 .. extent / 128)");
    sub->callback([this, args] { action_ = [this, args] { boxdim(*args); }; });
  }

  void boxdim(const BoxdimArgs& a) {
    const auto cloud = io::read_points_csv(a.csv);
    const Box window = a.window.empty() ? bounding_box(cloud.points, cloud.dim, 1e-6) : parse_window(a.window);
    if (window.dim != cloud.dim) throw UsageError("--window dimension does not match the CSV");
    std::vector<double> scales;
    if (a.scales.empty()) {
      double extent = 0.0;
      for (int d = 0; d < window.dim; ++d) extent = std::max(extent, window.extent(d));
      for (double k : {8.0, 16.0, 32.0, 64.0, 128.0}) scales.push_back(extent / k);
    } else {
      scales = parse_list(a.scales, "--scales");
    }
    const auto dim = julia::box_dimension(cloud.points, window, scales);
    const fs::path base = stem(a.common, "boxdim");
    fs::path path = base;
    path += ".json";
    const json report = {{"dimension", dim.dimension}, {"r_squared", dim.r_squared}, {"flagged", dim.flagged},
                         {"scales", dim.scales},       {"counts", dim.counts},       {"points", cloud.points.size()}};
    io::write_json(path, report);
    auto m = manifest("boxdim", a.common, nullptr);
    m.knobs = {{"csv", a.csv}, {"window", io::box_json(window)}};
    m.outputs = {path};
    json summary = report;
    summary["command"] = "boxdim";
    finish(m, base, summary);
  }

  // pits-scan ---------------------------------------------------------------

  struct PitsArgs {
    Common common;
    PitsScanParams params;
    std::string radii = "10,20,40,80";
    double alpha = 0.0;
    bool robustness = false;
    bool samples_csv = false;
  };

  void add_pits(CLI::App& app) {
    auto args = std::make_shared<PitsArgs>();
    auto* sub = app.add_subcommand("pits-scan", "Cover counts of sublevel sets on annuli");
    add_common(sub, args->common);
    sub->add_option("--N", args->params.N, "Cover budget")->capture_default_str();
    sub->add_option("--c", args->params.c, "Annulus ratio")->capture_default_str();
    sub->add_option("--eps", args->params.eps, "Ball radius / R")->capture_default_str();
    sub->add_option("--radii", args->radii, "Comma-separated radii")->capture_default_str();
    sub->add_option("--alpha", args->alpha, "Threshold R^alpha instead of 1");
    sub->add_option("--density", args->params.density, "Lattice points per length R (0: automatic)");
    sub->add_flag("--robustness", args->robustness, "Compare thresholds 1 and R^alpha");
    sub->add_flag("--samples-csv", args->samples_csv, "Write the sublevel samples per radius");
    sub->callback([this, args] { action_ = [this, args] { pits_scan(*args); }; });
  }

  static json pits_json(const PitsReport& r) {
    json records = json::array();
    for (const auto& rec : r.records)
      records.push_back({{"R", rec.R},
                         {"threshold", rec.threshold},
                         {"sampled", rec.sampled},
                         {"sublevel", rec.sublevel},
                         {"cover_upper", rec.cover_upper},
                         {"separated_lower", rec.separated_lower},
                         {"min_modulus", std::isfinite(rec.min_modulus) ? json(rec.min_modulus) : json(nullptr)}});
    json witness = json::array();
    for (const auto& p : r.witness) witness.push_back({p[0], p[1], p[2]});
    return {{"verdict", verdict_name(r.verdict)},
            {"N_used", r.N_used},
            {"c", r.c},
            {"eps", r.eps},
            {"radii_tested", r.radii_tested},
            {"cover_counts", r.cover_counts},
            {"threshold_rule", r.threshold_rule},
            {"records", records},
            {"witness_R", r.witness_R},
            {"witness", witness},
            {"sequence_ratio", std::isfinite(r.sequence_ratio) ? json(r.sequence_ratio) : json(nullptr)}};
  }

  void pits_scan(const PitsArgs& a) {
    const MapSpec map = build_map(a.common);
    PitsScanParams params = a.params;
    params.radii = parse_list(a.radii, "--radii");
    params.threads = resolve_threads(a.common.threads);
    if (a.alpha != 0.0) params.rule = ThresholdRule::power(a.alpha);
    const fs::path base = stem(a.common, "pits");
    auto m = manifest("pits-scan", a.common, &map);
    m.knobs = {{"N", params.N}, {"c", params.c}, {"eps", params.eps}, {"radii", params.radii}, {"alpha", a.alpha},
               {"density", params.density}};
    json report;
    if (a.robustness) {
      if (a.alpha == 0.0) throw UsageError("--robustness needs --alpha");
      const auto r = pits::threshold_robustness(map, params, a.alpha);
      report = {{"agree", r.agree ? json(*r.agree) : json(nullptr)},
                {"unit_threshold", pits_json(r.unit_threshold)},
                {"power_threshold", pits_json(r.power_threshold)}};
    } else {
      report = pits_json(pits::pits_scan(map, params));
    }
    fs::path path = base;
    path += ".json";
    io::write_json(path, report);
    m.outputs = {path};
    if (a.samples_csv) {
      const int density =
          params.density > 0 ? params.density : std::max(32, static_cast<int>(std::ceil(8.0 / params.eps)));
      for (double R : params.radii) {
        std::ostringstream name;
        name << base.filename().string() << "_R" << R << ".csv";
        const fs::path csv = base.parent_path() / name.str();
        io::write_points_csv(csv, pits::sublevel_sample(map, R, params.c, params.rule.at(R), density, params.max_samples),
                             map.dimension);
        m.outputs.push_back(csv);
      }
    }
    json summary = report;
    summary["command"] = "pits-scan";
    summary["map"] = map.name;
    finish(m, base, summary);
  }

  // capacity ----------------------------------------------------------------

  struct CapacityArgs {
    Common common;
    int res = 0;
    CapacityOptions solver;
    bool dump_u = false;
    int dim = 2;
    double inner = 1.0;
    double outer = std::numbers::e;
    double t = 0.5;
    std::string csv;
    std::string window;
  };

  void add_capacity(CLI::App& app) {
    auto args = std::make_shared<CapacityArgs>();
    auto* sub = app.add_subcommand("capacity", "Condenser capacity by n-energy minimization");
    sub->require_subcommand(1);
    sub->fallthrough();
    add_common(sub, args->common, false);
    sub->add_option("--res", args->res, "Cells per axis (default 256 planar, 96 spatial; points: 64 / 32)");
    sub->add_option("--tol", args->solver.tol, "Relative energy decrease over 10 iterations")->capture_default_str();
    sub->add_option("--max-iters", args->solver.max_iters, "Iteration cap per level")->capture_default_str();
    sub->add_flag("--dump-u", args->dump_u, "Write the potential as PGM");

    auto* ring = sub->add_subcommand("ring", "B(0, outer) against the closed B(0, inner)");
    ring->add_option("--inner", args->inner, "Plate radius")->capture_default_str();
    ring->add_option("--outer", args->outer, "Domain radius")->capture_default_str();
    ring->add_option("--dim", args->dim, "2 or 3")->capture_default_str()->check(CLI::IsMember({2, 3}));
    ring->callback([this, args] { action_ = [this, args] { capacity(*args, "ring"); }; });

    auto* groetzsch = sub->add_subcommand("grotzsch", "Unit ball against the segment [0, t e1]");
    groetzsch->add_option("--t", args->t, "Segment length in (0, 1)")->capture_default_str();
    groetzsch->add_option("--dim", args->dim, "2 or 3")->capture_default_str()->check(CLI::IsMember({2, 3}));
    groetzsch->callback([this, args] { action_ = [this, args] { capacity(*args, "grotzsch"); }; });

    auto* points = sub->add_subcommand("points", "Positivity heuristic for a CSV point set");
    points->add_option("--csv", args->csv, "Point cloud (x,y[,z] header)")->required();
    points->add_option("--window", args->window, "Domain window (default: bounding box + 5%)");
    points->callback([this, args] { action_ = [this, args] { capacity(*args, "points"); }; });
  }

  static json solve_json(const CapacityResult& r) {
    return {{"value", r.value},         {"regularized_energy", r.regularized_energy}, {"iterations", r.iterations},
            {"gradient_norm", r.gradient_norm}, {"u_min", r.u_min},              {"u_max", r.u_max}};
  }

  void capacity(const CapacityArgs& a, const std::string& shape) {
    if (a.dump_u && shape != "ring") throw UsageError("--dump-u is available for ring condensers");
    CapacityOptions solver = a.solver;
    solver.threads = resolve_threads(a.common.threads);
    const fs::path base = stem(a.common, "capacity_" + shape);
    auto m = manifest("capacity", a.common, nullptr);
    m.knobs = {{"shape", shape}, {"tol", solver.tol}, {"max_iters", solver.max_iters}};
    json report = {{"shape", shape}};
    std::optional<Condenser> state;

    if (shape == "points") {
      const auto cloud = io::read_points_csv(a.csv);
      const Box window = a.window.empty() ? bounding_box(cloud.points, cloud.dim, 0.05) : parse_window(a.window);
      if (window.dim != cloud.dim) throw UsageError("--window dimension does not match the CSV");
      const int res = a.res > 0 ? a.res : (cloud.dim == 2 ? 64 : 32);
      capacity::PositivityOptions opts;
      opts.solver = solver;
      const auto r = capacity::capacity_positive_heuristic(cloud.points, window, res, opts);
      report.update({{"verdict", capacity::positivity_name(r.verdict)},
                     {"value", r.value},
                     {"coarse_value", r.coarse_value},
                     {"point_index", r.point_index},
                     {"floor", r.floor},
                     {"resolution", res},
                     {"points", cloud.points.size()}});
      m.knobs.update({{"csv", a.csv}, {"window", io::box_json(window)}, {"resolution", res}});
    } else {
      const int res = a.res > 0 ? a.res : (a.dim == 2 ? 256 : 96);
      Condenser cond;
      if (shape == "ring") {
        const auto geo = capacity::ring_geometry(a.dim, a.inner, a.outer, res);
        report["solve"] = solve_json(capacity::solve_capacity(geo, res, solver, &cond));
        report["exact"] = capacity::ring_capacity_exact(a.dim, a.inner, a.outer);
        m.knobs.update({{"inner", a.inner}, {"outer", a.outer}});
      } else {
        const auto q = capacity::grotzsch_capacity(a.t, a.dim, res, solver);
        report.update({{"t", q.t}, {"cap_value", q.cap_value},
                       {"lower_bound", q.lower_bound ? json(*q.lower_bound) : json(nullptr)}, {"solve", solve_json(q.solve)}});
        m.knobs["t"] = a.t;
      }
      report.update({{"dim", a.dim}, {"resolution", res}});
      m.knobs.update({{"dim", a.dim}, {"resolution", res}});
      state = std::move(cond);
    }
    fs::path path = base;
    path += ".json";
    io::write_json(path, report);
    m.outputs = {path};
    if (a.dump_u) {
      const Condenser& c = *state;
      const Grid grid = c.dim == 3 ? Grid::spatial(c.window, c.res, c.res, c.res) : Grid::planar(c.window, c.res, c.res);
      fs::path ustem = base;
      ustem += "_u";
      const auto images = io::write_grid_images(ustem, grid, [&](std::size_t i) {
        return static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(c.u[i], 0.0, 1.0)));
      });
      m.outputs.insert(m.outputs.end(), images.begin(), images.end());
      m.grid = io::grid_json(grid);
    }
    json summary = report;
    summary["command"] = "capacity";
    finish(m, base, summary);
  }

  // dilatation / harnack ----------------------------------------------------

  struct DilatationArgs {
    Common common;
    std::string window;
    std::size_t samples = 10000;
  };

  void add_dilatation(CLI::App& app) {
    auto args = std::make_shared<DilatationArgs>();
    auto* sub = app.add_subcommand("dilatation", "Sampled outer and inner dilatation over a region");
    add_common(sub, args->common);
    sub->add_option("--window", args->window, "Region x0,x1,y0,y1[,z0,z1]")->required();
    sub->add_option("--samples", args->samples, "Sample count")->capture_default_str();
    sub->callback([this, args] { action_ = [this, args] { dilatation(*args); }; });
  }

  void dilatation(const DilatationArgs& a) {
    const MapSpec map = build_map(a.common);
    const Box window = parse_window(a.window);
    check_dim(map, window);
    calculus::DilatationOptions opts;
    opts.threads = resolve_threads(a.common.threads);
    const auto r = calculus::estimate_dilatation(map, window, a.samples, opts);
    const json report = {{"K_O_est", r.K_O_est},
                         {"K_I_est", r.K_I_est},
                         {"K_est", r.K_est},
                         {"sample_count", r.sample_count},
                         {"excluded_count", r.excluded_count}};
    const fs::path base = stem(a.common, "dilatation");
    fs::path path = base;
    path += ".json";
    io::write_json(path, report);
    auto m = manifest("dilatation", a.common, &map);
    m.knobs = {{"window", io::box_json(window)}, {"samples", a.samples}};
    m.outputs = {path};
    json summary = report;
    summary["command"] = "dilatation";
    summary["map"] = map.name;
    finish(m, base, summary);
  }

  struct HarnackArgs {
    Common common;
    std::string center;
    double radius = 1.0;
    std::size_t samples = 2000;
  };

  void add_harnack(CLI::App& app) {
    auto args = std::make_shared<HarnackArgs>();
    auto* sub = app.add_subcommand("harnack", "Ratio sup log|f| / inf log|f| over a ball");
    add_common(sub, args->common);
    sub->add_option("--center", args->center, "Ball center x,y[,z]")->required();
    sub->add_option("--radius", args->radius, "Ball radius")->capture_default_str();
    sub->add_option("--samples", args->samples, "Sample count")->capture_default_str();
    sub->callback([this, args] { action_ = [this, args] { harnack(*args); }; });
  }

  void harnack(const HarnackArgs& a) {
    const MapSpec map = build_map(a.common);
    const Point center = parse_point(a.center, map.dimension);
    const auto r = calculus::harnack_ratio(map, center, a.radius, a.samples);
    const json report = {{"theta_est", r.theta_est},
                         {"center", point_json(r.center, map.dimension)},
                         {"radius", r.radius},
                         {"valid", r.valid},
                         {"ill_conditioned", r.ill_conditioned}};
    const fs::path base = stem(a.common, "harnack");
    fs::path path = base;
    path += ".json";
    io::write_json(path, report);
    auto m = manifest("harnack", a.common, &map);
    m.knobs = {{"center", point_json(center, map.dimension)}, {"radius", a.radius}, {"samples", a.samples}};
    m.outputs = {path};
    json summary = report;
    summary["command"] = "harnack";
    summary["map"] = map.name;
    finish(m, base, summary);
  }
};

inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return Runner(out, err).run(argc, argv);
}

}  // namespace qrdyn::cli
