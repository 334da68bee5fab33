#pragma once

#include <deque>
#include <numeric>
#include <unordered_set>

#include "dynamics.hpp"

namespace qrdyn {

enum class JuliaMethod { Boundary, Backward, Spreading };

inline const char* method_name(JuliaMethod m) {
  switch (m) {
    case JuliaMethod::Boundary: return "boundary";
    case JuliaMethod::Backward: return "backward";
    case JuliaMethod::Spreading: return "spreading";
  }
  return "?";
}

/// Point-cloud estimate of a Julia set together with the estimator settings
/// that produced it.
template <class T>
struct BasicJuliaSample {
  std::vector<BasicPoint<T>> points;
  JuliaMethod method = JuliaMethod::Boundary;
  std::string map_id;
  std::map<std::string, double> params;
  Box window;
  /// Largest |f(x_k) - x_{k-1}| over recorded backward steps.
  double max_roundtrip_residual = 0.0;
  /// Set when some chain left every branch domain before finishing.
  bool partial = false;
  std::vector<std::string> warnings;
};

using JuliaSample = BasicJuliaSample<double>;

template <class T>
JuliaSample narrow(const BasicJuliaSample<T>& s) {
  JuliaSample out;
  out.points.reserve(s.points.size());
  for (const auto& p : s.points)
    out.points.push_back({static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2])});
  out.method = s.method;
  out.map_id = s.map_id;
  out.params = s.params;
  out.window = s.window;
  out.max_roundtrip_residual = s.max_roundtrip_residual;
  out.partial = s.partial;
  out.warnings = s.warnings;
  return out;
}

struct SpreadingVerdict {
  bool julia_positive = false;
  double coverage_fraction = 0.0;
  std::size_t missed_cells = 0;
  double radius_used = 0.0;
  int depth_used = 0;
  std::size_t cells_total = 0;     // reference cells plus the far cell
  std::size_t cells_excluded = 0;  // cells holding omitted values
  double threshold = 0.95;
};

struct SpreadingOptions {
  double coverage_threshold = 0.95;
  std::size_t exceptional_cells = 8;
  /// Cap on the number of pushed-forward orbits (centers plus companions).
  std::size_t orbit_budget = 1'000'000;
  /// Initial sub-cubes per axis of the ball's bounding cube; 0 picks 16 in 2D
  /// and 8 in 3D.
  int initial_subdivision = 0;
  /// Stop as soon as the threshold is met.
  bool stop_when_positive = true;
  unsigned threads = 1;
};

namespace julia {

inline Box default_reference_window(int dim) { return Box::around(Point{}, 50.0, dim); }
inline int default_reference_resolution(int dim) { return dim == 3 ? 48 : 128; }

/// Pushes an adaptively refined sample of B(x, rho) through up to `depth`
/// iterations and records which cells of the reference grid are hit. Points
/// outside the window hit a single virtual far cell.
///
/// The ball is cut into sub-cubes, each represented by its center. A sub-cube
/// is split in 2^n children when, at some step inside the window, the images
/// of its center and of its axis companions are more than one reference cell
/// apart. Children are processed coarse level first.
inline SpreadingVerdict julia_membership_spreading(const MapSpec& map, const Point& x, double rho, int depth = 30,
                                                   std::optional<Box> ref_window = std::nullopt,
                                                   int ref_resolution = 0, const SpreadingOptions& opts = {}) {
  if (!(rho > 0.0)) throw ParameterError("spreading: radius must be positive");
  if (depth < 1) throw ParameterError("spreading: depth must be at least 1");
  const int dim = map.dimension;
  const Box window = ref_window.value_or(default_reference_window(dim));
  const int res = ref_resolution > 0 ? ref_resolution : default_reference_resolution(dim);
  const Grid grid = dim == 3 ? Grid::spatial(window, res, res, res) : Grid::planar(window, res, res);
  double cell = 0.0;
  for (int a = 0; a < dim; ++a) cell = std::max(cell, grid.cell_size(a));

  auto cell_of = [&](const Point& p) -> std::optional<std::size_t> {
    if (!window.contains(p)) return std::nullopt;
    std::array<int, 3> c{0, 0, 0};
    for (int a = 0; a < dim; ++a)
      c[a] = std::clamp(static_cast<int>((p[a] - window.lo[a]) / grid.cell_size(a)), 0, res - 1);
    return grid.index(c[0], c[1], c[2]);
  };

  SpreadingVerdict v;
  v.radius_used = rho;
  v.depth_used = depth;
  v.threshold = opts.coverage_threshold;
  v.cells_total = grid.size() + 1;

  std::vector<char> state(grid.size(), 0);  // 0 unhit, 1 hit, 2 excluded
  for (const auto& w : map.omitted_values)
    if (const auto c = cell_of(w)) state[*c] = 2;
  v.cells_excluded = static_cast<std::size_t>(std::count(state.begin(), state.end(), 2));
  const std::size_t counted = v.cells_total - v.cells_excluded;

  std::size_t hit = 0;
  bool far = false;
  auto covered = [&] {
    const std::size_t h = hit + (far ? 1 : 0);
    const std::size_t forgiven = std::min(counted - h, opts.exceptional_cells);
    return static_cast<double>(h + forgiven) / static_cast<double>(counted);
  };

  struct Piece {
    Point center;
    double size;
  };
  std::deque<Piece> queue;
  const int init = opts.initial_subdivision > 0 ? opts.initial_subdivision : (dim == 3 ? 8 : 16);
  const double s0 = 2.0 * rho / init;
  for (int i = 0; i < init; ++i)
    for (int j = 0; j < init; ++j)
      for (int k = 0; k < (dim == 3 ? init : 1); ++k) {
        Point c = x;
        c[0] += -rho + (i + 0.5) * s0;
        c[1] += -rho + (j + 0.5) * s0;
        if (dim == 3) c[2] += -rho + (k + 0.5) * s0;
        if (dist(c, x) <= rho) queue.push_back({c, s0});
      }

  std::size_t orbits = 0;
  std::vector<Point> companions(static_cast<std::size_t>(dim));
  while (!queue.empty() && orbits < opts.orbit_budget) {
    const Piece piece = queue.front();
    queue.pop_front();
    Point z = piece.center;
    for (int a = 0; a < dim; ++a) {
      companions[a] = z;
      companions[a][a] += 0.5 * piece.size;
    }
    orbits += 1 + static_cast<std::size_t>(dim);
    bool refine = false;
    for (int k = 0; k < depth; ++k) {
      z = map(z);
      if (!std::isfinite(z[0]) || !std::isfinite(z[1]) || !std::isfinite(z[2])) break;
      double spread = 0.0;
      for (auto& e : companions) {
        e = map(e);
        spread = std::max(spread, dist(z, e));
      }
      if (const auto c = cell_of(z)) {
        if (state[*c] == 0) {
          state[*c] = 1;
          ++hit;
        }
        if (!(spread < cell)) refine = true;
      } else {
        far = true;
      }
      bool settled = false;
      for (const auto& a : map.attractors) settled |= dist(z, a) < 1e-9;
      if (settled) break;
    }
    if (opts.stop_when_positive && covered() >= v.threshold) break;
    if (!refine) continue;
    const double s = 0.5 * piece.size;
    for (int m = 0; m < (1 << dim); ++m) {
      Point c = piece.center;
      for (int a = 0; a < dim; ++a) c[a] += ((m >> a) & 1 ? 0.5 : -0.5) * s;
      if (dist(c, x) <= rho) queue.push_back({c, s});
    }
  }

  v.missed_cells = counted - hit - (far ? 1 : 0);
  v.coverage_fraction = covered();
  v.julia_positive = v.coverage_fraction >= v.threshold;
  return v;
}

/// Verdicts for several points, one worker per point.
inline std::vector<SpreadingVerdict> julia_membership_spreading(const MapSpec& map, const std::vector<Point>& xs,
                                                                double rho, int depth, std::optional<Box> ref_window,
                                                                int ref_resolution, const SpreadingOptions& opts) {
  std::vector<SpreadingVerdict> out(xs.size());
  SpreadingOptions inner = opts;
  inner.threads = 1;
  parallel_for(xs.size(), resolve_threads(opts.threads), [&](std::size_t i) {
    out[i] = julia_membership_spreading(map, xs[i], rho, depth, ref_window, ref_resolution, inner);
  });
  return out;
}

/// Centers of cells whose closed neighbourhood holds both an Escaping cell
/// and a Bounded or Basin cell.
inline JuliaSample julia_boundary_estimate(const MapSpec& map, const LabeledGrid& labeled) {
  const Grid& grid = labeled.grid;
  if (grid.size() == 0 || labeled.cells.size() != grid.size())
    throw ParameterError("julia_boundary_estimate: grid is not labeled");
  JuliaSample out;
  out.method = JuliaMethod::Boundary;
  out.map_id = map.name;
  out.params = map.params;
  out.window = grid.window;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    const auto c = grid.coords(idx);
    bool escaping = false, bounded = false;
    for (int dk = -1; dk <= 1; ++dk)
      for (int dj = -1; dj <= 1; ++dj)
        for (int di = -1; di <= 1; ++di) {
          const int i = c[0] + di, j = c[1] + dj, k = c[2] + dk;
          if (i < 0 || j < 0 || k < 0 || i >= grid.res[0] || j >= grid.res[1] || k >= grid.res[2]) continue;
          const Label l = labeled.cells[grid.index(i, j, k)].label;
          escaping |= l == Label::Escaping;
          bounded |= l == Label::Bounded || l == Label::Basin;
        }
    if (escaping && bounded) out.points.push_back(grid.center(idx));
  }
  return out;
}

struct BackwardOptions {
  int burn_in = 50;
  std::size_t points_per_chain = 50;
  /// Bound on |f(x_k) - x_{k-1}| relative to max(1, |x_{k-1}|).
  double roundtrip_tolerance = 1e-6;
  /// Newton restarts per step for maps without explicit branches.
  int newton_attempts = 8;
  /// Points outside this box are not recorded. Empty: record everything.
  std::optional<Box> window;
  unsigned threads = 1;
};

namespace detail {

/// Solves f(z) = y by damped Newton from `start` with a finite-difference
/// Jacobian.
inline std::optional<Point> newton_preimage(const MapSpec& map, const Point& y, Point z) {
  const int n = map.dimension;
  for (int it = 0; it < 60; ++it) {
    const Point fz = map(z);
    Eigen::VectorXd r(n);
    for (int i = 0; i < n; ++i) r(i) = fz[i] - y[i];
    if (!r.allFinite()) return std::nullopt;
    if (r.norm() < 1e-12 * std::max(1.0, norm(y))) return z;
    const Matrix jac = calculus::derivative_matrix(map, z);
    const Eigen::VectorXd step = jac.fullPivLu().solve(r);
    if (!step.allFinite()) return std::nullopt;
    double t = 1.0;
    bool moved = false;
    for (int h = 0; h < 30 && !moved; ++h, t *= 0.5) {
      Point trial = z;
      for (int i = 0; i < n; ++i) trial[i] -= t * step(i);
      const Point ft = map(trial);
      double rt = 0.0;
      for (int i = 0; i < n; ++i) rt += (ft[i] - y[i]) * (ft[i] - y[i]);
      if (std::sqrt(rt) < r.norm()) {
        z = trial;
        moved = true;
      }
    }
    if (!moved) return std::nullopt;
  }
  return std::nullopt;
}

}  // namespace detail

/// Chaos game on the inverse branches: each chain starts at the seed, applies
/// a uniformly chosen admissible branch per step and records its points after
/// the burn-in. Maps without explicit branches are inverted locally by Newton
/// started at a random offset (within branch_window per axis) from the
/// previous pullback. Chains use independent streams of rng_seed and are
/// merged in chain order.
template <class T>
BasicJuliaSample<T> backward_orbit_sample(const BasicMapSpec<T>& map, const BasicPoint<T>& seed, std::size_t steps,
                                          int branch_window, std::uint64_t rng_seed, const BackwardOptions& opts = {}) {
  if (steps == 0 || opts.points_per_chain == 0) throw ParameterError("backward_orbit_sample: nothing to record");
  if (branch_window < 0) throw ParameterError("backward_orbit_sample: branch window must be non-negative");
  Point seed_d{static_cast<double>(seed[0]), static_cast<double>(seed[1]), static_cast<double>(seed[2])};
  for (const auto& w : map.omitted_values)
    if (dist(seed_d, w) < 1e-12) throw DomainError("backward_orbit_sample: seed is an omitted value");
  const auto branches = map.inverse_branches ? map.inverse_branches(branch_window) : std::vector<InverseBranch<T>>{};
  if constexpr (!std::is_same_v<T, double>) {
    if (branches.empty()) throw ParameterError("backward_orbit_sample: high precision needs explicit branches");
  }

  const std::size_t chains = (steps + opts.points_per_chain - 1) / opts.points_per_chain;
  struct ChainResult {
    std::vector<BasicPoint<T>> points;
    double residual = 0.0;
    bool stopped = false;
  };
  std::vector<ChainResult> results(chains);

  parallel_for(chains, resolve_threads(opts.threads), [&](std::size_t c) {
    ChainResult& out = results[c];
    const std::size_t want = std::min(opts.points_per_chain, steps - c * opts.points_per_chain);
    std::mt19937_64 rng(split_seed(rng_seed, c));
    BasicPoint<T> x = seed;

    auto accept = [&](const BasicPoint<T>& prev, const BasicPoint<T>& cand) -> std::optional<double> {
      const T scale = std::max(T(1), norm(prev));
      const double r = static_cast<double>(norm(map(cand) - prev) / scale);
      if (!(r <= opts.roundtrip_tolerance)) return std::nullopt;
      return r;
    };

    auto pull_back = [&](const BasicPoint<T>& y) -> std::optional<std::pair<BasicPoint<T>, double>> {
      if (!branches.empty()) {
        std::vector<std::size_t> order(branches.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b : order) {
          const auto cand = branches[b].apply(y);
          if (!cand) continue;
          if (const auto r = accept(y, *cand)) return std::pair{*cand, *r};
        }
        return std::nullopt;
      }
      if constexpr (std::is_same_v<T, double>) {
        std::uniform_real_distribution<double> offset(-static_cast<double>(branch_window),
                                                      static_cast<double>(branch_window));
        for (int attempt = 0; attempt < opts.newton_attempts; ++attempt) {
          Point start = y;
          for (int a = 0; a < map.dimension; ++a) start[a] += offset(rng);
          const auto cand = detail::newton_preimage(map, y, start);
          if (!cand) continue;
          if (const auto r = accept(y, *cand)) return std::pair{*cand, *r};
        }
      }
      return std::nullopt;
    };

    for (int k = 0; out.points.size() < want; ++k) {
      const auto next = pull_back(x);
      if (!next) {
        out.stopped = true;
        return;
      }
      x = next->first;
      if (k < opts.burn_in) continue;
      out.residual = std::max(out.residual, next->second);
      if (opts.window) {
        const Point xd{static_cast<double>(x[0]), static_cast<double>(x[1]), static_cast<double>(x[2])};
        if (!opts.window->contains(xd)) continue;
      }
      out.points.push_back(x);
    }
  });

  BasicJuliaSample<T> sample;
  sample.method = JuliaMethod::Backward;
  sample.map_id = map.name;
  sample.params = map.params;
  sample.params["steps"] = static_cast<double>(steps);
  sample.params["branch_window"] = branch_window;
  sample.params["rng_seed"] = static_cast<double>(rng_seed);
  sample.params["burn_in"] = opts.burn_in;
  sample.params["chains"] = static_cast<double>(chains);
  for (std::size_t c = 0; c < chains; ++c) {
    auto& r = results[c];
    sample.points.insert(sample.points.end(), r.points.begin(), r.points.end());
    sample.max_roundtrip_residual = std::max(sample.max_roundtrip_residual, r.residual);
    if (r.stopped) {
      sample.partial = true;
      sample.warnings.push_back("chain " + std::to_string(c) + " left every branch domain after " +
                                std::to_string(r.points.size()) + " recorded points");
    }
  }
  if (opts.window) {
    sample.window = *opts.window;
  } else {
    sample.window = Box{{}, {}, map.dimension};
    for (int a = 0; a < map.dimension; ++a) {
      sample.window.lo[a] = std::numeric_limits<double>::infinity();
      sample.window.hi[a] = -std::numeric_limits<double>::infinity();
    }
    for (const auto& p : sample.points)
      for (int a = 0; a < map.dimension; ++a) {
        sample.window.lo[a] = std::min(sample.window.lo[a], static_cast<double>(p[a]));
        sample.window.hi[a] = std::max(sample.window.hi[a], static_cast<double>(p[a]));
      }
  }
  return sample;
}

struct BoxDimension {
  double dimension = 0.0;
  double r_squared = 0.0;
  /// Fit quality below 0.9.
  bool flagged = false;
  std::vector<double> scales;
  std::vector<std::size_t> counts;
};

/// Least-squares slope of log(occupied cells) against log(1 / cell size).
/// Points outside the window are ignored.
inline BoxDimension box_dimension(const std::vector<Point>& points, const Box& window, std::vector<double> scales) {
  if (points.size() < 1000) throw ParameterError("box_dimension: need at least 1000 points");
  if (scales.size() < 4) throw ParameterError("box_dimension: need at least 4 scales");
  std::sort(scales.begin(), scales.end());
  if (!(scales.front() > 0.0) || scales.back() / scales.front() < 4.0)
    throw ParameterError("box_dimension: scales must be positive and span at least 2 octaves");

  BoxDimension out;
  out.scales = scales;
  std::vector<double> xs, ys;
  for (double s : scales) {
    std::unordered_set<std::uint64_t> occupied;
    for (const auto& p : points) {
      if (!window.contains(p)) continue;
      std::uint64_t key = 0;
      for (int a = 0; a < window.dim; ++a) {
        const auto c = static_cast<std::uint64_t>(std::floor((p[a] - window.lo[a]) / s));
        key = key * 0x100000001b3ULL + c;
      }
      occupied.insert(key);
    }
    out.counts.push_back(occupied.size());
    xs.push_back(std::log(1.0 / s));
    ys.push_back(std::log(static_cast<double>(std::max<std::size_t>(occupied.size(), 1))));
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  out.dimension = sxy / sxx;
  out.r_squared = syy > 0.0 ? sxy * sxy / (sxx * syy) : 0.0;
  out.flagged = out.r_squared < 0.9;
  return out;
}

inline BoxDimension box_dimension(const JuliaSample& sample, const Box& window, std::vector<double> scales) {
  return box_dimension(sample.points, window, std::move(scales));
}

}  // namespace julia
}  // namespace qrdyn
