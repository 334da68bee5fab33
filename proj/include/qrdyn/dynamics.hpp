#pragma once

#include <Eigen/Eigenvalues>

#include "calculus.hpp"

namespace qrdyn {

enum class Label : std::uint8_t { Escaping, Bounded, Basin, Undecided };

inline const char* label_name(Label l) {
  switch (l) {
    case Label::Escaping: return "Escaping";
    case Label::Bounded: return "Bounded";
    case Label::Basin: return "Basin";
    case Label::Undecided: return "Undecided";
  }
  return "?";
}

/// Per-point verdict. Bounded is finite-horizon: the orbit stayed in the
/// bound ball for iterations_used steps.
struct OrbitClass {
  Label label = Label::Undecided;
  int basin_id = -1;  // index into MapSpec::attractors when label == Basin
  int iterations_used = 0;
  double witness = 0.0;  // exit modulus, distance to the attractor, or max modulus

  bool operator==(const OrbitClass&) const = default;
};

struct ClassifyBudget {
  int k_max = 500;
  double escape_threshold = 1e10;
  double bound_threshold = 1e4;
  double basin_tol = 1e-6;
};

/// Sampling lattice of cell centers over a box; x varies fastest.
struct Grid {
  Box window;
  std::array<int, 3> res{1, 1, 1};

  static Grid planar(const Box& window, int nx, int ny) { return {window, {nx, ny, 1}}; }
  static Grid spatial(const Box& window, int nx, int ny, int nz) { return {window, {nx, ny, nz}}; }

  std::size_t size() const {
    return static_cast<std::size_t>(res[0]) * static_cast<std::size_t>(res[1]) * static_cast<std::size_t>(res[2]);
  }
  double cell_size(int axis) const { return window.extent(axis) / res[axis]; }
  std::array<int, 3> coords(std::size_t index) const {
    const int i = static_cast<int>(index % res[0]);
    const int j = static_cast<int>((index / res[0]) % res[1]);
    const int k = static_cast<int>(index / (static_cast<std::size_t>(res[0]) * res[1]));
    return {i, j, k};
  }
  std::size_t index(int i, int j, int k = 0) const {
    return static_cast<std::size_t>(i) +
           static_cast<std::size_t>(res[0]) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(res[1]) * k);
  }
  Point center(std::size_t index) const {
    const auto c = coords(index);
    Point p{};
    for (int a = 0; a < window.dim; ++a) p[a] = window.lo[a] + (c[a] + 0.5) * cell_size(a);
    return p;
  }
};

struct LabeledGrid {
  Grid grid;
  std::vector<OrbitClass> cells;
};

namespace dynamics {

struct Orbit {
  std::vector<Point> points;
  bool truncated = false;  // stopped on overflow
};

inline Orbit iterate(const MapSpec& map, const Point& x, int k) {
  if (k < 0) throw ParameterError("iterate: k must be non-negative");
  Orbit orbit;
  orbit.points.reserve(static_cast<std::size_t>(k) + 1);
  orbit.points.push_back(x);
  for (int j = 0; j < k; ++j) {
    const Point next = map(orbit.points.back());
    const double m = norm(next);
    if (!std::isfinite(m) || m > 1e300) {
      orbit.truncated = true;
      break;
    }
    orbit.points.push_back(next);
  }
  return orbit;
}

/// Escaping if the modulus exceeds the escape threshold (or overflows) or the
/// map's escape certificate region is entered; Basin(i) on reaching
/// basin_tol of attractor i; Bounded if the whole orbit stayed inside the
/// bound ball; Undecided otherwise.
template <class T>
OrbitClass classify_point(const BasicMapSpec<T>& map, BasicPoint<T> x, const ClassifyBudget& budget = {}) {
  using std::isfinite;
  OrbitClass out;
  double max_modulus = 0.0;
  bool left_bound = false;
  for (int k = 0;; ++k) {
    const T modulus = norm(x);
    const double m = static_cast<double>(modulus);
    if (!isfinite(modulus) || m > budget.escape_threshold ||
        (map.escape_certificate && map.escape_certificate->contains(x))) {
      return {Label::Escaping, -1, k, m};
    }
    for (std::size_t i = 0; i < map.attractors.size(); ++i) {
      const double d = static_cast<double>(norm(x - map.attractors[i]));
      if (d < budget.basin_tol) return {Label::Basin, static_cast<int>(i), k, d};
    }
    max_modulus = std::max(max_modulus, m);
    if (m > budget.bound_threshold) left_bound = true;
    if (k == budget.k_max) {
      out.iterations_used = k;
      out.witness = left_bound ? m : max_modulus;
      out.label = left_bound ? Label::Undecided : Label::Bounded;
      return out;
    }
    x = map(x);
  }
}

/// Classifies every cell center. Cells are independent, so the output does
/// not depend on the worker count.
inline LabeledGrid classify_grid(const MapSpec& map, const Grid& grid, const ClassifyBudget& budget = {},
                                 unsigned threads = 0) {
  if (grid.size() == 0) throw ParameterError("classify_grid: empty grid");
  LabeledGrid out{grid, std::vector<OrbitClass>(grid.size())};
  parallel_for(grid.size(), resolve_threads(threads),
               [&](std::size_t i) { out.cells[i] = classify_point(map, grid.center(i), budget); });
  return out;
}

enum class Stability : std::uint8_t { Attracting, Repelling, Neutral };

inline const char* stability_name(Stability s) {
  switch (s) {
    case Stability::Attracting: return "attracting";
    case Stability::Repelling: return "repelling";
    case Stability::Neutral: return "neutral-undetermined";
  }
  return "?";
}

struct FixedPointRecord {
  Point location{};
  int period = 1;
  double multiplier_estimate = 0.0;  // spectral radius of D(f^period)
  Stability stability = Stability::Neutral;
  double residual = 0.0;
};

struct FixedPointSearch {
  std::vector<FixedPointRecord> records;
  /// More than half of the seeds converged to distinct fixed points.
  bool continuum = false;
  std::size_t seeds_used = 0;
  std::size_t seeds_converged = 0;
};

struct FixedPointOptions {
  int max_newton_steps = 200;
  double accept_residual = 1e-9;
  /// Records closer than dedup_tol * max(1, |x|) are merged.
  double dedup_tol = 1e-6;
  std::size_t record_cap = 50;
};

namespace detail {

inline Point iterate_n(const MapSpec& map, Point x, int n) {
  for (int i = 0; i < n; ++i) x = map(x);
  return x;
}

inline double spectral_radius(const Matrix& m) {
  Eigen::EigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(m), false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// Damped Newton on G(x) = f^p(x) - x with finite-difference Jacobians.
inline std::optional<Point> newton_periodic(const MapSpec& map, Point x, int period, const FixedPointOptions& opts) {
  const int n = map.dimension;
  auto residual_vec = [&](const Point& p) { return iterate_n(map, p, period) - p; };
  auto fp = [&](const Point& p) { return iterate_n(map, p, period); };
  Point g = residual_vec(x);
  double res = norm(g);
  for (int step = 0; step < opts.max_newton_steps && std::isfinite(res); ++step) {
    if (res == 0.0) break;
    Matrix jac = calculus::derivative_matrix(fp, n, x, calculus::default_step(x));
    jac -= Matrix::Identity(n, n);
    Eigen::VectorXd rhs(n);
    for (int i = 0; i < n; ++i) rhs(i) = -g[i];
    const Eigen::VectorXd delta = jac.fullPivLu().solve(rhs);
    if (!delta.allFinite()) break;
    Point d{};
    for (int i = 0; i < n; ++i) d[i] = delta(i);
    double scale = 1.0;
    bool accepted = false;
    for (int halving = 0; halving < 40; ++halving, scale *= 0.5) {
      const Point trial = x + scale * d;
      const Point gt = residual_vec(trial);
      const double rt = norm(gt);
      if (std::isfinite(rt) && rt < res) {
        x = trial;
        g = gt;
        res = rt;
        accepted = true;
        break;
      }
    }
    if (!accepted || scale * norm(d) < 1e-15 * std::max(1.0, norm(x))) break;
  }
  if (std::isfinite(res) && res < opts.accept_residual) return x;
  return std::nullopt;
}

}  // namespace detail

/// Periodic points of the given period inside a box, from a seed lattice.
inline FixedPointSearch find_fixed_points(const MapSpec& map, const Box& region, int period, std::size_t seeds,
                                          const FixedPointOptions& opts = {}) {
  if (period < 1) throw ParameterError("find_fixed_points: period must be >= 1");
  FixedPointSearch out;
  const int dim = map.dimension;
  // Lattice over the non-degenerate axes only.
  int live_axes = 0;
  for (int a = 0; a < dim; ++a)
    if (region.extent(a) > 0.0) ++live_axes;
  const int per_axis = std::max(
      1, static_cast<int>(std::floor(std::pow(static_cast<double>(seeds), 1.0 / std::max(1, live_axes)) + 1e-9)));
  std::array<int, 3> counts{1, 1, 1};
  for (int a = 0; a < dim; ++a) counts[a] = region.extent(a) > 0.0 ? per_axis : 1;
  std::vector<Point> found;
  for (int k = 0; k < counts[2]; ++k) {
    for (int j = 0; j < counts[1]; ++j) {
      for (int i = 0; i < counts[0]; ++i) {
        const std::array<int, 3> idx{i, j, k};
        Point seed{};
        for (int a = 0; a < dim; ++a)
          seed[a] = region.lo[a] + (idx[a] + 0.5) * region.extent(a) / counts[a];
        ++out.seeds_used;
        const auto root = detail::newton_periodic(map, seed, period, opts);
        if (!root) continue;
        Box slack = region;
        for (int a = 0; a < dim; ++a) {
          const double pad = 1e-9 * std::max(1.0, std::abs(region.lo[a]) + std::abs(region.hi[a]));
          slack.lo[a] -= pad;
          slack.hi[a] += pad;
        }
        if (!slack.contains(*root)) continue;
        ++out.seeds_converged;
        found.push_back(*root);
      }
    }
  }
  std::vector<Point> distinct;
  for (const auto& p : found) {
    const bool seen = std::any_of(distinct.begin(), distinct.end(), [&](const Point& q) {
      return dist(p, q) < opts.dedup_tol * std::max(1.0, norm(p));
    });
    if (!seen) distinct.push_back(p);
  }
  out.continuum = distinct.size() * 2 > out.seeds_used;
  for (const auto& p : distinct) {
    if (out.records.size() >= opts.record_cap) break;
    FixedPointRecord rec;
    rec.location = p;
    rec.period = period;
    rec.residual = norm(detail::iterate_n(map, p, period) - p);
    auto fp = [&](const Point& x) { return detail::iterate_n(map, x, period); };
    rec.multiplier_estimate =
        detail::spectral_radius(calculus::derivative_matrix(fp, dim, p, calculus::default_step(p)));
    rec.stability = rec.multiplier_estimate < 1.0 - 1e-6   ? Stability::Attracting
                    : rec.multiplier_estimate > 1.0 + 1e-6 ? Stability::Repelling
                                                           : Stability::Neutral;
    out.records.push_back(rec);
  }
  return out;
}

struct ExpansionCheck {
  bool holds = false;
  std::size_t samples_checked = 0;
  std::size_t violations = 0;
  /// R / alpha exceeds the scale on which alpha was measured; a failure
  /// there says nothing about the lemma.
  bool beyond_sample_scale = false;
};

/// Verifies f_a(B(x,R) ∩ H_{>=M}) ⊃ B(f_a(x), R/alpha) ∩ H_{>=M} on a sample
/// of the target ball, pulling each sample back through the inverse branch
/// of the tract containing x.
inline ExpansionCheck check_expansion(double a, double M, double alpha, const Point& x, double R,
                                      std::size_t samples = 2000) {
  if (!(R > 0.0)) throw ParameterError("check_expansion: R must be positive");
  if (!(alpha > 0.0)) throw ParameterError("check_expansion: alpha must be positive");
  const auto beam = maps::BeamIndex::of(x);
  const Point fx = maps::zorich_f_a(x, a);
  if (!beam.even() || !beam.contains(x) || !(x[2] > M) || fx[2] < M)
    throw DomainError("check_expansion: x is not in an inverse-branch tract image");
  ExpansionCheck out;
  out.beyond_sample_scale = R / alpha > 20.0;
  for (const auto& y : ball_sample(fx, R / alpha, 3, samples)) {
    if (y[2] < M) continue;
    ++out.samples_checked;
    const Point pre = maps::zorich_inverse_branch(y, beam, a, M);
    if (!(dist(pre, x) < R)) ++out.violations;
  }
  out.holds = out.violations == 0;
  return out;
}

}  // namespace dynamics
}  // namespace qrdyn
