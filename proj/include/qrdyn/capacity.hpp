#pragma once

#include <map>
#include <numeric>

#include "dynamics.hpp"

namespace qrdyn {

/// Analytic description of a condenser (A, C): A open, C compact in A. The
/// window must be a cube.
struct CondenserGeometry {
  int dim = 2;
  Box window;
  std::function<bool(const Point&)> domain;
  /// Distance from a point to the plate C.
  std::function<double(const Point&)> plate_distance;
};

enum class CellRole : std::uint8_t { Outside, Free, Plate };

/// Rasterized condenser with its potential u (u = 1 on plate cells, 0 on
/// outside cells). A cell is a plate cell when its center lies within half a
/// cell diagonal of C, a free cell when its center lies in A. The outermost
/// layer of the box is always outside.
struct Condenser {
  int dim = 2;
  int res = 0;
  Box window;
  std::vector<CellRole> cells;
  std::vector<double> u;

  double cell_size() const { return window.extent(0) / res; }
  std::size_t size() const { return cells.size(); }
  std::size_t count(CellRole r) const { return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), r)); }
  Point center(std::size_t index) const {
    const Grid g = dim == 3 ? Grid::spatial(window, res, res, res) : Grid::planar(window, res, res);
    return g.center(index);
  }

  static Condenser rasterize(const CondenserGeometry& geo, int res) {
    if (geo.dim != 2 && geo.dim != 3) throw ParameterError("condenser: dimension must be 2 or 3");
    if (res < 8) throw ParameterError("condenser: resolution must be at least 8");
    for (int a = 1; a < geo.dim; ++a)
      if (std::abs(geo.window.extent(a) - geo.window.extent(0)) > 1e-12 * geo.window.extent(0))
        throw ParameterError("condenser: window must be a cube");
    Condenser c;
    c.dim = geo.dim;
    c.res = res;
    c.window = geo.window;
    const Grid g = geo.dim == 3 ? Grid::spatial(geo.window, res, res, res) : Grid::planar(geo.window, res, res);
    const double half_diag = 0.5 * c.cell_size() * std::sqrt(static_cast<double>(geo.dim));
    c.cells.assign(g.size(), CellRole::Outside);
    c.u.assign(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      const auto ijk = g.coords(i);
      bool border = false;
      for (int a = 0; a < geo.dim; ++a) border |= ijk[a] == 0 || ijk[a] == res - 1;
      if (border) continue;
      const Point p = g.center(i);
      if (geo.plate_distance(p) <= half_diag) {
        c.cells[i] = CellRole::Plate;
        c.u[i] = 1.0;
      } else if (geo.domain(p)) {
        c.cells[i] = CellRole::Free;
      }
    }
    return c;
  }
};

struct CapacityOptions {
  double tol = 1e-7;
  int max_iters = 20000;
  /// Gradient regularization (|grad u|^2 + eps^2)^{n/2}.
  double eps = 1e-8;
  /// Warm start from solves at halved resolutions down to this size.
  int coarsest = 32;
  bool multilevel = true;
  unsigned threads = 1;
};

struct CapacityResult {
  /// Unregularized discrete energy of the final potential.
  double value = 0.0;
  double regularized_energy = 0.0;
  int iterations = 0;
  double gradient_norm = 0.0;
  double u_min = 0.0;
  double u_max = 1.0;
  /// Regularized energy after each accepted iteration, finest level.
  std::vector<double> energy_history;
};

namespace capacity {

inline double sphere_area(int n) { return n == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi; }

namespace detail {

/// Cells i whose forward neighbours i + e_a all exist, visited in index
/// order, grouped by rows so partial sums reduce in a fixed order.
struct Stencil {
  int dim;
  int res;
  std::array<std::size_t, 3> stride;

  explicit Stencil(const Condenser& c)
      : dim(c.dim), res(c.res), stride{1, static_cast<std::size_t>(c.res), static_cast<std::size_t>(c.res) * c.res} {}

  std::size_t rows() const { return dim == 3 ? static_cast<std::size_t>(res - 1) * (res - 1) : res - 1; }
  /// First cell of a row of res - 1 stencil cells.
  std::size_t row_start(std::size_t r) const {
    if (dim == 2) return r * stride[1];
    const std::size_t j = r % (res - 1), k = r / (res - 1);
    return j * stride[1] + k * stride[2];
  }
};

inline double power_half(double q, int n) { return n == 2 ? q : q * std::sqrt(q); }

/// Regularized energy and its gradient.
inline double energy_and_gradient(const Condenser& c, const std::vector<double>& u, double eps2, std::vector<double>* grad,
                                  unsigned threads) {
  const Stencil s(c);
  const int n = c.dim;
  std::vector<double> row_energy(s.rows(), 0.0);
  if (grad) std::fill(grad->begin(), grad->end(), 0.0);
  // Gradient scatter touches the next row, so rows split by parity keep
  // writers disjoint.
  for (int parity = 0; parity < (grad ? 2 : 1); ++parity) {
    parallel_for(s.rows(), threads, [&](std::size_t r) {
      if (grad && static_cast<int>(r % 2) != parity) return;
      const std::size_t base = s.row_start(r);
      double acc = 0.0;
      for (int i = 0; i < s.res - 1; ++i) {
        const std::size_t idx = base + i;
        std::array<double, 3> d{};
        double q = eps2;
        for (int a = 0; a < n; ++a) {
          d[a] = u[idx + s.stride[a]] - u[idx];
          q += d[a] * d[a];
        }
        acc += power_half(q, n);
        if (grad) {
          const double w = n == 2 ? 2.0 : 3.0 * std::sqrt(q);
          double sum = 0.0;
          for (int a = 0; a < n; ++a) {
            (*grad)[idx + s.stride[a]] += w * d[a];
            sum += d[a];
          }
          (*grad)[idx] -= w * sum;
        }
      }
      row_energy[r] = acc;
    });
  }
  if (grad)
    for (std::size_t i = 0; i < c.size(); ++i)
      if (c.cells[i] != CellRole::Free) (*grad)[i] = 0.0;
  return std::accumulate(row_energy.begin(), row_energy.end(), 0.0);
}

/// Diagonal of the Hessian of the regularized energy, floored.
inline std::vector<double> jacobi_diagonal(const Condenser& c, const std::vector<double>& u, double eps2) {
  const Stencil s(c);
  const int n = c.dim;
  std::vector<double> diag(c.size(), 0.0);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const std::size_t base = s.row_start(r);
    for (int i = 0; i < s.res - 1; ++i) {
      const std::size_t idx = base + i;
      std::array<double, 3> d{};
      double q = eps2, sum = 0.0;
      for (int a = 0; a < n; ++a) {
        d[a] = u[idx + s.stride[a]] - u[idx];
        q += d[a] * d[a];
        sum += d[a];
      }
      if (n == 2) {
        for (int a = 0; a < n; ++a) diag[idx + s.stride[a]] += 2.0;
        diag[idx] += 4.0;
      } else {
        const double root = std::sqrt(q);
        for (int a = 0; a < n; ++a) diag[idx + s.stride[a]] += 3.0 * root + 3.0 * d[a] * d[a] / root;
        diag[idx] += 9.0 * root + 3.0 * sum * sum / root;
      }
    }
  }
  double mean = 0.0;
  std::size_t free = 0;
  for (std::size_t i = 0; i < c.size(); ++i)
    if (c.cells[i] == CellRole::Free) {
      mean += diag[i];
      ++free;
    }
  mean /= static_cast<double>(std::max<std::size_t>(free, 1));
  for (auto& v : diag) v = std::max(v, 1e-3 * mean);
  return diag;
}

/// Exact minimizer of the convex restriction t -> E(u + t p).
inline double line_minimum(const Condenser& c, const std::vector<double>& u, const std::vector<double>& p, double eps2) {
  const Stencil s(c);
  const int n = c.dim;
  std::vector<std::array<double, 3>> terms;  // (a, b, c0): q(t) = c0 + 2bt + at^2
  terms.reserve(c.size() / 4);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    const std::size_t base = s.row_start(r);
    for (int i = 0; i < s.res - 1; ++i) {
      const std::size_t idx = base + i;
      double a = 0.0, b = 0.0, q0 = eps2;
      for (int ax = 0; ax < n; ++ax) {
        const double dp = p[idx + s.stride[ax]] - p[idx];
        const double du = u[idx + s.stride[ax]] - u[idx];
        a += dp * dp;
        b += du * dp;
        q0 += du * du;
      }
      if (a > 0.0) terms.push_back({a, b, q0});
    }
  }
  if (terms.empty()) return 0.0;
  if (n == 2) {
    double sa = 0.0, sb = 0.0;
    for (const auto& t : terms) {
      sa += t[0];
      sb += t[1];
    }
    return -sb / sa;
  }
  auto derivs = [&](double t) {
    double d1 = 0.0, d2 = 0.0;
    for (const auto& [a, b, q0] : terms) {
      const double q = q0 + 2.0 * b * t + a * t * t;
      const double root = std::sqrt(std::max(q, 1e-300));
      const double lin = b + a * t;
      d1 += 3.0 * root * lin;
      d2 += 3.0 * (lin * lin / root + root * a);
    }
    return std::pair{d1, d2};
  };
  // Safeguarded Newton on the increasing derivative.
  double lo = 0.0, hi = 1.0;
  while (derivs(hi).first < 0.0 && hi < 1e12) {
    lo = hi;
    hi *= 2.0;
  }
  double t = 0.5 * (lo + hi);
  for (int it = 0; it < 60; ++it) {
    const auto [d1, d2] = derivs(t);
    if (d1 > 0.0) hi = t; else lo = t;
    double next = d2 > 0.0 ? t - d1 / d2 : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - t) <= 1e-12 * std::max(1.0, std::abs(t))) return next;
    t = next;
  }
  return t;
}

inline double exact_energy(const Condenser& c, const std::vector<double>& u) {
  return energy_and_gradient(c, u, 0.0, nullptr, 1);
}

/// Multilinear interpolation of a coarse cell field at a fine cell center.
inline void prolongate(const Condenser& coarse, Condenser& fine) {
  const int n = fine.dim;
  const double ratio = static_cast<double>(coarse.res) / fine.res;
  const Grid g = n == 3 ? Grid::spatial(fine.window, fine.res, fine.res, fine.res)
                        : Grid::planar(fine.window, fine.res, fine.res);
  const std::size_t cs1 = coarse.res, cs2 = static_cast<std::size_t>(coarse.res) * coarse.res;
  for (std::size_t i = 0; i < fine.size(); ++i) {
    if (fine.cells[i] != CellRole::Free) continue;
    const auto ijk = g.coords(i);
    std::array<int, 3> base{0, 0, 0};
    std::array<double, 3> frac{0, 0, 0};
    for (int a = 0; a < n; ++a) {
      const double x = std::clamp((ijk[a] + 0.5) * ratio - 0.5, 0.0, coarse.res - 1.000001);
      base[a] = static_cast<int>(x);
      frac[a] = x - base[a];
    }
    double v = 0.0;
    for (int corner = 0; corner < (1 << n); ++corner) {
      double w = 1.0;
      std::size_t idx = 0;
      for (int a = 0; a < n; ++a) {
        const int bit = (corner >> a) & 1;
        w *= bit ? frac[a] : 1.0 - frac[a];
        idx += static_cast<std::size_t>(base[a] + bit) * (a == 0 ? 1 : a == 1 ? cs1 : cs2);
      }
      v += w * coarse.u[idx];
    }
    fine.u[i] = std::clamp(v, 0.0, 1.0);
  }
}

}  // namespace detail

/// Minimizes sum over cells of |forward differences of u|^n (scale-free form
/// of the integral of |grad u|^n) over free cells by Jacobi-preconditioned
/// Polak-Ribiere conjugate gradients with exact line search. Uses the
/// current u as the starting point.
inline CapacityResult solve_capacity(Condenser& cond, const CapacityOptions& opts = {}) {
  if (!(opts.tol > 0.0)) throw ParameterError("solve_capacity: tol must be positive");
  if (cond.count(CellRole::Plate) == 0) throw ParameterError("solve_capacity: empty plate");
  if (cond.count(CellRole::Outside) == 0) throw ParameterError("solve_capacity: empty boundary");
  const double h = cond.cell_size();
  const double eps2 = opts.eps * opts.eps * h * h;
  const unsigned threads = resolve_threads(opts.threads);
  auto& u = cond.u;
  const std::size_t N = cond.size();

  CapacityResult out;
  std::vector<double> g(N), z(N), p(N, 0.0), g_prev(N), z_prev(N);
  double energy = detail::energy_and_gradient(cond, u, eps2, &g, threads);
  std::vector<double> diag = detail::jacobi_diagonal(cond, u, eps2);
  for (std::size_t i = 0; i < N; ++i) z[i] = g[i] / diag[i];
  for (std::size_t i = 0; i < N; ++i) p[i] = -z[i];
  out.energy_history.push_back(energy);

  auto dot = [&](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < N; ++i) s += a[i] * b[i];
    return s;
  };

  int it = 0;
  bool converged = false;
  for (; it < opts.max_iters; ++it) {
    if (dot(g, p) >= 0.0)
      for (std::size_t i = 0; i < N; ++i) p[i] = -z[i];
    const double t = detail::line_minimum(cond, u, p, eps2);
    std::vector<double> trial = u;
    for (std::size_t i = 0; i < N; ++i) trial[i] += t * p[i];
    g_prev.swap(g);
    z_prev.swap(z);
    const double next = detail::energy_and_gradient(cond, trial, eps2, &g, threads);
    if (!(next <= energy)) {
      g.swap(g_prev);
      z.swap(z_prev);
      converged = true;  // no further decrease along the search direction
      break;
    }
    u.swap(trial);
    energy = next;
    out.energy_history.push_back(energy);
    if (it % 50 == 0) diag = detail::jacobi_diagonal(cond, u, eps2);
    for (std::size_t i = 0; i < N; ++i) z[i] = g[i] / diag[i];
    const double beta = std::max(0.0, (dot(g, z) - dot(g, z_prev)) / dot(g_prev, z_prev));
    for (std::size_t i = 0; i < N; ++i) p[i] = -z[i] + beta * p[i];
    const auto& hist = out.energy_history;
    if (hist.size() > 10 && (hist[hist.size() - 11] - energy) < opts.tol * energy) {
      converged = true;
      ++it;
      break;
    }
  }
  out.iterations = it;
  out.gradient_norm = std::sqrt(dot(g, g));
  out.regularized_energy = energy;
  out.value = detail::exact_energy(cond, u);
  if (!converged)
    throw NumericError("solve_capacity: no convergence within max_iters", out.value, out.gradient_norm);
  out.u_min = *std::min_element(u.begin(), u.end());
  out.u_max = *std::max_element(u.begin(), u.end());
  return out;
}

/// Rasterizes at `res` and solves, warm-started from coarser solves.
inline CapacityResult solve_capacity(const CondenserGeometry& geo, int res, const CapacityOptions& opts = {},
                                     Condenser* final_state = nullptr) {
  std::vector<int> levels{res};
  if (opts.multilevel)
    while (levels.back() / 2 >= opts.coarsest && levels.back() % 2 == 0) levels.push_back(levels.back() / 2);
  std::optional<Condenser> previous;
  CapacityResult result;
  for (auto lvl = levels.rbegin(); lvl != levels.rend(); ++lvl) {
    Condenser cond = Condenser::rasterize(geo, *lvl);
    if (previous) detail::prolongate(*previous, cond);
    result = solve_capacity(cond, opts);
    previous = std::move(cond);
  }
  if (final_state) *final_state = std::move(*previous);
  return result;
}

/// Ring condenser (B(0, outer), closed B(0, inner)); two cells of margin
/// separate the outer sphere from the box.
inline CondenserGeometry ring_geometry(int dim, double inner, double outer, int res) {
  if (!(inner > 0.0 && outer > inner)) throw ParameterError("ring: need 0 < inner < outer");
  const double half = outer * res / (res - 4.0);
  CondenserGeometry geo;
  geo.dim = dim;
  geo.window = Box::around(Point{}, half, dim);
  geo.domain = [outer](const Point& x) { return norm(x) < outer; };
  geo.plate_distance = [inner](const Point& x) { return std::max(0.0, norm(x) - inner); };
  return geo;
}

/// omega_{n-1} (log(outer / inner))^{1-n}.
inline double ring_capacity_exact(int dim, double inner, double outer) {
  return sphere_area(dim) * std::pow(std::log(outer / inner), 1.0 - dim);
}

struct GrotzschQuery {
  double t = 0.0;
  int n = 2;
  int resolution = 0;
  double cap_value = 0.0;
  /// omega_1 / log(4 / t) for n = 2; absent for n = 3.
  std::optional<double> lower_bound;
  CapacityResult solve;
};

/// Capacity of (B^n(1), [0, t e_1]).
inline GrotzschQuery grotzsch_capacity(double t, int n, int resolution, const CapacityOptions& opts = {}) {
  if (!(t > 0.0 && t < 1.0)) throw ParameterError("grotzsch: t must lie in (0, 1)");
  if (n != 2 && n != 3) throw ParameterError("grotzsch: n must be 2 or 3");
  const double half = resolution / (resolution - 4.0);
  if (t < 2.0 * (2.0 * half / resolution))
    throw ParameterError("grotzsch: segment covers fewer than 2 cells at this resolution");
  CondenserGeometry geo;
  geo.dim = n;
  geo.window = Box::around(Point{}, half, n);
  geo.domain = [](const Point& x) { return norm(x) < 1.0; };
  geo.plate_distance = [t](const Point& x) {
    Point q = x;
    q[0] -= std::clamp(x[0], 0.0, t);
    return norm(q);
  };
  GrotzschQuery out;
  out.t = t;
  out.n = n;
  out.resolution = resolution;
  out.solve = solve_capacity(geo, resolution, opts);
  out.cap_value = out.solve.value;
  if (n == 2) out.lower_bound = sphere_area(2) / std::log(4.0 / t);
  return out;
}

enum class Positivity { Positive, Zero, Inconclusive };

inline const char* positivity_name(Positivity p) {
  switch (p) {
    case Positivity::Positive: return "positive";
    case Positivity::Zero: return "zero";
    case Positivity::Inconclusive: return "inconclusive";
  }
  return "?";
}

struct PositivityReport {
  Positivity verdict = Positivity::Inconclusive;
  /// Capacity at 2 * resolution (shifted grids averaged as cap^{-1/(n-1)}).
  double value = 0.0;
  /// Same at the given resolution.
  double coarse_value = 0.0;
  /// Growth of cap^{-1/(n-1)} per resolution doubling in units of the growth
  /// for an isolated point: about 1 for finite sets, about 0 for sets of
  /// positive capacity.
  double point_index = 0.0;
  double floor = 1e-3;
};

struct PositivityOptions {
  double floor = 1e-3;
  /// point_index at or above this is read as capacity zero.
  double zero_index = 0.5;
  /// |point_index| at or below this (with value above the floor) is positive.
  double positive_index = 0.25;
  /// Grid offsets averaged per resolution (Halton points in a cell); 0 picks
  /// 8 in the plane and 4 in space.
  int shifts = 0;
  CapacityOptions solver;
};

/// Rasterizes the point set as the plate inside the window (made a cube about
/// its center, with a zero layer around it) and solves at res and 2 res.
inline PositivityReport capacity_positive_heuristic(const std::vector<Point>& points, const Box& window, int res,
                                                    const PositivityOptions& opts = {}) {
  if (points.size() < 100) throw ParameterError("capacity heuristic: need at least 100 points");
  if (opts.shifts < 0) throw ParameterError("capacity heuristic: shifts must be non-negative");
  const int dim = window.dim;
  const int shifts = opts.shifts > 0 ? opts.shifts : (dim == 2 ? 8 : 4);
  const double e = -1.0 / (dim - 1);
  double half = 0.0;
  Point mid{};
  for (int a = 0; a < dim; ++a) {
    half = std::max(half, 0.5 * window.extent(a));
    mid[a] = 0.5 * (window.lo[a] + window.hi[a]);
  }
  const double inner = half;
  half *= 1.0 + 8.0 / res;

  using Key = std::array<long long, 3>;
  const double bucket = 2.0 * half / res;
  std::map<Key, std::vector<Point>> buckets;
  auto key_of = [bucket, mid, dim](const Point& p) {
    Key k{0, 0, 0};
    for (int a = 0; a < dim; ++a) k[a] = static_cast<long long>(std::floor((p[a] - mid[a]) / bucket));
    return k;
  };
  for (const auto& p : points) {
    bool inside = true;
    for (int a = 0; a < dim; ++a) inside &= std::abs(p[a] - mid[a]) < inner;
    if (inside) buckets[key_of(p)].push_back(p);
  }
  if (buckets.empty()) throw ParameterError("capacity heuristic: no points inside the window");

  auto mean_capacity = [&](int r) {
    double acc = 0.0;
    for (int k = 0; k < shifts; ++k) {
      const double h = 2.0 * half / r;
      Point c = mid;
      for (int a = 0; a < dim; ++a) c[a] += h * halton(static_cast<std::uint64_t>(k), a == 0 ? 2 : a == 1 ? 3 : 5);
      CondenserGeometry geo;
      geo.dim = dim;
      geo.window = Box::around(c, half, dim);
      geo.domain = [mid, inner, dim](const Point& x) {
        for (int a = 0; a < dim; ++a)
          if (std::abs(x[a] - mid[a]) >= inner) return false;
        return true;
      };
      geo.plate_distance = [&buckets, key_of, dim](const Point& x) {
        const Key key = key_of(x);
        double best = std::numeric_limits<double>::infinity();
        for (long long dz = (dim == 3 ? -1 : 0); dz <= (dim == 3 ? 1 : 0); ++dz)
          for (long long dy = -1; dy <= 1; ++dy)
            for (long long dx = -1; dx <= 1; ++dx) {
              const auto it = buckets.find(Key{key[0] + dx, key[1] + dy, key[2] + dz});
              if (it == buckets.end()) continue;
              for (const auto& p : it->second) best = std::min(best, dist(x, p));
            }
        return best;
      };
      acc += std::pow(solve_capacity(geo, r, opts.solver).value, e);
    }
    return std::pow(acc / shifts, 1.0 / e);
  };

  PositivityReport out;
  out.floor = opts.floor;
  out.coarse_value = mean_capacity(res);
  out.value = mean_capacity(2 * res);
  const double unit = std::log(2.0) * std::pow(sphere_area(dim), e);
  out.point_index = (std::pow(out.value, e) - std::pow(out.coarse_value, e)) / unit;
  if (out.value <= opts.floor || out.point_index >= opts.zero_index) {
    out.verdict = Positivity::Zero;
  } else if (std::abs(out.point_index) <= opts.positive_index) {
    out.verdict = Positivity::Positive;
  }
  return out;
}

}  // namespace capacity
}  // namespace qrdyn
