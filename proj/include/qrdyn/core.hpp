#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

namespace qrdyn {

/// Points live in R^3; planar maps leave the third coordinate at zero.
template <class T>
using BasicPoint = std::array<T, 3>;
using Point = BasicPoint<double>;

/// Input outside the domain of an operation (e.g. a point off the square Q).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// A map or operation parameter outside its admissible range.
struct ParameterError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// A numeric procedure failed to converge. Carries the best value reached.
struct NumericError : std::runtime_error {
  NumericError(const std::string& what, double best, double residual)
      : std::runtime_error(what), best_value(best), residual(residual) {}
  double best_value;
  double residual;
};

template <class T>
BasicPoint<T> operator+(const BasicPoint<T>& a, const BasicPoint<T>& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}
template <class T>
BasicPoint<T> operator-(const BasicPoint<T>& a, const BasicPoint<T>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}
template <class T, class S>
BasicPoint<T> operator*(S s, const BasicPoint<T>& a) {
  return {T(s) * a[0], T(s) * a[1], T(s) * a[2]};
}

template <class T>
T norm(const BasicPoint<T>& p) {
  using std::sqrt;
  return sqrt(p[0] * p[0] + p[1] * p[1] + p[2] * p[2]);
}
inline double dist(const Point& a, const Point& b) { return norm(a - b); }

inline std::complex<double> to_complex(const Point& p) { return {p[0], p[1]}; }
inline Point from_complex(std::complex<double> z) { return {z.real(), z.imag(), 0.0}; }

/// Axis-aligned box in R^dim. Unused axes have lo = hi = 0.
struct Box {
  Point lo{};
  Point hi{};
  int dim = 2;

  static Box planar(double x0, double x1, double y0, double y1) {
    return {{x0, y0, 0.0}, {x1, y1, 0.0}, 2};
  }
  static Box spatial(double x0, double x1, double y0, double y1, double z0, double z1) {
    return {{x0, y0, z0}, {x1, y1, z1}, 3};
  }
  static Box around(const Point& c, double r, int dim) {
    Box b{c, c, dim};
    for (int i = 0; i < dim; ++i) {
      b.lo[i] -= r;
      b.hi[i] += r;
    }
    return b;
  }
  double extent(int axis) const { return hi[axis] - lo[axis]; }
  bool contains(const Point& p) const {
    for (int i = 0; i < dim; ++i)
      if (p[i] < lo[i] || p[i] > hi[i]) return false;
    return true;
  }
};

// splitmix64: one base seed, one counter per stream.
inline std::uint64_t split_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Halton low-discrepancy value, index >= 1.
inline double halton(std::uint64_t index, std::uint64_t base) {
  double f = 1.0, r = 0.0;
  while (index > 0) {
    f /= static_cast<double>(base);
    r += f * static_cast<double>(index % base);
    index /= base;
  }
  return r;
}

/// Deterministic quasi-random point in a box (Halton bases 2, 3, 5).
inline Point halton_point(const Box& box, std::uint64_t index) {
  static constexpr std::array<std::uint64_t, 3> bases{2, 3, 5};
  Point p{};
  for (int i = 0; i < box.dim; ++i)
    p[i] = box.lo[i] + halton(index + 1, bases[i]) * box.extent(i);
  return p;
}

/// Deterministic quasi-uniform sample of the closed ball B(c, r).
inline std::vector<Point> ball_sample(const Point& c, double r, int dim, std::size_t count) {
  std::vector<Point> out;
  out.reserve(count);
  const Box cube = Box::around(c, r, dim);
  for (std::uint64_t i = 0; out.size() < count; ++i) {
    Point p = halton_point(cube, i);
    if (dist(p, c) <= r) out.push_back(p);
  }
  return out;
}

/// Worker count: explicit request, else QRDYN_THREADS, else hardware.
inline unsigned resolve_threads(unsigned requested = 0) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("QRDYN_THREADS")) {
    const int v = std::atoi(env);
    if (v > 0) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs body(i) for i in [0, count) on a static partition. Each index is
/// touched by exactly one worker, so results written per index do not depend
/// on the worker count.
template <class Body>
void parallel_for(std::size_t count, unsigned threads, Body&& body) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      const std::size_t begin = count * t / threads;
      const std::size_t end = count * (t + 1) / threads;
      for (std::size_t i = begin; i < end; ++i) body(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace qrdyn
