#pragma once

#include <boost/math/constants/constants.hpp>

#include <map>
#include <optional>
#include <random>
#include <sstream>

#include "core.hpp"

namespace qrdyn {

/// Forward-invariant region on which a scalar drift quantity increases by at
/// least `margin` per application of the map. Entering it certifies escape.
template <class T>
struct EscapeCertificate {
  std::string description;
  std::function<bool(const BasicPoint<T>&)> contains;
  std::function<T(const BasicPoint<T>&)> drift;
  double margin = 0.0;
};

template <class T>
struct InverseBranch {
  std::string label;
  /// Empty result when the argument is outside the branch domain.
  std::function<std::optional<BasicPoint<T>>(const BasicPoint<T>&)> apply;
};

/// A named entire quasiregular map. Evaluation is pure; a spec may be shared
/// across threads.
template <class T>
struct BasicMapSpec {
  std::string name;
  int dimension = 2;
  std::map<std::string, double> params;
  std::vector<Point> omitted_values;
  /// Attracting fixed points known for these parameters; basin labels index
  /// into this list.
  std::vector<BasicPoint<T>> attractors;
  std::optional<EscapeCertificate<T>> escape_certificate;
  std::function<BasicPoint<T>(const BasicPoint<T>&)> eval;
  /// Distance to the nearest declared non-smooth locus. Empty for smooth maps.
  std::function<double(const Point&)> seam_distance;
  /// Inverse branches admissible for |branch index| <= window.
  std::function<std::vector<InverseBranch<T>>(int window)> inverse_branches;
  bool polynomial_type = false;

  BasicPoint<T> operator()(const BasicPoint<T>& x) const { return eval(x); }
  double param(const std::string& key) const { return params.at(key); }
};

using MapSpec = BasicMapSpec<double>;
using EscapeCert = EscapeCertificate<double>;

namespace maps {

namespace detail {

template <class T>
T pi() {
  return boost::math::constants::pi<T>();
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Zorich map

/// Closed square Q = [-1,1]^2 onto the closed upper unit hemisphere: the
/// radial square-to-disk map p -> (|p|_inf / |p|_2) p followed by the
/// disk-to-hemisphere map q -> (sin(pi rho/2) q/rho, cos(pi rho/2)).
/// The boundary of Q lands on the equator.
template <class T>
BasicPoint<T> zorich_h(const T& x1, const T& x2) {
  using std::abs;
  using std::cos;
  using std::sin;
  using std::sqrt;
  if (abs(x1) > T(1) + T(1e-12) || abs(x2) > T(1) + T(1e-12))
    throw DomainError("zorich_h: point outside the square [-1,1]^2");
  const T linf = std::max(abs(x1), abs(x2));
  const T l2 = sqrt(x1 * x1 + x2 * x2);
  if (l2 == T(0)) return {T(0), T(0), T(1)};
  const T half_angle = detail::pi<T>() * std::min(linf, T(1)) / 2;
  const T s = sin(half_angle) / l2;
  return {s * x1, s * x2, cos(half_angle)};
}

/// Inverse of zorich_h on the closed upper hemisphere.
template <class T>
std::pair<T, T> zorich_h_inverse(const BasicPoint<T>& u) {
  using std::abs;
  using std::atan2;
  using std::sqrt;
  const T horiz = sqrt(u[0] * u[0] + u[1] * u[1]);
  if (horiz == T(0)) return {T(0), T(0)};
  const T rho = 2 * atan2(horiz, u[2]) / detail::pi<T>();
  const T d1 = u[0] / horiz, d2 = u[1] / horiz;
  const T scale = rho / std::max(abs(d1), abs(d2));
  return {d1 * scale, d2 * scale};
}

template <class T>
struct Fold {
  T value;     // folded coordinate in [-1, 1]
  int parity;  // number of reflections mod 2
};

/// Period-4 tent fold of the real line onto [-1,1].
template <class T>
Fold<T> fold_tent(const T& x) {
  using std::floor;
  T y = x - 4 * floor(x / 4 + T(0.5));  // y in [-2, 2)
  if (y > T(1)) return {T(2) - y, 1};
  if (y < T(-1)) return {T(-2) - y, 1};
  return {y, 0};
}

/// F(x) = e^{x3} h(x1, x2) on the central beam, extended to R^3 by
/// reflections; odd total parity mirrors the image in the third coordinate.
template <class T>
BasicPoint<T> zorich_F(const BasicPoint<T>& x) {
  using std::exp;
  const auto f1 = fold_tent(x[0]);
  const auto f2 = fold_tent(x[1]);
  auto u = zorich_h(f1.value, f2.value);
  const T scale = exp(x[2]);
  BasicPoint<T> out{scale * u[0], scale * u[1], scale * u[2]};
  if ((f1.parity + f2.parity) % 2 == 1) out[2] = -out[2];
  return out;
}

template <class T>
BasicPoint<T> zorich_f_a(const BasicPoint<T>& x, const T& a) {
  if (!(a > T(0))) throw ParameterError("zorich_f_a: a must be positive");
  auto y = zorich_F(x);
  y[2] -= a;
  return y;
}

/// Beam P(r) = {|x1 - 2 r1| < 1, |x2 - 2 r2| < 1}.
struct BeamIndex {
  int r1 = 0;
  int r2 = 0;
  bool even() const { return ((r1 + r2) % 2 + 2) % 2 == 0; }
  bool contains(const Point& x) const {
    return std::abs(x[0] - 2.0 * r1) < 1.0 && std::abs(x[1] - 2.0 * r2) < 1.0;
  }
  static BeamIndex of(const Point& x) {
    return {static_cast<int>(std::floor((x[0] + 1.0) / 2.0)),
            static_cast<int>(std::floor((x[1] + 1.0) / 2.0))};
  }
};

/// Branch of f_a^{-1} from H_{>=M} into the tract P(r) x (M, inf), r even.
/// Coordinates of odd index are mirrored inside their beam, matching the
/// reflection that folds that beam onto Q.
template <class T>
BasicPoint<T> zorich_inverse_branch(const BasicPoint<T>& y, BeamIndex r, const T& a, const T& M) {
  using std::log;
  if (!r.even()) throw ParameterError("zorich_inverse_branch: beam index must have even parity");
  if (!(a > T(0))) throw ParameterError("zorich_inverse_branch: a must be positive");
  if (y[2] < M) throw DomainError("zorich_inverse_branch: y3 below tract floor M");
  const BasicPoint<T> z{y[0], y[1], y[2] + a};
  if (!(z[2] > T(0))) throw DomainError("zorich_inverse_branch: y outside H_{>-a}");
  const T modulus = norm(z);
  const BasicPoint<T> unit{z[0] / modulus, z[1] / modulus, z[2] / modulus};
  auto [p1, p2] = zorich_h_inverse(unit);
  if (r.r1 % 2 != 0) p1 = -p1;
  if (r.r2 % 2 != 0) p2 = -p2;
  return {p1 + T(2 * r.r1), p2 + T(2 * r.r2), log(modulus)};
}

struct ContractionMeasurement {
  double alpha = 0.0;
  std::size_t pairs_used = 0;
  /// False when the sampled Lipschitz bound is not below one.
  bool contracting = false;
};

/// Sampled lower bound on the Lipschitz constant of the central inverse branch
/// on H_{>=M}. Pairs mix independent draws with close pairs to probe the
/// local stretch.
inline ContractionMeasurement measure_contraction(double a, double M, std::size_t sample_count,
                                                  std::uint64_t seed = 7) {
  if (sample_count < 1000) throw ParameterError("measure_contraction: need at least 1000 samples");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> horiz(-20.0, 20.0);
  std::uniform_real_distribution<double> vert(M, M + 20.0);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  std::uniform_real_distribution<double> log_scale(-4.0, 0.0);
  ContractionMeasurement out;
  const BeamIndex central{0, 0};
  // Every third anchor sits near the lowest admissible point, where the
  // branch stretches most.
  const double floor_height = std::max(M, -a);
  auto draw = [&](std::size_t i) {
    if (i % 3 != 2) return Point{horiz(rng), horiz(rng), vert(rng)};
    const double s = std::pow(10.0, log_scale(rng) + 1.0);
    return Point{s * unit(rng), s * unit(rng), floor_height + s * std::abs(unit(rng))};
  };
  for (std::size_t i = 0; i < sample_count; ++i) {
    const Point x = draw(i);
    Point y;
    if (i % 2 == 0) {
      y = draw(i + 1);
    } else {
      const double s = std::pow(10.0, log_scale(rng));
      y = {x[0] + s * unit(rng), x[1] + s * unit(rng), std::max(M, x[2] + s * unit(rng))};
    }
    if (x[2] + a <= 1e-12 || y[2] + a <= 1e-12) continue;
    const double d = dist(x, y);
    if (d < 1e-12) continue;
    const double ratio = dist(zorich_inverse_branch(x, central, a, M), zorich_inverse_branch(y, central, a, M)) / d;
    out.alpha = std::max(out.alpha, ratio);
    ++out.pairs_used;
  }
  out.contracting = out.alpha < 1.0;
  return out;
}

/// Attracting fixed point of f_a near (0, 0, -a) by fixed-point iteration.
template <class T>
BasicPoint<T> zorich_attracting_fixed_point(const T& a, int max_iters = 200) {
  BasicPoint<T> x{T(0), T(0), -a};
  for (int k = 0; k < max_iters; ++k) {
    auto next = zorich_f_a(x, a);
    const bool done = norm(next - x) == T(0);
    x = next;
    if (done) break;
  }
  return x;
}

// ---------------------------------------------------------------------------
// Quasiregular sine analogue

namespace detail {

/// Bi-Lipschitz profile of the half-beam cross-section: (rho, t) in [0,1]^2
/// to (w, v) in the quarter disk {w, v >= 0, w^2 + v^2 <= 1}. Edge t = 1 goes
/// to the arc, rho = 0 to the vertical radius, t = 0 and rho = 1 to the
/// horizontal radius. Built in polar coordinates about the corner (1, 0),
/// whose right angle is opened to a straight angle, then radially rescaled
/// onto the quarter disk seen from (1/2, 0).
inline std::pair<double, double> sine_profile(double rho, double t) {
  constexpr double pi = std::numbers::pi;
  const double dx = 1.0 - rho;  // toward rho = 0
  const double dy = t;
  const double r = std::hypot(dx, dy);
  if (r == 0.0) return {0.5, 0.0};
  const double theta = std::atan2(dy, dx);  // [0, pi/2]
  const double source_radius = 1.0 / std::max(std::cos(theta), std::sin(theta));
  // Direction of the quarter-disk corner (0, 1) seen from (1/2, 0).
  const double corner = std::atan2(1.0, 0.5);
  const double psi = theta <= pi / 4 ? theta / (pi / 4) * corner
                                     : corner + (theta - pi / 4) / (pi / 4) * (pi - corner);
  const double ex = -std::cos(psi), ey = std::sin(psi);
  // Exit distance of the ray (1/2, 0) + s e from the quarter disk.
  double target_radius = (std::cos(psi) + std::sqrt(std::cos(psi) * std::cos(psi) + 3.0)) / 2.0;
  if (ex < 0.0) target_radius = std::min(target_radius, 0.5 / -ex);
  const double s = std::min(r / source_radius, 1.0) * target_radius;
  return {std::max(0.0, 0.5 + s * ex), std::max(0.0, s * ey)};
}

}  // namespace detail

/// Half-beam map [-1,1]^{n-1} x [0, inf) onto the closed upper half-space,
/// with F(u, t) = e^{t-1} F(u, 1) for t > 1.
inline Point sine_half_beam(const Point& x, int n) {
  const int last = n - 1;
  double linf = 0.0, l2 = 0.0;
  for (int i = 0; i < last; ++i) {
    linf = std::max(linf, std::abs(x[i]));
    l2 += x[i] * x[i];
  }
  l2 = std::sqrt(l2);
  const double t = x[last];
  const auto [w, v] = detail::sine_profile(std::min(linf, 1.0), std::min(t, 1.0));
  const double scale = t > 1.0 ? std::exp(t - 1.0) : 1.0;
  Point out{};
  for (int i = 0; i < last; ++i) out[i] = l2 > 0.0 ? scale * w * x[i] / l2 : 0.0;
  out[last] = scale * v;
  return out;
}

/// lambda F, with F extended from the half-beam by reflections in the
/// hyperplanes x_i = odd (i < n) and x_n = 0. Fixes the origin.
inline Point qr_sine_map(const Point& x, double lambda, int n) {
  if (!(lambda > 0.0)) throw ParameterError("qr_sine_map: lambda must be positive");
  if (n != 2 && n != 3) throw ParameterError("qr_sine_map: dimension must be 2 or 3");
  Point folded{};
  int parity = 0;
  for (int i = 0; i < n - 1; ++i) {
    const auto f = fold_tent(x[i]);
    folded[i] = f.value;
    parity += f.parity;
  }
  folded[n - 1] = std::abs(x[n - 1]);
  if (x[n - 1] < 0.0) ++parity;
  Point y = sine_half_beam(folded, n);
  if (parity % 2 == 1) y[n - 1] = -y[n - 1];
  return lambda * y;
}

// ---------------------------------------------------------------------------
// Planar maps

/// g(z) = z + 1 + e^{-z}, modified on the strip M < Re z < 2M.
inline std::complex<double> fatou_modified_map(std::complex<double> z, double M) {
  if (!(M > 0.0)) throw ParameterError("fatou_modified_map: M must be positive");
  const std::complex<double> tail = 1.0 + std::exp(-z);
  const std::complex<double> g = z + tail;
  const double x = z.real();
  if (x <= M || x >= 2.0 * M) return g;
  return g + tail * std::sin(std::numbers::pi * x / M);
}

inline std::complex<double> annulus_fixed_map(std::complex<double> z, double delta) {
  if (!(delta > 0.0)) throw ParameterError("annulus_fixed_map: delta must be positive");
  const double r = std::abs(z);
  if (r <= 1.0) return (1.0 - delta) * z;
  if (r <= 2.0) return (1.0 + delta * (r - 2.0)) * z;
  if (r <= 3.0) return z;
  if (r <= 4.0) return z + delta * (r - 3.0) * std::exp(z);
  return z + delta * std::exp(z);
}

inline std::complex<double> exp_map(std::complex<double> z, double lambda) {
  if (lambda == 0.0) throw ParameterError("exp_map: lambda must be non-zero");
  return lambda * std::exp(z);
}

/// Attracting real fixed point of lambda e^x for 0 < lambda < 1/e.
inline double exp_attracting_fixed_point(double lambda) {
  double q = 0.0;
  for (int k = 0; k < 10000; ++k) {
    const double next = lambda * std::exp(q);
    if (next == q) break;
    q = next;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Map factories and registry

template <class T = double>
BasicMapSpec<T> make_zorich(double a = 10.0, double M = 2.0) {
  if (!(a > 0.0)) throw ParameterError("zorich: parameter a must be positive");
  BasicMapSpec<T> spec;
  spec.name = "zorich";
  spec.dimension = 3;
  spec.params = {{"a", a}, {"M", M}};
  spec.omitted_values = {Point{0.0, 0.0, -a}};
  const T a_t(a), M_t(M);
  spec.eval = [a_t](const BasicPoint<T>& x) { return zorich_f_a(x, a_t); };
  spec.attractors = {zorich_attracting_fixed_point(a_t)};
  spec.seam_distance = [](const Point& x) {
    auto to_odd = [](double v) { return std::abs(v - (2.0 * std::floor(v / 2.0) + 1.0)); };
    return std::min(to_odd(x[0]), to_odd(x[1]));
  };
  spec.inverse_branches = [a_t, M_t](int window) {
    std::vector<InverseBranch<T>> out;
    for (int r1 = -window; r1 <= window; ++r1) {
      for (int r2 = -window; r2 <= window; ++r2) {
        const BeamIndex r{r1, r2};
        if (!r.even()) continue;
        out.push_back({"r=" + std::to_string(r1) + "," + std::to_string(r2),
                       [a_t, M_t, r](const BasicPoint<T>& y) -> std::optional<BasicPoint<T>> {
                         if (y[2] < M_t) return std::nullopt;
                         return zorich_inverse_branch(y, r, a_t, M_t);
                       }});
      }
    }
    return out;
  };
  return spec;
}

/// Default sine-analogue scale; the measured local expansion of the default
/// map exceeds 1.2 on the test grid.
inline constexpr double kDefaultSineLambda = 6.0;

inline MapSpec make_qr_sine(double lambda = kDefaultSineLambda, int n = 2) {
  if (!(lambda > 0.0)) throw ParameterError("qr-sine: lambda must be positive");
  if (n != 2 && n != 3) throw ParameterError("qr-sine: n must be 2 or 3");
  MapSpec spec;
  spec.name = "qr-sine";
  spec.dimension = n;
  spec.params = {{"lambda", lambda}, {"n", static_cast<double>(n)}};
  spec.eval = [lambda, n](const Point& x) { return qr_sine_map(x, lambda, n); };
  spec.seam_distance = [n](const Point& x) {
    auto to_odd = [](double v) { return std::abs(v - (2.0 * std::floor(v / 2.0) + 1.0)); };
    double d = std::min(std::abs(x[n - 1]), std::abs(std::abs(x[n - 1]) - 1.0));
    for (int i = 0; i < n - 1; ++i) d = std::min(d, to_odd(x[i]));
    if (n == 3) {
      const double a = fold_tent(x[0]).value, b = fold_tent(x[1]).value;
      d = std::min(d, std::abs(std::abs(a) - std::abs(b)) / std::sqrt(2.0));
    }
    return d;
  };
  return spec;
}

inline MapSpec make_fatou_modified(double M = 50.0) {
  if (!(M > 0.0)) throw ParameterError("fatou-mod: M must be positive");
  MapSpec spec;
  spec.name = "fatou-mod";
  spec.dimension = 2;
  spec.params = {{"M", M}};
  spec.eval = [M](const Point& x) { return from_complex(fatou_modified_map(to_complex(x), M)); };
  spec.seam_distance = [M](const Point& x) { return std::min(std::abs(x[0] - M), std::abs(x[0] - 2.0 * M)); };
  // On Re z > 2M the map is g, and Re g(z) >= Re z + 1 - e^{-Re z}.
  spec.escape_certificate = EscapeCert{
      "Re z > 2M with Re f(z) >= Re z + 1/2",
      [M](const Point& x) { return x[0] > 2.0 * M; },
      [](const Point& x) { return x[0]; },
      0.5,
  };
  return spec;
}

inline MapSpec make_annulus_fixed(double delta = 0.05) {
  if (!(delta > 0.0)) throw ParameterError("annulus-fixed: delta must be positive");
  MapSpec spec;
  spec.name = "annulus-fixed";
  spec.dimension = 2;
  spec.params = {{"delta", delta}};
  spec.eval = [delta](const Point& x) { return from_complex(annulus_fixed_map(to_complex(x), delta)); };
  spec.attractors = {Point{0.0, 0.0, 0.0}};
  spec.seam_distance = [](const Point& x) {
    const double r = std::hypot(x[0], x[1]);
    double d = std::abs(r - 1.0);
    for (double k : {2.0, 3.0, 4.0}) d = std::min(d, std::abs(r - k));
    return d;
  };
  return spec;
}

inline MapSpec make_exp(double lambda = 0.2) {
  if (lambda == 0.0) throw ParameterError("exp: lambda must be non-zero");
  MapSpec spec;
  spec.name = "exp";
  spec.dimension = 2;
  spec.params = {{"lambda", lambda}};
  spec.omitted_values = {Point{0.0, 0.0, 0.0}};
  spec.eval = [lambda](const Point& x) { return from_complex(exp_map(to_complex(x), lambda)); };
  if (lambda > 0.0 && lambda < 1.0 / std::numbers::e)
    spec.attractors = {Point{exp_attracting_fixed_point(lambda), 0.0, 0.0}};
  spec.inverse_branches = [lambda](int window) {
    std::vector<InverseBranch<double>> out;
    for (int k = -window; k <= window; ++k) {
      out.push_back({"k=" + std::to_string(k), [lambda, k](const Point& y) -> std::optional<Point> {
                       const std::complex<double> w = to_complex(y) / lambda;
                       if (std::abs(w) == 0.0) return std::nullopt;
                       return from_complex(std::log(w) + std::complex<double>(0.0, 2.0 * std::numbers::pi * k));
                     }});
    }
    return out;
  };
  return spec;
}

struct MapInfo {
  std::string name;
  int dimension;
  std::map<std::string, double> defaults;
  std::string description;
};

inline std::vector<MapInfo> registered_maps() {
  return {
      {"zorich", 3, {{"a", 10.0}, {"M", 2.0}}, "Zorich map f_a(x) = F(x) - (0,0,a)"},
      {"qr-sine", 2, {{"lambda", kDefaultSineLambda}, {"n", 2.0}}, "quasiregular sine analogue lambda F"},
      {"fatou-mod", 2, {{"M", 50.0}}, "z + 1 + e^{-z} modified on M < Re z < 2M"},
      {"annulus-fixed", 2, {{"delta", 0.05}}, "z g(|z|) inside |z| <= 3, z + delta e^z outside"},
      {"exp", 2, {{"lambda", 0.2}}, "lambda e^z"},
  };
}

inline std::string registered_names() {
  std::ostringstream os;
  bool first = true;
  for (const auto& info : registered_maps()) {
    os << (first ? "" : ", ") << info.name;
    first = false;
  }
  return os.str();
}

/// Builds a registered map; parameters not given take their defaults.
inline MapSpec make_map(const std::string& name, const std::map<std::string, double>& given = {}) {
  for (const auto& info : registered_maps()) {
    if (info.name != name) continue;
    auto params = info.defaults;
    for (const auto& [key, value] : given) {
      if (!params.contains(key))
        throw ParameterError("map '" + name + "' has no parameter '" + key + "'");
      params[key] = value;
    }
    if (name == "zorich") return make_zorich(params["a"], params["M"]);
    if (name == "qr-sine") return make_qr_sine(params["lambda"], static_cast<int>(params["n"]));
    if (name == "fatou-mod") return make_fatou_modified(params["M"]);
    if (name == "annulus-fixed") return make_annulus_fixed(params["delta"]);
    if (name == "exp") return make_exp(params["lambda"]);
  }
  throw ParameterError("unknown map '" + name + "'; registered maps: " + registered_names());
}

}  // namespace maps
}  // namespace qrdyn
