#pragma once

#include <Eigen/Dense>

#include <limits>

#include "maps.hpp"

namespace qrdyn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 3, 3>;

namespace calculus {

/// Default finite-difference step, relative to the point's magnitude.
inline double default_step(const Point& x) { return 1e-5 * std::max(1.0, norm(x)); }

/// Central finite-difference approximation of Df(x). Column j is the
/// derivative along e_j.
template <class Map>
Matrix derivative_matrix(const Map& f, int dim, const Point& x, double step) {
  if (!(step > 0.0)) throw ParameterError("derivative_matrix: step must be positive");
  Matrix m(dim, dim);
  for (int j = 0; j < dim; ++j) {
    Point plus = x, minus = x;
    plus[j] += step;
    minus[j] -= step;
    const Point fp = f(plus), fm = f(minus);
    for (int i = 0; i < dim; ++i) m(i, j) = (fp[i] - fm[i]) / (2.0 * step);
  }
  return m;
}

inline Matrix derivative_matrix(const MapSpec& map, const Point& x, double step) {
  return derivative_matrix(map.eval, map.dimension, x, step);
}
inline Matrix derivative_matrix(const MapSpec& map, const Point& x) {
  return derivative_matrix(map, x, default_step(x));
}

struct SingularValues {
  double sigma_max = 0.0;  // |Df|
  double sigma_min = 0.0;  // l(Df)
  double det = 0.0;        // J_f
};

inline SingularValues singular_values(const Matrix& m) {
  Eigen::JacobiSVD<Matrix> svd(m);
  const auto& s = svd.singularValues();
  return {s(0), s(s.size() - 1), m.determinant()};
}

struct DilatationReport {
  double K_O_est = 1.0;
  double K_I_est = 1.0;
  double K_est = 1.0;
  std::size_t sample_count = 0;
  std::size_t excluded_count = 0;
};

struct DilatationOptions {
  double jacobian_tolerance = 1e-12;
  /// Exclusion margin around declared seams, in units of the FD step.
  double seam_margin_steps = 10.0;
  unsigned threads = 1;
};

/// Pointwise outer and inner distortion sigma_max^n / J and J / sigma_min^n.
/// Empty when J is not positive beyond the tolerance.
inline std::optional<std::pair<double, double>> pointwise_dilatation(const Matrix& m, double jacobian_tolerance) {
  const auto sv = singular_values(m);
  if (!(sv.det > jacobian_tolerance)) return std::nullopt;
  const double n = static_cast<double>(m.rows());
  return std::pair{std::pow(sv.sigma_max, n) / sv.det, sv.det / std::pow(sv.sigma_min, n)};
}

/// Sampled estimate of K_O, K_I over a box (Halton sample). Samples with
/// non-positive Jacobian or near a declared seam are excluded and counted.
inline DilatationReport estimate_dilatation(const MapSpec& map, const Box& region, std::size_t samples,
                                            const DilatationOptions& opts = {}) {
  if (samples < 100) throw ParameterError("estimate_dilatation: need at least 100 samples");
  std::vector<double> k_outer(samples, 0.0), k_inner(samples, 0.0);
  std::vector<char> used(samples, 0);
  parallel_for(samples, opts.threads, [&](std::size_t i) {
    const Point x = halton_point(region, i);
    const double step = default_step(x);
    if (map.seam_distance && map.seam_distance(x) < opts.seam_margin_steps * step) return;
    const auto k = pointwise_dilatation(derivative_matrix(map, x, step), opts.jacobian_tolerance);
    if (!k) return;
    k_outer[i] = k->first;
    k_inner[i] = k->second;
    used[i] = 1;
  });
  DilatationReport report;
  for (std::size_t i = 0; i < samples; ++i) {
    if (!used[i]) {
      ++report.excluded_count;
      continue;
    }
    ++report.sample_count;
    report.K_O_est = std::max(report.K_O_est, k_outer[i]);
    report.K_I_est = std::max(report.K_I_est, k_inner[i]);
  }
  if (report.sample_count == 0) throw NumericError("estimate_dilatation: every sample was excluded", 0.0, 0.0);
  report.K_est = std::max(report.K_O_est, report.K_I_est);
  return report;
}

/// Smallest sampled sigma_min(Df) over a box, seams excluded.
inline double min_local_expansion(const MapSpec& map, const Box& region, std::size_t samples) {
  double least = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < samples; ++i) {
    const Point x = halton_point(region, i);
    const double step = default_step(x);
    if (map.seam_distance && map.seam_distance(x) < 10.0 * step) continue;
    least = std::min(least, singular_values(derivative_matrix(map, x, step)).sigma_min);
  }
  return least;
}

/// Quasi-uniform points on the sphere S(0, r): uniform angles on S^1, a
/// Fibonacci lattice on S^2.
inline std::vector<Point> sphere_sample(double r, int dim, std::size_t samples) {
  std::vector<Point> out;
  out.reserve(samples);
  if (dim == 2) {
    for (std::size_t i = 0; i < samples; ++i) {
      const double t = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(samples);
      out.push_back({r * std::cos(t), r * std::sin(t), 0.0});
    }
    return out;
  }
  const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
  for (std::size_t i = 0; i < samples; ++i) {
    const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(samples);
    const double rad = std::sqrt(std::max(0.0, 1.0 - z * z));
    const double phi = golden * static_cast<double>(i);
    out.push_back({r * rad * std::cos(phi), r * rad * std::sin(phi), r * z});
  }
  return out;
}

/// Sampled lower bound on M(r, f) = max_{|x| = r} |f(x)|.
inline double max_modulus(const MapSpec& map, double r, std::size_t samples) {
  if (!(r > 0.0)) throw ParameterError("max_modulus: radius must be positive");
  double best = 0.0;
  for (const auto& x : sphere_sample(r, map.dimension, samples)) best = std::max(best, norm(map(x)));
  return best;
}

struct HarnackReport {
  double theta_est = 1.0;
  Point center{};
  double radius = 0.0;
  /// |f| > 1 held on every sample of the doubled ball.
  bool valid = false;
  /// inf log|f| too close to zero for a meaningful ratio.
  bool ill_conditioned = false;
};

/// Ratio sup log|f| / inf log|f| over B(center, r), meaningful when |f| > 1
/// on B(center, 2r).
template <class Map>
HarnackReport harnack_ratio(const Map& f, int dim, const Point& center, double r, std::size_t samples) {
  if (!(r > 0.0)) throw ParameterError("harnack_ratio: radius must be positive");
  HarnackReport report;
  report.center = center;
  report.radius = r;
  for (const auto& x : ball_sample(center, 2.0 * r, dim, samples)) {
    if (!(norm(f(x)) > 1.0)) return report;
  }
  report.valid = true;
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& x : ball_sample(center, r, dim, samples)) {
    const double v = std::log(norm(f(x)));
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (lo < 1e-12) {
    report.ill_conditioned = true;
    report.theta_est = std::numeric_limits<double>::infinity();
    return report;
  }
  report.theta_est = hi / lo;
  return report;
}

inline HarnackReport harnack_ratio(const MapSpec& map, const Point& center, double r, std::size_t samples) {
  return harnack_ratio(map.eval, map.dimension, center, r, samples);
}

}  // namespace calculus
}  // namespace qrdyn
