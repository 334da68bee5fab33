#pragma once

#include <unordered_map>

#include "core.hpp"
#include "maps.hpp"

namespace qrdyn {

enum class PitsVerdict { HasPits, NoPits, Inconclusive };

inline const char* verdict_name(PitsVerdict v) {
  switch (v) {
    case PitsVerdict::HasPits: return "has_pits";
    case PitsVerdict::NoPits: return "no_pits";
    case PitsVerdict::Inconclusive: return "inconclusive";
  }
  return "?";
}

/// Sublevel threshold: the constant 1, or R^alpha when alpha > 0.
struct ThresholdRule {
  double alpha = 0.0;

  static ThresholdRule constant() { return {}; }
  static ThresholdRule power(double alpha) {
    if (!(alpha > 0.0)) throw ParameterError("threshold rule: alpha must be positive");
    return {alpha};
  }
  double at(double R) const { return alpha > 0.0 ? std::pow(R, alpha) : 1.0; }
  std::string describe() const {
    if (alpha <= 0.0) return "|f(x)| <= 1";
    std::ostringstream os;
    os << "|f(x)| <= R^" << alpha;
    return os.str();
  }
};

/// Greedy picks: each pick covers every point within 2 * radius of it.
/// Picks are pairwise more than 2 * radius apart.
struct GreedyCover {
  std::vector<Point> centers;
  std::size_t count() const { return centers.size(); }
};

struct PitsScanParams {
  std::size_t N = 10;
  double c = 2.0;
  double eps = 0.05;
  std::vector<double> radii{10.0, 20.0, 40.0, 80.0};
  ThresholdRule rule;
  /// Lattice points per length R; 0 picks max(32, 8 / eps).
  int density = 0;
  std::size_t max_samples = 10'000'000;
  unsigned threads = 1;
};

struct PitsRadiusRecord {
  double R = 0.0;
  double threshold = 1.0;
  std::size_t sampled = 0;
  std::size_t sublevel = 0;
  /// Balls of radius eps R that cover the sublevel sample (greedy at eps R / 2).
  std::size_t cover_upper = 0;
  /// Sample points pairwise more than 2 eps R apart (greedy at eps R).
  std::size_t separated_lower = 0;
  /// Smallest |x| among sublevel points, infinity when there are none.
  double min_modulus = std::numeric_limits<double>::infinity();
};

struct PitsReport {
  PitsVerdict verdict = PitsVerdict::Inconclusive;
  std::size_t N_used = 0;
  double c = 0.0;
  double eps = 0.0;
  std::vector<double> radii_tested;
  std::vector<std::size_t> cover_counts;
  std::vector<PitsRadiusRecord> records;
  std::string threshold_rule;
  /// For no_pits: more than N points at the largest R, pairwise more than
  /// 2 eps R apart.
  std::vector<Point> witness;
  double witness_R = 0.0;
  /// Largest ratio of smallest sublevel moduli across consecutive radii.
  double sequence_ratio = std::numeric_limits<double>::infinity();
};

namespace pits {

/// Lattice sample (spacing R / density) of the shell R <= |x| <= cR, keeping
/// the points where |f| <= threshold.
inline std::vector<Point> sublevel_sample(const MapSpec& map, double R, double c, double threshold, int density,
                                          std::size_t max_samples = 10'000'000, std::size_t* sampled = nullptr) {
  if (!(R > 0.0)) throw ParameterError("sublevel_sample: R must be positive");
  if (!(c > 1.0)) throw ParameterError("sublevel_sample: c must exceed 1");
  if (density < 32) throw ParameterError("sublevel_sample: density must be at least 32");
  const int dim = map.dimension;
  double h = R / density;
  auto per_axis = [&] { return static_cast<std::size_t>(std::ceil(2.0 * c * R / h)); };
  while (std::pow(static_cast<double>(per_axis()), dim) > static_cast<double>(max_samples)) h *= 1.05;
  const std::size_t n = per_axis();
  const std::size_t nz = dim == 3 ? n : 1;
  std::vector<Point> out;
  std::size_t count = 0;
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < n; ++i) {
        const Point x{-c * R + (i + 0.5) * h, -c * R + (j + 0.5) * h, dim == 3 ? -c * R + (k + 0.5) * h : 0.0};
        const double r = norm(x);
        if (r < R || r > c * R) continue;
        ++count;
        if (norm(map(x)) <= threshold) out.push_back(x);
      }
  if (sampled) *sampled = count;
  return out;
}

/// Greedy cover in lexicographic order, backed by a hash grid of cell size
/// 2 * radius.
inline GreedyCover greedy_cover(std::vector<Point> points, double radius) {
  if (!(radius > 0.0)) throw ParameterError("greedy_cover: radius must be positive");
  GreedyCover out;
  if (points.empty()) return out;
  std::sort(points.begin(), points.end());
  const double reach = 2.0 * radius;
  using Key = std::array<long long, 3>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const {
      return std::hash<long long>()(k[0]) ^ (std::hash<long long>()(k[1]) * 31) ^ (std::hash<long long>()(k[2]) * 131);
    }
  };
  auto key_of = [&](const Point& p) {
    return Key{static_cast<long long>(std::floor(p[0] / reach)), static_cast<long long>(std::floor(p[1] / reach)),
               static_cast<long long>(std::floor(p[2] / reach))};
  };
  std::unordered_map<Key, std::vector<std::size_t>, KeyHash> cells;
  for (std::size_t i = 0; i < points.size(); ++i) cells[key_of(points[i])].push_back(i);
  std::vector<char> covered(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    if (covered[i]) continue;
    out.centers.push_back(points[i]);
    const Key k = key_of(points[i]);
    for (long long dz = -1; dz <= 1; ++dz)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dx = -1; dx <= 1; ++dx) {
          const auto it = cells.find(Key{k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == cells.end()) continue;
          for (std::size_t j : it->second)
            if (!covered[j] && dist(points[i], points[j]) <= reach) covered[j] = 1;
        }
  }
  return out;
}

inline std::size_t greedy_cover_count(const std::vector<Point>& points, double radius) {
  return greedy_cover(points, radius).count();
}

/// Finite rendering of the pits-effect quantifiers. has_pits: at every tested
/// R beyond the smallest, the sublevel sample is non-empty and N balls of
/// radius eps R cover it. no_pits: more than N separated points at half or
/// more of the tested R, the largest included. Otherwise inconclusive.
inline PitsReport pits_scan(const MapSpec& map, const PitsScanParams& params) {
  const auto& radii = params.radii;
  if (radii.size() < 4) throw ParameterError("pits_scan: need at least 4 radii");
  if (!std::is_sorted(radii.begin(), radii.end()) || std::adjacent_find(radii.begin(), radii.end()) != radii.end())
    throw ParameterError("pits_scan: radii must be strictly increasing");
  if (!(radii.front() > 0.0) || radii.back() / radii.front() < 4.0)
    throw ParameterError("pits_scan: radii must span at least 2 octaves");
  if (!(params.eps > 0.0)) throw ParameterError("pits_scan: eps must be positive");
  if (params.N == 0) throw ParameterError("pits_scan: N must be positive");
  const int density =
      params.density > 0 ? params.density : std::max(32, static_cast<int>(std::ceil(8.0 / params.eps)));

  PitsReport report;
  report.N_used = params.N;
  report.c = params.c;
  report.eps = params.eps;
  report.radii_tested = radii;
  report.threshold_rule = params.rule.describe();
  report.records.resize(radii.size());
  std::vector<std::vector<Point>> witnesses(radii.size());

  parallel_for(radii.size(), resolve_threads(params.threads), [&](std::size_t i) {
    PitsRadiusRecord& rec = report.records[i];
    rec.R = radii[i];
    rec.threshold = params.rule.at(rec.R);
    const auto sample =
        sublevel_sample(map, rec.R, params.c, rec.threshold, density, params.max_samples, &rec.sampled);
    rec.sublevel = sample.size();
    for (const auto& p : sample) rec.min_modulus = std::min(rec.min_modulus, norm(p));
    const double r = params.eps * rec.R;
    rec.cover_upper = greedy_cover_count(sample, 0.5 * r);
    auto separated = greedy_cover(sample, r);
    rec.separated_lower = separated.count();
    witnesses[i] = std::move(separated.centers);
  });

  std::size_t exceeded = 0;
  bool covered_beyond_first = true;
  for (std::size_t i = 0; i < radii.size(); ++i) {
    const auto& rec = report.records[i];
    report.cover_counts.push_back(rec.cover_upper);
    if (rec.separated_lower > params.N) ++exceeded;
    if (i > 0 && rec.cover_upper > params.N) covered_beyond_first = false;
    if (i > 0 && rec.sublevel == 0) covered_beyond_first = false;
  }
  const auto& last = report.records.back();
  if (covered_beyond_first) {
    report.verdict = PitsVerdict::HasPits;
  } else if (last.separated_lower > params.N && 2 * exceeded >= radii.size()) {
    report.verdict = PitsVerdict::NoPits;
    report.witness = witnesses.back();
    report.witness_R = last.R;
  }

  double ratio = 0.0;
  for (std::size_t i = 1; i < radii.size(); ++i)
    ratio = std::max(ratio, report.records[i].min_modulus / report.records[i - 1].min_modulus);
  if (std::isfinite(ratio)) report.sequence_ratio = ratio;
  return report;
}

struct RobustnessResult {
  /// Empty when either scan is inconclusive.
  std::optional<bool> agree;
  PitsReport unit_threshold;
  PitsReport power_threshold;
};

/// Compares the verdicts for the thresholds 1 and R^alpha.
inline RobustnessResult threshold_robustness(const MapSpec& map, PitsScanParams params, double alpha) {
  if (map.polynomial_type)
    throw ParameterError("threshold_robustness: the pits effect is defined for transcendental-type maps only");
  if (!(alpha > 1.0)) throw ParameterError("threshold_robustness: alpha must exceed 1");
  RobustnessResult out;
  params.rule = ThresholdRule::constant();
  out.unit_threshold = pits_scan(map, params);
  params.rule = ThresholdRule::power(alpha);
  out.power_threshold = pits_scan(map, params);
  if (out.unit_threshold.verdict != PitsVerdict::Inconclusive &&
      out.power_threshold.verdict != PitsVerdict::Inconclusive)
    out.agree = out.unit_threshold.verdict == out.power_threshold.verdict;
  return out;
}

}  // namespace pits
}  // namespace qrdyn
