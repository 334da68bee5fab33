// Acceptance suite: one PASS/FAIL line per criterion.

#include <chrono>
#include <cstdio>
#include <iostream>

#include "qrdyn/capacity.hpp"
#include "qrdyn/io.hpp"
#include "qrdyn/julia.hpp"
#include "qrdyn/pits.hpp"
#include "qrdyn/precision.hpp"
#include "stubs.hpp"

using namespace qrdyn;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Line {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

int failures = 0;

template <class Body>
void criterion(int id, const char* title, Body&& body) {
  Line line;
  try {
    body(line);
  } catch (const std::exception& e) {
    line.pass = false;
    line.detail << " [exception: " << e.what() << "]";
  }
  if (!line.pass) ++failures;
  std::cout << (line.pass ? "PASS" : "FAIL") << "  " << id << ". " << title << ":" << line.detail.str() << std::endl;
}

// Real fixed points of lambda e^x by Newton on lambda e^x - x.
double newton_exp_fixed_point(double lambda, double x) {
  for (int i = 0; i < 100; ++i) x -= (lambda * std::exp(x) - x) / (lambda * std::exp(x) - 1.0);
  return x;
}

void ring_capacity(Line& line) {
  CapacityOptions opts;
  opts.threads = 1;
  auto t0 = Clock::now();
  const double planar = capacity::solve_capacity(capacity::ring_geometry(2, 1.0, std::numbers::e, 256), 256, opts).value;
  const double t_planar = seconds_since(t0);
  t0 = Clock::now();
  const double spatial = capacity::solve_capacity(capacity::ring_geometry(3, 1.0, std::numbers::e, 96), 96, opts).value;
  const double t_spatial = seconds_since(t0);
  const double e2 = planar / (2.0 * std::numbers::pi) - 1.0;
  const double e3 = spatial / (4.0 * std::numbers::pi) - 1.0;
  line.detail << std::setprecision(5) << " n=2 256^2 cap " << planar << " (err " << 100 * e2 << "%, " << t_planar
              << " s); n=3 96^3 cap " << spatial << " (err " << 100 * e3 << "%, " << t_spatial << " s)";
  line.require(std::abs(e2) <= 0.05 && t_planar < 60.0, "n=2 within 5% in 60 s");
  line.require(std::abs(e3) <= 0.08 && t_spatial < 600.0, "n=3 within 8% in 10 min");
}

CondenserGeometry random_disk_condenser(double domain_r, const Point& domain_c, double plate_r, const Point& plate_c,
                                        bool square_plate) {
  CondenserGeometry geo;
  geo.dim = 2;
  geo.window = Box::planar(-1, 1, -1, 1);
  geo.domain = [domain_r, domain_c](const Point& x) { return dist(x, domain_c) < domain_r; };
  geo.plate_distance = [plate_r, plate_c, square_plate](const Point& x) {
    if (!square_plate) return std::max(0.0, dist(x, plate_c) - plate_r);
    Point d{std::max(0.0, std::abs(x[0] - plate_c[0]) - plate_r), std::max(0.0, std::abs(x[1] - plate_c[1]) - plate_r),
            0.0};
    return norm(d);
  };
  return geo;
}

void monotonicity(Line& line) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int violations = 0;
  double worst = -1.0;
  for (int trial = 0; trial < 20; ++trial) {
    // (A1, C1) with A1 inside A2 and C2 inside C1.
    const Point ca{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.0};
    const double ra1 = 0.45 + 0.25 * u(rng);
    const double ra2 = trial % 3 == 1 ? ra1 : ra1 + 0.05 + 0.2 * u(rng);
    const Point cc = ca + Point{0.1 * (u(rng) - 0.5), 0.1 * (u(rng) - 0.5), 0.0};
    const double rc1 = 0.1 + 0.15 * u(rng);
    const double rc2 = trial % 3 == 0 ? rc1 : rc1 * (0.3 + 0.6 * u(rng));
    const bool square = trial % 2 == 1;
    const double cap1 = capacity::solve_capacity(random_disk_condenser(ra1, ca, rc1, cc, square), 96).value;
    const double cap2 = capacity::solve_capacity(random_disk_condenser(ra2, ca, rc2, cc, square), 96).value;
    const double excess = (cap2 - cap1) / cap1;
    worst = std::max(worst, excess);
    if (excess > 1e-5) ++violations;
  }
  line.detail << " 20 nested pairs, violations " << violations << ", largest relative increase " << std::setprecision(3)
              << worst;
  line.require(violations == 0, "no violations");
}

void fatou(Line& line) {
  const auto f = maps::make_fatou_modified(50.0);
  const double residual = dist(f(Point{75, 0, 0}), Point{75, 0, 0});
  const auto right = dynamics::classify_point(f, Point{76, 0, 0});
  const auto fixed = dynamics::classify_point(f, Point{75, 0, 0});
  ClassifyBudget budget;
  budget.k_max = 200000;
  const auto grid = Grid::planar(Box::planar(74, 76, 0, 0), 201, 1);
  const auto sample = julia::julia_boundary_estimate(f, dynamics::classify_grid(f, grid, budget));
  bool flagged = false;
  for (const auto& p : sample.points) flagged |= std::abs(p[0] - 75.0) <= grid.cell_size(0);
  const Point x{75, 2, 0};
  const auto verdict = julia::julia_membership_spreading(f, x, 0.05);
  bool in_half_plane = true;
  for (const auto& p : dynamics::iterate(f, x, verdict.depth_used).points) in_half_plane &= p[0] > 50.0;
  line.detail << " |f(75)-75| " << residual << "; 76 " << label_name(right.label) << ", 75 "
              << label_name(fixed.label) << "; candidate at 75 " << (flagged ? "yes" : "no") << "; 75+2i coverage "
              << verdict.coverage_fraction << (in_half_plane ? ", orbit in Re z > 50" : ", orbit left Re z > 50");
  line.require(residual <= 1e-12, "fixed point");
  line.require(right.label == Label::Escaping && fixed.label == Label::Bounded, "classification");
  line.require(flagged, "boundary candidate");
  line.require(!verdict.julia_positive && in_half_plane, "spreading negative in the half-plane");
}

void annulus(Line& line) {
  const auto map = maps::make_annulus_fixed(0.05);
  const auto grid = Grid::planar(Box::planar(-4, 4, -4, 4), 256, 256);
  const auto labeled = dynamics::classify_grid(map, grid);
  std::size_t inner = 0, inner_basin = 0, ring = 0, ring_bounded = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double r = norm(grid.center(i));
    const auto& c = labeled.cells[i];
    if (r < 1.9) {
      ++inner;
      inner_basin += c.label == Label::Basin && c.basin_id == 0;
    } else if (r > 2.05 && r < 2.95) {
      ++ring;
      ring_bounded += c.label == Label::Bounded;
    }
  }
  std::vector<Point> circle;
  for (int k = 0; k < 16; ++k) {
    const double t = 2.0 * std::numbers::pi * k / 16.0;
    circle.push_back({2.0 * std::cos(t), 2.0 * std::sin(t), 0.0});
  }
  int negatives = 0;
  SpreadingOptions parallel;
  parallel.threads = 0;
  for (const auto& v : julia::julia_membership_spreading(map, circle, 0.05, 30, std::nullopt, 0, parallel))
    negatives += !v.julia_positive;
  const Box region = Box::planar(-5, 5, -5, 5);
  const double k_small = calculus::estimate_dilatation(maps::make_annulus_fixed(0.01), region, 20000).K_est;
  const double k_large = calculus::estimate_dilatation(maps::make_annulus_fixed(0.1), region, 20000).K_est;
  const double basin_fraction = static_cast<double>(inner_basin) / inner;
  line.detail << std::setprecision(5) << " Basin(0) in B(0,1.9) " << 100 * basin_fraction << "%; Bounded in annulus "
              << ring_bounded << "/" << ring << "; S(0,2) negatives " << negatives << "/16; K(0.01) " << k_small
              << " < K(0.1) " << k_large;
  line.require(basin_fraction >= 0.99, "basin fraction");
  line.require(ring_bounded == ring, "annulus bounded");
  line.require(negatives == 16, "circle negative");
  line.require(k_small < k_large, "dilatation ordering");
}

void exponential(Line& line) {
  const auto map = maps::make_exp(0.2);
  const double q_oracle = newton_exp_fixed_point(0.2, 0.0);
  const double p_oracle = newton_exp_fixed_point(0.2, 3.0);
  const auto search = dynamics::find_fixed_points(map, Box::planar(0, 3, -1, 1), 1, 64);
  std::optional<dynamics::FixedPointRecord> q, p;
  for (const auto& r : search.records) {
    if (std::abs(r.location[0] - q_oracle) < 1e-4 && std::abs(r.location[1]) < 1e-4) q = r;
    if (std::abs(r.location[0] - p_oracle) < 1e-4 && std::abs(r.location[1]) < 1e-4) p = r;
  }
  const auto at_p = julia::julia_membership_spreading(map, Point{p_oracle, 0, 0}, 0.05);
  const auto at_q = julia::julia_membership_spreading(map, Point{q_oracle, 0, 0}, 0.05);
  line.detail << std::setprecision(6) << " oracle q " << q_oracle << ", p " << p_oracle;
  if (q) line.detail << "; found q " << q->location[0] << " (" << dynamics::stability_name(q->stability) << ")";
  if (p) line.detail << "; found p " << p->location[0] << " (" << dynamics::stability_name(p->stability) << ")";
  line.detail << "; coverage at p " << at_p.coverage_fraction << ", at q " << at_q.coverage_fraction;
  line.require(std::abs(q_oracle - 0.2592) <= 1e-4 && std::abs(p_oracle - 2.5426) <= 1e-4, "oracle values");
  line.require(q && q->stability == dynamics::Stability::Attracting, "q attracting");
  line.require(p && p->stability == dynamics::Stability::Repelling, "p repelling");
  line.require(at_p.julia_positive && !at_q.julia_positive, "spreading verdicts");
}

void zorich(Line& line) {
  const auto t0 = Clock::now();
  const double a = 10.0, M = 2.0;
  const auto map = maps::make_zorich(a, M);
  const Point xi = map.attractors.at(0);
  const double residual = dist(map(xi), xi);
  const auto contraction = maps::measure_contraction(a, M, 10000);

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> height(M + 1, M + 10), unit(0.0, 1.0);
  std::uniform_int_distribution<int> beam(-3, 3);
  int expansion_passed = 0;
  for (int i = 0; i < 100; ++i) {
    const double modulus = std::exp(height(rng));
    const double polar = std::acos(std::max((M + a + 0.5) / modulus, unit(rng)));
    const double azimuth = 2 * std::numbers::pi * unit(rng);
    const Point y{modulus * std::sin(polar) * std::cos(azimuth), modulus * std::sin(polar) * std::sin(azimuth),
                  modulus * std::cos(polar) - a};
    maps::BeamIndex r{beam(rng), beam(rng)};
    if (!r.even()) r.r2 += 1;
    const Point x = maps::zorich_inverse_branch(y, r, a, M);
    const double R = std::max(unit(rng), 1e-3);
    expansion_passed += dynamics::check_expansion(a, M, contraction.alpha, x, R, 500).holds;
  }

  const auto hp = maps::make_zorich<HighPrecision>(a, M);
  const auto sample = julia::backward_orbit_sample(hp, BasicPoint<HighPrecision>{0, 0, 5}, 10000, 3, 11);
  std::size_t in_tracts = 0, basin = 0;
  std::vector<char> is_basin(sample.points.size(), 0);
  parallel_for(sample.points.size(), resolve_threads(0), [&](std::size_t i) {
    is_basin[i] = dynamics::classify_point(hp, sample.points[i]).label == Label::Basin;
  });
  for (std::size_t i = 0; i < sample.points.size(); ++i) {
    const auto& p = sample.points[i];
    const Point x{static_cast<double>(p[0]), static_cast<double>(p[1]), static_cast<double>(p[2])};
    in_tracts += x[2] >= M && maps::BeamIndex::of(x).even();
    basin += is_basin[i];
  }
  const double elapsed = seconds_since(t0);
  line.detail << std::setprecision(5) << " xi residual " << residual << "; alpha " << contraction.alpha
              << "; expansion " << expansion_passed << "/100; backward samples " << sample.points.size()
              << ", in even tracts with x3 >= M " << in_tracts << ", Basin " << basin << "; " << elapsed << " s";
  line.require(residual < 1e-9, "fixed point residual");
  line.require(contraction.alpha < 1.0, "contraction");
  line.require(expansion_passed == 100, "expansion");
  line.require(sample.points.size() == 10000 && in_tracts == 10000 && basin == 0, "backward sample");
  line.require(elapsed < 300.0, "under 5 min");
}

void pits_scans(Line& line) {
  const PitsScanParams params;
  const auto exp_map = maps::make_exp(0.2);
  const auto e = pits::pits_scan(exp_map, params);
  bool witness_ok = e.verdict == PitsVerdict::NoPits && e.witness.size() > params.N;
  const double R = e.witness_R, sep = 2.0 * params.eps * R;
  for (std::size_t i = 0; i < e.witness.size() && witness_ok; ++i) {
    const double r = norm(e.witness[i]);
    witness_ok &= r >= R && r <= params.c * R && norm(exp_map(e.witness[i])) <= params.rule.at(R);
    for (std::size_t j = i + 1; j < e.witness.size(); ++j) witness_ok &= dist(e.witness[i], e.witness[j]) > sep;
  }
  const auto s = pits::pits_scan(testing_stubs::three_cluster_map(), params);
  const auto re = pits::threshold_robustness(exp_map, params, 1.5);
  const auto rs = pits::threshold_robustness(testing_stubs::three_cluster_map(), params, 1.5);
  line.detail << " exp " << verdict_name(e.verdict) << " (witness " << e.witness.size() << " points at R=" << R
              << (witness_ok ? ", valid" : ", invalid") << "); stub " << verdict_name(s.verdict)
              << "; robustness exp " << (re.agree ? (*re.agree ? "agree" : "disagree") : "undecided") << ", stub "
              << (rs.agree ? (*rs.agree ? "agree" : "disagree") : "undecided");
  line.require(witness_ok, "exp no_pits witness");
  line.require(s.verdict == PitsVerdict::HasPits, "stub has_pits");
  line.require(re.agree == true && rs.agree == true, "robustness");
}

void box_dimension(Line& line) {
  std::vector<Point> cantor{{0.0, 0.0, 0.0}};
  double scale = 1.0;
  for (int d = 0; d < 12; ++d) {
    scale /= 3.0;
    std::vector<Point> next;
    for (const auto& p : cantor) {
      next.push_back(p);
      next.push_back({p[0] + 2.0 * scale, 0.0, 0.0});
    }
    cantor.swap(next);
  }
  for (auto& p : cantor) p[0] += 0.5 * scale;
  std::vector<double> triadic;
  for (int k = 1; k <= 7; ++k) triadic.push_back(std::pow(3.0, -k));
  const double dc = julia::box_dimension(cantor, Box::planar(0, 1, -0.5, 0.5), triadic).dimension;

  std::vector<Point> circle;
  for (int i = 0; i < 20000; ++i) {
    const double t = 2.0 * std::numbers::pi * i / 20000.0;
    circle.push_back({std::cos(t), std::sin(t), 0.0});
  }
  const double d1 = julia::box_dimension(circle, Box::planar(-1.1, 1.1, -1.1, 1.1),
                                         {1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128})
                        .dimension;
  std::vector<Point> square;
  const Box unit = Box::planar(0, 1, 0, 1);
  for (std::size_t i = 0; i < 100000; ++i) square.push_back(halton_point(unit, i));
  const double d2 = julia::box_dimension(square, unit, {1.0 / 4, 1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64}).dimension;
  line.detail << std::setprecision(5) << " Cantor " << dc << ", circle " << d1 << ", square " << d2;
  line.require(std::abs(dc - std::log(2.0) / std::log(3.0)) <= 0.05, "Cantor");
  line.require(std::abs(d1 - 1.0) <= 0.05, "circle");
  line.require(std::abs(d2 - 2.0) <= 0.1, "square");
}

void determinism(Line& line) {
  const auto map = maps::make_annulus_fixed(0.05);
  const auto grid = Grid::planar(Box::planar(-4, 4, -4, 4), 256, 256);
  const auto dir = std::filesystem::temp_directory_path() / "qrdyn_acceptance";
  std::filesystem::create_directories(dir);
  std::vector<std::string> digests;
  for (unsigned workers : {1u, 8u}) {
    const auto labeled = dynamics::classify_grid(map, grid, {}, workers);
    const auto files = io::write_grid_images(dir / ("annulus_" + std::to_string(workers)), grid,
                                             [&](std::size_t i) { return io::label_gray(labeled.cells[i]); });
    digests.push_back(io::file_digest(files.at(0)));
  }
  const auto a = io::read_pgm(dir / "annulus_1.pgm"), b = io::read_pgm(dir / "annulus_8.pgm");
  std::filesystem::remove_all(dir);
  line.detail << " fnv1a64 1 worker " << digests[0] << ", 8 workers " << digests[1];
  line.require(digests[0] == digests[1] && a.pixels == b.pixels, "byte-identical PGM");
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion(1, "Ring-condenser capacity", ring_capacity);
  criterion(2, "Capacity monotonicity", monotonicity);
  criterion(3, "Fatou-modified map (M=50)", fatou);
  criterion(4, "Annulus-fixed map (delta=0.05)", annulus);
  criterion(5, "Exponential map (lambda=0.2)", exponential);
  criterion(6, "Zorich map (a=10, M=2)", zorich);
  criterion(7, "Pits scans", pits_scans);
  criterion(8, "Box-dimension estimator", box_dimension);
  criterion(9, "Determinism across workers", determinism);
  std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << " (" << std::setprecision(4)
            << seconds_since(t0) << " s)" << std::endl;
  return failures == 0 ? 0 : 1;
}
