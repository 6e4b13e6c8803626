#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "support.hpp"

using namespace divflow;

namespace {

AtomicMeasure segment(int n, Point a, Point b) {
  std::vector<Atom> atoms;
  for (int k = 0; k < n; ++k) {
    const double t = (k + 0.5) / n;
    atoms.push_back({Point{a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0}, 1.0 / n});
  }
  return AtomicMeasure(2, std::move(atoms));
}

/// |mu|(closed B(c, r)) by scanning every atom.
double scan_mass(const AtomicMeasure& mu, const Point& c, double r) {
  double m = 0.0;
  for (const auto& a : mu.atoms())
    if (squared_distance(a.x, c) <= r * r) m += std::abs(a.weight);
  return m;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::ParseError;
}

GridDomain unit_square(int n) { return rectangle_domain(n, n, 1.0 / n, Connectivity::Full); }

}  // namespace

TEST(AtomicMeasure, MergesAndDropsZeros) {
  AtomicMeasure mu(2, {{{1, 1, 0}, 2.0}, {{0, 0, 0}, 1.0}, {{1, 1, 0}, -2.0}, {{0, 0, 0}, 0.5}, {{3, 0, 0}, 0.0}});
  ASSERT_EQ(mu.size(), 1u);
  EXPECT_EQ(mu.atoms()[0].weight, 1.5);
}

TEST(MeasureStats, Examples) {
  AtomicMeasure dip(2, {{{3, 4, 0}, 1.0}, {{0, 0, 0}, -1.0}});
  auto s = measure_stats(dip);
  EXPECT_EQ(s.mass, 0.0);
  EXPECT_EQ(s.variation, 2.0);
  EXPECT_TRUE(s.balanced);
  EXPECT_EQ(s.first_moment, 5.0);

  auto e = measure_stats(AtomicMeasure(2));
  EXPECT_EQ(e.mass, 0.0);
  EXPECT_EQ(e.variation, 0.0);
  EXPECT_TRUE(e.balanced);
  EXPECT_EQ(e.first_moment, 0.0);

  std::vector<Atom> atoms;
  double weighted_gap = 0.0;
  for (int j = 1; j <= 5; ++j) {
    const double th = std::pow(2.0, -j);
    const Point a{double(j), 0.0, 0.0}, b{double(j), 1.0, 0.0};
    atoms.push_back({b, th});
    atoms.push_back({a, -th});
    weighted_gap += th * distance(a, b);
  }
  EXPECT_TRUE(measure_stats(AtomicMeasure(2, atoms)).balanced);
  EXPECT_DOUBLE_EQ(weighted_gap, 31.0 / 32.0);
}

TEST(MzNorm, SingleAtomAndEmpty) {
  AtomicMeasure mu(2, {{{0.3, 0.2, 0}, -2.5}});
  EXPECT_DOUBLE_EQ(mz_norm_above(mu, 0.01), 250.0);
  EXPECT_EQ(mz_norm_above(AtomicMeasure(2), 0.1), 0.0);
  EXPECT_EQ(code_of([] { mz_norm_above(AtomicMeasure(2), 0.0); }), ErrorCode::NonpositiveRadius);
}

TEST(MzNorm, SegmentAtAtomSpacingCountsThreeAtoms) {
  // With r_min equal to the atom spacing the closed ball around an atom holds
  // the atom and both neighbours: 3 * 1e-3 / 1e-3.
  auto mu = segment(1000, {0, 0, 0}, {1, 0, 0});
  EXPECT_NEAR(mz_norm_above(mu, 1e-3), 3.0, 1e-9);
  // sup over k of (2k + 1)/k at r = k * spacing decreases towards 2.
  EXPECT_NEAR(mz_norm_above(mu, 1e-2), 2.1, 1e-9);
}

TEST(MzNorm, FineSegmentApproachesContinuumValue) {
  // spacing / r_min = 1/40, so the sup is (2 * 40 + 1) / 40
  auto mu = segment(4000, {0, 0, 0}, {1, 0, 0});
  EXPECT_NEAR(mz_norm_above(mu, 1e-2), 81.0 / 40.0, 1e-9);
}

TEST(MzNorm, AtomCentresMatchBruteForce) {
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Atom> atoms;
    const int n = 50 + 40 * trial;
    for (int k = 0; k < n; ++k) atoms.push_back({{u(rng), trial % 2 ? 0.5 : u(rng), 0}, u(rng) - 0.3});
    AtomicMeasure mu(2, atoms);
    const double rmin = 0.003 * (1 + trial);
    double brute = 0.0;
    for (const auto& c : mu.atoms()) {
      std::vector<double> radii{rmin};
      for (const auto& a : mu.atoms()) radii.push_back(std::max(rmin, distance(a.x, c.x)));
      for (double r : radii) brute = std::max(brute, scan_mass(mu, c.x, r) / r);
    }
    EXPECT_NEAR(mz_norm_above(mu, rmin), brute, 1e-12 * brute);
  }
}

TEST(MzNorm, StrategiesOnSmallMeasures) {
  // Two equal atoms at distance 2: the midpoint ball of radius 1 holds both.
  AtomicMeasure pair(2, {{{0, 0, 0}, 1.0}, {{2, 0, 0}, 1.0}});
  EXPECT_DOUBLE_EQ(mz_norm_above(pair, 1.0, CenterStrategy::Atoms), 1.0);
  EXPECT_DOUBLE_EQ(mz_norm_above(pair, 1.0, CenterStrategy::AtomsAndMidpoints), 2.0);
  // Equilateral triangle of side 1: circumradius 1/sqrt(3) catches all three.
  const double s3 = std::sqrt(3.0);
  AtomicMeasure tri(2, {{{0, 0, 0}, 1.0}, {{1, 0, 0}, 1.0}, {{0.5, s3 / 2, 0}, 1.0}});
  const double rmin = 1.0 / s3;
  EXPECT_NEAR(mz_norm_above(tri, rmin, CenterStrategy::Exhaustive), 3.0 * s3, 1e-9);
  EXPECT_LT(mz_norm_above(tri, rmin, CenterStrategy::AtomsAndMidpoints), 3.0 * s3 - 1e-3);
}

TEST(MzNorm, ExhaustiveMatchesDenseCentreSearch) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<Atom> atoms;
    for (int k = 0; k < 6; ++k) atoms.push_back({{u(rng), u(rng), 0}, u(rng) - 0.5});
    AtomicMeasure mu(2, atoms);
    const double rmin = 0.15;
    const double exact = mz_norm_above(mu, rmin, CenterStrategy::Exhaustive);
    // dense centre grid with radii from the distance breakpoints
    double dense = 0.0;
    for (int i = -50; i <= 150; ++i) {
      for (int j = -50; j <= 150; ++j) {
        const Point c{i / 100.0, j / 100.0, 0};
        std::vector<double> radii{rmin};
        for (const auto& a : mu.atoms()) radii.push_back(std::max(rmin, distance(a.x, c)));
        for (double r : radii) dense = std::max(dense, scan_mass(mu, c, r) / r);
      }
    }
    EXPECT_GE(exact, dense - 1e-9);
    EXPECT_LE(exact, dense * 1.05);
  }
}

TEST(MzNorm, SubadditiveAndDilationCovariant) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Atom> a, b;
    for (int k = 0; k < 30; ++k) a.push_back({{u(rng), u(rng), 0}, u(rng) - 0.5});
    for (int k = 0; k < 30; ++k) b.push_back({{u(rng), u(rng), 0}, u(rng) - 0.5});
    AtomicMeasure ma(2, a), mb(2, b);
    const double r = 0.05;
    EXPECT_LE(mz_norm_above(ma + mb, r), mz_norm_above(ma, r) + mz_norm_above(mb, r) + 1e-12);
    EXPECT_NEAR(mz_norm_above(ma.dilated(2.0), 2.0 * r), mz_norm_above(ma, r) / 2.0, 1e-12);
  }
}

TEST(BallMassIndex, MatchesScan) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::vector<Atom> atoms;
  for (int k = 0; k < 3000; ++k) atoms.push_back({{u(rng), u(rng), 0}, u(rng)});
  AtomicMeasure mu(2, atoms);
  for (double bucket : {0.01, 0.1, 0.7}) {
    BallMassIndex index(mu, bucket);
    for (int q = 0; q < 300; ++q) {
      const Point c{u(rng), u(rng), 0};
      const double r = std::abs(u(rng)) * 0.5;
      EXPECT_NEAR(index.mass(c, r), scan_mass(mu, c, r), 1e-9);
    }
  }
}

TEST(Eta, EmptyAndErrors) {
  auto d = unit_square(9);
  EXPECT_EQ(eta(AtomicMeasure(2), d, 0.5), 0.0);
  AtomicMeasure out(2, {{{1.5, 0.5, 0}, 1.0}});
  EXPECT_EQ(code_of([&] { eta(out, d, 0.5); }), ErrorCode::AtomOutside);
  EXPECT_EQ(code_of([&] { eta(AtomicMeasure(2), d, 0.0); }), ErrorCode::BadTau);
  EXPECT_EQ(code_of([&] { eta(AtomicMeasure(2), d, 1.5); }), ErrorCode::BadTau);
}

TEST(Eta, AtomAtCentreDivergesLikeFourOverTau) {
  auto d = unit_square(65);
  AtomicMeasure mu(2, {{{0.5, 0.5, 0}, 1.0}});
  for (double tau : {1.0, 0.5, 0.2, 0.1}) EXPECT_GE(eta(mu, d, tau), 4.0 / tau * (1 - 1e-12));
  // Once tau * delta < one cell no other centre reaches the atom.
  for (double tau : {0.02, 0.01, 0.005}) EXPECT_NEAR(eta(mu, d, tau), 4.0 / tau, 1e-9 * 4.0 / tau);
}

TEST(Eta, SegmentDoesNotVanishAndMatchesScanOracle) {
  auto d = unit_square(65);
  auto mu = segment(10000, {0.25, 0.5, 0}, {0.75, 0.5, 0});
  std::vector<double> values;
  for (double tau : {0.2, 0.1, 0.05}) {
    const double got = eta(mu, d, tau);
    double scan = 0.0, analytic = 0.0;
    for (std::size_t i = 0; i < d.num_cells(); ++i) {
      const auto x = d.center(i);
      const double delta = std::min({x[0], 1 - x[0], x[1], 1 - x[1]});
      const double rho = tau * delta;
      scan = std::max(scan, scan_mass(mu, x, rho) / (delta * rho));
      const double dy = std::abs(x[1] - 0.5);
      if (dy < rho) {
        const double half = std::sqrt(rho * rho - dy * dy);
        const double len = std::max(0.0, std::min(0.75, x[0] + half) - std::max(0.25, x[0] - half));
        analytic = std::max(analytic, 2.0 * len / (delta * rho));
      }
    }
    EXPECT_NEAR(got, scan, 1e-9 * scan);
    EXPECT_NEAR(got, analytic, 0.01 * analytic);
    values.push_back(got);
  }
  // The ratio stays bounded away from zero as tau shrinks.
  EXPECT_GT(values.back(), 0.9 * values.front());
  EXPECT_GT(values.back(), 8.0);
}

TEST(Koch, LevelZero) {
  auto k = koch_curve({{}, 0, {0, 0, 0}, {2, 0, 0}});
  ASSERT_EQ(k.vertices.size(), 2u);
  EXPECT_EQ(k.length, 2.0);
  ASSERT_EQ(k.measure.size(), 1u);
  EXPECT_EQ(k.measure.atoms()[0].weight, 1.0);
}

TEST(Koch, ClassicalAngle) {
  const double pi = std::numbers::pi;
  auto k = koch_curve({{pi / 3, pi / 3, pi / 3}, 3, {0, 0, 0}, {1, 0, 0}});
  EXPECT_NEAR(k.length, 64.0 / 27.0, 1e-12);
  EXPECT_EQ(k.vertices.size(), 65u);
  // classical apex of the first level
  auto k1 = koch_curve({{pi / 3}, 1, {0, 0, 0}, {1, 0, 0}});
  EXPECT_NEAR(k1.vertices[2][0], 0.5, 1e-15);
  EXPECT_NEAR(k1.vertices[2][1], std::sqrt(3.0) / 6.0, 1e-15);
}

TEST(Koch, VariableAnglesLengthAndLens) {
  std::vector<double> th;
  for (int j = 1; j <= 6; ++j) th.push_back(1.0 / std::sqrt(double(j)));
  const Point a{0.1, 0.2, 0}, b{1.3, -0.4, 0};
  auto k = koch_curve({th, 6, a, b});
  double prod = 1.0, heights = 0.0, seg = distance(a, b);
  for (double t : th) {
    heights += seg * std::sin(t) / (2.0 * (1.0 + std::cos(t)));
    seg *= 1.0 / (2.0 * (1.0 + std::cos(t)));
    prod *= 2.0 / (1.0 + std::cos(t));
  }
  EXPECT_NEAR(k.length, prod * distance(a, b), 1e-9);
  double direct = 0.0;
  for (std::size_t i = 0; i + 1 < k.vertices.size(); ++i) {
    const double s = distance(k.vertices[i], k.vertices[i + 1]);
    EXPECT_NEAR(s, seg, 1e-12);
    direct += s;
  }
  EXPECT_NEAR(direct, prod * distance(a, b), 1e-9);
  const double ux = (b[0] - a[0]) / distance(a, b), uy = (b[1] - a[1]) / distance(a, b);
  for (const auto& v : k.vertices) {
    const double off = -(v[0] - a[0]) * uy + (v[1] - a[1]) * ux;
    EXPECT_LE(std::abs(off), heights + 1e-12);
  }
  EXPECT_NEAR(measure_stats(k.measure).mass, 1.0, 1e-12);
  EXPECT_EQ(k.measure.size(), std::size_t{1} << 12);
  EXPECT_NEAR(k.vertices.back()[0], b[0], 1e-12);
  EXPECT_NEAR(k.vertices.back()[1], b[1], 1e-12);
}

TEST(Koch, FinitenessFlag) {
  std::vector<double> slow, fast;
  for (int j = 1; j <= 40; ++j) {
    slow.push_back(1.0 / std::sqrt(double(j)));
    fast.push_back(1.0 / j);
  }
  auto ks = koch_curve({slow, 2, {0, 0, 0}, {1, 0, 0}});
  auto kf = koch_curve({fast, 2, {0, 0, 0}, {1, 0, 0}});
  EXPECT_FALSE(ks.finite_length);
  EXPECT_NEAR(ks.fitted_decay, 0.5, 1e-9);
  EXPECT_TRUE(kf.finite_length);
  EXPECT_NEAR(kf.fitted_decay, 1.0, 1e-9);
}

TEST(Koch, BadAngle) {
  EXPECT_EQ(code_of([] { koch_curve({{0.0}, 1, {0, 0, 0}, {1, 0, 0}}); }), ErrorCode::BadAngle);
  EXPECT_EQ(code_of([] { koch_curve({{1.6}, 1, {0, 0, 0}, {1, 0, 0}}); }), ErrorCode::BadAngle);
  EXPECT_EQ(code_of([] { koch_curve({{0.5}, 2, {0, 0, 0}, {1, 0, 0}}); }), ErrorCode::BadAngle);
}

TEST(WeightBy, Examples) {
  auto d = unit_square(10);
  AtomicMeasure mu(2, {{{0.3, 0.5, 0}, 1.0}, {{0.5, 0.5, 0}, 1.0}});
  auto zero = weight_by(mu, [](const Point&) { return 0.0; }, d, 1.0);
  EXPECT_TRUE(zero.measure.empty());
  EXPECT_TRUE(zero.within_bound);
  EXPECT_TRUE(zero.balanced);
  auto delta = [&](const Point& x) { return d.distance_to_complement(x); };
  auto w = weight_by(mu, delta, d, 1.0);
  EXPECT_TRUE(w.within_bound);
  EXPECT_NEAR(w.worst_ratio, 1.0, 1e-15);
  EXPECT_FALSE(w.balanced);
  EXPECT_NEAR(measure_stats(w.measure).mass, 0.8, 1e-15);
  EXPECT_FALSE(weight_by(mu, delta, d, 0.5).within_bound);
}

TEST(Rasterize, Examples) {
  auto d = rectangle_domain(4, 4, 0.25, Connectivity::Full);
  AtomicMeasure one(2, {{{0.375, 0.625, 0}, 3.0}});
  auto r = rasterize(one, d);
  const Cell target{1, 2, 0};
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_EQ(r[i], d.cell(i) == target ? 3.0 : 0.0);
  auto dens = rasterize(one, d, Mode::Mesh);
  EXPECT_DOUBLE_EQ(dens[d.require({1, 2, 0})], 48.0);
  AtomicMeasure cancel(2, {{{0.3, 0.3, 0}, 1.0}, {{0.4, 0.4, 0}, -1.0}});
  for (double x : rasterize(cancel, d)) EXPECT_EQ(x, 0.0);
  EXPECT_EQ(code_of([&] { rasterize(AtomicMeasure(2, {{{1.5, 0.2, 0}, 1.0}}), d); }), ErrorCode::AtomOutside);

  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<Atom> atoms;
  double total = 0.0;
  for (int k = 0; k < 100; ++k) {
    atoms.push_back({{u(rng) * 0.999, u(rng) * 0.999, 0}, u(rng) - 0.3});
    total += atoms.back().weight;
  }
  double sum = 0.0;
  for (double x : rasterize(AtomicMeasure(2, atoms), d)) sum += x;
  EXPECT_NEAR(sum, total, 1e-12);
}

TEST(UpperRegularity, SegmentIsFlatAndKochVanishes) {
  const std::vector<double> zeros{0.0, 0.0};
  EXPECT_EQ(upper_regularity_profile(AtomicMeasure(2), {0.1, 0.2}).ratios, zeros);
  std::vector<double> radii;
  for (int k = 12; k >= 4; --k) radii.push_back(std::pow(2.0, -k));

  auto seg = segment(100000, {0, 0, 0}, {1, 0, 0});
  auto p = upper_regularity_profile(seg, radii);
  for (double r : p.ratios) EXPECT_NEAR(r, 2.0, 0.05);
  EXPECT_FALSE(p.vanishing);

  auto koch = [&](double decay) {
    std::vector<double> th;
    for (int j = 1; j <= 8; ++j) th.push_back(std::pow(double(j), -decay));
    return koch_curve({th, 8, {0, 0, 0}, {1, 0, 0}});
  };
  auto slow = upper_regularity_profile(koch(0.5).measure, radii);
  EXPECT_TRUE(slow.vanishing);
  EXPECT_LT(slow.ratios.front(), slow.ratios.back());
  // two radius steps per level: compare like phases
  for (std::size_t i = 2; i < slow.ratios.size(); ++i) EXPECT_GT(slow.ratios[i], slow.ratios[i - 2]);
  auto fast = upper_regularity_profile(koch(1.0).measure, radii);
  EXPECT_FALSE(fast.vanishing);
  EXPECT_LT(fast.slope, slow.slope);
  EXPECT_EQ(code_of([] { upper_regularity_profile(AtomicMeasure(2), {0.2, 0.1}); }), ErrorCode::NonpositiveRadius);
}
