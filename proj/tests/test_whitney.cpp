#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace divflow;

namespace {

GridDomain l_shape(int n, double h) {
  std::vector<Cell> mask;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (i < n / 2 || j < n / 2) mask.push_back({i, j, 0});
  return GridDomain(2, mask, h, Connectivity::Full, {0, 0, 0});
}

std::vector<Point> cell_centers(const GridDomain& d) {
  std::vector<Point> out;
  for (std::size_t i = 0; i < d.num_cells(); ++i) out.push_back(d.center(i));
  return out;
}

// Candidates plus random points inside random B_a: every point lies on the
// plateau of at least one bump.
std::vector<Point> sample_points(const ScatteredSet& s, const std::vector<Point>& cand, std::mt19937_64& rng,
                                 int extra) {
  std::vector<Point> pts = cand;
  std::uniform_int_distribution<std::size_t> pick(0, s.centers.size() - 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k < extra; ++k) {
    const auto c = pick(rng);
    const double r = s.middle_radius(c);
    double x, y;
    do {
      x = u(rng);
      y = u(rng);
    } while (x * x + y * y >= 1.0);
    pts.push_back({s.centers[c][0] + r * x, s.centers[c][1] + r * y, 0.0});
  }
  return pts;
}

}  // namespace

TEST(Bump, PlateauAndSupport) {
  Bump phi;
  EXPECT_EQ(phi(0.0), 1.0);
  EXPECT_EQ(phi(0.5), 1.0);
  EXPECT_EQ(phi(-0.5), 1.0);
  EXPECT_EQ(phi(0.75), 0.0);
  EXPECT_EQ(phi(-0.75), 0.0);
  EXPECT_EQ(phi(2.0), 0.0);
  EXPECT_GE(phi.plateau(), 0.5);
  EXPECT_LT(phi.support(), 0.75);
}

TEST(Bump, EvenMonotoneAndBounded) {
  Bump phi;
  double prev = 1.0;
  for (int k = 0; k <= 1000; ++k) {
    const double t = 0.8 * k / 1000.0;
    const double v = phi(t);
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
    EXPECT_LE(v, prev + 1e-15);
    EXPECT_DOUBLE_EQ(v, phi(-t));
    prev = v;
  }
}

TEST(Bump, DerivativeBoundOnDenseSample) {
  Bump phi;
  double peak = 0.0;
  const int n = 100000;
  for (int k = 0; k <= n; ++k) {
    const double t = 0.5 + 0.25 * k / n;
    peak = std::max(peak, std::abs(phi.derivative(t)));
  }
  EXPECT_LE(peak, 5.0);
  EXPECT_GT(peak, 4.0);
}

TEST(Bump, DerivativeMatchesDifferenceQuotient) {
  Bump phi;
  const double step = 1e-6;
  for (int k = 0; k <= 400; ++k) {
    const double t = -0.8 + 1.6 * k / 400.0;
    const double fd = (phi(t + step) - phi(t - step)) / (2 * step);
    EXPECT_NEAR(phi.derivative(t), fd, 1e-4) << "t=" << t;
  }
}

TEST(Bump, InfeasibleSpecs) {
  auto code = [](BumpSpec s) -> std::optional<ErrorCode> {
    try {
      Bump b(s);
    } catch (const Error& e) {
      return e.code();
    }
    return std::nullopt;
  };
  EXPECT_EQ(code({5.5, 0.01}), ErrorCode::InfeasibleSpec);
  EXPECT_EQ(code({3.9, 0.0}), ErrorCode::InfeasibleSpec);  // ramp wider than the window
  EXPECT_EQ(code({4.5, 0.05}), ErrorCode::InfeasibleSpec);
  EXPECT_EQ(code({0.0, 0.01}), ErrorCode::InfeasibleSpec);
  EXPECT_NO_THROW(Bump(BumpSpec{5.0, 0.0}));
}

TEST(Scattered, SingleCell) {
  auto d = rectangle_domain(1, 1);
  auto s = greedy_scattered(d, 1.0);
  ASSERT_EQ(s.centers.size(), 1u);
  EXPECT_EQ(s.centers[0], (Point{0.5, 0.5, 0.0}));
  EXPECT_DOUBLE_EQ(s.delta[0], 0.5);
}

TEST(Scattered, OneDimensionalOutwardScan) {
  // Spacing 0.01 on (0,1), scanned from 0.5 outward, delta = min(x, 1-x).
  std::vector<Point> pts;
  std::vector<double> delta;
  auto push = [&](int k) {
    const double x = k / 100.0;
    pts.push_back({x, 0.0, 0.0});
    delta.push_back(std::min(x, 1.0 - x));
  };
  push(50);
  for (int k = 1; k <= 49; ++k) {
    push(50 - k);
    push(50 + k);
  }
  auto s = greedy_scattered(pts, delta, 1.0, 1);
  ASSERT_FALSE(s.centers.empty());
  EXPECT_DOUBLE_EQ(s.centers[0][0], 0.5);
  EXPECT_TRUE(scattered_pair({0.5, 0, 0}, 0.5, {0.01, 0, 0}, 0.01, 1.0));
  bool has001 = false;
  for (const auto& c : s.centers) has001 |= std::abs(c[0] - 0.01) < 1e-12;
  EXPECT_TRUE(has001);
}

TEST(Scattered, Errors) {
  try {
    greedy_scattered(rectangle_domain(2, 2), 1.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadTau);
  }
  try {
    greedy_scattered(std::span<const Point>{}, std::span<const double>{}, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyDomain);
  }
}

TEST(Scattered, PairwisePredicateAndMaximality) {
  for (double tau : {1.0, 0.5, 0.25}) {
    for (int seed = 0; seed < 3; ++seed) {
      auto d = l_shape(24, 1.0 / 24);
      auto s = greedy_scattered(d, tau, seed == 0 ? std::nullopt : std::optional<std::uint64_t>(seed));
      for (std::size_t i = 0; i < s.centers.size(); ++i)
        for (std::size_t j = i + 1; j < s.centers.size(); ++j)
          ASSERT_GE(distance(s.centers[i], s.centers[j]), 0.25 * tau * std::max(s.delta[i], s.delta[j]));
      // No candidate can be added.
      for (const auto& x : cell_centers(d)) {
        const double dx = d.distance_to_complement(x);
        bool addable = true;
        for (std::size_t k = 0; k < s.centers.size() && addable; ++k)
          addable = scattered_pair(x, dx, s.centers[k], s.delta[k], tau);
        EXPECT_FALSE(addable);
      }
    }
  }
}

TEST(Scattered, SeedChangesOrderDeterministically) {
  auto d = rectangle_domain(12, 12, 1.0 / 12);
  auto a = greedy_scattered(d, 0.5, 7);
  auto b = greedy_scattered(d, 0.5, 7);
  EXPECT_EQ(a.centers, b.centers);
}

TEST(Cover, Properties) {
  for (double tau : {1.0, 0.5}) {
    auto d = l_shape(32, 1.0 / 32);
    auto s = greedy_scattered(d, tau, 3);
    auto cand = cell_centers(d);
    auto rep = verify_cover(s, cand);
    EXPECT_TRUE(rep.inner_disjoint);
    EXPECT_EQ(rep.uncovered, 0u);
    EXPECT_TRUE(rep.comparable);
    EXPECT_LE(static_cast<double>(rep.max_overlap), whitney_constant(2));
    RecordProperty("max_overlap_tau_" + std::to_string(tau), static_cast<int>(rep.max_overlap));
  }
}

TEST(Partition, IsolatedCentre) {
  ScatteredSet s;
  s.tau = 1.0;
  s.centers = {{0.0, 0.0, 0.0}, {10.0, 0.0, 0.0}};
  s.delta = {1.0, 1.0};
  auto pu = partition_of_unity(s);
  EXPECT_DOUBLE_EQ(pu.chi(0, s.centers[0]), 1.0);
  EXPECT_DOUBLE_EQ(pu.chi(1, s.centers[1]), 1.0);
  EXPECT_EQ(pu.chi(1, s.centers[0]), 0.0);
  try {
    pu.evaluate({5.0, 0.0, 0.0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UncoveredPoint);
  }
}

TEST(Partition, SumsToOneWithBoundedGradients) {
  std::mt19937_64 rng(11);
  const double C = whitney_constant(2);
  for (double tau : {1.0, 0.5}) {
    auto d = l_shape(20, 1.0 / 20);
    auto s = greedy_scattered(d, tau, 5);
    auto pu = partition_of_unity(s);
    for (const auto& x : sample_points(s, cell_centers(d), rng, 2000)) {
      const auto terms = pu.evaluate(x);
      const double dx = d.distance_to_complement(x);
      ASSERT_GT(dx, 0.0);
      double sum = 0.0;
      for (const auto& t : terms) {
        sum += t.chi;
        EXPECT_GE(t.chi, 0.0);
        EXPECT_LE(t.chi, 1.0);
        EXPECT_LE(std::hypot(t.grad[0], t.grad[1]), C / (tau * dx));
      }
      EXPECT_NEAR(sum, 1.0, 1e-9);
    }
  }
}

TEST(Partition, GradientMatchesCentralDifferences) {
  std::mt19937_64 rng(12);
  auto d = l_shape(16, 1.0 / 16);
  auto s = greedy_scattered(d, 0.5, 2);
  auto pu = partition_of_unity(s);
  const double step = 1e-6;
  int checked = 0;
  for (const auto& x : sample_points(s, {}, rng, 300)) {
    for (const auto& t : pu.evaluate(x)) {
      double fd[2];
      for (int k = 0; k < 2; ++k) {
        Point p = x, q = x;
        p[k] += step;
        q[k] -= step;
        fd[k] = (pu.chi(t.center, p) - pu.chi(t.center, q)) / (2 * step);
      }
      const double g = std::hypot(t.grad[0], t.grad[1]);
      const double err = std::hypot(fd[0] - t.grad[0], fd[1] - t.grad[1]);
      // Relative to the natural gradient scale 1/(tau delta(x)) where the
      // gradient itself vanishes.
      const double scale = std::max(g, 1.0 / (s.tau * d.distance_to_complement(x)));
      EXPECT_LE(err, 1e-5 * scale);
      ++checked;
    }
  }
  EXPECT_GT(checked, 300);
}

TEST(Partition, VanishesOutsideHatBall) {
  std::mt19937_64 rng(13);
  auto d = rectangle_domain(16, 16, 1.0 / 16);
  auto s = greedy_scattered(d, 1.0);
  auto pu = partition_of_unity(s);
  std::uniform_real_distribution<double> ang(0.0, 2 * std::numbers::pi);
  for (std::size_t a = 0; a < s.centers.size(); ++a) {
    const double r = s.outer_radius(a) * (1.0 + 1e-9);
    const double t = ang(rng);
    const Point x{s.centers[a][0] + r * std::cos(t), s.centers[a][1] + r * std::sin(t), 0.0};
    EXPECT_EQ(pu.phi(a, x), 0.0);
    EXPECT_LE(pu.support_radius(a), s.outer_radius(a));
  }
}

TEST(Cover, TangentHatBallsDoNotMeet) {
  // delta(b) = 7 delta(a) with the hat balls touching: the sum of radii is
  // rounded, the pair must still count as disjoint.
  const double da = std::sqrt(2.0) / 128.0, db = 7.0 * da;
  EXPECT_FALSE(open_balls_meet(db - da, 0.75 * (da + db)));
  EXPECT_TRUE(open_balls_meet(0.5 * (da + db), 0.75 * (da + db)));
  EXPECT_FALSE(open_balls_meet(1.0, 1.0));
}
