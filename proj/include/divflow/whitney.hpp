#pragma once

// Whitney-type covering of a grid domain by balls whose radii are a fixed
// fraction tau of the distance to the boundary, and the subordinate
// partition of unity built from a radial bump.

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <vector>

#include "divflow/core.hpp"

namespace divflow {

/// Bump parameters: linear ramp of the given slope centred in [1/2, 3/4],
/// smoothed by a box mollifier of the given total width.
struct BumpSpec {
  double slope = 4.5;
  double mollifier_width = 0.01;
};

/// Even C^1 bump with phi = 1 on [-1/2, 1/2], support inside (-3/4, 3/4)
/// and |phi'| <= slope <= 5.
class Bump {
 public:
  explicit Bump(BumpSpec spec = {}) : spec_(spec) {
    const double s = spec.slope, w = spec.mollifier_width;
    if (!(s > 0.0) || s > 5.0) throw Error(ErrorCode::InfeasibleSpec, "ramp slope must lie in (0, 5]");
    if (!(w >= 0.0)) throw Error(ErrorCode::InfeasibleSpec, "mollifier width must be nonnegative");
    ramp_lo_ = 0.625 - 0.5 / s;
    ramp_hi_ = 0.625 + 0.5 / s;
    if (ramp_lo_ - 0.5 * w < 0.5 || ramp_hi_ + 0.5 * w >= 0.75) {
      throw Error(ErrorCode::InfeasibleSpec, "ramp plus mollifier does not fit inside (1/2, 3/4)");
    }
  }

  const BumpSpec& spec() const noexcept { return spec_; }
  double plateau() const noexcept { return ramp_lo_ - 0.5 * spec_.mollifier_width; }
  double support() const noexcept { return ramp_hi_ + 0.5 * spec_.mollifier_width; }

  double operator()(double t) const {
    t = std::abs(t);
    if (t <= plateau()) return 1.0;
    if (t >= support()) return 0.0;
    const double w = spec_.mollifier_width;
    if (w == 0.0) return ramp(t);
    return std::clamp((antiderivative(t + 0.5 * w) - antiderivative(t - 0.5 * w)) / w, 0.0, 1.0);
  }

  double derivative(double t) const {
    const double sign = t < 0.0 ? -1.0 : 1.0;
    t = std::abs(t);
    const double w = spec_.mollifier_width;
    double d = 0.0;
    if (w == 0.0) {
      d = (t > ramp_lo_ && t < ramp_hi_) ? -spec_.slope : 0.0;
    } else {
      d = (ramp(t + 0.5 * w) - ramp(t - 0.5 * w)) / w;
    }
    return sign * d;
  }

 private:
  double ramp(double t) const {
    if (t <= ramp_lo_) return 1.0;
    if (t >= ramp_hi_) return 0.0;
    return 1.0 - spec_.slope * (t - ramp_lo_);
  }
  // Integral of ramp(|s|) from 0 to t, extended oddly so differences work for t < 0.
  double antiderivative(double t) const {
    if (t < 0.0) return -antiderivative(-t);
    if (t <= ramp_lo_) return t;
    const double u = std::min(t, ramp_hi_) - ramp_lo_;
    return ramp_lo_ + u - 0.5 * spec_.slope * u * u;
  }

  BumpSpec spec_;
  double ramp_lo_ = 0.0, ramp_hi_ = 0.0;
};

inline double bump(const BumpSpec& spec, double t) { return Bump(spec)(t); }

/// Centres a with |a - b| >= (tau/4) * max(delta(a), delta(b)) for all pairs.
struct ScatteredSet {
  double tau = 1.0;
  int dimension = 2;
  std::vector<Point> centers;
  std::vector<double> delta;

  double inner_radius(std::size_t k) const { return tau / 8.0 * delta[k]; }   ///< check B_a
  double middle_radius(std::size_t k) const { return tau / 2.0 * delta[k]; }  ///< B_a
  double outer_radius(std::size_t k) const { return 0.75 * tau * delta[k]; }  ///< hat B_a
};

inline bool scattered_pair(const Point& a, double da, const Point& b, double db, double tau) {
  return distance(a, b) >= 0.25 * tau * std::max(da, db);
}

/// Greedy scan: a candidate is accepted iff it is scattered against every
/// centre accepted so far. The result is maximal among the candidates.
inline ScatteredSet greedy_scattered(std::span<const Point> candidates, std::span<const double> delta,
                                     double tau, int dimension = 2) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::BadTau, "tau must lie in (0, 1]");
  if (candidates.empty()) throw Error(ErrorCode::EmptyDomain, "no candidate points");
  if (delta.size() != candidates.size()) throw Error(ErrorCode::ShapeMismatch, "one delta per candidate");
  ScatteredSet out;
  out.tau = tau;
  out.dimension = dimension;

  // Bucket grid on accepted centres; a conflicting centre b satisfies
  // |x - b| < (tau/4) max(delta) <= (tau/4) * max delta overall.
  const double reach = 0.25 * tau * *std::max_element(delta.begin(), delta.end());
  const double cell = reach > 0.0 ? reach : 1.0;
  auto key = [&](const Point& p) {
    return std::array<long long, 3>{static_cast<long long>(std::floor(p[0] / cell)),
                                    static_cast<long long>(std::floor(p[1] / cell)),
                                    static_cast<long long>(std::floor(p[2] / cell))};
  };
  std::map<std::array<long long, 3>, std::vector<std::size_t>> grid;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& x = candidates[i];
    const auto k = key(x);
    bool ok = true;
    for (long long dx = -1; dx <= 1 && ok; ++dx)
      for (long long dy = -1; dy <= 1 && ok; ++dy)
        for (long long dz = -1; dz <= 1 && ok; ++dz) {
          auto it = grid.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == grid.end()) continue;
          for (auto j : it->second) {
            if (!scattered_pair(x, delta[i], out.centers[j], out.delta[j], tau)) {
              ok = false;
              break;
            }
          }
        }
    if (!ok) continue;
    grid[k].push_back(out.centers.size());
    out.centers.push_back(x);
    out.delta.push_back(delta[i]);
  }
  return out;
}

/// Candidates are the cell centres (mesh units) in cell order, or shuffled
/// by `seed` when given.
inline ScatteredSet greedy_scattered(const GridDomain& domain, double tau,
                                     std::optional<std::uint64_t> seed = std::nullopt) {
  std::vector<std::size_t> order(domain.num_cells());
  std::iota(order.begin(), order.end(), 0);
  if (seed) {
    std::mt19937_64 rng(*seed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<Point> pts;
  std::vector<double> delta;
  for (auto i : order) {
    pts.push_back(domain.center(i));
    delta.push_back(domain.distance_to_complement(pts.back()));
  }
  return greedy_scattered(pts, delta, tau, domain.dimension());
}

/// chi_a = phi_a / sum_b phi_b with phi_a(x) = phi(|x - a| / (tau delta(a))).
class PartitionOfUnity {
 public:
  struct Term {
    std::size_t center = 0;
    double chi = 0.0;
    Point grad{0.0, 0.0, 0.0};
  };

  PartitionOfUnity(ScatteredSet set, BumpSpec spec = {}) : set_(std::move(set)), bump_(spec) {
    if (set_.centers.empty()) throw Error(ErrorCode::EmptyDomain, "scattered set is empty");
    double reach = 0.0;
    for (std::size_t k = 0; k < set_.centers.size(); ++k) reach = std::max(reach, support_radius(k));
    cell_ = reach > 0.0 ? reach : 1.0;
    for (std::size_t k = 0; k < set_.centers.size(); ++k) grid_[key(set_.centers[k])].push_back(k);
  }

  const ScatteredSet& scattered() const noexcept { return set_; }
  const Bump& bump() const noexcept { return bump_; }

  double support_radius(std::size_t k) const { return bump_.support() * set_.tau * set_.delta[k]; }

  /// Centres whose bump does not vanish at x.
  std::vector<std::size_t> active(const Point& x) const {
    std::vector<std::size_t> out;
    const auto k = key(x);
    for (long long dx = -1; dx <= 1; ++dx)
      for (long long dy = -1; dy <= 1; ++dy)
        for (long long dz = -1; dz <= 1; ++dz) {
          auto it = grid_.find({k[0] + dx, k[1] + dy, k[2] + dz});
          if (it == grid_.end()) continue;
          for (auto c : it->second)
            if (distance(x, set_.centers[c]) < support_radius(c)) out.push_back(c);
        }
    std::sort(out.begin(), out.end());
    return out;
  }

  double phi(std::size_t c, const Point& x) const {
    return bump_(distance(x, set_.centers[c]) / (set_.tau * set_.delta[c]));
  }

  Point grad_phi(std::size_t c, const Point& x) const {
    const auto& a = set_.centers[c];
    const double r = distance(x, a);
    Point g{0.0, 0.0, 0.0};
    if (r == 0.0) return g;
    const double scale = set_.tau * set_.delta[c];
    const double d = bump_.derivative(r / scale) / (scale * r);
    for (int k = 0; k < 3; ++k) g[k] = d * (x[k] - a[k]);
    return g;
  }

  double phi_sum(const Point& x) const {
    double s = 0.0;
    for (auto c : active(x)) s += phi(c, x);
    return s;
  }

  /// All nonzero chi_a(x) with gradients (quotient rule).
  std::vector<Term> evaluate(const Point& x) const {
    const auto act = active(x);
    double sum = 0.0;
    Point gsum{0.0, 0.0, 0.0};
    std::vector<double> ph(act.size());
    std::vector<Point> gp(act.size());
    for (std::size_t i = 0; i < act.size(); ++i) {
      ph[i] = phi(act[i], x);
      gp[i] = grad_phi(act[i], x);
      sum += ph[i];
      for (int k = 0; k < 3; ++k) gsum[k] += gp[i][k];
    }
    if (!(sum > 0.0)) throw Error(ErrorCode::UncoveredPoint, "no bump covers the query point");
    std::vector<Term> out;
    for (std::size_t i = 0; i < act.size(); ++i) {
      Term t;
      t.center = act[i];
      t.chi = ph[i] / sum;
      for (int k = 0; k < 3; ++k) t.grad[k] = (gp[i][k] * sum - ph[i] * gsum[k]) / (sum * sum);
      out.push_back(t);
    }
    return out;
  }

  double chi(std::size_t c, const Point& x) const {
    for (const auto& t : evaluate(x))
      if (t.center == c) return t.chi;
    return 0.0;
  }

  Point grad_chi(std::size_t c, const Point& x) const {
    for (const auto& t : evaluate(x))
      if (t.center == c) return t.grad;
    return {0.0, 0.0, 0.0};
  }

 private:
  std::array<long long, 3> key(const Point& p) const {
    return {static_cast<long long>(std::floor(p[0] / cell_)), static_cast<long long>(std::floor(p[1] / cell_)),
            static_cast<long long>(std::floor(p[2] / cell_))};
  }

  ScatteredSet set_;
  Bump bump_;
  double cell_ = 1.0;
  std::map<std::array<long long, 3>, std::vector<std::size_t>> grid_;
};

inline PartitionOfUnity partition_of_unity(ScatteredSet set, BumpSpec spec = {}) {
  return PartitionOfUnity(std::move(set), spec);
}

/// The dimensional constant bounding overlap counts and chi gradients.
inline double whitney_constant(int m) { return 18.0 * std::pow(392.0, m); }

struct WhitneyReport {
  bool inner_disjoint = true;         ///< check B_a pairwise disjoint
  std::size_t uncovered = 0;          ///< candidates outside every B_a
  bool comparable = true;             ///< delta(a) > delta(b)/7 on intersecting hat balls
  std::size_t max_overlap = 0;        ///< max_a card{b : hat B_a meets hat B_b}
  std::size_t intersecting_pairs = 0;
};

/// Open balls at centre distance d with radii summing to r meet. Pairs tangent
/// up to rounding count as disjoint.
inline bool open_balls_meet(double d, double r) { return d < r * (1.0 - 1e-12); }

/// Pairwise verification of the covering properties against the candidates.
inline WhitneyReport verify_cover(const ScatteredSet& set, std::span<const Point> candidates) {
  WhitneyReport rep;
  const std::size_t n = set.centers.size();
  std::vector<std::size_t> overlap(n, 1);  // each hat ball meets itself
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double d = distance(set.centers[i], set.centers[j]);
      if (d < set.inner_radius(i) + set.inner_radius(j)) rep.inner_disjoint = false;
      if (open_balls_meet(d, set.outer_radius(i) + set.outer_radius(j))) {
        ++overlap[i];
        ++overlap[j];
        ++rep.intersecting_pairs;
        if (!(set.delta[i] > set.delta[j] / 7.0) || !(set.delta[j] > set.delta[i] / 7.0)) rep.comparable = false;
      }
    }
  }
  for (auto c : overlap) rep.max_overlap = std::max(rep.max_overlap, c);
  for (const auto& x : candidates) {
    bool covered = false;
    for (std::size_t k = 0; k < n && !covered; ++k)
      covered = distance(x, set.centers[k]) < set.middle_radius(k);
    if (!covered) ++rep.uncovered;
  }
  return rep;
}

}  // namespace divflow
