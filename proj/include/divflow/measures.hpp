#pragma once

// Finitely supported signed measures, Meyers-Ziemer ball ratios, the
// boundary-weighted eta functional and a Koch curve with per-level angles.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "divflow/core.hpp"

namespace divflow {

struct Atom {
  Point x{0.0, 0.0, 0.0};
  double weight = 0.0;
};

/// Signed measure with finitely many atoms. Atoms are kept sorted by
/// position; duplicates are merged and zero weights dropped.
class AtomicMeasure {
 public:
  explicit AtomicMeasure(int dimension = 2) : dim_(dimension) {
    if (dimension < 1 || dimension > 3) throw Error(ErrorCode::BadDimension, "measure dimension must be 1..3");
  }

  AtomicMeasure(int dimension, std::vector<Atom> atoms) : AtomicMeasure(dimension) {
    atoms_ = std::move(atoms);
    normalize();
  }

  int dimension() const noexcept { return dim_; }
  const std::vector<Atom>& atoms() const noexcept { return atoms_; }
  std::size_t size() const noexcept { return atoms_.size(); }
  bool empty() const noexcept { return atoms_.empty(); }

  AtomicMeasure& add(const Point& x, double w) {
    atoms_.push_back({x, w});
    normalize();
    return *this;
  }

  AtomicMeasure operator+(const AtomicMeasure& other) const {
    std::vector<Atom> all = atoms_;
    all.insert(all.end(), other.atoms_.begin(), other.atoms_.end());
    return AtomicMeasure(std::max(dim_, other.dim_), std::move(all));
  }

  AtomicMeasure scaled(double c) const {
    std::vector<Atom> out = atoms_;
    for (auto& a : out) a.weight *= c;
    return AtomicMeasure(dim_, std::move(out));
  }

  /// Pushforward under x -> lambda * x.
  AtomicMeasure dilated(double lambda) const {
    std::vector<Atom> out = atoms_;
    for (auto& a : out)
      for (auto& c : a.x) c *= lambda;
    return AtomicMeasure(dim_, std::move(out));
  }

  double total_variation() const {
    double s = 0.0;
    for (const auto& a : atoms_) s += std::abs(a.weight);
    return s;
  }

 private:
  void normalize() {
    for (auto& a : atoms_)
      for (int k = dim_; k < 3; ++k) a.x[k] = 0.0;
    std::sort(atoms_.begin(), atoms_.end(), [](const Atom& a, const Atom& b) { return a.x < b.x; });
    std::vector<Atom> merged;
    for (const auto& a : atoms_) {
      if (!merged.empty() && merged.back().x == a.x) {
        merged.back().weight += a.weight;
      } else {
        merged.push_back(a);
      }
    }
    std::erase_if(merged, [](const Atom& a) { return a.weight == 0.0; });
    atoms_ = std::move(merged);
  }

  int dim_;
  std::vector<Atom> atoms_;
};

struct MeasureStats {
  double mass = 0.0;
  double variation = 0.0;
  bool balanced = true;
  double first_moment = 0.0;  ///< integral of |x|_2 d|mu|
};

inline MeasureStats measure_stats(const AtomicMeasure& mu, double tol = 1e-12) {
  MeasureStats s;
  for (const auto& a : mu.atoms()) {
    s.mass += a.weight;
    s.variation += std::abs(a.weight);
    s.first_moment += std::abs(a.weight) * distance(a.x, Point{0.0, 0.0, 0.0});
  }
  s.balanced = std::abs(s.mass) <= tol * std::max(1.0, s.variation);
  return s;
}

enum class CenterStrategy {
  Atoms,              ///< balls centred at atoms
  AtomsAndMidpoints,  ///< plus midpoints of every atom pair (cubic cost)
  Exhaustive,         ///< plus circumcentres and r_min circle intersections (2D); exact sup
};

namespace detail {

/// Largest |mu|(B(x, r)) / r^(m-1) over r >= r_min for one centre, using
/// log-spaced distance bins so only bins that can beat `best` get sorted.
class RadialSweep {
 public:
  RadialSweep(const AtomicMeasure& mu, double r_min) : mu_(mu), r_min_(r_min), rmin2_(r_min * r_min) {
    power_ = mu.dimension() - 1;
    total_ = mu.total_variation();
  }

  double ratio(double mass, double r) const { return mass / std::pow(r, power_); }

  double sweep(const Point& c, double best) {
    const auto& atoms = mu_.atoms();
    bin_mass_.assign(kBins, 0.0);
    // Radii beyond (|mu| / best)^(1/(m-1)) cannot beat best.
    const double limit2 = power_ > 0 && best > 0.0 ? std::pow(total_ / best, 2.0 / power_) : kInfinity;
    const auto [lo, hi] = window(c, std::sqrt(limit2));
    double inner = 0.0;
    for (std::size_t j = lo; j < hi; ++j) {
      const double d2 = squared_distance(c, atoms[j].x);
      if (d2 > limit2) continue;
      if (d2 <= rmin2_) {
        inner += std::abs(atoms[j].weight);
      } else {
        bin_mass_[bin_index(d2 / rmin2_)] += std::abs(atoms[j].weight);
      }
    }
    best = std::max(best, ratio(inner, r_min_));

    // Bins whose optimistic ratio beats best are resolved exactly in a second,
    // narrower pass.
    double cum = inner;
    refine_.clear();
    for (int b = 0; b < kBins; ++b) {
      if (bin_mass_[b] == 0.0) continue;
      const double r_lo = r_min_ * std::sqrt(bin_lower(b));
      if (ratio(cum + bin_mass_[b], r_lo) > best) refine_.push_back({b, cum});
      cum += bin_mass_[b];
    }
    if (refine_.empty()) return best;
    const double reach2 = rmin2_ * bin_lower(refine_.back().bin + 1);
    const auto [rlo, rhi] = window(c, std::sqrt(reach2));
    scratch_.clear();
    for (std::size_t j = rlo; j < rhi; ++j) {
      const double d2 = squared_distance(c, atoms[j].x);
      if (d2 <= rmin2_ || d2 > limit2 || d2 >= reach2) continue;
      const int b = bin_index(d2 / rmin2_);
      if (std::binary_search(refine_.begin(), refine_.end(), Pending{b, 0.0},
                             [](const Pending& x, const Pending& y) { return x.bin < y.bin; }))
        scratch_.push_back({b, d2, std::abs(atoms[j].weight)});
    }
    std::sort(scratch_.begin(), scratch_.end(), [](const Hit& x, const Hit& y) {
      return x.bin != y.bin ? x.bin < y.bin : x.d2 < y.d2;
    });
    std::size_t k = 0;
    for (const auto& pend : refine_) {
      double run = pend.before;
      while (k < scratch_.size() && scratch_[k].bin == pend.bin) {
        run += scratch_[k].w;
        if (k + 1 >= scratch_.size() || scratch_[k + 1].d2 != scratch_[k].d2 || scratch_[k + 1].bin != pend.bin)
          best = std::max(best, ratio(run, std::max(r_min_, std::sqrt(scratch_[k].d2))));
        ++k;
      }
    }
    return best;
  }

 private:
  static constexpr int kSubBits = 7;
  static constexpr int kSub = 1 << kSubBits;
  static constexpr int kOctaves = 64;
  static constexpr int kBins = kSub * kOctaves;

  // x > 1; bins subdivide each octave of x linearly in the mantissa, read
  // straight from the IEEE-754 bits.
  static int bin_index(double x) {
    const auto bits = std::bit_cast<std::uint64_t>(x);
    const int e = static_cast<int>(bits >> 52) - 1023;  // x = 1.m * 2^e, e >= 0
    const int sub = static_cast<int>((bits >> (52 - kSubBits)) & (kSub - 1));
    return std::min(kBins - 1, e * kSub + sub);
  }
  static double bin_lower(int b) {
    return std::ldexp(1.0 + static_cast<double>(b % kSub) / kSub, b / kSub);
  }

  const AtomicMeasure& mu_;
  double r_min_, rmin2_;
  double total_ = 0.0;
  int power_ = 1;
  struct Pending {
    int bin;
    double before;  ///< mass strictly inside the bin
  };
  struct Hit {
    int bin;
    double d2, w;
  };

  /// Atom index range whose first coordinate lies within `reach` of c
  /// (atoms are sorted lexicographically).
  std::pair<std::size_t, std::size_t> window(const Point& c, double reach) const {
    const auto& atoms = mu_.atoms();
    if (!std::isfinite(reach)) return {0, atoms.size()};
    auto lo = std::lower_bound(atoms.begin(), atoms.end(), c[0] - reach,
                               [](const Atom& a, double x) { return a.x[0] < x; });
    auto hi = std::upper_bound(lo, atoms.end(), c[0] + reach, [](double x, const Atom& a) { return x < a.x[0]; });
    return {static_cast<std::size_t>(lo - atoms.begin()), static_cast<std::size_t>(hi - atoms.begin())};
  }

  std::vector<double> bin_mass_;
  std::vector<Pending> refine_;
  std::vector<Hit> scratch_;
};

inline std::vector<Point> circle_intersections(const Point& p, const Point& q, double r) {
  const double dx = q[0] - p[0], dy = q[1] - p[1];
  const double d2 = dx * dx + dy * dy;
  if (d2 == 0.0 || d2 > 4.0 * r * r) return {};
  const double d = std::sqrt(d2);
  const double h = std::sqrt(std::max(0.0, r * r - 0.25 * d2));
  const double mx = 0.5 * (p[0] + q[0]), my = 0.5 * (p[1] + q[1]);
  return {Point{mx - h * dy / d, my + h * dx / d, 0.0}, Point{mx + h * dy / d, my - h * dx / d, 0.0}};
}

inline bool circumcenter(const Point& a, const Point& b, const Point& c, Point& out) {
  const double bx = b[0] - a[0], by = b[1] - a[1], cx = c[0] - a[0], cy = c[1] - a[1];
  const double d = 2.0 * (bx * cy - by * cx);
  if (std::abs(d) < 1e-300) return false;
  const double b2 = bx * bx + by * by, c2 = cx * cx + cy * cy;
  out = {a[0] + (cy * b2 - by * c2) / d, a[1] + (bx * c2 - cx * b2) / d, 0.0};
  return std::isfinite(out[0]) && std::isfinite(out[1]);
}

}  // namespace detail

/// sup { |mu|(B(x, r)) / r^(m-1) : r >= r_min } over the candidate centres of
/// `strategy`. Balls are closed. Restricting r keeps the value finite for
/// atomic measures; r_min is the atomisation scale.
inline double mz_norm_above(const AtomicMeasure& mu, double r_min,
                            CenterStrategy strategy = CenterStrategy::Atoms) {
  if (!(r_min > 0.0)) throw Error(ErrorCode::NonpositiveRadius, "r_min must be positive");
  if (mu.empty()) return 0.0;
  detail::RadialSweep sweep(mu, r_min);
  const auto& atoms = mu.atoms();
  double best = 0.0;
  for (const auto& a : atoms) best = sweep.sweep(a.x, best);
  if (strategy == CenterStrategy::Atoms) return best;

  const std::size_t n = atoms.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      Point mid{};
      for (int k = 0; k < 3; ++k) mid[k] = 0.5 * (atoms[i].x[k] + atoms[j].x[k]);
      best = sweep.sweep(mid, best);
      if (strategy == CenterStrategy::Exhaustive && mu.dimension() == 2) {
        for (const auto& p : detail::circle_intersections(atoms[i].x, atoms[j].x, r_min))
          best = sweep.sweep(p, best);
      }
    }
  }
  if (strategy == CenterStrategy::Exhaustive && mu.dimension() == 2) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        for (std::size_t k = j + 1; k < n; ++k) {
          Point c{};
          if (detail::circumcenter(atoms[i].x, atoms[j].x, atoms[k].x, c)) best = sweep.sweep(c, best);
        }
  }
  return best;
}

/// Closed-ball mass queries in 2D backed by a bucket grid with row prefix
/// sums; buckets strictly inside the disc are summed wholesale and only
/// boundary buckets are inspected atom by atom. Other dimensions scan.
class BallMassIndex {
 public:
  BallMassIndex(const AtomicMeasure& mu, double bucket) : mu_(mu) {
    const auto& atoms = mu.atoms();
    if (mu.dimension() != 2 || atoms.empty()) return;
    double x0 = kInfinity, y0 = kInfinity, x1 = -kInfinity, y1 = -kInfinity;
    for (const auto& a : atoms) {
      x0 = std::min(x0, a.x[0]);
      y0 = std::min(y0, a.x[1]);
      x1 = std::max(x1, a.x[0]);
      y1 = std::max(y1, a.x[1]);
    }
    b_ = bucket;
    // Keep the bucket grid bounded.
    while (((x1 - x0) / b_ + 1.0) * ((y1 - y0) / b_ + 1.0) > 4e6) b_ *= 2.0;
    x0_ = x0;
    y0_ = y0;
    nx_ = static_cast<int>((x1 - x0) / b_) + 1;
    ny_ = static_cast<int>((y1 - y0) / b_) + 1;
    start_.assign(static_cast<std::size_t>(nx_) * ny_ + 1, 0);
    std::vector<std::size_t> key(atoms.size());
    for (std::size_t j = 0; j < atoms.size(); ++j) {
      key[j] = bucket_of(atoms[j].x);
      ++start_[key[j] + 1];
    }
    std::partial_sum(start_.begin(), start_.end(), start_.begin());
    order_.resize(atoms.size());
    auto fill = start_;
    for (std::size_t j = 0; j < atoms.size(); ++j) order_[fill[key[j]]++] = j;
    prefix_.assign(static_cast<std::size_t>(nx_ + 1) * ny_, 0.0);
    for (int iy = 0; iy < ny_; ++iy) {
      for (int ix = 0; ix < nx_; ++ix) {
        const std::size_t k = static_cast<std::size_t>(iy) * nx_ + ix;
        double m = 0.0;
        for (auto p = start_[k]; p < start_[k + 1]; ++p) m += std::abs(atoms[order_[p]].weight);
        prefix_[static_cast<std::size_t>(iy) * (nx_ + 1) + ix + 1] =
            prefix_[static_cast<std::size_t>(iy) * (nx_ + 1) + ix] + m;
      }
    }
  }

  /// |mu|(closed ball B(c, r)).
  double mass(const Point& c, double r) const {
    const auto& atoms = mu_.atoms();
    const double r2 = r * r;
    if (mu_.dimension() != 2 || atoms.empty()) {
      double m = 0.0;
      for (const auto& a : atoms)
        if (squared_distance(a.x, c) <= r2) m += std::abs(a.weight);
      return m;
    }
    double m = 0.0;
    const int iy0 = std::max(0, static_cast<int>(std::floor((c[1] - r - y0_) / b_)));
    const int iy1 = std::min(ny_ - 1, static_cast<int>(std::floor((c[1] + r - y0_) / b_)));
    for (int iy = iy0; iy <= iy1; ++iy) {
      const double ylo = y0_ + iy * b_, yhi = ylo + b_;
      const double dnear = c[1] < ylo ? ylo - c[1] : (c[1] > yhi ? c[1] - yhi : 0.0);
      const double dfar = std::max(std::abs(c[1] - ylo), std::abs(c[1] - yhi));
      if (dnear > r) continue;
      const double wout = std::sqrt(std::max(0.0, r2 - dnear * dnear));
      const double win = dfar < r ? std::sqrt(r2 - dfar * dfar) * (1.0 - 1e-12) : -1.0;
      const int ox0 = std::max(0, static_cast<int>(std::floor((c[0] - wout - x0_) / b_)));
      const int ox1 = std::min(nx_ - 1, static_cast<int>(std::floor((c[0] + wout - x0_) / b_)));
      if (ox0 > ox1) continue;
      // Buckets fully inside: [x_lo, x_hi] within [c - win, c + win].
      int ix0 = ox1 + 1, ix1 = ox1;
      if (win > 0.0) {
        ix0 = std::max(ox0, static_cast<int>(std::ceil((c[0] - win - x0_) / b_)));
        ix1 = std::min(ox1, static_cast<int>(std::floor((c[0] + win - x0_) / b_)) - 1);
      }
      const std::size_t row = static_cast<std::size_t>(iy) * (nx_ + 1);
      if (ix0 <= ix1) {
        m += prefix_[row + ix1 + 1] - prefix_[row + ix0];
      } else {
        ix0 = ox1 + 1;
        ix1 = ox1;
      }
      for (int ix = ox0; ix <= ox1; ++ix) {
        if (ix >= ix0 && ix <= ix1) continue;
        const std::size_t k = static_cast<std::size_t>(iy) * nx_ + ix;
        for (auto p = start_[k]; p < start_[k + 1]; ++p) {
          const auto& a = atoms[order_[p]];
          if (squared_distance(a.x, c) <= r2) m += std::abs(a.weight);
        }
      }
    }
    return m;
  }

 private:
  std::size_t bucket_of(const Point& x) const {
    const int ix = std::min(nx_ - 1, static_cast<int>((x[0] - x0_) / b_));
    const int iy = std::min(ny_ - 1, static_cast<int>((x[1] - y0_) / b_));
    return static_cast<std::size_t>(iy) * nx_ + ix;
  }

  const AtomicMeasure& mu_;
  double b_ = 1.0, x0_ = 0.0, y0_ = 0.0;
  int nx_ = 0, ny_ = 0;
  std::vector<std::size_t> start_;
  std::vector<std::size_t> order_;
  std::vector<double> prefix_;
};

inline void require_atoms_inside(const AtomicMeasure& mu, const GridDomain& domain) {
  if (mu.dimension() != domain.dimension())
    throw Error(ErrorCode::ShapeMismatch, "measure and domain dimensions differ");
  for (const auto& a : mu.atoms()) {
    if (!domain.contains(domain.locate(a.x)))
      throw Error(ErrorCode::AtomOutside, "atom lies outside the domain");
  }
}

/// sup over cell centres x of |mu|(B(x, tau*delta(x))) / (delta(x) (tau*delta(x))^(m-1)).
/// Cell centres stand in for all of the open set, so this is a lower bound
/// of the continuum supremum.
inline double eta(const AtomicMeasure& mu, const GridDomain& domain, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::BadTau, "tau must lie in (0, 1]");
  require_atoms_inside(mu, domain);
  if (mu.empty()) return 0.0;
  BallMassIndex index(mu, domain.cell_size());
  const int m = domain.dimension();
  double best = 0.0;
  for (std::size_t i = 0; i < domain.num_cells(); ++i) {
    const auto x = domain.center(i);
    const double delta = domain.distance_to_complement(x);
    const double rho = tau * delta;
    const double mass = index.mass(x, rho);
    if (mass == 0.0) continue;
    best = std::max(best, mass / (delta * std::pow(rho, m - 1)));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Koch curve with a sequence of angles

struct KochSpec {
  std::vector<double> angles;  ///< theta_j for level j = 1, 2, ...; needs at least `level` entries
  int level = 0;
  Point a{0.0, 0.0, 0.0};
  Point b{1.0, 0.0, 0.0};
};

struct KochCurve {
  std::vector<Point> vertices;
  AtomicMeasure measure{2};
  double length = 0.0;          ///< sum of polyline segment lengths
  double length_factor = 1.0;   ///< prod_j 2 / (1 + cos theta_j) over the built levels
  /// Power-law fit theta_j ~ C j^-p over the supplied angles: the length
  /// product stays bounded iff 2p > 1. Diagnostic only.
  double fitted_decay = 0.0;
  bool finite_length = false;
};

/// Replaces every segment [p, q] by four segments of length |q - p| / (2 (1 + cos theta)),
/// the middle two tilted by +-theta to the left of p -> q.
inline KochCurve koch_curve(const KochSpec& spec) {
  if (spec.level < 0) throw Error(ErrorCode::BadAngle, "level must be nonnegative");
  if (spec.angles.size() < static_cast<std::size_t>(spec.level))
    throw Error(ErrorCode::BadAngle, "fewer angles than levels");
  for (double t : spec.angles) {
    if (!(t > 0.0 && t < std::numbers::pi / 2)) throw Error(ErrorCode::BadAngle, "angles must lie in (0, pi/2)");
  }
  KochCurve out;
  std::vector<Point> poly{spec.a, spec.b};
  for (int j = 0; j < spec.level; ++j) {
    const double theta = spec.angles[j];
    const double c = std::cos(theta), s = std::sin(theta);
    out.length_factor *= 2.0 / (1.0 + c);
    std::vector<Point> next;
    next.reserve(4 * (poly.size() - 1) + 1);
    for (std::size_t k = 0; k + 1 < poly.size(); ++k) {
      const Point& p = poly[k];
      const Point& q = poly[k + 1];
      const double dx = q[0] - p[0], dy = q[1] - p[1];
      const double f = 1.0 / (2.0 * (1.0 + c));
      const double ux = dx * f, uy = dy * f;  // first sub-segment
      const Point p1{p[0] + ux, p[1] + uy, 0.0};
      const Point apex{p1[0] + c * ux - s * uy, p1[1] + s * ux + c * uy, 0.0};
      const Point p3{q[0] - ux, q[1] - uy, 0.0};
      next.push_back(p);
      next.push_back(p1);
      next.push_back(apex);
      next.push_back(p3);
    }
    next.push_back(poly.back());
    poly = std::move(next);
  }
  out.vertices = poly;
  const std::size_t segments = poly.size() - 1;
  const double w = 1.0 / static_cast<double>(segments);
  std::vector<Atom> atoms;
  atoms.reserve(segments);
  for (std::size_t k = 0; k < segments; ++k) {
    out.length += distance(poly[k], poly[k + 1]);
    atoms.push_back({Point{0.5 * (poly[k][0] + poly[k + 1][0]), 0.5 * (poly[k][1] + poly[k + 1][1]), 0.0}, w});
  }
  out.measure = AtomicMeasure(2, std::move(atoms));

  // Decay exponent from the second half of the supplied angles.
  const std::size_t n = spec.angles.size();
  if (n >= 4) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int cnt = 0;
    for (std::size_t j = n / 2; j < n; ++j) {
      const double x = std::log(static_cast<double>(j + 1)), y = std::log(spec.angles[j]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
      ++cnt;
    }
    const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
    out.fitted_decay = -slope;
    out.finite_length = 2.0 * out.fitted_decay > 1.0 + 1e-6;
  }
  return out;
}

struct WeightedMeasure {
  AtomicMeasure measure{2};
  bool within_bound = true;  ///< |h(x)| <= c * delta(x) at every atom
  bool balanced = true;      ///< integral of h d mu vanishes
  double worst_ratio = 0.0;  ///< max |h(x)| / delta(x)
};

/// mu restricted with density h; flags the boundary bound and the balance.
inline WeightedMeasure weight_by(const AtomicMeasure& mu, const std::function<double(const Point&)>& h,
                                 const GridDomain& domain, double c) {
  WeightedMeasure out;
  std::vector<Atom> atoms;
  double signed_sum = 0.0, abs_sum = 0.0;
  for (const auto& a : mu.atoms()) {
    const double hv = h(a.x);
    const double delta = domain.distance_to_complement(a.x);
    if (std::abs(hv) > c * delta * (1.0 + 1e-12)) out.within_bound = false;
    if (delta > 0.0) out.worst_ratio = std::max(out.worst_ratio, std::abs(hv) / delta);
    else if (hv != 0.0) out.worst_ratio = kInfinity;
    atoms.push_back({a.x, a.weight * hv});
    signed_sum += a.weight * hv;
    abs_sum += std::abs(a.weight * hv);
  }
  out.measure = AtomicMeasure(mu.dimension(), std::move(atoms));
  out.balanced = std::abs(signed_sum) <= 1e-12 * abs_sum;
  return out;
}

/// Adds each atom's weight to its containing cell. Mesh mode returns a
/// density (divided by h^m); graph mode returns cell masses.
inline NodeFunction rasterize(const AtomicMeasure& mu, const GridDomain& domain, Mode mode = Mode::Graph) {
  require_atoms_inside(mu, domain);
  NodeFunction out(domain.num_cells(), 0.0);
  for (const auto& a : mu.atoms()) out[*domain.index_of(domain.locate(a.x))] += a.weight;
  if (mode == Mode::Mesh) {
    const double vol = domain.cell_volume(Mode::Mesh);
    for (auto& x : out) x /= vol;
  }
  return out;
}

struct MZProfile {
  std::vector<double> radii;
  std::vector<double> ratios;  ///< sup over atoms x of |mu|(B(x, r)) / r^(m-1)
  double slope = 0.0;          ///< least-squares slope of log ratio against log r
  bool vanishing = false;      ///< slope above the threshold and smallest-radius ratio below largest
  std::vector<std::pair<double, double>> eta_table;  ///< optional (tau, eta) rows
};

/// Log-periodic structure (Koch curves) makes the raw profile oscillate, so
/// the vanishing verdict uses the fitted slope rather than monotonicity.
inline MZProfile upper_regularity_profile(const AtomicMeasure& mu, std::vector<double> radii,
                                          double slope_threshold = 0.02) {
  MZProfile out;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (!(radii[k] > 0.0)) throw Error(ErrorCode::NonpositiveRadius, "radii must be positive");
    if (k > 0 && !(radii[k] > radii[k - 1]))
      throw Error(ErrorCode::NonpositiveRadius, "radii must be strictly increasing");
  }
  out.radii = radii;
  const int m = mu.dimension();
  for (double r : radii) {
    double best = 0.0;
    if (!mu.empty()) {
      BallMassIndex index(mu, r / 8.0);
      for (const auto& a : mu.atoms()) best = std::max(best, index.mass(a.x, r));
    }
    out.ratios.push_back(best / std::pow(r, m - 1));
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  int cnt = 0;
  for (std::size_t k = 0; k < radii.size(); ++k) {
    if (out.ratios[k] <= 0.0) continue;
    const double x = std::log(radii[k]), y = std::log(out.ratios[k]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++cnt;
  }
  if (cnt >= 2) out.slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
  out.vanishing = cnt >= 2 && out.slope > slope_threshold && out.ratios.front() < out.ratios.back();
  return out;
}

}  // namespace divflow
