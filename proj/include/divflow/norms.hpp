#pragma once

// Dual norms of the two divergence problems, isoperimetric (Cheeger-type)
// constants with Poincare brackets, and weak-Lebesgue distribution
// functionals.

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "divflow/core.hpp"
#include "divflow/flows.hpp"

namespace divflow {

struct FreeNormResult {
  double value = 0.0;
  NodeFunction potential;  ///< maximiser of <u, F> with u(basepoint) = 0, 1-Lipschitz
  FlowSolution flow;
};

/// Transport norm with the basepoint absorbing any net mass.
inline FreeNormResult free_norm(const GridDomain& domain, std::span<const double> F, Mode mode = Mode::Graph) {
  check_node_shape(domain, F);
  NodeFunction G(F.begin(), F.end());
  double net = 0.0;
  for (double x : F) net += x;
  G[domain.basepoint()] -= net;
  FreeNormResult out;
  out.flow = min_cost_flow(domain, G, mode);
  out.value = out.flow.cost;
  out.potential = out.flow.potential;
  return out;
}

struct SchNormResult {
  double value = 0.0;
  std::vector<char> witness;  ///< S with |<1_S, f>| / TV(1_S) = value
  ChebyshevSolution solution;
};

/// sup |<u, f>| over TV(u) <= 1, evaluated as the Chebyshev optimum.
inline SchNormResult sch_norm(const GridDomain& domain, std::span<const double> f, Mode mode = Mode::Graph) {
  SchNormResult out;
  out.solution = chebyshev_solve(domain, f, mode);
  out.value = out.solution.value;
  out.witness = out.solution.cut;
  return out;
}

// ---------------------------------------------------------------------------
// Cheeger constant and Poincare brackets

enum class CheegerMode { Exact, Heuristic };

struct CheegerResult {
  double value = 0.0;  ///< max over proper S of min(|S|, |S^c|) / Per(S)
  std::vector<char> witness;
  double indicator_ratio = 0.0;  ///< max over the same sets of ||1_S - mean||_1 / Per(S)
  bool exact = false;
  std::size_t sets_examined = 0;
};

namespace detail {

struct SetScorer {
  const GridDomain& domain;
  Mode mode;
  double vol;
  double total;

  double ratio(double count, double per) const {
    const double a = std::min(count, static_cast<double>(domain.num_cells()) - count) * vol;
    if (a <= 0.0) return 0.0;
    if (per <= 0.0) return kInfinity;
    return a / per;
  }

  /// 2 |S| |S^c| / (|Omega| Per(S)), never below ratio().
  double mean_ratio(double count, double per) const {
    const double n = static_cast<double>(domain.num_cells());
    const double a = 2.0 * count * (n - count) / n * vol;
    if (a <= 0.0) return 0.0;
    if (per <= 0.0) return kInfinity;
    return a / per;
  }
};

/// Sweeps prefixes of `order` (cells sorted by a potential, ties grouped by
/// equal keys) and keeps the best isoperimetric ratio.
inline void sweep_level_sets(const GridDomain& domain, Mode mode, const std::vector<double>& key,
                             CheegerResult& best) {
  const std::size_t n = domain.num_cells();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) { return key[x] < key[y]; });
  SetScorer scorer{domain, mode, domain.cell_volume(mode), 0.0};
  std::vector<char> in(n, 0);
  double per = 0.0;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const auto c = order[k];
    in[c] = 1;
    for (auto [j, e] : domain.neighbors(c)) per += (in[j] ? -1.0 : 1.0) * domain.edge_weight(e, mode);
    if (key[order[k + 1]] == key[c]) continue;
    ++best.sets_examined;
    const double r = scorer.ratio(static_cast<double>(k + 1), per);
    best.indicator_ratio = std::max(best.indicator_ratio, scorer.mean_ratio(static_cast<double>(k + 1), per));
    if (r > best.value) {
      best.value = r;
      best.witness = in;
    }
  }
}

}  // namespace detail

/// Exact mode enumerates all subsets (<= 20 cells). Heuristic mode sweeps
/// level sets of graph-distance fields and Chebyshev potentials and returns
/// a lower bound.
inline CheegerResult cheeger_constant(const GridDomain& domain, CheegerMode cmode = CheegerMode::Exact,
                                      Mode mode = Mode::Graph, std::uint64_t seed = 1) {
  const std::size_t n = domain.num_cells();
  CheegerResult best;
  best.witness.assign(n, 0);
  if (n <= 1) {
    best.exact = true;
    return best;
  }
  const double vol = domain.cell_volume(mode);
  if (cmode == CheegerMode::Exact) {
    if (n > 20) throw Error(ErrorCode::TooLarge, "exact Cheeger enumeration is limited to 20 cells");
    best.exact = true;
    detail::SetScorer scorer{domain, mode, vol, 0.0};
    std::vector<char> in(n, 0);
    double per = 0.0;
    int count = 0;
    const std::uint64_t total = std::uint64_t{1} << n;
    for (std::uint64_t k = 1; k < total; ++k) {
      const int flip = std::countr_zero(k);
      in[flip] ^= 1;
      count += in[flip] ? 1 : -1;
      for (auto [j, e] : domain.neighbors(flip))
        per += (in[j] != in[flip] ? 1.0 : -1.0) * domain.edge_weight(e, mode);
      if (count == 0 || count == static_cast<int>(n)) continue;
      ++best.sets_examined;
      const double r = scorer.ratio(count, per > 1e-12 ? per : 0.0);
      best.indicator_ratio = std::max(best.indicator_ratio, scorer.mean_ratio(count, per > 1e-12 ? per : 0.0));
      if (r > best.value) {
        best.value = r;
        best.witness = in;
      }
    }
    return best;
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> seeds;
  if (n <= 400) {
    for (std::size_t i = 0; i < n; ++i) seeds.push_back(i);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (int k = 0; k < 48; ++k) seeds.push_back(pick(rng));
  }
  for (auto s : seeds) detail::sweep_level_sets(domain, mode, distances_from(domain, s, mode), best);

  // Cut witnesses of random dipole Chebyshev problems; their indicators are
  // already level sets, so scoring them directly suffices.
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int k = 0; k < 16 && domain.connected(); ++k) {
    NodeFunction f(n, 0.0);
    const auto a = pick(rng), b = pick(rng);
    if (a == b) continue;
    f[a] = 1.0;
    f[b] = -1.0;
    auto sol = chebyshev_solve(domain, f, mode);
    NodeFunction key(n);
    for (std::size_t i = 0; i < n; ++i) key[i] = sol.cut[i] ? 0.0 : 1.0;
    detail::sweep_level_sets(domain, mode, key, best);
  }
  return best;
}

struct PoincareBracket {
  double p = 1.0;
  double lower = 0.0;
  double upper = 0.0;
  bool upper_known = false;
  CheegerResult cheeger;
};

/// p = 1: indicators give the lower bound (at least h*), the median/coarea
/// argument gives 2 h* above.
/// 1 < p <= m/(m-1): indicator lower bound only.
inline PoincareBracket poincare_bracket(const GridDomain& domain, double p, Mode mode = Mode::Graph,
                                        CheegerMode cmode = CheegerMode::Exact) {
  const int m = domain.dimension();
  const double p_max = m >= 2 ? static_cast<double>(m) / (m - 1) : kInfinity;
  if (!(p >= 1.0) || p > p_max + 1e-12) throw Error(ErrorCode::BadExponent, "p must lie in [1, m/(m-1)]");
  PoincareBracket out;
  out.p = p;
  out.cheeger = cheeger_constant(domain, cmode, mode);
  if (p == 1.0) {
    out.lower = out.cheeger.indicator_ratio;
    out.upper = 2.0 * out.cheeger.value;
    out.upper_known = out.cheeger.exact;
    return out;
  }
  // ||1_S - mean||_p / Per(S) over the candidate sets.
  const std::size_t n = domain.num_cells();
  const double vol = domain.cell_volume(mode);
  auto score = [&](const std::vector<char>& in) {
    double count = 0.0;
    for (char c : in) count += c;
    if (count == 0.0 || count == static_cast<double>(n)) return 0.0;
    const double per = cut_weight(domain, in, mode);
    const double s = count / n;
    const double norm = std::pow((count * std::pow(1.0 - s, p) + (n - count) * std::pow(s, p)) * vol, 1.0 / p);
    return per > 0.0 ? norm / per : kInfinity;
  };
  if (cmode == CheegerMode::Exact && n <= 20) {
    std::vector<char> in(n, 0);
    for (std::uint64_t k = 1; k + 1 < (std::uint64_t{1} << n); ++k) {
      for (std::size_t i = 0; i < n; ++i) in[i] = (k >> i) & 1;
      out.lower = std::max(out.lower, score(in));
    }
  } else {
    out.lower = score(out.cheeger.witness);
  }
  return out;
}

/// Independent check of the coarea argument: sup over u with values in
/// {0, 1/4, 1/2, 3/4, 1} of min_c ||u - c||_1 / TV(u). Limited to 8 cells.
inline double poincare_median_quantized_brute(const GridDomain& domain, Mode mode = Mode::Graph) {
  const std::size_t n = domain.num_cells();
  if (n > 8) throw Error(ErrorCode::TooLarge, "quantised enumeration is limited to 8 cells");
  const double vol = domain.cell_volume(mode);
  std::vector<double> weight(domain.num_edges());
  for (std::size_t e = 0; e < domain.num_edges(); ++e) weight[e] = domain.edge_weight(e, mode);
  std::vector<int> digits(n, 0);
  std::vector<int> sorted(n);
  double best = 0.0;
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= 5;
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    for (std::size_t i = 0; i < n; ++i) {
      digits[i] = static_cast<int>(c % 5);
      c /= 5;
    }
    double tv = 0.0;
    for (std::size_t e = 0; e < domain.num_edges(); ++e) {
      const auto& ed = domain.edges()[e];
      tv += std::abs(digits[ed.head] - digits[ed.tail]) * weight[e];
    }
    if (tv == 0.0) continue;
    std::copy(digits.begin(), digits.end(), sorted.begin());
    std::nth_element(sorted.begin(), sorted.begin() + n / 2, sorted.end());
    const int med = sorted[n / 2];
    double dev = 0.0;
    for (int d : digits) dev += std::abs(d - med);
    best = std::max(best, dev * vol / tv);
  }
  return best;
}

// ---------------------------------------------------------------------------
// Weak Lebesgue functionals

/// Radial function on R^m with |f| nonincreasing in |x|; the distribution
/// function d(f, y) = L^m({|f| > y}) is supplied exactly.
struct RadialProfile {
  int dimension = 2;
  std::string name;
  std::function<double(double)> value;         ///< f as a function of r = |x|
  std::function<double(double)> distribution;  ///< y -> L^m({|f| > y})
};

/// Function sampled on grid cells, each of measure `cell_measure`.
struct GridFunction {
  std::vector<double> values;
  double cell_measure = 1.0;
  std::vector<Point> positions;  ///< optional cell centres (needed for truncation)
};

using FunctionSpec = std::variant<RadialProfile, GridFunction>;

/// Radius r(y) = sup{ r : f(r) > y } of a nonincreasing profile, by bisection
/// in log r to full double precision.
inline double level_radius(const std::function<double(double)>& f, double y) {
  double lo = 1e-300, hi = 1e300;
  if (!(f(lo) > y)) return 0.0;
  if (f(hi) > y) return kInfinity;
  for (int it = 0; it < 2200; ++it) {
    const double mid = std::sqrt(lo) * std::sqrt(hi);
    if (mid <= lo || mid >= hi) break;
    (f(mid) > y ? lo : hi) = mid;
  }
  return lo;
}

inline RadialProfile radial_indicator(int m, double radius = 1.0, double height = 1.0) {
  const double alpha = unit_ball_volume(m);
  return {m, "indicator",
          [=](double r) { return r < radius ? height : 0.0; },
          [=](double y) { return y < height ? alpha * std::pow(radius, m) : 0.0; }};
}

/// c * |x|^(-beta).
inline RadialProfile radial_power(int m, double beta, double c = 1.0) {
  const double alpha = unit_ball_volume(m);
  return {m, "power",
          [=](double r) { return c * std::pow(r, -beta); },
          [=](double y) { return alpha * std::pow(std::abs(c) / y, m / beta); }};
}

/// |x|^(-m/q) (1 + |log |x||)^(-1/q): weakly L^q with vanishing tails, not L^q.
inline RadialProfile radial_log_example(int m, double q) {
  const double alpha = unit_ball_volume(m);
  auto f = [=](double r) { return std::pow(r, -m / q) * std::pow(1.0 + std::abs(std::log(r)), -1.0 / q); };
  return {m, "log-example", f, [=](double y) { return alpha * std::pow(level_radius(f, y), m); }};
}

inline RadialProfile scaled(const RadialProfile& f, double c) {
  RadialProfile g = f;
  g.name = f.name + "*c";
  g.value = [v = f.value, c](double r) { return c * v(r); };
  g.distribution = [d = f.distribution, c](double y) { return c == 0.0 ? 0.0 : d(y / std::abs(c)); };
  return g;
}

/// x -> f(x / lambda).
inline RadialProfile dilated(const RadialProfile& f, double lambda) {
  RadialProfile g = f;
  g.name = f.name + "(x/l)";
  g.value = [v = f.value, lambda](double r) { return v(r / lambda); };
  g.distribution = [d = f.distribution, lambda, m = f.dimension](double y) { return std::pow(lambda, m) * d(y); };
  return g;
}

inline double distribution(const FunctionSpec& f, double y) {
  if (const auto* r = std::get_if<RadialProfile>(&f)) return r->distribution(y);
  const auto& g = std::get<GridFunction>(f);
  std::size_t count = 0;
  for (double v : g.values)
    if (std::abs(v) > y) ++count;
  return static_cast<double>(count) * g.cell_measure;
}

/// d(f, y) * y^q.
inline double epsilon_q(const FunctionSpec& f, double q, double y) {
  if (!(q > 1.0)) throw Error(ErrorCode::BadExponent, "q must exceed 1");
  if (!(y > 0.0)) throw Error(ErrorCode::BadExponent, "level y must be positive");
  const double d = distribution(f, y);
  return d == 0.0 ? 0.0 : d * std::pow(y, q);
}

enum class WeakVerdict { Lq, Lq0, LqInf, None };

inline std::string_view to_string(WeakVerdict v) {
  switch (v) {
    case WeakVerdict::Lq: return "Lq";
    case WeakVerdict::Lq0: return "Lq0";
    case WeakVerdict::LqInf: return "Lq_inf";
    case WeakVerdict::None: return "none";
  }
  return "none";
}

struct WeakThresholds {
  double lq_slope_margin = 0.25;   ///< outward log-log slope must be below -margin for L^q
  double flat_slope = 1e-3;        ///< |slope| below this counts as flat
  double vanish_fraction = 1e-3;   ///< flat tails must sit below this fraction of sup
  double min_decades = 6.0;
};

struct WeakLqProfile {
  double q = 2.0;
  std::vector<double> levels;
  std::vector<double> eps;
  double sup_eps = 0.0;
  double quasi_norm = 0.0;  ///< sup eps^(1/q)
  double low_slope = 0.0;   ///< d log eps / d log(1/y) over the lowest decade
  double high_slope = 0.0;  ///< d log eps / d log y over the highest decade
  double low_limit = 0.0;   ///< extrapolated limit of eps as y -> 0
  double high_limit = 0.0;  ///< extrapolated limit as y -> infinity
  double integral = 0.0;    ///< trapezoidal q * int eps / y dy over the grid
  WeakVerdict verdict = WeakVerdict::None;
  WeakThresholds thresholds;
  bool diagnostic = true;   ///< finite-data verdict, not a proof
};

/// Log-spaced levels from 10^lo to 10^hi.
inline std::vector<double> log_grid(double lo_exp, double hi_exp, int per_decade = 20) {
  std::vector<double> out;
  const int n = static_cast<int>(std::lround((hi_exp - lo_exp) * per_decade));
  for (int k = 0; k <= n; ++k) out.push_back(std::pow(10.0, lo_exp + (hi_exp - lo_exp) * k / n));
  return out;
}

namespace detail {

struct TailFit {
  double slope = 0.0;
  double limit = 0.0;
};

/// Least squares of log eps against outward log-distance over one decade.
inline TailFit fit_tail(const std::vector<double>& y, const std::vector<double>& eps, bool high_end) {
  const double edge = high_end ? y.back() : y.front();
  std::vector<std::pair<double, double>> pts;
  bool hit_zero = false;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double out = high_end ? std::log10(y[k] / edge) : std::log10(edge / y[k]);
    if (out < -1.0) continue;
    if (eps[k] <= 0.0) {
      hit_zero = true;
      continue;
    }
    pts.emplace_back(std::log(y[k] / edge) * (high_end ? 1.0 : -1.0), std::log(eps[k]));
  }
  TailFit fit;
  if (hit_zero || pts.size() < 2) {
    fit.slope = -kInfinity;
    fit.limit = 0.0;
    return fit;
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (auto [x, v] : pts) {
    sx += x;
    sy += v;
    sxx += x * x;
    sxy += x * v;
  }
  const double n = static_cast<double>(pts.size());
  fit.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  const double intercept = (sy - fit.slope * sx) / n;  // value at the grid edge (x = 0)
  fit.limit = std::exp(intercept);
  return fit;
}

}  // namespace detail

inline WeakLqProfile classify_weak(const FunctionSpec& f, double q, std::vector<double> levels,
                                   WeakThresholds thr = {}) {
  if (!(q > 1.0)) throw Error(ErrorCode::BadExponent, "q must exceed 1");
  std::sort(levels.begin(), levels.end());
  if (levels.size() < 4 || !(levels.front() > 0.0) ||
      std::log10(levels.back() / levels.front()) < thr.min_decades - 1e-9) {
    throw Error(ErrorCode::GridTooNarrow, "level grid must span at least six decades");
  }
  WeakLqProfile p;
  p.q = q;
  p.thresholds = thr;
  p.levels = levels;
  for (double y : levels) {
    p.eps.push_back(epsilon_q(f, q, y));
    p.sup_eps = std::max(p.sup_eps, p.eps.back());
  }
  p.quasi_norm = std::pow(p.sup_eps, 1.0 / q);
  for (std::size_t k = 0; k + 1 < levels.size(); ++k) {
    const double a = p.eps[k] / levels[k], b = p.eps[k + 1] / levels[k + 1];
    p.integral += q * 0.5 * (a + b) * (levels[k + 1] - levels[k]);
  }
  const auto lo = detail::fit_tail(levels, p.eps, false);
  const auto hi = detail::fit_tail(levels, p.eps, true);
  p.low_slope = lo.slope;
  p.high_slope = hi.slope;
  // A decaying power-law tail extrapolates to zero; a flat one to its level.
  p.low_limit = lo.slope < -thr.flat_slope ? 0.0 : lo.limit;
  p.high_limit = hi.slope < -thr.flat_slope ? 0.0 : hi.limit;

  const bool grows = lo.slope > thr.flat_slope || hi.slope > thr.flat_slope;
  if (p.sup_eps == 0.0 || (lo.slope < -thr.lq_slope_margin && hi.slope < -thr.lq_slope_margin)) {
    p.verdict = WeakVerdict::Lq;
  } else if (!grows && p.low_limit <= thr.vanish_fraction * p.sup_eps &&
             p.high_limit <= thr.vanish_fraction * p.sup_eps) {
    p.verdict = WeakVerdict::Lq0;
  } else if (!grows) {
    p.verdict = WeakVerdict::LqInf;
  } else {
    p.verdict = WeakVerdict::None;
  }
  return p;
}

struct Truncation {
  FunctionSpec approximant;
  double residual_quasi_norm = 0.0;  ///< sup_y eps_q(f - f_j, y)^(1/q) on the grid
};

/// f_j = clamp(f, -j, j) restricted to B(0, j).
inline Truncation truncation_approximant(const FunctionSpec& f, double j, double q,
                                         const std::vector<double>& levels) {
  if (!(j >= 1.0)) throw Error(ErrorCode::BadExponent, "truncation level must be at least 1");
  Truncation out;
  FunctionSpec residual;
  if (const auto* r = std::get_if<RadialProfile>(&f)) {
    const int m = r->dimension;
    const double alpha = unit_ball_volume(m);
    RadialProfile fj = *r;
    fj.name = r->name + "_trunc";
    fj.value = [v = r->value, j](double x) { return x < j ? std::clamp(v(x), -j, j) : 0.0; };
    fj.distribution = [v = r->value, j, alpha, m](double y) {
      if (y >= j) return 0.0;
      return alpha * std::pow(std::min(level_radius(v, y), j), m);
    };
    RadialProfile rest = *r;
    rest.name = r->name + "_rest";
    rest.value = [v = r->value, j](double x) {
      const double fx = v(x);
      return x < j ? fx - std::clamp(fx, -j, j) : fx;
    };
    // {|f - f_j| > y} = {r < min(r_f(j + y), j)} union {j <= r < r_f(y)}.
    rest.distribution = [v = r->value, j, alpha, m](double y) {
      const double inner = std::min(level_radius(v, j + y), j);
      const double outer = level_radius(v, y);
      double d = std::pow(inner, m);
      if (outer > j) d += std::pow(outer, m) - std::pow(j, m);
      return alpha * d;
    };
    out.approximant = fj;
    residual = rest;
  } else {
    const auto& g = std::get<GridFunction>(f);
    GridFunction fj = g, rest = g;
    for (std::size_t i = 0; i < g.values.size(); ++i) {
      const bool inside = g.positions.empty() || distance(g.positions[i], Point{0, 0, 0}) < j;
      fj.values[i] = inside ? std::clamp(g.values[i], -j, j) : 0.0;
      rest.values[i] = g.values[i] - fj.values[i];
    }
    out.approximant = fj;
    residual = rest;
  }
  double sup = 0.0;
  for (double y : levels) sup = std::max(sup, epsilon_q(residual, q, y));
  out.residual_quasi_norm = std::pow(sup, 1.0 / q);
  return out;
}

}  // namespace divflow
