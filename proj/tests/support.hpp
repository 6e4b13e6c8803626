#pragma once

// Shared generators and brute-force oracles for the test binaries. Nothing
// here calls into the solvers it is used to check.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "divflow/divflow.hpp"

namespace testing_support {

using divflow::Cell;
using divflow::Connectivity;
using divflow::GridDomain;

/// Random connected polyomino (4-connected, so connected for both
/// connectivities) grown from the origin inside a w-by-h box.
inline std::vector<Cell> random_polyomino(std::mt19937_64& rng, int cells, int w, int h) {
  std::set<Cell> in{{0, 0, 0}};
  std::vector<Cell> list{{0, 0, 0}};
  int guard = 0;
  while (static_cast<int>(in.size()) < cells && guard++ < 100000) {
    const Cell c = list[std::uniform_int_distribution<std::size_t>(0, list.size() - 1)(rng)];
    static const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
    const auto& s = d[std::uniform_int_distribution<int>(0, 3)(rng)];
    Cell n{c[0] + s[0], c[1] + s[1], 0};
    if (n[0] < 0 || n[1] < 0 || n[0] >= w || n[1] >= h) continue;
    if (in.insert(n).second) list.push_back(n);
  }
  return list;
}

inline GridDomain random_domain(std::mt19937_64& rng, int cells, int w, int h, Connectivity conn) {
  auto mask = random_polyomino(rng, cells, w, h);
  const Cell bp = mask[std::uniform_int_distribution<std::size_t>(0, mask.size() - 1)(rng)];
  return GridDomain(2, mask, 1.0, conn, bp);
}

/// Integer-valued balanced F with `units` unit sources and sinks.
inline std::vector<double> random_balanced(std::mt19937_64& rng, std::size_t n, int units) {
  std::vector<double> F(n, 0.0);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (int k = 0; k < units; ++k) {
    F[pick(rng)] += 1.0;
    F[pick(rng)] -= 1.0;
  }
  return F;
}

/// All-pairs shortest paths by Floyd-Warshall over the edge list, in the
/// requested mode's lengths.
inline std::vector<std::vector<double>> floyd(const GridDomain& d, divflow::Mode mode = divflow::Mode::Graph) {
  const std::size_t n = d.num_cells();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> D(n, std::vector<double>(n, inf));
  for (std::size_t i = 0; i < n; ++i) D[i][i] = 0.0;
  for (std::size_t e = 0; e < d.num_edges(); ++e) {
    const auto& ed = d.edges()[e];
    const double len = d.edge_length(e, mode);
    D[ed.tail][ed.head] = std::min(D[ed.tail][ed.head], len);
    D[ed.head][ed.tail] = std::min(D[ed.head][ed.tail], len);
  }
  for (std::size_t k = 0; k < n; ++k)
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) D[i][j] = std::min(D[i][j], D[i][k] + D[k][j]);
  return D;
}

/// Transport cost of an integer balanced F by exhaustive matching of unit
/// sources to unit sinks (up to 8 units).
inline double matching_cost(const std::vector<std::vector<double>>& D, const std::vector<double>& F) {
  std::vector<std::size_t> src, dst;
  for (std::size_t i = 0; i < F.size(); ++i) {
    for (int k = 0; k < static_cast<int>(std::lround(F[i])); ++k) src.push_back(i);
    for (int k = 0; k < static_cast<int>(std::lround(-F[i])); ++k) dst.push_back(i);
  }
  std::vector<std::size_t> perm(dst.size());
  std::iota(perm.begin(), perm.end(), 0);
  double best = std::numeric_limits<double>::infinity();
  do {
    double c = 0.0;
    for (std::size_t k = 0; k < src.size(); ++k) c += D[src[k]][dst[perm[k]]];
    best = std::min(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

/// max over proper nonempty S of |f(S)| / Per(S), straight subset loop.
inline double max_cut_ratio(const GridDomain& d, const std::vector<double>& f, divflow::Mode mode) {
  const std::size_t n = d.num_cells();
  const double vol = d.cell_volume(mode);
  double best = 0.0;
  for (std::uint64_t s = 1; s + 1 < (std::uint64_t{1} << n); ++s) {
    double mass = 0.0, per = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      if ((s >> i) & 1) mass += f[i] * vol;
    for (std::size_t e = 0; e < d.num_edges(); ++e) {
      const auto& ed = d.edges()[e];
      if (((s >> ed.tail) & 1) != ((s >> ed.head) & 1)) per += d.edge_weight(e, mode);
    }
    if (per > 0.0) best = std::max(best, std::abs(mass) / per);
  }
  return best;
}

/// Polyominoes with exactly `n` cells, 4-connected, up to translation
/// (`free_only`: also up to rotation and reflection).
inline std::vector<std::vector<Cell>> polyominoes(int n, bool free_only = false) {
  std::set<std::vector<Cell>> layer{{{0, 0, 0}}};
  auto normalise = [](std::vector<Cell> s) {
    int x0 = s[0][0], y0 = s[0][1];
    for (auto& c : s) {
      x0 = std::min(x0, c[0]);
      y0 = std::min(y0, c[1]);
    }
    for (auto& c : s) {
      c[0] -= x0;
      c[1] -= y0;
    }
    std::sort(s.begin(), s.end());
    return s;
  };
  for (int k = 1; k < n; ++k) {
    std::set<std::vector<Cell>> next;
    for (const auto& s : layer) {
      for (const auto& c : s) {
        static const int d[4][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
        for (const auto& st : d) {
          Cell m{c[0] + st[0], c[1] + st[1], 0};
          if (std::find(s.begin(), s.end(), m) != s.end()) continue;
          auto t = s;
          t.push_back(m);
          next.insert(normalise(t));
        }
      }
    }
    layer = std::move(next);
  }
  if (!free_only) return {layer.begin(), layer.end()};
  std::set<std::vector<Cell>> canon;
  for (const auto& s : layer) {
    std::vector<Cell> best;
    for (int sym = 0; sym < 8; ++sym) {
      auto t = s;
      for (auto& c : t) {
        int x = c[0], y = c[1];
        if (sym & 1) std::swap(x, y);
        if (sym & 2) x = -x;
        if (sym & 4) y = -y;
        c = {x, y, 0};
      }
      t = normalise(t);
      if (best.empty() || t < best) best = t;
    }
    canon.insert(best);
  }
  return {canon.begin(), canon.end()};
}

}  // namespace testing_support
