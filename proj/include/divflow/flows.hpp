#pragma once

// Exact network solvers for the two divergence problems on a grid domain:
//   min sum |v_e| * length(e)       subject to div v = F   (transport / L1)
//   min max |v_e| / weight(e)       subject to div v = f   (Chebyshev / L-infinity)
// together with their dual certificates and a path decomposition of unit
// dipole flows.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include "divflow/core.hpp"

namespace divflow {

inline constexpr double kBalanceTolerance = 1e-9;

namespace detail {

inline double abs_sum(std::span<const double> values) {
  double s = 0.0;
  for (double x : values) s += std::abs(x);
  return s;
}

/// Throws Unbalanced / DisconnectedImbalance unless every component of the
/// domain carries zero net mass.
inline void require_balanced(const GridDomain& domain, std::span<const double> F, ErrorCode code) {
  const double scale = std::max(1.0, abs_sum(F));
  std::vector<double> per(domain.num_components(), 0.0);
  double total = 0.0;
  for (std::size_t i = 0; i < F.size(); ++i) {
    per[domain.component_labels()[i]] += F[i];
    total += F[i];
  }
  if (std::abs(total) > kBalanceTolerance * scale) {
    throw Error(code, "net mass " + std::to_string(total) + " is not zero");
  }
  for (double p : per) {
    if (std::abs(p) > kBalanceTolerance * scale) {
      throw Error(code == ErrorCode::Unbalanced ? ErrorCode::DisconnectedImbalance : code,
                  "a connected component carries net mass " + std::to_string(p));
    }
  }
}

/// Dinic max-flow on real capacities. Arc pairs are stored adjacently so an
/// arc's partner is `id ^ 1`.
class MaxFlow {
 public:
  explicit MaxFlow(std::size_t n) : head_(n, -1), level_(n), iter_(n) {}

  /// Adds u->v with capacity `cap` and v->u with capacity `back`; returns the
  /// id of the u->v arc.
  std::size_t add(std::size_t u, std::size_t v, double cap, double back = 0.0) {
    const auto id = to_.size();
    push(u, v, cap);
    push(v, u, back);
    return id;
  }

  double residual(std::size_t arc) const { return cap_[arc]; }

  double run(std::size_t s, std::size_t t, double eps) {
    eps_ = eps;
    double total = 0.0;
    while (bfs(s, t)) {
      for (std::size_t i = 0; i < head_.size(); ++i) iter_[i] = head_[i];
      while (true) {
        const double pushed = dfs(s, t, kInfinity);
        if (pushed <= 0.0) break;
        total += pushed;
      }
    }
    return total;
  }

  /// Nodes reachable from s through arcs with residual capacity above eps.
  std::vector<char> reachable(std::size_t s) const {
    std::vector<char> seen(head_.size(), 0);
    std::vector<std::size_t> stack{s};
    seen[s] = 1;
    while (!stack.empty()) {
      auto u = stack.back();
      stack.pop_back();
      for (int a = head_[u]; a >= 0; a = next_[a]) {
        if (cap_[a] > eps_ && !seen[to_[a]]) {
          seen[to_[a]] = 1;
          stack.push_back(to_[a]);
        }
      }
    }
    return seen;
  }

 private:
  void push(std::size_t u, std::size_t v, double cap) {
    to_.push_back(v);
    cap_.push_back(cap);
    next_.push_back(head_[u]);
    head_[u] = static_cast<int>(to_.size() - 1);
  }

  bool bfs(std::size_t s, std::size_t t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<std::size_t> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
      auto u = q.front();
      q.pop();
      for (int a = head_[u]; a >= 0; a = next_[a]) {
        if (cap_[a] > eps_ && level_[to_[a]] < 0) {
          level_[to_[a]] = level_[u] + 1;
          q.push(to_[a]);
        }
      }
    }
    return level_[t] >= 0;
  }

  double dfs(std::size_t u, std::size_t t, double limit) {
    if (u == t) return limit;
    for (int& a = iter_[u]; a >= 0; a = next_[a]) {
      const auto v = to_[a];
      if (cap_[a] > eps_ && level_[v] == level_[u] + 1) {
        const double got = dfs(v, t, std::min(limit, cap_[a]));
        if (got > 0.0) {
          cap_[a] -= got;
          cap_[a ^ 1] += got;
          return got;
        }
      }
    }
    return 0.0;
  }

  std::vector<int> head_;
  std::vector<std::size_t> to_;
  std::vector<double> cap_;
  std::vector<int> next_;
  std::vector<int> level_;
  std::vector<int> iter_;
  double eps_ = 0.0;
};

}  // namespace detail

/// Optimal transport flow and its Kantorovich potential.
struct FlowSolution {
  Mode mode = Mode::Graph;
  NodeFunction F;
  EdgeField v;
  double cost = 0.0;     ///< sum |v_e| * length(e)
  NodeFunction potential;  ///< 1-Lipschitz for edge lengths, zero at the basepoint
  std::size_t augmentations = 0;
};

/// Successive shortest paths with node potentials on the uncapacitated
/// bidirected grid graph. F > 0 marks sources (div v = F, outflow positive).
inline FlowSolution min_cost_flow(const GridDomain& domain, std::span<const double> F,
                                  Mode mode = Mode::Graph) {
  check_node_shape(domain, F);
  detail::require_balanced(domain, F, ErrorCode::Unbalanced);

  const std::size_t n = domain.num_cells();
  const auto& edges = domain.edges();
  FlowSolution sol;
  sol.mode = mode;
  sol.F.assign(F.begin(), F.end());
  sol.v.assign(edges.size(), 0.0);

  std::vector<double> excess(F.begin(), F.end());
  std::vector<double> pi(n, 0.0);
  const double eps = 1e-14 * std::max(1.0, detail::abs_sum(F));

  std::vector<double> dist(n);
  std::vector<std::size_t> pred_node(n), pred_edge(n);
  std::vector<char> settled(n);
  using Item = std::pair<double, std::size_t>;

  while (true) {
    std::fill(dist.begin(), dist.end(), kInfinity);
    std::fill(settled.begin(), settled.end(), 0);
    std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
    for (std::size_t i = 0; i < n; ++i) {
      if (excess[i] > eps) {
        dist[i] = 0.0;
        pred_node[i] = i;
        queue.emplace(0.0, i);
      }
    }
    if (queue.empty()) break;

    std::size_t sink = n;
    while (!queue.empty()) {
      auto [d, i] = queue.top();
      queue.pop();
      if (settled[i] || d > dist[i]) continue;
      settled[i] = 1;
      if (excess[i] < -eps) {
        sink = i;
        break;
      }
      for (auto [j, e] : domain.neighbors(i)) {
        const double dir = edges[e].tail == i ? 1.0 : -1.0;
        const double len = domain.edge_length(e, mode);
        // Pushing i->j against existing flow cancels it at cost -len.
        const double arc_cost = dir * sol.v[e] < 0.0 ? -len : len;
        const double reduced = std::max(0.0, arc_cost + pi[i] - pi[j]);
        const double nd = d + reduced;
        if (nd < dist[j]) {
          dist[j] = nd;
          pred_node[j] = i;
          pred_edge[j] = e;
          queue.emplace(nd, j);
        }
      }
    }
    if (sink == n) {
      throw Error(ErrorCode::DisconnectedImbalance, "a sink cannot be reached from any source");
    }

    // Bottleneck: source excess, sink deficit, and any cancelled flow.
    double delta = -excess[sink];
    std::size_t node = sink;
    while (pred_node[node] != node) {
      const auto e = pred_edge[node];
      const auto from = pred_node[node];
      const double dir = edges[e].tail == from ? 1.0 : -1.0;
      if (dir * sol.v[e] < 0.0) delta = std::min(delta, -dir * sol.v[e]);
      node = from;
    }
    const std::size_t source = node;
    delta = std::min(delta, excess[source]);

    node = sink;
    while (pred_node[node] != node) {
      const auto e = pred_edge[node];
      const auto from = pred_node[node];
      const double dir = edges[e].tail == from ? 1.0 : -1.0;
      if (dir * sol.v[e] < 0.0 && -dir * sol.v[e] == delta) {
        sol.v[e] = 0.0;
      } else {
        sol.v[e] += dir * delta;
      }
      node = from;
    }
    excess[source] -= delta;
    excess[sink] += delta;
    if (std::abs(excess[source]) <= eps) excess[source] = 0.0;
    if (std::abs(excess[sink]) <= eps) excess[sink] = 0.0;

    const double dt = dist[sink];
    for (std::size_t i = 0; i < n; ++i) pi[i] += std::min(dist[i], dt);
    ++sol.augmentations;
  }

  for (std::size_t e = 0; e < edges.size(); ++e) {
    sol.cost += std::abs(sol.v[e]) * domain.edge_length(e, mode);
  }

  // Potential u = -pi, pinned to zero at the basepoint (or at the first cell
  // of components that do not contain it).
  sol.potential.assign(n, 0.0);
  std::vector<double> anchor(domain.num_components(), std::numeric_limits<double>::quiet_NaN());
  const auto& comp = domain.component_labels();
  anchor[comp[domain.basepoint()]] = -pi[domain.basepoint()];
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(anchor[comp[i]])) anchor[comp[i]] = -pi[i];
    sol.potential[i] = -pi[i] - anchor[comp[i]];
  }
  return sol;
}

inline double pairing(std::span<const double> u, std::span<const double> F) {
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) s += u[i] * F[i];
  return s;
}

/// Largest violation of |u(head) - u(tail)| <= length(e).
inline double lipschitz_excess(const GridDomain& domain, std::span<const double> u, Mode mode) {
  double worst = 0.0;
  for (std::size_t e = 0; e < domain.num_edges(); ++e) {
    const auto& ed = domain.edges()[e];
    worst = std::max(worst, std::abs(u[ed.head] - u[ed.tail]) - domain.edge_length(e, mode));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// Pencil decomposition

struct PencilPath {
  std::vector<std::size_t> cells;  ///< from a to b
  double weight = 0.0;
  double length = 0.0;
};

struct PencilDecomposition {
  std::size_t a = 0, b = 0;
  double theta = 0.0;  ///< div v = theta * (delta_b - delta_a)
  std::vector<PencilPath> paths;
  EdgeField acyclic_flow;
  double input_cost = 0.0;
  double acyclic_cost = 0.0;
  double nu_total = 0.0;
  double euclidean_gap = 0.0;  ///< |b - a|_2 between cell centres
  double lambda = 0.0;         ///< nu_total / |b - a|_2
  std::size_t cycles_cancelled = 0;
};

namespace detail {

/// Finds a directed cycle in the support of v (edges oriented by flow sign).
/// Returns (node, edge) steps of the cycle, empty if acyclic.
inline std::vector<std::pair<std::size_t, std::size_t>> find_flow_cycle(
    const GridDomain& domain, const EdgeField& v, double eps) {
  const std::size_t n = domain.num_cells();
  const auto& edges = domain.edges();
  std::vector<int> color(n, 0);
  std::vector<std::size_t> parent_node(n), parent_edge(n), cursor(n, 0);
  for (std::size_t root = 0; root < n; ++root) {
    if (color[root]) continue;
    std::vector<std::size_t> stack{root};
    color[root] = 1;
    while (!stack.empty()) {
      const auto u = stack.back();
      const auto& adj = domain.neighbors(u);
      bool descended = false;
      while (cursor[u] < adj.size()) {
        auto [w, e] = adj[cursor[u]++];
        const double out = edges[e].tail == u ? v[e] : -v[e];
        if (out <= eps) continue;
        if (color[w] == 1) {
          std::vector<std::pair<std::size_t, std::size_t>> cycle{{u, e}};
          for (auto x = u; x != w; x = parent_node[x]) cycle.emplace_back(parent_node[x], parent_edge[x]);
          return cycle;
        }
        if (color[w] == 0) {
          color[w] = 1;
          parent_node[w] = u;
          parent_edge[w] = e;
          stack.push_back(w);
          descended = true;
          break;
        }
      }
      if (!descended) {
        color[u] = 2;
        stack.pop_back();
      }
    }
  }
  return {};
}

}  // namespace detail

/// Cancels every circulation in v, then peels weighted source-to-sink paths.
/// The divergence of v must be theta * (delta_b - delta_a) with theta != 0.
inline PencilDecomposition decompose_pencil(const GridDomain& domain, std::span<const double> flow,
                                            const Cell& a_cell, const Cell& b_cell,
                                            Mode mode = Mode::Graph) {
  check_edge_shape(domain, flow);
  const auto a = domain.require(a_cell);
  const auto b = domain.require(b_cell);
  const auto& edges = domain.edges();
  const auto div = divergence(domain, flow);
  const double theta = div[b];
  const double scale = std::max(1.0, detail::abs_sum(div));
  const double tol = 1e-9 * scale;
  if (a == b || std::abs(theta) <= tol || std::abs(div[a] + theta) > tol) {
    throw Error(ErrorCode::NotADipole, "flow divergence is not theta*(delta_b - delta_a)");
  }
  for (std::size_t i = 0; i < div.size(); ++i) {
    if (i != a && i != b && std::abs(div[i]) > tol)
      throw Error(ErrorCode::NotADipole, "flow has divergence away from a and b");
  }

  PencilDecomposition out;
  out.a = a;
  out.b = b;
  out.theta = theta;
  EdgeField v(flow.begin(), flow.end());
  for (std::size_t e = 0; e < edges.size(); ++e) out.input_cost += std::abs(v[e]) * domain.edge_length(e, mode);

  const double eps = 1e-13 * std::max(1.0, std::abs(theta));
  for (auto& x : v) if (std::abs(x) <= eps) x = 0.0;
  while (true) {
    auto cycle = detail::find_flow_cycle(domain, v, eps);
    if (cycle.empty()) break;
    double amount = kInfinity;
    for (auto [u, e] : cycle) amount = std::min(amount, std::abs(v[e]));
    for (auto [u, e] : cycle) {
      const double dir = edges[e].tail == u ? 1.0 : -1.0;
      v[e] -= dir * amount;
      if (std::abs(v[e]) <= eps) v[e] = 0.0;
    }
    ++out.cycles_cancelled;
  }
  out.acyclic_flow = v;
  for (std::size_t e = 0; e < edges.size(); ++e) out.acyclic_cost += std::abs(v[e]) * domain.edge_length(e, mode);

  // theta > 0: mass leaves b and arrives at a.
  const auto source = theta > 0.0 ? b : a;
  const auto sink = theta > 0.0 ? a : b;
  double remaining = std::abs(theta);
  EdgeField rest = v;
  while (remaining > eps) {
    std::vector<std::size_t> cells{source};
    std::vector<std::size_t> path_edges;
    double bottleneck = remaining;
    auto u = source;
    while (u != sink) {
      std::size_t pick = edges.size();
      std::size_t next = u;
      for (auto [w, e] : domain.neighbors(u)) {
        const double out_flow = edges[e].tail == u ? rest[e] : -rest[e];
        if (out_flow > eps) {
          pick = e;
          next = w;
          break;
        }
      }
      if (pick == edges.size() || cells.size() > domain.num_cells()) {
        throw Error(ErrorCode::NotADipole, "path peeling stalled; flow is not conservative");
      }
      bottleneck = std::min(bottleneck, std::abs(rest[pick]));
      path_edges.push_back(pick);
      cells.push_back(next);
      u = next;
    }
    PencilPath p;
    auto node = source;
    for (auto e : path_edges) {
      const double dir = edges[e].tail == node ? 1.0 : -1.0;
      rest[e] -= dir * bottleneck;
      if (std::abs(rest[e]) <= eps) rest[e] = 0.0;
      p.length += domain.edge_length(e, mode);
      node = edges[e].tail == node ? edges[e].head : edges[e].tail;
    }
    remaining -= bottleneck;
    if (source != a) std::reverse(cells.begin(), cells.end());
    p.cells = std::move(cells);
    p.weight = bottleneck / std::abs(theta);
    out.nu_total += p.weight * p.length;
    out.paths.push_back(std::move(p));
  }
  out.euclidean_gap = distance(domain.center(a, mode), domain.center(b, mode));
  out.lambda = out.nu_total / out.euclidean_gap;
  return out;
}

inline PencilDecomposition decompose_pencil(const GridDomain& domain, const FlowSolution& sol,
                                            const Cell& a, const Cell& b) {
  return decompose_pencil(domain, sol.v, a, b, sol.mode);
}

/// Superposition of the weighted paths, scaled back to the dipole strength.
inline EdgeField pencil_flow(const GridDomain& domain, const PencilDecomposition& pencil) {
  EdgeField v(domain.num_edges(), 0.0);
  for (const auto& p : pencil.paths) {
    for (std::size_t k = 0; k + 1 < p.cells.size(); ++k) {
      const auto u = p.cells[k], w = p.cells[k + 1];
      for (auto [x, e] : domain.neighbors(u)) {
        if (x != w) continue;
        const double dir = domain.edges()[e].tail == u ? 1.0 : -1.0;
        // Paths run a -> b; the flow itself runs b -> a when theta > 0.
        v[e] -= pencil.theta * p.weight * dir;
        break;
      }
    }
  }
  return v;
}

// ---------------------------------------------------------------------------
// Chebyshev (L-infinity) problem

struct ChebyshevSolution {
  Mode mode = Mode::Graph;
  EdgeField v;
  double value = 0.0;        ///< t* = max_e |v_e| / weight(e) at optimum
  double flow_sup = 0.0;     ///< max_e |v_e| / weight(e) of the returned v
  std::vector<char> cut;     ///< certificate S (empty set when f == 0)
  double cut_mass = 0.0;     ///< |f(S)| in mass units
  double cut_perimeter = 0.0;
  double cut_ratio = 0.0;
  double residual = 0.0;     ///< max_i |div v - f * volume|
  int iterations = 0;
};

struct FeasibilityResult {
  bool feasible = false;
  EdgeField v;
  std::vector<char> source_side;  ///< min-cut cells on the source side
  double routed = 0.0;
  double demanded = 0.0;
};

/// Decides whether div v = f * volume admits |v_e| <= t * weight(e) by max-flow.
inline FeasibilityResult transshipment_feasible(const GridDomain& domain, std::span<const double> f,
                                                double t, Mode mode = Mode::Graph) {
  check_node_shape(domain, f);
  const std::size_t n = domain.num_cells();
  const std::size_t s = n, sink = n + 1;
  const double vol = domain.cell_volume(mode);
  detail::MaxFlow graph(n + 2);
  FeasibilityResult out;
  for (std::size_t i = 0; i < n; ++i) {
    const double m = f[i] * vol;
    if (m > 0.0) {
      graph.add(s, i, m);
      out.demanded += m;
    } else if (m < 0.0) {
      graph.add(i, sink, -m);
    }
  }
  std::vector<std::size_t> arc(domain.num_edges());
  std::vector<double> cap(domain.num_edges());
  for (std::size_t e = 0; e < domain.num_edges(); ++e) {
    cap[e] = t * domain.edge_weight(e, mode);
    arc[e] = graph.add(domain.edges()[e].tail, domain.edges()[e].head, cap[e], cap[e]);
  }
  const double eps = 1e-15 * std::max(1.0, out.demanded);
  out.routed = graph.run(s, sink, eps);
  out.feasible = out.routed >= out.demanded * (1.0 - 1e-12) - eps;
  out.v.resize(domain.num_edges());
  for (std::size_t e = 0; e < domain.num_edges(); ++e) out.v[e] = cap[e] - graph.residual(arc[e]);
  auto side = graph.reachable(s);
  out.source_side.assign(side.begin(), side.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

/// Dinkelbach iteration on t: each infeasible t yields a min cut S whose ratio
/// f(S)/Per(S) strictly exceeds t; the first feasible t is the optimum and the
/// last cut certifies it.
inline ChebyshevSolution chebyshev_solve(const GridDomain& domain, std::span<const double> f,
                                         Mode mode = Mode::Graph, int max_iterations = 200) {
  check_node_shape(domain, f);
  detail::require_balanced(domain, f, ErrorCode::NotMeanZero);
  const double vol = domain.cell_volume(mode);

  ChebyshevSolution sol;
  sol.mode = mode;
  sol.cut.assign(domain.num_cells(), 0);
  double t = 0.0;
  bool done = false;
  for (int it = 0; it < max_iterations; ++it) {
    ++sol.iterations;
    auto res = transshipment_feasible(domain, f, t, mode);
    if (res.feasible) {
      done = true;
      break;
    }
    double mass = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) if (res.source_side[i]) mass += f[i] * vol;
    const double per = cut_weight(domain, res.source_side, mode);
    const double ratio = per > 0.0 ? mass / per : kInfinity;
    if (!std::isfinite(ratio)) {
      throw Error(ErrorCode::NotMeanZero, "a closed component carries net mass");
    }
    sol.cut = res.source_side;
    sol.cut_mass = std::abs(mass);
    sol.cut_perimeter = per;
    sol.cut_ratio = sol.cut_mass / per;
    if (ratio - t <= 1e-12 * (1.0 + t)) {
      // Numerically stalled: the cut no longer improves on t.
      done = true;
      break;
    }
    t = ratio;
  }
  if (!done) throw Error(ErrorCode::ToleranceNotReached, "Chebyshev iteration cap reached");

  sol.value = t;
  // Realise v with a hair of slack so every source arc saturates exactly.
  auto final_run = transshipment_feasible(domain, f, t * (1.0 + 1e-10), mode);
  sol.v = std::move(final_run.v);
  const auto div = divergence(domain, sol.v);
  for (std::size_t i = 0; i < f.size(); ++i) {
    sol.residual = std::max(sol.residual, std::abs(div[i] - f[i] * vol));
  }
  for (std::size_t e = 0; e < domain.num_edges(); ++e) {
    sol.flow_sup = std::max(sol.flow_sup, std::abs(sol.v[e]) / domain.edge_weight(e, mode));
  }
  return sol;
}

/// Independent oracle: max over proper nonempty S of |f(S)| / Per(S) by
/// enumerating all 2^n subsets (Gray code order).
inline double gale_hoffman_brute(const GridDomain& domain, std::span<const double> f,
                                 Mode mode = Mode::Graph) {
  check_node_shape(domain, f);
  const std::size_t n = domain.num_cells();
  if (n > 20) throw Error(ErrorCode::TooLarge, "subset enumeration is limited to 20 cells");
  const double vol = domain.cell_volume(mode);
  std::vector<char> in(n, 0);
  double mass = 0.0, per = 0.0, best = 0.0;
  const std::uint64_t total = std::uint64_t{1} << n;
  for (std::uint64_t k = 1; k < total; ++k) {
    const int flip = std::countr_zero(k);
    in[flip] ^= 1;
    const double sign = in[flip] ? 1.0 : -1.0;
    mass += sign * f[flip] * vol;
    for (auto [j, e] : domain.neighbors(flip)) {
      // Edge toggles between cut and uncut.
      per += (in[j] != in[flip] ? 1.0 : -1.0) * domain.edge_weight(e, mode);
    }
    if (per > 1e-12) best = std::max(best, std::abs(mass) / per);
  }
  return best;
}

}  // namespace divflow
