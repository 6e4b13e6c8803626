#pragma once

// Grid domains and the staggered discrete calculus: scalar functions live on
// cells, vector fields live on edges between adjacent inside cells.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <queue>
#include <span>
#include <utility>
#include <vector>

#include "divflow/error.hpp"

namespace divflow {

/// Integer lattice cell. Coordinates beyond the domain dimension are zero.
using Cell = std::array<int, 3>;
/// Point of R^m, same zero-padding convention as Cell.
using Point = std::array<double, 3>;

enum class Connectivity {
  Axis,  ///< 4-neighbour in 2D, 6-neighbour in 3D
  Full,  ///< 8-neighbour in 2D, 26-neighbour in 3D
};

/// Graph mode measures everything in cell units (h = 1); mesh mode multiplies
/// lengths by h, volumes by h^m and transversal weights by h^(m-1).
enum class Mode { Graph, Mesh };

struct Edge {
  std::size_t tail = 0;  ///< lexicographically smaller cell
  std::size_t head = 0;
  double unit_length = 1.0;  ///< 1, sqrt(2) or sqrt(3) in cell units
};

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

inline double distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

class GridDomain;

/// Value per inside cell, indexed like GridDomain::cells().
using NodeFunction = std::vector<double>;
/// Value per canonical edge, indexed like GridDomain::edges(). Positive values
/// flow from tail to head.
using EdgeField = std::vector<double>;

/// A discretised open set: the union of the closed unit boxes of the inside
/// cells, scaled by h. Immutable after construction.
class GridDomain {
 public:
  GridDomain(int dimension, std::vector<Cell> mask, double h, Connectivity connectivity,
             Cell basepoint)
      : dim_(dimension), h_(h), connectivity_(connectivity) {
    if (dimension < 1 || dimension > 3) {
      throw Error(ErrorCode::BadDimension, "grid dimension must be 1, 2 or 3");
    }
    if (!(h > 0.0) || !std::isfinite(h)) {
      throw Error(ErrorCode::ShapeMismatch, "cell size must be positive");
    }
    for (auto& c : mask) {
      for (int k = dim_; k < 3; ++k) c[k] = 0;
    }
    for (int k = dim_; k < 3; ++k) basepoint[k] = 0;
    std::sort(mask.begin(), mask.end());
    mask.erase(std::unique(mask.begin(), mask.end()), mask.end());
    if (mask.empty()) throw Error(ErrorCode::EmptyMask, "mask has no inside cells");
    cells_ = std::move(mask);
    auto bp = index_of(basepoint);
    if (!bp) throw Error(ErrorCode::BasepointOutside, "basepoint is not an inside cell");
    basepoint_ = *bp;
    build_edges();
    label_components();
    build_frontier();
  }

  int dimension() const noexcept { return dim_; }
  double cell_size() const noexcept { return h_; }
  Connectivity connectivity() const noexcept { return connectivity_; }
  std::size_t num_cells() const noexcept { return cells_.size(); }
  std::size_t num_edges() const noexcept { return edges_.size(); }
  const std::vector<Cell>& cells() const noexcept { return cells_; }
  const Cell& cell(std::size_t i) const { return cells_[i]; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }
  std::size_t basepoint() const noexcept { return basepoint_; }

  /// (neighbour, edge index) pairs, neighbours in increasing index order.
  const std::vector<std::pair<std::size_t, std::size_t>>& neighbors(std::size_t i) const {
    return adjacency_[i];
  }

  const std::vector<int>& component_labels() const noexcept { return component_; }
  int num_components() const noexcept { return num_components_; }
  /// False when the mask splits into several components; solvers then reject
  /// any imbalance that would have to cross between components.
  bool connected() const noexcept { return num_components_ == 1; }

  std::optional<std::size_t> index_of(const Cell& c) const {
    auto it = std::lower_bound(cells_.begin(), cells_.end(), c);
    if (it == cells_.end() || *it != c) return std::nullopt;
    return static_cast<std::size_t>(it - cells_.begin());
  }
  bool contains(const Cell& c) const { return index_of(c).has_value(); }

  std::size_t require(const Cell& c) const {
    auto i = index_of(c);
    if (!i) throw Error(ErrorCode::CellOutside, "cell is not inside the domain");
    return *i;
  }

  double scale(Mode mode) const noexcept { return mode == Mode::Graph ? 1.0 : h_; }
  double edge_length(std::size_t e, Mode mode) const { return edges_[e].unit_length * scale(mode); }
  /// Transversal weight h^(m-1) * (h / length): the face area an edge stands for.
  double edge_weight(std::size_t e, Mode mode) const {
    const double s = scale(mode);
    return std::pow(s, dim_ - 1) / edges_[e].unit_length;
  }
  double cell_volume(Mode mode) const { return std::pow(scale(mode), dim_); }

  Point center(std::size_t i, Mode mode = Mode::Mesh) const {
    const double s = scale(mode);
    Point p{0.0, 0.0, 0.0};
    for (int k = 0; k < dim_; ++k) p[k] = (cells_[i][k] + 0.5) * s;
    return p;
  }

  /// Cell whose closed box contains p (lowest corner convention), mesh units.
  Cell locate(const Point& p) const {
    Cell c{0, 0, 0};
    for (int k = 0; k < dim_; ++k) c[k] = static_cast<int>(std::floor(p[k] / h_));
    return c;
  }

  /// Exact Euclidean distance (mesh units) from p to the complement of the
  /// open set covered by the inside cells.
  double distance_to_complement(const Point& p) const {
    if (!contains(locate(p))) return 0.0;
    double best2 = kInfinity;
    for (const auto& c : frontier_) {
      double d2 = 0.0;
      for (int k = 0; k < dim_; ++k) {
        const double lo = c[k] * h_, hi = (c[k] + 1) * h_;
        const double gap = p[k] < lo ? lo - p[k] : (p[k] > hi ? p[k] - hi : 0.0);
        d2 += gap * gap;
      }
      best2 = std::min(best2, d2);
    }
    return std::sqrt(best2);
  }

  /// Outside lattice cells touching an inside cell (full neighbourhood); the
  /// nearest complement point of any inside point lies in one of their boxes.
  const std::vector<Cell>& frontier() const noexcept { return frontier_; }

 private:
  std::vector<Cell> offsets(bool positive_only, Connectivity conn) const {
    std::vector<Cell> out;
    const int lo2 = dim_ >= 2 ? -1 : 0, hi2 = dim_ >= 2 ? 1 : 0;
    const int lo3 = dim_ >= 3 ? -1 : 0, hi3 = dim_ >= 3 ? 1 : 0;
    for (int a = -1; a <= 1; ++a) {
      for (int b = lo2; b <= hi2; ++b) {
        for (int c = lo3; c <= hi3; ++c) {
          Cell d{a, b, c};
          const int nz = (a != 0) + (b != 0) + (c != 0);
          if (nz == 0) continue;
          if (conn == Connectivity::Axis && nz != 1) continue;
          if (positive_only && !(Cell{0, 0, 0} < d)) continue;
          out.push_back(d);
        }
      }
    }
    return out;
  }

  void build_edges() {
    const auto steps = offsets(true, connectivity_);
    adjacency_.assign(cells_.size(), {});
    for (std::size_t i = 0; i < cells_.size(); ++i) {
      for (const auto& d : steps) {
        Cell n{cells_[i][0] + d[0], cells_[i][1] + d[1], cells_[i][2] + d[2]};
        if (auto j = index_of(n)) {
          const int nz = (d[0] != 0) + (d[1] != 0) + (d[2] != 0);
          edges_.push_back({i, *j, std::sqrt(static_cast<double>(nz))});
        }
      }
    }
    std::sort(edges_.begin(), edges_.end(), [](const Edge& a, const Edge& b) {
      return std::pair(a.tail, a.head) < std::pair(b.tail, b.head);
    });
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      adjacency_[edges_[e].tail].emplace_back(edges_[e].head, e);
      adjacency_[edges_[e].head].emplace_back(edges_[e].tail, e);
    }
    for (auto& adj : adjacency_) std::sort(adj.begin(), adj.end());
  }

  void label_components() {
    component_.assign(cells_.size(), -1);
    num_components_ = 0;
    std::vector<std::size_t> stack;
    for (std::size_t s = 0; s < cells_.size(); ++s) {
      if (component_[s] >= 0) continue;
      component_[s] = num_components_;
      stack.push_back(s);
      while (!stack.empty()) {
        auto i = stack.back();
        stack.pop_back();
        for (auto [j, e] : adjacency_[i]) {
          if (component_[j] < 0) {
            component_[j] = num_components_;
            stack.push_back(j);
          }
        }
      }
      ++num_components_;
    }
  }

  void build_frontier() {
    const auto ring = offsets(false, Connectivity::Full);
    for (const auto& c : cells_) {
      for (const auto& d : ring) {
        Cell n{c[0] + d[0], c[1] + d[1], c[2] + d[2]};
        if (!contains(n)) frontier_.push_back(n);
      }
    }
    std::sort(frontier_.begin(), frontier_.end());
    frontier_.erase(std::unique(frontier_.begin(), frontier_.end()), frontier_.end());
  }

  int dim_;
  double h_;
  Connectivity connectivity_;
  std::vector<Cell> cells_;
  std::vector<Edge> edges_;
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adjacency_;
  std::vector<int> component_;
  int num_components_ = 0;
  std::vector<Cell> frontier_;
  std::size_t basepoint_ = 0;
};

inline GridDomain build_domain(int dimension, std::vector<Cell> mask, double h,
                               Connectivity connectivity, Cell basepoint) {
  return GridDomain(dimension, std::move(mask), h, connectivity, basepoint);
}

/// Full nx-by-ny rectangle with the basepoint at its lowest cell.
inline GridDomain rectangle_domain(int nx, int ny, double h = 1.0,
                                   Connectivity connectivity = Connectivity::Full) {
  std::vector<Cell> mask;
  for (int i = 0; i < nx; ++i)
    for (int j = 0; j < ny; ++j) mask.push_back({i, j, 0});
  return GridDomain(2, std::move(mask), h, connectivity, {0, 0, 0});
}

/// Distance from the cell centre to the complement of the domain.
inline double boundary_distance(const GridDomain& domain, const Cell& cell,
                                Mode mode = Mode::Mesh) {
  const auto i = domain.require(cell);
  return domain.distance_to_complement(domain.center(i, Mode::Mesh)) / domain.cell_size() *
         domain.scale(mode);
}

/// Single-source shortest path lengths; +inf on other components. Ties are
/// settled in increasing cell index.
inline std::vector<double> distances_from(const GridDomain& domain, std::size_t source, Mode mode) {
  std::vector<double> dist(domain.num_cells(), kInfinity);
  using Item = std::pair<double, std::size_t>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> queue;
  dist[source] = 0.0;
  queue.emplace(0.0, source);
  while (!queue.empty()) {
    auto [d, i] = queue.top();
    queue.pop();
    if (d > dist[i]) continue;
    for (auto [j, e] : domain.neighbors(i)) {
      const double nd = d + domain.edge_length(e, mode);
      if (nd < dist[j]) {
        dist[j] = nd;
        queue.emplace(nd, j);
      }
    }
  }
  return dist;
}

inline double graph_distance(const GridDomain& domain, const Cell& a, const Cell& b,
                             Mode mode = Mode::Graph) {
  const auto ia = domain.require(a);
  const auto ib = domain.require(b);
  return distances_from(domain, ia, mode)[ib];
}

inline void check_node_shape(const GridDomain& domain, std::span<const double> u) {
  if (u.size() != domain.num_cells())
    throw Error(ErrorCode::ShapeMismatch, "node function size differs from cell count");
}

inline void check_edge_shape(const GridDomain& domain, std::span<const double> v) {
  if (v.size() != domain.num_edges())
    throw Error(ErrorCode::ShapeMismatch, "edge field size differs from edge count");
}

/// Net outflow per cell: sum over edges leaving minus sum over edges entering.
inline NodeFunction divergence(const GridDomain& domain, std::span<const double> v) {
  check_edge_shape(domain, v);
  NodeFunction out(domain.num_cells(), 0.0);
  const auto& edges = domain.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out[edges[e].tail] += v[e];
    out[edges[e].head] -= v[e];
  }
  return out;
}

/// Difference quotient along each edge; the negative adjoint of divergence
/// with respect to the length-weighted edge pairing.
inline EdgeField gradient(const GridDomain& domain, std::span<const double> u,
                          Mode mode = Mode::Graph) {
  check_node_shape(domain, u);
  EdgeField out(domain.num_edges());
  const auto& edges = domain.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    out[e] = (u[edges[e].head] - u[edges[e].tail]) / domain.edge_length(e, mode);
  }
  return out;
}

inline double total_variation(const GridDomain& domain, std::span<const double> u,
                              Mode mode = Mode::Graph) {
  check_node_shape(domain, u);
  double tv = 0.0;
  const auto& edges = domain.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    tv += std::abs(u[edges[e].head] - u[edges[e].tail]) * domain.edge_weight(e, mode);
  }
  return tv;
}

/// Perimeter of a cell subset: transversal weight of the edges it cuts.
inline double cut_weight(const GridDomain& domain, std::span<const char> in_set, Mode mode) {
  double w = 0.0;
  const auto& edges = domain.edges();
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (in_set[edges[e].tail] != in_set[edges[e].head]) w += domain.edge_weight(e, mode);
  }
  return w;
}

/// Largest |grad u| over edges (graph Lipschitz constant of u).
inline double grad_sup(const GridDomain& domain, std::span<const double> u,
                       Mode mode = Mode::Graph) {
  double best = 0.0;
  for (double g : gradient(domain, u, mode)) best = std::max(best, std::abs(g));
  return best;
}

/// Lipschitz constant of u with respect to Euclidean distance between centres.
inline double euclidean_lipschitz(const GridDomain& domain, std::span<const double> u,
                                  Mode mode = Mode::Graph) {
  check_node_shape(domain, u);
  double best = 0.0;
  for (std::size_t i = 0; i < domain.num_cells(); ++i) {
    const auto pi = domain.center(i, mode);
    for (std::size_t j = i + 1; j < domain.num_cells(); ++j) {
      best = std::max(best, std::abs(u[i] - u[j]) / distance(pi, domain.center(j, mode)));
    }
  }
  return best;
}

struct Constants {
  double unit_ball_volume = 0.0;      ///< alpha(m)
  double isoperimetric = 0.0;         ///< kappa_m = alpha(m)^(-1/m) / m
  double sobolev_conjugate = 0.0;     ///< 1* = m / (m - 1)
};

inline double unit_ball_volume(int m) {
  return std::pow(std::numbers::pi, 0.5 * m) / std::tgamma(0.5 * m + 1.0);
}

inline Constants sobolev_constants(int m) {
  if (m < 2) throw Error(ErrorCode::DimensionTooSmall, "constants need m >= 2");
  Constants c;
  c.unit_ball_volume = unit_ball_volume(m);
  c.isoperimetric = std::pow(c.unit_ball_volume, -1.0 / m) / m;
  c.sobolev_conjugate = static_cast<double>(m) / (m - 1);
  return c;
}

}  // namespace divflow
