// divflow command-line front end. Every subcommand writes <name>.json plus
// CSV series into the output directory and prints the JSON summary.

#include <atomic>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "divflow/divflow.hpp"

namespace fs = std::filesystem;
using namespace divflow;
using io::json;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct CheckFailed : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string domain_path;
  std::string rect;
  double h = 1.0;
  std::string connectivity;
  std::string mode = "graph";
  std::uint64_t seed = 1;
  bool check = false;
  std::string out;
  int threads = 0;
};

Mode parse_mode(const std::string& s) { return s == "mesh" ? Mode::Mesh : Mode::Graph; }

GridDomain load_domain(const Common& c) {
  if (!c.domain_path.empty() && !c.rect.empty()) throw UsageError("--domain and --rect are exclusive");
  if (!c.rect.empty()) {
    const auto x = c.rect.find('x');
    if (x == std::string::npos) throw UsageError("--rect expects NXxNY, e.g. 8x8");
    int nx = 0, ny = 0;
    try {
      nx = std::stoi(c.rect.substr(0, x));
      ny = std::stoi(c.rect.substr(x + 1));
    } catch (const std::logic_error&) {
      throw UsageError("--rect expects NXxNY, e.g. 8x8");
    }
    const auto conn = c.connectivity.empty() ? Connectivity::Full : io::parse_connectivity(c.connectivity);
    return rectangle_domain(nx, ny, c.h, conn);
  }
  if (c.domain_path.empty()) throw UsageError("a domain is required (--domain FILE or --rect NXxNY)");
  const auto conn = c.connectivity.empty() ? Connectivity::Full : io::parse_connectivity(c.connectivity);
  auto d = io::read_domain(c.domain_path, c.h, conn);
  if (!c.connectivity.empty() && d.connectivity() != conn) {
    std::vector<Cell> cells = d.cells();
    return GridDomain(d.dimension(), std::move(cells), d.cell_size(), conn, d.cell(d.basepoint()));
  }
  return d;
}

Cell parse_cell(const std::string& s, int dim) {
  Cell c{0, 0, 0};
  std::stringstream ss(s);
  std::string part;
  int k = 0;
  while (std::getline(ss, part, ',')) {
    if (k >= dim) throw UsageError("cell '" + s + "' has too many coordinates");
    try {
      c[k++] = std::stoi(part);
    } catch (const std::logic_error&) {
      throw UsageError("bad cell '" + s + "'");
    }
  }
  if (k != dim) throw UsageError("cell '" + s + "' needs " + std::to_string(dim) + " coordinates");
  return c;
}

Point parse_point(const std::string& s) {
  Point p{0, 0, 0};
  std::stringstream ss(s);
  std::string part;
  int k = 0;
  while (std::getline(ss, part, ',')) {
    if (k >= 3) throw UsageError("point '" + s + "' has too many coordinates");
    try {
      p[k++] = std::stod(part);
    } catch (const std::logic_error&) {
      throw UsageError("bad point '" + s + "'");
    }
  }
  return p;
}

NodeFunction load_values(const GridDomain& d, const std::string& path) {
  if (path.empty()) throw UsageError("--values FILE is required");
  return io::node_function_from_csv(d, io::read_text(path));
}

/// Runs fn(0..n-1) on a pool; results come back in index order and the
/// lowest-index failure is rethrown.
template <class R>
std::vector<R> parallel_map(std::size_t n, int threads, const std::function<R(std::size_t)>& fn) {
  std::vector<R> out(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        out[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  unsigned count = threads > 0 ? static_cast<unsigned>(threads) : std::max(1u, std::thread::hardware_concurrency());
  count = static_cast<unsigned>(std::min<std::size_t>(count, std::max<std::size_t>(n, 1)));
  std::vector<std::thread> pool;
  for (unsigned t = 0; t < count; ++t) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

class Output {
 public:
  Output(const Common& c, std::string name) : name_(std::move(name)) {
    std::string dir = c.out;
    if (dir.empty()) {
      const char* env = std::getenv("DIVFLOW_OUT");
      dir = env && *env ? env : ".";
    }
    dir_ = dir;
    fs::create_directories(dir_);
  }

  json& summary() { return summary_; }

  void csv(const std::string& what, const std::string& text) {
    const auto file = name_ + "_" + what + ".csv";
    io::write_text((dir_ / file).string(), text);
    summary_["files"].push_back(file);
  }

  void raw(const std::string& file, const std::string& text) {
    io::write_text((dir_ / file).string(), text);
    summary_["files"].push_back(file);
  }

  void finish() {
    summary_["command"] = name_;
    const auto text = summary_.dump(2) + "\n";
    io::write_text((dir_ / (name_ + ".json")).string(), text);
    std::cout << text;
  }

 private:
  std::string name_;
  fs::path dir_;
  json summary_ = json::object();
};

json domain_info(const GridDomain& d) {
  return {{"dimension", d.dimension()},
          {"cells", d.num_cells()},
          {"edges", d.num_edges()},
          {"h", d.cell_size()},
          {"connectivity", io::connectivity_name(d.connectivity(), d.dimension())},
          {"components", d.num_components()},
          {"basepoint", io::cell_to_json(d.cell(d.basepoint()), d.dimension())}};
}

void require_check(bool ok, const std::string& what) {
  if (!ok) throw CheckFailed(what);
}

std::string cut_csv(const GridDomain& d, const std::vector<char>& s) {
  NodeFunction u(d.num_cells(), 0.0);
  for (std::size_t i = 0; i < s.size() && i < u.size(); ++i) u[i] = s[i];
  return io::node_function_to_csv(d, u);
}

// ---------------------------------------------------------------------------
// Subcommands

void cmd_domain(const Common& c) {
  auto d = load_domain(c);
  Output out(c, "domain");
  out.summary()["domain"] = domain_info(d);
  out.raw("domain_export.json", io::domain_to_json(d).dump() + "\n");
  if (d.dimension() == 2) out.raw("domain_mask.pgm", io::domain_to_pgm(d));
  out.csv("edges", io::edge_list_to_csv(d));
  if (c.check) {
    auto back = io::domain_from_json(io::domain_to_json(d));
    require_check(io::edge_list_to_csv(back) == io::edge_list_to_csv(d), "domain round trip changed the edge list");
    out.summary()["check"] = "passed";
  }
  out.finish();
}

void cmd_solve_l1(const Common& c, const std::string& values) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  auto F = load_values(d, values);
  auto sol = min_cost_flow(d, F, mode);
  Output out(c, "solve-l1");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["cost"] = sol.cost;
  s["pairing"] = pairing(sol.potential, F);
  s["lipschitz_excess"] = lipschitz_excess(d, sol.potential, mode);
  s["augmentations"] = sol.augmentations;
  const auto div = divergence(d, sol.v);
  double residual = 0.0;
  for (std::size_t i = 0; i < div.size(); ++i) residual = std::max(residual, std::abs(div[i] - F[i]));
  s["residual"] = residual;
  out.csv("flow", io::edge_field_to_csv(d, sol.v));
  out.csv("potential", io::node_function_to_csv(d, sol.potential));
  if (c.check) {
    const double gap = std::abs(s["pairing"].get<double>() - sol.cost);
    require_check(gap <= 1e-9 * std::max(1.0, sol.cost), "duality gap " + io::format_double(gap));
    require_check(s["lipschitz_excess"].get<double>() <= 1e-9, "potential is not 1-Lipschitz");
    require_check(residual <= 1e-9, "divergence residual " + io::format_double(residual));
    s["check"] = "passed";
  }
  out.finish();
}

void cmd_solve_linf(const Common& c, const std::string& values, const std::string& name) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  auto f = load_values(d, values);
  auto sol = chebyshev_solve(d, f, mode);
  Output out(c, name);
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["value"] = sol.value;
  s["flow_sup"] = sol.flow_sup;
  s["residual"] = sol.residual;
  s["iterations"] = sol.iterations;
  s["certificate"] = {{"mass", sol.cut_mass}, {"perimeter", sol.cut_perimeter}, {"ratio", sol.cut_ratio}};
  out.csv("flow", io::edge_field_to_csv(d, sol.v));
  out.csv("cut", cut_csv(d, sol.cut));
  if (c.check) {
    if (d.num_cells() <= 20) {
      const double brute = gale_hoffman_brute(d, f, mode);
      s["brute_force"] = brute;
      require_check(std::abs(brute - sol.value) <= 1e-6 * std::max(1.0, brute),
                    "subset enumeration gives " + io::format_double(brute));
    }
    require_check(sol.residual <= 1e-9, "divergence residual " + io::format_double(sol.residual));
    s["check"] = "passed";
  }
  out.finish();
}

void cmd_free_norm(const Common& c, const std::string& values) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  auto F = load_values(d, values);
  auto r = free_norm(d, F, mode);
  Output out(c, "free-norm");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["value"] = r.value;
  double net = 0.0;
  for (double x : F) net += x;
  s["net_mass_at_basepoint"] = -net;
  out.csv("potential", io::node_function_to_csv(d, r.potential));
  out.csv("flow", io::edge_field_to_csv(d, r.flow.v));
  if (c.check) {
    const double p = pairing(r.potential, F);
    require_check(std::abs(p - r.value) <= 1e-9 * std::max(1.0, r.value), "potential does not attain the norm");
    require_check(std::abs(r.potential[d.basepoint()]) <= 1e-12, "potential is nonzero at the basepoint");
    require_check(lipschitz_excess(d, r.potential, mode) <= 1e-9, "potential is not 1-Lipschitz");
    s["check"] = "passed";
  }
  out.finish();
}

void cmd_pencil(const Common& c, const std::string& a_str, const std::string& b_str) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  const Cell a = parse_cell(a_str, d.dimension()), b = parse_cell(b_str, d.dimension());
  NodeFunction F(d.num_cells(), 0.0);
  F[d.require(b)] += 1.0;
  F[d.require(a)] -= 1.0;
  auto sol = min_cost_flow(d, F, mode);
  auto p = decompose_pencil(d, sol, a, b);
  Output out(c, "pencil");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["theta"] = p.theta;
  s["paths"] = p.paths.size();
  s["nu_total"] = p.nu_total;
  s["cost"] = sol.cost;
  s["euclidean_gap"] = p.euclidean_gap;
  s["Lambda"] = p.lambda;
  s["lambda"] = p.nu_total > 0.0 ? p.euclidean_gap / p.nu_total : 0.0;
  double wsum = 0.0;
  std::ostringstream paths;
  paths << "path,weight,length,cells\n";
  for (std::size_t k = 0; k < p.paths.size(); ++k) {
    wsum += p.paths[k].weight;
    paths << k << ',' << io::format_double(p.paths[k].weight) << ',' << io::format_double(p.paths[k].length) << ',';
    for (std::size_t j = 0; j < p.paths[k].cells.size(); ++j) paths << (j ? " " : "") << p.paths[k].cells[j];
    paths << '\n';
  }
  s["weight_sum"] = wsum;
  out.csv("paths", paths.str());
  if (c.check) {
    require_check(std::abs(wsum - 1.0) <= 1e-9, "pencil weights do not sum to 1");
    require_check(std::abs(p.nu_total - sol.cost) <= 1e-9 * std::max(1.0, sol.cost), "nu_total differs from cost");
    const auto recon = pencil_flow(d, p);
    double err = 0.0;
    for (std::size_t e = 0; e < recon.size(); ++e) err = std::max(err, std::abs(recon[e] - p.acyclic_flow[e]));
    require_check(err <= 1e-9, "superposition does not reconstruct the flow");
    s["check"] = "passed";
  }
  out.finish();
}

struct WhitneyOptions {
  double tau = 0.5;
  bool shuffle = false;
  int samples = 10000;
  double slope = 4.5;
  double mollifier = 0.01;
};

void cmd_whitney(const Common& c, const WhitneyOptions& w) {
  auto d = load_domain(c);
  auto set = greedy_scattered(d, w.tau, w.shuffle ? std::optional<std::uint64_t>(c.seed) : std::nullopt);
  auto pu = partition_of_unity(set, BumpSpec{w.slope, w.mollifier});
  std::vector<Point> candidates;
  for (std::size_t i = 0; i < d.num_cells(); ++i) candidates.push_back(d.center(i));
  const auto rep = verify_cover(set, candidates);

  // Sample points inside random B_a, where the partition is defined.
  std::mt19937_64 rng(c.seed);
  std::uniform_int_distribution<std::size_t> pick(0, set.centers.size() - 1);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int m = d.dimension();
  double worst_sum = 0.0, empirical = 0.0, worst_bump_slope = 0.0;
  std::ostringstream samples;
  samples << "x,y,sum_chi,scaled_grad\n";
  for (int k = 0; k < w.samples; ++k) {
    const auto a = pick(rng);
    Point x = set.centers[a];
    Point off{0, 0, 0};
    double r2;
    do {
      r2 = 0.0;
      for (int j = 0; j < m; ++j) r2 += (off[j] = u(rng)) * off[j];
    } while (r2 >= 1.0);
    for (int j = 0; j < m; ++j) x[j] += set.middle_radius(a) * off[j];
    double sum = 0.0, g = 0.0;
    for (const auto& t : pu.evaluate(x)) {
      sum += t.chi;
      g = std::max(g, std::sqrt(t.grad[0] * t.grad[0] + t.grad[1] * t.grad[1] + t.grad[2] * t.grad[2]));
    }
    const double scaled = g * w.tau * d.distance_to_complement(x);
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    empirical = std::max(empirical, scaled);
    samples << io::format_double(x[0]) << ',' << io::format_double(x[1]) << ',' << io::format_double(sum) << ','
            << io::format_double(scaled) << '\n';
  }
  for (int k = 0; k <= 100000; ++k)
    worst_bump_slope = std::max(worst_bump_slope, std::abs(pu.bump().derivative(0.5 + 0.25 * k / 100000.0)));

  Output out(c, "whitney");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["tau"] = w.tau;
  s["centers"] = set.centers.size();
  s["inner_disjoint"] = rep.inner_disjoint;
  s["uncovered_candidates"] = rep.uncovered;
  s["neighbor_comparable"] = rep.comparable;
  s["max_overlap"] = rep.max_overlap;
  s["intersecting_pairs"] = rep.intersecting_pairs;
  s["overlap_bound"] = whitney_constant(m);
  s["samples"] = w.samples;
  s["max_partition_error"] = worst_sum;
  s["empirical_gradient_constant"] = empirical;
  s["gradient_bound"] = whitney_constant(m);
  s["max_bump_slope"] = worst_bump_slope;
  std::ostringstream cover;
  cover << "x,y,delta,inner,middle,outer\n";
  for (std::size_t k = 0; k < set.centers.size(); ++k)
    cover << io::format_double(set.centers[k][0]) << ',' << io::format_double(set.centers[k][1]) << ','
          << io::format_double(set.delta[k]) << ',' << io::format_double(set.inner_radius(k)) << ','
          << io::format_double(set.middle_radius(k)) << ',' << io::format_double(set.outer_radius(k)) << '\n';
  out.csv("cover", cover.str());
  out.csv("samples", samples.str());
  if (c.check) {
    for (std::size_t i = 0; i < set.centers.size(); ++i)
      for (std::size_t j = i + 1; j < set.centers.size(); ++j)
        require_check(scattered_pair(set.centers[i], set.delta[i], set.centers[j], set.delta[j], w.tau),
                      "scattered predicate fails for a pair");
    require_check(rep.inner_disjoint && rep.uncovered == 0 && rep.comparable, "cover properties fail");
    require_check(worst_sum <= 1e-9, "partition of unity does not sum to 1");
    require_check(empirical <= whitney_constant(m), "gradient bound exceeded");
    require_check(worst_bump_slope <= 5.0, "bump slope exceeds 5");
    s["check"] = "passed";
  }
  out.finish();
}

void cmd_cheeger(const Common& c, bool heuristic) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  auto r = cheeger_constant(d, heuristic ? CheegerMode::Heuristic : CheegerMode::Exact, mode, c.seed);
  Output out(c, "cheeger");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["value"] = r.value;
  s["exact"] = r.exact;
  s["sets_examined"] = r.sets_examined;
  out.csv("witness", cut_csv(d, r.witness));
  if (c.check && r.exact && d.num_cells() <= 8) {
    const double brute = poincare_median_quantized_brute(d, mode);
    s["quantized_brute_force"] = brute;
    require_check(std::abs(brute - r.value) <= 1e-12 * std::max(1.0, brute), "quantized oracle disagrees");
    s["check"] = "passed";
  }
  out.finish();
}

void cmd_poincare(const Common& c, double p, bool heuristic) {
  auto d = load_domain(c);
  const auto mode = parse_mode(c.mode);
  auto b = poincare_bracket(d, p, mode, heuristic ? CheegerMode::Heuristic : CheegerMode::Exact);
  Output out(c, "poincare");
  auto& s = out.summary();
  s["domain"] = domain_info(d);
  s["mode"] = c.mode;
  s["p"] = p;
  s["lower"] = b.lower;
  s["upper"] = b.upper_known ? json(b.upper) : json("unknown");
  s["cheeger"] = b.cheeger.value;
  s["cheeger_exact"] = b.cheeger.exact;
  out.finish();
}

struct WeakOptions {
  std::string function = "log";
  int m = 2;
  double q = 2.0;
  double beta = 0.0;
  double scale = 1.0;
  double radius = 1.0;
  double lo = -12.0, hi = 12.0;
  int per_decade = 20;
  std::vector<double> truncate;
  std::string values;
};

void cmd_weaklq(const Common& c, const WeakOptions& w) {
  FunctionSpec f;
  json desc;
  if (!w.values.empty()) {
    auto d = load_domain(c);
    GridFunction g;
    g.values = io::node_function_from_csv(d, io::read_text(w.values));
    g.cell_measure = d.cell_volume(parse_mode(c.mode));
    for (std::size_t i = 0; i < d.num_cells(); ++i) g.positions.push_back(d.center(i, parse_mode(c.mode)));
    f = g;
    desc = {{"backend", "grid"}, {"cells", d.num_cells()}, {"cell_measure", g.cell_measure}};
  } else {
    RadialProfile r;
    if (w.function == "power") r = radial_power(w.m, w.beta > 0.0 ? w.beta : w.m / w.q);
    else if (w.function == "indicator") r = radial_indicator(w.m, w.radius);
    else r = radial_log_example(w.m, w.q);
    if (w.scale != 1.0) r = scaled(r, w.scale);
    f = r;
    desc = {{"backend", "analytic"}, {"function", w.function}, {"dimension", w.m}, {"scale", w.scale}};
    if (w.function == "power") desc["beta"] = w.beta > 0.0 ? w.beta : w.m / w.q;
  }
  const auto grid = log_grid(w.lo, w.hi, w.per_decade);
  auto p = classify_weak(f, w.q, grid);
  Output out(c, "weaklq");
  auto& s = out.summary();
  s["function"] = desc;
  s["q"] = w.q;
  s["verdict"] = std::string(to_string(p.verdict));
  s["diagnostic"] = p.diagnostic;
  s["sup_eps"] = p.sup_eps;
  s["quasi_norm"] = p.quasi_norm;
  s["low_slope"] = p.low_slope;
  s["high_slope"] = p.high_slope;
  s["low_limit"] = p.low_limit;
  s["high_limit"] = p.high_limit;
  s["integral_estimate"] = p.integral;
  s["thresholds"] = {{"lq_slope_margin", p.thresholds.lq_slope_margin},
                     {"flat_slope", p.thresholds.flat_slope},
                     {"vanish_fraction", p.thresholds.vanish_fraction},
                     {"min_decades", p.thresholds.min_decades}};
  out.csv("eps", io::series_to_csv("y", "eps", p.levels, p.eps));
  if (!w.truncate.empty()) {
    json rows = json::array();
    for (double j : w.truncate)
      rows.push_back({{"j", j}, {"residual_quasi_norm", truncation_approximant(f, j, w.q, grid).residual_quasi_norm}});
    s["truncation"] = rows;
  }
  out.finish();
}

struct MzOptions {
  std::string measure;
  int dim = 2;
  int segment = 0;
  double r_min = 1e-3;
  std::string strategy = "atoms";
  std::vector<double> radii;
  std::vector<double> taus;
};

AtomicMeasure segment_measure(int n) {
  std::vector<Atom> atoms;
  for (int k = 0; k < n; ++k) atoms.push_back({{(k + 0.5) / n, 0.0, 0.0}, 1.0 / n});
  return AtomicMeasure(2, std::move(atoms));
}

void cmd_mz(const Common& c, const MzOptions& o) {
  AtomicMeasure mu(o.dim);
  if (o.segment > 0) mu = segment_measure(o.segment);
  else if (!o.measure.empty()) mu = io::measure_from_csv(io::read_text(o.measure), o.dim);
  else throw UsageError("mz needs --measure FILE or --segment N");
  const auto strategy = o.strategy == "exhaustive"  ? CenterStrategy::Exhaustive
                        : o.strategy == "midpoints" ? CenterStrategy::AtomsAndMidpoints
                                                    : CenterStrategy::Atoms;
  Output out(c, "mz");
  auto& s = out.summary();
  const auto st = measure_stats(mu);
  s["atoms"] = mu.size();
  s["mass"] = st.mass;
  s["total_variation"] = st.variation;
  s["balanced"] = st.balanced;
  s["r_min"] = o.r_min;
  s["strategy"] = o.strategy;
  s["mz_norm_above"] = mz_norm_above(mu, o.r_min, strategy);
  if (!o.radii.empty()) {
    auto prof = upper_regularity_profile(mu, o.radii);
    s["profile_slope"] = prof.slope;
    s["vanishing"] = prof.vanishing;
    out.csv("profile", io::series_to_csv("r", "ratio", prof.radii, prof.ratios));
  }
  if (!o.taus.empty()) {
    auto d = load_domain(c);
    std::vector<double> values;
    for (double t : o.taus) values.push_back(eta(mu, d, t));
    out.csv("eta", io::series_to_csv("tau", "eta", o.taus, values));
  }
  out.finish();
}

struct KochOptions {
  std::vector<double> angles;
  double theta0 = 0.0;
  double exponent = 1.0;
  int level = 5;
  std::string a = "0,0", b = "1,0";
  double r_min = 0.0;
};

void cmd_koch(const Common& c, const KochOptions& o) {
  KochSpec spec;
  spec.level = o.level;
  spec.a = parse_point(o.a);
  spec.b = parse_point(o.b);
  if (!o.angles.empty()) spec.angles = o.angles;
  else if (o.theta0 > 0.0)
    for (int j = 1; j <= std::max(o.level, 4); ++j) spec.angles.push_back(o.theta0 * std::pow(j, -o.exponent));
  else
    spec.angles.assign(std::max(o.level, 4), std::numbers::pi / 3.0);
  auto k = koch_curve(spec);
  Output out(c, "koch");
  auto& s = out.summary();
  s["level"] = o.level;
  s["angles"] = spec.angles;
  s["length"] = k.length;
  s["length_factor"] = k.length_factor;
  s["fitted_decay"] = k.fitted_decay;
  s["finite_length"] = k.finite_length;
  s["atoms"] = k.measure.size();
  if (o.r_min > 0.0) s["mz_norm_above"] = mz_norm_above(k.measure, o.r_min);
  std::ostringstream v;
  v << "x,y\n";
  for (const auto& p : k.vertices) v << io::format_double(p[0]) << ',' << io::format_double(p[1]) << '\n';
  out.csv("vertices", v.str());
  out.csv("measure", io::measure_to_csv(k.measure));
  out.finish();
}

GridDomain rooms_and_corridor(int room, int k) {
  std::vector<Cell> mask;
  for (int i = 0; i < room; ++i)
    for (int j = 0; j < room; ++j) {
      mask.push_back({i, j, 0});
      mask.push_back({i + room + k, j, 0});
    }
  for (int t = 0; t < k; ++t) mask.push_back({room + t, room / 2, 0});
  return GridDomain(2, std::move(mask), 1.0, Connectivity::Axis, {0, 0, 0});
}

void cmd_nikodym(const Common& c, int room, int kmax, double p) {
  if (room < 1 || kmax < 1) throw UsageError("--room and --kmax must be positive");
  const auto mode = parse_mode(c.mode);
  auto rows = parallel_map<PoincareBracket>(static_cast<std::size_t>(kmax), c.threads, [&](std::size_t i) {
    auto d = rooms_and_corridor(room, static_cast<int>(i) + 1);
    const auto cm = d.num_cells() <= 20 ? CheegerMode::Exact : CheegerMode::Heuristic;
    return poincare_bracket(d, p, mode, cm);
  });
  Output out(c, "nikodym");
  auto& s = out.summary();
  s["room"] = room;
  s["p"] = p;
  std::ostringstream table;
  table << "k,cells,lower,upper,exact\n";
  bool monotone = true;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const int k = static_cast<int>(i) + 1;
    if (i > 0 && !(rows[i].lower > rows[i - 1].lower)) monotone = false;
    table << k << ',' << 2 * room * room + k << ',' << io::format_double(rows[i].lower) << ','
          << (rows[i].upper_known ? io::format_double(rows[i].upper) : "unknown") << ','
          << (rows[i].cheeger.exact ? 1 : 0) << '\n';
  }
  s["lower_strictly_increasing"] = monotone;
  out.csv("table", table.str());
  out.finish();
}

void cmd_refine(const Common& c, std::vector<int> sizes) {
  if (sizes.empty()) sizes = {4, 8, 16, 32};
  const auto conn = c.connectivity.empty() ? Connectivity::Full : io::parse_connectivity(c.connectivity);
  struct Row {
    double h = 0, free = 0, sch = 0;
  };
  // Continuum instance on the unit square: dipole between (0.2, 0.3) and
  // (0.8, 0.7) for the transport norm, f = +1 / -1 on the left / right half
  // for the Chebyshev norm.
  auto rows = parallel_map<Row>(sizes.size(), c.threads, [&](std::size_t i) {
    const int n = sizes[i];
    if (n < 2 || n % 2) throw UsageError("--sizes must be even and at least 2");
    const double h = 1.0 / n;
    auto d = rectangle_domain(n, n, h, conn);
    NodeFunction F(d.num_cells(), 0.0);
    F[d.require(d.locate({0.8, 0.7, 0}))] += 1.0;
    F[d.require(d.locate({0.2, 0.3, 0}))] -= 1.0;
    NodeFunction f(d.num_cells());
    for (std::size_t k = 0; k < d.num_cells(); ++k) f[k] = d.cell(k)[0] < n / 2 ? 1.0 : -1.0;
    return Row{h, free_norm(d, F, Mode::Mesh).value, sch_norm(d, f, Mode::Mesh).value};
  });
  Output out(c, "refine");
  std::ostringstream table;
  table << "n,h,free_norm,sch_norm\n";
  for (std::size_t i = 0; i < rows.size(); ++i)
    table << sizes[i] << ',' << io::format_double(rows[i].h) << ',' << io::format_double(rows[i].free) << ','
          << io::format_double(rows[i].sch) << '\n';
  out.summary()["connectivity"] = io::connectivity_name(conn, 2);
  out.summary()["continuum_dipole_distance"] = std::hypot(0.6, 0.4);
  out.csv("table", table.str());
  out.finish();
}

void add_common(CLI::App* sub, Common& c, bool needs_domain = true) {
  if (needs_domain) {
    sub->add_option("--domain", c.domain_path, "Domain file (.json, .pgm, .pbm)");
    sub->add_option("--rect", c.rect, "Rectangle NXxNY instead of a file");
    sub->add_option("--cell-size", c.h, "Cell size for --rect and image masks")->check(CLI::PositiveNumber);
  }
  sub->add_option("--connectivity", c.connectivity, "4/8 (2D), 6/26 (3D), axis or full");
  sub->add_option("--mode", c.mode, "graph or mesh")->check(CLI::IsMember({"graph", "mesh"}));
  sub->add_option("--seed", c.seed, "Seed for every randomised choice");
  sub->add_flag("--check", c.check, "Rerun brute-force oracles and fail on disagreement");
  sub->add_option("--out", c.out, "Output directory (default $DIVFLOW_OUT or .)");
  sub->add_option("--threads", c.threads, "Worker threads for sweeps (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"divflow: divergence equations, transport and Chebyshev norms on grid domains"};
  app.require_subcommand(1);
  Common c;
  std::function<void()> run;
  std::string values, a_cell, b_cell;

  auto* dom = app.add_subcommand("domain", "Build a domain, report it and export JSON/PGM/edge list");
  add_common(dom, c);
  dom->callback([&] { run = [&] { cmd_domain(c); }; });

  auto* l1 = app.add_subcommand("solve-l1", "Minimum-cost flow div v = F");
  add_common(l1, c);
  l1->add_option("--values", values, "Node CSV (i,j,value)")->required();
  l1->callback([&] { run = [&] { cmd_solve_l1(c, values); }; });

  auto* linf = app.add_subcommand("solve-linf", "Minimal sup-norm flow div v = f");
  add_common(linf, c);
  linf->add_option("--values", values, "Node CSV (i,j,value)")->required();
  linf->callback([&] { run = [&] { cmd_solve_linf(c, values, "solve-linf"); }; });

  auto* fn = app.add_subcommand("free-norm", "Transport norm with the basepoint absorbing net mass");
  add_common(fn, c);
  fn->add_option("--values", values, "Node CSV (i,j,value)")->required();
  fn->callback([&] { run = [&] { cmd_free_norm(c, values); }; });

  auto* sn = app.add_subcommand("sch-norm", "Dual norm of BV, as the Chebyshev optimum");
  add_common(sn, c);
  sn->add_option("--values", values, "Node CSV (i,j,value)")->required();
  sn->callback([&] { run = [&] { cmd_solve_linf(c, values, "sch-norm"); }; });

  auto* pe = app.add_subcommand("pencil", "Path decomposition of the optimal unit flow from a to b");
  add_common(pe, c);
  pe->add_option("--a", a_cell, "Cell i,j")->required();
  pe->add_option("--b", b_cell, "Cell i,j")->required();
  pe->callback([&] { run = [&] { cmd_pencil(c, a_cell, b_cell); }; });

  WhitneyOptions wo;
  auto* wh = app.add_subcommand("whitney", "Scattered set, ball system and partition of unity");
  add_common(wh, c);
  wh->add_option("--tau", wo.tau, "Scale in (0, 1]");
  wh->add_flag("--shuffle", wo.shuffle, "Scan candidates in a seeded random order");
  wh->add_option("--samples", wo.samples, "Sample points for the partition checks")->check(CLI::NonNegativeNumber);
  wh->add_option("--bump-slope", wo.slope, "Ramp slope of the bump");
  wh->add_option("--mollifier", wo.mollifier, "Mollifier width of the bump");
  wh->callback([&] { run = [&] { cmd_whitney(c, wo); }; });

  bool heuristic = false;
  auto* ch = app.add_subcommand("cheeger", "Isoperimetric constant max min(|S|,|S^c|)/Per(S)");
  add_common(ch, c);
  ch->add_flag("--heuristic", heuristic, "Level-set sweep instead of exact enumeration");
  ch->callback([&] { run = [&] { cmd_cheeger(c, heuristic); }; });

  double p = 1.0;
  auto* po = app.add_subcommand("poincare", "Bracket for the (p,1)-Poincare constant");
  add_common(po, c);
  po->add_option("--p", p, "Exponent in [1, m/(m-1)]");
  po->add_flag("--heuristic", heuristic, "Heuristic Cheeger search for large domains");
  po->callback([&] { run = [&] { cmd_poincare(c, p, heuristic); }; });

  WeakOptions we;
  auto* wl = app.add_subcommand("weaklq", "Weak-L^q profile eps(y) = d(f,y) y^q and verdict");
  add_common(wl, c);
  wl->add_option("--function", we.function, "Analytic profile")->check(CLI::IsMember({"log", "power", "indicator"}));
  wl->add_option("--m", we.m, "Dimension")->check(CLI::Range(1, 3));
  wl->add_option("--q", we.q, "Exponent q > 1");
  wl->add_option("--beta", we.beta, "Power exponent (default m/q)");
  wl->add_option("--scale", we.scale, "Multiply the profile by this constant");
  wl->add_option("--radius", we.radius, "Indicator radius");
  wl->add_option("--lo", we.lo, "log10 of the smallest level");
  wl->add_option("--hi", we.hi, "log10 of the largest level");
  wl->add_option("--per-decade", we.per_decade, "Levels per decade")->check(CLI::PositiveNumber);
  wl->add_option("--truncate", we.truncate, "Truncation levels j (comma separated)")->delimiter(',');
  wl->add_option("--values", we.values, "Grid backend: node CSV on --domain/--rect");
  wl->callback([&] { run = [&] { cmd_weaklq(c, we); }; });

  MzOptions mo;
  auto* mz = app.add_subcommand("mz", "sup |mu|(B(x,r))/r^(m-1) over r >= r_min, profiles and eta");
  add_common(mz, c);
  mz->add_option("--measure", mo.measure, "Measure CSV (x,y,weight)");
  mz->add_option("--dim", mo.dim, "Dimension of the measure CSV")->check(CLI::Range(1, 3));
  mz->add_option("--segment", mo.segment, "Use N equal atoms on the unit segment instead");
  mz->add_option("--rmin", mo.r_min, "Smallest radius")->check(CLI::PositiveNumber);
  mz->add_option("--strategy", mo.strategy, "Ball centres")->check(CLI::IsMember({"atoms", "midpoints", "exhaustive"}));
  mz->add_option("--radii", mo.radii, "Profile radii (comma separated, increasing)")->delimiter(',');
  mz->add_option("--tau", mo.taus, "eta scales on --domain/--rect (comma separated)")->delimiter(',');
  mz->callback([&] { run = [&] { cmd_mz(c, mo); }; });

  KochOptions ko;
  auto* kc = app.add_subcommand("koch", "Koch curve with variable angles and its segment measure");
  add_common(kc, c, false);
  kc->add_option("--angles", ko.angles, "theta_j per level (comma separated, radians)")->delimiter(',');
  kc->add_option("--theta0", ko.theta0, "Angle law theta_j = theta0 * j^-exponent");
  kc->add_option("--exponent", ko.exponent, "Decay exponent of the angle law");
  kc->add_option("--level", ko.level, "Refinement level")->check(CLI::NonNegativeNumber);
  kc->add_option("--a", ko.a, "Start point x,y");
  kc->add_option("--b", ko.b, "End point x,y");
  kc->add_option("--rmin", ko.r_min, "Also report the MZ ratio above this radius");
  kc->callback([&] { run = [&] { cmd_koch(c, ko); }; });

  auto* ex = app.add_subcommand("experiment", "Parameter sweeps");
  ex->require_subcommand(1);
  int room = 3, kmax = 12;
  auto* nk = ex->add_subcommand("nikodym", "Rooms joined by a corridor: Poincare lower bound vs length");
  add_common(nk, c, false);
  nk->add_option("--room", room, "Room side length");
  nk->add_option("--kmax", kmax, "Longest corridor");
  nk->add_option("--p", p, "Exponent");
  nk->callback([&] { run = [&] { cmd_nikodym(c, room, kmax, p); }; });
  std::vector<int> sizes;
  auto* rf = ex->add_subcommand("refine", "h-refinement of the transport and Chebyshev norms on the unit square");
  add_common(rf, c, false);
  rf->add_option("--sizes", sizes, "Grid sizes n (comma separated, even)")->delimiter(',');
  rf->callback([&] { run = [&] { cmd_refine(c, sizes); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }
  try {
    if (run) run();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const CheckFailed& e) {
    std::cerr << "error: CheckFailed: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: Internal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
