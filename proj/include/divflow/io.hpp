#pragma once

// File formats: domain JSON, PGM/PBM masks, and CSV for node functions, edge
// fields, atomic measures and plot series.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "divflow/core.hpp"
#include "divflow/measures.hpp"

namespace divflow::io {

using nlohmann::json;

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double x) {
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  if (std::isnan(x)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + path);
  out << text;
}

inline Connectivity parse_connectivity(const std::string& s) {
  if (s == "4" || s == "6" || s == "axis") return Connectivity::Axis;
  if (s == "8" || s == "26" || s == "full") return Connectivity::Full;
  throw Error(ErrorCode::ParseError, "unknown connectivity '" + s + "'");
}

inline std::string connectivity_name(Connectivity c, int dim) {
  if (dim == 3) return c == Connectivity::Axis ? "6" : "26";
  if (dim == 1) return "2";
  return c == Connectivity::Axis ? "4" : "8";
}

// ---------------------------------------------------------------------------
// Domain JSON: {"cells": [[i, j], ...], "h": 1, "connectivity": "8",
// "basepoint": [i, j]}; "dimension" is optional and inferred from the cells.

inline Cell cell_from_json(const json& j, int dim) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim)
    throw Error(ErrorCode::ParseError, "cell must be an array of " + std::to_string(dim) + " integers");
  Cell c{0, 0, 0};
  for (int k = 0; k < dim; ++k) c[k] = j[k].get<int>();
  return c;
}

inline json cell_to_json(const Cell& c, int dim) {
  json j = json::array();
  for (int k = 0; k < dim; ++k) j.push_back(c[k]);
  return j;
}

inline GridDomain domain_from_json(const json& j) {
  try {
    const auto& cells = j.at("cells");
    if (!cells.is_array() || cells.empty()) throw Error(ErrorCode::EmptyMask, "domain has no cells");
    const int dim = j.contains("dimension") ? j["dimension"].get<int>() : static_cast<int>(cells[0].size());
    if (dim < 1 || dim > 3) throw Error(ErrorCode::BadDimension, "dimension must be 1, 2 or 3");
    std::vector<Cell> mask;
    for (const auto& c : cells) mask.push_back(cell_from_json(c, dim));
    const double h = j.value("h", 1.0);
    Connectivity conn = Connectivity::Full;
    if (j.contains("connectivity")) {
      const auto& cj = j["connectivity"];
      conn = parse_connectivity(cj.is_string() ? cj.get<std::string>() : std::to_string(cj.get<int>()));
    }
    Cell bp = j.contains("basepoint") ? cell_from_json(j["basepoint"], dim) : *std::min_element(mask.begin(), mask.end());
    return GridDomain(dim, std::move(mask), h, conn, bp);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

inline json domain_to_json(const GridDomain& d) {
  json j;
  j["dimension"] = d.dimension();
  j["h"] = d.cell_size();
  j["connectivity"] = connectivity_name(d.connectivity(), d.dimension());
  j["basepoint"] = cell_to_json(d.cell(d.basepoint()), d.dimension());
  json cells = json::array();
  for (const auto& c : d.cells()) cells.push_back(cell_to_json(c, d.dimension()));
  j["cells"] = std::move(cells);
  return j;
}

inline GridDomain read_domain_json(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
  return domain_from_json(j);
}

// ---------------------------------------------------------------------------
// PGM/PBM masks. Pixel (row r, column c) of an image with H rows maps to cell
// (c, H - 1 - r) so that the picture reads upright.

namespace detail {

inline std::string next_token(std::istream& in) {
  std::string tok;
  while (in >> tok) {
    if (tok[0] != '#') return tok;
    std::string rest;
    std::getline(in, rest);
  }
  throw Error(ErrorCode::ParseError, "truncated image header");
}

}  // namespace detail

struct Mask {
  int width = 0;
  int height = 0;
  std::vector<Cell> cells;
};

inline Mask parse_pnm(const std::string& data) {
  std::istringstream in(data);
  const auto magic = detail::next_token(in);
  if (magic != "P1" && magic != "P2" && magic != "P4" && magic != "P5")
    throw Error(ErrorCode::ParseError, "unsupported image type " + magic);
  Mask m;
  try {
    m.width = std::stoi(detail::next_token(in));
    m.height = std::stoi(detail::next_token(in));
  } catch (const std::logic_error&) {
    throw Error(ErrorCode::ParseError, "bad image size");
  }
  if (m.width <= 0 || m.height <= 0) throw Error(ErrorCode::ParseError, "bad image size");
  const bool bitmap = magic == "P1" || magic == "P4";
  int maxval = 1;
  if (!bitmap) maxval = std::stoi(detail::next_token(in));
  std::vector<int> px(static_cast<std::size_t>(m.width) * m.height, 0);
  if (magic == "P1" || magic == "P2") {
    for (auto& v : px) {
      if (magic == "P1") {
        char ch;
        do {
          if (!in.get(ch)) throw Error(ErrorCode::ParseError, "truncated pixel data");
          if (ch == '#') {
            std::string rest;
            std::getline(in, rest);
          }
        } while (ch != '0' && ch != '1');
        v = ch - '0';
      } else {
        v = std::stoi(detail::next_token(in));
      }
    }
  } else {
    in.get();  // single whitespace after the header
    if (magic == "P4") {
      const int stride = (m.width + 7) / 8;
      for (int r = 0; r < m.height; ++r) {
        for (int b = 0; b < stride; ++b) {
          char byte;
          if (!in.get(byte)) throw Error(ErrorCode::ParseError, "truncated pixel data");
          for (int bit = 0; bit < 8 && b * 8 + bit < m.width; ++bit)
            px[r * m.width + b * 8 + bit] = (static_cast<unsigned char>(byte) >> (7 - bit)) & 1;
        }
      }
    } else {
      const int bytes = maxval > 255 ? 2 : 1;
      for (auto& v : px) {
        int value = 0;
        for (int k = 0; k < bytes; ++k) {
          char byte;
          if (!in.get(byte)) throw Error(ErrorCode::ParseError, "truncated pixel data");
          value = value * 256 + static_cast<unsigned char>(byte);
        }
        v = value;
      }
    }
  }
  for (int r = 0; r < m.height; ++r)
    for (int c = 0; c < m.width; ++c)
      if (px[r * m.width + c] != 0) m.cells.push_back({c, m.height - 1 - r, 0});
  return m;
}

inline GridDomain read_domain_pnm(const std::string& path, double h, Connectivity conn) {
  auto m = parse_pnm(read_text(path));
  if (m.cells.empty()) throw Error(ErrorCode::EmptyMask, path + " has no inside pixels");
  const Cell bp = *std::min_element(m.cells.begin(), m.cells.end());
  return GridDomain(2, std::move(m.cells), h, conn, bp);
}

/// ASCII PGM of a 2D domain's bounding box, inside = 255.
inline std::string domain_to_pgm(const GridDomain& d) {
  if (d.dimension() != 2) throw Error(ErrorCode::BadDimension, "PGM export needs a 2D domain");
  int x0 = d.cells().front()[0], x1 = x0, y0 = d.cells().front()[1], y1 = y0;
  for (const auto& c : d.cells()) {
    x0 = std::min(x0, c[0]);
    x1 = std::max(x1, c[0]);
    y0 = std::min(y0, c[1]);
    y1 = std::max(y1, c[1]);
  }
  std::ostringstream out;
  out << "P2\n" << (x1 - x0 + 1) << ' ' << (y1 - y0 + 1) << "\n255\n";
  for (int y = y1; y >= y0; --y) {
    for (int x = x0; x <= x1; ++x) out << (x > x0 ? " " : "") << (d.contains({x, y, 0}) ? 255 : 0);
    out << '\n';
  }
  return out.str();
}

inline GridDomain read_domain(const std::string& path, double h = 1.0, Connectivity conn = Connectivity::Full) {
  const auto dot = path.rfind('.');
  const auto ext = dot == std::string::npos ? std::string() : path.substr(dot);
  if (ext == ".pgm" || ext == ".pbm" || ext == ".pnm") return read_domain_pnm(path, h, conn);
  return read_domain_json(path);
}

// ---------------------------------------------------------------------------
// CSV

inline std::vector<std::vector<std::string>> parse_csv(const std::string& text, std::string* header = nullptr) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, ',')) {
      const auto a = field.find_first_not_of(" \t"), b = field.find_last_not_of(" \t");
      fields.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
    }
    if (first) {
      first = false;
      char* end = nullptr;
      std::strtod(fields.empty() ? "" : fields[0].c_str(), &end);
      if (fields.empty() || end == fields[0].c_str()) {
        if (header) *header = line;
        continue;
      }
    }
    rows.push_back(std::move(fields));
  }
  return rows;
}

inline double parse_number(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') throw Error(ErrorCode::ParseError, "not a number: '" + s + "'");
  return v;
}

inline int parse_int(const std::string& s) {
  const double v = parse_number(s);
  if (v != std::floor(v)) throw Error(ErrorCode::ParseError, "not an integer: '" + s + "'");
  return static_cast<int>(v);
}

/// Rows i,j[,k],value. Cells missing from the file are zero.
inline NodeFunction node_function_from_csv(const GridDomain& d, const std::string& text) {
  NodeFunction u(d.num_cells(), 0.0);
  const int dim = d.dimension();
  for (const auto& row : parse_csv(text)) {
    if (static_cast<int>(row.size()) != dim + 1)
      throw Error(ErrorCode::ShapeMismatch, "node CSV rows need " + std::to_string(dim + 1) + " columns");
    Cell c{0, 0, 0};
    for (int k = 0; k < dim; ++k) c[k] = parse_int(row[k]);
    u[d.require(c)] += parse_number(row[dim]);
  }
  return u;
}

inline std::string node_function_to_csv(const GridDomain& d, std::span<const double> u) {
  check_node_shape(d, u);
  static const char* names[] = {"i", "j", "k"};
  std::ostringstream out;
  for (int k = 0; k < d.dimension(); ++k) out << names[k] << ',';
  out << "value\n";
  for (std::size_t i = 0; i < d.num_cells(); ++i) {
    for (int k = 0; k < d.dimension(); ++k) out << d.cell(i)[k] << ',';
    out << format_double(u[i]) << '\n';
  }
  return out.str();
}

/// Rows tail,head,value with cell indices into the sorted cell list.
inline std::string edge_field_to_csv(const GridDomain& d, std::span<const double> v) {
  check_edge_shape(d, v);
  std::ostringstream out;
  out << "tail,head,value\n";
  for (std::size_t e = 0; e < d.num_edges(); ++e)
    out << d.edges()[e].tail << ',' << d.edges()[e].head << ',' << format_double(v[e]) << '\n';
  return out.str();
}

inline EdgeField edge_field_from_csv(const GridDomain& d, const std::string& text) {
  EdgeField v(d.num_edges(), 0.0);
  for (const auto& row : parse_csv(text)) {
    if (row.size() != 3) throw Error(ErrorCode::ShapeMismatch, "edge CSV rows need 3 columns");
    const auto t = static_cast<std::size_t>(parse_int(row[0])), h = static_cast<std::size_t>(parse_int(row[1]));
    const double val = parse_number(row[2]);
    bool found = false;
    if (t < d.num_cells()) {
      for (auto [j, e] : d.neighbors(std::min(t, h))) {
        if (j != std::max(t, h)) continue;
        v[e] += t < h ? val : -val;
        found = true;
      }
    }
    if (!found) throw Error(ErrorCode::ShapeMismatch, "no edge between cells " + row[0] + " and " + row[1]);
  }
  return v;
}

inline std::string edge_list_to_csv(const GridDomain& d) {
  std::ostringstream out;
  out << "tail,head,length\n";
  for (const auto& e : d.edges()) out << e.tail << ',' << e.head << ',' << format_double(e.unit_length) << '\n';
  return out.str();
}

/// Rows x,y[,z],weight.
inline AtomicMeasure measure_from_csv(const std::string& text, int dim) {
  std::vector<Atom> atoms;
  for (const auto& row : parse_csv(text)) {
    if (static_cast<int>(row.size()) != dim + 1)
      throw Error(ErrorCode::ShapeMismatch, "measure CSV rows need " + std::to_string(dim + 1) + " columns");
    Point p{0, 0, 0};
    for (int k = 0; k < dim; ++k) p[k] = parse_number(row[k]);
    atoms.push_back({p, parse_number(row[dim])});
  }
  return AtomicMeasure(dim, std::move(atoms));
}

inline std::string measure_to_csv(const AtomicMeasure& mu) {
  static const char* names[] = {"x", "y", "z"};
  std::ostringstream out;
  for (int k = 0; k < mu.dimension(); ++k) out << names[k] << ',';
  out << "weight\n";
  for (const auto& a : mu.atoms()) {
    for (int k = 0; k < mu.dimension(); ++k) out << format_double(a.x[k]) << ',';
    out << format_double(a.weight) << '\n';
  }
  return out.str();
}

inline json measure_to_json(const AtomicMeasure& mu) {
  json atoms = json::array();
  for (const auto& a : mu.atoms()) {
    json x = json::array();
    for (int k = 0; k < mu.dimension(); ++k) x.push_back(a.x[k]);
    atoms.push_back({{"x", x}, {"weight", a.weight}});
  }
  return {{"dimension", mu.dimension()}, {"atoms", atoms}};
}

/// Two-column series with a header.
inline std::string series_to_csv(const std::string& xname, const std::string& yname, std::span<const double> x,
                                 std::span<const double> y) {
  std::ostringstream out;
  out << xname << ',' << yname << '\n';
  for (std::size_t k = 0; k < x.size() && k < y.size(); ++k)
    out << format_double(x[k]) << ',' << format_double(y[k]) << '\n';
  return out.str();
}

}  // namespace divflow::io
