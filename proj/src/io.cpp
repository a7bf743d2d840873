#include "resaple/io.hpp"

#include "resaple/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace resaple {

using nlohmann::json;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

bool parse_number(const std::string& s, double& out) {
  if (s.empty()) return false;
  std::size_t pos = 0;
  try {
    out = std::stod(s, &pos);
  } catch (const std::exception&) {
    return false;
  }
  return pos == s.size() && std::isfinite(out);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  return j.contains(key) ? j.at(key).get<T>() : fallback;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

AdjacencyGraph graph_from_json(const json& g, const std::filesystem::path& base) {
  const bool undirected = get_or(g, "undirected", true);
  std::optional<std::vector<Point>> coords;
  if (g.contains("coords")) {
    std::vector<Point> pts;
    for (const auto& c : g.at("coords")) pts.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
    coords = std::move(pts);
  } else if (g.contains("coords_csv")) {
    coords = read_coords_csv(resolve(base, g.at("coords_csv").get<std::string>()));
  }
  std::optional<int> n;
  if (g.contains("n")) n = g.at("n").get<int>();
  if (g.contains("edges_csv")) {
    return read_edge_csv(resolve(base, g.at("edges_csv").get<std::string>()), undirected, n,
                         std::move(coords));
  }
  std::vector<Edge> edges;
  int max_index = -1;
  for (const auto& e : g.at("edges")) {
    const int i = e.at(0).get<int>();
    const int j = e.at(1).get<int>();
    const double w = e.size() > 2 ? e.at(2).get<double>() : 1.0;
    edges.push_back({i, j, w});
    if (undirected) edges.push_back({j, i, w});
    max_index = std::max({max_index, i, j});
  }
  return AdjacencyGraph(n.value_or(max_index + 1), std::move(edges), std::move(coords));
}

}  // namespace

std::string weights_to_json(const WeightMatrix& w) {
  json edges = json::array();
  const Eigen::MatrixXd& m = w.matrix();
  for (int i = 0; i < w.n(); ++i) {
    for (int j = 0; j < w.n(); ++j) {
      if (m(i, j) != 0.0) edges.push_back(json::array({i, j, m(i, j)}));
    }
  }
  json doc;
  doc["n"] = w.n();
  doc["normalization"] = to_string(w.normalization());
  doc["edges"] = std::move(edges);
  return doc.dump() + "\n";
}

WeightMatrix weights_from_json(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
    const int n = doc.at("n").get<int>();
    if (n < 2) throw Error(ErrorKind::invalid_dimension, "weights file: n must be at least 2");
    Eigen::MatrixXd m = Eigen::MatrixXd::Zero(n, n);
    for (const auto& e : doc.at("edges")) {
      const int i = e.at(0).get<int>();
      const int j = e.at(1).get<int>();
      if (i < 0 || j < 0 || i >= n || j >= n) {
        throw Error(ErrorKind::invalid_dimension, "weights file: index out of range");
      }
      m(i, j) = e.at(2).get<double>();
    }
    for (int i = 0; i < n; ++i) {
      if (m.row(i).cwiseAbs().sum() == 0.0) {
        throw Error(ErrorKind::isolated_unit, "weights file: unit " + std::to_string(i) +
                                                  " has no neighbours");
      }
    }
    return WeightMatrix(std::move(m), parse_normalization(doc.at("normalization").get<std::string>()));
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::io, std::string("weights file: ") + ex.what());
  }
}

WeightMatrix load_weights(const std::filesystem::path& path) {
  try {
    return weights_from_json(read_text(path));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::io, "write failed for " + path.string());
}

CsvTable CsvTable::parse(const std::string& text, const std::string& source) {
  CsvTable t;
  t.source_ = source;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line);
    if (t.header_.empty()) {
      t.header_ = std::move(fields);
      continue;
    }
    if (fields.size() != t.header_.size()) {
      throw Error(ErrorKind::io, source + ":" + std::to_string(line_no) + ": expected " +
                                     std::to_string(t.header_.size()) + " fields, found " +
                                     std::to_string(fields.size()));
    }
    t.cells_.push_back(std::move(fields));
  }
  if (t.header_.empty()) throw Error(ErrorKind::io, source + ": empty file");
  return t;
}

CsvTable CsvTable::load(const std::filesystem::path& path) {
  return parse(read_text(path), path.string());
}

bool CsvTable::has_column(const std::string& name) const {
  return std::find(header_.begin(), header_.end(), name) != header_.end();
}

std::size_t CsvTable::column_index(const std::string& name) const {
  const auto it = std::find(header_.begin(), header_.end(), name);
  if (it == header_.end()) throw Error(ErrorKind::io, source_ + ": no column '" + name + "'");
  return static_cast<std::size_t>(it - header_.begin());
}

std::vector<double> CsvTable::numeric(const std::string& name) const {
  const std::size_t c = column_index(name);
  std::vector<double> out(cells_.size());
  for (std::size_t r = 0; r < cells_.size(); ++r) {
    if (!parse_number(cells_[r][c], out[r])) {
      throw Error(ErrorKind::io, source_ + ": missing or non-numeric value in column '" + name +
                                     "' at data row " + std::to_string(r + 1));
    }
  }
  return out;
}

std::vector<std::string> CsvTable::strings(const std::string& name) const {
  const std::size_t c = column_index(name);
  std::vector<std::string> out;
  out.reserve(cells_.size());
  for (const auto& row : cells_) out.push_back(row[c]);
  return out;
}

AdjacencyGraph read_edge_csv(const std::filesystem::path& path, bool undirected,
                             std::optional<int> n, std::optional<std::vector<Point>> coords) {
  const CsvTable t = CsvTable::load(path);
  const std::vector<double> is = t.numeric("i");
  const std::vector<double> js = t.numeric("j");
  std::vector<double> ws(is.size(), 1.0);
  if (t.has_column("w")) ws = t.numeric("w");
  std::vector<Edge> edges;
  int max_index = -1;
  for (std::size_t k = 0; k < is.size(); ++k) {
    if (is[k] != std::floor(is[k]) || js[k] != std::floor(js[k])) {
      throw Error(ErrorKind::io, path.string() + ": non-integer index at data row " +
                                     std::to_string(k + 1));
    }
    const int i = static_cast<int>(is[k]);
    const int j = static_cast<int>(js[k]);
    edges.push_back({i, j, ws[k]});
    if (undirected) edges.push_back({j, i, ws[k]});
    max_index = std::max({max_index, i, j});
  }
  if (coords && !n) n = static_cast<int>(coords->size());
  return AdjacencyGraph(n.value_or(max_index + 1), std::move(edges), std::move(coords));
}

std::vector<Point> read_coords_csv(const std::filesystem::path& path, const std::string& x_col,
                                   const std::string& y_col) {
  const CsvTable t = CsvTable::load(path);
  const std::vector<double> xs = t.numeric(x_col);
  const std::vector<double> ys = t.numeric(y_col);
  std::vector<Point> out(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) out[i] = {xs[i], ys[i]};
  return out;
}

SimDesign design_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  static const std::set<std::string> known = {
      "study",   "topology",     "lattice_sizes", "graph",       "p",           "rho_grid",
      "sigma",   "replicates",   "full_scale",    "seed_streams", "weights",    "dgp_weights",
      "alpha",   "permutations", "scheme",        "side",        "methods",     "include_reml",
      "threads", "description"};
  SimDesign d;
  try {
    const json doc = json::parse(text);
    for (const auto& [key, value] : doc.items()) {
      if (!known.count(key)) throw Error(ErrorKind::io, "design: unknown key '" + key + "'");
    }
    const std::string study = get_or<std::string>(doc, "study", "estimation");
    if (study == "estimation") {
      d.study = StudyKind::estimation;
    } else if (study == "power") {
      d.study = StudyKind::power;
    } else {
      throw Error(ErrorKind::io, "design: study must be 'estimation' or 'power'");
    }
    d.topology = parse_topology(get_or<std::string>(doc, "topology", "lattice_queen"));
    if (doc.contains("lattice_sizes")) d.lattice_sizes = doc.at("lattice_sizes").get<std::vector<int>>();
    if (doc.contains("graph")) d.graph = graph_from_json(doc.at("graph"), base_dir);
    if (doc.contains("p")) d.p_values = doc.at("p").get<std::vector<int>>();
    if (doc.contains("rho_grid")) {
      const json& g = doc.at("rho_grid");
      if (g.is_array()) {
        d.rho_grid = g.get<std::vector<double>>();
      } else {
        const double from = g.at("from").get<double>();
        const double to = g.at("to").get<double>();
        const double step = g.at("step").get<double>();
        if (!(step > 0.0)) throw Error(ErrorKind::io, "design: rho_grid step must be positive");
        d.rho_grid.clear();
        const int count = static_cast<int>(std::floor((to - from) / step + 1e-9)) + 1;
        for (int i = 0; i < count; ++i) d.rho_grid.push_back(from + step * i);
      }
    }
    d.sigma = get_or(doc, "sigma", d.sigma);
    d.replicates = get_or(doc, "replicates", d.replicates);
    if (get_or(doc, "full_scale", false)) d.replicates = 2000;
    d.seed_streams = get_or(doc, "seed_streams", d.seed_streams);
    if (doc.contains("weights")) d.weights = doc.at("weights").get<std::vector<std::string>>();
    if (doc.contains("dgp_weights")) d.dgp_weights = doc.at("dgp_weights").get<std::string>();
    d.alpha = get_or(doc, "alpha", d.alpha);
    d.permutations = get_or(doc, "permutations", d.permutations);
    if (doc.contains("scheme")) d.scheme = parse_scheme(doc.at("scheme").get<std::string>());
    if (doc.contains("side")) d.side = parse_side(doc.at("side").get<std::string>());
    if (doc.contains("methods")) {
      const auto names = doc.at("methods").get<std::vector<std::string>>();
      if (d.study == StudyKind::estimation) {
        d.estimators.clear();
        for (const auto& m : names) d.estimators.push_back(parse_estimator(m));
      } else {
        d.power_methods.clear();
        for (const auto& m : names) d.power_methods.push_back(parse_power_method(m));
      }
    }
    if (!get_or(doc, "include_reml", true)) {
      std::erase(d.estimators, Estimator::reml);
    }
    d.threads = get_or(doc, "threads", d.threads);
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::io, std::string("design: ") + ex.what());
  }
  d.validate();
  return d;
}

}  // namespace resaple
