// resaple command-line tool. Exit codes: 0 success, 2 usage, 3 data or
// validation error, 4 numerical failure.

#include "resaple/error.hpp"
#include "resaple/esda.hpp"
#include "resaple/estimators.hpp"
#include "resaple/inference.hpp"
#include "resaple/io.hpp"
#include "resaple/residual_space.hpp"
#include "resaple/simkit.hpp"
#include "resaple/weights.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace resaple;

namespace {

constexpr int exit_usage = 2;
constexpr int exit_data = 3;
constexpr int exit_numeric = 4;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void emit(const std::string& text, const std::string& out) {
  if (out.empty() || out == "-") {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::pair<int, int> parse_shape(const std::string& s) {
  const auto x = s.find_first_of("xX");
  try {
    if (x == std::string::npos) throw std::invalid_argument(s);
    std::size_t used = 0;
    const int rows = std::stoi(s.substr(0, x), &used);
    if (used != x) throw std::invalid_argument(s);
    const std::string rest = s.substr(x + 1);
    const int cols = std::stoi(rest, &used);
    if (used != rest.size()) throw std::invalid_argument(s);
    return {rows, cols};
  } catch (const std::logic_error&) {
    throw UsageError("lattice shape must look like 5x5, got '" + s + "'");
  }
}

// Shared by every command that reads a data file.
struct DataArgs {
  std::string data;
  std::string weights;
  std::string response;
  std::vector<std::string> covariates;
  bool no_intercept = false;
  std::string id;

  void add_to(CLI::App* cmd, bool need_response = true) {
    cmd->add_option("--data", data, "CSV with one row per spatial unit")->required();
    cmd->add_option("--weights", weights, "weights JSON (from `resaple weights`)")->required();
    auto* r = cmd->add_option("--response", response, "response column");
    if (need_response) r->required();
    cmd->add_option("--covariates", covariates, "covariate columns (comma separated)")
        ->delimiter(',');
    cmd->add_flag("--no-intercept", no_intercept, "drop the intercept column");
    cmd->add_option("--id", id, "unit id column for per-unit output");
  }
};

struct Dataset {
  CsvTable table;
  WeightMatrix w;
  DesignMatrix x;
  Eigen::VectorXd z;
  std::vector<std::string> ids;
};

DesignMatrix design_from(const CsvTable& t, const std::vector<std::string>& covariates,
                         bool no_intercept) {
  const auto n = static_cast<Eigen::Index>(t.rows());
  const Eigen::Index p = static_cast<Eigen::Index>(covariates.size()) + (no_intercept ? 0 : 1);
  if (p == 0) return DesignMatrix::empty(static_cast<int>(n));
  Eigen::MatrixXd x(n, p);
  Eigen::Index col = 0;
  if (!no_intercept) x.col(col++).setOnes();
  for (const auto& name : covariates) {
    const std::vector<double> v = t.numeric(name);
    x.col(col++) = Eigen::Map<const Eigen::VectorXd>(v.data(), n);
  }
  return DesignMatrix(std::move(x));
}

Dataset load_dataset(const DataArgs& a) {
  CsvTable table = CsvTable::load(a.data);
  WeightMatrix w = load_weights(a.weights);
  if (static_cast<int>(table.rows()) != w.n()) {
    throw Error(ErrorKind::length_mismatch, a.data + " has " + std::to_string(table.rows()) +
                                                " rows but the weights describe " +
                                                std::to_string(w.n()) + " units");
  }
  DesignMatrix x = design_from(table, a.covariates, a.no_intercept);
  Eigen::VectorXd z;
  if (!a.response.empty()) {
    const std::vector<double> v = table.numeric(a.response);
    z = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  std::vector<std::string> ids;
  if (!a.id.empty()) {
    ids = table.strings(a.id);
  } else {
    for (std::size_t i = 0; i < table.rows(); ++i) ids.push_back(std::to_string(i));
  }
  return {std::move(table), std::move(w), std::move(x), std::move(z), std::move(ids)};
}

// ---------------------------------------------------------------- weights

struct WeightsArgs {
  std::string lattice;
  std::string scheme = "queen";
  int knn = 0;
  std::string coords;
  std::string x_col = "x";
  std::string y_col = "y";
  bool standardize_coords = false;
  std::string edges;
  bool directed = false;
  bool raw = false;
  std::string out;
};

std::vector<Point> load_coords(const WeightsArgs& a) {
  std::vector<Point> pts = read_coords_csv(a.coords, a.x_col, a.y_col);
  return a.standardize_coords ? standardize_coords(pts) : pts;
}

int cmd_weights(const WeightsArgs& a) {
  const int sources = (!a.lattice.empty()) + (a.knn > 0) + (!a.edges.empty());
  if (sources != 1) throw UsageError("give exactly one of --lattice, --knn, --edges");
  std::optional<AdjacencyGraph> g;
  if (!a.lattice.empty()) {
    const auto [rows, cols] = parse_shape(a.lattice);
    g.emplace(build_lattice(rows, cols, parse_lattice_scheme(a.scheme)));
  } else if (a.knn > 0) {
    if (a.coords.empty()) throw UsageError("--knn needs --coords");
    g.emplace(build_knn(load_coords(a), a.knn));
  } else {
    std::optional<std::vector<Point>> pts;
    if (!a.coords.empty()) pts = load_coords(a);
    g.emplace(read_edge_csv(a.edges, !a.directed, std::nullopt, std::move(pts)));
  }
  const WeightMatrix w = a.raw ? raw_weights(*g) : row_standardize(*g);
  emit(weights_to_json(w) + "\n", a.out);
  return 0;
}

// --------------------------------------------------------------- estimate

struct EstimateArgs {
  DataArgs data;
  std::vector<std::string> methods{"moran", "aple", "maple", "resaple", "reml"};
  bool as_json = false;
  std::string out;
};

int cmd_estimate(const EstimateArgs& a) {
  const Dataset d = load_dataset(a.data);
  std::vector<Estimator> methods;
  for (const auto& m : a.methods) methods.push_back(parse_estimator(m));
  const ResidualSpace s = build_residual_space(d.x, d.w);

  std::vector<EstimateResult> results;
  for (Estimator m : methods) {
    switch (m) {
      case Estimator::moran: results.push_back(moran_residual(d.z, d.x, d.w)); break;
      case Estimator::aple: results.push_back(aple(d.x.residuals(d.z), d.w)); break;
      case Estimator::maple: results.push_back(maple(d.z, d.x, d.w)); break;
      case Estimator::resaple: results.push_back(resaple::resaple(s, contrasts(s, d.z))); break;
      case Estimator::reml: results.push_back(reml_fit(d.x, d.w, d.z)); break;
    }
  }

  if (a.as_json) {
    json doc;
    doc["n"] = d.x.n();
    doc["p"] = d.x.p();
    doc["i_r0"] = s.i_r0();
    json rows = json::array();
    for (const auto& r : results) {
      json row{{"method", to_string(r.method)}, {"rho_hat", r.rho_hat}};
      row["sigma2_hat"] = r.sigma2_hat ? json(*r.sigma2_hat) : json(nullptr);
      row["loglik"] = r.loglik ? json(*r.loglik) : json(nullptr);
      if (r.method == Estimator::reml) row["boundary"] = r.boundary;
      rows.push_back(std::move(row));
    }
    doc["estimates"] = std::move(rows);
    emit(doc.dump(2) + "\n", a.out);
    return 0;
  }
  std::ostringstream os;
  os << "method,rho_hat,sigma2_hat,loglik\n";
  for (const auto& r : results) {
    os << to_string(r.method) << ',' << num(r.rho_hat) << ','
       << (r.sigma2_hat ? num(*r.sigma2_hat) : "") << ',' << (r.loglik ? num(*r.loglik) : "")
       << '\n';
  }
  emit(os.str(), a.out);
  return 0;
}

// ------------------------------------------------------------------- test

struct TestArgs {
  DataArgs data;
  std::string method = "exact";
  std::string scheme = "freedman_lane";
  int permutations = 199;
  std::optional<std::uint64_t> seed;
  std::string side = "greater";
  std::string statistic = "resaple";
  int threads = 0;
  bool as_json = false;
};

int cmd_test(const TestArgs& a) {
  if (a.method != "exact" && a.method != "perm" && a.method != "z") {
    throw UsageError("--method must be exact, perm or z");
  }
  if (a.method == "perm" && !a.seed) throw UsageError("--method perm requires --seed");
  if (a.method != "perm" && a.statistic != "resaple") {
    throw UsageError("--statistic applies to permutation tests only");
  }
  const Dataset d = load_dataset(a.data);
  const Side side = parse_side(a.side);
  const ResidualSpace s = build_residual_space(d.x, d.w);
  TestResult r;
  if (a.method == "exact") {
    r = exact_test(s, contrasts(s, d.z), side);
  } else if (a.method == "z") {
    r = z_test(s, contrasts(s, d.z), side);
  } else {
    PermutationOptions opt;
    opt.scheme = parse_scheme(a.scheme);
    opt.permutations = a.permutations;
    opt.seed = *a.seed;
    opt.side = side;
    opt.statistic = parse_estimator(a.statistic);
    opt.threads = a.threads;
    r = permutation_test(ResidualStatistics(d.x, d.w, s), d.z, opt);
  }

  if (a.as_json) {
    json doc{{"statistic", r.statistic},   {"p_value", r.p_value},
             {"method", to_string(r.method)}, {"side", to_string(r.side)},
             {"p_greater", r.p_greater},   {"p_less", r.p_less}};
    if (r.permutations) doc["permutations"] = *r.permutations;
    if (r.seed) doc["seed"] = *r.seed;
    if (r.min_attainable_p) doc["min_attainable_p"] = *r.min_attainable_p;
    if (r.ties) doc["ties"] = *r.ties;
    if (r.method == TestMethod::exact) doc["accurate"] = r.accurate;
    std::cout << doc.dump(2) << '\n';
    return 0;
  }
  std::cout << "statistic: " << num(r.statistic) << '\n'
            << "p_value: " << num(r.p_value) << '\n'
            << "method: " << to_string(r.method) << '\n'
            << "side: " << to_string(r.side) << '\n';
  if (r.permutations) std::cout << "permutations: " << *r.permutations << '\n';
  if (r.seed) std::cout << "seed: " << *r.seed << '\n';
  if (r.min_attainable_p) std::cout << "min_attainable_p: " << num(*r.min_attainable_p) << '\n';
  if (r.ties) std::cout << "ties: " << *r.ties << '\n';
  if (!r.accurate) std::cerr << "warning: Imhof error estimate above target\n";
  return 0;
}

// ------------------------------------------------------- scatter / local

struct ScatterArgs {
  DataArgs data;
  std::string out;
};

int cmd_scatter(const ScatterArgs& a) {
  const Dataset d = load_dataset(a.data);
  const ResidualSpace s = build_residual_space(d.x, d.w);
  const ScatterData sd = scatter_coordinates(s, contrasts(s, d.z));
  std::ostringstream os;
  os << "id,x_tilde,y_tilde,c_i,s_i,leverage\n";
  for (const auto& p : sd.points) {
    os << d.ids[static_cast<std::size_t>(p.id)] << ',' << num(p.x_tilde) << ',' << num(p.y_tilde)
       << ',' << num(p.c_i) << ',' << num(p.s_i) << ',' << num(p.leverage) << '\n';
  }
  emit(os.str(), a.out);
  if (!a.out.empty() && a.out != "-") std::cout << "rho_resaple: " << num(sd.rho_hat) << '\n';
  return 0;
}

struct LocalArgs {
  DataArgs data;
  int permutations = 999;
  std::optional<std::uint64_t> seed;
  double fdr = 0.05;
  int threads = 0;
  std::string out;
};

int cmd_local(const LocalArgs& a) {
  if (!a.seed) throw UsageError("local requires --seed");
  const Dataset d = load_dataset(a.data);
  const ResidualSpace s = build_residual_space(d.x, d.w);
  const LocalTestResult r = local_tests(s, contrasts(s, d.z), a.permutations, *a.seed, a.fdr, a.threads);
  std::ostringstream os;
  os << "id,c_i,s_i,p_value,p_adjusted,significant\n";
  for (Eigen::Index i = 0; i < r.c.size(); ++i) {
    os << d.ids[static_cast<std::size_t>(i)] << ',' << num(r.c(i)) << ',' << num(r.s(i)) << ','
       << num(r.p_value(i)) << ',' << num(r.p_adjusted(i)) << ','
       << (r.significant[static_cast<std::size_t>(i)] ? 1 : 0) << '\n';
  }
  emit(os.str(), a.out);
  if (!a.out.empty() && a.out != "-") std::cout << "rho_resaple: " << num(r.rho_hat) << '\n';
  return 0;
}

// -------------------------------------------------------- compare-weights

struct CompareArgs {
  std::string data;
  std::vector<std::string> covariates;
  bool no_intercept = false;
  std::string lattice;
  std::string coords;
  std::string x_col = "x";
  std::string y_col = "y";
  bool standardize_coords = false;
  std::vector<std::string> candidates;
  std::vector<std::string> weight_files;
  std::string out;
};

int cmd_compare(const CompareArgs& a) {
  std::vector<WeightCandidate> cands;
  std::optional<AdjacencyGraph> base;
  std::optional<std::pair<int, int>> shape;
  if (!a.lattice.empty()) {
    shape = parse_shape(a.lattice);
    base.emplace(build_lattice(shape->first, shape->second, LatticeScheme::queen));
  } else if (!a.coords.empty()) {
    std::vector<Point> pts = read_coords_csv(a.coords, a.x_col, a.y_col);
    if (a.standardize_coords) pts = standardize_coords(pts);
    // kNN candidates only need coordinates; the base graph is never used as weights.
    base.emplace(build_knn(pts, 1));
  }
  for (const auto& label : a.candidates) {
    if (!base) throw UsageError("label candidates need --lattice or --coords");
    if (label == "custom") throw UsageError("pass custom graphs with --weights-file");
    cands.push_back({label, candidate_weights(label, *base, shape)});
  }
  for (const auto& spec : a.weight_files) {
    const auto eq = spec.find('=');
    const std::string label = eq == std::string::npos ? fs::path(spec).stem().string() : spec.substr(0, eq);
    const std::string path = eq == std::string::npos ? spec : spec.substr(eq + 1);
    cands.push_back({label, load_weights(path)});
  }
  if (cands.empty()) throw UsageError("no candidates (use --candidates and/or --weights-file)");

  const int n = cands.front().w.n();
  DesignMatrix x = a.no_intercept ? DesignMatrix::empty(n) : DesignMatrix::intercept(n);
  if (!a.data.empty()) {
    x = design_from(CsvTable::load(a.data), a.covariates, a.no_intercept);
  } else if (!a.covariates.empty()) {
    throw UsageError("--covariates needs --data");
  }
  const WeightComparison cmp = compare_weights(x, cands);
  std::ostringstream os;
  os << "label,avg_degree,i_n0,i_r0,info_ratio,selected\n";
  for (const auto& r : cmp.rows) {
    os << r.label << ',' << num(r.avg_degree) << ',' << num(r.i_n0) << ',' << num(r.i_r0) << ','
       << num(r.info_ratio) << ',' << (r.selected ? 1 : 0) << '\n';
  }
  emit(os.str(), a.out);
  return 0;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string design;
  std::optional<std::uint64_t> seed;
  std::optional<int> replicates;
  bool full_scale = false;
  std::optional<int> threads;
  std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
  if (!a.seed) throw UsageError("simulate requires --seed");
  const fs::path path(a.design);
  SimDesign d = design_from_json(read_text(path), path.parent_path());
  if (a.replicates) d.replicates = *a.replicates;
  if (a.full_scale) d.replicates = 2000;
  if (a.threads) d.threads = *a.threads;
  d.validate();
  emit(run_study(d, *a.seed).to_csv(), a.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Restricted-likelihood estimation and testing for spatial error models"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "resaple 0.1.0");

  WeightsArgs wa;
  auto* w = app.add_subcommand("weights", "build a weights file");
  w->add_option("--lattice", wa.lattice, "regular lattice RxC");
  w->add_option("--scheme", wa.scheme, "lattice contiguity: rook or queen")
      ->check(CLI::IsMember({"rook", "queen"}))
      ->capture_default_str();
  w->add_option("--knn", wa.knn, "k nearest neighbours (needs --coords)");
  w->add_option("--coords", wa.coords, "coordinates CSV");
  w->add_option("--x-col", wa.x_col, "x column in --coords")->capture_default_str();
  w->add_option("--y-col", wa.y_col, "y column in --coords")->capture_default_str();
  w->add_flag("--standardize-coords", wa.standardize_coords, "centre and scale coordinates first");
  w->add_option("--edges", wa.edges, "edge list CSV with columns i,j[,w]");
  w->add_flag("--directed", wa.directed, "do not mirror edges from --edges");
  w->add_flag("--raw", wa.raw, "keep raw weights instead of row-standardising");
  w->add_option("--out", wa.out, "output path (default stdout)");

  EstimateArgs ea;
  auto* e = app.add_subcommand("estimate", "estimate rho with one or more methods");
  ea.data.add_to(e);
  e->add_option("--methods", ea.methods, "moran, aple, maple, resaple, reml")
      ->delimiter(',')
      ->check(CLI::IsMember({"moran", "aple", "maple", "resaple", "reml"}));
  e->add_flag("--json", ea.as_json, "JSON instead of CSV");
  e->add_option("--out", ea.out, "output path (default stdout)");

  TestArgs ta;
  auto* t = app.add_subcommand("test", "test rho = 0");
  ta.data.add_to(t);
  t->add_option("--method", ta.method, "exact, perm or z")
      ->check(CLI::IsMember({"exact", "perm", "z"}))
      ->capture_default_str();
  t->add_option("--scheme", ta.scheme, "coordinate or freedman_lane")
      ->check(CLI::IsMember({"coordinate", "freedman_lane"}))
      ->capture_default_str();
  t->add_option("--permutations", ta.permutations, "number of permutations")->capture_default_str();
  t->add_option("--seed", ta.seed, "random seed (required for perm)");
  t->add_option("--side", ta.side, "greater, less or two_sided")
      ->check(CLI::IsMember({"greater", "less", "two_sided"}))
      ->capture_default_str();
  t->add_option("--statistic", ta.statistic, "permutation statistic: resaple, moran, aple, maple")
      ->check(CLI::IsMember({"resaple", "moran", "aple", "maple"}))
      ->capture_default_str();
  t->add_option("--threads", ta.threads, "worker threads (0: RESAPLE_THREADS or all cores)");
  t->add_flag("--json", ta.as_json, "JSON output");

  ScatterArgs sa;
  auto* sc = app.add_subcommand("scatter", "unit-level scatterplot coordinates");
  sa.data.add_to(sc);
  sc->add_option("--out", sa.out, "output CSV (default stdout)");

  LocalArgs la;
  auto* lo = app.add_subcommand("local", "local contributions with permutation p-values");
  la.data.add_to(lo);
  lo->add_option("--permutations", la.permutations, "number of permutations")->capture_default_str();
  lo->add_option("--seed", la.seed, "random seed (required)");
  lo->add_option("--fdr", la.fdr, "Benjamini-Hochberg level")->capture_default_str();
  lo->add_option("--threads", la.threads, "worker threads");
  lo->add_option("--out", la.out, "output CSV (default stdout)");

  CompareArgs ca;
  auto* cw = app.add_subcommand("compare-weights", "restricted information of candidate weights");
  cw->add_option("--data", ca.data, "CSV holding covariate columns");
  cw->add_option("--covariates", ca.covariates, "covariate columns")->delimiter(',');
  cw->add_flag("--no-intercept", ca.no_intercept, "drop the intercept column");
  cw->add_option("--lattice", ca.lattice, "lattice RxC for rook/queen/knn candidates");
  cw->add_option("--coords", ca.coords, "coordinates CSV for knn candidates");
  cw->add_option("--x-col", ca.x_col, "x column in --coords")->capture_default_str();
  cw->add_option("--y-col", ca.y_col, "y column in --coords")->capture_default_str();
  cw->add_flag("--standardize-coords", ca.standardize_coords, "centre and scale coordinates first");
  cw->add_option("--candidates", ca.candidates, "labels: rook, queen, knn<k>")->delimiter(',');
  cw->add_option("--weights-file", ca.weight_files, "extra candidate as [label=]path.json");
  cw->add_option("--out", ca.out, "output CSV (default stdout)");

  SimulateArgs ma;
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo study from a design file");
  sim->add_option("--design", ma.design, "design JSON")->required();
  sim->add_option("--seed", ma.seed, "master seed (required)");
  sim->add_option("--replicates", ma.replicates, "override replicates per stream");
  sim->add_flag("--full-scale", ma.full_scale, "2000 replicates per stream");
  sim->add_option("--threads", ma.threads, "worker threads");
  sim->add_option("--out", ma.out, "metrics CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& ex) {
    const int code = app.exit(ex);
    return code == 0 ? 0 : exit_usage;
  }

  try {
    if (*w) return cmd_weights(wa);
    if (*e) return cmd_estimate(ea);
    if (*t) return cmd_test(ta);
    if (*sc) return cmd_scatter(sa);
    if (*lo) return cmd_local(la);
    if (*cw) return cmd_compare(ca);
    if (*sim) return cmd_simulate(ma);
  } catch (const UsageError& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return exit_usage;
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return ex.is_validation() || ex.kind() == ErrorKind::domain ? exit_data : exit_numeric;
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return exit_numeric;
  }
  return exit_usage;
}
