// Runs the resaple binary and compares its output with direct library calls.

#include "../unit/oracles.hpp"

#include "resaple/esda.hpp"
#include "resaple/estimators.hpp"
#include "resaple/inference.hpp"
#include "resaple/io.hpp"
#include "resaple/simkit.hpp"

#include <doctest.h>
#include <json.hpp>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <sstream>

using namespace resaple;
namespace fs = std::filesystem;
using Eigen::VectorXd;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

fs::path work_dir() {
  const fs::path d = fs::temp_directory_path() / "resaple_cli_test";
  fs::create_directories(d);
  return d;
}

Run run(const std::string& args, const std::string& env = "") {
  const fs::path out = work_dir() / "stdout.txt";
  const fs::path err = work_dir() / "stderr.txt";
  const std::string cmd = env + " " + RESAPLE_CLI_PATH + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  Run r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_text(out);
  r.err = read_text(err);
  return r;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Writes unit,x,y,x1,x2,z for an SEM draw on an m x m queen lattice.
fs::path write_dataset(const std::string& name, int m, double rho, std::uint64_t seed) {
  const auto g = build_lattice(m, m, LatticeScheme::queen);
  const int n = m * m;
  const auto cov = build_covariates(*g.coords(), n, 3, seed);
  const VectorXd z = generate_sem(cov.x, cov.beta, row_standardize(g), rho, 1.0, seed + 1);
  std::ostringstream os;
  os << "unit,x,y,x1,x2,z\n";
  for (int i = 0; i < n; ++i) {
    os << "u" << i << ',' << fmt((*g.coords())[i].x) << ',' << fmt((*g.coords())[i].y) << ','
       << fmt(cov.x.matrix()(i, 1)) << ',' << fmt(cov.x.matrix()(i, 2)) << ',' << fmt(z(i)) << '\n';
  }
  const fs::path p = work_dir() / name;
  write_text(p, os.str());
  return p;
}

fs::path write_queen(int m) {
  const fs::path p = work_dir() / ("queen" + std::to_string(m) + ".json");
  write_text(p, weights_to_json(row_standardize(build_lattice(m, m, LatticeScheme::queen))));
  return p;
}

std::map<std::string, std::string> key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    const auto c = line.find(": ");
    if (c != std::string::npos) out[line.substr(0, c)] = line.substr(c + 2);
  }
  return out;
}

struct LoadedData {
  DesignMatrix x;
  VectorXd z;
};

LoadedData load(const fs::path& csv, bool covariates = true) {
  const CsvTable t = CsvTable::load(csv);
  const auto n = static_cast<Eigen::Index>(t.rows());
  Eigen::MatrixXd x(n, covariates ? 3 : 1);
  x.col(0).setOnes();
  if (covariates) {
    const auto a = t.numeric("x1");
    const auto b = t.numeric("x2");
    x.col(1) = Eigen::Map<const VectorXd>(a.data(), n);
    x.col(2) = Eigen::Map<const VectorXd>(b.data(), n);
  }
  const auto zv = t.numeric("z");
  return {DesignMatrix(x), Eigen::Map<const VectorXd>(zv.data(), n)};
}

}  // namespace

TEST_CASE("weights subcommand") {
  const fs::path out = work_dir() / "w.json";
  Run r = run("weights --lattice 5x5 --scheme queen --out " + out.string());
  REQUIRE(r.code == 0);
  const auto w = load_weights(out);
  CHECK(w.n() == 25);
  CHECK(w.matrix() == row_standardize(build_lattice(5, 5, LatticeScheme::queen)).matrix());

  const fs::path pts = work_dir() / "pts.csv";
  write_text(pts, "x,y\n0,0\n1,0.2\n2.5,0\n0.3,1.7\n2,2\n");
  r = run("weights --knn 2 --coords " + pts.string());
  REQUIRE(r.code == 0);
  const std::vector<Point> p{{0, 0}, {1, 0.2}, {2.5, 0}, {0.3, 1.7}, {2, 2}};
  const auto knn = weights_from_json(r.out);
  CHECK(knn.matrix() == row_standardize(build_knn(p, 2)).matrix());
  CHECK((knn.matrix().array() > 0).matrix() == (knn.matrix().transpose().array() > 0).matrix());

  const fs::path edges = work_dir() / "e.csv";
  write_text(edges, "i,j,w\n0,1,2\n1,2,1\n2,0,3\n");
  r = run("weights --edges " + edges.string() + " --raw");
  REQUIRE(r.code == 0);
  const auto raw = weights_from_json(r.out);
  CHECK(raw.normalization() == Normalization::raw);
  CHECK(raw.matrix()(0, 1) == 2.0);
  CHECK(raw.matrix()(1, 0) == 2.0);

  write_text(edges, "i,j\n0,1\n1,2\n");
  r = run("weights --edges " + edges.string() + " --raw");
  CHECK(r.code == 0);
  const fs::path iso = work_dir() / "iso.csv";
  write_text(iso, "i,j\n0,1\n1,2\n4,0\n");
  r = run("weights --edges " + iso.string());
  CHECK(r.code == 3);
  CHECK(r.err.find('3') != std::string::npos);  // names the isolated unit

  CHECK(run("weights --lattice 5by5").code == 2);
  CHECK(run("weights").code == 2);
  CHECK(run("weights --lattice 3x3 --scheme hex").code == 2);
}

TEST_CASE("estimate matches the library") {
  const fs::path data = write_dataset("est.csv", 6, 0.3, 11);
  const fs::path w = write_queen(6);
  const Run r = run("estimate --data " + data.string() + " --weights " + w.string() +
                    " --response z --covariates x1,x2");
  REQUIRE(r.code == 0);
  const auto d = load(data);
  const auto wm = load_weights(w);
  const auto s = build_residual_space(d.x, wm);
  const auto reml = reml_fit(d.x, wm, d.z);
  std::ostringstream expected;
  expected << "method,rho_hat,sigma2_hat,loglik\n"
           << "moran," << fmt(moran_residual(d.z, d.x, wm).rho_hat) << ",,\n"
           << "aple," << fmt(aple(d.x.residuals(d.z), wm).rho_hat) << ",,\n"
           << "maple," << fmt(maple(d.z, d.x, wm).rho_hat) << ",,\n"
           << "resaple," << fmt(resaple::resaple(s, contrasts(s, d.z)).rho_hat) << ",,\n"
           << "reml," << fmt(reml.rho_hat) << ',' << fmt(*reml.sigma2_hat) << ',' << fmt(*reml.loglik) << '\n';
  CHECK(r.out == expected.str());

  // JSON carries the same numbers.
  const Run j = run("estimate --json --data " + data.string() + " --weights " + w.string() +
                    " --response z --covariates x1,x2");
  REQUIRE(j.code == 0);
  const auto doc = nlohmann::json::parse(j.out);
  const auto table = CsvTable::parse(r.out);
  const auto rho = table.numeric("rho_hat");
  REQUIRE(doc.at("estimates").size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(doc.at("estimates")[i].at("method").get<std::string>() == table.strings("method")[i]);
    CHECK(doc.at("estimates")[i].at("rho_hat").get<double>() == rho[i]);
  }
  CHECK(doc.at("estimates")[4].at("loglik").get<double>() == *reml.loglik);
}

TEST_CASE("estimate without covariates reduces RESAPLE to APLE") {
  const fs::path data = write_dataset("raw.csv", 5, 0.2, 21);
  const fs::path w = write_queen(5);
  const Run r = run("estimate --data " + data.string() + " --weights " + w.string() +
                    " --response z --no-intercept --methods aple,resaple");
  REQUIRE(r.code == 0);
  const auto rho = CsvTable::parse(r.out).numeric("rho_hat");
  CHECK(std::abs(rho[0] - rho[1]) < 1e-12);
  const auto d = load(data, false);
  CHECK(rho[0] == aple(d.z, load_weights(w)).rho_hat);
}

TEST_CASE("RESAPLE is the one-step estimate closest to REML at small rho") {
  const fs::path w = write_queen(8);
  std::map<std::string, double> gap;
  for (int k = 0; k < 30; ++k) {
    const fs::path data = write_dataset("small_rho.csv", 8, 0.1, 1000 + 7 * k);
    const Run r = run("estimate --json --data " + data.string() + " --weights " + w.string() +
                      " --response z --covariates x1,x2");
    REQUIRE(r.code == 0);
    const auto doc = nlohmann::json::parse(r.out);
    double reml = 0.0;
    for (const auto& e : doc.at("estimates")) {
      if (e.at("method") == "reml") reml = e.at("rho_hat").get<double>();
    }
    for (const auto& e : doc.at("estimates")) {
      gap[e.at("method").get<std::string>()] += std::abs(e.at("rho_hat").get<double>() - reml);
    }
  }
  CHECK(gap["resaple"] < gap["moran"]);
  CHECK(gap["resaple"] < gap["aple"]);
  CHECK(gap["resaple"] < gap["maple"]);
}

TEST_CASE("test subcommand") {
  const fs::path data = write_dataset("t.csv", 6, 0.25, 31);
  const fs::path w = write_queen(6);
  const std::string base = "test --data " + data.string() + " --weights " + w.string() +
                           " --response z --covariates x1,x2";
  const auto d = load(data);
  const auto wm = load_weights(w);
  const auto s = build_residual_space(d.x, wm);

  Run r = run(base + " --method exact");
  REQUIRE(r.code == 0);
  auto kv = key_values(r.out);
  const auto ex = exact_test(s, contrasts(s, d.z));
  CHECK(kv["statistic"] == fmt(ex.statistic));
  CHECK(kv["p_value"] == fmt(ex.p_value));
  CHECK(kv["method"] == "exact");

  r = run(base + " --method z --side two_sided");
  REQUIRE(r.code == 0);
  kv = key_values(r.out);
  CHECK(kv["p_value"] == fmt(z_test(s, contrasts(s, d.z), Side::two_sided).p_value));

  const Run p1 = run(base + " --method perm --permutations 199 --seed 42");
  const Run p2 = run(base + " --method perm --permutations 199 --seed 42 --threads 3");
  const Run p3 = run(base + " --method perm --permutations 199 --seed 42", "RESAPLE_THREADS=2");
  REQUIRE(p1.code == 0);
  CHECK(p1.out == p2.out);
  CHECK(p1.out == p3.out);
  PermutationOptions opt;
  opt.permutations = 199;
  opt.seed = 42;
  kv = key_values(p1.out);
  CHECK(kv["p_value"] == fmt(permutation_test(d.z, d.x, wm, opt).p_value));
  CHECK(kv["min_attainable_p"] == fmt(1.0 / 200));

  CHECK(run(base + " --method perm").code == 2);
  CHECK(run(base + " --method bootstrap").code == 2);
  CHECK(run(base + " --method perm --seed 1 --permutations 5").code == 3);
  // A significant result is still a successful run.
  const fs::path strong = write_dataset("strong.csv", 6, 0.9, 33);
  CHECK(run("test --data " + strong.string() + " --weights " + w.string() +
            " --response z --method exact").code == 0);
}

TEST_CASE("z test p-values are uniform over null datasets") {
  const fs::path w = write_queen(10);
  std::vector<double> p;
  for (int k = 0; k < 200; ++k) {
    const fs::path data = write_dataset("null.csv", 10, 0.0, 5000 + 3 * k);
    const Run r = run("test --method z --data " + data.string() + " --weights " + w.string() +
                      " --response z --covariates x1,x2");
    REQUIRE(r.code == 0);
    p.push_back(std::stod(key_values(r.out)["p_value"]));
  }
  CHECK(oracle::ks_uniform(p) < 1.628 / std::sqrt(200.0));
}

TEST_CASE("scatter and local outputs") {
  const fs::path data = write_dataset("sc.csv", 6, 0.4, 41);
  const fs::path w = write_queen(6);
  const fs::path out = work_dir() / "scatter.csv";
  const std::string base = "--data " + data.string() + " --weights " + w.string() +
                           " --response z --covariates x1,x2 --id unit";
  Run r = run("scatter " + base + " --out " + out.string());
  REQUIRE(r.code == 0);
  const auto t = CsvTable::load(out);
  CHECK(t.header() == std::vector<std::string>{"id", "x_tilde", "y_tilde", "c_i", "s_i", "leverage"});
  CHECK(t.strings("id")[5] == "u5");
  const auto xs = t.numeric("x_tilde");
  const auto ys = t.numeric("y_tilde");
  double xx = 0, xy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    xx += xs[i] * xs[i];
    xy += xs[i] * ys[i];
  }
  const double printed = std::stod(key_values(r.out)["rho_resaple"]);
  CHECK(std::abs(xy / xx - printed) < 1e-12);

  r = run("local " + base + " --permutations 99 --seed 3");
  REQUIRE(r.code == 0);
  const auto lt = CsvTable::parse(r.out);
  const auto d = load(data);
  const auto s = build_residual_space(d.x, load_weights(w));
  const auto lib = local_tests(s, contrasts(s, d.z), 99, 3);
  const auto pv = lt.numeric("p_value");
  const auto pa = lt.numeric("p_adjusted");
  for (int i = 0; i < 36; ++i) {
    CHECK(pv[i] == lib.p_value(i));
    CHECK(pa[i] == lib.p_adjusted(i));
  }
  CHECK(run("local " + base).code == 2);
}

TEST_CASE("compare-weights") {
  const Run r = run("compare-weights --lattice 10x10 --candidates rook,queen,knn4,knn6,knn8");
  REQUIRE(r.code == 0);
  const auto t = CsvTable::parse(r.out);
  CHECK(t.header() == std::vector<std::string>{"label", "avg_degree", "i_n0", "i_r0", "info_ratio", "selected"});
  CHECK(t.rows() == 5);
  for (double v : t.numeric("info_ratio")) {
    CHECK(v > 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(t.numeric("selected") == std::vector<double>{1, 0, 0, 0, 0});

  const fs::path w = write_queen(10);
  const Run f = run("compare-weights --lattice 10x10 --candidates rook --weights-file mine=" + w.string());
  REQUIRE(f.code == 0);
  CHECK(CsvTable::parse(f.out).strings("label") == std::vector<std::string>{"rook", "mine"});
  CHECK(run("compare-weights").code == 2);
}

TEST_CASE("simulate subcommand") {
  const fs::path design = work_dir() / "design.json";
  write_text(design, R"({"study": "estimation", "topology": "lattice_queen",
                         "lattice_sizes": [5, 10], "p": [1, 5], "replicates": 50})");
  const fs::path out = work_dir() / "metrics.csv";
  Run r = run("simulate --design " + design.string() + " --seed 9 --out " + out.string());
  REQUIRE(r.code == 0);
  const auto t = CsvTable::load(out);
  // 4 design points x 20 rho values x 5 estimators x 4 metrics.
  CHECK(t.rows() == 4u * 20u * 5u * 4u);

  write_text(design, R"({"study": "power", "lattice_sizes": [4], "p": [1], "rho_grid": [0, 0.4],
                         "replicates": 15, "permutations": 19})");
  const std::string one = run("simulate --design " + design.string() + " --seed 4 --threads 1").out;
  const std::string many = run("simulate --design " + design.string() + " --seed 4 --threads 4").out;
  CHECK(one == many);
  CHECK(one == run_study(design_from_json(read_text(design)), 4).to_csv());

  CHECK(run("simulate --design " + design.string()).code == 2);
  write_text(design, R"({"lattice_size": [4]})");
  CHECK(run("simulate --design " + design.string() + " --seed 1").code == 3);
}

TEST_CASE("data errors name the offending row") {
  const fs::path data = work_dir() / "missing.csv";
  write_text(data, "z,x1\n1.0,0.5\n2.0,\n0.3,0.1\n0.2,0.9\n");
  const fs::path w = work_dir() / "w4.json";
  write_text(w, weights_to_json(row_standardize(build_lattice(2, 2, LatticeScheme::rook))));
  Run r = run("estimate --data " + data.string() + " --weights " + w.string() +
              " --response z --covariates x1");
  CHECK(r.code == 3);
  CHECK(r.err.find("row 2") != std::string::npos);

  r = run("estimate --data " + data.string() + " --weights " + write_queen(3).string() + " --response z");
  CHECK(r.code == 3);

  write_text(data, "z,x1,x2\n1,1,2\n2,2,4\n3,3,6\n4,4,8\n");
  r = run("estimate --data " + data.string() + " --weights " + w.string() +
          " --response z --covariates x1,x2 --no-intercept");
  CHECK(r.code == 3);
}
