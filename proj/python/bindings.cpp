#include "resaple/error.hpp"
#include "resaple/esda.hpp"
#include "resaple/estimators.hpp"
#include "resaple/inference.hpp"
#include "resaple/io.hpp"
#include "resaple/residual_space.hpp"
#include "resaple/simkit.hpp"
#include "resaple/weights.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

namespace py = pybind11;
using namespace resaple;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

WeightMatrix to_weights(const MatrixXd& w, const std::string& normalization) {
  return WeightMatrix(w, parse_normalization(normalization));
}

// X = None means intercept only; a (n, 0) array means no design at all.
DesignMatrix to_design(const std::optional<MatrixXd>& x, Eigen::Index n) {
  if (!x) return DesignMatrix::intercept(static_cast<int>(n));
  return DesignMatrix(*x);
}

std::vector<Point> to_points(const MatrixXd& coords) {
  if (coords.cols() != 2) throw Error(ErrorKind::invalid_dimension, "coords must have shape (n, 2)");
  std::vector<Point> pts(static_cast<std::size_t>(coords.rows()));
  for (Eigen::Index i = 0; i < coords.rows(); ++i) pts[static_cast<std::size_t>(i)] = {coords(i, 0), coords(i, 1)};
  return pts;
}

MatrixXd finish(const AdjacencyGraph& g, bool standardize) {
  return standardize ? row_standardize(g).matrix() : raw_weights(g).matrix();
}

py::dict test_dict(const TestResult& r) {
  py::dict d;
  d["statistic"] = r.statistic;
  d["p_value"] = r.p_value;
  d["method"] = to_string(r.method);
  d["side"] = to_string(r.side);
  d["p_greater"] = r.p_greater;
  d["p_less"] = r.p_less;
  d["permutations"] = r.permutations ? py::cast(*r.permutations) : py::none();
  d["seed"] = r.seed ? py::cast(*r.seed) : py::none();
  d["min_attainable_p"] = r.min_attainable_p ? py::cast(*r.min_attainable_p) : py::none();
  d["ties"] = r.ties ? py::cast(*r.ties) : py::none();
  d["accurate"] = r.accurate;
  return d;
}

py::dict estimate(const VectorXd& z, const MatrixXd& w, const std::optional<MatrixXd>& x,
                  const std::string& method, const std::string& normalization) {
  const WeightMatrix wm = to_weights(w, normalization);
  const DesignMatrix dm = to_design(x, z.size());
  EstimateResult r;
  switch (parse_estimator(method)) {
    case Estimator::moran: r = moran_residual(z, dm, wm); break;
    case Estimator::aple: r = aple(dm.residuals(z), wm); break;
    case Estimator::maple: r = maple(z, dm, wm); break;
    case Estimator::resaple: {
      const ResidualSpace s = build_residual_space(dm, wm);
      r = resaple::resaple(s, contrasts(s, z));
      break;
    }
    case Estimator::reml: r = reml_fit(dm, wm, z); break;
  }
  py::dict d;
  d["method"] = to_string(r.method);
  d["rho_hat"] = r.rho_hat;
  d["sigma2_hat"] = r.sigma2_hat ? py::cast(*r.sigma2_hat) : py::none();
  d["loglik"] = r.loglik ? py::cast(*r.loglik) : py::none();
  d["boundary"] = r.boundary;
  return d;
}

py::dict test(const VectorXd& z, const MatrixXd& w, const std::optional<MatrixXd>& x,
              const std::string& method, const std::string& side, int permutations,
              std::optional<std::uint64_t> seed, const std::string& scheme,
              const std::string& statistic, int threads, const std::string& normalization) {
  const WeightMatrix wm = to_weights(w, normalization);
  const DesignMatrix dm = to_design(x, z.size());
  const ResidualSpace s = build_residual_space(dm, wm);
  const Side sd = parse_side(side);
  if (method == "exact") return test_dict(exact_test(s, contrasts(s, z), sd));
  if (method == "z") return test_dict(z_test(s, contrasts(s, z), sd));
  if (method != "perm") throw Error(ErrorKind::domain, "method must be exact, perm or z");
  if (!seed) throw Error(ErrorKind::domain, "permutation tests need an explicit seed");
  PermutationOptions opt;
  opt.scheme = parse_scheme(scheme);
  opt.permutations = permutations;
  opt.seed = *seed;
  opt.side = sd;
  opt.statistic = parse_estimator(statistic);
  opt.threads = threads;
  const ResidualStatistics stats(dm, wm, s);
  TestResult r;
  {
    py::gil_scoped_release release;
    r = permutation_test(stats, z, opt);
  }
  return test_dict(r);
}

py::dict scatter(const VectorXd& z, const MatrixXd& w, const std::optional<MatrixXd>& x,
                 const std::string& normalization) {
  const ResidualSpace s = build_residual_space(to_design(x, z.size()), to_weights(w, normalization));
  const ScatterData sd = scatter_coordinates(s, contrasts(s, z));
  const auto n = static_cast<Eigen::Index>(sd.points.size());
  VectorXd xt(n), yt(n), c(n), si(n), lev(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& p = sd.points[static_cast<std::size_t>(i)];
    xt(i) = p.x_tilde;
    yt(i) = p.y_tilde;
    c(i) = p.c_i;
    si(i) = p.s_i;
    lev(i) = p.leverage;
  }
  py::dict d;
  d["x_tilde"] = xt;
  d["y_tilde"] = yt;
  d["c_i"] = c;
  d["s_i"] = si;
  d["leverage"] = lev;
  d["rho_hat"] = sd.rho_hat;
  d["slope"] = sd.slope();
  return d;
}

py::dict local(const VectorXd& z, const MatrixXd& w, const std::optional<MatrixXd>& x,
               int permutations, std::uint64_t seed, double fdr_q, int threads,
               const std::string& normalization) {
  const ResidualSpace s = build_residual_space(to_design(x, z.size()), to_weights(w, normalization));
  const VectorXd e = contrasts(s, z);
  LocalTestResult r;
  {
    py::gil_scoped_release release;
    r = local_tests(s, e, permutations, seed, fdr_q, threads);
  }
  py::dict d;
  d["c_i"] = r.c;
  d["s_i"] = r.s;
  d["p_value"] = r.p_value;
  d["p_adjusted"] = r.p_adjusted;
  d["significant"] = r.significant;
  d["rho_hat"] = r.rho_hat;
  return d;
}

py::list compare(const std::vector<std::pair<std::string, MatrixXd>>& candidates,
                 const std::optional<MatrixXd>& x, const std::string& normalization) {
  if (candidates.empty()) throw Error(ErrorKind::domain, "no candidates");
  std::vector<WeightCandidate> cands;
  for (const auto& [label, w] : candidates) cands.push_back({label, to_weights(w, normalization)});
  const WeightComparison cmp = compare_weights(to_design(x, cands.front().w.n()), cands);
  py::list rows;
  for (const auto& r : cmp.rows) {
    py::dict d;
    d["label"] = r.label;
    d["avg_degree"] = r.avg_degree;
    d["i_n0"] = r.i_n0;
    d["i_r0"] = r.i_r0;
    d["info_ratio"] = r.info_ratio;
    d["selected"] = r.selected;
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Restricted-likelihood estimation and testing for Gaussian spatial error models";

  static py::exception<Error> numerical(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      if (e.is_validation() || e.kind() == ErrorKind::domain) {
        PyErr_SetString(PyExc_ValueError, e.what());
      } else {
        numerical(e.what());
      }
    }
  });

  m.def("lattice_weights",
        [](int rows, int cols, const std::string& scheme, bool standardize) {
          return finish(build_lattice(rows, cols, parse_lattice_scheme(scheme)), standardize);
        },
        py::arg("rows"), py::arg("cols"), py::arg("scheme") = "queen", py::arg("standardize") = true,
        "Contiguity weights on a rows x cols lattice; unit r*cols + c.");
  m.def("knn_weights",
        [](const MatrixXd& coords, int k, bool standardize) {
          return finish(build_knn(to_points(coords), k), standardize);
        },
        py::arg("coords"), py::arg("k"), py::arg("standardize") = true,
        "Symmetrised k-nearest-neighbour weights (lowest index wins ties).");
  m.def("restricted_information",
        [](const MatrixXd& w, const std::optional<MatrixXd>& x, const std::string& normalization) {
          return build_residual_space(to_design(x, w.rows()), to_weights(w, normalization)).i_r0();
        },
        py::arg("w"), py::arg("x") = py::none(), py::arg("normalization") = "row",
        "I_r(0) = 2 Tr(K_r^2).");
  m.def("unrestricted_information",
        [](const MatrixXd& w, const std::string& normalization) {
          return null_information_unrestricted(to_weights(w, normalization));
        },
        py::arg("w"), py::arg("normalization") = "row");

  m.def("estimate", &estimate, py::arg("z"), py::arg("w"), py::arg("x") = py::none(),
        py::arg("method") = "resaple", py::arg("normalization") = "row",
        "Estimate rho with moran, aple, maple, resaple or reml. x=None means intercept only.");
  m.def("test", &test, py::arg("z"), py::arg("w"), py::arg("x") = py::none(),
        py::arg("method") = "exact", py::arg("side") = "greater", py::arg("permutations") = 199,
        py::arg("seed") = py::none(), py::arg("scheme") = "freedman_lane",
        py::arg("statistic") = "resaple", py::arg("threads") = 0, py::arg("normalization") = "row",
        "Test rho = 0 by the exact law, a permutation scheme, or the normal approximation.");
  m.def("scatter", &scatter, py::arg("z"), py::arg("w"), py::arg("x") = py::none(),
        py::arg("normalization") = "row");
  m.def("local_tests", &local, py::arg("z"), py::arg("w"), py::arg("x") = py::none(),
        py::arg("permutations") = 999, py::arg("seed") = 0, py::arg("fdr_q") = 0.05,
        py::arg("threads") = 0, py::arg("normalization") = "row");
  m.def("compare_weights", &compare, py::arg("candidates"), py::arg("x") = py::none(),
        py::arg("normalization") = "row",
        "candidates: list of (label, W). Rows come back sorted by I_r(0), best first.");

  m.def("generate_sem",
        [](const MatrixXd& x, const VectorXd& beta, const MatrixXd& w, double rho, double sigma,
           std::uint64_t seed, const std::string& normalization) {
          return generate_sem(DesignMatrix(x), beta, to_weights(w, normalization), rho, sigma, seed);
        },
        py::arg("x"), py::arg("beta"), py::arg("w"), py::arg("rho"), py::arg("sigma") = 1.0,
        py::arg("seed") = 0, py::arg("normalization") = "row");
  m.def("simulate",
        [](const std::string& design_json, std::uint64_t seed, const std::string& base_dir) {
          const SimDesign d = design_from_json(design_json, base_dir);
          std::string csv;
          {
            py::gil_scoped_release release;
            csv = run_study(d, seed).to_csv();
          }
          return csv;
        },
        py::arg("design_json"), py::arg("seed"), py::arg("base_dir") = ".",
        "Run a Monte Carlo study; returns the metrics CSV text.");
}
