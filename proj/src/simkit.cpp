#include "resaple/simkit.hpp"

#include "resaple/error.hpp"
#include "resaple/parallel.hpp"
#include "resaple/random.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

namespace resaple {

namespace {

constexpr std::uint64_t covariate_stream = 0x636f76;
constexpr std::uint64_t data_stream = 0;
constexpr std::uint64_t permutation_stream = 1;

void standardize_column(Eigen::Ref<Eigen::VectorXd> v) {
  const double n = static_cast<double>(v.size());
  const double mean = v.sum() / n;
  v.array() -= mean;
  const double sd = std::sqrt(v.squaredNorm() / (n - 1.0));
  if (!(sd > 0.0)) throw Error(ErrorKind::rank_deficient, "covariate column has zero variance");
  v /= sd;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// One (n, p) cell of the factorial design, before crossing with weights.
struct BasePoint {
  AdjacencyGraph graph;
  std::optional<std::pair<int, int>> lattice_shape;
  int p = 1;
};

std::vector<BasePoint> base_points(const SimDesign& d) {
  std::vector<BasePoint> out;
  auto add = [&](const AdjacencyGraph& g, std::optional<std::pair<int, int>> shape) {
    for (int p : d.p_values) {
      // Factorial cells with p >= n are skipped, as in the p < n restriction.
      if (p >= g.n()) continue;
      out.push_back({g, shape, p});
    }
  };
  if (d.topology == Topology::custom_graph) {
    add(*d.graph, std::nullopt);
  } else {
    const LatticeScheme scheme =
        d.topology == Topology::lattice_queen ? LatticeScheme::queen : LatticeScheme::rook;
    for (int m : d.lattice_sizes) add(build_lattice(m, m, scheme), std::make_pair(m, m));
  }
  if (out.empty()) throw Error(ErrorKind::invalid_dimension, "design has no cell with p < n");
  return out;
}

std::vector<std::string> weight_labels(const SimDesign& d) {
  if (!d.weights.empty()) return d.weights;
  switch (d.topology) {
    case Topology::lattice_queen: return {"queen"};
    case Topology::lattice_rook: return {"rook"};
    case Topology::custom_graph: return {"custom"};
  }
  return {};
}

std::string design_id(const SimDesign& d, const BasePoint& b) {
  return to_string(d.topology) + "_n" + std::to_string(b.graph.n()) + "_p" + std::to_string(b.p);
}

std::uint64_t stream_master(std::uint64_t seed, int stream) {
  return stream == 0 ? seed : derive_seed(seed, {static_cast<std::uint64_t>(stream)});
}

Covariates covariates_for(const BasePoint& b, std::uint64_t seed, std::size_t base_index) {
  const auto& coords = b.graph.coords();
  if (!coords && b.p >= 2) {
    throw Error(ErrorKind::invalid_dimension, "covariates with p >= 2 need coordinates");
  }
  const std::span<const Point> pts = coords ? std::span<const Point>(*coords) : std::span<const Point>();
  return build_covariates(pts, b.graph.n(), b.p,
                          derive_seed(seed, {covariate_stream, base_index}));
}

}  // namespace

Covariates build_covariates(std::span<const Point> coords, int n, int p, std::uint64_t seed) {
  if (p < 1) throw Error(ErrorKind::invalid_dimension, "p must be at least 1 (intercept)");
  if (p >= n) {
    throw Error(ErrorKind::invalid_dimension,
                "p = " + std::to_string(p) + " must be smaller than n = " + std::to_string(n));
  }
  if (p >= 2 && static_cast<int>(coords.size()) != n) {
    throw Error(ErrorKind::length_mismatch, "coordinates do not match n");
  }
  Rng rng(seed);
  std::normal_distribution<double> noise(0.0, 0.1);
  Eigen::MatrixXd x(n, p);
  x.col(0).setOnes();
  for (int j = 1; j < p; ++j) {
    if (j <= 2) {
      for (int i = 0; i < n; ++i) {
        const Point& c = coords[static_cast<std::size_t>(i)];
        x(i, j) = j == 1 ? c.x : c.y;
      }
      standardize_column(x.col(j));
      for (int i = 0; i < n; ++i) x(i, j) += noise(rng);
    } else {
      x.col(j) = standard_normal(rng, n);
    }
    standardize_column(x.col(j));
  }
  Eigen::VectorXd beta(p);
  beta(0) = 1.0;
  for (int j = 1; j < p; ++j) beta(j) = 0.6 / std::sqrt(static_cast<double>(j));
  return {DesignMatrix(std::move(x)), std::move(beta)};
}

SemGenerator::SemGenerator(const DesignMatrix& x, Eigen::VectorXd beta, const WeightMatrix& w,
                           double rho, double sigma)
    : sigma_(sigma) {
  if (w.n() != x.n() || beta.size() != x.p()) {
    throw Error(ErrorKind::length_mismatch, "SEM generator: X, beta and W disagree");
  }
  if (!(sigma > 0.0)) throw Error(ErrorKind::domain, "sigma must be positive");
  mean_ = x.matrix() * beta;
  const Eigen::MatrixXd r =
      Eigen::MatrixXd::Identity(w.n(), w.n()) - rho * w.matrix();
  lu_.compute(r);
  const Eigen::VectorXd diag = lu_.matrixLU().diagonal().cwiseAbs();
  if (!(diag.minCoeff() > 1e-13 * std::max(1.0, diag.maxCoeff()))) {
    throw Error(ErrorKind::singular, "I - rho W is singular at rho = " + format_double(rho));
  }
}

Eigen::VectorXd SemGenerator::draw_errors(std::uint64_t seed) const {
  Rng rng(seed);
  const Eigen::VectorXd eps = sigma_ * standard_normal(rng, mean_.size());
  return lu_.solve(eps);
}

Eigen::VectorXd SemGenerator::draw(std::uint64_t seed) const { return mean_ + draw_errors(seed); }

Eigen::VectorXd generate_sem(const DesignMatrix& x, const Eigen::VectorXd& beta,
                             const WeightMatrix& w, double rho, double sigma, std::uint64_t seed) {
  return SemGenerator(x, beta, w, rho, sigma).draw(seed);
}

std::string to_string(Topology t) {
  switch (t) {
    case Topology::lattice_queen: return "lattice_queen";
    case Topology::lattice_rook: return "lattice_rook";
    case Topology::custom_graph: return "custom_graph";
  }
  return "?";
}

Topology parse_topology(const std::string& s) {
  if (s == "lattice_queen") return Topology::lattice_queen;
  if (s == "lattice_rook") return Topology::lattice_rook;
  if (s == "custom_graph") return Topology::custom_graph;
  throw Error(ErrorKind::domain, "unknown topology '" + s + "'");
}

std::string to_string(StudyKind k) { return k == StudyKind::estimation ? "estimation" : "power"; }

std::string to_string(PowerMethod m) {
  switch (m) {
    case PowerMethod::resaple_exact: return "resaple_exact";
    case PowerMethod::resaple_perm: return "resaple_perm";
    case PowerMethod::resaple_z: return "resaple_z";
    case PowerMethod::moran_perm: return "moran_perm";
    case PowerMethod::aple_perm: return "aple_perm";
    case PowerMethod::maple_perm: return "maple_perm";
  }
  return "?";
}

PowerMethod parse_power_method(const std::string& s) {
  for (PowerMethod m : {PowerMethod::resaple_exact, PowerMethod::resaple_perm,
                        PowerMethod::resaple_z, PowerMethod::moran_perm, PowerMethod::aple_perm,
                        PowerMethod::maple_perm}) {
    if (to_string(m) == s) return m;
  }
  throw Error(ErrorKind::domain, "unknown power method '" + s + "'");
}

std::vector<double> SimDesign::default_rho_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 19; ++i) g.push_back(0.05 * i);
  return g;
}

void SimDesign::validate() const {
  if (topology == Topology::custom_graph) {
    if (!graph) throw Error(ErrorKind::invalid_dimension, "custom_graph design needs a graph");
  } else {
    if (lattice_sizes.empty()) throw Error(ErrorKind::invalid_dimension, "no lattice sizes");
    for (int m : lattice_sizes) {
      if (m < 2) throw Error(ErrorKind::invalid_dimension, "lattice size must be at least 2");
    }
  }
  if (p_values.empty()) throw Error(ErrorKind::invalid_dimension, "no covariate dimensions");
  for (int p : p_values) {
    if (p < 1) throw Error(ErrorKind::invalid_dimension, "p must be at least 1");
  }
  if (rho_grid.empty()) throw Error(ErrorKind::domain, "empty rho grid");
  for (double r : rho_grid) {
    // Candidates are row-standardised, so the valid region is |rho| < 1.
    if (!(std::abs(r) < 1.0)) {
      throw Error(ErrorKind::domain, "rho = " + format_double(r) + " outside (-1, 1)");
    }
  }
  if (!(sigma > 0.0)) throw Error(ErrorKind::domain, "sigma must be positive");
  if (replicates < 1 || seed_streams < 1) {
    throw Error(ErrorKind::domain, "replicates and seed_streams must be positive");
  }
  if (!(alpha > 0.0 && alpha < 1.0)) throw Error(ErrorKind::domain, "alpha must lie in (0, 1)");
  if (study == StudyKind::power && permutations < 19) {
    throw Error(ErrorKind::domain, "at least 19 permutations are required");
  }
  if (study == StudyKind::estimation && estimators.empty()) {
    throw Error(ErrorKind::domain, "no estimators requested");
  }
  if (study == StudyKind::power && power_methods.empty()) {
    throw Error(ErrorKind::domain, "no test methods requested");
  }
}

std::string SimMetrics::to_csv() const {
  std::ostringstream os;
  os << "design_id,topology,n,p,w_label,method,rho_true,metric,value,mc_se\n";
  for (const MetricRow& r : rows) {
    os << r.design_id << ',' << r.topology << ',' << r.n << ',' << r.p << ',' << r.w_label << ','
       << r.method << ',' << format_double(r.rho_true) << ',' << r.metric << ','
       << format_double(r.value) << ',';
    if (r.mc_se) os << format_double(*r.mc_se);
    os << '\n';
  }
  return os.str();
}

WeightMatrix candidate_weights(const std::string& label, const AdjacencyGraph& base,
                               std::optional<std::pair<int, int>> lattice_shape) {
  if (label == "custom") return row_standardize(base);
  if (label == "rook" || label == "queen") {
    if (!lattice_shape) {
      throw Error(ErrorKind::domain, "'" + label + "' weights need a lattice topology");
    }
    return row_standardize(build_lattice(lattice_shape->first, lattice_shape->second,
                                         parse_lattice_scheme(label)));
  }
  if (label.rfind("knn", 0) == 0 && label.size() > 3) {
    int k = 0;
    try {
      k = std::stoi(label.substr(3));
    } catch (const std::exception&) {
      throw Error(ErrorKind::domain, "bad weights label '" + label + "'");
    }
    if (!base.coords()) throw Error(ErrorKind::domain, "kNN weights need coordinates");
    return row_standardize(build_knn(*base.coords(), k));
  }
  throw Error(ErrorKind::domain,
              "unknown weights label '" + label + "' (expected rook, queen, knn<k>, custom)");
}

SimMetrics run_estimation_study(const SimDesign& design, std::uint64_t seed) {
  design.validate();
  const std::vector<BasePoint> bases = base_points(design);
  const std::vector<std::string> labels = weight_labels(design);
  const std::size_t n_rho = design.rho_grid.size();
  const std::size_t n_est = design.estimators.size();
  const int k_total = design.replicates * design.seed_streams;
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();

  SimMetrics out;
  std::uint64_t point_index = 0;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const BasePoint& base = bases[b];
    const Covariates cov = covariates_for(base, seed, b);
    for (const std::string& label : labels) {
      const std::uint64_t d = point_index++;
      const WeightMatrix w = candidate_weights(label, base.graph, base.lattice_shape);
      const ResidualSpace space = build_residual_space(cov.x, w);
      const ResidualStatistics stats(cov.x, w, space);
      std::optional<RemlProblem> reml;
      for (Estimator e : design.estimators) {
        if (e == Estimator::reml) reml.emplace(cov.x, w);
      }
      std::vector<SemGenerator> generators;
      generators.reserve(n_rho);
      for (double rho : design.rho_grid) generators.emplace_back(cov.x, cov.beta, w, rho, design.sigma);

      // estimates[(rho * K + k) * n_est + m]
      std::vector<double> estimates(n_rho * static_cast<std::size_t>(k_total) * n_est, nan);
      parallel_for(n_rho * static_cast<std::size_t>(k_total), design.threads, [&](std::size_t task) {
        const std::size_t ri = task / static_cast<std::size_t>(k_total);
        const int k = static_cast<int>(task % static_cast<std::size_t>(k_total));
        const int stream = k / design.replicates;
        const int rep = k % design.replicates;
        const std::uint64_t rep_seed =
            derive_seed(stream_master(seed, stream), {d, ri, static_cast<std::uint64_t>(rep)});
        const Eigen::VectorXd z = generators[ri].draw(derive_seed(rep_seed, {data_stream}));
        const Eigen::VectorXd resid = space.h() * (space.h().transpose() * z);
        for (std::size_t m = 0; m < n_est; ++m) {
          double v = nan;
          try {
            v = design.estimators[m] == Estimator::reml ? reml->fit(z).rho_hat
                                                        : stats.evaluate(design.estimators[m], resid);
          } catch (const Error&) {
            v = nan;
          }
          estimates[task * n_est + m] = v;
        }
      });

      for (std::size_t ri = 0; ri < n_rho; ++ri) {
        const double rho = design.rho_grid[ri];
        for (std::size_t m = 0; m < n_est; ++m) {
          double sum = 0.0;
          int ok = 0;
          for (int k = 0; k < k_total; ++k) {
            const double v = estimates[(ri * k_total + k) * n_est + m];
            if (std::isnan(v)) continue;
            sum += v;
            ++ok;
          }
          double bias = nan, sd = nan, rmse = nan, se_bias = nan, se_sd = nan, se_rmse = nan;
          if (ok > 0) {
            const double mean = sum / ok;
            double ss = 0.0;
            double sq_err = 0.0;
            for (int k = 0; k < k_total; ++k) {
              const double v = estimates[(ri * k_total + k) * n_est + m];
              if (std::isnan(v)) continue;
              ss += (v - mean) * (v - mean);
              sq_err += (v - rho) * (v - rho);
            }
            bias = mean - rho;
            sd = std::sqrt(ss / ok);
            const double mse = sq_err / ok;
            rmse = std::sqrt(mse);
            se_bias = sd / std::sqrt(static_cast<double>(ok));
            se_sd = sd / std::sqrt(2.0 * ok);
            // Delta method on sqrt of the mean squared error.
            double var_sq = 0.0;
            for (int k = 0; k < k_total; ++k) {
              const double v = estimates[(ri * k_total + k) * n_est + m];
              if (std::isnan(v)) continue;
              const double dev = (v - rho) * (v - rho) - mse;
              var_sq += dev * dev;
            }
            var_sq /= ok;
            se_rmse = rmse > 0.0 ? std::sqrt(var_sq / ok) / (2.0 * rmse) : 0.0;
          }
          const std::string method = to_string(design.estimators[m]);
          auto emit = [&](const char* metric, double value, std::optional<double> se) {
            out.rows.push_back({design_id(design, base), to_string(design.topology),
                                base.graph.n(), base.p, label, method, rho, metric, value, se});
          };
          emit("bias", bias, se_bias);
          emit("sd", sd, se_sd);
          emit("rmse", rmse, se_rmse);
          emit("n_failed", static_cast<double>(k_total - ok), std::nullopt);
        }
      }
    }
  }
  return out;
}

SimMetrics run_power_study(const SimDesign& design, std::uint64_t seed) {
  design.validate();
  const std::vector<BasePoint> bases = base_points(design);
  const std::vector<std::string> labels = weight_labels(design);
  const std::size_t n_rho = design.rho_grid.size();
  const std::size_t n_meth = design.power_methods.size();
  const int k_total = design.replicates * design.seed_streams;

  SimMetrics out;
  std::uint64_t point_index = 0;
  for (std::size_t b = 0; b < bases.size(); ++b) {
    const BasePoint& base = bases[b];
    const Covariates cov = covariates_for(base, seed, b);
    std::optional<WeightMatrix> dgp_fixed;
    if (design.dgp_weights) {
      dgp_fixed.emplace(candidate_weights(*design.dgp_weights, base.graph, base.lattice_shape));
    }
    for (const std::string& label : labels) {
      const std::uint64_t d = point_index++;
      const WeightMatrix w = candidate_weights(label, base.graph, base.lattice_shape);
      const WeightMatrix& w_dgp = dgp_fixed ? *dgp_fixed : w;
      const ResidualSpace space = build_residual_space(cov.x, w);
      const ResidualStatistics stats(cov.x, w, space);
      std::vector<SemGenerator> generators;
      generators.reserve(n_rho);
      for (double rho : design.rho_grid) {
        generators.emplace_back(cov.x, cov.beta, w_dgp, rho, design.sigma);
      }

      // outcome: 1 reject, 0 accept, -1 failed.
      std::vector<signed char> outcome(n_rho * static_cast<std::size_t>(k_total) * n_meth, -1);
      parallel_for(n_rho * static_cast<std::size_t>(k_total), design.threads, [&](std::size_t task) {
        const std::size_t ri = task / static_cast<std::size_t>(k_total);
        const int k = static_cast<int>(task % static_cast<std::size_t>(k_total));
        const int stream = k / design.replicates;
        const int rep = k % design.replicates;
        const std::uint64_t rep_seed =
            derive_seed(stream_master(seed, stream), {d, ri, static_cast<std::uint64_t>(rep)});
        const Eigen::VectorXd z = generators[ri].draw(derive_seed(rep_seed, {data_stream}));
        const Eigen::VectorXd e = space.h().transpose() * z;
        PermutationOptions opt;
        opt.scheme = design.scheme;
        opt.permutations = design.permutations;
        opt.seed = derive_seed(rep_seed, {permutation_stream});
        opt.side = design.side;
        opt.threads = 1;
        for (std::size_t m = 0; m < n_meth; ++m) {
          double pv = std::numeric_limits<double>::quiet_NaN();
          try {
            switch (design.power_methods[m]) {
              case PowerMethod::resaple_exact: pv = exact_test(space, e, design.side).p_value; break;
              case PowerMethod::resaple_z: pv = z_test(space, e, design.side).p_value; break;
              case PowerMethod::resaple_perm:
                opt.statistic = Estimator::resaple;
                pv = permutation_test(stats, z, opt).p_value;
                break;
              case PowerMethod::moran_perm:
                opt.statistic = Estimator::moran;
                pv = permutation_test(stats, z, opt).p_value;
                break;
              case PowerMethod::aple_perm:
                opt.statistic = Estimator::aple;
                pv = permutation_test(stats, z, opt).p_value;
                break;
              case PowerMethod::maple_perm:
                opt.statistic = Estimator::maple;
                pv = permutation_test(stats, z, opt).p_value;
                break;
            }
          } catch (const Error&) {
            continue;
          }
          outcome[task * n_meth + m] = pv <= design.alpha ? 1 : 0;
        }
      });

      for (std::size_t ri = 0; ri < n_rho; ++ri) {
        const double rho = design.rho_grid[ri];
        for (std::size_t m = 0; m < n_meth; ++m) {
          int ok = 0;
          int rejected = 0;
          for (int k = 0; k < k_total; ++k) {
            const signed char o = outcome[(ri * k_total + k) * n_meth + m];
            if (o < 0) continue;
            ++ok;
            rejected += o;
          }
          const double rate = ok > 0 ? static_cast<double>(rejected) / ok
                                     : std::numeric_limits<double>::quiet_NaN();
          const double se = ok > 0 ? std::sqrt(rate * (1.0 - rate) / ok)
                                   : std::numeric_limits<double>::quiet_NaN();
          const std::string method = to_string(design.power_methods[m]);
          auto emit = [&](const char* metric, double value, std::optional<double> mc_se) {
            out.rows.push_back({design_id(design, base), to_string(design.topology),
                                base.graph.n(), base.p, label, method, rho, metric, value, mc_se});
          };
          emit("rejection_rate", rate, se);
          emit("i_r0", space.i_r0(), std::nullopt);
          emit("n_failed", static_cast<double>(k_total - ok), std::nullopt);
        }
      }
    }
  }
  return out;
}

SimMetrics run_study(const SimDesign& design, std::uint64_t seed) {
  return design.study == StudyKind::estimation ? run_estimation_study(design, seed)
                                               : run_power_study(design, seed);
}

}  // namespace resaple
