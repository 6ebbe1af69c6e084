#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <numbers>
#include <string>
#include <vector>

#include "mfgrec/io.hpp"
#include "mfgrec/optimizer.hpp"

/// Built-in test problems, the noise model, error metrics, and the
/// config-driven experiment pipeline behind the CLI.
namespace mfgrec {

enum class TestCase { Poly, Trig, CShape, CustomFile };

inline const char* to_string(TestCase c) {
  switch (c) {
    case TestCase::Poly: return "poly";
    case TestCase::Trig: return "trig";
    case TestCase::CShape: return "cshape";
    case TestCase::CustomFile: return "custom-file";
  }
  return "unknown";
}

inline TestCase test_case_from_string(const std::string& s) {
  if (s == "poly") return TestCase::Poly;
  if (s == "trig") return TestCase::Trig;
  if (s == "cshape") return TestCase::CShape;
  if (s == "custom-file") return TestCase::CustomFile;
  throw InvalidFieldError("unknown test case: " + s);
}

/// Closed-form value functions used to manufacture data.  Poly and trig
/// satisfy the zero-Neumann requirement analytically; the expanding-C shape
/// is compactly supported away from the boundary.
inline Field test_generator(TestCase c, const GridSpec& g) {
  switch (c) {
    case TestCase::Poly:
      if (g.dim == 1)
        return Field::from_function(g, [](double x, double, double t) {
          return x * x * (x - 1.0) * (x - 1.0) * (x + 1.0) * (t * t + 1.0);
        });
      return Field::from_function(g, [](double x, double y, double t) {
        const double fx = x * x * (x - 1.0) * (x - 1.0) * (x + 1.0);
        const double fy = y * y * (y - 1.0) * (y - 1.0) * (y + 2.0);
        return fx * fy * (t * t + 1.0);
      });
    case TestCase::Trig: {
      const double pi = std::numbers::pi;
      if (g.dim == 1)
        return Field::from_function(g, [pi](double x, double, double t) {
          return 0.01 * std::cos(pi * x) * (t * t + 1.0);
        });
      return Field::from_function(g, [pi](double x, double y, double t) {
        return 0.01 * std::cos(pi * x) * std::sin(pi * (y - 0.5)) *
               (t * t + 1.0);
      });
    }
    case TestCase::CShape: {
      if (g.dim != 2)
        throw InvalidFieldError("cshape generator is 2-D only");
      return Field::from_function(g, [](double x, double y, double t) {
        const double d = std::sqrt((x - 0.6) * (x - 0.6) + (y - 0.5) * (y - 0.5));
        const double r1 = 0.05 * (1.0 - t) + 0.15 * t;
        const double r2 = 0.35 * (1.0 - t) + 0.45 * t;
        const double r3 = 0.5 * (r1 + r2);
        if (d < r1 || d > r2 || x > 0.75) return 0.0;
        const double hv = 0.1 * (0.75 - x) * (d - r1) * (r2 - d) *
                          std::exp(-100.0 * (d - r3) * (d - r3));
        return hv * (1.0 + t * t);
      });
    }
    case TestCase::CustomFile:
      throw InvalidFieldError("custom-file case has no closed-form generator");
  }
  throw InvalidFieldError("unreachable test case");
}

/// Gaussian initial density centred in the unit box, center value 1/(2 pi).
inline SpatialField gaussian_m0(const GridSpec& g) {
  const double norm = 1.0 / (2.0 * std::numbers::pi);
  if (g.dim == 1)
    return SpatialField::from_function(g, [norm](double x, double) {
      return norm * std::exp(-0.5 * (x - 0.5) * (x - 0.5));
    });
  return SpatialField::from_function(g, [norm](double x, double y) {
    return norm *
           std::exp(-0.5 * ((x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5)));
  });
}

namespace detail {

/// Deterministic uniform draws in [0,1), identical across platforms.
class UniformStream {
 public:
  explicit UniformStream(std::uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ull) {}

  double next() {
    // splitmix64 step, then map the top 53 bits to [0,1)
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    z ^= z >> 31;
    return static_cast<double>(z >> 11) * 0x1.0p-53;
  }

 private:
  std::uint64_t state_;
};

}  // namespace detail

/// Multiplicative measurement noise: each data node is scaled by
/// (1 + delta * zeta) with zeta uniform in [0,1) (one-sided, as specified
/// for the experiments) or in [-1,1) behind the symmetric flag.  Ground
/// truth fields are left untouched.  Draw order: uT, p0, pT.
inline Dataset add_noise(const Dataset& ds, double delta, std::uint64_t seed,
                         bool symmetric = false) {
  if (delta < 0.0) throw std::domain_error("add_noise: delta >= 0 required");
  Dataset noisy = ds;
  if (delta == 0.0) return noisy;
  detail::UniformStream rng(seed);
  auto apply = [&](SpatialField& f) {
    for (double& v : f.values) {
      double zeta = rng.next();
      if (symmetric) zeta = 2.0 * zeta - 1.0;
      v *= 1.0 + delta * zeta;
    }
  };
  apply(noisy.uT);
  apply(noisy.p0);
  apply(noisy.pT);
  return noisy;
}

/// Relative discrete-L2(Q_T) reconstruction errors, plus per-time-level
/// errors for cross-section reporting.
struct ErrorReport {
  double u_E = 0.0;
  double p_E = 0.0;
  std::vector<double> u_err_per_level;
  std::vector<double> p_err_per_level;
};

inline ErrorReport relative_errors(const Field& truth_u, const Field& truth_p,
                                   const Field& comp_u, const Field& comp_p) {
  require_same_grid(truth_u.grid, comp_u.grid, "relative_errors");
  require_same_grid(truth_p.grid, comp_p.grid, "relative_errors");
  ErrorReport rep;
  auto rel = [](const Field& truth, const Field& comp) {
    Field diff = comp;
    axpy(diff, -1.0, truth);
    const double denom = norm_l2_qt(truth);
    if (denom == 0.0) return norm_l2_qt(diff) == 0.0 ? 0.0 : 1.0;
    return norm_l2_qt(diff) / denom;
  };
  rep.u_E = rel(truth_u, comp_u);
  rep.p_E = rel(truth_p, comp_p);

  const GridSpec& g = truth_u.grid;
  const auto ws = quad_weights_omega(g);
  auto level_rel = [&](const Field& truth, const Field& comp, int k) {
    const double* tv = truth.level(k);
    const double* cv = comp.level(k);
    double num = 0.0, den = 0.0;
    for (int m = 0; m < g.n_space(); ++m) {
      const double d = cv[m] - tv[m];
      num += ws[m] * d * d;
      den += ws[m] * tv[m] * tv[m];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : 1.0;
    return std::sqrt(num / den);
  };
  for (int k = 0; k < g.nt; ++k) {
    rep.u_err_per_level.push_back(level_rel(truth_u, comp_u, k));
    rep.p_err_per_level.push_back(level_rel(truth_p, comp_p, k));
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Experiment pipeline.
// ---------------------------------------------------------------------------

struct ExperimentSpec {
  TestCase test_case = TestCase::Poly;
  std::string custom_dataset_dir;  // for the custom-file case

  int dim = 2;
  int fine_nx = 81, fine_ny = 81, fine_nt = 321;
  int coarse_nx = 21, coarse_ny = 21, coarse_nt = 11;
  double lx = 1.0, ly = 1.0, horizon = 1.0;

  double beta = 0.02;
  double s_const = 1.0;
  double f_const = 1.0;
  double kernel_const = 1.0;

  FunctionalParams functional;       // a, lambda, gamma, c1, reg_order
  std::vector<double> lambda_list;   // sweep values; empty = single run
  OptimizerConfig optimizer;

  double noise_delta = 0.0;
  std::uint64_t noise_seed = 1;
  bool symmetric_noise = false;

  std::string output_dir;

  GridSpec fine_grid() const {
    return dim == 1 ? GridSpec::make_1d(fine_nx, fine_nt, lx, horizon)
                    : GridSpec::make_2d(fine_nx, fine_ny, fine_nt, lx, ly,
                                        horizon);
  }
  GridSpec coarse_grid() const {
    return dim == 1 ? GridSpec::make_1d(coarse_nx, coarse_nt, lx, horizon)
                    : GridSpec::make_2d(coarse_nx, coarse_ny, coarse_nt, lx,
                                        ly, horizon);
  }
};

/// Paper-style coefficients with constant s, f, K.
inline MfgCoefficients constant_coefficients(const GridSpec& g, double beta,
                                             double s_const, double f_const,
                                             double kernel_const) {
  MfgCoefficients c;
  c.beta = beta;
  c.s = Field(g, s_const);
  c.f = Field(g, f_const);
  c.kernel = Kernel::constant(kernel_const);
  c.F1 = Field(g);
  c.F2 = Field(g);
  return c;
}

/// Build the dataset for a spec: closed-form generator on the fine grid,
/// density solve, restriction and manufactured source, or a dataset loaded
/// from disk for the custom-file case.
inline Dataset build_dataset(const ExperimentSpec& spec) {
  if (spec.test_case == TestCase::CustomFile) {
    if (spec.custom_dataset_dir.empty())
      throw InvalidFieldError("custom-file case requires a dataset directory");
    return io::load_dataset(spec.custom_dataset_dir);
  }
  const GridSpec fine = spec.fine_grid();
  const GridSpec coarse = spec.coarse_grid();
  GeneratorSpec gen{test_generator(spec.test_case, fine), gaussian_m0(fine),
                    fine, coarse};
  const MfgCoefficients coeffs = constant_coefficients(
      fine, spec.beta, spec.s_const, spec.f_const, spec.kernel_const);
  return generate_dataset(gen, coeffs);
}

struct ExperimentResult {
  ErrorReport errors;
  RunReport report;
};

namespace detail {

inline int nearest_node(double coord, double length, int n) {
  const double h = length / (n - 1);
  int i = static_cast<int>(std::lround(coord / h));
  return std::min(std::max(i, 0), n - 1);
}

inline void write_slices(const std::filesystem::path& dir, const Dataset& ds,
                         const Field& u_comp, const Field& p_comp) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  const GridSpec& g = ds.grid();
  const std::vector<double> coords = {0.2, 0.5, 0.8};
  for (double y_target : coords) {
    const int j = g.dim == 2 ? nearest_node(y_target, g.ly, g.ny) : 0;
    for (double t_target : coords) {
      const int k = nearest_node(t_target, g.horizon, g.nt);
      char name[64];
      std::snprintf(name, sizeof(name), "slice_x2_%.2f_t_%.2f.csv", y_target,
                    t_target);
      std::ofstream out(dir / name);
      out << "# x2_node=" << io::format_double(g.y(j))
          << " t_node=" << io::format_double(g.t(k)) << '\n';
      out << "x1,u_true,u_comp,p_true,p_comp\n";
      for (int i = 0; i < g.nx; ++i) {
        out << io::format_double(g.x(i)) << ','
            << io::format_double(ds.has_truth ? ds.truth_u.at(k, j, i) : 0.0)
            << ',' << io::format_double(u_comp.at(k, j, i)) << ','
            << io::format_double(ds.has_truth ? ds.truth_p.at(k, j, i) : 0.0)
            << ',' << io::format_double(p_comp.at(k, j, i)) << '\n';
      }
    }
  }
}

inline nlohmann::json spec_to_json(const ExperimentSpec& spec) {
  nlohmann::json j;
  j["test_case"] = std::string(to_string(spec.test_case));
  if (!spec.custom_dataset_dir.empty())
    j["custom_dataset_dir"] = spec.custom_dataset_dir;
  j["dim"] = spec.dim;
  j["fine_grid"] = {{"nx", spec.fine_nx}, {"ny", spec.fine_ny}, {"nt", spec.fine_nt}};
  j["coarse_grid"] = {{"nx", spec.coarse_nx}, {"ny", spec.coarse_ny}, {"nt", spec.coarse_nt}};
  j["domain"] = {{"lx", spec.lx}, {"ly", spec.ly}, {"T", spec.horizon}};
  j["model"] = {{"beta", spec.beta},
                {"s", spec.s_const},
                {"f", spec.f_const},
                {"kernel", spec.kernel_const}};
  j["functional"] = {{"a", spec.functional.carleman.a},
                     {"lambda", spec.functional.carleman.lambda},
                     {"gamma", spec.functional.gamma},
                     {"c1", spec.functional.c1},
                     {"reg_order", spec.functional.reg_order}};
  j["optimizer"] = {{"step0", spec.optimizer.step0},
                    {"backtrack", spec.optimizer.backtrack},
                    {"armijo", spec.optimizer.armijo},
                    {"max_iters", spec.optimizer.max_iters},
                    {"grad_tol", spec.optimizer.grad_tol},
                    {"metric", spec.optimizer.metric ==
                                       OptimizerConfig::Metric::Sobolev
                                   ? "sobolev"
                                   : "quadrature"},
                    {"lbfgs", spec.optimizer.lbfgs}};
  j["noise"] = {{"delta", spec.noise_delta},
                {"seed", spec.noise_seed},
                {"symmetric", spec.symmetric_noise}};
  if (!spec.lambda_list.empty()) j["lambda_list"] = spec.lambda_list;
  return j;
}

}  // namespace detail

/// Full pipeline: dataset (generated or loaded), optional noise, descent,
/// error metrics, artifact files.  Returns the errors and the run report;
/// writes manifest.json, errors.csv, iterations.csv, final fields and the
/// cross-section slices when an output directory is set.
inline ExperimentResult run_experiment(const ExperimentSpec& spec,
                                       const Dataset* prebuilt = nullptr) {
  const Dataset clean = prebuilt ? *prebuilt : build_dataset(spec);
  const Dataset data =
      add_noise(clean, spec.noise_delta, spec.noise_seed, spec.symmetric_noise);

  // flag the run as partial until every artifact has been written
  if (!spec.output_dir.empty()) {
    std::filesystem::create_directories(spec.output_dir);
    nlohmann::json manifest = detail::spec_to_json(spec);
    manifest["dataset_content_hash"] = io::dataset_content_hash(data);
    manifest["complete"] = false;
    std::ofstream mout(std::filesystem::path(spec.output_dir) / "manifest.json");
    mout << manifest.dump(2) << '\n';
  }

  ExperimentResult result;
  result.report = descend(spec.optimizer, spec.functional, data.coeffs, data);
  if (clean.has_truth)
    result.errors = relative_errors(clean.truth_u, clean.truth_p,
                                    result.report.final_u,
                                    result.report.final_p);

  if (!spec.output_dir.empty()) {
    namespace fs = std::filesystem;
    const fs::path out(spec.output_dir);

    std::ofstream eout(out / "errors.csv");
    eout << "u_E,p_E\n"
         << io::format_double(result.errors.u_E) << ','
         << io::format_double(result.errors.p_E) << '\n';
    eout << "level,t,u_E_level,p_E_level\n";
    const GridSpec& g = data.grid();
    for (int k = 0; k < g.nt; ++k)
      eout << k << ',' << io::format_double(g.t(k)) << ','
           << io::format_double(result.errors.u_err_per_level.empty()
                                    ? -1.0
                                    : result.errors.u_err_per_level[k])
           << ','
           << io::format_double(result.errors.p_err_per_level.empty()
                                    ? -1.0
                                    : result.errors.p_err_per_level[k])
           << '\n';

    io::save_iterations_csv(out / "iterations.csv", result.report);
    io::save_field(out / "fields" / "u_comp", result.report.final_u);
    io::save_field(out / "fields" / "p_comp", result.report.final_p);
    if (clean.has_truth) {
      io::save_field(out / "fields" / "u_true", clean.truth_u);
      io::save_field(out / "fields" / "p_true", clean.truth_p);
    }
    detail::write_slices(out / "slices", clean, result.report.final_u,
                         result.report.final_p);

    nlohmann::json manifest = detail::spec_to_json(spec);
    manifest["dataset_content_hash"] = io::dataset_content_hash(data);
    manifest["run"] = io::report_summary_json(result.report);
    manifest["complete"] = true;
    std::ofstream mout(out / "manifest.json");
    mout << manifest.dump(2) << '\n';
  }
  return result;
}

struct SweepRow {
  double lambda = 0.0;
  double u_E = 0.0;
  double p_E = 0.0;
  RunStatus status = RunStatus::MaxIters;
  int iterations = 0;
};

/// One descent per lambda on a shared dataset and noise seed.  Runs are
/// independent and execute concurrently; outputs land in per-lambda
/// subdirectories plus a single table shaped like the reference sweep.
inline std::vector<SweepRow> sweep_lambda(const ExperimentSpec& spec) {
  if (spec.lambda_list.empty())
    throw InvalidFieldError("sweep_lambda: lambda_list is empty");
  const Dataset clean = build_dataset(spec);

  auto run_one = [&](double lambda) {
    ExperimentSpec s = spec;
    s.functional.carleman.lambda = lambda;
    if (!spec.output_dir.empty()) {
      char sub[48];
      std::snprintf(sub, sizeof(sub), "lambda_%g", lambda);
      s.output_dir = (std::filesystem::path(spec.output_dir) / sub).string();
    }
    ExperimentResult r = run_experiment(s, &clean);
    SweepRow row;
    row.lambda = lambda;
    row.u_E = r.errors.u_E;
    row.p_E = r.errors.p_E;
    row.status = r.report.status;
    row.iterations = r.report.history.empty() ? 0 : r.report.history.back().iter;
    return row;
  };

  std::vector<std::future<SweepRow>> futures;
  futures.reserve(spec.lambda_list.size());
  for (double lambda : spec.lambda_list)
    futures.push_back(std::async(std::launch::async, run_one, lambda));
  std::vector<SweepRow> rows;
  rows.reserve(futures.size());
  for (auto& f : futures) rows.push_back(f.get());

  if (!spec.output_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(spec.output_dir);
    std::ofstream out(fs::path(spec.output_dir) / "sweep.csv");
    out << "lambda";
    for (const auto& r : rows) out << ',' << io::format_double(r.lambda);
    out << "\nu_E";
    for (const auto& r : rows) out << ',' << io::format_double(r.u_E);
    out << "\np_E";
    for (const auto& r : rows) out << ',' << io::format_double(r.p_E);
    out << "\nstatus";
    for (const auto& r : rows) out << ',' << to_string(r.status);
    out << "\niterations";
    for (const auto& r : rows) out << ',' << r.iterations;
    out << '\n';
  }
  return rows;
}

}  // namespace mfgrec
