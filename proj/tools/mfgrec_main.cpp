// Command-line front end: data generation, inversion runs, lambda sweeps and
// numerical diagnostics, all driven by flags or a JSON config file.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "mfgrec/mfgrec.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalidConfig = 2;
constexpr int kExitNumericFailure = 3;
constexpr int kExitLineSearchFailure = 4;

struct CliOptions {
  mfgrec::ExperimentSpec spec;
  std::string config_path;
  std::string data_dir;       // pre-generated dataset for invert
  std::string case_name = "poly";
  std::string metric = "sobolev";
  std::vector<double> lambdas = {0.01, 0.5, 1.0, 2.0, 3.0, 4.0, 6.0};
  int directions = 20;        // grad-check
  int nx = 0, ny = 0, nt = 0; // diag/check grid overrides
};

void apply_config_file(mfgrec::ExperimentSpec& spec, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw mfgrec::InvalidFieldError("config file not found: " + path);
  const nlohmann::json j = nlohmann::json::parse(in);

  if (j.contains("test_case"))
    spec.test_case = mfgrec::test_case_from_string(j["test_case"]);
  if (j.contains("custom_dataset_dir"))
    spec.custom_dataset_dir = j["custom_dataset_dir"];
  if (j.contains("dim")) spec.dim = j["dim"];
  if (j.contains("fine_grid")) {
    const auto& g = j["fine_grid"];
    spec.fine_nx = g.value("nx", spec.fine_nx);
    spec.fine_ny = g.value("ny", spec.fine_ny);
    spec.fine_nt = g.value("nt", spec.fine_nt);
  }
  if (j.contains("coarse_grid")) {
    const auto& g = j["coarse_grid"];
    spec.coarse_nx = g.value("nx", spec.coarse_nx);
    spec.coarse_ny = g.value("ny", spec.coarse_ny);
    spec.coarse_nt = g.value("nt", spec.coarse_nt);
  }
  if (j.contains("domain")) {
    const auto& d = j["domain"];
    spec.lx = d.value("lx", spec.lx);
    spec.ly = d.value("ly", spec.ly);
    spec.horizon = d.value("T", spec.horizon);
  }
  if (j.contains("model")) {
    const auto& m = j["model"];
    spec.beta = m.value("beta", spec.beta);
    spec.s_const = m.value("s", spec.s_const);
    spec.f_const = m.value("f", spec.f_const);
    spec.kernel_const = m.value("kernel", spec.kernel_const);
  }
  if (j.contains("functional")) {
    const auto& f = j["functional"];
    spec.functional.carleman.a = f.value("a", spec.functional.carleman.a);
    spec.functional.carleman.lambda =
        f.value("lambda", spec.functional.carleman.lambda);
    spec.functional.gamma = f.value("gamma", spec.functional.gamma);
    spec.functional.c1 = f.value("c1", spec.functional.c1);
    spec.functional.reg_order = f.value("reg_order", spec.functional.reg_order);
  }
  if (j.contains("optimizer")) {
    const auto& o = j["optimizer"];
    spec.optimizer.step0 = o.value("step0", spec.optimizer.step0);
    spec.optimizer.backtrack = o.value("backtrack", spec.optimizer.backtrack);
    spec.optimizer.armijo = o.value("armijo", spec.optimizer.armijo);
    spec.optimizer.max_iters = o.value("max_iters", spec.optimizer.max_iters);
    spec.optimizer.grad_tol = o.value("grad_tol", spec.optimizer.grad_tol);
    spec.optimizer.lbfgs = o.value("lbfgs", spec.optimizer.lbfgs);
    if (o.contains("metric")) {
      const std::string m = o["metric"];
      if (m == "sobolev")
        spec.optimizer.metric = mfgrec::OptimizerConfig::Metric::Sobolev;
      else if (m == "quadrature")
        spec.optimizer.metric = mfgrec::OptimizerConfig::Metric::Quadrature;
      else
        throw mfgrec::InvalidFieldError("unknown optimizer metric: " + m);
    }
  }
  if (j.contains("noise")) {
    const auto& n = j["noise"];
    spec.noise_delta = n.value("delta", spec.noise_delta);
    spec.noise_seed = n.value("seed", spec.noise_seed);
    spec.symmetric_noise = n.value("symmetric", spec.symmetric_noise);
  }
  if (j.contains("lambda_list"))
    spec.lambda_list = j["lambda_list"].get<std::vector<double>>();
  if (j.contains("output_dir")) spec.output_dir = j["output_dir"];
}

int cmd_generate(const CliOptions& opt) {
  if (opt.spec.output_dir.empty())
    throw mfgrec::InvalidFieldError("generate: --out is required");
  const mfgrec::Dataset ds = mfgrec::build_dataset(opt.spec);
  mfgrec::io::save_dataset(opt.spec.output_dir, ds);
  std::printf("dataset written to %s (grid %dx%dx%d)\n",
              opt.spec.output_dir.c_str(), ds.grid().nx, ds.grid().ny,
              ds.grid().nt);
  return kExitOk;
}

int cmd_invert(CliOptions& opt) {
  mfgrec::ExperimentResult result;
  if (!opt.data_dir.empty()) {
    opt.spec.test_case = mfgrec::TestCase::CustomFile;
    opt.spec.custom_dataset_dir = opt.data_dir;
  }
  result = mfgrec::run_experiment(opt.spec);
  const auto& rep = result.report;
  std::printf("status: %s after %d iterations\n", mfgrec::to_string(rep.status),
              rep.history.empty() ? 0 : rep.history.back().iter);
  std::printf("u_E = %.6f  p_E = %.6f\n", result.errors.u_E, result.errors.p_E);
  if (rep.status == mfgrec::RunStatus::LineSearchFailure)
    return kExitLineSearchFailure;
  return kExitOk;
}

int cmd_sweep(CliOptions& opt) {
  opt.spec.lambda_list = opt.lambdas;
  const auto rows = mfgrec::sweep_lambda(opt.spec);
  // per-run termination statuses are data in the table; the sweep itself
  // succeeds once every run produced its row
  std::printf("%-8s %-10s %-10s %-6s %s\n", "lambda", "u_E", "p_E", "iters",
              "status");
  for (const auto& r : rows)
    std::printf("%-8g %-10.4f %-10.4f %-6d %s\n", r.lambda, r.u_E, r.p_E,
                r.iterations, mfgrec::to_string(r.status));
  return kExitOk;
}

int cmd_diag_carleman(const CliOptions& opt) {
  const int nx = opt.nx > 0 ? opt.nx : 21;
  const int ny = opt.ny > 0 ? opt.ny : nx;
  const int nt = opt.nt > 0 ? opt.nt : 11;
  const mfgrec::GridSpec g = mfgrec::GridSpec::make_2d(
      nx, ny, nt, opt.spec.lx, opt.spec.ly, opt.spec.horizon);
  const double beta = opt.spec.beta;

  const mfgrec::Field fwd = mfgrec::Field::from_function(
      g, [&](double x, double, double t) {
        return (g.horizon - t) * std::cos(std::numbers::pi * x);
      });
  const mfgrec::Field bwd = mfgrec::Field::from_function(
      g, [&](double x, double, double t) {
        return t * (g.horizon - t) * std::cos(std::numbers::pi * x);
      });

  std::printf("%-8s %-14s %-14s\n", "lambda", "forward", "backward");
  for (double lambda : opt.lambdas) {
    mfgrec::CarlemanParams p{opt.spec.functional.carleman.a, lambda};
    const double rf = mfgrec::carleman_ratio_forward(fwd, p, beta);
    const double rb = mfgrec::carleman_ratio_backward(bwd, p, beta);
    std::printf("%-8g %-14.6e %-14.6e\n", lambda, rf, rb);
  }
  return kExitOk;
}

int cmd_grad_check(const CliOptions& opt) {
  const int nc = opt.nx > 0 ? opt.nx : 11;
  const int ntc = opt.nt > 0 ? opt.nt : 6;
  mfgrec::ExperimentSpec spec = opt.spec;
  spec.coarse_nx = spec.coarse_ny = nc;
  spec.coarse_nt = ntc;
  spec.fine_nx = spec.fine_ny = 4 * (nc - 1) + 1;
  spec.fine_nt = 4 * (ntc - 1) + 1;
  const mfgrec::Dataset ds = mfgrec::build_dataset(spec);
  const mfgrec::Lifting lift = mfgrec::make_lifting(ds);
  const mfgrec::GridSpec& g = ds.grid();

  std::mt19937 rng(42);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  mfgrec::ShiftedPair pair = mfgrec::ShiftedPair::zeros(g);
  for (double& v : pair.v.values) v = 0.05 * dist(rng);
  for (double& v : pair.w.values) v = 0.05 * dist(rng);
  mfgrec::enforce_pair_constraints(pair);

  const mfgrec::ShiftedPair grad =
      mfgrec::grad_j(spec.functional, ds.coeffs, pair, lift);
  const double eps = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < opt.directions; ++trial) {
    mfgrec::ShiftedPair dir = mfgrec::ShiftedPair::zeros(g);
    for (double& v : dir.v.values) v = dist(rng);
    for (double& v : dir.w.values) v = dist(rng);
    mfgrec::enforce_pair_constraints(dir);
    double norm = 0.0, an = 0.0;
    for (std::size_t m = 0; m < dir.v.values.size(); ++m) {
      norm += dir.v.values[m] * dir.v.values[m] +
              dir.w.values[m] * dir.w.values[m];
    }
    norm = std::sqrt(norm);
    for (double& v : dir.v.values) v /= norm;
    for (double& v : dir.w.values) v /= norm;
    for (std::size_t m = 0; m < dir.v.values.size(); ++m)
      an += grad.v.values[m] * dir.v.values[m] +
            grad.w.values[m] * dir.w.values[m];

    mfgrec::ShiftedPair plus = pair, minus = pair;
    mfgrec::axpy(plus.v, eps, dir.v);
    mfgrec::axpy(plus.w, eps, dir.w);
    mfgrec::axpy(minus.v, -eps, dir.v);
    mfgrec::axpy(minus.w, -eps, dir.w);
    const double fd =
        (mfgrec::eval_j(spec.functional, ds.coeffs, plus, lift).total() -
         mfgrec::eval_j(spec.functional, ds.coeffs, minus, lift).total()) /
        (2.0 * eps);
    const double rel = std::abs(fd - an) /
                       std::max({std::abs(fd), std::abs(an), 1e-12});
    worst = std::max(worst, rel);
    std::printf("direction %2d: analytic %+.9e  fd %+.9e  rel %.3e\n", trial,
                an, fd, rel);
  }
  std::printf("worst relative mismatch: %.3e\n", worst);
  return worst < 1e-6 ? kExitOk : kExitNumericFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Space-time reconstruction of second-order mean field games "
               "from initial and terminal measurements"};
  app.require_subcommand(1);

  CliOptions opt;
  std::string lambdas_csv;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "JSON config file");
    cmd->add_option("--case", opt.case_name, "test case: poly|trig|cshape");
    cmd->add_option("--out", opt.spec.output_dir, "output directory");
    cmd->add_option("--dim", opt.spec.dim, "spatial dimension, 1 or 2");
    cmd->add_option("--fine-nx", opt.spec.fine_nx);
    cmd->add_option("--fine-ny", opt.spec.fine_ny);
    cmd->add_option("--fine-nt", opt.spec.fine_nt);
    cmd->add_option("--nx", opt.spec.coarse_nx, "inversion-grid nodes per x axis");
    cmd->add_option("--ny", opt.spec.coarse_ny);
    cmd->add_option("--nt", opt.spec.coarse_nt, "inversion-grid time levels");
    cmd->add_option("--beta", opt.spec.beta);
    cmd->add_option("--a", opt.spec.functional.carleman.a);
    cmd->add_option("--lambda", opt.spec.functional.carleman.lambda);
    cmd->add_option("--gamma", opt.spec.functional.gamma);
    cmd->add_option("--c1", opt.spec.functional.c1);
    cmd->add_option("--reg-order", opt.spec.functional.reg_order);
    cmd->add_option("--max-iters", opt.spec.optimizer.max_iters);
    cmd->add_option("--grad-tol", opt.spec.optimizer.grad_tol);
    cmd->add_option("--step0", opt.spec.optimizer.step0);
    cmd->add_option("--metric", opt.metric, "sobolev|quadrature");
    cmd->add_flag("--lbfgs", opt.spec.optimizer.lbfgs,
                  "limited-memory quasi-Newton acceleration");
    cmd->add_option("--noise", opt.spec.noise_delta, "multiplicative noise level");
    cmd->add_option("--seed", opt.spec.noise_seed);
    cmd->add_flag("--symmetric-noise", opt.spec.symmetric_noise);
  };

  CLI::App* generate = app.add_subcommand(
      "generate", "manufacture a dataset and write it to disk");
  add_common(generate);

  CLI::App* invert = app.add_subcommand(
      "invert", "reconstruct (u, p) from a dataset or a built-in case");
  add_common(invert);
  invert->add_option("--data", opt.data_dir, "dataset directory from `generate`");

  CLI::App* sweep =
      app.add_subcommand("sweep", "run the inversion across lambda values");
  add_common(sweep);
  sweep->add_option("--lambdas", lambdas_csv, "comma-separated lambda list");

  CLI::App* diag = app.add_subcommand(
      "diag-carleman", "empirical constants of the two weighted estimates");
  add_common(diag);
  diag->add_option("--lambdas", lambdas_csv, "comma-separated lambda list");
  diag->add_option("--diag-nx", opt.nx);
  diag->add_option("--diag-ny", opt.ny);
  diag->add_option("--diag-nt", opt.nt);

  CLI::App* gradcheck = app.add_subcommand(
      "grad-check", "finite-difference check of the objective gradient");
  add_common(gradcheck);
  gradcheck->add_option("--check-nx", opt.nx);
  gradcheck->add_option("--check-nt", opt.nt);
  gradcheck->add_option("--directions", opt.directions);

  CLI11_PARSE(app, argc, argv);

  try {
    CLI::App* active = app.get_subcommands().front();
    auto passed = [&](const std::string& name) {
      const CLI::Option* o = active->get_option_no_throw(name);
      return o != nullptr && o->count() > 0;
    };

    // layering: defaults, then the config file, then explicit flags
    if (!opt.config_path.empty()) {
      const mfgrec::ExperimentSpec from_flags = opt.spec;
      opt.spec = mfgrec::ExperimentSpec{};
      apply_config_file(opt.spec, opt.config_path);
      struct FlagCopy {
        const char* name;
        void (*copy)(mfgrec::ExperimentSpec&, const mfgrec::ExperimentSpec&);
      };
      const FlagCopy flag_copies[] = {
          {"--out", [](auto& d, const auto& s) { d.output_dir = s.output_dir; }},
          {"--dim", [](auto& d, const auto& s) { d.dim = s.dim; }},
          {"--fine-nx", [](auto& d, const auto& s) { d.fine_nx = s.fine_nx; }},
          {"--fine-ny", [](auto& d, const auto& s) { d.fine_ny = s.fine_ny; }},
          {"--fine-nt", [](auto& d, const auto& s) { d.fine_nt = s.fine_nt; }},
          {"--nx", [](auto& d, const auto& s) { d.coarse_nx = s.coarse_nx; }},
          {"--ny", [](auto& d, const auto& s) { d.coarse_ny = s.coarse_ny; }},
          {"--nt", [](auto& d, const auto& s) { d.coarse_nt = s.coarse_nt; }},
          {"--beta", [](auto& d, const auto& s) { d.beta = s.beta; }},
          {"--a",
           [](auto& d, const auto& s) {
             d.functional.carleman.a = s.functional.carleman.a;
           }},
          {"--lambda",
           [](auto& d, const auto& s) {
             d.functional.carleman.lambda = s.functional.carleman.lambda;
           }},
          {"--gamma",
           [](auto& d, const auto& s) { d.functional.gamma = s.functional.gamma; }},
          {"--c1",
           [](auto& d, const auto& s) { d.functional.c1 = s.functional.c1; }},
          {"--reg-order",
           [](auto& d, const auto& s) {
             d.functional.reg_order = s.functional.reg_order;
           }},
          {"--max-iters",
           [](auto& d, const auto& s) {
             d.optimizer.max_iters = s.optimizer.max_iters;
           }},
          {"--grad-tol",
           [](auto& d, const auto& s) {
             d.optimizer.grad_tol = s.optimizer.grad_tol;
           }},
          {"--step0",
           [](auto& d, const auto& s) { d.optimizer.step0 = s.optimizer.step0; }},
          {"--lbfgs",
           [](auto& d, const auto& s) { d.optimizer.lbfgs = s.optimizer.lbfgs; }},
          {"--noise",
           [](auto& d, const auto& s) { d.noise_delta = s.noise_delta; }},
          {"--seed", [](auto& d, const auto& s) { d.noise_seed = s.noise_seed; }},
          {"--symmetric-noise",
           [](auto& d, const auto& s) { d.symmetric_noise = s.symmetric_noise; }},
      };
      for (const auto& fc : flag_copies)
        if (passed(fc.name)) fc.copy(opt.spec, from_flags);
    }
    if (passed("--case"))
      opt.spec.test_case = mfgrec::test_case_from_string(opt.case_name);
    if (passed("--metric")) {
      if (opt.metric == "sobolev")
        opt.spec.optimizer.metric = mfgrec::OptimizerConfig::Metric::Sobolev;
      else if (opt.metric == "quadrature")
        opt.spec.optimizer.metric = mfgrec::OptimizerConfig::Metric::Quadrature;
      else
        throw mfgrec::InvalidFieldError("unknown metric: " + opt.metric);
    }
    if (!lambdas_csv.empty()) {
      opt.lambdas.clear();
      std::stringstream ss(lambdas_csv);
      std::string tok;
      while (std::getline(ss, tok, ',')) opt.lambdas.push_back(std::stod(tok));
    }

    if (generate->parsed()) return cmd_generate(opt);
    if (invert->parsed()) return cmd_invert(opt);
    if (sweep->parsed()) return cmd_sweep(opt);
    if (diag->parsed()) return cmd_diag_carleman(opt);
    if (gradcheck->parsed()) return cmd_grad_check(opt);
    return kExitInvalidConfig;
  } catch (const mfgrec::InvalidFieldError& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::domain_error& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid config: " << e.what() << '\n';
    return kExitInvalidConfig;
  } catch (const mfgrec::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << '\n';
    return kExitNumericFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumericFailure;
  }
}
