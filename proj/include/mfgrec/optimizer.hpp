#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mfgrec/functional.hpp"

/// Gradient descent on the shifted unknowns with Armijo backtracking,
/// monotone objective decrease, and per-iteration convergence history.
namespace mfgrec {

struct OptimizerConfig {
  /// Multiplier on the automatically scaled first trial step.  The line
  /// search starts each iteration from a step matched to the local objective
  /// scale, so step0 = 1 is a sensible default across lambda values.
  double step0 = 1.0;
  double backtrack = 0.5;       // trial-step shrink factor in (0,1)
  double armijo = 1e-4;         // sufficient-decrease constant in (0,1)
  int max_iters = 5000;
  double grad_tol = 1e-2;       // stop when the weighted gradient norm drops below
  double ball_radius = std::numeric_limits<double>::infinity();  // monitor only
  std::uint64_t seed = 0;       // reserved for randomized diagnostics

  /// Metric used to turn the nodal gradient into a descent direction.
  /// Sobolev applies the inverse regularizer Gram operator (the smoothing
  /// that the convergence analysis assumes); Quadrature divides by the
  /// quadrature weights (plain discrete-L2 steepest descent).
  enum class Metric { Sobolev, Quadrature };
  Metric metric = Metric::Sobolev;

  /// Optional limited-memory quasi-Newton acceleration.  Off by default so
  /// standard runs use the plain analyzed iteration.
  bool lbfgs = false;
  int lbfgs_memory = 8;

  void validate() const {
    if (!(step0 > 0.0)) throw InvalidFieldError("OptimizerConfig: step0 > 0");
    if (!(backtrack > 0.0 && backtrack < 1.0))
      throw InvalidFieldError("OptimizerConfig: backtrack in (0,1)");
    if (!(armijo > 0.0 && armijo < 1.0))
      throw InvalidFieldError("OptimizerConfig: armijo in (0,1)");
    if (max_iters < 1) throw InvalidFieldError("OptimizerConfig: max_iters >= 1");
    if (!(grad_tol > 0.0)) throw InvalidFieldError("OptimizerConfig: grad_tol > 0");
  }
};

enum class RunStatus { Converged, MaxIters, LineSearchFailure };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::Converged: return "converged";
    case RunStatus::MaxIters: return "max-iters";
    case RunStatus::LineSearchFailure: return "line-search-failure";
  }
  return "unknown";
}

struct IterRecord {
  int iter = 0;
  double j_total = 0.0;
  double j1 = 0.0, j2 = 0.0, j3 = 0.0;
  double grad_norm = 0.0;
  double step = 0.0;              // accepted step that produced this iterate
  double u_err = -1.0, p_err = -1.0;  // relative errors when truth is known
  double constraint_violation = 0.0;
  double monitor_norm = 0.0;
  bool inside_ball = true;
};

struct RunReport {
  std::vector<IterRecord> history;
  RunStatus status = RunStatus::MaxIters;
  ShiftedPair final_pair;
  Lifting lifting;
  Field final_u, final_p;
  int n_evals = 0;
  int n_grads = 0;
};

/// Starting point: u(0) = uT for all t, p(0) equal to the lifted data.
/// In shifted variables v(0) = (1 - t/T) uT and w(0) = 0.
inline ShiftedPair initial_guess(const Dataset& ds) {
  const GridSpec& g = ds.grid();
  ShiftedPair pair = ShiftedPair::zeros(g);
  for (int k = 0; k < g.nt; ++k) {
    const double factor = 1.0 - g.t(k) / g.horizon;
    double* v = pair.v.level(k);
    for (int m = 0; m < g.n_space(); ++m) v[m] = factor * ds.uT.values[m];
  }
  enforce_pair_constraints(pair);
  return pair;
}

struct NormMonitorResult {
  double value = 0.0;
  bool inside = true;
};

/// Regularizer norm of the assembled pair, compared against the monitoring
/// radius.  Never alters iterates.
inline NormMonitorResult norm_monitor(const FunctionalParams& params,
                                      const ShiftedPair& pair,
                                      const Lifting& lift, double ball_radius) {
  auto [u, p] = assemble(pair, lift);
  NormMonitorResult r;
  r.value = std::sqrt(sobolev_norm_sq(u, params.reg_order) +
                      sobolev_norm_sq(p, params.reg_order));
  r.inside = !(r.value > ball_radius);
  return r;
}

namespace detail {

/// Sparse Gram operator of the weighted Sobolev inner product restricted to
/// the free nodes of one unknown field, with a cached Cholesky
/// factorization.  The node weights fold the Carleman weight into the
/// metric, which keeps the preconditioned spectrum comparable across time
/// levels for every lambda.
class SobolevMetric {
 public:
  SobolevMetric() = default;

  SobolevMetric(const GridSpec& g, int reg_order,
                const std::vector<double>& node_weights, int k_first,
                int k_last) {
    const int ns = g.n_space();
    const std::size_t n = g.n_nodes();
    if (k_last < k_first) return;  // no free nodes (fully constrained field)
    using Trip = Eigen::Triplet<double>;
    std::vector<Trip> trips;

    auto add_op = [&](auto&& fill_d) {
      std::vector<Trip> dt;
      fill_d(dt);
      Eigen::SparseMatrix<double> D(n, n);
      D.setFromTriplets(dt.begin(), dt.end());
      Eigen::SparseMatrix<double> Wd(n, n);
      std::vector<Trip> wt;
      wt.reserve(n);
      for (std::size_t m = 0; m < n; ++m)
        wt.emplace_back(static_cast<int>(m), static_cast<int>(m),
                        node_weights[m]);
      Wd.setFromTriplets(wt.begin(), wt.end());
      Eigen::SparseMatrix<double> G = D.transpose() * Wd * D;
      for (int c = 0; c < G.outerSize(); ++c)
        for (Eigen::SparseMatrix<double>::InnerIterator it(G, c); it; ++it)
          trips.emplace_back(static_cast<int>(it.row()),
                             static_cast<int>(it.col()), it.value());
    };

    auto axis_entries = [&](std::vector<Trip>& dt, int axis, auto&& rows) {
      const int nn = (axis == 0) ? g.nx : g.ny;
      const int stride = (axis == 0) ? 1 : g.nx;
      const int nlines = (axis == 0) ? g.ny : g.nx;
      const int line_stride = (axis == 0) ? g.nx : 1;
      for (int k = 0; k < g.nt; ++k) {
        const int off = k * ns;
        for (int line = 0; line < nlines; ++line) {
          const int base = off + line * line_stride;
          rows(nn, [&](int d, int s, double c) {
            dt.emplace_back(base + d * stride, base + s * stride, c);
          });
        }
      }
    };

    // identity
    add_op([&](std::vector<Trip>& dt) {
      for (std::size_t m = 0; m < n; ++m)
        dt.emplace_back(static_cast<int>(m), static_cast<int>(m), 1.0);
    });
    // first time derivative
    add_op([&](std::vector<Trip>& dt) {
      time_diff_rows(g.nt, 1.0 / g.dt(), [&](int kd, int ks, double c) {
        for (int m = 0; m < ns; ++m)
          dt.emplace_back(kd * ns + m, ks * ns + m, c);
      });
    });
    // first spatial differences
    for (int axis = 0; axis < g.dim; ++axis) {
      const double inv_2h =
          (axis == 0) ? 1.0 / (2.0 * g.hx()) : 1.0 / (2.0 * g.hy());
      add_op([&](std::vector<Trip>& dt) {
        axis_entries(dt, axis, [&](int nn, auto&& emit) {
          central_diff_rows(nn, inv_2h, emit);
        });
      });
    }
    if (reg_order == 2) {
      for (int axis = 0; axis < g.dim; ++axis) {
        const double inv_h2 =
            (axis == 0) ? 1.0 / (g.hx() * g.hx()) : 1.0 / (g.hy() * g.hy());
        add_op([&](std::vector<Trip>& dt) {
          axis_entries(dt, axis, [&](int nn, auto&& emit) {
            second_diff_rows(nn, inv_h2, emit);
          });
        });
      }
      add_op([&](std::vector<Trip>& dt) {
        time_second_diff_rows(g.nt, 1.0 / (g.dt() * g.dt()),
                              [&](int kd, int ks, double c) {
                                for (int m = 0; m < ns; ++m)
                                  dt.emplace_back(kd * ns + m, ks * ns + m, c);
                              });
      });
    }

    Eigen::SparseMatrix<double> Gfull(n, n);
    Gfull.setFromTriplets(trips.begin(), trips.end());

    // free nodes are the contiguous block of time levels [k_first, k_last]
    first_ = static_cast<std::size_t>(k_first) * ns;
    count_ = static_cast<std::size_t>(k_last - k_first + 1) * ns;
    Eigen::SparseMatrix<double> S(count_, n);
    std::vector<Trip> st;
    st.reserve(count_);
    for (std::size_t m = 0; m < count_; ++m)
      st.emplace_back(static_cast<int>(m), static_cast<int>(first_ + m), 1.0);
    S.setFromTriplets(st.begin(), st.end());
    Eigen::SparseMatrix<double> Gfree = S * Gfull * S.transpose();
    solver_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    solver_->compute(Gfree);
    if (solver_->info() != Eigen::Success)
      throw NumericError("SobolevMetric: Gram factorization failed");
  }

  /// out's free block receives G^{-1} grad.
  void apply_inverse(const Field& grad, Field& out) const {
    if (count_ == 0) return;
    Eigen::VectorXd rhs(count_);
    for (std::size_t m = 0; m < count_; ++m) rhs[m] = grad.values[first_ + m];
    Eigen::VectorXd x = solver_->solve(rhs);
    for (std::size_t m = 0; m < count_; ++m) out.values[first_ + m] = x[m];
  }

 private:
  std::size_t first_ = 0;
  std::size_t count_ = 0;
  std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> solver_;
};

inline double rel_err_l2(const Field& truth, const Field& computed) {
  Field diff = computed;
  axpy(diff, -1.0, truth);
  const double denom = norm_l2_qt(truth);
  if (denom == 0.0) return norm_l2_qt(diff) == 0.0 ? 0.0 : 1.0;
  return norm_l2_qt(diff) / denom;
}

inline double max_slice_violation(const Field& f, int level,
                                  const SpatialField& data) {
  const double* v = f.level(level);
  double m = 0.0;
  for (int i = 0; i < f.grid.n_space(); ++i)
    m = std::max(m, std::abs(v[i] - data.values[i]));
  return m;
}

}  // namespace detail

/// Armijo-backtracking descent from the standard starting point (or an
/// explicit one).  Objective values decrease monotonically over accepted
/// steps; the run stops on the gradient tolerance, the iteration cap, or a
/// failed line search.
inline RunReport descend(const OptimizerConfig& config,
                         const FunctionalParams& params,
                         const MfgCoefficients& coeffs, const Dataset& ds,
                         const ShiftedPair* start = nullptr) {
  config.validate();
  params.validate();
  require_same_grid(coeffs.grid(), ds.grid(), "descend");

  const GridSpec& g = ds.grid();
  const int ns = g.n_space();

  RunReport report;
  report.lifting = make_lifting(ds);
  const Lifting& lift = report.lifting;

  ShiftedPair z = start ? *start : initial_guess(ds);
  if (start) {
    require_same_grid(z.v.grid, g, "descend start");
    enforce_pair_constraints(z);
  }

  // stopping norm: Euclidean norm of the free-node gradient vector scaled
  // by sqrt(quadrature weights), i.e. sqrt(sum_n w_n g_n^2)
  const auto wq = quad_weights_qt(g);
  const std::size_t v_free_end = static_cast<std::size_t>(g.nt - 1) * ns;
  const std::size_t w_free_begin = static_cast<std::size_t>(ns);
  const std::size_t w_free_end = static_cast<std::size_t>(g.nt - 1) * ns;
  auto stop_norm = [&](const ShiftedPair& grad) {
    double s = 0.0;
    for (std::size_t m = 0; m < v_free_end; ++m)
      s += wq[m] * grad.v.values[m] * grad.v.values[m];
    for (std::size_t m = w_free_begin; m < w_free_end; ++m)
      s += wq[m] * grad.w.values[m] * grad.w.values[m];
    return std::sqrt(s);
  };

  detail::SobolevMetric metric_v, metric_w;
  if (config.metric == OptimizerConfig::Metric::Sobolev) {
    const Field phi = weight_field(params.carleman, g);
    std::vector<double> node_weights(wq.size());
    for (std::size_t m = 0; m < wq.size(); ++m)
      node_weights[m] = wq[m] * phi.values[m];
    metric_v = detail::SobolevMetric(g, params.reg_order, node_weights, 0, g.nt - 2);
    metric_w = detail::SobolevMetric(g, params.reg_order, node_weights, 1, g.nt - 2);
  }

  auto preconditioned = [&](const ShiftedPair& grad) {
    ShiftedPair d = ShiftedPair::zeros(g);
    if (config.metric == OptimizerConfig::Metric::Sobolev) {
      metric_v.apply_inverse(grad.v, d.v);
      metric_w.apply_inverse(grad.w, d.w);
    } else {
      for (std::size_t m = 0; m < v_free_end; ++m)
        d.v.values[m] = grad.v.values[m] / wq[m];
      for (std::size_t m = w_free_begin; m < w_free_end; ++m)
        d.w.values[m] = grad.w.values[m] / wq[m];
    }
    for (auto& x : d.v.values) x = -x;
    for (auto& x : d.w.values) x = -x;
    enforce_pair_constraints(d);
    return d;
  };

  auto dot_pair = [&](const ShiftedPair& a, const ShiftedPair& b) {
    double s = 0.0;
    for (std::size_t m = 0; m < a.v.values.size(); ++m)
      s += a.v.values[m] * b.v.values[m];
    for (std::size_t m = 0; m < a.w.values.size(); ++m)
      s += a.w.values[m] * b.w.values[m];
    return s;
  };

  // L-BFGS memory (only used when enabled)
  std::vector<ShiftedPair> mem_s, mem_y;
  std::vector<double> mem_rho;

  auto lbfgs_direction = [&](const ShiftedPair& grad) {
    ShiftedPair q = grad;
    const int m_used = static_cast<int>(mem_s.size());
    std::vector<double> alpha(m_used);
    for (int i = m_used - 1; i >= 0; --i) {
      alpha[i] = mem_rho[i] * dot_pair(mem_s[i], q);
      axpy(q.v, -alpha[i], mem_y[i].v);
      axpy(q.w, -alpha[i], mem_y[i].w);
    }
    ShiftedPair r = preconditioned(q);  // r = -H0 q
    for (auto& x : r.v.values) x = -x;  // r = H0 q
    for (auto& x : r.w.values) x = -x;
    for (int i = 0; i < m_used; ++i) {
      const double beta = mem_rho[i] * dot_pair(mem_y[i], r);
      axpy(r.v, alpha[i] - beta, mem_s[i].v);
      axpy(r.w, alpha[i] - beta, mem_s[i].w);
    }
    for (auto& x : r.v.values) x = -x;  // direction = -H g
    for (auto& x : r.w.values) x = -x;
    enforce_pair_constraints(r);
    return r;
  };

  auto record_state = [&](int iter, const JParts& parts,
                          const ShiftedPair& pair, double gnorm, double step) {
    IterRecord rec;
    rec.iter = iter;
    rec.j_total = parts.total();
    rec.j1 = parts.j1;
    rec.j2 = parts.j2;
    rec.j3 = parts.j3;
    rec.grad_norm = gnorm;
    rec.step = step;
    auto [u, p] = assemble(pair, lift);
    if (ds.has_truth) {
      rec.u_err = detail::rel_err_l2(ds.truth_u, u);
      rec.p_err = detail::rel_err_l2(ds.truth_p, p);
    }
    rec.constraint_violation = std::max(
        {detail::max_slice_violation(u, g.nt - 1, ds.uT),
         detail::max_slice_violation(p, 0, ds.p0),
         detail::max_slice_violation(p, g.nt - 1, ds.pT)});
    auto mon = norm_monitor(params, pair, lift, config.ball_radius);
    rec.monitor_norm = mon.value;
    rec.inside_ball = mon.inside;
    report.history.push_back(rec);
  };

  JParts parts = eval_j(params, coeffs, z, lift);
  ++report.n_evals;
  double j_curr = parts.total();
  if (!std::isfinite(j_curr))
    throw NumericError("descend: non-finite objective at the starting point");

  ShiftedPair grad = grad_j(params, coeffs, z, lift);
  ++report.n_grads;
  double gnorm = stop_norm(grad);
  record_state(0, parts, z, gnorm, 0.0);

  double prev_step = 0.0;
  report.status = RunStatus::MaxIters;

  for (int iter = 1; iter <= config.max_iters; ++iter) {
    if (gnorm < config.grad_tol) {
      report.status = RunStatus::Converged;
      break;
    }

    ShiftedPair dir = config.lbfgs && !mem_s.empty() ? lbfgs_direction(grad)
                                                     : preconditioned(grad);
    double slope = dot_pair(grad, dir);
    if (!(slope < 0.0)) {
      // quasi-Newton direction lost descent; fall back and flush memory
      dir = preconditioned(grad);
      slope = dot_pair(grad, dir);
      mem_s.clear();
      mem_y.clear();
      mem_rho.clear();
    }
    if (!(slope < 0.0))
      throw NumericError("descend: preconditioned direction is not a descent direction");

    const double cauchy = 2.0 * std::max(j_curr, 1e-300) / (-slope);
    const double ref_step = config.step0 * cauchy;
    double step = (config.lbfgs && !mem_s.empty())
                      ? std::min(1.0, ref_step)
                      : (prev_step > 0.0 ? std::min(2.0 * prev_step, ref_step)
                                         : ref_step);

    bool accepted = false;
    ShiftedPair z_try = z;
    JParts parts_try;
    while (step >= 1e-14 * ref_step) {
      z_try = z;
      axpy(z_try.v, step, dir.v);
      axpy(z_try.w, step, dir.w);
      parts_try = eval_j(params, coeffs, z_try, lift);
      ++report.n_evals;
      const double j_try = parts_try.total();
      if (std::isfinite(j_try) &&
          j_try <= j_curr + config.armijo * step * slope) {
        accepted = true;
        break;
      }
      step *= config.backtrack;
    }
    if (!accepted) {
      report.status = RunStatus::LineSearchFailure;
      break;
    }

    ShiftedPair grad_next = grad_j(params, coeffs, z_try, lift);
    ++report.n_grads;

    if (config.lbfgs) {
      ShiftedPair s_vec = z_try;
      axpy(s_vec.v, -1.0, z.v);
      axpy(s_vec.w, -1.0, z.w);
      ShiftedPair y_vec = grad_next;
      axpy(y_vec.v, -1.0, grad.v);
      axpy(y_vec.w, -1.0, grad.w);
      const double sy = dot_pair(s_vec, y_vec);
      const double ss = std::sqrt(dot_pair(s_vec, s_vec));
      const double yy = std::sqrt(dot_pair(y_vec, y_vec));
      if (sy > 1e-12 * ss * yy) {
        mem_s.push_back(std::move(s_vec));
        mem_y.push_back(std::move(y_vec));
        mem_rho.push_back(1.0 / sy);
        if (static_cast<int>(mem_s.size()) > config.lbfgs_memory) {
          mem_s.erase(mem_s.begin());
          mem_y.erase(mem_y.begin());
          mem_rho.erase(mem_rho.begin());
        }
      }
    }

    z = std::move(z_try);
    parts = parts_try;
    j_curr = parts.total();
    grad = std::move(grad_next);
    gnorm = stop_norm(grad);
    prev_step = step;
    record_state(iter, parts, z, gnorm, step);

    if (iter == config.max_iters && gnorm < config.grad_tol)
      report.status = RunStatus::Converged;
  }
  if (report.status == RunStatus::MaxIters && gnorm < config.grad_tol)
    report.status = RunStatus::Converged;

  report.final_pair = std::move(z);
  auto [u, p] = assemble(report.final_pair, lift);
  report.final_u = std::move(u);
  report.final_p = std::move(p);
  return report;
}

}  // namespace mfgrec
