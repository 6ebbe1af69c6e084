#pragma once

#include <cmath>
#include <stdexcept>

#include "mfgrec/grid.hpp"

/// The time-dependent Carleman weight and empirical diagnostics for the two
/// weighted energy estimates behind the least-squares objective.
namespace mfgrec {

/// Parameters of the weight exp(2 (t+a)^lambda).
///
/// lambda >= 1 is the regime the weight is designed for; smaller positive
/// values are accepted so sweeps can probe the degenerate range.
struct CarlemanParams {
  double a = 1.01;
  double lambda = 2.0;

  void validate() const {
    if (!(a > 0.0)) throw std::domain_error("CarlemanParams: a > 0 required");
    if (!(lambda > 0.0))
      throw std::domain_error("CarlemanParams: lambda > 0 required");
  }
};

/// Weight value exp(2 (t+a)^lambda) at a single time in [0, horizon].
inline double carleman_weight(const CarlemanParams& p, double t, double horizon) {
  p.validate();
  if (!(t >= 0.0 && t <= horizon))
    throw std::domain_error("carleman_weight: t outside [0, T]");
  const double e = 2.0 * std::pow(t + p.a, p.lambda);
  if (e > 700.0)
    throw std::domain_error(
        "carleman_weight: exponent overflows double range; reduce lambda");
  return std::exp(e);
}

/// Weight sampled on every lattice node; constant in space.
/// squared = true gives the weight squared (used by the forward-operator
/// diagnostic, which carries the stronger weighting).
inline Field weight_field(const CarlemanParams& p, const GridSpec& g,
                          bool squared = false) {
  Field out(g);
  for (int k = 0; k < g.nt; ++k) {
    double w = carleman_weight(p, g.t(k), g.horizon);
    if (squared) {
      w *= w;
      if (!std::isfinite(w))
        throw std::domain_error(
            "weight_field: squared weight overflows double range");
    }
    double* lvl = out.level(k);
    for (int m = 0; m < g.n_space(); ++m) lvl[m] = w;
  }
  return out;
}

namespace detail {

inline void require_zero_slice(const Field& f, int level, const char* what) {
  const double scale = max_abs(f);
  const double tol = 1e-10 * (scale > 0.0 ? scale : 1.0);
  const double* v = f.level(level);
  for (int m = 0; m < f.grid.n_space(); ++m)
    if (std::abs(v[m]) > tol)
      throw std::invalid_argument(std::string(what) +
                                  ": field violates the required zero time slice");
}

}  // namespace detail

/// Empirical constant of the weighted estimate for d/dt + beta*Lap.
///
/// Returns
///   int (f_t + beta Lap f)^2 w^2
///   -----------------------------------------------------------------
///   int (f_t^2 + (Lap f)^2) w^2 + l int |grad f|^2 w^2 + l^2 int f^2 w^2
/// for an admissible f (zero normal trace, f(.,T) = 0).  Zero fields map to
/// ratio 0 by convention.  The mirror-ghost stencils make the discrete
/// normal trace of any field vanish, so only the terminal slice is checked.
inline double carleman_ratio_forward(const Field& f, const CarlemanParams& p,
                                     double beta) {
  detail::require_zero_slice(f, f.grid.nt - 1, "carleman_ratio_forward");
  const Field w2 = weight_field(p, f.grid, /*squared=*/true);
  const Field ft = time_deriv(f);
  const Field lap = laplacian_neumann(f);
  const auto grad = gradient_c(f);

  Field op(f.grid);
  axpy(op, 1.0, ft);
  axpy(op, beta, lap);

  const auto wq = quad_weights_qt(f.grid);
  double lhs = 0.0, energy = 0.0, grad2 = 0.0, mass = 0.0;
  for (std::size_t m = 0; m < wq.size(); ++m) {
    const double ww = wq[m] * w2.values[m];
    lhs += ww * op.values[m] * op.values[m];
    energy += ww * (ft.values[m] * ft.values[m] + lap.values[m] * lap.values[m]);
    mass += ww * f.values[m] * f.values[m];
    for (const auto& gax : grad) grad2 += ww * gax.values[m] * gax.values[m];
  }
  const double denom = energy + p.lambda * grad2 + p.lambda * p.lambda * mass;
  if (denom == 0.0) return 0.0;
  return lhs / denom;
}

/// Empirical constant of the weighted estimate for d/dt - beta*Lap.
///
/// Returns
///   int (f_t - beta Lap f)^2 w
///   -------------------------------------------------
///   sqrt(l) int |grad f|^2 w + l^2 int f^2 w
/// for f with zero normal trace and f(.,0) = f(.,T) = 0.
inline double carleman_ratio_backward(const Field& f, const CarlemanParams& p,
                                      double beta) {
  detail::require_zero_slice(f, 0, "carleman_ratio_backward");
  detail::require_zero_slice(f, f.grid.nt - 1, "carleman_ratio_backward");
  const Field w1 = weight_field(p, f.grid, /*squared=*/false);
  const Field ft = time_deriv(f);
  const Field lap = laplacian_neumann(f);
  const auto grad = gradient_c(f);

  Field op(f.grid);
  axpy(op, 1.0, ft);
  axpy(op, -beta, lap);

  const auto wq = quad_weights_qt(f.grid);
  double lhs = 0.0, grad2 = 0.0, mass = 0.0;
  for (std::size_t m = 0; m < wq.size(); ++m) {
    const double ww = wq[m] * w1.values[m];
    lhs += ww * op.values[m] * op.values[m];
    mass += ww * f.values[m] * f.values[m];
    for (const auto& gax : grad) grad2 += ww * gax.values[m] * gax.values[m];
  }
  const double denom = std::sqrt(p.lambda) * grad2 + p.lambda * p.lambda * mass;
  if (denom == 0.0) return 0.0;
  return lhs / denom;
}

}  // namespace mfgrec
