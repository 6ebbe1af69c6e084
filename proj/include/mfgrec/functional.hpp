#pragma once

#include <cmath>
#include <utility>

#include "mfgrec/carleman.hpp"
#include "mfgrec/forward.hpp"
#include "mfgrec/grid.hpp"
#include "mfgrec/model.hpp"

/// The weighted least-squares objective, the affine lifting of the measured
/// data, and the exact gradient of the discretized objective.
namespace mfgrec {

/// Knobs of the objective
///   J = J1 + (1/2 + c1/lambda^2) J2 + gamma (|u|_reg^2 + |p|_reg^2),
/// where J1, J2 are the weighted squared residuals and |.|_reg is a discrete
/// Sobolev norm of order reg_order (1: values and first differences,
/// 2: plus pure second differences in every coordinate).
struct FunctionalParams {
  CarlemanParams carleman;
  double gamma = 0.001;
  double c1 = 2.0;
  int reg_order = 2;

  double coupling() const {
    return 0.5 + c1 / (carleman.lambda * carleman.lambda);
  }

  void validate() const {
    carleman.validate();
    if (gamma < 0.0)
      throw InvalidFieldError("FunctionalParams: gamma >= 0 required");
    if (!(c1 > 0.0)) throw InvalidFieldError("FunctionalParams: c1 > 0 required");
    if (reg_order != 1 && reg_order != 2)
      throw InvalidFieldError("FunctionalParams: reg_order must be 1 or 2");
  }
};

/// Affine-in-t interpolants of the measured slices:
///   g1(x,t) = (t/T) uT(x),  g2(x,t) = (t/T) pT(x) + (1 - t/T) p0(x).
struct Lifting {
  Field g1, g2;
};

/// The optimization unknowns after lifting: u = v + g1, p = w + g2 with the
/// homogeneous slice constraints v(.,T) = 0 and w(.,0) = w(.,T) = 0 held
/// structurally (those nodes are never free variables).
struct ShiftedPair {
  Field v, w;

  static ShiftedPair zeros(const GridSpec& g) {
    return ShiftedPair{Field(g), Field(g)};
  }
};

/// Zero the constrained time slices in place.
inline void enforce_pair_constraints(ShiftedPair& pair) {
  const GridSpec& g = pair.v.grid;
  const int ns = g.n_space();
  double* vT = pair.v.level(g.nt - 1);
  double* w0 = pair.w.level(0);
  double* wT = pair.w.level(g.nt - 1);
  for (int m = 0; m < ns; ++m) {
    vT[m] = 0.0;
    w0[m] = 0.0;
    wT[m] = 0.0;
  }
}

inline Lifting make_lifting(const Dataset& ds) {
  const GridSpec& g = ds.grid();
  Lifting lift{Field(g), Field(g)};
  for (int k = 0; k < g.nt; ++k) {
    const double theta = g.t(k) / g.horizon;
    double* g1 = lift.g1.level(k);
    double* g2 = lift.g2.level(k);
    for (int m = 0; m < g.n_space(); ++m) {
      g1[m] = theta * ds.uT.values[m];
      g2[m] = theta * ds.pT.values[m] + (1.0 - theta) * ds.p0.values[m];
    }
  }
  // make the endpoint identities exact at nodes, independent of round-off
  lift.g2.set_slice(0, ds.p0);
  lift.g2.set_slice(g.nt - 1, ds.pT);
  lift.g1.set_slice(g.nt - 1, ds.uT);
  return lift;
}

/// u = v + g1, p = w + g2.
inline std::pair<Field, Field> assemble(const ShiftedPair& pair,
                                        const Lifting& lift) {
  require_same_grid(pair.v.grid, lift.g1.grid, "assemble");
  Field u = lift.g1;
  Field p = lift.g2;
  axpy(u, 1.0, pair.v);
  axpy(p, 1.0, pair.w);
  return {std::move(u), std::move(p)};
}

/// Inverse of assemble on admissible (u, p).
inline ShiftedPair shift_pair(const Field& u, const Field& p,
                              const Lifting& lift) {
  ShiftedPair pair{u, p};
  axpy(pair.v, -1.0, lift.g1);
  axpy(pair.w, -1.0, lift.g2);
  enforce_pair_constraints(pair);
  return pair;
}

// ---------------------------------------------------------------------------
// Discrete Sobolev norm and its Gram operator.
// ---------------------------------------------------------------------------

/// |f|_reg^2 = int f^2 + |grad f|^2 + f_t^2 (+ pure second differences when
/// reg_order = 2).  All integrals are the trapezoid quadrature over Q_T.
inline double sobolev_norm_sq(const Field& f, int reg_order) {
  const GridSpec& g = f.grid;
  const auto w = quad_weights_qt(g);
  auto energy = [&](const Field& d) {
    double s = 0.0;
    for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * d.values[m] * d.values[m];
    return s;
  };
  double total = energy(f);
  {
    Field d(g);
    accumulate_time_deriv(f, d, 1.0);
    total += energy(d);
  }
  for (int axis = 0; axis < g.dim; ++axis) {
    Field d(g);
    accumulate_gradient_axis(f, axis, d, 1.0);
    total += energy(d);
  }
  if (reg_order == 2) {
    for (int axis = 0; axis < g.dim; ++axis) {
      Field d(g);
      accumulate_second_diff_axis(f, axis, d, 1.0);
      total += energy(d);
    }
    Field d(g);
    accumulate_time_second_diff(f, d, 1.0);
    total += energy(d);
  }
  return total;
}

/// out += scale * G f where G = sum_D D^T W D is the Gram operator of the
/// regularizer norm (the exact derivative of |f|_reg^2 is 2 G f).
inline void accumulate_sobolev_gram(const Field& f, Field& out, double scale,
                                    int reg_order) {
  const GridSpec& g = f.grid;
  const auto w = quad_weights_qt(g);
  auto weighted = [&](const Field& d) {
    Field wd(g);
    for (std::size_t m = 0; m < w.size(); ++m) wd.values[m] = w[m] * d.values[m];
    return wd;
  };
  // identity term
  for (std::size_t m = 0; m < w.size(); ++m)
    out.values[m] += scale * w[m] * f.values[m];
  {
    Field d(g);
    accumulate_time_deriv(f, d, 1.0);
    Field wd = weighted(d);
    accumulate_time_deriv(wd, out, scale, /*transpose=*/true);
  }
  for (int axis = 0; axis < g.dim; ++axis) {
    Field d(g);
    accumulate_gradient_axis(f, axis, d, 1.0);
    Field wd = weighted(d);
    accumulate_gradient_axis(wd, axis, out, scale, /*transpose=*/true);
  }
  if (reg_order == 2) {
    for (int axis = 0; axis < g.dim; ++axis) {
      Field d(g);
      accumulate_second_diff_axis(f, axis, d, 1.0);
      Field wd = weighted(d);
      accumulate_second_diff_axis(wd, axis, out, scale, /*transpose=*/true);
    }
    Field d(g);
    accumulate_time_second_diff(f, d, 1.0);
    Field wd = weighted(d);
    accumulate_time_second_diff(wd, out, scale, /*transpose=*/true);
  }
}

// ---------------------------------------------------------------------------
// Objective evaluation and gradient.
// ---------------------------------------------------------------------------

struct JParts {
  double j1 = 0.0;
  double j2 = 0.0;
  double j3 = 0.0;
  double coupling = 1.0;
  double total() const { return j1 + coupling * j2 + j3; }
};

inline JParts eval_j(const FunctionalParams& params,
                     const MfgCoefficients& coeffs, const ShiftedPair& pair,
                     const Lifting& lift) {
  params.validate();
  require_same_grid(pair.v.grid, coeffs.grid(), "eval_j");
  auto [u, p] = assemble(pair, lift);
  const Field r1 = residual_l1(coeffs, u, p);
  const Field r2 = residual_l2(coeffs, u, p);
  require_finite(r1, "eval_j residual_l1");
  require_finite(r2, "eval_j residual_l2");

  const GridSpec& g = coeffs.grid();
  const Field phi = weight_field(params.carleman, g);
  const auto w = quad_weights_qt(g);
  JParts parts;
  parts.coupling = params.coupling();
  for (std::size_t m = 0; m < w.size(); ++m) {
    const double ww = w[m] * phi.values[m];
    parts.j1 += ww * r1.values[m] * r1.values[m];
    parts.j2 += ww * r2.values[m] * r2.values[m];
  }
  if (params.gamma > 0.0)
    parts.j3 = params.gamma * (sobolev_norm_sq(u, params.reg_order) +
                               sobolev_norm_sq(p, params.reg_order));
  return parts;
}

/// Exact gradient of the discretized objective with respect to every free
/// node of (v, w), assembled by transposing the discrete linearizations
/// against the quadrature-and-weight co-fields.  Constrained slices carry
/// zero entries.
inline ShiftedPair grad_j(const FunctionalParams& params,
                          const MfgCoefficients& coeffs,
                          const ShiftedPair& pair, const Lifting& lift) {
  params.validate();
  require_same_grid(pair.v.grid, coeffs.grid(), "grad_j");
  auto [u, p] = assemble(pair, lift);
  const Field r1 = residual_l1(coeffs, u, p);
  const Field r2 = residual_l2(coeffs, u, p);

  const GridSpec& g = coeffs.grid();
  const Field phi = weight_field(params.carleman, g);
  const auto w = quad_weights_qt(g);
  const double couple = params.coupling();

  Field co1(g), co2(g);
  for (std::size_t m = 0; m < w.size(); ++m) {
    const double ww = w[m] * phi.values[m];
    co1.values[m] = 2.0 * ww * r1.values[m];
    co2.values[m] = 2.0 * couple * ww * r2.values[m];
  }

  ShiftedPair grad = ShiftedPair::zeros(g);
  add_linearized_l1_transpose(coeffs, u, co1, grad.v, grad.w);
  add_linearized_l2_transpose(coeffs, u, p, co2, grad.v, grad.w);
  if (params.gamma > 0.0) {
    accumulate_sobolev_gram(u, grad.v, 2.0 * params.gamma, params.reg_order);
    accumulate_sobolev_gram(p, grad.w, 2.0 * params.gamma, params.reg_order);
  }
  enforce_pair_constraints(grad);
  require_finite(grad.v, "grad_j");
  require_finite(grad.w, "grad_j");
  return grad;
}

}  // namespace mfgrec
