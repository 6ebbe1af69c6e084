#pragma once

#include <cstdint>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mfgrec/grid.hpp"

/// Coefficients of the coupled parabolic system and the discrete residual
/// operators of its two equations, together with their exact linearizations.
namespace mfgrec {

/// Interaction kernel K(x,y).  Three representations:
///  - constant value,
///  - separable product a(x) b(y),
///  - dense table, gated to small grids (the evaluation is O(N^2) per level).
class Kernel {
 public:
  enum class Type { Constant, Separable, Dense };

  static constexpr int kDenseNodeLimit = 41 * 41;

  Kernel() : type_(Type::Constant), constant_(1.0) {}

  static Kernel constant(double c) {
    Kernel k;
    k.type_ = Type::Constant;
    k.constant_ = c;
    return k;
  }

  static Kernel separable(SpatialField a, SpatialField b) {
    require_same_grid(a.grid, b.grid, "Kernel::separable");
    Kernel k;
    k.type_ = Type::Separable;
    k.a_ = std::move(a);
    k.b_ = std::move(b);
    return k;
  }

  /// table[x * n_space + y] = K(x, y); both indices are flat spatial indices.
  static Kernel dense(const GridSpec& g, std::vector<double> table) {
    if (g.n_space() > kDenseNodeLimit)
      throw InvalidFieldError("Kernel::dense: grid too large for a dense kernel");
    if (table.size() != static_cast<std::size_t>(g.n_space()) * g.n_space())
      throw InvalidFieldError("Kernel::dense: table size mismatch");
    Kernel k;
    k.type_ = Type::Dense;
    k.table_ = std::move(table);
    return k;
  }

  Type type() const { return type_; }
  double constant_value() const { return constant_; }
  const SpatialField& factor_x() const { return a_; }
  const SpatialField& factor_y() const { return b_; }
  const std::vector<double>& table() const { return table_; }

 private:
  Type type_;
  double constant_ = 0.0;
  SpatialField a_, b_;
  std::vector<double> table_;
};

/// Coefficient record shared by the residuals, the data generator and the
/// objective.  All fields live on one grid.
struct MfgCoefficients {
  double beta = 0.02;
  Field s;       // Hamiltonian coefficient
  Field f;       // local-interaction coefficient
  Kernel kernel; // global-interaction kernel
  Field F1;      // source in the first equation
  Field F2;      // source in the second equation

  /// s = f = 1, K = 1, beta = 0.02, zero sources.
  static MfgCoefficients defaults(const GridSpec& g) {
    MfgCoefficients c;
    c.beta = 0.02;
    c.s = Field(g, 1.0);
    c.f = Field(g, 1.0);
    c.kernel = Kernel::constant(1.0);
    c.F1 = Field(g);
    c.F2 = Field(g);
    return c;
  }

  const GridSpec& grid() const { return s.grid; }

  void validate() const {
    if (!(beta > 0.0))
      throw InvalidFieldError("MfgCoefficients: beta > 0 required");
    require_same_grid(f.grid, s.grid, "MfgCoefficients");
    require_same_grid(F1.grid, s.grid, "MfgCoefficients");
    require_same_grid(F2.grid, s.grid, "MfgCoefficients");
    if (kernel.type() == Kernel::Type::Separable)
      require_same_grid(kernel.factor_x().grid, s.grid, "MfgCoefficients kernel");
  }
};

// ---------------------------------------------------------------------------
// Global interaction term.
// ---------------------------------------------------------------------------

/// out(x,t) (+)= scale * int K(x,y) p(y,t) dy per time level, or the exact
/// transpose of that linear map when transpose = true.
inline void accumulate_kernel_integral(const MfgCoefficients& coeffs,
                                       const Field& in, Field& out, double scale,
                                       bool transpose = false) {
  require_same_grid(in.grid, coeffs.grid(), "accumulate_kernel_integral");
  require_same_grid(out.grid, in.grid, "accumulate_kernel_integral");
  const GridSpec& g = in.grid;
  const auto wy = quad_weights_omega(g);
  const int ns = g.n_space();
  const Kernel& ker = coeffs.kernel;

  for (int k = 0; k < g.nt; ++k) {
    const double* src = in.level(k);
    double* dst = out.level(k);
    switch (ker.type()) {
      case Kernel::Type::Constant: {
        const double c = ker.constant_value();
        if (!transpose) {
          double integral = 0.0;
          for (int m = 0; m < ns; ++m) integral += wy[m] * src[m];
          const double v = scale * c * integral;
          for (int m = 0; m < ns; ++m) dst[m] += v;
        } else {
          double total = 0.0;
          for (int m = 0; m < ns; ++m) total += src[m];
          for (int m = 0; m < ns; ++m) dst[m] += scale * c * wy[m] * total;
        }
        break;
      }
      case Kernel::Type::Separable: {
        const auto& ax = ker.factor_x().values;
        const auto& by = ker.factor_y().values;
        if (!transpose) {
          double integral = 0.0;
          for (int m = 0; m < ns; ++m) integral += wy[m] * by[m] * src[m];
          for (int m = 0; m < ns; ++m) dst[m] += scale * ax[m] * integral;
        } else {
          double total = 0.0;
          for (int m = 0; m < ns; ++m) total += ax[m] * src[m];
          for (int m = 0; m < ns; ++m) dst[m] += scale * wy[m] * by[m] * total;
        }
        break;
      }
      case Kernel::Type::Dense: {
        const auto& tab = ker.table();
        if (!transpose) {
          for (int x = 0; x < ns; ++x) {
            const double* row = tab.data() + static_cast<std::size_t>(x) * ns;
            double acc = 0.0;
            for (int y = 0; y < ns; ++y) acc += row[y] * wy[y] * src[y];
            dst[x] += scale * acc;
          }
        } else {
          for (int x = 0; x < ns; ++x) {
            const double* row = tab.data() + static_cast<std::size_t>(x) * ns;
            const double v = scale * src[x];
            for (int y = 0; y < ns; ++y) dst[y] += v * row[y] * wy[y];
          }
        }
        break;
      }
    }
  }
}

/// int K(x,y) p(y,t) dy as a field.
inline Field kernel_integral(const MfgCoefficients& coeffs, const Field& p) {
  Field out(p.grid);
  accumulate_kernel_integral(coeffs, p, out, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Residual operators.
// ---------------------------------------------------------------------------

/// Residual of the first equation:
///   u_t + beta Lap u + s |grad u|^2 / 2 + int K p dy + f p + F1.
inline Field residual_l1(const MfgCoefficients& coeffs, const Field& u,
                         const Field& p) {
  coeffs.validate();
  require_same_grid(u.grid, coeffs.grid(), "residual_l1");
  require_same_grid(p.grid, coeffs.grid(), "residual_l1");
  Field r = kernel_integral(coeffs, p);
  accumulate_time_deriv(u, r, 1.0);
  accumulate_laplacian(u, r, coeffs.beta);
  const auto grad_u = gradient_c(u);
  for (std::size_t m = 0; m < r.values.size(); ++m) {
    double g2 = 0.0;
    for (const auto& gax : grad_u) g2 += gax.values[m] * gax.values[m];
    r.values[m] += 0.5 * coeffs.s.values[m] * g2 +
                   coeffs.f.values[m] * p.values[m] + coeffs.F1.values[m];
  }
  return r;
}

/// Residual of the second equation:
///   p_t - beta Lap p + div(s p grad u) + F2.
/// The advective term is the face-flux divergence of the nodal flux
/// s p grad u, whose normal trace vanishes; its weighted column sums
/// telescope, so the residual integrates to the boundary data exactly.
inline Field residual_l2(const MfgCoefficients& coeffs, const Field& u,
                         const Field& p) {
  coeffs.validate();
  require_same_grid(u.grid, coeffs.grid(), "residual_l2");
  require_same_grid(p.grid, coeffs.grid(), "residual_l2");
  Field r = coeffs.F2;
  accumulate_time_deriv(p, r, 1.0);
  accumulate_laplacian(p, r, -coeffs.beta);
  const auto grad_u = gradient_c(u);
  for (int axis = 0; axis < u.grid.dim; ++axis) {
    Field flux(u.grid);
    for (std::size_t m = 0; m < flux.values.size(); ++m)
      flux.values[m] =
          coeffs.s.values[m] * p.values[m] * grad_u[axis].values[m];
    accumulate_divergence_axis(flux, axis, r, 1.0);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Linearizations (exact directional derivatives of the discrete residuals).
// ---------------------------------------------------------------------------

/// d/de residual_l1(u + e h, p + e q) at e = 0:
///   h_t + beta Lap h + s grad h . grad u + int K q dy + f q.
inline Field linearized_l1(const MfgCoefficients& coeffs, const Field& u,
                           const Field& /*p*/, const Field& h, const Field& q) {
  require_same_grid(h.grid, coeffs.grid(), "linearized_l1");
  require_same_grid(q.grid, coeffs.grid(), "linearized_l1");
  require_same_grid(u.grid, coeffs.grid(), "linearized_l1");
  Field r = kernel_integral(coeffs, q);
  accumulate_time_deriv(h, r, 1.0);
  accumulate_laplacian(h, r, coeffs.beta);
  const auto grad_u = gradient_c(u);
  const auto grad_h = gradient_c(h);
  for (std::size_t m = 0; m < r.values.size(); ++m) {
    double dot = 0.0;
    for (int axis = 0; axis < u.grid.dim; ++axis)
      dot += grad_u[axis].values[m] * grad_h[axis].values[m];
    r.values[m] += coeffs.s.values[m] * dot + coeffs.f.values[m] * q.values[m];
  }
  return r;
}

/// d/de residual_l2(u + e h, p + e q) at e = 0:
///   q_t - beta Lap q + div(s q grad u) + div(s p grad h).
inline Field linearized_l2(const MfgCoefficients& coeffs, const Field& u,
                           const Field& p, const Field& h, const Field& q) {
  require_same_grid(h.grid, coeffs.grid(), "linearized_l2");
  require_same_grid(q.grid, coeffs.grid(), "linearized_l2");
  Field r(u.grid);
  accumulate_time_deriv(q, r, 1.0);
  accumulate_laplacian(q, r, -coeffs.beta);
  const auto grad_u = gradient_c(u);
  for (int axis = 0; axis < u.grid.dim; ++axis) {
    Field flux(u.grid);
    Field grad_h_axis(u.grid);
    accumulate_gradient_axis(h, axis, grad_h_axis, 1.0);
    for (std::size_t m = 0; m < flux.values.size(); ++m)
      flux.values[m] = coeffs.s.values[m] *
                       (q.values[m] * grad_u[axis].values[m] +
                        p.values[m] * grad_h_axis.values[m]);
    accumulate_divergence_axis(flux, axis, r, 1.0);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Adjoint accumulation: exact transposes of the linearized maps, used to
// assemble the objective gradient.  g is the weighted residual co-field.
// ---------------------------------------------------------------------------

/// (h_adj, q_adj) += linearized_l1(., .)^T g at the point u.
inline void add_linearized_l1_transpose(const MfgCoefficients& coeffs,
                                        const Field& u, const Field& g,
                                        Field& h_adj, Field& q_adj) {
  accumulate_time_deriv(g, h_adj, 1.0, /*transpose=*/true);
  accumulate_laplacian(g, h_adj, coeffs.beta, /*transpose=*/true);
  const auto grad_u = gradient_c(u);
  for (int axis = 0; axis < u.grid.dim; ++axis) {
    Field weighted(g.grid);
    for (std::size_t m = 0; m < weighted.values.size(); ++m)
      weighted.values[m] =
          coeffs.s.values[m] * grad_u[axis].values[m] * g.values[m];
    accumulate_gradient_axis(weighted, axis, h_adj, 1.0, /*transpose=*/true);
  }
  accumulate_kernel_integral(coeffs, g, q_adj, 1.0, /*transpose=*/true);
  for (std::size_t m = 0; m < q_adj.values.size(); ++m)
    q_adj.values[m] += coeffs.f.values[m] * g.values[m];
}

/// (h_adj, q_adj) += linearized_l2(., .)^T g at the point (u, p).
inline void add_linearized_l2_transpose(const MfgCoefficients& coeffs,
                                        const Field& u, const Field& p,
                                        const Field& g, Field& h_adj,
                                        Field& q_adj) {
  accumulate_time_deriv(g, q_adj, 1.0, /*transpose=*/true);
  accumulate_laplacian(g, q_adj, -coeffs.beta, /*transpose=*/true);
  const auto grad_u = gradient_c(u);
  for (int axis = 0; axis < u.grid.dim; ++axis) {
    Field div_t(g.grid);
    accumulate_divergence_axis(g, axis, div_t, 1.0, /*transpose=*/true);
    Field weighted(g.grid);
    for (std::size_t m = 0; m < weighted.values.size(); ++m) {
      q_adj.values[m] +=
          coeffs.s.values[m] * grad_u[axis].values[m] * div_t.values[m];
      weighted.values[m] = coeffs.s.values[m] * p.values[m] * div_t.values[m];
    }
    accumulate_gradient_axis(weighted, axis, h_adj, 1.0, /*transpose=*/true);
  }
}

}  // namespace mfgrec
