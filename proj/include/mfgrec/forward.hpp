#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <cmath>
#include <string>
#include <vector>

#include "mfgrec/grid.hpp"
#include "mfgrec/model.hpp"

/// Manufactured-data generation: march the density equation forward for a
/// chosen value function, then back-compute the source that turns the pair
/// into an exact solution of the full system on the inversion grid.
namespace mfgrec {

/// Inputs of one data-generation run.  The chosen value function v and the
/// initial density live on the fine grid; the inversion happens on the
/// coarse grid, whose nodes must be a subset of the fine ones.
struct GeneratorSpec {
  Field v;           // chosen value function on the fine grid
  SpatialField m0;   // initial density on the fine grid
  GridSpec fine_grid;
  GridSpec coarse_grid;

  void validate() const {
    require_same_grid(v.grid, fine_grid, "GeneratorSpec.v");
    require_same_grid(m0.grid, fine_grid, "GeneratorSpec.m0");
    if (fine_grid.dim != coarse_grid.dim ||
        fine_grid.lx != coarse_grid.lx || fine_grid.ly != coarse_grid.ly ||
        fine_grid.horizon != coarse_grid.horizon)
      throw InvalidFieldError("GeneratorSpec: fine and coarse grids must share the domain");
    auto nests = [](int nf, int nc) { return (nf - 1) % (nc - 1) == 0; };
    if (!nests(fine_grid.nx, coarse_grid.nx) ||
        (fine_grid.dim == 2 && !nests(fine_grid.ny, coarse_grid.ny)) ||
        !nests(fine_grid.nt, coarse_grid.nt))
      throw InvalidFieldError("GeneratorSpec: coarse nodes must nest in the fine grid");
    for (double m : m0.values)
      if (m < 0.0)
        throw InvalidFieldError("GeneratorSpec: m0 must be nonnegative");
  }
};

/// Boundary measurements plus the ground truth they were cut from.
struct Dataset {
  SpatialField uT;   // value function at t = T
  SpatialField p0;   // density at t = 0
  SpatialField pT;   // density at t = T
  Field truth_u;     // ground truth on the inversion grid
  Field truth_p;
  MfgCoefficients coeffs;  // inversion-grid coefficients, manufactured F1
  bool has_truth = true;

  const GridSpec& grid() const { return coeffs.grid(); }
};

/// Nodal sampling of a fine-grid field at the coarse nodes.
inline Field restrict_field(const Field& fine, const GridSpec& coarse) {
  const GridSpec& gf = fine.grid;
  const int rx = (gf.nx - 1) / (coarse.nx - 1);
  const int ry = gf.dim == 2 ? (gf.ny - 1) / (coarse.ny - 1) : 1;
  const int rt = (gf.nt - 1) / (coarse.nt - 1);
  Field out(coarse);
  for (int k = 0; k < coarse.nt; ++k)
    for (int j = 0; j < coarse.ny; ++j)
      for (int i = 0; i < coarse.nx; ++i)
        out.at(k, j, i) = fine.at(k * rt, j * ry, i * rx);
  return out;
}

inline SpatialField restrict_spatial(const SpatialField& fine,
                                     const GridSpec& coarse) {
  const GridSpec& gf = fine.grid;
  const int rx = (gf.nx - 1) / (coarse.nx - 1);
  const int ry = gf.dim == 2 ? (gf.ny - 1) / (coarse.ny - 1) : 1;
  SpatialField out(coarse);
  for (int j = 0; j < coarse.ny; ++j)
    for (int i = 0; i < coarse.nx; ++i)
      out.at(j, i) = fine.at(j * ry, i * rx);
  return out;
}

namespace detail {

/// I - beta*dt*Lap on the spatial lattice (mirror-ghost Laplacian).
inline Eigen::SparseMatrix<double> implicit_diffusion_matrix(const GridSpec& g,
                                                             double beta,
                                                             double dt) {
  const int ns = g.n_space();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(ns) * 6);
  for (int m = 0; m < ns; ++m) trips.emplace_back(m, m, 1.0);
  const double scale = -beta * dt;
  for (int axis = 0; axis < g.dim; ++axis) {
    const int n = (axis == 0) ? g.nx : g.ny;
    const int stride = (axis == 0) ? 1 : g.nx;
    const int nlines = (axis == 0) ? g.ny : g.nx;
    const int line_stride = (axis == 0) ? g.nx : 1;
    const double inv_h2 =
        (axis == 0) ? 1.0 / (g.hx() * g.hx()) : 1.0 / (g.hy() * g.hy());
    for (int line = 0; line < nlines; ++line) {
      const int base = line * line_stride;
      second_diff_rows(n, inv_h2, [&](int d, int s, double c) {
        trips.emplace_back(base + d * stride, base + s * stride, scale * c);
      });
    }
  }
  Eigen::SparseMatrix<double> mat(ns, ns);
  mat.setFromTriplets(trips.begin(), trips.end());
  return mat;
}

}  // namespace detail

/// March the density problem
///   m_t - beta Lap m + div(s m grad v) = 0,  m(.,0) = m0,  zero Neumann
/// over the fine grid.  Diffusion is implicit (backward Euler, one sparse
/// factorization reused for every step), the conservative advective flux is
/// explicit.  Discrete total mass is conserved to round-off per step.
inline Field solve_fokker_planck(const GeneratorSpec& spec,
                                 const MfgCoefficients& coeffs) {
  spec.validate();
  coeffs.validate();
  require_same_grid(coeffs.grid(), spec.fine_grid, "solve_fokker_planck");
  const GridSpec& g = spec.fine_grid;
  const double dt = g.dt();

  const auto grad_v = gradient_c(spec.v);

  // advective CFL: max |s grad v| dt / h <= 1 per axis
  for (int axis = 0; axis < g.dim; ++axis) {
    const double h = (axis == 0) ? g.hx() : g.hy();
    double vmax = 0.0;
    for (std::size_t m = 0; m < grad_v[axis].values.size(); ++m)
      vmax = std::max(vmax, std::abs(coeffs.s.values[m] *
                                     grad_v[axis].values[m]));
    const double cfl = vmax * dt / h;
    if (cfl > 1.0)
      throw NumericError("solve_fokker_planck: advection CFL " +
                         std::to_string(cfl) + " > 1 on axis " +
                         std::to_string(axis) + "; refine the time grid");
  }

  Eigen::SparseMatrix<double> sys =
      detail::implicit_diffusion_matrix(g, coeffs.beta, dt);
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.compute(sys);
  if (lu.info() != Eigen::Success)
    throw NumericError("solve_fokker_planck: diffusion factorization failed");

  const int ns = g.n_space();
  Field m(g);
  m.set_slice(0, spec.m0);

  Eigen::VectorXd rhs(ns);
  SpatialField flux(g), adv(g);
  for (int k = 0; k + 1 < g.nt; ++k) {
    // explicit conservative advection at level k
    std::fill(adv.values.begin(), adv.values.end(), 0.0);
    for (int axis = 0; axis < g.dim; ++axis) {
      const double* gv = grad_v[axis].level(k);
      const double* sk = coeffs.s.level(k);
      const double* mk = m.level(k);
      for (int n = 0; n < ns; ++n) flux.values[n] = sk[n] * mk[n] * gv[n];
      accumulate_divergence_axis(flux, axis, adv, 1.0);
    }
    const double* mk = m.level(k);
    for (int n = 0; n < ns; ++n) rhs[n] = mk[n] - dt * adv.values[n];
    Eigen::VectorXd next = lu.solve(rhs);
    if (lu.info() != Eigen::Success)
      throw NumericError("solve_fokker_planck: implicit solve failed");
    double* mk1 = m.level(k + 1);
    for (int n = 0; n < ns; ++n) mk1[n] = next[n];
  }
  require_finite(m, "solve_fokker_planck");
  return m;
}

/// Back-computed source for the first equation:
///   F = -(v_t + beta Lap v + s |grad v|^2 / 2) - int K m dy - f m,
/// evaluated with the same discrete operators as residual_l1, so that
/// residual_l1(v, m) with this source vanishes to round-off.
inline Field manufacture_source(const MfgCoefficients& coeffs, const Field& v,
                                const Field& m) {
  require_same_grid(v.grid, coeffs.grid(), "manufacture_source");
  require_same_grid(m.grid, coeffs.grid(), "manufacture_source");
  MfgCoefficients zero_source = coeffs;
  zero_source.F1 = Field(coeffs.grid());
  Field r = residual_l1(zero_source, v, m);
  for (double& x : r.values) x = -x;
  return r;
}

/// Where the manufactured source is assembled.  Coarse keeps the ground
/// truth an exact root of the coarse residual; Fine leaves the genuine
/// coarse-grid consistency error in place (used by refinement studies).
enum class SourceGrid { Coarse, Fine };

/// Full data-generation pipeline: fine-grid density solve, nodal restriction
/// of (v, m), manufactured source, boundary-slice extraction.
inline Dataset generate_dataset(const GeneratorSpec& spec,
                                const MfgCoefficients& coeffs,
                                SourceGrid source_grid = SourceGrid::Coarse) {
  spec.validate();
  const Field m_fine = solve_fokker_planck(spec, coeffs);

  const GridSpec& gc = spec.coarse_grid;
  Dataset ds;
  ds.truth_u = restrict_field(spec.v, gc);
  ds.truth_p = restrict_field(m_fine, gc);

  // coefficients on the inversion grid
  MfgCoefficients cc;
  cc.beta = coeffs.beta;
  cc.s = restrict_field(coeffs.s, gc);
  cc.f = restrict_field(coeffs.f, gc);
  switch (coeffs.kernel.type()) {
    case Kernel::Type::Constant:
      cc.kernel = Kernel::constant(coeffs.kernel.constant_value());
      break;
    case Kernel::Type::Separable:
      cc.kernel = Kernel::separable(
          restrict_spatial(coeffs.kernel.factor_x(), gc),
          restrict_spatial(coeffs.kernel.factor_y(), gc));
      break;
    case Kernel::Type::Dense: {
      const GridSpec& gf = spec.fine_grid;
      const int rx = (gf.nx - 1) / (gc.nx - 1);
      const int ry = gf.dim == 2 ? (gf.ny - 1) / (gc.ny - 1) : 1;
      const int ns = gc.n_space();
      std::vector<double> table(static_cast<std::size_t>(ns) * ns);
      auto fine_index = [&](int flat) {
        const int j = flat / gc.nx, i = flat % gc.nx;
        return (j * ry) * gf.nx + i * rx;
      };
      for (int x = 0; x < ns; ++x)
        for (int y = 0; y < ns; ++y)
          table[static_cast<std::size_t>(x) * ns + y] =
              coeffs.kernel
                  .table()[static_cast<std::size_t>(fine_index(x)) *
                               gf.n_space() +
                           fine_index(y)];
      cc.kernel = Kernel::dense(gc, std::move(table));
      break;
    }
  }
  cc.F2 = Field(gc);

  if (source_grid == SourceGrid::Coarse) {
    cc.F1 = Field(gc);
    cc.F1 = manufacture_source(cc, ds.truth_u, ds.truth_p);
  } else {
    MfgCoefficients cf = coeffs;
    cf.F1 = Field(spec.fine_grid);
    cf.F2 = Field(spec.fine_grid);
    cc.F1 = restrict_field(manufacture_source(cf, spec.v, m_fine), gc);
  }
  ds.coeffs = std::move(cc);

  ds.uT = ds.truth_u.slice(gc.nt - 1);
  ds.p0 = ds.truth_p.slice(0);
  ds.pT = ds.truth_p.slice(gc.nt - 1);
  ds.has_truth = true;
  return ds;
}

}  // namespace mfgrec
