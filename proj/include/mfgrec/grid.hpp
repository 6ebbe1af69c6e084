#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

/// Space-time lattice, scalar fields on it, and the discrete differential
/// operators shared by the residuals, the data-generation solver and the
/// objective gradient.
///
/// Conventions, fixed once for the whole library:
///  - node-centered grid including boundary nodes, spacing hx = Lx/(nx-1);
///  - zero-Neumann boundaries are realized by even mirror ghosts
///    (ghost value = first interior value), so the discrete central normal
///    derivative of every field vanishes identically;
///  - quadrature is tensor-product trapezoidal;
///  - the divergence is the face-flux (SBP) form: one-sided at the two
///    boundary nodes, central inside.  Together with the mirror-ghost
///    gradient it satisfies summation by parts exactly whenever the flux
///    has zero normal trace, and its weighted column sums telescope, which
///    is what makes mass conservation a machine-precision statement.
namespace mfgrec {

class InvalidFieldError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Space-time lattice over [0,Lx](x[0,Ly]) x [0,T].
struct GridSpec {
  int dim = 2;   // spatial dimension, 1 or 2
  int nx = 3;    // nodes per axis, boundary included
  int ny = 1;    // 1 when dim == 1
  int nt = 2;    // time levels
  double lx = 1.0;
  double ly = 1.0;
  double horizon = 1.0;

  static GridSpec make_1d(int nx, int nt, double lx, double horizon) {
    GridSpec g;
    g.dim = 1;
    g.nx = nx;
    g.ny = 1;
    g.nt = nt;
    g.lx = lx;
    g.ly = 0.0;
    g.horizon = horizon;
    g.validate();
    return g;
  }

  static GridSpec make_2d(int nx, int ny, int nt, double lx, double ly,
                          double horizon) {
    GridSpec g;
    g.dim = 2;
    g.nx = nx;
    g.ny = ny;
    g.nt = nt;
    g.lx = lx;
    g.ly = ly;
    g.horizon = horizon;
    g.validate();
    return g;
  }

  /// Unit box, unit horizon.
  static GridSpec unit(int nx, int ny, int nt) {
    return make_2d(nx, ny, nt, 1.0, 1.0, 1.0);
  }

  void validate() const {
    if (dim != 1 && dim != 2)
      throw InvalidFieldError("GridSpec: dim must be 1 or 2");
    if (nx < 3) throw InvalidFieldError("GridSpec: nx >= 3 required");
    if (dim == 2 && ny < 3) throw InvalidFieldError("GridSpec: ny >= 3 required");
    if (dim == 1 && ny != 1) throw InvalidFieldError("GridSpec: ny must be 1 when dim == 1");
    if (nt < 2) throw InvalidFieldError("GridSpec: nt >= 2 required");
    if (!(lx > 0.0)) throw InvalidFieldError("GridSpec: Lx > 0 required");
    if (dim == 2 && !(ly > 0.0)) throw InvalidFieldError("GridSpec: Ly > 0 required");
    if (!(horizon > 0.0)) throw InvalidFieldError("GridSpec: T > 0 required");
  }

  double hx() const { return lx / (nx - 1); }
  double hy() const { return ny > 1 ? ly / (ny - 1) : 0.0; }
  double dt() const { return horizon / (nt - 1); }

  double x(int i) const { return i * hx(); }
  double y(int j) const { return j * hy(); }
  double t(int k) const { return k * dt(); }

  int n_space() const { return nx * ny; }
  std::size_t n_nodes() const {
    return static_cast<std::size_t>(nt) * static_cast<std::size_t>(n_space());
  }

  int space_index(int j, int i) const { return j * nx + i; }
  std::size_t index(int k, int j, int i) const {
    return static_cast<std::size_t>(k) * n_space() + space_index(j, i);
  }

  friend bool operator==(const GridSpec& a, const GridSpec& b) {
    return a.dim == b.dim && a.nx == b.nx && a.ny == b.ny && a.nt == b.nt &&
           a.lx == b.lx && a.ly == b.ly && a.horizon == b.horizon;
  }
  friend bool operator!=(const GridSpec& a, const GridSpec& b) { return !(a == b); }
};

/// Scalar function sampled on the spatial lattice only (data slices,
/// initial densities, terminal measurements).
struct SpatialField {
  GridSpec grid;
  std::vector<double> values;

  SpatialField() = default;
  explicit SpatialField(const GridSpec& g, double fill = 0.0)
      : grid(g), values(static_cast<std::size_t>(g.n_space()), fill) {}

  double& at(int j, int i) { return values[grid.space_index(j, i)]; }
  double at(int j, int i) const { return values[grid.space_index(j, i)]; }

  template <class Fn>
  static SpatialField from_function(const GridSpec& g, Fn&& fn) {
    SpatialField f(g);
    for (int j = 0; j < g.ny; ++j)
      for (int i = 0; i < g.nx; ++i)
        f.at(j, i) = fn(g.x(i), g.y(j));
    return f;
  }
};

/// Scalar function sampled on the full space-time lattice, time-major.
struct Field {
  GridSpec grid;
  std::vector<double> values;

  Field() = default;
  explicit Field(const GridSpec& g, double fill = 0.0)
      : grid(g), values(g.n_nodes(), fill) {}

  double& at(int k, int j, int i) { return values[grid.index(k, j, i)]; }
  double at(int k, int j, int i) const { return values[grid.index(k, j, i)]; }

  double* level(int k) { return values.data() + static_cast<std::size_t>(k) * grid.n_space(); }
  const double* level(int k) const {
    return values.data() + static_cast<std::size_t>(k) * grid.n_space();
  }

  SpatialField slice(int k) const {
    SpatialField s(grid);
    std::copy(level(k), level(k) + grid.n_space(), s.values.begin());
    return s;
  }

  void set_slice(int k, const SpatialField& s) {
    std::copy(s.values.begin(), s.values.end(), level(k));
  }

  /// fn(x, y, t)
  template <class Fn>
  static Field from_function(const GridSpec& g, Fn&& fn) {
    Field f(g);
    for (int k = 0; k < g.nt; ++k)
      for (int j = 0; j < g.ny; ++j)
        for (int i = 0; i < g.nx; ++i)
          f.at(k, j, i) = fn(g.x(i), g.y(j), g.t(k));
    return f;
  }
};

inline void require_same_grid(const GridSpec& a, const GridSpec& b,
                              const char* what) {
  if (!(a == b))
    throw InvalidFieldError(std::string("grid mismatch in ") + what);
}

inline void require_shape(const Field& f, const GridSpec& g, const char* what) {
  require_same_grid(f.grid, g, what);
  if (f.values.size() != g.n_nodes())
    throw InvalidFieldError(std::string("field size mismatch in ") + what);
}

template <class FieldT>
void require_finite(const FieldT& f, const char* what) {
  for (double v : f.values)
    if (!std::isfinite(v))
      throw NumericError(std::string("non-finite value in ") + what);
}

// ---------------------------------------------------------------------------
// One-dimensional stencil rows.
//
// Each enumerator emits the nonzero entries (dst, src, coeff) of one row
// family.  Appliers below run the same entries forward (out[dst] += c*in[src])
// or transposed (out[src] += c*in[dst]), so operator transposes are exact by
// construction.
// ---------------------------------------------------------------------------

/// Compact second difference with even mirror ghosts at both ends.
template <class Emit>
inline void second_diff_rows(int n, double inv_h2, Emit&& emit) {
  emit(0, 0, -2.0 * inv_h2);
  emit(0, 1, 2.0 * inv_h2);
  for (int i = 1; i + 1 < n; ++i) {
    emit(i, i - 1, inv_h2);
    emit(i, i, -2.0 * inv_h2);
    emit(i, i + 1, inv_h2);
  }
  emit(n - 1, n - 2, 2.0 * inv_h2);
  emit(n - 1, n - 1, -2.0 * inv_h2);
}

/// Central first difference; mirror ghosts zero the two boundary rows.
template <class Emit>
inline void central_diff_rows(int n, double inv_2h, Emit&& emit) {
  for (int i = 1; i + 1 < n; ++i) {
    emit(i, i + 1, inv_2h);
    emit(i, i - 1, -inv_2h);
  }
}

/// Face-flux divergence rows: one-sided at the ends, central inside.
template <class Emit>
inline void sbp_diff_rows(int n, double inv_h, Emit&& emit) {
  emit(0, 1, inv_h);
  emit(0, 0, -inv_h);
  for (int i = 1; i + 1 < n; ++i) {
    emit(i, i + 1, 0.5 * inv_h);
    emit(i, i - 1, -0.5 * inv_h);
  }
  emit(n - 1, n - 1, inv_h);
  emit(n - 1, n - 2, -inv_h);
}

/// First derivative in time: second-order one-sided at the ends, central
/// inside.  Exact on quadratics.  nt == 2 falls back to the two-point slope.
template <class Emit>
inline void time_diff_rows(int nt, double inv_dt, Emit&& emit) {
  if (nt == 2) {
    emit(0, 1, inv_dt);
    emit(0, 0, -inv_dt);
    emit(1, 1, inv_dt);
    emit(1, 0, -inv_dt);
    return;
  }
  emit(0, 0, -1.5 * inv_dt);
  emit(0, 1, 2.0 * inv_dt);
  emit(0, 2, -0.5 * inv_dt);
  for (int k = 1; k + 1 < nt; ++k) {
    emit(k, k + 1, 0.5 * inv_dt);
    emit(k, k - 1, -0.5 * inv_dt);
  }
  emit(nt - 1, nt - 1, 1.5 * inv_dt);
  emit(nt - 1, nt - 2, -2.0 * inv_dt);
  emit(nt - 1, nt - 3, 0.5 * inv_dt);
}

/// Pure second difference in time; the end rows reuse the adjacent interior
/// stencil (no mirror condition holds in time).  Exact on quadratics.
template <class Emit>
inline void time_second_diff_rows(int nt, double inv_dt2, Emit&& emit) {
  if (nt < 3) return;  // no curvature information on two levels
  emit(0, 0, inv_dt2);
  emit(0, 1, -2.0 * inv_dt2);
  emit(0, 2, inv_dt2);
  for (int k = 1; k + 1 < nt; ++k) {
    emit(k, k - 1, inv_dt2);
    emit(k, k, -2.0 * inv_dt2);
    emit(k, k + 1, inv_dt2);
  }
  emit(nt - 1, nt - 3, inv_dt2);
  emit(nt - 1, nt - 2, -2.0 * inv_dt2);
  emit(nt - 1, nt - 1, inv_dt2);
}

// ---------------------------------------------------------------------------
// Accumulating appliers over fields.  axis: 0 = x, 1 = y.
// ---------------------------------------------------------------------------

namespace detail {

template <class Rows>
inline void accumulate_axis(const GridSpec& g, const double* in, double* out,
                            int axis, double scale, bool transpose,
                            Rows&& rows) {
  const int n = (axis == 0) ? g.nx : g.ny;
  const int stride = (axis == 0) ? 1 : g.nx;
  const int nlines = (axis == 0) ? g.ny : g.nx;
  const int line_stride = (axis == 0) ? g.nx : 1;
  for (int line = 0; line < nlines; ++line) {
    const std::size_t base = static_cast<std::size_t>(line) * line_stride;
    rows(n, [&](int d, int s, double c) {
      const std::size_t di = base + static_cast<std::size_t>(d) * stride;
      const std::size_t si = base + static_cast<std::size_t>(s) * stride;
      if (!transpose)
        out[di] += scale * c * in[si];
      else
        out[si] += scale * c * in[di];
    });
  }
}

template <class Rows>
inline void accumulate_time(const GridSpec& g, const Field& in, Field& out,
                            double scale, bool transpose, Rows&& rows) {
  const int ns = g.n_space();
  rows(g.nt, [&](int kd, int ks, double c) {
    const double* src = in.level(transpose ? kd : ks);
    double* dst = out.level(transpose ? ks : kd);
    const double f = scale * c;
    for (int m = 0; m < ns; ++m) dst[m] += f * src[m];
  });
}

}  // namespace detail

/// out += scale * D2_axis(in) (or its transpose), mirror-ghost second
/// difference along one spatial axis, applied level by level.
inline void accumulate_second_diff_axis(const Field& in, int axis, Field& out,
                                        double scale, bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_second_diff_axis");
  const GridSpec& g = in.grid;
  const double inv_h2 = (axis == 0) ? 1.0 / (g.hx() * g.hx()) : 1.0 / (g.hy() * g.hy());
  for (int k = 0; k < g.nt; ++k)
    detail::accumulate_axis(g, in.level(k), out.level(k), axis, scale, transpose,
                            [inv_h2](int n, auto&& emit) {
                              second_diff_rows(n, inv_h2, emit);
                            });
}

inline void accumulate_second_diff_axis(const SpatialField& in, int axis,
                                        SpatialField& out, double scale,
                                        bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_second_diff_axis");
  const GridSpec& g = in.grid;
  const double inv_h2 = (axis == 0) ? 1.0 / (g.hx() * g.hx()) : 1.0 / (g.hy() * g.hy());
  detail::accumulate_axis(g, in.values.data(), out.values.data(), axis, scale,
                          transpose, [inv_h2](int n, auto&& emit) {
                            second_diff_rows(n, inv_h2, emit);
                          });
}

/// out += scale * D_axis(in) (or transpose), mirror-ghost central difference.
inline void accumulate_gradient_axis(const Field& in, int axis, Field& out,
                                     double scale, bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_gradient_axis");
  const GridSpec& g = in.grid;
  const double inv_2h = (axis == 0) ? 1.0 / (2.0 * g.hx()) : 1.0 / (2.0 * g.hy());
  for (int k = 0; k < g.nt; ++k)
    detail::accumulate_axis(g, in.level(k), out.level(k), axis, scale, transpose,
                            [inv_2h](int n, auto&& emit) {
                              central_diff_rows(n, inv_2h, emit);
                            });
}

inline void accumulate_gradient_axis(const SpatialField& in, int axis,
                                     SpatialField& out, double scale,
                                     bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_gradient_axis");
  const GridSpec& g = in.grid;
  const double inv_2h = (axis == 0) ? 1.0 / (2.0 * g.hx()) : 1.0 / (2.0 * g.hy());
  detail::accumulate_axis(g, in.values.data(), out.values.data(), axis, scale,
                          transpose, [inv_2h](int n, auto&& emit) {
                            central_diff_rows(n, inv_2h, emit);
                          });
}

/// out += scale * Ddiv_axis(in) (or transpose), face-flux divergence stencil.
inline void accumulate_divergence_axis(const Field& in, int axis, Field& out,
                                       double scale, bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_divergence_axis");
  const GridSpec& g = in.grid;
  const double inv_h = (axis == 0) ? 1.0 / g.hx() : 1.0 / g.hy();
  for (int k = 0; k < g.nt; ++k)
    detail::accumulate_axis(g, in.level(k), out.level(k), axis, scale, transpose,
                            [inv_h](int n, auto&& emit) {
                              sbp_diff_rows(n, inv_h, emit);
                            });
}

inline void accumulate_divergence_axis(const SpatialField& in, int axis,
                                       SpatialField& out, double scale,
                                       bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_divergence_axis");
  const GridSpec& g = in.grid;
  const double inv_h = (axis == 0) ? 1.0 / g.hx() : 1.0 / g.hy();
  detail::accumulate_axis(g, in.values.data(), out.values.data(), axis, scale,
                          transpose, [inv_h](int n, auto&& emit) {
                            sbp_diff_rows(n, inv_h, emit);
                          });
}

/// out += scale * d/dt(in) (or transpose).
inline void accumulate_time_deriv(const Field& in, Field& out, double scale,
                                  bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_time_deriv");
  const double inv_dt = 1.0 / in.grid.dt();
  detail::accumulate_time(in.grid, in, out, scale, transpose,
                          [inv_dt](int nt, auto&& emit) {
                            time_diff_rows(nt, inv_dt, emit);
                          });
}

/// out += scale * d2/dt2(in) (or transpose).
inline void accumulate_time_second_diff(const Field& in, Field& out,
                                        double scale, bool transpose = false) {
  require_same_grid(in.grid, out.grid, "accumulate_time_second_diff");
  const double inv_dt2 = 1.0 / (in.grid.dt() * in.grid.dt());
  detail::accumulate_time(in.grid, in, out, scale, transpose,
                          [inv_dt2](int nt, auto&& emit) {
                            time_second_diff_rows(nt, inv_dt2, emit);
                          });
}

/// out += scale * Lap(in) (or transpose), sum of per-axis second differences.
inline void accumulate_laplacian(const Field& in, Field& out, double scale,
                                 bool transpose = false) {
  for (int axis = 0; axis < in.grid.dim; ++axis)
    accumulate_second_diff_axis(in, axis, out, scale, transpose);
}

inline void accumulate_laplacian(const SpatialField& in, SpatialField& out,
                                 double scale, bool transpose = false) {
  for (int axis = 0; axis < in.grid.dim; ++axis)
    accumulate_second_diff_axis(in, axis, out, scale, transpose);
}

// ---------------------------------------------------------------------------
// Named operators.
// ---------------------------------------------------------------------------

/// Discrete Laplacian under the zero-Neumann convention.
inline Field laplacian_neumann(const Field& f) {
  require_shape(f, f.grid, "laplacian_neumann");
  Field out(f.grid);
  accumulate_laplacian(f, out, 1.0);
  return out;
}

inline SpatialField laplacian_neumann(const SpatialField& f) {
  SpatialField out(f.grid);
  accumulate_laplacian(f, out, 1.0);
  return out;
}

/// Laplacian of a single time level.
inline SpatialField laplacian_neumann(const Field& f, int level) {
  return laplacian_neumann(f.slice(level));
}

/// Central gradient; the normal component vanishes at boundary nodes by the
/// mirror convention.  Returns one field per spatial axis.
inline std::vector<Field> gradient_c(const Field& f) {
  std::vector<Field> out;
  out.reserve(f.grid.dim);
  for (int axis = 0; axis < f.grid.dim; ++axis) {
    Field d(f.grid);
    accumulate_gradient_axis(f, axis, d, 1.0);
    out.push_back(std::move(d));
  }
  return out;
}

inline std::vector<SpatialField> gradient_c(const SpatialField& f) {
  std::vector<SpatialField> out;
  out.reserve(f.grid.dim);
  for (int axis = 0; axis < f.grid.dim; ++axis) {
    SpatialField d(f.grid);
    accumulate_gradient_axis(f, axis, d, 1.0);
    out.push_back(std::move(d));
  }
  return out;
}

/// Face-flux divergence of a vector field (one component per axis).
inline Field divergence_c(const std::vector<Field>& vec) {
  if (vec.empty()) throw InvalidFieldError("divergence_c: empty vector field");
  const GridSpec& g = vec.front().grid;
  if (static_cast<int>(vec.size()) != g.dim)
    throw InvalidFieldError("divergence_c: one component per spatial axis required");
  Field out(g);
  for (int axis = 0; axis < g.dim; ++axis) {
    require_same_grid(vec[axis].grid, g, "divergence_c");
    accumulate_divergence_axis(vec[axis], axis, out, 1.0);
  }
  return out;
}

inline SpatialField divergence_c(const std::vector<SpatialField>& vec) {
  if (vec.empty()) throw InvalidFieldError("divergence_c: empty vector field");
  const GridSpec& g = vec.front().grid;
  if (static_cast<int>(vec.size()) != g.dim)
    throw InvalidFieldError("divergence_c: one component per spatial axis required");
  SpatialField out(g);
  for (int axis = 0; axis < g.dim; ++axis) {
    require_same_grid(vec[axis].grid, g, "divergence_c");
    accumulate_divergence_axis(vec[axis], axis, out, 1.0);
  }
  return out;
}

/// Time derivative of a space-time field.
inline Field time_deriv(const Field& f) {
  Field out(f.grid);
  accumulate_time_deriv(f, out, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// Quadrature.
// ---------------------------------------------------------------------------

/// 1-D trapezoid weights: h at interior nodes, h/2 at the ends.
inline std::vector<double> trapezoid_weights(int n, double h) {
  std::vector<double> w(static_cast<std::size_t>(n), h);
  w.front() = 0.5 * h;
  w.back() = 0.5 * h;
  return w;
}

/// Spatial quadrature weights, one per spatial node.
inline std::vector<double> quad_weights_omega(const GridSpec& g) {
  const auto wx = trapezoid_weights(g.nx, g.hx());
  if (g.dim == 1) return wx;
  const auto wy = trapezoid_weights(g.ny, g.hy());
  std::vector<double> w(static_cast<std::size_t>(g.n_space()));
  for (int j = 0; j < g.ny; ++j)
    for (int i = 0; i < g.nx; ++i)
      w[g.space_index(j, i)] = wx[i] * wy[j];
  return w;
}

/// Space-time quadrature weights, one per lattice node.
inline std::vector<double> quad_weights_qt(const GridSpec& g) {
  const auto ws = quad_weights_omega(g);
  const auto wt = trapezoid_weights(g.nt, g.dt());
  std::vector<double> w(g.n_nodes());
  for (int k = 0; k < g.nt; ++k)
    for (int m = 0; m < g.n_space(); ++m)
      w[static_cast<std::size_t>(k) * g.n_space() + m] = wt[k] * ws[m];
  return w;
}

/// Trapezoidal integral over the space-time cylinder.
inline double integrate_qt(const Field& f) {
  const auto w = quad_weights_qt(f.grid);
  double s = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * f.values[m];
  return s;
}

/// Trapezoidal integral over the spatial domain.
inline double integrate_omega(const SpatialField& f) {
  const auto w = quad_weights_omega(f.grid);
  double s = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * f.values[m];
  return s;
}

/// Integral of one time level of a space-time field.
inline double integrate_omega(const Field& f, int level) {
  const auto w = quad_weights_omega(f.grid);
  const double* v = f.level(level);
  double s = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * v[m];
  return s;
}

/// Discrete L2(Q_T) norm.
inline double norm_l2_qt(const Field& f) {
  const auto w = quad_weights_qt(f.grid);
  double s = 0.0;
  for (std::size_t m = 0; m < w.size(); ++m) s += w[m] * f.values[m] * f.values[m];
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------
// Small field algebra helpers.
// ---------------------------------------------------------------------------

inline Field& axpy(Field& y, double alpha, const Field& x) {
  require_same_grid(y.grid, x.grid, "axpy");
  for (std::size_t m = 0; m < y.values.size(); ++m) y.values[m] += alpha * x.values[m];
  return y;
}

inline double max_abs(const Field& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

inline double max_abs(const SpatialField& f) {
  double m = 0.0;
  for (double v : f.values) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace mfgrec
