#pragma once

#include <functional>
#include <utility>

#include "bel/core.hpp"
#include "bel/expr.hpp"

namespace bel {

// A structured coordinate chart carrying the metric, its analytic first
// derivatives, an exact distance function, and sampled caches of everything
// the discrete operators need (g, g^{-1}, sqrt(det g), dg, Christoffels).
struct Chart {
  std::string catalog;
  int m = 0;
  std::vector<Axis> axes;
  Grid grid;
  double injectivity_bound = 0.0;

  std::function<void(const double*, double*)> metric_fn;        // g_ij, m*m
  std::function<void(const double*, double*)> metric_deriv_fn;  // dg[k][i][j], m^3
  std::function<double(const double*, const double*)> distance_fn;

  // per-point caches, filled by finalize()
  std::vector<double> g;      // npts * m * m
  std::vector<double> ginv;   // npts * m * m
  std::vector<double> sqrtg;  // npts
  std::vector<double> dg;     // npts * m^3, [k][i][j]
  std::vector<double> gamma;  // npts * m^3, Γ^k_{ij} as [k][i][j]

  long npts() const { return grid.npts; }
  int mm() const { return m * m; }
  int mmm() const { return m * m * m; }

  double coord(const std::array<int, kMaxDim>& ix, int a) const { return axes[a].coord(ix[a]); }
  void point(const std::array<int, kMaxDim>& ix, double* x) const {
    for (int a = 0; a < m; ++a) x[a] = axes[a].coord(ix[a]);
  }

  double hmax() const {
    double h = 0.0;
    for (int a = 0; a < m; ++a) h = std::max(h, axes[a].h);
    return h;
  }
  double hmin() const {
    double h = std::numeric_limits<double>::infinity();
    for (int a = 0; a < m; ++a) h = std::min(h, axes[a].h);
    return h;
  }

  const double* g_at(long p) const { return &g[p * mm()]; }
  const double* ginv_at(long p) const { return &ginv[p * mm()]; }
  const double* dg_at(long p) const { return &dg[p * mmm()]; }
  const double* gamma_at(long p) const { return &gamma[p * mmm()]; }

  bool all_periodic() const {
    for (auto& a : axes)
      if (!a.periodic()) return false;
    return true;
  }

  // Samples the closed-form metric data and builds the Levi-Civita symbols
  // via Γ^k_ij = ½ g^{kl} (∂_i g_jl + ∂_j g_il − ∂_l g_ij).
  void finalize() {
    grid.n = {1, 1, 1};
    for (int a = 0; a < m; ++a) {
      axes[a].finalize();
      grid.n[a] = axes[a].n;
    }
    grid.finalize(m);
    const long np = grid.npts;
    g.resize(np * mm());
    ginv.resize(np * mm());
    sqrtg.resize(np);
    dg.resize(np * mmm());
    gamma.resize(np * mmm());
    std::array<int, kMaxDim> ix{0, 0, 0};
    for (long p = 0; p < np; ++p) {
      double x[kMaxDim] = {0, 0, 0};
      point(ix, x);
      metric_fn(x, &g[p * mm()]);
      metric_deriv_fn(x, &dg[p * mmm()]);
      // symmetry guard on the supplied evaluators
      for (int i = 0; i < m; ++i)
        for (int j = i + 1; j < m; ++j)
          if (std::fabs(g[p * mm() + i * m + j] - g[p * mm() + j * m + i]) > 1e-14)
            throw Error(Error::Kind::chart, "metric evaluator returned an asymmetric matrix");
      invert_sym(&g[p * mm()], m, &ginv[p * mm()]);
      const double d = det_sym(&g[p * mm()], m);
      if (!(d > 0.0)) throw Error(Error::Kind::chart, "metric not positive definite");
      sqrtg[p] = std::sqrt(d);
      const double* dgp = &dg[p * mmm()];
      const double* gi = &ginv[p * mm()];
      for (int k = 0; k < m; ++k)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int l = 0; l < m; ++l)
              s += gi[k * m + l] * (dgp[i * mm() + j * m + l] + dgp[j * mm() + i * m + l] -
                                    dgp[l * mm() + i * m + j]);
            gamma[p * mmm() + (k * m + i) * m + j] = 0.5 * s;
          }
      // advance multi-index (row-major, last axis fastest)
      for (int a = m - 1; a >= 0; --a) {
        if (++ix[a] < grid.n[a]) break;
        ix[a] = 0;
      }
    }
  }

  double distance(const double* x, const double* p0) const { return distance_fn(x, p0); }
};

// Sampled tensor field over a chart grid; rank 0 is a scalar field. Values
// are point-major: v[p * m^rank + flat(i1..ir)], slot i is an upper index
// iff bit i of `upper` is set.
struct GridTensor {
  const Chart* chart = nullptr;
  int rank = 0;
  unsigned upper = 0;
  int ncomp = 1;
  std::vector<double> v;

  GridTensor() = default;
  GridTensor(const Chart& ch, int r, unsigned upper_mask = 0)
      : chart(&ch), rank(r), upper(upper_mask) {
    ncomp = 1;
    for (int i = 0; i < r; ++i) ncomp *= ch.m;
    v.assign(ch.npts() * ncomp, 0.0);
  }

  double& at(long p, int c = 0) { return v[p * ncomp + c]; }
  double at(long p, int c = 0) const { return v[p * ncomp + c]; }
  bool slot_upper(int slot) const { return (upper >> slot) & 1u; }

  double max_abs() const {
    double mx = 0.0;
    for (double x : v) mx = std::max(mx, std::fabs(x));
    return mx;
  }
};

inline GridTensor scalar_field(const Chart& ch) { return GridTensor(ch, 0); }
inline GridTensor vector_field(const Chart& ch) { return GridTensor(ch, 1, 1u); }

// iterate f(p, ix, x)
template <class F>
inline void for_each_point(const Chart& ch, F&& f) {
  std::array<int, kMaxDim> ix{0, 0, 0};
  double x[kMaxDim] = {0, 0, 0};
  for (long p = 0; p < ch.npts(); ++p) {
    ch.point(ix, x);
    f(p, ix, x);
    for (int a = ch.m - 1; a >= 0; --a) {
      if (++ix[a] < ch.grid.n[a]) break;
      ix[a] = 0;
    }
  }
}

inline GridTensor sample_expr(const Chart& ch, const Expr& e, double t = 0.0) {
  GridTensor out = scalar_field(ch);
  ExprEnv env;
  for (int a = 0; a < ch.m; ++a) env.set(ch.axes[a].name, 0.0);
  env.set("t", t);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    for (int a = 0; a < ch.m; ++a) env.set(ch.axes[a].name, x[a]);
    out.at(p) = e.eval(env);
  });
  return out;
}

inline std::vector<std::string> chart_var_names(const Chart& ch, bool with_time = true,
                                                bool with_u = false) {
  std::vector<std::string> names;
  for (auto& a : ch.axes) names.push_back(a.name);
  if (with_time) names.push_back("t");
  if (with_u) names.push_back("u");
  return names;
}

// discretization-aware tolerance slack(h) = c_slack * h^2
inline double slack(const Chart& ch, double c_slack = 10.0) {
  return c_slack * sqr(ch.hmax());
}

// ---------------------------------------------------------------------------
// Manifold catalog
// ---------------------------------------------------------------------------

struct CatalogSpec {
  std::string name;
  int m = 2;
  std::vector<int> shape;       // per-axis point counts; single value replicates
  double side = 1.0;            // flat_torus: [0, side) per axis
  double radius = 1.0;          // sphere_band
  double theta_min = 0.3;       // sphere_band polar-cap exclusion
  double box = 4.0;             // cigar: [-box, box]^2
  double disk_box = 0.55;       // hyperbolic_disk: [-disk_box, disk_box]^2
  std::vector<Bc> bc_override;  // optional per-axis boundary kinds
};

namespace detail {

inline int shape_at(const CatalogSpec& s, int a) {
  if (s.shape.empty()) throw Error(Error::Kind::chart, "catalog spec: missing grid shape");
  return s.shape.size() == 1 ? s.shape[0] : s.shape.at(a);
}

inline void apply_bc_override(Chart& ch, const CatalogSpec& s) {
  if (s.bc_override.empty()) return;
  if (int(s.bc_override.size()) != ch.m)
    throw Error(Error::Kind::chart, "bc override must list one kind per axis");
  for (int a = 0; a < ch.m; ++a) ch.axes[a].bc = s.bc_override[a];
}

}  // namespace detail

inline Chart build_flat_torus(const CatalogSpec& s) {
  if (s.m < 1 || s.m > 3) throw Error(Error::Kind::chart, "flat_torus: m must be 1..3");
  Chart ch;
  ch.catalog = "flat_torus";
  ch.m = s.m;
  static const char* names[] = {"x", "y", "z"};
  for (int a = 0; a < s.m; ++a)
    ch.axes.push_back({names[a], 0.0, s.side, detail::shape_at(s, a), Bc::periodic});
  detail::apply_bc_override(ch, s);
  const int m = s.m;
  ch.metric_fn = [m](const double*, double* g) {
    for (int i = 0; i < m * m; ++i) g[i] = 0.0;
    for (int i = 0; i < m; ++i) g[i * m + i] = 1.0;
  };
  ch.metric_deriv_fn = [m](const double*, double* dg) {
    for (int i = 0; i < m * m * m; ++i) dg[i] = 0.0;
  };
  const double L = s.side;
  std::vector<bool> per;
  for (auto& ax : ch.axes) per.push_back(ax.periodic());
  ch.distance_fn = [m, L, per](const double* x, const double* p0) {
    double s2 = 0.0;
    for (int a = 0; a < m; ++a) {
      const double d = per[a] ? std::remainder(x[a] - p0[a], L) : x[a] - p0[a];
      s2 += d * d;
    }
    return std::sqrt(s2);
  };
  ch.injectivity_bound = s.side / 2.0;
  ch.finalize();
  return ch;
}

inline Chart build_sphere_band(const CatalogSpec& s) {
  if (s.m != 2 && s.m != 3) throw Error(Error::Kind::chart, "sphere_band: m must be 2 or 3");
  if (!(s.theta_min > 0.0 && s.theta_min < (s.m == 2 ? M_PI / 2 : M_PI / 4)))
    throw Error(Error::Kind::chart, "sphere_band: theta_min outside (0, pi/2)");
  Chart ch;
  ch.catalog = "sphere_band";
  ch.m = s.m;
  const double r2 = sqr(s.radius);
  if (s.m == 2) {
    ch.axes.push_back({"theta", s.theta_min, M_PI - s.theta_min, detail::shape_at(s, 0), Bc::neumann});
    ch.axes.push_back({"phi", 0.0, 2 * M_PI, detail::shape_at(s, 1), Bc::periodic});
    ch.metric_fn = [r2](const double* x, double* g) {
      g[0] = r2; g[1] = g[2] = 0.0; g[3] = r2 * sqr(std::sin(x[0]));
    };
    ch.metric_deriv_fn = [r2](const double* x, double* dg) {
      for (int i = 0; i < 8; ++i) dg[i] = 0.0;
      dg[0 * 4 + 3] = 2.0 * r2 * std::sin(x[0]) * std::cos(x[0]);  // ∂_θ g_φφ
    };
    const double rad = s.radius;
    ch.distance_fn = [rad](const double* x, const double* p0) {
      const double c = std::cos(x[0]) * std::cos(p0[0]) +
                       std::sin(x[0]) * std::sin(p0[0]) * std::cos(x[1] - p0[1]);
      return rad * std::acos(std::clamp(c, -1.0, 1.0));
    };
    ch.injectivity_bound = s.radius * (M_PI / 2 - s.theta_min);
  } else {
    // round S^3 in Hopf coordinates: dθ² + sin²θ dφ² + cos²θ dψ²; the band in
    // θ ∈ (0, π/2) excludes both degenerate circles
    ch.axes.push_back({"theta", s.theta_min, M_PI / 2 - s.theta_min, detail::shape_at(s, 0), Bc::neumann});
    ch.axes.push_back({"phi", 0.0, 2 * M_PI, detail::shape_at(s, 1), Bc::periodic});
    ch.axes.push_back({"psi", 0.0, 2 * M_PI, detail::shape_at(s, 2), Bc::periodic});
    ch.metric_fn = [r2](const double* x, double* g) {
      for (int i = 0; i < 9; ++i) g[i] = 0.0;
      g[0] = r2;
      g[4] = r2 * sqr(std::sin(x[0]));
      g[8] = r2 * sqr(std::cos(x[0]));
    };
    ch.metric_deriv_fn = [r2](const double* x, double* dg) {
      for (int i = 0; i < 27; ++i) dg[i] = 0.0;
      dg[0 * 9 + 4] = 2.0 * r2 * std::sin(x[0]) * std::cos(x[0]);
      dg[0 * 9 + 8] = -2.0 * r2 * std::sin(x[0]) * std::cos(x[0]);
    };
    const double rad = s.radius;
    ch.distance_fn = [rad](const double* x, const double* p0) {
      const double c = std::sin(x[0]) * std::sin(p0[0]) * std::cos(x[1] - p0[1]) +
                       std::cos(x[0]) * std::cos(p0[0]) * std::cos(x[2] - p0[2]);
      return rad * std::acos(std::clamp(c, -1.0, 1.0));
    };
    ch.injectivity_bound = s.radius * (M_PI / 4 - s.theta_min);
  }
  detail::apply_bc_override(ch, s);
  ch.finalize();
  return ch;
}

inline Chart build_hyperbolic_disk(const CatalogSpec& s) {
  if (s.m != 2) throw Error(Error::Kind::chart, "hyperbolic_disk: m must be 2");
  if (!(s.disk_box > 0.0 && s.disk_box < 1.0 / std::sqrt(2.0)))
    throw Error(Error::Kind::chart, "hyperbolic_disk: box must fit inside the unit disk");
  Chart ch;
  ch.catalog = "hyperbolic_disk";
  ch.m = 2;
  const double c = s.disk_box;
  ch.axes.push_back({"x", -c, c, detail::shape_at(s, 0), Bc::dirichlet});
  ch.axes.push_back({"y", -c, c, detail::shape_at(s, 1), Bc::dirichlet});
  detail::apply_bc_override(ch, s);
  // Poincaré disk: g = 4 δ / (1 - |x|²)², curvature -1
  ch.metric_fn = [](const double* x, double* g) {
    const double lam = 4.0 / sqr(1.0 - x[0] * x[0] - x[1] * x[1]);
    g[0] = g[3] = lam;
    g[1] = g[2] = 0.0;
  };
  ch.metric_deriv_fn = [](const double* x, double* dg) {
    const double w = 1.0 - x[0] * x[0] - x[1] * x[1];
    for (int k = 0; k < 2; ++k) {
      const double dlam = 16.0 * x[k] / (w * w * w);
      dg[k * 4 + 0] = dlam;
      dg[k * 4 + 3] = dlam;
      dg[k * 4 + 1] = dg[k * 4 + 2] = 0.0;
    }
  };
  ch.distance_fn = [](const double* x, const double* p0) {
    const double dx2 = sqr(x[0] - p0[0]) + sqr(x[1] - p0[1]);
    const double a = 1.0 - x[0] * x[0] - x[1] * x[1];
    const double b = 1.0 - p0[0] * p0[0] - p0[1] * p0[1];
    return std::acosh(1.0 + 2.0 * dx2 / (a * b));
  };
  ch.injectivity_bound = 2.0 * std::atanh(c);  // center-to-edge distance
  ch.finalize();
  return ch;
}

inline Chart build_cigar(const CatalogSpec& s) {
  if (s.m != 2) throw Error(Error::Kind::chart, "cigar: m must be 2");
  Chart ch;
  ch.catalog = "cigar";
  ch.m = 2;
  const double c = s.box;
  ch.axes.push_back({"x", -c, c, detail::shape_at(s, 0), Bc::dirichlet});
  ch.axes.push_back({"y", -c, c, detail::shape_at(s, 1), Bc::dirichlet});
  detail::apply_bc_override(ch, s);
  // g = δ / (1 + x² + y²); scalar curvature 4/(1+x²+y²)
  ch.metric_fn = [](const double* x, double* g) {
    const double lam = 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]);
    g[0] = g[3] = lam;
    g[1] = g[2] = 0.0;
  };
  ch.metric_deriv_fn = [](const double* x, double* dg) {
    const double lam = 1.0 / (1.0 + x[0] * x[0] + x[1] * x[1]);
    for (int k = 0; k < 2; ++k) {
      const double dlam = -2.0 * x[k] * lam * lam;
      dg[k * 4 + 0] = dlam;
      dg[k * 4 + 3] = dlam;
      dg[k * 4 + 1] = dg[k * 4 + 2] = 0.0;
    }
  };
  // radial geodesics from the origin: d(0, x) = arcsinh |x|; the evaluator is
  // exact only for p0 = 0 (rotational symmetry), which all checks use
  ch.distance_fn = [](const double* x, const double* p0) {
    if (sqr(p0[0]) + sqr(p0[1]) > 1e-24)
      throw Error(Error::Kind::domain, "cigar distance is exact only from the origin");
    return std::asinh(std::sqrt(x[0] * x[0] + x[1] * x[1]));
  };
  ch.injectivity_bound = std::asinh(c);
  ch.finalize();
  return ch;
}

inline Chart build_manifold(const CatalogSpec& s) {
  for (int a = 0; a < int(s.shape.size()); ++a)
    if (s.shape[a] < 8) throw Error(Error::Kind::chart, "resolution below 8");
  if (s.name == "flat_torus") return build_flat_torus(s);
  if (s.name == "sphere_band") return build_sphere_band(s);
  if (s.name == "hyperbolic_disk") return build_hyperbolic_disk(s);
  if (s.name == "cigar") return build_cigar(s);
  throw Error(Error::Kind::chart, "unknown catalog name '" + s.name + "'");
}

// Grid refinement that keeps coarse nodes nested in the fine grid
// (periodic axes double the count, bounded axes double the cell count).
inline CatalogSpec refine_spec(const CatalogSpec& s, const Chart& built) {
  CatalogSpec r = s;
  r.shape.clear();
  for (int a = 0; a < built.m; ++a) {
    const int n = built.axes[a].n;
    r.shape.push_back(built.axes[a].periodic() ? 2 * n : 2 * n - 1);
  }
  return r;
}

// ---------------------------------------------------------------------------
// Bakry-Emery setup: the pair (V, n), optionally tagged gradient
// ---------------------------------------------------------------------------

struct Setup {
  GridTensor V;   // rank 1, upper
  double n = 0;
  bool v_zero = true;
  bool gradient_flag = false;
  GridTensor f;   // rank 0, meaningful when gradient_flag

  void validate(const Chart& ch) const {
    if (!v_zero && !(n > ch.m))
      throw Error(Error::Kind::config, "setup requires n > m when V is nonzero");
    if (v_zero && !(n >= ch.m))
      throw Error(Error::Kind::config, "setup requires n >= m");
  }
};

inline double default_n(const Chart& ch, bool v_zero) {
  return v_zero ? double(ch.m) : double(ch.m + 1);
}

inline Setup make_setup_zero(const Chart& ch, double n = 0) {
  Setup s;
  s.V = vector_field(ch);
  s.v_zero = true;
  s.n = n > 0 ? n : default_n(ch, true);
  s.validate(ch);
  return s;
}

}  // namespace bel
