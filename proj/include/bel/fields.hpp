#pragma once

#include <memory>

#include "bel/geometry.hpp"

namespace bel {

// du_a = ∂_a u as a rank-1 lower tensor
inline GridTensor differential(const Chart& ch, const GridTensor& u) {
  GridTensor out(ch, 1, 0u);
  for (int a = 0; a < ch.m; ++a) {
    GridTensor da = axis_d1(u, a);
    for (long p = 0; p < ch.npts(); ++p) out.at(p, a) = da.v[p];
  }
  return out;
}

// (∇u)^i = g^{ij} ∂_j u
inline GridTensor gradient(const Chart& ch, const GridTensor& u) {
  GridTensor du = differential(ch, u);
  GridTensor out(ch, 1, 1u);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    for (int i = 0; i < ch.m; ++i) {
      double s = 0.0;
      for (int j = 0; j < ch.m; ++j) s += gi[i * ch.m + j] * du.at(p, j);
      out.at(p, i) = s;
    }
  }
  return out;
}

// |∇u|²_g = g^{ab} ∂_a u ∂_b u
inline GridTensor grad_norm2(const Chart& ch, const GridTensor& u) {
  GridTensor du = differential(ch, u);
  GridTensor out(ch, 0);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    double s = 0.0;
    for (int a = 0; a < ch.m; ++a)
      for (int b = 0; b < ch.m; ++b) s += gi[a * ch.m + b] * du.at(p, a) * du.at(p, b);
    out.v[p] = s;
  }
  return out;
}

// ⟨∇u, ∇v⟩_g
inline GridTensor inner_grad(const Chart& ch, const GridTensor& u, const GridTensor& v) {
  GridTensor du = differential(ch, u);
  GridTensor dv = differential(ch, v);
  GridTensor out(ch, 0);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    double s = 0.0;
    for (int a = 0; a < ch.m; ++a)
      for (int b = 0; b < ch.m; ++b) s += gi[a * ch.m + b] * du.at(p, a) * dv.at(p, b);
    out.v[p] = s;
  }
  return out;
}

// (∇²u)_ij = ∂_i∂_j u − Γ^k_ij ∂_k u. Mixed partials are commuted axis
// derivatives, so the discrete Hessian is symmetric to rounding.
inline GridTensor covariant_hessian(const Chart& ch, const GridTensor& u) {
  const int m = ch.m;
  std::vector<GridTensor> d1;
  for (int a = 0; a < m; ++a) d1.push_back(axis_d1(u, a));
  GridTensor out(ch, 2, 0u);
  for (int i = 0; i < m; ++i) {
    GridTensor dii = axis_d2(u, i);
    for (long p = 0; p < ch.npts(); ++p) out.at(p, i * m + i) = dii.v[p];
    for (int j = i + 1; j < m; ++j) {
      GridTensor dij = axis_d1(d1[j], i);
      for (long p = 0; p < ch.npts(); ++p) {
        out.at(p, i * m + j) = dij.v[p];
        out.at(p, j * m + i) = dij.v[p];
      }
    }
  }
  for (long p = 0; p < ch.npts(); ++p) {
    const double* G = ch.gamma_at(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = out.at(p, i * m + j);
        for (int k = 0; k < m; ++k) s -= G[(k * m + i) * m + j] * d1[k].v[p];
        out.at(p, i * m + j) = s;
      }
  }
  return out;
}

// Δu as the Hessian trace g^{ij}(∇²u)_ij
inline GridTensor laplace_beltrami(const Chart& ch, const GridTensor& u) {
  GridTensor hess = covariant_hessian(ch, u);
  GridTensor out(ch, 0);
  const int m = ch.m;
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    double s = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) s += gi[i * m + j] * hess.at(p, i * m + j);
    out.v[p] = s;
  }
  return out;
}

// Divergence form (1/(w√g)) ∂_a (w √g g^{ab} ∂_b u) with a node-sampled
// weight w; w ≡ 1 gives the second, independent Δ implementation.
inline GridTensor weighted_laplacian_div(const Chart& ch, const GridTensor& u,
                                         const GridTensor* w = nullptr) {
  const int m = ch.m;
  GridTensor du = differential(ch, u);
  GridTensor out(ch, 0);
  std::vector<GridTensor> flux;
  for (int a = 0; a < m; ++a) {
    GridTensor fa(ch, 0);
    for (long p = 0; p < ch.npts(); ++p) {
      const double* gi = ch.ginv_at(p);
      double s = 0.0;
      for (int b = 0; b < m; ++b) s += gi[a * m + b] * du.at(p, b);
      fa.v[p] = s * ch.sqrtg[p] * (w ? w->v[p] : 1.0);
    }
    flux.push_back(std::move(fa));
  }
  for (int a = 0; a < m; ++a) {
    GridTensor dfa = axis_d1(flux[a], a);
    for (long p = 0; p < ch.npts(); ++p) out.v[p] += dfa.v[p];
  }
  for (long p = 0; p < ch.npts(); ++p)
    out.v[p] /= ch.sqrtg[p] * (w ? w->v[p] : 1.0);
  return out;
}

// Δ_V u = Δu + ⟨V, ∇u⟩ (Hessian-trace route)
inline GridTensor v_laplacian(const Chart& ch, const Setup& setup, const GridTensor& u) {
  GridTensor out = laplace_beltrami(ch, u);
  if (!setup.v_zero) {
    GridTensor du = differential(ch, u);
    for (long p = 0; p < ch.npts(); ++p) {
      double s = 0.0;
      for (int a = 0; a < ch.m; ++a) s += setup.V.at(p, a) * du.at(p, a);
      out.v[p] += s;
    }
  }
  return out;
}

// Density route e^{−f} div(e^{f} ∇u); valid when the setup is gradient-flagged
// (or V ≡ 0, where it reduces to the divergence-form Δ).
inline GridTensor v_laplacian_density(const Chart& ch, const Setup& setup,
                                      const GridTensor& u) {
  if (!setup.gradient_flag && !setup.v_zero)
    throw Error(Error::Kind::config, "density form needs V = ∇f or V = 0");
  if (setup.v_zero && !setup.gradient_flag) return weighted_laplacian_div(ch, u);
  GridTensor w(ch, 0);
  for (long p = 0; p < ch.npts(); ++p) w.v[p] = std::exp(setup.f.v[p]);
  return weighted_laplacian_div(ch, u, &w);
}

// Max pointwise discrepancy between the two Δ_V routes; the standing guard
// against stencil bugs.
inline double v_laplacian_forms_discrepancy(const Chart& ch, const Setup& setup,
                                            const GridTensor& u, int margin = 2) {
  GridTensor a = v_laplacian(ch, setup, u);
  GridTensor b = (setup.gradient_flag || setup.v_zero)
                     ? v_laplacian_density(ch, setup, u)
                     : weighted_laplacian_div(ch, u);  // compare Δ parts only
  if (!setup.gradient_flag && !setup.v_zero) {
    GridTensor du = differential(ch, u);
    for (long p = 0; p < ch.npts(); ++p) {
      double s = 0.0;
      for (int c = 0; c < ch.m; ++c) s += setup.V.at(p, c) * du.at(p, c);
      b.v[p] += s;
    }
  }
  auto mask = interior_mask(ch, margin);
  double worst = 0.0;
  for (long p = 0; p < ch.npts(); ++p)
    if (mask[p]) worst = std::max(worst, std::fabs(a.v[p] - b.v[p]));
  return worst;
}

// Grid quadrature ∫ u dV: midpoint weights on periodic axes, trapezoid ends
// on bounded axes, with the √det g volume factor.
inline double integrate(const Chart& ch, const GridTensor& u) {
  double cell = 1.0;
  for (int a = 0; a < ch.m; ++a) cell *= ch.axes[a].h;
  double s = 0.0;
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
    double w = 1.0;
    for (int a = 0; a < ch.m; ++a)
      if (!ch.axes[a].periodic() && (ix[a] == 0 || ix[a] == ch.grid.n[a] - 1)) w *= 0.5;
    s += w * u.v[p] * ch.sqrtg[p];
  });
  return s * cell;
}

inline double chart_volume(const Chart& ch) {
  GridTensor one(ch, 0);
  one.v.assign(ch.npts(), 1.0);
  return integrate(ch, one);
}

inline double masked_max_abs(const GridTensor& f, const std::vector<std::uint8_t>& mask) {
  double worst = 0.0;
  for (long p = 0; p < f.chart->npts(); ++p)
    if (mask[p]) worst = std::max(worst, std::fabs(f.v[p]));
  return worst;
}

// ---------------------------------------------------------------------------
// Setup builders
// ---------------------------------------------------------------------------

inline Setup make_setup_gradient(const Chart& ch, const GridTensor& f, double n = 0) {
  Setup s;
  s.f = f;
  s.V = gradient(ch, f);
  s.v_zero = false;
  s.gradient_flag = true;
  s.n = n > 0 ? n : default_n(ch, false);
  s.validate(ch);
  return s;
}

inline Setup make_setup_gradient_expr(const Chart& ch, const Expr& f_expr, double n = 0) {
  return make_setup_gradient(ch, sample_expr(ch, f_expr), n);
}

inline Setup make_setup_components(const Chart& ch, const std::vector<Expr>& comps,
                                   double n = 0) {
  if (int(comps.size()) != ch.m)
    throw Error(Error::Kind::config, "V needs one component expression per axis");
  Setup s;
  s.V = vector_field(ch);
  bool zero = true;
  for (int a = 0; a < ch.m; ++a) {
    GridTensor c = sample_expr(ch, comps[a]);
    for (long p = 0; p < ch.npts(); ++p) {
      s.V.at(p, a) = c.v[p];
      if (c.v[p] != 0.0) zero = false;
    }
  }
  s.v_zero = zero;
  s.n = n > 0 ? n : default_n(ch, zero);
  s.validate(ch);
  return s;
}

// rotation field ∂_φ on the sphere band (a Killing field)
inline Setup make_setup_rotation(const Chart& ch, double n = 0) {
  if (ch.catalog != "sphere_band")
    throw Error(Error::Kind::config, "rotation field is defined on sphere_band");
  Setup s;
  s.V = vector_field(ch);
  for (long p = 0; p < ch.npts(); ++p) s.V.at(p, 1) = 1.0;  // ∂_φ component
  s.v_zero = false;
  s.gradient_flag = false;
  s.n = n > 0 ? n : default_n(ch, false);
  s.validate(ch);
  return s;
}

// Resolution-independent recipe for a Bakry-Emery setup; lets checks rebuild
// the same (V, n) on refined grids.
struct SetupSpec {
  enum class Kind { zero, gradient, components, rotation };
  Kind kind = Kind::zero;
  Expr f;
  std::vector<Expr> comps;
  double n = 0;  // 0: policy default (m for V ≡ 0, m+1 otherwise)

  Setup build(const Chart& ch) const {
    switch (kind) {
      case Kind::zero: return make_setup_zero(ch, n);
      case Kind::gradient: return make_setup_gradient_expr(ch, f, n);
      case Kind::components: return make_setup_components(ch, comps, n);
      case Kind::rotation: return make_setup_rotation(ch, n);
    }
    throw Error(Error::Kind::config, "bad setup kind");
  }
  static SetupSpec zero(double n = 0) {
    SetupSpec s;
    s.kind = Kind::zero;
    s.n = n;
    return s;
  }
  static SetupSpec gradient(const Expr& f, double n = 0) {
    SetupSpec s;
    s.kind = Kind::gradient;
    s.f = f;
    s.n = n;
    return s;
  }
  static SetupSpec components(std::vector<Expr> comps, double n = 0) {
    SetupSpec s;
    s.kind = Kind::components;
    s.comps = std::move(comps);
    s.n = n;
    return s;
  }
  static SetupSpec rotation(double n = 0) {
    SetupSpec s;
    s.kind = Kind::rotation;
    s.n = n;
    return s;
  }
};

// ---------------------------------------------------------------------------
// (A,B) diffusion-operator reduction: L = (1/B) div(A ∇·) is the weighted
// Laplacian of (M, (B/A) g, B dV_g).
// ---------------------------------------------------------------------------

struct ReducedOperator {
  std::shared_ptr<Chart> chart;  // carries g̃ = (B/A) g; shared so tensors can bind
  GridTensor weight;             // density of B dV_g against dV_g̃, i.e. B (A/B)^{m/2}
};

inline ReducedOperator reduce_diffusion_operator(const Chart& ch, const Expr& A,
                                                 const Expr& B) {
  GridTensor As = sample_expr(ch, A);
  GridTensor Bs = sample_expr(ch, B);
  for (long p = 0; p < ch.npts(); ++p)
    if (!(As.v[p] > 0.0) || !(Bs.v[p] > 0.0))
      throw Error(Error::Kind::domain, "reduction requires A > 0 and B > 0 everywhere");

  ReducedOperator out;
  out.chart = std::make_shared<Chart>();
  Chart& tilde = *out.chart;
  tilde.catalog = ch.catalog + "/reduced";
  tilde.m = ch.m;
  tilde.axes = ch.axes;
  tilde.injectivity_bound = 0.0;  // no exact distance on reduced charts
  const int m = ch.m;
  auto base_metric = ch.metric_fn;
  auto base_deriv = ch.metric_deriv_fn;
  std::vector<std::string> names;
  for (auto& ax : ch.axes) names.push_back(ax.name);
  std::vector<Expr> dA, dB;
  for (auto& nm : names) {
    dA.push_back(A.derivative(nm));
    dB.push_back(B.derivative(nm));
  }
  auto eval_at = [names](const Expr& e, const double* x) {
    ExprEnv env;
    for (std::size_t a = 0; a < names.size(); ++a) env.set(names[a], x[a]);
    return e.eval(env);
  };
  tilde.metric_fn = [=](const double* x, double* g) {
    base_metric(x, g);
    const double r = eval_at(B, x) / eval_at(A, x);
    for (int i = 0; i < m * m; ++i) g[i] *= r;
  };
  tilde.metric_deriv_fn = [=](const double* x, double* dgv) {
    double g[9];
    base_metric(x, g);
    base_deriv(x, dgv);
    const double av = eval_at(A, x), bv = eval_at(B, x);
    const double r = bv / av;
    for (int k = 0; k < m; ++k) {
      const double dr = (eval_at(dB[k], x) * av - bv * eval_at(dA[k], x)) / (av * av);
      for (int c = 0; c < m * m; ++c)
        dgv[k * m * m + c] = r * dgv[k * m * m + c] + dr * g[c];
    }
  };
  tilde.distance_fn = [](const double*, const double*) -> double {
    throw Error(Error::Kind::domain, "reduced charts carry no exact distance function");
  };
  tilde.finalize();
  out.weight = GridTensor(tilde, 0);
  const double half_m = 0.5 * m;
  for (long p = 0; p < ch.npts(); ++p)
    out.weight.v[p] = Bs.v[p] * std::pow(As.v[p] / Bs.v[p], half_m);
  return out;
}

// max |(1/B) div_g(A ∇_g u) − Δ̃_μ̃ u| over interior points: the reduction
// identity checked on a supplied test function.
inline double reduced_operator_residual(const Chart& ch, const Expr& A, const Expr& B,
                                        const ReducedOperator& red, const GridTensor& u,
                                        int margin = 2) {
  GridTensor As = sample_expr(ch, A);
  GridTensor Bs = sample_expr(ch, B);
  GridTensor lhs = weighted_laplacian_div(ch, u, &As);  // (1/(A√g))∂(A√g g^{ab}∂u)
  // weighted_laplacian_div normalizes by (A √g); L = (1/B) div(A∇u) needs
  // the (1/A) replaced by (1/B):
  for (long p = 0; p < ch.npts(); ++p) lhs.v[p] *= As.v[p] / Bs.v[p];
  GridTensor ut = u;
  ut.chart = red.chart.get();  // same grid, reduced metric
  GridTensor rhs = weighted_laplacian_div(*red.chart, ut, &red.weight);
  auto mask = interior_mask(ch, margin);
  double worst = 0.0;
  for (long p = 0; p < ch.npts(); ++p)
    if (mask[p]) worst = std::max(worst, std::fabs(lhs.v[p] - rhs.v[p]));
  return worst;
}

}  // namespace bel
