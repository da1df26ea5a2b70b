#pragma once

#include <map>
#include <memory>

#include "bel/corpus.hpp"
#include "bel/heat.hpp"

namespace bel {

struct ResidualLevel {
  double h = 0;
  double sup = 0;
  double l2 = 0;
  double scale = 1;
  double mask_fraction = 0;
};

struct ResidualReport {
  std::string id;
  std::vector<ResidualLevel> levels;
  std::vector<double> orders;  // per refinement pair
  double order = 0;            // finest pair
  bool exact = false;
  bool pass = false;
  double slack_finest = 0;
  std::map<std::string, double> margins;  // named one-sided margins, finest level
};

namespace detail {

inline double masked_l2(const Chart& ch, const std::vector<double>& res,
                        const std::vector<std::uint8_t>& mask) {
  double num = 0.0, den = 0.0;
  for (long p = 0; p < ch.npts(); ++p) {
    if (!mask[p]) continue;
    num += res[p] * res[p] * ch.sqrtg[p];
    den += ch.sqrtg[p];
  }
  return den > 0 ? std::sqrt(num / den) : 0.0;
}

inline double mask_fraction(const std::vector<std::uint8_t>& inner,
                            const std::vector<std::uint8_t>& outer) {
  long masked = 0, total = 0;
  for (std::size_t i = 0; i < inner.size(); ++i) {
    if (!outer[i]) continue;
    ++total;
    if (!inner[i]) ++masked;
  }
  return total ? double(masked) / double(total) : 0.0;
}

inline std::vector<std::uint8_t> erode_mask(const Chart& ch, std::vector<std::uint8_t> mask,
                                            int cells) {
  for (int pass = 0; pass < cells; ++pass) {
    std::vector<std::uint8_t> next = mask;
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      if (!mask[p]) { next[p] = 0; return; }
      for (int a = 0; a < ch.m; ++a) {
        const auto ax = detail::axis_view(ch, a);
        long pp, pm;
        if (ax.periodic) {
          pp = p + (ix[a] + 1 == ax.n ? (1 - ax.n) : 1) * ax.stride;
          pm = p + (ix[a] == 0 ? (ax.n - 1) : -1) * ax.stride;
        } else {
          pp = ix[a] + 1 < ax.n ? p + ax.stride : p;
          pm = ix[a] > 0 ? p - ax.stride : p;
        }
        if (!mask[pp] || !mask[pm]) { next[p] = 0; return; }
      }
    });
    mask.swap(next);
  }
  return mask;
}

}  // namespace detail

inline ResidualReport assemble_residual_report(std::string id,
                                               std::vector<ResidualLevel> levels,
                                               double c_slack, double min_order,
                                               std::map<std::string, double> margins = {}) {
  ResidualReport rep;
  rep.id = std::move(id);
  rep.levels = std::move(levels);
  rep.margins = std::move(margins);
  if (rep.levels.size() < 2)
    throw Error(Error::Kind::config, "residual report needs at least two resolutions");
  bool exact = true;
  for (auto& l : rep.levels)
    if (l.sup > 1e-10 * std::max(1.0, l.scale)) exact = false;
  rep.exact = exact;
  for (std::size_t i = 0; i + 1 < rep.levels.size(); ++i)
    rep.orders.push_back(observed_order(rep.levels[i].sup, rep.levels[i + 1].sup));
  rep.order = rep.orders.back();
  const ResidualLevel& fin = rep.levels.back();
  rep.slack_finest = c_slack * sqr(fin.h) * std::max(1.0, fin.scale);
  bool margins_ok = true;
  for (auto& kv : rep.margins)
    if (kv.second < -rep.slack_finest) margins_ok = false;
  rep.pass = (exact || rep.order >= min_order) && fin.sup <= rep.slack_finest && margins_ok;
  return rep;
}

// ---------------------------------------------------------------------------
// Bochner formula (2.1) and its one-sided refinements (2.2)-(2.4), plus the
// V-harmonic corollary (2.6)/(2.7) with |∇u|-degenerate masking.
// ---------------------------------------------------------------------------

struct BochnerLevel {
  double h = 0, scale = 1, mask_fraction = 0;
  double sup21 = 0, l2_21 = 0, sup24 = 0;
  double consistency = 0;  // (2.1) RHS − (2.4) RHS, algebraically zero
  double margin22 = 0, margin23 = 0;
  // harmonic-only pieces (NaN when not evaluated)
  double margin26 = std::numeric_limits<double>::quiet_NaN();
  double sup27 = std::numeric_limits<double>::quiet_NaN();
  double degenerate_fraction = 0;
};

inline BochnerLevel bochner_level(const Chart& ch, const Setup& setup, const GridTensor& u,
                                  double width, bool harmonic_checks) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  GridTensor du = differential(ch, u);
  GridTensor gradu = gradient(ch, u);
  GridTensor grad2 = grad_norm2(ch, u);
  GridTensor lhs = v_laplacian(ch, setup, grad2);
  for (auto& x : lhs.v) x *= 0.5;
  GridTensor hess = covariant_hessian(ch, u);
  GridTensor hn2 = tensor_g_norm2(hess);
  GridTensor lap = v_laplacian(ch, setup, u);
  GridTensor cross = inner_grad(ch, lap, u);

  auto quad_form = [&](const GridTensor& T, long p) {
    double s = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) s += T.at(p, i * m + j) * gradu.at(p, i) * gradu.at(p, j);
    return s;
  };
  const bool vterm = !(setup.v_zero && setup.n == double(m));
  auto mask = interior_mask_width(ch, width);

  BochnerLevel out;
  out.h = ch.hmax();
  std::vector<double> res21(ch.npts(), 0.0);
  double m22 = std::numeric_limits<double>::infinity();
  double m23 = m22;
  for (long p = 0; p < ch.npts(); ++p) {
    if (!mask[p]) continue;
    const double ric_q = quad_form(be.ric_v, p);
    const double ricnm_q = quad_form(be.ric_v_nm, p);
    double vdot = 0.0;
    if (!setup.v_zero)
      for (int a = 0; a < m; ++a) vdot += setup.V.at(p, a) * du.at(p, a);
    const double rhs21 = hn2.v[p] + ric_q + cross.v[p];
    const double rhs24 = hn2.v[p] + ricnm_q + cross.v[p] +
                         (vterm ? vdot * vdot / (setup.n - m) : 0.0);
    const double rhs22 = sqr(lap.v[p]) / setup.n + ricnm_q + cross.v[p];
    const double rhs23 = hn2.v[p] + ricnm_q + cross.v[p];
    res21[p] = lhs.v[p] - rhs21;
    out.sup21 = std::max(out.sup21, std::fabs(res21[p]));
    out.sup24 = std::max(out.sup24, std::fabs(lhs.v[p] - rhs24));
    out.consistency = std::max(out.consistency, std::fabs(rhs21 - rhs24));
    m22 = std::min(m22, lhs.v[p] - rhs22);
    m23 = std::min(m23, lhs.v[p] - rhs23);
    out.scale = std::max(out.scale, std::fabs(lhs.v[p]) + std::fabs(rhs21));
  }
  out.l2_21 = detail::masked_l2(ch, res21, mask);
  out.margin22 = m22;
  out.margin23 = m23;
  out.mask_fraction = detail::mask_fraction(mask, std::vector<std::uint8_t>(ch.npts(), 1));

  if (harmonic_checks) {
    GridTensor gn(ch, 0);
    std::vector<std::uint8_t> live(ch.npts(), 0);
    for (long p = 0; p < ch.npts(); ++p) {
      gn.v[p] = std::sqrt(std::max(0.0, grad2.v[p]));
      live[p] = gn.v[p] >= 1e-8 ? 1 : 0;
    }
    out.degenerate_fraction = detail::mask_fraction(live, mask);
    auto live3 = detail::erode_mask(ch, live, 3);
    GridTensor lap_gn = v_laplacian(ch, setup, gn);
    GridTensor gn_grad2 = grad_norm2(ch, gn);
    double m26 = std::numeric_limits<double>::infinity();
    double s27 = 0.0;
    for (long p = 0; p < ch.npts(); ++p) {
      if (!mask[p] || !live3[p]) continue;
      const double lhs26 = gn.v[p] * lap_gn.v[p];
      const double rhs26 = gn_grad2.v[p] / (setup.n - 1.0) + quad_form(be.ric_v_nm, p);
      m26 = std::min(m26, lhs26 - rhs26);
      const double rhs27 = hn2.v[p] - gn_grad2.v[p] + quad_form(be.ric_v, p);
      s27 = std::max(s27, std::fabs(lhs26 - rhs27));
    }
    out.margin26 = m26;
    out.sup27 = s27;
  }
  return out;
}

// Chart ladder: level k is the k-times-refined catalog spec.
inline std::shared_ptr<Chart> build_level(const CatalogSpec& ms, int level) {
  CatalogSpec s = ms;
  auto ch = std::make_shared<Chart>(build_manifold(s));
  for (int l = 0; l < level; ++l) {
    s = refine_spec(s, *ch);
    ch = std::make_shared<Chart>(build_manifold(s));
  }
  return ch;
}

inline ResidualReport bochner_residual(const CatalogSpec& ms, const SetupSpec& ss,
                                       const Expr& u_expr, int levels = 2,
                                       double c_slack = 10.0) {
  std::vector<ResidualLevel> lv;
  std::map<std::string, double> margins;
  auto base = build_level(ms, 0);
  const double width = 4.0 * base->hmax();
  for (int l = 0; l < levels; ++l) {
    auto ch = l == 0 ? base : build_level(ms, l);
    Setup setup = ss.build(*ch);
    GridTensor u = sample_expr(*ch, u_expr);
    BochnerLevel bl = bochner_level(*ch, setup, u, width, false);
    lv.push_back({bl.h, bl.sup21, bl.l2_21, bl.scale, bl.mask_fraction});
    if (l == levels - 1) {
      margins["eq2.2"] = bl.margin22;
      margins["eq2.3"] = bl.margin23;
      margins["consistency_2.1_vs_2.4"] = -bl.consistency;  // must stay ≥ −slack (it is ~0)
    }
  }
  return assemble_residual_report("bochner_2.1", std::move(lv), c_slack, 1.5,
                                  std::move(margins));
}

// Harmonic-input variant: relaxes Δ_V u = 0 from u0 at each level, then
// checks (2.6)/(2.7) with degenerate-gradient masking.
inline ResidualReport bochner_harmonic_residual(const CatalogSpec& ms, const SetupSpec& ss,
                                                const Expr& u0_expr, int levels = 2,
                                                double c_slack = 10.0,
                                                double tol_ell = 1e-8) {
  std::vector<ResidualLevel> lv;
  std::map<std::string, double> margins;
  auto base = build_level(ms, 0);
  const double width = 4.0 * base->hmax();
  for (int l = 0; l < levels; ++l) {
    auto ch = l == 0 ? base : build_level(ms, l);
    Setup setup = ss.build(*ch);
    EllipticOpts opts;
    opts.tol_ell = tol_ell;
    EllipticResult sol = solve_v_harmonic(*ch, setup, sample_expr(*ch, u0_expr), opts);
    BochnerLevel bl = bochner_level(*ch, setup, sol.u, width, true);
    lv.push_back({bl.h, bl.sup27, bl.sup27, bl.scale, bl.degenerate_fraction});
    if (l == levels - 1) {
      margins["eq2.6"] = bl.margin26;
      margins["degenerate_fraction_vs_5pct"] = 0.05 - bl.degenerate_fraction;
    }
  }
  return assemble_residual_report("bochner_2.7_harmonic", std::move(lv), c_slack, 1.0,
                                  std::move(margins));
}

// ---------------------------------------------------------------------------
// Heat-run recipes (shared by the parabolic identity and estimate drivers)
// ---------------------------------------------------------------------------

struct RunRecipe {
  CatalogSpec manifold;
  SetupSpec setup;
  Expr u0;
  HeatParams params;
};

struct BuiltRun {
  std::shared_ptr<Chart> chart;
  Setup setup;
  HeatRun run;
};

inline BuiltRun make_run(const RunRecipe& rr, int level = 0) {
  BuiltRun out;
  out.chart = build_level(rr.manifold, level);
  out.setup = rr.setup.build(*out.chart);
  out.run = run_weighted_heat(*out.chart, out.setup, sample_expr(*out.chart, rr.u0),
                              rr.params);
  return out;
}

// snapshot indices usable for centered time differencing
inline std::vector<int> centered_snapshot_indices(const HeatRun& run, double t_min,
                                                  int stride, int halo = 1) {
  std::vector<int> idx;
  const int ns = int(run.times.size());
  for (int k = halo; k + halo < ns; k += stride)
    if (run.times[k] >= std::max(t_min, 10.0 * run.dt)) idx.push_back(k);
  return idx;
}

// ---------------------------------------------------------------------------
// Parabolic identity (5.6) and the Lemma 5.1 inequality margin
// ---------------------------------------------------------------------------

struct ParabolicLevel {
  double h = 0, sup56 = 0, l2_56 = 0, scale = 1;
  double margin51 = std::numeric_limits<double>::quiet_NaN();
};

inline ParabolicLevel parabolic_identity_level(const Chart& ch, const Setup& setup,
                                               const HeatRun& run, double alpha,
                                               double width, double t_min = 0.0,
                                               int stride = 4) {
  if (run.times.size() < 3)
    throw Error(Error::Kind::config, "parabolic identity needs ≥ 3 retained snapshots");
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  auto mask = interior_mask_width(ch, width);
  const double dts = run.snap_dt();

  ParabolicLevel out;
  out.h = ch.hmax();
  auto P_of = [&](int k) {
    GridTensor P = grad_norm2(ch, run.snaps[k]);
    for (long p = 0; p < ch.npts(); ++p) P.v[p] /= run.snaps[k].v[p];
    return P;
  };
  std::vector<double> res(ch.npts(), 0.0);
  double worst_l2 = 0.0;
  for (int k : centered_snapshot_indices(run, t_min, stride)) {
    const GridTensor& u = run.snaps[k];
    GridTensor P = P_of(k), Pm = P_of(k - 1), Pp = P_of(k + 1);
    GridTensor lapP = v_laplacian(ch, setup, P);
    GridTensor du = differential(ch, u);
    GridTensor gradu = gradient(ch, u);
    GridTensor hess = covariant_hessian(ch, u);
    GridTensor B(ch, 2, 0u);
    GridTensor dul = du;  // lower components of ∇u
    for (long p = 0; p < ch.npts(); ++p)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          B.at(p, i * m + j) = hess.at(p, i * m + j) - dul.at(p, i) * dul.at(p, j) / u.v[p];
    GridTensor bn2 = tensor_g_norm2(B);
    for (long p = 0; p < ch.npts(); ++p) {
      if (!mask[p]) continue;
      double ric_q = 0.0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          ric_q += be.ric_v.at(p, i * m + j) * gradu.at(p, i) * gradu.at(p, j);
      const double lhs = (Pp.v[p] - Pm.v[p]) / (2.0 * dts) - lapP.v[p];
      const double rhs = -(2.0 / u.v[p]) * (bn2.v[p] + ric_q);
      res[p] = lhs - rhs;
      out.sup56 = std::max(out.sup56, std::fabs(res[p]));
      out.scale = std::max(out.scale, std::fabs(lhs) + std::fabs(rhs));
    }
    worst_l2 = std::max(worst_l2, detail::masked_l2(ch, res, mask));
  }
  out.l2_56 = worst_l2;

  // Lemma 5.1 margin for F = t(|∇f|² − α f_t − α a f), q ≡ 0 runs
  if (run.q_zero) {
    double margin = std::numeric_limits<double>::infinity();
    auto f_of = [&](int k) {
      GridTensor f(ch, 0);
      for (long p = 0; p < ch.npts(); ++p) f.v[p] = std::log(run.snaps[k].v[p]);
      return f;
    };
    for (int k : centered_snapshot_indices(run, t_min, stride, 2)) {
      const double t = run.times[k];
      std::vector<GridTensor> f;
      for (int j = -2; j <= 2; ++j) f.push_back(f_of(k + j));
      auto F_at = [&](int off) {  // off ∈ {-1,0,1}
        const int c = 2 + off;
        GridTensor g2 = grad_norm2(ch, f[c]);
        GridTensor F(ch, 0);
        const double tc = run.times[k + off];
        for (long p = 0; p < ch.npts(); ++p) {
          const double ftc = (f[c + 1].v[p] - f[c - 1].v[p]) / (2.0 * dts);
          F.v[p] = tc * (g2.v[p] - alpha * ftc - alpha * run.a * f[c].v[p]);
        }
        return F;
      };
      GridTensor F = F_at(0), Fm = F_at(-1), Fp = F_at(1);
      GridTensor lapF = v_laplacian(ch, setup, F);
      GridTensor g2 = grad_norm2(ch, f[2]);
      GridTensor crossFf = inner_grad(ch, f[2], F);
      for (long p = 0; p < ch.npts(); ++p) {
        if (!mask[p]) continue;
        const double Ft = (Fp.v[p] - Fm.v[p]) / (2.0 * dts);
        const double ftc = (f[3].v[p] - f[1].v[p]) / (2.0 * dts);
        const double core = g2.v[p] - ftc - run.a * f[2].v[p];
        double rhs = -2.0 * crossFf.v[p] - F.v[p] / t - 2.0 * bounds.k_plain * t * g2.v[p] +
                     (2.0 * t / setup.n) * core * core -
                     2.0 * (alpha - 1.0) * t * run.a * g2.v[p] +
                     alpha * run.a * t * core;
        margin = std::min(margin, (lapF.v[p] - Ft) - rhs);
      }
    }
    out.margin51 = margin;
  }
  return out;
}

inline ResidualReport parabolic_identity_residual(const RunRecipe& rr, double alpha = 2.0,
                                                  int levels = 2, double c_slack = 10.0,
                                                  double t_min = 0.0) {
  std::vector<ResidualLevel> lv;
  std::map<std::string, double> margins;
  double width = 0.0;
  for (int l = 0; l < levels; ++l) {
    BuiltRun br = make_run(rr, l);
    if (l == 0) width = 4.0 * br.chart->hmax();
    ParabolicLevel pl =
        parabolic_identity_level(*br.chart, br.setup, br.run, alpha, width, t_min);
    lv.push_back({pl.h, pl.sup56, pl.l2_56, pl.scale, 0.0});
    if (l == levels - 1 && std::isfinite(pl.margin51)) margins["lemma5.1"] = pl.margin51;
  }
  return assemble_residual_report("parabolic_5.6", std::move(lv), c_slack, 1.0,
                                  std::move(margins));
}

// ---------------------------------------------------------------------------
// Hessian evolution: Eq. (6.12) and the □_V equations of Lemmas 6.2/6.3
// ---------------------------------------------------------------------------

namespace detail {

// RHS of (6.12): 2R_{kijl}∇^k∇^l u − ∇∇u·Ric_V (both slots) − (∇Ric_V
// combination)·∇u − A_V mixing terms.
inline GridTensor hessian_evolution_rhs(const Chart& ch, const CurvatureFields& curv,
                                        const BakryEmeryTensors& be, const Setup& setup,
                                        const GridTensor& u, const GridTensor& hess,
                                        const GridTensor& du) {
  const int m = ch.m;
  GridTensor dric = covariant_derivative(be.ric_v);
  GridTensor out(ch, 2, 0u);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    double hup[9], hmix[9], ricmix[9];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double s = 0.0, s2 = 0.0, s3 = 0.0;
        for (int a = 0; a < m; ++a) {
          s2 += gi[j * m + a] * hess.at(p, i * m + a);
          s3 += gi[j * m + a] * be.ric_v.at(p, i * m + a);
          for (int b = 0; b < m; ++b)
            s += gi[i * m + a] * gi[j * m + b] * hess.at(p, a * m + b);
        }
        hup[i * m + j] = s;
        hmix[i * m + j] = s2;
        ricmix[i * m + j] = s3;
      }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double rhs = 0.0;
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l)
            rhs += 2.0 * curv.rm.at(p, ((k * m + i) * m + j) * m + l) * hup[k * m + l];
        for (int k = 0; k < m; ++k)
          rhs -= hess.at(p, i * m + k) * ricmix[j * m + k] +
                 hess.at(p, j * m + k) * ricmix[i * m + k];
        for (int k = 0; k < m; ++k) {
          double t1 = 0, t2 = 0, t3 = 0;
          for (int a = 0; a < m; ++a) {
            t1 += gi[k * m + a] * dric.at(p, (i * m + j) * m + a);
            t2 += gi[k * m + a] * dric.at(p, (j * m + i) * m + a);
            t3 += gi[k * m + a] * dric.at(p, (a * m + i) * m + j);
          }
          rhs -= (t1 + t2 - t3) * du.at(p, k);
        }
        for (int k = 0; k < m; ++k)
          rhs -= hmix[i * m + k] * be.a_v.at(p, k * m + j) +
                 hmix[j * m + k] * be.a_v.at(p, k * m + i);
        out.at(p, i * m + j) = rhs;
      }
  }
  return out;
}

}  // namespace detail

struct HessianEvolutionLevel {
  double h = 0;
  double sup612 = 0, scale612 = 1;
  double sup_l62 = 0, scale62 = 1;
  double sup_l63 = 0, scale63 = 1;
};

inline HessianEvolutionLevel hessian_evolution_level(const Chart& ch, const Setup& setup,
                                                     const HeatRun& run, double A,
                                                     double width, double t_min = 0.0,
                                                     int stride = 4) {
  if (run.times.size() < 3)
    throw Error(Error::Kind::config, "hessian evolution needs ≥ 3 retained snapshots");
  for (auto& s : run.snaps)
    for (double x : s.v)
      if (x > A * (1.0 + 1e-12))
        throw Error(Error::Kind::domain, "hessian evolution requires u ≤ A on all snapshots");
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  GridTensor dric = covariant_derivative(be.ric_v);
  auto mask = interior_mask_width(ch, width);
  const double dts = run.snap_dt();

  auto hess_of = [&](int k) { return covariant_hessian(ch, run.snaps[k]); };
  auto f_of = [&](int k) {
    GridTensor f(ch, 0);
    for (long p = 0; p < ch.npts(); ++p) f.v[p] = std::log(run.snaps[k].v[p] / A);
    return f;
  };
  auto v_of = [&](int k, const GridTensor& hess, const GridTensor& f) {
    GridTensor v(ch, 2, 0u);
    for (long p = 0; p < ch.npts(); ++p) {
      const double den = run.snaps[k].v[p] * (1.0 - f.v[p]);
      for (int c = 0; c < m * m; ++c) v.at(p, c) = hess.at(p, c) / den;
    }
    return v;
  };
  auto w_of = [&](int k, const GridTensor& du, const GridTensor& f) {
    GridTensor w(ch, 2, 0u);
    for (long p = 0; p < ch.npts(); ++p) {
      const double den = sqr(run.snaps[k].v[p] * (1.0 - f.v[p]));
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) w.at(p, i * m + j) = du.at(p, i) * du.at(p, j) / den;
    }
    return w;
  };

  HessianEvolutionLevel out;
  out.h = ch.hmax();
  for (int k : centered_snapshot_indices(run, t_min, stride)) {
    const GridTensor& u = run.snaps[k];
    GridTensor du = differential(ch, u);
    GridTensor hess = hess_of(k), hess_m = hess_of(k - 1), hess_p = hess_of(k + 1);
    // (6.12)
    GridTensor lap_hess = tensor_v_laplacian(hess, setup);
    GridTensor rhs612 = detail::hessian_evolution_rhs(ch, curv, be, setup, u, hess, du);
    for (long p = 0; p < ch.npts(); ++p) {
      if (!mask[p]) continue;
      for (int c = 0; c < m * m; ++c) {
        const double lhs = (hess_p.at(p, c) - hess_m.at(p, c)) / (2.0 * dts) - lap_hess.at(p, c);
        out.sup612 = std::max(out.sup612, std::fabs(lhs - rhs612.at(p, c)));
        out.scale612 = std::max(out.scale612, std::fabs(lhs) + std::fabs(rhs612.at(p, c)));
      }
    }
    // Lemmas 6.2 / 6.3 in the A_V-form
    GridTensor f = f_of(k), fm = f_of(k - 1), fp = f_of(k + 1);
    GridTensor df = differential(ch, f);
    GridTensor v = v_of(k, hess, f), vm = v_of(k - 1, hess_m, fm), vp = v_of(k + 1, hess_p, fp);
    GridTensor dum = differential(ch, run.snaps[k - 1]);
    GridTensor dup = differential(ch, run.snaps[k + 1]);
    GridTensor w = w_of(k, du, f), wm = w_of(k - 1, dum, fm), wp = w_of(k + 1, dup, fp);
    GridTensor lap_v = tensor_v_laplacian(v, setup);
    GridTensor lap_w = tensor_v_laplacian(w, setup);
    GridTensor grad_v = covariant_derivative(v);
    GridTensor grad_w = covariant_derivative(w);
    GridTensor gf2 = grad_norm2(ch, f);
    for (long p = 0; p < ch.npts(); ++p) {
      if (!mask[p]) continue;
      const double* gi = ch.ginv_at(p);
      const double fv = f.v[p];
      const double wtr = gf2.v[p] / sqr(1.0 - fv);  // w = |∇f|²/(1−f)²
      double gfup[3];
      for (int i = 0; i < m; ++i) {
        gfup[i] = 0.0;
        for (int a = 0; a < m; ++a) gfup[i] += gi[i * m + a] * df.at(p, a);
      }
      double vup[9], wup[9], vmix[9], wmix[9];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          double sv = 0, sw = 0;
          for (int a = 0; a < m; ++a) {
            sv += gi[j * m + a] * v.at(p, i * m + a);
            sw += gi[j * m + a] * w.at(p, i * m + a);
          }
          vmix[i * m + j] = sv;  // v_i^j
          wmix[i * m + j] = sw;
          double sv2 = 0, sw2 = 0;
          for (int a = 0; a < m; ++a)
            for (int b = 0; b < m; ++b) {
              sv2 += gi[i * m + a] * gi[j * m + b] * v.at(p, a * m + b);
              sw2 += gi[i * m + a] * gi[j * m + b] * w.at(p, a * m + b);
            }
          vup[i * m + j] = sv2;
          wup[i * m + j] = sw2;
        }
      double duup[3];
      for (int i = 0; i < m; ++i) {
        duup[i] = 0.0;
        for (int a = 0; a < m; ++a) duup[i] += gi[i * m + a] * du.at(p, a);
      }
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          const int c = i * m + j;
          // transport term −(2f/(1−f)) ∇^k f ∇_k T
          double tv = 0, tw = 0;
          for (int k2 = 0; k2 < m; ++k2) {
            tv += gfup[k2] * grad_v.at(p, k2 * m * m + c);
            tw += gfup[k2] * grad_w.at(p, k2 * m * m + c);
          }
          double rhs_v = -(2.0 * fv / (1.0 - fv)) * tv - (1.0 - fv) * wtr * v.at(p, c);
          double rhs_w = -(2.0 * fv / (1.0 - fv)) * tw -
                         2.0 * (1.0 - fv) * wtr * w.at(p, c);
          for (int k2 = 0; k2 < m; ++k2)
            for (int l = 0; l < m; ++l)
              rhs_v += 2.0 * curv.rm.at(p, ((k2 * m + i) * m + j) * m + l) * vup[k2 * m + l];
          for (int k2 = 0; k2 < m; ++k2) {
            rhs_v -= be.ric_v.at(p, i * m + k2) * vmix[j * m + k2] +
                     be.ric_v.at(p, j * m + k2) * vmix[i * m + k2];
            rhs_w -= be.ric_v.at(p, i * m + k2) * wmix[j * m + k2] +
                     be.ric_v.at(p, j * m + k2) * wmix[i * m + k2];
            rhs_v += vmix[i * m + k2] * be.a_v.at(p, k2 * m + j) +
                     vmix[j * m + k2] * be.a_v.at(p, k2 * m + i);
            rhs_w += wmix[i * m + k2] * be.a_v.at(p, k2 * m + j) +
                     wmix[j * m + k2] * be.a_v.at(p, k2 * m + i);
          }
          // −(∇^k u/(u(1−f)))(∇_i R_jk + ∇_j R_ik − ∇_k R_ij)
          const double pref = 1.0 / (u.v[p] * (1.0 - fv));
          for (int k2 = 0; k2 < m; ++k2)
            rhs_v -= pref * duup[k2] *
                     (dric.at(p, (i * m + j) * m + k2) + dric.at(p, (j * m + i) * m + k2) -
                      dric.at(p, (k2 * m + i) * m + j));
          // −2(v + f w)_{ik} (v + f w)_j{}^k
          double quad = 0.0;
          for (int k2 = 0; k2 < m; ++k2)
            quad += (v.at(p, i * m + k2) + fv * w.at(p, i * m + k2)) *
                    (vmix[j * m + k2] + fv * wmix[j * m + k2]);
          rhs_w -= 2.0 * quad;

          const double lhs_v = (vp.at(p, c) - vm.at(p, c)) / (2.0 * dts) - lap_v.at(p, c);
          const double lhs_w = (wp.at(p, c) - wm.at(p, c)) / (2.0 * dts) - lap_w.at(p, c);
          out.sup_l62 = std::max(out.sup_l62, std::fabs(lhs_v - rhs_v));
          out.scale62 = std::max(out.scale62, std::fabs(lhs_v) + std::fabs(rhs_v));
          out.sup_l63 = std::max(out.sup_l63, std::fabs(lhs_w - rhs_w));
          out.scale63 = std::max(out.scale63, std::fabs(lhs_w) + std::fabs(rhs_w));
        }
    }
  }
  return out;
}

inline std::vector<ResidualReport> hessian_evolution_residual(const RunRecipe& rr,
                                                              int levels = 2,
                                                              double c_slack = 10.0,
                                                              double t_min = 0.0) {
  std::vector<ResidualLevel> l612, l62, l63;
  double width = 0.0;
  for (int l = 0; l < levels; ++l) {
    BuiltRun br = make_run(rr, l);
    if (l == 0) width = 4.0 * br.chart->hmax();
    HessianEvolutionLevel hl =
        hessian_evolution_level(*br.chart, br.setup, br.run, br.run.sup_u, width, t_min);
    l612.push_back({hl.h, hl.sup612, hl.sup612, hl.scale612, 0.0});
    l62.push_back({hl.h, hl.sup_l62, hl.sup_l62, hl.scale62, 0.0});
    l63.push_back({hl.h, hl.sup_l63, hl.sup_l63, hl.scale63, 0.0});
  }
  std::vector<ResidualReport> out;
  out.push_back(assemble_residual_report("hessian_evolution_6.12", std::move(l612), c_slack, 1.0));
  out.push_back(assemble_residual_report("hessian_evolution_lemma6.2", std::move(l62), c_slack, 1.0));
  out.push_back(assemble_residual_report("hessian_evolution_lemma6.3", std::move(l63), c_slack, 1.0));
  return out;
}

}  // namespace bel
