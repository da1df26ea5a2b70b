#pragma once

#include "bel/comparison.hpp"
#include "bel/identities.hpp"

namespace bel {

struct EstimateReport {
  std::string id;
  std::map<std::string, double> params;
  double worst_margin = 0;  // min over checked points/times of RHS − LHS
  double slack = 0;
  std::string verdict;  // holds | holds-within-slack | violated | vacuous-pass
  std::array<double, 4> worst_location{0, 0, 0, 0};  // coords, t
  double violation_ratio = std::numeric_limits<double>::quiet_NaN();
  int resolutions_checked = 1;
};

// margin measurement at one resolution
struct LevelMargin {
  double margin = std::numeric_limits<double>::infinity();
  double scale = 1.0;
  double h = 0.0;
  std::array<double, 4> location{0, 0, 0, 0};
  std::map<std::string, double> params;
  bool vacuous = false;
};

inline void track_margin(LevelMargin& lm, double margin, const double* x, int m, double t) {
  if (margin < lm.margin) {
    lm.margin = margin;
    for (int a = 0; a < m; ++a) lm.location[a] = x[a];
    lm.location[3] = t;
  }
}

// Verdict protocol: a margin below −slack at the base resolution triggers a
// refined rerun; "violated" only if it stays below −slack there and the
// violation magnitude does not shrink at order ≥ 1.
template <class LevelFn>
inline EstimateReport estimate_with_refinement(const std::string& id, double c_slack,
                                               LevelFn&& level_fn) {
  EstimateReport rep;
  rep.id = id;
  LevelMargin base = level_fn(0);
  rep.params = base.params;
  rep.worst_location = base.location;
  rep.slack = c_slack * sqr(base.h) * std::max(1.0, base.scale);
  rep.worst_margin = base.margin;
  if (base.vacuous) {
    rep.verdict = "vacuous-pass";
    return rep;
  }
  if (base.margin >= 0.0) {
    rep.verdict = "holds";
    return rep;
  }
  if (base.margin >= -rep.slack) {
    rep.verdict = "holds-within-slack";
    return rep;
  }
  LevelMargin fine = level_fn(1);
  rep.resolutions_checked = 2;
  const double fine_slack = c_slack * sqr(fine.h) * std::max(1.0, fine.scale);
  rep.violation_ratio =
      fine.margin < 0.0 ? (-base.margin) / (-fine.margin) : std::numeric_limits<double>::infinity();
  const bool shrinks = !(fine.margin < 0.0) || rep.violation_ratio >= 2.0 * 0.95;
  if (fine.margin >= -fine_slack || shrinks) {
    rep.verdict = "holds-within-slack";
  } else {
    rep.verdict = "violated";
  }
  return rep;
}

inline std::vector<std::uint8_t> ball_mask(const Chart& ch, const double* x0, double radius,
                                           long* count_out = nullptr, int guard_cells = 3) {
  auto edge_ok = interior_mask(ch, guard_cells);
  std::vector<std::uint8_t> mask(ch.npts(), 0);
  long count = 0;
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    if (ch.distance(x, x0) > radius) return;
    if (!edge_ok[p]) throw Error(Error::Kind::domain, "ball leaves the chart's usable region");
    mask[p] = 1;
    ++count;
  });
  if (count == 0) throw Error(Error::Kind::domain, "ball contains no grid points");
  if (count_out) *count_out = count;
  return mask;
}

// ---------------------------------------------------------------------------
// Cheng-Yau estimates (Thm 2.3, Thm 3.4, Cor 3.5(iii))
// ---------------------------------------------------------------------------

enum class ChengYauMode { global_compact, local, harnack };

inline LevelMargin check_cheng_yau_level(const Chart& ch, const Setup& setup,
                                         const GridTensor& u, ChengYauMode mode,
                                         const double* x0 = nullptr, double r = 0.0) {
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  GridTensor gn2 = grad_norm2(ch, u);
  LevelMargin lm;
  lm.h = ch.hmax();
  lm.params["n"] = setup.n;
  const double n = setup.n;

  if (mode == ChengYauMode::global_compact) {
    double umin = std::numeric_limits<double>::infinity();
    for (double x : u.v) umin = std::min(umin, x);
    const double coeff = std::sqrt((n - 1.0) * bounds.k_plain);
    lm.params["K"] = bounds.k_plain;
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      const double lhs = std::sqrt(std::max(0.0, gn2.v[p]));
      const double rhs = coeff * (u.v[p] - umin);
      track_margin(lm, rhs - lhs, x, ch.m, 0.0);
      lm.scale = std::max(lm.scale, lhs);
    });
    return lm;
  }

  if (!(r > 0.0)) throw Error(Error::Kind::domain, "local Cheng-Yau mode needs a radius");
  if (r > ch.injectivity_bound)
    throw Error(Error::Kind::domain, "ball radius exceeds the injectivity bound");
  auto mask = ball_mask(ch, x0, r / 2.0);
  const double K = bounds.k_scaled;  // Ric^{n,m}_V ≥ −(n−1)K normalization
  lm.params["K_scaled"] = K;
  lm.params["r"] = r;

  if (mode == ChengYauMode::local) {
    const double rhs = 8.0 * (n - 1.0) * (1.0 / r + std::sqrt(K));
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      if (!mask[p]) return;
      if (!(u.v[p] > 0.0))
        throw Error(Error::Kind::domain, "local Cheng-Yau mode needs a positive solution");
      const double lhs = std::sqrt(std::max(0.0, gn2.v[p])) / u.v[p];
      track_margin(lm, rhs - lhs, x, ch.m, 0.0);
      lm.scale = std::max(lm.scale, lhs);
    });
    lm.params["bound"] = rhs;
    return lm;
  }

  // harnack: sup u ≤ e^{8(n−1)(1+2r√K)} inf u on B(x, r/2)
  double sup_u = -std::numeric_limits<double>::infinity();
  double inf_u = std::numeric_limits<double>::infinity();
  std::array<double, 4> loc{0, 0, 0, 0};
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    if (!mask[p]) return;
    if (!(u.v[p] > 0.0))
      throw Error(Error::Kind::domain, "Harnack mode needs a positive solution");
    if (u.v[p] > sup_u) {
      sup_u = u.v[p];
      for (int a = 0; a < ch.m; ++a) loc[a] = x[a];
    }
    inf_u = std::min(inf_u, u.v[p]);
  });
  const double C = std::exp(8.0 * (n - 1.0) * (1.0 + 2.0 * r * std::sqrt(K)));
  lm.margin = C * inf_u - sup_u;
  lm.scale = sup_u;
  lm.location = loc;
  lm.params["harnack_C"] = C;
  return lm;
}

// ---------------------------------------------------------------------------
// Lemma 4.1: the two differential inequalities for ln H,
// H = (r²−d²)² |∇u|² G(u), with the G'(u)² reading of the second display.
// ---------------------------------------------------------------------------

inline LevelMargin check_lemma_h_level(const Chart& ch, const Setup& setup,
                                       const GridTensor& u, const Expr& F, const Expr& G,
                                       const double* p0, double r) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  LevelMargin lm;
  lm.h = ch.hmax();
  lm.params["r"] = r;
  lm.params["n"] = setup.n;

  GridTensor d(ch, 0);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    d.v[p] = ch.distance(x, p0);
  });
  GridTensor gn2 = grad_norm2(ch, u);

  ExprEnv env;
  env.set("u", 0.0);
  const Expr Gp = G.derivative("u"), Gpp = Gp.derivative("u");
  const Expr Fp = F.derivative("u");
  auto eval_u = [&](const Expr& e, double uu) {
    env.set("u", uu);
    return e.eval(env);
  };

  GridTensor lnH(ch, 0);
  std::vector<std::uint8_t> live(ch.npts(), 0);
  long n_ball = 0, n_degenerate = 0;
  const double rr = r * (1.0 - ch.hmax());
  for (long p = 0; p < ch.npts(); ++p) {
    if (d.v[p] >= rr) continue;
    ++n_ball;
    const double gv = eval_u(G, u.v[p]);
    if (!(gv > 0.0)) throw Error(Error::Kind::domain, "lemma H needs G(u) > 0 on the ball");
    if (gn2.v[p] < 1e-16) { ++n_degenerate; continue; }
    const double H = sqr(sqr(r) - sqr(d.v[p])) * gn2.v[p] * gv;
    if (!(H > 0.0)) continue;
    lnH.v[p] = std::log(H);
    live[p] = 1;
  }
  if (n_ball == 0) throw Error(Error::Kind::domain, "lemma H ball contains no grid points");
  lm.params["masked_fraction"] = double(n_degenerate) / double(n_ball);
  if (n_degenerate == n_ball) {
    lm.vacuous = true;  // H ≡ 0: nothing to check
    lm.margin = 0.0;
    return lm;
  }
  if (lm.params["masked_fraction"] > 0.20)
    throw Error(Error::Kind::domain, "lemma H: gradient-degenerate masking exceeds 20%");

  // curvature normalization on the ball: Ric^{n,m}_V ≥ −(n−1)K
  double lmin = std::numeric_limits<double>::infinity();
  for (long p = 0; p < ch.npts(); ++p) {
    if (d.v[p] > r) continue;
    lmin = std::min(lmin, min_generalized_eigenvalue(&be.ric_v_nm.v[p * m * m], ch.g_at(p), m));
  }
  const double K = std::max(0.0, -lmin) / (setup.n - 1.0);
  lm.params["K_scaled"] = K;

  auto live_in = detail::erode_mask(ch, live, 3);
  GridTensor lap_lnH = v_laplacian(ch, setup, lnH);
  GridTensor dlnH = differential(ch, lnH);
  GridTensor dd = differential(ch, d);
  GridTensor du = differential(ch, u);
  const double n = setup.n;

  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    if (!live_in[p]) return;
    const double* gi = ch.ginv_at(p);
    const double uu = u.v[p];
    const double gv = eval_u(G, uu), gp = eval_u(Gp, uu), gpp = eval_u(Gpp, uu);
    const double fv = eval_u(F, uu), fp = eval_u(Fp, uu);
    const double dv = d.v[p];
    const double w2 = sqr(r) - sqr(dv);
    const double gnorm = std::sqrt(gn2.v[p]);
    // vector W = ∇lnH + 8 d ∇d/(r²−d²) − 2(G'/G)∇u   (lower components)
    double Wl[3], inner1 = 0.0;
    for (int a = 0; a < m; ++a)
      Wl[a] = dlnH.at(p, a) + 8.0 * dv * dd.at(p, a) / w2 - 2.0 * (gp / gv) * du.at(p, a);
    for (int a = 0; a < m; ++a)
      for (int b = 0; b < m; ++b) inner1 += gi[a * m + b] * dlnH.at(p, a) * Wl[b];
    const double common = -2.0 * (n - 1.0) * K + 2.0 * fp -
                          4.0 * (n + (n - 1.0) * std::sqrt(K) * dv) / w2;
    const double rhs1 = common + (gp / gv) * fv +
                        (2.0 * gv * gpp - 3.0 * gp * gp) / (2.0 * gv * gv) * gn2.v[p] -
                        4.0 * dv * gp * gnorm / (w2 * gv) - 16.0 * sqr(dv) / sqr(w2);
    const double rhs2 = common +
                        (8.0 * gv * gpp - (8.0 + n) * gp * gp) / (8.0 * gv * gv) * gn2.v[p] -
                        8.0 * dv * gp * gnorm / (w2 * gv) - 24.0 * sqr(dv) / sqr(w2);
    const double lhs1 = lap_lnH.v[p] + inner1;
    const double lhs2 = lap_lnH.v[p] + 2.0 * inner1;
    track_margin(lm, lhs1 - rhs1, x, m, 0.0);
    track_margin(lm, lhs2 - rhs2, x, m, 0.0);
    lm.scale = std::max({lm.scale, std::fabs(lhs1), std::fabs(rhs1), std::fabs(rhs2)});
  });
  return lm;
}

// ---------------------------------------------------------------------------
// Li-Yau estimates (Thm 5.2, Thm 5.3 with the measured cutoff, Cor 5.4)
// ---------------------------------------------------------------------------

struct CutoffConstants {
  double c1 = 0, c2 = 0;
};

// Fixed quintic bridge (1 on [0,1], 0 at 2, C² matched); the abstract C₁, C₂
// of the cutoff argument are measured from its derivatives.
inline const CutoffConstants& cutoff_constants() {
  static const CutoffConstants cc = [] {
    CutoffConstants c;
    const int N = 200000;
    for (int i = 1; i < N; ++i) {
      const double t = double(i) / N;
      const double phi = 1.0 - (10.0 * t * t * t - 15.0 * t * t * t * t + 6.0 * t * t * t * t * t);
      const double dphi = -30.0 * t * t * sqr(1.0 - t);
      const double ddphi = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t);
      if (phi > 1e-14) c.c1 = std::max(c.c1, -dphi / std::sqrt(phi));
      c.c2 = std::max(c.c2, -ddphi);
    }
    return c;
  }();
  return cc;
}

enum class LiYauVariant { compact, corollary, local };

struct LiYauOptions {
  LiYauVariant variant = LiYauVariant::corollary;
  double alpha = 2.0;
  double eps = 0.5;                 // local mode only
  double t_min = 0.0;               // defaults to 10·dt
  std::array<double, 3> x0{0, 0, 0};
  double R = 0.0;                   // local mode ball radius
};

inline LevelMargin check_li_yau_level(const Chart& ch, const Setup& setup, const HeatRun& run,
                                      const Expr& q, const LiYauOptions& opt) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  LevelMargin lm;
  lm.h = ch.hmax();
  const double n = setup.n;
  const double alpha = opt.alpha;
  lm.params["n"] = n;
  lm.params["a"] = run.a;

  if (opt.variant != LiYauVariant::compact) {
    if (!(alpha > 1.0)) throw Error(Error::Kind::domain, "Li-Yau needs alpha > 1");
    lm.params["alpha"] = alpha;
  }
  if (opt.variant == LiYauVariant::local) {
    if (!(opt.eps > 0.0 && opt.eps < 1.0)) throw Error(Error::Kind::domain, "epsilon outside (0,1)");
    lm.params["eps"] = opt.eps;
  }

  const double dts = run.snap_dt();
  auto idx = centered_snapshot_indices(run, opt.t_min, 1);
  if (idx.empty()) throw Error(Error::Kind::domain, "no snapshots in the checked time range");

  std::vector<std::uint8_t> mask(ch.npts(), 1);
  double K = 0.0, theta_b = 0.0, gamma_b = 0.0, Aconst = 0.0;
  if (opt.variant == LiYauVariant::compact) {
    K = 0.0;  // Thm 5.2 hypothesis Ric^{n,m}_V ≥ 0; margin reflects it if violated
    lm.params["lambda_min"] = bounds.lambda_min_nm;
  } else if (opt.variant == LiYauVariant::corollary) {
    K = bounds.k_plain;
    lm.params["K"] = K;
  } else {
    if (!(opt.R > 0.0)) throw Error(Error::Kind::domain, "local Li-Yau needs a radius");
    ball_mask(ch, opt.x0.data(), 2.0 * opt.R);  // throws if B(p,2R) leaves the chart
    mask = ball_mask(ch, opt.x0.data(), opt.R);
    double lmin = std::numeric_limits<double>::infinity();
    GridTensor dfield(ch, 0);
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      dfield.v[p] = ch.distance(x, opt.x0.data());
    });
    for (long p = 0; p < ch.npts(); ++p)
      if (dfield.v[p] <= 2.0 * opt.R)
        lmin = std::min(lmin,
                        min_generalized_eigenvalue(&be.ric_v_nm.v[p * m * m], ch.g_at(p), m));
    K = std::max(0.0, -lmin);
    // q bounds on B(p,2R) over the checked times
    for (int k : idx) {
      GridTensor qs = sample_expr(ch, q, run.times[k]);
      GridTensor lap_q = v_laplacian(ch, setup, qs);
      GridTensor gq = grad_norm2(ch, qs);
      for (long p = 0; p < ch.npts(); ++p) {
        if (dfield.v[p] > 2.0 * opt.R) continue;
        theta_b = std::max(theta_b, lap_q.v[p]);
        gamma_b = std::max(gamma_b, std::sqrt(std::max(0.0, gq.v[p])));
      }
      if (!q.depends_on("t")) break;
    }
    theta_b = std::max(0.0, theta_b);
    const auto& cc = cutoff_constants();
    Aconst = (2.0 * sqr(cc.c1) + (n - 1.0) * cc.c1 * (1.0 + opt.R * std::sqrt(K)) + cc.c2) /
             sqr(opt.R);
    lm.params["K"] = K;
    lm.params["theta"] = theta_b;
    lm.params["gamma"] = gamma_b;
    lm.params["R"] = opt.R;
    lm.params["C1"] = cc.c1;
    lm.params["C2"] = cc.c2;
    lm.params["A_const"] = Aconst;
  }

  const double a = run.a;
  for (int k : idx) {
    const double t = run.times[k];
    const GridTensor& u = run.snaps[k];
    GridTensor gn2 = grad_norm2(ch, u);
    GridTensor qs = sample_expr(ch, q, t);
    double rhs_const = 0.0;
    if (opt.variant == LiYauVariant::compact) {
      rhs_const = a <= 0.0 ? n / (2.0 * t) - n * a / 2.0 : n / (2.0 * t);
    } else if (opt.variant == LiYauVariant::corollary) {
      rhs_const = n * sqr(alpha) * K / (alpha - 1.0) + n * sqr(alpha) / (2.0 * t);
    } else {
      const double e = opt.eps;
      const double bracket = a >= 0.0 ? (K + a * (alpha - 1.0))
                                      : (K - 0.5 * a * a * (alpha - 1.0));  // printed form
      rhs_const = n * sqr(alpha) / (2.0 * (1.0 - e) * t) +
                  (Aconst + gamma_b) * n * sqr(alpha) / (2.0 * (1.0 - e)) +
                  sqr(n) * std::pow(alpha, 4) * sqr(cutoff_constants().c1) /
                      (4.0 * e * (1.0 - e) * (alpha - 1.0) * sqr(opt.R)) +
                  n * sqr(alpha) * bracket / ((1.0 - e) * (alpha - 1.0)) +
                  std::sqrt(std::max(0.0, (alpha * theta_b + (alpha - 1.0) * gamma_b) * n *
                                              sqr(alpha) / (2.0 * (1.0 - e))));
      if (a < 0.0) {
        const double corrected = rhs_const - n * sqr(alpha) * (K - 0.5 * a * a * (alpha - 1.0)) /
                                                 ((1.0 - e) * (alpha - 1.0)) +
                                 n * sqr(alpha) * (K + a * (alpha - 1.0)) /
                                     ((1.0 - e) * (alpha - 1.0));
        lm.params["rhs_corrected_reading"] = corrected;
      }
    }
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      if (!mask[p]) return;
      const double uv = u.v[p];
      const double ut = (run.snaps[k + 1].v[p] - run.snaps[k - 1].v[p]) / (2.0 * dts);
      double lhs;
      if (opt.variant == LiYauVariant::compact) {
        lhs = gn2.v[p] / sqr(uv) - ut / uv - a * std::log(uv);
      } else if (opt.variant == LiYauVariant::corollary) {
        lhs = gn2.v[p] / sqr(uv) - alpha * ut / uv;
      } else {
        const double f = std::log(uv);
        const double ft = ut / uv;
        lhs = gn2.v[p] / sqr(uv) - alpha * ft - alpha * qs.v[p] - alpha * a * f;
      }
      track_margin(lm, rhs_const - lhs, x, m, t);
      lm.scale = std::max(lm.scale, std::fabs(lhs));
    });
  }
  return lm;
}

// ---------------------------------------------------------------------------
// Hamilton estimates (Thm 5.7, Cor 5.8, Prop 5.11)
// ---------------------------------------------------------------------------

enum class HamiltonVariant { sharp, weak, prop511 };

inline double hamilton_coefficient(double K, double t, bool sharp) {
  if (K <= 0.0) return 1.0 / t;
  return sharp ? 2.0 * K / std::expm1(2.0 * K * t) + 2.0 * K : 1.0 / t + 2.0 * K;
}

inline LevelMargin check_hamilton_level(const Chart& ch, const Setup& setup,
                                        const HeatRun& run, HamiltonVariant variant,
                                        double A, double a_param = 3.0,
                                        double t_min = 0.0) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  LevelMargin lm;
  lm.h = ch.hmax();
  // Thm 5.7 bounds Ric_V; Prop 5.11 assumes the Ric^{n,m}_V bound
  const double K = variant == HamiltonVariant::prop511 ? bounds.k_plain : bounds.k_ric_v;
  lm.params["K"] = K;
  lm.params["A"] = A;
  if (variant == HamiltonVariant::prop511) {
    if (!(a_param > 2.0)) throw Error(Error::Kind::domain, "prop511 needs a > 2");
    lm.params["a_param"] = a_param;
  }
  const int ns = int(run.times.size());
  for (int k = 1; k < ns; ++k) {
    const double t = run.times[k];
    if (t < std::max(t_min, 10.0 * run.dt)) continue;
    const GridTensor& u = run.snaps[k];
    GridTensor gn2 = grad_norm2(ch, u);
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      const double uv = u.v[p];
      if (uv > A * (1.0 + 1e-12))
        throw Error(Error::Kind::domain, "Hamilton check requires u ≤ A");
      double lhs, rhs;
      if (variant == HamiltonVariant::prop511) {
        const double phi = K > 0.0 ? -std::expm1(-2.0 * K * t) / (2.0 * K) : t;
        lhs = phi * gn2.v[p];
        rhs = std::pow(a_param + 1.0, 3) / (2.0 * sqr(a_param) * (a_param - 2.0)) *
              (a_param + 1.0 - std::exp(-2.0 * K * t)) * sqr(A);
      } else {
        lhs = gn2.v[p] / sqr(uv);
        rhs = hamilton_coefficient(K, t, variant == HamiltonVariant::sharp) *
              std::log(A / uv);
      }
      track_margin(lm, rhs - lhs, x, m, t);
      lm.scale = std::max(lm.scale, std::fabs(lhs));
    });
  }
  return lm;
}

// Cor 5.8 Liouville form for elliptic u: |∇ln u|² ≤ 2K ln(sup u / u)
inline LevelMargin check_hamilton_liouville_level(const Chart& ch, const Setup& setup,
                                                  const GridTensor& u) {
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  const double K = bounds.k_ric_v;
  LevelMargin lm;
  lm.h = ch.hmax();
  lm.params["K"] = K;
  double sup_u = 0.0;
  for (double x : u.v) {
    if (!(x > 0.0)) throw Error(Error::Kind::domain, "Liouville mode needs u > 0");
    sup_u = std::max(sup_u, x);
  }
  GridTensor lnu(ch, 0);
  for (long p = 0; p < ch.npts(); ++p) lnu.v[p] = std::log(u.v[p]);
  GridTensor gn2 = grad_norm2(ch, lnu);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    const double lhs = gn2.v[p];
    const double rhs = 2.0 * K * std::log(sup_u / u.v[p]);
    track_margin(lm, rhs - lhs, x, ch.m, 0.0);
    lm.scale = std::max(lm.scale, std::fabs(lhs));
  });
  return lm;
}

// ---------------------------------------------------------------------------
// Hessian estimates (Thm 6.1)
// ---------------------------------------------------------------------------

// B of Thm 6.1(a): the explicit radical.
inline double hessian_b_constant(int m, double n, const CurvatureBounds& b) {
  const double m32 = std::pow(double(m), 1.5);
  return std::sqrt(16.0 * m32 * b.k1 * b.sup_v2 + 2.0 * m * b.k2 +
                   3.0 * m * b.k_plain * b.k2 + 14.0 * m32 * n * b.k_plain * b.k1 +
                   100.0 * sqr(n) * std::pow(double(m), 3) * sqr(b.k1 + b.k2));
}

// B of Thm 1.14(a), reported alongside for comparison.
inline double hessian_b_constant_overview(int m, double n, const CurvatureBounds& b) {
  const double kv = b.k1 + b.k2 +
                    std::sqrt((b.k1 + b.k2) * b.k_plain + b.k2 + b.k1 * b.sup_v2);
  return 10.0 * std::pow(double(m), 1.5) * n * kv;
}

inline LevelMargin check_hessian_global_level(const Chart& ch, const Setup& setup,
                                              const HeatRun& run, double A,
                                              double t_min = 0.0) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  const double B = hessian_b_constant(m, setup.n, bounds);
  LevelMargin lm;
  lm.h = ch.hmax();
  lm.params["A"] = A;
  lm.params["B"] = B;
  lm.params["B_overview"] = hessian_b_constant_overview(m, setup.n, bounds);
  lm.params["K"] = bounds.k_plain;
  lm.params["K1"] = bounds.k1;
  lm.params["K2"] = bounds.k2;
  lm.params["supV2"] = bounds.sup_v2;
  const int ns = int(run.times.size());
  for (int k = 1; k < ns; ++k) {
    const double t = run.times[k];
    if (t < std::max(t_min, 10.0 * run.dt)) continue;
    const GridTensor& u = run.snaps[k];
    GridTensor hess = covariant_hessian(ch, u);
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
      const double uv = u.v[p];
      if (uv > A * (1.0 + 1e-12))
        throw Error(Error::Kind::domain, "Hessian check requires u ≤ A");
      const double lmax = max_generalized_eigenvalue(&hess.v[p * m * m], ch.g_at(p), m);
      const double rhs = (B + 5.0 / t) * uv * (1.0 + std::log(A / uv));
      track_margin(lm, rhs - lmax, x, m, t);
      lm.scale = std::max(lm.scale, std::fabs(lmax));
    });
  }
  return lm;
}

// Thm 6.1(b): the smallest C₁ making (6.2) hold with C₂ = 1 over the inner
// space-time cube; the refinement driver asserts its stability.
struct HessianLocalResult {
  double c1_star = 0;
  double h = 0;
  std::map<std::string, double> params;
};

inline HessianLocalResult check_hessian_local_level(const Chart& ch, const Setup& setup,
                                                    const HeatRun& run, double A,
                                                    const double* x0, double R, double Tcube) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  const double kv = bounds.k1 + bounds.k2 +
                    std::sqrt((bounds.k1 + bounds.k2) * bounds.k_plain + bounds.k2 +
                              bounds.k1 * bounds.sup_v2);
  const double B = std::pow(double(m), 2.5) * sqr(setup.n) * kv;  // C₂ = 1
  const double t0 = run.T;
  auto mask = ball_mask(ch, x0, R / 2.0);
  HessianLocalResult out;
  out.h = ch.hmax();
  out.params["B"] = B;
  out.params["K"] = bounds.k_plain;
  out.params["R"] = R;
  out.params["Tcube"] = Tcube;
  const double denom_const = 1.0 / Tcube + (1.0 + R * std::sqrt(bounds.k_plain)) / sqr(R) + B;
  const int ns = int(run.times.size());
  for (int k = 1; k < ns; ++k) {
    const double t = run.times[k];
    if (t < t0 - Tcube / 2.0 || t > t0) continue;  // inner cube in time
    if (t < 10.0 * run.dt) continue;
    const GridTensor& u = run.snaps[k];
    GridTensor hess = covariant_hessian(ch, u);
    for (long p = 0; p < ch.npts(); ++p) {
      if (!mask[p]) continue;
      const double uv = u.v[p];
      if (uv > A * (1.0 + 1e-12))
        throw Error(Error::Kind::domain, "Hessian check requires u ≤ A");
      const double lmax = max_generalized_eigenvalue(&hess.v[p * m * m], ch.g_at(p), m);
      const double denom = denom_const * uv * sqr(1.0 + std::log(A / uv));
      out.c1_star = std::max(out.c1_star, lmax / denom);
    }
  }
  return out;
}

// pure algebra of Eq. (5.7): sharp RHS coefficient ≤ weak RHS coefficient
inline bool hamilton_chain_holds(double K, double t) {
  return hamilton_coefficient(K, t, true) <= hamilton_coefficient(K, t, false) * (1.0 + 1e-12);
}

}  // namespace bel
