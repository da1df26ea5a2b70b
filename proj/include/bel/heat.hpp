#pragma once

#include "bel/fields.hpp"

namespace bel {

// explicit-scheme stability bound dt ≤ factor · h_min² / (m · max g^{ii})
inline double cfl_bound(const Chart& ch, double factor = 0.4) {
  double max_gii = 0.0;
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    for (int a = 0; a < ch.m; ++a) max_gii = std::max(max_gii, gi[a * ch.m + a]);
  }
  return factor * sqr(ch.hmin()) / (ch.m * max_gii);
}

// Fused explicit Δ_V application on a diagonal-metric chart: conservative
// face fluxes for the divergence part (weight e^f when V = ∇f, so the
// weighted mass telescopes exactly on periodic grids), centered drift for
// non-gradient V, ghost reflection at Neumann edges, Dirichlet nodes pinned.
class HeatOperator {
 public:
  HeatOperator(const Chart& ch, const Setup& setup) : ch_(&ch), m_(ch.m) {
    setup.validate(ch);
    for (long p = 0; p < ch.npts(); ++p) {
      const double* g = ch.g_at(p);
      for (int i = 0; i < m_; ++i)
        for (int j = 0; j < m_; ++j)
          if (i != j && std::fabs(g[i * m_ + j]) > 1e-14)
            throw Error(Error::Kind::domain, "heat stepper requires a diagonal chart metric");
    }
    const long np = ch.npts();
    w_.assign(np, 1.0);
    if (setup.gradient_flag)
      for (long p = 0; p < np; ++p) w_[p] = std::exp(setup.f.v[p]);
    inv_meas_.resize(np);
    for (long p = 0; p < np; ++p) inv_meas_[p] = 1.0 / (w_[p] * ch.sqrtg[p]);
    std::vector<double> c(np * m_);
    for (long p = 0; p < np; ++p)
      for (int a = 0; a < m_; ++a)
        c[p * m_ + a] = w_[p] * ch.sqrtg[p] * ch.ginv_at(p)[a * m_ + a];
    for (int a = 0; a < m_; ++a) {
      cf_[a].assign(np, 0.0);
      const auto ax = detail::axis_view(ch, a);
      for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
        long pn;
        if (ix[a] + 1 < ax.n) pn = p + ax.stride;
        else if (ax.periodic) pn = p + (1 - ax.n) * ax.stride;
        else { cf_[a][p] = 0.0; return; }
        cf_[a][p] = 0.5 * (c[p * m_ + a] + c[pn * m_ + a]);
      });
    }
    drift_ = (!setup.v_zero && !setup.gradient_flag);
    if (drift_) vup_ = setup.V.v;
    pinned_.assign(np, 0);
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      for (int a = 0; a < m_; ++a)
        if (ch.axes[a].bc == Bc::dirichlet && (ix[a] == 0 || ix[a] == ch.grid.n[a] - 1))
          pinned_[p] = 1;
    });
  }

  bool pinned(long p) const { return pinned_[p] != 0; }

  // out = Δ_V u
  void apply(const std::vector<double>& u, std::vector<double>& out) const {
    const Chart& ch = *ch_;
    out.assign(u.size(), 0.0);
    std::array<double, kMaxDim> ih2, i2h;
    for (int a = 0; a < m_; ++a) {
      ih2[a] = 1.0 / sqr(ch.axes[a].h);
      i2h[a] = 1.0 / (2.0 * ch.axes[a].h);
    }
    const auto& n = ch.grid.n;
    const auto& st = ch.grid.stride;
    std::array<int, kMaxDim> ix{0, 0, 0};
    for (long p = 0; p < ch.npts(); ++p) {
      if (!pinned_[p]) {
        double acc = 0.0;
        for (int a = 0; a < m_; ++a) {
          const int k = ix[a];
          const bool per = ch.axes[a].periodic();
          double flux_hi, flux_lo;
          if (per) {
            const long pn = p + (k + 1 == n[a] ? (1 - n[a]) : 1) * st[a];
            const long pm = p + (k == 0 ? (n[a] - 1) : -1) * st[a];
            const long pface_lo = pm;
            flux_hi = cf_[a][p] * (u[pn] - u[p]);
            flux_lo = cf_[a][pface_lo] * (u[p] - u[pm]);
          } else if (k == 0) {  // ghost reflection (neumann) or unused (dirichlet pinned)
            const long pn = p + st[a];
            flux_hi = cf_[a][p] * (u[pn] - u[p]);
            flux_lo = -flux_hi;
          } else if (k == n[a] - 1) {
            const long pm = p - st[a];
            flux_lo = cf_[a][pm] * (u[p] - u[pm]);
            flux_hi = -flux_lo;
          } else {
            const long pn = p + st[a], pm = p - st[a];
            flux_hi = cf_[a][p] * (u[pn] - u[p]);
            flux_lo = cf_[a][pm] * (u[p] - u[pm]);
          }
          acc += (flux_hi - flux_lo) * ih2[a];
        }
        acc *= inv_meas_[p];
        if (drift_) {
          for (int a = 0; a < m_; ++a) {
            const int k = ix[a];
            const bool per = ch.axes[a].periodic();
            double du;
            if (per) {
              const long pn = p + (k + 1 == n[a] ? (1 - n[a]) : 1) * st[a];
              const long pm = p + (k == 0 ? (n[a] - 1) : -1) * st[a];
              du = (u[pn] - u[pm]) * i2h[a];
            } else if (k == 0 || k == n[a] - 1) {
              du = 0.0;  // mirrored neighbor
            } else {
              du = (u[p + st[a]] - u[p - st[a]]) * i2h[a];
            }
            acc += vup_[p * m_ + a] * du;
          }
        }
        out[p] = acc;
      }
      for (int a = m_ - 1; a >= 0; --a) {
        if (++ix[a] < n[a]) break;
        ix[a] = 0;
      }
    }
  }

  // weighted mass Σ w √g u (periodic quadrature)
  double weighted_mass(const std::vector<double>& u) const {
    const Chart& ch = *ch_;
    double cell = 1.0;
    for (int a = 0; a < m_; ++a) cell *= ch.axes[a].h;
    double s = 0.0;
    for (long p = 0; p < ch.npts(); ++p) s += w_[p] * ch.sqrtg[p] * u[p];
    return s * cell;
  }

 private:
  const Chart* ch_;
  int m_;
  std::vector<double> w_, inv_meas_;
  std::array<std::vector<double>, kMaxDim> cf_;
  bool drift_ = false;
  std::vector<double> vup_;
  std::vector<std::uint8_t> pinned_;
};

struct HeatParams {
  double T = 1.0;
  double dt = 0.0;        // 0: largest stable step that divides T evenly
  Expr q = Expr(0.0);     // potential q(x[,t])
  double a = 0.0;         // u ln u coefficient
  int snapshots = 65;     // retained snapshot count (including both ends)
  double cfl_factor = 0.4;
  int require_positive = -1;  // -1: auto (u0 > 0 everywhere), 0/1 explicit
};

struct StepDiag {
  double min_u, max_u;
};

struct HeatRun {
  const Chart* chart = nullptr;
  double dt = 0, T = 0, cfl = 0, a = 0;
  bool q_zero = true;
  std::vector<double> times;
  std::vector<GridTensor> snaps;
  std::vector<StepDiag> diag;  // per time step
  double sup_u = 0;
  double weighted_mass_drift = 0;  // relative per unit time, periodic + gradient runs

  double snap_dt() const { return times.size() > 1 ? times[1] - times[0] : 0.0; }
};

// Advances u_t = Δ_V u − q u − a u ln u with midpoint RK2 under the explicit
// CFL bound; aborts on positivity loss instead of clamping.
inline HeatRun run_weighted_heat(const Chart& ch, const Setup& setup, const GridTensor& u0,
                                 const HeatParams& params) {
  HeatOperator op(ch, setup);
  HeatRun run;
  run.chart = &ch;
  run.T = params.T;
  run.a = params.a;
  run.cfl = cfl_bound(ch, params.cfl_factor);
  const bool q_time = params.q.depends_on("t");
  run.q_zero = params.q.is_constant_zero();

  long nsteps;
  if (params.dt > 0.0) {
    if (params.dt > run.cfl * (1.0 + 1e-12))
      throw Error(Error::Kind::cfl, "dt exceeds the explicit stability bound");
    nsteps = long(std::ceil(params.T / params.dt - 1e-12));
  } else {
    nsteps = long(std::ceil(params.T / run.cfl - 1e-12));
  }
  const int groups = std::max(1, params.snapshots - 1);
  const long per = (nsteps + groups - 1) / groups;
  nsteps = per * groups;
  const double dt = params.T / double(nsteps);
  run.dt = dt;

  std::vector<double> u = u0.v;
  bool positive = true;
  for (double x : u)
    if (!(x > 0.0)) { positive = false; break; }
  const bool need_positive =
      params.require_positive == 1 || (params.require_positive == -1 && (positive || params.a != 0.0));
  if (params.a != 0.0 && !positive)
    throw Error(Error::Kind::positivity, "u ln u forcing requires u0 > 0 everywhere");

  GridTensor qs = q_time ? GridTensor(ch, 0) : sample_expr(ch, params.q, 0.0);
  auto rhs = [&](const std::vector<double>& uu, double t, std::vector<double>& out) {
    op.apply(uu, out);
    if (q_time) qs = sample_expr(ch, params.q, t);
    const bool has_q = !run.q_zero;
    if (has_q || params.a != 0.0) {
      for (long p = 0; p < ch.npts(); ++p) {
        if (op.pinned(p)) continue;
        double s = out[p];
        if (has_q) s -= qs.v[p] * uu[p];
        if (params.a != 0.0) s -= params.a * uu[p] * std::log(uu[p]);
        out[p] = s;
      }
    }
  };

  auto retain = [&](double t) {
    GridTensor s(ch, 0);
    s.v = u;
    run.times.push_back(t);
    run.snaps.push_back(std::move(s));
  };
  const bool track_mass = (setup.v_zero || setup.gradient_flag) && ch.all_periodic() &&
                          run.q_zero && params.a == 0.0;
  const double mass0 = track_mass ? op.weighted_mass(u) : 0.0;

  retain(0.0);
  run.diag.reserve(nsteps);
  std::vector<double> k1(u.size()), um(u.size()), k2(u.size());
  for (long step = 0; step < nsteps; ++step) {
    const double t = step * dt;
    rhs(u, t, k1);
    for (std::size_t i = 0; i < u.size(); ++i) um[i] = u[i] + 0.5 * dt * k1[i];
    if (params.a != 0.0) {
      for (double x : um)
        if (!(x > 0.0))
          throw Error(Error::Kind::positivity,
                      "positivity lost at step " + std::to_string(step));
    }
    rhs(um, t + 0.5 * dt, k2);
    double mn = std::numeric_limits<double>::infinity(), mx = -mn;
    for (std::size_t i = 0; i < u.size(); ++i) {
      u[i] += dt * k2[i];
      mn = std::min(mn, u[i]);
      mx = std::max(mx, u[i]);
    }
    if (need_positive && !(mn > 0.0))
      throw Error(Error::Kind::positivity, "positivity lost at step " + std::to_string(step + 1));
    run.diag.push_back({mn, mx});
    if ((step + 1) % per == 0) retain((step + 1) * dt);
  }
  for (auto& s : run.snaps)
    for (double x : s.v) run.sup_u = std::max(run.sup_u, x);
  if (track_mass && params.T > 0.0 && mass0 != 0.0)
    run.weighted_mass_drift = std::fabs(op.weighted_mass(u) - mass0) / (std::fabs(mass0) * params.T);
  return run;
}

struct EllipticOpts {
  double tol_ell = 1e-8;   // relative to max(1, max |u|)
  long max_steps = 1000000;
  int check_every = 50;
  double cfl_factor = 0.4;
};

struct EllipticResult {
  GridTensor u;
  double residual = 0;
  long steps = 0;
  double fprime_min = 0, fprime_max = 0;  // semilinear only
};

// Heat-flow relaxation of Δ_V u = 0. Dirichlet data (when the chart has
// dirichlet axes) comes pinned inside u0; closed charts relax toward the
// weighted mean of u0.
inline EllipticResult solve_v_harmonic(const Chart& ch, const Setup& setup,
                                       const GridTensor& u0,
                                       const EllipticOpts& opts = {}) {
  HeatOperator op(ch, setup);
  const double dt = cfl_bound(ch, opts.cfl_factor);
  std::vector<double> u = u0.v, lu(u.size());
  EllipticResult out;
  for (long step = 0;; ++step) {
    op.apply(u, lu);
    if (step % opts.check_every == 0 || step >= opts.max_steps) {
      double res = 0.0, scale = 1.0;
      for (std::size_t i = 0; i < u.size(); ++i) {
        res = std::max(res, std::fabs(lu[i]));
        scale = std::max(scale, std::fabs(u[i]));
      }
      out.residual = res;
      out.steps = step;
      if (res <= opts.tol_ell * scale) break;
      if (step >= opts.max_steps)
        throw Error(Error::Kind::convergence,
                    "harmonic relaxation missed tolerance after " + std::to_string(step) + " steps");
    }
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt * lu[i];
  }
  out.u = GridTensor(ch, 0);
  out.u.v = std::move(u);
  return out;
}

// Damped fixed-point relaxation of Δ_V u = F(u); F is an expression in `u`.
inline EllipticResult solve_semilinear(const Chart& ch, const Setup& setup, const Expr& F,
                                       const GridTensor& u0, const EllipticOpts& opts = {}) {
  HeatOperator op(ch, setup);
  const double dt = cfl_bound(ch, opts.cfl_factor);
  std::vector<double> u = u0.v, lu(u.size());
  ExprEnv env;
  env.set("u", 0.0);
  auto fval = [&](double uu) {
    env.set("u", uu);
    return F.eval(env);
  };
  double best = std::numeric_limits<double>::infinity();
  long best_step = 0;
  EllipticResult out;
  for (long step = 0;; ++step) {
    op.apply(u, lu);
    double res = 0.0, scale = 1.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
      if (!op.pinned(long(i))) lu[i] -= fval(u[i]);
      else lu[i] = 0.0;
      res = std::max(res, std::fabs(lu[i]));
      scale = std::max(scale, std::fabs(u[i]));
    }
    if (res < best) { best = res; best_step = step; }
    out.residual = res;
    out.steps = step;
    if (res <= opts.tol_ell * scale) break;
    if (step >= opts.max_steps)
      throw Error(Error::Kind::convergence, "semilinear relaxation missed tolerance");
    if (step - best_step > 10000 && res > 10.0 * best)
      throw Error(Error::Kind::convergence, "semilinear relaxation diverged");
    for (std::size_t i = 0; i < u.size(); ++i) u[i] += dt * lu[i];
  }
  Expr Fp = F.derivative("u");
  out.fprime_min = std::numeric_limits<double>::infinity();
  out.fprime_max = -out.fprime_min;
  for (double uu : u) {
    env.set("u", uu);
    const double d = Fp.eval(env);
    out.fprime_min = std::min(out.fprime_min, d);
    out.fprime_max = std::max(out.fprime_max, d);
  }
  out.u = GridTensor(ch, 0);
  out.u.v = std::move(u);
  return out;
}

}  // namespace bel
