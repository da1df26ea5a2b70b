#pragma once

#include "bel/fields.hpp"

namespace bel {

// I(X) = ∫ |L_X g|²_g dV by the grid quadrature
inline double killing_energy(const Chart& ch, const GridTensor& X) {
  GridTensor lie = lie_derivative_metric(ch, X);
  GridTensor n2 = tensor_g_norm2(lie);
  return integrate(ch, n2);
}

struct KillingParams {
  double T = 1.0;
  double dt = 0.0;           // 0: stability bound
  double cfl_factor = 0.2;   // the ∇div term doubles the symbol vs scalar heat
  int snapshots = 17;
};

struct FlowTrace {
  const Chart* chart = nullptr;
  double dt = 0, T = 0;
  std::vector<double> times;
  std::vector<GridTensor> snaps;  // X snapshots, rank 1 upper
  std::vector<double> energy;     // I(X) at every step, size nsteps+1
  // max over steps of I_{k+1} − I_k − 1e-10(1+I_k); ≤ 0 means dissipation held
  double max_energy_increase = -std::numeric_limits<double>::infinity();
};

namespace detail {

// Explicit stepper for ∂_t X = ΔX + ∇div X + Ric(X) (rough Laplacian).
// Works on component arrays; mirrors at non-periodic edges, pins Dirichlet
// boundary nodes.
class KillingOperator {
 public:
  KillingOperator(const Chart& ch) : ch_(&ch), m_(ch.m) {
    const long np = ch.npts();
    auto curv = riemann_ricci_scalar(ch);
    ric_mixed_.assign(np * m_ * m_, 0.0);
    for (long p = 0; p < np; ++p) {
      const double* gi = ch.ginv_at(p);
      for (int i = 0; i < m_; ++i)
        for (int j = 0; j < m_; ++j) {
          double s = 0.0;
          for (int a = 0; a < m_; ++a) s += gi[i * m_ + a] * curv.ric.at(p, a * m_ + j);
          ric_mixed_[p * m_ * m_ + i * m_ + j] = s;
        }
    }
    pinned_.assign(np, 0);
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      for (int a = 0; a < m_; ++a)
        if (ch.axes[a].bc == Bc::dirichlet && (ix[a] == 0 || ix[a] == ch.grid.n[a] - 1))
          pinned_[p] = 1;
    });
    flat_ = ch.catalog == "flat_torus" && ch.all_periodic();
    quad_w_.assign(np, 0.0);
    double cell = 1.0;
    for (int a = 0; a < m_; ++a) cell *= ch.axes[a].h;
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      double w = 1.0;
      for (int a = 0; a < m_; ++a)
        if (!ch.axes[a].periodic() && (ix[a] == 0 || ix[a] == ch.grid.n[a] - 1)) w *= 0.5;
      quad_w_[p] = w * ch.sqrtg[p] * cell;
    });
  }

  bool pinned(long p) const { return pinned_[p] != 0; }

  // out = ΔX + ∇divX + Ric(X); optionally accumulates the Killing energy of X
  void apply(const std::vector<double>& X, std::vector<double>& out, double* energy) const {
    if (flat_) {
      apply_flat(X, out, energy);
      return;
    }
    const Chart& ch = *ch_;
    const int m = m_;
    const long np = ch.npts();
    out.assign(np * m, 0.0);
    T_.assign(np * m * m, 0.0);
    div_.assign(np, 0.0);
    // pass 1: T^i_j = ∂_j X^i + Γ^i_{jl} X^l, divergence, energy
    double en = 0.0;
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      const double* G = ch.gamma_at(p);
      double* Tp = &T_[p * m * m];
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) {
          double d = dcomp(X, m, i, p, ix, j);
          for (int l = 0; l < m; ++l) d += G[(i * m + j) * m + l] * X[p * m + l];
          Tp[i * m + j] = d;
        }
      double dv = 0.0;
      for (int i = 0; i < m; ++i) dv += Tp[i * m + i];
      div_[p] = dv;
      if (energy) {
        const double* g = ch.g_at(p);
        const double* gi = ch.ginv_at(p);
        double lie[9];
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) {
            double s = 0.0;
            for (int k = 0; k < m; ++k) s += g[j * m + k] * Tp[k * m + i] + g[i * m + k] * Tp[k * m + j];
            lie[i * m + j] = s;
          }
        double n2 = 0.0;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j)
            for (int a = 0; a < m; ++a)
              for (int b = 0; b < m; ++b)
                n2 += gi[i * m + a] * gi[j * m + b] * lie[i * m + j] * lie[a * m + b];
        en += quad_w_[p] * n2;
      }
    });
    if (energy) *energy = en;
    // pass 2: rough Laplacian, ∇div, Ricci action
    for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
      if (pinned_[p]) return;
      const double* G = ch.gamma_at(p);
      const double* gi = ch.ginv_at(p);
      for (int i = 0; i < m; ++i) {
        double acc = 0.0;
        for (int j = 0; j < m; ++j)
          for (int k = 0; k < m; ++k) {
            if (gi[j * m + k] == 0.0) continue;
            double dT = dcomp(T_, m * m, i * m + j, p, ix, k);
            for (int l = 0; l < m; ++l)
              dT += G[(i * m + k) * m + l] * T_[p * m * m + l * m + j] -
                    G[(l * m + k) * m + j] * T_[p * m * m + i * m + l];
            acc += gi[j * m + k] * dT;
          }
        for (int j = 0; j < m; ++j) acc += gi[i * m + j] * dscalar(div_, p, ix, j);
        for (int j = 0; j < m; ++j) acc += ric_mixed_[p * m * m + i * m + j] * X[p * m + j];
        out[p * m + i] = acc;
      }
    });
  }

  double energy_of(const std::vector<double>& X) const {
    std::vector<double> tmp;
    double en = 0.0;
    apply(X, tmp, &en);
    return en;
  }

  // flat periodic specialization (Γ = 0, g = δ): fused second differences
  // and corner stencils, one sweep per stage
  void apply_flat(const std::vector<double>& X, std::vector<double>& out,
                  double* energy) const {
    const Chart& ch = *ch_;
    const int m = m_;
    const long np = ch.npts();
    out.assign(np * m, 0.0);
    double cell = 1.0;
    std::array<double, kMaxDim> ih2, i2h;
    for (int a = 0; a < m; ++a) {
      ih2[a] = 1.0 / sqr(ch.axes[a].h);
      i2h[a] = 1.0 / (2.0 * ch.axes[a].h);
      cell *= ch.axes[a].h;
    }
    const auto& n = ch.grid.n;
    const auto& st = ch.grid.stride;
    double en = 0.0;
    std::array<int, kMaxDim> ix{0, 0, 0};
    for (long p = 0; p < np; ++p) {
      long up[kMaxDim], dn[kMaxDim];
      for (int a = 0; a < m; ++a) {
        up[a] = p + (ix[a] + 1 == n[a] ? (1 - n[a]) : 1) * st[a];
        dn[a] = p + (ix[a] == 0 ? (n[a] - 1) : -1) * st[a];
      }
      double d1[kMaxDim][kMaxDim];  // d1[a][i] = ∂_a X^i
      double lap[kMaxDim];
      for (int i = 0; i < m; ++i) {
        double l = 0.0;
        for (int a = 0; a < m; ++a) {
          d1[a][i] = (X[up[a] * m + i] - X[dn[a] * m + i]) * i2h[a];
          l += (X[up[a] * m + i] - 2.0 * X[p * m + i] + X[dn[a] * m + i]) * ih2[a];
        }
        lap[i] = l;
      }
      for (int i = 0; i < m; ++i) {
        // ∂_i div X: reuse the compact second difference for the j = i term
        double gd = (X[up[i] * m + i] - 2.0 * X[p * m + i] + X[dn[i] * m + i]) * ih2[i];
        for (int j = 0; j < m; ++j) {
          if (j == i) continue;
          // corner stencil for ∂_i ∂_j X^j
          const int ki = ix[i], kj = ix[j];
          const long si = (ki + 1 == n[i] ? (1 - n[i]) : 1) * st[i];
          const long si_m = (ki == 0 ? (n[i] - 1) : -1) * st[i];
          const long sj = (kj + 1 == n[j] ? (1 - n[j]) : 1) * st[j];
          const long sj_m = (kj == 0 ? (n[j] - 1) : -1) * st[j];
          gd += (X[(p + si + sj) * m + j] - X[(p + si + sj_m) * m + j] -
                 X[(p + si_m + sj) * m + j] + X[(p + si_m + sj_m) * m + j]) *
                i2h[i] * i2h[j];
        }
        out[p * m + i] = lap[i] + gd;
      }
      if (energy) {
        double n2 = 0.0;
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < m; ++j) n2 += sqr(d1[i][j] + d1[j][i]);
        en += n2;
      }
      for (int a = m - 1; a >= 0; --a) {
        if (++ix[a] < n[a]) break;
        ix[a] = 0;
      }
    }
    if (energy) *energy = en * cell;
  }

 private:
  const Chart* ch_;
  int m_;
  bool flat_ = false;
  std::vector<double> ric_mixed_, quad_w_;
  std::vector<std::uint8_t> pinned_;
  mutable std::vector<double> T_, div_;

  // centered derivative of component c of an interleaved field along axis a,
  // periodic wrap / mirrored ghost at non-periodic edges
  double dcomp(const std::vector<double>& f, int nc, int c, long p,
               const std::array<int, kMaxDim>& ix, int a) const {
    const Chart& ch = *ch_;
    const long st = ch.grid.stride[a];
    const int n = ch.grid.n[a];
    const int k = ix[a];
    const double i2h = 1.0 / (2.0 * ch.axes[a].h);
    long pp, pm;
    if (ch.axes[a].periodic()) {
      pp = p + (k + 1 == n ? (1 - n) : 1) * st;
      pm = p + (k == 0 ? (n - 1) : -1) * st;
    } else if (k == 0) {
      return 0.0;  // mirrored neighbors coincide
    } else if (k == n - 1) {
      return 0.0;
    } else {
      pp = p + st;
      pm = p - st;
    }
    return (f[pp * nc + c] - f[pm * nc + c]) * i2h;
  }
  double dscalar(const std::vector<double>& f, long p, const std::array<int, kMaxDim>& ix,
                 int a) const {
    return dcomp(f, 1, 0, p, ix, a);
  }
};

}  // namespace detail

// Evolves the vector-field flow with midpoint RK2, recording the Killing
// energy at every step; the energy sequence is expected non-increasing up to
// 1e-10 (1 + I).
inline FlowTrace run_killing_flow(const Chart& ch, const GridTensor& X0,
                                  const KillingParams& params) {
  detail::KillingOperator op(ch);
  FlowTrace out;
  out.chart = &ch;
  out.T = params.T;
  const double bound = cfl_bound(ch, params.cfl_factor);
  long nsteps;
  if (params.dt > 0.0) {
    if (params.dt > bound * (1.0 + 1e-12))
      throw Error(Error::Kind::cfl, "dt exceeds the vector-heat stability bound");
    nsteps = long(std::ceil(params.T / params.dt - 1e-12));
  } else {
    nsteps = long(std::ceil(params.T / bound - 1e-12));
  }
  const int groups = std::max(1, params.snapshots - 1);
  const long per = (nsteps + groups - 1) / groups;
  nsteps = per * groups;
  const double dt = params.T / double(nsteps);
  out.dt = dt;

  std::vector<double> X = X0.v, k1, k2, Xm(X.size());
  auto retain = [&](double t) {
    GridTensor s(ch, 1, 1u);
    s.v = X;
    out.times.push_back(t);
    out.snaps.push_back(std::move(s));
  };
  retain(0.0);
  out.energy.reserve(nsteps + 1);
  for (long step = 0; step < nsteps; ++step) {
    double en = 0.0;
    op.apply(X, k1, &en);
    out.energy.push_back(en);
    if (!out.energy.empty() && step > 0) {
      const double prev = out.energy[step - 1];
      out.max_energy_increase =
          std::max(out.max_energy_increase, en - prev - 1e-10 * (1.0 + prev));
    }
    for (std::size_t i = 0; i < X.size(); ++i) Xm[i] = X[i] + 0.5 * dt * k1[i];
    op.apply(Xm, k2, nullptr);
    for (std::size_t i = 0; i < X.size(); ++i) {
      X[i] += dt * k2[i];
      if (!std::isfinite(X[i]))
        throw Error(Error::Kind::convergence, "killing flow produced NaN at step " +
                                                  std::to_string(step));
    }
    if ((step + 1) % per == 0) retain((step + 1) * dt);
  }
  out.energy.push_back(op.energy_of(X));
  {
    const double prev = out.energy[out.energy.size() - 2];
    const double en = out.energy.back();
    out.max_energy_increase =
        std::max(out.max_energy_increase, en - prev - 1e-10 * (1.0 + prev));
  }
  return out;
}

enum class KillingCriterion { eq1_7, eq1_9, eq1_10, eq1_11 };

inline KillingCriterion killing_criterion_from_string(const std::string& s) {
  if (s == "eq1_7") return KillingCriterion::eq1_7;
  if (s == "eq1_9") return KillingCriterion::eq1_9;
  if (s == "eq1_10") return KillingCriterion::eq1_10;
  if (s == "eq1_11") return KillingCriterion::eq1_11;
  throw Error(Error::Kind::config, "unknown killing criterion '" + s + "'");
}

// Residual field of the selected Killing criterion; sup-norm in the metric
// norm returned through sup_out.
inline GridTensor killing_criteria_residual(const Chart& ch, const GridTensor& X,
                                            KillingCriterion which, const GridTensor* f,
                                            double* sup_out = nullptr) {
  const int m = ch.m;
  auto curv = riemann_ricci_scalar(ch);
  Setup zero = make_setup_zero(ch);
  GridTensor lapX = tensor_v_laplacian(X, zero);
  GridTensor gradX = covariant_derivative(X);  // (k, i) -> ∇_k X^i
  GridTensor div(ch, 0);
  for (long p = 0; p < ch.npts(); ++p) {
    double s = 0.0;
    for (int k = 0; k < m; ++k) s += gradX.at(p, k * m + k);
    div.v[p] = s;
  }
  GridTensor graddiv = gradient(ch, div);
  GridTensor lie = lie_derivative_metric(ch, X);
  GridTensor df = (which == KillingCriterion::eq1_10)
                      ? differential(ch, *f)
                      : (which == KillingCriterion::eq1_11 ? differential(ch, div)
                                                           : GridTensor(ch, 1, 0u));
  if (which == KillingCriterion::eq1_10 && !f)
    throw Error(Error::Kind::config, "criterion eq1_10 needs the function f");

  GridTensor res(ch, 1, 1u);
  double sup = 0.0;
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    const double* g = ch.g_at(p);
    for (int i = 0; i < m; ++i) {
      double s = lapX.at(p, i) + graddiv.at(p, i);
      if (which == KillingCriterion::eq1_9) {
        // Ric_{−2X} = Ric + L_X g, applied to X, plus ½ div(X) X
        for (int a = 0; a < m; ++a)
          for (int j = 0; j < m; ++j)
            s += gi[i * m + a] * (curv.ric.at(p, a * m + j) + lie.at(p, a * m + j)) *
                 X.at(p, j);
        s += 0.5 * div.v[p] * X.at(p, i);
      } else {
        for (int a = 0; a < m; ++a)
          for (int j = 0; j < m; ++j)
            s += gi[i * m + a] * curv.ric.at(p, a * m + j) * X.at(p, j);
        if (which == KillingCriterion::eq1_10 || which == KillingCriterion::eq1_11) {
          // + ∇_j φ (L_X g)^{ij}, φ = f or div X
          for (int j = 0; j < m; ++j) {
            double lie_up = 0.0;
            for (int a = 0; a < m; ++a)
              for (int b = 0; b < m; ++b)
                lie_up += gi[i * m + a] * gi[j * m + b] * lie.at(p, a * m + b);
            s += df.at(p, j) * lie_up;
          }
        }
      }
      res.at(p, i) = s;
    }
    double n2 = 0.0;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) n2 += g[i * m + j] * res.at(p, i) * res.at(p, j);
    sup = std::max(sup, std::sqrt(std::max(0.0, n2)));
  }
  if (sup_out) *sup_out = sup;
  return res;
}

}  // namespace bel
