#pragma once

#include "bel/chart.hpp"
#include "bel/stencil.hpp"

namespace bel {

// Γ^k_{ij} as a grid tensor (slot 0 upper); values come from the chart's
// analytic ∂g cache, so the symbols are pointwise exact.
inline GridTensor christoffel(const Chart& ch) {
  GridTensor out(ch, 3, 1u);  // bit 0 -> first slot upper
  std::copy(ch.gamma.begin(), ch.gamma.end(), out.v.begin());
  return out;
}

struct CurvatureFields {
  GridTensor rm;      // rank 4 lower, R_{ijkl}
  GridTensor ric;     // rank 2 lower
  GridTensor scalar;  // rank 0
};

// Curvature from one finite-difference level applied to the analytic
// Christoffels: R_{ijk}^p = ∂_iΓ^p_{jk} − ∂_jΓ^p_{ik} + Γ^p_{iq}Γ^q_{jk}
// − Γ^p_{jq}Γ^q_{ik}, lowered with g. The (k,l) antisymmetry and the pair
// symmetry hold for the exact connection only, so they are enforced
// algebraically here (an O(h²) adjustment); Ricci then contracts exactly
// symmetric.
inline CurvatureFields riemann_ricci_scalar(const Chart& ch) {
  const int m = ch.m;
  const int mm = m * m, mmm = m * m * m;
  GridTensor gam = christoffel(ch);
  std::vector<GridTensor> dgam;
  dgam.reserve(m);
  for (int a = 0; a < m; ++a) dgam.push_back(axis_d1(gam, a));

  CurvatureFields out;
  out.rm = GridTensor(ch, 4, 0u);
  out.ric = GridTensor(ch, 2, 0u);
  out.scalar = GridTensor(ch, 0);
  const int m4 = m * mmm;
  std::vector<double> up(m4), low(m4), anti(m4);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* G = ch.gamma_at(p);
    const double* gp = ch.g_at(p);
    const double* gi = ch.ginv_at(p);
    auto idx3 = [m](int k, int i, int j) { return (k * m + i) * m + j; };
    // R_{ijk}^p, stored as up[((i*m+j)*m+k)*m+p]
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int pp = 0; pp < m; ++pp) {
            double s = dgam[i].v[p * mmm + idx3(pp, j, k)] -
                       dgam[j].v[p * mmm + idx3(pp, i, k)];
            for (int q = 0; q < m; ++q)
              s += G[idx3(pp, i, q)] * G[idx3(q, j, k)] -
                   G[idx3(pp, j, q)] * G[idx3(q, i, k)];
            up[((i * m + j) * m + k) * m + pp] = s;
          }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l) {
            double s = 0.0;
            for (int pp = 0; pp < m; ++pp)
              s += up[((i * m + j) * m + k) * m + pp] * gp[pp * m + l];
            low[((i * m + j) * m + k) * m + l] = s;
          }
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l)
            anti[((i * m + j) * m + k) * m + l] =
                0.5 * (low[((i * m + j) * m + k) * m + l] -
                       low[((i * m + j) * m + l) * m + k]);
    double* rmp = &out.rm.v[p * m4];
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l)
            rmp[((i * m + j) * m + k) * m + l] =
                0.5 * (anti[((i * m + j) * m + k) * m + l] +
                       anti[((k * m + l) * m + i) * m + j]);
    double* ricp = &out.ric.v[p * mm];
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        double s = 0.0;
        for (int i = 0; i < m; ++i)
          for (int l = 0; l < m; ++l)
            s += gi[i * m + l] * rmp[((i * m + j) * m + k) * m + l];
        ricp[j * m + k] = s;
      }
    double r = 0.0;
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) r += gi[j * m + k] * ricp[j * m + k];
    out.scalar.v[p] = r;
  }
  return out;
}

inline GridTensor lower_index(const GridTensor& V) {
  const Chart& ch = *V.chart;
  GridTensor out(ch, 1, 0u);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gp = ch.g_at(p);
    for (int i = 0; i < ch.m; ++i) {
      double s = 0.0;
      for (int j = 0; j < ch.m; ++j) s += gp[i * ch.m + j] * V.at(p, j);
      out.at(p, i) = s;
    }
  }
  return out;
}

// (L_V g)_ij = ∇_i V_j + ∇_j V_i of the lowered field; exactly symmetric by
// construction.
inline GridTensor lie_derivative_metric(const Chart& ch, const GridTensor& V) {
  GridTensor vl = lower_index(V);
  std::vector<GridTensor> dv;
  for (int a = 0; a < ch.m; ++a) dv.push_back(axis_d1(vl, a));
  GridTensor out(ch, 2, 0u);
  const int m = ch.m;
  for (long p = 0; p < ch.npts(); ++p) {
    const double* G = ch.gamma_at(p);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) {
        double cov_ij = dv[i].at(p, j);
        double cov_ji = dv[j].at(p, i);
        for (int k = 0; k < m; ++k) {
          cov_ij -= G[(k * m + i) * m + j] * vl.at(p, k);
          cov_ji -= G[(k * m + j) * m + i] * vl.at(p, k);
        }
        out.at(p, i * m + j) = cov_ij + cov_ji;
      }
  }
  return out;
}

// ∇_i V_j − ∇_j V_i over 2: vanishes identically for gradient fields
// (the obstruction 2-form).
inline GridTensor antisymmetric_derivative(const Chart& ch, const GridTensor& V) {
  GridTensor vl = lower_index(V);
  std::vector<GridTensor> dv;
  for (int a = 0; a < ch.m; ++a) dv.push_back(axis_d1(vl, a));
  GridTensor out(ch, 2, 0u);
  const int m = ch.m;
  for (long p = 0; p < ch.npts(); ++p)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        out.at(p, i * m + j) = 0.5 * (dv[i].at(p, j) - dv[j].at(p, i));
  return out;
}

struct BakryEmeryTensors {
  GridTensor ric_v;     // Ric − ½ L_V g
  GridTensor ric_v_nm;  // Ric_V − V⊗V/(n−m)
  GridTensor a_v;       // ½(∇_i V_j − ∇_j V_i)
};

inline BakryEmeryTensors bakry_emery(const Chart& ch, const CurvatureFields& curv,
                                     const Setup& setup) {
  setup.validate(ch);
  BakryEmeryTensors out;
  const int m = ch.m;
  GridTensor lie = lie_derivative_metric(ch, setup.V);
  out.ric_v = GridTensor(ch, 2, 0u);
  for (long p = 0; p < ch.npts(); ++p)
    for (int c = 0; c < m * m; ++c)
      out.ric_v.at(p, c) = curv.ric.at(p, c) - 0.5 * lie.at(p, c);
  out.ric_v_nm = out.ric_v;
  if (!(setup.v_zero && setup.n == double(m))) {
    if (!(setup.n > m)) throw Error(Error::Kind::config, "n = m requires V ≡ 0");
    GridTensor vl = lower_index(setup.V);
    const double inv_nm = 1.0 / (setup.n - m);
    for (long p = 0; p < ch.npts(); ++p)
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j)
          out.ric_v_nm.at(p, i * m + j) -= inv_nm * vl.at(p, i) * vl.at(p, j);
  }
  out.a_v = antisymmetric_derivative(ch, setup.V);
  return out;
}

// Covariant derivative of an arbitrary-rank tensor; the new derivative slot
// is first (lower), existing slots shift up.
inline GridTensor covariant_derivative(const GridTensor& T) {
  const Chart& ch = *T.chart;
  const int m = ch.m;
  const int r = T.rank;
  std::vector<GridTensor> dT;
  for (int a = 0; a < m; ++a) dT.push_back(axis_d1(T, a));
  GridTensor out(ch, r + 1, T.upper << 1);
  std::array<int, 4> pw{1, 1, 1, 1};
  for (int s = r - 1, f = 1; s >= 0; --s, f *= m) pw[s] = f;  // slot -> stride in c
  for (long p = 0; p < ch.npts(); ++p) {
    const double* G = ch.gamma_at(p);
    for (int k = 0; k < m; ++k)
      for (int c = 0; c < T.ncomp; ++c) {
        double s = dT[k].at(p, c);
        for (int slot = 0; slot < r; ++slot) {
          const int is = (c / pw[slot]) % m;
          const int cbase = c - is * pw[slot];
          if (T.slot_upper(slot)) {
            for (int l = 0; l < m; ++l)
              s += G[(is * m + k) * m + l] * T.at(p, cbase + l * pw[slot]);
          } else {
            for (int l = 0; l < m; ++l)
              s -= G[(l * m + k) * m + is] * T.at(p, cbase + l * pw[slot]);
          }
        }
        out.at(p, k * T.ncomp + c) = s;
      }
  }
  return out;
}

// Rough V-Laplacian on tensors: g^{kl} ∇_k∇_l T + V^k ∇_k T.
inline GridTensor tensor_v_laplacian(const GridTensor& T, const Setup& setup) {
  const Chart& ch = *T.chart;
  const int m = ch.m;
  GridTensor grad = covariant_derivative(T);
  GridTensor grad2 = covariant_derivative(grad);
  GridTensor out(ch, T.rank, T.upper);
  out.ncomp = T.ncomp;
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gi = ch.ginv_at(p);
    for (int c = 0; c < T.ncomp; ++c) {
      double s = 0.0;
      for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l)
          s += gi[k * m + l] * grad2.at(p, (k * m + l) * T.ncomp + c);
      if (!setup.v_zero)
        for (int k = 0; k < m; ++k) s += setup.V.at(p, k) * grad.at(p, k * T.ncomp + c);
      out.at(p, c) = s;
    }
  }
  return out;
}

// Pointwise metric norm |T|²_g: every lower slot contracted with g^{-1},
// every upper slot with g.
inline GridTensor tensor_g_norm2(const GridTensor& T) {
  const Chart& ch = *T.chart;
  const int m = ch.m;
  const int r = T.rank;
  GridTensor out(ch, 0);
  std::array<int, 4> pw{1, 1, 1, 1};
  for (int s = r - 1, f = 1; s >= 0; --s, f *= m) pw[s] = f;
  std::vector<double> cur(T.ncomp), nxt(T.ncomp);
  for (long p = 0; p < ch.npts(); ++p) {
    const double* gp = ch.g_at(p);
    const double* gi = ch.ginv_at(p);
    for (int c = 0; c < T.ncomp; ++c) cur[c] = T.at(p, c);
    // raise/lower one slot at a time
    for (int slot = 0; slot < r; ++slot) {
      const double* M = T.slot_upper(slot) ? gp : gi;
      for (int c = 0; c < T.ncomp; ++c) {
        const int is = (c / pw[slot]) % m;
        const int cbase = c - is * pw[slot];
        double s = 0.0;
        for (int l = 0; l < m; ++l) s += M[is * m + l] * cur[cbase + l * pw[slot]];
        nxt[c] = s;
      }
      cur.swap(nxt);
    }
    double s = 0.0;
    for (int c = 0; c < T.ncomp; ++c) s += T.at(p, c) * cur[c];
    out.v[p] = s;
  }
  return out;
}

inline GridTensor tensor_g_norm(const GridTensor& T) {
  GridTensor n2 = tensor_g_norm2(T);
  for (auto& x : n2.v) x = std::sqrt(std::max(0.0, x));
  return n2;
}

struct CurvatureBounds {
  double k_plain = 0;       // max(0, −λ_min(Ric_V^{n,m} vs g))
  double k_scaled = 0;      // k_plain / (n−1)
  double k1 = 0;            // max (|Rm| + |Ric_V|)
  double k2 = 0;            // max |∇Ric_V|
  double sup_v2 = 0;        // max |V|²_g
  double lambda_min_nm = 0; // signed lower curvature bound
  double k_ric_v = 0;       // max(0, −λ_min(Ric_V vs g))
};

inline CurvatureBounds curvature_bounds(const Chart& ch, const CurvatureFields& curv,
                                        const BakryEmeryTensors& be, const Setup& setup) {
  CurvatureBounds out;
  const int m = ch.m;
  double lmin_nm = std::numeric_limits<double>::infinity();
  double lmin_v = std::numeric_limits<double>::infinity();
  for (long p = 0; p < ch.npts(); ++p) {
    lmin_nm = std::min(lmin_nm,
                       min_generalized_eigenvalue(&be.ric_v_nm.v[p * m * m], ch.g_at(p), m));
    lmin_v = std::min(lmin_v,
                      min_generalized_eigenvalue(&be.ric_v.v[p * m * m], ch.g_at(p), m));
  }
  out.lambda_min_nm = lmin_nm;
  out.k_plain = std::max(0.0, -lmin_nm);
  out.k_scaled = out.k_plain / (setup.n - 1.0);
  out.k_ric_v = std::max(0.0, -lmin_v);
  GridTensor nrm = tensor_g_norm(curv.rm);
  GridTensor nric = tensor_g_norm(be.ric_v);
  for (long p = 0; p < ch.npts(); ++p) out.k1 = std::max(out.k1, nrm.v[p] + nric.v[p]);
  GridTensor dric = covariant_derivative(be.ric_v);
  GridTensor ndric = tensor_g_norm(dric);
  out.k2 = ndric.max_abs();
  if (!setup.v_zero) {
    for (long p = 0; p < ch.npts(); ++p) {
      const double* gp = ch.g_at(p);
      double s = 0.0;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) s += gp[i * m + j] * setup.V.at(p, i) * setup.V.at(p, j);
      out.sup_v2 = std::max(out.sup_v2, s);
    }
  }
  return out;
}

// max over the grid of |R_{ijkl} + R_{jkil} + R_{kijl}| (first Bianchi).
inline double first_bianchi_residual(const GridTensor& rm) {
  const int m = rm.chart->m;
  double worst = 0.0;
  for (long p = 0; p < rm.chart->npts(); ++p)
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        for (int k = 0; k < m; ++k)
          for (int l = 0; l < m; ++l) {
            const double s = rm.at(p, ((i * m + j) * m + k) * m + l) +
                             rm.at(p, ((j * m + k) * m + i) * m + l) +
                             rm.at(p, ((k * m + i) * m + j) * m + l);
            worst = std::max(worst, std::fabs(s));
          }
  return worst;
}

}  // namespace bel
