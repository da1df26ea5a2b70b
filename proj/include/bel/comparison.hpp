#pragma once

#include "bel/fields.hpp"
#include "bel/riccati.hpp"

namespace bel {

struct ComparisonResult {
  double k_signed = 0;        // λ_min(Ric^{n,m}_V vs g)/(n−1), the (n−1)K normalization
  double margin_theta = 0;    // min over annulus of θ_K(d) − Δ_V d
  double margin_linear = std::numeric_limits<double>::quiet_NaN();  // (n−1)/d + (n−1)√|K| − Δ_V d, K ≤ 0
  double margin_dd = std::numeric_limits<double>::quiet_NaN();      // n−1 − d·Δ_V d, K ≥ 0
  double drift_identity = 0;  // max |Δ_V d − Δd − ⟨V,∇d⟩| (algebraic, ~rounding)
  double max_abs_gap = 0;     // max over annulus of |θ_K(d) − Δ_V d| (model-space equality)
  long checked_points = 0;
  double slack = 0;
  double worst_d = 0;         // d at the worst θ-margin point
};

// Verifies Δ_V d ≤ θ_K(d) on the annulus {r_lo ≤ d(·,p0) ≤ r_hi}, with the
// Riccati profile normalized so model spaces give equality. K comes from the
// measured lower bound of Ric^{n,m}_V against g.
inline ComparisonResult laplacian_comparison_check(const Chart& ch, const Setup& setup,
                                                   const double* p0, double r_lo, double r_hi,
                                                   double c_slack = 10.0) {
  if (!(0.0 < r_lo && r_lo < r_hi))
    throw Error(Error::Kind::domain, "comparison annulus needs 0 < r_lo < r_hi");
  if (r_hi > ch.injectivity_bound + 1e-12)
    throw Error(Error::Kind::domain, "comparison annulus exceeds the injectivity bound");
  const int m = ch.m;

  GridTensor d(ch, 0);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>&, const double* x) {
    d.v[p] = ch.distance(x, p0);
  });

  // annulus mask; FD stencils must not cross the cone point or the chart edge
  auto edge_ok = interior_mask(ch, 3);
  std::vector<std::uint8_t> mask(ch.npts(), 0);
  const double guard = 3.0 * ch.hmax();
  long count = 0;
  for (long p = 0; p < ch.npts(); ++p) {
    if (d.v[p] < r_lo || d.v[p] > r_hi) continue;
    if (!edge_ok[p])
      throw Error(Error::Kind::domain, "comparison annulus intersects an excluded chart region");
    if (d.v[p] < std::max(r_lo, guard)) continue;
    mask[p] = 1;
    ++count;
  }
  if (count == 0) throw Error(Error::Kind::domain, "comparison annulus contains no grid points");

  auto curv = riemann_ricci_scalar(ch);
  auto be = bakry_emery(ch, curv, setup);
  auto bounds = curvature_bounds(ch, curv, be, setup);
  ComparisonResult out;
  out.k_signed = bounds.lambda_min_nm / (setup.n - 1.0);
  out.slack = slack(ch, c_slack);
  out.checked_points = count;

  ThetaProfile prof = riccati_theta(setup.n, KSpec::of(out.k_signed), r_hi * 1.05 + 1e-3, 1e-3);
  if (prof.exploded() && prof.delta_k <= r_hi)
    throw Error(Error::Kind::domain, "comparison annulus reaches past the profile explosion radius");

  GridTensor lap_d = v_laplacian(ch, setup, d);
  // exact algebraic route split, for the perturbation identity
  GridTensor lap0_d = laplace_beltrami(ch, d);
  GridTensor dd = differential(ch, d);

  double worst = std::numeric_limits<double>::infinity();
  double worst_lin = std::numeric_limits<double>::infinity();
  double worst_dd = std::numeric_limits<double>::infinity();
  for (long p = 0; p < ch.npts(); ++p) {
    if (!mask[p]) continue;
    const double dv = d.v[p];
    const double bound = prof.theta_at(dv);
    const double margin = bound - lap_d.v[p];
    if (margin < worst) { worst = margin; out.worst_d = dv; }
    out.max_abs_gap = std::max(out.max_abs_gap, std::fabs(margin));
    if (out.k_signed <= 0.0) {
      const double lin = (setup.n - 1.0) / dv +
                         (setup.n - 1.0) * std::sqrt(-out.k_signed) - lap_d.v[p];
      worst_lin = std::min(worst_lin, lin);
    }
    if (out.k_signed >= 0.0)
      worst_dd = std::min(worst_dd, (setup.n - 1.0) - dv * lap_d.v[p]);
    double drift = lap_d.v[p] - lap0_d.v[p];
    if (!setup.v_zero)
      for (int a = 0; a < m; ++a) drift -= setup.V.at(p, a) * dd.at(p, a);
    out.drift_identity = std::max(out.drift_identity, std::fabs(drift));
  }
  out.margin_theta = worst;
  if (out.k_signed <= 0.0) out.margin_linear = worst_lin;
  if (out.k_signed >= 0.0) out.margin_dd = worst_dd;
  return out;
}

}  // namespace bel
