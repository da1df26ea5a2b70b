#pragma once

#include <optional>
#include <ostream>

#include "bel/core.hpp"
#include "bel/expr.hpp"

namespace bel {

// Curvature profile K(r): a constant or an expression in r.
struct KSpec {
  bool constant = true;
  double k0 = 0.0;
  Expr expr;
  std::string desc = "0";

  static KSpec of(double k) {
    KSpec s;
    s.constant = true;
    s.k0 = k;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", k);
    s.desc = buf;
    return s;
  }
  static KSpec of(const Expr& e) {
    KSpec s;
    s.constant = false;
    s.expr = e;
    s.desc = e.str();
    return s;
  }
  double operator()(double r) const {
    if (constant) return k0;
    ExprEnv env;
    env.set("r", r);
    return expr.eval(env);
  }
};

// Sampled comparison profile θ_K with the dimensional factor included:
// θ = (n−1)ψ where ψ solves the unit Riccati equation ψ' = −K(r) − ψ²,
// rψ → 1 at 0. For constant K this reproduces the model-space bounds
// (n−1)√K cot(√K r) / (n−1)/r / (n−1)√|K| coth(√|K| r).
struct ThetaProfile {
  double n = 2.0;
  std::string k_desc;
  double dr = 0.0;
  std::vector<double> r, theta;
  double delta_k = std::numeric_limits<double>::infinity();  // explosion radius

  bool exploded() const { return std::isfinite(delta_k); }

  // linear interpolation; the leading asymptote below the first sample
  double theta_at(double rr) const {
    if (!(rr > 0.0)) throw Error(Error::Kind::domain, "theta profile needs r > 0");
    if (rr >= delta_k)
      throw Error(Error::Kind::domain, "theta profile queried beyond its explosion radius");
    if (r.empty() || rr <= r.front()) return (n - 1.0) / rr;
    if (rr >= r.back())
      throw Error(Error::Kind::domain, "theta profile queried beyond its sampled range");
    const auto it = std::lower_bound(r.begin(), r.end(), rr);
    const std::size_t i = std::size_t(it - r.begin());
    const double w = (rr - r[i - 1]) / (r[i] - r[i - 1]);
    return (1.0 - w) * theta[i - 1] + w * theta[i];
  }

  void write_columns(std::ostream& os) const {
    char buf[80];
    for (std::size_t i = 0; i < r.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%.17g %.17g\n", r[i], theta[i]);
      os << buf;
    }
  }
};

namespace detail {

struct RiccatiRun {
  std::vector<double> psi;  // at outer samples r0 + k*dr while alive
  double delta = std::numeric_limits<double>::infinity();
};

// Integrates the unit profile from ψ(r0) = 1/r0 with RK4; substeps near the
// 1/r start keep the relative step bounded. Explosion is declared when
// (n−1)|ψ| exceeds 1/dr and refined by the blow-up asymptote ψ ≈ −1/(δ−r).
inline RiccatiRun integrate_unit_riccati(const KSpec& K, double n, double r0, double dr,
                                         double r_max, const std::vector<double>& samples) {
  RiccatiRun out;
  auto f = [&](double r, double psi) { return -K(r) - psi * psi; };
  double r = r0, psi = 1.0 / r0;
  const double blow = 1.0 / dr / std::max(1.0, n - 1.0);
  std::size_t si = 0;
  while (si < samples.size() && samples[si] < r0 - 1e-15) ++si;
  if (si < samples.size() && std::fabs(samples[si] - r0) < 1e-15) {
    out.psi.push_back(psi);
    ++si;
  }
  while (r < r_max - 1e-15) {
    const double target = si < samples.size() ? samples[si] : r_max;
    while (r < target - 1e-15) {
      double h = std::min(std::min(dr, r / 64.0), target - r);
      const double k1 = f(r, psi);
      const double k2 = f(r + 0.5 * h, psi + 0.5 * h * k1);
      const double k3 = f(r + 0.5 * h, psi + 0.5 * h * k2);
      const double k4 = f(r + h, psi + h * k3);
      psi += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      r += h;
      if (std::fabs(psi) > blow || !std::isfinite(psi)) {
        out.delta = psi < 0.0 ? r - 1.0 / psi : r;
        return out;
      }
    }
    if (si < samples.size()) {
      out.psi.push_back(psi);
      ++si;
    } else {
      break;
    }
  }
  return out;
}

}  // namespace detail

// Solves the comparison ODE by RK4 from the leading asymptote at r0 = dr;
// the O(r) seed correction is removed by Richardson extrapolation of two
// runs seeded at r0 and r0/2.
inline ThetaProfile riccati_theta(double n, const KSpec& K, double r_max, double dr) {
  if (!(n > 1.0)) throw Error(Error::Kind::domain, "riccati_theta needs n > 1");
  if (!(dr > 0.0 && dr <= 1e-3)) throw Error(Error::Kind::domain, "riccati_theta needs dr <= 1e-3");
  if (!(r_max > dr)) throw Error(Error::Kind::domain, "riccati_theta needs r_max > dr");

  ThetaProfile out;
  out.n = n;
  out.k_desc = K.desc;
  out.dr = dr;
  const long ns = long(std::floor(r_max / dr + 1e-9));
  std::vector<double> samples(ns);
  for (long i = 0; i < ns; ++i) samples[i] = (i + 1) * dr;

  detail::RiccatiRun a = detail::integrate_unit_riccati(K, n, dr, dr, r_max, samples);
  detail::RiccatiRun b = detail::integrate_unit_riccati(K, n, dr / 2.0, dr, r_max, samples);
  const std::size_t keep = std::min(a.psi.size(), b.psi.size());
  out.r.assign(samples.begin(), samples.begin() + keep);
  out.theta.resize(keep);
  for (std::size_t i = 0; i < keep; ++i)
    out.theta[i] = (n - 1.0) * (2.0 * b.psi[i] - a.psi[i]);
  if (std::isfinite(a.delta) || std::isfinite(b.delta)) {
    if (std::isfinite(a.delta) && std::isfinite(b.delta))
      out.delta_k = 2.0 * b.delta - a.delta;
    else
      out.delta_k = std::isfinite(a.delta) ? a.delta : b.delta;
    // drop samples at or beyond the explosion estimate
    while (!out.r.empty() && out.r.back() >= out.delta_k - dr) {
      out.r.pop_back();
      out.theta.pop_back();
    }
  }
  return out;
}

// closed forms of the constant-curvature comparison bounds
inline double theta_closed_form(double n, double K, double r) {
  if (K > 0.0) {
    const double s = std::sqrt(K);
    return (n - 1.0) * s * std::cos(s * r) / std::sin(s * r);
  }
  if (K < 0.0) {
    const double s = std::sqrt(-K);
    return (n - 1.0) * s / std::tanh(s * r);
  }
  return (n - 1.0) / r;
}

}  // namespace bel
