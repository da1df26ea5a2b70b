#pragma once

#include <random>

#include "bel/chart.hpp"

namespace bel {

// Fixed seeded trigonometric test fields, the reproducible corpus behind the
// property tests. Periodic axes get integer frequencies of their period,
// bounded axes get half-period harmonics of the axis span; amplitudes decay
// with the term index. Same seed + same chart geometry => same field.
inline Expr corpus_expr(const Chart& ch, std::uint64_t seed, int terms = 3,
                        double amplitude = 0.3, double base = 1.5) {
  std::mt19937_64 rng(seed);
  std::string text = std::to_string(base);
  char buf[160];
  for (int k = 1; k <= terms; ++k) {
    const double a = amplitude * (0.5 + 0.5 * uniform01(rng)) / k;
    std::string term;
    std::snprintf(buf, sizeof buf, "%.17g", a);
    term += buf;
    for (int ax = 0; ax < ch.m; ++ax) {
      const Axis& axis = ch.axes[ax];
      const int mode = 1 + int(uniform01(rng) * 2.0);  // 1 or 2
      const double omega = axis.periodic() ? 2.0 * M_PI * mode / (axis.hi - axis.lo)
                                           : M_PI * mode / (axis.hi - axis.lo);
      const double phase = 2.0 * M_PI * uniform01(rng);
      const bool use_sin = uniform01(rng) < 0.5;
      std::snprintf(buf, sizeof buf, "*%s(%.17g*%s + %.17g)",
                    (use_sin && axis.periodic()) ? "sin" : "cos", omega,
                    axis.name.c_str(), axis.periodic() ? phase : 0.0);
      term += buf;
    }
    text += " + " + term;
  }
  return Expr::parse(text);
}

// generic non-gradient vector-field recipe on the same corpus
inline std::vector<Expr> corpus_vector_exprs(const Chart& ch, std::uint64_t seed,
                                             double amplitude = 0.2) {
  std::vector<Expr> comps;
  for (int a = 0; a < ch.m; ++a)
    comps.push_back(corpus_expr(ch, seed + 101 * (a + 1), 2, amplitude, 0.0));
  return comps;
}

}  // namespace bel
