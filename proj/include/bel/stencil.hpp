#pragma once

#include "bel/chart.hpp"

namespace bel {

// Second-order finite differences of sampled fields: centered in the
// interior, index wrap on periodic axes, one-sided second-order stencils at
// the edges of bounded axes.

namespace detail {

struct AxisView {
  long stride;
  int n;
  bool periodic;
  double h;
};

inline AxisView axis_view(const Chart& ch, int a) {
  return {ch.grid.stride[a], ch.grid.n[a], ch.axes[a].periodic(), ch.axes[a].h};
}

}  // namespace detail

// ∂_a of every component of T, sampled on the same grid.
inline GridTensor axis_d1(const GridTensor& T, int a) {
  const Chart& ch = *T.chart;
  const auto ax = detail::axis_view(ch, a);
  GridTensor out(ch, T.rank, T.upper);
  out.ncomp = T.ncomp;
  out.v.assign(T.v.size(), 0.0);
  const int nc = T.ncomp;
  const double i2h = 1.0 / (2.0 * ax.h);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
    const int k = ix[a];
    for (int c = 0; c < nc; ++c) {
      double d;
      if (ax.periodic) {
        const long pp = p + (k + 1 == ax.n ? (1 - ax.n) : 1) * ax.stride;
        const long pm = p + (k == 0 ? (ax.n - 1) : -1) * ax.stride;
        d = (T.v[pp * nc + c] - T.v[pm * nc + c]) * i2h;
      } else if (k == 0) {
        d = (-3.0 * T.v[p * nc + c] + 4.0 * T.v[(p + ax.stride) * nc + c] -
             T.v[(p + 2 * ax.stride) * nc + c]) * i2h;
      } else if (k == ax.n - 1) {
        d = (3.0 * T.v[p * nc + c] - 4.0 * T.v[(p - ax.stride) * nc + c] +
             T.v[(p - 2 * ax.stride) * nc + c]) * i2h;
      } else {
        d = (T.v[(p + ax.stride) * nc + c] - T.v[(p - ax.stride) * nc + c]) * i2h;
      }
      out.v[p * nc + c] = d;
    }
  });
  return out;
}

// ∂²_a of every component of T.
inline GridTensor axis_d2(const GridTensor& T, int a) {
  const Chart& ch = *T.chart;
  const auto ax = detail::axis_view(ch, a);
  GridTensor out(ch, T.rank, T.upper);
  out.ncomp = T.ncomp;
  out.v.assign(T.v.size(), 0.0);
  const int nc = T.ncomp;
  const double ih2 = 1.0 / (ax.h * ax.h);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
    const int k = ix[a];
    for (int c = 0; c < nc; ++c) {
      double d;
      if (ax.periodic) {
        const long pp = p + (k + 1 == ax.n ? (1 - ax.n) : 1) * ax.stride;
        const long pm = p + (k == 0 ? (ax.n - 1) : -1) * ax.stride;
        d = (T.v[pp * nc + c] - 2.0 * T.v[p * nc + c] + T.v[pm * nc + c]) * ih2;
      } else if (k == 0) {
        d = (2.0 * T.v[p * nc + c] - 5.0 * T.v[(p + ax.stride) * nc + c] +
             4.0 * T.v[(p + 2 * ax.stride) * nc + c] - T.v[(p + 3 * ax.stride) * nc + c]) * ih2;
      } else if (k == ax.n - 1) {
        d = (2.0 * T.v[p * nc + c] - 5.0 * T.v[(p - ax.stride) * nc + c] +
             4.0 * T.v[(p - 2 * ax.stride) * nc + c] - T.v[(p - 3 * ax.stride) * nc + c]) * ih2;
      } else {
        d = (T.v[(p + ax.stride) * nc + c] - 2.0 * T.v[p * nc + c] +
             T.v[(p - ax.stride) * nc + c]) * ih2;
      }
      out.v[p * nc + c] = d;
    }
  });
  return out;
}

// Interior mask: points at least `margin` cells away from every bounded-axis
// edge (periodic axes impose nothing). Used to keep one-sided-stencil error
// out of sup-norm residual measurements.
inline std::vector<std::uint8_t> interior_mask(const Chart& ch, int margin) {
  std::vector<std::uint8_t> mask(ch.npts(), 1);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
    for (int a = 0; a < ch.m; ++a) {
      if (ch.axes[a].periodic()) continue;
      if (ix[a] < margin || ix[a] >= ch.grid.n[a] - margin) { mask[p] = 0; break; }
    }
  });
  return mask;
}

// Same, but with a fixed physical width: convergence-order measurements must
// hold the measured region fixed while h shrinks, or boundary constants
// masquerade as low order.
inline std::vector<std::uint8_t> interior_mask_width(const Chart& ch, double width) {
  std::vector<std::uint8_t> mask(ch.npts(), 1);
  for_each_point(ch, [&](long p, const std::array<int, kMaxDim>& ix, const double*) {
    for (int a = 0; a < ch.m; ++a) {
      if (ch.axes[a].periodic()) continue;
      const double x = ch.axes[a].coord(ix[a]);
      if (x - ch.axes[a].lo < width || ch.axes[a].hi - x < width) { mask[p] = 0; break; }
    }
  });
  return mask;
}

}  // namespace bel
