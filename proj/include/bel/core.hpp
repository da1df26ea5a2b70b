#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace bel {

constexpr int kMaxDim = 3;

enum class Bc { periodic, dirichlet, neumann };

inline const char* bc_name(Bc b) {
  switch (b) {
    case Bc::periodic: return "periodic";
    case Bc::dirichlet: return "dirichlet";
    case Bc::neumann: return "neumann";
  }
  return "?";
}

struct Error : std::runtime_error {
  enum class Kind {
    config, chart, parse, eval, cfl, positivity, convergence, eigen, domain
  };
  Kind kind;
  Error(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
};

inline double sqr(double x) { return x * x; }

// One coordinate axis of a structured chart. Periodic axes omit the
// duplicate endpoint (x_k = lo + k*h, h = span/n); bounded axes include
// both endpoints (h = span/(n-1)).
struct Axis {
  std::string name;
  double lo = 0.0, hi = 1.0;
  int n = 0;
  Bc bc = Bc::periodic;
  double h = 0.0;

  bool periodic() const { return bc == Bc::periodic; }
  void finalize() {
    if (n < 8) throw Error(Error::Kind::chart, "axis '" + name + "': resolution below 8");
    if (!(hi > lo)) throw Error(Error::Kind::chart, "axis '" + name + "': empty range");
    h = periodic() ? (hi - lo) / n : (hi - lo) / (n - 1);
  }
  double coord(int k) const { return lo + k * h; }
};

// Flattened row-major indexing over up to kMaxDim axes (last axis fastest).
struct Grid {
  int m = 0;
  std::array<int, kMaxDim> n{1, 1, 1};
  std::array<long, kMaxDim> stride{0, 0, 0};
  long npts = 1;

  void finalize(int dim) {
    m = dim;
    npts = 1;
    for (int a = 0; a < kMaxDim; ++a) npts *= n[a];
    long s = 1;
    for (int a = kMaxDim - 1; a >= 0; --a) { stride[a] = s; s *= n[a]; }
  }
  long flat(const std::array<int, kMaxDim>& ix) const {
    return ix[0] * stride[0] + ix[1] * stride[1] + ix[2] * stride[2];
  }
  std::array<int, kMaxDim> unflat(long p) const {
    std::array<int, kMaxDim> ix{0, 0, 0};
    for (int a = 0; a < kMaxDim; ++a) { ix[a] = int(p / stride[a]); p %= stride[a]; }
    return ix;
  }
};

// ---- dense symmetric m x m helpers (m <= 3), row-major double[m*m] ----

inline double det_sym(const double* g, int m) {
  if (m == 1) return g[0];
  if (m == 2) return g[0] * g[3] - g[1] * g[2];
  return g[0] * (g[4] * g[8] - g[5] * g[7]) - g[1] * (g[3] * g[8] - g[5] * g[6]) +
         g[2] * (g[3] * g[7] - g[4] * g[6]);
}

inline void invert_sym(const double* g, int m, double* out) {
  const double d = det_sym(g, m);
  if (!(std::fabs(d) > 0.0) || !std::isfinite(d))
    throw Error(Error::Kind::chart, "metric not invertible at a grid point");
  if (m == 1) { out[0] = 1.0 / d; return; }
  if (m == 2) {
    out[0] = g[3] / d; out[3] = g[0] / d;
    out[1] = out[2] = -g[1] / d;
    return;
  }
  out[0] = (g[4] * g[8] - g[5] * g[5]) / d;
  out[1] = (g[2] * g[5] - g[1] * g[8]) / d;
  out[2] = (g[1] * g[5] - g[2] * g[4]) / d;
  out[4] = (g[0] * g[8] - g[2] * g[2]) / d;
  out[5] = (g[2] * g[1] - g[0] * g[5]) / d;
  out[8] = (g[0] * g[4] - g[1] * g[1]) / d;
  out[3] = out[1];
  out[6] = out[2];
  out[7] = out[5];
}

// Lower-triangular Cholesky factor of an SPD matrix; throws on failure.
inline void cholesky(const double* g, int m, double* L) {
  for (int i = 0; i < m * m; ++i) L[i] = 0.0;
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j <= i; ++j) {
      double s = g[i * m + j];
      for (int k = 0; k < j; ++k) s -= L[i * m + k] * L[j * m + k];
      if (i == j) {
        if (!(s > 0.0)) throw Error(Error::Kind::chart, "metric not positive definite at a grid point");
        L[i * m + i] = std::sqrt(s);
      } else {
        L[i * m + j] = s / L[j * m + j];
      }
    }
  }
}

// Cyclic Jacobi sweeps for a symmetric matrix; returns false if the sweep
// cap is reached before all off-diagonal entries fall below tol*scale.
inline bool jacobi_eigenvalues(double* a, int m, double* evals,
                               double tol = 1e-12, int max_sweeps = 100) {
  if (m == 1) { evals[0] = a[0]; return true; }
  double scale = 0.0;
  for (int i = 0; i < m * m; ++i) scale = std::max(scale, std::fabs(a[i]));
  if (scale == 0.0) { for (int i = 0; i < m; ++i) evals[i] = 0.0; return true; }
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    double off = 0.0;
    for (int p = 0; p < m; ++p)
      for (int q = p + 1; q < m; ++q) off = std::max(off, std::fabs(a[p * m + q]));
    if (off <= tol * scale) {
      for (int i = 0; i < m; ++i) evals[i] = a[i * m + i];
      return true;
    }
    for (int p = 0; p < m; ++p) {
      for (int q = p + 1; q < m; ++q) {
        const double apq = a[p * m + q];
        if (std::fabs(apq) <= 1e-300) continue;
        const double theta = (a[q * m + q] - a[p * m + p]) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (int k = 0; k < m; ++k) {
          const double akp = a[k * m + p], akq = a[k * m + q];
          a[k * m + p] = c * akp - s * akq;
          a[k * m + q] = s * akp + c * akq;
        }
        for (int k = 0; k < m; ++k) {
          const double apk = a[p * m + k], aqk = a[q * m + k];
          a[p * m + k] = c * apk - s * aqk;
          a[q * m + k] = s * apk + c * aqk;
        }
      }
    }
  }
  return false;
}

// Generalized symmetric eigenvalues of T against SPD G: congruence by the
// Cholesky factor of G to an orthonormal frame, then Jacobi sweeps.
inline void generalized_eigenvalues(const double* t, const double* g, int m, double* evals) {
  double L[9], B[9], tmp[9];
  cholesky(g, m, L);
  // tmp = L^{-1} T  (forward substitution on columns)
  for (int col = 0; col < m; ++col) {
    for (int i = 0; i < m; ++i) {
      double s = t[i * m + col];
      for (int k = 0; k < i; ++k) s -= L[i * m + k] * tmp[k * m + col];
      tmp[i * m + col] = s / L[i * m + i];
    }
  }
  // B = tmp L^{-T}  (forward substitution on rows)
  for (int row = 0; row < m; ++row) {
    for (int j = 0; j < m; ++j) {
      double s = tmp[row * m + j];
      for (int k = 0; k < j; ++k) s -= B[row * m + k] * L[j * m + k];
      B[row * m + j] = s / L[j * m + j];
    }
  }
  if (!jacobi_eigenvalues(B, m, evals))
    throw Error(Error::Kind::eigen, "symmetric Jacobi iteration cap exceeded");
}

inline double min_generalized_eigenvalue(const double* t, const double* g, int m) {
  double ev[3];
  generalized_eigenvalues(t, g, m, ev);
  double mn = ev[0];
  for (int i = 1; i < m; ++i) mn = std::min(mn, ev[i]);
  return mn;
}

inline double max_generalized_eigenvalue(const double* t, const double* g, int m) {
  double ev[3];
  generalized_eigenvalues(t, g, m, ev);
  double mx = ev[0];
  for (int i = 1; i < m; ++i) mx = std::max(mx, ev[i]);
  return mx;
}

// Deterministic uniform in [0,1) from a 64-bit generator state; avoids
// std::uniform_real_distribution so streams are implementation-independent.
template <class Rng>
inline double uniform01(Rng& rng) {
  return double(rng() >> 11) * 0x1.0p-53;
}

inline double observed_order(double coarse_err, double fine_err) {
  if (coarse_err <= 0.0 || fine_err <= 0.0) return std::numeric_limits<double>::infinity();
  return std::log2(coarse_err / fine_err);
}

}  // namespace bel
