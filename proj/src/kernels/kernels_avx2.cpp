// Compiled with -mavx2 -mfma; only reached when the CPU reports both.
#include <immintrin.h>

#include <cmath>

#include "objslam/kernels.hpp"

namespace objslam::kernels::detail {

namespace {

void affine_combine(const double* base, const double* basis, const double* coeffs,
                    std::size_t rows, std::size_t cols, double* out) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    __m256d acc = _mm256_loadu_pd(base + r);
    for (std::size_t c = 0; c < cols; ++c) {
      acc = _mm256_fmadd_pd(_mm256_loadu_pd(basis + c * rows + r), _mm256_set1_pd(coeffs[c]), acc);
    }
    _mm256_storeu_pd(out + r, acc);
  }
  for (; r < rows; ++r) {
    double acc = base[r];
    for (std::size_t c = 0; c < cols; ++c) acc = std::fma(basis[c * rows + r], coeffs[c], acc);
    out[r] = acc;
  }
}

inline __m256d affine_row(const double* m, double t, __m256d x, __m256d y, __m256d z) {
  __m256d acc = _mm256_set1_pd(t);
  acc = _mm256_fmadd_pd(_mm256_set1_pd(m[0]), x, acc);
  acc = _mm256_fmadd_pd(_mm256_set1_pd(m[1]), y, acc);
  return _mm256_fmadd_pd(_mm256_set1_pd(m[2]), z, acc);
}

void transform_project(const Params3& p, const double* x, const double* y, const double* z,
                       std::size_t n, double* u, double* v, double* depth) {
  const __m256d fx = _mm256_set1_pd(p.fx);
  const __m256d fy = _mm256_set1_pd(p.fy);
  const __m256d cx = _mm256_set1_pd(p.cx);
  const __m256d cy = _mm256_set1_pd(p.cy);
  const __m256d one = _mm256_set1_pd(1.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d px = _mm256_loadu_pd(x + i);
    const __m256d py = _mm256_loadu_pd(y + i);
    const __m256d pz = _mm256_loadu_pd(z + i);
    const __m256d qx = affine_row(p.r + 0, p.t[0], px, py, pz);
    const __m256d qy = affine_row(p.r + 3, p.t[1], px, py, pz);
    const __m256d qz = affine_row(p.r + 6, p.t[2], px, py, pz);
    const __m256d inv = _mm256_div_pd(one, qz);
    _mm256_storeu_pd(u + i, _mm256_fmadd_pd(_mm256_mul_pd(fx, qx), inv, cx));
    _mm256_storeu_pd(v + i, _mm256_fmadd_pd(_mm256_mul_pd(fy, qy), inv, cy));
    _mm256_storeu_pd(depth + i, qz);
  }
  for (; i < n; ++i) {
    const double qx = p.r[0] * x[i] + p.r[1] * y[i] + p.r[2] * z[i] + p.t[0];
    const double qy = p.r[3] * x[i] + p.r[4] * y[i] + p.r[5] * z[i] + p.t[1];
    const double qz = p.r[6] * x[i] + p.r[7] * y[i] + p.r[8] * z[i] + p.t[2];
    const double inv = 1.0 / qz;
    u[i] = p.fx * qx * inv + p.cx;
    v[i] = p.fy * qy * inv + p.cy;
    depth[i] = qz;
  }
}

void squared_distances(const double* table, std::size_t n, std::size_t dim, const double* query,
                       double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d acc = _mm256_setzero_pd();
    for (std::size_t d = 0; d < dim; ++d) {
      const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(table + d * n + i), _mm256_set1_pd(query[d]));
      acc = _mm256_fmadd_pd(diff, diff, acc);
    }
    _mm256_storeu_pd(out + i, acc);
  }
  for (; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t d = 0; d < dim; ++d) {
      const double diff = table[d * n + i] - query[d];
      acc = std::fma(diff, diff, acc);  // same rounding as the vector lanes
    }
    out[i] = acc;
  }
}

}  // namespace

const KernelTable& avx2_table() {
  static const KernelTable table{&affine_combine, &transform_project, &squared_distances};
  return table;
}

}  // namespace objslam::kernels::detail
