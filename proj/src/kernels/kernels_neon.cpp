// aarch64 only; two doubles per register.
#include <arm_neon.h>

#include <cmath>

#include "objslam/kernels.hpp"

namespace objslam::kernels::detail {

namespace {

void affine_combine(const double* base, const double* basis, const double* coeffs,
                    std::size_t rows, std::size_t cols, double* out) {
  std::size_t r = 0;
  for (; r + 2 <= rows; r += 2) {
    float64x2_t acc = vld1q_f64(base + r);
    for (std::size_t c = 0; c < cols; ++c) {
      acc = vfmaq_n_f64(acc, vld1q_f64(basis + c * rows + r), coeffs[c]);
    }
    vst1q_f64(out + r, acc);
  }
  for (; r < rows; ++r) {
    double acc = base[r];
    for (std::size_t c = 0; c < cols; ++c) acc = std::fma(basis[c * rows + r], coeffs[c], acc);
    out[r] = acc;
  }
}

inline float64x2_t affine_row(const double* m, double t, float64x2_t x, float64x2_t y,
                              float64x2_t z) {
  float64x2_t acc = vdupq_n_f64(t);
  acc = vfmaq_n_f64(acc, x, m[0]);
  acc = vfmaq_n_f64(acc, y, m[1]);
  return vfmaq_n_f64(acc, z, m[2]);
}

void transform_project(const Params3& p, const double* x, const double* y, const double* z,
                       std::size_t n, double* u, double* v, double* depth) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const float64x2_t px = vld1q_f64(x + i);
    const float64x2_t py = vld1q_f64(y + i);
    const float64x2_t pz = vld1q_f64(z + i);
    const float64x2_t qx = affine_row(p.r + 0, p.t[0], px, py, pz);
    const float64x2_t qy = affine_row(p.r + 3, p.t[1], px, py, pz);
    const float64x2_t qz = affine_row(p.r + 6, p.t[2], px, py, pz);
    const float64x2_t inv = vdivq_f64(vdupq_n_f64(1.0), qz);
    vst1q_f64(u + i, vfmaq_f64(vdupq_n_f64(p.cx), vmulq_n_f64(qx, p.fx), inv));
    vst1q_f64(v + i, vfmaq_f64(vdupq_n_f64(p.cy), vmulq_n_f64(qy, p.fy), inv));
    vst1q_f64(depth + i, qz);
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
  for (; i + 2 <= n; i += 2) {
    float64x2_t acc = vdupq_n_f64(0.0);
    for (std::size_t d = 0; d < dim; ++d) {
      const float64x2_t diff = vsubq_f64(vld1q_f64(table + d * n + i), vdupq_n_f64(query[d]));
      acc = vfmaq_f64(acc, diff, diff);
    }
    vst1q_f64(out + i, acc);
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

const KernelTable& neon_table() {
  static const KernelTable table{&affine_combine, &transform_project, &squared_distances};
  return table;
}

}  // namespace objslam::kernels::detail
