#include "objslam/kernels.hpp"

namespace objslam::kernels::detail {

namespace {

void affine_combine(const double* base, const double* basis, const double* coeffs,
                    std::size_t rows, std::size_t cols, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = base[r];
  for (std::size_t c = 0; c < cols; ++c) {
    const double* col = basis + c * rows;
    const double w = coeffs[c];
    for (std::size_t r = 0; r < rows; ++r) out[r] += col[r] * w;
  }
}

void transform_project(const Params3& p, const double* x, const double* y, const double* z,
                       std::size_t n, double* u, double* v, double* depth) {
  for (std::size_t i = 0; i < n; ++i) {
    const double cx = p.r[0] * x[i] + p.r[1] * y[i] + p.r[2] * z[i] + p.t[0];
    const double cy = p.r[3] * x[i] + p.r[4] * y[i] + p.r[5] * z[i] + p.t[1];
    const double cz = p.r[6] * x[i] + p.r[7] * y[i] + p.r[8] * z[i] + p.t[2];
    const double inv = 1.0 / cz;
    u[i] = p.fx * cx * inv + p.cx;
    v[i] = p.fy * cy * inv + p.cy;
    depth[i] = cz;
  }
}

void squared_distances(const double* table, std::size_t n, std::size_t dim, const double* query,
                       double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = 0.0;
  for (std::size_t d = 0; d < dim; ++d) {
    const double* row = table + d * n;
    const double q = query[d];
    for (std::size_t i = 0; i < n; ++i) {
      const double diff = row[i] - q;
      out[i] += diff * diff;
    }
  }
}

}  // namespace

const KernelTable& scalar_table() {
  static const KernelTable table{&affine_combine, &transform_project, &squared_distances};
  return table;
}

}  // namespace objslam::kernels::detail
