#pragma once

// Data-parallel inner loops. Every kernel has a scalar reference implementation and
// vectorized variants; the variant is chosen once at runtime from CPU features.
// OBJSLAM_ISA=scalar|avx2|neon in the environment overrides the choice.

#include <cstddef>
#include <span>
#include <vector>

#include "objslam/geometry.hpp"

namespace objslam::kernels {

enum class Isa { Scalar, Avx2, Neon };

const char* isa_name(Isa isa);
/// Variants compiled into this binary and supported by the running CPU.
std::vector<Isa> available_isas();
Isa active_isa();
/// Test hook; pins the dispatcher to `isa` (must be available).
void set_active_isa(Isa isa);

/// out[r] = base[r] + sum_c basis[c * rows + r] * coeffs[c]; basis is column-major.
void affine_combine(std::span<const double> base, std::span<const double> basis,
                    std::span<const double> coeffs, std::span<double> out);

/// Structure-of-arrays view over n points.
struct PointsSoA {
  std::span<const double> x, y, z;
};

struct ProjectedSoA {
  std::span<double> u, v, depth;
};

/// p_cam = R p + t, then pinhole projection. Depth is written unconditionally; u and v
/// are only meaningful where depth > kDepthEpsilon. R is row-major.
void transform_project(const Mat3& rotation, const Vec3& translation, const CameraIntrinsics& k,
                       PointsSoA points, ProjectedSoA out);

/// out[i] = sum_d (table[d * n + i] - query[d])^2 with the table stored dimension-major.
void squared_distances(std::span<const double> table, std::size_t n,
                       std::span<const double> query, std::span<double> out);

namespace detail {

struct Params3 {
  double r[9];
  double t[3];
  double fx, fy, cx, cy;
};

struct KernelTable {
  void (*affine_combine)(const double* base, const double* basis, const double* coeffs,
                         std::size_t rows, std::size_t cols, double* out);
  void (*transform_project)(const Params3& p, const double* x, const double* y, const double* z,
                            std::size_t n, double* u, double* v, double* depth);
  void (*squared_distances)(const double* table, std::size_t n, std::size_t dim,
                            const double* query, double* out);
};

const KernelTable& scalar_table();
#if defined(OBJSLAM_HAVE_AVX2)
const KernelTable& avx2_table();
#endif
#if defined(OBJSLAM_HAVE_NEON)
const KernelTable& neon_table();
#endif

}  // namespace detail
}  // namespace objslam::kernels
