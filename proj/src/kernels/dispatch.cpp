#include <atomic>
#include <cstdlib>
#include <cstring>
#include <stdexcept>

#include "objslam/error.hpp"
#include "objslam/kernels.hpp"

namespace objslam::kernels {

namespace {

bool cpu_supports(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return true;
    case Isa::Avx2:
#if defined(OBJSLAM_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::Neon:
#if defined(OBJSLAM_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa detect() {
  if (const char* env = std::getenv("OBJSLAM_ISA")) {
    for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
      if (std::strcmp(env, isa_name(isa)) == 0 && cpu_supports(isa)) return isa;
    }
  }
  if (cpu_supports(Isa::Avx2)) return Isa::Avx2;
  if (cpu_supports(Isa::Neon)) return Isa::Neon;
  return Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

const detail::KernelTable& table() {
  switch (active().load(std::memory_order_relaxed)) {
#if defined(OBJSLAM_HAVE_AVX2)
    case Isa::Avx2: return detail::avx2_table();
#endif
#if defined(OBJSLAM_HAVE_NEON)
    case Isa::Neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

void check(bool ok, const char* what) {
  if (!ok) throw Error(ErrorCode::DimensionMismatch, what);
}

}  // namespace

const char* isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
    case Isa::Neon: return "neon";
  }
  return "unknown";
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out;
  for (Isa isa : {Isa::Scalar, Isa::Avx2, Isa::Neon}) {
    if (cpu_supports(isa)) out.push_back(isa);
  }
  return out;
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!cpu_supports(isa)) throw std::invalid_argument("ISA not available on this CPU");
  active().store(isa, std::memory_order_relaxed);
}

void affine_combine(std::span<const double> base, std::span<const double> basis,
                    std::span<const double> coeffs, std::span<double> out) {
  const std::size_t rows = base.size();
  check(out.size() == rows && basis.size() == rows * coeffs.size(), "affine_combine sizes");
  table().affine_combine(base.data(), basis.data(), coeffs.data(), rows, coeffs.size(), out.data());
}

void transform_project(const Mat3& rotation, const Vec3& translation, const CameraIntrinsics& k,
                       PointsSoA points, ProjectedSoA out) {
  const std::size_t n = points.x.size();
  check(points.y.size() == n && points.z.size() == n && out.u.size() == n && out.v.size() == n &&
            out.depth.size() == n,
        "transform_project sizes");
  detail::Params3 p{};
  for (int r = 0; r < 3; ++r) {
    for (int c = 0; c < 3; ++c) p.r[3 * r + c] = rotation(r, c);
    p.t[r] = translation[r];
  }
  p.fx = k.fx;
  p.fy = k.fy;
  p.cx = k.cx;
  p.cy = k.cy;
  table().transform_project(p, points.x.data(), points.y.data(), points.z.data(), n, out.u.data(),
                            out.v.data(), out.depth.data());
}

void squared_distances(std::span<const double> table_dim_major, std::size_t n,
                       std::span<const double> query, std::span<double> out) {
  check(table_dim_major.size() == n * query.size() && out.size() == n, "squared_distances sizes");
  table().squared_distances(table_dim_major.data(), n, query.size(), query.data(), out.data());
}

}  // namespace objslam::kernels
