#include "kernels_impl.hpp"

#include <cstdlib>
#include <string>

namespace flatpi::simd {

bool available(Backend b) {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(__i386__)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(__aarch64__)
      return true;
#else
      return false;
#endif
  }
  return false;
}

std::string_view name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "?";
}

namespace {

Backend detect() {
  if (const char* env = std::getenv("FLATPI_SIMD")) {
    const std::string s(env);
    if (s == "scalar") return Backend::Scalar;
    if (s == "avx2" && available(Backend::Avx2)) return Backend::Avx2;
    if (s == "neon" && available(Backend::Neon)) return Backend::Neon;
  }
  if (available(Backend::Avx2)) return Backend::Avx2;
  if (available(Backend::Neon)) return Backend::Neon;
  return Backend::Scalar;
}

}  // namespace

Backend active_backend() {
  static const Backend b = detect();
  return b;
}

const Kernels& kernels(Backend b) {
#if defined(__x86_64__) || defined(__i386__)
  if (b == Backend::Avx2 && available(b)) return detail::avx2_kernels;
#endif
#if defined(__aarch64__)
  if (b == Backend::Neon) return detail::neon_kernels;
#endif
  return detail::scalar_kernels;
}

}  // namespace flatpi::simd
