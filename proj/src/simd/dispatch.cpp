#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "otproto/simd.hpp"

namespace otproto::simd {

std::string_view to_string(Backend backend) noexcept {
  return backend == Backend::Avx2 ? "avx2" : "scalar";
}

namespace {

const Kernels* pick_default() noexcept {
  if (const char* env = std::getenv("OTPROTO_SIMD"); env && std::string(env) == "scalar") {
    return &scalar_kernels();
  }
  if (const Kernels* k = avx2_kernels()) return k;
  return &scalar_kernels();
}

std::atomic<const Kernels*>& slot() noexcept {
  static std::atomic<const Kernels*> current{pick_default()};
  return current;
}

}  // namespace

const Kernels& active() noexcept { return *slot().load(std::memory_order_acquire); }

void set_backend(Backend backend) {
  const Kernels* k = backend == Backend::Avx2 ? avx2_kernels() : &scalar_kernels();
  if (k == nullptr) throw std::invalid_argument("SIMD backend unavailable on this CPU");
  slot().store(k, std::memory_order_release);
}

}  // namespace otproto::simd
