#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string_view>

#include "futurist/kernels.hpp"

namespace futurist::kernels {

#ifndef FUTURIST_HAVE_AVX2
template <typename T>
const KernelTable<T>* avx2_table() {
  return nullptr;
}
template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();
#endif

namespace {

Isa detect() {
  if (const char* env = std::getenv("FUTURIST_ISA")) {
    const std::string_view v(env);
    if (v == "scalar") return Isa::kScalar;
    if (v == "avx2" && isa_available(Isa::kAvx2)) return Isa::kAvx2;
  }
  return isa_available(Isa::kAvx2) ? Isa::kAvx2 : Isa::kScalar;
}

std::atomic<Isa>& selected() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

}  // namespace

std::string to_string(Isa isa) { return isa == Isa::kAvx2 ? "avx2" : "scalar"; }

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

bool isa_available(Isa isa) {
  if (isa == Isa::kScalar) return true;
  return avx2_table<float>() != nullptr && cpu_supports_avx2();
}

Isa active_isa() { return selected().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (!isa_available(isa)) throw std::runtime_error("kernel variant " + to_string(isa) + " is not available");
  selected().store(isa, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& table(Isa isa) {
  if (isa == Isa::kAvx2) {
    if (const auto* t = avx2_table<T>(); t != nullptr && cpu_supports_avx2()) return *t;
  }
  return scalar_table<T>();
}

template const KernelTable<float>& table<float>(Isa);
template const KernelTable<double>& table<double>(Isa);

}  // namespace futurist::kernels
