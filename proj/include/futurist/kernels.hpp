#pragma once

// Data-parallel arithmetic kernels. Every kernel has a portable scalar reference
// implementation; x86-64 builds add AVX2/FMA variants. The variant is picked once at
// runtime from CPUID, or forced through FUTURIST_ISA=scalar|avx2.

#include <cstddef>
#include <string>

namespace futurist::kernels {

enum class Isa { kScalar, kAvx2 };
enum class Op { kNone, kTranspose };

std::string to_string(Isa isa);

template <typename T>
struct AdamStep {
  T learning_rate;
  T beta1;
  T beta2;
  T epsilon;
  T bias_correction1;  // 1 − β₁ᵗ
  T bias_correction2;  // 1 − β₂ᵗ
};

template <typename T>
struct KernelTable {
  Isa isa;
  // C ← alpha·op(A)·op(B) + beta·C with op(A) m×k and op(B) k×n, row-major with leading
  // dimensions lda/ldb/ldc. beta == 0 never reads C.
  void (*gemm)(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
               std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc);
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y ← y + alpha·x
  void (*axpy)(std::size_t n, T alpha, const T* x, T* y);
  // Bias-corrected Adam update of w given gradient g and moments m, v.
  void (*adam)(std::size_t n, T* w, const T* g, T* m, T* v, const AdamStep<T>& step);
};

template <typename T>
const KernelTable<T>& scalar_table();
// nullptr when the build has no AVX2 variant.
template <typename T>
const KernelTable<T>* avx2_table();

bool cpu_supports_avx2();
bool isa_available(Isa isa);

Isa active_isa();
// Throws std::runtime_error if `isa` is not available on this build/CPU.
void set_active_isa(Isa isa);

template <typename T>
const KernelTable<T>& table(Isa isa);

template <typename T>
const KernelTable<T>& active() {
  return table<T>(active_isa());
}

template <typename T>
inline void gemm(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  active<T>().gemm(op_a, op_b, m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
inline T dot(const T* x, const T* y, std::size_t n) {
  return active<T>().dot(x, y, n);
}

template <typename T>
inline void axpy(std::size_t n, T alpha, const T* x, T* y) {
  active<T>().axpy(n, alpha, x, y);
}

}  // namespace futurist::kernels
