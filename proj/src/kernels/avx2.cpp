// AVX2/FMA kernel variants. This translation unit is the only one compiled with
// -mavx2 -mfma; nothing here may run before dispatch has confirmed CPU support.

#include <immintrin.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "futurist/kernels.hpp"

namespace futurist::kernels {
namespace {

template <typename T>
struct Vec;

template <>
struct Vec<float> {
  using Reg = __m256;
  static constexpr std::size_t kLanes = 8;
  static Reg zero() { return _mm256_setzero_ps(); }
  static Reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, Reg v) { _mm256_storeu_ps(p, v); }
  static Reg set1(float x) { return _mm256_set1_ps(x); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_ps(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_ps(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_ps(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_ps(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_ps(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_ps(a); }
  static float hsum(Reg v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
  }
};

template <>
struct Vec<double> {
  using Reg = __m256d;
  static constexpr std::size_t kLanes = 4;
  static Reg zero() { return _mm256_setzero_pd(); }
  static Reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, Reg v) { _mm256_storeu_pd(p, v); }
  static Reg set1(double x) { return _mm256_set1_pd(x); }
  static Reg fmadd(Reg a, Reg b, Reg c) { return _mm256_fmadd_pd(a, b, c); }
  static Reg add(Reg a, Reg b) { return _mm256_add_pd(a, b); }
  static Reg mul(Reg a, Reg b) { return _mm256_mul_pd(a, b); }
  static Reg sub(Reg a, Reg b) { return _mm256_sub_pd(a, b); }
  static Reg div(Reg a, Reg b) { return _mm256_div_pd(a, b); }
  static Reg sqrt(Reg a) { return _mm256_sqrt_pd(a); }
  static double hsum(Reg v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(lo, _mm_unpackhi_pd(lo, lo)));
  }
};

// Blocked GEMM in the Goto/BLIS arrangement: B is packed into NR-wide column panels,
// A into MR-tall row panels, and a register-resident MR×NR micro-tile accumulates each.
template <typename T>
struct Blocking {
  static constexpr std::size_t kMR = 6;
  static constexpr std::size_t kNR = 2 * Vec<T>::kLanes;
  static constexpr std::size_t kKC = 256;
  static constexpr std::size_t kMC = 96;
  static constexpr std::size_t kNC = 2048;
};

template <typename T>
inline T load_op(Op op, const T* x, std::size_t ld, std::size_t r, std::size_t c) {
  return op == Op::kNone ? x[r * ld + c] : x[c * ld + r];
}

template <typename T>
void pack_a(Op op, const T* a, std::size_t lda, std::size_t i0, std::size_t mc, std::size_t p0, std::size_t kc,
            T* dst) {
  constexpr std::size_t MR = Blocking<T>::kMR;
  for (std::size_t ir = 0; ir < mc; ir += MR) {
    const std::size_t mr = std::min(MR, mc - ir);
    for (std::size_t p = 0; p < kc; ++p) {
      for (std::size_t i = 0; i < MR; ++i) {
        *dst++ = i < mr ? load_op(op, a, lda, i0 + ir + i, p0 + p) : T{0};
      }
    }
  }
}

template <typename T>
void pack_b(Op op, const T* b, std::size_t ldb, std::size_t p0, std::size_t kc, std::size_t j0, std::size_t nc,
            T* dst) {
  constexpr std::size_t NR = Blocking<T>::kNR;
  for (std::size_t jr = 0; jr < nc; jr += NR) {
    const std::size_t nr = std::min(NR, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      if (op == Op::kNone && nr == NR) {
        std::memcpy(dst, b + (p0 + p) * ldb + j0 + jr, NR * sizeof(T));
        dst += NR;
        continue;
      }
      for (std::size_t j = 0; j < NR; ++j) {
        *dst++ = j < nr ? load_op(op, b, ldb, p0 + p, j0 + jr + j) : T{0};
      }
    }
  }
}

// C[mr×nr] += alpha · Apanel·Bpanel
template <typename T>
void micro_kernel(std::size_t kc, const T* a, const T* b, T alpha, T* c, std::size_t ldc, std::size_t mr,
                  std::size_t nr) {
  using V = Vec<T>;
  constexpr std::size_t MR = Blocking<T>::kMR;
  constexpr std::size_t NR = Blocking<T>::kNR;
  constexpr std::size_t L = V::kLanes;
  typename V::Reg c00 = V::zero(), c01 = V::zero(), c10 = V::zero(), c11 = V::zero(), c20 = V::zero(),
                  c21 = V::zero(), c30 = V::zero(), c31 = V::zero(), c40 = V::zero(), c41 = V::zero(),
                  c50 = V::zero(), c51 = V::zero();
  for (std::size_t p = 0; p < kc; ++p) {
    const auto b0 = V::load(b);
    const auto b1 = V::load(b + L);
    auto a0 = V::set1(a[0]);
    c00 = V::fmadd(a0, b0, c00);
    c01 = V::fmadd(a0, b1, c01);
    auto a1 = V::set1(a[1]);
    c10 = V::fmadd(a1, b0, c10);
    c11 = V::fmadd(a1, b1, c11);
    a0 = V::set1(a[2]);
    c20 = V::fmadd(a0, b0, c20);
    c21 = V::fmadd(a0, b1, c21);
    a1 = V::set1(a[3]);
    c30 = V::fmadd(a1, b0, c30);
    c31 = V::fmadd(a1, b1, c31);
    a0 = V::set1(a[4]);
    c40 = V::fmadd(a0, b0, c40);
    c41 = V::fmadd(a0, b1, c41);
    a1 = V::set1(a[5]);
    c50 = V::fmadd(a1, b0, c50);
    c51 = V::fmadd(a1, b1, c51);
    a += MR;
    b += NR;
  }
  const typename V::Reg acc[MR][2] = {{c00, c01}, {c10, c11}, {c20, c21}, {c30, c31}, {c40, c41}, {c50, c51}};
  const auto va = V::set1(alpha);
  if (mr == MR && nr == NR) {
    for (std::size_t i = 0; i < MR; ++i) {
      T* crow = c + i * ldc;
      V::store(crow, V::fmadd(va, acc[i][0], V::load(crow)));
      V::store(crow + L, V::fmadd(va, acc[i][1], V::load(crow + L)));
    }
    return;
  }
  alignas(32) T tile[MR * NR];
  for (std::size_t i = 0; i < MR; ++i) {
    V::store(tile + i * NR, V::mul(va, acc[i][0]));
    V::store(tile + i * NR + L, V::mul(va, acc[i][1]));
  }
  for (std::size_t i = 0; i < mr; ++i) {
    for (std::size_t j = 0; j < nr; ++j) c[i * ldc + j] += tile[i * NR + j];
  }
}

template <typename T>
void gemm_avx2(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
               std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  using B = Blocking<T>;
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T{0}) {
      std::fill(crow, crow + n, T{0});
    } else if (beta != T{1}) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  if (m == 0 || n == 0 || k == 0 || alpha == T{0}) return;

  thread_local std::vector<T> packed_a;
  thread_local std::vector<T> packed_b;
  packed_a.resize(B::kMC * B::kKC);
  packed_b.resize(((B::kNC + B::kNR - 1) / B::kNR) * B::kNR * B::kKC);

  for (std::size_t jc = 0; jc < n; jc += B::kNC) {
    const std::size_t nc = std::min(B::kNC, n - jc);
    for (std::size_t pc = 0; pc < k; pc += B::kKC) {
      const std::size_t kc = std::min(B::kKC, k - pc);
      pack_b(op_b, b, ldb, pc, kc, jc, nc, packed_b.data());
      for (std::size_t ic = 0; ic < m; ic += B::kMC) {
        const std::size_t mc = std::min(B::kMC, m - ic);
        pack_a(op_a, a, lda, ic, mc, pc, kc, packed_a.data());
        for (std::size_t jr = 0; jr < nc; jr += B::kNR) {
          const std::size_t nr = std::min(B::kNR, nc - jr);
          const T* bp = packed_b.data() + (jr / B::kNR) * B::kNR * kc;
          for (std::size_t ir = 0; ir < mc; ir += B::kMR) {
            const std::size_t mr = std::min(B::kMR, mc - ir);
            const T* ap = packed_a.data() + (ir / B::kMR) * B::kMR * kc;
            micro_kernel(kc, ap, bp, alpha, c + (ic + ir) * ldc + jc + jr, ldc, mr, nr);
          }
        }
      }
    }
  }
}

template <typename T>
T dot_avx2(const T* x, const T* y, std::size_t n) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  auto s0 = V::zero(), s1 = V::zero(), s2 = V::zero(), s3 = V::zero();
  std::size_t i = 0;
  for (; i + 4 * L <= n; i += 4 * L) {
    s0 = V::fmadd(V::load(x + i), V::load(y + i), s0);
    s1 = V::fmadd(V::load(x + i + L), V::load(y + i + L), s1);
    s2 = V::fmadd(V::load(x + i + 2 * L), V::load(y + i + 2 * L), s2);
    s3 = V::fmadd(V::load(x + i + 3 * L), V::load(y + i + 3 * L), s3);
  }
  for (; i + L <= n; i += L) s0 = V::fmadd(V::load(x + i), V::load(y + i), s0);
  T acc = V::hsum(V::add(V::add(s0, s1), V::add(s2, s3)));
  for (; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy_avx2(std::size_t n, T alpha, const T* x, T* y) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  const auto va = V::set1(alpha);
  std::size_t i = 0;
  for (; i + L <= n; i += L) V::store(y + i, V::fmadd(va, V::load(x + i), V::load(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void adam_avx2(std::size_t n, T* w, const T* g, T* m, T* v, const AdamStep<T>& s) {
  using V = Vec<T>;
  constexpr std::size_t L = V::kLanes;
  const T one{1};
  const auto b1 = V::set1(s.beta1), nb1 = V::set1(one - s.beta1);
  const auto b2 = V::set1(s.beta2), nb2 = V::set1(one - s.beta2);
  const auto bc1 = V::set1(s.bias_correction1), bc2 = V::set1(s.bias_correction2);
  const auto lr = V::set1(s.learning_rate), eps = V::set1(s.epsilon);
  std::size_t i = 0;
  for (; i + L <= n; i += L) {
    const auto gi = V::load(g + i);
    const auto mi = V::add(V::mul(b1, V::load(m + i)), V::mul(nb1, gi));
    const auto vi = V::add(V::mul(b2, V::load(v + i)), V::mul(V::mul(nb2, gi), gi));
    V::store(m + i, mi);
    V::store(v + i, vi);
    const auto step = V::div(V::mul(lr, V::div(mi, bc1)), V::add(V::sqrt(V::div(vi, bc2)), eps));
    V::store(w + i, V::sub(V::load(w + i), step));
  }
  for (; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (one - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (one - s.beta2) * g[i] * g[i];
    w[i] -= s.learning_rate * (m[i] / s.bias_correction1) / (std::sqrt(v[i] / s.bias_correction2) + s.epsilon);
  }
}

template <typename T>
constexpr KernelTable<T> kAvx2{Isa::kAvx2, &gemm_avx2<T>, &dot_avx2<T>, &axpy_avx2<T>, &adam_avx2<T>};

}  // namespace

template <typename T>
const KernelTable<T>* avx2_table() {
  return &kAvx2<T>;
}

template const KernelTable<float>* avx2_table<float>();
template const KernelTable<double>* avx2_table<double>();

}  // namespace futurist::kernels
