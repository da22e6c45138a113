#include <cmath>

#include "futurist/kernels.hpp"

namespace futurist::kernels {
namespace {

template <typename T>
void gemm_scalar(Op op_a, Op op_b, std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
                 std::size_t lda, const T* b, std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    if (beta == T{0}) {
      for (std::size_t j = 0; j < n; ++j) crow[j] = T{0};
    } else if (beta != T{1}) {
      for (std::size_t j = 0; j < n; ++j) crow[j] *= beta;
    }
  }
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * ldc;
    for (std::size_t p = 0; p < k; ++p) {
      const T av = alpha * (op_a == Op::kNone ? a[i * lda + p] : a[p * lda + i]);
      if (op_b == Op::kNone) {
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * ldb + p];
      }
    }
  }
}

template <typename T>
T dot_scalar(const T* x, const T* y, std::size_t n) {
  T acc{0};
  for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
  return acc;
}

template <typename T>
void axpy_scalar(std::size_t n, T alpha, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

template <typename T>
void adam_scalar(std::size_t n, T* w, const T* g, T* m, T* v, const AdamStep<T>& s) {
  const T one{1};
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = s.beta1 * m[i] + (one - s.beta1) * g[i];
    v[i] = s.beta2 * v[i] + (one - s.beta2) * g[i] * g[i];
    const T m_hat = m[i] / s.bias_correction1;
    const T v_hat = v[i] / s.bias_correction2;
    w[i] -= s.learning_rate * m_hat / (std::sqrt(v_hat) + s.epsilon);
  }
}

template <typename T>
constexpr KernelTable<T> kScalar{Isa::kScalar, &gemm_scalar<T>, &dot_scalar<T>, &axpy_scalar<T>, &adam_scalar<T>};

}  // namespace

template <typename T>
const KernelTable<T>& scalar_table() {
  return kScalar<T>;
}

template const KernelTable<float>& scalar_table<float>();
template const KernelTable<double>& scalar_table<double>();

}  // namespace futurist::kernels
