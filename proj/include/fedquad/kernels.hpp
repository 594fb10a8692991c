#pragma once

#include <cstddef>
#include <string>
#include <string_view>

// Data-parallel inner loops used by the dense, convolution, loss and
// optimizer code. Every routine has a scalar reference implementation and
// optional AVX2 / NEON variants; the active table is chosen once at startup
// from the CPU features and can be pinned for reproducibility.
namespace fedquad::kernels {

enum class Backend { kScalar, kAvx2, kNeon };

struct AdamCoeffs {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double weight_decay;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  Backend backend;
  // sum_i a[i] * b[i]
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // sum_i (a[i] - b[i])^2
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // Coupled-L2 bias-corrected Adam update over one parameter buffer.
  void (*adam_update)(const AdamCoeffs& c, double* param, const double* grad, double* m,
                      double* v, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or not supported by this CPU.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table all library code dispatches through.
const KernelTable& active();
Backend active_backend();

// Best backend the running CPU supports.
Backend detect_backend();
bool backend_available(Backend backend);
// Throws InputError if the backend is unavailable on this machine.
void set_backend(Backend backend);

std::string_view backend_name(Backend backend);
// Accepts "scalar", "avx2", "neon"; throws ConfigError otherwise.
Backend parse_backend(std::string_view name);

inline double dot(const double* a, const double* b, std::size_t n) { return active().dot(a, b, n); }
inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  active().axpy(alpha, x, y, n);
}
inline double squared_distance(const double* a, const double* b, std::size_t n) {
  return active().squared_distance(a, b, n);
}

// RAII pin of the active backend, mostly for tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend) : previous_(active_backend()) { set_backend(backend); }
  ~ScopedBackend() { set_backend(previous_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

}  // namespace fedquad::kernels
