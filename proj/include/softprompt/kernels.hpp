// Copyright 2026 The softprompt Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Dense double-precision inner loops used by the autodiff ops. Every kernel has
// a portable scalar reference and, on x86-64 hosts that report AVX2+FMA at
// runtime, a vectorised variant. The active table is chosen once on first use;
// `SOFTPROMPT_KERNELS=scalar` in the environment pins the reference path.

#ifndef SOFTPROMPT_KERNELS_HPP_
#define SOFTPROMPT_KERNELS_HPP_

#include <cstddef>
#include <span>
#include <string_view>

namespace softprompt::kernels {

enum class Backend { kScalar, kAvx2 };

std::string_view backend_name(Backend backend);

// Row-major layouts throughout. All gemm variants accumulate into `c`.
struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // c[m x n] += a[m x k] * b[k x n]
  void (*gemm_nn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[m x n] += a[m x k] * b[n x k]^T
  void (*gemm_nt)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
  // c[k x n] += a[m x k]^T * b[m x n]
  void (*gemm_tn)(const double* a, const double* b, double* c, std::size_t m,
                  std::size_t k, std::size_t n);
};

const KernelTable& scalar_table();

// Null when the binary was built without AVX2 support or the CPU lacks it.
const KernelTable* avx2_table();

bool avx2_available();

const KernelTable& active();

// Throws std::invalid_argument when the backend is unavailable on this host.
void select(Backend backend);

// RAII override used by equivalence tests.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend backend);
  ~ScopedBackend();
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend previous_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

}  // namespace softprompt::kernels

#endif  // SOFTPROMPT_KERNELS_HPP_
