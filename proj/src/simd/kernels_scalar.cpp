#include "curie/simd/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace curie::simd {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

double sum_scalar(const double* a, std::size_t n) {
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += a[i];
  return acc;
}

void axpy_scalar(double alpha, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] += alpha * x[i];
}

void gram_scalar(const double* x, const double* y, std::size_t rows,
                 std::size_t cols, double* gram, double* cross) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = x + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const double xj = row[j];
      cross[j] += xj * y[r];
      double* g = gram + j * cols;
      for (std::size_t k = 0; k < cols; ++k) g[k] += xj * row[k];
    }
  }
}

const KernelTable kScalar{Isa::kScalar, &dot_scalar, &sum_scalar, &axpy_scalar,
                          &gram_scalar};

const KernelTable& select() {
  if (const char* forced = std::getenv("CURIE_SIMD");
      forced != nullptr && std::strcmp(forced, "scalar") == 0) {
    return kScalar;
  }
  if (const KernelTable* wide = avx2_kernels()) return *wide;
  return kScalar;
}

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

const KernelTable& active() {
  static const KernelTable& table = select();
  return table;
}

std::string_view isa_name(Isa isa) {
  return isa == Isa::kAvx2 ? "avx2" : "scalar";
}

}  // namespace curie::simd
