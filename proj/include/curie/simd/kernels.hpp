#pragma once

// Data-parallel inner loops shared by the statistics and aggregation code.
//
// Every kernel has a portable scalar reference and, on x86-64, an AVX2+FMA
// variant. The variant is picked once at startup from CPUID; setting
// CURIE_SIMD=scalar in the environment forces the reference path. The
// variants are not bit-identical (FMA contraction and lane-wise partial sums
// reorder the additions); tests hold them to a relative tolerance instead.

#include <cstddef>
#include <span>
#include <string_view>

namespace curie::simd {

enum class Isa { kScalar, kAvx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*sum)(const double* a, std::size_t n);
  // out[i] += alpha * x[i]
  void (*axpy)(double alpha, const double* x, double* out, std::size_t n);
  // Accumulates the Gram matrix and cross product of a row-major n x m block:
  // gram (m x m, row-major) += X^T X, cross (m) += X^T y.
  void (*gram_accumulate)(const double* x, const double* y, std::size_t rows,
                          std::size_t cols, double* gram, double* cross);
};

const KernelTable& scalar_kernels();
// Null when the build or the CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// The table selected for this process.
const KernelTable& active();
std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline double sum(std::span<const double> a) {
  return active().sum(a.data(), a.size());
}

}  // namespace curie::simd
