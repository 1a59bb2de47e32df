#pragma once

#include <cstddef>
#include <span>

namespace star::kernels {

/// C (+)= op(A) * op(B) for row-major operands. op(A) is m x k, op(B) is k x n.
/// With trans_a, A is stored k x m; with trans_b, B is stored n x k.
/// Each output element is reduced over k in ascending order, so results are
/// reproducible run to run.
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate);

/// In-place exp with ~1 ulp accuracy over the range softmax needs (inputs <= 0
/// after max subtraction); arguments below -745 flush to zero.
void exp_inplace(std::span<double> values);

/// In-place softmax of scale * row, stabilized by subtracting the row max.
/// `scale` must be positive.
void softmax_row(std::span<double> row, double scale = 1.0);

double dot(const double* a, const double* b, std::size_t n);

/// Keeps large freed blocks in the heap (glibc) so the multi-megabyte attention
/// buffers of consecutive forward passes reuse pages instead of faulting in
/// fresh ones. Call once at program start; a no-op elsewhere.
void configure_allocator();

}  // namespace star::kernels
