#pragma once

// Dense row-major kernels used by the autodiff primitives.
//
// Every kernel exists twice: `serial::` is the straightforward reference
// loop kept for testing, the unqualified version is the OpenMP-parallel
// one used at runtime. Each output element is reduced by exactly one
// thread in the same order as the serial loop, so both paths produce
// bit-identical results.

#include <cstddef>
#include <span>

namespace sdd::kernels {

// C[m x n] = A[m x k] * B[k x n]
void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);

// C[m x n] += A^T * B with A[k x m], B[k x n]
void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t k, std::size_t m, std::size_t n);

// C[m x n] += A * B^T with A[m x k], B[n x k]
void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);

// Row-wise softmax over the last axis of a [rows x cols] block.
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n);
void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t k, std::size_t m, std::size_t n);
void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n);
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols);

}  // namespace serial

// Work (in multiply-adds) below which the parallel kernels run serially.
inline constexpr std::size_t kParallelThreshold = 1u << 15;

}  // namespace sdd::kernels
