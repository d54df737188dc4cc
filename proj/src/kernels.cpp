#include "sdd/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>

namespace sdd::kernels {

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
            c[i * n + j] = acc;
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t k, std::size_t m, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * n + j] += acc;
        }
    }
}

void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[j * k + p];
            c[i * n + j] += acc;
        }
    }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double* x = in.data() + r * cols;
        double* y = out.data() + r * cols;
        const double mx = *std::max_element(x, x + cols);
        double total = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            y[j] = std::exp(x[j] - mx);
            total += y[j];
        }
        for (std::size_t j = 0; j < cols; ++j) y[j] /= total;
    }
}

}  // namespace serial

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n) {
    if (m * k * n < kParallelThreshold) {
        serial::matmul(a, b, c, m, k, n);
        return;
    }
    const auto mm = static_cast<std::int64_t>(m);
    const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t i = 0; i < mm; ++i) {
        for (std::int64_t j = 0; j < nn; ++j) {
            const double* row = a.data() + i * static_cast<std::int64_t>(k);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += row[p] * b[p * n + j];
            c[i * nn + j] = acc;
        }
    }
}

void matmul_at_b_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t k, std::size_t m, std::size_t n) {
    if (m * k * n < kParallelThreshold) {
        serial::matmul_at_b_acc(a, b, c, k, m, n);
        return;
    }
    const auto mm = static_cast<std::int64_t>(m);
    const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t i = 0; i < mm; ++i) {
        for (std::int64_t j = 0; j < nn; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += a[p * m + i] * b[p * n + j];
            c[i * nn + j] += acc;
        }
    }
}

void matmul_a_bt_acc(std::span<const double> a, std::span<const double> b, std::span<double> c,
                     std::size_t m, std::size_t k, std::size_t n) {
    if (m * k * n < kParallelThreshold) {
        serial::matmul_a_bt_acc(a, b, c, m, k, n);
        return;
    }
    const auto mm = static_cast<std::int64_t>(m);
    const auto nn = static_cast<std::int64_t>(n);
#pragma omp parallel for collapse(2) schedule(static)
    for (std::int64_t i = 0; i < mm; ++i) {
        for (std::int64_t j = 0; j < nn; ++j) {
            const double* x = a.data() + i * static_cast<std::int64_t>(k);
            const double* y = b.data() + j * static_cast<std::int64_t>(k);
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += x[p] * y[p];
            c[i * nn + j] += acc;
        }
    }
}

void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t rows,
                  std::size_t cols) {
    if (rows * cols < kParallelThreshold) {
        serial::softmax_rows(in, out, rows, cols);
        return;
    }
    const auto rr = static_cast<std::int64_t>(rows);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rr; ++r) {
        serial::softmax_rows(in.subspan(static_cast<std::size_t>(r) * cols, cols),
                             out.subspan(static_cast<std::size_t>(r) * cols, cols), 1, cols);
    }
}

}  // namespace sdd::kernels
