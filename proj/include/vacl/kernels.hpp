#pragma once

// Dense inner loops used by training and penalty evaluation.
//
// Every kernel exists twice: a serial reference in vacl::kernels::serial and
// an OpenMP version in vacl::kernels::parallel. Both accumulate each output
// element in the same order, so their results are bit-identical; tests rely
// on this. The unqualified entry points pick one based on problem size.

#include <cstddef>
#include <functional>
#include <span>

namespace vacl::kernels {

/// c[m x n] = a[m x k] * b[k x n]
/// c[m x n] = a[m x k] * b[n x k]^T
/// c[m x n] = a[k x m]^T * b[k x n]
namespace serial {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void for_each_index(std::size_t count, const std::function<void(std::size_t)>& body);
}  // namespace serial

namespace parallel {
void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
/// Runs body(i) for i in [0, count) across threads. body must only write state owned by i.
void for_each_index(std::size_t count, const std::function<void(std::size_t)>& body);
}  // namespace parallel

void gemm_nn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_nt(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void gemm_tn(std::span<const double> a, std::span<const double> b, std::span<double> c, std::size_t m,
             std::size_t k, std::size_t n);
void for_each_index(std::size_t count, std::size_t work_per_index, const std::function<void(std::size_t)>& body);

/// Number of threads the parallel kernels would use from the calling context.
int max_threads();
/// True when compiled with OpenMP support.
bool openmp_enabled();

}  // namespace vacl::kernels
