#pragma once

#include <Eigen/Core>

namespace ddnd::detail {

// Row-major GEMM wrappers over Eigen. All dense inner products in the library
// (matmul, conv2d via im2col, linear layers) funnel through these, in both the
// float64 training path and the float32 inference path.

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C = A(MxK) * B(KxN), optionally accumulating into C.
template <typename T>
void gemm(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, m, k);
    ConstMatMap<T> B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

// C = A^T(MxK from KxM) * B(KxN)
template <typename T>
void gemm_at_b(const T* a, const T* b, T* c, int k, int m, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, k, m);
    ConstMatMap<T> B(b, k, n);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

// C = A(MxK) * B^T(KxN from NxK)
template <typename T>
void gemm_a_bt(const T* a, const T* b, T* c, int m, int k, int n, bool accumulate = false) {
    ConstMatMap<T> A(a, m, k);
    ConstMatMap<T> B(b, n, k);
    MatMap<T> C(c, m, n);
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

}  // namespace ddnd::detail
