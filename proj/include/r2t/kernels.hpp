#pragma once

// Dense compute kernels behind the autograd ops. The functions in
// r2t::kernels are OpenMP-parallel over independent output rows/channels;
// every output element is produced by one thread with a fixed summation
// order, so results do not depend on the thread count.
//
// r2t::kernels::reference holds the plain serial loops the fast versions are
// tested against.

namespace r2t::kernels {

enum class Trans { kNo, kYes };

/// C[M,N] (+)= op(A)[M,K] * op(B)[K,N], all row-major.
/// op(A) = A (stored MxK) or A^T (stored KxM); likewise for B.
template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

/// Unfolds x[C,H,W] into col[C*ks*ks, Ho*Wo] for a square kernel.
template <typename T>
void im2col(const T* x, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* col);

/// Adjoint of im2col: scatters col back into x, adding to existing values.
template <typename T>
void col2im(const T* col, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* x);

/// Number of OpenMP threads the kernels will use.
int max_threads();

namespace reference {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate);

template <typename T>
void im2col(const T* x, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* col);

template <typename T>
void col2im(const T* col, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* x);

}  // namespace reference
}  // namespace r2t::kernels
