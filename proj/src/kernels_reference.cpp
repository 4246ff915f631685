#include "r2t/kernels.hpp"

#include <cstddef>

namespace r2t::kernels::reference {

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T sum = accumulate ? c[static_cast<size_t>(i) * n + j] : T(0);
      for (int p = 0; p < k; ++p) {
        const T av = ta == Trans::kYes ? a[static_cast<size_t>(p) * m + i] : a[static_cast<size_t>(i) * k + p];
        const T bv = tb == Trans::kYes ? b[static_cast<size_t>(j) * k + p] : b[static_cast<size_t>(p) * n + j];
        sum += av * bv;
      }
      c[static_cast<size_t>(i) * n + j] = sum;
    }
}

template <typename T>
void im2col(const T* x, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* col) {
  for (int ch = 0; ch < channels; ++ch)
    for (int ky = 0; ky < ks; ++ky)
      for (int kx = 0; kx < ks; ++kx)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            const size_t r = static_cast<size_t>(ch) * ks * ks + ky * ks + kx;
            T v = 0;
            if (iy >= 0 && iy < h && ix >= 0 && ix < w) v = x[(static_cast<size_t>(ch) * h + iy) * w + ix];
            col[r * ho * wo + oy * wo + ox] = v;
          }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* x) {
  for (int ch = 0; ch < channels; ++ch)
    for (int ky = 0; ky < ks; ++ky)
      for (int kx = 0; kx < ks; ++kx)
        for (int oy = 0; oy < ho; ++oy)
          for (int ox = 0; ox < wo; ++ox) {
            const int iy = oy * stride - pad + ky;
            const int ix = ox * stride - pad + kx;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            const size_t r = static_cast<size_t>(ch) * ks * ks + ky * ks + kx;
            x[(static_cast<size_t>(ch) * h + iy) * w + ix] += col[r * ho * wo + oy * wo + ox];
          }
}

#define R2T_INSTANTIATE(T)                                                                     \
  template void gemm<T>(Trans, Trans, int, int, int, const T*, const T*, T*, bool);           \
  template void im2col<T>(const T*, int, int, int, int, int, int, int, int, T*);              \
  template void col2im<T>(const T*, int, int, int, int, int, int, int, int, T*);

R2T_INSTANTIATE(float)
R2T_INSTANTIATE(double)
#undef R2T_INSTANTIATE

}  // namespace r2t::kernels::reference
