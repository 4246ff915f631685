#include "r2t/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cstring>
#include <vector>

namespace r2t::kernels {
namespace {

constexpr int kRowBlock = 4;
constexpr int kColBlock = 64;
constexpr long kParallelWork = 1L << 18;

template <typename T>
std::vector<T>& scratch(int slot) {
  thread_local std::vector<T> buffers[2];
  return buffers[slot];
}

template <typename T>
const T* transpose_into(const T* src, int rows, int cols, std::vector<T>& dst) {
  dst.resize(static_cast<size_t>(rows) * cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) dst[static_cast<size_t>(c) * rows + r] = src[static_cast<size_t>(r) * cols + c];
  return dst.data();
}

// Full 4 x 64 tile: fixed trip counts let the compiler keep acc in registers.
template <typename T>
inline void tile_full(const T* a, const T* b, T* c, int n, int k) {
  T acc[kRowBlock][kColBlock];
  for (int r = 0; r < kRowBlock; ++r)
    for (int j = 0; j < kColBlock; ++j) acc[r][j] = c[r * n + j];
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<size_t>(p) * n;
    const T a0 = a[p], a1 = a[k + p], a2 = a[2 * k + p], a3 = a[3 * k + p];
#pragma omp simd
    for (int j = 0; j < kColBlock; ++j) {
      const T bv = brow[j];
      acc[0][j] += a0 * bv;
      acc[1][j] += a1 * bv;
      acc[2][j] += a2 * bv;
      acc[3][j] += a3 * bv;
    }
  }
  for (int r = 0; r < kRowBlock; ++r)
    for (int j = 0; j < kColBlock; ++j) c[r * n + j] = acc[r][j];
}

template <typename T>
inline void tile_edge(const T* a, const T* b, T* c, int n, int k, int rows, int cols) {
  T acc[kRowBlock][kColBlock];
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) acc[r][j] = c[r * n + j];
  for (int p = 0; p < k; ++p) {
    const T* brow = b + static_cast<size_t>(p) * n;
    for (int r = 0; r < rows; ++r) {
      const T av = a[r * k + p];
#pragma omp simd
      for (int j = 0; j < cols; ++j) acc[r][j] += av * brow[j];
    }
  }
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < cols; ++j) c[r * n + j] = acc[r][j];
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

template <typename T>
void gemm(Trans ta, Trans tb, int m, int n, int k, const T* a, const T* b, T* c,
          bool accumulate) {
  if (m == 0 || n == 0) return;
  if (!accumulate) std::memset(c, 0, sizeof(T) * static_cast<size_t>(m) * n);
  if (k == 0) return;
  if (ta == Trans::kYes) a = transpose_into(a, k, m, scratch<T>(0));
  if (tb == Trans::kYes) b = transpose_into(b, n, k, scratch<T>(1));

  const int row_blocks = (m + kRowBlock - 1) / kRowBlock;
  const long work = static_cast<long>(m) * n * k;
#pragma omp parallel for schedule(static) if (work > kParallelWork)
  for (int blk = 0; blk < row_blocks; ++blk) {
    const int i0 = blk * kRowBlock;
    const int rows = std::min(kRowBlock, m - i0);
    const T* ablk = a + static_cast<size_t>(i0) * k;
    T* cblk = c + static_cast<size_t>(i0) * n;
    for (int j0 = 0; j0 < n; j0 += kColBlock) {
      const int cols = std::min(kColBlock, n - j0);
      if (rows == kRowBlock && cols == kColBlock)
        tile_full(ablk, b + j0, cblk + j0, n, k);
      else
        tile_edge(ablk, b + j0, cblk + j0, n, k, rows, cols);
    }
  }
}

template <typename T>
void im2col(const T* x, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* col) {
  const int plane = ho * wo;
#pragma omp parallel for schedule(static) if (channels * plane * ks * ks > kParallelWork)
  for (int ch = 0; ch < channels; ++ch) {
    const T* xc = x + static_cast<size_t>(ch) * h * w;
    for (int ky = 0; ky < ks; ++ky)
      for (int kx = 0; kx < ks; ++kx) {
        T* row = col + (static_cast<size_t>(ch) * ks * ks + ky * ks + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            row[oy * wo + ox] =
                (iy >= 0 && iy < h && ix >= 0 && ix < w) ? xc[iy * w + ix] : T(0);
          }
        }
      }
  }
}

template <typename T>
void col2im(const T* col, int channels, int h, int w, int ks, int stride, int pad, int ho, int wo,
            T* x) {
  const int plane = ho * wo;
#pragma omp parallel for schedule(static) if (channels * plane * ks * ks > kParallelWork)
  for (int ch = 0; ch < channels; ++ch) {
    T* xc = x + static_cast<size_t>(ch) * h * w;
    for (int ky = 0; ky < ks; ++ky)
      for (int kx = 0; kx < ks; ++kx) {
        const T* row = col + (static_cast<size_t>(ch) * ks * ks + ky * ks + kx) * plane;
        for (int oy = 0; oy < ho; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int ox = 0; ox < wo; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < w) xc[iy * w + ix] += row[oy * wo + ox];
          }
        }
      }
  }
}

#define R2T_INSTANTIATE(T)                                                                     \
  template void gemm<T>(Trans, Trans, int, int, int, const T*, const T*, T*, bool);           \
  template void im2col<T>(const T*, int, int, int, int, int, int, int, int, T*);              \
  template void col2im<T>(const T*, int, int, int, int, int, int, int, int, T*);

R2T_INSTANTIATE(float)
R2T_INSTANTIATE(double)
#undef R2T_INSTANTIATE

}  // namespace r2t::kernels
