#include "star/kernels.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace star::kernels {
namespace {

using v8d = double __attribute__((vector_size(64)));
using v8i = std::int64_t __attribute__((vector_size(64)));
constexpr std::size_t kLanes = 8;
constexpr std::size_t kMr = 8;
constexpr std::size_t kNr = 16;

inline v8d load8(const double* p) {
  v8d v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, v8d v) { std::memcpy(p, &v, sizeof(v)); }

// Packs columns [col0, n) of op(B) into panels of kNr columns: each panel
// holds k groups of kNr values, zero padded past n.
void pack_b(bool trans, std::size_t col0, std::size_t n, std::size_t k, const double* b,
            std::size_t ldb, std::vector<double>& out) {
  const std::size_t panels = (n - col0 + kNr - 1) / kNr;
  out.resize(panels * k * kNr);
  for (std::size_t p = 0; p < panels; ++p) {
    double* dst = out.data() + p * k * kNr;
    const std::size_t first = col0 + p * kNr;
    const std::size_t cols = std::min(kNr, n - first);
    if (cols < kNr) std::fill(dst, dst + k * kNr, 0.0);
    if (trans) {
      for (std::size_t c = 0; c < cols; ++c) {
        const double* src = b + (first + c) * ldb;
        for (std::size_t kk = 0; kk < k; ++kk) dst[kk * kNr + c] = src[kk];
      }
    }
  }
  if (trans) return;
  // Row by row so the source streams sequentially.
  const std::size_t full = (n - col0) / kNr;
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* src = b + kk * ldb + col0;
    for (std::size_t p = 0; p < full; ++p)
      std::memcpy(out.data() + (p * k + kk) * kNr, src + p * kNr, kNr * sizeof(double));
    if (full < panels)
      std::memcpy(out.data() + (full * k + kk) * kNr, src + full * kNr,
                  (n - col0 - full * kNr) * sizeof(double));
  }
}

// Column panels of op(B): panel p starts at base + p * panel_stride and its
// k-th row of kNr values at + k * k_step.
struct Panels {
  const double* base;
  std::size_t panel_stride;
  std::size_t k_step;
};

// C tile (Rows x kNr) (+)= op(A)[Rows rows] * one B panel. A element (r, kk)
// lives at a[r * row_stride + kk * k_stride].
template <std::size_t Rows>
inline void micro_kernel(std::size_t k, const double* __restrict a, std::size_t row_stride,
                         std::size_t k_stride, const double* __restrict bp, std::size_t k_step,
                         double* c, std::size_t ldc, bool accumulate) {
  static_assert(kNr == 2 * kLanes && Rows <= kMr);
  v8d lo[Rows];
  v8d hi[Rows];
  for (std::size_t r = 0; r < Rows; ++r) lo[r] = hi[r] = v8d{};
  for (std::size_t kk = 0; kk < k; ++kk) {
    const v8d b0 = load8(bp + kk * k_step);
    const v8d b1 = load8(bp + kk * k_step + kLanes);
    const double* ak = a + kk * k_stride;
    for (std::size_t r = 0; r < Rows; ++r) {
      const double ar = ak[r * row_stride];
      lo[r] += ar * b0;
      hi[r] += ar * b1;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    double* cr = c + r * ldc;
    if (accumulate) {
      lo[r] += load8(cr);
      hi[r] += load8(cr + kLanes);
    }
    store8(cr, lo[r]);
    store8(cr + kLanes, hi[r]);
  }
}

template <std::size_t Rows>
void row_block(std::size_t n, std::size_t k, const double* a, std::size_t row_stride,
               std::size_t k_stride, Panels full, const double* ragged, double* c,
               std::size_t ldc, bool accumulate) {
  const std::size_t full_panels = n / kNr;
  for (std::size_t jp = 0; jp < full_panels; ++jp)
    micro_kernel<Rows>(k, a, row_stride, k_stride, full.base + jp * full.panel_stride,
                       full.k_step, c + jp * kNr, ldc, accumulate);
  // Ragged last column panel goes through a scratch tile.
  if (const std::size_t cols = n - full_panels * kNr; cols > 0) {
    double tile[Rows * kNr];
    micro_kernel<Rows>(k, a, row_stride, k_stride, ragged, kNr, tile, kNr, false);
    for (std::size_t r = 0; r < Rows; ++r) {
      double* dst = c + r * ldc + full_panels * kNr;
      for (std::size_t cc = 0; cc < cols; ++cc)
        dst[cc] = (accumulate ? dst[cc] : 0.0) + tile[r * kNr + cc];
    }
  }
}

void gemm_blocked(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
                const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
                std::size_t ldc, bool accumulate) {
  thread_local std::vector<double> bpack;
  thread_local std::vector<double> apack;
  const std::size_t full_panels = n / kNr;
  Panels full{};
  const double* ragged = nullptr;
  // A panel read in place walks k rows of B; beyond a few hundred KB that
  // strides through too many pages, so large B is packed.
  if (trans_b || k * ldb > (std::size_t{1} << 15)) {
    pack_b(trans_b, 0, n, k, b, ldb, bpack);
    full = {bpack.data(), k * kNr, kNr};
    ragged = bpack.data() + full_panels * k * kNr;
  } else {
    // Row-major B already has kNr contiguous values per row in each panel.
    full = {b, kNr, ldb};
    if (full_panels * kNr < n) {
      pack_b(false, full_panels * kNr, n, k, b, ldb, bpack);
      ragged = bpack.data();
    }
  }
  if (trans_a) apack.resize(k * kMr);

  std::size_t i = 0;
  while (i < m) {
    const std::size_t rows = m - i >= kMr ? kMr : (m - i >= 4 ? 4 : 1);
    const double* ap = a + i * lda;
    std::size_t row_stride = lda;
    std::size_t k_stride = 1;
    if (trans_a) {
      // Stored k x m: gather this row block into k groups of `rows` values.
      for (std::size_t kk = 0; kk < k; ++kk)
        std::memcpy(apack.data() + kk * rows, a + kk * lda + i, rows * sizeof(double));
      ap = apack.data();
      row_stride = 1;
      k_stride = rows;
    }
    double* ci = c + i * ldc;
    if (rows == kMr)
      row_block<kMr>(n, k, ap, row_stride, k_stride, full, ragged, ci, ldc, accumulate);
    else if (rows == 4)
      row_block<4>(n, k, ap, row_stride, k_stride, full, ragged, ci, ldc, accumulate);
    else
      row_block<1>(n, k, ap, row_stride, k_stride, full, ragged, ci, ldc, accumulate);
    i += rows;
  }
}

}  // namespace

namespace {

// C += A^T B for A stored k x m and B k x (8 * NV). Rows of A are read in
// order, IB of them at a time, with the matching rows of B held in registers.
template <std::size_t NV, std::size_t IB>
void gemm_at_narrow(std::size_t m, std::size_t k, const double* a, std::size_t lda,
                    const double* b, std::size_t ldb, double* c, std::size_t ldc) {
  std::size_t i = 0;
  for (; i + IB <= k; i += IB) {
    v8d bv[IB][NV];
    const double* ar[IB];
    for (std::size_t r = 0; r < IB; ++r) {
      ar[r] = a + (i + r) * lda;
      for (std::size_t v = 0; v < NV; ++v) bv[r][v] = load8(b + (i + r) * ldb + 8 * v);
    }
    for (std::size_t j = 0; j < m; ++j) {
      double* cj = c + j * ldc;
      v8d acc[NV];
      for (std::size_t v = 0; v < NV; ++v) acc[v] = load8(cj + 8 * v);
      for (std::size_t r = 0; r < IB; ++r) {
        const double s = ar[r][j];
        for (std::size_t v = 0; v < NV; ++v) acc[v] += s * bv[r][v];
      }
      for (std::size_t v = 0; v < NV; ++v) store8(cj + 8 * v, acc[v]);
    }
  }
  for (; i < k; ++i) {
    const double* ai = a + i * lda;
    v8d bv[NV];
    for (std::size_t v = 0; v < NV; ++v) bv[v] = load8(b + i * ldb + 8 * v);
    for (std::size_t j = 0; j < m; ++j) {
      double* cj = c + j * ldc;
      for (std::size_t v = 0; v < NV; ++v) store8(cj + 8 * v, load8(cj + 8 * v) + ai[j] * bv[v]);
    }
  }
}

}  // namespace

void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
          const double* a, std::size_t lda, const double* b, std::size_t ldb, double* c,
          std::size_t ldc, bool accumulate) {
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    return;
  }
  if (trans_a && !trans_b && n % kLanes == 0 && n <= 4 * kLanes && n < m) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    switch (n / kLanes) {
      case 1: gemm_at_narrow<1, 8>(m, k, a, lda, b, ldb, c, ldc); break;
      case 2: gemm_at_narrow<2, 8>(m, k, a, lda, b, ldb, c, ldc); break;
      case 3: gemm_at_narrow<3, 4>(m, k, a, lda, b, ldb, c, ldc); break;
      default: gemm_at_narrow<4, 4>(m, k, a, lda, b, ldb, c, ldc); break;
    }
    return;
  }
  if (trans_a && n < m && n <= 2 * kNr) {
    // A stored k x m with few output columns: gathering A's columns would walk
    // a new page per k step, so form C^T = op(B)^T A instead, then scatter.
    thread_local std::vector<double> ct;
    ct.resize(n * m);
    gemm(!trans_b, false, n, m, k, b, ldb, a, lda, ct.data(), m, false);
    for (std::size_t i = 0; i < m; ++i) {
      double* ci = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) ci[j] = (accumulate ? ci[j] : 0.0) + ct[j * m + i];
    }
    return;
  }
  gemm_blocked(trans_a, trans_b, m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

namespace {

// exp(x) = 2^n * exp(r), x = n*ln2 + r, |r| <= ln2/2, exp(r) by a degree-13
// Taylor polynomial. The 2^n scale is applied in two halves so results in the
// subnormal range stay representable.
inline v8d exp8(v8d x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kMin = -745.0;
  constexpr double kMax = 709.0;
  constexpr double kRound = 6755399441055744.0;  // 1.5 * 2^52
  const v8d lo = v8d{} + kMin;
  const v8d hi = v8d{} + kMax;
  const auto underflow = x < lo;
  x = x < lo ? lo : x;
  x = x > hi ? hi : x;
  const v8d nf = (x * kLog2e + kRound) - kRound;
  const v8d r = (x - nf * kLn2Hi) - nf * kLn2Lo;
  // Estrin evaluation keeps the dependency chain short.
  const v8d r2 = r * r;
  const v8d r4 = r2 * r2;
  const v8d r8 = r4 * r4;
  const v8d q0 = 1.0 + r;
  const v8d q1 = 1.0 / 2 + r * (1.0 / 6);
  const v8d q2 = 1.0 / 24 + r * (1.0 / 120);
  const v8d q3 = 1.0 / 720 + r * (1.0 / 5040);
  const v8d q4 = 1.0 / 40320 + r * (1.0 / 362880);
  const v8d q5 = 1.0 / 3628800 + r * (1.0 / 39916800);
  const v8d q6 = 1.0 / 479001600 + r * (1.0 / 6227020800);
  const v8d e0 = q0 + r2 * q1;
  const v8d e1 = q2 + r2 * q3;
  const v8d e2 = q4 + r2 * q5;
  const v8d u0 = e0 + r4 * e1;
  const v8d u1 = e2 + r4 * q6;
  const v8d p = u0 + r8 * u1;
  const v8i ni = __builtin_convertvector(nf, v8i);
  const v8i n1 = ni >> 1;
  const v8i n2 = ni - n1;
  v8d s1;
  v8d s2;
  const v8i b1 = (n1 + 1023) << 52;
  const v8i b2 = (n2 + 1023) << 52;
  std::memcpy(&s1, &b1, sizeof(s1));
  std::memcpy(&s2, &b2, sizeof(s2));
  const v8d result = p * s1 * s2;
  return underflow ? v8d{} : result;
}

// Lanes past n are padded with `fill`.
inline v8d load_tail(const double* p, std::size_t n, double fill) {
  double buf[kLanes];
  for (std::size_t l = 0; l < kLanes; ++l) buf[l] = l < n ? p[l] : fill;
  return load8(buf);
}

inline void store_tail(double* p, std::size_t n, v8d v) {
  double buf[kLanes];
  store8(buf, v);
  std::memcpy(p, buf, n * sizeof(double));
}

inline double lane_sum(v8d v) {
  return ((v[0] + v[1]) + (v[2] + v[3])) + ((v[4] + v[5]) + (v[6] + v[7]));
}

}  // namespace

void exp_inplace(std::span<double> values) {
  double* v = values.data();
  const std::size_t n = values.size();
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) store8(v + i, exp8(load8(v + i)));
  if (i < n) store_tail(v + i, n - i, exp8(load_tail(v + i, n - i, 0.0)));
}

void softmax_row(std::span<double> row, double scale) {
  if (row.empty()) return;
  double* v = row.data();
  const std::size_t n = row.size();
  double mx = v[0];
  {
    v8d m = v8d{} + mx;
    std::size_t i = 0;
    for (; i + kLanes <= n; i += kLanes) {
      const v8d x = load8(v + i);
      m = x > m ? x : m;
    }
    for (std::size_t l = 0; l < kLanes; ++l) mx = std::max(mx, m[l]);
    for (; i < n; ++i) mx = std::max(mx, v[i]);
  }
  v8d acc{};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    const v8d y = exp8((load8(v + i) - mx) * scale);
    acc += y;
    store8(v + i, y);
  }
  if (i < n) {
    // -inf padding lanes underflow to 0 and leave the sum alone.
    const v8d y = exp8((load_tail(v + i, n - i, -HUGE_VAL) - mx) * scale);
    store_tail(v + i, n - i, y);
    acc += y;
  }
  const double inv = 1.0 / lane_sum(acc);
  i = 0;
  for (; i + kLanes <= n; i += kLanes) store8(v + i, load8(v + i) * inv);
  for (; i < n; ++i) v[i] *= inv;
}

double dot(const double* a, const double* b, std::size_t n) {
  v8d acc{};
  std::size_t i = 0;
  for (; i + kLanes <= n; i += kLanes) acc += load8(a + i) * load8(b + i);
  double s = lane_sum(acc);
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace star::kernels
