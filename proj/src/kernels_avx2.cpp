// Compiled with -mavx2 -mfma; only reached after the CPUID check in kernels.cpp.

#include <immintrin.h>

#include <vector>

#include "odbss/kernels.hpp"

namespace odbss::kernels::avx2 {

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

inline std::size_t vec_end(std::size_t rows) { return rows & ~std::size_t{3}; }

}  // namespace

void dot_rows(const ColumnBlock& x, const double* v, double* out) {
    const std::size_t n4 = vec_end(x.rows);
    for (std::size_t j = 0; j < n4; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t a = 0; a < x.cols; ++a)
            acc = _mm256_fmadd_pd(_mm256_set1_pd(v[a]), _mm256_loadu_pd(x.col(a) + j), acc);
        _mm256_storeu_pd(out + j, acc);
    }
    if (n4 < x.rows) scalar::dot_rows(x.slice(n4, x.rows), v, out + n4);
}

void quad_form_rows(const ColumnBlock& x, const double* s, double* out, bool accumulate) {
    const std::size_t d = x.cols;
    const std::size_t n4 = vec_end(x.rows);
    for (std::size_t j = 0; j < n4; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t a = 0; a < d; ++a) {
            __m256d t = _mm256_setzero_pd();
            const double* sa = s + a * d;
            for (std::size_t b = 0; b < d; ++b)
                t = _mm256_fmadd_pd(_mm256_set1_pd(sa[b]), _mm256_loadu_pd(x.col(b) + j), t);
            acc = _mm256_fmadd_pd(_mm256_loadu_pd(x.col(a) + j), t, acc);
        }
        if (accumulate) acc = _mm256_add_pd(acc, _mm256_loadu_pd(out + j));
        _mm256_storeu_pd(out + j, acc);
    }
    if (n4 < x.rows) scalar::quad_form_rows(x.slice(n4, x.rows), s, out + n4, accumulate);
}

void sq_dist_rows(const ColumnBlock& x, const double* point, double* out) {
    const std::size_t n4 = vec_end(x.rows);
    for (std::size_t j = 0; j < n4; j += 4) {
        __m256d acc = _mm256_setzero_pd();
        for (std::size_t a = 0; a < x.cols; ++a) {
            __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(x.col(a) + j), _mm256_set1_pd(point[a]));
            acc = _mm256_fmadd_pd(diff, diff, acc);
        }
        _mm256_storeu_pd(out + j, acc);
    }
    if (n4 < x.rows) scalar::sq_dist_rows(x.slice(n4, x.rows), point, out + n4);
}

void weighted_gram(const ColumnBlock& x, const double* w, double* gram, bool accumulate) {
    const std::size_t d = x.cols;
    const std::size_t n4 = vec_end(x.rows);
    struct Lane {
        __m256d v;
    };
    std::vector<Lane> acc(d * d, Lane{_mm256_setzero_pd()});
    for (std::size_t j = 0; j < n4; j += 4) {
        const __m256d wv = _mm256_loadu_pd(w + j);
        for (std::size_t a = 0; a < d; ++a) {
            const __m256d wa = _mm256_mul_pd(wv, _mm256_loadu_pd(x.col(a) + j));
            for (std::size_t b = a; b < d; ++b)
                acc[a * d + b].v = _mm256_fmadd_pd(wa, _mm256_loadu_pd(x.col(b) + j), acc[a * d + b].v);
        }
    }
    std::vector<double> tail(d * d, 0.0);
    if (n4 < x.rows) scalar::weighted_gram(x.slice(n4, x.rows), w + n4, tail.data(), false);
    for (std::size_t a = 0; a < d; ++a) {
        for (std::size_t b = a; b < d; ++b) {
            const double v = hsum(acc[a * d + b].v) + tail[a * d + b];
            if (accumulate) {
                gram[a * d + b] += v;
                if (a != b) gram[b * d + a] += v;
            } else {
                gram[a * d + b] = v;
                gram[b * d + a] = v;
            }
        }
    }
}

}  // namespace odbss::kernels::avx2
