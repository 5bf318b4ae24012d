#pragma once

// Row-parallel arithmetic kernels over column-major blocks.
//
// All hot loops in the library (directional derivatives over candidate sets,
// information-distance rows over the full sample, DBSCAN neighbourhood scans)
// reduce to a handful of shapes: one small fixed vector or matrix applied to
// every row of a tall, narrow matrix. Storing that matrix column-major makes
// each covariate column contiguous, so the kernels vectorize across rows.
//
// Each kernel has a scalar reference implementation and an AVX2/FMA variant;
// the variant is picked once at runtime from CPUID and can be overridden with
// set_backend() or ODBSS_KERNELS=scalar in the environment.

#include <cstddef>
#include <cstdint>
#include <span>

namespace odbss::kernels {

struct ColumnBlock {
    const double* data = nullptr;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t ld = 0;  // distance between consecutive columns, >= rows

    const double* col(std::size_t a) const { return data + a * ld; }

    // Rows [begin, end) as a block sharing storage.
    ColumnBlock slice(std::size_t begin, std::size_t end) const {
        return ColumnBlock{data + begin, end - begin, cols, ld};
    }
};

enum class Backend { Scalar, Avx2 };

const char* backend_name(Backend b);
bool backend_available(Backend b);
Backend active_backend();
// Throws InvalidArgument if the backend is not supported by this CPU/build.
void set_backend(Backend b);

// out[j] = sum_a v[a] * X(j, a)
void dot_rows(const ColumnBlock& x, std::span<const double> v, std::span<double> out);

// out[j] (+)= x_j^T S x_j for a symmetric cols x cols matrix S stored column-major.
void quad_form_rows(const ColumnBlock& x, std::span<const double> s, std::span<double> out,
                    bool accumulate = false);

// out[j] = || x_j - point ||^2
void sq_dist_rows(const ColumnBlock& x, std::span<const double> point, std::span<double> out);

// gram(a, b) (+)= sum_j w[j] X(j, a) X(j, b); gram is cols x cols column-major.
void weighted_gram(const ColumnBlock& x, std::span<const double> w, std::span<double> gram,
                   bool accumulate = false);

// Element-operation accounting: every kernel call adds rows*cols (rows*cols^2
// for the quadratic kernels) to a thread-local counter. Used to check the
// arithmetic complexity of batched routines.
std::uint64_t op_count();
void reset_op_count();

namespace scalar {
void dot_rows(const ColumnBlock& x, const double* v, double* out);
void quad_form_rows(const ColumnBlock& x, const double* s, double* out, bool accumulate);
void sq_dist_rows(const ColumnBlock& x, const double* point, double* out);
void weighted_gram(const ColumnBlock& x, const double* w, double* gram, bool accumulate);
}  // namespace scalar

namespace avx2 {
void dot_rows(const ColumnBlock& x, const double* v, double* out);
void quad_form_rows(const ColumnBlock& x, const double* s, double* out, bool accumulate);
void sq_dist_rows(const ColumnBlock& x, const double* point, double* out);
void weighted_gram(const ColumnBlock& x, const double* w, double* gram, bool accumulate);
}  // namespace avx2

}  // namespace odbss::kernels
