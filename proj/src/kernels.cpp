#include "odbss/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>
#include <string>

#include "odbss/errors.hpp"

namespace odbss::kernels {

namespace scalar {

void dot_rows(const ColumnBlock& x, const double* v, double* out) {
    for (std::size_t j = 0; j < x.rows; ++j) out[j] = 0.0;
    for (std::size_t a = 0; a < x.cols; ++a) {
        const double* c = x.col(a);
        const double va = v[a];
        for (std::size_t j = 0; j < x.rows; ++j) out[j] += va * c[j];
    }
}

void quad_form_rows(const ColumnBlock& x, const double* s, double* out, bool accumulate) {
    const std::size_t d = x.cols;
    for (std::size_t j = 0; j < x.rows; ++j) {
        double acc = 0.0;
        for (std::size_t a = 0; a < d; ++a) {
            double t = 0.0;
            for (std::size_t b = 0; b < d; ++b) t += s[a * d + b] * x.col(b)[j];
            acc += x.col(a)[j] * t;
        }
        out[j] = accumulate ? out[j] + acc : acc;
    }
}

void sq_dist_rows(const ColumnBlock& x, const double* point, double* out) {
    for (std::size_t j = 0; j < x.rows; ++j) out[j] = 0.0;
    for (std::size_t a = 0; a < x.cols; ++a) {
        const double* c = x.col(a);
        const double pa = point[a];
        for (std::size_t j = 0; j < x.rows; ++j) {
            const double diff = c[j] - pa;
            out[j] += diff * diff;
        }
    }
}

void weighted_gram(const ColumnBlock& x, const double* w, double* gram, bool accumulate) {
    const std::size_t d = x.cols;
    for (std::size_t a = 0; a < d; ++a) {
        const double* ca = x.col(a);
        for (std::size_t b = a; b < d; ++b) {
            const double* cb = x.col(b);
            double acc = 0.0;
            for (std::size_t j = 0; j < x.rows; ++j) acc += w[j] * ca[j] * cb[j];
            if (accumulate) {
                gram[a * d + b] += acc;
                if (a != b) gram[b * d + a] += acc;
            } else {
                gram[a * d + b] = acc;
                gram[b * d + a] = acc;
            }
        }
    }
}

}  // namespace scalar

namespace {

struct Table {
    Backend backend;
    void (*dot_rows)(const ColumnBlock&, const double*, double*);
    void (*quad_form_rows)(const ColumnBlock&, const double*, double*, bool);
    void (*sq_dist_rows)(const ColumnBlock&, const double*, double*);
    void (*weighted_gram)(const ColumnBlock&, const double*, double*, bool);
};

constexpr Table kScalar{Backend::Scalar, scalar::dot_rows, scalar::quad_form_rows,
                        scalar::sq_dist_rows, scalar::weighted_gram};

#ifdef ODBSS_HAVE_AVX2_KERNELS
constexpr Table kAvx2{Backend::Avx2, avx2::dot_rows, avx2::quad_form_rows, avx2::sq_dist_rows,
                      avx2::weighted_gram};
#endif

bool cpu_has_avx2() {
#if defined(ODBSS_HAVE_AVX2_KERNELS) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const Table* initial_table() {
    const char* env = std::getenv("ODBSS_KERNELS");
    if (env != nullptr && std::strcmp(env, "scalar") == 0) return &kScalar;
#ifdef ODBSS_HAVE_AVX2_KERNELS
    if (cpu_has_avx2()) return &kAvx2;
#endif
    return &kScalar;
}

std::atomic<const Table*>& table() {
    static std::atomic<const Table*> t{initial_table()};
    return t;
}

thread_local std::uint64_t t_ops = 0;

void check_sizes(const ColumnBlock& x, std::size_t vec, std::size_t want_vec, std::size_t out,
                 std::size_t want_out) {
    if (x.cols > 0 && x.ld < x.rows)
        throw InvalidArgument("kernel: leading dimension smaller than row count");
    if (vec < want_vec || out < want_out)
        throw InvalidArgument("kernel: argument span too small");
}

}  // namespace

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar:
            return "scalar";
        case Backend::Avx2:
            return "avx2";
    }
    return "unknown";
}

bool backend_available(Backend b) {
    if (b == Backend::Scalar) return true;
    return cpu_has_avx2();
}

Backend active_backend() { return table().load()->backend; }

void set_backend(Backend b) {
    if (!backend_available(b))
        throw InvalidArgument(std::string("kernel backend unavailable: ") + backend_name(b));
    if (b == Backend::Scalar) {
        table().store(&kScalar);
        return;
    }
#ifdef ODBSS_HAVE_AVX2_KERNELS
    table().store(&kAvx2);
#endif
}

void dot_rows(const ColumnBlock& x, std::span<const double> v, std::span<double> out) {
    check_sizes(x, v.size(), x.cols, out.size(), x.rows);
    t_ops += x.rows * x.cols;
    table().load()->dot_rows(x, v.data(), out.data());
}

void quad_form_rows(const ColumnBlock& x, std::span<const double> s, std::span<double> out,
                    bool accumulate) {
    check_sizes(x, s.size(), x.cols * x.cols, out.size(), x.rows);
    t_ops += x.rows * x.cols * x.cols;
    table().load()->quad_form_rows(x, s.data(), out.data(), accumulate);
}

void sq_dist_rows(const ColumnBlock& x, std::span<const double> point, std::span<double> out) {
    check_sizes(x, point.size(), x.cols, out.size(), x.rows);
    t_ops += x.rows * x.cols;
    table().load()->sq_dist_rows(x, point.data(), out.data());
}

void weighted_gram(const ColumnBlock& x, std::span<const double> w, std::span<double> gram,
                   bool accumulate) {
    check_sizes(x, w.size(), x.rows, gram.size(), x.cols * x.cols);
    t_ops += x.rows * x.cols * (x.cols + 1) / 2;
    table().load()->weighted_gram(x, w.data(), gram.data(), accumulate);
}

std::uint64_t op_count() { return t_ops; }
void reset_op_count() { t_ops = 0; }

}  // namespace odbss::kernels
