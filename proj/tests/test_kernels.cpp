#include <vector>

#include "doctest.h"
#include "odbss/errors.hpp"
#include "odbss/kernels.hpp"
#include "support.hpp"

using namespace odbss;
namespace k = odbss::kernels;

namespace {

struct Case {
    Matrix x;
    k::ColumnBlock block;
};

// Odd row counts exercise the vector tails; the leading dimension is padded.
Case make_case(std::size_t rows, std::size_t cols, Rng& rng) {
    Case c;
    c.x = testing::gaussian(rows + 3, cols, rng);
    c.block = k::ColumnBlock{c.x.data(), rows, cols, rows + 3};
    return c;
}

double max_rel(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, testing::rel_err(a[i], b[i]));
    return m;
}

}  // namespace

TEST_CASE("scalar and avx2 kernels agree") {
    if (!k::backend_available(k::Backend::Avx2)) {
        MESSAGE("AVX2 not available; skipping equivalence");
        return;
    }
    Rng rng(17);
    for (std::size_t rows : {1u, 3u, 4u, 5u, 17u, 64u, 301u}) {
        for (std::size_t cols : {1u, 2u, 3u, 7u, 8u, 9u}) {
            const Case c = make_case(rows, cols, rng);
            const Vector v = testing::gaussian_vec(cols, rng);
            Matrix s = testing::gaussian(cols, cols, rng);
            s = (s + s.transpose()).eval();
            const Vector w = testing::gaussian_vec(rows, rng).cwiseAbs();

            std::vector<double> a(rows), b(rows);
            k::scalar::dot_rows(c.block, v.data(), a.data());
            k::avx2::dot_rows(c.block, v.data(), b.data());
            CHECK(max_rel(a, b) < 1e-13);

            std::fill(a.begin(), a.end(), 1.5);
            std::fill(b.begin(), b.end(), 1.5);
            k::scalar::quad_form_rows(c.block, s.data(), a.data(), true);
            k::avx2::quad_form_rows(c.block, s.data(), b.data(), true);
            CHECK(max_rel(a, b) < 1e-12);
            k::scalar::quad_form_rows(c.block, s.data(), a.data(), false);
            k::avx2::quad_form_rows(c.block, s.data(), b.data(), false);
            CHECK(max_rel(a, b) < 1e-12);

            k::scalar::sq_dist_rows(c.block, v.data(), a.data());
            k::avx2::sq_dist_rows(c.block, v.data(), b.data());
            CHECK(max_rel(a, b) < 1e-13);

            std::vector<double> ga(cols * cols, 0.25), gb(cols * cols, 0.25);
            k::scalar::weighted_gram(c.block, w.data(), ga.data(), true);
            k::avx2::weighted_gram(c.block, w.data(), gb.data(), true);
            CHECK(max_rel(ga, gb) < 1e-12);
            k::scalar::weighted_gram(c.block, w.data(), ga.data(), false);
            k::avx2::weighted_gram(c.block, w.data(), gb.data(), false);
            CHECK(max_rel(ga, gb) < 1e-12);
        }
    }
}

TEST_CASE("scalar kernels match direct Eigen arithmetic") {
    Rng rng(5);
    const Case c = make_case(23, 4, rng);
    const Matrix x = c.x.topRows(23);
    const Vector v = testing::gaussian_vec(4, rng);
    Matrix s = testing::gaussian(4, 4, rng);
    s = (s + s.transpose()).eval();
    const Vector w = testing::gaussian_vec(23, rng).cwiseAbs();

    std::vector<double> out(23);
    k::scalar::dot_rows(c.block, v.data(), out.data());
    const Vector dots = x * v;
    for (int i = 0; i < 23; ++i) CHECK(out[i] == doctest::Approx(dots[i]).epsilon(1e-13));

    k::scalar::quad_form_rows(c.block, s.data(), out.data(), false);
    for (int i = 0; i < 23; ++i) {
        const Vector xi = x.row(i).transpose();
        CHECK(out[i] == doctest::Approx(xi.dot(s * xi)).epsilon(1e-12));
    }

    k::scalar::sq_dist_rows(c.block, v.data(), out.data());
    for (int i = 0; i < 23; ++i) CHECK(out[i] == doctest::Approx((x.row(i).transpose() - v).squaredNorm()).epsilon(1e-13));

    Matrix g(4, 4);
    k::scalar::weighted_gram(c.block, w.data(), g.data(), false);
    const Matrix ref = x.transpose() * w.asDiagonal() * x;
    CHECK((g - ref).cwiseAbs().maxCoeff() < 1e-12 * ref.cwiseAbs().maxCoeff());
}

TEST_CASE("backend selection and op counting") {
    const k::Backend original = k::active_backend();
    k::set_backend(k::Backend::Scalar);
    CHECK(k::active_backend() == k::Backend::Scalar);

    Rng rng(9);
    const Case c = make_case(50, 3, rng);
    const Vector v = testing::gaussian_vec(3, rng);
    std::vector<double> out(50);
    k::reset_op_count();
    k::dot_rows(c.block, std::span<const double>(v.data(), 3), out);
    CHECK(k::op_count() == 150);

    if (!k::backend_available(k::Backend::Avx2)) {
        CHECK_THROWS_AS(k::set_backend(k::Backend::Avx2), InvalidArgument);
    }
    k::set_backend(original);
}
