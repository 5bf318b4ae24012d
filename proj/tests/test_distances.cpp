#include <cmath>

#include "doctest.h"
#include "odbss/distances.hpp"
#include "odbss/errors.hpp"
#include "odbss/kernels.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace odbss;
using oracle::dense_oracle;
using oracle::haar_orthogonal;
using oracle::psd_sqrt;

namespace {

InfoFactor factor_of(const Matrix& f) { return InfoFactor{f}; }

}  // namespace

TEST_CASE("metric names") {
    CHECK(parse_metric("frobenius") == Metric::Frobenius);
    CHECK(parse_metric("sqrt") == Metric::SquareRoot);
    CHECK(parse_metric("procrustes") == Metric::Procrustes);
    CHECK(metric_name(Metric::SquareRoot) == "sqrt");
    CHECK_THROWS_AS(parse_metric("l2"), InvalidArgument);
}

TEST_CASE("logistic p = 1 hand example") {
    const ModelSpec m{Family::Logistic, 1};
    Vector x0(1), x1(1);
    x0 << 0.0;
    x1 << 1.0;
    const InfoFactor a = fisher_info(m, Vector::Zero(2), x0);
    const InfoFactor b = fisher_info(m, Vector::Zero(2), x1);
    CHECK(distance(Metric::Frobenius, a, b) == doctest::Approx(std::sqrt(3.0) / 4.0).epsilon(1e-14));
    for (Metric mt : {Metric::Frobenius, Metric::SquareRoot, Metric::Procrustes}) {
        CHECK(distance(mt, a, a) == 0.0);
        CHECK(distance(mt, a, b) == doctest::Approx(dense_oracle(mt, a.dense(), b.dense())).epsilon(1e-12));
    }
}

TEST_CASE("rank-1 closed forms agree with dense computation") {
    Rng rng(1);
    for (int t = 0; t < 1000; ++t) {
        const std::size_t d = 1 + static_cast<std::size_t>(t % 8);
        const Matrix fa = testing::gaussian(d, 1, rng), fb = testing::gaussian(d, 1, rng);
        const Matrix a = fa * fa.transpose(), b = fb * fb.transpose();
        for (Metric mt : {Metric::Frobenius, Metric::SquareRoot, Metric::Procrustes}) {
            const double fast = distance(mt, factor_of(fa), factor_of(fb));
            CHECK(testing::rel_err(fast, dense_oracle(mt, a, b)) < 1e-10);
            CHECK(testing::rel_err(fast, distance_dense(mt, a, b)) < 1e-10);
        }
    }
}

TEST_CASE("rank-2 factor formulas agree with dense computation") {
    Rng rng(2);
    for (int t = 0; t < 500; ++t) {
        const std::size_t d = 2 + static_cast<std::size_t>(t % 6);
        const Matrix fa = testing::gaussian(d, 2, rng), fb = testing::gaussian(d, 2, rng);
        const Matrix a = fa * fa.transpose(), b = fb * fb.transpose();
        CHECK(testing::rel_err(distance(Metric::Frobenius, factor_of(fa), factor_of(fb)),
                               dense_oracle(Metric::Frobenius, a, b)) < 1e-10);
        CHECK(testing::rel_err(distance(Metric::SquareRoot, factor_of(fa), factor_of(fb)),
                               dense_oracle(Metric::SquareRoot, a, b)) < 1e-8);
        CHECK(testing::rel_err(distance(Metric::Procrustes, factor_of(fa), factor_of(fb)),
                               dense_oracle(Metric::Procrustes, a, b)) < 1e-8);
    }
    // Rank-deficient rank-2 factor (parallel columns).
    Matrix fa(3, 2);
    fa << 1, 2, 0, 0, 1, 2;
    const Matrix fb = testing::gaussian(3, 2, rng);
    for (Metric mt : {Metric::SquareRoot, Metric::Procrustes})
        CHECK(testing::rel_err(distance(mt, factor_of(fa), factor_of(fb)),
                               dense_oracle(mt, fa * fa.transpose(), fb * fb.transpose())) < 1e-8);
}

TEST_CASE("Procrustes formula is a lower bound over random rotations") {
    Rng rng(3);
    for (int t = 0; t < 5; ++t) {
        const std::size_t d = 2 + static_cast<std::size_t>(t % 3);
        const Matrix fa = testing::gaussian(d, 2, rng), fb = testing::gaussian(d, 2, rng);
        const Matrix ra = psd_sqrt(fa * fa.transpose()), rb = psd_sqrt(fb * fb.transpose());
        const double formula = distance(Metric::Procrustes, factor_of(fa), factor_of(fb));
        double sampled = std::numeric_limits<double>::infinity();
        for (int s = 0; s < 10000; ++s) sampled = std::min(sampled, (ra - rb * haar_orthogonal(d, rng)).norm());
        CHECK(formula <= sampled + 1e-12);
    }
}

TEST_CASE("symmetry, scaling and triangle inequality") {
    Rng rng(4);
    for (int t = 0; t < 200; ++t) {
        const std::size_t d = 2 + static_cast<std::size_t>(t % 4);
        const std::size_t r = 1 + static_cast<std::size_t>(t % 2);
        const Matrix fa = testing::gaussian(d, r, rng), fb = testing::gaussian(d, r, rng),
                     fc = testing::gaussian(d, r, rng);
        for (Metric mt : {Metric::Frobenius, Metric::SquareRoot, Metric::Procrustes}) {
            const double ab = distance(mt, factor_of(fa), factor_of(fb));
            CHECK(ab >= 0.0);
            CHECK(ab == doctest::Approx(distance(mt, factor_of(fb), factor_of(fa))).epsilon(1e-12));
            if (mt == Metric::Procrustes) continue;
            const double ac = distance(mt, factor_of(fa), factor_of(fc));
            const double cb = distance(mt, factor_of(fc), factor_of(fb));
            CHECK(ab <= ac + cb + 1e-9);
        }
        const double c = 0.5 + t * 0.01;
        // Scaling the matrices by c scales the factors by sqrt(c).
        CHECK(distance(Metric::Frobenius, factor_of(std::sqrt(c) * fa), factor_of(std::sqrt(c) * fb)) ==
              doctest::Approx(c * distance(Metric::Frobenius, factor_of(fa), factor_of(fb))).epsilon(1e-10));
    }
}

TEST_CASE("distance rows match pointwise distances") {
    Rng rng(5);
    for (Family fam : {Family::Logistic, Family::HeteroLogVar}) {
        const ModelSpec m{fam, 3};
        const Vector beta = testing::gaussian_vec(4, rng, 0.5);
        Matrix pts = testing::gaussian(257, 3, rng);
        const Dataset data(pts);
        const InfoFactor a = fisher_info(m, beta, pts.row(10).transpose());
        for (Metric mt : {Metric::Frobenius, Metric::SquareRoot, Metric::Procrustes}) {
            const Vector row = distance_row(mt, a, data, m, beta);
            REQUIRE(row.size() == 257);
            CHECK(row[10] < 1e-7 * std::sqrt(a.dense().norm()));
            for (Eigen::Index j = 0; j < 257; ++j) {
                const double ref = distance(mt, a, fisher_info(m, beta, pts.row(j).transpose()));
                CHECK(std::abs(row[j] - ref) <= 1e-10 * std::max(1.0, ref));
            }
        }
    }
}

TEST_CASE("rank-1 distance rows cost n times dim_beta kernel operations") {
    Rng rng(6);
    for (std::size_t n : {100u, 1000u, 10000u}) {
        for (std::size_t p : {2u, 5u}) {
            const ModelSpec m{Family::Logistic, p};
            const Vector beta = testing::gaussian_vec(p + 1, rng, 0.5);
            const FactorTable t(m, beta, testing::gaussian(n, p, rng));
            const InfoFactor a = t.factor(0);
            for (Metric mt : {Metric::Frobenius, Metric::SquareRoot, Metric::Procrustes}) {
                kernels::reset_op_count();
                (void)distance_row(mt, a, t);
                CHECK(kernels::op_count() == n * (p + 1));
            }
        }
    }
}
