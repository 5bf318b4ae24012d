#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "odbss/bench.hpp"
#include "odbss/errors.hpp"
#include "odbss/models.hpp"
#include "support.hpp"

using namespace odbss;

namespace {

// Responses drawn from the model itself so every instance has an interior MLE.
Dataset random_instance(const ModelSpec& model, const Vector& beta, std::size_t n, Rng& rng) {
    Matrix x = testing::gaussian(n, model.p, rng);
    Scenario s;
    s.model = model;
    s.beta = beta;
    return Dataset(x, sample_responses(s, x, rng()));
}

Vector central_difference(const ModelSpec& model, const Vector& beta, const Dataset& data,
                          std::span<const double> w) {
    Vector g(beta.size());
    for (Eigen::Index j = 0; j < beta.size(); ++j) {
        const double h = 1e-5 * std::max(1.0, std::abs(beta[j]));
        Vector up = beta, dn = beta;
        up[j] += h;
        dn[j] -= h;
        g[j] = (log_likelihood(model, up, data, w) - log_likelihood(model, dn, data, w)) / (2.0 * h);
    }
    return g;
}

}  // namespace

TEST_CASE("logistic information at beta = 0, x = 0") {
    const ModelSpec m{Family::Logistic, 3};
    const InfoFactor f = fisher_info(m, Vector::Zero(4), Vector::Zero(3));
    REQUIRE(f.rank() == 1);
    CHECK(std::abs(f.factors(0, 0)) == doctest::Approx(0.5));
    CHECK(f.factors.col(0).tail(3).norm() == 0.0);
}

TEST_CASE("logistic information vanishes in the tails") {
    const ModelSpec m{Family::Logistic, 1};
    Vector beta(2);
    beta << 0.0, 1.0;
    Vector x(1);
    x << 60.0;
    CHECK(fisher_info(m, beta, x).factors.norm() < 1e-10);
    x << 800.0;
    CHECK(fisher_info(m, beta, x).factors.norm() == 0.0);
}

TEST_CASE("heteroskedastic information at beta = 0, x = 1") {
    const ModelSpec m{Family::HeteroLogVar, 1};
    Vector x(1);
    x << 1.0;
    const InfoFactor f = fisher_info(m, Vector::Zero(2), x);
    REQUIRE(f.rank() == 2);
    Matrix expect(2, 2);
    expect << 1.0, 1.0, 1.0, 1.5;
    CHECK((f.dense() - expect).norm() < 1e-14);
    CHECK(f.factors.col(0).cwiseAbs().isApprox(Vector::Ones(2)));
    CHECK(std::abs(f.factors(0, 1)) < 1e-15);
    CHECK(std::abs(f.factors(1, 1)) == doctest::Approx(1.0 / std::sqrt(2.0)));
}

TEST_CASE("heteroskedastic log-variance overflow is reported") {
    const ModelSpec m{Family::HeteroLogVar, 1};
    Vector beta(2), x(1);
    beta << 0.0, 1.0;
    x << 800.0;
    CHECK_THROWS_AS(fisher_info(m, beta, x), NumericOverflow);
}

TEST_CASE("information matrices are symmetric, nonnegative and of the stated rank") {
    Rng rng(3);
    for (Family fam : {Family::Logistic, Family::LogisticNoIntercept, Family::Linear, Family::HeteroLogVar}) {
        const ModelSpec m{fam, 4};
        for (int t = 0; t < 50; ++t) {
            const Vector beta = testing::gaussian_vec(m.dim_beta(), rng, 0.5);
            const Vector x = testing::gaussian_vec(4, rng);
            const Matrix d = fisher_info(m, beta, x).dense();
            CHECK((d - d.transpose()).norm() == 0.0);
            Eigen::SelfAdjointEigenSolver<Matrix> es(d);
            const Vector& lam = es.eigenvalues();
            CHECK(lam.minCoeff() > -1e-12 * lam.maxCoeff());
            const auto rank = (lam.array() > 1e-10 * lam.maxCoeff()).count();
            CHECK(static_cast<std::size_t>(rank) == m.info_rank());
        }
    }
}

TEST_CASE("factor table agrees with pointwise information") {
    Rng rng(4);
    for (Family fam : {Family::Logistic, Family::HeteroLogVar}) {
        const ModelSpec m{fam, 3};
        const Vector beta = testing::gaussian_vec(m.dim_beta(), rng, 0.5);
        const Matrix pts = testing::gaussian(20, 3, rng);
        const FactorTable t(m, beta, pts);
        for (Index i = 0; i < 20; ++i) {
            const InfoFactor a = t.factor(i);
            const InfoFactor b = fisher_info(m, beta, pts.row(static_cast<Eigen::Index>(i)).transpose());
            CHECK((a.dense() - b.dense()).norm() < 1e-14);
            const Matrix g = a.factors.transpose() * a.factors;
            for (std::size_t r = 0; r < t.rank(); ++r)
                for (std::size_t s = r; s < t.rank(); ++s)
                    CHECK(t.grams()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t.gram_column(r, s))) ==
                          doctest::Approx(g(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(s))).epsilon(1e-13));
        }
    }
}

TEST_CASE("log-likelihood reference values") {
    Rng rng(8);
    const Matrix x = testing::gaussian(40, 2, rng);
    Vector y(40);
    for (int i = 0; i < 40; ++i) y[i] = i % 3 == 0;
    CHECK(log_likelihood({Family::Logistic, 2}, Vector::Zero(3), Dataset(x, y)) ==
          doctest::Approx(-40.0 * std::log(2.0)).epsilon(1e-14));
    CHECK(log_likelihood({Family::HeteroLogVar, 2}, Vector::Zero(3), Dataset(x, Vector::Zero(40))) ==
          doctest::Approx(-20.0 * std::log(2.0 * M_PI)).epsilon(1e-14));
}

TEST_CASE("analytic score matches central differences") {
    Rng rng(21);
    for (Family fam : {Family::Logistic, Family::LogisticNoIntercept, Family::HeteroLogVar}) {
        for (int t = 0; t < 100; ++t) {
            const ModelSpec m{fam, 1 + static_cast<std::size_t>(t % 4)};
            const Vector beta = testing::gaussian_vec(m.dim_beta(), rng, 0.5);
            const Dataset d = random_instance(m, beta, 30, rng);
            const Vector w = testing::gaussian_vec(30, rng).cwiseAbs();
            const Vector at = beta + testing::gaussian_vec(m.dim_beta(), rng, 0.3);
            for (bool weighted : {false, true}) {
                std::span<const double> ws;
                if (weighted) ws = std::span<const double>(w.data(), 30);
                const Vector a = score(m, at, d, ws);
                const Vector fd = central_difference(m, at, d, ws);
                CHECK((a - fd).norm() <= 1e-5 * std::max(1.0, a.norm()));
            }
        }
    }
}

TEST_CASE("logistic MLE on six hand-built rows") {
    Matrix x(6, 2);
    x << 0.0, 1.0,  //
        1.0, 0.5,   //
        -1.0, 2.0,  //
        2.0, -1.0,  //
        0.5, 0.5,   //
        -0.5, -1.5;
    Vector y(6);
    y << 1, 0, 1, 1, 0, 0;
    const ModelSpec m{Family::Logistic, 2};
    const Dataset d(x, y);
    const ParamEstimate e = fit_mle(m, d);
    CHECK(e.converged);
    CHECK(score(m, e.beta, d).norm() <= 1e-8);
    CHECK(central_difference(m, e.beta, d, {}).norm() <= 1e-6);
}

TEST_CASE("separable logistic data is reported") {
    Matrix x(6, 1);
    x << -3, -2, -1, 1, 2, 3;
    Vector y(6);
    y << 0, 0, 0, 1, 1, 1;
    CHECK_THROWS_AS(fit_mle({Family::Logistic, 1}, Dataset(x, y)), SeparationError);
}

TEST_CASE("equal weights leave the MLE unchanged") {
    Rng rng(31);
    for (Family fam : {Family::Logistic, Family::LogisticNoIntercept, Family::HeteroLogVar}) {
        const ModelSpec m{fam, 3};
        const Vector beta = testing::gaussian_vec(m.dim_beta(), rng, 0.5);
        const Dataset d = random_instance(m, beta, 400, rng);
        const ParamEstimate plain = fit_mle(m, d);
        for (double c : {1.0, 2.5, 1e-3}) {
            const std::vector<double> w(400, c);
            const ParamEstimate wt = fit_mle(m, d, w);
            CHECK((plain.beta - wt.beta).norm() <= 1e-8);
        }
    }
}

TEST_CASE("MLE is invariant under row permutation") {
    Rng rng(41);
    for (Family fam : {Family::Logistic, Family::HeteroLogVar}) {
        const ModelSpec m{fam, 3};
        const Vector beta = testing::gaussian_vec(m.dim_beta(), rng, 0.5);
        const Dataset d = random_instance(m, beta, 300, rng);
        std::vector<Index> perm(300);
        std::iota(perm.begin(), perm.end(), Index{0});
        std::shuffle(perm.begin(), perm.end(), rng);
        CHECK((fit_mle(m, d).beta - fit_mle(m, d.subset(perm)).beta).norm() <= 1e-8);
    }
}

TEST_CASE("MLE covers the true parameter at large n") {
    Scenario s;
    s.model = {Family::LogisticNoIntercept, 7};
    s.beta = Vector::Constant(7, 0.5);
    s.n = 100000;
    int covered = 0;
    const int seeds = 50;
    for (int r = 0; r < seeds; ++r) {
        const Dataset d = replicate_data(s, 2024, static_cast<std::size_t>(r));
        const Vector est = fit_mle(s.model, d).beta;
        const FactorTable t(s.model, s.beta, d.covariates());
        Matrix info = (t.data().transpose() * t.data());
        const Vector se = info.inverse().diagonal().cwiseSqrt();
        covered += ((est - s.beta).cwiseAbs().array() <= 4.0 * se.array()).all();
    }
    CHECK(covered >= 48);
}
