#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "odbss/bench.hpp"
#include "odbss/errors.hpp"
#include "support.hpp"

using namespace odbss;

namespace {

Scenario logistic7() {
    Scenario s;
    s.model = {Family::LogisticNoIntercept, 7};
    s.beta = Vector::Constant(7, 0.5);
    return s;
}

double column_moment(const Matrix& x, Eigen::Index j, int k) {
    const double mean = x.col(j).mean();
    return (x.col(j).array() - mean).pow(k).mean();
}

std::string csv_text(const std::vector<ResultRow>& rows) {
    std::ostringstream out;
    write_results_csv(out, rows);
    return out.str();
}

}  // namespace

TEST_CASE("covariance structures") {
    const Matrix s1 = make_sigma(SigmaKind::S1, 7, 0);
    CHECK(s1(0, 2) == 0.25);
    CHECK(s1(6, 0) == std::pow(0.5, 6));

    const Matrix s2 = make_sigma(SigmaKind::S2, 7, 3);
    CHECK((s2 - s2.transpose()).norm() == 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es2(s2);
    CHECK(es2.eigenvalues().maxCoeff() >= 2.0);
    CHECK(Eigen::LLT<Matrix>(s2).info() == Eigen::Success);
    CHECK(make_sigma(SigmaKind::S2, 7, 3) == s2);
    CHECK(make_sigma(SigmaKind::S2, 7, 4) != s2);

    // S3 - 0.1 S1 has eigenvalues (3, 2, 1, 0, ...); rebuilding from them
    // reproduces S3.
    const Matrix s3 = make_sigma(SigmaKind::S3, 6, 5);
    const Matrix low = s3 - 0.1 * make_sigma(SigmaKind::S1, 6, 0);
    Eigen::SelfAdjointEigenSolver<Matrix> es3(low);
    const Vector lam = es3.eigenvalues();
    CHECK(lam[5] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(lam[4] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(lam[3] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(lam.head(3).cwiseAbs().maxCoeff() < 1e-12);
    Matrix rebuilt = 0.1 * make_sigma(SigmaKind::S1, 6, 0);
    const double c[3] = {1.0, 2.0, 3.0};
    for (int r = 0; r < 3; ++r) rebuilt += c[r] * es3.eigenvectors().col(3 + r) * es3.eigenvectors().col(3 + r).transpose();
    CHECK((rebuilt - s3).cwiseAbs().maxCoeff() < 1e-10);

    CHECK_THROWS_AS(make_sigma(SigmaKind::S2, 4, 0), InvalidArgument);
    CHECK_THROWS_AS(make_sigma(SigmaKind::S3, 2, 0), InvalidArgument);
}

TEST_CASE("normal covariates have the requested covariance") {
    Scenario s = logistic7();
    const Matrix x = sample_covariates(s, make_sigma(SigmaKind::S1, 7, 0), 100000, 1);
    const double cov = ((x.col(0).array() - x.col(0).mean()) * (x.col(1).array() - x.col(1).mean())).mean();
    CHECK(cov == doctest::Approx(0.5).epsilon(0.04));
    CHECK(sample_covariates(s, 50, 9) == sample_covariates(s, 50, 9));
}

TEST_CASE("t covariates are heavy tailed") {
    Scenario s = logistic7();
    s.law = CovariateLaw::T;
    s.kappa = 3.0;
    const Matrix x = sample_covariates(s, make_sigma(SigmaKind::S1, 7, 0), 100000, 2);
    for (Eigen::Index j = 0; j < 7; ++j) {
        const double kurt = column_moment(x, j, 4) / std::pow(column_moment(x, j, 2), 2);
        CHECK(kurt > 6.0);
    }
}

TEST_CASE("skew-normal marginal mean") {
    Scenario s = logistic7();
    s.law = CovariateLaw::SkewNormal;
    s.sigma = SigmaKind::Custom;
    s.custom_sigma = Matrix::Identity(7, 7);
    s.alpha = Vector::Zero(7);
    s.alpha[0] = 5.0;
    const Matrix x = sample_covariates(s, s.custom_sigma, 200000, 3);
    const double delta = 5.0 / std::sqrt(26.0);
    CHECK(x.col(0).mean() == doctest::Approx(delta * std::sqrt(2.0 / M_PI)).epsilon(0.01));
    CHECK(std::abs(x.col(3).mean()) < 0.01);
    s.law = CovariateLaw::SkewT;
    const Matrix y = sample_covariates(s, s.custom_sigma, 1000, 3);
    CHECK(y.allFinite());
}

TEST_CASE("mixture covariates are bimodal with zero mean") {
    Scenario s = logistic7();
    s.law = CovariateLaw::NormalMixture;
    s.sigma = SigmaKind::Custom;
    s.custom_sigma = 0.1 * Matrix::Identity(7, 7);
    s.mu = Vector::Ones(7);
    const Matrix x = sample_covariates(s, s.custom_sigma, 100000, 4);
    CHECK(std::abs(x.col(0).mean()) < 0.02);
    auto count_near = [&](double c) { return ((x.col(0).array() - c).abs() < 0.1).count(); };
    CHECK(count_near(0.0) * 10 < count_near(1.0));
    CHECK(count_near(0.0) * 10 < count_near(-1.0));
}

TEST_CASE("responses") {
    Scenario s = logistic7();
    s.beta = Vector::Zero(7);
    const Matrix x = sample_covariates(s, 100000, 5);
    const Vector y = sample_responses(s, x, 6);
    CHECK(std::abs(y.mean() - 0.5) <= 3.0 * 0.5 / std::sqrt(1e5));

    // Unbalanced case: shifted normal covariates.
    Scenario u = logistic7();
    u.mu = Vector::Ones(7);
    const Dataset d = replicate_data(u, 7, 0);
    CHECK(d.responses().mean() == doctest::Approx(0.9).epsilon(0.03));

    Scenario h;
    h.model = {Family::HeteroLogVar, 3};
    h.beta = Vector::Zero(4);
    const Matrix xh = sample_covariates(h, 100000, 8);
    const Vector yh = sample_responses(h, xh, 9);
    CHECK(yh.squaredNorm() / 1e5 == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("replicates share data across methods and differ across reps") {
    Scenario s = logistic7();
    s.n = 500;
    const Dataset a = replicate_data(s, 1, 0), b = replicate_data(s, 1, 0), c = replicate_data(s, 1, 1);
    CHECK(a.covariates() == b.covariates());
    CHECK(a.responses() == b.responses());
    CHECK(a.covariates() != c.covariates());
}

TEST_CASE("method parsing") {
    const MethodSpec m = parse_method("odbss[metric=sqrt,zeta=0.8,criterion=D,space=mh,k0=0.3,L=3,eps=0.5]");
    CHECK(m.name == "odbss");
    CHECK(m.odbss.metric == Metric::SquareRoot);
    CHECK(m.odbss.zeta == 0.8);
    CHECK(m.odbss.criterion.is_d());
    CHECK(m.odbss.space_mode == SpaceMode::MH);
    CHECK(m.odbss.k0_fraction == 0.3);
    CHECK(m.odbss.grid_partitions == 3u);
    CHECK(m.odbss.epsilon == 0.5);
    CHECK(parse_method("odbss2").odbss.space_mode == SpaceMode::FullSample);
    CHECK_THROWS_AS(parse_method("magic"), InvalidArgument);
    CHECK_THROWS_AS(parse_method("odbss[zeta]"), InvalidArgument);
    CHECK_THROWS_AS(parse_method("odbss[colour=red]"), InvalidArgument);
}

TEST_CASE("small experiment: rows, shared full fit and determinism") {
    ExperimentConfig cfg;
    Scenario s = logistic7();
    s.id = "tiny";
    s.model = {Family::LogisticNoIntercept, 3};
    s.beta = Vector::Constant(3, 0.5);
    s.n = 200;
    cfg.scenarios = {s};
    cfg.methods = {"odbss", "uniform", "iboss", "osmac-mvc", "osmac-mmse", "full"};
    cfg.k_grid = {100};
    cfg.replicates = 3;
    cfg.seed = 5;
    cfg.threads = 2;
    cfg.record_timings = false;
    const std::vector<ResultRow> rows = run_experiment(cfg);
    CHECK(rows.size() == 3 * cfg.methods.size());
    for (const ResultRow& r : rows) {
        CHECK(r.mse >= 0.0);
        CHECK(r.rep < 3);
        CHECK(r.t_stage1_ms == 0.0);
    }
    CHECK(csv_text(rows) == csv_text(run_experiment(cfg)));
    cfg.threads = 1;
    CHECK(csv_text(rows) == csv_text(run_experiment(cfg)));

    cfg.methods = {"full"};
    cfg.k_grid = {50, 100};
    const std::vector<ResultRow> full = run_experiment(cfg);
    REQUIRE(full.size() == 6);
    for (std::size_t r = 0; r < 3; ++r) CHECK(full[2 * r].mse == full[2 * r + 1].mse);
}

TEST_CASE("failed methods become error rows") {
    ExperimentConfig cfg;
    Scenario s = logistic7();
    s.id = "fail";
    s.model = {Family::LogisticNoIntercept, 3};
    s.beta = Vector::Constant(3, 0.5);
    s.n = 200;
    cfg.scenarios = {s};
    cfg.methods = {"odbss", "uniform"};
    cfg.k_grid = {10};  // k0 = 2 is too small for odbss
    cfg.replicates = 1;
    cfg.threads = 1;
    const std::vector<ResultRow> rows = run_experiment(cfg);
    REQUIRE(rows.size() == 2);
    CHECK(!rows[0].error.empty());
    const std::vector<SummaryRow> sum = summarize(rows);
    CHECK(sum[0].failures == 1);
}

TEST_CASE("summaries") {
    ResultRow a;
    a.scenario = "s";
    a.method = "m";
    a.k = 10;
    a.mse = 1.0;
    ResultRow b = a;
    b.mse = 3.0;
    b.rep = 1;
    std::vector<SummaryRow> one = summarize({a});
    CHECK(one[0].mse_mean == 1.0);
    CHECK(one[0].mse_se == 0.0);
    std::vector<SummaryRow> two = summarize({a, b});
    CHECK(two[0].mse_mean == 2.0);
    CHECK(two[0].mse_se == doctest::Approx(1.0));

    // Five seeded replicates, recomputed by hand from the written CSV.
    ExperimentConfig cfg;
    Scenario s = logistic7();
    s.id = "five";
    s.model = {Family::LogisticNoIntercept, 3};
    s.beta = Vector::Constant(3, 0.5);
    s.n = 400;
    cfg.scenarios = {s};
    cfg.methods = {"uniform"};
    cfg.k_grid = {100};
    cfg.replicates = 5;
    cfg.threads = 1;
    cfg.seed = 77;
    const std::vector<ResultRow> rows = run_experiment(cfg);
    const auto path = std::filesystem::temp_directory_path() / "odbss_summary_test.csv";
    write_results_csv(path, rows);
    const std::vector<ResultRow> back = read_results_csv(path);
    REQUIRE(back.size() == 5);
    double mean = 0.0;
    for (const ResultRow& r : back) mean += r.mse / 5.0;
    double ss = 0.0;
    for (const ResultRow& r : back) ss += (r.mse - mean) * (r.mse - mean);
    const SummaryRow sr = summarize(back)[0];
    CHECK(sr.replicates == 5);
    CHECK(sr.mse_mean == doctest::Approx(mean).epsilon(1e-12));
    CHECK(sr.mse_se == doctest::Approx(std::sqrt(ss / 4.0) / std::sqrt(5.0)).epsilon(1e-12));
    for (std::size_t i = 0; i < 5; ++i) CHECK(back[i].mse == doctest::Approx(rows[i].mse).epsilon(1e-12));
    std::filesystem::remove(path);
}

TEST_CASE("experiment config parsing") {
    const ExperimentConfig c = parse_experiment_config(R"({
        "scenarios": [{"id": "a", "family": "logistic-no-intercept", "p": 3, "beta": [0.5, 0.5, 0.5],
                       "n": 1000, "law": "t", "kappa": 4, "sigma": "S1", "seed": 3}],
        "methods": ["uniform", "odbss[zeta=0.9]"], "k_grid": [100, 200], "replicates": 4,
        "seed": 9, "threads": 1, "record_timings": false})");
    REQUIRE(c.scenarios.size() == 1);
    CHECK(c.scenarios[0].law == CovariateLaw::T);
    CHECK(c.scenarios[0].kappa == 4.0);
    CHECK(c.k_grid == std::vector<std::size_t>{100, 200});
    CHECK(c.replicates == 4);
    CHECK(!c.record_timings);
    CHECK_THROWS_AS(parse_experiment_config(R"({"scenarios": [], "methods": [], "k_grid": [], "bogus": 1})"),
                    InvalidArgument);
    CHECK_THROWS_AS(parse_experiment_config("not json"), InvalidArgument);
}
