#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "odbss/sampler.hpp"

namespace odbss {

enum class CovariateLaw { Normal, T, SkewNormal, SkewT, NormalMixture };
enum class SigmaKind { S1, S2, S3, Custom };

CovariateLaw parse_law(const std::string& name);
std::string law_name(CovariateLaw law);
SigmaKind parse_sigma_kind(const std::string& name);

struct Scenario {
    std::string id = "scenario";
    ModelSpec model{Family::LogisticNoIntercept, 7};
    Vector beta;  // dim_beta
    std::size_t n = 100000;
    CovariateLaw law = CovariateLaw::Normal;
    double kappa = 3.0;        // t and skew-t degrees of freedom
    Vector alpha;              // skew slant, size p
    SigmaKind sigma = SigmaKind::S1;
    Matrix custom_sigma;       // used when sigma == Custom
    Vector mu;                 // center; empty means 0
    Vector mu2;                // second mixture center; empty means -mu
    std::uint64_t seed = 0;    // mixed into every replicate's streams

    std::size_t p() const { return model.p; }
    void validate() const;
};

// S1 = (0.5^|i-j|); S2 = sum_r c_r e_r e_r' + 0.1 S1 with c = (2, 1.8, 1.6,
// 1.4, 1.2); S3 likewise with c = (3, 2, 1). The orthonormal directions e_r
// are drawn from the Haar measure with the given seed.
Matrix make_sigma(SigmaKind kind, std::size_t p, std::uint64_t seed);

// Covariance (scale matrix for t laws) of a scenario for one replicate.
Matrix scenario_sigma(const Scenario& s, std::uint64_t seed);

Matrix sample_covariates(const Scenario& s, const Matrix& sigma, std::size_t n, std::uint64_t seed);
Matrix sample_covariates(const Scenario& s, std::size_t n, std::uint64_t seed);

Vector sample_responses(const Scenario& s, const Matrix& x, std::uint64_t seed);

// Covariates and responses of replicate `rep`; every method sees this data.
Dataset replicate_data(const Scenario& s, std::uint64_t master_seed, std::size_t rep);

// A method name with optional bracketed options, e.g.
// "odbss[metric=sqrt,zeta=0.8]". Names: odbss, odbss2, uniform, iboss,
// osmac-mvc, osmac-mmse, full.
struct MethodSpec {
    std::string label;
    std::string name;
    OdbssConfig odbss;  // criterion/metric/zeta/space/k0 options
};

MethodSpec parse_method(const std::string& text);

struct MethodOutcome {
    SubsampleResult sample;
    Vector beta_hat;
    bool converged = false;
};

// Runs one method at subsample size k and fits the (weighted where the
// method supplies weights) MLE on the selected rows.
MethodOutcome run_method(const MethodSpec& method, const Dataset& data, const ModelSpec& model, std::size_t k,
                         std::uint64_t seed);

struct ResultRow {
    std::string scenario;
    std::string method;
    std::size_t k = 0;
    std::size_t rep = 0;
    double mse = 0.0;
    std::size_t support_count = 0;
    double t_stage1_ms = 0.0;
    double t_stage2_ms = 0.0;
    double t_stage3_ms = 0.0;
    std::string error;
};

struct ExperimentConfig {
    std::vector<Scenario> scenarios;
    std::vector<std::string> methods;
    std::vector<std::size_t> k_grid;
    std::size_t replicates = 100;
    std::uint64_t seed = 0;
    std::size_t threads = 0;  // 0: hardware concurrency
    bool record_timings = true;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);

// Rows ordered by scenario, replicate, method, k. Method failures become rows
// with the error column set.
std::vector<ResultRow> run_experiment(const ExperimentConfig& config);

void write_results_csv(std::ostream& out, const std::vector<ResultRow>& rows);
void write_results_csv(const std::filesystem::path& path, const std::vector<ResultRow>& rows);
std::vector<ResultRow> read_results_csv(const std::filesystem::path& path);

struct SummaryRow {
    std::string scenario;
    std::string method;
    std::size_t k = 0;
    std::size_t replicates = 0;  // successful rows
    std::size_t failures = 0;
    double mse_mean = 0.0;
    double mse_se = 0.0;  // sd / sqrt(m); 0 for a single row
    double support_mean = 0.0;
    double t_stage1_ms = 0.0;
    double t_stage2_ms = 0.0;
    double t_stage3_ms = 0.0;
};

// Group-by (scenario, method, k) in first-appearance order.
std::vector<SummaryRow> summarize(const std::vector<ResultRow>& rows);
void write_summary_csv(const std::filesystem::path& path, const std::vector<SummaryRow>& rows);

}  // namespace odbss
