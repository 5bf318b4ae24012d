#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>

#include "odbss/dataset.hpp"

namespace odbss {

enum class Family {
    Logistic,             // P(y=1) = logistic(z'b), z = (1, x')'
    LogisticNoIntercept,  // P(y=1) = logistic(x'b)
    Linear,               // y ~ N(z'b, 1); used for closed-form design checks
    HeteroLogVar,         // y ~ N(z'b, exp(x'b[1..p]))
};

Family parse_family(const std::string& name);
std::string family_name(Family f);

struct ModelSpec {
    Family family = Family::Logistic;
    std::size_t p = 1;

    std::size_t dim_beta() const { return family == Family::LogisticNoIntercept ? p : p + 1; }
    std::size_t info_rank() const { return family == Family::HeteroLogVar ? 2 : 1; }
    bool has_intercept() const { return family != Family::LogisticNoIntercept; }
    bool is_logistic() const {
        return family == Family::Logistic || family == Family::LogisticNoIntercept;
    }
};

// Regressor vector z for covariate x: (1, x) or x.
Vector regressor(const ModelSpec& model, const Vector& x);

// I(beta, x) = sum_r F.col(r) F.col(r)'.
struct InfoFactor {
    Matrix factors;  // dim_beta x rank

    std::size_t rank() const { return static_cast<std::size_t>(factors.cols()); }
    std::size_t dim() const { return static_cast<std::size_t>(factors.rows()); }
    Matrix dense() const { return factors * factors.transpose(); }
};

// Throws InvalidArgument on dimension mismatch and NumericOverflow when the
// log-variance of the heteroskedastic model leaves [-700, 700].
InfoFactor fisher_info(const ModelSpec& model, const Vector& beta, const Vector& x);

// Information factors for every row of a point matrix, stored column-major so
// component r of all rows is a contiguous dim_beta-column block.
class FactorTable {
public:
    FactorTable() = default;
    FactorTable(const ModelSpec& model, const Vector& beta, const Matrix& points);

    std::size_t rows() const { return static_cast<std::size_t>(data_.rows()); }
    std::size_t rank() const { return rank_; }
    std::size_t dim() const { return dim_; }

    kernels::ColumnBlock component(std::size_t r) const;
    InfoFactor factor(Index i) const;
    const Matrix& data() const { return data_; }

    // Per-row Gram entries F_i' F_i, column (r, s) with r <= s stored at
    // gram_column(r, s). Rank 1: squared factor norms.
    const Matrix& grams() const { return grams_; }
    std::size_t gram_column(std::size_t r, std::size_t s) const {
        if (r > s) std::swap(r, s);
        return r * rank_ - r * (r + 1) / 2 + s;
    }

private:
    Matrix data_;
    Matrix grams_;
    std::size_t rank_ = 0;
    std::size_t dim_ = 0;
};

// Log-likelihood of the whole dataset; weights (if non-empty) multiply each
// row's term. Uses softplus for the logistic terms so it never overflows.
double log_likelihood(const ModelSpec& model, const Vector& beta, const Dataset& data,
                      std::span<const double> weights = {});

Vector score(const ModelSpec& model, const Vector& beta, const Dataset& data,
             std::span<const double> weights = {});

struct ParamEstimate {
    Vector beta;
    bool converged = false;
    std::size_t iterations = 0;
    double score_norm = 0.0;  // ||score|| / max(1, sum of weights)
};

struct MleOptions {
    double tol = 1e-8;  // on the Newton step, relative to max(1, |beta|)
    std::size_t max_iter = 100;
};

// Newton-Raphson with step halving. Logistic families start at zero; the
// heteroskedastic model starts at the least-squares fit. Weights multiply the
// per-row log-likelihood terms (pass 1/pi for inverse-probability weighting).
ParamEstimate fit_mle(const ModelSpec& model, const Dataset& data,
                      std::span<const double> weights = {}, const MleOptions& options = {});

}  // namespace odbss
