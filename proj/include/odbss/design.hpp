#pragma once

#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "odbss/models.hpp"

namespace odbss {

// Kiefer's power-mean criterion. q = 0 is the log-det limit (D), q = -inf the
// smallest eigenvalue (E).
struct Criterion {
    double q = -1.0;

    static Criterion A() { return {-1.0}; }
    static Criterion D() { return {0.0}; }
    static Criterion E() { return {-std::numeric_limits<double>::infinity()}; }

    bool is_d() const { return q == 0.0; }
    bool is_e() const { return q == -std::numeric_limits<double>::infinity(); }
};

// "A", "D", "E" or a numeric q < 1.
Criterion parse_criterion(const std::string& text);
std::string criterion_name(const Criterion& c);

struct Design {
    Matrix support;  // b x p
    Vector weights;  // b, non-negative, sum 1
    std::vector<Index> source;  // row of each support point in the candidate set

    // Solver report: largest directional-derivative ratio over the candidates.
    bool certified = false;
    double max_ratio = std::numeric_limits<double>::quiet_NaN();
    std::size_t iterations = 0;

    std::size_t size() const { return static_cast<std::size_t>(weights.size()); }
};

// M = sum_i w_i I(beta, x_i)
Matrix info_matrix(const Design& design, const ModelSpec& model, const Vector& beta);

// (tr M^q)^(1/q), det(M)^(1/d) for q = 0, lambda_min for q = -inf. Zero when M
// is singular and q <= 0.
double criterion_value(const Matrix& m, const Criterion& crit);

// tr(G I(beta, x)) / tr(G M) for every candidate, where G is the criterion's
// gradient at M. A design is optimal when no ratio exceeds 1.
std::vector<double> equivalence_ratios(const Matrix& m, const FactorTable& candidates,
                                       const Criterion& crit);

struct DesignOptions {
    double tol = 1e-4;
    std::size_t max_iter = 10000;
    double prune_below = 1e-8;
    bool trim = true;  // reduce the support to at most d(d+1)/2 + 1 points
};

// Approximate Psi_q-optimal weights on a finite candidate set. The returned
// design is sorted by descending weight and carries its certificate; when the
// iteration budget runs out the best iterate comes back with certified = false.
// Throws InfeasibleDesign if no weighting gives a nonsingular information matrix.
Design optimize_design(const Matrix& candidates, const ModelSpec& model, const Vector& beta,
                       const Criterion& crit, const DesignOptions& options = {});
Design optimize_design(const Matrix& candidates, const FactorTable& table, const Criterion& crit,
                       const DesignOptions& options = {});

// Psi(design) / Psi(reference), clipped to [0, 1].
double efficiency(const Design& design, const Design& reference, const ModelSpec& model,
                  const Vector& beta, const Criterion& crit);

// Drops the smallest-weight point and renormalizes while the criterion stays
// above zeta times its starting value and at least dim_beta points remain.
Design reduce_support(const Design& design, double zeta, const ModelSpec& model, const Vector& beta,
                      const Criterion& crit);

// Stable sort by descending weight (ties keep candidate order).
void sort_by_weight(Design& design);

}  // namespace odbss
