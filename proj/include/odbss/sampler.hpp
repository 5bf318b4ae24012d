#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "odbss/clustering.hpp"
#include "odbss/design.hpp"
#include "odbss/distances.hpp"
#include "odbss/models.hpp"

namespace odbss {

struct StageTimings {
    double stage1_ms = 0.0;
    double stage2_ms = 0.0;
    double stage3_ms = 0.0;
};

struct SubsampleResult {
    std::vector<Index> indices;          // ascending, distinct
    std::vector<Index> initial_indices;  // stage-1 rows, ascending
    Design design_used;                  // empty for baselines
    // Per-index weights for the estimator (aligned with indices); empty when
    // the subsample is analysed unweighted.
    std::vector<double> estimation_weights;
    StageTimings timings;
    Vector pilot_beta;
    std::size_t candidate_count = 0;
    std::optional<SpaceSource> space;
};

// k distinct indices drawn uniformly without replacement, ascending.
std::vector<Index> uniform_subsample(std::size_t n, std::size_t k, std::uint64_t seed);

// Distance-based allocation: support points are visited in descending weight
// order, each taking its floor(w k1) nearest free rows; the remaining rows go
// one per support in order of the largest fractional parts. Rows in `excluded`
// are never taken and ties break by row index. Returns rows in selection order.
std::vector<Index> allocate(const Dataset& data, const Design& design, Metric metric, const ModelSpec& model,
                            const Vector& beta, std::size_t k1, const std::vector<Index>& excluded);

// Per-support row counts used by allocate.
std::vector<std::size_t> allocation_counts(const Vector& weights, std::size_t k1);

enum class SpaceMode { Grid, MH, FullSample, Auto };

SpaceMode parse_space_mode(const std::string& name);
std::string space_mode_name(SpaceMode m);

struct OdbssConfig {
    std::size_t k = 0;
    double k0_fraction = 0.2;
    Criterion criterion = Criterion::A();
    Metric metric = Metric::Frobenius;
    double zeta = 0.95;
    SpaceMode space_mode = SpaceMode::Auto;
    std::optional<std::size_t> grid_partitions;
    std::optional<double> epsilon;
    std::size_t min_points = 5;
    std::size_t candidate_budget = kDefaultCandidateBudget;
    std::uint64_t seed = 0;
    DesignOptions design;
    MhOptions mh;

    std::size_t k0() const;
};

// Stage 1: uniform pilot, DBSCAN, pilot MLE and candidate set. Stage 2:
// optimal design and support reduction. Stage 3: allocation of the remaining
// k - k0 rows around the support.
SubsampleResult odbss_subsample(const Dataset& data, const ModelSpec& model, const OdbssConfig& config);

enum class OsmacVariant { MVc, MMSE };

// Sampling probabilities proportional to |y - p(x)| ||z|| (mVc) or
// |y - p(x)| ||Mx^-1 z|| (mMSE), where Mx is the pilot's average information.
Vector osmac_probabilities(const Dataset& data, const ModelSpec& model, const Vector& beta,
                           OsmacVariant variant, const Dataset& pilot);

// Two-step OSMAC: uniform pilot of k0 rows, then k - k0 draws with
// replacement. Duplicates collapse; each index carries multiplicity / pi_mix
// as estimation weight with pi_mix = (k0/k)(1/n) + (k1/k) pi.
SubsampleResult osmac_subsample(const Dataset& data, const ModelSpec& model, std::size_t k, std::size_t k0,
                                OsmacVariant variant, std::uint64_t seed);

// IBOSS-style extremes. Linear and heteroskedastic models: per dimension the
// floor(k/2p) smallest and largest free rows, cycling over dimensions.
// Logistic models: a uniform pilot of round(0.2 k) rows fixes beta, and the
// same rule runs on the information-factor coordinates phi(x) x.
SubsampleResult iboss_subsample(const Dataset& data, const ModelSpec& model, std::size_t k, std::uint64_t seed);

// The extreme-value rule on an arbitrary score matrix (one column per
// coordinate), skipping rows in `taken`. Returns chosen rows in selection order.
std::vector<Index> extreme_rows(const Matrix& coords, std::size_t k, std::vector<bool>& taken);

}  // namespace odbss
