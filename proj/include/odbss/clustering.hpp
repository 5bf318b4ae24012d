#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "odbss/dataset.hpp"

namespace odbss {

// Trained DBSCAN state. Label 0 marks outliers, clusters are 1..num_clusters
// numbered in the order their first core point appears in the training set.
struct ClusterModel {
    double epsilon = 0.0;
    std::size_t min_points = 5;
    Matrix points;  // k0 x p training points
    std::vector<int> labels;
    std::vector<bool> core;
    int num_clusters = 0;

    // Core points only, for membership queries.
    Matrix core_points;
    std::vector<int> core_labels;

    std::size_t dim() const { return static_cast<std::size_t>(points.cols()); }
};

// min{ 0.1 (p-1) (max X - min X), max_x dist_4(x) }, where dist_4 is the
// distance to the 4th nearest other point. For p = 1 only the second term is
// used. Requires at least 5 points.
double epsilon_rule(const Matrix& points);

ClusterModel dbscan_fit(const Matrix& points, double epsilon, std::size_t min_points = 5);

// Cluster of the nearest core point within epsilon (ties: lowest cluster id),
// or 0 when no core point is that close.
int is_member(const ClusterModel& model, const Vector& x);

enum class SpaceSource { Grid, MH, FullSample };

const char* space_source_name(SpaceSource s);

struct DesignSpace {
    Matrix points;  // s x p, distinct rows
    SpaceSource source = SpaceSource::Grid;

    std::size_t size() const { return static_cast<std::size_t>(points.rows()); }
};

struct GridBounds {
    Vector lower;
    Vector upper;
};

// Per-dimension min/max of a point set.
GridBounds bounds_of(const Matrix& points);

// Largest L with (L+1)^p <= budget (0 if even L = 1 does not fit).
std::size_t default_grid_partitions(std::size_t p, std::size_t budget);

constexpr std::size_t kDefaultCandidateBudget = 200000;

// Grid points (L+1 equispaced values per dimension between the bounds) that
// belong to some cluster, in lexicographic grid order with dimension 0
// varying fastest. Throws TooManyCandidates when (L+1)^p exceeds the budget.
DesignSpace grid_design_space(const ClusterModel& model, std::size_t partitions,
                              const GridBounds& bounds,
                              std::size_t budget = kDefaultCandidateBudget);

struct MhOptions {
    // Proposal scale matrix (diagonal entries used) shared by all clusters;
    // default is (2.38^2 / p) diag(cluster sample variance).
    std::optional<Vector> scale_diagonal;
    double scale_factor = 1.0;
    std::optional<std::size_t> quota;  // accepted moves per cluster
    std::size_t stall_window = 1000000;
    double min_acceptance = 1e-3;
};

// Accepted moves per cluster: 5 (p(p+1)/2 + 1).
std::size_t mh_quota(std::size_t p);

// Random-walk Metropolis-Hastings on the uniform law over each cluster with
// multivariate t(3) increments. Chains use independent seeded streams.
DesignSpace mh_design_space(const ClusterModel& model, std::uint64_t seed,
                            const MhOptions& options = {});

}  // namespace odbss
