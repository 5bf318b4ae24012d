#include "odbss/sampler.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "odbss/errors.hpp"
#include "odbss/rng.hpp"

namespace odbss {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

// Appends the q free rows closest to the support point (by distance, then row).
void take_nearest(const Vector& dist, std::size_t q, std::vector<bool>& taken, std::vector<Index>& out) {
    if (q == 0) return;
    std::vector<Index> free;
    free.reserve(taken.size());
    for (Index j = 0; j < taken.size(); ++j)
        if (!taken[j]) free.push_back(j);
    q = std::min(q, free.size());
    auto closer = [&](Index a, Index b) {
        const double da = dist[static_cast<Eigen::Index>(a)], db = dist[static_cast<Eigen::Index>(b)];
        return da < db || (da == db && a < b);
    };
    std::nth_element(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(q - 1), free.end(), closer);
    std::sort(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(q), closer);
    for (std::size_t i = 0; i < q; ++i) {
        taken[free[i]] = true;
        out.push_back(free[i]);
    }
}

}  // namespace

std::vector<Index> uniform_subsample(std::size_t n, std::size_t k, std::uint64_t seed) {
    if (k > n) throw InvalidArgument("uniform_subsample: k exceeds the number of rows");
    std::vector<Index> perm(n);
    std::iota(perm.begin(), perm.end(), Index{0});
    Rng rng(seed);
    for (std::size_t i = 0; i < k; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, n - 1);
        std::swap(perm[i], perm[pick(rng)]);
    }
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    return perm;
}

std::vector<std::size_t> allocation_counts(const Vector& weights, std::size_t k1) {
    const auto b = static_cast<std::size_t>(weights.size());
    std::vector<std::size_t> counts(b, 0);
    if (b == 0) return counts;
    std::vector<double> frac(b);
    std::size_t used = 0;
    for (std::size_t i = 0; i < b; ++i) {
        const double share = std::max(weights[static_cast<Eigen::Index>(i)], 0.0) * static_cast<double>(k1);
        counts[i] = static_cast<std::size_t>(std::floor(share));
        frac[i] = share - std::floor(share);
        used += counts[i];
    }
    // Guard against rounding pushing the floors past k1.
    for (std::size_t i = b; used > k1 && i-- > 0;) {
        const std::size_t cut = std::min(counts[i], used - k1);
        counts[i] -= cut;
        used -= cut;
    }
    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
    for (std::size_t r = 0; used < k1; ++r, ++used) ++counts[order[r % b]];
    return counts;
}

std::vector<Index> allocate(const Dataset& data, const Design& design, Metric metric, const ModelSpec& model,
                            const Vector& beta, std::size_t k1, const std::vector<Index>& excluded) {
    if (design.size() == 0) throw InvalidArgument("allocate: empty design");
    const std::size_t n = data.rows();
    std::vector<bool> taken(n, false);
    for (Index i : excluded) {
        if (i >= n) throw InvalidArgument("allocate: excluded row out of range");
        taken[i] = true;
    }
    const auto free = static_cast<std::size_t>(std::count(taken.begin(), taken.end(), false));
    if (k1 > free) throw Shortfall("allocate: not enough rows left to allocate", k1 - free);

    // Visit supports by descending weight; ties keep design order.
    Design d = design;
    sort_by_weight(d);
    const std::size_t b = d.size();
    const FactorTable table(model, beta, data.covariates());
    auto dist_to = [&](std::size_t s) {
        return distance_row(metric, fisher_info(model, beta, d.support.row(static_cast<Eigen::Index>(s)).transpose()),
                            table);
    };

    std::vector<std::size_t> floors(b);
    std::vector<double> frac(b);
    std::size_t used = 0;
    for (std::size_t s = 0; s < b; ++s) {
        const double share = std::max(d.weights[static_cast<Eigen::Index>(s)], 0.0) * static_cast<double>(k1);
        floors[s] = std::min(static_cast<std::size_t>(std::floor(share)), k1 - used);
        frac[s] = share - std::floor(share);
        used += floors[s];
    }

    std::vector<Index> out;
    out.reserve(k1);
    for (std::size_t s = 0; s < b; ++s) take_nearest(dist_to(s), floors[s], taken, out);

    std::vector<std::size_t> order(b);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });
    for (std::size_t r = 0; out.size() < k1; ++r) take_nearest(dist_to(order[r % b]), 1, taken, out);
    return out;
}

SpaceMode parse_space_mode(const std::string& name) {
    if (name == "grid") return SpaceMode::Grid;
    if (name == "mh") return SpaceMode::MH;
    if (name == "full") return SpaceMode::FullSample;
    if (name == "auto") return SpaceMode::Auto;
    throw InvalidArgument("unknown design space '" + name + "' (expected grid, mh, full or auto)");
}

std::string space_mode_name(SpaceMode m) {
    switch (m) {
        case SpaceMode::Grid:
            return "grid";
        case SpaceMode::MH:
            return "mh";
        case SpaceMode::FullSample:
            return "full";
        case SpaceMode::Auto:
            return "auto";
    }
    return "unknown";
}

std::size_t OdbssConfig::k0() const {
    return static_cast<std::size_t>(std::llround(k0_fraction * static_cast<double>(k)));
}

SubsampleResult odbss_subsample(const Dataset& data, const ModelSpec& model, const OdbssConfig& config) {
    const std::size_t n = data.rows();
    const std::size_t k = config.k;
    if (data.dim() != model.p) throw InvalidArgument("odbss: covariate dimension does not match model");
    if (k == 0 || k >= n) throw InvalidArgument("odbss: k must satisfy 0 < k < n");
    if (!(config.k0_fraction > 0.0 && config.k0_fraction < 1.0))
        throw InvalidArgument("odbss: k0 fraction must be in (0, 1)");
    if (!(config.zeta > 0.5 && config.zeta <= 1.0)) throw InvalidArgument("odbss: zeta must be in (0.5, 1]");
    const std::size_t k0 = config.k0();
    if (k0 < model.dim_beta() + 1 || k0 >= k)
        throw InvalidArgument("odbss: k0 = round(k0_fraction * k) must be at least dim_beta + 1 and below k");
    if (model.family != Family::Linear && !data.has_responses())
        throw InvalidArgument("odbss: responses are required to estimate beta on the pilot sample");

    SubsampleResult res;
    auto t0 = Clock::now();

    // Stage 1
    res.initial_indices = uniform_subsample(n, k0, derive_seed(config.seed, {1}));
    const Dataset pilot = data.subset(res.initial_indices);
    Vector beta = Vector::Zero(static_cast<Eigen::Index>(model.dim_beta()));
    if (model.family != Family::Linear) {
        try {
            beta = fit_mle(model, pilot).beta;
        } catch (const SeparationError& e) {
            throw SeparationError(std::string(e.what()) + " (stage-1 pilot; increase k0)");
        }
    }
    res.pilot_beta = beta;

    Matrix owned;
    const Matrix* candidates = &owned;
    if (config.space_mode == SpaceMode::FullSample) {
        candidates = &data.covariates();
        res.space = SpaceSource::FullSample;
    } else {
        const Matrix& x0 = pilot.covariates();
        const double eps = config.epsilon ? *config.epsilon : epsilon_rule(x0);
        const ClusterModel cluster = dbscan_fit(x0, eps, config.min_points);
        if (cluster.num_clusters == 0)
            throw DesignSpaceEmpty("odbss: every pilot point is an outlier; increase k0 or epsilon");
        const std::size_t auto_l = default_grid_partitions(model.p, config.candidate_budget);
        SpaceMode mode = config.space_mode;
        if (mode == SpaceMode::Auto) mode = config.grid_partitions.value_or(auto_l) >= 4 ? SpaceMode::Grid : SpaceMode::MH;
        if (mode == SpaceMode::Grid) {
            const std::size_t L = config.grid_partitions.value_or(auto_l);
            if (L < 2)
                throw TooManyCandidates("odbss: grid does not fit the candidate budget; use the MH design space");
            owned = grid_design_space(cluster, L, bounds_of(x0), config.candidate_budget).points;
            res.space = SpaceSource::Grid;
        } else {
            owned = mh_design_space(cluster, derive_seed(config.seed, {2}), config.mh).points;
            res.space = SpaceSource::MH;
        }
    }
    if (candidates->rows() == 0) throw DesignSpaceEmpty("odbss: estimated design space is empty");
    res.candidate_count = static_cast<std::size_t>(candidates->rows());
    res.timings.stage1_ms = ms_since(t0);

    // Stage 2
    t0 = Clock::now();
    const FactorTable table(model, beta, *candidates);
    const Design full = optimize_design(*candidates, table, config.criterion, config.design);
    res.design_used = reduce_support(full, config.zeta, model, beta, config.criterion);
    res.timings.stage2_ms = ms_since(t0);

    // Stage 3
    t0 = Clock::now();
    const std::vector<Index> rest =
        allocate(data, res.design_used, config.metric, model, beta, k - k0, res.initial_indices);
    res.indices = res.initial_indices;
    res.indices.insert(res.indices.end(), rest.begin(), rest.end());
    std::sort(res.indices.begin(), res.indices.end());
    if (std::adjacent_find(res.indices.begin(), res.indices.end()) != res.indices.end())
        throw Error("odbss: stage-3 allocation overlapped the pilot sample");
    res.timings.stage3_ms = ms_since(t0);
    return res;
}

}  // namespace odbss
