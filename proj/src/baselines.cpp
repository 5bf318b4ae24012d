#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "odbss/errors.hpp"
#include "odbss/rng.hpp"
#include "odbss/sampler.hpp"

namespace odbss {

namespace {

Matrix regressors(const ModelSpec& model, const Matrix& x) {
    if (!model.has_intercept()) return x;
    Matrix z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = x;
    return z;
}

Vector logistic_prob(const Matrix& z, const Vector& beta) {
    const Vector eta = z * beta;
    return eta.unaryExpr([](double e) { return e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e)); });
}

// Takes one free row with the smallest (or largest) coordinate; ties by row.
void take_extremes(const Matrix& coords, Eigen::Index col, std::size_t q, bool largest, std::vector<bool>& taken,
                   std::vector<Index>& out) {
    if (q == 0) return;
    std::vector<Index> free;
    for (Index j = 0; j < taken.size(); ++j)
        if (!taken[j]) free.push_back(j);
    if (free.size() < q) throw Shortfall("iboss: not enough rows for the extreme-value rule", q - free.size());
    auto before = [&](Index a, Index b) {
        const double va = coords(static_cast<Eigen::Index>(a), col), vb = coords(static_cast<Eigen::Index>(b), col);
        if (va != vb) return largest ? va > vb : va < vb;
        return a < b;
    };
    std::nth_element(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(q - 1), free.end(), before);
    std::sort(free.begin(), free.begin() + static_cast<std::ptrdiff_t>(q), before);
    for (std::size_t i = 0; i < q; ++i) {
        taken[free[i]] = true;
        out.push_back(free[i]);
    }
}

}  // namespace

std::vector<Index> extreme_rows(const Matrix& coords, std::size_t k, std::vector<bool>& taken) {
    const auto q = static_cast<std::size_t>(coords.cols());
    if (q == 0) throw InvalidArgument("iboss: no coordinates");
    if (taken.size() != static_cast<std::size_t>(coords.rows())) throw InvalidArgument("iboss: mask size mismatch");
    const std::size_t r = k / (2 * q);
    std::vector<Index> out;
    out.reserve(k);
    for (std::size_t j = 0; j < q; ++j) {
        take_extremes(coords, static_cast<Eigen::Index>(j), r, false, taken, out);
        take_extremes(coords, static_cast<Eigen::Index>(j), r, true, taken, out);
    }
    for (std::size_t j = 0; out.size() < k; j = (j + 1) % q) {
        take_extremes(coords, static_cast<Eigen::Index>(j), 1, false, taken, out);
        if (out.size() < k) take_extremes(coords, static_cast<Eigen::Index>(j), 1, true, taken, out);
    }
    return out;
}

Vector osmac_probabilities(const Dataset& data, const ModelSpec& model, const Vector& beta, OsmacVariant variant,
                           const Dataset& pilot) {
    if (!model.is_logistic()) throw InvalidArgument("osmac: logistic model required");
    if (!data.has_responses()) throw InvalidArgument("osmac: responses required");
    const Matrix z = regressors(model, data.covariates());
    const Vector p = logistic_prob(z, beta);
    Vector scale(z.rows());
    if (variant == OsmacVariant::MVc) {
        scale = z.rowwise().norm();
    } else {
        const Matrix zp = regressors(model, pilot.covariates());
        const Vector pp = logistic_prob(zp, beta);
        const Vector w = (pp.array() * (1.0 - pp.array())).matrix() / static_cast<double>(zp.rows());
        const Matrix mx = zp.transpose() * w.asDiagonal() * zp;
        Eigen::LDLT<Matrix> ldlt(mx);
        if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
            throw SeparationError("osmac: pilot information matrix is singular");
        const Matrix sol = ldlt.solve(z.transpose());
        scale = sol.colwise().norm().transpose();
    }
    Vector pi = (data.responses() - p).cwiseAbs().cwiseProduct(scale);
    const double total = pi.sum();
    if (!(total > 0.0) || !std::isfinite(total)) return Vector::Constant(z.rows(), 1.0 / static_cast<double>(z.rows()));
    return pi / total;
}

SubsampleResult osmac_subsample(const Dataset& data, const ModelSpec& model, std::size_t k, std::size_t k0,
                                OsmacVariant variant, std::uint64_t seed) {
    const std::size_t n = data.rows();
    if (!model.is_logistic()) throw InvalidArgument("osmac: logistic model required");
    if (k > n || k0 > k || k0 == 0) throw InvalidArgument("osmac: need 0 < k0 <= k <= n");

    SubsampleResult res;
    res.initial_indices = uniform_subsample(n, k0, derive_seed(seed, {1}));
    const Dataset pilot = data.subset(res.initial_indices);
    res.pilot_beta = fit_mle(model, pilot).beta;

    const std::size_t k1 = k - k0;
    std::map<Index, std::size_t> mult;
    for (Index i : res.initial_indices) ++mult[i];
    Vector pi = Vector::Zero(static_cast<Eigen::Index>(n));
    if (k1 > 0) {
        pi = osmac_probabilities(data, model, res.pilot_beta, variant, pilot);
        std::discrete_distribution<std::size_t> draw(pi.data(), pi.data() + pi.size());
        Rng rng(derive_seed(seed, {2}));
        for (std::size_t t = 0; t < k1; ++t) ++mult[draw(rng)];
    }
    const double kd = static_cast<double>(k);
    for (const auto& [i, m] : mult) {
        const double mix = (static_cast<double>(k0) / kd) / static_cast<double>(n) +
                           (static_cast<double>(k1) / kd) * pi[static_cast<Eigen::Index>(i)];
        res.indices.push_back(i);
        res.estimation_weights.push_back(static_cast<double>(m) / mix);
    }
    return res;
}

SubsampleResult iboss_subsample(const Dataset& data, const ModelSpec& model, std::size_t k, std::uint64_t seed) {
    const std::size_t n = data.rows();
    const std::size_t p = data.dim();
    if (k < 2 * p) throw InvalidArgument("iboss: k must be at least 2p");
    if (k > n) throw InvalidArgument("iboss: k exceeds the number of rows");
    SubsampleResult res;
    std::vector<bool> taken(n, false);
    std::vector<Index> chosen;
    if (model.is_logistic()) {
        const std::size_t m0 = std::max<std::size_t>(static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(k))),
                                                     model.dim_beta() + 1);
        if (m0 >= k) throw InvalidArgument("iboss: k too small for the pilot sample");
        res.initial_indices = uniform_subsample(n, m0, derive_seed(seed, {1}));
        res.pilot_beta = fit_mle(model, data.subset(res.initial_indices)).beta;
        for (Index i : res.initial_indices) taken[i] = true;
        // Covariate part of the information factor phi(z'b) x.
        const FactorTable table(model, res.pilot_beta, data.covariates());
        const Matrix coords = table.data().middleCols(model.has_intercept() ? 1 : 0, static_cast<Eigen::Index>(p));
        chosen = extreme_rows(coords, k - m0, taken);
        chosen.insert(chosen.end(), res.initial_indices.begin(), res.initial_indices.end());
    } else {
        chosen = extreme_rows(data.covariates(), k, taken);
    }
    std::sort(chosen.begin(), chosen.end());
    res.indices = std::move(chosen);
    return res;
}

}  // namespace odbss
