#include "odbss/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <map>
#include <random>

#include "odbss/errors.hpp"
#include "odbss/rng.hpp"

namespace odbss {

namespace {

std::span<const double> as_span(const Vector& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

void sq_dists(const Matrix& pts, const Vector& x, std::vector<double>& out) {
    out.resize(static_cast<std::size_t>(pts.rows()));
    if (pts.rows() == 0) return;
    kernels::sq_dist_rows(column_block(pts), as_span(x), out);
}

}  // namespace

double epsilon_rule(const Matrix& points) {
    const Eigen::Index k0 = points.rows();
    const Eigen::Index p = points.cols();
    if (k0 < 5) throw InvalidArgument("epsilon_rule: need at least 5 points");
    if (p < 1) throw InvalidArgument("epsilon_rule: need at least one dimension");
    if (!points.allFinite()) throw InvalidArgument("epsilon_rule: non-finite points");

    const double range = points.maxCoeff() - points.minCoeff();
    std::vector<double> d2;
    double max_dist4 = 0.0;
    for (Eigen::Index i = 0; i < k0; ++i) {
        sq_dists(points, points.row(i).transpose(), d2);
        d2[static_cast<std::size_t>(i)] = std::numeric_limits<double>::infinity();
        std::nth_element(d2.begin(), d2.begin() + 3, d2.end());
        max_dist4 = std::max(max_dist4, std::sqrt(d2[3]));
    }
    double eps = max_dist4;
    if (p > 1) eps = std::min(0.1 * static_cast<double>(p - 1) * range, max_dist4);
    if (!(eps > 0.0)) throw DegenerateData("epsilon_rule: degenerate point set (zero radius)");
    return eps;
}

ClusterModel dbscan_fit(const Matrix& points, double epsilon, std::size_t min_points) {
    if (!(epsilon > 0.0)) throw InvalidArgument("dbscan_fit: epsilon must be positive");
    if (min_points < 1) throw InvalidArgument("dbscan_fit: min_points must be >= 1");
    ClusterModel m;
    m.epsilon = epsilon;
    m.min_points = min_points;
    m.points = points;
    const std::size_t n = static_cast<std::size_t>(points.rows());
    m.labels.assign(n, 0);
    m.core.assign(n, false);
    const double eps2 = epsilon * epsilon;

    std::vector<double> d2;
    for (std::size_t i = 0; i < n; ++i) {
        sq_dists(points, points.row(static_cast<Eigen::Index>(i)).transpose(), d2);
        const auto count = static_cast<std::size_t>(
            std::count_if(d2.begin(), d2.end(), [&](double v) { return v <= eps2; }));
        m.core[i] = count >= min_points;
    }

    // Expand clusters in scan order; a border point keeps the first cluster
    // that reaches it.
    std::vector<bool> assigned(n, false);
    for (std::size_t i = 0; i < n; ++i) {
        if (!m.core[i] || assigned[i]) continue;
        const int label = ++m.num_clusters;
        std::deque<std::size_t> frontier{i};
        assigned[i] = true;
        m.labels[i] = label;
        while (!frontier.empty()) {
            const std::size_t c = frontier.front();
            frontier.pop_front();
            sq_dists(points, points.row(static_cast<Eigen::Index>(c)).transpose(), d2);
            for (std::size_t j = 0; j < n; ++j) {
                if (d2[j] > eps2 || assigned[j]) continue;
                assigned[j] = true;
                m.labels[j] = label;
                if (m.core[j]) frontier.push_back(j);
            }
        }
    }

    const auto ncore = static_cast<Eigen::Index>(std::count(m.core.begin(), m.core.end(), true));
    m.core_points.resize(ncore, points.cols());
    Eigen::Index r = 0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!m.core[i]) continue;
        m.core_points.row(r++) = points.row(static_cast<Eigen::Index>(i));
        m.core_labels.push_back(m.labels[i]);
    }
    return m;
}

int is_member(const ClusterModel& model, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != model.dim())
        throw InvalidArgument("is_member: dimension mismatch");
    std::vector<double> d2;
    sq_dists(model.core_points, x, d2);
    const double eps2 = model.epsilon * model.epsilon;
    double best = std::numeric_limits<double>::infinity();
    int label = 0;
    for (std::size_t j = 0; j < d2.size(); ++j) {
        if (d2[j] > eps2) continue;
        if (d2[j] < best || (d2[j] == best && model.core_labels[j] < label)) {
            best = d2[j];
            label = model.core_labels[j];
        }
    }
    return label;
}

const char* space_source_name(SpaceSource s) {
    switch (s) {
        case SpaceSource::Grid:
            return "grid";
        case SpaceSource::MH:
            return "mh";
        case SpaceSource::FullSample:
            return "full";
    }
    return "unknown";
}

GridBounds bounds_of(const Matrix& points) {
    if (points.rows() == 0) throw InvalidArgument("bounds_of: empty point set");
    return GridBounds{points.colwise().minCoeff().transpose(), points.colwise().maxCoeff().transpose()};
}

std::size_t default_grid_partitions(std::size_t p, std::size_t budget) {
    std::size_t best = 0;
    for (std::size_t L = 1;; ++L) {
        double count = std::pow(static_cast<double>(L + 1), static_cast<double>(p));
        if (count > static_cast<double>(budget)) break;
        best = L;
        if (p == 0) break;
    }
    return best;
}

DesignSpace grid_design_space(const ClusterModel& model, std::size_t partitions,
                              const GridBounds& bounds, std::size_t budget) {
    const std::size_t p = model.dim();
    if (partitions < 2) throw InvalidArgument("grid_design_space: need at least 2 partitions");
    if (static_cast<std::size_t>(bounds.lower.size()) != p || static_cast<std::size_t>(bounds.upper.size()) != p)
        throw InvalidArgument("grid_design_space: bounds dimension mismatch");
    const double total = std::pow(static_cast<double>(partitions + 1), static_cast<double>(p));
    if (total > static_cast<double>(budget))
        throw TooManyCandidates("grid_design_space: grid has more points than the candidate budget; "
                                "use the Metropolis-Hastings design space");

    const auto L = static_cast<double>(partitions);
    std::vector<std::vector<double>> values(p);
    std::vector<double> step(p);
    for (std::size_t j = 0; j < p; ++j) {
        const double lo = bounds.lower[static_cast<Eigen::Index>(j)];
        const double hi = bounds.upper[static_cast<Eigen::Index>(j)];
        if (!(hi >= lo)) throw InvalidArgument("grid_design_space: upper bound below lower bound");
        step[j] = (hi - lo) / L;
        if (hi == lo) {
            values[j] = {lo};
            continue;
        }
        for (std::size_t i = 0; i <= partitions; ++i)
            values[j].push_back(i == partitions ? hi : (L * lo + (hi - lo) * static_cast<double>(i)) / L);
    }
    std::vector<std::size_t> stride(p + 1, 1);
    for (std::size_t j = 0; j < p; ++j) stride[j + 1] = stride[j] * values[j].size();
    const std::size_t count = stride[p];

    std::vector<double> best(count, std::numeric_limits<double>::infinity());
    std::vector<int> label(count, 0);
    const double eps = model.epsilon;
    const double eps2 = eps * eps;

    // Each core point only touches the grid points inside its epsilon box.
    std::vector<std::size_t> lo(p), hi(p);
    std::vector<std::vector<double>> sq(p);
    for (Eigen::Index c = 0; c < model.core_points.rows(); ++c) {
        bool empty = false;
        for (std::size_t j = 0; j < p; ++j) {
            const double x = model.core_points(c, static_cast<Eigen::Index>(j));
            const std::size_t nj = values[j].size();
            if (nj == 1) {
                lo[j] = hi[j] = 0;
            } else {
                const double a = std::floor((x - eps - values[j][0]) / step[j]) - 1.0;
                const double b = std::ceil((x + eps - values[j][0]) / step[j]) + 1.0;
                lo[j] = a <= 0.0 ? 0 : static_cast<std::size_t>(std::min(a, static_cast<double>(nj)));
                hi[j] = b < 0.0 ? 0 : static_cast<std::size_t>(std::min(b, static_cast<double>(nj - 1)));
                if (b < 0.0 || lo[j] > hi[j]) empty = true;
            }
            sq[j].assign(nj, 0.0);
            for (std::size_t i = lo[j]; i <= hi[j] && i < nj; ++i) {
                const double diff = values[j][i] - x;
                sq[j][i] = diff * diff;
            }
        }
        if (empty) continue;
        const int lab = model.core_labels[static_cast<std::size_t>(c)];
        // Depth-first over dimensions, pruning once the partial sum leaves the ball.
        auto visit = [&](auto&& self, std::size_t j, double d2, std::size_t g) -> void {
            if (j == 0) {
                for (std::size_t i = lo[0]; i <= hi[0]; ++i) {
                    const double t = d2 + sq[0][i];
                    const std::size_t cell = g + i;
                    if (t <= eps2 && (t < best[cell] || (t == best[cell] && lab < label[cell]))) {
                        best[cell] = t;
                        label[cell] = lab;
                    }
                }
                return;
            }
            for (std::size_t i = lo[j]; i <= hi[j]; ++i) {
                const double t = d2 + sq[j][i];
                if (t <= eps2) self(self, j - 1, t, g + i * stride[j]);
            }
        };
        visit(visit, p - 1, 0.0, 0);
    }

    DesignSpace space;
    space.source = SpaceSource::Grid;
    const auto kept = static_cast<Eigen::Index>(std::count_if(label.begin(), label.end(), [](int l) { return l > 0; }));
    space.points.resize(kept, static_cast<Eigen::Index>(p));
    Eigen::Index r = 0;
    for (std::size_t g = 0; g < count; ++g) {
        if (label[g] == 0) continue;
        std::size_t rem = g;
        for (std::size_t j = 0; j < p; ++j) {
            space.points(r, static_cast<Eigen::Index>(j)) = values[j][rem % values[j].size()];
            rem /= values[j].size();
        }
        ++r;
    }
    return space;
}

std::size_t mh_quota(std::size_t p) { return 5 * (p * (p + 1) / 2 + 1); }

DesignSpace mh_design_space(const ClusterModel& model, std::uint64_t seed, const MhOptions& options) {
    if (model.num_clusters < 1)
        throw DesignSpaceEmpty("mh_design_space: no clusters (all training points are outliers)");
    const std::size_t p = model.dim();
    const std::size_t quota = options.quota.value_or(mh_quota(p));
    const auto pe = static_cast<Eigen::Index>(p);

    std::vector<Vector> accepted;
    for (int c = 1; c <= model.num_clusters; ++c) {
        // cluster members and core points
        std::vector<Eigen::Index> members, cores;
        for (std::size_t i = 0; i < model.labels.size(); ++i) {
            if (model.labels[i] != c) continue;
            members.push_back(static_cast<Eigen::Index>(i));
            if (model.core[i]) cores.push_back(static_cast<Eigen::Index>(i));
        }
        Vector sd(pe);
        if (options.scale_diagonal) {
            if (options.scale_diagonal->size() != pe)
                throw InvalidArgument("mh_design_space: scale dimension mismatch");
            sd = options.scale_diagonal->cwiseMax(0.0).cwiseSqrt();
        } else {
            Vector mean = Vector::Zero(pe);
            for (auto i : members) mean += model.points.row(i).transpose();
            mean /= static_cast<double>(members.size());
            Vector var = Vector::Zero(pe);
            for (auto i : members) var += (model.points.row(i).transpose() - mean).cwiseAbs2();
            if (members.size() > 1) var /= static_cast<double>(members.size() - 1);
            for (Eigen::Index j = 0; j < pe; ++j)
                if (!(var[j] > 0.0)) var[j] = model.epsilon * model.epsilon;
            sd = (var * (2.38 * 2.38 / static_cast<double>(p))).cwiseSqrt();
        }
        sd *= options.scale_factor;

        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(c)}));
        std::normal_distribution<double> normal;
        std::chi_squared_distribution<double> chi2(3.0);
        std::uniform_int_distribution<std::size_t> pick(0, cores.size() - 1);

        Vector state = model.points.row(cores[pick(rng)]).transpose();
        std::size_t proposals = 0, hits = 0;
        Vector prop(pe);
        while (hits < quota) {
            const double w = std::sqrt(chi2(rng) / 3.0);
            for (Eigen::Index j = 0; j < pe; ++j) prop[j] = state[j] + sd[j] * normal(rng) / w;
            ++proposals;
            if (is_member(model, prop) == c) {
                state = prop;
                accepted.push_back(state);
                ++hits;
            }
            if (proposals % options.stall_window == 0 &&
                static_cast<double>(hits) < options.min_acceptance * static_cast<double>(proposals)) {
                throw StalledChain("mh_design_space: acceptance rate below threshold in cluster " +
                                   std::to_string(c) + "; adjust the proposal scale");
            }
        }
    }

    std::sort(accepted.begin(), accepted.end(), [](const Vector& a, const Vector& b) {
        return std::lexicographical_compare(a.data(), a.data() + a.size(), b.data(), b.data() + b.size());
    });
    accepted.erase(std::unique(accepted.begin(), accepted.end(),
                               [](const Vector& a, const Vector& b) { return a == b; }),
                   accepted.end());
    DesignSpace space;
    space.source = SpaceSource::MH;
    space.points.resize(static_cast<Eigen::Index>(accepted.size()), pe);
    for (std::size_t r = 0; r < accepted.size(); ++r) space.points.row(static_cast<Eigen::Index>(r)) = accepted[r].transpose();
    return space;
}

}  // namespace odbss
