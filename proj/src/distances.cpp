#include "odbss/distances.hpp"

#include <cmath>

#include "odbss/errors.hpp"

namespace odbss {

namespace {

constexpr double kRankRel = 1e-12;

// Symmetric PSD square root (or pseudo-inverse square root) by eigen-decomposition.
Matrix psd_power_half(const Matrix& g, bool inverse) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (g + g.transpose()));
    Vector lam = es.eigenvalues();
    const double cut = kRankRel * std::max(lam.maxCoeff(), 0.0);
    for (Eigen::Index i = 0; i < lam.size(); ++i) {
        if (lam[i] <= cut) lam[i] = 0.0;
        else lam[i] = inverse ? 1.0 / std::sqrt(lam[i]) : std::sqrt(lam[i]);
    }
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

double nuclear_norm(const Matrix& c) {
    if (c.size() == 0) return 0.0;
    if (c.rows() == 1 || c.cols() == 1) return c.norm();
    if (c.rows() == 2 && c.cols() == 2) {
        const double det = c(0, 0) * c(1, 1) - c(0, 1) * c(1, 0);
        return std::sqrt(c.squaredNorm() + 2.0 * std::abs(det));
    }
    return Eigen::JacobiSVD<Matrix>(c).singularValues().sum();
}

double finish(double d2) { return std::sqrt(std::max(d2, 0.0)); }

// Squared distance from the small Gram/cross matrices; ga_ih is Ga^-1/2.
double from_grams(Metric metric, const Matrix& ga, const Matrix& ga_ih, const Matrix& gb, const Matrix& c) {
    switch (metric) {
        case Metric::Frobenius:
            return ga.squaredNorm() + gb.squaredNorm() - 2.0 * c.squaredNorm();
        case Metric::SquareRoot: {
            const Matrix gb_ih = psd_power_half(gb, true);
            return ga.trace() + gb.trace() - 2.0 * (ga_ih * c * gb_ih * c.transpose()).trace();
        }
        case Metric::Procrustes:
            return ga.trace() + gb.trace() - 2.0 * nuclear_norm(c);
    }
    return 0.0;
}

void check_dims(const InfoFactor& a, std::size_t d) {
    if (a.dim() != d) throw InvalidArgument("distance: parameter dimensions differ");
}

}  // namespace

Metric parse_metric(const std::string& name) {
    if (name == "frobenius") return Metric::Frobenius;
    if (name == "sqrt") return Metric::SquareRoot;
    if (name == "procrustes") return Metric::Procrustes;
    throw InvalidArgument("unknown metric '" + name + "' (expected frobenius, sqrt or procrustes)");
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::Frobenius:
            return "frobenius";
        case Metric::SquareRoot:
            return "sqrt";
        case Metric::Procrustes:
            return "procrustes";
    }
    return "unknown";
}

double distance(Metric metric, const InfoFactor& a, const InfoFactor& b) {
    check_dims(a, b.dim());
    const Matrix& la = a.factors;
    const Matrix& lb = b.factors;
    if (a.rank() == 1 && b.rank() == 1) {
        const double na = la.col(0).squaredNorm();
        const double nb = lb.col(0).squaredNorm();
        const double c = la.col(0).dot(lb.col(0));
        switch (metric) {
            case Metric::Frobenius:
                return finish(na * na + nb * nb - 2.0 * c * c);
            case Metric::SquareRoot:
                return finish(na + nb - (na > 0.0 && nb > 0.0 ? 2.0 * c * c / std::sqrt(na * nb) : 0.0));
            case Metric::Procrustes:
                return finish(na + nb - 2.0 * std::abs(c));
        }
    }
    const Matrix ga = la.transpose() * la;
    const Matrix gb = lb.transpose() * lb;
    const Matrix c = la.transpose() * lb;
    const Matrix ga_ih = metric == Metric::SquareRoot ? psd_power_half(ga, true) : Matrix();
    return finish(from_grams(metric, ga, ga_ih, gb, c));
}

double distance_dense(Metric metric, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols() || a.rows() != a.cols())
        throw InvalidArgument("distance_dense: matrices must be square and of equal size");
    switch (metric) {
        case Metric::Frobenius:
            return (a - b).norm();
        case Metric::SquareRoot:
            return (psd_power_half(a, false) - psd_power_half(b, false)).norm();
        case Metric::Procrustes: {
            // Factors L = V diag(sqrt(lambda)) from the eigen-decomposition.
            auto factor = [](const Matrix& m) {
                Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
                return Matrix(es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal());
            };
            const Matrix l1 = factor(a);
            const Matrix l2 = factor(b);
            const double s = Eigen::JacobiSVD<Matrix>(l2.transpose() * l1).singularValues().sum();
            return finish(l1.squaredNorm() + l2.squaredNorm() - 2.0 * s);
        }
    }
    return 0.0;
}

Vector distance_row(Metric metric, const InfoFactor& a, const FactorTable& table) {
    check_dims(a, table.dim());
    const std::size_t n = table.rows();
    const std::size_t ra = a.rank();
    const std::size_t rb = table.rank();
    const auto nn = static_cast<Eigen::Index>(n);

    // cross(j, s * rb + t) = a_s' f_{j,t}
    Matrix cross(nn, static_cast<Eigen::Index>(ra * rb));
    for (std::size_t s = 0; s < ra; ++s) {
        const Vector as = a.factors.col(static_cast<Eigen::Index>(s));
        for (std::size_t t = 0; t < rb; ++t)
            kernels::dot_rows(table.component(t), std::span<const double>(as.data(), as.size()),
                              std::span<double>(cross.col(static_cast<Eigen::Index>(s * rb + t)).data(), n));
    }
    const Matrix& grams = table.grams();
    Vector out(nn);

    if (ra == 1 && rb == 1) {
        const double na = a.factors.col(0).squaredNorm();
        const double sa = std::sqrt(na);
        for (Eigen::Index j = 0; j < nn; ++j) {
            const double nb = grams(j, 0);
            const double c = cross(j, 0);
            double d2 = 0.0;
            switch (metric) {
                case Metric::Frobenius:
                    d2 = na * na + nb * nb - 2.0 * c * c;
                    break;
                case Metric::SquareRoot:
                    d2 = na + nb - (na > 0.0 && nb > 0.0 ? 2.0 * c * c / (sa * std::sqrt(nb)) : 0.0);
                    break;
                case Metric::Procrustes:
                    d2 = na + nb - 2.0 * std::abs(c);
                    break;
            }
            out[j] = finish(d2);
        }
        return out;
    }

    const Matrix ga = a.factors.transpose() * a.factors;
    const Matrix ga_ih = metric == Metric::SquareRoot ? psd_power_half(ga, true) : Matrix();
    const auto rae = static_cast<Eigen::Index>(ra), rbe = static_cast<Eigen::Index>(rb);
    Matrix gb(rbe, rbe), c(rae, rbe);
    for (Eigen::Index j = 0; j < nn; ++j) {
        for (std::size_t t = 0; t < rb; ++t)
            for (std::size_t u = t; u < rb; ++u)
                gb(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(u)) =
                    gb(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(t)) =
                        grams(j, static_cast<Eigen::Index>(table.gram_column(t, u)));
        for (Eigen::Index s = 0; s < rae; ++s)
            for (Eigen::Index t = 0; t < rbe; ++t) c(s, t) = cross(j, s * rbe + t);
        out[j] = finish(from_grams(metric, ga, ga_ih, gb, c));
    }
    return out;
}

Vector distance_row(Metric metric, const InfoFactor& a, const Dataset& data, const ModelSpec& model,
                    const Vector& beta) {
    return distance_row(metric, a, FactorTable(model, beta, data.covariates()));
}

}  // namespace odbss
