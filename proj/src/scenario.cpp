#include <cmath>
#include <random>

#include "odbss/bench.hpp"
#include "odbss/errors.hpp"
#include "odbss/rng.hpp"

namespace odbss {

CovariateLaw parse_law(const std::string& name) {
    if (name == "normal") return CovariateLaw::Normal;
    if (name == "t") return CovariateLaw::T;
    if (name == "skew-normal") return CovariateLaw::SkewNormal;
    if (name == "skew-t") return CovariateLaw::SkewT;
    if (name == "mixture") return CovariateLaw::NormalMixture;
    throw InvalidArgument("unknown covariate law '" + name + "'");
}

std::string law_name(CovariateLaw law) {
    switch (law) {
        case CovariateLaw::Normal:
            return "normal";
        case CovariateLaw::T:
            return "t";
        case CovariateLaw::SkewNormal:
            return "skew-normal";
        case CovariateLaw::SkewT:
            return "skew-t";
        case CovariateLaw::NormalMixture:
            return "mixture";
    }
    return "unknown";
}

SigmaKind parse_sigma_kind(const std::string& name) {
    if (name == "S1") return SigmaKind::S1;
    if (name == "S2") return SigmaKind::S2;
    if (name == "S3") return SigmaKind::S3;
    if (name == "custom") return SigmaKind::Custom;
    throw InvalidArgument("unknown covariance '" + name + "' (expected S1, S2, S3 or custom)");
}

void Scenario::validate() const {
    const auto pe = static_cast<Eigen::Index>(p());
    if (p() == 0) throw InvalidArgument("scenario " + id + ": p must be positive");
    if (static_cast<std::size_t>(beta.size()) != model.dim_beta())
        throw InvalidArgument("scenario " + id + ": beta has the wrong length");
    if (n == 0) throw InvalidArgument("scenario " + id + ": n must be positive");
    if (mu.size() != 0 && mu.size() != pe) throw InvalidArgument("scenario " + id + ": mu has the wrong length");
    if (mu2.size() != 0 && mu2.size() != pe) throw InvalidArgument("scenario " + id + ": mu2 has the wrong length");
    if ((law == CovariateLaw::SkewNormal || law == CovariateLaw::SkewT) && alpha.size() != pe)
        throw InvalidArgument("scenario " + id + ": skew laws need a slant vector of length p");
    if ((law == CovariateLaw::T || law == CovariateLaw::SkewT) && !(kappa > 0.0))
        throw InvalidArgument("scenario " + id + ": kappa must be positive");
    if (sigma == SigmaKind::Custom && (custom_sigma.rows() != pe || custom_sigma.cols() != pe))
        throw InvalidArgument("scenario " + id + ": custom sigma must be p x p");
}

Matrix make_sigma(SigmaKind kind, std::size_t p, std::uint64_t seed) {
    const auto pe = static_cast<Eigen::Index>(p);
    Matrix s1(pe, pe);
    for (Eigen::Index i = 0; i < pe; ++i)
        for (Eigen::Index j = 0; j < pe; ++j) s1(i, j) = std::pow(0.5, static_cast<double>(std::abs(i - j)));
    if (kind == SigmaKind::S1) return s1;
    if (kind == SigmaKind::Custom) throw InvalidArgument("make_sigma: custom covariance has no generator");

    const std::vector<double> c = kind == SigmaKind::S2 ? std::vector<double>{2.0, 1.8, 1.6, 1.4, 1.2}
                                                        : std::vector<double>{3.0, 2.0, 1.0};
    const auto m = static_cast<Eigen::Index>(c.size());
    if (pe < m) throw InvalidArgument("make_sigma: p too small for the requested covariance");

    // Haar-distributed orthonormal frame: QR of a Gaussian matrix with the
    // signs of R's diagonal moved into Q.
    Rng rng(seed);
    std::normal_distribution<double> normal;
    Matrix g(pe, m);
    for (Eigen::Index j = 0; j < m; ++j)
        for (Eigen::Index i = 0; i < pe; ++i) g(i, j) = normal(rng);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(pe, m);
    const Matrix r = qr.matrixQR().topRows(m).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < m; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);

    Matrix s = 0.1 * s1;
    for (Eigen::Index j = 0; j < m; ++j) s += c[static_cast<std::size_t>(j)] * q.col(j) * q.col(j).transpose();
    return 0.5 * (s + s.transpose());
}

Matrix scenario_sigma(const Scenario& s, std::uint64_t seed) {
    if (s.sigma == SigmaKind::Custom) return s.custom_sigma;
    return make_sigma(s.sigma, s.p(), seed);
}

Matrix sample_covariates(const Scenario& s, const Matrix& sigma, std::size_t n, std::uint64_t seed) {
    s.validate();
    const auto pe = static_cast<Eigen::Index>(s.p());
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success) throw InvalidArgument("sample_covariates: covariance is not positive definite");
    const Matrix lower = llt.matrixL();
    const Vector mu = s.mu.size() ? s.mu : Vector::Zero(pe);
    const Vector mu2 = s.mu2.size() ? s.mu2 : Vector(-mu);

    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::chi_squared_distribution<double> chi2(s.kappa);
    std::bernoulli_distribution coin(0.5);
    Matrix x(static_cast<Eigen::Index>(n), pe);
    Vector z(pe);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        for (Eigen::Index j = 0; j < pe; ++j) z[j] = normal(rng);
        Vector v = lower * z;
        switch (s.law) {
            case CovariateLaw::Normal:
                v += mu;
                break;
            case CovariateLaw::T:
                v = v / std::sqrt(chi2(rng) / s.kappa) + mu;
                break;
            case CovariateLaw::SkewNormal:
            case CovariateLaw::SkewT: {
                // Keep v with probability Phi(alpha'v), otherwise reflect it.
                if (normal(rng) > s.alpha.dot(v)) v = -v;
                if (s.law == CovariateLaw::SkewT) v /= std::sqrt(chi2(rng) / s.kappa);
                v += mu;
                break;
            }
            case CovariateLaw::NormalMixture:
                v += coin(rng) ? mu : mu2;
                break;
        }
        x.row(i) = v.transpose();
    }
    return x;
}

Matrix sample_covariates(const Scenario& s, std::size_t n, std::uint64_t seed) {
    return sample_covariates(s, scenario_sigma(s, derive_seed(seed, {0})), n, derive_seed(seed, {1}));
}

Vector sample_responses(const Scenario& s, const Matrix& x, std::uint64_t seed) {
    const ModelSpec& model = s.model;
    const auto p = static_cast<Eigen::Index>(model.p);
    if (x.cols() != p) throw InvalidArgument("sample_responses: covariate dimension mismatch");
    Vector mean = x * s.beta.tail(p);
    if (model.has_intercept()) mean.array() += s.beta[0];
    Rng rng(seed);
    std::normal_distribution<double> normal;
    std::uniform_real_distribution<double> unif;
    Vector y(x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        switch (model.family) {
            case Family::Logistic:
            case Family::LogisticNoIntercept: {
                const double e = mean[i];
                const double prob = e >= 0 ? 1.0 / (1.0 + std::exp(-e)) : std::exp(e) / (1.0 + std::exp(e));
                y[i] = unif(rng) < prob ? 1.0 : 0.0;
                break;
            }
            case Family::Linear:
                y[i] = mean[i] + normal(rng);
                break;
            case Family::HeteroLogVar: {
                const double logvar = x.row(i).dot(s.beta.tail(p));
                y[i] = mean[i] + std::exp(0.5 * logvar) * normal(rng);
                break;
            }
        }
    }
    return y;
}

Dataset replicate_data(const Scenario& s, std::uint64_t master_seed, std::size_t rep) {
    const std::uint64_t base = derive_seed(master_seed, {s.seed, static_cast<std::uint64_t>(rep)});
    Matrix x = sample_covariates(s, s.n, derive_seed(base, {1}));
    Vector y = sample_responses(s, x, derive_seed(base, {2}));
    return Dataset(std::move(x), std::move(y));
}

}  // namespace odbss
