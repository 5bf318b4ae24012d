#include "odbss/models.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include "odbss/errors.hpp"

namespace odbss {

namespace {

constexpr double kMaxLogVar = 700.0;

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double logistic(double t) {
    if (t >= 0) return 1.0 / (1.0 + std::exp(-t));
    const double e = std::exp(t);
    return e / (1.0 + e);
}

// exp(t/2) / (1 + exp(t)) written so it neither overflows nor loses the tail.
double logistic_info_scale(double t) { return 0.5 / std::cosh(0.5 * t); }

void check_finite(const Vector& v, const char* what) {
    if (!v.allFinite()) throw InvalidArgument(std::string(what) + " contains non-finite values");
}

Matrix design_matrix(const ModelSpec& model, const Matrix& x) {
    if (!model.has_intercept()) return x;
    Matrix z(x.rows(), x.cols() + 1);
    z.col(0).setOnes();
    z.rightCols(x.cols()) = x;
    return z;
}

void check_model_data(const ModelSpec& model, const Vector& beta, const Dataset& data,
                      std::span<const double> weights) {
    if (data.dim() != model.p) throw InvalidArgument("covariate dimension does not match model");
    if (static_cast<std::size_t>(beta.size()) != model.dim_beta())
        throw InvalidArgument("parameter dimension does not match model");
    if (!weights.empty() && weights.size() != data.rows())
        throw InvalidArgument("weight count does not match dataset rows");
    if (!data.has_responses()) throw InvalidArgument("dataset has no responses");
    check_finite(beta, "beta");
}

Vector unit_or(std::span<const double> weights, std::size_t n) {
    if (weights.empty()) return Vector::Ones(static_cast<Eigen::Index>(n));
    Vector w(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) {
        if (!(weights[i] > 0.0) || !std::isfinite(weights[i]))
            throw InvalidArgument("weights must be positive and finite");
        w[static_cast<Eigen::Index>(i)] = weights[i];
    }
    return w;
}

// Everything Newton needs at one parameter value.
struct Evaluation {
    double loglik = -std::numeric_limits<double>::infinity();
    Vector score;
    Matrix neg_hessian;  // observed, negated
    Matrix fisher;       // expected information (hetero only)
};

class Objective {
public:
    Objective(const ModelSpec& model, const Dataset& data, Vector weights)
        : model_(model), z_(design_matrix(model, data.covariates())), x_(data.covariates()),
          y_(data.responses()), w_(std::move(weights)) {}

    double loglik(const Vector& beta) const {
        const Vector eta = z_ * beta;
        switch (model_.family) {
            case Family::Logistic:
            case Family::LogisticNoIntercept: {
                double s = 0.0;
                for (Eigen::Index i = 0; i < eta.size(); ++i)
                    s += w_[i] * (y_[i] * eta[i] - softplus(eta[i]));
                return s;
            }
            case Family::Linear: {
                const double c = 0.5 * std::log(2.0 * std::numbers::pi);
                double s = 0.0;
                for (Eigen::Index i = 0; i < eta.size(); ++i) {
                    const double r = y_[i] - eta[i];
                    s += w_[i] * (-c - 0.5 * r * r);
                }
                return s;
            }
            case Family::HeteroLogVar: {
                const Vector logvar = x_ * beta.tail(model_.p);
                const double c = 0.5 * std::log(2.0 * std::numbers::pi);
                double s = 0.0;
                for (Eigen::Index i = 0; i < eta.size(); ++i) {
                    if (std::abs(logvar[i]) > kMaxLogVar) return -std::numeric_limits<double>::infinity();
                    const double r = y_[i] - eta[i];
                    s += w_[i] * (-c - 0.5 * logvar[i] - 0.5 * r * r * std::exp(-logvar[i]));
                }
                return s;
            }
        }
        return 0.0;
    }

    Evaluation evaluate(const Vector& beta, bool want_hessian) const {
        Evaluation ev;
        ev.loglik = loglik(beta);
        const Eigen::Index n = z_.rows();
        const Eigen::Index d = z_.cols();
        const Vector eta = z_ * beta;
        switch (model_.family) {
            case Family::Logistic:
            case Family::LogisticNoIntercept:
            case Family::Linear: {
                Vector resid(n), curv(n);
                const bool lin = model_.family == Family::Linear;
                for (Eigen::Index i = 0; i < n; ++i) {
                    const double mu = lin ? eta[i] : logistic(eta[i]);
                    resid[i] = w_[i] * (y_[i] - mu);
                    curv[i] = w_[i] * (lin ? 1.0 : mu * (1.0 - mu));
                }
                ev.score = z_.transpose() * resid;
                if (want_hessian) {
                    ev.neg_hessian.resize(d, d);
                    kernels::weighted_gram(column_block(z_), {curv.data(), static_cast<std::size_t>(n)},
                                           {ev.neg_hessian.data(), static_cast<std::size_t>(d * d)});
                    ev.fisher = ev.neg_hessian;
                }
                break;
            }
            case Family::HeteroLogVar: {
                const Vector logvar = x_ * beta.tail(model_.p);
                Vector a(n), b(n), c(n), e(n), r(n);
                for (Eigen::Index i = 0; i < n; ++i) {
                    e[i] = std::exp(-std::clamp(logvar[i], -kMaxLogVar, kMaxLogVar));
                    r[i] = y_[i] - eta[i];
                    a[i] = w_[i] * r[i] * e[i];                              // coefficient of z
                    b[i] = w_[i] * 0.5 * (r[i] * r[i] * e[i] - 1.0);         // coefficient of v
                }
                // v = (0, x): only the slope rows receive the variance part.
                ev.score = z_.transpose() * a;
                ev.score.tail(model_.p) += x_.transpose() * b;
                if (want_hessian) {
                    for (Eigen::Index i = 0; i < n; ++i) c[i] = w_[i] * e[i];
                    const Matrix zz = z_.transpose() * (z_.array().colwise() * c.array()).matrix();
                    Vector half_w = 0.5 * w_;
                    const Matrix vv = x_.transpose() * (x_.array().colwise() * half_w.array()).matrix();
                    Vector rc(n), rrc(n);
                    for (Eigen::Index i = 0; i < n; ++i) {
                        rc[i] = c[i] * r[i];
                        rrc[i] = 0.5 * c[i] * r[i] * r[i];
                    }
                    const Matrix zv = z_.transpose() * (x_.array().colwise() * rc.array()).matrix();
                    const Matrix vv_obs = x_.transpose() * (x_.array().colwise() * rrc.array()).matrix();
                    ev.fisher = zz;
                    ev.fisher.bottomRightCorner(model_.p, model_.p) += vv;
                    ev.neg_hessian = zz;
                    ev.neg_hessian.rightCols(model_.p) += zv;
                    ev.neg_hessian.bottomRows(model_.p) += zv.transpose();
                    ev.neg_hessian.bottomRightCorner(model_.p, model_.p) += vv_obs;
                }
                break;
            }
        }
        (void)d;
        return ev;
    }

    const Matrix& z() const { return z_; }
    const Vector& y() const { return y_; }
    double weight_sum() const { return w_.sum(); }

private:
    ModelSpec model_;
    Matrix z_;
    Matrix x_;
    Vector y_;
    Vector w_;
};

}  // namespace

Family parse_family(const std::string& name) {
    if (name == "logistic") return Family::Logistic;
    if (name == "logistic-no-intercept" || name == "logistic_no_intercept") return Family::LogisticNoIntercept;
    if (name == "linear") return Family::Linear;
    if (name == "hetero" || name == "hetero-logvar" || name == "hetero_logvar") return Family::HeteroLogVar;
    throw InvalidArgument("unknown model family: " + name);
}

std::string family_name(Family f) {
    switch (f) {
        case Family::Logistic:
            return "logistic";
        case Family::LogisticNoIntercept:
            return "logistic-no-intercept";
        case Family::Linear:
            return "linear";
        case Family::HeteroLogVar:
            return "hetero";
    }
    return "unknown";
}

Vector regressor(const ModelSpec& model, const Vector& x) {
    if (!model.has_intercept()) return x;
    Vector z(x.size() + 1);
    z[0] = 1.0;
    z.tail(x.size()) = x;
    return z;
}

InfoFactor fisher_info(const ModelSpec& model, const Vector& beta, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != model.p)
        throw InvalidArgument("fisher_info: covariate dimension does not match model");
    if (static_cast<std::size_t>(beta.size()) != model.dim_beta())
        throw InvalidArgument("fisher_info: parameter dimension does not match model");
    const Vector z = regressor(model, x);
    InfoFactor out;
    switch (model.family) {
        case Family::Logistic:
        case Family::LogisticNoIntercept:
            out.factors = logistic_info_scale(z.dot(beta)) * z;
            break;
        case Family::Linear:
            out.factors = z;
            break;
        case Family::HeteroLogVar: {
            const double logvar = x.dot(beta.tail(model.p));
            if (!(std::abs(logvar) <= kMaxLogVar)) {
                std::ostringstream msg;
                msg << "fisher_info: log-variance " << logvar << " out of range at x = ("
                    << x.transpose() << ")";
                throw NumericOverflow(msg.str());
            }
            out.factors.resize(z.size(), 2);
            out.factors.col(0) = std::exp(-0.5 * logvar) * z;
            out.factors.col(1).setZero();
            out.factors.col(1).tail(model.p) = x / std::numbers::sqrt2;
            break;
        }
    }
    return out;
}

FactorTable::FactorTable(const ModelSpec& model, const Vector& beta, const Matrix& points)
    : rank_(model.info_rank()), dim_(model.dim_beta()) {
    if (static_cast<std::size_t>(points.cols()) != model.p)
        throw InvalidArgument("FactorTable: covariate dimension does not match model");
    if (static_cast<std::size_t>(beta.size()) != dim_)
        throw InvalidArgument("FactorTable: parameter dimension does not match model");
    const Eigen::Index n = points.rows();
    const Eigen::Index d = static_cast<Eigen::Index>(dim_);
    const Eigen::Index p = static_cast<Eigen::Index>(model.p);
    data_.resize(n, static_cast<Eigen::Index>(rank_) * d);
    const Eigen::Index off = model.has_intercept() ? 1 : 0;
    Vector scale(n);
    switch (model.family) {
        case Family::Logistic:
        case Family::LogisticNoIntercept: {
            Vector eta = points * beta.tail(p);
            if (off) eta.array() += beta[0];
            for (Eigen::Index i = 0; i < n; ++i) scale[i] = logistic_info_scale(eta[i]);
            break;
        }
        case Family::Linear:
            scale.setOnes();
            break;
        case Family::HeteroLogVar: {
            const Vector logvar = points * beta.tail(p);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (!(std::abs(logvar[i]) <= kMaxLogVar)) {
                    std::ostringstream msg;
                    msg << "fisher_info: log-variance out of range at row " << i;
                    throw NumericOverflow(msg.str());
                }
                scale[i] = std::exp(-0.5 * logvar[i]);
            }
            break;
        }
    }
    if (off) data_.col(0) = scale;
    for (Eigen::Index a = 0; a < p; ++a) data_.col(off + a) = points.col(a).cwiseProduct(scale);
    if (rank_ == 2) {
        data_.col(d).setZero();
        for (Eigen::Index a = 0; a < p; ++a) data_.col(d + 1 + a) = points.col(a) / std::numbers::sqrt2;
    }
    const auto R = static_cast<Eigen::Index>(rank_);
    grams_.resize(n, R * (R + 1) / 2);
    for (std::size_t r = 0; r < rank_; ++r)
        for (std::size_t s = r; s < rank_; ++s) {
            const auto br = static_cast<Eigen::Index>(r) * d, bs = static_cast<Eigen::Index>(s) * d;
            grams_.col(static_cast<Eigen::Index>(gram_column(r, s))) =
                (data_.middleCols(br, d).cwiseProduct(data_.middleCols(bs, d))).rowwise().sum();
        }
}

kernels::ColumnBlock FactorTable::component(std::size_t r) const {
    return kernels::ColumnBlock{data_.data() + r * dim_ * rows(), rows(), dim_, rows()};
}

InfoFactor FactorTable::factor(Index i) const {
    InfoFactor f;
    f.factors.resize(static_cast<Eigen::Index>(dim_), static_cast<Eigen::Index>(rank_));
    for (std::size_t r = 0; r < rank_; ++r)
        for (std::size_t a = 0; a < dim_; ++a)
            f.factors(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(r)) =
                data_(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r * dim_ + a));
    return f;
}

double log_likelihood(const ModelSpec& model, const Vector& beta, const Dataset& data,
                      std::span<const double> weights) {
    check_model_data(model, beta, data, weights);
    check_finite(data.responses(), "responses");
    if (!data.covariates().allFinite()) throw InvalidArgument("covariates contain non-finite values");
    Objective obj(model, data, unit_or(weights, data.rows()));
    return obj.loglik(beta);
}

Vector score(const ModelSpec& model, const Vector& beta, const Dataset& data,
             std::span<const double> weights) {
    check_model_data(model, beta, data, weights);
    Objective obj(model, data, unit_or(weights, data.rows()));
    return obj.evaluate(beta, false).score;
}

ParamEstimate fit_mle(const ModelSpec& model, const Dataset& data, std::span<const double> weights,
                      const MleOptions& options) {
    if (data.rows() == 0) throw InvalidArgument("fit_mle: empty dataset");
    const Eigen::Index d = static_cast<Eigen::Index>(model.dim_beta());
    check_model_data(model, Vector::Zero(d), data, weights);
    if (!data.covariates().allFinite() || !data.responses().allFinite())
        throw InvalidArgument("fit_mle: non-finite data");
    if (model.is_logistic()) {
        const Vector& y = data.responses();
        const bool has0 = (y.array() == 0.0).any();
        const bool has1 = (y.array() == 1.0).any();
        if (!has0 || !has1)
            throw SeparationError("fit_mle: only one response class present; enlarge the sample");
    }

    Objective obj(model, data, unit_or(weights, data.rows()));
    const double scale = std::max(1.0, obj.weight_sum());

    ParamEstimate est;
    est.beta = Vector::Zero(d);
    if (model.family == Family::HeteroLogVar || model.family == Family::Linear) {
        // least-squares start
        Eigen::LDLT<Matrix> ls(obj.z().transpose() * obj.z());
        est.beta = ls.solve(obj.z().transpose() * obj.y());
        if (!est.beta.allFinite()) est.beta.setZero();
    }

    // Converged once the Newton step is below tol relative to |beta|; the step
    // does not change when all weights are scaled by a constant.
    Evaluation ev = obj.evaluate(est.beta, true);
    for (std::size_t it = 0; it < options.max_iter; ++it) {
        est.iterations = it;
        if (ev.score.norm() == 0.0) {
            est.converged = true;
            break;
        }
        // Newton direction when the observed information is positive definite,
        // Fisher scoring otherwise.
        Vector step;
        Eigen::LLT<Matrix> llt(ev.neg_hessian);
        const bool newton = llt.info() == Eigen::Success;
        if (newton) {
            step = llt.solve(ev.score);
        } else {
            Eigen::LDLT<Matrix> ldlt(ev.fisher);
            step = ldlt.solve(ev.score);
        }
        if (!step.allFinite()) break;
        const bool last = newton && step.norm() <= options.tol * std::max(1.0, est.beta.norm());

        double t = 1.0;
        bool moved = false;
        for (int halving = 0; halving < 40; ++halving, t *= 0.5) {
            const Vector trial = est.beta + t * step;
            const double ll = obj.loglik(trial);
            if (std::isfinite(ll) && ll >= ev.loglik - 1e-12 * std::abs(ev.loglik)) {
                est.beta = trial;
                moved = true;
                break;
            }
        }
        if (!moved) {
            est.converged = last;
            break;
        }
        ev = obj.evaluate(est.beta, true);
        est.iterations = it + 1;
        if (last) {
            est.converged = true;
            break;
        }
    }
    est.score_norm = ev.score.norm() / scale;

    if (model.is_logistic()) {
        const double max_eta = (obj.z() * est.beta).cwiseAbs().maxCoeff();
        const bool perfect = ev.loglik > -1e-6 * scale;
        if (perfect || (!est.converged && max_eta > 30.0)) {
            throw SeparationError(
                "fit_mle: coefficients diverge (separated responses); enlarge the sample");
        }
    }
    return est;
}

}  // namespace odbss
