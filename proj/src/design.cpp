#include "odbss/design.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "odbss/errors.hpp"

namespace odbss {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kSingularRel = 1e-12;
constexpr double kMaxDualQ = 16384.0;

bool is_a(const Criterion& c) { return c.q == -1.0; }

void check_criterion(const Criterion& c) {
    if (!(c.q < 1.0)) throw InvalidArgument("criterion: q must be < 1");
}

// log Psi(M), -inf when M is singular for a q <= 0 criterion.
double log_psi(const Matrix& m, const Criterion& c) {
    if (is_a(c) || c.is_d()) {
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success) return kNegInf;
        const Vector diag = llt.matrixLLT().diagonal();
        if (!(diag.minCoeff() > 0.0)) return kNegInf;
        if (diag.minCoeff() * diag.minCoeff() <= kSingularRel * m.diagonal().maxCoeff()) return kNegInf;
        if (c.is_d()) return 2.0 * diag.array().log().sum() / static_cast<double>(m.rows());
        const Matrix linv = llt.matrixL().solve(Matrix::Identity(m.rows(), m.cols()));
        return -std::log(linv.squaredNorm());
    }
    const double v = criterion_value(m, c);
    return v > 0.0 ? std::log(v) : kNegInf;
}

bool t_ok(const Matrix& m, const Eigen::LLT<Matrix>& llt) {
    const Vector diag = llt.matrixLLT().diagonal();
    return diag.minCoeff() > 0.0 && diag.minCoeff() * diag.minCoeff() > kSingularRel * m.diagonal().maxCoeff();
}

struct Gradient {
    Matrix g;
    double trgm = 0.0;
};

// Gradient of Psi at M up to a positive factor, normalized so that the
// directional derivative ratio is tr(G I) / tr(G M). False if M is singular.
bool gradient(const Matrix& m, const Criterion& c, Gradient& out) {
    const Eigen::Index d = m.rows();
    if (is_a(c) || c.is_d()) {
        Eigen::LLT<Matrix> llt(m);
        if (llt.info() != Eigen::Success) return false;
        const Matrix inv = llt.solve(Matrix::Identity(d, d));
        if (c.is_d()) {
            out.g = inv;
            out.trgm = static_cast<double>(d);
        } else {
            out.g = inv * inv;
            out.trgm = inv.trace();
        }
        return out.trgm > 0.0 && std::isfinite(out.trgm);
    }
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    const Vector& lam = es.eigenvalues();
    const double lmax = lam.maxCoeff();
    const double thr = kSingularRel * std::max(lmax, 0.0);
    if (!(lmax > 0.0) || (c.q <= 0.0 && lam[0] <= thr)) return false;
    if (c.is_e()) {
        // Average projection onto the (numerically) smallest eigenspace.
        const double cut = lam[0] + 1e-9 * lmax;
        Eigen::Index mult = 0;
        out.g = Matrix::Zero(d, d);
        for (Eigen::Index i = 0; i < d && lam[i] <= cut; ++i, ++mult)
            out.g += es.eigenvectors().col(i) * es.eigenvectors().col(i).transpose();
        out.g /= static_cast<double>(mult);
        out.trgm = lam[0];
        return true;
    }
    // Powers relative to lambda_min (q < 0) or lambda_max (q > 0) so large |q|
    // neither overflows nor underflows; the ratio is scale free.
    const double ref = c.q < 0.0 ? std::max(lam[0], thr) : lmax;
    Vector pw(d);
    double tr = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) {
        const double l = std::max(lam[i], thr);
        pw[i] = std::pow(l / ref, c.q - 1.0);
        tr += pw[i] * l;
    }
    out.g = es.eigenvectors() * pw.asDiagonal() * es.eigenvectors().transpose();
    out.trgm = tr;
    return true;
}

bool nonsingular(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    return lmax > 0.0 && es.eigenvalues()[0] > kSingularRel * lmax;
}

Matrix table_gram(const FactorTable& t, std::span<const double> w) {
    const auto d = static_cast<Eigen::Index>(t.dim());
    Matrix m = Matrix::Zero(d, d);
    for (std::size_t r = 0; r < t.rank(); ++r)
        kernels::weighted_gram(t.component(r), w, std::span<double>(m.data(), static_cast<std::size_t>(m.size())),
                               true);
    return m;
}

void table_ratios(const FactorTable& t, const Gradient& g, std::vector<double>& out) {
    out.assign(t.rows(), 0.0);
    for (std::size_t r = 0; r < t.rank(); ++r)
        kernels::quad_form_rows(t.component(r), std::span<const double>(g.g.data(), static_cast<std::size_t>(g.g.size())),
                                out, true);
    for (double& v : out) v /= g.trgm;
}

// Working set of candidates with dense information matrices.
struct Active {
    std::vector<Index> idx;
    std::vector<Matrix> info;
    std::vector<double> w;
    Matrix dual;  // E only: trace-one bound matrix from the barrier solve

    Matrix assemble(Eigen::Index d) const {
        Matrix m = Matrix::Zero(d, d);
        for (std::size_t i = 0; i < w.size(); ++i)
            if (w[i] > 0.0) m.noalias() += w[i] * info[i];
        return m;
    }
};

Active make_active(const FactorTable& t, const std::vector<Index>& idx, const std::vector<double>& w) {
    Active a;
    a.idx = idx;
    a.w = w;
    a.info.reserve(idx.size());
    for (Index i : idx) a.info.push_back(t.factor(i).dense());
    return a;
}

// Maximizes log Psi(M + alpha * delta) over alpha in [0, hi] by golden section.
double golden_search(const Matrix& m, const Matrix& delta, double hi, const Criterion& c) {
    const double g = 0.5 * (std::sqrt(5.0) - 1.0);
    auto f = [&](double a) { return log_psi(m + a * delta, c); };
    double lo = 0.0, up = hi;
    double x1 = up - g * (up - lo), x2 = lo + g * (up - lo);
    double f1 = f(x1), f2 = f(x2);
    for (int it = 0; it < 40; ++it) {
        if (f1 < f2) {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (up - lo);
            f2 = f(x2);
        } else {
            up = x2;
            x2 = x1;
            f2 = f1;
            x1 = up - g * (up - lo);
            f1 = f(x1);
        }
    }
    double best = 0.5 * (lo + up);
    double fbest = f(best);
    const double f0 = f(0.0);
    const double fh = f(hi);
    if (fh >= fbest) {
        best = hi;
        fbest = fh;
    }
    if (f0 >= fbest) best = 0.0;
    return best;
}

// First and second derivative of log Psi(M + alpha delta) in alpha for A and D.
// False when the matrix is not positive definite.
bool ad_derivs(const Matrix& m, const Matrix& delta, const Criterion& c, double& d1, double& d2) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) return false;
    const Eigen::Index d = m.rows();
    const Matrix inv = llt.solve(Matrix::Identity(d, d));
    const Matrix nd = inv * delta;
    if (c.is_d()) {
        d1 = nd.trace() / static_cast<double>(d);
        d2 = -(nd.cwiseProduct(nd.transpose())).sum() / static_cast<double>(d);
    } else {
        const Matrix ndn = nd * inv;
        const double t = inv.trace();
        const double t1 = -ndn.trace();
        const double t2 = 2.0 * (ndn.cwiseProduct(nd.transpose())).sum();
        d1 = -t1 / t;
        d2 = -t2 / t + d1 * d1;
    }
    return std::isfinite(d1) && std::isfinite(d2) && t_ok(m, llt);
}

// Maximizes log Psi(M + alpha * delta) over alpha in [0, hi]. The objective is
// concave, so A and D use a safeguarded Newton iteration on the derivative.
double line_search(const Matrix& m, const Matrix& delta, double hi, const Criterion& c) {
    if (!(hi > 0.0)) return 0.0;
    if (!is_a(c) && !c.is_d()) return golden_search(m, delta, hi, c);
    double d1 = 0.0, d2 = 0.0;
    if (!ad_derivs(m, delta, c, d1, d2)) return golden_search(m, delta, hi, c);
    if (d1 <= 0.0) return 0.0;
    double lo = 0.0, up = hi;
    double h1 = 0.0, h2 = 0.0;
    if (ad_derivs(m + hi * delta, delta, c, h1, h2) && h1 >= 0.0) return hi;
    double x = d2 < 0.0 ? std::min(-d1 / d2, 0.5 * hi) : 0.5 * hi;
    for (int it = 0; it < 60; ++it) {
        double g1 = 0.0, g2 = 0.0;
        if (!ad_derivs(m + x * delta, delta, c, g1, g2)) {
            up = x;
            x = 0.5 * (lo + up);
            continue;
        }
        if (g1 > 0.0)
            lo = x;
        else
            up = x;
        double nx = g2 < 0.0 ? x - g1 / g2 : 0.5 * (lo + up);
        if (!(nx > lo && nx < up)) nx = 0.5 * (lo + up);
        if (std::abs(nx - x) <= 1e-13 * hi || up - lo <= 1e-13 * hi) return nx;
        x = nx;
    }
    return x;
}

// Multiplicative updates plus Fedorov-Wynn and pairwise exchange steps on the
// active set. Returns the number of iterations used.
std::size_t inner_solve(Active& a, const Criterion& c, double tol, std::size_t budget, Eigen::Index d) {
    const double lambda = c.is_d() ? 1.0 : 0.5;
    const std::size_t n = a.w.size();
    std::vector<double> r(n);
    Gradient grad;
    auto ratios = [&](const Matrix& m) {
        if (!gradient(m, c, grad)) return false;
        for (std::size_t i = 0; i < n; ++i) r[i] = (grad.g.cwiseProduct(a.info[i])).sum() / grad.trgm;
        return true;
    };
    std::size_t it = 0;
    for (; it < budget; ++it) {
        Matrix m = a.assemble(d);
        if (!ratios(m)) break;
        if (*std::max_element(r.begin(), r.end()) <= 1.0 + tol) break;

        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            a.w[i] = r[i] > 0.0 ? a.w[i] * std::pow(r[i], lambda) : 0.0;
            total += a.w[i];
        }
        for (double& w : a.w) w /= total;

        m = a.assemble(d);
        if (!ratios(m)) break;
        std::size_t k = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());

        // Fedorov-Wynn step towards the most violating point.
        const double fw = line_search(m, a.info[k] - m, 1.0, c);
        if (fw > 0.0) {
            for (double& w : a.w) w *= 1.0 - fw;
            a.w[k] += fw;
            m = (1.0 - fw) * m + fw * a.info[k];
        }

        // Pairwise exchanges from the weakest support points into k.
        std::vector<std::size_t> supp;
        for (std::size_t j = 0; j < n; ++j)
            if (a.w[j] > 0.0 && j != k) supp.push_back(j);
        std::sort(supp.begin(), supp.end(), [&](std::size_t x, std::size_t y) { return r[x] < r[y]; });
        for (std::size_t j : supp) {
            if (r[j] >= r[k]) break;
            const Matrix delta = a.info[k] - a.info[j];
            const double step = line_search(m, delta, a.w[j], c);
            if (step <= 0.0) continue;
            if (step >= a.w[j] * (1.0 - 1e-12)) {
                a.w[k] += a.w[j];
                m += a.w[j] * delta;
                a.w[j] = 0.0;
            } else {
                a.w[j] -= step;
                a.w[k] += step;
                m += step * delta;
            }
        }

        // Exchanges between the strongest and weakest support points.
        for (std::size_t round = 0; round < 2 * n; ++round) {
            if (!ratios(m)) break;
            std::size_t hi = n, lo = n;
            for (std::size_t j = 0; j < n; ++j) {
                if (hi == n || r[j] > r[hi]) hi = j;
                if (a.w[j] > 0.0 && (lo == n || r[j] < r[lo])) lo = j;
            }
            if (lo == n || hi == lo || r[hi] - r[lo] <= 0.25 * tol) break;
            const Matrix delta = a.info[hi] - a.info[lo];
            const double step = line_search(m, delta, a.w[lo], c);
            if (step <= 0.0) break;
            const bool all = step >= a.w[lo] * (1.0 - 1e-12);
            const double moved = all ? a.w[lo] : step;
            a.w[lo] = all ? 0.0 : a.w[lo] - step;
            a.w[hi] += moved;
            m += moved * delta;
        }
    }
    return it;
}

// E-optimal weights on the active set: maximize t subject to
// sum w_i I_i - t I >= 0 on the simplex, by a log-barrier Newton method. On
// exit a.dual = S^-1 / tr S^-1 at the last central point, whose ratios over
// the active set are at most 1 + tol.
std::size_t e_inner_solve(Active& a, double tol, std::size_t budget, Eigen::Index d) {
    // The Newton systems reach condition numbers near 1e14 as the gap closes,
    // so the whole iteration runs in extended precision.
    using Real = long double;
    using LMatrix = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic>;
    using LVector = Eigen::Matrix<Real, Eigen::Dynamic, 1>;
    const std::size_t n = a.w.size();
    const auto ne = static_cast<Eigen::Index>(n);
    std::vector<LMatrix> info(n);
    for (std::size_t i = 0; i < n; ++i) info[i] = a.info[i].cast<Real>();
    auto assemble = [&](const LVector& v) {
        LMatrix m = LMatrix::Zero(d, d);
        for (std::size_t i = 0; i < n; ++i) m.noalias() += v[static_cast<Eigen::Index>(i)] * info[i];
        return m;
    };
    LVector w = LVector::Constant(ne, Real(1) / static_cast<Real>(n));
    LMatrix m = assemble(w);
    Eigen::SelfAdjointEigenSolver<Matrix> es0(m.cast<double>(), Eigen::EigenvaluesOnly);
    const double lmax = es0.eigenvalues().maxCoeff();
    Real t = es0.eigenvalues()[0] - 1e-3 * lmax;
    const double scale0 = std::max(es0.eigenvalues()[0], 1e-6 * lmax);
    const double barrier_count = static_cast<double>(n) + static_cast<double>(d);
    Real tau = barrier_count / scale0;
    const LMatrix eye = LMatrix::Identity(d, d);

    // F = -tau t - log det(M - t I) - sum log w_i, +inf outside the domain.
    const Real inf = std::numeric_limits<Real>::infinity();
    auto objective = [&](const LVector& v, Real tv) {
        if (v.minCoeff() <= 0) return inf;
        Eigen::LLT<LMatrix> llt(assemble(v) - tv * eye);
        if (llt.info() != Eigen::Success) return inf;
        const Real logdet = 2 * llt.matrixLLT().diagonal().array().log().sum();
        if (!std::isfinite(logdet)) return inf;
        return -tau * tv - logdet - v.array().log().sum();
    };

    std::size_t steps = 0;
    LMatrix sinv = eye;
    std::vector<LMatrix> b(n);
    while (steps < budget) {
        for (int newton = 0; newton < 100 && steps < budget; ++newton, ++steps) {
            Eigen::LLT<LMatrix> llt(m - t * eye);
            if (llt.info() != Eigen::Success) break;
            sinv = llt.solve(eye);
            // B_i = S^-1 I_i; tr(S^-1 I_i S^-1 I_j) = sum(B_i .* B_j').
            LVector g(ne + 1);
            LMatrix h(ne + 1, ne + 1);
            for (std::size_t i = 0; i < n; ++i) b[i] = sinv * info[i];
            for (Eigen::Index i = 0; i < ne; ++i) {
                const auto iu = static_cast<std::size_t>(i);
                g[i] = -b[iu].trace() - 1 / w[i];
                for (Eigen::Index j = 0; j <= i; ++j)
                    h(i, j) = h(j, i) = b[iu].cwiseProduct(b[static_cast<std::size_t>(j)].transpose()).sum();
                h(i, i) += 1 / (w[i] * w[i]);
                h(i, ne) = h(ne, i) = -(b[iu] * sinv).trace();
            }
            g[ne] = -tau + sinv.trace();
            h(ne, ne) = sinv.squaredNorm();
            // Newton step restricted to sum(dw) = 0, solved in the scaled
            // variables dw = w .* dz where the 1/w^2 terms become O(1).
            LVector sc(ne + 1);
            sc.head(ne) = w;
            sc[ne] = 1 / std::sqrt(h(ne, ne));
            const LMatrix hs = sc.asDiagonal() * h * sc.asDiagonal();
            const LVector gs = sc.cwiseProduct(g);
            LVector as = sc;
            as[ne] = 0;
            Eigen::LDLT<LMatrix> ldlt(hs);
            const LVector x = ldlt.solve(-gs);
            const LVector y = ldlt.solve(as);
            const LVector dx = sc.cwiseProduct(x - y * (as.dot(x) / as.dot(y)));
            const Real decrement = -g.dot(dx);
            if (!(decrement > 1e-14L)) break;
            const Real f0 = objective(w, t);
            Real step = 1;
            LVector wn;
            Real tn = t;
            for (int ls = 0; ls < 60; ++ls, step /= 2) {
                wn = w + step * dx.head(ne);
                tn = t + step * dx[ne];
                if (objective(wn, tn) <= f0 - step * decrement / 4) break;
            }
            if (!(objective(wn, tn) < f0)) break;
            w = wn;
            t = tn;
            m = assemble(w);
            if (decrement < 1e-12L) break;
        }
        if (barrier_count / tau <= 0.5 * tol * std::max<Real>(t, 1e-300L) || (t <= 0 && tau > 1e300L)) break;
        tau *= 8;
    }
    a.dual = (sinv / sinv.trace()).cast<double>();
    // Barrier weights never vanish; drop the negligible ones.
    const double cut = 1e-3 * tol / static_cast<double>(n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double v = static_cast<double>(w[static_cast<Eigen::Index>(i)]);
        a.w[i] = v >= cut ? v : 0.0;
        total += a.w[i];
    }
    for (double& v : a.w) v /= total;
    return steps;
}

// Gradient used to rank candidates outside the active set.
bool active_gradient(const Active& a, const Criterion& c, Eigen::Index d, Gradient& g) {
    const Matrix m = a.assemble(d);
    if (!c.is_e() || a.dual.size() == 0) return gradient(m, c, g);
    Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
    g.g = a.dual;
    g.trgm = es.eigenvalues()[0];
    return g.trgm > 0.0;
}

Matrix vech_columns(const std::vector<Matrix>& info, const std::vector<std::size_t>& keep, Eigen::Index d) {
    const Eigen::Index rows = d * (d + 1) / 2 + 1;
    Matrix a(rows, static_cast<Eigen::Index>(keep.size()));
    for (std::size_t c = 0; c < keep.size(); ++c) {
        Eigen::Index r = 0;
        for (Eigen::Index i = 0; i < d; ++i)
            for (Eigen::Index j = i; j < d; ++j) a(r++, static_cast<Eigen::Index>(c)) = info[keep[c]](i, j);
        a(r, static_cast<Eigen::Index>(c)) = 1.0;
    }
    return a;
}

// Caratheodory reduction: moves weight along null directions of
// [vech(I_i); 1], which leaves M unchanged, until at most bound points remain.
void trim_support(Active& a, Eigen::Index d) {
    const std::size_t bound = static_cast<std::size_t>(d * (d + 1) / 2 + 1);
    while (true) {
        std::vector<std::size_t> keep;
        for (std::size_t i = 0; i < a.w.size(); ++i)
            if (a.w[i] > 0.0) keep.push_back(i);
        if (keep.size() <= bound) return;
        const Matrix A = vech_columns(a.info, keep, d);
        Eigen::FullPivLU<Matrix> lu(A);
        const Matrix ker = lu.kernel();
        if (ker.cols() == 0 || ker.col(0).cwiseAbs().maxCoeff() == 0.0) return;
        Vector v = ker.col(0);
        if (v.maxCoeff() <= 0.0) v = -v;
        const double vmax = v.cwiseAbs().maxCoeff();
        double t = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (std::size_t c = 0; c < keep.size(); ++c) {
            const double vc = v[static_cast<Eigen::Index>(c)];
            if (vc > 1e-12 * vmax && a.w[keep[c]] / vc < t) {
                t = a.w[keep[c]] / vc;
                arg = c;
            }
        }
        double total = 0.0;
        for (std::size_t c = 0; c < keep.size(); ++c) {
            double& w = a.w[keep[c]];
            w -= t * v[static_cast<Eigen::Index>(c)];
            if (c == arg || w < 1e-15) w = 0.0;
            total += w;
        }
        for (double& w : a.w) w /= total;
    }
}

// Largest equivalence ratio over the candidates, +inf for a singular M. For
// E, any trace-one PSD matrix E bounds the optimum by max_x tr(E I(x)), so the
// ratio is that bound over lambda_min(M), minimized over the averaged
// eigenspace projection, the normalized gradients of Psi_q for large |q| and
// the barrier solver's dual when given.
double certificate(const Matrix& m, const FactorTable& table, const Criterion& c, const Matrix& extra = Matrix()) {
    std::vector<Criterion> duals{c};
    if (c.is_e())
        for (double q = -2.0; q >= -kMaxDualQ; q *= 2.0) duals.push_back(Criterion{q});
    double lmin = 0.0;
    if (c.is_e()) {
        Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
        lmin = es.eigenvalues()[0];
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> r;
    for (const Criterion& dual : duals) {
        Gradient g;
        if (!gradient(m, dual, g)) continue;
        if (c.is_e()) g.trgm = g.g.trace() * lmin;
        if (!(g.trgm > 0.0)) continue;
        table_ratios(table, g, r);
        best = std::min(best, *std::max_element(r.begin(), r.end()));
    }
    if (c.is_e() && extra.size() > 0 && lmin > 0.0) {
        Gradient g;
        g.g = extra / extra.trace();
        g.trgm = lmin;
        table_ratios(table, g, r);
        best = std::min(best, *std::max_element(r.begin(), r.end()));
    }
    return best;
}

Design finish(const Matrix& candidates, const FactorTable& table, const Active& a, const Criterion& c,
              const DesignOptions& options, std::size_t iterations) {
    Design out;
    std::vector<std::size_t> keep;
    double total = 0.0;
    for (std::size_t i = 0; i < a.w.size(); ++i)
        if (a.w[i] >= options.prune_below) {
            keep.push_back(i);
            total += a.w[i];
        }
    // Identical candidate rows are merged into one support point.
    std::vector<std::size_t> order(keep);
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a.idx[x] < a.idx[y]; });
    std::vector<Index> src;
    std::vector<double> w;
    for (std::size_t i : order) {
        const auto row = static_cast<Eigen::Index>(a.idx[i]);
        bool merged = false;
        for (std::size_t s = 0; s < src.size(); ++s)
            if (candidates.row(static_cast<Eigen::Index>(src[s])) == candidates.row(row)) {
                w[s] += a.w[i] / total;
                merged = true;
                break;
            }
        if (!merged) {
            src.push_back(a.idx[i]);
            w.push_back(a.w[i] / total);
        }
    }
    out.source = src;
    out.weights = Eigen::Map<const Vector>(w.data(), static_cast<Eigen::Index>(w.size()));
    out.support.resize(static_cast<Eigen::Index>(src.size()), candidates.cols());
    for (std::size_t s = 0; s < src.size(); ++s)
        out.support.row(static_cast<Eigen::Index>(s)) = candidates.row(static_cast<Eigen::Index>(src[s]));

    const auto d = static_cast<Eigen::Index>(table.dim());
    Matrix m = Matrix::Zero(d, d);
    for (std::size_t s = 0; s < src.size(); ++s) m += w[s] * table.factor(src[s]).dense();
    out.max_ratio = certificate(m, table, c, a.dual);
    out.certified = out.max_ratio <= 1.0 + options.tol;
    out.iterations = iterations;
    sort_by_weight(out);
    return out;
}

}  // namespace

Criterion parse_criterion(const std::string& text) {
    if (text == "A" || text == "a") return Criterion::A();
    if (text == "D" || text == "d") return Criterion::D();
    if (text == "E" || text == "e") return Criterion::E();
    double q = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), q);
    if (ec != std::errc() || ptr != text.data() + text.size() || !(q < 1.0))
        throw InvalidArgument("criterion: expected A, D, E or a number q < 1, got '" + text + "'");
    return Criterion{q};
}

std::string criterion_name(const Criterion& c) {
    if (is_a(c)) return "A";
    if (c.is_d()) return "D";
    if (c.is_e()) return "E";
    std::ostringstream s;
    s << "q=" << c.q;
    return s.str();
}

Matrix info_matrix(const Design& design, const ModelSpec& model, const Vector& beta) {
    const auto d = static_cast<Eigen::Index>(model.dim_beta());
    Matrix m = Matrix::Zero(d, d);
    for (std::size_t i = 0; i < design.size(); ++i)
        m += design.weights[static_cast<Eigen::Index>(i)] *
             fisher_info(model, beta, design.support.row(static_cast<Eigen::Index>(i)).transpose()).dense();
    return m;
}

double criterion_value(const Matrix& m, const Criterion& crit) {
    check_criterion(crit);
    if (m.rows() != m.cols() || m.rows() == 0) throw InvalidArgument("criterion_value: matrix must be square");
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    const Vector& lam = es.eigenvalues();
    const double lmax = lam.maxCoeff();
    if (!(lmax > 0.0)) return 0.0;
    const bool singular = lam[0] <= kSingularRel * lmax;
    if (crit.q <= 0.0 && singular) return 0.0;
    if (crit.is_e()) return lam[0];
    if (crit.is_d()) return std::exp(lam.array().log().mean());
    const double ref = crit.q < 0.0 ? lam[0] : lmax;
    double tr = 0.0;
    for (Eigen::Index i = 0; i < lam.size(); ++i) tr += std::pow(std::max(lam[i], 0.0) / ref, crit.q);
    return ref * std::pow(tr, 1.0 / crit.q);
}

std::vector<double> equivalence_ratios(const Matrix& m, const FactorTable& candidates, const Criterion& crit) {
    check_criterion(crit);
    Gradient g;
    if (!gradient(m, crit, g)) throw InvalidArgument("equivalence_ratios: singular information matrix");
    std::vector<double> r;
    table_ratios(candidates, g, r);
    return r;
}

Design optimize_design(const Matrix& candidates, const ModelSpec& model, const Vector& beta,
                       const Criterion& crit, const DesignOptions& options) {
    return optimize_design(candidates, FactorTable(model, beta, candidates), crit, options);
}

namespace {

Design solve(const Matrix& candidates, const FactorTable& table, const Criterion& crit,
             const DesignOptions& options) {
    const std::size_t n = table.rows();
    const auto d = static_cast<Eigen::Index>(table.dim());

    const std::vector<double> uniform(n, 1.0 / static_cast<double>(n));
    const Matrix m0 = table_gram(table, uniform);
    if (!nonsingular(m0))
        throw InfeasibleDesign("optimize_design: candidates do not support a nonsingular information matrix");

    const std::size_t bound = static_cast<std::size_t>(d * (d + 1) / 2 + 1);
    const std::size_t batch = std::max<std::size_t>(2 * bound, 64);
    const double inner_tol = 0.5 * options.tol;

    std::vector<Index> all(n);
    std::iota(all.begin(), all.end(), Index{0});
    Active active;
    std::vector<double> r;
    if (n <= 4 * batch) {
        active = make_active(table, all, uniform);
    } else {
        // Start from the candidates the uniform design rates highest.
        Gradient g;
        if (!gradient(m0, crit, g)) throw InfeasibleDesign("optimize_design: singular starting design");
        table_ratios(table, g, r);
        std::vector<Index> order(all);
        for (std::size_t take = batch;; take *= 2) {
            take = std::min(take, n);
            std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                              [&](Index x, Index y) { return r[x] > r[y] || (r[x] == r[y] && x < y); });
            std::vector<Index> idx(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take));
            active = make_active(table, idx, std::vector<double>(take, 1.0 / static_cast<double>(take)));
            if (nonsingular(active.assemble(d)) || take == n) break;
        }
    }

    std::size_t iterations = 0;
    while (true) {
        const std::size_t budget = options.max_iter - iterations;
        iterations += crit.is_e() ? e_inner_solve(active, inner_tol, budget, d)
                                  : inner_solve(active, crit, inner_tol, budget, d);
        if (active.idx.size() == n || iterations >= options.max_iter) break;
        Gradient g;
        if (!active_gradient(active, crit, d, g)) break;
        table_ratios(table, g, r);
        std::vector<bool> in(n, false);
        for (Index i : active.idx) in[i] = true;
        std::vector<Index> viol;
        for (Index i = 0; i < n; ++i)
            if (!in[i] && r[i] > 1.0 + options.tol) viol.push_back(i);
        if (viol.empty()) break;
        const std::size_t take = std::min(batch, viol.size());
        std::partial_sort(viol.begin(), viol.begin() + static_cast<std::ptrdiff_t>(take), viol.end(),
                          [&](Index x, Index y) { return r[x] > r[y] || (r[x] == r[y] && x < y); });
        // Barrier weights off the support are small but positive; carrying
        // them forward would only grow the next barrier solve.
        const double keep = crit.is_e() ? 1e-6 : 0.0;
        Active next;
        for (std::size_t i = 0; i < active.idx.size(); ++i)
            if (active.w[i] > keep) {
                next.idx.push_back(active.idx[i]);
                next.info.push_back(std::move(active.info[i]));
                next.w.push_back(active.w[i]);
            }
        for (std::size_t i = 0; i < take; ++i) {
            next.idx.push_back(viol[i]);
            next.info.push_back(table.factor(viol[i]).dense());
            next.w.push_back(0.0);
        }
        active = std::move(next);
    }

    if (options.trim) trim_support(active, d);
    return finish(candidates, table, active, crit, options, iterations);
}

}  // namespace

Design optimize_design(const Matrix& candidates, const FactorTable& table, const Criterion& crit,
                       const DesignOptions& options) {
    check_criterion(crit);
    if (!(options.tol > 0.0 && options.tol <= 0.1)) throw InvalidArgument("optimize_design: tol must be in (0, 0.1]");
    if (table.rows() == 0) throw InfeasibleDesign("optimize_design: empty candidate set");
    if (static_cast<std::size_t>(candidates.rows()) != table.rows())
        throw InvalidArgument("optimize_design: candidate/table size mismatch");
    return solve(candidates, table, crit, options);
}

double efficiency(const Design& design, const Design& reference, const ModelSpec& model, const Vector& beta,
                  const Criterion& crit) {
    const double ref = criterion_value(info_matrix(reference, model, beta), crit);
    if (!(ref > 0.0)) throw InvalidReference("efficiency: reference design has criterion value 0");
    const double v = criterion_value(info_matrix(design, model, beta), crit);
    return std::clamp(v / ref, 0.0, 1.0);
}

void sort_by_weight(Design& design) {
    std::vector<std::size_t> order(design.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return design.weights[static_cast<Eigen::Index>(a)] > design.weights[static_cast<Eigen::Index>(b)];
    });
    Design out = design;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto s = static_cast<Eigen::Index>(order[i]);
        out.support.row(static_cast<Eigen::Index>(i)) = design.support.row(s);
        out.weights[static_cast<Eigen::Index>(i)] = design.weights[s];
        if (!design.source.empty()) out.source[i] = design.source[order[i]];
    }
    design = std::move(out);
}

Design reduce_support(const Design& design, double zeta, const ModelSpec& model, const Vector& beta,
                      const Criterion& crit) {
    if (!(zeta > 0.0 && zeta <= 1.0)) throw InvalidArgument("reduce_support: zeta must be in (0, 1]");
    Design cur = design;
    sort_by_weight(cur);
    const double target = zeta * criterion_value(info_matrix(cur, model, beta), crit);
    const std::size_t floor = model.dim_beta();
    while (cur.size() > floor) {
        Design next = cur;
        const auto b = static_cast<Eigen::Index>(cur.size()) - 1;
        next.support.conservativeResize(b, Eigen::NoChange);
        next.weights.conservativeResize(b);
        if (!next.source.empty()) next.source.pop_back();
        const double total = next.weights.sum();
        if (!(total > 0.0)) break;
        next.weights /= total;
        if (!(criterion_value(info_matrix(next, model, beta), crit) > target)) break;
        cur = std::move(next);
    }
    return cur;
}

}  // namespace odbss
