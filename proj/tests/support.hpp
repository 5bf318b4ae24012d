#pragma once

#include <random>

#include "odbss/dataset.hpp"
#include "odbss/rng.hpp"

namespace testing {

using odbss::Matrix;
using odbss::Vector;

inline Matrix gaussian(std::size_t rows, std::size_t cols, odbss::Rng& rng, double scale = 1.0) {
    std::normal_distribution<double> nd(0.0, scale);
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = nd(rng);
    return m;
}

inline Vector gaussian_vec(std::size_t n, odbss::Rng& rng, double scale = 1.0) {
    return gaussian(n, 1, rng, scale).col(0);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)}); }

}  // namespace testing
