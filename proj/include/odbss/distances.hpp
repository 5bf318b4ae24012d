#pragma once

#include <string>

#include "odbss/models.hpp"

namespace odbss {

enum class Metric { Frobenius, SquareRoot, Procrustes };

// "frobenius", "sqrt" or "procrustes".
Metric parse_metric(const std::string& name);
std::string metric_name(Metric m);

// Distance between A = LaLa' and B = LbLb' computed from the factors only:
//   Frobenius^2  = |Ga|^2 + |Gb|^2 - 2 |C|^2
//   SquareRoot^2 = tr Ga + tr Gb - 2 tr(Ga^-1/2 C Gb^-1/2 C')
//   Procrustes^2 = tr Ga + tr Gb - 2 sum sigma(C)
// with Ga = La'La, Gb = Lb'Lb, C = La'Lb. Pseudo-inverse roots are used for
// rank-deficient factors.
double distance(Metric metric, const InfoFactor& a, const InfoFactor& b);

// Same distances from dense symmetric PSD matrices (eigen/SVD); reference path.
double distance_dense(Metric metric, const Matrix& a, const Matrix& b);

// distance(metric, a, table.factor(j)) for every row j, in one pass.
Vector distance_row(Metric metric, const InfoFactor& a, const FactorTable& table);
Vector distance_row(Metric metric, const InfoFactor& a, const Dataset& data, const ModelSpec& model,
                    const Vector& beta);

}  // namespace odbss
