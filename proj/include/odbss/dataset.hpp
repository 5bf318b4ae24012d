#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "odbss/kernels.hpp"

namespace odbss {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = std::size_t;

// Column-major view of an Eigen matrix for the row kernels.
inline kernels::ColumnBlock column_block(const Matrix& m) {
    return kernels::ColumnBlock{m.data(), static_cast<std::size_t>(m.rows()),
                                static_cast<std::size_t>(m.cols()),
                                static_cast<std::size_t>(m.rows())};
}

// n x p covariates plus an optional response vector. Immutable once built.
class Dataset {
public:
    Dataset() = default;
    explicit Dataset(Matrix covariates, Vector responses = Vector());

    std::size_t rows() const { return static_cast<std::size_t>(x_.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(x_.cols()); }
    bool has_responses() const { return y_.size() > 0; }

    const Matrix& covariates() const { return x_; }
    const Vector& responses() const { return y_; }
    Vector row(Index i) const { return x_.row(static_cast<Eigen::Index>(i)).transpose(); }
    double response(Index i) const { return y_[static_cast<Eigen::Index>(i)]; }

    Dataset subset(std::span<const Index> indices) const;
    kernels::ColumnBlock block() const { return column_block(x_); }

private:
    Matrix x_;
    Vector y_;
};

struct CsvTable {
    std::vector<std::string> header;
    Matrix values;  // rows x header.size()
};

// Reads a numeric CSV with one header row. Blank lines are skipped; any
// non-numeric cell is an InvalidArgument naming its line and column.
CsvTable read_csv(const std::filesystem::path& path);

// Response column chosen by name; all remaining columns become covariates in order.
Dataset load_dataset_csv(const std::filesystem::path& path, const std::string& response_column);

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values);

}  // namespace odbss
