#include "odbss/dataset.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "odbss/errors.hpp"

namespace odbss {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, ',')) {
        const auto first = cell.find_first_not_of(" \t\r\"");
        const auto last = cell.find_last_not_of(" \t\r\"");
        cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
    }
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

double parse_double(const std::string& s, std::size_t line, std::size_t col) {
    double v = 0.0;
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (!s.empty() && *begin == '+') ++begin;
    auto [ptr, ec] = std::from_chars(begin, end, v);
    if (ec != std::errc() || ptr != end || s.empty()) {
        std::ostringstream msg;
        msg << "csv: non-numeric value '" << s << "' at line " << line << ", column " << col + 1;
        throw InvalidArgument(msg.str());
    }
    return v;
}

}  // namespace

Dataset::Dataset(Matrix covariates, Vector responses)
    : x_(std::move(covariates)), y_(std::move(responses)) {
    if (y_.size() != 0 && y_.size() != x_.rows())
        throw InvalidArgument("dataset: response length does not match covariate rows");
}

Dataset Dataset::subset(std::span<const Index> indices) const {
    Matrix xs(static_cast<Eigen::Index>(indices.size()), x_.cols());
    Vector ys(has_responses() ? static_cast<Eigen::Index>(indices.size()) : 0);
    for (std::size_t r = 0; r < indices.size(); ++r) {
        if (indices[r] >= rows()) throw InvalidArgument("dataset: subset index out of range");
        const auto i = static_cast<Eigen::Index>(indices[r]);
        xs.row(static_cast<Eigen::Index>(r)) = x_.row(i);
        if (has_responses()) ys[static_cast<Eigen::Index>(r)] = y_[i];
    }
    return Dataset(std::move(xs), std::move(ys));
}

CsvTable read_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("csv: cannot open " + path.string());
    std::string line;
    CsvTable table;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        table.header = split_line(line);
        break;
    }
    if (table.header.empty()) throw InvalidArgument("csv: missing header in " + path.string());
    const std::size_t cols = table.header.size();
    std::vector<double> flat;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto cells = split_line(line);
        if (cells.size() != cols) {
            std::ostringstream msg;
            msg << "csv: line " << line_no << " has " << cells.size() << " cells, expected " << cols;
            throw InvalidArgument(msg.str());
        }
        for (std::size_t c = 0; c < cols; ++c) flat.push_back(parse_double(cells[c], line_no, c));
        ++rows;
    }
    table.values.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < cols; ++c)
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = flat[r * cols + c];
    return table;
}

Dataset load_dataset_csv(const std::filesystem::path& path, const std::string& response_column) {
    CsvTable t = read_csv(path);
    Eigen::Index resp = -1;
    for (std::size_t c = 0; c < t.header.size(); ++c)
        if (t.header[c] == response_column) resp = static_cast<Eigen::Index>(c);
    if (resp < 0) throw InvalidArgument("csv: response column '" + response_column + "' not found");
    const Eigen::Index p = t.values.cols() - 1;
    Matrix x(t.values.rows(), p);
    Eigen::Index out = 0;
    for (Eigen::Index c = 0; c < t.values.cols(); ++c) {
        if (c == resp) continue;
        x.col(out++) = t.values.col(c);
    }
    return Dataset(std::move(x), t.values.col(resp));
}

void write_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
               const Matrix& values) {
    std::ofstream out(path);
    if (!out) throw InvalidArgument("csv: cannot write " + path.string());
    for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
    out << '\n' << std::setprecision(17);
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) out << (c ? "," : "") << values(r, c);
        out << '\n';
    }
}

}  // namespace odbss
