#include "uvu/csv.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "uvu/error.hpp"

namespace uvu {

void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header) {
    CsvWriter w(path, header);
    std::vector<std::string> fields(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) fields[static_cast<std::size_t>(j)] = CsvWriter::num(m(i, j));
        w.row(fields);
    }
}

Eigen::MatrixXd read_matrix_csv(const std::string& path, bool has_header) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    if (has_header) std::getline(in, line);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> r;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) r.push_back(std::stod(cell));
        if (!rows.empty() && r.size() != rows.front().size()) throw ValidationError(path + ": ragged CSV");
        rows.push_back(std::move(r));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), rows.empty() ? 0 : static_cast<Eigen::Index>(rows[0].size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

CsvWriter::CsvWriter(const std::string& path, const std::vector<std::string>& header) {
    f_ = std::fopen(path.c_str(), "w");
    if (f_ == nullptr) throw ValidationError("cannot write " + path);
    if (!header.empty()) row(header);
}

CsvWriter::~CsvWriter() {
    if (f_ != nullptr) std::fclose(f_);
}

void CsvWriter::row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i > 0) std::fputc(',', f_);
        std::fputs(fields[i].c_str(), f_);
    }
    std::fputc('\n', f_);
}

std::string CsvWriter::num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace uvu
