#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace uvu {

/// Plain numeric CSV, %.17g. An optional header row is written first.
void write_matrix_csv(const std::string& path, const Eigen::MatrixXd& m, const std::vector<std::string>& header = {});
Eigen::MatrixXd read_matrix_csv(const std::string& path, bool has_header = false);

/// Appends rows to a CSV file, writing the header when the file is created.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header);
    ~CsvWriter();
    CsvWriter(const CsvWriter&) = delete;
    CsvWriter& operator=(const CsvWriter&) = delete;

    void row(const std::vector<std::string>& fields);
    static std::string num(double v);

private:
    std::FILE* f_ = nullptr;
};

}  // namespace uvu
