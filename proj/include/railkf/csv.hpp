#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

namespace railkf::csv {

/// Column-oriented numeric table.
struct Table {
    std::vector<std::string> header;
    std::vector<Eigen::VectorXd> columns;

    Eigen::Index rows() const { return columns.empty() ? 0 : columns.front().size(); }
    const Eigen::VectorXd& column(const std::string& name) const;
};

/// RFC-4180 field quoting (only when needed).
std::string quote(const std::string& field);

/// Numbers are written with %.10g in the C locale, so reruns are byte-identical.
std::string format_number(double v);

void write(const std::string& path, const Table& table);
Table read(const std::string& path);

}  // namespace railkf::csv
