#include "railkf/csv.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "railkf/errors.hpp"

namespace railkf::csv {

const Eigen::VectorXd& Table::column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return columns[i];
    throw ConfigError("csv: missing column '" + name + "'");
}

std::string quote(const std::string& field) {
    if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

std::string format_number(double v) {
    char buf[32];
    // %g honours the C locale only; nothing in this library calls setlocale.
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

void write(const std::string& path, const Table& table) {
    if (table.header.size() != table.columns.size())
        throw ConfigError("csv: header/column count mismatch for " + path);
    const Eigen::Index n = table.rows();
    for (const auto& c : table.columns)
        if (c.size() != n) throw ConfigError("csv: ragged columns for " + path);

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    for (std::size_t j = 0; j < table.header.size(); ++j)
        out << (j ? "," : "") << quote(table.header[j]);
    out << "\r\n";
    for (Eigen::Index i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < table.columns.size(); ++j)
            out << (j ? "," : "") << format_number(table.columns[j](i));
        out << "\r\n";
    }
    if (!out) throw IoError("write failed: " + path);
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(cur);
    for (auto& f : fields) {
        auto b = f.find_first_not_of(' ');
        auto e = f.find_last_not_of(' ');
        f = b == std::string::npos ? std::string() : f.substr(b, e - b + 1);
    }
    return fields;
}

}  // namespace

Table read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty csv: " + path);
    Table t;
    t.header = split_line(line);
    std::vector<std::vector<double>> cols(t.header.size());
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto f = split_line(line);
        if (f.size() != t.header.size())
            throw IoError(path + ":" + std::to_string(lineno) + ": wrong field count");
        for (std::size_t j = 0; j < f.size(); ++j) {
            double v = 0.0;
            auto [p, ec] = std::from_chars(f[j].data(), f[j].data() + f[j].size(), v);
            if (ec != std::errc() || p != f[j].data() + f[j].size())
                throw IoError(path + ":" + std::to_string(lineno) + ": not a number '" + f[j] + "'");
            cols[j].push_back(v);
        }
    }
    for (auto& c : cols) t.columns.push_back(Eigen::Map<Eigen::VectorXd>(c.data(), c.size()));
    return t;
}

}  // namespace railkf::csv
