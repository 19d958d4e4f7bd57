#include "iestrack/io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "iestrack/errors.hpp"

namespace iestrack {

void write_csv(const std::string& path, const CsvTable& table) {
    if (table.data.cols() != static_cast<Eigen::Index>(table.header.size()))
        throw InputError("csv: header has " + std::to_string(table.header.size()) + " names for " +
                         std::to_string(table.data.cols()) + " columns");
    std::FILE* f = std::fopen(path.c_str(), "w");
    if (!f) throw InputError("cannot write " + path);
    for (std::size_t c = 0; c < table.header.size(); ++c)
        std::fprintf(f, "%s%s", c ? "," : "", table.header[c].c_str());
    std::fputc('\n', f);
    for (Eigen::Index r = 0; r < table.data.rows(); ++r) {
        for (Eigen::Index c = 0; c < table.data.cols(); ++c) std::fprintf(f, "%s%.17g", c ? "," : "", table.data(r, c));
        std::fputc('\n', f);
    }
    if (std::fclose(f) != 0) throw InputError("error writing " + path);
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    CsvTable t;
    std::string line;
    if (!std::getline(in, line)) throw InputError(path + ": empty file");
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) t.header.push_back(cell);
    }
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw InputError(path + ":" + std::to_string(lineno) + ": not a number: '" + cell + "'");
            }
        }
        if (row.size() != t.header.size())
            throw InputError(path + ":" + std::to_string(lineno) + ": expected " + std::to_string(t.header.size()) +
                             " values");
        rows.push_back(std::move(row));
    }
    t.data.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(t.header.size()));
    for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < rows[r].size(); ++c)
            t.data(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
    return t;
}

CsvTable time_indexed(const Eigen::MatrixXd& data, const std::vector<std::string>& columns, int first_step, double dt) {
    CsvTable t;
    t.header = {"step", "time_s"};
    t.header.insert(t.header.end(), columns.begin(), columns.end());
    t.data.resize(data.rows(), data.cols() + 2);
    for (Eigen::Index r = 0; r < data.rows(); ++r) {
        double step = static_cast<double>(first_step + r);
        t.data(r, 0) = step;
        t.data(r, 1) = step * dt;
    }
    t.data.rightCols(data.cols()) = data;
    return t;
}

void write_json(const std::string& path, const nlohmann::json& doc) {
    std::ofstream out(path);
    if (!out) throw InputError("cannot write " + path);
    out << doc.dump(1) << '\n';
}

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw InputError(path + ": " + e.what());
    }
}

}  // namespace iestrack
