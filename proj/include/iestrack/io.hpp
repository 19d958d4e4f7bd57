#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace iestrack {

struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd data;
};

/// Writes a numeric table with a header row; values use %.17g.
void write_csv(const std::string& path, const CsvTable& table);
CsvTable read_csv(const std::string& path);

/// Prepends step and time columns: row r gets step first_step + r.
CsvTable time_indexed(const Eigen::MatrixXd& data, const std::vector<std::string>& columns, int first_step, double dt);

void write_json(const std::string& path, const nlohmann::json& doc);
nlohmann::json read_json(const std::string& path);

}  // namespace iestrack
