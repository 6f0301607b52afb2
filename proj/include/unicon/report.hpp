#pragma once

#include <string>
#include <vector>

namespace unicon::report {

/// One result row: a model label, parameter count, and one Dice value per
/// column. Column names are shared across rows.
struct Table {
    std::vector<std::string> columns;  // score columns, e.g. E13.5..E16.5
    struct Row {
        std::string model;
        double params_m = 0.0;  // millions
        std::vector<double> scores;
        double avg = 0.0;
    };
    std::vector<Row> rows;
};

static const std::vector<std::string> kAgeColumns = {"E13.5", "E14.5", "E15.5", "E16.5"};

/// Writes `<stem>.csv` and an aligned `<stem>.txt` table; returns the CSV
/// path. Layout: model, params(M), <columns...>, Avg.
std::string write_table(const Table& table, const std::string& out_dir,
                        const std::string& stem);

}  // namespace unicon::report
