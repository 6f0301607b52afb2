#include "unicon/report.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "unicon/errors.hpp"

namespace unicon::report {

namespace {
std::string fmt(double v, int prec = 4) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", prec, v);
    return buf;
}
}  // namespace

std::string write_table(const Table& table, const std::string& out_dir,
                        const std::string& stem) {
    std::filesystem::create_directories(out_dir);
    const std::string csv_path = (std::filesystem::path(out_dir) / (stem + ".csv")).string();
    const std::string txt_path = (std::filesystem::path(out_dir) / (stem + ".txt")).string();

    std::ofstream csv(csv_path);
    if (!csv) throw Error(ErrorCode::IoError, "cannot open " + csv_path);
    csv << "model,params_m";
    for (const auto& c : table.columns) csv << "," << c;
    csv << ",avg\n";
    for (const auto& row : table.rows) {
        csv << row.model << "," << fmt(row.params_m, 4);
        for (double s : row.scores) csv << "," << fmt(s);
        csv << "," << fmt(row.avg) << "\n";
    }
    csv.close();

    std::size_t name_w = 5;
    for (const auto& row : table.rows) name_w = std::max(name_w, row.model.size());
    auto pad = [](const std::string& s, std::size_t w) {
        return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
    };
    std::ofstream txt(txt_path);
    txt << pad("model", name_w) << "  params(M)";
    for (const auto& c : table.columns) txt << "  " << pad(c, 6);
    txt << "  Avg\n";
    for (const auto& row : table.rows) {
        txt << pad(row.model, name_w) << "  " << pad(fmt(row.params_m, 2), 9);
        for (std::size_t i = 0; i < row.scores.size(); ++i)
            txt << "  " << pad(fmt(row.scores[i]), std::max<std::size_t>(6, table.columns[i].size()));
        txt << "  " << fmt(row.avg) << "\n";
    }
    return csv_path;
}

}  // namespace unicon::report
