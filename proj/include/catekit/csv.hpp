// Numeric CSV reading/writing and the generic dataset schema.
//
// Dataset CSV schema: one header row naming the columns, then numeric cells.
// Feature columns are every column not claimed by the mapping; treatment
// must be exactly 0 or 1. Doubles are written with %.17g so a write/read
// round trip reproduces values bit-for-bit.
#pragma once

#include "catekit/dataset.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace catekit {

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (header[i] == name) return i;
        }
        throw std::invalid_argument("csv: missing column '" + name + "'");
    }
    bool has_column(const std::string& name) const {
        for (const auto& h : header) {
            if (h == name) return true;
        }
        return false;
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open csv file: " + path);
    CsvTable table;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.push_back("");
        if (first) {
            table.header = cells;
            first = false;
            continue;
        }
        if (cells.size() != table.header.size()) {
            throw std::invalid_argument("csv: row " + std::to_string(table.rows.size() + 1) +
                                        " has " + std::to_string(cells.size()) + " cells, header has " +
                                        std::to_string(table.header.size()));
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& c : cells) {
            try {
                std::size_t pos = 0;
                row.push_back(std::stod(c, &pos));
                if (pos != c.size()) throw std::invalid_argument(c);
            } catch (const std::exception&) {
                throw std::invalid_argument("csv: non-numeric cell '" + c + "' in " + path);
            }
        }
        table.rows.push_back(std::move(row));
    }
    if (first) throw std::invalid_argument("csv: empty file " + path);
    return table;
}

inline std::string format_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

struct CsvColumnMap {
    std::string treatment = "t";
    std::string outcome = "y";
    std::string mu0 = "mu0";      // optional
    std::string mu1 = "mu1";      // optional
    std::string strata = "strata";  // optional
    std::vector<std::string> ignore;  // columns to skip entirely
    OutcomeKind outcome_kind = OutcomeKind::continuous;
};

inline CateDataset dataset_from_table(const CsvTable& table, const CsvColumnMap& map) {
    if (table.rows.empty()) throw std::invalid_argument("csv dataset has a header but no rows");
    const std::size_t ti = table.column(map.treatment);
    const std::size_t yi = table.column(map.outcome);
    std::vector<std::size_t> special{ti, yi};
    std::size_t mu0i = SIZE_MAX, mu1i = SIZE_MAX, si = SIZE_MAX;
    if (table.has_column(map.mu0) && table.has_column(map.mu1)) {
        mu0i = table.column(map.mu0);
        mu1i = table.column(map.mu1);
        special.push_back(mu0i);
        special.push_back(mu1i);
    }
    if (!map.strata.empty() && table.has_column(map.strata)) {
        si = table.column(map.strata);
        special.push_back(si);
    }
    std::vector<std::size_t> x_cols;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        bool skip = std::find(special.begin(), special.end(), c) != special.end();
        for (const auto& ig : map.ignore) skip = skip || table.header[c] == ig;
        if (!skip) x_cols.push_back(c);
    }
    if (x_cols.empty()) throw std::invalid_argument("csv dataset has no covariate columns");

    CateDataset ds;
    ds.outcome = map.outcome_kind;
    for (std::size_t c : x_cols) ds.feature_names.push_back(table.header[c]);
    ds.X = Tensor(Shape{table.rows.size(), x_cols.size()});
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        for (std::size_t k = 0; k < x_cols.size(); ++k) ds.X.at(r, k) = row[x_cols[k]];
        const double tv = row[ti];
        if (tv != 0.0 && tv != 1.0) {
            throw std::invalid_argument("csv: treatment value " + format_double(tv) + " at row " +
                                        std::to_string(r) + " is not binary");
        }
        ds.t.push_back(static_cast<int>(tv));
        ds.y.push_back(row[yi]);
        if (mu0i != SIZE_MAX) {
            ds.mu0_true.push_back(row[mu0i]);
            ds.mu1_true.push_back(row[mu1i]);
            ds.cate_true.push_back(row[mu1i] - row[mu0i]);
        }
        if (si != SIZE_MAX) ds.strata.push_back(static_cast<int>(row[si]));
    }
    ds.validate();
    return ds;
}

inline CateDataset load_csv_dataset(const std::string& path, const CsvColumnMap& map = {}) {
    return dataset_from_table(read_csv(path), map);
}

inline void write_csv_dataset(const std::string& path, const CateDataset& ds) {
    ds.validate();
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write csv file: " + path);
    for (std::size_t j = 0; j < ds.feature_count(); ++j) {
        out << (j < ds.feature_names.size() ? ds.feature_names[j] : "x" + std::to_string(j + 1))
            << ",";
    }
    out << "t,y";
    if (ds.has_ground_truth()) out << ",mu0,mu1";
    if (!ds.strata.empty()) out << ",strata";
    out << "\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        for (std::size_t j = 0; j < ds.feature_count(); ++j) out << format_double(ds.X.at(i, j)) << ",";
        out << ds.t[i] << "," << format_double(ds.y[i]);
        if (ds.has_ground_truth()) {
            out << "," << format_double(ds.mu0_true[i]) << "," << format_double(ds.mu1_true[i]);
        }
        if (!ds.strata.empty()) out << "," << ds.strata[i];
        out << "\n";
    }
}

}  // namespace catekit
