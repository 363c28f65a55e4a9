#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pucox/csv.hpp"
#include "pucox/dates.hpp"

namespace pucox {

using json = nlohmann::json;

enum class ColumnKind {
    medication,
    lab,
    diagnosis,
    vaccine,
    symptom,
    demographic,
    location,
    derived_concept,
};

enum class Dtype { binary, continuous };

inline const char* to_string(ColumnKind k) {
    switch (k) {
        case ColumnKind::medication: return "medication";
        case ColumnKind::lab: return "lab";
        case ColumnKind::diagnosis: return "diagnosis";
        case ColumnKind::vaccine: return "vaccine";
        case ColumnKind::symptom: return "symptom";
        case ColumnKind::demographic: return "demographic";
        case ColumnKind::location: return "location";
        case ColumnKind::derived_concept: return "derived-concept";
    }
    return "?";
}

inline std::optional<ColumnKind> parse_kind(const std::string& s) {
    static const std::map<std::string, ColumnKind> names = {
        {"medication", ColumnKind::medication},   {"lab", ColumnKind::lab},
        {"diagnosis", ColumnKind::diagnosis},     {"vaccine", ColumnKind::vaccine},
        {"symptom", ColumnKind::symptom},         {"demographic", ColumnKind::demographic},
        {"location", ColumnKind::location},       {"derived-concept", ColumnKind::derived_concept},
    };
    auto it = names.find(s);
    if (it == names.end()) return std::nullopt;
    return it->second;
}

struct ColumnMeta {
    std::string name;
    ColumnKind kind = ColumnKind::lab;
    Dtype dtype = Dtype::continuous;
    std::string missing_indicator_for;  // empty unless this is a `<col>__missing` companion
};

// String-valued column awaiting indicator expansion; empty cell = missing.
struct CategoricalColumn {
    std::string name;
    ColumnKind kind = ColumnKind::location;
    std::vector<std::string> values;
};

inline double nan_value() { return std::numeric_limits<double>::quiet_NaN(); }

// Immutable after construction by convention: every transformation returns a
// new Cohort.
struct Cohort {
    std::vector<std::string> patient_ids;
    std::vector<Date> t0;
    std::vector<double> time;          // follow-up days
    std::vector<uint8_t> event;        // severe outcome indicator
    Eigen::MatrixXd features;          // rows = patients; NaN = missing
    std::vector<ColumnMeta> columns;
    std::vector<CategoricalColumn> categoricals;  // only present before expansion

    size_t n_patients() const { return patient_ids.size(); }
    size_t n_columns() const { return columns.size(); }

    int column_index(const std::string& name) const {
        for (size_t j = 0; j < columns.size(); ++j)
            if (columns[j].name == name) return int(j);
        return -1;
    }

    bool has_column(const std::string& name) const { return column_index(name) >= 0; }

    void validate() const {
        const auto n = patient_ids.size();
        if (t0.size() != n || time.size() != n || event.size() != n)
            throw std::invalid_argument("cohort: per-patient vectors disagree on length");
        if (size_t(features.rows()) != n || size_t(features.cols()) != columns.size())
            throw std::invalid_argument("cohort: feature matrix shape does not match metadata");
        std::set<std::string> seen;
        for (const auto& c : columns)
            if (!seen.insert(c.name).second)
                throw std::invalid_argument("cohort: duplicate column name '" + c.name + "'");
        for (const auto& c : categoricals)
            if (!seen.insert(c.name).second)
                throw std::invalid_argument("cohort: duplicate column name '" + c.name + "'");
        for (size_t i = 0; i < n; ++i) {
            if (!(time[i] >= 0.0))
                throw std::invalid_argument("cohort: negative follow-up time for patient " +
                                            patient_ids[i]);
            if (event[i] != 0 && event[i] != 1)
                throw std::invalid_argument("cohort: event must be 0/1");
        }
    }

    // rows subset, metadata shared
    Cohort subset(const std::vector<size_t>& rows) const {
        Cohort out;
        out.columns = columns;
        out.patient_ids.reserve(rows.size());
        out.features.resize(Eigen::Index(rows.size()), features.cols());
        for (size_t k = 0; k < rows.size(); ++k) {
            size_t i = rows[k];
            out.patient_ids.push_back(patient_ids[i]);
            out.t0.push_back(t0[i]);
            out.time.push_back(time[i]);
            out.event.push_back(event[i]);
            out.features.row(Eigen::Index(k)) = features.row(Eigen::Index(i));
        }
        for (const auto& cat : categoricals) {
            CategoricalColumn c{cat.name, cat.kind, {}};
            c.values.reserve(rows.size());
            for (size_t i : rows) c.values.push_back(cat.values[i]);
            out.categoricals.push_back(std::move(c));
        }
        return out;
    }
};

// ---- column statistics ---------------------------------------------------

inline double column_mean(const Eigen::MatrixXd& m, int j) {
    double s = 0;
    Eigen::Index cnt = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double v = m(i, j);
        if (!std::isnan(v)) {
            s += v;
            ++cnt;
        }
    }
    return cnt ? s / double(cnt) : nan_value();
}

// population variance over non-missing cells
inline double column_variance(const Eigen::MatrixXd& m, int j) {
    double mean = column_mean(m, j);
    if (std::isnan(mean)) return nan_value();
    double s = 0;
    Eigen::Index cnt = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double v = m(i, j);
        if (!std::isnan(v)) {
            s += (v - mean) * (v - mean);
            ++cnt;
        }
    }
    return s / double(cnt);
}

// fraction of non-missing cells that are nonzero
inline double column_prevalence(const Eigen::MatrixXd& m, int j) {
    Eigen::Index nz = 0, cnt = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        double v = m(i, j);
        if (!std::isnan(v)) {
            ++cnt;
            if (v != 0.0) ++nz;
        }
    }
    return cnt ? double(nz) / double(cnt) : 0.0;
}

// ---- CSV format ----------------------------------------------------------
//
// Header: patient_id,t0,time,event,f:<kind>:<name>,...
// Empty feature cell = missing. String-valued feature columns are kept as
// categoricals until expand_categoricals.

namespace detail {

inline bool parse_double_cell(const std::string& s, double& out) {
    if (s.empty()) return false;
    char* end = nullptr;
    out = std::strtod(s.c_str(), &end);
    return end == s.c_str() + s.size();
}

}  // namespace detail

inline Cohort load_cohort(const std::string& path, const std::string& sidecar_path = "") {
    CsvTable t = read_csv(path);

    json sidecar;
    if (!sidecar_path.empty()) {
        std::ifstream in(sidecar_path);
        if (!in) throw std::runtime_error("cannot open sidecar " + sidecar_path);
        in >> sidecar;
    }

    const std::vector<std::string> required = {"patient_id", "t0", "time", "event"};
    std::map<std::string, size_t> base;
    struct FCol {
        size_t csv_index;
        std::string name;
        ColumnKind kind;
    };
    std::vector<FCol> fcols;
    for (size_t j = 0; j < t.header.size(); ++j) {
        const std::string& h = t.header[j];
        if (h.rfind("f:", 0) == 0) {
            size_t sep = h.find(':', 2);
            if (sep == std::string::npos)
                throw CsvError(path, 1, "feature header '" + h + "' is not f:<kind>:<name>");
            std::string kind_s = h.substr(2, sep - 2);
            std::string name = h.substr(sep + 1);
            auto kind = parse_kind(kind_s);
            if (!kind) throw CsvError(path, 1, "unknown kind tag '" + kind_s + "' in '" + h + "'");
            if (name.empty()) throw CsvError(path, 1, "empty feature name in '" + h + "'");
            fcols.push_back({j, name, *kind});
        } else {
            base[h] = j;
        }
    }
    for (const auto& r : required)
        if (!base.count(r)) throw CsvError(path, 1, "missing required column '" + r + "'");
    {
        std::set<std::string> names;
        for (const auto& fc : fcols)
            if (!names.insert(fc.name).second)
                throw CsvError(path, 1, "duplicate feature name '" + fc.name + "'");
    }

    const size_t n = t.rows.size();
    Cohort c;
    c.patient_ids.reserve(n);
    std::set<std::string> ids_seen;

    for (size_t i = 0; i < n; ++i) {
        const auto& row = t.rows[i];
        const size_t line_no = i + 2;
        const std::string& pid = row[base["patient_id"]];
        if (pid.empty()) throw CsvError(path, line_no, "empty patient_id");
        if (!ids_seen.insert(pid).second)
            throw CsvError(path, line_no, "duplicate patient id '" + pid + "'");
        c.patient_ids.push_back(pid);
        try {
            c.t0.push_back(parse_date(row[base["t0"]]));
        } catch (const std::exception& e) {
            throw CsvError(path, line_no, e.what());
        }
        double tm;
        if (!detail::parse_double_cell(row[base["time"]], tm))
            throw CsvError(path, line_no, "time is not a number");
        if (tm < 0) throw CsvError(path, line_no, "negative time " + row[base["time"]]);
        c.time.push_back(tm);
        const std::string& ev = row[base["event"]];
        if (ev != "0" && ev != "1") throw CsvError(path, line_no, "event must be 0 or 1");
        c.event.push_back(uint8_t(ev == "1"));
    }

    // classify each feature column: numeric unless some non-empty cell fails
    // to parse, or the sidecar forces dtype "categorical"
    for (const auto& fc : fcols) {
        bool categorical = false;
        if (sidecar.contains(fc.name) && sidecar[fc.name].contains("dtype") &&
            sidecar[fc.name]["dtype"] == "categorical")
            categorical = true;
        if (!categorical) {
            for (size_t i = 0; i < n && !categorical; ++i) {
                const std::string& cell = t.rows[i][fc.csv_index];
                double v;
                if (!cell.empty() && !detail::parse_double_cell(cell, v)) categorical = true;
            }
        }
        if (categorical) {
            CategoricalColumn col{fc.name, fc.kind, {}};
            col.values.reserve(n);
            for (size_t i = 0; i < n; ++i) col.values.push_back(t.rows[i][fc.csv_index]);
            c.categoricals.push_back(std::move(col));
        } else {
            ColumnMeta meta{fc.name, fc.kind, Dtype::continuous, ""};
            c.columns.push_back(meta);
        }
    }

    c.features.resize(Eigen::Index(n), Eigen::Index(c.columns.size()));
    for (const auto& fc : fcols) {
        int j = c.column_index(fc.name);
        if (j < 0) continue;  // went to categoricals
        bool binary = true;
        for (size_t i = 0; i < n; ++i) {
            const std::string& cell = t.rows[i][fc.csv_index];
            double v = nan_value();
            if (!cell.empty()) {
                detail::parse_double_cell(cell, v);
                if (v != 0.0 && v != 1.0) binary = false;
            }
            c.features(Eigen::Index(i), j) = v;
        }
        c.columns[j].dtype = binary ? Dtype::binary : Dtype::continuous;
    }

    // sidecar overrides (kind / dtype) keyed by column name
    for (auto& meta : c.columns) {
        if (!sidecar.contains(meta.name)) continue;
        const json& o = sidecar[meta.name];
        if (o.contains("kind")) {
            auto k = parse_kind(o["kind"].get<std::string>());
            if (!k) throw std::runtime_error("sidecar: unknown kind for '" + meta.name + "'");
            meta.kind = *k;
        }
        if (o.contains("dtype")) {
            std::string d = o["dtype"].get<std::string>();
            if (d == "binary") meta.dtype = Dtype::binary;
            else if (d == "continuous") meta.dtype = Dtype::continuous;
            else if (d != "categorical")
                throw std::runtime_error("sidecar: unknown dtype '" + d + "'");
        }
    }
    for (auto& cat : c.categoricals) {
        if (sidecar.contains(cat.name) && sidecar[cat.name].contains("kind")) {
            auto k = parse_kind(sidecar[cat.name]["kind"].get<std::string>());
            if (!k) throw std::runtime_error("sidecar: unknown kind for '" + cat.name + "'");
            cat.kind = *k;
        }
    }

    c.validate();
    return c;
}

inline void save_cohort(const Cohort& c, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << "patient_id,t0,time,event";
    for (const auto& meta : c.columns)
        out << ",f:" << to_string(meta.kind) << ":" << csv_escape(meta.name);
    for (const auto& cat : c.categoricals)
        out << ",f:" << to_string(cat.kind) << ":" << csv_escape(cat.name);
    out << "\n";
    for (size_t i = 0; i < c.n_patients(); ++i) {
        out << csv_escape(c.patient_ids[i]) << ',' << format_date(c.t0[i]) << ','
            << format_double(c.time[i]) << ',' << int(c.event[i]);
        for (Eigen::Index j = 0; j < c.features.cols(); ++j) {
            double v = c.features(Eigen::Index(i), j);
            out << ',';
            if (!std::isnan(v)) out << format_double(v);
        }
        for (const auto& cat : c.categoricals) out << ',' << csv_escape(cat.values[i]);
        out << "\n";
    }
}

}  // namespace pucox
