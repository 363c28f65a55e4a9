#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pucox/cohort.hpp"

namespace pucox {

// z-scoring parameters, population std; columns with zero variance are left
// unscaled and flagged so the variance filter can drop them
struct NormStats {
    std::map<std::string, std::pair<double, double>> by_column;  // name -> (mean, std > 0)
    std::vector<std::string> flagged_zero_std;
};

struct ImputeStats {
    std::map<std::string, double> medians;       // every continuous column seen at fit
    std::vector<std::string> indicator_columns;  // columns that get a __missing companion
    std::vector<std::string> dropped_all_missing;
    std::vector<std::string> warnings;
};

namespace detail {

inline Cohort select_columns(const Cohort& c, const std::vector<int>& keep) {
    Cohort out;
    out.patient_ids = c.patient_ids;
    out.t0 = c.t0;
    out.time = c.time;
    out.event = c.event;
    out.categoricals = c.categoricals;
    out.features.resize(c.features.rows(), Eigen::Index(keep.size()));
    out.columns.reserve(keep.size());
    for (size_t k = 0; k < keep.size(); ++k) {
        out.columns.push_back(c.columns[size_t(keep[k])]);
        out.features.col(Eigen::Index(k)) = c.features.col(keep[k]);
    }
    return out;
}

inline double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    size_t n = v.size();
    if (n == 0) return nan_value();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

// Within each kind, keep the k most prevalent binary columns; ties at the
// boundary go to the lexicographically smaller name. Continuous columns and
// unexpanded categoricals pass through untouched.
inline Cohort cap_features_by_frequency(const Cohort& c, int k_default,
                                        const std::map<ColumnKind, int>& k_overrides = {}) {
    if (k_default < 1) throw std::invalid_argument("cap_features_by_frequency: k must be >= 1");
    for (const auto& [kind, k] : k_overrides)
        if (k < 1) throw std::invalid_argument("cap_features_by_frequency: k must be >= 1");

    struct Cand {
        int index;
        double prevalence;
        std::string name;
    };
    std::map<ColumnKind, std::vector<Cand>> by_kind;
    for (size_t j = 0; j < c.columns.size(); ++j)
        if (c.columns[j].dtype == Dtype::binary)
            by_kind[c.columns[j].kind].push_back(
                {int(j), column_prevalence(c.features, int(j)), c.columns[j].name});

    std::set<int> dropped;
    for (auto& [kind, cands] : by_kind) {
        auto it = k_overrides.find(kind);
        size_t k = size_t(it != k_overrides.end() ? it->second : k_default);
        if (cands.size() <= k) continue;
        std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
            if (a.prevalence != b.prevalence) return a.prevalence > b.prevalence;
            return a.name < b.name;
        });
        for (size_t r = k; r < cands.size(); ++r) dropped.insert(cands[r].index);
    }

    std::vector<int> keep;
    for (size_t j = 0; j < c.columns.size(); ++j)
        if (!dropped.count(int(j))) keep.push_back(int(j));
    return detail::select_columns(c, keep);
}

// Replace each string-valued column by one indicator per observed level,
// named <col>=<level>. A missing cell leaves that row missing across the
// indicators (imputation later maps binary missing to 0). When `levels` is
// supplied (test-time path), the train-time level set is reused and unseen
// levels map to all-zeros.
inline Cohort expand_categoricals(const Cohort& c, int max_levels = 64,
                                  const std::map<std::string, std::vector<std::string>>* levels =
                                      nullptr) {
    Cohort out = c;
    out.categoricals.clear();
    const size_t n = c.n_patients();

    for (const auto& cat : c.categoricals) {
        std::vector<std::string> lv;
        if (levels) {
            auto it = levels->find(cat.name);
            if (it == levels->end())
                throw std::invalid_argument("expand_categoricals: no recorded levels for '" +
                                            cat.name + "'");
            lv = it->second;
        } else {
            std::set<std::string> seen;
            for (const auto& v : cat.values)
                if (!v.empty()) seen.insert(v);
            if (int(seen.size()) > max_levels)
                throw std::invalid_argument("expand_categoricals: column '" + cat.name + "' has " +
                                            std::to_string(seen.size()) + " levels (cap " +
                                            std::to_string(max_levels) + ")");
            lv.assign(seen.begin(), seen.end());
        }

        Eigen::Index base = out.features.cols();
        out.features.conservativeResize(Eigen::NoChange, base + Eigen::Index(lv.size()));
        for (size_t l = 0; l < lv.size(); ++l) {
            ColumnMeta meta{cat.name + "=" + lv[l], cat.kind, Dtype::binary, ""};
            out.columns.push_back(meta);
            for (size_t i = 0; i < n; ++i) {
                const std::string& v = cat.values[i];
                double cell = v.empty() ? nan_value() : double(v == lv[l]);
                out.features(Eigen::Index(i), base + Eigen::Index(l)) = cell;
            }
        }
    }
    out.validate();
    return out;
}

// Train path (stats == nullptr): z-score continuous columns with statistics
// from this cohort and return them. Test path: apply the supplied stats
// without touching them.
inline std::pair<Cohort, NormStats> normalize_continuous(const Cohort& c,
                                                         const NormStats* stats = nullptr) {
    Cohort out = c;
    NormStats ns;
    if (stats) ns = *stats;

    for (size_t j = 0; j < c.columns.size(); ++j) {
        if (c.columns[j].dtype != Dtype::continuous) continue;
        const std::string& name = c.columns[j].name;
        double mean, sd;
        if (stats) {
            auto it = ns.by_column.find(name);
            if (it == ns.by_column.end()) {
                if (std::find(ns.flagged_zero_std.begin(), ns.flagged_zero_std.end(), name) !=
                    ns.flagged_zero_std.end())
                    continue;  // train saw it constant; leave unscaled here too
                throw std::invalid_argument("normalize_continuous: stats missing column '" + name +
                                            "'");
            }
            mean = it->second.first;
            sd = it->second.second;
        } else {
            mean = column_mean(c.features, int(j));
            double var = column_variance(c.features, int(j));
            sd = std::sqrt(var);
            if (!(sd > 0.0)) {
                ns.flagged_zero_std.push_back(name);
                continue;
            }
            ns.by_column[name] = {mean, sd};
        }
        for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
            double v = out.features(i, Eigen::Index(j));
            if (!std::isnan(v)) out.features(i, Eigen::Index(j)) = (v - mean) / sd;
        }
    }
    return {std::move(out), std::move(ns)};
}

// Drop every column with population variance < threshold; survivor order
// preserved.
inline Cohort filter_low_variance(const Cohort& c, double threshold = 0.01) {
    if (threshold < 0) throw std::invalid_argument("filter_low_variance: threshold must be >= 0");
    std::vector<int> keep;
    for (size_t j = 0; j < c.columns.size(); ++j) {
        double var = column_variance(c.features, int(j));
        if (!(var < threshold)) keep.push_back(int(j));
    }
    if (keep.empty() && !c.columns.empty())
        throw std::runtime_error("filter_low_variance: every column dropped, nothing to fit");
    return detail::select_columns(c, keep);
}

// Median-with-indicator policy. Continuous missing cells get the fit-time
// median and a <col>__missing companion column (appended only for columns
// that had missing cells at fit time); binary missing cells become 0;
// columns that were entirely missing at fit are dropped with a warning.
inline std::pair<Cohort, ImputeStats> impute_missing(const Cohort& c,
                                                     const ImputeStats* stats = nullptr) {
    ImputeStats st;
    if (stats) st = *stats;

    if (!stats) {
        for (size_t j = 0; j < c.columns.size(); ++j) {
            if (c.columns[j].dtype != Dtype::continuous) continue;
            std::vector<double> present;
            bool any_missing = false;
            for (Eigen::Index i = 0; i < c.features.rows(); ++i) {
                double v = c.features(i, Eigen::Index(j));
                if (std::isnan(v)) any_missing = true;
                else present.push_back(v);
            }
            const std::string& name = c.columns[j].name;
            if (present.empty()) {
                st.dropped_all_missing.push_back(name);
                st.warnings.push_back("column '" + name + "' entirely missing; dropped");
                continue;
            }
            st.medians[name] = detail::median_of(std::move(present));
            if (any_missing) st.indicator_columns.push_back(name);
        }
    }

    std::set<std::string> dropped(st.dropped_all_missing.begin(), st.dropped_all_missing.end());
    std::vector<int> keep;
    for (size_t j = 0; j < c.columns.size(); ++j)
        if (!dropped.count(c.columns[j].name)) keep.push_back(int(j));
    Cohort out = detail::select_columns(c, keep);

    for (size_t j = 0; j < out.columns.size(); ++j) {
        const auto& meta = out.columns[j];
        double fill = 0.0;
        if (meta.dtype == Dtype::continuous) {
            auto it = st.medians.find(meta.name);
            if (it == st.medians.end())
                throw std::invalid_argument("impute_missing: stats missing column '" + meta.name +
                                            "'");
            fill = it->second;
        }
        for (Eigen::Index i = 0; i < out.features.rows(); ++i) {
            double& v = out.features(i, Eigen::Index(j));
            if (std::isnan(v)) v = fill;
        }
    }

    for (const auto& name : st.indicator_columns) {
        int j = c.column_index(name);
        if (j < 0)
            throw std::invalid_argument("impute_missing: indicator source '" + name +
                                        "' not in cohort");
        std::string ind_name = name + "__missing";
        if (out.has_column(ind_name))
            throw std::invalid_argument("impute_missing: column '" + ind_name +
                                        "' already exists");
        Eigen::Index col = out.features.cols();
        out.features.conservativeResize(Eigen::NoChange, col + 1);
        for (Eigen::Index i = 0; i < out.features.rows(); ++i)
            out.features(i, col) = std::isnan(c.features(i, Eigen::Index(j))) ? 1.0 : 0.0;
        ColumnMeta meta{ind_name, c.columns[size_t(j)].kind, Dtype::binary, name};
        out.columns.push_back(meta);
    }
    out.validate();
    return {std::move(out), std::move(st)};
}

// ---- full pipeline with frozen train statistics ---------------------------

struct PreprocessConfig {
    int k_default = 20;
    std::map<ColumnKind, int> k_overrides = {{ColumnKind::lab, 50}};
    double variance_threshold = 0.01;
    int max_levels = 64;
};

// Everything apply() needs to replay the train-time decisions on new rows.
struct FittedPreprocess {
    PreprocessConfig config;
    std::map<std::string, std::vector<std::string>> categorical_levels;
    std::vector<std::string> capped_columns;  // survivors of frequency capping, in order
    ImputeStats impute;
    NormStats norm;
    std::vector<std::string> final_columns;  // survivors of the variance filter, in order

    Cohort apply(const Cohort& raw) const {
        Cohort c = expand_categoricals(raw, config.max_levels, &categorical_levels);
        std::vector<int> keep;
        for (const auto& name : capped_columns) {
            int j = c.column_index(name);
            if (j < 0)
                throw std::invalid_argument("preprocess: cohort lacks fitted column '" + name +
                                            "'");
            keep.push_back(j);
        }
        c = detail::select_columns(c, keep);
        c = impute_missing(c, &impute).first;
        c = normalize_continuous(c, &norm).first;
        keep.clear();
        for (const auto& name : final_columns) {
            int j = c.column_index(name);
            if (j < 0)
                throw std::invalid_argument("preprocess: cohort lacks fitted column '" + name +
                                            "'");
            keep.push_back(j);
        }
        return detail::select_columns(c, keep);
    }
};

inline std::pair<Cohort, FittedPreprocess> fit_preprocess(const Cohort& train,
                                                          const PreprocessConfig& config = {}) {
    FittedPreprocess fp;
    fp.config = config;

    Cohort c = expand_categoricals(train, config.max_levels);
    for (const auto& cat : train.categoricals) {
        std::vector<std::string> lv;
        std::set<std::string> seen;
        for (const auto& v : cat.values)
            if (!v.empty()) seen.insert(v);
        lv.assign(seen.begin(), seen.end());
        fp.categorical_levels[cat.name] = std::move(lv);
    }

    c = cap_features_by_frequency(c, config.k_default, config.k_overrides);
    for (const auto& meta : c.columns) fp.capped_columns.push_back(meta.name);

    auto [imputed, ist] = impute_missing(c);
    fp.impute = std::move(ist);
    auto [normed, nst] = normalize_continuous(imputed);
    fp.norm = std::move(nst);
    Cohort done = filter_low_variance(normed, config.variance_threshold);
    for (const auto& meta : done.columns) fp.final_columns.push_back(meta.name);
    return {std::move(done), std::move(fp)};
}

}  // namespace pucox
