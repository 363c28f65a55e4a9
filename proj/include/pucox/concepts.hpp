#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pucox/cohort.hpp"
#include "pucox/logistic.hpp"
#include "pucox/rng.hpp"

namespace pucox {

constexpr double kDeltaFloor = 1e-3;

// Declares a concept's positive anchors: binary columns whose OR marks a
// certainly-positive example.
struct AnchorSpec {
    std::string concept_name;
    std::vector<std::string> anchor_columns;
    std::vector<std::string> excluded_columns;

    void validate(const Cohort& c) const {
        if (anchor_columns.empty())
            throw std::invalid_argument("anchor spec '" + concept_name + "': no anchor columns");
        std::set<std::string> anchors(anchor_columns.begin(), anchor_columns.end());
        for (const auto& e : excluded_columns)
            if (anchors.count(e))
                throw std::invalid_argument("anchor spec '" + concept_name + "': column '" + e +
                                            "' is both anchor and exclusion");
        auto check = [&](const std::string& name) {
            int j = c.column_index(name);
            if (j < 0)
                throw std::invalid_argument("anchor spec '" + concept_name + "': column '" + name +
                                            "' not in cohort");
            if (c.columns[size_t(j)].dtype != Dtype::binary)
                throw std::invalid_argument("anchor spec '" + concept_name + "': column '" + name +
                                            "' is not binary");
        };
        for (const auto& a : anchor_columns) check(a);
        for (const auto& e : excluded_columns) check(e);
    }
};

// PU classifier g over the non-anchor covariates plus the Elkan-Noto scaling
// constant estimated on the calibration split.
struct ConceptModel {
    AnchorSpec spec;
    Eigen::VectorXd weights;
    double intercept = 0.0;
    double delta_hat = 1.0;
    std::vector<std::string> feature_names;
};

struct ConceptReport {
    std::string concept_name;
    size_t new_positives = 0;
    double new_positive_fraction = 0.0;
    size_t original_positives = 0;
    double original_positive_fraction = 0.0;
    double recall = 0.0;  // known positives recovered with the anchor masked
};

inline double estimate_delta(const std::vector<double>& g_on_positives,
                             double floor = kDeltaFloor) {
    if (g_on_positives.empty())
        throw std::invalid_argument("estimate_delta: no positives in calibration split");
    double s = 0;
    for (double g : g_on_positives) {
        if (g < 0.0 || g > 1.0)
            throw std::invalid_argument("estimate_delta: probability outside [0,1]");
        s += g;
    }
    return std::max(s / double(g_on_positives.size()), floor);
}

inline double concept_posterior(const ConceptModel& model, const Eigen::VectorXd& row,
                                bool anchor_present) {
    if (size_t(row.size()) != model.feature_names.size())
        throw std::invalid_argument("concept_posterior: row has " + std::to_string(row.size()) +
                                    " features, model expects " +
                                    std::to_string(model.feature_names.size()));
    if (anchor_present) return 1.0;
    double g = sigmoid(model.weights.dot(row) + model.intercept);
    return std::min(1.0, g / model.delta_hat);
}

namespace detail {

// column indices of the model's feature space within a cohort
inline std::vector<int> model_column_indices(const ConceptModel& m, const Cohort& c) {
    std::vector<int> idx;
    idx.reserve(m.feature_names.size());
    for (const auto& name : m.feature_names) {
        int j = c.column_index(name);
        if (j < 0)
            throw std::invalid_argument("concept '" + m.spec.concept_name +
                                        "': cohort lacks feature '" + name + "'");
        idx.push_back(j);
    }
    return idx;
}

inline std::vector<uint8_t> anchor_or(const Cohort& c, const AnchorSpec& spec) {
    std::vector<int> cols;
    for (const auto& a : spec.anchor_columns) {
        int j = c.column_index(a);
        if (j < 0)
            throw std::invalid_argument("anchor spec '" + spec.concept_name +
                                        "': column '" + a + "' not in cohort");
        cols.push_back(j);
    }
    std::vector<uint8_t> out(c.n_patients(), 0);
    for (size_t i = 0; i < c.n_patients(); ++i)
        for (int j : cols)
            if (c.features(Eigen::Index(i), j) != 0.0) {
                out[i] = 1;
                break;
            }
    return out;
}

}  // namespace detail

// g and anchor state for every row of a cohort, in one pass
struct ConceptScores {
    std::vector<double> g;
    std::vector<uint8_t> anchor_present;
};

inline ConceptScores score_concept(const ConceptModel& model, const Cohort& c) {
    auto idx = detail::model_column_indices(model, c);
    ConceptScores s;
    s.anchor_present = detail::anchor_or(c, model.spec);
    s.g.resize(c.n_patients());
    for (size_t i = 0; i < c.n_patients(); ++i) {
        double eta = model.intercept;
        for (size_t k = 0; k < idx.size(); ++k)
            eta += model.weights[Eigen::Index(k)] * c.features(Eigen::Index(i), idx[k]);
        s.g[i] = sigmoid(eta);
    }
    return s;
}

// calibrated posterior for every row (1.0 where the anchor is present)
inline std::vector<double> concept_posteriors(const ConceptModel& model, const Cohort& c) {
    ConceptScores s = score_concept(model, c);
    std::vector<double> out(s.g.size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = s.anchor_present[i] ? 1.0 : std::min(1.0, s.g[i] / model.delta_hat);
    return out;
}

// Anchor-and-learn: OR the anchors into the PU label, fit a logistic
// classifier on everything else, and estimate delta on a held-out
// anchor-stratified calibration split.
inline ConceptModel fit_concept(const Cohort& train, const AnchorSpec& spec,
                                double calib_fraction = 0.2, double l2_strength = 1.0,
                                uint64_t seed = 0, int max_iter = 100, double tol = 1e-8) {
    spec.validate(train);
    if (calib_fraction <= 0.0 || calib_fraction >= 1.0)
        throw std::invalid_argument("fit_concept: calib_fraction must be in (0,1)");

    std::vector<uint8_t> anchor = detail::anchor_or(train, spec);
    size_t n_pos = 0;
    for (uint8_t a : anchor) n_pos += a;
    if (n_pos == 0 || n_pos == anchor.size())
        throw std::invalid_argument("fit_concept '" + spec.concept_name +
                                    "': anchor prevalence must be strictly inside (0,1)");

    std::set<std::string> removed(spec.anchor_columns.begin(), spec.anchor_columns.end());
    removed.insert(spec.excluded_columns.begin(), spec.excluded_columns.end());
    std::vector<int> cols;
    std::vector<std::string> names;
    for (size_t j = 0; j < train.columns.size(); ++j) {
        if (removed.count(train.columns[j].name)) continue;
        cols.push_back(int(j));
        names.push_back(train.columns[j].name);
    }
    if (cols.empty())
        throw std::invalid_argument("fit_concept '" + spec.concept_name +
                                    "': no covariates left after exclusions");

    // anchor-stratified calibration split, seeded per concept
    Rng rng = Rng::stream(seed, hash_str(0xC0FFEE, spec.concept_name));
    std::vector<size_t> pos_rows, neg_rows;
    for (size_t i = 0; i < anchor.size(); ++i) (anchor[i] ? pos_rows : neg_rows).push_back(i);
    rng.shuffle(pos_rows);
    rng.shuffle(neg_rows);
    size_t n_calib_pos = size_t(std::llround(calib_fraction * double(pos_rows.size())));
    size_t n_calib_neg = size_t(std::llround(calib_fraction * double(neg_rows.size())));
    if (n_calib_pos == 0)
        throw std::invalid_argument("fit_concept '" + spec.concept_name +
                                    "': calibration split has no positives");

    std::vector<size_t> calib_rows(pos_rows.begin(), pos_rows.begin() + n_calib_pos);
    std::vector<size_t> fit_rows(pos_rows.begin() + n_calib_pos, pos_rows.end());
    calib_rows.insert(calib_rows.end(), neg_rows.begin(), neg_rows.begin() + n_calib_neg);
    fit_rows.insert(fit_rows.end(), neg_rows.begin() + n_calib_neg, neg_rows.end());

    Eigen::MatrixXd X(fit_rows.size(), cols.size());
    Eigen::VectorXd y(fit_rows.size());
    for (size_t r = 0; r < fit_rows.size(); ++r) {
        for (size_t k = 0; k < cols.size(); ++k)
            X(Eigen::Index(r), Eigen::Index(k)) = train.features(Eigen::Index(fit_rows[r]), cols[k]);
        y[Eigen::Index(r)] = anchor[fit_rows[r]];
    }
    LogisticFit lf = fit_logistic(X, y, l2_strength, max_iter, tol);

    ConceptModel model;
    model.spec = spec;
    model.weights = std::move(lf.weights);
    model.intercept = lf.intercept;
    model.feature_names = std::move(names);
    model.delta_hat = 1.0;  // placeholder until calibrated below

    std::vector<double> g_pos;
    for (size_t i : calib_rows) {
        if (!anchor[i]) continue;
        double eta = model.intercept;
        for (size_t k = 0; k < cols.size(); ++k)
            eta += model.weights[Eigen::Index(k)] * train.features(Eigen::Index(i), cols[k]);
        g_pos.push_back(sigmoid(eta));
    }
    model.delta_hat = estimate_delta(g_pos);
    return model;
}

// Table-2-style diagnostics. Recall scores known positives with the anchor
// masked (the step-4 rule would otherwise force recall to 1).
inline ConceptReport concept_report(const ConceptModel& model, const Cohort& test,
                                    double threshold = 0.5) {
    ConceptScores s = score_concept(model, test);
    const size_t n = test.n_patients();
    ConceptReport r;
    r.concept_name = model.spec.concept_name;
    size_t recalled = 0;
    for (size_t i = 0; i < n; ++i) {
        double masked = std::min(1.0, s.g[i] / model.delta_hat);
        if (s.anchor_present[i]) {
            ++r.original_positives;
            if (masked > threshold) ++recalled;
        } else if (masked > threshold) {
            ++r.new_positives;
        }
    }
    r.recall = r.original_positives ? double(recalled) / double(r.original_positives) : 0.0;
    r.new_positive_fraction = n ? double(r.new_positives) / double(n) : 0.0;
    r.original_positive_fraction = n ? double(r.original_positives) / double(n) : 0.0;
    return r;
}

// ---- JSON ------------------------------------------------------------------

inline void to_json(json& j, const AnchorSpec& s) {
    j = json{{"concept", s.concept_name},
             {"anchors", s.anchor_columns},
             {"exclude", s.excluded_columns}};
}

inline void from_json(const json& j, AnchorSpec& s) {
    s.concept_name = j.at("concept").get<std::string>();
    s.anchor_columns = j.at("anchors").get<std::vector<std::string>>();
    s.excluded_columns = j.value("exclude", std::vector<std::string>{});
}

inline void to_json(json& j, const ConceptModel& m) {
    std::vector<double> w(m.weights.data(), m.weights.data() + m.weights.size());
    j = json{{"spec", m.spec},
             {"weights", w},
             {"intercept", m.intercept},
             {"delta_hat", m.delta_hat},
             {"feature_names", m.feature_names}};
}

inline void from_json(const json& j, ConceptModel& m) {
    m.spec = j.at("spec").get<AnchorSpec>();
    auto w = j.at("weights").get<std::vector<double>>();
    m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), Eigen::Index(w.size()));
    m.intercept = j.at("intercept").get<double>();
    m.delta_hat = j.at("delta_hat").get<double>();
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    if (m.delta_hat <= 0.0 || m.delta_hat > 1.0)
        throw std::invalid_argument("concept model: delta_hat outside (0,1]");
    if (size_t(m.weights.size()) != m.feature_names.size())
        throw std::invalid_argument("concept model: weights/feature_names length mismatch");
}

inline std::vector<AnchorSpec> load_anchor_specs(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open anchors file " + path);
    json j;
    in >> j;
    return j.get<std::vector<AnchorSpec>>();
}

}  // namespace pucox
