#pragma once

#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "pucox/cohort.hpp"
#include "pucox/concepts.hpp"
#include "pucox/cox.hpp"

namespace pucox {

enum class FeatureSetVariant {
    raw_anchors,
    lc_only,
    lc_plus_numeric,
    lc_plus_all,
    all_features,
};

inline const char* to_string(FeatureSetVariant v) {
    switch (v) {
        case FeatureSetVariant::raw_anchors: return "raw_anchors";
        case FeatureSetVariant::lc_only: return "lc_only";
        case FeatureSetVariant::lc_plus_numeric: return "lc_plus_numeric";
        case FeatureSetVariant::lc_plus_all: return "lc_plus_all";
        case FeatureSetVariant::all_features: return "all_features";
    }
    return "?";
}

inline FeatureSetVariant parse_variant(const std::string& s) {
    if (s == "raw_anchors") return FeatureSetVariant::raw_anchors;
    if (s == "lc_only") return FeatureSetVariant::lc_only;
    if (s == "lc_plus_numeric") return FeatureSetVariant::lc_plus_numeric;
    if (s == "lc_plus_all") return FeatureSetVariant::lc_plus_all;
    if (s == "all_features") return FeatureSetVariant::all_features;
    throw std::invalid_argument("unknown feature set variant '" + s + "'");
}

inline bool variant_needs_concepts(FeatureSetVariant v) {
    return v == FeatureSetVariant::lc_only || v == FeatureSetVariant::lc_plus_numeric ||
           v == FeatureSetVariant::lc_plus_all;
}

// Build the design matrix for one of the five model variants. Learned
// concept columns are named lc:<concept>.
inline SurvivalData assemble_feature_set(const Cohort& cohort,
                                         const std::vector<ConceptModel>& models,
                                         FeatureSetVariant variant,
                                         const std::vector<AnchorSpec>* specs = nullptr) {
    if (variant_needs_concepts(variant) && models.empty())
        throw std::invalid_argument(std::string("assemble_feature_set: variant ") +
                                    to_string(variant) + " requires fitted concept models");

    SurvivalData out;
    out.time = cohort.time;
    out.event.assign(cohort.event.begin(), cohort.event.end());
    const Eigen::Index n = Eigen::Index(cohort.n_patients());

    auto add_columns = [&](const std::vector<int>& cols) {
        Eigen::Index base = out.X.cols();
        out.X.conservativeResize(n, base + Eigen::Index(cols.size()));
        for (size_t k = 0; k < cols.size(); ++k) {
            out.X.col(base + Eigen::Index(k)) = cohort.features.col(cols[k]);
            out.feature_names.push_back(cohort.columns[size_t(cols[k])].name);
        }
    };
    auto add_concepts = [&]() {
        Eigen::Index base = out.X.cols();
        out.X.conservativeResize(n, base + Eigen::Index(models.size()));
        for (size_t m = 0; m < models.size(); ++m) {
            std::vector<double> post = concept_posteriors(models[m], cohort);
            for (Eigen::Index i = 0; i < n; ++i)
                out.X(i, base + Eigen::Index(m)) = post[size_t(i)];
            out.feature_names.push_back("lc:" + models[m].spec.concept_name);
        }
    };

    out.X.resize(n, 0);
    switch (variant) {
        case FeatureSetVariant::raw_anchors: {
            std::vector<const AnchorSpec*> spec_list;
            if (specs) {
                for (const auto& s : *specs) spec_list.push_back(&s);
            } else {
                for (const auto& m : models) spec_list.push_back(&m.spec);
            }
            if (spec_list.empty())
                throw std::invalid_argument(
                    "assemble_feature_set: raw_anchors needs anchor specs");
            std::vector<int> cols;
            std::set<std::string> seen;
            for (const AnchorSpec* s : spec_list) {
                for (const auto& name : s->anchor_columns) {
                    if (!seen.insert(name).second) continue;
                    int j = cohort.column_index(name);
                    if (j < 0)
                        throw std::invalid_argument(
                            "assemble_feature_set: anchor column '" + name + "' not in cohort");
                    cols.push_back(j);
                }
            }
            add_columns(cols);
            break;
        }
        case FeatureSetVariant::lc_only:
            add_concepts();
            break;
        case FeatureSetVariant::lc_plus_numeric: {
            add_concepts();
            std::vector<int> cols;
            for (size_t j = 0; j < cohort.columns.size(); ++j)
                if (cohort.columns[j].dtype == Dtype::continuous) cols.push_back(int(j));
            add_columns(cols);
            break;
        }
        case FeatureSetVariant::lc_plus_all: {
            std::vector<int> cols;
            for (size_t j = 0; j < cohort.columns.size(); ++j) cols.push_back(int(j));
            add_columns(cols);
            add_concepts();
            break;
        }
        case FeatureSetVariant::all_features: {
            std::vector<int> cols;
            for (size_t j = 0; j < cohort.columns.size(); ++j) cols.push_back(int(j));
            add_columns(cols);
            break;
        }
    }
    return out;
}

inline std::vector<ConceptModel> fit_all_concepts(const Cohort& train,
                                                  const std::vector<AnchorSpec>& specs,
                                                  double calib_fraction = 0.2,
                                                  double l2_strength = 1.0, uint64_t seed = 0) {
    std::vector<ConceptModel> models;
    models.reserve(specs.size());
    for (const auto& spec : specs)
        models.push_back(fit_concept(train, spec, calib_fraction, l2_strength, seed));
    return models;
}

}  // namespace pucox
