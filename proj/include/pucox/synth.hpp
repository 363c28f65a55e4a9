#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pucox/cohort.hpp"
#include "pucox/concepts.hpp"
#include "pucox/logistic.hpp"
#include "pucox/rng.hpp"

namespace pucox {

struct ConceptGen {
    std::string name;
    double prevalence = 0.3;
    double delta = 0.6;        // label frequency: P(anchor | concept present)
    int n_proxies = 8;
    double proxy_strength = 4.0;  // log-odds shift when the concept is present
};

struct GenConfig {
    size_t n_patients = 10000;
    std::vector<ConceptGen> concepts;
    int n_noise_features = 15;       // independent Bernoulli(0.1) indicators
    int n_continuous_noise = 2;      // independent standard-normal lab-like columns
    std::vector<double> true_beta;   // log-hazard per concept
    double baseline_rate = 0.007;    // events per day
    double censor_rate = 0.05;       // censorings per day
    Date t0_start = make_date(2020, 1, 1);
    Date t0_end = make_date(2022, 1, 12);
    uint64_t seed = 0;

    void validate() const {
        if (n_patients == 0) throw std::invalid_argument("gen config: n_patients = 0");
        if (concepts.empty()) throw std::invalid_argument("gen config: no concepts");
        if (true_beta.size() != concepts.size())
            throw std::invalid_argument("gen config: true_beta size != concept count");
        for (const auto& c : concepts) {
            if (!(c.prevalence > 0 && c.prevalence < 1))
                throw std::invalid_argument("gen config: prevalence outside (0,1)");
            if (!(c.delta > 0 && c.delta <= 1))
                throw std::invalid_argument("gen config: delta outside (0,1]");
            if (c.n_proxies < 0) throw std::invalid_argument("gen config: negative n_proxies");
        }
        if (!(baseline_rate > 0) || !(censor_rate > 0))
            throw std::invalid_argument("gen config: rates must be > 0");
        if (!(t0_start <= t0_end)) throw std::invalid_argument("gen config: bad t0 range");
    }
};

struct GroundTruth {
    std::vector<std::string> concept_names;
    std::vector<std::vector<uint8_t>> latent;  // [concept][patient]
    std::vector<double> true_delta;
    std::vector<double> true_beta;
    std::vector<double> hazard_multiplier;  // exp(sum_c beta_c * latent_c)
};

// Draws one patient per independent stream derived from (seed, patient
// index); SCAR holds by construction (anchor = latent AND Bernoulli(delta),
// independent of everything else given the latent).
inline std::pair<Cohort, GroundTruth> generate_cohort(const GenConfig& cfg) {
    cfg.validate();
    const size_t n = cfg.n_patients;
    const size_t nc = cfg.concepts.size();

    Cohort cohort;
    GroundTruth truth;
    truth.true_beta = cfg.true_beta;
    for (const auto& c : cfg.concepts) {
        truth.concept_names.push_back(c.name);
        truth.true_delta.push_back(c.delta);
    }
    truth.latent.assign(nc, std::vector<uint8_t>(n, 0));
    truth.hazard_multiplier.resize(n);

    for (const auto& c : cfg.concepts) {
        cohort.columns.push_back({c.name + "_dx", ColumnKind::diagnosis, Dtype::binary, ""});
        for (int p = 0; p < c.n_proxies; ++p)
            cohort.columns.push_back({c.name + "_rx" + std::to_string(p + 1),
                                      ColumnKind::medication, Dtype::binary, ""});
    }
    for (int f = 0; f < cfg.n_noise_features; ++f)
        cohort.columns.push_back(
            {"noise" + std::to_string(f + 1), ColumnKind::symptom, Dtype::binary, ""});
    for (int f = 0; f < cfg.n_continuous_noise; ++f)
        cohort.columns.push_back(
            {"lab_noise" + std::to_string(f + 1), ColumnKind::lab, Dtype::continuous, ""});

    cohort.features.resize(Eigen::Index(n), Eigen::Index(cohort.columns.size()));
    cohort.patient_ids.resize(n);
    cohort.t0.resize(n);
    cohort.time.resize(n);
    cohort.event.resize(n);

    const int32_t date_span = cfg.t0_end.days - cfg.t0_start.days + 1;

    for (size_t i = 0; i < n; ++i) {
        Rng rng = Rng::stream(cfg.seed, uint64_t(i));
        char buf[24];
        std::snprintf(buf, sizeof buf, "p%06zu", i + 1);
        cohort.patient_ids[i] = buf;

        Eigen::Index col = 0;
        double log_mult = 0.0;
        for (size_t c = 0; c < nc; ++c) {
            const auto& cg = cfg.concepts[c];
            uint8_t latent = rng.bernoulli(cg.prevalence) ? 1 : 0;
            truth.latent[c][i] = latent;
            log_mult += cfg.true_beta[c] * latent;
            uint8_t anchor = (latent && rng.bernoulli(cg.delta)) ? 1 : 0;
            cohort.features(Eigen::Index(i), col++) = anchor;
            // proxy fires at sigmoid(+strength/2) when the concept is
            // present, sigmoid(-strength/2) otherwise
            for (int p = 0; p < cg.n_proxies; ++p) {
                double logit = -cg.proxy_strength / 2.0 + cg.proxy_strength * latent;
                cohort.features(Eigen::Index(i), col++) = rng.bernoulli(sigmoid(logit)) ? 1.0 : 0.0;
            }
        }
        for (int f = 0; f < cfg.n_noise_features; ++f)
            cohort.features(Eigen::Index(i), col++) = rng.bernoulli(0.1) ? 1.0 : 0.0;
        for (int f = 0; f < cfg.n_continuous_noise; ++f)
            cohort.features(Eigen::Index(i), col++) = rng.normal();

        double mult = std::exp(log_mult);
        truth.hazard_multiplier[i] = mult;
        double survival_time = rng.exponential(cfg.baseline_rate * mult);
        double censor_time = rng.exponential(cfg.censor_rate);
        cohort.time[i] = std::min(survival_time, censor_time);
        cohort.event[i] = survival_time <= censor_time ? 1 : 0;
        cohort.t0[i] = cfg.t0_start.plus_days(int32_t(rng.uniform_index(uint64_t(date_span))));
    }
    cohort.validate();
    return {std::move(cohort), std::move(truth)};
}

inline double event_fraction(const Cohort& c) {
    if (c.n_patients() == 0) return 0.0;
    size_t ev = 0;
    for (uint8_t e : c.event) ev += e;
    return double(ev) / double(c.n_patients());
}

// the anchor declarations matching generate_cohort's column layout
inline std::vector<AnchorSpec> anchor_specs_for(const GenConfig& cfg) {
    std::vector<AnchorSpec> specs;
    for (const auto& c : cfg.concepts) specs.push_back({c.name, {c.name + "_dx"}, {}});
    return specs;
}

// five concepts with mixed prevalence and effect sizes; rates tuned so the
// event fraction lands near 16.8%
inline GenConfig default_gen_config() {
    GenConfig cfg;
    cfg.concepts = {
        {"inpatient", 0.30, 0.60, 8, 4.0},
        {"old_age", 0.20, 0.60, 8, 4.0},
        {"vaccinated", 0.25, 0.60, 8, 4.0},
        {"diabetes", 0.15, 0.60, 8, 4.0},
        {"obesity", 0.35, 0.60, 8, 4.0},
    };
    cfg.true_beta = {1.0, 0.8, -0.5, 0.6, 0.0};
    return cfg;
}

inline void to_json(json& j, const ConceptGen& c) {
    j = json{{"name", c.name},
             {"prevalence", c.prevalence},
             {"delta", c.delta},
             {"n_proxies", c.n_proxies},
             {"proxy_strength", c.proxy_strength}};
}

inline void from_json(const json& j, ConceptGen& c) {
    c.name = j.at("name").get<std::string>();
    c.prevalence = j.value("prevalence", 0.3);
    c.delta = j.value("delta", 0.6);
    c.n_proxies = j.value("n_proxies", 8);
    c.proxy_strength = j.value("proxy_strength", 4.0);
}

inline void to_json(json& j, const GenConfig& cfg) {
    j = json{{"n_patients", cfg.n_patients},
             {"concepts", cfg.concepts},
             {"n_noise_features", cfg.n_noise_features},
             {"n_continuous_noise", cfg.n_continuous_noise},
             {"true_beta", cfg.true_beta},
             {"baseline_rate", cfg.baseline_rate},
             {"censor_rate", cfg.censor_rate},
             {"t0_start", format_date(cfg.t0_start)},
             {"t0_end", format_date(cfg.t0_end)},
             {"seed", cfg.seed}};
}

inline void from_json(const json& j, GenConfig& cfg) {
    GenConfig defaults = default_gen_config();
    cfg.n_patients = j.value("n_patients", defaults.n_patients);
    cfg.concepts = j.contains("concepts") ? j.at("concepts").get<std::vector<ConceptGen>>()
                                          : defaults.concepts;
    cfg.n_noise_features = j.value("n_noise_features", defaults.n_noise_features);
    cfg.n_continuous_noise = j.value("n_continuous_noise", defaults.n_continuous_noise);
    cfg.true_beta = j.contains("true_beta") ? j.at("true_beta").get<std::vector<double>>()
                                            : defaults.true_beta;
    if (!j.contains("concepts") && !j.contains("true_beta")) cfg.true_beta = defaults.true_beta;
    cfg.baseline_rate = j.value("baseline_rate", defaults.baseline_rate);
    cfg.censor_rate = j.value("censor_rate", defaults.censor_rate);
    cfg.t0_start = parse_date(j.value("t0_start", format_date(defaults.t0_start)));
    cfg.t0_end = parse_date(j.value("t0_end", format_date(defaults.t0_end)));
    cfg.seed = j.value("seed", uint64_t(0));
}

inline void write_truth_json(const GroundTruth& truth, const std::string& path) {
    json j;
    j["concepts"] = truth.concept_names;
    j["delta"] = truth.true_delta;
    j["beta"] = truth.true_beta;
    json latent = json::object();
    for (size_t c = 0; c < truth.concept_names.size(); ++c)
        latent[truth.concept_names[c]] = truth.latent[c];
    j["latent"] = latent;
    j["hazard_multiplier"] = truth.hazard_multiplier;
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace pucox
