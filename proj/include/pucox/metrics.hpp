#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pucox/rng.hpp"

namespace pucox {

using json = nlohmann::json;

// right-continuous survival step function; S(t) = 1 before the first step
struct StepFunction {
    std::vector<double> times;   // ascending
    std::vector<double> values;  // nonincreasing, in [0,1]

    double at(double t) const {
        auto it = std::upper_bound(times.begin(), times.end(), t);
        if (it == times.begin()) return 1.0;
        return values[size_t(it - times.begin()) - 1];
    }
};

struct CalibrationBins {
    std::vector<double> edges;      // D-calibration: n_bins+1 edges on [0,1]
    std::vector<double> predicted;  // one-calibration: per-bin mean prediction
    std::vector<double> observed;   // one-calibration: per-bin 1 - KM_bin(t)
    std::vector<size_t> count;      // one-calibration: per-bin subject count
    std::vector<uint8_t> defined;   // one-calibration: observed estimable?
    std::vector<double> mass;       // D-calibration: per-bin probability mass
};

// ---- concordance -----------------------------------------------------------

namespace metricdetail {

class Fenwick {
public:
    explicit Fenwick(size_t n) : tree_(n + 1, 0) {}
    void add(size_t i) {
        for (++i; i < tree_.size(); i += i & (~i + 1)) ++tree_[i];
    }
    // count of inserted values with index < i
    long long prefix(size_t i) const {
        long long s = 0;
        for (; i > 0; i -= i & (~i + 1)) s += tree_[i];
        return s;
    }

private:
    std::vector<long long> tree_;
};

inline double c_index_quadratic(const std::vector<double>& time, const std::vector<uint8_t>& event,
                                const std::vector<double>& risk) {
    const size_t n = time.size();
    double concordant = 0;
    long long comparable = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!event[i]) continue;
        for (size_t j = 0; j < n; ++j) {
            if (time[i] >= time[j]) continue;
            ++comparable;
            if (risk[i] > risk[j]) concordant += 1.0;
            else if (risk[i] == risk[j]) concordant += 0.5;
        }
    }
    if (comparable == 0) throw std::runtime_error("c_index: no comparable pairs");
    return concordant / double(comparable);
}

inline double c_index_sorted(const std::vector<double>& time, const std::vector<uint8_t>& event,
                             const std::vector<double>& risk) {
    const size_t n = time.size();
    std::vector<double> sorted_risk = risk;
    std::sort(sorted_risk.begin(), sorted_risk.end());
    sorted_risk.erase(std::unique(sorted_risk.begin(), sorted_risk.end()), sorted_risk.end());
    auto rank_of = [&](double r) {
        return size_t(std::lower_bound(sorted_risk.begin(), sorted_risk.end(), r) -
                      sorted_risk.begin());
    };

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return time[a] < time[b]; });

    Fenwick counts(sorted_risk.size());
    long long inserted = 0;
    double concordant = 0;
    long long comparable = 0;

    // walk time groups in descending order; query events against strictly
    // later times, then insert the whole group
    size_t hi = n;
    while (hi > 0) {
        size_t lo = hi;
        double t = time[order[hi - 1]];
        while (lo > 0 && time[order[lo - 1]] == t) --lo;
        for (size_t p = lo; p < hi; ++p) {
            size_t i = order[p];
            if (!event[i]) continue;
            size_t rk = rank_of(risk[i]);
            long long less = counts.prefix(rk);          // later-time subjects w/ lower risk
            long long leq = counts.prefix(rk + 1);
            concordant += double(less) + 0.5 * double(leq - less);
            comparable += inserted;
        }
        for (size_t p = lo; p < hi; ++p) counts.add(rank_of(risk[order[p]]));
        inserted += (long long)(hi - lo);
        hi = lo;
    }
    if (comparable == 0) throw std::runtime_error("c_index: no comparable pairs");
    return concordant / double(comparable);
}

}  // namespace metricdetail

// Harrell's C over comparable pairs (time_i < time_j, event_i = 1); risk
// ties score 0.5. Exact pair enumeration up to n = 2000, Fenwick-tree count
// above that; both produce identical sums.
inline double c_index(const std::vector<double>& time, const std::vector<uint8_t>& event,
                      const std::vector<double>& risk) {
    if (time.size() != event.size() || time.size() != risk.size())
        throw std::invalid_argument("c_index: length mismatch");
    for (double r : risk)
        if (std::isnan(r)) throw std::invalid_argument("c_index: NaN risk");
    if (time.size() <= 2000) return metricdetail::c_index_quadratic(time, event, risk);
    return metricdetail::c_index_sorted(time, event, risk);
}

// ---- bootstrap ---------------------------------------------------------

struct BootstrapCi {
    double median = 0, lo = 0, hi = 0;
    size_t dropped = 0;  // replicates where the metric was undefined
};

inline double percentile(std::vector<double> v, double p) {
    std::sort(v.begin(), v.end());
    if (v.empty()) throw std::runtime_error("percentile of empty sample");
    double h = (double(v.size()) - 1.0) * p;
    size_t lo = size_t(std::floor(h));
    size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - double(lo)) * (v[hi] - v[lo]);
}

// metric(indices) evaluates the statistic on a with-replacement resample;
// replicate r draws from a stream derived from (seed, r), so results do not
// depend on evaluation order.
inline BootstrapCi bootstrap_ci(const std::function<double(const std::vector<size_t>&)>& metric,
                                size_t n_rows, int B = 1000, uint64_t seed = 0) {
    if (B < 1) throw std::invalid_argument("bootstrap_ci: B must be >= 1");
    std::vector<double> values;
    values.reserve(size_t(B));
    BootstrapCi out;
    for (int r = 0; r < B; ++r) {
        Rng rng = Rng::stream(seed, 0xB007u, uint64_t(r));
        std::vector<size_t> idx = rng.resample_indices(n_rows);
        try {
            values.push_back(metric(idx));
        } catch (const std::exception&) {
            ++out.dropped;
        }
    }
    if (values.empty()) throw std::runtime_error("bootstrap_ci: metric undefined on every replicate");
    out.median = percentile(values, 0.50);
    out.lo = percentile(values, 0.025);
    out.hi = percentile(values, 0.975);
    return out;
}

// ---- Kaplan-Meier ------------------------------------------------------

inline StepFunction kaplan_meier(const std::vector<double>& time,
                                 const std::vector<uint8_t>& event) {
    if (time.empty()) throw std::invalid_argument("kaplan_meier: empty input");
    const size_t n = time.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return time[a] < time[b]; });

    StepFunction s;
    double surv = 1.0;
    size_t at_risk = n;
    size_t p = 0;
    while (p < n) {
        double t = time[order[p]];
        size_t deaths = 0, leaving = 0;
        while (p < n && time[order[p]] == t) {
            if (event[order[p]]) ++deaths;
            ++leaving;
            ++p;
        }
        if (deaths > 0) {
            surv *= 1.0 - double(deaths) / double(at_risk);
            s.times.push_back(t);
            s.values.push_back(surv);
        }
        at_risk -= leaving;
    }
    return s;  // no events -> empty steps, S == 1 everywhere
}

// ---- risk strata ---------------------------------------------------------

enum class Stratum { high = 0, medium = 1, low = 2 };

// top ceil(c0*n) -> high, next ceil(c1*n)-high -> medium, rest low; ties at a
// boundary resolved by ascending index
inline std::vector<Stratum> risk_strata(const std::vector<double>& risk,
                                        std::pair<double, double> cuts = {0.10, 0.25}) {
    const size_t n = risk.size();
    if (n == 0) throw std::invalid_argument("risk_strata: empty input");
    size_t n_high = size_t(std::ceil(cuts.first * double(n)));
    size_t n_medium_cum = size_t(std::ceil(cuts.second * double(n)));
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (risk[a] != risk[b]) return risk[a] > risk[b];
        return a < b;
    });
    std::vector<Stratum> out(n, Stratum::low);
    for (size_t p = 0; p < n; ++p) {
        if (p < n_high) out[order[p]] = Stratum::high;
        else if (p < n_medium_cum) out[order[p]] = Stratum::medium;
    }
    return out;
}

// ---- one-calibration -----------------------------------------------------

// Predicted event probabilities at horizon t, split into equal-count bins by
// prediction; observed per bin is 1 - KM(t) inside the bin.
inline CalibrationBins one_calibration(const std::vector<double>& pred_event_prob,
                                       const std::vector<double>& time,
                                       const std::vector<uint8_t>& event, double t = 14.0,
                                       int n_bins = 10) {
    const size_t n = pred_event_prob.size();
    if (n != time.size() || n != event.size())
        throw std::invalid_argument("one_calibration: length mismatch");
    if (n == 0) throw std::invalid_argument("one_calibration: empty input");
    for (double p : pred_event_prob)
        if (!(p >= 0.0 && p <= 1.0))
            throw std::invalid_argument("one_calibration: prediction outside [0,1]");

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return pred_event_prob[a] < pred_event_prob[b];
    });

    CalibrationBins bins;
    for (int b = 0; b < n_bins; ++b) {
        size_t lo = n * size_t(b) / size_t(n_bins);
        size_t hi = n * size_t(b + 1) / size_t(n_bins);
        double pred_sum = 0;
        std::vector<double> bt;
        std::vector<uint8_t> be;
        bool any_at_risk = false;
        for (size_t p = lo; p < hi; ++p) {
            size_t i = order[p];
            pred_sum += pred_event_prob[i];
            bt.push_back(time[i]);
            be.push_back(event[i]);
            if (time[i] >= t) any_at_risk = true;
        }
        bins.count.push_back(hi - lo);
        if (hi == lo) {
            bins.predicted.push_back(0);
            bins.observed.push_back(0);
            bins.defined.push_back(0);
            continue;
        }
        bins.predicted.push_back(pred_sum / double(hi - lo));
        if (!any_at_risk) {
            bins.observed.push_back(std::numeric_limits<double>::quiet_NaN());
            bins.defined.push_back(0);
        } else {
            StepFunction km = kaplan_meier(bt, be);
            bins.observed.push_back(1.0 - km.at(t));
            bins.defined.push_back(1);
        }
    }
    return bins;
}

// ---- D-calibration ---------------------------------------------------------

// surv_at_obs[i] = S_i(T_i): the subject's own predicted survival evaluated
// at their observed (event or censoring) time. Event subjects drop mass 1
// into the bin containing the value; censored subjects spread mass 1
// uniformly over [0, s].
inline CalibrationBins d_calibration(const std::vector<double>& surv_at_obs,
                                     const std::vector<uint8_t>& event, int n_bins = 10) {
    const size_t n = surv_at_obs.size();
    if (n != event.size()) throw std::invalid_argument("d_calibration: length mismatch");
    if (n == 0) throw std::invalid_argument("d_calibration: empty input");

    CalibrationBins bins;
    bins.mass.assign(size_t(n_bins), 0.0);
    for (int b = 0; b <= n_bins; ++b) bins.edges.push_back(double(b) / double(n_bins));
    const double width = 1.0 / double(n_bins);

    for (size_t i = 0; i < n; ++i) {
        double s = surv_at_obs[i];
        if (!(s >= 0.0 && s <= 1.0))
            throw std::invalid_argument("d_calibration: survival value outside [0,1]");
        if (event[i]) {
            size_t b = std::min(size_t(std::floor(s * n_bins)), size_t(n_bins - 1));
            bins.mass[b] += 1.0;
        } else if (s <= 0.0) {
            bins.mass[0] += 1.0;
        } else {
            size_t full = std::min(size_t(std::floor(s * n_bins)), size_t(n_bins));
            for (size_t b = 0; b < full; ++b) bins.mass[b] += width / s;
            if (full < size_t(n_bins)) bins.mass[full] += (s - double(full) * width) / s;
        }
    }
    for (double& m : bins.mass) m /= double(n);
    return bins;
}

// ---- aggregate report --------------------------------------------------

struct KmStratumCurve {
    std::string label;
    size_t count = 0;
    StepFunction curve;
};

struct EvalReport {
    double c_index_median = 0, c_index_lo = 0, c_index_hi = 0;
    size_t bootstrap_dropped = 0;
    std::map<std::string, double> subgroup_c_index;
    CalibrationBins one_cal;
    CalibrationBins d_cal;
    std::vector<KmStratumCurve> km_strata;
};

inline void to_json(json& j, const StepFunction& s) {
    j = json{{"times", s.times}, {"values", s.values}};
}

inline void from_json(const json& j, StepFunction& s) {
    s.times = j.at("times").get<std::vector<double>>();
    s.values = j.at("values").get<std::vector<double>>();
}

inline void to_json(json& j, const CalibrationBins& b) {
    j = json::object();
    if (!b.edges.empty()) j["edges"] = b.edges;
    if (!b.predicted.empty()) j["predicted"] = b.predicted;
    if (!b.observed.empty()) {
        json obs = json::array();
        for (size_t i = 0; i < b.observed.size(); ++i)
            obs.push_back(b.defined[i] ? json(b.observed[i]) : json(nullptr));
        j["observed"] = obs;
    }
    if (!b.count.empty()) j["count"] = b.count;
    if (!b.mass.empty()) j["mass"] = b.mass;
}

inline void to_json(json& j, const KmStratumCurve& k) {
    j = json{{"label", k.label}, {"count", k.count}, {"curve", k.curve}};
}

inline void to_json(json& j, const EvalReport& r) {
    j = json{{"c_index", {{"median", r.c_index_median}, {"lo", r.c_index_lo}, {"hi", r.c_index_hi}}},
             {"bootstrap_dropped", r.bootstrap_dropped},
             {"subgroup_c_index", r.subgroup_c_index},
             {"one_calibration", r.one_cal},
             {"d_calibration", r.d_cal},
             {"km_strata", r.km_strata}};
}

}  // namespace pucox
