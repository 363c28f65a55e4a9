#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "pucox/rng.hpp"

namespace pucox {

using json = nlohmann::json;

struct SurvivalData {
    Eigen::MatrixXd X;
    std::vector<double> time;
    std::vector<uint8_t> event;
    std::vector<std::string> feature_names;

    size_t n() const { return time.size(); }
    size_t d() const { return size_t(X.cols()); }

    void validate() const {
        if (size_t(X.rows()) != time.size() || time.size() != event.size())
            throw std::invalid_argument("survival data: row counts disagree");
        if (feature_names.size() != size_t(X.cols()))
            throw std::invalid_argument("survival data: feature name count != columns");
        if (std::find(event.begin(), event.end(), uint8_t(1)) == event.end())
            throw std::invalid_argument("survival data: no events");
        if (!X.allFinite()) throw std::invalid_argument("survival data: non-finite features");
    }

    SurvivalData subset(const std::vector<size_t>& rows) const {
        SurvivalData out;
        out.feature_names = feature_names;
        out.X.resize(Eigen::Index(rows.size()), X.cols());
        out.time.reserve(rows.size());
        out.event.reserve(rows.size());
        for (size_t k = 0; k < rows.size(); ++k) {
            out.X.row(Eigen::Index(k)) = X.row(Eigen::Index(rows[k]));
            out.time.push_back(time[rows[k]]);
            out.event.push_back(event[rows[k]]);
        }
        return out;
    }
};

struct CoxFit {
    Eigen::VectorXd beta;
    double lambda = 0.0;
    std::vector<std::string> feature_names;
    bool converged = false;
    int n_iter = 0;

    int nnz() const {
        int k = 0;
        for (Eigen::Index j = 0; j < beta.size(); ++j)
            if (beta[j] != 0.0) ++k;
        return k;
    }
};

struct BaselineHazard {
    std::vector<double> event_times;       // sorted distinct
    std::vector<double> cumulative_hazard;  // nondecreasing, same length

    // right-continuous step evaluation; 0 before the first event time
    double at(double t) const {
        auto it = std::upper_bound(event_times.begin(), event_times.end(), t);
        if (it == event_times.begin()) return 0.0;
        return cumulative_hazard[size_t(it - event_times.begin()) - 1];
    }
};

struct LambdaPath {
    std::vector<double> grid;   // ascending
    std::vector<CoxFit> fits;   // aligned with grid
    std::vector<int> nnz;
};

// ---- Efron partial likelihood ----------------------------------------------

namespace coxdetail {

// tied-time blocks in ascending time order
struct Blocks {
    std::vector<int> order;        // sorted row index by ascending time
    std::vector<int> block_start;  // position of each block's first subject
    std::vector<int> block_events; // events per block
};

inline Blocks make_blocks(const std::vector<double>& time, const std::vector<uint8_t>& event) {
    Blocks b;
    const size_t n = time.size();
    b.order.resize(n);
    std::iota(b.order.begin(), b.order.end(), 0);
    std::sort(b.order.begin(), b.order.end(), [&](int a, int c) {
        if (time[size_t(a)] != time[size_t(c)]) return time[size_t(a)] < time[size_t(c)];
        return a < c;
    });
    for (size_t p = 0; p < n;) {
        double t = time[size_t(b.order[p])];
        int d = 0;
        size_t q = p;
        while (q < n && time[size_t(b.order[q])] == t) {
            d += event[size_t(b.order[q])];
            ++q;
        }
        b.block_start.push_back(int(p));
        b.block_events.push_back(d);
        p = q;
    }
    b.block_start.push_back(int(n));  // sentinel
    return b;
}

// Everything the solver needs at a given eta: the (unnormalized) negative
// Efron partial log-likelihood, and its first/second derivatives per subject.
struct EtaDerivs {
    double neg_loglik = 0.0;
    Eigen::VectorXd u;  // d pll / d eta_i
    Eigen::VectorXd w;  // -d^2 pll / d eta_i^2 (diagonal), clamped >= 0
};

inline EtaDerivs eta_derivatives(const Blocks& b, const std::vector<double>& /*time*/,
                                 const std::vector<uint8_t>& event, const Eigen::VectorXd& eta) {
    const size_t n = size_t(eta.size());
    const size_t n_blocks = b.block_start.size() - 1;
    Eigen::VectorXd r(n);
    for (size_t i = 0; i < n; ++i) {
        if (std::abs(eta[Eigen::Index(i)]) > 500.0)
            throw std::runtime_error(
                "cox partial likelihood: exp overflow in linear predictor; scale the features");
        r[Eigen::Index(i)] = std::exp(eta[Eigen::Index(i)]);
    }

    // descending pass: risk-set sums and per-block Efron terms
    std::vector<double> phi1(n_blocks, 0), phi2(n_blocks, 0), k1(n_blocks, 0), k2(n_blocks, 0);
    double value = 0.0;
    double suffix_r = 0.0;
    for (size_t blk = n_blocks; blk-- > 0;) {
        int p0 = b.block_start[blk], p1 = b.block_start[blk + 1];
        double block_r = 0, dead_r = 0, dead_eta = 0;
        for (int p = p0; p < p1; ++p) {
            int i = b.order[size_t(p)];
            block_r += r[i];
            if (event[size_t(i)]) {
                dead_r += r[i];
                dead_eta += eta[i];
            }
        }
        suffix_r += block_r;
        int d = b.block_events[blk];
        if (d == 0) continue;
        for (int l = 0; l < d; ++l) {
            double frac = double(l) / double(d);
            double phi = suffix_r - frac * dead_r;
            if (!(phi > 0) || !std::isfinite(phi))
                throw std::runtime_error(
                    "cox partial likelihood: degenerate risk-set sum; scale the features");
            value += std::log(phi);
            double inv = 1.0 / phi;
            phi1[blk] += inv;
            phi2[blk] += inv * inv;
            k1[blk] += frac * inv;
            k2[blk] += (2.0 * frac - frac * frac) * inv * inv;
        }
        value -= dead_eta;
    }

    // ascending pass: prefix phi sums give each subject's A and B
    EtaDerivs out;
    out.neg_loglik = value;
    out.u.resize(Eigen::Index(n));
    out.w.resize(Eigen::Index(n));
    double prefix1 = 0, prefix2 = 0;
    for (size_t blk = 0; blk < n_blocks; ++blk) {
        prefix1 += phi1[blk];
        prefix2 += phi2[blk];
        int p0 = b.block_start[blk], p1 = b.block_start[blk + 1];
        for (int p = p0; p < p1; ++p) {
            int i = b.order[size_t(p)];
            bool ev = event[size_t(i)] != 0;
            double A = prefix1 - (ev ? k1[blk] : 0.0);
            double B = prefix2 - (ev ? k2[blk] : 0.0);
            double ui = (ev ? 1.0 : 0.0) - r[i] * A;
            double wi = r[i] * A - r[i] * r[i] * B;
            out.u[i] = ui;
            out.w[i] = std::max(wi, 0.0);
        }
    }
    return out;
}

}  // namespace coxdetail

// Negative Efron partial log-likelihood (unnormalized) and its exact
// gradient with respect to beta.
inline std::pair<double, Eigen::VectorXd> cox_neg_partial_loglik(const Eigen::VectorXd& beta,
                                                                 const SurvivalData& data) {
    data.validate();
    if (beta.size() != data.X.cols())
        throw std::invalid_argument("cox_neg_partial_loglik: beta/X dimension mismatch");
    auto blocks = coxdetail::make_blocks(data.time, data.event);
    Eigen::VectorXd eta = data.X * beta;
    auto derivs = coxdetail::eta_derivatives(blocks, data.time, data.event, eta);
    return {derivs.neg_loglik, -(data.X.transpose() * derivs.u)};
}

// max |gradient at beta = 0| / n: the smallest penalty that kills every
// coefficient
inline double lambda_max(const SurvivalData& data) {
    auto [val, grad] = cox_neg_partial_loglik(Eigen::VectorXd::Zero(data.X.cols()), data);
    (void)val;
    return grad.lpNorm<Eigen::Infinity>() / double(data.n());
}

inline double soft_threshold(double x, double t) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
}

// Lasso-Cox: minimize neg_partial_loglik/n + lambda * ||beta||_1 by cyclic
// coordinate descent on the local quadratic approximation (proximal Newton
// with step halving so the penalized objective never increases). Converged
// when the max coefficient change over an outer iteration < tol;
// non-convergence returns converged = false.
inline CoxFit fit_lasso_cox(const SurvivalData& data, double lambda,
                            const std::optional<Eigen::VectorXd>& warm_start = std::nullopt,
                            int max_iter = 10000, double tol = 1e-7,
                            std::vector<double>* objective_trace = nullptr) {
    data.validate();
    if (lambda < 0) throw std::invalid_argument("fit_lasso_cox: negative lambda");
    const Eigen::Index n = Eigen::Index(data.n()), d = data.X.cols();
    const double inv_n = 1.0 / double(n);

    Eigen::VectorXd beta = warm_start ? *warm_start : Eigen::VectorXd::Zero(d);
    if (beta.size() != d) throw std::invalid_argument("fit_lasso_cox: warm start wrong size");

    auto blocks = coxdetail::make_blocks(data.time, data.event);
    auto penalized = [&](const Eigen::VectorXd& b, double& negll_out) {
        Eigen::VectorXd eta = data.X * b;
        auto derivs = coxdetail::eta_derivatives(blocks, data.time, data.event, eta);
        negll_out = derivs.neg_loglik;
        return derivs.neg_loglik * inv_n + lambda * b.lpNorm<1>();
    };

    double negll;
    double obj = penalized(beta, negll);
    if (objective_trace) objective_trace->push_back(obj);

    CoxFit fit;
    fit.lambda = lambda;
    fit.feature_names = data.feature_names;

    const int max_inner_sweeps = 1000;
    for (int outer = 1; outer <= max_iter; ++outer) {
        Eigen::VectorXd eta = data.X * beta;
        auto derivs = coxdetail::eta_derivatives(blocks, data.time, data.event, eta);
        Eigen::VectorXd w = derivs.w.cwiseMax(1e-9);
        // working residual of the quadratic model: r = z - eta = u ./ w
        Eigen::VectorXd resid = derivs.u.cwiseQuotient(w);

        Eigen::VectorXd col_curv(d);  // (1/n) sum_i w_i x_ij^2
        for (Eigen::Index j = 0; j < d; ++j)
            col_curv[j] = inv_n * data.X.col(j).cwiseAbs2().dot(w);

        // cyclic CD on the quadratic model, active-set style
        Eigen::VectorXd beta_new = beta;
        auto update_coord = [&](Eigen::Index j) {
            if (col_curv[j] < 1e-12) {
                if (beta_new[j] != 0.0) {
                    resid += data.X.col(j) * beta_new[j];
                    beta_new[j] = 0.0;
                }
                return 0.0;
            }
            double num = inv_n * data.X.col(j).dot(w.cwiseProduct(resid)) +
                         col_curv[j] * beta_new[j];
            double bj = soft_threshold(num, lambda) / col_curv[j];
            double delta = bj - beta_new[j];
            if (delta != 0.0) {
                resid -= data.X.col(j) * delta;
                beta_new[j] = bj;
            }
            return std::abs(delta);
        };

        for (int sweep = 0; sweep < max_inner_sweeps; ++sweep) {
            double max_delta = 0.0;
            for (Eigen::Index j = 0; j < d; ++j) max_delta = std::max(max_delta, update_coord(j));
            if (max_delta < tol) break;
            // iterate the active set until stable, then re-check all
            for (int as = 0; as < max_inner_sweeps; ++as) {
                double md = 0.0;
                for (Eigen::Index j = 0; j < d; ++j)
                    if (beta_new[j] != 0.0) md = std::max(md, update_coord(j));
                if (md < tol) break;
            }
        }

        // step halving keeps the true penalized objective nonincreasing
        Eigen::VectorXd direction = beta_new - beta;
        double step = 1.0;
        double obj_new = obj;
        Eigen::VectorXd cand = beta_new;
        for (int half = 0; half < 40; ++half) {
            cand = beta + step * direction;
            double nll;
            obj_new = penalized(cand, nll);
            if (obj_new <= obj + 1e-14) break;
            step *= 0.5;
        }
        if (obj_new > obj + 1e-14) cand = beta;  // no usable step

        double change = (cand - beta).lpNorm<Eigen::Infinity>();
        beta = cand;
        obj = std::min(obj, obj_new);
        if (objective_trace) objective_trace->push_back(obj);
        fit.n_iter = outer;
        if (change < tol) {
            fit.converged = true;
            break;
        }
    }
    fit.beta = beta;
    // snap tiny survivors of step halving back to exact zero
    for (Eigen::Index j = 0; j < d; ++j)
        if (std::abs(fit.beta[j]) < 1e-12) fit.beta[j] = 0.0;
    return fit;
}

// KKT residual of negloglik/n + lambda * ||.||_1 at beta; the largest
// violation over coordinates. Zero coordinates must satisfy |g_j| <= lambda,
// active ones g_j + lambda * sign(beta_j) = 0.
inline double kkt_residual(const CoxFit& fit, const SurvivalData& data) {
    auto [val, grad] = cox_neg_partial_loglik(fit.beta, data);
    (void)val;
    grad /= double(data.n());
    double worst = 0.0;
    for (Eigen::Index j = 0; j < grad.size(); ++j) {
        double viol = fit.beta[j] == 0.0
                          ? std::max(0.0, std::abs(grad[j]) - fit.lambda)
                          : std::abs(grad[j] + fit.lambda * (fit.beta[j] > 0 ? 1.0 : -1.0));
        worst = std::max(worst, viol);
    }
    return worst;
}

constexpr double kKktTol = 1e-5;

// Fit the whole grid, largest penalty first with warm starts; fits are
// returned aligned with the ascending grid.
inline LambdaPath lambda_path(const SurvivalData& data, const std::vector<double>& grid,
                              int max_iter = 10000, double tol = 1e-7) {
    if (grid.empty()) throw std::invalid_argument("lambda_path: empty grid");
    if (!std::is_sorted(grid.begin(), grid.end()))
        throw std::invalid_argument("lambda_path: grid must be ascending");
    LambdaPath path;
    path.grid = grid;
    path.fits.resize(grid.size());
    path.nnz.resize(grid.size());
    std::optional<Eigen::VectorXd> warm;
    for (size_t k = grid.size(); k-- > 0;) {
        try {
            path.fits[k] = fit_lasso_cox(data, grid[k], warm, max_iter, tol);
        } catch (const std::exception& e) {
            throw std::runtime_error("lambda_path: fit at lambda=" + std::to_string(grid[k]) +
                                     " failed: " + e.what());
        }
        warm = path.fits[k].beta;
        path.nnz[k] = path.fits[k].nnz();
    }
    return path;
}

inline std::vector<double> default_lambda_grid(double start = 0.0, double stop = 0.2,
                                               double step = 0.001) {
    std::vector<double> grid;
    int count = int(std::llround((stop - start) / step)) + 1;
    for (int i = 0; i < count; ++i) grid.push_back(start + step * i);
    return grid;
}

// Mean held-out partial log-likelihood over k seeded folds; ties go to the
// larger (sparser) penalty. A fold that draws zero events triggers one
// redraw, then an error.
inline double select_lambda_cv(const SurvivalData& data, const std::vector<double>& grid,
                               int k = 5, uint64_t seed = 0, int max_iter = 10000,
                               double tol = 1e-7) {
    if (k < 2) throw std::invalid_argument("select_lambda_cv: k must be >= 2");
    data.validate();
    const size_t n = data.n();

    auto draw_folds = [&](uint64_t attempt) {
        std::vector<size_t> idx(n);
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng = Rng::stream(seed, 0x5EEDFULL, attempt);
        rng.shuffle(idx);
        std::vector<std::vector<size_t>> folds;
        folds.resize(size_t(k));
        for (size_t i = 0; i < n; ++i) folds[i % size_t(k)].push_back(idx[i]);
        return folds;
    };
    auto folds_ok = [&](const std::vector<std::vector<size_t>>& folds) {
        for (const auto& f : folds) {
            size_t ev = 0;
            for (size_t i : f) ev += data.event[i];
            if (ev == 0) return false;
        }
        return true;
    };

    auto folds = draw_folds(0);
    if (!folds_ok(folds)) {
        folds = draw_folds(1);
        if (!folds_ok(folds))
            throw std::runtime_error("select_lambda_cv: a fold has zero events after redraw");
    }

    std::vector<double> mean_heldout(grid.size(), 0.0);
    for (int f = 0; f < k; ++f) {
        std::vector<size_t> train_rows;
        for (int g = 0; g < k; ++g)
            if (g != f) train_rows.insert(train_rows.end(), folds[size_t(g)].begin(),
                                          folds[size_t(g)].end());
        std::sort(train_rows.begin(), train_rows.end());
        std::vector<size_t> test_rows = folds[size_t(f)];
        std::sort(test_rows.begin(), test_rows.end());

        SurvivalData train = data.subset(train_rows);
        SurvivalData test = data.subset(test_rows);
        LambdaPath path = lambda_path(train, grid, max_iter, tol);
        for (size_t g = 0; g < grid.size(); ++g) {
            auto [negll, grad] = cox_neg_partial_loglik(path.fits[g].beta, test);
            (void)grad;
            mean_heldout[g] += -negll / double(k);
        }
    }

    size_t best = 0;
    for (size_t g = 1; g < grid.size(); ++g)
        if (mean_heldout[g] >= mean_heldout[best]) best = g;  // ascending grid: >= prefers larger
    return grid[best];
}

// Penalty whose fit's support size is closest to target_nnz; ties go to the
// larger penalty.
inline double select_lambda_sparsity(const LambdaPath& path, int target_nnz = 10) {
    if (path.grid.empty()) throw std::invalid_argument("select_lambda_sparsity: empty path");
    size_t best = 0;
    int best_diff = std::abs(path.nnz[0] - target_nnz);
    for (size_t g = 1; g < path.grid.size(); ++g) {
        int diff = std::abs(path.nnz[g] - target_nnz);
        if (diff <= best_diff) {
            best = g;
            best_diff = diff;
        }
    }
    return path.grid[best];
}

// Breslow estimator of the baseline cumulative hazard: increments
// d_t / sum_{risk set} exp(x beta) at each distinct event time.
inline BaselineHazard breslow_baseline(const CoxFit& fit, const SurvivalData& data) {
    data.validate();
    if (fit.beta.size() != data.X.cols())
        throw std::invalid_argument("breslow_baseline: fit/data feature mismatch");
    auto blocks = coxdetail::make_blocks(data.time, data.event);
    Eigen::VectorXd eta = data.X * fit.beta;
    Eigen::VectorXd r = eta.array().exp();

    const size_t n_blocks = blocks.block_start.size() - 1;
    std::vector<double> s0(n_blocks, 0.0);
    double suffix = 0.0;
    for (size_t blk = n_blocks; blk-- > 0;) {
        for (int p = blocks.block_start[blk]; p < blocks.block_start[blk + 1]; ++p)
            suffix += r[blocks.order[size_t(p)]];
        s0[blk] = suffix;
    }
    BaselineHazard h;
    double cum = 0.0;
    for (size_t blk = 0; blk < n_blocks; ++blk) {
        int dcount = blocks.block_events[blk];
        if (dcount == 0) continue;
        cum += double(dcount) / s0[blk];
        h.event_times.push_back(data.time[size_t(blocks.order[size_t(blocks.block_start[blk])])]);
        h.cumulative_hazard.push_back(cum);
    }
    return h;
}

inline double predict_risk(const CoxFit& fit, const Eigen::VectorXd& row) {
    if (row.size() != fit.beta.size())
        throw std::invalid_argument("predict_risk: row/beta dimension mismatch");
    return fit.beta.dot(row);
}

inline double predict_survival(const CoxFit& fit, const BaselineHazard& baseline,
                               const Eigen::VectorXd& row, double t) {
    if (t < 0) throw std::invalid_argument("predict_survival: negative time");
    return std::exp(-baseline.at(t) * std::exp(predict_risk(fit, row)));
}

// ---- JSON ------------------------------------------------------------------

inline void to_json(json& j, const CoxFit& f) {
    std::vector<double> beta(f.beta.data(), f.beta.data() + f.beta.size());
    j = json{{"beta", beta},
             {"lambda", f.lambda},
             {"feature_names", f.feature_names},
             {"converged", f.converged},
             {"n_iter", f.n_iter}};
}

inline void from_json(const json& j, CoxFit& f) {
    auto beta = j.at("beta").get<std::vector<double>>();
    f.beta = Eigen::Map<Eigen::VectorXd>(beta.data(), Eigen::Index(beta.size()));
    f.lambda = j.at("lambda").get<double>();
    f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    f.converged = j.at("converged").get<bool>();
    f.n_iter = j.at("n_iter").get<int>();
}

inline void to_json(json& j, const BaselineHazard& h) {
    j = json{{"event_times", h.event_times}, {"cumulative_hazard", h.cumulative_hazard}};
}

inline void from_json(const json& j, BaselineHazard& h) {
    h.event_times = j.at("event_times").get<std::vector<double>>();
    h.cumulative_hazard = j.at("cumulative_hazard").get<std::vector<double>>();
}

}  // namespace pucox
