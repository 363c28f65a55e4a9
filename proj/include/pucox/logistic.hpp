#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

namespace pucox {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// log(1 + exp(x)) without overflow
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

struct LogisticFit {
    Eigen::VectorXd weights;
    double intercept = 0.0;
    int n_iter = 0;
};

// Penalized objective: sum_i [softplus(eta_i) - y_i * eta_i] + (l2/2)||w||^2,
// intercept unpenalized. l2_strength = 1 corresponds to unit inverse
// regularization in the usual C parameterization.
inline double logistic_objective(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, double b, double l2) {
    Eigen::VectorXd eta = X * w;
    double f = 0;
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
        double e = eta[i] + b;
        f += softplus(e) - y[i] * e;
    }
    return f + 0.5 * l2 * w.squaredNorm();
}

// Damped Newton (IRLS): solve the (d+1)-dim system on [w; b] each step,
// halving the step until the objective decreases. Converged when the max
// absolute coefficient change drops below tol.
inline LogisticFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                                double l2_strength = 1.0, int max_iter = 100, double tol = 1e-8) {
    const Eigen::Index n = X.rows(), d = X.cols();
    if (y.size() != n) throw std::invalid_argument("fit_logistic: X/y size mismatch");
    if (!X.allFinite()) throw std::invalid_argument("fit_logistic: X has missing values");
    double ymean = y.mean();
    if (ymean <= 0.0 || ymean >= 1.0)
        throw std::invalid_argument("fit_logistic: y is constant");
    if (l2_strength < 0) throw std::invalid_argument("fit_logistic: negative l2_strength");

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = std::log(ymean / (1.0 - ymean));
    double obj = logistic_objective(X, y, w, b, l2_strength);
    double grad_norm = 0;

    for (int iter = 1; iter <= max_iter; ++iter) {
        Eigen::VectorXd eta = (X * w).array() + b;
        Eigen::VectorXd p(n), wt(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid(eta[i]);
            wt[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
        }
        Eigen::VectorXd resid = p - y;

        Eigen::VectorXd g(d + 1);
        g.head(d) = X.transpose() * resid + l2_strength * w;
        g[d] = resid.sum();
        grad_norm = g.lpNorm<Eigen::Infinity>();

        Eigen::MatrixXd H(d + 1, d + 1);
        Eigen::MatrixXd Xw = wt.asDiagonal() * X;
        H.topLeftCorner(d, d) = X.transpose() * Xw;
        H.topLeftCorner(d, d).diagonal().array() += l2_strength;
        Eigen::VectorXd xw_sum = Xw.colwise().sum();
        H.block(0, d, d, 1) = xw_sum;
        H.block(d, 0, 1, d) = xw_sum.transpose();
        H(d, d) = wt.sum();

        Eigen::VectorXd step = H.ldlt().solve(g);
        if (!step.allFinite()) throw std::runtime_error("fit_logistic: singular IRLS system");

        double scale = 1.0;
        Eigen::VectorXd w_new;
        double b_new = 0, obj_new = 0;
        bool improved = false;
        for (int half = 0; half < 30; ++half) {
            w_new = w - scale * step.head(d);
            b_new = b - scale * step[d];
            obj_new = logistic_objective(X, y, w_new, b_new, l2_strength);
            if (obj_new <= obj + 1e-12) {
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if (!improved) break;

        double delta = std::max((w_new - w).lpNorm<Eigen::Infinity>(), std::abs(b_new - b));
        w = w_new;
        b = b_new;
        obj = obj_new;
        if (delta < tol) return {std::move(w), b, iter};
    }
    throw std::runtime_error("fit_logistic: no convergence in " + std::to_string(max_iter) +
                             " iterations (last grad inf-norm " + std::to_string(grad_norm) + ")");
}

inline double logistic_predict(const LogisticFit& fit, const Eigen::VectorXd& row) {
    return sigmoid(fit.weights.dot(row) + fit.intercept);
}

}  // namespace pucox
