#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "fetalfit/rng.hpp"

namespace fetalfit {

enum class Task { classification, regression };

inline const char* to_string(Task t) {
    return t == Task::classification ? "classification" : "regression";
}

inline Task parse_task(const std::string& s) {
    if (s == "classification") return Task::classification;
    if (s == "regression") return Task::regression;
    throw std::invalid_argument("unknown task: " + s);
}

/// Class labels follow the decision-boundary convention: control = 1,
/// FGR = 0 (probability >= 0.5 reads as a non-FGR call). Evaluation metrics
/// nonetheless treat FGR as the positive class.
inline constexpr int kControlLabel = 1;
inline constexpr int kFgrLabel = 0;

struct TrainConfig {
    double strength = 0.001;  // C for classification, alpha for regression
    double l1_ratio = 0.0;
    int folds = 5;
    std::uint64_t seed = 0x5eedULL;
    double test_fraction = 0.2;
    int max_iterations = 200000;
    double tol = 1e-10;       // max coefficient change (coordinate descent)
    double grad_tol = 1e-8;   // gradient norm (logistic)

    void validate() const {
        if (!(strength > 0.0)) throw std::invalid_argument("train config: strength must be > 0");
        if (l1_ratio < 0.0 || l1_ratio > 1.0)
            throw std::invalid_argument("train config: l1_ratio must be in [0, 1]");
        if (folds < 2) throw std::invalid_argument("train config: folds must be >= 2");
        if (!(test_fraction > 0.0 && test_fraction < 1.0))
            throw std::invalid_argument("train config: test_fraction must be in (0, 1)");
    }
};

struct LinearModel {
    Task task = Task::classification;
    std::vector<std::string> feature_names;
    Eigen::VectorXd weights;
    double intercept = 0.0;
    Eigen::VectorXd center, scale;  // per-feature standardisation from training data
    double strength = 0.0;
    double l1_ratio = 0.0;
};

struct EvalReport {
    std::optional<double> accuracy, sensitivity, specificity;
    std::optional<double> rmse;
    int tp = 0, tn = 0, fp = 0, fn = 0;  // FGR positive
};

namespace mldetail {

inline void check_matrix(const Eigen::MatrixXd& x) {
    if (!x.allFinite())
        throw std::invalid_argument("ml: feature matrix has non-finite values");
}

struct Standardized {
    Eigen::MatrixXd x;
    Eigen::VectorXd center, scale;
};

inline Standardized standardize(const Eigen::MatrixXd& x) {
    Standardized s;
    const auto n = static_cast<double>(x.rows());
    s.center = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - s.center.transpose();
    s.scale = (centered.array().square().colwise().sum() / n).sqrt();
    for (Eigen::Index j = 0; j < s.scale.size(); ++j)
        if (s.scale[j] <= 0.0) s.scale[j] = 1.0;  // constant column
    s.x = centered.array().rowwise() / s.scale.transpose().array();
    return s;
}

inline double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + e^z) without overflow
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

/// Mean cross-entropy plus elastic-net penalty of strength 1/C. The mean (not
/// sum) keeps the objective invariant under duplicating every subject.
inline double logistic_objective(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w, double b, double inv_c,
                                 double l1_ratio) {
    const Eigen::VectorXd z = x * w + Eigen::VectorXd::Constant(x.rows(), b);
    double ce = 0.0;
    for (Eigen::Index i = 0; i < z.size(); ++i) ce += softplus(z[i]) - y[i] * z[i];
    ce /= static_cast<double>(x.rows());
    return ce + inv_c * (l1_ratio * w.lpNorm<1>() + 0.5 * (1.0 - l1_ratio) * w.squaredNorm());
}

/// Damped Newton for the smooth (pure-L2) case; x may be the reduced design.
/// Returns (w, b); stops when the full gradient norm < grad_tol.
inline std::pair<Eigen::VectorXd, double> logistic_newton(const Eigen::MatrixXd& x,
                                                          const Eigen::VectorXd& y, double inv_c,
                                                          double grad_tol, int max_iter) {
    const Eigen::Index n = x.rows(), d = x.cols();
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    double b = 0.0;
    double obj = logistic_objective(x, y, w, b, inv_c, 0.0);
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd z = x * w + Eigen::VectorXd::Constant(n, b);
        Eigen::VectorXd p(n), dgn(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid(z[i]);
            dgn[i] = std::max(p[i] * (1.0 - p[i]), 1e-12);
        }
        const Eigen::VectorXd resid = (p - y) / static_cast<double>(n);
        Eigen::VectorXd gw = x.transpose() * resid + inv_c * w;
        const double gb = resid.sum();
        const double gnorm = std::sqrt(gw.squaredNorm() + gb * gb);
        if (gnorm < grad_tol) break;

        Eigen::MatrixXd h(d + 1, d + 1);
        const Eigen::MatrixXd xd = x.transpose() * dgn.asDiagonal();
        h.topLeftCorner(d, d) = (xd * x) / static_cast<double>(n);
        h.topLeftCorner(d, d).diagonal().array() += inv_c;
        h.topRightCorner(d, 1) = (xd * Eigen::VectorXd::Ones(n)) / static_cast<double>(n);
        h.bottomLeftCorner(1, d) = h.topRightCorner(d, 1).transpose();
        h(d, d) = dgn.sum() / static_cast<double>(n) + 1e-12;

        Eigen::VectorXd g(d + 1);
        g.head(d) = gw;
        g[d] = gb;
        Eigen::VectorXd step = h.ldlt().solve(-g);

        double t = 1.0;
        for (int ls = 0; ls < 60; ++ls) {
            const Eigen::VectorXd w_try = w + t * step.head(d);
            const double b_try = b + t * step[d];
            const double obj_try = logistic_objective(x, y, w_try, b_try, inv_c, 0.0);
            if (obj_try < obj) {
                w = w_try;
                b = b_try;
                obj = obj_try;
                break;
            }
            t *= 0.5;
        }
    }
    return {w, b};
}

/// Proximal gradient (ISTA with monotone FISTA acceleration) for the
/// L1-bearing case. Deterministic; stops on the composite gradient map norm.
inline std::pair<Eigen::VectorXd, double> logistic_prox(const Eigen::MatrixXd& x,
                                                        const Eigen::VectorXd& y, double inv_c,
                                                        double l1_ratio, double grad_tol,
                                                        int max_iter) {
    const Eigen::Index n = x.rows(), d = x.cols();
    // Lipschitz bound: ||X||_2^2 / (4n) + (1-l1) / C, via power iteration.
    Eigen::VectorXd v = Eigen::VectorXd::Ones(d).normalized();
    double s_max = 1.0;
    for (int it = 0; it < 100; ++it) {
        v = x.transpose() * (x * v);
        s_max = v.norm();
        if (s_max <= 0.0) break;
        v /= s_max;
    }
    const double lips = s_max / (4.0 * n) + inv_c * (1.0 - l1_ratio) + 0.25;
    const double thresh = inv_c * l1_ratio / lips;

    Eigen::VectorXd w = Eigen::VectorXd::Zero(d), w_prev = w, yw = w;
    double b = 0.0, b_prev = 0.0, yb = 0.0, t_mom = 1.0;
    double best_obj = logistic_objective(x, y, w, b, inv_c, l1_ratio);
    for (int iter = 0; iter < max_iter; ++iter) {
        const Eigen::VectorXd z = x * yw + Eigen::VectorXd::Constant(n, yb);
        Eigen::VectorXd p(n);
        for (Eigen::Index i = 0; i < n; ++i) p[i] = sigmoid(z[i]);
        const Eigen::VectorXd resid = (p - y) / static_cast<double>(n);
        const Eigen::VectorXd gw = x.transpose() * resid + inv_c * (1.0 - l1_ratio) * yw;
        const double gb = resid.sum();

        Eigen::VectorXd w_new = yw - gw / lips;
        for (Eigen::Index j = 0; j < d; ++j)
            w_new[j] = std::copysign(std::max(std::fabs(w_new[j]) - thresh, 0.0), w_new[j]);
        const double b_new = yb - gb / lips;

        const double obj_new = logistic_objective(x, y, w_new, b_new, inv_c, l1_ratio);
        const double move = std::sqrt((w_new - w).squaredNorm() + (b_new - b) * (b_new - b));
        if (obj_new > best_obj) {
            // momentum overshoot: restart from the best point
            yw = w;
            yb = b;
            t_mom = 1.0;
            continue;
        }
        best_obj = obj_new;
        w_prev = w;
        b_prev = b;
        w = w_new;
        b = b_new;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_mom * t_mom));
        const double beta = (t_mom - 1.0) / t_next;
        yw = w + beta * (w - w_prev);
        yb = b + beta * (b - b_prev);
        t_mom = t_next;
        if (move * lips < grad_tol) break;
    }
    return {w, b};
}

inline Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, std::span<const int> cols) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) out.col(static_cast<Eigen::Index>(j)) = x.col(cols[j]);
    return out;
}

}  // namespace mldetail

/// Elastic-net logistic regression: minimises mean cross-entropy plus a
/// penalty of strength 1/C mixed by l1_ratio, on internally standardised
/// features. Deterministic (no stochastic solver).
inline LinearModel train_logistic(const Eigen::MatrixXd& x, std::span<const int> y,
                                  const TrainConfig& config,
                                  std::vector<std::string> feature_names = {}) {
    config.validate();
    mldetail::check_matrix(x);
    if (x.rows() != static_cast<Eigen::Index>(y.size()))
        throw std::invalid_argument("train_logistic: label count mismatch");
    int pos = 0, neg = 0;
    for (int v : y) (v == kControlLabel ? pos : neg)++;
    if (pos < 2 || neg < 2)
        throw std::invalid_argument("train_logistic: needs >= 2 subjects per class");

    auto std_x = mldetail::standardize(x);
    Eigen::VectorXd yv(x.rows());
    for (Eigen::Index i = 0; i < yv.size(); ++i) yv[i] = y[i];
    const double inv_c = 1.0 / config.strength;

    Eigen::VectorXd w;
    double b;
    if (config.l1_ratio == 0.0 && x.cols() > x.rows()) {
        // Reduce to the row space: with a pure ridge penalty the optimum lies
        // there, so Newton runs in n dimensions instead of d.
        const Eigen::Index n = x.rows();
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(std_x.x.transpose());
        Eigen::MatrixXd thin_q = qr.householderQ() * Eigen::MatrixXd::Identity(x.cols(), n);
        Eigen::MatrixXd r = qr.matrixQR().topRows(n).triangularView<Eigen::Upper>();
        auto [v, b0] = mldetail::logistic_newton(r.transpose(), yv, inv_c, config.grad_tol,
                                                 200);
        w = thin_q * v;
        b = b0;
    } else if (config.l1_ratio == 0.0) {
        auto [w0, b0] =
            mldetail::logistic_newton(std_x.x, yv, inv_c, config.grad_tol, 200);
        w = w0;
        b = b0;
    } else {
        auto [w0, b0] = mldetail::logistic_prox(std_x.x, yv, inv_c, config.l1_ratio,
                                                config.grad_tol, config.max_iterations);
        w = w0;
        b = b0;
    }

    LinearModel model;
    model.task = Task::classification;
    model.feature_names = std::move(feature_names);
    model.weights = w;
    model.intercept = b;
    model.center = std_x.center;
    model.scale = std_x.scale;
    model.strength = config.strength;
    model.l1_ratio = config.l1_ratio;
    return model;
}

struct Prediction {
    double probability;  // of the control class (label 1)
    int label;
};

inline Prediction predict_logistic(const LinearModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.weights.size())
        throw std::invalid_argument("predict_logistic: feature length mismatch");
    const Eigen::VectorXd xs = (x - model.center).array() / model.scale.array();
    const double p = mldetail::sigmoid(model.weights.dot(xs) + model.intercept);
    return {p, p >= 0.5 ? kControlLabel : kFgrLabel};
}

/// Elastic-net least squares via cyclic coordinate descent on standardised
/// features and centred target: (1/2n)||y - Xw - b||^2 + alpha (l1 |w| + (1-l1)/2 |w|^2).
inline LinearModel train_linear(const Eigen::MatrixXd& x, std::span<const double> y,
                                const TrainConfig& config,
                                std::vector<std::string> feature_names = {}) {
    config.validate();
    mldetail::check_matrix(x);
    if (x.rows() != static_cast<Eigen::Index>(y.size()))
        throw std::invalid_argument("train_linear: target count mismatch");
    if (x.rows() < 2) throw std::invalid_argument("train_linear: needs >= 2 subjects");
    for (double v : y)
        if (!std::isfinite(v)) throw std::invalid_argument("train_linear: non-finite target");

    auto std_x = mldetail::standardize(x);
    const Eigen::Index n = x.rows(), d = x.cols();
    Eigen::VectorXd yv(n);
    for (Eigen::Index i = 0; i < n; ++i) yv[i] = y[i];
    const double y_mean = yv.mean();
    yv.array() -= y_mean;

    const double alpha = config.strength, l1 = config.l1_ratio;
    Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd resid = yv;  // y - Xw with w = 0
    Eigen::VectorXd col_sq(d);
    for (Eigen::Index j = 0; j < d; ++j)
        col_sq[j] = std_x.x.col(j).squaredNorm() / static_cast<double>(n);

    const int max_sweeps = std::max(1, config.max_iterations / std::max<int>(1, d));
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double max_delta = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const double denom = col_sq[j] + alpha * (1.0 - l1);
            if (denom <= 0.0) continue;
            const double rho =
                (std_x.x.col(j).dot(resid)) / static_cast<double>(n) + col_sq[j] * w[j];
            const double w_new =
                std::copysign(std::max(std::fabs(rho) - alpha * l1, 0.0), rho) / denom;
            if (w_new != w[j]) {
                resid += std_x.x.col(j) * (w[j] - w_new);
                max_delta = std::max(max_delta, std::fabs(w_new - w[j]));
                w[j] = w_new;
            }
        }
        if (max_delta < config.tol) break;
    }

    LinearModel model;
    model.task = Task::regression;
    model.feature_names = std::move(feature_names);
    model.weights = w;
    model.intercept = y_mean;
    model.center = std_x.center;
    model.scale = std_x.scale;
    model.strength = config.strength;
    model.l1_ratio = config.l1_ratio;
    return model;
}

inline double predict_linear(const LinearModel& model, const Eigen::VectorXd& x) {
    if (x.size() != model.weights.size())
        throw std::invalid_argument("predict_linear: feature length mismatch");
    const Eigen::VectorXd xs = (x - model.center).array() / model.scale.array();
    return model.weights.dot(xs) + model.intercept;
}

/// Deterministic fold assignment: stratified round-robin after a seeded
/// shuffle for classification, plain shuffled round-robin for regression.
inline std::vector<int> kfold_assignment(std::span<const int> y, Task task,
                                         const TrainConfig& config) {
    const std::size_t n = y.size();
    std::vector<int> fold(n, -1);
    Rng rng(derive_seed(config.seed, 101));
    if (task == Task::classification) {
        for (int cls : {kControlLabel, kFgrLabel}) {
            std::vector<std::size_t> idx;
            for (std::size_t i = 0; i < n; ++i)
                if (y[i] == cls) idx.push_back(i);
            if (idx.size() < static_cast<std::size_t>(config.folds))
                throw std::invalid_argument("kfold: stratification infeasible");
            rng.shuffle(std::span<std::size_t>(idx));
            for (std::size_t k = 0; k < idx.size(); ++k)
                fold[idx[k]] = static_cast<int>(k % config.folds);
        }
    } else {
        if (n < static_cast<std::size_t>(config.folds) + 1)
            throw std::invalid_argument("kfold: needs more subjects than folds");
        std::vector<std::size_t> idx(n);
        for (std::size_t i = 0; i < n; ++i) idx[i] = i;
        rng.shuffle(std::span<std::size_t>(idx));
        for (std::size_t k = 0; k < n; ++k) fold[idx[k]] = static_cast<int>(k % config.folds);
    }
    return fold;
}

struct CvResult {
    std::vector<double> fold_scores;  // accuracy or rmse per fold
    double mean = 0.0;
    double stdev = 0.0;  // population stdev across folds
};

inline CvResult summarize_folds(std::vector<double> scores) {
    CvResult r;
    r.fold_scores = std::move(scores);
    for (double s : r.fold_scores) r.mean += s;
    r.mean /= static_cast<double>(r.fold_scores.size());
    for (double s : r.fold_scores) r.stdev += (s - r.mean) * (s - r.mean);
    r.stdev = std::sqrt(r.stdev / static_cast<double>(r.fold_scores.size()));
    return r;
}

/// K-fold cross-validation; y carries labels for classification and is
/// ignored for regression (targets used instead). Metric: accuracy
/// (classification) or RMSE (regression).
inline CvResult kfold_cv(const Eigen::MatrixXd& x, std::span<const int> labels,
                         std::span<const double> targets, Task task,
                         const TrainConfig& config) {
    const auto fold = kfold_assignment(labels, task, config);
    std::vector<double> scores;
    for (int k = 0; k < config.folds; ++k) {
        std::vector<int> train_idx, test_idx;
        for (std::size_t i = 0; i < fold.size(); ++i)
            (fold[i] == k ? test_idx : train_idx).push_back(static_cast<int>(i));
        if (test_idx.empty()) continue;
        Eigen::MatrixXd x_train(train_idx.size(), x.cols()), x_test(test_idx.size(), x.cols());
        for (std::size_t i = 0; i < train_idx.size(); ++i) x_train.row(i) = x.row(train_idx[i]);
        for (std::size_t i = 0; i < test_idx.size(); ++i) x_test.row(i) = x.row(test_idx[i]);

        if (task == Task::classification) {
            std::vector<int> y_train;
            for (int i : train_idx) y_train.push_back(labels[i]);
            auto model = train_logistic(x_train, y_train, config);
            int correct = 0;
            for (std::size_t i = 0; i < test_idx.size(); ++i)
                correct += predict_logistic(model, x_test.row(i).transpose()).label ==
                           labels[test_idx[i]];
            scores.push_back(static_cast<double>(correct) /
                             static_cast<double>(test_idx.size()));
        } else {
            std::vector<double> y_train;
            for (int i : train_idx) y_train.push_back(targets[i]);
            auto model = train_linear(x_train, y_train, config);
            double se = 0.0;
            for (std::size_t i = 0; i < test_idx.size(); ++i) {
                const double e =
                    predict_linear(model, x_test.row(i).transpose()) - targets[test_idx[i]];
                se += e * e;
            }
            scores.push_back(std::sqrt(se / static_cast<double>(test_idx.size())));
        }
    }
    return summarize_folds(std::move(scores));
}

struct RfecvResult {
    std::vector<int> selected;           // column indices, ascending
    std::vector<int> elimination_order;  // first-dropped first
    std::vector<double> cv_curve;        // cv_curve[k-1] = mean score with k features
    int best_count = 0;
};

/// Recursive feature elimination with cross-validation: drops the
/// smallest-|weight| feature one per round (weights live on standardised
/// features, so they are directly comparable), records the CV score per
/// feature count, and keeps the count maximising it (ties -> fewer).
/// Scores: accuracy for classification, negative RMSE for regression.
inline RfecvResult rfecv(const Eigen::MatrixXd& x, std::span<const int> labels,
                         std::span<const double> targets, Task task,
                         const TrainConfig& config) {
    const int d0 = static_cast<int>(x.cols());
    if (d0 < 1) throw std::invalid_argument("rfecv: needs at least one feature");
    std::vector<int> active(d0);
    for (int j = 0; j < d0; ++j) active[j] = j;

    RfecvResult result;
    result.cv_curve.assign(d0, -std::numeric_limits<double>::infinity());
    std::vector<std::vector<int>> active_at_count(d0 + 1);

    while (!active.empty()) {
        const int count = static_cast<int>(active.size());
        Eigen::MatrixXd sub = mldetail::select_columns(x, active);
        auto cv = kfold_cv(sub, labels, targets, task, config);
        result.cv_curve[count - 1] = task == Task::classification ? cv.mean : -cv.mean;
        active_at_count[count] = active;
        if (count == 1) break;

        Eigen::VectorXd w;
        if (task == Task::classification) {
            std::vector<int> yl(labels.begin(), labels.end());
            w = train_logistic(sub, yl, config).weights;
        } else {
            std::vector<double> yt(targets.begin(), targets.end());
            w = train_linear(sub, yt, config).weights;
        }
        int drop = 0;
        for (int j = 1; j < count; ++j)
            if (std::fabs(w[j]) < std::fabs(w[drop])) drop = j;
        result.elimination_order.push_back(active[drop]);
        active.erase(active.begin() + drop);
    }

    int best = 1;
    for (int k = 2; k <= d0; ++k)
        if (result.cv_curve[k - 1] > result.cv_curve[best - 1]) best = k;
    result.best_count = best;
    result.selected = active_at_count[best];
    std::sort(result.selected.begin(), result.selected.end());
    return result;
}

/// Accuracy / sensitivity / specificity with FGR (label 0) as the positive
/// class; a rate whose denominator is empty is reported absent.
inline EvalReport evaluate_classifier(const LinearModel& model, const Eigen::MatrixXd& x_test,
                                      std::span<const int> y_test) {
    if (x_test.rows() != static_cast<Eigen::Index>(y_test.size()) || y_test.empty())
        throw std::invalid_argument("evaluate: empty or mismatched test set");
    EvalReport r;
    int correct = 0;
    for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
        const int pred = predict_logistic(model, x_test.row(i).transpose()).label;
        const int truth = y_test[i];
        correct += pred == truth;
        if (truth == kFgrLabel)
            (pred == kFgrLabel ? r.tp : r.fn)++;
        else
            (pred == kControlLabel ? r.tn : r.fp)++;
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(y_test.size());
    if (r.tp + r.fn > 0) r.sensitivity = static_cast<double>(r.tp) / (r.tp + r.fn);
    if (r.tn + r.fp > 0) r.specificity = static_cast<double>(r.tn) / (r.tn + r.fp);
    return r;
}

inline EvalReport evaluate_regressor(const LinearModel& model, const Eigen::MatrixXd& x_test,
                                     std::span<const double> y_test) {
    if (x_test.rows() != static_cast<Eigen::Index>(y_test.size()) || y_test.empty())
        throw std::invalid_argument("evaluate: empty or mismatched test set");
    double se = 0.0;
    for (Eigen::Index i = 0; i < x_test.rows(); ++i) {
        const double e = predict_linear(model, x_test.row(i).transpose()) - y_test[i];
        se += e * e;
    }
    EvalReport r;
    r.rmse = std::sqrt(se / static_cast<double>(y_test.size()));
    return r;
}

struct SplitIndices {
    std::vector<int> train;
    std::vector<int> test;
};

/// One stratified 80/20-style split per experiment, fully determined by the
/// seed. Test size = round(n * test_fraction), allocated across classes by
/// largest remainder.
inline SplitIndices train_test_split(std::span<const int> labels, const TrainConfig& config) {
    const std::size_t n = labels.size();
    if (n < 2) throw std::invalid_argument("split: needs >= 2 subjects");
    std::size_t n_test = static_cast<std::size_t>(
        std::llround(static_cast<double>(n) * config.test_fraction));
    n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

    std::vector<std::size_t> classes[2];
    for (std::size_t i = 0; i < n; ++i) classes[labels[i] == kControlLabel ? 0 : 1].push_back(i);
    const double exact0 = static_cast<double>(classes[0].size()) * n_test / n;
    std::size_t take0 = static_cast<std::size_t>(std::floor(exact0));
    std::size_t take1 = static_cast<std::size_t>(
        std::floor(static_cast<double>(classes[1].size()) * n_test / n));
    while (take0 + take1 < n_test) {
        // largest remainder; ties favour the first (control) class
        const double r0 = exact0 - take0;
        const double r1 = static_cast<double>(classes[1].size()) * n_test / n - take1;
        if (r0 >= r1 && take0 < classes[0].size())
            ++take0;
        else
            ++take1;
    }

    Rng rng(derive_seed(config.seed, 7));
    SplitIndices out;
    const std::size_t takes[2] = {take0, take1};
    for (int c = 0; c < 2; ++c) {
        rng.shuffle(std::span<std::size_t>(classes[c]));
        for (std::size_t i = 0; i < classes[c].size(); ++i)
            (i < takes[c] ? out.test : out.train).push_back(static_cast<int>(classes[c][i]));
    }
    std::sort(out.train.begin(), out.train.end());
    std::sort(out.test.begin(), out.test.end());
    return out;
}

/// Per-column median of the training rows; NaNs in either split are replaced
/// by it. A column with no finite training value imputes to 0.
inline void median_impute(Eigen::MatrixXd& x_train, Eigen::MatrixXd& x_test) {
    for (Eigen::Index j = 0; j < x_train.cols(); ++j) {
        std::vector<double> vals;
        for (Eigen::Index i = 0; i < x_train.rows(); ++i)
            if (std::isfinite(x_train(i, j))) vals.push_back(x_train(i, j));
        double med = 0.0;
        if (!vals.empty()) {
            std::sort(vals.begin(), vals.end());
            const std::size_t m = vals.size();
            med = m % 2 ? vals[m / 2] : 0.5 * (vals[m / 2 - 1] + vals[m / 2]);
        }
        for (Eigen::Index i = 0; i < x_train.rows(); ++i)
            if (!std::isfinite(x_train(i, j))) x_train(i, j) = med;
        for (Eigen::Index i = 0; i < x_test.rows(); ++i)
            if (!std::isfinite(x_test(i, j))) x_test(i, j) = med;
    }
}

inline nlohmann::json model_to_json(const LinearModel& m) {
    nlohmann::json j;
    j["task"] = to_string(m.task);
    j["feature_names"] = m.feature_names;
    j["weights"] = std::vector<double>(m.weights.data(), m.weights.data() + m.weights.size());
    j["intercept"] = m.intercept;
    j["center"] = std::vector<double>(m.center.data(), m.center.data() + m.center.size());
    j["scale"] = std::vector<double>(m.scale.data(), m.scale.data() + m.scale.size());
    j["strength"] = m.strength;
    j["l1_ratio"] = m.l1_ratio;
    j["label_encoding"] = {{"control", kControlLabel}, {"fgr", kFgrLabel}};
    return j;
}

inline LinearModel model_from_json(const nlohmann::json& j) {
    LinearModel m;
    m.task = parse_task(j.at("task").get<std::string>());
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    auto w = j.at("weights").get<std::vector<double>>();
    auto c = j.at("center").get<std::vector<double>>();
    auto s = j.at("scale").get<std::vector<double>>();
    m.weights = Eigen::Map<Eigen::VectorXd>(w.data(), static_cast<Eigen::Index>(w.size()));
    m.center = Eigen::Map<Eigen::VectorXd>(c.data(), static_cast<Eigen::Index>(c.size()));
    m.scale = Eigen::Map<Eigen::VectorXd>(s.data(), static_cast<Eigen::Index>(s.size()));
    m.intercept = j.at("intercept").get<double>();
    m.strength = j.at("strength").get<double>();
    m.l1_ratio = j.at("l1_ratio").get<double>();
    return m;
}

}  // namespace fetalfit
