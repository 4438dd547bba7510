#pragma once

// Feed-forward networks with Lipschitz-product regularization: forward and
// backward passes, induced operator norms, the product-bound and
// convex-surrogate training objectives, matrix-norm proximal operators
// (MACS / singular-value thresholding / MARS), and stochastic proximal
// gradient training.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include <Eigen/SVD>

#include "wassdrl/core.hpp"

namespace wassdrl {

enum class Activation { Identity, ReLU, Tanh, Sigmoid, Softmax, Elu };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::ReLU: return "relu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
        case Activation::Softmax: return "softmax";
        case Activation::Elu: return "elu";
    }
    return "?";
}

// Layer sizes n_1 .. n_{M+1} (n_{M+1} = 1), one activation per layer, and a
// single global p-norm on every feature space. All listed activations are
// treated as 1-Lipschitz.
struct MLPSpec {
    std::vector<int> sizes;
    std::vector<Activation> acts;
    double elu_alpha = 1.0;
    Norm p = Norm::Two;
};

struct WeightStack {
    std::vector<Mat> W;  // W[m]: sizes[m+1] x sizes[m]
};

namespace detail {

inline void validate_net(const MLPSpec& spec) {
    const auto M = spec.acts.size();
    if (M < 1) throw ParseError("a network needs at least one layer");
    if (spec.sizes.size() != M + 1)
        throw ParseError("layer size list must have one more entry than activations");
    for (int s : spec.sizes)
        if (s < 1) throw ParseError("layer sizes must be >= 1");
    if (spec.sizes.back() != 1) throw ParseError("the output layer must have width 1");
    if (!(spec.elu_alpha > 0.0)) throw ParseError("elu alpha must be positive");
    for (std::size_t m = 0; m < M; ++m) {
        if (spec.acts[m] != Activation::Softmax) continue;
        // softmax of a single unit is constant; permit it only on hidden
        // layers wide enough to normalize over
        if (m + 1 == M || spec.sizes[m + 1] < 2)
            throw ParseError("softmax is only supported on hidden layers of width >= 2");
    }
}

inline void validate_weights(const MLPSpec& spec, const WeightStack& ws) {
    validate_net(spec);
    const auto M = spec.acts.size();
    if (ws.W.size() != M) throw DimensionMismatch("weight stack depth does not match");
    for (std::size_t m = 0; m < M; ++m) {
        if (ws.W[m].rows() != spec.sizes[m + 1] || ws.W[m].cols() != spec.sizes[m])
            throw DimensionMismatch("weight matrix shape does not chain");
        if (!ws.W[m].allFinite()) throw ParseError("weights must be finite");
    }
}

inline Vec activate(Activation a, const Vec& z, double alpha) {
    switch (a) {
        case Activation::Identity:
            return z;
        case Activation::ReLU:
            return z.cwiseMax(0.0);
        case Activation::Tanh:
            return z.array().tanh().matrix();
        case Activation::Sigmoid:
            return (1.0 / (1.0 + (-z.array()).exp())).matrix();
        case Activation::Softmax: {
            Vec e = (z.array() - z.maxCoeff()).exp().matrix();
            return e / e.sum();
        }
        case Activation::Elu: {
            Vec out = z;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                if (z[i] < 0.0) out[i] = alpha * (std::exp(z[i]) - 1.0);
            return out;
        }
    }
    return z;
}

// Pullback of a downstream sensitivity through the activation Jacobian.
inline Vec activation_pullback(Activation a, const Vec& z, const Vec& delta,
                               double alpha) {
    switch (a) {
        case Activation::Identity:
            return delta;
        case Activation::ReLU: {
            Vec out = delta;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                if (z[i] <= 0.0) out[i] = 0.0;  // subgradient 0 at the kink
            return out;
        }
        case Activation::Tanh: {
            Vec t = z.array().tanh().matrix();
            return ((1.0 - t.array().square()) * delta.array()).matrix();
        }
        case Activation::Sigmoid: {
            Vec s = (1.0 / (1.0 + (-z.array()).exp())).matrix();
            return (s.array() * (1.0 - s.array()) * delta.array()).matrix();
        }
        case Activation::Softmax: {
            Vec s = activate(a, z, alpha);
            return (s.array() * delta.array()).matrix() - s * s.dot(delta);
        }
        case Activation::Elu: {
            Vec out = delta;
            for (Eigen::Index i = 0; i < z.size(); ++i)
                if (z[i] < 0.0) out[i] *= alpha * std::exp(z[i]);
            return out;
        }
    }
    return delta;
}

struct ForwardCache {
    std::vector<Vec> xs;  // x_1 .. x_{M+1}
    std::vector<Vec> zs;  // z_1 .. z_M
};

inline ForwardCache forward_cached(const MLPSpec& spec, const WeightStack& ws,
                                   const Vec& x) {
    if (x.size() != spec.sizes.front())
        throw DimensionMismatch("input dimension does not match the first layer");
    ForwardCache c;
    c.xs.push_back(x);
    for (std::size_t m = 0; m < spec.acts.size(); ++m) {
        c.zs.push_back(ws.W[m] * c.xs.back());
        c.xs.push_back(activate(spec.acts[m], c.zs.back(), spec.elu_alpha));
    }
    return c;
}

}  // namespace detail

// Network output h(x) = sigma_M(W_M ... sigma_1(W_1 x) ...).
inline double nn_forward(const MLPSpec& spec, const WeightStack& ws, const Vec& x) {
    detail::validate_weights(spec, ws);
    return detail::forward_cached(spec, ws, x).xs.back()[0];
}

// Gradients of the per-sample loss with respect to every weight matrix:
// L(h(x) - y) for regression, L(y h(x)) for classification.
inline std::vector<Mat> nn_backprop(const MLPSpec& spec, const WeightStack& ws,
                                    const Vec& x, double y, const LossSpec& loss,
                                    Task task) {
    detail::validate_weights(spec, ws);
    const auto M = spec.acts.size();
    const auto c = detail::forward_cached(spec, ws, x);
    const double h = c.xs.back()[0];
    Vec delta(1);
    delta[0] = task == Task::Regression ? loss_grad(loss, h - y)
                                        : y * loss_grad(loss, y * h);
    std::vector<Mat> grads(M);
    for (std::size_t m = M; m-- > 0;) {
        const Vec dz =
            detail::activation_pullback(spec.acts[m], c.zs[m], delta, spec.elu_alpha);
        grads[m] = dz * c.xs[m].transpose();
        if (m > 0) delta = ws.W[m].transpose() * dz;
    }
    return grads;
}

// Induced matrix p-norm: max absolute column sum (p=1), largest singular
// value (p=2), max absolute row sum (p=inf).
inline double operator_norm(const Mat& W, Norm p) {
    switch (p) {
        case Norm::One:
            return W.cwiseAbs().colwise().sum().maxCoeff();
        case Norm::Inf:
            return W.cwiseAbs().rowwise().sum().maxCoeff();
        case Norm::Two: {
            Eigen::JacobiSVD<Mat> svd(W);
            return svd.singularValues()[0];
        }
    }
    throw UnsupportedNorm("operator norms support p in {1, 2, inf}");
}

// Product upper bound on lip(h): every supported activation is 1-Lipschitz,
// so the bound is the product of the per-layer operator norms.
inline double lipschitz_upper(const MLPSpec& spec, const WeightStack& ws) {
    detail::validate_weights(spec, ws);
    double prod = 1.0;
    for (const Mat& W : ws.W) prod *= operator_norm(W, spec.p);
    return prod;
}

namespace detail {

inline double empirical_loss(const MLPSpec& spec, const WeightStack& ws,
                             const Dataset& ds, const LossSpec& loss) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const Vec xi = ds.X.row(i).transpose();
        const double h = forward_cached(spec, ws, xi).xs.back()[0];
        total += ds.task == Task::Regression ? loss_eval(loss, h - ds.y[i])
                                             : loss_eval(loss, ds.y[i] * h);
    }
    return total / static_cast<double>(ds.size());
}

inline bool bounded_output(const MLPSpec& spec) {
    switch (spec.acts.back()) {
        case Activation::Sigmoid:
        case Activation::Softmax:
        case Activation::Tanh:
            return true;
        default:
            return false;
    }
}

}  // namespace detail

// Upper bound on the distributionally robust objective: empirical loss plus
// rho lip(L) max{ prod_m ||W_m||, c / kappa }. The constant c is 1 for
// regression; for classification it must dominate 2 sup |h| and defaults to
// 2 only when the output activation is bounded. Pass c_const = 0 to use the
// default.
inline double drnn_objective(const MLPSpec& spec, const WeightStack& ws,
                             const Dataset& ds, const LossSpec& loss, double rho,
                             double kappa, double c_const = 0.0) {
    detail::validate_weights(spec, ws);
    validate_dataset(ds);
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    if (!(kappa > 0.0)) throw ParseError("kappa must be positive");
    double reg = lipschitz_upper(spec, ws);
    if (kappa != kInf) {
        double c = c_const;
        if (c == 0.0) {
            if (ds.task == Task::Regression) {
                c = 1.0;
            } else if (detail::bounded_output(spec)) {
                c = 2.0;
            } else {
                throw ParseError(
                    "classification with an unbounded output activation needs "
                    "an explicit c constant");
            }
        }
        if (!(c > 0.0)) throw ParseError("the c constant must be positive");
        reg = std::max(reg, c / kappa);
    }
    return detail::empirical_loss(spec, ws, ds, loss) +
           rho * loss_lipschitz(loss) * reg;
}

// Convex-surrogate objective for the kappa = inf regime: empirical loss plus
// rho_bar times the sum (not the product) of the layer operator norms.
inline double drnn_convex_objective(const MLPSpec& spec, const WeightStack& ws,
                                    const Dataset& ds, const LossSpec& loss,
                                    double rho_bar) {
    detail::validate_weights(spec, ws);
    validate_dataset(ds);
    if (!(rho_bar >= 0.0)) throw ParseError("regularization weight must be >= 0");
    double sum = 0.0;
    for (const Mat& W : ws.W) sum += operator_norm(W, spec.p);
    return detail::empirical_loss(spec, ws, ds, loss) + rho_bar * sum;
}

namespace detail {

// Euclidean projection onto the l1 ball of radius u (sorting scheme).
inline Vec project_l1_ball(const Vec& v, double u) {
    if (v.cwiseAbs().sum() <= u) return v;
    if (u <= 0.0) return Vec::Zero(v.size());
    std::vector<double> a(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) a[i] = std::abs(v[i]);
    std::sort(a.begin(), a.end(), std::greater<double>());
    double cum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        cum += a[j];
        const double t = (cum - u) / static_cast<double>(j + 1);
        if (t >= (j + 1 < a.size() ? a[j + 1] : 0.0)) {
            theta = t;
            break;
        }
    }
    Vec out = v;
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::max(std::abs(v[i]) - theta, 0.0);
        out[i] = v[i] >= 0.0 ? mag : -mag;
    }
    return out;
}

}  // namespace detail

// Proximal map of eta * (max absolute column sum): golden-section search
// over the common column cap u, with per-column l1-ball projections inside.
// The search objective eta u + 1/2 sum_i dist^2(col_i, uB_1) is convex in u.
inline Mat prox_macs(const Mat& W, double eta) {
    if (!(eta >= 0.0)) throw ParseError("prox weight must be >= 0");
    if (eta == 0.0) return W;
    const double ub = W.cwiseAbs().colwise().sum().maxCoeff();
    if (ub <= 0.0) return W;
    auto objective = [&](double u) {
        double f = eta * u;
        for (Eigen::Index j = 0; j < W.cols(); ++j) {
            const Vec d = W.col(j) - detail::project_l1_ball(W.col(j), u);
            f += 0.5 * d.squaredNorm();
        }
        return f;
    };
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = ub;
    double m1 = hi - gr * (hi - lo), m2 = lo + gr * (hi - lo);
    double f1 = objective(m1), f2 = objective(m2);
    while (hi - lo > 1e-8 * std::max(1.0, ub)) {
        if (f1 <= f2) {
            hi = m2;
            m2 = m1;
            f2 = f1;
            m1 = hi - gr * (hi - lo);
            f1 = objective(m1);
        } else {
            lo = m1;
            m1 = m2;
            f1 = f2;
            m2 = lo + gr * (hi - lo);
            f2 = objective(m2);
        }
    }
    const double u = objective(lo) <= objective(hi) ? lo : hi;
    Mat out = W;
    for (Eigen::Index j = 0; j < W.cols(); ++j)
        out.col(j) = detail::project_l1_ball(W.col(j), u);
    return out;
}

// Singular-value thresholding: U max(S - eta, 0) V^T. This shifts every
// singular value, i.e. it is the proximal map of the trace norm, which
// dominates the largest singular value and therefore keeps the regularized
// objective an upper bound.
inline Mat prox_spectral(const Mat& W, double eta) {
    if (!(eta >= 0.0)) throw ParseError("prox weight must be >= 0");
    if (eta == 0.0) return W;
    Eigen::JacobiSVD<Mat> svd(W, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Vec s = svd.singularValues();
    for (Eigen::Index i = 0; i < s.size(); ++i) s[i] = std::max(s[i] - eta, 0.0);
    return svd.matrixU() * s.asDiagonal() * svd.matrixV().transpose();
}

// Proximal map of eta * (max absolute row sum): the column scheme on the
// transpose.
inline Mat prox_mars(const Mat& W, double eta) {
    return prox_macs(W.transpose(), eta).transpose();
}

struct SPGDOptions {
    int epochs = 200;
    double eta0 = 1e-3;       // initial step size
    double step_decay = 0.0;  // eta_k = eta0 / (1 + k / K); 0 = N * epochs
    double momentum = 0.9;
    double tolerance = 1e-7;  // relative per-epoch improvement threshold
    std::uint64_t seed = 0;
};

struct SPGDEpoch {
    double objective = 0.0;
    double reg = 0.0;
};

struct SPGDResult {
    WeightStack weights;
    std::vector<SPGDEpoch> trace;
    double value = 0.0;
    int epochs_run = 0;
};

// Stochastic proximal gradient descent on the convex-surrogate objective:
//   W_m <- prox_{eta_k rho_bar ||.||}(W_m - eta_k grad + momentum carry),
// one uniformly drawn sample per step, heavy-ball momentum folded into the
// proximal step. Deterministic for a fixed seed. Stops once the relative
// improvement of the epoch objective falls below the tolerance.
inline SPGDResult train_spgd(const MLPSpec& spec, const Dataset& ds,
                             const LossSpec& loss, double rho_bar,
                             const SPGDOptions& opts = {}) {
    detail::validate_net(spec);
    validate_dataset(ds);
    if (ds.X.cols() != spec.sizes.front())
        throw DimensionMismatch("dataset dimension does not match the first layer");
    if (!(rho_bar >= 0.0)) throw ParseError("regularization weight must be >= 0");
    if (opts.epochs < 1) throw ParseError("epochs must be >= 1");

    const auto M = spec.acts.size();
    const auto N = ds.size();
    std::mt19937_64 gen(opts.seed);

    WeightStack ws;
    ws.W.resize(M);
    for (std::size_t m = 0; m < M; ++m) {
        const int rows = spec.sizes[m + 1], cols = spec.sizes[m];
        const double scale = std::sqrt(6.0 / (rows + cols));
        std::uniform_real_distribution<double> U(-scale, scale);
        ws.W[m] = Mat::NullaryExpr(rows, cols, [&]() { return U(gen); });
    }
    std::vector<Mat> prev = ws.W;

    auto prox = [&](const Mat& W, double eta) {
        switch (spec.p) {
            case Norm::One: return prox_macs(W, eta);
            case Norm::Two: return prox_spectral(W, eta);
            case Norm::Inf: return prox_mars(W, eta);
        }
        throw UnsupportedNorm("training supports p in {1, 2, inf}");
    };

    const double K = opts.step_decay > 0.0 ? opts.step_decay
                                           : static_cast<double>(N) * opts.epochs;
    SPGDResult res;
    std::vector<Eigen::Index> order(N);
    std::iota(order.begin(), order.end(), 0);

    long step = 0;
    double prev_obj = kInf;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), gen);
        for (Eigen::Index i : order) {
            const double eta = opts.eta0 / (1.0 + static_cast<double>(step) / K);
            const Vec xi = ds.X.row(i).transpose();
            const auto grads = nn_backprop(spec, ws, xi, ds.y[i], loss, ds.task);
            for (std::size_t m = 0; m < M; ++m) {
                const Mat carry = opts.momentum * (ws.W[m] - prev[m]);
                prev[m] = ws.W[m];
                ws.W[m] = prox(ws.W[m] - eta * grads[m] + carry, eta * rho_bar);
            }
            ++step;
        }
        double reg = 0.0;
        for (const Mat& W : ws.W) reg += operator_norm(W, spec.p);
        const double obj =
            detail::empirical_loss(spec, ws, ds, loss) + rho_bar * reg;
        res.trace.push_back({obj, rho_bar * reg});
        res.epochs_run = epoch + 1;
        if (!std::isfinite(obj) || obj > 1e12)
            throw DivergenceDetected("training objective exceeded 1e12");
        if (std::abs(prev_obj - obj) <= opts.tolerance * std::max(1.0, std::abs(obj)))
            break;
        prev_obj = obj;
    }
    res.weights = std::move(ws);
    res.value = res.trace.back().objective;
    return res;
}

}  // namespace wassdrl
