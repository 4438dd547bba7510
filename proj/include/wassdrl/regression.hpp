#pragma once

// Distributionally robust regression over a Wasserstein ball: LP
// reformulations for piecewise-linear losses (with polyhedral support sets
// dualized against a Slater point), composite reformulations for general
// Lipschitz losses on unbounded supports, worst-case loss evaluation for a
// frozen hypothesis, and the perturbation-budget robust loss used by the
// equivalence checks.

#include "wassdrl/core.hpp"
#include "wassdrl/solver.hpp"

namespace wassdrl {

struct RegressionProblem {
    Dataset dataset;
    LossSpec loss;
    SupportPolytope support;  // over (x, y); empty = unconstrained
    TransportCost metric;
    double rho = 0.0;
};

namespace detail {

inline void validate_regression(const RegressionProblem& prob) {
    if (prob.dataset.task != Task::Regression)
        throw ParseError("regression requires a regression dataset");
    validate_dataset(prob.dataset);
    if (!(prob.rho >= 0)) throw ParseError("radius must be >= 0");
    if (prob.metric.kind == MetricKind::SeparableClassification)
        throw ParseError("classification metric passed to a regression problem");
    if (prob.metric.kind == MetricKind::SeparableRegression && prob.metric.kappa <= 0)
        throw ParseError("kappa must be positive for regression transport");
    if (!prob.support.unconstrained()) {
        if (prob.support.C1.cols() != prob.dataset.dim())
            throw DimensionMismatch("support dimension != dataset dimension");
        if (!prob.support.slater) find_slater_point(prob.support, prob.support.has_output_terms());
        else check_slater(prob.support);
        for (Eigen::Index i = 0; i < prob.dataset.size(); ++i) {
            std::optional<double> y;
            if (prob.support.has_output_terms()) y = prob.dataset.y[i];
            if (!prob.support.contains(prob.dataset.input(i), y))
                throw InfeasibleSupport("training sample " + std::to_string(i) +
                                        " lies outside the support set");
        }
    }
}

// Dual norm of (w, -1) under the regression ground metric, plus one
// subgradient with respect to w.
inline double regression_penalty(const TransportCost& metric, const Vec& w, Vec& sub) {
    const Norm q = dual(metric.p);
    sub = Vec::Zero(w.size());
    if (metric.kind == MetricKind::JointRegression) {
        const Vec v = concat(w, -1.0);
        switch (q) {
            case Norm::Two: {
                const double nv = v.norm();
                sub = w / nv;
                return nv;
            }
            case Norm::One:
                for (Eigen::Index k = 0; k < w.size(); ++k)
                    sub[k] = w[k] > 0 ? 1.0 : (w[k] < 0 ? -1.0 : 0.0);
                return v.lpNorm<1>();
            default: {
                Eigen::Index k = 0;
                const double m = v.cwiseAbs().maxCoeff(&k);
                if (k < w.size() && std::abs(w[k]) > 1.0)
                    sub[k] = w[k] > 0 ? 1.0 : -1.0;
                return m;
            }
        }
    }
    // separable: max(||w||_q, 1/kappa)
    const double ycost = metric.kappa == kInf ? 0.0 : 1.0 / metric.kappa;
    const double nw = vec_norm(q, w);
    if (nw <= ycost) return ycost;  // flat branch, zero subgradient
    switch (q) {
        case Norm::Two: sub = w / nw; break;
        case Norm::One:
            for (Eigen::Index k = 0; k < w.size(); ++k)
                sub[k] = w[k] > 0 ? 1.0 : (w[k] < 0 ? -1.0 : 0.0);
            break;
        default: {
            Eigen::Index k = 0;
            w.cwiseAbs().maxCoeff(&k);
            sub[k] = w[k] >= 0 ? 1.0 : -1.0;
        }
    }
    return nw;
}

struct RegressionLP {
    StandardFormLP lp;
    std::vector<int> w;  // empty when the hypothesis is frozen
    int lam = -1;
    std::vector<int> s;
};

// One LP for both training (w free) and worst-case evaluation (w frozen):
//   min  lam rho + (1/N) sum_i s_i
//   s.t. a_j (<w, xhat_i> - yhat_i) + b_j + <q_ij, d - C1 xhat_i - c2 yhat_i> <= s_i
//        || (a_j w - C1' q_ij, -a_j - c2' q_ij) ||_dual <= lam        (joint)
//        || a_j w - C1' q_ij ||_dual <= lam, |a_j + c2' q_ij| <= kappa lam  (separable)
//        q_ij >= 0
// On unbounded supports the q-blocks vanish. Separable kappa = inf freezes
// the outputs, dropping the scalar dual row.
inline RegressionLP build_regression_lp(const RegressionProblem& prob,
                                        const Vec* frozen_w) {
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const int n = static_cast<int>(ds.dim());
    const auto pieces = pwl_pieces(prob.loss);
    const int J = static_cast<int>(pieces.size());
    const Norm q = dual(prob.metric.p);
    const bool bounded = !prob.support.unconstrained();
    const bool joint = prob.metric.kind == MetricKind::JointRegression;
    const bool freeze_y = !joint && prob.metric.kappa == kInf;
    if (bounded && prob.metric.p == Norm::Two)
        throw UnsupportedNorm("euclidean metric with a bounded support set");

    RegressionLP out;
    LPBuilder lb;
    if (!frozen_w) out.w = lb.add_vars("w", n, -kInf, kInf);
    out.lam = lb.add_var("lam", 0.0, kInf, prob.rho);
    out.s = lb.add_vars("s", N, -kInf, kInf, 1.0 / N);

    const int m = bounded ? static_cast<int>(prob.support.rows()) : 0;
    const bool has_c2 = bounded && prob.support.has_output_terms();

    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        Vec mu;
        if (bounded) {
            std::optional<double> y;
            if (has_c2) y = ds.y[i];
            mu = prob.support.margins(xi, y);
        }
        for (int j = 0; j < J; ++j) {
            const auto [a, b] = pieces[j];
            std::vector<int> qv;
            if (bounded) qv = lb.add_vars("q", m, 0.0, kInf);

            LinExpr row;
            row.c = -a * ds.y[i] + b;
            if (frozen_w) row.c += a * frozen_w->dot(xi);
            else
                for (int k = 0; k < n; ++k) row.add(out.w[k], a * xi[k]);
            for (int r = 0; r < m; ++r) row.add(qv[r], mu[r]);
            auto terms = row.terms;
            terms.push_back({out.s[i], -1.0});
            lb.add_le(std::move(terms), -row.c);

            std::vector<LinExpr> zx(n);
            for (int k = 0; k < n; ++k) {
                if (frozen_w) zx[k].c = a * (*frozen_w)[k];
                else zx[k].add(out.w[k], a);
                for (int r = 0; r < m; ++r) zx[k].add(qv[r], -prob.support.C1(r, k));
            }
            LinExpr zy;
            zy.c = -a;
            if (has_c2)
                for (int r = 0; r < m; ++r) zy.add(qv[r], -prob.support.c2[r]);

            if (joint) {
                zx.push_back(zy);
                add_norm_le_rows(lb, zx, q, out.lam);
            } else {
                add_norm_le_rows(lb, zx, q, out.lam);
                if (!freeze_y) add_norm_le_rows(lb, {zy}, Norm::Inf, out.lam, prob.metric.kappa);
            }
        }
    }
    out.lp = lb.take();
    return out;
}

inline LPSolution solve_regression_lp(const RegressionLP& built, const SolveOptions& opts) {
    LPSolution sol = solve_lp(built.lp, opts);
    if (sol.status == LPStatus::Infeasible)
        throw InfeasibleSupport("reformulation LP infeasible");
    if (sol.status == LPStatus::Unbounded)
        throw SolverFailure("reformulation LP unbounded (loss unbounded below)");
    return sol;
}

}  // namespace detail

// -------------------------------------------------------------- training

// Piecewise-linear losses, LP route; euclidean metrics on unbounded
// supports fall back to the composite penalty form.
inline TrainResult train_pwl_regression(const RegressionProblem& prob,
                                        const SolveOptions& opts = {}) {
    detail::validate_regression(prob);
    if (!prob.loss.is_pwl()) throw NotPWL("loss has no piecewise-linear decomposition");
    const int n = static_cast<int>(prob.dataset.dim());

    if (prob.support.unconstrained() && prob.metric.p == Norm::Two) {
        const double lip = loss_lipschitz(prob.loss);
        CompositeProblem cp;
        cp.dim = n;
        cp.eval = [&prob, lip](const Vec& w, double, Vec& gw, double&) {
            const auto& ds = prob.dataset;
            double total = 0.0;
            gw.setZero();
            for (Eigen::Index i = 0; i < ds.size(); ++i) {
                const Vec xi = ds.input(i);
                const double r = w.dot(xi) - ds.y[i];
                total += loss_eval(prob.loss, r);
                gw += loss_grad(prob.loss, r) * xi;
            }
            total /= static_cast<double>(ds.size());
            gw /= static_cast<double>(ds.size());
            Vec sub;
            const double pen = detail::regression_penalty(prob.metric, w, sub);
            gw += prob.rho * lip * sub;
            return total + prob.rho * lip * pen;
        };
        auto res = solve_composite(cp, opts);
        return {LinearHypothesis{res.w}, res.value};
    }

    auto built = detail::build_regression_lp(prob, nullptr);
    auto sol = detail::solve_regression_lp(built, opts);
    Vec w(n);
    for (int k = 0; k < n; ++k) w[k] = sol[built.w[k]];
    return {LinearHypothesis{w}, sol.value};
}

// Lipschitz losses on unbounded supports: minimize
//   (1/N) sum_i L(<w, xhat_i> - yhat_i) + rho lip(L) ||(w, -1)||_dual
inline TrainResult train_lipschitz_regression(const RegressionProblem& prob,
                                              const SolveOptions& opts = {}) {
    detail::validate_regression(prob);
    if (!prob.support.unconstrained())
        throw BoundedSupportUnsupported("composite route requires an unconstrained support");
    const double lip = loss_lipschitz(prob.loss);
    CompositeProblem cp;
    cp.dim = static_cast<int>(prob.dataset.dim());
    cp.eval = [&prob, lip](const Vec& w, double, Vec& gw, double&) {
        const auto& ds = prob.dataset;
        double total = 0.0;
        gw.setZero();
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
            const Vec xi = ds.input(i);
            const double r = w.dot(xi) - ds.y[i];
            total += loss_eval(prob.loss, r);
            gw += loss_grad(prob.loss, r) * xi;
        }
        total /= static_cast<double>(ds.size());
        gw /= static_cast<double>(ds.size());
        Vec sub;
        const double pen = detail::regression_penalty(prob.metric, w, sub);
        gw += prob.rho * lip * sub;
        return total + prob.rho * lip * pen;
    };
    auto res = solve_composite(cp, opts);
    return {LinearHypothesis{res.w}, res.value};
}

// Huber robust regression in its inf-convolution form over (w, z):
//   min (1/N) sum_i [ z_i^2/2 + delta |<w, xhat_i> - yhat_i - z_i| ]
//       + rho delta ||(w, -1)||_dual
inline TrainResult train_huber(const Dataset& ds, double delta, double rho, Norm p,
                               const SolveOptions& opts = {}) {
    const LossSpec loss = LossSpec::huber(delta);
    RegressionProblem prob{ds, loss, SupportPolytope::all_space(),
                           TransportCost::joint_regression(p), rho};
    detail::validate_regression(prob);
    const int n = static_cast<int>(ds.dim());
    const int N = static_cast<int>(ds.size());
    CompositeProblem cp;
    cp.dim = n + N;
    cp.eval = [&ds, &prob, delta, rho, n, N](const Vec& v, double, Vec& g, double&) {
        const Vec w = v.head(n);
        g.setZero();
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
            const Vec xi = ds.input(i);
            const double z = v[n + i];
            const double r = w.dot(xi) - ds.y[i] - z;
            const double sgn = r > 0 ? 1.0 : (r < 0 ? -1.0 : 0.0);
            total += 0.5 * z * z + delta * std::abs(r);
            g.head(n) += (delta * sgn / N) * xi;
            g[n + i] = (z - delta * sgn) / N;
        }
        total /= N;
        Vec sub;
        const double pen = detail::regression_penalty(prob.metric, w, sub);
        g.head(n) += rho * delta * sub;
        return total + rho * delta * pen;
    };
    SolveOptions tuned = opts;
    tuned.polish_dim_cap = std::max(tuned.polish_dim_cap, n + N + 1);
    auto res = solve_composite(cp, tuned);
    return {LinearHypothesis{res.w.head(n)}, res.value};
}

// Support vector regression (epsilon-insensitive loss).
inline TrainResult train_svr(const Dataset& ds, double eps, double rho,
                             const SupportPolytope& support, Norm p,
                             const SolveOptions& opts = {}) {
    RegressionProblem prob{ds, LossSpec::eps_insensitive(eps), support,
                           TransportCost::joint_regression(p), rho};
    return train_pwl_regression(prob, opts);
}

// Quantile regression (pinball loss).
inline TrainResult train_quantile(const Dataset& ds, double tau, double rho,
                                  const SupportPolytope& support, Norm p,
                                  const SolveOptions& opts = {}) {
    RegressionProblem prob{ds, LossSpec::pinball(tau), support,
                           TransportCost::joint_regression(p), rho};
    return train_pwl_regression(prob, opts);
}

// ------------------------------------------------------ fixed-w evaluation

// Worst-case expected loss of a frozen hypothesis over the ball. Unbounded
// supports use the exact closed form; polyhedral supports re-solve the LP
// with w folded in.
inline double wc_expected_loss_regression(const RegressionProblem& prob,
                                          const LinearHypothesis& h,
                                          const SolveOptions& opts = {}) {
    detail::validate_regression(prob);
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    if (prob.support.unconstrained()) {
        const double emp = empirical_loss_regression(prob.dataset, prob.loss, h);
        Vec sub;
        const double pen = detail::regression_penalty(prob.metric, h.w, sub);
        return emp + prob.rho * loss_lipschitz(prob.loss) * pen;
    }
    auto built = detail::build_regression_lp(prob, &h.w);
    return detail::solve_regression_lp(built, opts).value;
}

// Any training sample sitting on a steepest branch of the loss certifies
// that the worst-case and robust values coincide.
inline bool check_min_dispersion(const Dataset& ds, const LossSpec& loss,
                                 const LinearHypothesis& h) {
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (slope_attains_lipschitz(loss, h(ds.input(i)) - ds.y[i])) return true;
    return false;
}

// Robust (perturbation-budget) loss: the adversary distributes a total
// transport budget of N rho across the samples. For convex losses the
// optimum concentrates the whole budget on one sample and one direction.
inline double robust_loss_regression(const Dataset& ds, const LossSpec& loss,
                                     const LinearHypothesis& h, double rho, Norm p) {
    if (!loss.is_pwl()) throw NotPWL("robust loss evaluation requires a PWL loss");
    validate_dataset(ds);
    if (!(rho >= 0)) throw ParseError("radius must be >= 0");
    const int N = static_cast<int>(ds.size());
    const double reach = N * rho * dual_norm(p, concat(h.w, -1.0));
    double base = 0.0, gain = 0.0;
    for (int i = 0; i < N; ++i) {
        const double z = h(ds.input(i)) - ds.y[i];
        base += loss_eval(loss, z);
        gain = std::max({gain, loss_eval(loss, z + reach) - loss_eval(loss, z),
                         loss_eval(loss, z - reach) - loss_eval(loss, z)});
    }
    return (base + gain) / N;
}

}  // namespace wassdrl
