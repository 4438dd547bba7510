#pragma once

// Distributionally robust linear classification under the separable ground
// metric ||x - x'|| + kappa 1{y != y'}: LP reformulations for PWL losses,
// composite reformulations for general Lipschitz losses on unbounded input
// sets, exact worst-case evaluation of a frozen hypothesis, the
// non-separability certificate, and the perturbation-budget robust loss.

#include "wassdrl/core.hpp"
#include "wassdrl/solver.hpp"

namespace wassdrl {

struct ClassificationProblem {
    Dataset dataset;
    LossSpec loss;
    SupportPolytope input_support;  // over x only; empty = all of R^n
    TransportCost metric;
    double rho = 0.0;
};

namespace detail {

inline void validate_classification(const ClassificationProblem& prob) {
    if (prob.dataset.task != Task::Classification)
        throw ParseError("classification requires a classification dataset");
    validate_dataset(prob.dataset);
    if (!(prob.rho >= 0)) throw ParseError("radius must be >= 0");
    if (prob.metric.kind != MetricKind::SeparableClassification)
        throw ParseError("classification requires the label-flip transport metric");
    if (prob.input_support.has_output_terms())
        throw ParseError("classification support sets constrain inputs only");
    if (!prob.input_support.unconstrained()) {
        if (prob.input_support.C1.cols() != prob.dataset.dim())
            throw DimensionMismatch("support dimension != dataset dimension");
        if (!prob.input_support.slater) find_slater_point(prob.input_support, false);
        else check_slater(prob.input_support);
        for (Eigen::Index i = 0; i < prob.dataset.size(); ++i)
            if (!prob.input_support.contains(prob.dataset.input(i)))
                throw InfeasibleSupport("training sample " + std::to_string(i) +
                                        " lies outside the support set");
    }
}

// Dual norm of w together with one subgradient.
inline double input_penalty(Norm p, const Vec& w, Vec& sub) {
    const Norm q = dual(p);
    sub = Vec::Zero(w.size());
    switch (q) {
        case Norm::Two: {
            const double nw = w.norm();
            if (nw > 0) sub = w / nw;
            return nw;
        }
        case Norm::One:
            for (Eigen::Index k = 0; k < w.size(); ++k)
                sub[k] = w[k] > 0 ? 1.0 : (w[k] < 0 ? -1.0 : 0.0);
            return w.lpNorm<1>();
        default: {
            if (w.size() == 0) return 0.0;
            Eigen::Index k = 0;
            const double m = w.cwiseAbs().maxCoeff(&k);
            if (m > 0) sub[k] = w[k] > 0 ? 1.0 : -1.0;
            return m;
        }
    }
}

struct ClassificationLP {
    StandardFormLP lp;
    std::vector<int> w;
    int lam = -1;
    std::vector<int> s;
};

// Paired constraint families, one per loss piece: the label-kept row and,
// for finite kappa, the label-flipped row discounted by kappa lambda.
//   min  lam rho + (1/N) sum_i s_i
//   s.t.  a_j y_i <w, xhat_i> + b_j + <q+_ij, d - C1 xhat_i>          <= s_i
//        -a_j y_i <w, xhat_i> + b_j + <q-_ij, d - C1 xhat_i> - k lam  <= s_i
//        || +-a_j y_i w - C1' q+-_ij ||_dual <= lam,  q+-_ij >= 0
inline ClassificationLP build_classification_lp(const ClassificationProblem& prob,
                                                const Vec* frozen_w) {
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const int n = static_cast<int>(ds.dim());
    const auto pieces = pwl_pieces(prob.loss);
    const Norm q = dual(prob.metric.p);
    const bool bounded = !prob.input_support.unconstrained();
    const bool flips = prob.metric.kappa < kInf;
    if (bounded && prob.metric.p == Norm::Two)
        throw UnsupportedNorm("euclidean metric with a bounded support set");

    ClassificationLP out;
    LPBuilder lb;
    if (!frozen_w) out.w = lb.add_vars("w", n, -kInf, kInf);
    out.lam = lb.add_var("lam", 0.0, kInf, prob.rho);
    out.s = lb.add_vars("s", N, -kInf, kInf, 1.0 / N);

    const int m = bounded ? static_cast<int>(prob.input_support.rows()) : 0;

    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        const double yi = ds.y[i];
        Vec mu;
        if (bounded) mu = prob.input_support.margins(xi);
        for (const auto& [a, b] : pieces) {
            for (int sgn : {+1, -1}) {
                if (sgn < 0 && !flips) continue;
                const double coef = sgn * a * yi;
                std::vector<int> qv;
                if (bounded) qv = lb.add_vars("q", m, 0.0, kInf);

                LinExpr row;
                row.c = b;
                if (frozen_w) row.c += coef * frozen_w->dot(xi);
                else
                    for (int k = 0; k < n; ++k) row.add(out.w[k], coef * xi[k]);
                for (int r = 0; r < m; ++r) row.add(qv[r], mu[r]);
                auto terms = row.terms;
                terms.push_back({out.s[i], -1.0});
                if (sgn < 0) terms.push_back({out.lam, -prob.metric.kappa});
                lb.add_le(std::move(terms), -row.c);

                std::vector<LinExpr> zx(n);
                for (int k = 0; k < n; ++k) {
                    if (frozen_w) zx[k].c = coef * (*frozen_w)[k];
                    else zx[k].add(out.w[k], coef);
                    for (int r = 0; r < m; ++r)
                        zx[k].add(qv[r], -prob.input_support.C1(r, k));
                }
                add_norm_le_rows(lb, zx, q, out.lam);
            }
        }
    }
    out.lp = lb.take();
    return out;
}

inline LPSolution solve_classification_lp(const ClassificationLP& built,
                                          const SolveOptions& opts) {
    LPSolution sol = solve_lp(built.lp, opts);
    if (sol.status == LPStatus::Infeasible)
        throw InfeasibleSupport("reformulation LP infeasible");
    if (sol.status == LPStatus::Unbounded)
        throw SolverFailure("reformulation LP unbounded (loss unbounded below)");
    return sol;
}

// Shared composite objective for unbounded input sets:
//   min lam rho + (1/N) sum_i max{ L(y_i <w,x_i>), L(-y_i <w,x_i>) - k lam }
//   s.t. lip(L) ||w||_dual <= lam,
// with the flipped branch and lambda dropped when kappa = inf.
inline TrainResult composite_classification(const ClassificationProblem& prob,
                                            const SolveOptions& opts) {
    const double lip = loss_lipschitz(prob.loss);
    const double kap = prob.metric.kappa;
    const int n = static_cast<int>(prob.dataset.dim());
    CompositeProblem cp;
    cp.dim = n;
    if (kap == kInf) {
        cp.eval = [&prob, lip](const Vec& w, double, Vec& gw, double&) {
            const auto& ds = prob.dataset;
            const auto N = static_cast<double>(ds.size());
            double total = 0.0;
            gw.setZero();
            for (Eigen::Index i = 0; i < ds.size(); ++i) {
                const Vec xi = ds.input(i);
                const double z = ds.y[i] * w.dot(xi);
                total += loss_eval(prob.loss, z);
                gw += (loss_grad(prob.loss, z) * ds.y[i] / N) * xi;
            }
            Vec sub;
            const double pen = input_penalty(prob.metric.p, w, sub);
            gw += prob.rho * lip * sub;
            return total / N + prob.rho * lip * pen;
        };
        auto res = solve_composite(cp, opts);
        return {LinearHypothesis{res.w}, res.value};
    }
    cp.has_lambda = true;
    cp.cone_lip = lip;
    cp.p = prob.metric.p;
    cp.eval = [&prob, kap](const Vec& w, double lam, Vec& gw, double& glam) {
        const auto& ds = prob.dataset;
        const auto N = static_cast<double>(ds.size());
        double total = lam * prob.rho;
        gw.setZero();
        glam = prob.rho;
        for (Eigen::Index i = 0; i < ds.size(); ++i) {
            const Vec xi = ds.input(i);
            const double z = ds.y[i] * w.dot(xi);
            const double kept = loss_eval(prob.loss, z);
            const double flip = loss_eval(prob.loss, -z) - kap * lam;
            if (kept >= flip) {
                total += kept / N;
                gw += (loss_grad(prob.loss, z) * ds.y[i] / N) * xi;
            } else {
                total += flip / N;
                gw -= (loss_grad(prob.loss, -z) * ds.y[i] / N) * xi;
                glam -= kap / N;
            }
        }
        return total;
    };
    auto res = solve_composite(cp, opts);
    return {LinearHypothesis{res.w}, res.value};
}

}  // namespace detail

// -------------------------------------------------------------- training

// Piecewise-linear losses, LP route; euclidean metrics on unbounded input
// sets fall back to the composite form.
inline TrainResult train_pwl_classification(const ClassificationProblem& prob,
                                            const SolveOptions& opts = {}) {
    detail::validate_classification(prob);
    if (!prob.loss.is_pwl()) throw NotPWL("loss has no piecewise-linear decomposition");
    if (prob.input_support.unconstrained() && prob.metric.p == Norm::Two)
        return detail::composite_classification(prob, opts);
    auto built = detail::build_classification_lp(prob, nullptr);
    auto sol = detail::solve_classification_lp(built, opts);
    const int n = static_cast<int>(prob.dataset.dim());
    Vec w(n);
    for (int k = 0; k < n; ++k) w[k] = sol[built.w[k]];
    return {LinearHypothesis{w}, sol.value};
}

// Lipschitz losses (logloss, smooth hinge, ...) on unbounded input sets.
inline TrainResult train_lipschitz_classification(const ClassificationProblem& prob,
                                                  const SolveOptions& opts = {}) {
    detail::validate_classification(prob);
    if (!prob.input_support.unconstrained())
        throw BoundedSupportUnsupported("composite route requires an unconstrained support");
    return detail::composite_classification(prob, opts);
}

// ------------------------------------------------------ fixed-w evaluation

// Worst-case expected loss of a frozen hypothesis. Unbounded input sets
// reduce to an exact one-dimensional search over lambda: the objective is
// piecewise linear in lambda with breakpoints where a sample's flipped
// branch overtakes its kept branch.
inline double wc_expected_loss_classification(const ClassificationProblem& prob,
                                              const LinearHypothesis& h,
                                              const SolveOptions& opts = {}) {
    detail::validate_classification(prob);
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    const auto& ds = prob.dataset;
    if (!prob.input_support.unconstrained()) {
        auto built = detail::build_classification_lp(prob, &h.w);
        return detail::solve_classification_lp(built, opts).value;
    }
    const auto N = static_cast<double>(ds.size());
    const double kap = prob.metric.kappa;
    const double lam0 = loss_lipschitz(prob.loss) * dual_norm(prob.metric.p, h.w);
    std::vector<double> kept(ds.size()), flip(ds.size());
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        const double z = ds.y[i] * h(ds.input(i));
        kept[i] = loss_eval(prob.loss, z);
        flip[i] = loss_eval(prob.loss, -z);
    }
    std::vector<double> cand{lam0};
    if (kap > 0 && kap < kInf)
        for (Eigen::Index i = 0; i < ds.size(); ++i)
            cand.push_back(std::max(lam0, (flip[i] - kept[i]) / kap));
    double best = kInf;
    for (double lam : cand) {
        double v = lam * prob.rho;
        for (Eigen::Index i = 0; i < ds.size(); ++i)
            v += std::max(kept[i], kap == kInf ? -kInf : flip[i] - kap * lam) / N;
        best = std::min(best, v);
    }
    return best;
}

// True iff some training sample sits on a steepest branch of the loss, so
// no hypothesis separates the data with slack.
inline bool check_non_separability(const Dataset& ds, const LossSpec& loss,
                                   const LinearHypothesis& h) {
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        if (slope_attains_lipschitz(loss, ds.y[i] * h(ds.input(i)))) return true;
    return false;
}

// Robust (perturbation-budget) loss with inputs shifted under a shared
// budget of N rho and labels kept; concentrates on one sample by convexity.
inline double robust_loss_classification(const Dataset& ds, const LossSpec& loss,
                                         const LinearHypothesis& h, double rho, Norm p) {
    if (!loss.is_pwl()) throw NotPWL("robust loss evaluation requires a PWL loss");
    validate_dataset(ds);
    if (!(rho >= 0)) throw ParseError("radius must be >= 0");
    const int N = static_cast<int>(ds.size());
    const double reach = N * rho * dual_norm(p, h.w);
    double base = 0.0, gain = 0.0;
    for (int i = 0; i < N; ++i) {
        const double z = ds.y[i] * h(ds.input(i));
        base += loss_eval(loss, z);
        gain = std::max({gain, loss_eval(loss, z + reach) - loss_eval(loss, z),
                         loss_eval(loss, z - reach) - loss_eval(loss, z)});
    }
    return (base + gain) / N;
}

// Thresholded prediction; ties break toward +1.
inline double predict(const LinearHypothesis& h, const Vec& x) {
    if (h.w.size() != x.size())
        throw DimensionMismatch("hypothesis dimension != input dimension");
    return h(x) >= 0 ? 1.0 : -1.0;
}

}  // namespace wassdrl
