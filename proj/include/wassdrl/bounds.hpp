#pragma once

// Generalization-radius calculators built on Wasserstein measure
// concentration, plus closed-form error intervals and LP-based risk
// intervals for a frozen linear hypothesis.

#include <algorithm>
#include <cmath>

#include "wassdrl/core.hpp"
#include "wassdrl/solver.hpp"

namespace wassdrl {

// Light-tail constants. No closed forms exist for c1..c4 (they depend on the
// tail constants and the dimension only through existence arguments), so all
// six are user inputs; the defaults merely make the formulas well-posed.
struct LightTailParams {
    double a = 2.0;
    double A = 2.718281828459045;
    double c1 = 2.718281828459045;
    double c2 = 1.0;
    double c3 = 2.718281828459045;
    double c4 = 1.0;
};

// Hypothesis-space box: dual-norm floor, sup-norm diameter, and the largest
// dual norm among standard basis vectors (1.0 for every p-norm).
struct HypothesisBox {
    double omega_lower = 1.0;  // inf ||(w,-1)||_* (regression) or inf ||w||_*
    double omega_upper = 1.0;  // sup-norm diameter of the hypothesis set
    double m_n = 1.0;          // max_i ||e_i||_*
};

struct ImprovedRadius {
    double value = 0.0;       // radius certified at significance eta
    double required_N = 0.0;  // sample-size threshold the guarantee needs
};

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

namespace detail {

inline void validate_light_tail(const LightTailParams& p) {
    if (!(p.a > 1.0)) throw ParseError("light-tail exponent a must be > 1");
    if (!(p.A > 0.0)) throw ParseError("light-tail bound A must be > 0");
    if (!(p.c1 >= 1.0)) throw ParseError("concentration constant c1 must be >= 1");
    if (!(p.c2 > 0.0)) throw ParseError("concentration constant c2 must be > 0");
    if (!(p.c3 >= 1.0)) throw ParseError("concentration constant c3 must be >= 1");
    if (!(p.c4 > 0.0)) throw ParseError("concentration constant c4 must be > 0");
}

inline void validate_significance(double eta) {
    if (!(eta > 0.0 && eta <= 1.0))
        throw ParseError("significance level must lie in (0, 1]");
}

}  // namespace detail

// Smallest radius at which the concentration inequality certifies that the
// ball around the empirical distribution contains the truth with
// probability 1 - eta. Two decay regimes: N^{-1/max(n+1,2)} once N clears
// log(c1/eta)/c2, and N^{-1/a} below it.
inline double radius_basic(long N, int n, double eta,
                           const LightTailParams& params = {}) {
    detail::validate_light_tail(params);
    detail::validate_significance(eta);
    if (N < 1) throw ParseError("sample size must be >= 1");
    if (n == 1)
        throw UnsupportedDimension(
            "the one-dimensional concentration bound takes a different form; "
            "n = 1 is not supported");
    if (n < 1) throw ParseError("input dimension must be >= 1");
    const double mass = std::log(params.c1 / eta) / params.c2;
    const double base = mass / static_cast<double>(N);
    const double expo =
        static_cast<double>(N) >= mass ? 1.0 / std::max(n + 1, 2) : 1.0 / params.a;
    return std::pow(base, expo);
}

// Sample size the improved radius guarantee needs before it applies.
inline double improved_radius_requirement(int n, double eta,
                                          const LightTailParams& params = {}) {
    detail::validate_light_tail(params);
    detail::validate_significance(eta);
    if (n < 1) throw ParseError("input dimension must be >= 1");
    const double thr_dim = std::pow(16.0 * n / params.c4, 2.0);
    const double thr_sig = 16.0 * std::log(params.c3 / eta) / params.c4;
    return std::max(thr_dim, thr_sig);
}

// Dimension-free radius for hypothesis sets sandwiched by a HypothesisBox:
// decays like sqrt(n log N / N) instead of N^{-1/(n+1)}. The guarantee only
// holds once N clears max{(16n/c4)^2, 16 log(c3/eta)/c4}; below that the
// call reports the required sample size and refuses.
inline ImprovedRadius radius_improved(long N, int n, double eta,
                                      const LightTailParams& params,
                                      const HypothesisBox& box) {
    detail::validate_light_tail(params);
    detail::validate_significance(eta);
    if (N < 1) throw ParseError("sample size must be >= 1");
    if (n < 1) throw ParseError("input dimension must be >= 1");
    if (!(box.omega_lower > 0.0))
        throw ParseError("hypothesis floor omega_lower must be > 0");
    if (!(box.omega_upper >= 0.0))
        throw ParseError("hypothesis diameter omega_upper must be >= 0");
    const double required = improved_radius_requirement(n, eta, params);
    if (static_cast<double>(N) < required)
        throw SampleSizeTooSmall("improved radius needs N >= " +
                                 std::to_string(required) + ", got " +
                                 std::to_string(N));
    const double rootN = std::sqrt(static_cast<double>(N));
    const double logterm =
        (n * std::log(rootN) + std::log(params.c3 / eta)) / params.c4;
    const double value = 2.0 * box.omega_upper / (rootN * box.omega_lower) *
                         (box.m_n * n * params.A + std::sqrt(logterm));
    return {value, required};
}

// Worst/best-case mean absolute prediction error over the ball, in closed
// form: the empirical MAE shifted by rho ||(w,-1)||_* each way (the lower
// end clamped at zero).
inline Interval error_interval(const Dataset& ds, const Vec& w, double rho,
                               Norm p) {
    if (ds.task != Task::Regression)
        throw ParseError("error intervals require a regression dataset");
    validate_dataset(ds);
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    if (w.size() != ds.X.cols())
        throw DimensionMismatch("hypothesis dimension does not match the data");
    const auto N = ds.size();
    double mae = 0.0;
    for (Eigen::Index i = 0; i < N; ++i)
        mae += std::abs(ds.y[i] - w.dot(ds.X.row(i)));
    mae /= static_cast<double>(N);
    Vec wext(w.size() + 1);
    wext.head(w.size()) = w;
    wext[w.size()] = -1.0;
    const double pen = rho * dual_norm(p, wext);
    return {std::max(mae - pen, 0.0), mae + pen};
}

namespace detail {

// Shared LP for the two risk bounds. Constraints per sample:
//   1 - sgn r_i g_i <= s_i,  1 + sgn t_i g_i - lambda kappa <= s_i,
//   r_i ||w||_* <= lambda,   t_i ||w||_* <= lambda,
// where g_i = y_i <w, x_i>; sgn = +1 prices the worst case and -1 the best
// case. kappa = inf drops the label-flip rows entirely.
inline double risk_lp(const Dataset& ds, const Vec& w, double rho, double kappa,
                      Norm p, double sgn, const SolveOptions& opts) {
    const auto N = ds.size();
    const double wdual = dual_norm(p, w);
    LPBuilder lb;
    const int lam = lb.add_var("lam", 0.0, kInf, rho);
    std::vector<int> s(N), r(N), t(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        s[i] = lb.add_var("s", 0.0, kInf, 1.0 / static_cast<double>(N));
        r[i] = lb.add_var("r", 0.0, kInf);
        if (kappa != kInf) t[i] = lb.add_var("t", 0.0, kInf);
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        const double g = ds.y[i] * w.dot(ds.X.row(i));
        lb.add_le({{r[i], -sgn * g}, {s[i], -1.0}}, -1.0);
        lb.add_le({{r[i], wdual}, {lam, -1.0}}, 0.0);
        if (kappa != kInf) {
            lb.add_le({{t[i], sgn * g}, {lam, -kappa}, {s[i], -1.0}}, -1.0);
            lb.add_le({{t[i], wdual}, {lam, -1.0}}, 0.0);
        }
    }
    return solve_lp(lb.take(), opts).value;
}

}  // namespace detail

// Worst/best-case misclassification probability over the ball for a frozen
// linear hypothesis, via the two risk LPs. Zero-margin points count as
// misclassified at the upper end and correct at the lower end.
inline Interval risk_interval(const Dataset& ds, const Vec& w, double rho,
                              double kappa, Norm p,
                              const SolveOptions& opts = {}) {
    if (ds.task != Task::Classification)
        throw ParseError("risk intervals require a classification dataset");
    validate_dataset(ds);
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    if (!(kappa > 0.0)) throw ParseError("kappa must be positive");
    if (w.size() != ds.X.cols())
        throw DimensionMismatch("hypothesis dimension does not match the data");
    const double upper = detail::risk_lp(ds, w, rho, kappa, p, +1.0, opts);
    const double lower = 1.0 - detail::risk_lp(ds, w, rho, kappa, p, -1.0, opts);
    return {std::clamp(lower, 0.0, 1.0), std::clamp(upper, 0.0, 1.0)};
}

}  // namespace wassdrl
