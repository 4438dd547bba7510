#pragma once

// Worst-case distribution construction for frozen hypotheses: exact discrete
// maximizers via perspective-variable LPs for PWL losses, and asymptotically
// optimal two-atom-split sequences for general Lipschitz losses.

#include "wassdrl/classification.hpp"
#include "wassdrl/core.hpp"
#include "wassdrl/regression.hpp"
#include "wassdrl/solver.hpp"

namespace wassdrl {

struct WeightedAtom {
    Vec x;
    double y = 0.0;
    double mass = 0.0;
    int source = -1;  // index of the training sample the mass came from
};

struct WorstCaseDistribution {
    std::vector<WeightedAtom> atoms;
    double attained_value = 0.0;
    double gap_bound = 0.0;  // 0 for exact constructions
};

namespace detail {

inline void push_atom(std::vector<WeightedAtom>& atoms, WeightedAtom atom) {
    for (auto& a : atoms) {
        if (a.source != atom.source || std::abs(a.y - atom.y) > 1e-9) continue;
        if ((a.x - atom.x).lpNorm<Eigen::Infinity>() > 1e-9) continue;
        a.mass += atom.mass;
        return;
    }
    atoms.push_back(std::move(atom));
}

// Direction of steepest asymptotic growth: +1 if the right tail of the loss
// is at least as steep as the left tail, else -1.
inline double steep_tail(const LossSpec& L) {
    const auto [right, left] = loss_slopes_at_infinity(L);
    return std::abs(right) >= std::abs(left) ? 1.0 : -1.0;
}

// Metric-unit displacement (ux, uy) maximizing the residual increase
// <w, ux> - uy; returns that increase (the metric's effective dual norm).
inline double regression_unit_direction(const TransportCost& metric, const Vec& w,
                                        Vec& ux, double& uy) {
    ux = Vec::Zero(w.size());
    uy = 0.0;
    if (metric.kind == MetricKind::JointRegression) {
        const Vec u = dual_achieving_direction(metric.p, concat(w, -1.0));
        ux = u.head(w.size());
        uy = u[w.size()];
        return dual_norm(metric.p, concat(w, -1.0));
    }
    const double nw = dual_norm(metric.p, w);
    if (metric.kappa == kInf || nw >= 1.0 / metric.kappa) {
        ux = dual_achieving_direction(metric.p, w);
        return nw;
    }
    uy = -1.0 / metric.kappa;
    return 1.0 / metric.kappa;
}

// A degenerate optimal vertex may park transport budget on a mass-free cell
// (the escaping-mass reading of the LP). The budget row is shared across all
// samples, so any atom that can absorb that budget at no loss of objective
// makes the construction exact; a remainder is reported as a gap bound.
struct Escape {
    int source;
    double spend;         // metric budget the cell consumed
    double contribution;  // objective value the LP credited to it
};

template <typename GainIf, typename Apply>
void absorb_escapes(std::vector<WeightedAtom>& atoms, const std::vector<Escape>& escapes,
                    GainIf gain_if, Apply apply) {
    for (const auto& e : escapes) {
        if (e.contribution <= 1e-12) continue;
        WeightedAtom* best = nullptr;
        double best_gain = -kInf;
        double best_dir = 1.0;
        for (auto& a : atoms) {
            for (double dir : {+1.0, -1.0}) {
                const double gain = gain_if(a, dir * e.spend);
                const bool tie_prefers_source =
                    gain > best_gain - 1e-12 && best && best->source != e.source &&
                    a.source == e.source;
                if (gain > best_gain || tie_prefers_source) {
                    best_gain = std::max(gain, best_gain);
                    best = &a;
                    best_dir = dir;
                }
            }
        }
        if (best && best_gain >= e.contribution - 1e-9) apply(*best, best_dir * e.spend);
    }
}

}  // namespace detail

// Exact maximizer for PWL losses: mass alpha_ij of sample i lands on piece j
// displaced by (q_ij, v_ij) / alpha_ij, subject to the shared transport
// budget sum ||(q_ij, v_ij)|| <= N rho and the support set (dualized through
// the perspective substitution).
inline WorstCaseDistribution worstcase_regression_exact(const RegressionProblem& prob,
                                                        const LinearHypothesis& h,
                                                        const SolveOptions& opts = {}) {
    detail::validate_regression(prob);
    if (!prob.loss.is_pwl()) throw NotPWL("exact construction requires a PWL loss");
    if (prob.metric.p == Norm::Two)
        throw UnsupportedNorm("exact construction requires a polyhedral metric");
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const int n = static_cast<int>(ds.dim());
    const auto pieces = pwl_pieces(prob.loss);
    const int J = static_cast<int>(pieces.size());
    const bool bounded = !prob.support.unconstrained();
    const bool joint = prob.metric.kind == MetricKind::JointRegression;
    const bool freeze_y = !joint && prob.metric.kappa == kInf;
    const int m = bounded ? static_cast<int>(prob.support.rows()) : 0;

    LPBuilder lb(/*maximize=*/true);
    struct Cell {
        int alpha;
        std::vector<int> q;
        int v;
    };
    std::vector<Cell> cells(static_cast<size_t>(N) * J);
    std::vector<std::pair<int, double>> budget;
    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        const double ri = h(xi) - ds.y[i];
        Vec mu;
        if (bounded) mu = prob.support.margins(xi, ds.y[i]);
        std::vector<std::pair<int, double>> mass_row;
        for (int j = 0; j < J; ++j) {
            const auto [a, b] = pieces[j];
            auto& cell = cells[static_cast<size_t>(i) * J + j];
            cell.alpha = lb.add_var("alpha", 0.0, kInf, (a * ri + b) / N);
            cell.q = lb.add_vars("q", n, -kInf, kInf);
            for (int k = 0; k < n; ++k) lb.add_cost(cell.q[k], a * h.w[k] / N);
            cell.v = freeze_y ? lb.add_var("v", 0.0, 0.0) : lb.add_var("v", -kInf, kInf);
            lb.add_cost(cell.v, -a / N);
            mass_row.push_back({cell.alpha, 1.0});

            // transport spend of this cell
            if (joint) {
                const int t = lb.add_var("t", 0.0, kInf);
                std::vector<LinExpr> ex(n + 1);
                for (int k = 0; k < n; ++k) ex[k].add(cell.q[k], 1.0);
                ex[n].add(cell.v, 1.0);
                add_norm_le_rows(lb, ex, prob.metric.p, t);
                budget.push_back({t, 1.0});
            } else {
                const int t = lb.add_var("t", 0.0, kInf);
                std::vector<LinExpr> ex(n);
                for (int k = 0; k < n; ++k) ex[k].add(cell.q[k], 1.0);
                add_norm_le_rows(lb, ex, prob.metric.p, t);
                budget.push_back({t, 1.0});
                if (!freeze_y) {
                    const int u = lb.add_var("u", 0.0, kInf);
                    add_norm_le_rows(lb, {[&] {
                                         LinExpr e;
                                         e.add(cell.v, 1.0);
                                         return e;
                                     }()},
                                     Norm::Inf, u);
                    budget.push_back({u, prob.metric.kappa});
                }
            }

            // perspective form of the support constraint
            for (int r = 0; r < m; ++r) {
                std::vector<std::pair<int, double>> row{{cell.alpha, -mu[r]}};
                for (int k = 0; k < n; ++k)
                    if (prob.support.C1(r, k) != 0.0)
                        row.push_back({cell.q[k], prob.support.C1(r, k)});
                if (prob.support.has_output_terms() && prob.support.c2[r] != 0.0)
                    row.push_back({cell.v, prob.support.c2[r]});
                lb.add_le(std::move(row), 0.0);
            }
        }
        lb.add_eq(std::move(mass_row), 1.0);
    }
    lb.add_le(std::move(budget), N * prob.rho);

    LPSolution sol = solve_lp(lb.take(), opts);
    if (sol.status != LPStatus::Optimal)
        throw SolverFailure("extremal LP did not reach optimality");

    WorstCaseDistribution out;
    std::vector<detail::Escape> escapes;
    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        for (int j = 0; j < J; ++j) {
            const auto& cell = cells[static_cast<size_t>(i) * J + j];
            const double alpha = sol[cell.alpha];
            Vec q(n);
            for (int k = 0; k < n; ++k) q[k] = sol[cell.q[k]];
            const double v = sol[cell.v];
            if (alpha <= 1e-12) {
                const double moved = std::max(q.lpNorm<Eigen::Infinity>(), std::abs(v));
                if (moved <= 1e-9) continue;  // numerically empty cell
                if (bounded)
                    throw SolverFailure("mass-free displacement inside a bounded support");
                const double spend = joint ? vec_norm(prob.metric.p, concat(q, v))
                                           : vec_norm(prob.metric.p, q) +
                                                 (freeze_y ? 0.0 : prob.metric.kappa * std::abs(v));
                escapes.push_back({i, spend, pieces[j].first * (h.w.dot(q) - v) / N});
                continue;
            }
            detail::push_atom(out.atoms,
                              {xi + q / alpha, ds.y[i] + v / alpha, alpha / N, i});
        }
    }
    if (!escapes.empty()) {
        // Budget s grants an atom of mass alpha/N an extra metric distance
        // s/alpha, hence a residual shift of +- s D / alpha.
        Vec ux;
        double uy = 0.0;
        const double D = detail::regression_unit_direction(prob.metric, h.w, ux, uy);
        detail::absorb_escapes(
            out.atoms, escapes,
            [&](const WeightedAtom& a, double t) {
                const double r = h(a.x) - a.y;
                const double dr = t * D / (a.mass * N);
                return a.mass * (loss_eval(prob.loss, r + dr) - loss_eval(prob.loss, r));
            },
            [&](WeightedAtom& a, double t) {
                const double step = t / (a.mass * N);
                a.x += step * ux;
                a.y += step * uy;
            });
    }
    for (const auto& a : out.atoms)
        out.attained_value += a.mass * loss_eval(prob.loss, h(a.x) - a.y);
    out.gap_bound = std::max(0.0, sol.value - out.attained_value);
    return out;
}

// Asymptotically optimal sequence for Lipschitz losses on unbounded supports:
// split sample 1 and send mass gamma/N a distance rho N / gamma along the
// steepest metric-unit direction.
inline WorstCaseDistribution worstcase_regression_sequence(const RegressionProblem& prob,
                                                           const LinearHypothesis& h,
                                                           double gamma = 1e-3) {
    detail::validate_regression(prob);
    if (!prob.support.unconstrained())
        throw BoundedSupportUnsupported("sequence construction requires an unconstrained support");
    if (!(gamma > 0.0 && gamma <= 1.0))
        throw GammaOutOfRange("gamma must lie in (0, 1]");
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const int n = static_cast<int>(ds.dim());

    // metric-unit displacement maximizing the asymptotic loss growth
    Vec dx;
    double dy = 0.0;
    detail::regression_unit_direction(prob.metric, h.w, dx, dy);
    const double s = detail::steep_tail(prob.loss);
    dx *= s;
    dy *= s;

    WorstCaseDistribution out;
    for (int i = 1; i < N; ++i) out.atoms.push_back({ds.input(i), ds.y[i], 1.0 / N, i});
    const double shift = prob.rho * N / gamma;
    detail::push_atom(out.atoms, {ds.input(0), ds.y[0], (1.0 - gamma) / N, 0});
    detail::push_atom(out.atoms,
                      {ds.input(0) + shift * dx, ds.y[0] + shift * dy, gamma / N, 0});
    for (const auto& a : out.atoms)
        out.attained_value += a.mass * loss_eval(prob.loss, h(a.x) - a.y);
    out.gap_bound =
        std::max(0.0, wc_expected_loss_regression(prob, h) - out.attained_value);
    return out;
}

// Exact classification maximizer: per sample and piece, kept-label mass
// alpha+ and flipped-label mass alpha- (paying kappa per unit), each with
// its own input displacement.
inline WorstCaseDistribution worstcase_classification_exact(
    const ClassificationProblem& prob, const LinearHypothesis& h,
    const SolveOptions& opts = {}) {
    detail::validate_classification(prob);
    if (!prob.loss.is_pwl()) throw NotPWL("exact construction requires a PWL loss");
    if (prob.metric.p == Norm::Two)
        throw UnsupportedNorm("exact construction requires a polyhedral metric");
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const int n = static_cast<int>(ds.dim());
    const auto pieces = pwl_pieces(prob.loss);
    const int J = static_cast<int>(pieces.size());
    const bool bounded = !prob.input_support.unconstrained();
    const bool flips = prob.metric.kappa < kInf;
    const int m = bounded ? static_cast<int>(prob.input_support.rows()) : 0;

    LPBuilder lb(/*maximize=*/true);
    struct Cell {
        int alpha;
        std::vector<int> q;
    };
    std::vector<Cell> cells(static_cast<size_t>(N) * J * 2);
    std::vector<std::pair<int, double>> budget;
    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        const double yi = ds.y[i];
        Vec mu;
        if (bounded) mu = prob.input_support.margins(xi);
        std::vector<std::pair<int, double>> mass_row;
        for (int j = 0; j < J; ++j) {
            const auto [a, b] = pieces[j];
            for (int sgn : {+1, -1}) {
                if (sgn < 0 && !flips) continue;
                const double coef = sgn * a * yi;
                auto& cell = cells[(static_cast<size_t>(i) * J + j) * 2 + (sgn < 0)];
                cell.alpha = lb.add_var("alpha", 0.0, kInf, (coef * h(xi) + b) / N);
                if (sgn < 0) budget.push_back({cell.alpha, prob.metric.kappa});
                cell.q = lb.add_vars("q", n, -kInf, kInf);
                for (int k = 0; k < n; ++k) lb.add_cost(cell.q[k], coef * h.w[k] / N);
                mass_row.push_back({cell.alpha, 1.0});

                const int t = lb.add_var("t", 0.0, kInf);
                std::vector<LinExpr> ex(n);
                for (int k = 0; k < n; ++k) ex[k].add(cell.q[k], 1.0);
                add_norm_le_rows(lb, ex, prob.metric.p, t);
                budget.push_back({t, 1.0});

                for (int r = 0; r < m; ++r) {
                    std::vector<std::pair<int, double>> row{{cell.alpha, -mu[r]}};
                    for (int k = 0; k < n; ++k)
                        if (prob.input_support.C1(r, k) != 0.0)
                            row.push_back({cell.q[k], prob.input_support.C1(r, k)});
                    lb.add_le(std::move(row), 0.0);
                }
            }
        }
        lb.add_eq(std::move(mass_row), 1.0);
    }
    lb.add_le(std::move(budget), N * prob.rho);

    LPSolution sol = solve_lp(lb.take(), opts);
    if (sol.status != LPStatus::Optimal)
        throw SolverFailure("extremal LP did not reach optimality");

    WorstCaseDistribution out;
    std::vector<detail::Escape> escapes;
    for (int i = 0; i < N; ++i) {
        const Vec xi = ds.input(i);
        for (int j = 0; j < J; ++j) {
            for (int sgn : {+1, -1}) {
                if (sgn < 0 && !flips) continue;
                const auto& cell = cells[(static_cast<size_t>(i) * J + j) * 2 + (sgn < 0)];
                const double alpha = sol[cell.alpha];
                Vec q(n);
                for (int k = 0; k < n; ++k) q[k] = sol[cell.q[k]];
                if (alpha <= 1e-12) {
                    if (q.lpNorm<Eigen::Infinity>() <= 1e-9) continue;
                    if (bounded)
                        throw SolverFailure("mass-free displacement inside a bounded support");
                    const double coef = sgn * pieces[j].first * ds.y[i];
                    escapes.push_back(
                        {i, vec_norm(prob.metric.p, q), coef * h.w.dot(q) / N});
                    continue;
                }
                detail::push_atom(out.atoms,
                                  {xi + q / alpha, sgn * ds.y[i], alpha / N, i});
            }
        }
    }
    if (!escapes.empty()) {
        const double D = dual_norm(prob.metric.p, h.w);
        const Vec u = dual_achieving_direction(prob.metric.p, h.w);
        detail::absorb_escapes(
            out.atoms, escapes,
            [&](const WeightedAtom& a, double t) {
                const double z = a.y * h(a.x);
                const double dz = a.y * t * D / (a.mass * N);
                return a.mass * (loss_eval(prob.loss, z + dz) - loss_eval(prob.loss, z));
            },
            [&](WeightedAtom& a, double t) { a.x += (t / (a.mass * N)) * u; });
    }
    for (const auto& a : out.atoms)
        out.attained_value += a.mass * loss_eval(prob.loss, a.y * h(a.x));
    out.gap_bound = std::max(0.0, sol.value - out.attained_value);
    return out;
}

// Sequence construction for classification with finite kappa: solve the
// budget-split LP over per-sample flip fractions alpha_i and an input
// transport allowance theta, then realize it with one far atom.
inline WorstCaseDistribution worstcase_classification_sequence(
    const ClassificationProblem& prob, const LinearHypothesis& h, double gamma = 1e-3,
    const SolveOptions& opts = {}) {
    detail::validate_classification(prob);
    if (!prob.input_support.unconstrained())
        throw BoundedSupportUnsupported("sequence construction requires an unconstrained support");
    if (prob.metric.kappa == kInf)
        throw KappaInfinite("sequence construction requires a finite flip cost");
    if (!(gamma > 0.0 && gamma <= std::min(prob.rho, 1.0)))
        throw GammaOutOfRange("gamma must lie in (0, min{rho, 1}]");
    if (h.w.size() != prob.dataset.dim())
        throw DimensionMismatch("hypothesis dimension != dataset dimension");
    const auto& ds = prob.dataset;
    const int N = static_cast<int>(ds.size());
    const double kap = prob.metric.kappa;
    const double lip = loss_lipschitz(prob.loss);
    const double dn = dual_norm(prob.metric.p, h.w);

    LPBuilder lb(/*maximize=*/true);
    const int theta = lb.add_var("theta", 0.0, kInf, lip * dn);
    std::vector<int> alpha(N);
    std::vector<std::pair<int, double>> row{{theta, 1.0}};
    std::vector<double> kept(N), flip(N);
    for (int i = 0; i < N; ++i) {
        const double z = ds.y[i] * h(ds.input(i));
        kept[i] = loss_eval(prob.loss, z);
        flip[i] = loss_eval(prob.loss, -z);
        alpha[i] = lb.add_var("alpha", 0.0, 1.0, (flip[i] - kept[i]) / N);
        row.push_back({alpha[i], kap / N});
    }
    lb.add_eq(std::move(row), prob.rho - gamma);
    LPSolution sol = solve_lp(lb.take(), opts);
    if (sol.status != LPStatus::Optimal)
        throw SolverFailure("budget-split LP did not reach optimality");
    const double th = sol[theta];

    const double eta = gamma / (th + kap - prob.rho + gamma + 1.0);
    const double s = detail::steep_tail(prob.loss) * ds.y[0];
    const Vec xstar = s * dual_achieving_direction(prob.metric.p, h.w);

    WorstCaseDistribution out;
    auto split = [&](int i, double scale) {
        const double ai = sol[alpha[i]];
        if (ai < 1.0)
            detail::push_atom(out.atoms, {ds.input(i), ds.y[i], scale * (1.0 - ai) / N, i});
        if (ai > 0.0)
            detail::push_atom(out.atoms, {ds.input(i), -ds.y[i], scale * ai / N, i});
    };
    for (int i = 1; i < N; ++i) split(i, 1.0);
    split(0, 1.0 - eta);
    detail::push_atom(out.atoms,
                      {ds.input(0) + (th * N / eta) * xstar, ds.y[0], eta / N, 0});
    for (const auto& a : out.atoms)
        out.attained_value += a.mass * loss_eval(prob.loss, a.y * h(a.x));
    out.gap_bound =
        std::max(0.0, wc_expected_loss_classification(prob, h) - out.attained_value);
    return out;
}

}  // namespace wassdrl
