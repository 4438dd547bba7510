#pragma once

// Embedded optimization engines: a dense two-phase simplex with Bland
// anti-cycling, a projected-subgradient solver (with a cutting-plane polish
// stage) for nonsmooth convex composites with a dual-norm cone constraint,
// and the symmetric eigendecomposition square root for kernel matrices.

#include "wassdrl/core.hpp"

#include <Eigen/Eigenvalues>

#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>

namespace wassdrl {

// ---------------------------------------------------------------- LP types

enum class LPStatus { Optimal, Infeasible, Unbounded };

struct LPRow {
    std::vector<std::pair<int, double>> terms;
    double rhs = 0.0;
};

struct StandardFormLP {
    bool maximize = false;
    std::vector<double> cost;
    std::vector<double> lower, upper;   // +/- kInf allowed
    std::vector<LPRow> le_rows;         // a.z <= rhs
    std::vector<LPRow> eq_rows;         // a.z == rhs
    std::vector<std::string> names;

    int num_vars() const { return static_cast<int>(cost.size()); }

    Mat dense_ineq() const {
        Mat A = Mat::Zero(static_cast<Eigen::Index>(le_rows.size()), num_vars());
        for (std::size_t r = 0; r < le_rows.size(); ++r)
            for (auto [j, v] : le_rows[r].terms) A(static_cast<Eigen::Index>(r), j) += v;
        return A;
    }
    Mat dense_eq() const {
        Mat E = Mat::Zero(static_cast<Eigen::Index>(eq_rows.size()), num_vars());
        for (std::size_t r = 0; r < eq_rows.size(); ++r)
            for (auto [j, v] : eq_rows[r].terms) E(static_cast<Eigen::Index>(r), j) += v;
        return E;
    }
};

class LPBuilder {
  public:
    explicit LPBuilder(bool maximize = false) { lp_.maximize = maximize; }

    int add_var(std::string name, double lo, double up, double cost = 0.0) {
        lp_.names.push_back(std::move(name));
        lp_.lower.push_back(lo);
        lp_.upper.push_back(up);
        lp_.cost.push_back(cost);
        return static_cast<int>(lp_.cost.size()) - 1;
    }
    std::vector<int> add_vars(const std::string& base, int count, double lo, double up,
                              double cost = 0.0) {
        std::vector<int> ids(count);
        for (int k = 0; k < count; ++k)
            ids[k] = add_var(base + "[" + std::to_string(k) + "]", lo, up, cost);
        return ids;
    }
    void add_cost(int var, double c) { lp_.cost[var] += c; }
    // terms . z <= rhs
    void add_le(std::vector<std::pair<int, double>> terms, double rhs) {
        lp_.le_rows.push_back({std::move(terms), rhs});
    }
    void add_eq(std::vector<std::pair<int, double>> terms, double rhs) {
        lp_.eq_rows.push_back({std::move(terms), rhs});
    }
    StandardFormLP take() { return std::move(lp_); }

  private:
    StandardFormLP lp_;
};

struct LPSolution {
    LPStatus status = LPStatus::Optimal;
    double value = 0.0;
    Vec primal;        // original variable space
    int iterations = 0;
    double max_violation = 0.0;

    double operator[](int var) const { return primal[var]; }
};

struct SolveOptions {
    int max_iterations = 50000;
    double tolerance = 1e-8;     // relative objective change, 100-iteration window
    double step_c0 = 1.0;        // subgradient step c0 / sqrt(k)
    std::uint64_t seed = 0;
    int polish_dim_cap = 64;     // cutting-plane polish when dim <= cap
    int polish_rounds = 240;
};

inline void dump_lp(const StandardFormLP& lp, std::ostream& os) {
    os << (lp.maximize ? "max" : "min") << "\nc:";
    for (double c : lp.cost) os << ' ' << c;
    os << "\nbounds:";
    for (int j = 0; j < lp.num_vars(); ++j)
        os << ' ' << lp.names[j] << "[" << lp.lower[j] << "," << lp.upper[j] << "]";
    auto row = [&](const LPRow& r, const char* op) {
        bool first = true;
        for (auto [j, v] : r.terms) {
            os << (first ? "" : " + ") << v << "*" << lp.names[j];
            first = false;
        }
        os << ' ' << op << ' ' << r.rhs << '\n';
    };
    os << "\nsubject to:\n";
    for (const auto& r : lp.le_rows) row(r, "<=");
    for (const auto& r : lp.eq_rows) row(r, "==");
}

// ---------------------------------------------------------------- simplex

namespace detail {

// Dense tableau simplex over min c.x, Ax = b, x >= 0, b >= 0.
// Dantzig pricing with a Bland fallback after a degenerate streak.
class Tableau {
  public:
    Tableau(int rows, int cols) : m_(rows), n_(cols), t_((rows + 2) * (cols + 1), 0.0) {}

    double& at(int r, int c) { return t_[static_cast<std::size_t>(r) * (n_ + 1) + c]; }
    double at(int r, int c) const { return t_[static_cast<std::size_t>(r) * (n_ + 1) + c]; }
    // row m_ = phase-2 cost row, row m_+1 = phase-1 cost row; col n_ = rhs
    int rows() const { return m_; }
    int cols() const { return n_; }

    void pivot(int pr, int pc) {
        const double piv = at(pr, pc);
        const double inv = 1.0 / piv;
        double* prow = &t_[static_cast<std::size_t>(pr) * (n_ + 1)];
        for (int c = 0; c <= n_; ++c) prow[c] *= inv;
        prow[pc] = 1.0;
        for (int r = 0; r < m_ + 2; ++r) {
            if (r == pr) continue;
            double* row = &t_[static_cast<std::size_t>(r) * (n_ + 1)];
            const double f = row[pc];
            if (f == 0.0) continue;
            for (int c = 0; c <= n_; ++c) row[c] -= f * prow[c];
            row[pc] = 0.0;
        }
    }

  private:
    int m_, n_;
    std::vector<double> t_;
};

}  // namespace detail

inline LPSolution solve_lp(const StandardFormLP& lp, const SolveOptions& opts = {}) {
    const int nv = lp.num_vars();
    for (const auto& rows : {lp.le_rows, lp.eq_rows})
        for (const auto& r : rows)
            for (auto [j, v] : r.terms) {
                if (j < 0 || j >= nv) throw DimensionMismatch("LP row references variable " + std::to_string(j));
                if (!std::isfinite(v)) throw DimensionMismatch("non-finite LP coefficient");
            }

    // Variable transform to x >= 0: shift/flip/split per bounds.
    // map: column -> (original var, sign, shift applied to original).
    struct ColRef { int var; double sign; };
    std::vector<ColRef> colref;
    std::vector<int> pos_col(nv, -1), neg_col(nv, -1);
    std::vector<double> shift(nv, 0.0);
    std::vector<std::pair<int, double>> range_rows;  // (var, width) for two finite bounds

    for (int j = 0; j < nv; ++j) {
        const double lo = lp.lower[j], up = lp.upper[j];
        if (lo > up) return {LPStatus::Infeasible, 0.0, Vec::Zero(nv), 0, 0.0};
        if (std::isfinite(lo)) {
            shift[j] = lo;
            pos_col[j] = static_cast<int>(colref.size());
            colref.push_back({j, 1.0});
            if (std::isfinite(up)) range_rows.push_back({j, up - lo});
        } else if (std::isfinite(up)) {
            shift[j] = up;
            pos_col[j] = static_cast<int>(colref.size());
            colref.push_back({j, -1.0});  // z = up - x
        } else {
            pos_col[j] = static_cast<int>(colref.size());
            colref.push_back({j, 1.0});
            neg_col[j] = static_cast<int>(colref.size());
            colref.push_back({j, -1.0});
        }
    }
    const int n_struct = static_cast<int>(colref.size());
    const int m_le = static_cast<int>(lp.le_rows.size()) + static_cast<int>(range_rows.size());
    const int m_eq = static_cast<int>(lp.eq_rows.size());
    const int m = m_le + m_eq;
    const int n_total = n_struct + m_le;  // + slacks; artificials appended later

    // Assemble rows: structural coefficients and rhs adjusted by shifts.
    std::vector<std::vector<double>> rowdata(m, std::vector<double>(n_total, 0.0));
    std::vector<double> rhs(m, 0.0);
    std::vector<bool> is_eq(m, false);
    int r = 0;
    auto fill_row = [&](const LPRow& src) {
        double b = src.rhs;
        for (auto [j, v] : src.terms) {
            b -= v * shift[j];
            rowdata[r][pos_col[j]] += v * colref[pos_col[j]].sign;
            if (neg_col[j] >= 0) rowdata[r][neg_col[j]] += v * colref[neg_col[j]].sign;
        }
        rhs[r] = b;
    };
    for (const auto& src : lp.le_rows) { fill_row(src); rowdata[r][n_struct + r] = 1.0; ++r; }
    for (auto [j, width] : range_rows) {
        rowdata[r][pos_col[j]] = 1.0;  // shifted var <= width
        rhs[r] = width;
        rowdata[r][n_struct + r] = 1.0;
        ++r;
    }
    for (const auto& src : lp.eq_rows) { fill_row(src); is_eq[r] = true; ++r; }

    // Sign-normalize, pick initial basis, add artificials where needed.
    std::vector<int> basis(m, -1);
    std::vector<int> art_rows;
    for (int i = 0; i < m; ++i) {
        if (rhs[i] < 0) {
            for (double& v : rowdata[i]) v = -v;
            rhs[i] = -rhs[i];
        }
        if (!is_eq[i]) {
            int sc = -1;
            for (int c = n_struct; c < n_total; ++c)
                if (rowdata[i][c] == 1.0) { sc = c; break; }
            if (sc >= 0) { basis[i] = sc; continue; }
        }
        art_rows.push_back(i);
    }
    const int n_art = static_cast<int>(art_rows.size());
    const int n_all = n_total + n_art;

    detail::Tableau T(m, n_all);
    for (int i = 0; i < m; ++i) {
        for (int c = 0; c < n_total; ++c) T.at(i, c) = rowdata[i][c];
        T.at(i, n_all) = rhs[i];
    }
    for (int k = 0; k < n_art; ++k) {
        T.at(art_rows[k], n_total + k) = 1.0;
        basis[art_rows[k]] = n_total + k;
    }

    // Cost rows. Phase-2 costs on structural columns (sense-normalized to min).
    const double sense = lp.maximize ? -1.0 : 1.0;
    for (int c = 0; c < n_struct; ++c)
        T.at(m, c) = sense * lp.cost[colref[c].var] * colref[c].sign;
    // Phase-1 costs: sum of artificials; express reduced costs for the basis.
    for (int k = 0; k < n_art; ++k) T.at(m + 1, n_total + k) = 1.0;
    for (int i : art_rows)
        for (int c = 0; c <= n_all; ++c) T.at(m + 1, c) -= T.at(i, c);

    const double eps = 1e-9;
    int iters = 0;
    auto run_phase = [&](int costrow, bool allow_art) -> LPStatus {
        int degenerate_streak = 0;
        double last_obj = T.at(costrow, n_all);
        while (true) {
            if (++iters > opts.max_iterations)
                throw MaxIterations("simplex exceeded " + std::to_string(opts.max_iterations) + " pivots");
            const bool bland = degenerate_streak > 40;
            int pc = -1;
            double best = -eps;
            const int scan_end = allow_art ? n_all : n_total;
            for (int c = 0; c < scan_end; ++c) {
                const double rc = T.at(costrow, c);
                if (rc < best) {
                    pc = c;
                    if (bland) break;
                    best = rc;
                }
            }
            if (pc < 0) return LPStatus::Optimal;
            int pr = -1;
            double best_ratio = kInf;
            for (int i = 0; i < m; ++i) {
                const double a = T.at(i, pc);
                if (a > eps) {
                    const double ratio = T.at(i, n_all) / a;
                    if (ratio < best_ratio - 1e-12 ||
                        (ratio < best_ratio + 1e-12 && (pr < 0 || basis[i] < basis[pr]))) {
                        best_ratio = ratio;
                        pr = i;
                    }
                }
            }
            if (pr < 0) return LPStatus::Unbounded;
            T.pivot(pr, pc);
            basis[pr] = pc;
            const double obj = T.at(costrow, n_all);
            if (obj > last_obj - 1e-12) ++degenerate_streak;
            else degenerate_streak = 0;
            last_obj = obj;
        }
    };

    if (n_art > 0) {
        LPStatus s1 = run_phase(m + 1, true);
        (void)s1;  // phase 1 is bounded below by 0
        const double art_sum = -T.at(m + 1, n_all);
        if (art_sum > 1e-7 * (1.0 + std::abs(art_sum)) && art_sum > 1e-7)
            return {LPStatus::Infeasible, 0.0, Vec::Zero(nv), iters, 0.0};
        // Drive artificials out of the basis (degenerate pivots).
        for (int i = 0; i < m; ++i) {
            if (basis[i] < n_total) continue;
            int pc = -1;
            for (int c = 0; c < n_total; ++c)
                if (std::abs(T.at(i, c)) > 1e-7) { pc = c; break; }
            if (pc >= 0) {
                T.pivot(i, pc);
                basis[i] = pc;
            }
            // else: redundant row; its artificial stays basic at zero and the
            // phase-2 scan never re-enters artificial columns.
        }
    }

    LPStatus s2 = run_phase(m, false);

    auto extract = [&](const std::function<double(int)>& basic_value) {
        Vec x = Vec::Zero(nv);
        for (int j = 0; j < nv; ++j) x[j] = shift[j];
        for (int i = 0; i < m; ++i) {
            if (basis[i] < 0 || basis[i] >= n_struct) continue;
            const auto& ref = colref[basis[i]];
            x[ref.var] += ref.sign * basic_value(i);
        }
        return x;
    };
    auto violation = [&](const Vec& x) {
        double viol = 0.0;
        for (const auto& row : lp.le_rows) {
            double lhs = 0.0;
            for (auto [j, v] : row.terms) lhs += v * x[j];
            viol = std::max(viol, lhs - row.rhs);
        }
        for (const auto& row : lp.eq_rows) {
            double lhs = 0.0;
            for (auto [j, v] : row.terms) lhs += v * x[j];
            viol = std::max(viol, std::abs(lhs - row.rhs));
        }
        for (int j = 0; j < nv; ++j) {
            viol = std::max(viol, lp.lower[j] - x[j]);
            viol = std::max(viol, x[j] - lp.upper[j]);
        }
        return viol;
    };

    Vec x = extract([&](int i) { return T.at(i, n_all); });

    LPSolution sol;
    sol.status = s2;
    sol.iterations = iters;
    if (s2 == LPStatus::Optimal) {
        double scale = 1.0;
        for (const auto& row : lp.le_rows) scale = std::max(scale, std::abs(row.rhs));
        for (const auto& row : lp.eq_rows) scale = std::max(scale, std::abs(row.rhs));
        double viol = violation(x);
        if (viol > 1e-6 * scale) {
            // tableau drift after many pivots: re-solve the vertex exactly
            // from the final basis against the pristine row data
            Mat B = Mat::Zero(m, m);
            Vec rb(m);
            for (int i = 0; i < m; ++i) rb[i] = rhs[i];
            for (int k = 0; k < m; ++k) {
                const int c = basis[k];
                if (c < 0) continue;
                if (c < n_total)
                    for (int i = 0; i < m; ++i) B(i, k) = rowdata[i][c];
                else
                    B(art_rows[c - n_total], k) = 1.0;
            }
            Eigen::FullPivLU<Mat> lu(B);
            if (lu.isInvertible()) {
                const Vec z = lu.solve(rb);
                const Vec fixed = extract([&](int i) { return z[i]; });
                const double fviol = violation(fixed);
                if (fviol < viol) {
                    x = fixed;
                    viol = fviol;
                }
            }
        }
        sol.max_violation = viol;
        if (viol > 1e-6 * scale)
            throw SolverFailure("simplex produced an infeasible vertex, violation " +
                                std::to_string(viol));
        double value = 0.0;
        for (int j = 0; j < nv; ++j) value += lp.cost[j] * x[j];
        sol.value = value;
    }
    sol.primal = x;
    return sol;
}

// ------------------------------------------------------- cone projections

// Euclidean projection of (w, lam) onto {c * dual_norm(p, w) <= lam}.
inline void project_dual_norm_cone(Norm p, double c, Vec& w, double& lam) {
    if (c <= 0.0) { lam = std::max(lam, 0.0); return; }
    const Norm q = dual(p);
    const double current = c * vec_norm(q, w);
    if (current <= lam) { lam = std::max(lam, 0.0); return; }
    switch (q) {
        case Norm::Two: {  // second-order cone, alpha = 1/c
            const double alpha = 1.0 / c;
            const double a = w.norm();
            if (alpha * a <= -lam) { w.setZero(); lam = 0.0; return; }
            const double beta = (alpha * a + lam) / (alpha * alpha + 1.0);
            w *= beta * alpha / a;
            lam = beta;
            return;
        }
        case Norm::Inf: {  // c * max|w_k| <= lam, bisection on final lam
            auto dphi = [&](double t) {
                double s = 0.0;
                for (Eigen::Index k = 0; k < w.size(); ++k)
                    s += std::max(std::abs(w[k]) - t / c, 0.0);
                return (t - lam) - s / c;
            };
            double lo = 0.0, hi = std::max(lam, 0.0) + w.cwiseAbs().sum() / c + 1.0;
            if (dphi(lo) >= 0.0) { w.setZero(); lam = 0.0; return; }
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (dphi(mid) < 0.0 ? lo : hi) = mid;
            }
            const double t = 0.5 * (lo + hi);
            for (Eigen::Index k = 0; k < w.size(); ++k)
                w[k] = std::clamp(w[k], -t / c, t / c);
            lam = t;
            return;
        }
        case Norm::One: {  // c * sum|w_k| <= lam, bisection on multiplier mu
            auto soft_sum = [&](double thr) {
                double s = 0.0;
                for (Eigen::Index k = 0; k < w.size(); ++k)
                    s += std::max(std::abs(w[k]) - thr, 0.0);
                return s;
            };
            auto psi = [&](double mu) { return c * soft_sum(c * mu) - lam - mu; };
            double lo = 0.0, hi = c * w.cwiseAbs().sum() + std::abs(lam) + 1.0;
            for (int it = 0; it < 100; ++it) {
                const double mid = 0.5 * (lo + hi);
                (psi(mid) > 0.0 ? lo : hi) = mid;
            }
            const double mu = 0.5 * (lo + hi), thr = c * mu;
            for (Eigen::Index k = 0; k < w.size(); ++k) {
                const double mag = std::max(std::abs(w[k]) - thr, 0.0);
                w[k] = w[k] >= 0 ? mag : -mag;
            }
            lam = std::max(lam + mu, 0.0);
            return;
        }
    }
}

// ------------------------------------------------------- composite solver

// min F(w, lam) s.t. cone_lip * dual_norm(p, w) <= lam (constraint active
// only when has_lambda). eval returns F and writes a subgradient.
struct CompositeProblem {
    int dim = 0;
    bool has_lambda = false;
    double cone_lip = 0.0;
    Norm p = Norm::Two;
    std::function<double(const Vec& w, double lam, Vec& gw, double& glam)> eval;
    Vec w0;  // optional warm start
};

struct CompositeResult {
    Vec w;
    double lambda = 0.0;
    double value = 0.0;
    int iterations = 0;
    bool hit_max = false;
};

namespace detail {

struct Cut {
    Vec g;       // over (w, lam?)
    double off;  // F(v) - <g, v>
};

// Kelley cutting-plane refinement inside an adaptive box around the incumbent.
inline void polish_composite(const CompositeProblem& prob, const SolveOptions& opts,
                             Vec& best_w, double& best_lam, double& best_val) {
    const int d = prob.dim + (prob.has_lambda ? 1 : 0);
    if (d > opts.polish_dim_cap || opts.polish_rounds <= 0) return;

    auto pack = [&](const Vec& w, double lam) {
        Vec v(d);
        v.head(prob.dim) = w;
        if (prob.has_lambda) v[prob.dim] = lam;
        return v;
    };
    auto evaluate = [&](Vec v, Vec& gv) -> std::pair<double, Vec> {
        Vec w = v.head(prob.dim);
        double lam = prob.has_lambda ? v[prob.dim] : 0.0;
        if (prob.has_lambda) project_dual_norm_cone(prob.p, prob.cone_lip, w, lam);
        Vec gw(prob.dim);
        double glam = 0.0;
        const double F = prob.eval(w, lam, gw, glam);
        gv.resize(d);
        gv.head(prob.dim) = gw;
        if (prob.has_lambda) gv[prob.dim] = glam;
        return {F, pack(w, lam)};
    };

    std::vector<Cut> cuts;
    std::vector<Vec> cone_dirs;
    Vec center = pack(best_w, best_lam);
    double radius = 1.0 + center.cwiseAbs().maxCoeff();

    {
        Vec g;
        auto [F, v] = evaluate(center, g);
        if (F < best_val) best_val = F;
        cuts.push_back({g, F - g.dot(v)});
    }

    int failures = 0;
    for (int round = 0; round < opts.polish_rounds; ++round) {
        LPBuilder lb;
        std::vector<int> vi(d);
        for (int k = 0; k < d; ++k) {
            double lo = center[k] - radius;
            if (prob.has_lambda && k == prob.dim) lo = std::max(lo, 0.0);
            vi[k] = lb.add_var("v", lo, center[k] + radius);
        }
        const int ri = lb.add_var("r", -kInf, kInf, 1.0);
        for (const auto& cut : cuts) {
            std::vector<std::pair<int, double>> terms;
            for (int k = 0; k < d; ++k)
                if (cut.g[k] != 0.0) terms.push_back({vi[k], cut.g[k]});
            terms.push_back({ri, -1.0});
            lb.add_le(std::move(terms), -cut.off);
        }
        for (const auto& u : cone_dirs) {
            std::vector<std::pair<int, double>> terms;
            for (int k = 0; k < prob.dim; ++k)
                if (u[k] != 0.0) terms.push_back({vi[k], prob.cone_lip * u[k]});
            terms.push_back({vi[prob.dim], -1.0});
            lb.add_le(std::move(terms), 0.0);
        }
        LPSolution sol;
        try {
            sol = solve_lp(lb.take(), opts);
        } catch (const MaxIterations&) {
            return;
        } catch (const SolverFailure&) {
            // the cut model is only an accelerator: prune it and retry once
            if (++failures > 2) return;
            if (cuts.size() > 48) cuts.erase(cuts.begin(), cuts.end() - 48);
            cone_dirs.clear();
            center = pack(best_w, best_lam);
            radius = std::max(0.5 * radius, 1e-6);
            continue;
        }
        if (sol.status != LPStatus::Optimal) return;
        const double lower_bound = sol.value;

        Vec cand(d);
        for (int k = 0; k < d; ++k) cand[k] = sol[vi[k]];
        const bool on_boundary = ((cand - center).cwiseAbs().maxCoeff() > radius - 1e-9);

        Vec g;
        auto [F, vfeas] = evaluate(cand, g);
        cuts.push_back({g, F - g.dot(vfeas)});
        if (prob.has_lambda && prob.cone_lip > 0.0) {
            Vec u = dual_achieving_direction(prob.p, vfeas.head(prob.dim));
            cone_dirs.push_back(u);
            if (cone_dirs.size() > 128) cone_dirs.erase(cone_dirs.begin());
        }
        const bool improved = F < best_val - 1e-14 * (1.0 + std::abs(best_val));
        if (F < best_val) {
            best_val = F;
            best_w = vfeas.head(prob.dim);
            if (prob.has_lambda) best_lam = vfeas[prob.dim];
        }
        if (cuts.size() > 512) cuts.erase(cuts.begin(), cuts.begin() + 128);

        const double gap = best_val - lower_bound;
        if (!on_boundary && gap <= 1e-10 * (1.0 + std::abs(best_val))) return;
        center = pack(best_w, best_lam);
        if (improved && on_boundary) {
            // the incumbent moved to the box edge: the optimum may be outside
            radius *= 2.0;
            if (radius > 1e8 * (1.0 + center.cwiseAbs().maxCoeff())) return;
        } else if (!improved) {
            // null step: tighten the region so the model localizes
            radius = std::max(0.7 * radius, 1e-7 * (1.0 + center.cwiseAbs().maxCoeff()));
        }
    }
}

}  // namespace detail

inline CompositeResult solve_composite(const CompositeProblem& prob,
                                       const SolveOptions& opts = {}) {
    Vec w = prob.w0.size() == prob.dim ? prob.w0 : Vec::Zero(prob.dim);
    double lam = 0.0;
    if (prob.has_lambda) {
        lam = prob.cone_lip * dual_norm(prob.p, w);
        project_dual_norm_cone(prob.p, prob.cone_lip, w, lam);
    }

    Vec gw(prob.dim);
    double glam = 0.0;
    double F = prob.eval(w, lam, gw, glam);

    CompositeResult best{w, lam, F, 0, false};
    double window_best = F;
    int k = 0;
    for (k = 1; k <= opts.max_iterations; ++k) {
        Vec g(prob.dim + 1);
        g.head(prob.dim) = gw;
        g[prob.dim] = prob.has_lambda ? glam : 0.0;
        const double gn = g.norm();
        if (gn <= 1e-15) break;
        const double step = opts.step_c0 / std::sqrt(static_cast<double>(k));
        w -= (step / gn) * gw;
        if (prob.has_lambda) {
            lam -= (step / gn) * glam;
            project_dual_norm_cone(prob.p, prob.cone_lip, w, lam);
        }
        F = prob.eval(w, lam, gw, glam);
        if (F < best.value) {
            best.value = F;
            best.w = w;
            best.lambda = lam;
        }
        if (k % 100 == 0) {
            const double rel = (window_best - best.value) / std::max(1.0, std::abs(best.value));
            if (rel < opts.tolerance && k > 200) break;
            window_best = best.value;
        }
    }
    best.iterations = k;
    best.hit_max = k > opts.max_iterations;

    detail::polish_composite(prob, opts, best.w, best.lambda, best.value);
    return best;
}

// --------------------------------------------------------- norm-row rows

// Affine expression over LP variables.
struct LinExpr {
    std::vector<std::pair<int, double>> terms;
    double c = 0.0;

    void add(int var, double coef) {
        if (coef != 0.0) terms.push_back({var, coef});
    }
};

// Rows enforcing ||expr||_q <= scale * lam. q = Inf gives two rows per
// coordinate; q = One introduces one auxiliary bound variable per
// coordinate. q = Two is not LP-representable.
inline void add_norm_le_rows(LPBuilder& lb, const std::vector<LinExpr>& expr, Norm q,
                             int lam, double scale = 1.0) {
    switch (q) {
        case Norm::Inf: {
            for (const auto& e : expr) {
                auto pos = e.terms;
                pos.push_back({lam, -scale});
                lb.add_le(std::move(pos), -e.c);
                std::vector<std::pair<int, double>> neg;
                for (auto [v, co] : e.terms) neg.push_back({v, -co});
                neg.push_back({lam, -scale});
                lb.add_le(std::move(neg), e.c);
            }
            return;
        }
        case Norm::One: {
            std::vector<std::pair<int, double>> sum;
            for (const auto& e : expr) {
                const int t = lb.add_var("t", 0.0, kInf);
                auto pos = e.terms;
                pos.push_back({t, -1.0});
                lb.add_le(std::move(pos), -e.c);
                std::vector<std::pair<int, double>> neg;
                for (auto [v, co] : e.terms) neg.push_back({v, -co});
                neg.push_back({t, -1.0});
                lb.add_le(std::move(neg), e.c);
                sum.push_back({t, 1.0});
            }
            sum.push_back({lam, -scale});
            lb.add_le(std::move(sum), 0.0);
            return;
        }
        case Norm::Two:
            throw UnsupportedNorm("euclidean norm rows are not LP-representable");
    }
}

// ------------------------------------------------------------ Slater LP

// Strict-feasibility phase-1: maximize the uniform margin t (capped at 1)
// over C1 x + c2 y + t 1 <= d. Returns a strictly interior (x[, y]) or
// throws: InfeasibleSupport when even t < 0 cannot be achieved,
// NoSlaterPoint when the set is nonempty but has empty interior.
inline Vec find_slater_point(const SupportPolytope& S, bool with_output) {
    const int n = static_cast<int>(S.C1.cols());
    const int dim = n + (with_output ? 1 : 0);
    if (S.unconstrained()) return Vec::Zero(dim);
    if (S.slater) {
        if (S.slater->size() != dim)
            throw DimensionMismatch("stored interior point has wrong length");
        return *S.slater;
    }
    LPBuilder lb(true);
    std::vector<int> xs(dim);
    for (int j = 0; j < dim; ++j) xs[j] = lb.add_var("x", -kInf, kInf);
    const int t = lb.add_var("t", -kInf, 1.0, 1.0);
    for (Eigen::Index i = 0; i < S.rows(); ++i) {
        std::vector<std::pair<int, double>> terms;
        for (int j = 0; j < n; ++j)
            if (S.C1(i, j) != 0.0) terms.push_back({xs[j], S.C1(i, j)});
        if (with_output && S.c2[i] != 0.0) terms.push_back({xs[n], S.c2[i]});
        terms.push_back({t, 1.0});
        lb.add_le(std::move(terms), S.d[i]);
    }
    LPSolution sol = solve_lp(lb.take());
    if (sol.status != LPStatus::Optimal || sol[t] < -1e-9)
        throw InfeasibleSupport("support polytope is empty");
    if (sol[t] <= 1e-9)
        throw NoSlaterPoint("support polytope has empty interior");
    return sol.primal.head(dim);
}

// ---------------------------------------------------------- sym_eig_sqrt

inline Mat sym_eig_sqrt(const Mat& K) {
    if (K.rows() != K.cols()) throw NotSymmetric("matrix is not square");
    const double scale = std::max(1.0, K.cwiseAbs().maxCoeff());
    if ((K - K.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw NotSymmetric("asymmetry above 1e-8 tolerance");
    Eigen::SelfAdjointEigenSolver<Mat> es(0.5 * (K + K.transpose()));
    if (es.info() != Eigen::Success) throw SolverFailure("eigendecomposition failed");
    const Vec& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e-8 * top)
        throw IndefiniteBeyondTolerance("min eigenvalue " + std::to_string(ev.minCoeff()));
    Vec root = ev.cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace wassdrl
