#pragma once

// Core domain types: datasets, losses, transportation metrics, polyhedral
// support sets, and the norm machinery shared by every solver module.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace wassdrl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct Error : std::runtime_error {
    explicit Error(const std::string& m) : std::runtime_error(m) {}
};

#define WASSDRL_DEFINE_ERROR(NAME)                                  \
    struct NAME : Error {                                           \
        explicit NAME(const std::string& m) : Error(#NAME ": " + m) {} \
    }

WASSDRL_DEFINE_ERROR(ParseError);
WASSDRL_DEFINE_ERROR(LabelError);
WASSDRL_DEFINE_ERROR(DimensionMismatch);
WASSDRL_DEFINE_ERROR(NotPWL);
WASSDRL_DEFINE_ERROR(UnsupportedNorm);
WASSDRL_DEFINE_ERROR(InfeasibleSupport);
WASSDRL_DEFINE_ERROR(NoSlaterPoint);
WASSDRL_DEFINE_ERROR(BoundedSupportUnsupported);
WASSDRL_DEFINE_ERROR(GammaOutOfRange);
WASSDRL_DEFINE_ERROR(KappaInfinite);
WASSDRL_DEFINE_ERROR(UnsupportedDimension);
WASSDRL_DEFINE_ERROR(SampleSizeTooSmall);
WASSDRL_DEFINE_ERROR(RadiusViolation);
WASSDRL_DEFINE_ERROR(NotSymmetric);
WASSDRL_DEFINE_ERROR(IndefiniteBeyondTolerance);
WASSDRL_DEFINE_ERROR(MaxIterations);
WASSDRL_DEFINE_ERROR(DivergenceDetected);
WASSDRL_DEFINE_ERROR(InsufficientData);
WASSDRL_DEFINE_ERROR(SolverFailure);

#undef WASSDRL_DEFINE_ERROR

// ---------------------------------------------------------------- norms

enum class Norm { One, Two, Inf };

inline Norm dual(Norm p) {
    switch (p) {
        case Norm::One: return Norm::Inf;
        case Norm::Two: return Norm::Two;
        default: return Norm::One;
    }
}

inline double vec_norm(Norm p, const Vec& v) {
    switch (p) {
        case Norm::One: return v.lpNorm<1>();
        case Norm::Two: return v.norm();
        default: return v.size() ? v.lpNorm<Eigen::Infinity>() : 0.0;
    }
}

// ||v||_q with 1/p + 1/q = 1.
inline double dual_norm(Norm p, const Vec& v) { return vec_norm(dual(p), v); }

inline const char* norm_name(Norm p) {
    switch (p) {
        case Norm::One: return "1";
        case Norm::Two: return "2";
        default: return "inf";
    }
}

inline Vec concat(const Vec& x, double y) {
    Vec out(x.size() + 1);
    out.head(x.size()) = x;
    out[x.size()] = y;
    return out;
}

// A unit-norm direction u maximizing <v, u> over ||u||_p <= 1, so that
// <v, u> = dual_norm(p, v). Ties broken toward the lowest index.
inline Vec dual_achieving_direction(Norm p, const Vec& v) {
    const auto n = v.size();
    Vec u = Vec::Zero(n);
    if (n == 0) return u;
    switch (p) {
        case Norm::One: {
            Eigen::Index k = 0;
            v.cwiseAbs().maxCoeff(&k);
            u[k] = v[k] >= 0 ? 1.0 : -1.0;
            return u;
        }
        case Norm::Two: {
            double nv = v.norm();
            if (nv <= 0) { u[0] = 1.0; return u; }
            return v / nv;
        }
        default: {
            for (Eigen::Index k = 0; k < n; ++k) u[k] = v[k] >= 0 ? 1.0 : -1.0;
            return u;
        }
    }
}

// ---------------------------------------------------------------- datasets

enum class Task { Regression, Classification };

struct Dataset {
    Mat X;   // N x n, rows are inputs
    Vec y;   // length N
    Task task = Task::Regression;

    Eigen::Index size() const { return X.rows(); }
    Eigen::Index dim() const { return X.cols(); }
    Vec input(Eigen::Index i) const { return X.row(i).transpose(); }
};

inline void validate_dataset(const Dataset& ds) {
    if (ds.X.rows() < 1 || ds.X.cols() < 1)
        throw ParseError("dataset needs N >= 1 and n >= 1");
    if (ds.y.size() != ds.X.rows())
        throw DimensionMismatch("outputs length != number of rows");
    if (!ds.X.allFinite() || !ds.y.allFinite())
        throw ParseError("dataset contains NaN/Inf");
    if (ds.task == Task::Classification)
        for (Eigen::Index i = 0; i < ds.y.size(); ++i)
            if (ds.y[i] != 1.0 && ds.y[i] != -1.0)
                throw LabelError("classification label must be -1 or +1, got " +
                                 std::to_string(ds.y[i]));
}

inline Dataset make_dataset(Mat X, Vec y, Task task) {
    Dataset ds{std::move(X), std::move(y), task};
    validate_dataset(ds);
    return ds;
}

namespace detail {
inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.c_str();
    char* e = nullptr;
    out = std::strtod(b, &e);
    if (e == b) return false;
    while (*e == ' ' || *e == '\t' || *e == '\r') ++e;
    return *e == '\0';
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') { out.push_back(cur); cur.clear(); }
        else if (c != '\r') cur.push_back(c);
    }
    out.push_back(cur);
    return out;
}
}  // namespace detail

// CSV ingestion: last column is the output, the rest are inputs. A leading
// non-numeric row is treated as a header and skipped.
inline Dataset load_dataset(const std::string& path, Task task) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t lineno = 0, width = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t j = 0; j < fields.size(); ++j)
            if (!detail::parse_double(fields[j], row[j])) { numeric = false; break; }
        if (!numeric) {
            if (rows.empty() && lineno == 1) continue;  // header
            throw ParseError(path + ":" + std::to_string(lineno) + ": non-numeric field");
        }
        if (width == 0) width = row.size();
        if (row.size() != width || width < 2)
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad column count");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError(path + ": no data rows");
    const auto N = static_cast<Eigen::Index>(rows.size());
    const auto n = static_cast<Eigen::Index>(width - 1);
    Mat X(N, n);
    Vec y(N);
    for (Eigen::Index i = 0; i < N; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) X(i, j) = rows[i][j];
        y[i] = rows[i][n];
    }
    Dataset ds{std::move(X), std::move(y), task};
    validate_dataset(ds);
    return ds;
}

inline void save_dataset_csv(const Dataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot write " + path);
    out.precision(17);
    for (Eigen::Index i = 0; i < ds.size(); ++i) {
        for (Eigen::Index j = 0; j < ds.dim(); ++j) out << ds.X(i, j) << ',';
        out << ds.y[i] << '\n';
    }
}

// ---------------------------------------------------------------- losses

enum class LossKind { Hinge, SmoothHinge, Logloss, Huber, EpsInsensitive, Pinball, Absolute, PWL };

struct LossSpec {
    LossKind kind = LossKind::Hinge;
    double delta = 1.0;                          // Huber
    double eps = 0.1;                            // EpsInsensitive
    double tau = 0.5;                            // Pinball
    std::vector<std::pair<double, double>> pieces;  // PWL (a_j, b_j)

    static LossSpec hinge() { return {LossKind::Hinge}; }
    static LossSpec smooth_hinge() { return {LossKind::SmoothHinge}; }
    static LossSpec logloss() { return {LossKind::Logloss}; }
    static LossSpec huber(double d) {
        if (!(d > 0)) throw ParseError("huber delta must be > 0");
        LossSpec l{LossKind::Huber}; l.delta = d; return l;
    }
    static LossSpec eps_insensitive(double e) {
        if (!(e >= 0)) throw ParseError("eps must be >= 0");
        LossSpec l{LossKind::EpsInsensitive}; l.eps = e; return l;
    }
    static LossSpec pinball(double t) {
        if (!(t >= 0 && t <= 1)) throw ParseError("tau must be in [0,1]");
        LossSpec l{LossKind::Pinball}; l.tau = t; return l;
    }
    static LossSpec absolute() { return {LossKind::Absolute}; }
    static LossSpec pwl(std::vector<std::pair<double, double>> ps) {
        if (ps.empty()) throw ParseError("PWL needs J >= 1 pieces");
        LossSpec l{LossKind::PWL}; l.pieces = std::move(ps); return l;
    }

    bool is_pwl() const {
        switch (kind) {
            case LossKind::Huber:
            case LossKind::SmoothHinge:
            case LossKind::Logloss: return false;
            default: return true;
        }
    }
};

// Overflow-safe log(1 + exp(-z)).
inline double softplus_neg(double z) {
    return std::max(-z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double loss_eval(const LossSpec& L, double z) {
    switch (L.kind) {
        case LossKind::Hinge: return std::max(0.0, 1.0 - z);
        case LossKind::SmoothHinge:
            if (z <= 0) return 0.5 - z;
            if (z < 1) return 0.5 * (1.0 - z) * (1.0 - z);
            return 0.0;
        case LossKind::Logloss: return softplus_neg(z);
        case LossKind::Huber:
            return std::abs(z) <= L.delta ? 0.5 * z * z
                                          : L.delta * (std::abs(z) - 0.5 * L.delta);
        case LossKind::EpsInsensitive: return std::max(0.0, std::abs(z) - L.eps);
        case LossKind::Pinball: return std::max(-L.tau * z, (1.0 - L.tau) * z);
        case LossKind::Absolute: return std::abs(z);
        case LossKind::PWL: {
            double v = -kInf;
            for (auto [a, b] : L.pieces) v = std::max(v, a * z + b);
            return v;
        }
    }
    return 0.0;
}

inline double loss_lipschitz(const LossSpec& L) {
    switch (L.kind) {
        case LossKind::Hinge:
        case LossKind::SmoothHinge:
        case LossKind::Logloss:
        case LossKind::EpsInsensitive:
        case LossKind::Absolute: return 1.0;
        case LossKind::Huber: return L.delta;
        case LossKind::Pinball: return std::max(L.tau, 1.0 - L.tau);
        case LossKind::PWL: {
            double m = 0.0;
            for (auto [a, b] : L.pieces) m = std::max(m, std::abs(a));
            return m;
        }
    }
    return 0.0;
}

inline std::vector<std::pair<double, double>> pwl_pieces(const LossSpec& L) {
    switch (L.kind) {
        case LossKind::Hinge: return {{0.0, 0.0}, {-1.0, 1.0}};
        case LossKind::EpsInsensitive: return {{0.0, 0.0}, {1.0, -L.eps}, {-1.0, -L.eps}};
        case LossKind::Pinball: return {{-L.tau, 0.0}, {1.0 - L.tau, 0.0}};
        case LossKind::Absolute: return {{1.0, 0.0}, {-1.0, 0.0}};
        case LossKind::PWL: return L.pieces;
        default: throw NotPWL("loss has no piecewise-linear decomposition");
    }
}

// One subgradient of L at z (fixed tie-breaks at kinks).
inline double loss_grad(const LossSpec& L, double z) {
    switch (L.kind) {
        case LossKind::Hinge: return z < 1.0 ? -1.0 : 0.0;
        case LossKind::SmoothHinge:
            if (z <= 0) return -1.0;
            if (z < 1) return -(1.0 - z);
            return 0.0;
        case LossKind::Logloss: return -1.0 / (1.0 + std::exp(z));
        case LossKind::Huber:
            if (z > L.delta) return L.delta;
            if (z < -L.delta) return -L.delta;
            return z;
        case LossKind::EpsInsensitive:
            if (z > L.eps) return 1.0;
            if (z < -L.eps) return -1.0;
            return 0.0;
        case LossKind::Pinball: return z > 0 ? 1.0 - L.tau : (z < 0 ? -L.tau : 0.0);
        case LossKind::Absolute: return z > 0 ? 1.0 : (z < 0 ? -1.0 : 0.0);
        case LossKind::PWL: {
            double v = -kInf, a_best = 0.0;
            for (auto [a, b] : L.pieces)
                if (a * z + b > v) { v = a * z + b; a_best = a; }
            return a_best;
        }
    }
    return 0.0;
}

// True when L is differentiable at z and |L'(z)| equals the Lipschitz
// modulus. Conservative at kinks: measure-zero boundary points return false.
inline bool slope_attains_lipschitz(const LossSpec& L, double z) {
    switch (L.kind) {
        case LossKind::Hinge: return z < 1.0;
        case LossKind::SmoothHinge: return z < 0.0;
        case LossKind::Logloss: return false;
        case LossKind::Huber: return std::abs(z) >= L.delta;  // C^1, |L'| = delta there
        case LossKind::EpsInsensitive: return std::abs(z) > L.eps;
        case LossKind::Pinball:
            if (L.tau > 0.5) return z < 0.0;
            if (L.tau < 0.5) return z > 0.0;
            return z != 0.0;
        case LossKind::Absolute: return z != 0.0;
        case LossKind::PWL: {
            double v = -kInf;
            int argmax = -1, ties = 0;
            const double lip = loss_lipschitz(L);
            for (int j = 0; j < static_cast<int>(L.pieces.size()); ++j) {
                double val = L.pieces[j].first * z + L.pieces[j].second;
                if (val > v + 1e-12) { v = val; argmax = j; ties = 1; }
                else if (val > v - 1e-12) ++ties;
            }
            return ties == 1 && argmax >= 0 &&
                   std::abs(L.pieces[argmax].first) >= lip - 1e-12;
        }
    }
    return false;
}

// Asymptotic slopes (limit of L' at +inf and -inf); drives the displacement
// direction of the worst-case sequence constructions.
inline std::pair<double, double> loss_slopes_at_infinity(const LossSpec& L) {
    switch (L.kind) {
        case LossKind::Hinge:
        case LossKind::SmoothHinge:
        case LossKind::Logloss: return {0.0, -1.0};
        case LossKind::Huber: return {L.delta, -L.delta};
        case LossKind::EpsInsensitive:
        case LossKind::Absolute: return {1.0, -1.0};
        case LossKind::Pinball: return {1.0 - L.tau, -L.tau};
        case LossKind::PWL: {
            double hi = -kInf, lo = kInf;
            for (auto [a, b] : L.pieces) { hi = std::max(hi, a); lo = std::min(lo, a); }
            return {hi, lo};
        }
    }
    return {0.0, 0.0};
}

inline std::string loss_name(const LossSpec& L) {
    switch (L.kind) {
        case LossKind::Hinge: return "hinge";
        case LossKind::SmoothHinge: return "smooth_hinge";
        case LossKind::Logloss: return "logloss";
        case LossKind::Huber: return "huber";
        case LossKind::EpsInsensitive: return "eps_insensitive";
        case LossKind::Pinball: return "pinball";
        case LossKind::Absolute: return "absolute";
        case LossKind::PWL: return "pwl";
    }
    return "?";
}

// ---------------------------------------------------------------- metrics

enum class MetricKind { SeparableClassification, SeparableRegression, JointRegression };

// Ground transportation cost on the input(-output) space. kappa prices
// output movement: |y - y'| for regression, the label flip for
// classification. kappa = inf freezes the output marginal.
struct TransportCost {
    Norm p = Norm::Two;
    MetricKind kind = MetricKind::JointRegression;
    double kappa = kInf;

    static TransportCost joint_regression(Norm p) {
        return {p, MetricKind::JointRegression, kInf};
    }
    static TransportCost separable_regression(Norm p, double kappa) {
        if (!(kappa >= 0)) throw ParseError("kappa must be >= 0");
        return {p, MetricKind::SeparableRegression, kappa};
    }
    static TransportCost classification(Norm p, double kappa) {
        if (!(kappa >= 0)) throw ParseError("kappa must be >= 0");
        return {p, MetricKind::SeparableClassification, kappa};
    }

    double input_cost(const Vec& dx) const { return vec_norm(p, dx); }
    double input_dual(const Vec& zx) const { return dual_norm(p, zx); }

    double regression_cost(const Vec& dx, double dy) const {
        if (kind == MetricKind::JointRegression) return vec_norm(p, concat(dx, dy));
        if (dy == 0.0) return vec_norm(p, dx);
        return vec_norm(p, dx) + kappa * std::abs(dy);
    }

    // Dual norm of (zx, zy) under the regression ground norm.
    double regression_dual(const Vec& zx, double zy) const {
        if (kind == MetricKind::JointRegression) return dual_norm(p, concat(zx, zy));
        double ycost;
        if (kappa == kInf) ycost = 0.0;
        else if (kappa == 0.0) ycost = zy == 0.0 ? 0.0 : kInf;
        else ycost = std::abs(zy) / kappa;
        return std::max(dual_norm(p, zx), ycost);
    }

    double classification_cost(const Vec& dx, bool flip) const {
        double c = vec_norm(p, dx);
        return flip ? c + kappa : c;
    }
};

// ---------------------------------------------------------------- supports

// {(x, y) : C1 x + c2 y <= d} for regression, {x : C1 x <= d} for
// classification (c2 empty). No rows = the whole space.
struct SupportPolytope {
    Mat C1;                      // m x n
    Vec c2;                      // m or empty
    Vec d;                       // m
    std::optional<Vec> slater;   // strict interior point (x[, y])

    bool unconstrained() const { return d.size() == 0; }
    Eigen::Index rows() const { return d.size(); }
    bool has_output_terms() const { return c2.size() > 0; }

    static SupportPolytope all_space() { return {}; }

    // Joint box [lo, hi]^{n+1} over (x, y).
    static SupportPolytope joint_box(Eigen::Index n, double lo, double hi) {
        SupportPolytope s;
        const Eigen::Index k = n + 1;
        s.C1 = Mat::Zero(2 * k, n);
        s.c2 = Vec::Zero(2 * k);
        s.d = Vec::Zero(2 * k);
        for (Eigen::Index j = 0; j < k; ++j) {
            if (j < n) { s.C1(2 * j, j) = 1.0; s.C1(2 * j + 1, j) = -1.0; }
            else { s.c2[2 * j] = 1.0; s.c2[2 * j + 1] = -1.0; }
            s.d[2 * j] = hi;
            s.d[2 * j + 1] = -lo;
        }
        Vec mid = Vec::Constant(k, 0.5 * (lo + hi));
        s.slater = mid;
        return s;
    }

    // Input-only box [lo, hi]^n.
    static SupportPolytope input_box(Eigen::Index n, double lo, double hi) {
        SupportPolytope s;
        s.C1 = Mat::Zero(2 * n, n);
        s.d = Vec::Zero(2 * n);
        for (Eigen::Index j = 0; j < n; ++j) {
            s.C1(2 * j, j) = 1.0;
            s.C1(2 * j + 1, j) = -1.0;
            s.d[2 * j] = hi;
            s.d[2 * j + 1] = -lo;
        }
        s.slater = Vec::Constant(n, 0.5 * (lo + hi));
        return s;
    }

    // Residual vector d - C1 x (- c2 y); all entries >= 0 iff inside.
    Vec margins(const Vec& x, std::optional<double> y = std::nullopt) const {
        if (unconstrained()) return Vec();
        Vec r = d - C1 * x;
        if (has_output_terms()) {
            if (!y) throw DimensionMismatch("support expects an output coordinate");
            r -= c2 * (*y);
        }
        return r;
    }

    bool contains(const Vec& x, std::optional<double> y = std::nullopt,
                  double tol = 1e-9) const {
        if (unconstrained()) return true;
        return margins(x, y).minCoeff() >= -tol;
    }
};

inline void check_slater(const SupportPolytope& s) {
    if (s.unconstrained()) return;
    if (!s.slater) throw NoSlaterPoint("no interior point stored");
    const Vec& pt = *s.slater;
    Vec x = pt.head(s.C1.cols());
    std::optional<double> y;
    if (s.has_output_terms()) y = pt[pt.size() - 1];
    Vec m = s.margins(x, y);
    if (m.size() && m.minCoeff() <= 1e-9)
        throw NoSlaterPoint("stored point is not strictly interior");
}

// ---------------------------------------------------------------- hypotheses

struct LinearHypothesis {
    Vec w;

    double operator()(const Vec& x) const {
        if (x.size() != w.size())
            throw DimensionMismatch("hypothesis dim " + std::to_string(w.size()) +
                                    " vs input dim " + std::to_string(x.size()));
        return w.dot(x);
    }
};

struct TrainResult {
    LinearHypothesis hypothesis;
    double value = 0.0;
};

inline double residual(const LinearHypothesis& h, const Vec& x, double y) {
    return h(x) - y;
}

inline double empirical_loss_regression(const Dataset& ds, const LossSpec& L,
                                        const LinearHypothesis& h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        s += loss_eval(L, h(ds.input(i)) - ds.y[i]);
    return s / static_cast<double>(ds.size());
}

inline double empirical_loss_classification(const Dataset& ds, const LossSpec& L,
                                            const LinearHypothesis& h) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        s += loss_eval(L, ds.y[i] * h(ds.input(i)));
    return s / static_cast<double>(ds.size());
}

}  // namespace wassdrl
