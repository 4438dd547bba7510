#pragma once

// RKHS machinery: calm kernels and their growth functions, kernel matrices
// with cached square-root factorizations, lifted radii, and representer
// trainers that reduce the lifted learning problems to finite programs in
// the coefficient vector beta.

#include <cmath>
#include <string>

#include "wassdrl/core.hpp"
#include "wassdrl/solver.hpp"

namespace wassdrl {

enum class KernelKind { Linear, Gaussian, Laplacian, Polynomial };

struct KernelSpec {
    KernelKind kind = KernelKind::Linear;
    double gamma = 0.0;
    int degree = 1;
    double radius = 0.0;  // Polynomial: bound on ||x||_2; 0 = derive from data

    static KernelSpec linear() { return {}; }
    static KernelSpec gaussian(double gamma) {
        if (!(gamma > 0.0)) throw GammaOutOfRange("gaussian peakedness must be positive");
        return {KernelKind::Gaussian, gamma};
    }
    static KernelSpec laplacian(double gamma) {
        if (!(gamma > 0.0)) throw GammaOutOfRange("laplacian peakedness must be positive");
        return {KernelKind::Laplacian, gamma};
    }
    static KernelSpec polynomial(double gamma, int degree, double radius = 0.0) {
        if (!(gamma > 0.0)) throw GammaOutOfRange("polynomial peakedness must be positive");
        if (degree < 1) throw GammaOutOfRange("polynomial degree must be >= 1");
        if (radius < 0.0) throw RadiusViolation("radius bound must be >= 0");
        return {KernelKind::Polynomial, gamma, degree, radius};
    }
};

inline const char* kernel_name(KernelKind k) {
    switch (k) {
        case KernelKind::Linear: return "linear";
        case KernelKind::Gaussian: return "gaussian";
        case KernelKind::Laplacian: return "laplacian";
        default: return "polynomial";
    }
}

namespace detail {

inline void check_poly_radius(const KernelSpec& spec, const Vec& x) {
    if (spec.radius <= 0.0)
        throw RadiusViolation("polynomial kernel has no radius bound set");
    if (x.norm() > spec.radius * (1.0 + 1e-8))
        throw RadiusViolation("input 2-norm " + std::to_string(x.norm()) +
                              " exceeds the bound " + std::to_string(spec.radius));
}

}  // namespace detail

inline double kernel_eval(const KernelSpec& spec, const Vec& x1, const Vec& x2) {
    if (x1.size() != x2.size()) throw DimensionMismatch("kernel arguments differ in size");
    switch (spec.kind) {
        case KernelKind::Linear: return x1.dot(x2);
        case KernelKind::Gaussian: return std::exp(-spec.gamma * (x1 - x2).squaredNorm());
        case KernelKind::Laplacian:
            return std::exp(-spec.gamma * (x1 - x2).lpNorm<1>());
        default:
            detail::check_poly_radius(spec, x1);
            detail::check_poly_radius(spec, x2);
            return std::pow(spec.gamma * x1.dot(x2) + 1.0, spec.degree);
    }
}

// Fills in a data-derived radius bound for polynomial kernels (slightly above
// the largest training-input 2-norm); other kernels pass through unchanged.
inline KernelSpec resolve_radius(const KernelSpec& spec, const Dataset& ds) {
    if (spec.kind != KernelKind::Polynomial || spec.radius > 0.0) return spec;
    double top = 0.0;
    for (Eigen::Index i = 0; i < ds.size(); ++i)
        top = std::max(top, ds.input(i).norm());
    KernelSpec out = spec;
    out.radius = top > 0.0 ? top * (1.0 + 1e-9) : 1.0;
    return out;
}

// Concave majorant g of the kernel-induced feature distance: the RKHS
// distance between features is at most g of the euclidean input distance,
// with g(0) = 0 and slope >= 1. The input dimension only matters for the
// laplacian branch.
inline double growth_function(const KernelSpec& spec, double z, int input_dim) {
    z = std::max(z, 0.0);
    switch (spec.kind) {
        case KernelKind::Linear: return z;
        case KernelKind::Gaussian: return std::max(std::sqrt(2.0 * spec.gamma), 1.0) * z;
        case KernelKind::Laplacian: {
            const double rootn = std::sqrt(static_cast<double>(input_dim));
            const double zc = spec.gamma * rootn / 2.0;
            return z <= zc ? std::sqrt(2.0 * spec.gamma * z * rootn) : z + zc;
        }
        default: {
            // Exact Lipschitz modulus of the feature map on the radius ball:
            // the largest eigenvalue of d_x d_x' k(x, x') at ||x|| = ||x'|| = R
            // is gamma d (gamma R^2 + 1)^(d-2) (gamma d R^2 + 1).
            if (spec.radius <= 0.0)
                throw RadiusViolation("polynomial kernel has no radius bound set");
            const double gR2 = spec.gamma * spec.radius * spec.radius;
            const double L2 = spec.gamma * spec.degree *
                              std::pow(gR2 + 1.0, spec.degree - 2) *
                              (spec.degree * gR2 + 1.0);
            return std::max(std::sqrt(L2), 1.0) * z;
        }
    }
}

// Radius a lifted feature-space ball needs so that it dominates the original
// input-output ball of radius rho.
inline double lifted_radius(double rho, const KernelSpec& spec, Task task, int input_dim) {
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    const double g = growth_function(spec, rho, input_dim);
    return task == Task::Regression ? std::sqrt(2.0) * g : g;
}

inline Mat kernel_matrix(const Dataset& ds, const KernelSpec& spec) {
    validate_dataset(ds);
    const KernelSpec k = resolve_radius(spec, ds);
    const auto N = ds.size();
    Mat K(N, N);
    for (Eigen::Index i = 0; i < N; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            K(i, j) = K(j, i) = kernel_eval(k, ds.input(i), ds.input(j));
    return K;
}

struct KernelHypothesis {
    KernelSpec kernel;
    Mat anchors;  // N x n training inputs
    Vec beta;     // length N

    double operator()(const Vec& x) const;
};

struct KernelTrainResult {
    KernelHypothesis hypothesis;
    double value = 0.0;
};

inline double kernel_predict(const KernelHypothesis& h, const Vec& x) {
    if (x.size() != h.anchors.cols())
        throw DimensionMismatch("input dimension != anchor dimension");
    if (h.beta.size() != h.anchors.rows())
        throw DimensionMismatch("coefficient count != anchor count");
    double out = 0.0;
    for (Eigen::Index i = 0; i < h.beta.size(); ++i)
        out += h.beta[i] * kernel_eval(h.kernel, x, h.anchors.row(i).transpose());
    return out;
}

inline double KernelHypothesis::operator()(const Vec& x) const {
    return kernel_predict(*this, x);
}

namespace detail {

// One factorization per solve: K, its PSD square root S, and the
// pseudo-inverse of S used to recover beta from the substitution u = S beta.
struct KernelFactor {
    Mat K;
    Mat S;
    Mat Sinv;
};

inline KernelFactor kernel_factor(const Dataset& ds, const KernelSpec& spec) {
    KernelFactor f;
    f.K = kernel_matrix(ds, spec);
    Eigen::SelfAdjointEigenSolver<Mat> es(f.K);
    if (es.info() != Eigen::Success) throw SolverFailure("eigendecomposition failed");
    const Vec& ev = es.eigenvalues();
    const double top = std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    if (ev.minCoeff() < -1e-8 * top)
        throw IndefiniteBeyondTolerance("kernel matrix eigenvalue " +
                                        std::to_string(ev.minCoeff()));
    // rank-consistent truncation: directions dropped from the pseudo-inverse
    // must carry exactly zero weight in S, or a flat objective lets the
    // solver park meaningless mass on roundoff-scale eigenvalues
    Vec root = ev.cwiseMax(0.0).cwiseSqrt();
    Vec inv = root;
    const double cutoff = 1e-6 * std::sqrt(top);
    for (Eigen::Index i = 0; i < inv.size(); ++i) {
        inv[i] = root[i] > cutoff ? 1.0 / root[i] : 0.0;
        if (root[i] <= cutoff) root[i] = 0.0;
    }
    f.S = es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
    f.Sinv = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    return f;
}

}  // namespace detail

// min over beta of (1/N) sum_i L((K beta)_i - y_i) + rho lip ||(K^{1/2} beta, 1)||_2,
// solved in the substituted variable u = K^{1/2} beta, where K beta = S u and
// the penalty becomes the smooth term sqrt(||u||^2 + 1).
inline KernelTrainResult train_kernel_regression(const Dataset& ds, const KernelSpec& spec,
                                                 const LossSpec& loss, double rho,
                                                 const SolveOptions& opts = {}) {
    if (ds.task != Task::Regression)
        throw ParseError("kernel regression requires a regression dataset");
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    const auto f = detail::kernel_factor(ds, spec);
    const auto N = ds.size();
    const double lip = loss_lipschitz(loss);

    CompositeProblem cp;
    cp.dim = static_cast<int>(N);
    cp.eval = [&](const Vec& u, double, Vec& gu, double&) {
        const Vec r = f.S * u - ds.y;
        double total = 0.0;
        Vec gr(N);
        for (Eigen::Index i = 0; i < N; ++i) {
            total += loss_eval(loss, r[i]);
            gr[i] = loss_grad(loss, r[i]);
        }
        total /= N;
        gu = f.S * gr / static_cast<double>(N);
        const double t = std::sqrt(u.squaredNorm() + 1.0);
        gu += (rho * lip / t) * u;
        return total + rho * lip * t;
    };
    auto res = solve_composite(cp, opts);
    return {{resolve_radius(spec, ds), ds.X, f.Sinv * res.w}, res.value};
}

// min over (beta, lambda) of
//   lambda rho + (1/N) sum_i max{ L(y_i (K beta)_i), L(-y_i (K beta)_i) - kappa lambda }
//   s.t. lip ||K^{1/2} beta||_2 <= lambda,
// in the substituted variable u = K^{1/2} beta; kappa = inf drops the flipped
// branch and reduces to the euclidean-regularized empirical objective.
inline KernelTrainResult train_kernel_classification(const Dataset& ds,
                                                     const KernelSpec& spec,
                                                     const LossSpec& loss, double rho,
                                                     double kappa,
                                                     const SolveOptions& opts = {}) {
    if (ds.task != Task::Classification)
        throw ParseError("kernel classification requires a classification dataset");
    if (!(rho >= 0.0)) throw ParseError("radius must be >= 0");
    if (!(kappa > 0.0)) throw ParseError("kappa must be positive");
    const auto f = detail::kernel_factor(ds, spec);
    const auto N = ds.size();
    const double lip = loss_lipschitz(loss);

    CompositeProblem cp;
    cp.dim = static_cast<int>(N);
    if (kappa == kInf) {
        cp.eval = [&](const Vec& u, double, Vec& gu, double&) {
            const Vec z = f.S * u;
            double total = 0.0;
            Vec gz(N);
            for (Eigen::Index i = 0; i < N; ++i) {
                total += loss_eval(loss, ds.y[i] * z[i]);
                gz[i] = ds.y[i] * loss_grad(loss, ds.y[i] * z[i]);
            }
            total /= N;
            gu = f.S * gz / static_cast<double>(N);
            const double nu = u.norm();
            if (nu > 0.0) gu += (rho * lip / nu) * u;
            return total + rho * lip * nu;
        };
        auto res = solve_composite(cp, opts);
        return {{resolve_radius(spec, ds), ds.X, f.Sinv * res.w}, res.value};
    }

    // The multiplier is eliminated per u: the inner problem
    //   min { lam rho + (1/N) sum max(kept_i, flip_i - kappa lam) : lam >= lip ||u|| }
    // is piecewise linear in lam with breakpoints (flip_i - kept_i) / kappa,
    // so the minimum sits at the cone corner or a breakpoint. Subgradients in
    // u need a zero lambda-component, which at a breakpoint means mixing the
    // tied sample's branches (and at the corner, a chain term along u).
    cp.eval = [&](const Vec& u, double, Vec& gu, double&) {
        const Vec z = f.S * u;
        const double lam0 = lip * u.norm();
        Vec kept(N), flip(N);
        for (Eigen::Index i = 0; i < N; ++i) {
            const double zi = ds.y[i] * z[i];
            kept[i] = loss_eval(loss, zi);
            flip[i] = loss_eval(loss, -zi);
        }
        auto G = [&](double lam) {
            double v = lam * rho;
            for (Eigen::Index i = 0; i < N; ++i)
                v += std::max(kept[i], flip[i] - kappa * lam) / N;
            return v;
        };
        double lam = lam0;
        double best = G(lam0);
        for (Eigen::Index i = 0; i < N; ++i) {
            const double b = (flip[i] - kept[i]) / kappa;
            if (b <= lam0) continue;
            const double v = G(b);
            if (v < best) {
                best = v;
                lam = b;
            }
        }

        const double tol = 1e-11 * (1.0 + std::abs(best));
        Vec gz = Vec::Zero(N);
        double dlam = rho;  // ties resolved to kept = right derivative in lam
        std::vector<Eigen::Index> ties;
        for (Eigen::Index i = 0; i < N; ++i) {
            const double zi = ds.y[i] * z[i];
            const double gap = flip[i] - kappa * lam - kept[i];
            if (gap > tol) {
                gz[i] = -ds.y[i] * loss_grad(loss, -zi) / N;
                dlam -= kappa / N;
            } else if (gap >= -tol) {
                ties.push_back(i);
                gz[i] = ds.y[i] * loss_grad(loss, zi) / N;
            } else {
                gz[i] = ds.y[i] * loss_grad(loss, zi) / N;
            }
        }
        if (lam > lam0 + tol) {
            double need = dlam;
            for (auto i : ties) {
                const double zi = ds.y[i] * z[i];
                const double th = std::clamp(need * N / kappa, 0.0, 1.0);
                gz[i] = (1.0 - th) * ds.y[i] * loss_grad(loss, zi) / N -
                        th * ds.y[i] * loss_grad(loss, -zi) / N;
                need -= th * kappa / N;
            }
            gu = f.S * gz;
        } else {
            gu = f.S * gz;
            const double nu = u.norm();
            if (nu > 0.0 && dlam > 0.0) gu += (dlam * lip / nu) * u;
        }
        return best;
    };
    auto res = solve_composite(cp, opts);
    return {{resolve_radius(spec, ds), ds.X, f.Sinv * res.w}, res.value};
}

}  // namespace wassdrl
