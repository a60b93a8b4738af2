#include "ebcbf/safety_filter.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace ebcbf {

namespace {
constexpr double kLghVanish = 1e-10;
}

void FilterConfig::validate(Eigen::Index m) const {
    if (!(gamma > 0.0)) throw InputError("FilterConfig: gamma must be > 0");
    if (!(beta_f >= 0.0)) throw InputError("FilterConfig: beta_f must be >= 0");
    if (input_bounds) {
        if (input_bounds->lower.size() != m || input_bounds->upper.size() != m)
            throw InputError("FilterConfig: input bounds must have one entry per input channel");
        if ((input_bounds->lower.array() > input_bounds->upper.array()).any())
            throw InputError("FilterConfig: input lower bound exceeds upper bound");
    }
}

Matrix psd_sqrt(const Matrix& sigma) {
    const Matrix sym = 0.5 * (sigma + sigma.transpose());
    const double tr = std::max(sym.trace(), 0.0);
    Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
    const double floor = 1e-10 * tr;
    if (es.eigenvalues().minCoeff() < -1e-6 * std::max(tr, 1e-300))
        throw NumericalError("psd_sqrt: drift covariance is not positive semidefinite beyond tolerance");
    const Vector root = es.eigenvalues().cwiseMax(floor).cwiseSqrt();
    return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

double phi_lower(const Vector& grad_h, double h, const Vector& mu_f, const Matrix& sigma_f, double gamma, double beta_f) {
    if (grad_h.size() != mu_f.size() || sigma_f.rows() != mu_f.size() || sigma_f.cols() != mu_f.size())
        throw InputError("phi_lower: dimension mismatch");
    return grad_h.dot(mu_f) + gamma * h - beta_f * (psd_sqrt(sigma_f) * grad_h).norm();
}

FilterTerms filter_terms(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x) {
    const BarrierValue b = h_eb_with_gradient(spec, model, x);
    FilterTerms t;
    t.h = b.value;
    t.grad_h = b.gradient;
    t.drift = model.drift(x);
    t.g = model.structure().G(x);
    t.lgh = t.g.transpose() * t.grad_h;
    t.phi = phi_lower(t.grad_h, t.h, t.drift.mean, t.drift.cov, cfg.gamma, cfg.beta_f);
    if (!std::isfinite(t.phi)) throw NumericalError("phi_lower: non-finite value");
    return t;
}

double phi_lower(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x) {
    return filter_terms(model, spec, cfg, x).phi;
}

namespace {

bool in_box(const Vector& u, const InputBounds& b, double tol) {
    return ((u.array() >= b.lower.array() - tol) && (u.array() <= b.upper.array() + tol)).all();
}

// Enumerates active sets of box ∩ half-space; the feasible candidate with least cost is the QP optimum.
Vector solve_box_qp(double phi, const Vector& a, const Vector& u_nom, const InputBounds& b) {
    const Eigen::Index m = u_nom.size();
    if (m > 12) throw InputError("solve_filter_qp: active-set enumeration supports at most 12 input channels");
    const double scale = 1.0 + std::abs(phi) + a.norm() * (1.0 + u_nom.norm());
    const double tol = 1e-12 * scale;
    long combos = 1;
    for (Eigen::Index i = 0; i < m; ++i) combos *= 3;

    Vector best;
    double best_cost = std::numeric_limits<double>::infinity();
    std::vector<int> state(static_cast<std::size_t>(m));
    for (long code = 0; code < combos; ++code) {
        long c = code;
        for (Eigen::Index i = 0; i < m; ++i) {
            state[static_cast<std::size_t>(i)] = static_cast<int>(c % 3);  // 0 free, 1 lower, 2 upper
            c /= 3;
        }
        for (int halfspace = 0; halfspace < 2; ++halfspace) {
            Vector u = u_nom;
            double fixed = 0.0, free_norm2 = 0.0;
            for (Eigen::Index i = 0; i < m; ++i) {
                const int s = state[static_cast<std::size_t>(i)];
                if (s == 1) u(i) = b.lower(i);
                if (s == 2) u(i) = b.upper(i);
                if (s != 0) fixed += a(i) * u(i);
                else free_norm2 += a(i) * a(i);
            }
            if (halfspace == 1) {
                if (free_norm2 <= kLghVanish * kLghVanish) continue;
                double free_dot = 0.0;
                for (Eigen::Index i = 0; i < m; ++i)
                    if (state[static_cast<std::size_t>(i)] == 0) free_dot += a(i) * u_nom(i);
                const double lambda = (-phi - fixed - free_dot) / free_norm2;
                for (Eigen::Index i = 0; i < m; ++i)
                    if (state[static_cast<std::size_t>(i)] == 0) u(i) = u_nom(i) + lambda * a(i);
            }
            if (!in_box(u, b, tol) || phi + a.dot(u) < -tol) continue;
            const double cost = (u - u_nom).squaredNorm();
            if (cost < best_cost) {
                best_cost = cost;
                best = u;
            }
        }
    }
    if (best.size() == 0)
        throw InfeasibilityError("solve_filter_qp: input box and barrier half-space do not intersect");
    return best.cwiseMax(b.lower).cwiseMin(b.upper);
}

}  // namespace

QpSolution solve_filter_qp(double phi, const Vector& lgh, const Vector& u_nom, const std::optional<InputBounds>& bounds) {
    if (lgh.size() != u_nom.size()) throw InputError("solve_filter_qp: input dimension mismatch");
    QpSolution sol;
    const double psi = phi + lgh.dot(u_nom);
    const double lgh2 = lgh.squaredNorm();
    const bool vanishing = lgh.norm() <= kLghVanish;
    if (psi < 0.0 && vanishing)
        throw DegeneracyError("filter_control: barrier constraint is active (psi = " + std::to_string(psi) +
                              ") but ||g^T grad h_EB|| vanishes");

    Vector u = u_nom;
    if (psi < 0.0) {
        u = u_nom - lgh * (psi / lgh2);
        sol.active = true;
    }
    sol.lgh_vanishing = vanishing && !sol.active;
    if (bounds) {
        const double tol = 1e-12 * (1.0 + std::abs(phi) + std::sqrt(lgh2) * (1.0 + u_nom.norm()));
        if (!in_box(u, *bounds, tol) || phi + lgh.dot(u) < -tol) {
            u = solve_box_qp(phi, lgh, u_nom, *bounds);
            sol.active = (u - u_nom).norm() > 0.0;
        }
    }
    sol.u = u;
    return sol;
}

Vector filter_control(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x,
                      const Vector& u_nom) {
    cfg.validate(model.structure().m);
    const FilterTerms t = filter_terms(model, spec, cfg, x);
    return solve_filter_qp(t.phi, t.lgh, u_nom, cfg.input_bounds).u;
}

double ebcbf_constraint_residual(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg,
                                 const Vector& x, const Vector& u) {
    const FilterTerms t = filter_terms(model, spec, cfg, x);
    if (u.size() != t.lgh.size()) throw InputError("ebcbf_constraint_residual: input dimension mismatch");
    return t.phi + t.lgh.dot(u);
}

}  // namespace ebcbf
