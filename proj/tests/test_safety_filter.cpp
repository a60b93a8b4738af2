#include <gtest/gtest.h>

#include <Eigen/LU>

#include "support.hpp"

using namespace ebcbf;
using namespace ebcbf::testing;

namespace {

Matrix random_spd(std::mt19937_64& rng, Eigen::Index n, double scale) {
    Matrix M(n, n);
    std::normal_distribution<double> nd;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) M(i, j) = nd(rng);
    Matrix S = scale * M * M.transpose() / static_cast<double>(n);
    S.diagonal().array() += 0.05 * scale;
    return S;
}

// Equality-constrained QP solved through its KKT system.
Vector kkt_solve(double phi, const Vector& a, const Vector& u_nom) {
    const Eigen::Index m = a.size();
    Matrix K = Matrix::Zero(m + 1, m + 1);
    K.topLeftCorner(m, m) = 2.0 * Matrix::Identity(m, m);
    K.block(0, m, m, 1) = -a;
    K.block(m, 0, 1, m) = a.transpose();
    Vector rhs(m + 1);
    rhs << 2.0 * u_nom, -phi;
    return K.fullPivLu().solve(rhs).head(m);
}

}  // namespace

TEST(PhiLower, DirectSubstitution) {
    EXPECT_NEAR(phi_lower(vec({1, 0}), 0.0, vec({0, 0}), Matrix::Identity(2, 2), 1.0, 1.0), -1.0, 1e-15);
    const Vector g = vec({0.3, -1.2}), mu = vec({0.5, 0.1});
    EXPECT_NEAR(phi_lower(g, 0.4, mu, Matrix::Identity(2, 2) * 3.0, 2.0, 0.0), g.dot(mu) + 0.8, 1e-15);
    EXPECT_THROW(phi_lower(vec({1}), 0.0, vec({0, 0}), Matrix::Identity(2, 2), 1.0, 1.0), InputError);
}

TEST(PhiLower, MatchesEllipsoidSamplingMinimum) {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 10; ++t) {
        const Matrix S = random_spd(rng, 2, 0.5);
        const Vector g = uniform_vector(rng, 2, -1, 1), mu = uniform_vector(rng, 2, -1, 1);
        const double h = 0.3, gamma = 1.5, beta = 2.0;
        const double closed = phi_lower(g, h, mu, S, gamma, beta);
        const Matrix Sinv = S.inverse();
        const Eigen::SelfAdjointEigenSolver<Matrix> es(S);
        const double r = beta * std::sqrt(es.eigenvalues().maxCoeff());
        int accepted = 0;
        while (accepted < 20000) {
            Vector v = mu + r * vec({u(rng), u(rng)});
            if ((v - mu).dot(Sinv * (v - mu)) > beta * beta) continue;
            ++accepted;
            EXPECT_LE(closed, g.dot(v) + gamma * h + 1e-12);
        }
        // random boundary points of the ellipsoid
        std::normal_distribution<double> nd;
        const Matrix Lc = S.llt().matrixL();
        double best = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 100000; ++k) {
            Vector z = vec({nd(rng), nd(rng)});
            z.normalize();
            best = std::min(best, g.dot(mu + beta * Lc * z) + gamma * h);
        }
        EXPECT_LE(closed, best + 1e-12);
        EXPECT_LE(best - closed, 1e-3 * std::max(1.0, std::abs(closed)));

        // the minimum of a linear function sits on the boundary mu + beta C (cos t, sin t)
        const Matrix C = S.llt().matrixL();
        double edge = std::numeric_limits<double>::infinity();
        for (int k = 0; k < 100000; ++k) {
            const double th = 2.0 * M_PI * k / 100000.0;
            edge = std::min(edge, g.dot(mu + beta * C * vec({std::cos(th), std::sin(th)})) + gamma * h);
        }
        EXPECT_NEAR(closed, edge, 1e-8 * std::max(1.0, std::abs(closed)));
    }
}

TEST(PsdSqrt, FloorsAndRejects) {
    Matrix S(2, 2);
    S << 1.0, 1.0, 1.0, 1.0;
    const Matrix R = psd_sqrt(S);
    EXPECT_LE((R * R - S).cwiseAbs().maxCoeff(), 1e-9);
    S << 1.0, 0.0, 0.0, -0.5;
    EXPECT_THROW(psd_sqrt(S), NumericalError);
}

TEST(SolveFilterQp, InactiveReturnsNominalExactly) {
    std::mt19937_64 rng(22);
    for (int t = 0; t < 100; ++t) {
        const Vector a = uniform_vector(rng, 2, -1, 1), u_nom = uniform_vector(rng, 2, -2, 2);
        const double phi = -a.dot(u_nom) + 0.1 + t * 0.01;
        const QpSolution s = solve_filter_qp(phi, a, u_nom, std::nullopt);
        EXPECT_FALSE(s.active);
        EXPECT_EQ(s.u, u_nom);
    }
}

TEST(SolveFilterQp, ActiveMatchesKktAndHandExample) {
    const QpSolution s = solve_filter_qp(-2.0, vec({1.0}), vec({0.0}), std::nullopt);
    EXPECT_NEAR(s.u(0), 2.0, 1e-15);
    EXPECT_NEAR(-2.0 + s.u(0), 0.0, 1e-15);

    std::mt19937_64 rng(23);
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index m = 1 + t % 3;
        const Vector a = uniform_vector(rng, m, -1, 1), u_nom = uniform_vector(rng, m, -2, 2);
        const double phi = -a.dot(u_nom) - 0.05 - 0.02 * t;
        const QpSolution q = solve_filter_qp(phi, a, u_nom, std::nullopt);
        EXPECT_TRUE(q.active);
        EXPECT_LE((q.u - kkt_solve(phi, a, u_nom)).cwiseAbs().maxCoeff(), 1e-6);
        EXPECT_GE(phi + a.dot(q.u), -1e-9);
    }
}

TEST(SolveFilterQp, MinimalityAgainstSampledAdmissibleInputs) {
    std::mt19937_64 rng(24);
    for (int t = 0; t < 100; ++t) {
        const Vector a = uniform_vector(rng, 2, -1, 1), u_nom = uniform_vector(rng, 2, -1, 1);
        const double phi = uniform_vector(rng, 1, -1, 1)(0);
        const QpSolution q = solve_filter_qp(phi, a, u_nom, std::nullopt);
        for (int s = 0; s < 200; ++s) {
            const Vector u = uniform_vector(rng, 2, -3, 3);
            if (phi + a.dot(u) < 0) continue;
            EXPECT_LE((q.u - u_nom).norm(), (u - u_nom).norm() + 1e-12);
        }
    }
}

TEST(SolveFilterQp, BoxFallbackMatchesBruteForce) {
    std::mt19937_64 rng(25);
    InputBounds b{vec({-1.0, -0.5}), vec({1.0, 0.8})};
    int checked = 0;
    for (int t = 0; t < 60; ++t) {
        const Vector a = uniform_vector(rng, 2, -1, 1), u_nom = uniform_vector(rng, 2, -1.5, 1.5);
        const double phi = uniform_vector(rng, 1, -1.5, 0.5)(0);
        double best = std::numeric_limits<double>::infinity();
        const int G = 400;
        for (int i = 0; i <= G; ++i)
            for (int j = 0; j <= G; ++j) {
                const Vector u = vec({-1.0 + 2.0 * i / G, -0.5 + 1.3 * j / G});
                if (phi + a.dot(u) >= 0) best = std::min(best, (u - u_nom).norm());
            }
        if (!std::isfinite(best)) {
            EXPECT_THROW(solve_filter_qp(phi, a, u_nom, b), InfeasibilityError);
            continue;
        }
        const QpSolution q = solve_filter_qp(phi, a, u_nom, b);
        EXPECT_TRUE(((q.u.array() >= b.lower.array()) && (q.u.array() <= b.upper.array())).all());
        EXPECT_GE(phi + a.dot(q.u), -1e-9);
        EXPECT_LE((q.u - u_nom).norm(), best + 1e-9);
        EXPECT_GE((q.u - u_nom).norm(), best - 2.0 * 1.3 / G);
        ++checked;
    }
    EXPECT_GT(checked, 20);
}

TEST(SolveFilterQp, DegeneracyAndInfeasibility) {
    EXPECT_THROW(solve_filter_qp(-1.0, vec({0.0}), vec({0.0}), std::nullopt), DegeneracyError);
    const QpSolution s = solve_filter_qp(1.0, vec({0.0}), vec({0.3}), std::nullopt);
    EXPECT_TRUE(s.lgh_vanishing);
    EXPECT_EQ(s.u(0), 0.3);
    EXPECT_THROW(solve_filter_qp(-5.0, vec({1.0}), vec({0.0}), InputBounds{vec({-1.0}), vec({1.0})}), InfeasibilityError);
    EXPECT_THROW(solve_filter_qp(-5.0, vec({1.0, 1.0}), vec({0.0}), std::nullopt), InputError);
}

TEST(FilterControl, ResidualAffinityAndEllipsoidGuarantee) {
    const TrainedGp m = small_model(10);
    BarrierSpec spec;
    spec.constraints = {EnergyConstraint::kinematic(1.0, vec({1.0})), EnergyConstraint::kinetic_upper(1.0, vec({1.0}))};
    spec.beta_eb = 1.0;
    FilterConfig cfg;
    cfg.beta_f = 2.0;
    cfg.nominal = [](const Vector&) { return Vector::Zero(1); };
    std::mt19937_64 rng(26);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        const Vector x = uniform_vector(rng, 2, -0.8, 0.8);
        const Vector u_nom = uniform_vector(rng, 1, -2, 2);
        const Vector u = filter_control(m, spec, cfg, x, u_nom);
        const double res = ebcbf_constraint_residual(m, spec, cfg, x, u);
        EXPECT_GE(res, -1e-9);
        const Vector u1 = vec({0.7}), u2 = vec({-0.2});
        EXPECT_NEAR(ebcbf_constraint_residual(m, spec, cfg, x, u1) + ebcbf_constraint_residual(m, spec, cfg, x, u2) -
                        ebcbf_constraint_residual(m, spec, cfg, x, Vector::Zero(1)),
                    ebcbf_constraint_residual(m, spec, cfg, x, u1 + u2), 1e-10);

        const FilterTerms ft = filter_terms(m, spec, cfg, x);
        const Matrix L = psd_sqrt(ft.drift.cov);
        for (int s = 0; s < 2000; ++s) {
            Vector z(2);
            z << nd(rng), nd(rng);
            const double rad = z.norm();
            if (rad > cfg.beta_f) z *= cfg.beta_f / rad;
            const Vector v = ft.drift.mean + L * z;
            EXPECT_GE(ft.grad_h.dot(v) + cfg.gamma * ft.h + ft.lgh.dot(u), res - 1e-9);
        }
    }
}

TEST(FilterControl, ContinuousAcrossActivation) {
    const TrainedGp m = small_model(10);
    BarrierSpec spec;
    spec.constraints = {EnergyConstraint::kinematic(1.0, vec({1.0})), EnergyConstraint::kinetic_upper(0.6, vec({0.6}))};
    FilterConfig cfg;
    cfg.beta_f = 1.0;
    const Vector u_nom = vec({0.0});
    double max_jump = 0.0;
    Vector prev;
    const int N = 400;
    for (int i = 0; i <= N; ++i) {
        const Vector x = vec({-0.3, -1.0 + 1.5 * i / N});
        const FilterTerms ft = filter_terms(m, spec, cfg, x);
        if (ft.lgh.squaredNorm() < 1e-6) {
            prev.resize(0);
            continue;
        }
        const Vector u = solve_filter_qp(ft.phi, ft.lgh, u_nom, std::nullopt).u;
        if (prev.size()) max_jump = std::max(max_jump, (u - prev).norm());
        prev = u;
    }
    // grid spacing 1.5/400; a Lipschitz map moves by O(spacing)
    EXPECT_LT(max_jump, 0.2);
}

TEST(FilterConfig, Validation) {
    FilterConfig c;
    c.gamma = 0.0;
    EXPECT_THROW(c.validate(1), InputError);
    c.gamma = 1.0;
    c.input_bounds = InputBounds{vec({1.0}), vec({0.0})};
    EXPECT_THROW(c.validate(1), InputError);
    c.input_bounds = InputBounds{vec({0.0, 0.0}), vec({1.0, 1.0})};
    EXPECT_THROW(c.validate(1), InputError);
}
