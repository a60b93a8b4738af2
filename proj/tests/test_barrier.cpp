#include <gtest/gtest.h>

#include "support.hpp"

using namespace ebcbf;
using namespace ebcbf::testing;

namespace {

EnergyPosterior energy(double mu_h, double sd_h) {
    EnergyPosterior e;
    e.total = {mu_h, sd_h * sd_h};
    e.kinetic = {0.4 * mu_h, 0.25 * sd_h * sd_h};
    e.potential = {0.6 * mu_h, 0.36 * sd_h * sd_h};
    return e;
}

BarrierSpec mixed_spec(double beta) {
    BarrierSpec s;
    s.constraints = {EnergyConstraint::kinematic(1.0, vec({1.0})), EnergyConstraint::total_lower(0.15),
                     EnergyConstraint::total_upper(0.75)};
    s.beta_eb = beta;
    return s;
}

// grad mu_H from the closed-form derivative of the cross-covariance row.
Vector analytic_grad_mu_h(const TrainedGp& m, const Vector& x) {
    const Eigen::Index N = m.residual().size();
    Vector y(1 + N);
    y << m.anchor().value, m.residual();
    const Vector alpha = m.k_gg().llt.solve(y);
    Vector g = grad1_k_base(x, m.anchor().state, m.hyperparams()) * alpha(0);
    const Vector w = Matrix(m.operators().B).transpose() * alpha.tail(N);
    for (Eigen::Index k = 0; k < m.dataset().size(); ++k) {
        const Vector xk = m.dataset().states.row(k).transpose();
        const Matrix jr = m.structure().JR(xk);
        g += hess12_k_base(xk, x, m.hyperparams()).transpose() * jr.transpose() * w.segment(2 * k, 2);
    }
    return g;
}

}  // namespace

TEST(Beta, FromConfidenceLevel) {
    EXPECT_NEAR(beta_from_confidence(0.025), std::sqrt(2 * std::log(40.0)), 1e-15);
    EXPECT_NEAR(beta_from_confidence(0.025), 2.7162, 1e-4);
    EXPECT_NEAR(beta_from_confidence(0.05), 2.4477, 1e-4);
    EXPECT_NEAR(beta_from_confidence(0.025, 441.0), std::sqrt(2 * std::log(441.0 / 0.025)), 1e-14);
    EXPECT_THROW(beta_from_confidence(0.0), InputError);
    EXPECT_THROW(beta_from_confidence(1.0), InputError);
}

TEST(ConstraintMargin, DefinitionArithmetic) {
    const Vector x = vec({0.2, 0.3});
    EnergyPosterior e;
    e.total = {0.5, 0.01};
    EXPECT_NEAR(constraint_margin(EnergyConstraint::total_upper(0.75), e, x, 1.0), 0.15, 1e-15);
    EXPECT_NEAR(constraint_margin(EnergyConstraint::total_lower(0.15), e, x, 1.0), 0.25, 1e-15);
    EXPECT_NEAR(constraint_margin(EnergyConstraint::kinematic(1.0, vec({1.0})), e, x, 5.0), 1.2, 1e-15);
    e.kinetic = {0.2, 0.04};
    e.potential = {0.3, 0.09};
    EXPECT_NEAR(constraint_margin(EnergyConstraint::kinetic_upper(1.0, vec({1.0})), e, x, 2.0), 1.2 - 0.6, 1e-15);
    EXPECT_NEAR(constraint_margin(EnergyConstraint::potential_upper(0.5), e, x, 1.0), 0.5 - 0.6, 1e-15);
    EXPECT_EQ(EnergyConstraint::total_lower(0.1).band_direction(), BandDirection::kLower);
    EXPECT_EQ(EnergyConstraint::kinetic_upper(0.1).band_direction(), BandDirection::kUpper);
}

TEST(ConstraintMargin, ZeroBandAndMonotoneInBeta) {
    const Vector x = vec({-0.4, 0.9});
    const EnergyPosterior e = energy(0.45, 0.08);
    for (const auto& c : {EnergyConstraint::kinetic_upper(0.6), EnergyConstraint::potential_upper(0.5),
                          EnergyConstraint::total_upper(0.75), EnergyConstraint::total_lower(0.15)}) {
        EnergyPosterior mean_only = e;
        mean_only.total.var = mean_only.kinetic.var = mean_only.potential.var = 0.0;
        EXPECT_EQ(constraint_margin(c, e, x, 0.0), constraint_margin(c, mean_only, x, 3.0));
        double prev = std::numeric_limits<double>::infinity();
        for (double beta : {0.0, 0.5, 1.0, 2.0, 4.0}) {
            const double m = constraint_margin(c, e, x, beta);
            EXPECT_LE(m, prev);
            prev = m;
        }
    }
}

TEST(Combine, SoftminBounds) {
    BarrierSpec s = mixed_spec(0.0);
    std::mt19937_64 rng(15);
    for (int t = 0; t < 200; ++t) {
        const Vector m = uniform_vector(rng, 3, -1, 1);
        const double soft = combine_margins(s, m, CombineMode::kSoftmin);
        const double hard = combine_margins(s, m, CombineMode::kExactMin);
        EXPECT_EQ(hard, m.minCoeff());
        EXPECT_LE(soft, hard + 1e-15);
        EXPECT_GE(soft, hard - std::log(3.0) / s.softmin_temperature - 1e-15);
        const Vector w = softmin_weights(m, s.softmin_temperature);
        EXPECT_NEAR(w.sum(), 1.0, 1e-14);
        EXPECT_GE(w.minCoeff(), 0.0);
    }
    EXPECT_THROW(combine_margins(s, Vector(0), CombineMode::kSoftmin), InputError);
}

TEST(Combine, SingletonAndLargeTemperature) {
    BarrierSpec s;
    s.constraints = {EnergyConstraint::total_upper(0.75)};
    EXPECT_EQ(combine_margins(s, vec({0.3}), CombineMode::kSoftmin), 0.3);
    s.softmin_temperature = 1e6;
    EXPECT_NEAR(combine_margins(s, vec({0.3, 0.5}), CombineMode::kSoftmin), 0.3, 1e-6);
}

TEST(BarrierSpec, Validation) {
    BarrierSpec s;
    EXPECT_THROW(s.validate(), InputError);
    s = mixed_spec(-1.0);
    EXPECT_THROW(s.validate(), InputError);
    s = mixed_spec(1.0);
    s.softmin_temperature = 0.0;
    EXPECT_THROW(s.validate(), InputError);
    EXPECT_EQ(constraint_kind_from_string(to_string(ConstraintKind::kPotentialUpper)), ConstraintKind::kPotentialUpper);
    EXPECT_EQ(combine_mode_from_string("exact_min"), CombineMode::kExactMin);
    EXPECT_THROW(constraint_kind_from_string("nope"), InputError);
}

TEST(HEb, ModelMarginsAndMonotoneConservatism) {
    const TrainedGp m = small_model(10);
    std::mt19937_64 rng(16);
    for (int t = 0; t < 30; ++t) {
        const Vector x = uniform_vector(rng, 2, -1, 1);
        double prev = std::numeric_limits<double>::infinity();
        for (double beta : {0.0, 1.0, 2.7162}) {
            const double h = h_eb(mixed_spec(beta), m, x);
            EXPECT_LE(h, prev + 1e-15);
            prev = h;
        }
        const Vector margins = constraint_margins(mixed_spec(1.0), m, x);
        EXPECT_NEAR(margins(0), x(0) + 1.0, 1e-15);
        const ScalarPosterior H = posterior_hamiltonian(m, x);
        EXPECT_NEAR(margins(2), 0.75 - (H.mean + H.sd()), 1e-12);
        EXPECT_NEAR(margins(1), (H.mean - H.sd()) - 0.15, 1e-12);
    }
    EXPECT_THROW(h_eb(mixed_spec(1.0), TrainedGp{}, vec({0, 0})), StateError);
}

TEST(HEb, DeepInteriorMixedBarrier) {
    const MassSpring sys;
    const Vector x = vec({0.0, 0.9});  // H = 0.405
    BarrierSpec s = mixed_spec(0.0);
    Vector margins(3);
    for (int i = 0; i < 3; ++i) margins(i) = constraint_margin_known(s.constraints[i], sys.energies(x), x);
    const double soft = combine_margins(s, margins, CombineMode::kSoftmin);
    const double hard = combine_margins(s, margins, CombineMode::kExactMin);
    EXPECT_GT(soft, 0.0);
    EXPECT_NEAR(hard, std::min({1.0, 0.405 - 0.15, 0.75 - 0.405}), 1e-12);
    EXPECT_LE(hard - soft, std::log(3.0) / s.softmin_temperature);
}

TEST(GradHEb, AffineKinematicBarrier) {
    const TrainedGp m = small_model(8);
    BarrierSpec s;
    s.constraints = {EnergyConstraint::kinematic(1.0, vec({1.0}))};
    const Vector g = grad_h_eb(s, m, vec({0.3, -0.2}));
    EXPECT_NEAR(g(0), 1.0, 1e-9);
    EXPECT_NEAR(g(1), 0.0, 1e-9);
}

TEST(GradHEb, TotalUpperMatchesAnalyticPosteriorGradient) {
    const TrainedGp m = small_model(10);
    BarrierSpec s;
    s.constraints = {EnergyConstraint::total_upper(0.75)};
    s.beta_eb = 0.0;
    std::mt19937_64 rng(17);
    for (int t = 0; t < 20; ++t) {
        const Vector x = uniform_vector(rng, 2, -1.2, 1.2);
        const Vector g = grad_h_eb(s, m, x);
        const Vector oracle = -analytic_grad_mu_h(m, x);
        EXPECT_LE((g - oracle).norm(), 1e-3 * std::max(1.0, oracle.norm()));
        Vector fd(2);
        for (int i = 0; i < 2; ++i) {
            Vector p = x, q = x;
            p(i) += 1e-7;
            q(i) -= 1e-7;
            fd(i) = -(posterior_hamiltonian(m, p).mean - posterior_hamiltonian(m, q).mean) / 2e-7;
        }
        EXPECT_LE((fd - oracle).norm(), 1e-5 * std::max(1.0, oracle.norm()));
    }
}

TEST(GradHEb, HalfStepOracleAndConvexCombination) {
    const TrainedGp m = small_model(10);
    const BarrierSpec s = mixed_spec(1.0);
    std::mt19937_64 rng(18);
    for (int t = 0; t < 20; ++t) {
        const Vector x = uniform_vector(rng, 2, -1, 1);
        const Vector g = grad_h_eb(s, m, x);
        Vector half(2);
        for (int i = 0; i < 2; ++i) {
            const double h = 0.5e-5 * (1 + std::abs(x(i)));
            Vector p = x, q = x;
            p(i) += h;
            q(i) -= h;
            half(i) = (h_eb(s, m, p) - h_eb(s, m, q)) / (2 * h);
        }
        EXPECT_LE((g - half).norm(), 1e-3 * std::max(1.0, half.norm()));

        // soft-min gradient = sum_i w_i grad m_i
        const Vector w = softmin_weights(constraint_margins(s, m, x), s.softmin_temperature);
        Vector combo = Vector::Zero(2);
        for (std::size_t c = 0; c < s.constraints.size(); ++c) {
            BarrierSpec one = s;
            one.constraints = {s.constraints[c]};
            combo += w(static_cast<Eigen::Index>(c)) * grad_h_eb(one, m, x);
        }
        EXPECT_LE((g - combo).norm(), 1e-5 * std::max(1.0, g.norm()));
    }
}
