#include <gtest/gtest.h>

#include "support.hpp"

using namespace ebcbf;
using namespace ebcbf::testing;

namespace {

Hyperparams unit_hp(double l0 = 1.0, double l1 = 1.0) {
    Hyperparams hp;
    hp.signal_variance = 1.0;
    hp.lengthscales = vec({l0, l1});
    hp.noise_variance = 0.01;
    return hp;
}

Vector fd_grad1(const Vector& x, const Vector& x2, const Hyperparams& hp, double h) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        Vector p = x, m = x;
        p(i) += h;
        m(i) -= h;
        g(i) = (k_base(p, x2, hp) - k_base(m, x2, hp)) / (2 * h);
    }
    return g;
}

Matrix fd_hess12(const Vector& x, const Vector& x2, const Hyperparams& hp, double h) {
    Matrix H(x.size(), x.size());
    for (Eigen::Index b = 0; b < x.size(); ++b) {
        Vector p = x2, m = x2;
        p(b) += h;
        m(b) -= h;
        H.col(b) = (fd_grad1(x, p, hp, h) - fd_grad1(x, m, hp, h)) / (2 * h);
    }
    return H;
}

}  // namespace

TEST(KBase, CoincidentAndAnalyticValues) {
    const auto hp = unit_hp();
    EXPECT_DOUBLE_EQ(k_base(vec({0.3, -1.0}), vec({0.3, -1.0}), hp), 1.0);
    EXPECT_NEAR(k_base(vec({1.0, 0.0}), vec({0.0, 0.0}), hp), std::exp(-0.5), 1e-15);
}

TEST(KBase, SymmetricOnRandomPairs) {
    std::mt19937_64 rng(1);
    auto hp = unit_hp(0.7, 1.9);
    hp.signal_variance = 2.5;
    for (int t = 0; t < 100; ++t) {
        const Vector a = uniform_vector(rng, 2, -2, 2), b = uniform_vector(rng, 2, -2, 2);
        EXPECT_LE(std::abs(k_base(a, b, hp) - k_base(b, a, hp)), 1e-12 * hp.signal_variance);
    }
}

TEST(KBase, DimensionMismatchThrows) {
    EXPECT_THROW(k_base(vec({1.0}), vec({1.0, 2.0}), unit_hp()), InputError);
    EXPECT_THROW(grad1_k_base(vec({1.0, 2.0, 3.0}), vec({1.0, 2.0, 3.0}), unit_hp()), InputError);
    EXPECT_THROW(hess12_k_base(vec({1.0}), vec({1.0}), unit_hp()), InputError);
}

TEST(Grad1, KnownValueAndAntisymmetry) {
    const auto hp = unit_hp();
    const Vector g = grad1_k_base(vec({1.0, 0.0}), vec({0.0, 0.0}), hp);
    EXPECT_NEAR(g(0), -std::exp(-0.5), 1e-15);
    EXPECT_EQ(g(1), 0.0);
    const Vector fd = fd_grad1(vec({1.0, 0.0}), vec({0.0, 0.0}), hp, 1e-6);
    EXPECT_LE(std::abs(fd(0) - g(0)) / std::abs(g(0)), 1e-6);
    EXPECT_TRUE(grad1_k_base(vec({0.4, 0.2}), vec({0.4, 0.2}), hp).isZero(0.0));

    std::mt19937_64 rng(2);
    const auto hp2 = unit_hp(0.6, 1.4);
    for (int t = 0; t < 20; ++t) {
        const Vector a = uniform_vector(rng, 2, -2, 2), b = uniform_vector(rng, 2, -2, 2);
        EXPECT_LE((grad1_k_base(a, b, hp2) + grad1_k_base(b, a, hp2)).norm(), 1e-15);
    }
}

TEST(Derivatives, MatchCentralDifferencesOnRandomPairs) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 100; ++t) {
        const Vector ls = uniform_vector(rng, 2, 0.5, 2.0);
        auto hp = unit_hp(ls(0), ls(1));
        hp.signal_variance = 0.5 + t * 0.01;
        const Vector a = uniform_vector(rng, 2, -2, 2), b = uniform_vector(rng, 2, -2, 2);
        const Vector g = grad1_k_base(a, b, hp);
        const Vector gfd = fd_grad1(a, b, hp, 1e-5);
        EXPECT_LE((g - gfd).cwiseAbs().maxCoeff() / std::max(g.cwiseAbs().maxCoeff(), 1e-3), 1e-5);
        const Matrix H = hess12_k_base(a, b, hp);
        const Matrix Hfd = fd_hess12(a, b, hp, 1e-4);
        EXPECT_LE((H - Hfd).cwiseAbs().maxCoeff() / std::max(H.cwiseAbs().maxCoeff(), 1e-3), 1e-5);
    }
}

TEST(Hess12, CoincidentPointAndTransposeSymmetry) {
    const auto hp = unit_hp(1.0, 2.0);
    const Matrix H = hess12_k_base(vec({0.2, 0.7}), vec({0.2, 0.7}), hp);
    EXPECT_NEAR(H(0, 0), 1.0, 1e-15);
    EXPECT_NEAR(H(1, 1), 0.25, 1e-15);
    EXPECT_EQ(H(0, 1), 0.0);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 20; ++t) {
        const Vector a = uniform_vector(rng, 2, -2, 2), b = uniform_vector(rng, 2, -2, 2);
        EXPECT_LE((hess12_k_base(a, b, hp) - hess12_k_base(b, a, hp).transpose()).norm(), 1e-15);
    }
}

TEST(Hess12, LogLengthscaleDerivativeMatchesDifferences) {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const Vector a = uniform_vector(rng, 2, -2, 2), b = uniform_vector(rng, 2, -2, 2);
        const auto hp = unit_hp(0.8, 1.3);
        for (Eigen::Index i = 0; i < 2; ++i) {
            const double h = 1e-6;
            auto hp_p = hp, hp_m = hp;
            hp_p.lengthscales(i) *= std::exp(h);
            hp_m.lengthscales(i) *= std::exp(-h);
            const Matrix fd = (hess12_k_base(a, b, hp_p) - hess12_k_base(a, b, hp_m)) / (2 * h);
            EXPECT_LE((hess12_dlog_lengthscale(a, b, hp, i) - fd).cwiseAbs().maxCoeff(), 1e-7);
        }
    }
}

TEST(KPhs, MassSpringIdentityAtCoincidence) {
    const MassSpring sys;
    const PhsStructure phs = sys.structure();
    const Vector x = vec({0.3, -0.4});
    const Matrix K = k_phs(x, x, unit_hp(), phs);
    Matrix J(2, 2);
    J << 0, 1, -1, 0;
    EXPECT_LE((K - J * J.transpose()).norm(), 1e-15);
    EXPECT_LE((K - Matrix::Identity(2, 2)).norm(), 1e-15);
}

TEST(KPhs, TransposeSymmetryAndPsdGram) {
    const MassSpring sys{1.0, 1.0, 0.4};
    const PhsStructure phs = sys.structure();
    std::mt19937_64 rng(6);
    const auto hp = unit_hp(0.9, 1.2);
    Matrix pts(20, 2);
    for (int i = 0; i < 20; ++i) pts.row(i) = uniform_vector(rng, 2, -2, 2).transpose();
    Matrix gram(40, 40), gbase(20, 20);
    for (int i = 0; i < 20; ++i)
        for (int j = 0; j < 20; ++j) {
            const Vector a = pts.row(i).transpose(), b = pts.row(j).transpose();
            gram.block(2 * i, 2 * j, 2, 2) = k_phs(a, b, hp, phs);
            gbase(i, j) = k_base(a, b, hp);
            EXPECT_LE((k_phs(a, b, hp, phs) - k_phs(b, a, hp, phs).transpose()).norm(), 1e-14);
        }
    for (const Matrix* g : {&gram, &gbase}) {
        const Matrix s = 0.5 * (*g + g->transpose());
        const double minev = Eigen::SelfAdjointEigenSolver<Matrix>(s).eigenvalues().minCoeff();
        EXPECT_GE(minev, -1e-8 * s.trace() / s.rows());
    }
}

TEST(KHfRow, ZeroOperatorScalingAndHandAssembly) {
    const MassSpring sys;
    const PhsStructure phs = sys.structure();
    auto hp = unit_hp(0.9, 1.1);
    Matrix X(2, 2);
    X << 0.5, -0.2, 0.55, -0.25;
    const Vector x = vec({0.1, 0.3});

    Eigen::SparseMatrix<double> Z(2, 4);
    EXPECT_TRUE(k_hf_row(x, X, hp, phs, Z).isZero(0.0));

    // single trapezoidal window, n = 2
    const double h = 0.1;
    Matrix Bd = Matrix::Zero(2, 4);
    Bd(0, 0) = Bd(0, 2) = Bd(1, 1) = Bd(1, 3) = h / 2;
    const Eigen::SparseMatrix<double> B = Bd.sparseView();
    const RowVector row = k_hf_row(x, X, hp, phs, B);

    Matrix J(2, 2);
    J << 0, 1, -1, 0;
    Vector stack(4);
    for (int k = 0; k < 2; ++k) {
        const Vector xk = X.row(k).transpose();
        const double kv = hp.signal_variance * std::exp(-0.5 * ((xk - x).array() / hp.lengthscales.array()).square().sum());
        const Vector grad = -kv * (xk - x).cwiseQuotient(hp.lengthscales.cwiseProduct(hp.lengthscales));
        stack.segment(2 * k, 2) = J * grad;
    }
    EXPECT_LE((row.transpose() - Bd * stack).norm(), 1e-14);

    hp.signal_variance *= 3.0;
    EXPECT_LE((k_hf_row(x, X, hp, phs, B) - 3.0 * row).norm(), 1e-14);
    EXPECT_THROW(k_hf_row(x, X, hp, phs, Eigen::SparseMatrix<double>(2, 6)), InputError);
}

TEST(KernelHyperparams, LogRoundTripAndValidation) {
    auto hp = unit_hp(0.5, 2.0);
    hp.signal_variance = 1.7;
    const auto back = Hyperparams::from_log(hp.to_log());
    EXPECT_NEAR(back.signal_variance, 1.7, 1e-14);
    EXPECT_NEAR(back.lengthscales(1), 2.0, 1e-14);
    EXPECT_NEAR(back.noise_variance, 0.01, 1e-16);
    EXPECT_THROW(hp.validate(3), InputError);
    hp.noise_variance = 0.0;
    EXPECT_THROW(hp.validate(2), InputError);
}

TEST(PhsStructure, CheckRejectsBadMatrices) {
    Matrix J(2, 2), R = Matrix::Zero(2, 2), G(2, 1);
    J << 0, 1, 1, 0;
    G << 0, 1;
    EXPECT_THROW(PhsStructure::constant(J, R, G).check_at(vec({0, 0})), InputError);
    J << 0, 1, -1, 0;
    R(1, 1) = -0.5;
    EXPECT_THROW(PhsStructure::constant(J, R, G).check_at(vec({0, 0})), InputError);
    R(1, 1) = 0.5;
    EXPECT_NO_THROW(PhsStructure::constant(J, R, G).check_at(vec({0, 0})));
}

TEST(KernelTemplates, LongDoubleInstantiation) {
    KernelHyperparams<long double> hp;
    hp.signal_variance = 1.0L;
    hp.lengthscales = VectorX<long double>::Ones(2);
    VectorX<long double> a(2), b(2);
    a << 1.0L, 0.0L;
    b << 0.0L, 0.0L;
    EXPECT_NEAR(static_cast<double>(k_base(a, b, hp)), std::exp(-0.5), 1e-15);
}
