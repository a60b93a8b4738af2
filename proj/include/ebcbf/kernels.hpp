#pragma once

// ARD squared-exponential base kernel, its derivatives, and the
// port-Hamiltonian matrix kernel built from them.
//
// Stacking convention: a set of K states is held as a K x n matrix with one
// state per row. Whenever states are vectorized the layout is state-major,
// i.e. entry (k, i) lives at index k * n + i.

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Eigenvalues>
#include <Eigen/SparseCore>

#include "ebcbf/errors.hpp"
#include "ebcbf/types.hpp"

namespace ebcbf {

template <typename Scalar>
struct KernelHyperparams {
    Scalar signal_variance{1};
    VectorX<Scalar> lengthscales;
    Scalar noise_variance{Scalar(0.01)};

    Eigen::Index dim() const { return lengthscales.size(); }

    void validate(Eigen::Index n) const {
        if (lengthscales.size() != n)
            throw InputError("KernelHyperparams: lengthscale count " + std::to_string(lengthscales.size()) +
                             " does not match state dimension " + std::to_string(n));
        if (!(signal_variance > 0) || !(noise_variance > 0) || !(lengthscales.array() > 0).all())
            throw InputError("KernelHyperparams: all hyperparameters must be strictly positive");
    }

    // [log signal_variance, log lengthscale_1..n, log noise_variance]
    VectorX<Scalar> to_log() const {
        VectorX<Scalar> theta(lengthscales.size() + 2);
        theta(0) = std::log(signal_variance);
        theta.segment(1, lengthscales.size()) = lengthscales.array().log().matrix();
        theta(theta.size() - 1) = std::log(noise_variance);
        return theta;
    }

    static KernelHyperparams from_log(const VectorX<Scalar>& theta) {
        if (theta.size() < 3) throw InputError("KernelHyperparams::from_log: need at least 3 entries");
        KernelHyperparams hp;
        hp.signal_variance = std::exp(theta(0));
        hp.lengthscales = theta.segment(1, theta.size() - 2).array().exp().matrix();
        hp.noise_variance = std::exp(theta(theta.size() - 1));
        return hp;
    }

    static KernelHyperparams isotropic(Eigen::Index n, Scalar signal_std, Scalar lengthscale, Scalar noise_std) {
        KernelHyperparams hp;
        hp.signal_variance = signal_std * signal_std;
        hp.lengthscales = VectorX<Scalar>::Constant(n, lengthscale);
        hp.noise_variance = noise_std * noise_std;
        return hp;
    }
};

/// Interconnection J(x), dissipation R(x) and port map G(x) of a
/// port-Hamiltonian system.
template <typename Scalar>
struct BasicPhsStructure {
    using MatrixFn = std::function<MatrixX<Scalar>(const VectorX<Scalar>&)>;

    Eigen::Index n{0};
    Eigen::Index m{0};
    MatrixFn J;
    MatrixFn R;
    MatrixFn G;

    MatrixX<Scalar> JR(const VectorX<Scalar>& x) const { return J(x) - R(x); }

    // Checks skew-symmetry of J and symmetric PSD of R at one state.
    void check_at(const VectorX<Scalar>& x, Scalar tol = Scalar(1e-10)) const {
        const MatrixX<Scalar> j = J(x);
        const MatrixX<Scalar> r = R(x);
        const MatrixX<Scalar> g = G(x);
        if (j.rows() != n || j.cols() != n || r.rows() != n || r.cols() != n || g.rows() != n || g.cols() != m)
            throw InputError("PhsStructure: matrix shapes do not match (n, m)");
        if ((j + j.transpose()).cwiseAbs().maxCoeff() > tol) throw InputError("PhsStructure: J(x) is not skew-symmetric");
        if ((r - r.transpose()).cwiseAbs().maxCoeff() > tol) throw InputError("PhsStructure: R(x) is not symmetric");
        Eigen::SelfAdjointEigenSolver<MatrixX<Scalar>> es(r, Eigen::EigenvaluesOnly);
        if (n > 0 && es.eigenvalues().minCoeff() < -tol) throw InputError("PhsStructure: R(x) is not PSD");
    }

    /// Constant-coefficient structure.
    static BasicPhsStructure constant(const MatrixX<Scalar>& J0, const MatrixX<Scalar>& R0, const MatrixX<Scalar>& G0) {
        BasicPhsStructure s;
        s.n = J0.rows();
        s.m = G0.cols();
        s.J = [J0](const VectorX<Scalar>&) { return J0; };
        s.R = [R0](const VectorX<Scalar>&) { return R0; };
        s.G = [G0](const VectorX<Scalar>&) { return G0; };
        return s;
    }
};

using PhsStructure = BasicPhsStructure<double>;
using Hyperparams = KernelHyperparams<double>;

namespace detail {
template <typename A, typename B, typename Scalar>
void check_pair(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2, const KernelHyperparams<Scalar>& hp) {
    if (x.size() != hp.dim() || x2.size() != hp.dim())
        throw InputError("kernel: state dimension mismatch (got " + std::to_string(x.size()) + " and " +
                         std::to_string(x2.size()) + ", lengthscales " + std::to_string(hp.dim()) + ")");
}
}  // namespace detail

/// sigma_s^2 * exp(-1/2 sum_i (x_i - x2_i)^2 / l_i^2)
template <typename A, typename B, typename Scalar>
Scalar k_base(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2, const KernelHyperparams<Scalar>& hp) {
    detail::check_pair(x, x2, hp);
    const Scalar z = (x - x2).cwiseQuotient(hp.lengthscales).squaredNorm();
    return hp.signal_variance * std::exp(Scalar(-0.5) * z);
}

/// Gradient of k_base with respect to its first argument.
template <typename A, typename B, typename Scalar>
VectorX<Scalar> grad1_k_base(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2,
                             const KernelHyperparams<Scalar>& hp) {
    const Scalar k = k_base(x, x2, hp);
    const VectorX<Scalar> inv_l2 = hp.lengthscales.array().square().inverse().matrix();
    return -k * inv_l2.cwiseProduct(x - x2);
}

/// Mixed second derivative d^2 k / (dx dx2^T); entry (a, b) = d^2 k / dx_a dx2_b.
///   k * (L - L d d^T L),  d = x - x2,  L = diag(1 / l^2)
template <typename A, typename B, typename Scalar>
MatrixX<Scalar> hess12_k_base(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2,
                              const KernelHyperparams<Scalar>& hp) {
    const Scalar k = k_base(x, x2, hp);
    const VectorX<Scalar> inv_l2 = hp.lengthscales.array().square().inverse().matrix();
    const VectorX<Scalar> w = inv_l2.cwiseProduct(x - x2);
    MatrixX<Scalar> h = -w * w.transpose();
    h.diagonal() += inv_l2;
    return k * h;
}

/// Derivative of hess12_k_base with respect to log(l_i).
template <typename A, typename B, typename Scalar>
MatrixX<Scalar> hess12_dlog_lengthscale(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2,
                                        const KernelHyperparams<Scalar>& hp, Eigen::Index i) {
    const Scalar k = k_base(x, x2, hp);
    const VectorX<Scalar> inv_l2 = hp.lengthscales.array().square().inverse().matrix();
    const VectorX<Scalar> d = x - x2;
    const VectorX<Scalar> w = inv_l2.cwiseProduct(d);
    MatrixX<Scalar> base = -w * w.transpose();
    base.diagonal() += inv_l2;
    // dk/dlog l_i = k d_i^2 / l_i^2
    MatrixX<Scalar> out = (d(i) * d(i) * inv_l2(i)) * base;
    // d(L)/dlog l_i = -2 L_ii e_i e_i^T ; d(w)/dlog l_i = -2 L_ii d_i e_i
    out(i, i) -= Scalar(2) * inv_l2(i);
    const Scalar c = Scalar(2) * inv_l2(i) * d(i);
    out.row(i) += c * w.transpose();
    out.col(i) += c * w;
    return k * out;
}

/// J_R(x) * hess12 * J_R(x2)^T with the interconnection matrices already evaluated.
template <typename A, typename B, typename Scalar>
MatrixX<Scalar> k_phs(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2, const KernelHyperparams<Scalar>& hp,
                      const MatrixX<Scalar>& jr_x, const MatrixX<Scalar>& jr_x2) {
    return jr_x * hess12_k_base(x, x2, hp) * jr_x2.transpose();
}

template <typename A, typename B, typename Scalar>
MatrixX<Scalar> k_phs(const Eigen::MatrixBase<A>& x, const Eigen::MatrixBase<B>& x2, const KernelHyperparams<Scalar>& hp,
                      const BasicPhsStructure<Scalar>& phs) {
    detail::check_pair(x, x2, hp);
    return k_phs(x, x2, hp, phs.JR(VectorX<Scalar>(x)), phs.JR(VectorX<Scalar>(x2)));
}

/// Stacked Hamiltonian/drift cross-covariance Cov(H(x), f(x_k)) = J_R(x_k) grad_{x_k} k(x, x_k)
/// over the K rows of `states`, as a (K n) column in state-major order.
template <typename A, typename Scalar>
VectorX<Scalar> k_hf_stack(const Eigen::MatrixBase<A>& x, const MatrixX<Scalar>& states,
                           const std::vector<MatrixX<Scalar>>& jr_states, const KernelHyperparams<Scalar>& hp) {
    const Eigen::Index K = states.rows();
    const Eigen::Index n = hp.dim();
    if (states.cols() != n || static_cast<Eigen::Index>(jr_states.size()) != K)
        throw InputError("k_hf_stack: training state block has wrong shape");
    VectorX<Scalar> c(K * n);
    for (Eigen::Index k = 0; k < K; ++k) {
        const VectorX<Scalar> xk = states.row(k).transpose();
        c.segment(k * n, n) = jr_states[k] * grad1_k_base(xk, x, hp);
    }
    return c;
}

/// Row K_Hf(x, X) = stack_k[J_R(x_k) grad_{x_k} k(x, x_k)]^T B^T, a 1 x (l n) row.
template <typename A, typename Scalar>
RowVectorX<Scalar> k_hf_row(const Eigen::MatrixBase<A>& x, const MatrixX<Scalar>& states,
                            const KernelHyperparams<Scalar>& hp, const BasicPhsStructure<Scalar>& phs,
                            const Eigen::SparseMatrix<Scalar>& B) {
    if (x.size() != hp.dim()) throw InputError("k_hf_row: state dimension mismatch");
    if (B.cols() != states.rows() * hp.dim())
        throw InputError("k_hf_row: operator has " + std::to_string(B.cols()) + " columns, expected " +
                         std::to_string(states.rows() * hp.dim()));
    std::vector<MatrixX<Scalar>> jr;
    jr.reserve(static_cast<std::size_t>(states.rows()));
    for (Eigen::Index k = 0; k < states.rows(); ++k) jr.push_back(phs.JR(states.row(k).transpose()));
    const VectorX<Scalar> c = k_hf_stack(x, states, jr, hp);
    return (B * c).transpose();
}

}  // namespace ebcbf
