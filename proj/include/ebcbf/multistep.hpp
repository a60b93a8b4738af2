#pragma once

// Variable-step Adams-Moulton coefficients and the stacked multistep
// operators that map a noisy state sequence onto derivative-consistent labels.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "ebcbf/errors.hpp"
#include "ebcbf/types.hpp"

namespace ebcbf {

template <typename Scalar>
struct MultistepCoefficients {
    VectorX<Scalar> a;  // weights on states x_{k..k+M}
    VectorX<Scalar> b;  // weights on drift evaluations f_{k..k+M}
};

/// Coefficients of the M-step variable-step Adams-Moulton rule on the window
/// times t_0 < ... < t_M:
///   x(t_M) - x(t_{M-1}) = sum_j b_j f(t_j)
/// exact whenever f is a polynomial of degree <= M.
template <typename Scalar>
MultistepCoefficients<Scalar> vlmm_coefficients(const VectorX<Scalar>& times, int order) {
    if (order < 1) throw InputError("vlmm_coefficients: order must be >= 1");
    if (times.size() != order + 1)
        throw InputError("vlmm_coefficients: order " + std::to_string(order) + " needs exactly " +
                         std::to_string(order + 1) + " timestamps, got " + std::to_string(times.size()));
    for (Eigen::Index j = 1; j < times.size(); ++j)
        if (!(times(j) > times(j - 1))) throw InputError("vlmm_coefficients: timestamps must be strictly increasing");

    const Eigen::Index np = order + 1;
    const Scalar t_prev = times(order - 1);
    const Scalar h = times(order) - t_prev;

    // Polynomial exactness in the scaled variable s = (t - t_{M-1}) / h:
    //   sum_j bh_j s_j^d = int_0^1 s^d ds = 1 / (d + 1),  d = 0..M.
    MatrixX<Scalar> V(np, np);
    VectorX<Scalar> rhs(np);
    for (Eigen::Index d = 0; d < np; ++d) {
        for (Eigen::Index j = 0; j < np; ++j) V(d, j) = std::pow((times(j) - t_prev) / h, Scalar(d));
        rhs(d) = Scalar(1) / Scalar(d + 1);
    }
    MultistepCoefficients<Scalar> c;
    c.b = h * V.fullPivLu().solve(rhs);
    c.a = VectorX<Scalar>::Zero(np);
    c.a(order - 1) = Scalar(-1);
    c.a(order) = Scalar(1);
    return c;
}

struct MultistepOperators {
    Eigen::SparseMatrix<double> A;  // (l n) x (K n)
    Eigen::SparseMatrix<double> B;  // (l n) x (K n)
    int order{0};
    Eigen::Index window_count{0};
    Eigen::Index state_dim{0};
    Eigen::Index sample_count{0};
    std::vector<Eigen::Index> window_starts;  // first sample index of each window

    /// Operators with no windows over K samples (prior-only model).
    static MultistepOperators empty(Eigen::Index sample_count, Eigen::Index state_dim, int order);
};

/// Builds one block row per window of M+1 consecutive samples. A window never
/// spans a step larger than gap_factor times the median step.
MultistepOperators assemble_operators(const Vector& times, int order, Eigen::Index state_dim, double gap_factor = 10.0);

/// Y = A X~ for a state-major stacked sequence.
Vector project_labels(const MultistepOperators& ops, const Vector& noisy_states);

/// Row-per-state matrix (K x n) to a state-major (K n) vector.
inline Vector stack_states(const Matrix& states) {
    Vector out(states.size());
    for (Eigen::Index k = 0; k < states.rows(); ++k) out.segment(k * states.cols(), states.cols()) = states.row(k).transpose();
    return out;
}

}  // namespace ebcbf
