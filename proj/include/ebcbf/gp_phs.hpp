#pragma once

// Multistep port-Hamiltonian GP: projected training covariance, marginal
// likelihood fitting, and the closed-form drift / Hamiltonian posteriors.
//
// Training states enter every kernel evaluation as the noisy measurements
// themselves; label noise is modelled through A (sigma_x^2 I) A^T.

#include <optional>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "ebcbf/kernels.hpp"
#include "ebcbf/multistep.hpp"

namespace ebcbf {

struct Dataset {
    Vector times;   // K
    Matrix states;  // K x n, noisy
    Matrix inputs;  // K x m

    Eigen::Index size() const { return times.size(); }
    Eigen::Index state_dim() const { return states.cols(); }
    Eigen::Index input_dim() const { return inputs.cols(); }
    bool empty() const { return times.size() == 0; }

    void validate() const;
    /// First `count` samples.
    Dataset head(Eigen::Index count) const;
};

/// A symmetric matrix with the diagonal jitter that made its Cholesky factor succeed.
struct JitteredCholesky {
    Matrix matrix;
    Eigen::LLT<Matrix> llt;
    double jitter{0.0};
};

/// Jitter escalation: 1e-10 * mean diagonal, times 10 per attempt, up to 1e-4 * mean diagonal.
JitteredCholesky factorize_with_jitter(Matrix m, const char* what);

/// Prior covariance of the stacked drift at the training states, K_phs (K n x K n).
Matrix phs_gram(const Matrix& states, const std::vector<Matrix>& jr, const Hyperparams& hp);

/// Cov(Y) = B K_phs B^T + A (sigma_x^2 I) A^T, symmetrized and jittered.
JitteredCholesky build_cov_y(const Dataset& data, const Hyperparams& hp, const PhsStructure& phs,
                             const MultistepOperators& ops);

/// Residual labels r = A X~ - B g(X~) U.
Vector label_residual(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops);

struct NlmlValue {
    double value{0.0};
    Vector gradient;  // with respect to Hyperparams::to_log()
};

/// 1/2 r^T Cov(Y)^-1 r + 1/2 log det Cov(Y) + N/2 log(2 pi), with its analytic gradient.
NlmlValue nlml(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops, const Hyperparams& hp,
               bool with_gradient = true);

struct OptimizerConfig {
    double learning_rate{0.01};
    int iterations{500};
    double beta1{0.9};
    double beta2{0.999};
    double epsilon{1e-8};
    Hyperparams initial = Hyperparams::isotropic(2, 1.0, 1.0, 0.1);
};

struct FitResult {
    Hyperparams hp;
    std::vector<double> trace;  // NLML per iteration, trace[0] at the initial point
    double initial_nlml{0.0};
    double best_nlml{0.0};
    int best_iteration{0};
};

/// Adam on log-hyperparameters; returns the best iterate seen.
FitResult fit_hyperparameters(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops,
                              const OptimizerConfig& cfg);

struct Anchor {
    Vector state;  // origin when empty
    double value{0.0};
    double noise_variance{0.0};
};

struct DriftPosterior {
    Vector mean;
    Matrix cov;
    double raw_min_eigenvalue{0.0};  // before flooring
};

struct ScalarPosterior {
    double mean{0.0};
    double var{0.0};
    double sd() const;
};

/// Joint posterior of H(q, p) and H(q, 0) with the derived kinetic / potential parts.
struct EnergyPosterior {
    ScalarPosterior total;
    ScalarPosterior potential;
    ScalarPosterior kinetic;
};

class TrainedGp {
public:
    TrainedGp() = default;

    static TrainedGp build(Dataset data, PhsStructure phs, MultistepOperators ops, Hyperparams hp, Anchor anchor = {});

    bool fitted() const { return fitted_; }
    const Dataset& dataset() const { return data_; }
    const Hyperparams& hyperparams() const { return hp_; }
    const PhsStructure& structure() const { return phs_; }
    const MultistepOperators& operators() const { return ops_; }
    const Anchor& anchor() const { return anchor_; }
    const Vector& residual() const { return residual_; }
    const JitteredCholesky& cov_y() const { return cov_y_; }
    const JitteredCholesky& k_gg() const { return k_gg_; }
    Eigen::Index state_dim() const { return phs_.n; }

    /// k_Y(x) = B k_phs(X, x), (l n) x n.
    Matrix drift_cross(const Vector& x) const;
    /// K_{*g}(x) = [k(x, anchor), K_Hf(x, X)], length 1 + l n.
    Vector hamiltonian_cross(const Vector& x) const;

    DriftPosterior drift(const Vector& x) const;
    ScalarPosterior hamiltonian(const Vector& x) const;
    /// Joint 2x2 posterior covariance of H at the columns of `points` (n x 2), with means.
    Matrix joint_hamiltonian(const Matrix& points, Vector* means) const;
    EnergyPosterior energies(const Vector& x) const;

    /// Joint drift posterior at P points (rows of `points`): mean (P n) and covariance (P n x P n),
    /// state-major per point.
    void joint_drift(const Matrix& points, Vector& mean, Matrix& cov) const;

private:
    void require_fitted(const char* what) const;

    bool fitted_{false};
    Dataset data_;
    PhsStructure phs_;
    MultistepOperators ops_;
    Hyperparams hp_;
    Anchor anchor_;

    std::vector<Matrix> jr_;  // J_R at each training state
    Vector residual_;
    JitteredCholesky cov_y_;
    JitteredCholesky k_gg_;
    Vector alpha_f_;  // Cov(Y)^-1 r
    Vector alpha_h_;  // K_gg^-1 y_aug
};

DriftPosterior posterior_drift(const TrainedGp& model, const Vector& x);
ScalarPosterior posterior_hamiltonian(const TrainedGp& model, const Vector& x);
Eigen::Matrix2d joint_energy_cov(const TrainedGp& model, const Vector& xa, const Vector& xb);
ScalarPosterior posterior_kinetic(const TrainedGp& model, const Vector& q, const Vector& p);
ScalarPosterior posterior_potential(const TrainedGp& model, const Vector& q);

/// Symmetrizes and raises eigenvalues to at least `floor`; returns the raw minimum eigenvalue.
double floor_eigenvalues(Matrix& m, double floor);

}  // namespace ebcbf
