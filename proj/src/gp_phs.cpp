#include "ebcbf/gp_phs.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

namespace ebcbf {

void Dataset::validate() const {
    const Eigen::Index K = times.size();
    if (states.rows() != K || inputs.rows() != K)
        throw InputError("Dataset: times, states and inputs must have the same number of rows");
    for (Eigen::Index k = 1; k < K; ++k)
        if (!(times(k) > times(k - 1))) throw InputError("Dataset: times must be strictly increasing");
    if (!states.allFinite() || !inputs.allFinite() || !times.allFinite())
        throw InputError("Dataset: non-finite entries");
}

Dataset Dataset::head(Eigen::Index count) const {
    Dataset d;
    d.times = times.head(count);
    d.states = states.topRows(count);
    d.inputs = inputs.topRows(count);
    return d;
}

double ScalarPosterior::sd() const { return std::sqrt(std::max(var, 0.0)); }

JitteredCholesky factorize_with_jitter(Matrix m, const char* what) {
    m = 0.5 * (m + m.transpose()).eval();
    JitteredCholesky out;
    if (m.rows() == 0) {
        out.matrix = std::move(m);
        out.llt.compute(out.matrix);
        return out;
    }
    out.llt.compute(m);
    if (out.llt.info() == Eigen::Success) {
        out.matrix = std::move(m);
        return out;
    }
    const double mean_diag = std::abs(m.diagonal().mean());
    const double scale = mean_diag > 0.0 ? mean_diag : 1.0;
    for (double rel = 1e-10; rel <= 1e-4 * (1.0 + 1e-9); rel *= 10.0) {
        Matrix jittered = m;
        jittered.diagonal().array() += rel * scale;
        out.llt.compute(jittered);
        if (out.llt.info() == Eigen::Success) {
            out.matrix = std::move(jittered);
            out.jitter = rel * scale;
            return out;
        }
    }
    throw NumericalError(std::string(what) + ": Cholesky factorization failed after jitter escalation to 1e-4 x mean diagonal");
}

namespace {

std::vector<Matrix> eval_jr(const Matrix& states, const PhsStructure& phs) {
    std::vector<Matrix> jr;
    jr.reserve(static_cast<std::size_t>(states.rows()));
    for (Eigen::Index k = 0; k < states.rows(); ++k) jr.push_back(phs.JR(states.row(k).transpose()));
    return jr;
}

void check_shapes(const Dataset& data, const Hyperparams& hp, const PhsStructure& phs, const MultistepOperators& ops) {
    data.validate();
    const Eigen::Index n = phs.n;
    if (data.state_dim() != n && data.size() > 0)
        throw InputError("dataset state dimension " + std::to_string(data.state_dim()) + " does not match structure n=" +
                         std::to_string(n));
    if (data.input_dim() != phs.m && data.size() > 0)
        throw InputError("dataset input dimension does not match structure m=" + std::to_string(phs.m));
    hp.validate(n);
    if (ops.state_dim != n || ops.sample_count != data.size() || ops.A.cols() != data.size() * n)
        throw InputError("multistep operators do not match the dataset (" + std::to_string(ops.sample_count) +
                         " samples vs " + std::to_string(data.size()) + ")");
}

// K_phs plus, optionally, its derivatives with respect to log lengthscales.
void phs_gram_with_derivatives(const Matrix& states, const std::vector<Matrix>& jr, const Hyperparams& hp, Matrix& gram,
                               std::vector<Matrix>* dgram) {
    const Eigen::Index K = states.rows();
    const Eigen::Index n = states.cols();
    gram.resize(K * n, K * n);
    if (dgram) dgram->assign(static_cast<std::size_t>(n), Matrix(K * n, K * n));
    for (Eigen::Index a = 0; a < K; ++a) {
        const Vector xa = states.row(a).transpose();
        for (Eigen::Index b = a; b < K; ++b) {
            const Vector xb = states.row(b).transpose();
            const Matrix blk = jr[a] * hess12_k_base(xa, xb, hp) * jr[b].transpose();
            gram.block(a * n, b * n, n, n) = blk;
            gram.block(b * n, a * n, n, n) = blk.transpose();
            if (dgram) {
                for (Eigen::Index i = 0; i < n; ++i) {
                    const Matrix dblk = jr[a] * hess12_dlog_lengthscale(xa, xb, hp, i) * jr[b].transpose();
                    (*dgram)[i].block(a * n, b * n, n, n) = dblk;
                    (*dgram)[i].block(b * n, a * n, n, n) = dblk.transpose();
                }
            }
        }
    }
}

Matrix project(const Eigen::SparseMatrix<double>& B, const Matrix& m) {
    const Matrix bm = B * m;
    return bm * B.transpose();
}

}  // namespace

Matrix phs_gram(const Matrix& states, const std::vector<Matrix>& jr, const Hyperparams& hp) {
    Matrix g;
    phs_gram_with_derivatives(states, jr, hp, g, nullptr);
    return g;
}

JitteredCholesky build_cov_y(const Dataset& data, const Hyperparams& hp, const PhsStructure& phs,
                             const MultistepOperators& ops) {
    check_shapes(data, hp, phs, ops);
    const Matrix gram = phs_gram(data.states, eval_jr(data.states, phs), hp);
    const Eigen::SparseMatrix<double> AAt = ops.A * ops.A.transpose();
    Matrix cov = project(ops.B, gram);
    cov += hp.noise_variance * Matrix(AAt);
    return factorize_with_jitter(std::move(cov), "build_cov_y");
}

Vector label_residual(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops) {
    const Eigen::Index K = data.size();
    const Eigen::Index n = phs.n;
    Vector gu(K * n);
    for (Eigen::Index k = 0; k < K; ++k) {
        const Vector xk = data.states.row(k).transpose();
        gu.segment(k * n, n) = phs.G(xk) * data.inputs.row(k).transpose();
    }
    return project_labels(ops, stack_states(data.states)) - ops.B * gu;
}

NlmlValue nlml(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops, const Hyperparams& hp,
               bool with_gradient) {
    check_shapes(data, hp, phs, ops);
    const Eigen::Index n = phs.n;
    NlmlValue out;
    out.gradient = Vector::Zero(n + 2);
    const Eigen::Index N = ops.window_count * n;
    if (N == 0) return out;

    const auto jr = eval_jr(data.states, phs);
    Matrix gram;
    std::vector<Matrix> dgram;
    phs_gram_with_derivatives(data.states, jr, hp, gram, with_gradient ? &dgram : nullptr);
    const Matrix AAt = Matrix(Eigen::SparseMatrix<double>(ops.A * ops.A.transpose()));
    const Matrix KY = project(ops.B, gram);
    const JitteredCholesky chol = factorize_with_jitter(KY + hp.noise_variance * AAt, "nlml");

    const Vector r = label_residual(data, phs, ops);
    const Vector alpha = chol.llt.solve(r);
    const Matrix L = chol.llt.matrixL();
    const double logdet = 2.0 * L.diagonal().array().log().sum();
    out.value = 0.5 * r.dot(alpha) + 0.5 * logdet + 0.5 * static_cast<double>(N) * std::log(2.0 * std::numbers::pi);
    if (!with_gradient) return out;

    // d NLML / d theta = 1/2 tr((C^-1 - alpha alpha^T) dC/d theta)
    Matrix W = chol.llt.solve(Matrix::Identity(N, N));
    W.noalias() -= alpha * alpha.transpose();
    out.gradient(0) = 0.5 * W.cwiseProduct(KY).sum();
    for (Eigen::Index i = 0; i < n; ++i) out.gradient(1 + i) = 0.5 * W.cwiseProduct(project(ops.B, dgram[i])).sum();
    out.gradient(n + 1) = 0.5 * hp.noise_variance * W.cwiseProduct(AAt).sum();
    return out;
}

FitResult fit_hyperparameters(const Dataset& data, const PhsStructure& phs, const MultistepOperators& ops,
                              const OptimizerConfig& cfg) {
    if (data.empty()) throw InputError("fit_hyperparameters: dataset is empty (need more samples than the multistep order)");
    if (ops.window_count == 0) throw InputError("fit_hyperparameters: no multistep windows in the dataset");
    if (cfg.iterations < 0 || !(cfg.learning_rate > 0)) throw InputError("fit_hyperparameters: invalid optimizer settings");

    Vector theta = cfg.initial.to_log();
    NlmlValue cur;
    try {
        cur = nlml(data, phs, ops, cfg.initial, true);
    } catch (const NumericalError& e) {
        throw NumericalError(std::string("fit_hyperparameters: NLML not computable at the initial hyperparameters: ") + e.what());
    }
    if (!std::isfinite(cur.value) || !cur.gradient.allFinite())
        throw NumericalError("fit_hyperparameters: non-finite NLML at the initial hyperparameters");

    FitResult res;
    res.hp = cfg.initial;
    res.initial_nlml = cur.value;
    res.best_nlml = cur.value;
    res.trace.push_back(cur.value);

    Vector m1 = Vector::Zero(theta.size());
    Vector m2 = Vector::Zero(theta.size());
    for (int it = 1; it <= cfg.iterations; ++it) {
        m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * cur.gradient;
        m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * cur.gradient.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg.beta1, it);
        const double c2 = 1.0 - std::pow(cfg.beta2, it);
        theta.array() -= cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);

        const Hyperparams hp = Hyperparams::from_log(theta);
        try {
            cur = nlml(data, phs, ops, hp, true);
        } catch (const NumericalError&) {
            break;
        }
        if (!std::isfinite(cur.value) || !cur.gradient.allFinite()) break;
        res.trace.push_back(cur.value);
        if (cur.value < res.best_nlml) {
            res.best_nlml = cur.value;
            res.hp = hp;
            res.best_iteration = it;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------

TrainedGp TrainedGp::build(Dataset data, PhsStructure phs, MultistepOperators ops, Hyperparams hp, Anchor anchor) {
    if (data.size() == 0) {
        data.states.resize(0, phs.n);
        data.inputs.resize(0, phs.m);
    }
    check_shapes(data, hp, phs, ops);
    const Eigen::Index n = phs.n;
    if (anchor.state.size() == 0) anchor.state = Vector::Zero(n);
    if (anchor.state.size() != n) throw InputError("TrainedGp: anchor state has the wrong dimension");
    if (anchor.noise_variance < 0) throw InputError("TrainedGp: anchor noise variance must be >= 0");

    TrainedGp gp;
    gp.data_ = std::move(data);
    gp.phs_ = std::move(phs);
    gp.ops_ = std::move(ops);
    gp.hp_ = std::move(hp);
    gp.anchor_ = std::move(anchor);
    gp.jr_ = eval_jr(gp.data_.states, gp.phs_);

    const Eigen::Index N = gp.ops_.window_count * n;
    if (N > 0) {
        gp.residual_ = label_residual(gp.data_, gp.phs_, gp.ops_);
        gp.cov_y_ = build_cov_y(gp.data_, gp.hp_, gp.phs_, gp.ops_);
        gp.alpha_f_ = gp.cov_y_.llt.solve(gp.residual_);
    } else {
        gp.residual_.resize(0);
        gp.alpha_f_.resize(0);
    }

    Matrix kgg(1 + N, 1 + N);
    kgg(0, 0) = k_base(gp.anchor_.state, gp.anchor_.state, gp.hp_) + gp.anchor_.noise_variance;
    if (N > 0) {
        const Vector c = gp.ops_.B * k_hf_stack(gp.anchor_.state, gp.data_.states, gp.jr_, gp.hp_);
        kgg.block(0, 1, 1, N) = c.transpose();
        kgg.block(1, 0, N, 1) = c;
        kgg.block(1, 1, N, N) = gp.cov_y_.matrix;
    }
    gp.k_gg_ = factorize_with_jitter(std::move(kgg), "K_gg");
    Vector y_aug(1 + N);
    y_aug(0) = gp.anchor_.value;
    if (N > 0) y_aug.tail(N) = gp.residual_;
    gp.alpha_h_ = gp.k_gg_.llt.solve(y_aug);
    gp.fitted_ = true;
    return gp;
}

void TrainedGp::require_fitted(const char* what) const {
    if (!fitted_) throw StateError(std::string(what) + ": model is not fitted");
}

Matrix TrainedGp::drift_cross(const Vector& x) const {
    require_fitted("drift_cross");
    const Eigen::Index n = phs_.n;
    if (x.size() != n) throw InputError("posterior query: state dimension mismatch");
    const Eigen::Index K = data_.size();
    const Matrix jrx = phs_.JR(x);
    Matrix stack(K * n, n);
    for (Eigen::Index k = 0; k < K; ++k)
        stack.middleRows(k * n, n) = jr_[k] * hess12_k_base(Vector(data_.states.row(k).transpose()), x, hp_) * jrx.transpose();
    return ops_.B * stack;
}

Vector TrainedGp::hamiltonian_cross(const Vector& x) const {
    require_fitted("hamiltonian_cross");
    if (x.size() != phs_.n) throw InputError("posterior query: state dimension mismatch");
    const Eigen::Index N = ops_.window_count * phs_.n;
    Vector row(1 + N);
    row(0) = k_base(x, anchor_.state, hp_);
    if (N > 0) row.tail(N) = ops_.B * k_hf_stack(x, data_.states, jr_, hp_);
    return row;
}

double floor_eigenvalues(Matrix& m, double floor) {
    m = 0.5 * (m + m.transpose()).eval();
    if (m.rows() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Matrix> es(m);
    const double raw = es.eigenvalues().minCoeff();
    if (raw < floor) {
        const Vector lam = es.eigenvalues().cwiseMax(floor);
        m = es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
        m = 0.5 * (m + m.transpose()).eval();
    }
    return raw;
}

DriftPosterior TrainedGp::drift(const Vector& x) const {
    require_fitted("posterior_drift");
    if (x.size() != phs_.n) throw InputError("posterior_drift: state dimension mismatch");
    const Matrix jrx = phs_.JR(x);
    DriftPosterior post;
    post.cov = k_phs(x, x, hp_, jrx, jrx);
    if (ops_.window_count > 0) {
        const Matrix ky = drift_cross(x);
        post.mean = ky.transpose() * alpha_f_;
        const Matrix v = cov_y_.llt.matrixL().solve(ky);
        post.cov.noalias() -= v.transpose() * v;
    } else {
        post.mean = Vector::Zero(phs_.n);
    }
    post.raw_min_eigenvalue = floor_eigenvalues(post.cov, 1e-10 * std::max(post.cov.trace(), 0.0));
    return post;
}

ScalarPosterior TrainedGp::hamiltonian(const Vector& x) const {
    require_fitted("posterior_hamiltonian");
    const Vector row = hamiltonian_cross(x);
    ScalarPosterior p;
    p.mean = row.dot(alpha_h_);
    const Vector v = k_gg_.llt.matrixL().solve(row);
    p.var = std::max(0.0, k_base(x, x, hp_) - v.squaredNorm());
    return p;
}

Matrix TrainedGp::joint_hamiltonian(const Matrix& points, Vector* means) const {
    require_fitted("joint_energy_cov");
    if (points.rows() != phs_.n) throw InputError("joint_energy_cov: state dimension mismatch");
    const Eigen::Index P = points.cols();
    const Eigen::Index N1 = 1 + ops_.window_count * phs_.n;
    Matrix rows(N1, P);
    Matrix prior(P, P);
    for (Eigen::Index i = 0; i < P; ++i) {
        rows.col(i) = hamiltonian_cross(points.col(i));
        for (Eigen::Index j = 0; j <= i; ++j) prior(i, j) = prior(j, i) = k_base(points.col(i), points.col(j), hp_);
    }
    if (means) *means = rows.transpose() * alpha_h_;
    const Matrix v = k_gg_.llt.matrixL().solve(rows);
    Matrix cov = prior - v.transpose() * v;
    floor_eigenvalues(cov, 0.0);
    return cov;
}

EnergyPosterior TrainedGp::energies(const Vector& x) const {
    require_fitted("energy posterior");
    const Eigen::Index n = phs_.n;
    if (x.size() != n) throw InputError("energy posterior: state dimension mismatch");
    if (n % 2 != 0) throw InputError("energy posterior: state dimension must be even to split into (q, p)");
    Matrix pts(n, 2);
    pts.col(0) = x;
    pts.col(1) = x;
    pts.col(1).tail(n / 2).setZero();
    Vector mu;
    const Matrix cov = joint_hamiltonian(pts, &mu);
    EnergyPosterior e;
    e.total = {mu(0), std::max(0.0, cov(0, 0))};
    e.potential = {mu(1), std::max(0.0, cov(1, 1))};
    e.kinetic = {mu(0) - mu(1), std::max(0.0, cov(0, 0) + cov(1, 1) - 2.0 * cov(0, 1))};
    return e;
}

void TrainedGp::joint_drift(const Matrix& points, Vector& mean, Matrix& cov) const {
    require_fitted("joint drift posterior");
    const Eigen::Index n = phs_.n;
    if (points.cols() != n) throw InputError("joint drift posterior: state dimension mismatch");
    const Eigen::Index P = points.rows();
    std::vector<Matrix> jr;
    jr.reserve(static_cast<std::size_t>(P));
    for (Eigen::Index i = 0; i < P; ++i) jr.push_back(phs_.JR(points.row(i).transpose()));
    cov = phs_gram(points, jr, hp_);
    mean = Vector::Zero(P * n);
    if (ops_.window_count == 0) return;
    Matrix ky(ops_.window_count * n, P * n);
    for (Eigen::Index i = 0; i < P; ++i) ky.middleCols(i * n, n) = drift_cross(points.row(i).transpose());
    mean = ky.transpose() * alpha_f_;
    cov_y_.llt.matrixL().solveInPlace(ky);
    cov.selfadjointView<Eigen::Lower>().rankUpdate(ky.transpose(), -1.0);
    cov.triangularView<Eigen::StrictlyUpper>() = cov.transpose();
}

DriftPosterior posterior_drift(const TrainedGp& model, const Vector& x) { return model.drift(x); }

ScalarPosterior posterior_hamiltonian(const TrainedGp& model, const Vector& x) { return model.hamiltonian(x); }

Eigen::Matrix2d joint_energy_cov(const TrainedGp& model, const Vector& xa, const Vector& xb) {
    Matrix pts(xa.size(), 2);
    if (xa.size() != xb.size()) throw InputError("joint_energy_cov: state dimension mismatch");
    pts.col(0) = xa;
    pts.col(1) = xb;
    return model.joint_hamiltonian(pts, nullptr);
}

ScalarPosterior posterior_kinetic(const TrainedGp& model, const Vector& q, const Vector& p) {
    if (q.size() != p.size()) throw InputError("posterior_kinetic: q and p must have equal length");
    if (q.size() + p.size() != model.state_dim())
        throw InputError("posterior_kinetic: (q, p) does not match the state dimension");
    Vector x(q.size() + p.size());
    x << q, p;
    return model.energies(x).kinetic;
}

ScalarPosterior posterior_potential(const TrainedGp& model, const Vector& q) {
    if (2 * q.size() != model.state_dim())
        throw InputError("posterior_potential: configuration must be half the state dimension");
    Vector x = Vector::Zero(2 * q.size());
    x.head(q.size()) = q;
    return model.hamiltonian(x);
}

}  // namespace ebcbf
