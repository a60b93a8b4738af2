#include "ebcbf/sim.hpp"

#include <algorithm>
#include <thread>

#include <Eigen/Cholesky>

namespace ebcbf {

PhsStructure MassSpring::structure() const {
    Matrix J(2, 2), R = Matrix::Zero(2, 2);
    J << 0.0, 1.0, -1.0, 0.0;
    R(1, 1) = d;
    return PhsStructure::constant(J, R, input_map());
}

Matrix MassSpring::input_map() const {
    Matrix G(2, 1);
    G << 0.0, 1.0;
    return G;
}

Vector MassSpring::drift(const Vector& x) const {
    Vector f(2);
    f << x(1) / m, -k * x(0) - d * x(1) / m;
    return f;
}

double MassSpring::hamiltonian(const Vector& x) const { return 0.5 * x(1) * x(1) / m + 0.5 * k * x(0) * x(0); }

KnownEnergies MassSpring::energies(const Vector& x) const {
    KnownEnergies e;
    e.kinetic = 0.5 * x(1) * x(1) / m;
    e.potential = 0.5 * k * x(0) * x(0);
    e.total = e.kinetic + e.potential;
    return e;
}

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(mix(seed) ^ stream) ^ index);
}

std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
    return std::mt19937_64(stream_seed(seed, stream, index));
}

void SimConfig::validate() const {
    if (!(dt > 0.0)) throw InputError("SimConfig: dt must be > 0");
    if (!(tf > t0)) throw InputError("SimConfig: tf must exceed t0");
    if (!(noise_std >= 0.0)) throw InputError("SimConfig: noise_std must be >= 0");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0)) throw InputError("SimConfig: keep_fraction must lie in (0, 1]");
    if (x0.size() != 2) throw InputError("SimConfig: x0 must be a 2-vector (q, p)");
}

CleanTrajectory integrate(const MassSpring& system, const SimConfig& cfg, const InputSignal& input) {
    cfg.validate();
    const auto steps = static_cast<Eigen::Index>(std::llround((cfg.tf - cfg.t0) / cfg.dt));
    const Matrix G = system.input_map();
    auto f = [&](const Vector& x, const Vector& u) -> Vector { return system.drift(x) + G * u; };
    CleanTrajectory tr;
    tr.times.resize(steps + 1);
    tr.states.resize(steps + 1, 2);
    tr.inputs.resize(steps + 1, 1);
    Vector x = cfg.x0;
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const double t = cfg.t0 + static_cast<double>(k) * cfg.dt;
        const Vector u = input ? input(t) : Vector::Zero(1);
        if (u.size() != 1) throw InputError("input signal must return one value per step");
        tr.times(k) = t;
        tr.states.row(k) = x.transpose();
        tr.inputs.row(k) = u.transpose();
        if (k < steps) x = rk4_step(f, x, u, cfg.dt);
    }
    return tr;
}

Dataset generate_dataset(const MassSpring& system, const SimConfig& cfg, const InputSignal& input) {
    const CleanTrajectory clean = integrate(system, cfg, input);
    auto noise_rng = make_stream(cfg.seed, 1);
    auto keep_rng = make_stream(cfg.seed, 2);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::bernoulli_distribution keep(cfg.keep_fraction);

    std::vector<Eigen::Index> kept;
    Matrix noisy = clean.states;
    for (Eigen::Index k = 0; k < clean.times.size(); ++k) {
        for (Eigen::Index i = 0; i < noisy.cols(); ++i) noisy(k, i) += cfg.noise_std * normal(noise_rng);
        const bool take = cfg.scheme == SubsampleScheme::kAll || keep(keep_rng);
        if (take) kept.push_back(k);
    }
    if (kept.empty()) throw InputError("generate_dataset: no samples left after subsampling (raise keep_fraction)");

    Dataset d;
    const auto K = static_cast<Eigen::Index>(kept.size());
    d.times.resize(K);
    d.states.resize(K, 2);
    d.inputs.resize(K, 1);
    for (Eigen::Index j = 0; j < K; ++j) {
        const Eigen::Index k = kept[static_cast<std::size_t>(j)];
        d.times(j) = clean.times(k);
        d.states.row(j) = noisy.row(k);
        d.inputs.row(j) = clean.inputs.row(k);
    }
    return d;
}

// ---------------------------------------------------------------------------

void Grid2d::validate() const {
    if (nq < 2 || np < 2) throw InputError("Grid2d: need at least 2 nodes per axis");
    if (!(q_hi > q_lo) || !(p_hi > p_lo)) throw InputError("Grid2d: empty range");
}

Vector Grid2d::point(int iq, int ip) const {
    Vector x(2);
    x << q_lo + (q_hi - q_lo) * iq / (nq - 1), p_lo + (p_hi - p_lo) * ip / (np - 1);
    return x;
}

Matrix Grid2d::points() const {
    Matrix pts(size(), 2);
    for (int iq = 0; iq < nq; ++iq)
        for (int ip = 0; ip < np; ++ip) pts.row(static_cast<Eigen::Index>(iq) * np + ip) = point(iq, ip).transpose();
    return pts;
}

namespace {
struct CellCoord {
    int iq, ip;
    double fq, fp;
};

CellCoord locate(const Grid2d& g, const Vector& x) {
    const double sq = (std::clamp(x(0), g.q_lo, g.q_hi) - g.q_lo) / (g.q_hi - g.q_lo) * (g.nq - 1);
    const double sp = (std::clamp(x(1), g.p_lo, g.p_hi) - g.p_lo) / (g.p_hi - g.p_lo) * (g.np - 1);
    CellCoord c;
    c.iq = std::min(static_cast<int>(std::floor(sq)), g.nq - 2);
    c.ip = std::min(static_cast<int>(std::floor(sp)), g.np - 2);
    c.fq = sq - c.iq;
    c.fp = sp - c.ip;
    return c;
}
}  // namespace

Vector DriftField::operator()(const Vector& x) const {
    const CellCoord c = locate(grid, x);
    auto node = [&](int iq, int ip) { return values.row(static_cast<Eigen::Index>(iq) * grid.np + ip).transpose(); };
    return (1 - c.fq) * (1 - c.fp) * node(c.iq, c.ip) + c.fq * (1 - c.fp) * node(c.iq + 1, c.ip) +
           (1 - c.fq) * c.fp * node(c.iq, c.ip + 1) + c.fq * c.fp * node(c.iq + 1, c.ip + 1);
}

DynamicsSource DynamicsSource::ground_truth(const MassSpring& system) {
    DynamicsSource s;
    s.drift = [system](const Vector& x) { return system.drift(x); };
    s.input_map = system.input_map();
    s.truth = system;
    return s;
}

DynamicsSource DynamicsSource::sampled(DriftField field, const Matrix& input_map, std::optional<MassSpring> truth) {
    DynamicsSource s;
    s.drift = [f = std::move(field)](const Vector& x) { return f(x); };
    s.input_map = input_map;
    s.truth = truth;
    return s;
}

double Trajectory::min_h_eb() const { return h_eb.size() ? h_eb.minCoeff() : 0.0; }

bool Trajectory::has_event(const std::string& kind) const {
    return std::any_of(events.begin(), events.end(), [&](const TrajectoryEvent& e) { return e.kind == kind; });
}

double true_barrier(const BarrierSpec& spec, const MassSpring& system, const Vector& x) {
    const KnownEnergies e = system.energies(x);
    double h = std::numeric_limits<double>::infinity();
    for (const auto& c : spec.constraints) h = std::min(h, constraint_margin_known(c, e, x));
    return h;
}

Trajectory rollout_closed_loop(const DynamicsSource& source, const FilterConfig& cfg, bool filtered, const Vector& x0,
                               const RolloutConfig& rc, const BarrierSpec& spec, const TrainedGp& model) {
    if (!(rc.dt > 0.0) || !(rc.horizon > 0.0)) throw InputError("rollout: dt and horizon must be > 0");
    if (x0.size() != model.state_dim()) throw InputError("rollout: x0 has the wrong dimension");
    if (!cfg.nominal) throw InputError("rollout: nominal controller is not set");
    cfg.validate(source.input_map.cols());
    spec.validate();

    const auto steps = static_cast<Eigen::Index>(std::llround(rc.horizon / rc.dt));
    const Eigen::Index n = x0.size();
    const Eigen::Index m = source.input_map.cols();
    Trajectory tr;
    tr.times.resize(steps + 1);
    tr.states.resize(steps + 1, n);
    tr.inputs.resize(steps + 1, m);
    tr.h_eb.resize(steps + 1);
    if (source.truth) tr.h_true.resize(steps + 1);

    auto f = [&](const Vector& x, const Vector& u) -> Vector { return source.drift(x) + source.input_map * u; };
    bool exited = false, violated = false;
    Vector x = x0;
    for (Eigen::Index k = 0; k <= steps; ++k) {
        const double t = rc.t0 + static_cast<double>(k) * rc.dt;
        const Vector u_nom = cfg.nominal(x);
        if (u_nom.size() != m) throw InputError("rollout: nominal controller returned the wrong input dimension");
        Vector u = u_nom;
        double h = 0.0;
        if (filtered) {
            const FilterTerms terms = filter_terms(model, spec, cfg, x);
            h = terms.h;
            QpSolution sol;
            try {
                sol = solve_filter_qp(terms.phi, terms.lgh, u_nom, cfg.input_bounds);
            } catch (const DegeneracyError& e) {
                throw DegeneracyError("rollout at t=" + std::to_string(t) + ": " + e.what());
            } catch (const InfeasibilityError& e) {
                throw InfeasibilityError("rollout at t=" + std::to_string(t) + ": " + e.what());
            }
            u = sol.u;
            tr.active_steps += sol.active ? 1 : 0;
            tr.degenerate_steps += sol.lgh_vanishing ? 1 : 0;
        } else {
            h = h_eb(spec, model, x);
        }
        tr.times(k) = t;
        tr.states.row(k) = x.transpose();
        tr.inputs.row(k) = u.transpose();
        tr.h_eb(k) = h;
        if (h < 0.0 && !exited) {
            exited = true;
            tr.events.push_back({t, static_cast<std::size_t>(k), "exit_design_set"});
        }
        if (source.truth) {
            const double ht = true_barrier(spec, *source.truth, x);
            tr.h_true(k) = ht;
            if (ht < 0.0 && !violated) {
                violated = true;
                tr.events.push_back({t, static_cast<std::size_t>(k), "violate_true_set"});
            }
        }
        if (k < steps) x = rk4_step(f, x, u, rc.dt);
    }
    return tr;
}

// ---------------------------------------------------------------------------

DriftFieldSampler::DriftFieldSampler(const TrainedGp& model, const Grid2d& grid) : grid_(grid) {
    grid_.validate();
    if (model.state_dim() != 2) throw InputError("DriftFieldSampler: phase-plane grid needs a 2-dimensional state");
    model.joint_drift(grid_.points(), mean_, factor_);

    const Eigen::Index P = grid_.size();
    node_cov_.resize(static_cast<std::size_t>(P));
    node_cov_inv_.resize(static_cast<std::size_t>(P));
    for (Eigen::Index i = 0; i < P; ++i) {
        Matrix c = factor_.block(2 * i, 2 * i, 2, 2);
        floor_eigenvalues(c, 1e-10 * std::max(c.trace(), 0.0));
        node_cov_inv_[static_cast<std::size_t>(i)] = c.inverse();
        node_cov_[static_cast<std::size_t>(i)] = std::move(c);
    }

    // In-place Cholesky of the lower triangle; the upper triangle keeps a copy for retries.
    const Vector diag = factor_.diagonal();
    const double scale = std::max(std::abs(diag.mean()), 1e-300);
    double rel = 0.0;
    while (true) {
        Eigen::LLT<Eigen::Ref<Matrix>> llt(factor_);
        if (llt.info() == Eigen::Success) break;
        rel = rel == 0.0 ? 1e-10 : rel * 10.0;
        if (rel > 1e-4 * (1.0 + 1e-9))
            throw NumericalError("DriftFieldSampler: joint drift covariance factorization failed after jitter escalation");
        factor_.triangularView<Eigen::StrictlyLower>() = factor_.transpose();
        factor_.diagonal() = diag.array() + rel * scale;
    }
    jitter_ = rel * scale;
}

DriftField DriftFieldSampler::draw(std::mt19937_64& rng) const {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector z(mean_.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
    const Vector v = mean_ + factor_.triangularView<Eigen::Lower>() * z;
    DriftField f;
    f.grid = grid_;
    f.values.resize(grid_.size(), 2);
    for (Eigen::Index i = 0; i < grid_.size(); ++i) f.values.row(i) = v.segment(2 * i, 2).transpose();
    return f;
}

Vector DriftFieldSampler::mahalanobis2(const DriftField& field) const {
    Vector r(grid_.size());
    for (Eigen::Index i = 0; i < grid_.size(); ++i) {
        const Vector d = field.values.row(i).transpose() - mean_.segment(2 * i, 2);
        r(i) = d.dot(node_cov_inv_[static_cast<std::size_t>(i)] * d);
    }
    return r;
}

std::vector<DriftField> sample_posterior_drift_field(const TrainedGp& model, const Grid2d& grid, std::uint64_t seed,
                                                     int count) {
    const DriftFieldSampler sampler(model, grid);
    std::vector<DriftField> out;
    out.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (int i = 0; i < count; ++i) {
        auto rng = make_stream(seed, 3, static_cast<std::uint64_t>(i));
        out.push_back(sampler.draw(rng));
    }
    return out;
}

WilsonInterval wilson_interval(int successes, int n, double z) {
    if (n <= 0) return {0.0, 1.0};
    const double p = static_cast<double>(successes) / n;
    const double z2 = z * z;
    const double denom = 1.0 + z2 / n;
    const double center = (p + z2 / (2.0 * n)) / denom;
    const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * static_cast<double>(n))) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

McResult mc_safety_estimate(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x0,
                            const McConfig& mc, const std::optional<MassSpring>& truth) {
    if (mc.n_samples <= 0) throw InputError("mc_safety_estimate: n_samples must be > 0");
    McResult res;
    res.h_eb_x0 = h_eb(spec, model, x0);
    if (res.h_eb_x0 < 0.0) throw InputError("mc_safety_estimate: x0 lies outside the design safe set (h_EB(x0) < 0)");

    const DriftFieldSampler sampler(model, mc.grid);
    const Matrix G = model.structure().G(x0);
    const double tol = mc.tolerance * (1.0 + std::abs(res.h_eb_x0));
    const double beta2 = cfg.beta_f * cfg.beta_f;

    res.samples.resize(static_cast<std::size_t>(mc.n_samples));
    auto run_one = [&](int i) {
        McSample s;
        auto rng = make_stream(mc.seed, 3, static_cast<std::uint64_t>(i));
        const DriftField field = sampler.draw(rng);
        const Vector m2 = sampler.mahalanobis2(field);
        try {
            const Trajectory tr = rollout_closed_loop(DynamicsSource::sampled(field, G, truth), cfg, mc.filtered, x0,
                                                      mc.rollout, spec, model);
            s.min_h_eb = tr.min_h_eb();
            s.safe = s.min_h_eb >= -tol;
            s.true_safe = tr.h_true.size() ? tr.h_true.minCoeff() >= -tol : false;
            const Grid2d& g = mc.grid;
            s.in_credible_set = true;
            for (Eigen::Index k = 0; k < tr.states.rows(); ++k) {
                const Vector xk = tr.states.row(k).transpose();
                const CellCoord c = locate(g, xk);
                for (int dq = 0; dq < 2; ++dq)
                    for (int dp = 0; dp < 2; ++dp) {
                        const double r2 = m2(static_cast<Eigen::Index>(c.iq + dq) * g.np + c.ip + dp);
                        s.max_mahalanobis2 = std::max(s.max_mahalanobis2, r2);
                        if (r2 > beta2) s.in_credible_set = false;
                    }
            }
        } catch (const Error&) {
            s.error = true;
            s.safe = false;
            s.true_safe = false;
        }
        res.samples[static_cast<std::size_t>(i)] = s;
    };

    const int threads = std::max(1, mc.threads);
    if (threads == 1) {
        for (int i = 0; i < mc.n_samples; ++i) run_one(i);
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t)
            pool.emplace_back([&, t] {
                for (int i = t; i < mc.n_samples; i += threads) run_one(i);
            });
        for (auto& th : pool) th.join();
    }

    res.n_samples = mc.n_samples;
    for (const auto& s : res.samples) {
        res.n_safe += s.safe;
        res.n_true_safe += s.true_safe;
        res.n_errors += s.error;
        res.n_in_credible_set += s.in_credible_set;
    }
    res.safe_fraction = static_cast<double>(res.n_safe) / res.n_samples;
    res.true_safe_fraction = static_cast<double>(res.n_true_safe) / res.n_samples;
    const WilsonInterval w = wilson_interval(res.n_safe, res.n_samples);
    res.wilson_lo = w.lo;
    res.wilson_hi = w.hi;
    return res;
}

}  // namespace ebcbf
