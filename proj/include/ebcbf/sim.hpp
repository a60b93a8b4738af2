#pragma once

// Ground-truth benchmark, RK4 integration, noisy data generation, closed-loop
// rollouts and Monte-Carlo estimation of Bayesian forward invariance.

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ebcbf/safety_filter.hpp"

namespace ebcbf {

/// One classical fourth-order Runge-Kutta step of xdot = f(x, u) with u held fixed.
template <typename F, typename Scalar>
VectorX<Scalar> rk4_step(F&& f, const VectorX<Scalar>& x, const VectorX<Scalar>& u, Scalar dt) {
    if (!(dt > Scalar(0))) throw InputError("rk4_step: dt must be > 0");
    const VectorX<Scalar> k1 = f(x, u);
    const VectorX<Scalar> k2 = f(VectorX<Scalar>(x + Scalar(0.5) * dt * k1), u);
    const VectorX<Scalar> k3 = f(VectorX<Scalar>(x + Scalar(0.5) * dt * k2), u);
    const VectorX<Scalar> k4 = f(VectorX<Scalar>(x + dt * k3), u);
    if (!k1.allFinite() || !k2.allFinite() || !k3.allFinite() || !k4.allFinite())
        throw NumericalError("rk4_step: non-finite derivative");
    return x + (dt / Scalar(6)) * (k1 + Scalar(2) * k2 + Scalar(2) * k3 + k4);
}

/// q'' = -(k/m) q - (d/m) q', written as a PHS in (q, p = m q').
struct MassSpring {
    double k{1.0};
    double m{1.0};
    double d{0.0};

    PhsStructure structure() const;
    Matrix input_map() const;  // G = [0; 1]
    Vector drift(const Vector& x) const;
    double hamiltonian(const Vector& x) const;
    KnownEnergies energies(const Vector& x) const;
};

/// Counter-based stream split of one seed (splitmix64 finalizer).
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);
std::mt19937_64 make_stream(std::uint64_t seed, std::uint64_t stream, std::uint64_t index = 0);

enum class SubsampleScheme { kBernoulli, kAll };

struct SimConfig {
    double t0{0.0};
    double tf{20.0};
    double dt{4e-3};
    double noise_std{0.05};
    double keep_fraction{0.5};
    SubsampleScheme scheme{SubsampleScheme::kBernoulli};
    std::uint64_t seed{0};
    Vector x0;

    void validate() const;
};

using InputSignal = std::function<Vector(double)>;

/// noise-free integration of the benchmark on the dt grid (u sampled at the step start)
struct CleanTrajectory {
    Vector times;
    Matrix states;
    Matrix inputs;
};
CleanTrajectory integrate(const MassSpring& system, const SimConfig& cfg, const InputSignal& input);

Dataset generate_dataset(const MassSpring& system, const SimConfig& cfg, const InputSignal& input);

/// Rectangular phase-plane grid; node (iq, ip) has index iq * np + ip.
struct Grid2d {
    double q_lo{-2.0}, q_hi{2.0}, p_lo{-2.0}, p_hi{2.0};
    int nq{61}, np{61};

    Eigen::Index size() const { return static_cast<Eigen::Index>(nq) * np; }
    Matrix points() const;  // size() x 2
    Vector point(int iq, int ip) const;
    void validate() const;
};

/// Drift values on grid nodes, bilinearly interpolated (states outside the grid are clamped to it).
struct DriftField {
    Grid2d grid;
    Matrix values;  // size() x 2

    Vector operator()(const Vector& x) const;
};

struct DynamicsSource {
    std::function<Vector(const Vector&)> drift;
    Matrix input_map;                 // constant g
    std::optional<MassSpring> truth;  // ground-truth energies for scoring

    static DynamicsSource ground_truth(const MassSpring& system);
    static DynamicsSource sampled(DriftField field, const Matrix& input_map, std::optional<MassSpring> truth = {});
};

struct RolloutConfig {
    double t0{0.0};
    double horizon{10.0};
    double dt{4e-3};
};

struct TrajectoryEvent {
    double t{0.0};
    std::size_t step{0};
    std::string kind;  // exit_design_set | violate_true_set
};

struct Trajectory {
    Vector times;
    Matrix states;
    Matrix inputs;
    Vector h_eb;
    Vector h_true;  // empty without ground truth
    std::vector<TrajectoryEvent> events;
    std::size_t active_steps{0};
    std::size_t degenerate_steps{0};

    double min_h_eb() const;
    bool has_event(const std::string& kind) const;
};

/// Ground-truth barrier: the same constraints on exact energies, combined by exact min.
double true_barrier(const BarrierSpec& spec, const MassSpring& system, const Vector& x);

/// The input is recomputed at the start of each step and held over it. Filter
/// degeneracy raises DegeneracyError naming the time of failure.
Trajectory rollout_closed_loop(const DynamicsSource& source, const FilterConfig& cfg, bool filtered, const Vector& x0,
                               const RolloutConfig& rc, const BarrierSpec& spec, const TrainedGp& model);

/// Jointly Gaussian drift draws over all grid nodes.
class DriftFieldSampler {
public:
    DriftFieldSampler(const TrainedGp& model, const Grid2d& grid);

    DriftField draw(std::mt19937_64& rng) const;
    /// Squared Mahalanobis radius of a draw against each node's marginal posterior.
    Vector mahalanobis2(const DriftField& field) const;

    const Grid2d& grid() const { return grid_; }
    const Vector& mean() const { return mean_; }
    const Matrix& node_cov(Eigen::Index node) const { return node_cov_[static_cast<std::size_t>(node)]; }
    double jitter() const { return jitter_; }

private:
    Grid2d grid_;
    Vector mean_;
    Matrix factor_;  // lower Cholesky factor of the joint covariance (upper part unused)
    std::vector<Matrix> node_cov_;
    std::vector<Matrix> node_cov_inv_;
    double jitter_{0.0};
};

std::vector<DriftField> sample_posterior_drift_field(const TrainedGp& model, const Grid2d& grid, std::uint64_t seed,
                                                     int count);

struct McConfig {
    int n_samples{200};
    RolloutConfig rollout;
    Grid2d grid;
    std::uint64_t seed{0};
    bool filtered{true};
    double tolerance{1e-3};  // relative, scaled by 1 + |h_EB(x0)|
    int threads{1};
};

struct McSample {
    bool safe{false};
    bool true_safe{false};
    bool error{false};
    bool in_credible_set{false};  // every visited cell corner inside the drift ellipsoid
    double min_h_eb{0.0};
    double max_mahalanobis2{0.0};
};

struct McResult {
    int n_samples{0};
    int n_safe{0};
    int n_true_safe{0};
    int n_errors{0};
    int n_in_credible_set{0};
    double safe_fraction{0.0};
    double wilson_lo{0.0};
    double wilson_hi{0.0};
    double true_safe_fraction{0.0};
    double h_eb_x0{0.0};
    std::vector<McSample> samples;
};

struct WilsonInterval {
    double lo{0.0}, hi{1.0};
};
WilsonInterval wilson_interval(int successes, int n, double z = 1.959963984540054);

McResult mc_safety_estimate(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x0,
                            const McConfig& mc, const std::optional<MassSpring>& truth = {});

}  // namespace ebcbf
