#pragma once

#include <random>

#include "ebcbf/sim.hpp"

namespace ebcbf::testing {

inline Vector vec(std::initializer_list<double> v) {
    Vector out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out(i++) = x;
    return out;
}

inline Vector uniform_vector(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Vector v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = u(rng);
    return v;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::max(std::abs(a), std::abs(b))); }

inline double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1.0, std::max(a.cwiseAbs().maxCoeff(), b.cwiseAbs().maxCoeff()));
}

/// Short noisy mass-spring dataset: K samples every `stride` integration steps.
inline Dataset small_dataset(int K, std::uint64_t seed = 3, double noise = 0.05, int stride = 25, double d = 0.0) {
    MassSpring sys{1.0, 1.0, d};
    SimConfig cfg;
    cfg.dt = 4e-3;
    cfg.tf = cfg.dt * stride * (K - 1) + 1e-12;
    cfg.noise_std = noise;
    cfg.scheme = SubsampleScheme::kAll;
    cfg.seed = seed;
    cfg.x0 = vec({1.0, 0.3});
    const Dataset full =
        generate_dataset(sys, cfg, [](double t) { return Vector::Constant(1, 0.3 * std::sin(1.3 * t)); });
    Dataset out;
    out.times.resize(K);
    out.states.resize(K, 2);
    out.inputs.resize(K, 1);
    for (int k = 0; k < K; ++k) {
        out.times(k) = full.times(k * stride);
        out.states.row(k) = full.states.row(k * stride);
        out.inputs.row(k) = full.inputs.row(k * stride);
    }
    return out;
}

inline Hyperparams test_hp() {
    Hyperparams hp;
    hp.signal_variance = 0.8;
    hp.lengthscales = vec({1.1, 0.9});
    hp.noise_variance = 0.05 * 0.05;
    return hp;
}

inline TrainedGp small_model(int K, int order = 2, std::uint64_t seed = 3, double d = 0.0) {
    const Dataset data = small_dataset(K, seed, 0.05, 25, d);
    MassSpring sys{1.0, 1.0, d};
    return TrainedGp::build(data, sys.structure(), assemble_operators(data.times, order, 2), test_hp());
}

}  // namespace ebcbf::testing
