#pragma once

// Run configuration for the CLI, stored as JSON. Unknown keys are rejected so
// typos do not silently fall back to defaults.

#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ebcbf/sim.hpp"

namespace ebcbf {

struct InputSpec {
    std::string kind{"zero"};  // zero | sine
    double amplitude{0.0};
    double frequency{1.0};  // rad/s
    double phase{0.0};

    InputSignal signal() const;
};

struct GpSettings {
    int order{2};
    double gap_factor{10.0};
    double learning_rate{0.01};
    int iterations{500};
    double init_signal_std{1.0};
    std::vector<double> init_lengthscales{1.0, 1.0};
    double init_noise_std{0.1};
    std::vector<double> anchor_state{0.0, 0.0};
    double anchor_value{0.0};

    OptimizerConfig optimizer() const;
    Anchor anchor() const;
};

struct ConstraintSpec {
    std::string kind;
    double offset{0.0};
    std::vector<double> slope;
};

struct BarrierSettings {
    std::vector<ConstraintSpec> constraints;
    std::optional<double> eta_eb;
    std::optional<double> beta_eb;
    double cover{1.0};
    double softmin_temperature{20.0};
    std::string combine_mode{"softmin"};

    BarrierSpec spec() const;
};

struct FilterSettings {
    double gamma{1.0};
    std::optional<double> eta_dyn;
    std::optional<double> beta_f;
    std::optional<std::vector<double>> input_lower;
    std::optional<std::vector<double>> input_upper;
    std::vector<double> nominal_gain{0.0, 0.0};  // u_nom = gain^T x + offset
    double nominal_offset{0.0};

    FilterConfig config() const;
};

struct McSettings {
    int n_samples{200};
    std::uint64_t seed{0};
    int threads{1};
    double tolerance{1e-3};
    bool filtered{true};
};

struct RunConfig {
    MassSpring system;
    SimConfig sim;
    InputSpec input;
    GpSettings gp;
    BarrierSettings barrier;
    FilterSettings filter;
    std::vector<double> rollout_x0{1.2, 0.0};
    RolloutConfig rollout;
    Grid2d mc_grid;
    Grid2d posterior_grid;
    McSettings mc;
    std::string output_dir{"."};

    RunConfig();
    void validate() const;
    Vector x0() const;
    McConfig mc_config() const;
};

nlohmann::ordered_json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);

}  // namespace ebcbf
