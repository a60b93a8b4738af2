#include "ebcbf/config.hpp"

#include <fstream>
#include <set>

namespace ebcbf {

using nlohmann::json;
using nlohmann::ordered_json;

InputSignal InputSpec::signal() const {
    if (kind == "zero") return [](double) { return Vector::Zero(1); };
    if (kind == "sine") {
        const double a = amplitude, w = frequency, ph = phase;
        return [a, w, ph](double t) { return Vector::Constant(1, a * std::sin(w * t + ph)); };
    }
    throw InputError("config: input.kind must be 'zero' or 'sine', got '" + kind + "'");
}

namespace {
Vector to_vector(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

OptimizerConfig GpSettings::optimizer() const {
    OptimizerConfig o;
    o.learning_rate = learning_rate;
    o.iterations = iterations;
    o.initial.signal_variance = init_signal_std * init_signal_std;
    o.initial.lengthscales = to_vector(init_lengthscales);
    o.initial.noise_variance = init_noise_std * init_noise_std;
    return o;
}

Anchor GpSettings::anchor() const {
    Anchor a;
    a.state = to_vector(anchor_state);
    a.value = anchor_value;
    return a;
}

BarrierSpec BarrierSettings::spec() const {
    BarrierSpec s;
    for (const auto& c : constraints)
        s.constraints.push_back({constraint_kind_from_string(c.kind), {c.offset, to_vector(c.slope)}});
    if (beta_eb && eta_eb) throw InputError("config: barrier sets both eta_eb and beta_eb");
    if (beta_eb) s.beta_eb = *beta_eb;
    else if (eta_eb) s.beta_eb = beta_from_confidence(*eta_eb, cover);
    else s.beta_eb = 0.0;
    s.softmin_temperature = softmin_temperature;
    s.combine_mode = combine_mode_from_string(combine_mode);
    s.validate();
    return s;
}

FilterConfig FilterSettings::config() const {
    FilterConfig f;
    f.gamma = gamma;
    if (beta_f && eta_dyn) throw InputError("config: filter sets both eta_dyn and beta_f");
    if (beta_f) f.beta_f = *beta_f;
    else if (eta_dyn) f.beta_f = beta_from_confidence(*eta_dyn);
    if (input_lower.has_value() != input_upper.has_value())
        throw InputError("config: filter input bounds need both input_lower and input_upper");
    if (input_lower) f.input_bounds = InputBounds{to_vector(*input_lower), to_vector(*input_upper)};
    const Vector gain = to_vector(nominal_gain);
    const double offset = nominal_offset;
    f.nominal = [gain, offset](const Vector& x) {
        if (x.size() != gain.size()) throw InputError("nominal controller: gain length does not match the state");
        return Vector::Constant(1, gain.dot(x) + offset);
    };
    f.validate(1);
    return f;
}

RunConfig::RunConfig() {
    sim.x0 = Vector(2);
    sim.x0 << 1.5, 0.0;
    sim.seed = 1;
    mc.seed = 2;
    posterior_grid.q_lo = posterior_grid.p_lo = -1.5;
    posterior_grid.q_hi = posterior_grid.p_hi = 1.5;
    posterior_grid.nq = posterior_grid.np = 21;
}

void RunConfig::validate() const {
    if (!(system.m > 0.0) || !(system.k > 0.0) || !(system.d >= 0.0))
        throw InputError("config: system needs m > 0, k > 0, d >= 0");
    sim.validate();
    input.signal();
    if (gp.order < 1) throw InputError("config: gp.order must be >= 1");
    if (gp.init_lengthscales.size() != 2 || gp.anchor_state.size() != 2)
        throw InputError("config: gp.init_lengthscales and gp.anchor_state need 2 entries");
    if (rollout_x0.size() != 2) throw InputError("config: rollout.x0 needs 2 entries");
    if (filter.nominal_gain.size() != 2) throw InputError("config: filter.nominal_gain needs 2 entries");
    if (!barrier.constraints.empty()) barrier.spec();
    filter.config();
    mc_grid.validate();
    posterior_grid.validate();
    if (mc.n_samples <= 0 || mc.threads <= 0) throw InputError("config: mc.n_samples and mc.threads must be > 0");
}

Vector RunConfig::x0() const { return to_vector(rollout_x0); }

McConfig RunConfig::mc_config() const {
    McConfig m;
    m.n_samples = mc.n_samples;
    m.rollout = rollout;
    m.grid = mc_grid;
    m.seed = mc.seed;
    m.filtered = mc.filtered;
    m.tolerance = mc.tolerance;
    m.threads = mc.threads;
    return m;
}

// ---------------------------------------------------------------------------

namespace {

std::string scheme_name(SubsampleScheme s) { return s == SubsampleScheme::kAll ? "all" : "bernoulli"; }

SubsampleScheme scheme_from(const std::string& s) {
    if (s == "bernoulli") return SubsampleScheme::kBernoulli;
    if (s == "all") return SubsampleScheme::kAll;
    throw InputError("config: sim.scheme must be 'bernoulli' or 'all', got '" + s + "'");
}

ordered_json grid_json(const Grid2d& g) {
    return {{"q_lo", g.q_lo}, {"q_hi", g.q_hi}, {"p_lo", g.p_lo}, {"p_hi", g.p_hi}, {"nq", g.nq}, {"np", g.np}};
}

// Reads keys of one object and rejects anything it was not asked for.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) throw InputError("config: '" + path_ + "' must be an object");
    }
    ~Section() noexcept(false) {
        if (std::uncaught_exceptions()) return;
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) throw InputError("config: unknown key '" + path_ + "." + it.key() + "'");
    }

    template <typename T>
    void get(const char* key, T& out) {
        seen_.insert(key);
        if (!j_.contains(key)) return;
        try {
            out = j_.at(key).get<T>();
        } catch (const json::exception&) {
            throw InputError("config: '" + path_ + "." + key + "' has the wrong type");
        }
    }
    template <typename T>
    void get(const char* key, std::optional<T>& out) {
        seen_.insert(key);
        if (!j_.contains(key) || j_.at(key).is_null()) return;
        T v{};
        get(key, v);
        out = v;
    }
    bool has(const char* key) const { return j_.contains(key); }
    Section sub(const char* key) {
        seen_.insert(key);
        return Section(j_.at(key), path_ + "." + key);
    }
    const json& raw(const char* key) {
        seen_.insert(key);
        return j_.at(key);
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

void read_grid(Section s, Grid2d& g) {
    s.get("q_lo", g.q_lo);
    s.get("q_hi", g.q_hi);
    s.get("p_lo", g.p_lo);
    s.get("p_hi", g.p_hi);
    s.get("nq", g.nq);
    s.get("np", g.np);
}

template <typename T>
void put_optional(ordered_json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

}  // namespace

ordered_json to_json(const RunConfig& c) {
    ordered_json j;
    j["system"] = {{"k", c.system.k}, {"m", c.system.m}, {"d", c.system.d}};
    j["sim"] = {{"t0", c.sim.t0},
                {"tf", c.sim.tf},
                {"dt", c.sim.dt},
                {"noise_std", c.sim.noise_std},
                {"keep_fraction", c.sim.keep_fraction},
                {"scheme", scheme_name(c.sim.scheme)},
                {"seed", c.sim.seed},
                {"x0", std::vector<double>(c.sim.x0.data(), c.sim.x0.data() + c.sim.x0.size())},
                {"input",
                 {{"kind", c.input.kind},
                  {"amplitude", c.input.amplitude},
                  {"frequency", c.input.frequency},
                  {"phase", c.input.phase}}}};
    j["gp"] = {{"order", c.gp.order},
               {"gap_factor", c.gp.gap_factor},
               {"learning_rate", c.gp.learning_rate},
               {"iterations", c.gp.iterations},
               {"init_signal_std", c.gp.init_signal_std},
               {"init_lengthscales", c.gp.init_lengthscales},
               {"init_noise_std", c.gp.init_noise_std},
               {"anchor_state", c.gp.anchor_state},
               {"anchor_value", c.gp.anchor_value}};
    ordered_json constraints = ordered_json::array();
    for (const auto& k : c.barrier.constraints)
        constraints.push_back({{"kind", k.kind}, {"offset", k.offset}, {"slope", k.slope}});
    ordered_json barrier = {{"constraints", constraints}};
    put_optional(barrier, "eta_eb", c.barrier.eta_eb);
    put_optional(barrier, "beta_eb", c.barrier.beta_eb);
    barrier["cover"] = c.barrier.cover;
    barrier["softmin_temperature"] = c.barrier.softmin_temperature;
    barrier["combine_mode"] = c.barrier.combine_mode;
    j["barrier"] = barrier;
    ordered_json filter = {{"gamma", c.filter.gamma}};
    put_optional(filter, "eta_dyn", c.filter.eta_dyn);
    put_optional(filter, "beta_f", c.filter.beta_f);
    put_optional(filter, "input_lower", c.filter.input_lower);
    put_optional(filter, "input_upper", c.filter.input_upper);
    filter["nominal_gain"] = c.filter.nominal_gain;
    filter["nominal_offset"] = c.filter.nominal_offset;
    j["filter"] = filter;
    j["rollout"] = {{"x0", c.rollout_x0}, {"t0", c.rollout.t0}, {"horizon", c.rollout.horizon}, {"dt", c.rollout.dt}};
    j["mc"] = {{"n_samples", c.mc.n_samples},
               {"seed", c.mc.seed},
               {"threads", c.mc.threads},
               {"tolerance", c.mc.tolerance},
               {"filtered", c.mc.filtered},
               {"grid", grid_json(c.mc_grid)}};
    j["posterior_grid"] = grid_json(c.posterior_grid);
    j["output_dir"] = c.output_dir;
    return j;
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    Section root(j, "config");
    if (root.has("system")) {
        Section s = root.sub("system");
        s.get("k", c.system.k);
        s.get("m", c.system.m);
        s.get("d", c.system.d);
    }
    if (root.has("sim")) {
        Section s = root.sub("sim");
        s.get("t0", c.sim.t0);
        s.get("tf", c.sim.tf);
        s.get("dt", c.sim.dt);
        s.get("noise_std", c.sim.noise_std);
        s.get("keep_fraction", c.sim.keep_fraction);
        std::string scheme = scheme_name(c.sim.scheme);
        s.get("scheme", scheme);
        c.sim.scheme = scheme_from(scheme);
        s.get("seed", c.sim.seed);
        std::vector<double> x0(c.sim.x0.data(), c.sim.x0.data() + c.sim.x0.size());
        s.get("x0", x0);
        c.sim.x0 = to_vector(x0);
        if (s.has("input")) {
            Section in = s.sub("input");
            in.get("kind", c.input.kind);
            in.get("amplitude", c.input.amplitude);
            in.get("frequency", c.input.frequency);
            in.get("phase", c.input.phase);
        }
    }
    if (root.has("gp")) {
        Section s = root.sub("gp");
        s.get("order", c.gp.order);
        s.get("gap_factor", c.gp.gap_factor);
        s.get("learning_rate", c.gp.learning_rate);
        s.get("iterations", c.gp.iterations);
        s.get("init_signal_std", c.gp.init_signal_std);
        s.get("init_lengthscales", c.gp.init_lengthscales);
        s.get("init_noise_std", c.gp.init_noise_std);
        s.get("anchor_state", c.gp.anchor_state);
        s.get("anchor_value", c.gp.anchor_value);
    }
    if (root.has("barrier")) {
        Section s = root.sub("barrier");
        if (s.has("constraints")) {
            const json& arr = s.raw("constraints");
            if (!arr.is_array()) throw InputError("config: barrier.constraints must be an array");
            for (std::size_t i = 0; i < arr.size(); ++i) {
                Section e(arr[i], "barrier.constraints[" + std::to_string(i) + "]");
                ConstraintSpec cs;
                e.get("kind", cs.kind);
                e.get("offset", cs.offset);
                e.get("slope", cs.slope);
                constraint_kind_from_string(cs.kind);
                c.barrier.constraints.push_back(cs);
            }
        }
        s.get("eta_eb", c.barrier.eta_eb);
        s.get("beta_eb", c.barrier.beta_eb);
        s.get("cover", c.barrier.cover);
        s.get("softmin_temperature", c.barrier.softmin_temperature);
        s.get("combine_mode", c.barrier.combine_mode);
    }
    if (root.has("filter")) {
        Section s = root.sub("filter");
        s.get("gamma", c.filter.gamma);
        s.get("eta_dyn", c.filter.eta_dyn);
        s.get("beta_f", c.filter.beta_f);
        s.get("input_lower", c.filter.input_lower);
        s.get("input_upper", c.filter.input_upper);
        s.get("nominal_gain", c.filter.nominal_gain);
        s.get("nominal_offset", c.filter.nominal_offset);
    }
    if (root.has("rollout")) {
        Section s = root.sub("rollout");
        s.get("x0", c.rollout_x0);
        s.get("t0", c.rollout.t0);
        s.get("horizon", c.rollout.horizon);
        s.get("dt", c.rollout.dt);
    }
    if (root.has("mc")) {
        Section s = root.sub("mc");
        s.get("n_samples", c.mc.n_samples);
        s.get("seed", c.mc.seed);
        s.get("threads", c.mc.threads);
        s.get("tolerance", c.mc.tolerance);
        s.get("filtered", c.mc.filtered);
        if (s.has("grid")) read_grid(s.sub("grid"), c.mc_grid);
    }
    if (root.has("posterior_grid")) read_grid(root.sub("posterior_grid"), c.posterior_grid);
    root.get("output_dir", c.output_dir);
    c.validate();
    return c;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open config '" + path + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("config '" + path + "' is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

}  // namespace ebcbf
