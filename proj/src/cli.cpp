#include "ebcbf/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "ebcbf/config.hpp"
#include "ebcbf/content_hash.hpp"
#include "ebcbf/csv.hpp"
#include "ebcbf/model_io.hpp"

namespace ebcbf {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kSchemas = R"(Outputs (lines starting with '#' hold the config echo and input hashes):
  gen-data        dataset.csv             t,q,p,u
  fit             model.json              hyperparameters, anchor, multistep order, dataset path + sha1
                  nlml_trace.csv          iteration,nlml
  eval-posterior  posterior.csv           q,p,fq_mean,fp_mean,fq_sd,fp_sd,H_mean,H_sd,T_mean,T_sd,V_mean,V_sd,H_true
  run-filter      trajectory_filtered.csv t,q,p,u,h_eb,event
                  trajectory_nominal.csv  t,q,p,u,h_eb,event
  mc-verify       mc_summary.json         safe_fraction, wilson_lo, wilson_hi, counts, config echo
                  mc_samples.csv          index,safe,true_safe,error,in_credible_set,min_h_eb,max_mahalanobis2
Exit status: 0 ok, 1 input error, 2 numerical error, 3 infeasibility or degeneracy.)";

// Collects outputs in memory and writes them together; anything already
// written is removed again if a later write fails.
class Outputs {
public:
    void add(fs::path path, std::string content) { files_.emplace_back(std::move(path), std::move(content)); }

    void commit() {
        std::vector<fs::path> written;
        try {
            for (const auto& [path, content] : files_) {
                if (path.has_parent_path()) fs::create_directories(path.parent_path());
                std::ofstream out(path, std::ios::binary | std::ios::trunc);
                if (!out) throw InputError("cannot write '" + path.string() + "'");
                written.push_back(path);
                out << content;
                out.close();
                if (!out) throw InputError("failed writing '" + path.string() + "'");
            }
        } catch (...) {
            std::error_code ec;
            for (const auto& p : written) fs::remove(p, ec);
            throw;
        }
    }

private:
    std::vector<std::pair<fs::path, std::string>> files_;
};

struct Context {
    std::string config_path;
    std::string output_dir;
    RunConfig cfg;
    std::string config_sha1;

    fs::path out(const std::string& name) const { return fs::path(output_dir) / name; }

    std::vector<std::string> header(const std::string& command, const std::vector<std::pair<std::string, std::string>>& inputs) const {
        std::vector<std::string> lines{"ebcbf " + command, "config_sha1: " + config_sha1};
        for (const auto& [name, sha] : inputs) lines.push_back(name + "_sha1: " + sha);
        lines.push_back("config: " + to_json(cfg).dump());
        return lines;
    }
};

Context load_context(const std::string& config_path, const std::string& output_override) {
    Context c;
    c.config_path = config_path;
    c.cfg = load_run_config(config_path);
    c.config_sha1 = file_blob_sha1(config_path);
    c.output_dir = output_override.empty() ? c.cfg.output_dir : output_override;
    return c;
}

void cmd_gen_data(const Context& c) {
    const Dataset d = generate_dataset(c.cfg.system, c.cfg.sim, c.cfg.input.signal());
    Outputs o;
    o.add(c.out("dataset.csv"), dataset_csv(d, c.header("gen-data", {})));
    o.commit();
    std::cout << "wrote " << d.size() << " samples to " << c.out("dataset.csv").string() << '\n';
}

void cmd_fit(const Context& c, std::string data_path) {
    if (data_path.empty()) data_path = c.out("dataset.csv").string();
    const std::string data_sha = file_blob_sha1(data_path);
    const Dataset data = read_dataset_csv(data_path);
    if (data.empty()) throw InputError("fit: dataset '" + data_path + "' is empty (precondition: dataset nonempty)");
    const PhsStructure phs = c.cfg.system.structure();
    MultistepOperators ops = assemble_operators(data.times, c.cfg.gp.order, data.state_dim(), c.cfg.gp.gap_factor);
    const FitResult fit = fit_hyperparameters(data, phs, ops, c.cfg.gp.optimizer());

    ModelFile m;
    m.hp = fit.hp;
    m.anchor = c.cfg.gp.anchor();
    m.order = c.cfg.gp.order;
    m.gap_factor = c.cfg.gp.gap_factor;
    m.dataset_path = fs::absolute(data_path).lexically_normal().string();
    m.dataset_sha1 = data_sha;
    m.system = c.cfg.system;
    m.nlml = fit.best_nlml;
    TrainedGp::build(data, phs, std::move(ops), m.hp, m.anchor);

    std::ostringstream trace;
    for (const auto& line : c.header("fit", {{"dataset", data_sha}})) trace << "# " << line << '\n';
    trace << "iteration,nlml\n";
    for (std::size_t i = 0; i < fit.trace.size(); ++i) trace << i << ',' << format_double(fit.trace[i]) << '\n';

    Outputs o;
    o.add(c.out("model.json"), model_json(m));
    o.add(c.out("nlml_trace.csv"), trace.str());
    o.commit();
    std::cout << "nlml " << fit.initial_nlml << " -> " << fit.best_nlml << " (iteration " << fit.best_iteration
              << "), model written to " << c.out("model.json").string() << '\n';
}

struct LoadedModel {
    TrainedGp gp;
    std::string model_sha1;
    std::string dataset_sha1;
};

LoadedModel load(const Context& c, std::string model_path) {
    if (model_path.empty()) model_path = c.out("model.json").string();
    LoadedModel lm;
    lm.model_sha1 = file_blob_sha1(model_path);
    Dataset data;
    const ModelFile m = read_model_file(model_path, &data);
    lm.dataset_sha1 = m.dataset_sha1;
    lm.gp = build_model(m, data);
    return lm;
}

void cmd_eval_posterior(const Context& c, const std::string& model_path) {
    const LoadedModel lm = load(c, model_path);
    const Grid2d& g = c.cfg.posterior_grid;
    std::ostringstream out;
    for (const auto& line : c.header("eval-posterior", {{"model", lm.model_sha1}, {"dataset", lm.dataset_sha1}}))
        out << "# " << line << '\n';
    out << "q,p,fq_mean,fp_mean,fq_sd,fp_sd,H_mean,H_sd,T_mean,T_sd,V_mean,V_sd,H_true\n";
    for (int iq = 0; iq < g.nq; ++iq)
        for (int ip = 0; ip < g.np; ++ip) {
            const Vector x = g.point(iq, ip);
            const DriftPosterior f = lm.gp.drift(x);
            const EnergyPosterior e = lm.gp.energies(x);
            const double vals[] = {x(0), x(1), f.mean(0), f.mean(1), std::sqrt(f.cov(0, 0)), std::sqrt(f.cov(1, 1)),
                                   e.total.mean, e.total.sd(), e.kinetic.mean, e.kinetic.sd(), e.potential.mean,
                                   e.potential.sd(), c.cfg.system.hamiltonian(x)};
            for (std::size_t i = 0; i < std::size(vals); ++i) out << (i ? "," : "") << format_double(vals[i]);
            out << '\n';
        }
    Outputs o;
    o.add(c.out("posterior.csv"), out.str());
    o.commit();
    std::cout << "wrote " << g.size() << " grid points to " << c.out("posterior.csv").string() << '\n';
}

void cmd_run_filter(const Context& c, const std::string& model_path) {
    const LoadedModel lm = load(c, model_path);
    const BarrierSpec spec = c.cfg.barrier.spec();
    const FilterConfig fc = c.cfg.filter.config();
    const DynamicsSource truth = DynamicsSource::ground_truth(c.cfg.system);
    const Trajectory filtered = rollout_closed_loop(truth, fc, true, c.cfg.x0(), c.cfg.rollout, spec, lm.gp);
    const Trajectory nominal = rollout_closed_loop(truth, fc, false, c.cfg.x0(), c.cfg.rollout, spec, lm.gp);
    const auto head = c.header("run-filter", {{"model", lm.model_sha1}, {"dataset", lm.dataset_sha1}});
    auto with = [&](const std::string& tag) {
        auto h = head;
        h.insert(h.begin() + 1, "rollout: " + tag);
        return h;
    };
    Outputs o;
    o.add(c.out("trajectory_filtered.csv"), trajectory_csv(filtered, with("filtered")));
    o.add(c.out("trajectory_nominal.csv"), trajectory_csv(nominal, with("nominal")));
    o.commit();
    std::cout << "filtered: min h_eb " << filtered.min_h_eb() << ", active steps " << filtered.active_steps
              << "; nominal: min h_eb " << nominal.min_h_eb() << '\n';
}

void cmd_mc_verify(const Context& c, const std::string& model_path) {
    const LoadedModel lm = load(c, model_path);
    const BarrierSpec spec = c.cfg.barrier.spec();
    const FilterConfig fc = c.cfg.filter.config();
    const McConfig mc = c.cfg.mc_config();
    const McResult r = mc_safety_estimate(lm.gp, spec, fc, c.cfg.x0(), mc, c.cfg.system);

    ordered_json s;
    s["n_samples"] = r.n_samples;
    s["n_safe"] = r.n_safe;
    s["safe_fraction"] = r.safe_fraction;
    s["wilson_lo"] = r.wilson_lo;
    s["wilson_hi"] = r.wilson_hi;
    s["n_true_safe"] = r.n_true_safe;
    s["true_safe_fraction"] = r.true_safe_fraction;
    s["n_errors"] = r.n_errors;
    s["n_in_credible_set"] = r.n_in_credible_set;
    s["h_eb_x0"] = r.h_eb_x0;
    s["beta_eb"] = spec.beta_eb;
    s["beta_f"] = fc.beta_f;
    s["inputs"] = {{"config_sha1", c.config_sha1}, {"model_sha1", lm.model_sha1}, {"dataset_sha1", lm.dataset_sha1}};
    s["config"] = to_json(c.cfg);

    std::ostringstream samples;
    for (const auto& line : c.header("mc-verify", {{"model", lm.model_sha1}, {"dataset", lm.dataset_sha1}}))
        samples << "# " << line << '\n';
    samples << "index,safe,true_safe,error,in_credible_set,min_h_eb,max_mahalanobis2\n";
    for (std::size_t i = 0; i < r.samples.size(); ++i) {
        const McSample& m = r.samples[i];
        samples << i << ',' << m.safe << ',' << m.true_safe << ',' << m.error << ',' << m.in_credible_set << ','
                << format_double(m.min_h_eb) << ',' << format_double(m.max_mahalanobis2) << '\n';
    }
    Outputs o;
    o.add(c.out("mc_summary.json"), s.dump(2) + "\n");
    o.add(c.out("mc_samples.csv"), samples.str());
    o.commit();
    std::cout << "safe fraction " << r.safe_fraction << " [" << r.wilson_lo << ", " << r.wilson_hi << "] over "
              << r.n_samples << " draws\n";
}

std::string one_line(std::string s) {
    for (char& ch : s)
        if (ch == '\n' || ch == '\r') ch = ' ';
    return s;
}

}  // namespace

int run_command(int argc, const char* const* argv) {
    CLI::App app{"ebcbf: port-Hamiltonian GP learning and energy-aware Bayesian CBF safety filtering"};
    app.footer(kSchemas);
    app.require_subcommand(1);

    std::string config, output_dir, data_path, model_path;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("-c,--config", config, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("-o,--output-dir", output_dir, "output directory (overrides config output_dir)");
        sub->footer(kSchemas);
    };
    auto* gen = app.add_subcommand("gen-data", "simulate the benchmark and write a noisy, subsampled dataset");
    add_common(gen);
    auto* fit = app.add_subcommand("fit", "fit GP hyperparameters and write the model file");
    add_common(fit);
    fit->add_option("-d,--data", data_path, "dataset CSV (default <output-dir>/dataset.csv)");
    auto* eval = app.add_subcommand("eval-posterior", "write posterior mean/sd surfaces of f, H, T, V on a grid");
    add_common(eval);
    auto* run = app.add_subcommand("run-filter", "roll out the filtered and nominal closed loop on the true system");
    add_common(run);
    auto* mc = app.add_subcommand("mc-verify", "Monte-Carlo safety frequency over posterior drift draws");
    add_common(mc);
    for (auto* sub : {eval, run, mc})
        sub->add_option("-m,--model", model_path, "model file (default <output-dir>/model.json)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::kInputError);
    }

    std::string name = "ebcbf";
    try {
        const CLI::App* sub = app.get_subcommands().front();
        name += " " + sub->get_name();
        const Context c = load_context(config, output_dir);
        if (sub == gen) cmd_gen_data(c);
        else if (sub == fit) cmd_fit(c, data_path);
        else if (sub == eval) cmd_eval_posterior(c, model_path);
        else if (sub == run) cmd_run_filter(c, model_path);
        else cmd_mc_verify(c, model_path);
        return 0;
    } catch (const Error& e) {
        std::cerr << name << ": error: " << one_line(e.what()) << '\n';
        return static_cast<int>(e.exit_code());
    } catch (const std::exception& e) {
        std::cerr << name << ": error: " << one_line(e.what()) << '\n';
        return static_cast<int>(ExitCode::kInputError);
    }
}

int run_command(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"ebcbf"};
    for (const auto& a : args) argv.push_back(a.c_str());
    return run_command(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ebcbf
