#include "ebcbf/model_io.hpp"

#include <filesystem>

#include "json.hpp"

#include "ebcbf/content_hash.hpp"
#include "ebcbf/csv.hpp"

namespace ebcbf {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {
std::vector<double> as_std(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
Vector as_eigen(const std::vector<double>& v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace

std::string model_json(const ModelFile& m) {
    ordered_json j;
    j["format"] = "ebcbf-model";
    j["version"] = 1;
    j["hyperparameters"] = {{"signal_variance", m.hp.signal_variance},
                            {"lengthscales", as_std(m.hp.lengthscales)},
                            {"noise_variance", m.hp.noise_variance}};
    j["anchor"] = {{"state", as_std(m.anchor.state)}, {"value", m.anchor.value}, {"noise_variance", m.anchor.noise_variance}};
    j["multistep"] = {{"order", m.order}, {"gap_factor", m.gap_factor}};
    j["dataset"] = {{"path", m.dataset_path}, {"sha1", m.dataset_sha1}};
    j["system"] = {{"k", m.system.k}, {"m", m.system.m}, {"d", m.system.d}};
    j["nlml"] = m.nlml;
    return j.dump(2) + "\n";
}

ModelFile parse_model_json(const std::string& text) {
    ModelFile m;
    try {
        const json j = json::parse(text);
        if (j.at("format") != "ebcbf-model") throw InputError("model file: unexpected format tag");
        if (j.at("version") != 1) throw InputError("model file: unsupported version");
        const auto& h = j.at("hyperparameters");
        m.hp.signal_variance = h.at("signal_variance").get<double>();
        m.hp.lengthscales = as_eigen(h.at("lengthscales").get<std::vector<double>>());
        m.hp.noise_variance = h.at("noise_variance").get<double>();
        const auto& a = j.at("anchor");
        m.anchor.state = as_eigen(a.at("state").get<std::vector<double>>());
        m.anchor.value = a.at("value").get<double>();
        m.anchor.noise_variance = a.at("noise_variance").get<double>();
        m.order = j.at("multistep").at("order").get<int>();
        m.gap_factor = j.at("multistep").at("gap_factor").get<double>();
        m.dataset_path = j.at("dataset").at("path").get<std::string>();
        m.dataset_sha1 = j.at("dataset").at("sha1").get<std::string>();
        m.system.k = j.at("system").at("k").get<double>();
        m.system.m = j.at("system").at("m").get<double>();
        m.system.d = j.at("system").at("d").get<double>();
        m.nlml = j.at("nlml").get<double>();
    } catch (const json::exception& e) {
        throw InputError(std::string("model file is malformed: ") + e.what());
    }
    m.hp.validate(m.hp.lengthscales.size());
    return m;
}

ModelFile read_model_file(const std::string& path, Dataset* data) {
    ModelFile m = parse_model_json(read_file(path));
    std::filesystem::path dp(m.dataset_path);
    if (dp.is_relative()) dp = std::filesystem::path(path).parent_path() / dp;
    const std::string content = read_file(dp.string());
    if (git_blob_sha1(content) != m.dataset_sha1)
        throw InputError("model file: dataset '" + dp.string() + "' does not match the recorded content hash");
    if (data) *data = read_dataset_csv(dp.string());
    return m;
}

TrainedGp build_model(const ModelFile& m, const Dataset& data) {
    MultistepOperators ops = assemble_operators(data.times, m.order, data.state_dim(), m.gap_factor);
    return TrainedGp::build(data, m.system.structure(), std::move(ops), m.hp, m.anchor);
}

TrainedGp load_model(const std::string& path) {
    Dataset data;
    const ModelFile m = read_model_file(path, &data);
    return build_model(m, data);
}

}  // namespace ebcbf
