#include "ebcbf/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

namespace ebcbf {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

double parse_double(const std::string& s, const std::string& where) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = b + s.size();
    while (b < e && *b == ' ') ++b;
    const auto res = std::from_chars(b, e, v);
    if (res.ec != std::errc() || res.ptr != e) throw InputError(where + ": cannot parse number '" + s + "'");
    return v;
}

void write_comments(std::ostringstream& out, const std::vector<std::string>& comments) {
    for (const auto& c : comments) out << "# " << c << '\n';
}

}  // namespace

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open CSV '" + path + "'");
    CsvTable t;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            t.comments.push_back(line.size() > 2 ? line.substr(2) : std::string());
            continue;
        }
        if (!have_header) {
            t.header = split(line);
            have_header = true;
        } else {
            t.rows.push_back(split(line));
        }
    }
    if (!have_header) throw InputError("CSV '" + path + "' has no header line");
    return t;
}

std::string dataset_csv(const Dataset& data, const std::vector<std::string>& comments) {
    if (data.state_dim() != 2 || data.input_dim() != 1)
        throw InputError("dataset CSV supports the single-degree-of-freedom layout (q, p, u)");
    std::ostringstream out;
    write_comments(out, comments);
    out << kDatasetHeader << '\n';
    for (Eigen::Index k = 0; k < data.size(); ++k)
        out << format_double(data.times(k)) << ',' << format_double(data.states(k, 0)) << ','
            << format_double(data.states(k, 1)) << ',' << format_double(data.inputs(k, 0)) << '\n';
    return out.str();
}

Dataset read_dataset_csv(const std::string& path) {
    const CsvTable t = read_csv(path);
    if (t.header != split(kDatasetHeader))
        throw InputError("dataset CSV '" + path + "': expected header '" + kDatasetHeader + "'");
    Dataset d;
    const auto K = static_cast<Eigen::Index>(t.rows.size());
    d.times.resize(K);
    d.states.resize(K, 2);
    d.inputs.resize(K, 1);
    for (Eigen::Index k = 0; k < K; ++k) {
        const auto& r = t.rows[static_cast<std::size_t>(k)];
        const std::string where = path + " row " + std::to_string(k + 1);
        if (r.size() != 4) throw InputError(where + ": expected 4 columns");
        d.times(k) = parse_double(r[0], where);
        d.states(k, 0) = parse_double(r[1], where);
        d.states(k, 1) = parse_double(r[2], where);
        d.inputs(k, 0) = parse_double(r[3], where);
    }
    d.validate();
    return d;
}

std::string trajectory_csv(const Trajectory& tr, const std::vector<std::string>& comments) {
    if (tr.states.cols() != 2 || tr.inputs.cols() != 1)
        throw InputError("trajectory CSV supports the single-degree-of-freedom layout (q, p, u)");
    std::vector<std::string> tags(static_cast<std::size_t>(tr.times.size()));
    for (const auto& e : tr.events) {
        auto& tag = tags[e.step];
        tag += tag.empty() ? e.kind : ";" + e.kind;
    }
    std::ostringstream out;
    write_comments(out, comments);
    out << kTrajectoryHeader << '\n';
    for (Eigen::Index k = 0; k < tr.times.size(); ++k)
        out << format_double(tr.times(k)) << ',' << format_double(tr.states(k, 0)) << ','
            << format_double(tr.states(k, 1)) << ',' << format_double(tr.inputs(k, 0)) << ','
            << format_double(tr.h_eb(k)) << ',' << tags[static_cast<std::size_t>(k)] << '\n';
    return out.str();
}

}  // namespace ebcbf
