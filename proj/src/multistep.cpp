#include "ebcbf/multistep.hpp"

#include <algorithm>

namespace ebcbf {

MultistepOperators MultistepOperators::empty(Eigen::Index sample_count, Eigen::Index state_dim, int order) {
    MultistepOperators ops;
    ops.A.resize(0, sample_count * state_dim);
    ops.B.resize(0, sample_count * state_dim);
    ops.order = order;
    ops.state_dim = state_dim;
    ops.sample_count = sample_count;
    return ops;
}

MultistepOperators assemble_operators(const Vector& times, int order, Eigen::Index state_dim, double gap_factor) {
    const Eigen::Index K = times.size();
    if (order < 1) throw InputError("assemble_operators: order must be >= 1");
    if (state_dim < 1) throw InputError("assemble_operators: state dimension must be >= 1");
    if (K <= order)
        throw InputError("assemble_operators: need more than " + std::to_string(order) + " samples, got " +
                         std::to_string(K));
    for (Eigen::Index k = 1; k < K; ++k)
        if (!(times(k) > times(k - 1))) throw InputError("assemble_operators: timestamps must be strictly increasing");

    std::vector<double> steps(static_cast<std::size_t>(K - 1));
    for (Eigen::Index k = 1; k < K; ++k) steps[static_cast<std::size_t>(k - 1)] = times(k) - times(k - 1);
    std::vector<double> sorted = steps;
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
    const double median = sorted[sorted.size() / 2];
    const double max_step = gap_factor * median;

    // A window starting at s is valid if none of its M steps exceeds max_step.
    std::vector<Eigen::Index> starts;
    for (Eigen::Index s = 0; s + order < K; ++s) {
        bool ok = true;
        for (int j = 0; j < order && ok; ++j) ok = steps[static_cast<std::size_t>(s + j)] <= max_step;
        if (ok) starts.push_back(s);
    }

    MultistepOperators ops;
    ops.order = order;
    ops.state_dim = state_dim;
    ops.sample_count = K;
    ops.window_count = static_cast<Eigen::Index>(starts.size());
    ops.window_starts = starts;

    const Eigen::Index n = state_dim;
    std::vector<Eigen::Triplet<double>> ta, tb;
    ta.reserve(starts.size() * 2 * static_cast<std::size_t>(n));
    tb.reserve(starts.size() * static_cast<std::size_t>((order + 1) * n));
    for (std::size_t w = 0; w < starts.size(); ++w) {
        const Eigen::Index s = starts[w];
        const auto c = vlmm_coefficients<double>(times.segment(s, order + 1), order);
        for (int j = 0; j <= order; ++j) {
            for (Eigen::Index d = 0; d < n; ++d) {
                const Eigen::Index row = static_cast<Eigen::Index>(w) * n + d;
                const Eigen::Index col = (s + j) * n + d;
                if (c.a(j) != 0.0) ta.emplace_back(row, col, c.a(j));
                tb.emplace_back(row, col, c.b(j));
            }
        }
    }
    ops.A.resize(ops.window_count * n, K * n);
    ops.B.resize(ops.window_count * n, K * n);
    ops.A.setFromTriplets(ta.begin(), ta.end());
    ops.B.setFromTriplets(tb.begin(), tb.end());
    return ops;
}

Vector project_labels(const MultistepOperators& ops, const Vector& noisy_states) {
    if (noisy_states.size() != ops.A.cols())
        throw InputError("project_labels: state vector has " + std::to_string(noisy_states.size()) +
                         " entries, operator expects " + std::to_string(ops.A.cols()));
    return ops.A * noisy_states;
}

}  // namespace ebcbf
