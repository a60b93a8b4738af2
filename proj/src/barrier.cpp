#include "ebcbf/barrier.hpp"

#include <cmath>
#include <limits>

namespace ebcbf {

double AffineInQ::operator()(const Vector& q) const {
    if (slope.size() == 0) return offset;
    if (slope.size() > q.size()) throw InputError("constraint threshold slope is longer than the configuration");
    return offset + slope.dot(q.head(slope.size()));
}

BandDirection EnergyConstraint::band_direction() const {
    switch (kind) {
    case ConstraintKind::kKinematic: return BandDirection::kNone;
    case ConstraintKind::kTotalLower: return BandDirection::kLower;
    default: return BandDirection::kUpper;
    }
}

EnergyConstraint EnergyConstraint::kinematic(double offset, Vector slope) {
    return {ConstraintKind::kKinematic, {offset, std::move(slope)}};
}
EnergyConstraint EnergyConstraint::kinetic_upper(double offset, Vector slope) {
    return {ConstraintKind::kKineticUpper, {offset, std::move(slope)}};
}
EnergyConstraint EnergyConstraint::potential_upper(double offset, Vector slope) {
    return {ConstraintKind::kPotentialUpper, {offset, std::move(slope)}};
}
EnergyConstraint EnergyConstraint::total_upper(double offset, Vector slope) {
    return {ConstraintKind::kTotalUpper, {offset, std::move(slope)}};
}
EnergyConstraint EnergyConstraint::total_lower(double offset, Vector slope) {
    return {ConstraintKind::kTotalLower, {offset, std::move(slope)}};
}

void BarrierSpec::validate() const {
    if (constraints.empty()) throw InputError("BarrierSpec: at least one constraint is required");
    if (!(beta_eb >= 0.0)) throw InputError("BarrierSpec: beta_eb must be >= 0");
    if (!(softmin_temperature > 0.0)) throw InputError("BarrierSpec: soft-min temperature must be > 0");
}

double beta_from_confidence(double eta, double cover) {
    if (!(eta > 0.0 && eta < 1.0)) throw InputError("confidence level eta must lie in (0, 1)");
    if (!(cover >= 1.0)) throw InputError("cover size must be >= 1");
    return std::sqrt(2.0 * std::log(cover / eta));
}

std::string to_string(ConstraintKind kind) {
    switch (kind) {
    case ConstraintKind::kKinematic: return "kinematic";
    case ConstraintKind::kKineticUpper: return "kinetic_upper";
    case ConstraintKind::kPotentialUpper: return "potential_upper";
    case ConstraintKind::kTotalUpper: return "total_upper";
    case ConstraintKind::kTotalLower: return "total_lower";
    }
    return "?";
}

ConstraintKind constraint_kind_from_string(const std::string& s) {
    if (s == "kinematic") return ConstraintKind::kKinematic;
    if (s == "kinetic_upper") return ConstraintKind::kKineticUpper;
    if (s == "potential_upper") return ConstraintKind::kPotentialUpper;
    if (s == "total_upper") return ConstraintKind::kTotalUpper;
    if (s == "total_lower") return ConstraintKind::kTotalLower;
    throw InputError("unknown constraint kind '" + s + "'");
}

std::string to_string(CombineMode mode) { return mode == CombineMode::kExactMin ? "exact_min" : "softmin"; }

CombineMode combine_mode_from_string(const std::string& s) {
    if (s == "exact_min") return CombineMode::kExactMin;
    if (s == "softmin") return CombineMode::kSoftmin;
    throw InputError("unknown combine mode '" + s + "'");
}

namespace {
Vector configuration(const Vector& x) { return x.head(x.size() / 2); }
}  // namespace

double constraint_margin(const EnergyConstraint& c, const EnergyPosterior& e, const Vector& x, double beta) {
    const Vector q = configuration(x);
    switch (c.kind) {
    case ConstraintKind::kKinematic: return c.threshold(q);
    case ConstraintKind::kKineticUpper: return c.threshold(q) - (e.kinetic.mean + beta * e.kinetic.sd());
    case ConstraintKind::kPotentialUpper: return c.threshold(q) - (e.potential.mean + beta * e.potential.sd());
    case ConstraintKind::kTotalUpper: return c.threshold(q) - (e.total.mean + beta * e.total.sd());
    case ConstraintKind::kTotalLower: return (e.total.mean - beta * e.total.sd()) - c.threshold(q);
    }
    return 0.0;
}

double constraint_margin(const EnergyConstraint& c, const TrainedGp& model, const Vector& x, double beta) {
    if (c.kind == ConstraintKind::kKinematic) {
        if (!model.fitted()) throw StateError("constraint_margin: model is not fitted");
        if (x.size() != model.state_dim()) throw InputError("constraint_margin: state dimension mismatch");
        return c.threshold(configuration(x));
    }
    return constraint_margin(c, model.energies(x), x, beta);
}

double constraint_margin_known(const EnergyConstraint& c, const KnownEnergies& e, const Vector& x) {
    EnergyPosterior p;
    p.kinetic.mean = e.kinetic;
    p.potential.mean = e.potential;
    p.total.mean = e.total;
    return constraint_margin(c, p, x, 0.0);
}

Vector softmin_weights(const Vector& margins, double temperature) {
    const double mmin = margins.minCoeff();
    Vector w = (-temperature * (margins.array() - mmin)).exp().matrix();
    return w / w.sum();
}

double combine_margins(const BarrierSpec& spec, const Vector& margins, CombineMode mode) {
    if (margins.size() == 0) throw InputError("h_eb: empty constraint list");
    const double mmin = margins.minCoeff();
    if (mode == CombineMode::kExactMin) return mmin;
    const double tau = spec.softmin_temperature;
    // -1/tau log sum exp(-tau m_i), shifted by the minimum for stability
    return mmin - std::log((-tau * (margins.array() - mmin)).exp().sum()) / tau;
}

Vector constraint_margins(const BarrierSpec& spec, const TrainedGp& model, const Vector& x) {
    spec.validate();
    if (!model.fitted()) throw StateError("h_eb: model is not fitted");
    if (x.size() != model.state_dim()) throw InputError("h_eb: state dimension mismatch");
    bool need_energy = false;
    for (const auto& c : spec.constraints) need_energy |= c.kind != ConstraintKind::kKinematic;
    EnergyPosterior e;
    if (need_energy) e = model.energies(x);
    Vector m(static_cast<Eigen::Index>(spec.constraints.size()));
    for (std::size_t i = 0; i < spec.constraints.size(); ++i)
        m(static_cast<Eigen::Index>(i)) = constraint_margin(spec.constraints[i], e, x, spec.beta_eb);
    return m;
}

double h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x, CombineMode mode) {
    return combine_margins(spec, constraint_margins(spec, model, x), mode);
}

double h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x) {
    return h_eb(spec, model, x, spec.combine_mode);
}

Vector grad_h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x) {
    Vector g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-5 * (1.0 + std::abs(x(i)));
        Vector xp = x, xm = x;
        xp(i) += h;
        xm(i) -= h;
        g(i) = (h_eb(spec, model, xp) - h_eb(spec, model, xm)) / (2.0 * h);
    }
    if (!g.allFinite()) throw NumericalError("grad_h_eb: non-finite gradient (posterior query returned NaN)");
    return g;
}

BarrierValue h_eb_with_gradient(const BarrierSpec& spec, const TrainedGp& model, const Vector& x) {
    BarrierValue out;
    out.value = h_eb(spec, model, x);
    if (!std::isfinite(out.value)) throw NumericalError("h_eb: non-finite value");
    out.gradient = grad_h_eb(spec, model, x);
    return out;
}

}  // namespace ebcbf
