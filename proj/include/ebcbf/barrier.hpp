#pragma once

// Energy-aware Bayesian barrier h_EB: user constraints on configuration and
// on kinetic / potential / total energy, evaluated on conservative posterior
// credible bands and folded into one scalar by an exact or soft minimum.

#include <string>
#include <vector>

#include "ebcbf/gp_phs.hpp"

namespace ebcbf {

enum class ConstraintKind { kKinematic, kKineticUpper, kPotentialUpper, kTotalUpper, kTotalLower };
enum class BandDirection { kNone, kUpper, kLower };
enum class CombineMode { kExactMin, kSoftmin };

/// Affine function of the configuration: offset + slope^T q.
struct AffineInQ {
    double offset{0.0};
    Vector slope;  // empty means zero

    double operator()(const Vector& q) const;
};

struct EnergyConstraint {
    ConstraintKind kind{ConstraintKind::kKinematic};
    // kinematic: the barrier h_q(q) itself; otherwise the energy threshold (upper or lower bound).
    AffineInQ threshold;

    BandDirection band_direction() const;

    static EnergyConstraint kinematic(double offset, Vector slope);
    static EnergyConstraint kinetic_upper(double offset, Vector slope = {});
    static EnergyConstraint potential_upper(double offset, Vector slope = {});
    static EnergyConstraint total_upper(double offset, Vector slope = {});
    static EnergyConstraint total_lower(double offset, Vector slope = {});
};

struct BarrierSpec {
    std::vector<EnergyConstraint> constraints;
    double beta_eb{0.0};
    double softmin_temperature{20.0};
    CombineMode combine_mode{CombineMode::kSoftmin};

    void validate() const;
};

/// sqrt(2 ln(cover / eta)); cover > 1 gives the union bound over that many points.
double beta_from_confidence(double eta, double cover = 1.0);

std::string to_string(ConstraintKind kind);
ConstraintKind constraint_kind_from_string(const std::string& s);
std::string to_string(CombineMode mode);
CombineMode combine_mode_from_string(const std::string& s);

/// Margin of one constraint with the band multiplier `beta` (>= 0 means satisfied).
double constraint_margin(const EnergyConstraint& c, const TrainedGp& model, const Vector& x, double beta);
/// Same with the energy posterior already evaluated at x.
double constraint_margin(const EnergyConstraint& c, const EnergyPosterior& e, const Vector& x, double beta);

/// Margin against known energies (the ground-truth barrier).
struct KnownEnergies {
    double kinetic{0.0};
    double potential{0.0};
    double total{0.0};
};
double constraint_margin_known(const EnergyConstraint& c, const KnownEnergies& e, const Vector& x);

double combine_margins(const BarrierSpec& spec, const Vector& margins, CombineMode mode);
/// Soft-min weights softmax(-tau m); the soft-min gradient is sum_i w_i grad m_i.
Vector softmin_weights(const Vector& margins, double temperature);

Vector constraint_margins(const BarrierSpec& spec, const TrainedGp& model, const Vector& x);

double h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x);
double h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x, CombineMode mode);

/// Central differences, step 1e-5 (1 + |x_i|) per coordinate.
Vector grad_h_eb(const BarrierSpec& spec, const TrainedGp& model, const Vector& x);

struct BarrierValue {
    double value{0.0};
    Vector gradient;
};
BarrierValue h_eb_with_gradient(const BarrierSpec& spec, const TrainedGp& model, const Vector& x);

}  // namespace ebcbf
