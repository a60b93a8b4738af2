#pragma once

// EB-CBF safety filter: worst case of the drift-side barrier term over the
// drift credible ellipsoid, and the minimum-deviation input that keeps
//   phi_lower(x) + grad h_EB(x)^T g(x) u >= 0.

#include <functional>
#include <optional>

#include "ebcbf/barrier.hpp"

namespace ebcbf {

struct InputBounds {
    Vector lower;
    Vector upper;
};

using NominalController = std::function<Vector(const Vector&)>;

struct FilterConfig {
    double gamma{1.0};   // alpha(h) = gamma h
    double beta_f{0.0};  // ellipsoid radius
    std::optional<InputBounds> input_bounds;
    NominalController nominal;

    void validate(Eigen::Index m) const;
};

/// Closed-form lower bound grad_h^T mu_f + gamma h - beta_f || Sigma_f^{1/2} grad_h ||.
double phi_lower(const Vector& grad_h, double h, const Vector& mu_f, const Matrix& sigma_f, double gamma, double beta_f);

/// Symmetric PSD square root with eigenvalues floored at 1e-10 * trace.
Matrix psd_sqrt(const Matrix& sigma);

/// Everything the filter needs at one state.
struct FilterTerms {
    double h{0.0};
    Vector grad_h;
    DriftPosterior drift;
    Matrix g;      // n x m input map
    Vector lgh;    // g^T grad_h
    double phi{0.0};
};

FilterTerms filter_terms(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x);

double phi_lower(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x);

struct QpSolution {
    Vector u;
    bool active{false};           // barrier constraint modified u_nom
    bool lgh_vanishing{false};    // inactive, with || g^T grad h || <= 1e-10
};

/// argmin ||u - u_nom||^2 s.t. phi + lgh^T u >= 0 and the optional input box.
QpSolution solve_filter_qp(double phi, const Vector& lgh, const Vector& u_nom, const std::optional<InputBounds>& bounds);

Vector filter_control(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg, const Vector& x,
                      const Vector& u_nom);

/// phi_lower(x) + grad h_EB(x)^T g(x) u
double ebcbf_constraint_residual(const TrainedGp& model, const BarrierSpec& spec, const FilterConfig& cfg,
                                 const Vector& x, const Vector& u);

}  // namespace ebcbf
