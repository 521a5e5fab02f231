#pragma once

#include "qslab/core.hpp"
#include "qslab/rng.hpp"

#include <vector>

namespace qslab::toy {

// One-dimensional model of coupled questioner/solver training: the solver
// answers difficulty tau with probability sigma(phi - tau), the questioner
// emits difficulties from a one-parameter family and ascends a shaped
// objective that peaks at the solver's decision boundary.

enum class PolicyKind { point_mass, gaussian };

struct DifficultyPolicy1D {
    PolicyKind kind = PolicyKind::point_mass;
    double location = 0.0;
    double log_scale = 0.0;  // gaussian only; point_mass ignores it

    double scale() const;
};

struct CoupledState {
    double solver_ability = 0.0;
    DifficultyPolicy1D policy;
    int iteration = 0;
};

/// psi(u) = -|u - 1/2| on [0,1]; maximal (0) at the boundary u = 1/2.
double shaped_utility(double u);

/// J(theta) = E_{tau ~ pi_theta}[psi(sigma(phi - tau))].
/// point_mass: exact closed form (std_error 0). gaussian: Monte Carlo mean
/// over mc_samples draws, with standard error.
MeanWithError coupled_objective(const DifficultyPolicy1D&, double phi, int mc_samples, RngStream&);

/// Same objective through 32-node Gauss-Hermite quadrature (exact for
/// point_mass). Deterministic; used wherever noise-free values are needed.
double coupled_objective_quad(const DifficultyPolicy1D&, double phi);

/// d/d location of the objective. point_mass: -sign(location - phi) *
/// sigma'(phi - location), 0 at the kink location == phi. gaussian:
/// reparameterized Gauss-Hermite quadrature (the exact derivative of
/// coupled_objective_quad).
double coupled_objective_grad(const DifficultyPolicy1D&, double phi);

/// phi += eta; half-step, iteration unchanged.
CoupledState solver_step(const CoupledState&, double eta);

/// location += alpha * coupled_objective_grad; half-step.
CoupledState questioner_ascent_step(const CoupledState&, double alpha);

struct ReversalCheckConfig {
    double eta = 1.0;                // solver step, != 0
    double delta = 0.5;              // policy offset, same sign as eta, |delta| < |eta|
    double alpha = 1e-3;             // questioner step
    double concentration_eps = 0.05; // diagnostic mass radius
    double fd_step = 1e-5;           // finite-difference step for the cross-check
    int max_halvings = 20;
};

/// Throws "hypotheses violated" unless delta lies strictly between 0 and eta.
void validate(const ReversalCheckConfig&);

struct ReversalReport {
    double ascent_gradient = 0.0;          // g at (theta, phi)
    double j_next_before = 0.0;            // next-round objective at theta
    double j_next_after = 0.0;             // next-round objective at theta + alpha * g
    double delta_j = 0.0;
    double directional_derivative = 0.0;   // <grad J_next(theta), g>
    double directional_derivative_fd = 0.0;
    double sigma_minus_delta = 0.0;        // boundary value before the solver step
    double sigma_eta_minus_delta = 0.0;    // and after
    double alpha_used = 0.0;
    int halvings = 0;
    double mass_within_eps = 1.0;          // point-mass policies concentrate fully
    bool reversal_confirmed = false;
};

/// Evaluates the gradient-direction reversal for a point-mass policy
/// concentrated at phi + delta. The step size is halved (up to
/// max_halvings) until the first-order term dominates the objective change.
ReversalReport reversal_check(const ReversalCheckConfig&, double phi = 0.0);

struct TrajectoryPoint {
    int iteration = 0;
    double phi = 0.0;
    double location = 0.0;
    double scale = 0.0;  // 0 for point_mass
    double j_before = 0.0;
    double j_after = 0.0;
    double grad = 0.0;
};

struct Trajectory {
    std::vector<CoupledState> states;  // iterations + 1 entries
    std::vector<TrajectoryPoint> points;
};

/// Alternates a questioner ascent step (against the current phi) with a
/// solver step. J values come from the quadrature objective unless
/// mc_samples > 0, in which case they are seeded Monte Carlo estimates.
Trajectory run_coupled_selfplay(const CoupledState& initial, double eta, double alpha,
                                int iterations, int mc_samples, RngStream&);

struct GaussHermite {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// 32-node rule for weight exp(-x^2); weights sum to sqrt(pi).
const GaussHermite& gauss_hermite32();

}  // namespace qslab::toy
