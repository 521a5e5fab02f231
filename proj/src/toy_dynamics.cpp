#include "qslab/toy_dynamics.hpp"

#include <cmath>
#include <stdexcept>

namespace qslab::toy {

double DifficultyPolicy1D::scale() const {
    return kind == PolicyKind::gaussian ? std::exp(log_scale) : 0.0;
}

double shaped_utility(double u) {
    if (!(u >= 0.0 && u <= 1.0)) {
        throw std::invalid_argument("shaped_utility: u must be in [0,1]");
    }
    return -std::fabs(u - 0.5);
}

namespace {

double sign_of(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

GaussHermite compute_gauss_hermite(int n) {
    // Newton iteration on the orthonormal Hermite recurrence
    // (weight exp(-x^2)); roots come in +/- pairs.
    GaussHermite rule;
    rule.nodes.assign(size_t(n), 0.0);
    rule.weights.assign(size_t(n), 0.0);
    const double pi_quarter = std::pow(M_PI, -0.25);
    int m = (n + 1) / 2;
    double z = 0.0;
    for (int i = 0; i < m; ++i) {
        if (i == 0) {
            z = std::sqrt(2.0 * n + 1.0) - 1.85575 * std::pow(2.0 * n + 1.0, -1.0 / 6.0);
        } else if (i == 1) {
            z -= 1.14 * std::pow(double(n), 0.426) / z;
        } else if (i == 2) {
            z = 1.86 * z - 0.86 * rule.nodes[0];
        } else if (i == 3) {
            z = 1.91 * z - 0.91 * rule.nodes[1];
        } else {
            z = 2.0 * z - rule.nodes[size_t(i - 2)];
        }
        double pp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p1 = pi_quarter;
            double p2 = 0.0;
            for (int j = 1; j <= n; ++j) {
                double p3 = p2;
                p2 = p1;
                p1 = z * std::sqrt(2.0 / j) * p2 - std::sqrt(double(j - 1) / j) * p3;
            }
            pp = std::sqrt(2.0 * n) * p2;
            double dz = p1 / pp;
            z -= dz;
            if (std::fabs(dz) < 1e-15) {
                break;
            }
        }
        rule.nodes[size_t(i)] = z;
        rule.nodes[size_t(n - 1 - i)] = -z;
        rule.weights[size_t(i)] = 2.0 / (pp * pp);
        rule.weights[size_t(n - 1 - i)] = rule.weights[size_t(i)];
    }
    return rule;
}

}  // namespace

const GaussHermite& gauss_hermite32() {
    static const GaussHermite rule = compute_gauss_hermite(32);
    return rule;
}

MeanWithError coupled_objective(const DifficultyPolicy1D& policy, double phi, int mc_samples,
                                RngStream& rng) {
    if (policy.kind == PolicyKind::point_mass) {
        return {shaped_utility(logistic(phi - policy.location)), 0.0};
    }
    if (mc_samples < 1) {
        throw std::invalid_argument("coupled_objective: mc_samples must be >= 1 for gaussian");
    }
    double s = policy.scale();
    double sum = 0.0;
    double sum_sq = 0.0;
    for (int i = 0; i < mc_samples; ++i) {
        double tau = policy.location + s * rng.normal();
        double v = shaped_utility(logistic(phi - tau));
        sum += v;
        sum_sq += v * v;
    }
    double mean = sum / mc_samples;
    double var = std::max(0.0, sum_sq / mc_samples - mean * mean);
    return {mean, std::sqrt(var / mc_samples)};
}

double coupled_objective_quad(const DifficultyPolicy1D& policy, double phi) {
    if (policy.kind == PolicyKind::point_mass) {
        return shaped_utility(logistic(phi - policy.location));
    }
    const auto& gh = gauss_hermite32();
    double s = policy.scale();
    double sum = 0.0;
    for (size_t i = 0; i < gh.nodes.size(); ++i) {
        double tau = policy.location + s * M_SQRT2 * gh.nodes[i];
        sum += gh.weights[i] * shaped_utility(logistic(phi - tau));
    }
    return sum / std::sqrt(M_PI);
}

double coupled_objective_grad(const DifficultyPolicy1D& policy, double phi) {
    if (policy.kind == PolicyKind::point_mass) {
        // Kink at location == phi: subgradient fixed to 0 so the apex is a
        // fixed point of the ascent.
        return -sign_of(policy.location - phi) * logistic_deriv(phi - policy.location);
    }
    const auto& gh = gauss_hermite32();
    double s = policy.scale();
    double sum = 0.0;
    for (size_t i = 0; i < gh.nodes.size(); ++i) {
        double tau = policy.location + s * M_SQRT2 * gh.nodes[i];
        double u = logistic(phi - tau);
        sum += gh.weights[i] * sign_of(u - 0.5) * logistic_deriv(phi - tau);
    }
    return sum / std::sqrt(M_PI);
}

CoupledState solver_step(const CoupledState& state, double eta) {
    CoupledState next = state;
    next.solver_ability += eta;
    return next;
}

CoupledState questioner_ascent_step(const CoupledState& state, double alpha) {
    if (!(alpha > 0.0)) {
        throw std::invalid_argument("questioner_ascent_step: alpha must be > 0");
    }
    CoupledState next = state;
    next.policy.location += alpha * coupled_objective_grad(state.policy, state.solver_ability);
    return next;
}

void validate(const ReversalCheckConfig& cfg) {
    if (cfg.eta == 0.0) {
        throw std::invalid_argument("hypotheses violated: eta must be nonzero");
    }
    bool in_band = (cfg.eta > 0.0) ? (cfg.delta > 0.0 && cfg.delta < cfg.eta)
                                   : (cfg.delta < 0.0 && cfg.delta > cfg.eta);
    if (!in_band) {
        throw std::invalid_argument(
            "hypotheses violated: delta must lie strictly between 0 and eta");
    }
    if (!(cfg.alpha > 0.0)) {
        throw std::invalid_argument("alpha must be > 0");
    }
    if (!(cfg.concentration_eps > 0.0)) {
        throw std::invalid_argument("concentration_eps must be > 0");
    }
    if (!(cfg.fd_step > 0.0)) {
        throw std::invalid_argument("fd_step must be > 0");
    }
}

ReversalReport reversal_check(const ReversalCheckConfig& cfg, double phi) {
    validate(cfg);

    DifficultyPolicy1D policy;
    policy.kind = PolicyKind::point_mass;
    policy.location = phi + cfg.delta;

    ReversalReport report;
    report.ascent_gradient = coupled_objective_grad(policy, phi);
    report.sigma_minus_delta = logistic(-cfg.delta);
    report.sigma_eta_minus_delta = logistic(cfg.eta - cfg.delta);

    double phi_next = phi + cfg.eta;
    report.j_next_before = coupled_objective_quad(policy, phi_next);

    DifficultyPolicy1D next_policy = policy;
    double grad_next = coupled_objective_grad(policy, phi_next);
    report.directional_derivative = grad_next * report.ascent_gradient;

    double h = cfg.fd_step;
    double g = report.ascent_gradient;
    DifficultyPolicy1D plus = policy;
    DifficultyPolicy1D minus = policy;
    plus.location += h * g;
    minus.location -= h * g;
    report.directional_derivative_fd =
        (coupled_objective_quad(plus, phi_next) - coupled_objective_quad(minus, phi_next)) /
        (2.0 * h);

    // Halve alpha until the first-order term dominates the measured change.
    double alpha = cfg.alpha;
    int halvings = 0;
    while (true) {
        next_policy.location = policy.location + alpha * g;
        report.j_next_after = coupled_objective_quad(next_policy, phi_next);
        report.delta_j = report.j_next_after - report.j_next_before;
        double first_order = alpha * report.directional_derivative;
        bool dominated = std::fabs(report.delta_j - first_order) <= 0.5 * std::fabs(first_order);
        if (dominated || halvings >= cfg.max_halvings) {
            break;
        }
        alpha *= 0.5;
        ++halvings;
    }
    report.alpha_used = alpha;
    report.halvings = halvings;
    report.reversal_confirmed =
        report.delta_j < 0.0 && report.directional_derivative < 0.0;
    return report;
}

Trajectory run_coupled_selfplay(const CoupledState& initial, double eta, double alpha,
                                int iterations, int mc_samples, RngStream& rng) {
    if (iterations < 1) {
        throw std::invalid_argument("run_coupled_selfplay: iterations must be >= 1");
    }
    auto objective = [&](const DifficultyPolicy1D& policy, double phi, int iter,
                         const char* tag) -> double {
        if (mc_samples > 0 && policy.kind == PolicyKind::gaussian) {
            auto s = rng.child("objective").child(uint64_t(iter)).child(tag);
            return coupled_objective(policy, phi, mc_samples, s).value;
        }
        return coupled_objective_quad(policy, phi);
    };

    Trajectory traj;
    CoupledState state = initial;
    traj.states.push_back(state);
    for (int t = 0; t < iterations; ++t) {
        TrajectoryPoint pt;
        pt.iteration = t;
        pt.phi = state.solver_ability;
        pt.location = state.policy.location;
        pt.scale = state.policy.scale();
        pt.grad = coupled_objective_grad(state.policy, state.solver_ability);
        pt.j_before = objective(state.policy, state.solver_ability, t, "before");

        state = questioner_ascent_step(state, alpha);
        pt.j_after = objective(state.policy, state.solver_ability, t, "after");
        traj.points.push_back(pt);

        state = solver_step(state, eta);
        state.iteration += 1;
        traj.states.push_back(state);
    }
    TrajectoryPoint last;
    last.iteration = iterations;
    last.phi = state.solver_ability;
    last.location = state.policy.location;
    last.scale = state.policy.scale();
    last.grad = coupled_objective_grad(state.policy, state.solver_ability);
    last.j_before = objective(state.policy, state.solver_ability, iterations, "before");
    last.j_after = last.j_before;
    traj.points.push_back(last);
    return traj;
}

}  // namespace qslab::toy
