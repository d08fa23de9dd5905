#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "railkf/dynamics.hpp"

namespace railkf::ident {

/// Least-squares fit of the suspension subset [k_x, c_x, k_y, c_y] of the
/// simplified model to reference wheelset trajectories.
struct IdentProblem {
    dynamics::SmParams base;                           ///< fixed entries; opt entries ignored
    std::array<double, 4> guess{};                     ///< initial p_opt
    std::array<std::array<double, 2>, 4> bounds{};     ///< [lo, hi] per parameter
    Eigen::VectorXd xi;                                ///< irregularity under the wheelset, one sample per dt
    Eigen::VectorXd y_ref, psi_ref;                    ///< reference wheelset lateral displacement and yaw
    double V = 20.0;
    double dt = 1e-3;

    void validate() const;
    /// Bounds of one decade either side of `centre`.
    static std::array<std::array<double, 2>, 4> decade_bounds(const std::array<double, 4>& centre, double decades = 1.0);
};

struct Misfit {
    double J = 0.0;
    bool penalized = false;  ///< model diverged, penalty value returned
};

inline constexpr double kPenalty = 1e6;

/// Mean over samples of the squared channel errors, each channel divided by
/// the standard deviation of its reference.
Misfit misfit(const std::array<double, 4>& p_opt, const IdentProblem& problem);

struct IdentOptions {
    int max_iter = 500;
    double size_tol = 1e-4;      ///< simplex size in log-parameter space
    double initial_step = 0.5;   ///< log-space step of the initial simplex
};

struct IdentResult {
    std::array<double, 4> p_opt{};
    double J = 0.0;
    double J_initial = 0.0;
    int iterations = 0;
    bool converged = false;
    std::vector<double> trace;  ///< best J per iteration
};

/// Nelder-Mead (GSL nmsimplex2) over log-parameters, projected onto the bounds.
IdentResult identify(const IdentProblem& problem, const IdentOptions& opts = {});

}  // namespace railkf::ident
