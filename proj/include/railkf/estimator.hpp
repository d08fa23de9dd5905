#pragma once

#include <Eigen/Dense>
#include <vector>

#include "railkf/dynamics.hpp"

namespace railkf::estimator {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// State x = [y, psi, y_f, y', psi', y_f', xi]; measurement z = [y'', psi', y_f'', xi_virtual].
inline constexpr int kNx = 7;
inline constexpr int kNz = 4;

struct ContinuousModel {
    MatrixXd Fc;  ///< 7 x 7
    MatrixXd Hc;  ///< 4 x 7
};

ContinuousModel build_continuous(const dynamics::LinearLateralModel& model);

/// I + dt Fc + dt^2/2 Fc^2 on the position rows, I + dt Fc elsewhere.
MatrixXd discretize(const MatrixXd& Fc, double dt);

struct Covariances {
    MatrixXd Q;
    MatrixXd R;
    long samples = 0;
    bool low_sample_warning = false;  ///< fewer than 100 residuals
};

/// Sample covariances of the one-step state residual x_k - F x_{k-1} and the
/// measurement residual z_k - H x_k, symmetrized and loaded by `loading` on the diagonal.
/// `states` is N x nx and `meas` is N x nz.
Covariances estimate_covariances(const MatrixXd& states, const MatrixXd& meas, const MatrixXd& F,
                                 const MatrixXd& H, double loading = 1e-12);

struct FilterBundle {
    MatrixXd Fc, Hc, F, H, Q, R;
    double dt = 0.0;

    void validate() const;
};

/// Fc, Hc, F and H from an assembled simplified model; Q and R left empty.
FilterBundle make_bundle(const dynamics::LinearLateralModel& model, double dt);

struct KfResult {
    MatrixXd x;                 ///< N x nx, posterior estimates
    MatrixXd innovations;       ///< N x nz, z_k - H x_k^- (row 0 is zero)
    std::vector<MatrixXd> P;    ///< posterior covariances, kept only on request
    MatrixXd corrections;       ///< N x nx, x^+ - x^-
};

/// Linear Kalman filter. Row 0 of the output is the prior (x0, P0); rows 1..N-1
/// are predict/update steps on z rows 1..N-1.
KfResult kf_run(const FilterBundle& b, const MatrixXd& z, const VectorXd& x0, const MatrixXd& P0,
                bool keep_P = false);

/// Rank of [H; HF; ...; HF^(n-1)] after column scaling, singular values above tol * sigma_max.
int observability_rank(const MatrixXd& F, const MatrixXd& H, double tol = 1e-9);

/// Posterior covariance at k = 0 used when nothing else is configured.
VectorXd default_P0_diagonal();

}  // namespace railkf::estimator
