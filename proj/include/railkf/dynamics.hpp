#pragma once

#include <Eigen/Dense>
#include <array>
#include <complex>
#include <optional>
#include <string>
#include <vector>

namespace railkf::dynamics {

/// Parameter vector of the simplified model (one wheelset plus suspended frame).
struct SmParams {
    double m = 1109.0;     ///< wheelset mass, kg
    double I = 606.0;      ///< wheelset yaw inertia, kg m^2
    double l = 0.75;       ///< half-width of the wheelset, m
    double l_s = 0.85;     ///< half-length to primary suspension, m
    double alpha = 0.1;    ///< nominal conicity
    double r0 = 0.85;      ///< nominal rolling radius, m
    double m_f = 3781.0;   ///< suspended frame mass, kg
    double f11 = 5.5e6;    ///< longitudinal creep coefficient, N
    double f22 = 5.0e6;    ///< lateral creep coefficient, N
    double f23 = 9.3e3;    ///< lateral/spin creep coefficient, N m
    double f33 = 15.0;     ///< spin creep coefficient, N m^2
    double k_x = 7.95e5;   ///< N/m
    double c_x = 1.47e4;   ///< N s/m
    double k_y = 4.12e6;   ///< N/m
    double c_y = 1.41e5;   ///< N s/m
    double g = 9.81;

    /// The published equivalent parameters.
    static SmParams table1() { return {}; }
    /// Equivalent parameters identified against the default surrogate truth
    /// model (`railkf ident` with configs/ident.json).
    static SmParams surrogate_equivalent();

    void validate() const;
    /// Scale all four creep coefficients.
    SmParams with_creep_scale(double c) const;

    /// Index mask of the optimizable subset [k_x, c_x, k_y, c_y].
    static constexpr std::array<const char*, 4> opt_names{"k_x", "c_x", "k_y", "c_y"};
    std::array<double, 4> opt() const { return {k_x, c_x, k_y, c_y}; }
    SmParams with_opt(const std::array<double, 4>& p) const;
};

/// Which mass combination enters the gravitational stiffness of K_d[0].
enum class GravityForm { MinusFrame, PlusFrame };

/// 2x2 wheelset contact block shared by the simplified and the truth model.
struct ContactTerms {
    Eigen::Matrix2d K;
    Eigen::Matrix2d C;
    Eigen::Vector2d Kd;
};

ContactTerms contact_terms(const SmParams& p, double V, GravityForm form = GravityForm::MinusFrame);

/// Assembled second-order model M q'' + (Cs + Cc) q' + (Ks + Kc) q = Kd xi + Cd xi'.
struct LinearLateralModel {
    Eigen::Matrix3d M, Cs, Ks, Cc, Kc;
    Eigen::Vector3d Kd, Cd;
    Eigen::Matrix3d Minv;
    double V = 0.0;

    Eigen::Matrix3d C() const { return Cs + Cc; }
    Eigen::Matrix3d K() const { return Ks + Kc; }
};

LinearLateralModel assemble_sm(const SmParams& p, double V, GravityForm form = GravityForm::MinusFrame);

/// q'' for given coordinates, velocities and irregularity input.
Eigen::Vector3d sm_accelerations(const LinearLateralModel& model, const Eigen::Vector3d& q,
                                 const Eigen::Vector3d& qd, double xi, double xi_dot);

struct Mode {
    std::complex<double> eigenvalue;
    double freq_hz = 0.0;
    double damping_ratio = 0.0;
    double wavelength_m = 0.0;  ///< V / f, infinite for non-oscillatory modes
    bool oscillatory = false;
};

struct ModalSummary {
    std::vector<Mode> modes;  ///< one entry per oscillatory pair (positive imag) plus real modes
    double V = 0.0;

    std::optional<Mode> least_damped_oscillatory() const;
};

/// Eigen-analysis of the first-order companion form of (M, C, K).
ModalSummary modal_analysis(const Eigen::MatrixXd& M, const Eigen::MatrixXd& C,
                            const Eigen::MatrixXd& K, double V);
ModalSummary modal_analysis(const LinearLateralModel& model);

/// Klingel kinematic wavelength 2 pi sqrt(r0 l / alpha).
double klingel_wavelength(const SmParams& p);

/// Time response of the simplified model to a sampled irregularity,
/// RK4 with linear interpolation of xi between samples. Zero initial state.
struct SmResponse {
    Eigen::MatrixXd q;    ///< N x 3
    Eigen::MatrixXd qd;   ///< N x 3
    Eigen::MatrixXd qdd;  ///< N x 3
    bool diverged = false;
};

SmResponse simulate_sm(const LinearLateralModel& model, const Eigen::VectorXd& xi, double dt,
                       double divergence_limit = 1.0);

}  // namespace railkf::dynamics
