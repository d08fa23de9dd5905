#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>

#include "railkf/dynamics.hpp"
#include "railkf/track.hpp"

namespace railkf::truthsim {

/// Surrogate truth vehicle: two conical wheelsets at x = +a (leading) and
/// x = -a, a bogie frame with lateral and yaw freedom, and a car-body share
/// on a secondary lateral suspension.
struct TruthParams {
    dynamics::SmParams sm = default_wheelset();
    double a = 1.25;         ///< half wheelbase, m
    double I_f = 2700.0;     ///< bogie frame yaw inertia, kg m^2
    double m_b = 2000.0;     ///< bogie frame mass, kg
    double m_c = 5562.0;     ///< car-body share, kg (2 m_f - m_b)
    double k2_y = 4.0e5;     ///< secondary lateral stiffness, N/m
    double c2_y = 3.0e4;     ///< secondary lateral damping, N s/m
    double roll_lag_tau = 0.3;  ///< s, lag of the cross-level term on the frame accelerometer
    /// Longitudinal position of the frame accelerometer relative to the bogie
    /// centre. Defaults to the leading axle (set equal to `a`).
    std::optional<double> frame_sensor_x;

    /// table1() wheelset data with a stiffer primary yaw spring, so the
    /// two-axle bogie reaches an amplitude ratio near 2 at 15.66 m.
    static dynamics::SmParams default_wheelset();

    double sensor_x() const { return frame_sensor_x.value_or(a); }
    void validate() const;
};

inline constexpr int kDof = 7;
inline constexpr std::array<const char*, kDof> kDofNames{"y1", "psi1", "y2", "psi2", "y_f", "psi_f", "y_c"};

/// Mass, damping, stiffness and input matrices; input u = [xi(s + a), xi(s - a)].
struct TruthMatrices {
    Eigen::Matrix<double, kDof, kDof> M, C, K;
    Eigen::Matrix<double, kDof, 2> D;
};

TruthMatrices assemble_truth(const TruthParams& tp, double V);

struct SensorRecord {
    Eigen::VectorXd t, s, acc_w, gyro_w, acc_f;
    Eigen::Index size() const { return t.size(); }
};

struct NoiseSpec {
    double sigma_acc_w = 0.01;
    double sigma_gyro = 5e-4;
    double sigma_acc_f = 0.01;
    double sigma_xi_virtual = 1.0;
    std::uint64_t seed = 3;

    void validate() const;
};

/// 10 % of the peak absolute value of each clean channel.
NoiseSpec sensor_noise_autoscale(const SensorRecord& clean, double sigma_xi_virtual, std::uint64_t seed);

/// Clean channels plus seeded Gaussian draws.
SensorRecord add_noise(const SensorRecord& clean, const NoiseSpec& noise);

struct TruthRun {
    Eigen::VectorXd t;
    Eigen::VectorXd s;          ///< arc length of the leading wheelset
    Eigen::MatrixXd x;          ///< N x 14, [q; qd] in kDofNames order
    Eigen::MatrixXd qdd;        ///< N x 7
    Eigen::VectorXd xi_lead;    ///< alignment under the leading wheelset
    SensorRecord clean;
    SensorRecord noisy;
    std::optional<NoiseSpec> noise;
    double V = 0.0;
    double dt = 0.0;
    double sensor_x = 0.0;

    /// States of the simplified model seen from the truth run:
    /// [y1, psi1, y_f(x_s), y1', psi1', y_f'(x_s), xi], x_s the sensor position.
    Eigen::MatrixXd augmented_states() const;
};

/// Fixed-step RK4. `noise` empty means noisy == clean.
TruthRun simulate_truth(const TruthParams& tp, const track::Profile& profile, double V,
                        double duration, double dt, const std::optional<NoiseSpec>& noise);

/// Arc length the profile must cover for a run of the given duration.
double required_profile_length(const TruthParams& tp, double V, double duration);

void write_sensor_csv(const SensorRecord& rec, const std::string& path);
void write_state_csv(const TruthRun& run, const std::string& path);

}  // namespace railkf::truthsim
