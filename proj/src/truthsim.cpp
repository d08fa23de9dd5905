#include "railkf/truthsim.hpp"

#include <cmath>
#include <random>

#include "railkf/csv.hpp"
#include "railkf/errors.hpp"

namespace railkf::truthsim {

using Mat7 = Eigen::Matrix<double, kDof, kDof>;
using Vec7 = Eigen::Matrix<double, kDof, 1>;
using Vec14 = Eigen::Matrix<double, 2 * kDof, 1>;

dynamics::SmParams TruthParams::default_wheelset() {
    dynamics::SmParams p = dynamics::SmParams::table1();
    p.k_x = 6.0 * 7.95e5;
    return p;
}

void TruthParams::validate() const {
    sm.validate();
    if (!(a >= 0.0)) throw ConfigError("truth half wheelbase a must be >= 0");
    if (!(I_f > 0.0 && m_b > 0.0 && m_c > 0.0)) throw ConfigError("truth masses and inertias must be > 0");
    if (!(k2_y >= 0.0 && c2_y >= 0.0)) throw ConfigError("secondary suspension must be >= 0");
    if (!(roll_lag_tau > 0.0)) throw ConfigError("roll lag time constant must be > 0");
}

void NoiseSpec::validate() const {
    if (!(sigma_acc_w >= 0.0 && sigma_gyro >= 0.0 && sigma_acc_f >= 0.0 && sigma_xi_virtual >= 0.0))
        throw ConfigError("noise standard deviations must be >= 0");
}

TruthMatrices assemble_truth(const TruthParams& tp, double V) {
    tp.validate();
    const auto& p = tp.sm;
    TruthMatrices T;
    T.M.setZero();
    T.M.diagonal() << p.m, p.I, p.m, p.I, tp.m_b, tp.I_f, tp.m_c;
    T.K.setZero();
    T.C.setZero();
    T.D.setZero();

    const auto ct = dynamics::contact_terms(p, V);
    const double ky = p.k_y, cy = p.c_y;
    const double kpsi = p.k_x * p.l_s * p.l_s, cpsi = p.c_x * p.l_s * p.l_s;
    const double xs[2] = {tp.a, -tp.a};
    for (int i = 0; i < 2; ++i) {
        const int iy = 2 * i, ip = 2 * i + 1;
        T.K.block<2, 2>(iy, iy) += ct.K;
        T.C.block<2, 2>(iy, iy) += ct.C;
        T.D(iy, i) = ct.Kd(0);
        T.D(ip, i) = ct.Kd(1);

        // Lateral primary spring between wheelset i and the frame point above it.
        Vec7 v = Vec7::Zero();
        v(iy) = 1.0;
        v(4) = -1.0;
        v(5) = -xs[i];
        T.K += ky * v * v.transpose();
        T.C += cy * v * v.transpose();
        // Yaw primary spring between wheelset i and the frame.
        Vec7 w = Vec7::Zero();
        w(ip) = 1.0;
        w(5) = -1.0;
        T.K += kpsi * w * w.transpose();
        T.C += cpsi * w * w.transpose();
    }
    Vec7 v = Vec7::Zero();
    v(4) = 1.0;
    v(6) = -1.0;
    T.K += tp.k2_y * v * v.transpose();
    T.C += tp.c2_y * v * v.transpose();
    return T;
}

double required_profile_length(const TruthParams& tp, double V, double duration) {
    return 2.0 * tp.a + V * duration;
}

NoiseSpec sensor_noise_autoscale(const SensorRecord& clean, double sigma_xi_virtual, std::uint64_t seed) {
    if (clean.size() == 0) throw ConfigError("noise autoscale needs non-empty channels");
    NoiseSpec n;
    n.sigma_acc_w = 0.1 * clean.acc_w.cwiseAbs().maxCoeff();
    n.sigma_gyro = 0.1 * clean.gyro_w.cwiseAbs().maxCoeff();
    n.sigma_acc_f = 0.1 * clean.acc_f.cwiseAbs().maxCoeff();
    n.sigma_xi_virtual = sigma_xi_virtual;
    n.seed = seed;
    return n;
}

SensorRecord add_noise(const SensorRecord& clean, const NoiseSpec& noise) {
    noise.validate();
    SensorRecord out = clean;
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    // Row-major draw order: one triple per sample.
    for (Eigen::Index k = 0; k < clean.size(); ++k) {
        out.acc_w(k) += noise.sigma_acc_w * nd(rng);
        out.gyro_w(k) += noise.sigma_gyro * nd(rng);
        out.acc_f(k) += noise.sigma_acc_f * nd(rng);
    }
    return out;
}

Eigen::MatrixXd TruthRun::augmented_states() const {
    const Eigen::Index N = t.size();
    Eigen::MatrixXd xs(N, 7);
    xs.col(0) = x.col(0);
    xs.col(1) = x.col(1);
    xs.col(2) = x.col(4) + sensor_x * x.col(5);
    xs.col(3) = x.col(kDof + 0);
    xs.col(4) = x.col(kDof + 1);
    xs.col(5) = x.col(kDof + 4) + sensor_x * x.col(kDof + 5);
    xs.col(6) = xi_lead;
    return xs;
}

TruthRun simulate_truth(const TruthParams& tp, const track::Profile& profile, double V,
                        double duration, double dt, const std::optional<NoiseSpec>& noise) {
    tp.validate();
    profile.validate();
    if (!(dt > 0.0)) throw ConfigError("truth dt must be positive");
    if (!(duration > 0.0)) throw ConfigError("truth duration must be positive");
    if (!(V > 0.0)) throw ConfigError("forward speed V must be > 0");
    const double need = required_profile_length(tp, V, duration);
    if (profile.length() + 1e-9 < need)
        throw ConfigError("profile too short: need " + std::to_string(need) + " m, have " +
                          std::to_string(profile.length()) + " m");

    const TruthMatrices T = assemble_truth(tp, V);
    const Mat7 Mi = T.M.inverse();
    Eigen::Matrix<double, 2 * kDof, 2 * kDof> A = Eigen::Matrix<double, 2 * kDof, 2 * kDof>::Zero();
    A.topRightCorner<kDof, kDof>().setIdentity();
    A.bottomLeftCorner<kDof, kDof>() = -Mi * T.K;
    A.bottomRightCorner<kDof, kDof>() = -Mi * T.C;
    Eigen::Matrix<double, 2 * kDof, 2> B = Eigen::Matrix<double, 2 * kDof, 2>::Zero();
    B.bottomRows<kDof>() = Mi * T.D;

    const double a = tp.a, s0 = tp.a;  // trailing wheelset starts at s = 0
    auto input = [&](double t) {
        const double s = s0 + V * t;
        return Eigen::Vector2d(profile.alignment_at(s + a), profile.alignment_at(s - a));
    };
    auto f = [&](double t, const Vec14& x) -> Vec14 { return A * x + B * input(t); };

    const auto N = static_cast<Eigen::Index>(std::llround(duration / dt)) + 1;
    TruthRun run;
    run.V = V;
    run.dt = dt;
    run.sensor_x = tp.sensor_x();
    run.t.resize(N);
    run.s.resize(N);
    run.x.resize(N, 2 * kDof);
    run.qdd.resize(N, kDof);
    run.xi_lead.resize(N);

    const double g_over_2l = tp.sm.g / (2.0 * tp.sm.l);
    const double lag = 1.0 - std::exp(-dt / tp.roll_lag_tau);
    SensorRecord& c = run.clean;
    c.t.resize(N);
    c.s.resize(N);
    c.acc_w.resize(N);
    c.gyro_w.resize(N);
    c.acc_f.resize(N);

    Vec14 x = Vec14::Zero();
    double roll_f = 0.0;
    const double xsens = tp.sensor_x();
    for (Eigen::Index k = 0; k < N; ++k) {
        const double t = static_cast<double>(k) * dt;
        const double s_lead = s0 + V * t + a;
        for (int j = 0; j < kDof; ++j) {
            if (!(std::abs(x(j)) <= 1.0))
                throw InstabilityError("truth integration diverged at t = " + std::to_string(t) +
                                           " s in state " + kDofNames[j],
                                       kDofNames[j]);
        }
        const Vec14 xd = f(t, x);
        run.t(k) = t;
        run.s(k) = s_lead;
        run.x.row(k) = x.transpose();
        run.qdd.row(k) = xd.tail<kDof>().transpose();
        run.xi_lead(k) = profile.alignment_at(s_lead);

        const double roll = g_over_2l * profile.cross_level_at(s_lead);
        roll_f = k == 0 ? roll : roll_f + lag * (roll - roll_f);
        c.t(k) = t;
        c.s(k) = s_lead;
        c.acc_w(k) = xd(kDof + 0) + roll;
        c.gyro_w(k) = x(kDof + 1);
        c.acc_f(k) = xd(kDof + 4) + xsens * xd(kDof + 5) + roll_f;

        if (k + 1 == N) break;
        const Vec14 k1 = xd;
        const Vec14 k2 = f(t + 0.5 * dt, x + 0.5 * dt * k1);
        const Vec14 k3 = f(t + 0.5 * dt, x + 0.5 * dt * k2);
        const Vec14 k4 = f(t + dt, x + dt * k3);
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }

    run.noise = noise;
    run.noisy = noise ? add_noise(c, *noise) : c;
    return run;
}

void write_sensor_csv(const SensorRecord& r, const std::string& path) {
    csv::write(path, {{"t_s", "s_m", "acc_w_ms2", "gyro_w_rads", "acc_f_ms2"},
                      {r.t, r.s, r.acc_w, r.gyro_w, r.acc_f}});
}

void write_state_csv(const TruthRun& run, const std::string& path) {
    csv::Table t;
    t.header.push_back("t_s");
    t.columns.push_back(run.t);
    for (int j = 0; j < kDof; ++j) {
        t.header.push_back(kDofNames[j]);
        t.columns.push_back(run.x.col(j));
    }
    for (int j = 0; j < kDof; ++j) {
        t.header.push_back(std::string(kDofNames[j]) + "_dot");
        t.columns.push_back(run.x.col(kDof + j));
    }
    csv::write(path, t);
}

}  // namespace railkf::truthsim
