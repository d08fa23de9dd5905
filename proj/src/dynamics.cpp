#include "railkf/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "railkf/errors.hpp"

namespace railkf::dynamics {

SmParams SmParams::surrogate_equivalent() {
    SmParams p;
    p.k_x = 1.6361e6;
    p.c_x = 1.4424e5;
    p.k_y = 8.8559e6;
    p.c_y = 2.0812e6;
    return p;
}

void SmParams::validate() const {
    auto pos = [](double v, const char* n) {
        if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError(std::string("SM parameter ") + n + " must be > 0");
    };
    auto nonneg = [](double v, const char* n) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError(std::string("SM parameter ") + n + " must be >= 0");
    };
    pos(m, "m");
    pos(I, "I");
    pos(l, "l");
    pos(l_s, "l_s");
    pos(r0, "r0");
    pos(m_f, "m_f");
    pos(f11, "f11");
    pos(f22, "f22");
    nonneg(f23, "f23");
    nonneg(f33, "f33");
    nonneg(k_x, "k_x");
    nonneg(c_x, "c_x");
    nonneg(k_y, "k_y");
    nonneg(c_y, "c_y");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("SM parameter alpha must lie in (0, 1)");
    pos(g, "g");
}

SmParams SmParams::with_creep_scale(double c) const {
    SmParams p = *this;
    p.f11 *= c;
    p.f22 *= c;
    p.f23 *= c;
    p.f33 *= c;
    return p;
}

SmParams SmParams::with_opt(const std::array<double, 4>& v) const {
    SmParams p = *this;
    p.k_x = v[0];
    p.c_x = v[1];
    p.k_y = v[2];
    p.c_y = v[3];
    return p;
}

ContactTerms contact_terms(const SmParams& p, double V, GravityForm form) {
    const double mass = form == GravityForm::MinusFrame ? p.m - p.m_f : p.m + p.m_f;
    ContactTerms c;
    c.Kd << 2.0 * p.alpha * p.g * mass / p.l, 2.0 * p.alpha * p.f11 * p.l / p.r0;
    // Gravitational and conicity stiffness act on (y - xi), so K(:,0) equals Kd.
    c.K << c.Kd(0), -2.0 * p.f22,
           c.Kd(1), 2.0 * p.f23;
    c.C << 2.0 * p.f22 / V, 2.0 * p.f23 / V,
           -2.0 * p.f23 / V, 2.0 * p.f11 * p.l * p.l / V + 2.0 * p.f33 / V;
    return c;
}

LinearLateralModel assemble_sm(const SmParams& p, double V, GravityForm form) {
    p.validate();
    if (!(V > 0.0) || !std::isfinite(V)) throw ConfigError("forward speed V must be > 0");

    LinearLateralModel mdl;
    mdl.V = V;
    mdl.M = Eigen::Vector3d(p.m, p.I, p.m_f).asDiagonal();

    const double ky = p.k_y, cy = p.c_y;
    const double kpsi = p.k_x * p.l_s * p.l_s, cpsi = p.c_x * p.l_s * p.l_s;
    mdl.Ks << ky, 0, -ky,
              0, kpsi, 0,
              -ky, 0, ky;
    mdl.Cs << cy, 0, -cy,
              0, cpsi, 0,
              -cy, 0, cy;

    const ContactTerms ct = contact_terms(p, V, form);
    mdl.Kc.setZero();
    mdl.Cc.setZero();
    mdl.Kc.topLeftCorner<2, 2>() = ct.K;
    mdl.Cc.topLeftCorner<2, 2>() = ct.C;
    mdl.Kd << ct.Kd(0), ct.Kd(1), 0.0;
    mdl.Cd.setZero();
    mdl.Minv = mdl.M.inverse();
    return mdl;
}

Eigen::Vector3d sm_accelerations(const LinearLateralModel& mdl, const Eigen::Vector3d& q,
                                 const Eigen::Vector3d& qd, double xi, double xi_dot) {
    return mdl.Minv * (mdl.Kd * xi + mdl.Cd * xi_dot - mdl.C() * qd - mdl.K() * q);
}

std::optional<Mode> ModalSummary::least_damped_oscillatory() const {
    std::optional<Mode> best;
    for (const auto& m : modes)
        if (m.oscillatory && (!best || m.damping_ratio < best->damping_ratio)) best = m;
    return best;
}

ModalSummary modal_analysis(const Eigen::MatrixXd& M, const Eigen::MatrixXd& C,
                            const Eigen::MatrixXd& K, double V) {
    const Eigen::Index n = M.rows();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(M);
    if (!lu.isInvertible()) throw NumericError("modal analysis: mass matrix is singular");
    const Eigen::MatrixXd Mi = lu.inverse();

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(2 * n, 2 * n);
    A.topRightCorner(n, n).setIdentity();
    A.bottomLeftCorner(n, n) = -Mi * K;
    A.bottomRightCorner(n, n) = -Mi * C;

    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    if (es.info() != Eigen::Success) throw NumericError("modal analysis: eigen-solver did not converge");

    ModalSummary out;
    out.V = V;
    for (Eigen::Index i = 0; i < 2 * n; ++i) {
        const std::complex<double> lam = es.eigenvalues()(i);
        const bool osc = std::abs(lam.imag()) >= 1e-6;
        if (osc && lam.imag() < 0.0) continue;  // report each conjugate pair once
        Mode m;
        m.eigenvalue = lam;
        m.oscillatory = osc;
        m.freq_hz = osc ? lam.imag() / (2.0 * std::numbers::pi) : 0.0;
        const double mag = std::abs(lam);
        m.damping_ratio = mag > 0.0 ? -lam.real() / mag : 0.0;
        m.wavelength_m = osc ? V / m.freq_hz : std::numeric_limits<double>::infinity();
        out.modes.push_back(m);
    }
    std::sort(out.modes.begin(), out.modes.end(), [](const Mode& a, const Mode& b) {
        if (a.freq_hz != b.freq_hz) return a.freq_hz < b.freq_hz;
        return a.eigenvalue.real() < b.eigenvalue.real();
    });
    return out;
}

ModalSummary modal_analysis(const LinearLateralModel& mdl) {
    return modal_analysis(mdl.M, mdl.C(), mdl.K(), mdl.V);
}

double klingel_wavelength(const SmParams& p) {
    return 2.0 * std::numbers::pi * std::sqrt(p.r0 * p.l / p.alpha);
}

SmResponse simulate_sm(const LinearLateralModel& mdl, const Eigen::VectorXd& xi, double dt,
                       double limit) {
    if (!(dt > 0.0)) throw ConfigError("simulate_sm: dt must be positive");
    const Eigen::Index N = xi.size();
    SmResponse r;
    r.q.setZero(N, 3);
    r.qd.setZero(N, 3);
    r.qdd.setZero(N, 3);
    if (N == 0) return r;

    // First-order form x' = A x + b xi with x = [q; qd].
    Eigen::Matrix<double, 6, 6> A = Eigen::Matrix<double, 6, 6>::Zero();
    A.topRightCorner<3, 3>().setIdentity();
    A.bottomLeftCorner<3, 3>() = -mdl.Minv * mdl.K();
    A.bottomRightCorner<3, 3>() = -mdl.Minv * mdl.C();
    Eigen::Matrix<double, 6, 1> b = Eigen::Matrix<double, 6, 1>::Zero();
    b.tail<3>() = mdl.Minv * mdl.Kd;

    using Vec6 = Eigen::Matrix<double, 6, 1>;
    Vec6 x = Vec6::Zero();
    for (Eigen::Index k = 0; k < N; ++k) {
        r.q.row(k) = x.head<3>().transpose();
        r.qd.row(k) = x.tail<3>().transpose();
        r.qdd.row(k) = (A.bottomRows<3>() * x + b.tail<3>() * xi(k)).transpose();
        if (!(x.cwiseAbs().maxCoeff() <= limit)) {
            r.diverged = true;
            return r;
        }
        if (k + 1 == N) break;
        const double u0 = xi(k), u1 = xi(k + 1), um = 0.5 * (u0 + u1);
        const Vec6 k1 = A * x + b * u0;
        const Vec6 k2 = A * (x + 0.5 * dt * k1) + b * um;
        const Vec6 k3 = A * (x + 0.5 * dt * k2) + b * um;
        const Vec6 k4 = A * (x + dt * k3) + b * u1;
        x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return r;
}

}  // namespace railkf::dynamics
