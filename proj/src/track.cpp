#include "railkf/track.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include "railkf/csv.hpp"
#include "railkf/errors.hpp"

namespace railkf::track {

namespace {

double grid_step(const Signal& s) {
    if (s.size() < 2) throw ConfigError("track grid needs at least two samples");
    const double ds = s(1) - s(0);
    if (!(ds > 0.0)) throw ConfigError("track grid spacing must be positive");
    for (Eigen::Index i = 2; i < s.size(); ++i)
        if (std::abs((s(i) - s(i - 1)) - ds) > 1e-6 * ds + 1e-9)
            throw ConfigError("track grid spacing is not uniform at index " + std::to_string(i));
    return ds;
}

void check_len(const Signal& s, const Signal& v, const char* name) {
    if (v.size() != s.size())
        throw ConfigError(std::string("length of ") + name + " does not match the arc-length grid");
}

}  // namespace

double RailDeviations::ds() const { return grid_step(s); }

void RailDeviations::validate() const {
    check_len(s, uy_lr, "u_y_lr");
    check_len(s, uy_rr, "u_y_rr");
    check_len(s, uz_lr, "u_z_lr");
    check_len(s, uz_rr, "u_z_rr");
    grid_step(s);
}

double Profile::ds() const { return grid_step(s); }

void Profile::validate() const {
    check_len(s, xi_g, "xi_g");
    check_len(s, xi_a, "xi_a");
    check_len(s, xi_cl, "xi_cl");
    check_len(s, xi_vp, "xi_vp");
    grid_step(s);
}

double Profile::interp(const Signal& c, double at) const {
    const Eigen::Index n = s.size();
    if (n == 0) return 0.0;
    if (at <= s(0)) return c(0);
    if (at >= s(n - 1)) return c(n - 1);
    const double h = s(1) - s(0);
    auto i = static_cast<Eigen::Index>((at - s(0)) / h);
    i = std::min<Eigen::Index>(i, n - 2);
    const double w = (at - s(i)) / h;
    return (1.0 - w) * c(i) + w * c(i + 1);
}

Profile decompose(const RailDeviations& r) {
    r.validate();
    Profile p;
    p.s = r.s;
    p.xi_g = r.uy_lr - r.uy_rr;
    p.xi_a = 0.5 * (r.uy_lr + r.uy_rr);
    p.xi_cl = r.uz_lr - r.uz_rr;
    p.xi_vp = 0.5 * (r.uz_lr + r.uz_rr);
    return p;
}

RailDeviations compose(const Profile& p) {
    p.validate();
    RailDeviations r;
    r.s = p.s;
    r.uy_lr = p.xi_a + 0.5 * p.xi_g;
    r.uy_rr = p.xi_a - 0.5 * p.xi_g;
    r.uz_lr = p.xi_vp + 0.5 * p.xi_cl;
    r.uz_rr = p.xi_vp - 0.5 * p.xi_cl;
    return r;
}

void PsdSpec::validate() const {
    if (!(A >= 0.0)) throw ConfigError("PSD scale A must be >= 0");
    if (!(omega_r > 0.0 && omega_r < omega_c)) throw ConfigError("PSD needs 0 < omega_r < omega_c");
    if (!(lambda_min > 0.0 && lambda_min < lambda_max))
        throw ConfigError("PSD needs 0 < lambda_min < lambda_max");
}

double PsdSpec::density(double w) const {
    const double wc2 = omega_c * omega_c;
    return A * wc2 / ((w * w + omega_r * omega_r) * (w * w + wc2));
}

double PsdSpec::window_variance() const {
    // Partial fractions: S = A Wc^2/(Wc^2 - Wr^2) [1/(W^2+Wr^2) - 1/(W^2+Wc^2)].
    const double w0 = 2.0 * std::numbers::pi / lambda_max;
    const double w1 = 2.0 * std::numbers::pi / lambda_min;
    auto prim = [&](double w) {
        return std::atan(w / omega_r) / omega_r - std::atan(w / omega_c) / omega_c;
    };
    const double k = A * omega_c * omega_c / (omega_c * omega_c - omega_r * omega_r);
    return k * (prim(w1) - prim(w0));
}

PsdSpec PsdSpec::with_rms(double rms) const {
    PsdSpec unit = *this;
    unit.A = 1.0;
    PsdSpec out = *this;
    out.A = rms * rms / unit.window_variance();
    return out;
}

PsdSpec default_alignment(std::uint64_t seed) {
    PsdSpec p;
    p.variable = Variable::Alignment;
    p.seed = seed;
    return p.with_rms(1.5e-3);
}

PsdSpec default_vertical(std::uint64_t seed) {
    PsdSpec p;
    p.variable = Variable::VerticalProfile;
    p.seed = seed;
    return p.with_rms(0.075e-3);
}

Signal make_grid(double length, double ds) {
    if (!(length > 0.0)) throw ConfigError("track length must be positive");
    if (!(ds > 0.0)) throw ConfigError("track spacing ds must be positive");
    const auto n = static_cast<Eigen::Index>(std::llround(length / ds)) + 1;
    Signal s(n);
    for (Eigen::Index i = 0; i < n; ++i) s(i) = static_cast<double>(i) * ds;
    return s;
}

Signal generate_psd_profile(const PsdSpec& spec, double length, double ds) {
    spec.validate();
    if (spec.lambda_min < 2.0 * ds)
        throw ConfigError("PSD window violates Nyquist: lambda_min < 2*ds");
    Signal s = make_grid(length, ds);
    Signal x = Signal::Zero(s.size());
    if (spec.A == 0.0) return x;

    const double w0 = 2.0 * std::numbers::pi / spec.lambda_max;
    const double w1 = 2.0 * std::numbers::pi / spec.lambda_min;
    // Component spacing fine enough that the synthesized record does not repeat.
    const auto n = std::max<long long>(512, static_cast<long long>(std::ceil((w1 - w0) * length / std::numbers::pi)));
    const double dw = (w1 - w0) / static_cast<double>(n);

    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    for (long long k = 0; k < n; ++k) {
        const double w = w0 + (static_cast<double>(k) + 0.5) * dw;
        const double amp = std::sqrt(2.0 * spec.density(w) * dw);
        const double ph = phase(rng);
        x.array() += amp * (w * s.array() + ph).cos();
    }
    return x;
}

Signal generate_harmonic_profile(double amplitude, double wavelength, double length, double ds) {
    if (!(wavelength > 0.0)) throw ConfigError("harmonic wavelength must be positive");
    Signal s = make_grid(length, ds);
    return amplitude * (2.0 * std::numbers::pi / wavelength * s.array()).sin().matrix();
}

RailDeviations build_rails(const Signal& s, const Signal& alignment, const Signal& uz_lr,
                           const Signal& uz_rr) {
    RailDeviations r{s, alignment, alignment, uz_lr, uz_rr};
    r.validate();
    return r;
}

void write_profile_csv(const Profile& p, const std::string& path) {
    p.validate();
    csv::write(path, {{"s_m", "xi_g_m", "xi_a_m", "xi_cl_m", "xi_vp_m"},
                      {p.s, p.xi_g, p.xi_a, p.xi_cl, p.xi_vp}});
}

Profile read_profile_csv(const std::string& path) {
    auto t = csv::read(path);
    Profile p;
    try {
        p.s = t.column("s_m");
        p.xi_g = t.column("xi_g_m");
        p.xi_a = t.column("xi_a_m");
        p.xi_cl = t.column("xi_cl_m");
        p.xi_vp = t.column("xi_vp_m");
    } catch (const ConfigError& e) {
        throw IoError(path + ": " + e.what());
    }
    p.validate();
    return p;
}

}  // namespace railkf::track
