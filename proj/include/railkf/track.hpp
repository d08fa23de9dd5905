#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

namespace railkf::track {

using Signal = Eigen::VectorXd;

/// Raw lateral (y) and vertical (z) deviations of the left and right rail
/// on a uniform arc-length grid.
struct RailDeviations {
    Signal s;
    Signal uy_lr, uy_rr, uz_lr, uz_rr;

    double ds() const;
    void validate() const;
};

/// Irregularity variables derived from the rail deviations.
struct Profile {
    Signal s;
    Signal xi_g;   ///< gauge variation
    Signal xi_a;   ///< lateral alignment
    Signal xi_cl;  ///< cross-level
    Signal xi_vp;  ///< vertical profile

    double ds() const;
    double length() const { return s.size() ? s(s.size() - 1) : 0.0; }
    void validate() const;

    /// Linear interpolation of a channel at arc length `at` (clamped to the grid).
    double alignment_at(double at) const { return interp(xi_a, at); }
    double cross_level_at(double at) const { return interp(xi_cl, at); }
    double interp(const Signal& channel, double at) const;
};

Profile decompose(const RailDeviations& rails);
RailDeviations compose(const Profile& profile);

enum class Variable { Alignment, VerticalProfile, CrossLevel };

/// Rational track PSD S(W) = A Wc^2 / ((W^2 + Wr^2)(W^2 + Wc^2)), W in rad/m.
struct PsdSpec {
    Variable variable = Variable::Alignment;
    double A = 0.0;            ///< m^2 rad/m
    double omega_r = 0.0206;   ///< rad/m
    double omega_c = 0.8246;   ///< rad/m
    double lambda_min = 3.0;   ///< m
    double lambda_max = 200.0; ///< m
    std::uint64_t seed = 1;

    void validate() const;
    double density(double omega) const;
    /// Integral of the PSD over the wavelength window (closed form).
    double window_variance() const;
    /// Same spec with A chosen so that the window rms equals `rms`.
    PsdSpec with_rms(double rms) const;
};

/// Default alignment spec: 1.5 mm rms over 3-200 m.
PsdSpec default_alignment(std::uint64_t seed = 1);
/// Default per-rail vertical spec. Kept small because the cross-level tilt
/// term it feeds into the accelerometers is not separable at long wavelength.
PsdSpec default_vertical(std::uint64_t seed = 2);

/// Spectral-representation synthesis on s = k*ds, k = 0..round(length/ds).
Signal generate_psd_profile(const PsdSpec& spec, double length, double ds);
Signal generate_harmonic_profile(double amplitude, double wavelength, double length, double ds);

/// Arc-length grid matching the generators above.
Signal make_grid(double length, double ds);

/// Rails with a single alignment signal on both rails (zero gauge) and,
/// optionally, independent vertical deviations per rail.
RailDeviations build_rails(const Signal& s, const Signal& alignment, const Signal& uz_lr,
                           const Signal& uz_rr);

void write_profile_csv(const Profile& p, const std::string& path);
Profile read_profile_csv(const std::string& path);

}  // namespace railkf::track
