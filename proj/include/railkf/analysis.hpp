#pragma once

#include <Eigen/Dense>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace railkf::analysis {

using Signal = Eigen::VectorXd;

struct WavelengthBand {
    std::string name;
    double lambda_min = 3.0;  ///< m
    double lambda_max = 200.0;

    static WavelengthBand whole() { return {"whole", 3.0, 200.0}; }
    static WavelengthBand d1() { return {"D1", 3.0, 25.0}; }
    static WavelengthBand d2() { return {"D2", 25.0, 70.0}; }
    static WavelengthBand d3() { return {"D3", 70.0, 200.0}; }
};

/// whole, D1, D2, D3 in that order.
std::vector<WavelengthBand> standard_bands();

/// One second-order section, b0..b2 and a1, a2 (a0 = 1).
struct Biquad {
    double b0, b1, b2, a1, a2;
};

/// 4th-order Butterworth band-pass (order-2 prototype) between the spatial
/// frequencies 1/lambda_max and 1/lambda_min, as two biquads.
std::array<Biquad, 2> design_bandpass(double ds, const WavelengthBand& band);

/// Magnitude response of the section cascade at spatial frequency f (cycles/m).
double bandpass_gain(const std::array<Biquad, 2>& sos, double ds, double f);

/// Zero-phase (forward-backward) band-pass with odd-extension padding.
Signal bandpass(const Signal& x, double ds, const WavelengthBand& band);

double rms(const Signal& x);

struct Accuracy {
    double J = 0.0;               ///< m
    std::optional<double> J_rel;  ///< absent when the reference has zero rms
};

inline constexpr double kTrimMeters = 50.0;

/// Band-pass both signals, trim `trim` metres at each end, J = rms(diff),
/// J_rel = J / rms(real).
Accuracy accuracy_indices(const Signal& est, const Signal& real, double ds, const WavelengthBand& band,
                          double trim = kTrimMeters);

struct BandResult {
    std::string name;
    double J_mm = 0.0;
    std::optional<double> J_rel;
};

struct AccuracyReport {
    std::string run_id;
    std::vector<BandResult> bands;

    const BandResult& band(const std::string& name) const;
    std::string to_json() const;
};

AccuracyReport accuracy_report(const std::string& run_id, const Signal& est, const Signal& real, double ds,
                               double trim = kTrimMeters);

struct Spectrum {
    Signal freq;       ///< cycles/m
    Signal magnitude;  ///< single-sided amplitude, m
    Eigen::Index n = 0;
};

Spectrum spectrum(const Signal& x, double ds);

/// Mean square recovered from a single-sided amplitude spectrum (Parseval).
double spectrum_mean_square(const Spectrum& s);

}  // namespace railkf::analysis
