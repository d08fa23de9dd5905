#include "railkf/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <unsupported/Eigen/FFT>

#include "json.hpp"
#include "railkf/errors.hpp"

namespace railkf::analysis {

using cd = std::complex<double>;

std::vector<WavelengthBand> standard_bands() {
    return {WavelengthBand::whole(), WavelengthBand::d1(), WavelengthBand::d2(), WavelengthBand::d3()};
}

namespace {

void check_band(double ds, const WavelengthBand& band) {
    if (!(ds > 0.0)) throw ConfigError("band-pass: ds must be positive");
    if (!(band.lambda_min > 0.0 && band.lambda_min < band.lambda_max))
        throw ConfigError("band-pass: invalid wavelength band " + band.name);
    if (band.lambda_min < 2.0 * ds)
        throw ConfigError("band-pass: band " + band.name + " violates Nyquist (lambda_min < 2 ds)");
}

cd section_response(const Biquad& q, cd zinv) {
    return (q.b0 + zinv * (q.b1 + zinv * q.b2)) / (1.0 + zinv * (q.a1 + zinv * q.a2));
}

// Transposed direct form II, state z1/z2 per section.
void run_sections(const std::array<Biquad, 2>& sos, std::vector<double>& x,
                  std::array<std::array<double, 2>, 2> zi) {
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad& q = sos[s];
        double z1 = zi[s][0], z2 = zi[s][1];
        for (double& v : x) {
            const double in = v;
            const double y = q.b0 * in + z1;
            z1 = q.b1 * in - q.a1 * y + z2;
            z2 = q.b2 * in - q.a2 * y;
            v = y;
        }
    }
}

// Steady-state section states for a constant input of 1, scaled through the cascade.
std::array<std::array<double, 2>, 2> step_states(const std::array<Biquad, 2>& sos) {
    std::array<std::array<double, 2>, 2> zi{};
    double scale = 1.0;
    for (std::size_t s = 0; s < sos.size(); ++s) {
        const Biquad& q = sos[s];
        const double G = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
        zi[s][0] = scale * (G - q.b0);
        zi[s][1] = scale * (q.b2 - q.a2 * G);
        scale *= G;
    }
    return zi;
}

std::array<std::array<double, 2>, 2> scaled(std::array<std::array<double, 2>, 2> zi, double v) {
    for (auto& s : zi)
        for (auto& e : s) e *= v;
    return zi;
}

}  // namespace

std::array<Biquad, 2> design_bandpass(double ds, const WavelengthBand& band) {
    check_band(ds, band);
    const double fs = 1.0 / ds;
    const double f1 = 1.0 / band.lambda_max, f2 = 1.0 / band.lambda_min;
    if (!(f2 < 0.5 * fs)) throw ConfigError("band-pass: upper edge at or above Nyquist");

    // Pre-warped analog edges, then low-pass to band-pass transform of the
    // 2nd-order Butterworth prototype, then bilinear transform.
    const double c = 2.0 * fs;
    const double w1 = c * std::tan(std::numbers::pi * f1 / fs);
    const double w2 = c * std::tan(std::numbers::pi * f2 / fs);
    const double w0 = std::sqrt(w1 * w2), bw = w2 - w1;

    const cd proto = std::polar(1.0, 3.0 * std::numbers::pi / 4.0);  // upper-half prototype pole
    const cd half = proto * bw / 2.0;
    const cd root = std::sqrt(half * half - w0 * w0);
    const cd sa[2] = {half + root, half - root};

    std::array<Biquad, 2> sos{};
    for (int i = 0; i < 2; ++i) {
        const cd z = (c + sa[i]) / (c - sa[i]);
        sos[i] = {1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)};
    }
    // Unit gain at the digital image of the analog centre frequency.
    const double wd = 2.0 * std::atan(w0 / c);
    const cd zinv = std::polar(1.0, -wd);
    const double g = std::abs(section_response(sos[0], zinv) * section_response(sos[1], zinv));
    sos[0].b0 /= g;
    sos[0].b2 /= g;
    return sos;
}

double bandpass_gain(const std::array<Biquad, 2>& sos, double ds, double f) {
    const cd zinv = std::polar(1.0, -2.0 * std::numbers::pi * f * ds);
    return std::abs(section_response(sos[0], zinv) * section_response(sos[1], zinv));
}

Signal bandpass(const Signal& x, double ds, const WavelengthBand& band) {
    const auto sos = design_bandpass(ds, band);
    const Eigen::Index n = x.size();
    if (n == 0) return x;
    const Eigen::Index pad = std::min<Eigen::Index>(15, n - 1);

    std::vector<double> ext;
    ext.reserve(static_cast<std::size_t>(n + 2 * pad));
    for (Eigen::Index i = pad; i >= 1; --i) ext.push_back(2.0 * x(0) - x(i));
    for (Eigen::Index i = 0; i < n; ++i) ext.push_back(x(i));
    for (Eigen::Index i = 1; i <= pad; ++i) ext.push_back(2.0 * x(n - 1) - x(n - 1 - i));

    const auto zi = step_states(sos);
    run_sections(sos, ext, scaled(zi, ext.front()));
    std::reverse(ext.begin(), ext.end());
    run_sections(sos, ext, scaled(zi, ext.front()));
    std::reverse(ext.begin(), ext.end());

    Signal y(n);
    for (Eigen::Index i = 0; i < n; ++i) y(i) = ext[static_cast<std::size_t>(i + pad)];
    return y;
}

double rms(const Signal& x) {
    if (x.size() == 0) return 0.0;
    return std::sqrt(x.squaredNorm() / static_cast<double>(x.size()));
}

Accuracy accuracy_indices(const Signal& est, const Signal& real, double ds, const WavelengthBand& band,
                          double trim) {
    if (est.size() != real.size()) throw ConfigError("accuracy_indices: signals differ in length");
    const Signal e = bandpass(est, ds, band);
    const Signal r = bandpass(real, ds, band);
    const auto cut = static_cast<Eigen::Index>(std::llround(trim / ds));
    const Eigen::Index len = e.size() - 2 * cut;
    if (len <= 0) throw ConfigError("accuracy_indices: record shorter than the transient trim");
    const Signal diff = e.segment(cut, len) - r.segment(cut, len);
    Accuracy a;
    a.J = rms(diff);
    const double rr = rms(r.segment(cut, len));
    if (rr > 0.0) a.J_rel = a.J / rr;
    return a;
}

const BandResult& AccuracyReport::band(const std::string& name) const {
    for (const auto& b : bands)
        if (b.name == name) return b;
    throw ConfigError("accuracy report has no band " + name);
}

std::string AccuracyReport::to_json() const {
    nlohmann::ordered_json j;
    j["run_id"] = run_id;
    j["bands"] = nlohmann::ordered_json::array();
    for (const auto& b : bands) {
        nlohmann::ordered_json e;
        e["name"] = b.name;
        e["J_mm"] = b.J_mm;
        e["J_rel"] = b.J_rel ? nlohmann::ordered_json(*b.J_rel) : nlohmann::ordered_json(nullptr);
        j["bands"].push_back(e);
    }
    return j.dump(2);
}

AccuracyReport accuracy_report(const std::string& run_id, const Signal& est, const Signal& real, double ds,
                               double trim) {
    AccuracyReport rep;
    rep.run_id = run_id;
    for (const auto& b : standard_bands()) {
        const Accuracy a = accuracy_indices(est, real, ds, b, trim);
        rep.bands.push_back({b.name, a.J * 1e3, a.J_rel});
    }
    return rep;
}

Spectrum spectrum(const Signal& x, double ds) {
    if (x.size() < 16) throw ConfigError("spectrum: need at least 16 samples");
    if (!(ds > 0.0)) throw ConfigError("spectrum: ds must be positive");
    const Eigen::Index n = x.size();
    std::vector<double> in(x.data(), x.data() + n);
    std::vector<cd> out;
    Eigen::FFT<double> fft;
    fft.fwd(out, in);

    const Eigen::Index half = n / 2;
    Spectrum s;
    s.n = n;
    s.freq.resize(half + 1);
    s.magnitude.resize(half + 1);
    for (Eigen::Index k = 0; k <= half; ++k) {
        const double a = std::abs(out[static_cast<std::size_t>(k)]) / static_cast<double>(n);
        const bool unpaired = k == 0 || (n % 2 == 0 && k == half);
        s.freq(k) = static_cast<double>(k) / (static_cast<double>(n) * ds);
        s.magnitude(k) = unpaired ? a : 2.0 * a;
    }
    return s;
}

double spectrum_mean_square(const Spectrum& s) {
    double acc = 0.0;
    const Eigen::Index last = s.magnitude.size() - 1;
    for (Eigen::Index k = 0; k <= last; ++k) {
        const bool unpaired = k == 0 || (s.n % 2 == 0 && k == last);
        const double m = s.magnitude(k);
        acc += unpaired ? m * m : 0.5 * m * m;
    }
    return acc;
}

}  // namespace railkf::analysis
