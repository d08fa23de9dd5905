// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <unsupported/Eigen/MatrixFunctions>
#include <vector>

#include "railkf/analysis.hpp"
#include "railkf/dynamics.hpp"
#include "railkf/estimator.hpp"
#include "railkf/ident.hpp"
#include "railkf/scenario.hpp"
#include "railkf/track.hpp"

using namespace railkf;
namespace fs = std::filesystem;
using scenario::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

const fs::path kConfigs = RAILKF_CONFIG_DIR;

json config(const std::string& name) { return scenario::read_json((kConfigs / name).string()); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream o;
    o << in.rdbuf();
    return o.str();
}

Outcome c1_observability() {
    const auto b = estimator::make_bundle(dynamics::assemble_sm(dynamics::SmParams::table1(), 20.0), 1e-3);
    const int r = estimator::observability_rank(b.F, b.H);
    return {r == 7, fmt("rank = %d", r)};
}

Outcome c2_modal() {
    const auto m = dynamics::modal_analysis(dynamics::assemble_sm(dynamics::SmParams::table1(), 20.0))
                       .least_damped_oscillatory();
    if (!m) return {false, "no oscillatory mode"};
    const double ew = std::abs(m->wavelength_m - 15.66) / 15.66, ef = std::abs(m->freq_hz - 1.277) / 1.277;
    return {ew <= 0.05 && ef <= 0.05,
            fmt("wavelength %.3f m (%.1f%%), frequency %.4f Hz (%.1f%%)", m->wavelength_m, 100 * ew, m->freq_hz,
                100 * ef)};
}

Outcome c3_twin() {
    const auto run = scenario::run_scenario(scenario::parse_config(config("twin.json")), {false, nullptr});
    const auto& w = run.report.band("whole");
    const double jr = w.J_rel.value_or(1e9);
    return {jr <= 0.05, fmt("whole-range J_rel = %.4f (J = %.4f mm)", jr, w.J_mm)};
}

Outcome c4_standard() {
    const auto run = scenario::run_scenario(scenario::parse_config(config("standard.json")), {false, nullptr});
    const auto& r = run.report;
    const double J = r.band("whole").J_mm, Jr = r.band("whole").J_rel.value_or(1e9);
    bool ok = J <= 0.8 && Jr <= 0.5;
    std::string sub;
    for (const char* b : {"D1", "D2", "D3"}) {
        ok = ok && r.band(b).J_mm <= 0.6;
        sub += fmt(" %s %.3f", b, r.band(b).J_mm);
    }
    return {ok, fmt("whole J = %.3f mm, J_rel = %.3f;", J, Jr) + sub + " mm"};
}

Outcome c5_sweep() {
    const json doc = config("sweep_table3.json");
    const auto sw = scenario::SweepConfig::from_json(doc, kConfigs.string());
    const auto res = scenario::run_sweep(sw, {false, nullptr});
    for (const auto& row : res.rows)
        if (!row.ok) return {false, "variant " + row.variant + " failed: " + row.error};
    const double base = res.rows.front().report.band("whole").J_mm;
    auto ratio = [&](const char* n) { return res.row(n).report.band("whole").J_mm / base; };
    const double nn = ratio("no_noise"), nv = ratio("no_vertical"), con = ratio("conicity_minus_10"),
                 kal = ratio("kalker_minus_50"), all = ratio("all_conditions");
    const bool ok = nn <= 1.0 && nv <= 1.0 && con <= 1.25 && kal <= 1.25 && all <= 1.6;
    return {ok, fmt("standard %.3f mm; ratios no-noise %.3f, no-vertical %.3f, conicity %.3f, Kalker %.3f, all %.3f",
                    base, nn, nv, con, kal, all)};
}

Outcome c6_resonance() {
    const auto run = scenario::run_scenario(scenario::parse_config(config("resonance.json")), {false, nullptr});
    const auto& y = run.truth->x.col(0);
    const Eigen::VectorXd tail = y.tail(5000);
    const double ratio = 0.5 * (tail.maxCoeff() - tail.minCoeff()) / 1e-3;
    const double J = run.report.band("whole").J_mm, d1 = run.report.band("D1").J_mm;
    const double share = d1 * d1 / (J * J);
    const bool ok = ratio >= 1.5 && ratio <= 2.5 && J <= 0.4 && share >= 0.8;
    return {ok, fmt("truth y/xi = %.3f, whole J = %.3f mm, D1 share of squared error = %.3f", ratio, J, share)};
}

Outcome c7_covariance() {
    const auto mdl = dynamics::assemble_sm(dynamics::SmParams::table1(), 20.0);
    const auto b = estimator::make_bundle(mdl, 1e-3);
    const Eigen::Index N = 20000;
    const track::Signal prof = track::generate_psd_profile(track::default_alignment(3), 20.0 * 1e-3 * N + 1.0, 0.02);
    const Eigen::VectorXd xi = prof.head(N);
    const auto r = dynamics::simulate_sm(mdl, xi, 1e-3);
    Eigen::MatrixXd X(N, 7);
    X << r.q, r.qd, xi;
    Eigen::MatrixXd Z = X * b.H.transpose();
    Z.col(3).setZero();
    std::mt19937_64 rng(17);
    std::normal_distribution<double> nd(0.0, 1.0);
    const double sig[3] = {0.01, 5e-4, 0.01};
    for (Eigen::Index k = 0; k < N; ++k)
        for (int j = 0; j < 3; ++j) Z(k, j) += sig[j] * nd(rng);
    const auto cov = estimator::estimate_covariances(X, Z, b.F, b.H);
    double worst = 0.0;
    for (int j = 0; j < 3; ++j) worst = std::max(worst, std::abs(cov.R(j, j) / (sig[j] * sig[j]) - 1.0));

    // Exact propagation and exact measurements.
    Eigen::MatrixXd Xe(N, 7);
    Xe.row(0) << 1e-3, 1e-4, 5e-4, 0, 0, 0, 1e-3;
    for (Eigen::Index k = 1; k < N; ++k) Xe.row(k) = (b.F * Xe.row(k - 1).transpose()).transpose();
    const auto zero = estimator::estimate_covariances(Xe, Xe * b.H.transpose(), b.F, b.H, 0.0);
    const double zmax = std::max(zero.Q.cwiseAbs().maxCoeff(), zero.R.cwiseAbs().maxCoeff());
    return {worst <= 0.10 && zmax < 1e-20,
            fmt("worst R-diagonal error %.2f%%, zero-residual max |Q|,|R| = %.1e", 100 * worst, zmax)};
}

Outcome c8_discretization() {
    const auto c = estimator::build_continuous(dynamics::assemble_sm(dynamics::SmParams::table1(), 20.0));
    const double dt = 1e-3;
    const Eigen::MatrixXd F = estimator::discretize(c.Fc, dt);
    const Eigen::MatrixXd E = (c.Fc * dt).exp();
    const double err = (F - E).cwiseAbs().rowwise().sum().maxCoeff();
    return {err < 1e-6, fmt("||F - expm(Fc dt)||_inf = %.3e", err)};
}

Outcome c9_ident() {
    auto icfg = scenario::IdentConfig::from_json(config("ident_twin.json"));
    const auto run = scenario::run_ident(icfg, {false, nullptr});
    const auto ref = dynamics::SmParams::table1().opt();
    double es = 0.0, ed = 0.0;
    for (std::size_t i : {0u, 2u}) es = std::max(es, std::abs(run.result.p_opt[i] / ref[i] - 1.0));
    for (std::size_t i : {1u, 3u}) ed = std::max(ed, std::abs(run.result.p_opt[i] / ref[i] - 1.0));
    return {es <= 0.10 && ed <= 0.25,
            fmt("stiffness error %.3f%%, damping error %.3f%%, %d iterations", 100 * es, 100 * ed,
                run.result.iterations)};
}

Outcome c10_analysis() {
    const double ds = 0.1;
    const track::Signal x = track::generate_psd_profile(track::default_alignment(1), 4000.0, ds);
    const auto cut = static_cast<Eigen::Index>(300.0 / ds);
    auto energy = [&](const analysis::WavelengthBand& b) {
        const auto y = analysis::bandpass(x, ds, b);
        return y.segment(cut, y.size() - 2 * cut).squaredNorm();
    };
    const double whole = energy(analysis::WavelengthBand::whole());
    const double parts = energy(analysis::WavelengthBand::d1()) + energy(analysis::WavelengthBand::d2()) +
                         energy(analysis::WavelengthBand::d3());
    const double eband = std::abs(parts / whole - 1.0);

    std::mt19937_64 rng(3);
    std::normal_distribution<double> nd(0.0, 1e-3);
    track::RailDeviations r;
    r.s = track::make_grid(100.0, 0.5);
    for (auto* v : {&r.uy_lr, &r.uy_rr, &r.uz_lr, &r.uz_rr}) {
        v->resize(r.s.size());
        for (Eigen::Index i = 0; i < v->size(); ++i) (*v)(i) = nd(rng);
    }
    const auto back = track::compose(track::decompose(r));
    const double rt = std::max({(back.uy_lr - r.uy_lr).cwiseAbs().maxCoeff(), (back.uy_rr - r.uy_rr).cwiseAbs().maxCoeff(),
                                (back.uz_lr - r.uz_lr).cwiseAbs().maxCoeff(), (back.uz_rr - r.uz_rr).cwiseAbs().maxCoeff()});

    estimator::FilterBundle b;
    b.F = b.H = b.Q = b.R = Eigen::MatrixXd::Ones(1, 1);
    b.dt = 1.0;
    const auto kf = estimator::kf_run(b, Eigen::MatrixXd::Zero(200, 1), Eigen::VectorXd::Zero(1),
                                      Eigen::MatrixXd::Ones(1, 1), true);
    const double pm = kf.P.back()(0, 0) + 1.0;
    const double ep = std::abs(pm - 0.5 * (1.0 + std::sqrt(5.0)));
    return {eband <= 0.10 && rt <= 1e-18 && ep <= 1e-9,
            fmt("band energy error %.2f%%, round-trip residual %.1e m, |P- - golden| = %.1e", 100 * eband, rt, ep)};
}

Outcome c11_performance() {
    const auto base = fs::temp_directory_path() / "railkf_acceptance";
    fs::remove_all(base);
    json doc = config("standard.json");
    doc["output_dir"] = (base / "a").string();
    const auto t0 = std::chrono::steady_clock::now();
    scenario::run_scenario(scenario::parse_config(doc), {true, nullptr});
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    doc["output_dir"] = (base / "b").string();
    scenario::run_scenario(scenario::parse_config(doc), {true, nullptr});
    bool same = true;
    for (const auto& e : fs::directory_iterator(base / "a")) {
        const auto name = e.path().filename();
        if (name == "metadata.json") continue;
        same = same && slurp(e.path()) == slurp(base / "b" / name);
    }
    fs::remove_all(base);
    return {secs < 10.0 && same, fmt("end-to-end %.2f s, reruns %s", secs, same ? "byte-identical" : "differ")};
}

}  // namespace

int main() {
    struct Criterion {
        int id;
        const char* name;
        double budget_s;
        std::function<Outcome()> fn;
    };
    const std::vector<Criterion> all{
        {1, "observability", 1.0, c1_observability},
        {2, "modal anchor", 1.0, c2_modal},
        {3, "twin-filter exactness", 10.0, c3_twin},
        {4, "end-to-end standard case", 30.0, c4_standard},
        {5, "robustness ordering", 180.0, c5_sweep},
        {6, "resonance case", 30.0, c6_resonance},
        {7, "covariance oracle", 10.0, c7_covariance},
        {8, "discretization oracle", 1.0, c8_discretization},
        {9, "identification twin test", 120.0, c9_ident},
        {10, "analysis properties", 5.0, c10_analysis},
        {11, "performance and determinism", 60.0, c11_performance},
    };
    int failed = 0;
    for (const auto& c : all) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_time = secs <= c.budget_s;
        const bool pass = o.pass && in_time;
        failed += pass ? 0 : 1;
        std::printf("[%s] %2d %-30s %s (%.2f s%s)\n", pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs,
                    in_time ? "" : ", over budget");
        std::fflush(stdout);
    }
    std::printf("%d of %zu criteria passed\n", static_cast<int>(all.size()) - failed, all.size());
    return failed == 0 ? 0 : 1;
}
