#include "railkf/scenario.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <set>
#include <sstream>

#include "railkf/csv.hpp"
#include "railkf/errors.hpp"

namespace railkf::scenario {

namespace fs = std::filesystem;

namespace {

const std::map<std::string, double dynamics::SmParams::*>& sm_fields() {
    using P = dynamics::SmParams;
    static const std::map<std::string, double P::*> f{
        {"m", &P::m},         {"I", &P::I},     {"l", &P::l},     {"l_s", &P::l_s}, {"alpha", &P::alpha},
        {"r0", &P::r0},       {"m_f", &P::m_f}, {"f11", &P::f11}, {"f22", &P::f22}, {"f23", &P::f23},
        {"f33", &P::f33},     {"k_x", &P::k_x}, {"c_x", &P::c_x}, {"k_y", &P::k_y}, {"c_y", &P::c_y},
        {"g", &P::g}};
    return f;
}

void apply_sm_overrides(dynamics::SmParams& p, const json& o, const std::string& where) {
    if (o.is_null()) return;
    if (!o.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [k, v] : o.items()) {
        const auto it = sm_fields().find(k);
        if (it == sm_fields().end()) throw ConfigError(where + ": unknown parameter " + k);
        if (!v.is_number()) throw ConfigError(where + "." + k + " must be a number");
        p.*(it->second) = v.get<double>();
    }
}

void apply_truth_overrides(truthsim::TruthParams& tp, const json& o) {
    if (o.is_null()) return;
    if (!o.is_object()) throw ConfigError("truth.overrides must be an object");
    using T = truthsim::TruthParams;
    static const std::map<std::string, double T::*> f{{"a", &T::a},       {"I_f", &T::I_f},   {"m_b", &T::m_b},
                                                      {"m_c", &T::m_c},   {"k2_y", &T::k2_y}, {"c2_y", &T::c2_y},
                                                      {"roll_lag_tau", &T::roll_lag_tau}};
    for (const auto& [k, v] : o.items()) {
        if (k == "wheelset") {
            apply_sm_overrides(tp.sm, v, "truth.overrides.wheelset");
            continue;
        }
        if (!v.is_number()) throw ConfigError("truth.overrides." + k + " must be a number");
        if (k == "frame_sensor_x") {
            tp.frame_sensor_x = v.get<double>();
            continue;
        }
        const auto it = f.find(k);
        if (it == f.end()) throw ConfigError("truth.overrides: unknown parameter " + k);
        tp.*(it->second) = v.get<double>();
    }
}

Eigen::VectorXd vector_from(const json& j, Eigen::Index n, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        throw ConfigError(what + " must be an array of " + std::to_string(n) + " numbers");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = j.at(static_cast<std::size_t>(i)).get<double>();
    return v;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index n, const std::string& what) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n)
        throw ConfigError(what + " must be a " + std::to_string(n) + " x " + std::to_string(n) + " array");
    Eigen::MatrixXd m(n, n);
    for (Eigen::Index i = 0; i < n; ++i) m.row(i) = vector_from(j.at(static_cast<std::size_t>(i)), n, what).transpose();
    return m;
}

ojson matrix_json(const Eigen::MatrixXd& m) {
    ojson a = ojson::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ojson r = ojson::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        a.push_back(r);
    }
    return a;
}

ojson modes_json(const dynamics::ModalSummary& ms) {
    ojson a = ojson::array();
    for (const auto& m : ms.modes) {
        ojson e;
        e["real"] = m.eigenvalue.real();
        e["imag"] = m.eigenvalue.imag();
        e["oscillatory"] = m.oscillatory;
        e["freq_hz"] = m.freq_hz;
        e["damping_ratio"] = m.damping_ratio;
        e["wavelength_m"] = m.oscillatory ? ojson(m.wavelength_m) : ojson(nullptr);
        a.push_back(e);
    }
    return a;
}

std::uint64_t seed_of(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError(std::string("seeds.") + key + " must be a non-negative integer");
    return v.get<std::uint64_t>();
}

void log_line(const RunOptions& o, const std::string& msg) {
    if (o.log) *o.log << msg << '\n';
}

// Alignment contributed by one track source node on grid s.
Eigen::VectorXd alignment_from(const json& src, const Eigen::VectorXd& s, double ds, std::uint64_t seed) {
    const double length = s(s.size() - 1);
    const std::string type = src.at("type").get<std::string>();
    if (type == "psd") {
        track::PsdSpec p = track::default_alignment(src.value("seed", seed));
        p.omega_r = src.value("omega_r", p.omega_r);
        p.omega_c = src.value("omega_c", p.omega_c);
        p.lambda_min = src.value("lambda_min", p.lambda_min);
        p.lambda_max = src.value("lambda_max", p.lambda_max);
        if (src.contains("A")) {
            p.A = src.at("A").get<double>();
        } else {
            p = p.with_rms(src.value("rms_mm", 1.5) * 1e-3);
        }
        return track::generate_psd_profile(p, length, ds);
    }
    if (type == "harmonic") {
        return track::generate_harmonic_profile(src.value("amplitude_mm", 1.0) * 1e-3,
                                                src.value("wavelength_m", 15.66), length, ds);
    }
    if (type == "file") {
        const std::string path = src.at("path").get<std::string>();
        if (!fs::exists(path)) throw IoError("track file not found: " + path);
        const track::Profile f = track::read_profile_csv(path);
        Eigen::VectorXd out(s.size());
        for (Eigen::Index i = 0; i < s.size(); ++i) out(i) = f.alignment_at(s(i));
        if (f.length() + 1e-9 < length)
            throw ConfigError("track file " + path + " is shorter than the run (" + std::to_string(f.length()) +
                              " m < " + std::to_string(length) + " m)");
        return out;
    }
    if (type == "sum") {
        const auto& parts = src.at("components");
        if (!parts.is_array() || parts.empty()) throw ConfigError("sum track source needs components");
        Eigen::VectorXd out = Eigen::VectorXd::Zero(s.size());
        std::uint64_t k = 0;
        for (const auto& p : parts) out += alignment_from(p, s, ds, seed + 7919 * k++);
        return out;
    }
    throw ConfigError("unknown track source type " + type);
}

void check_track_source(const json& src) {
    if (!src.is_object() || !src.contains("type") || !src.at("type").is_string())
        throw ConfigError("track source needs a string \"type\"");
    const std::string type = src.at("type").get<std::string>();
    if (type == "sum") {
        if (!src.contains("components") || !src.at("components").is_array() || src.at("components").empty())
            throw ConfigError("sum track source needs a non-empty components array");
        for (const auto& c : src.at("components")) check_track_source(c);
    } else if (type == "file") {
        if (!src.contains("path") || !src.at("path").is_string()) throw ConfigError("file track source needs a path");
    } else if (type == "harmonic") {
        if (!(src.value("wavelength_m", 15.66) > 0.0)) throw ConfigError("harmonic wavelength must be > 0");
    } else if (type == "psd") {
        if (src.contains("rms_mm") && !(src.at("rms_mm").get<double>() >= 0.0))
            throw ConfigError("psd rms_mm must be >= 0");
    } else {
        throw ConfigError("unknown track source type " + type);
    }
}

}  // namespace

// ---------------------------------------------------------------- config

json default_config_json() {
    return json::parse(R"({
      "run_id": "standard",
      "V": 20.0,
      "duration": 20.0,
      "dt": 0.001,
      "ds": 0.02,
      "track": {"type": "psd", "rms_mm": 1.5},
      "vertical": {"enabled": true, "rms_mm": 0.075},
      "noise": {"mode": "autoscale", "sigma_xi_virtual": 1.0},
      "sm": {"base": "surrogate", "conicity_multiplier": 1.0, "overrides": {}},
      "truth": {"model": "surrogate", "kalker_multiplier": 1.0, "overrides": {}},
      "covariance": {"source": "estimated", "xi_process_scale": 1000.0, "calibration_noise": "autoscale"},
      "P0_diag": null,
      "seeds": {"track": 1, "noise": 101, "ident": 201},
      "output_dir": ""
    })");
}

ScenarioConfig parse_config(const json& doc) {
    if (!doc.is_object()) throw ConfigError("scenario config must be a JSON object");
    json merged = default_config_json();
    for (const auto& [k, v] : doc.items()) {
        if (k == "ident") continue;  // consumed by the ident verb
        if (!merged.contains(k)) throw ConfigError("unknown config key " + k);
    }
    // Track sources are replaced wholesale, not merged.
    json patch = doc;
    patch.erase("ident");
    if (patch.contains("track")) merged["track"] = patch["track"], patch.erase("track");
    merged.merge_patch(patch);

    ScenarioConfig c;
    try {
        c.raw = merged;
        c.run_id = merged.at("run_id").get<std::string>();
        c.V = merged.at("V").get<double>();
        c.duration = merged.at("duration").get<double>();
        c.dt = merged.at("dt").get<double>();
        c.ds = merged.at("ds").get<double>();
        c.track = merged.at("track");
        check_track_source(c.track);

        const auto& vert = merged.at("vertical");
        c.vertical = vert.value("enabled", true);
        c.vertical_rms = vert.value("rms_mm", 0.075) * 1e-3;

        const auto& n = merged.at("noise");
        const std::string mode = n.value("mode", "autoscale");
        if (mode == "autoscale") c.noise_mode = NoiseMode::Autoscale;
        else if (mode == "configured") c.noise_mode = NoiseMode::Configured;
        else if (mode == "off") c.noise_mode = NoiseMode::Off;
        else throw ConfigError("noise.mode must be autoscale, configured or off");
        c.noise.sigma_acc_w = n.value("sigma_acc_w", c.noise.sigma_acc_w);
        c.noise.sigma_gyro = n.value("sigma_gyro", c.noise.sigma_gyro);
        c.noise.sigma_acc_f = n.value("sigma_acc_f", c.noise.sigma_acc_f);
        c.noise.sigma_xi_virtual = n.value("sigma_xi_virtual", c.noise.sigma_xi_virtual);

        const auto& sm = merged.at("sm");
        const std::string base = sm.value("base", "surrogate");
        if (base == "surrogate") c.sm = dynamics::SmParams::surrogate_equivalent();
        else if (base == "table1") c.sm = dynamics::SmParams::table1();
        else throw ConfigError("sm.base must be surrogate or table1");
        apply_sm_overrides(c.sm, sm.value("overrides", json::object()), "sm.overrides");
        c.conicity_multiplier = sm.value("conicity_multiplier", 1.0);

        const auto& tr = merged.at("truth");
        const std::string model = tr.value("model", "surrogate");
        if (model == "surrogate") c.truth_model = TruthModel::Surrogate;
        else if (model == "sm") c.truth_model = TruthModel::SimplifiedModel;
        else throw ConfigError("truth.model must be surrogate or sm");
        apply_truth_overrides(c.truth, tr.value("overrides", json::object()));
        c.kalker_multiplier = tr.value("kalker_multiplier", 1.0);

        const auto& cov = merged.at("covariance");
        const std::string src = cov.value("source", "estimated");
        if (src == "estimated") c.cov_source = CovSource::Estimated;
        else if (src == "configured") c.cov_source = CovSource::Configured;
        else throw ConfigError("covariance.source must be estimated or configured");
        c.xi_process_scale = cov.value("xi_process_scale", 1e3);
        if (c.cov_source == CovSource::Configured) {
            if (cov.contains("file")) {
                const json qr = read_json(cov.at("file").get<std::string>());
                c.Q = matrix_from(qr.at("Q"), estimator::kNx, "Q");
                c.R = matrix_from(qr.at("R"), estimator::kNz, "R");
            } else {
                c.Q = vector_from(cov.at("Q_diag"), estimator::kNx, "covariance.Q_diag").asDiagonal();
                c.R = vector_from(cov.at("R_diag"), estimator::kNz, "covariance.R_diag").asDiagonal();
            }
        }
        const std::string cal = cov.value("calibration_noise", "autoscale");
        if (cal != "autoscale" && cal != "injected")
            throw ConfigError("covariance.calibration_noise must be autoscale or injected");

        if (!merged.at("P0_diag").is_null())
            c.P0_diag = vector_from(merged.at("P0_diag"), estimator::kNx, "P0_diag");

        const auto& seeds = merged.at("seeds");
        c.seeds.track = seed_of(seeds, "track");
        c.seeds.noise = seed_of(seeds, "noise");
        c.seeds.ident = seed_of(seeds, "ident");
        c.noise.seed = c.seeds.noise;
        c.output_dir = merged.at("output_dir").get<std::string>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

void ScenarioConfig::validate() const {
    if (run_id.empty()) throw ConfigError("run_id must not be empty");
    if (!(V > 0.0)) throw ConfigError("V must be > 0");
    if (!(duration > 0.0)) throw ConfigError("duration must be > 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be > 0");
    if (!(ds > 0.0)) throw ConfigError("ds must be > 0");
    const double lmin = analysis::WavelengthBand::d1().lambda_min;
    if (V * dt > 0.5 * lmin)
        throw ConfigError("dt too large: sample spacing V*dt = " + std::to_string(V * dt) +
                          " m violates Nyquist for the D1 band (needs <= " + std::to_string(0.5 * lmin) + " m)");
    if (ds > 0.5 * lmin) throw ConfigError("profile ds violates Nyquist for the D1 band");
    if (!(conicity_multiplier > 0.0)) throw ConfigError("conicity multiplier must be > 0");
    if (!(kalker_multiplier > 0.0)) throw ConfigError("Kalker multiplier must be > 0");
    if (!(vertical_rms >= 0.0)) throw ConfigError("vertical rms must be >= 0");
    if (!(xi_process_scale > 0.0)) throw ConfigError("xi_process_scale must be > 0");
    if (P0_diag.size() != estimator::kNx || (P0_diag.array() < 0.0).any())
        throw ConfigError("P0_diag must hold 7 non-negative values");
    if (cov_source == CovSource::Configured) {
        if (Q.rows() != estimator::kNx || Q.cols() != estimator::kNx || R.rows() != estimator::kNz ||
            R.cols() != estimator::kNz)
            throw ConfigError("configured Q must be 7 x 7 and R 4 x 4");
        if ((Q.diagonal().array() < 0.0).any() || (R.diagonal().array() <= 0.0).any())
            throw ConfigError("configured Q must have a non-negative and R a positive diagonal");
    }
    noise.validate();
    sm.validate();
    truth.validate();
}

dynamics::SmParams ScenarioConfig::estimator_sm() const {
    dynamics::SmParams p = sm;
    p.alpha *= conicity_multiplier;
    return p;
}

truthsim::TruthParams ScenarioConfig::truth_params() const {
    truthsim::TruthParams tp = truth;
    tp.sm = tp.sm.with_creep_scale(kalker_multiplier);
    return tp;
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

ScenarioConfig load_config(const std::string& path) { return parse_config(read_json(path)); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << text;
    if (!out) throw IoError("write failed: " + path);
}

// ---------------------------------------------------------------- pipeline

track::Profile build_profile(const ScenarioConfig& cfg) {
    const double need = cfg.truth_model == TruthModel::Surrogate
                            ? truthsim::required_profile_length(cfg.truth_params(), cfg.V, cfg.duration)
                            : cfg.V * cfg.duration;
    const double length = std::ceil((need + 10.0) / cfg.ds) * cfg.ds;
    const Eigen::VectorXd s = track::make_grid(length, cfg.ds);
    const Eigen::VectorXd align = alignment_from(cfg.track, s, cfg.ds, cfg.seeds.track);

    Eigen::VectorXd uz_l = Eigen::VectorXd::Zero(s.size()), uz_r = uz_l;
    if (cfg.vertical && cfg.vertical_rms > 0.0) {
        uz_l = track::generate_psd_profile(track::default_vertical(cfg.seeds.track + 1000).with_rms(cfg.vertical_rms),
                                           length, cfg.ds);
        uz_r = track::generate_psd_profile(track::default_vertical(cfg.seeds.track + 2000).with_rms(cfg.vertical_rms),
                                           length, cfg.ds);
    }
    return track::decompose(track::build_rails(s, align, uz_l, uz_r));
}

Eigen::MatrixXd measurement_matrix(const truthsim::SensorRecord& r) {
    Eigen::MatrixXd z(r.size(), estimator::kNz);
    z.col(0) = r.acc_w;
    z.col(1) = r.gyro_w;
    z.col(2) = r.acc_f;
    z.col(3).setZero();
    return z;
}

namespace {

truthsim::SensorRecord record_from(const Eigen::VectorXd& t, const Eigen::VectorXd& s, const Eigen::MatrixXd& z) {
    truthsim::SensorRecord r;
    r.t = t;
    r.s = s;
    r.acc_w = z.col(0);
    r.gyro_w = z.col(1);
    r.acc_f = z.col(2);
    return r;
}

void write_outputs(const ScenarioRun& run) {
    const fs::path dir(run.cfg.output_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
    auto p = [&](const char* name) { return (dir / name).string(); };

    track::write_profile_csv(run.profile, p("profile.csv"));
    truthsim::write_sensor_csv(record_from(run.t, run.s, run.Z), p("sensors.csv"));
    truthsim::write_sensor_csv(record_from(run.t, run.s, run.Z_clean), p("sensors_clean.csv"));
    if (run.truth) {
        truthsim::write_state_csv(*run.truth, p("states.csv"));
    } else {
        csv::write(p("states.csv"), {{"t_s", "y", "psi", "y_f", "y_dot", "psi_dot", "y_f_dot", "xi"},
                                     {run.t, run.X.col(0), run.X.col(1), run.X.col(2), run.X.col(3), run.X.col(4),
                                      run.X.col(5), run.X.col(6)}});
    }
    csv::write(p("estimate.csv"), {{"t_s", "s_m", "xi_est_m", "y_est_m", "psi_est_rad", "yf_est_m"},
                                   {run.t, run.s, run.xi_est, run.kf.x.col(0), run.kf.x.col(1), run.kf.x.col(2)}});
    csv::write(p("innovations.csv"), {{"t_s", "nu_acc_w", "nu_gyro_w", "nu_acc_f", "nu_xi_virtual"},
                                      {run.t, run.kf.innovations.col(0), run.kf.innovations.col(1),
                                       run.kf.innovations.col(2), run.kf.innovations.col(3)}});
    write_text(p("report.json"), run.report.to_json() + "\n");

    ojson qr;
    qr["observability_rank"] = run.observability_rank;
    qr["samples"] = run.cov.samples;
    qr["low_sample_warning"] = run.cov.low_sample_warning;
    qr["Q"] = matrix_json(run.cov.Q);
    qr["R"] = matrix_json(run.cov.R);
    qr["F"] = matrix_json(run.bundle.F);
    qr["H"] = matrix_json(run.bundle.H);
    if (run.noise) {
        qr["noise"] = {{"sigma_acc_w", run.noise->sigma_acc_w},
                       {"sigma_gyro", run.noise->sigma_gyro},
                       {"sigma_acc_f", run.noise->sigma_acc_f},
                       {"seed", run.noise->seed}};
    } else {
        qr["noise"] = nullptr;
    }
    write_text(p("qr.json"), qr.dump(2) + "\n");

    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    json meta;
    meta["run_id"] = run.cfg.run_id;
    meta["unix_time"] = secs;
    meta["config"] = run.cfg.raw;
    write_text(p("metadata.json"), meta.dump(2) + "\n");
}

}  // namespace

ScenarioRun run_scenario(const ScenarioConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    ScenarioRun run;
    run.cfg = cfg;
    try {
        run.profile = build_profile(cfg);

        // Reference states and clean sensor record.
        truthsim::SensorRecord clean;
        if (cfg.truth_model == TruthModel::Surrogate) {
            run.truth = truthsim::simulate_truth(cfg.truth_params(), run.profile, cfg.V, cfg.duration, cfg.dt,
                                                 std::nullopt);
            run.t = run.truth->t;
            run.s = run.truth->s;
            run.X = run.truth->augmented_states();
            clean = run.truth->clean;
        } else {
            const auto model = dynamics::assemble_sm(cfg.estimator_sm(), cfg.V);
            const auto N = static_cast<Eigen::Index>(std::llround(cfg.duration / cfg.dt)) + 1;
            run.t = Eigen::VectorXd::LinSpaced(N, 0.0, static_cast<double>(N - 1) * cfg.dt);
            run.s = cfg.V * run.t;
            Eigen::VectorXd xi(N);
            for (Eigen::Index k = 0; k < N; ++k) xi(k) = run.profile.alignment_at(run.s(k));
            const auto resp = dynamics::simulate_sm(model, xi, cfg.dt);
            if (resp.diverged) throw InstabilityError("simplified-model truth diverged", "q");
            run.X.resize(N, estimator::kNx);
            run.X << resp.q, resp.qd, xi;
            const auto c = estimator::build_continuous(model);
            Eigen::MatrixXd z = run.X * c.Hc.transpose();
            z.col(3).setZero();
            clean = record_from(run.t, run.s, z);
        }
        run.Z_clean = measurement_matrix(clean);

        const double sxv = cfg.raw.at("noise").value("sigma_xi_virtual", 1.0);
        switch (cfg.noise_mode) {
            case NoiseMode::Autoscale:
                run.noise = truthsim::sensor_noise_autoscale(clean, sxv, cfg.seeds.noise);
                break;
            case NoiseMode::Configured:
                run.noise = cfg.noise;
                break;
            case NoiseMode::Off:
                break;
        }
        run.Z = run.noise ? measurement_matrix(truthsim::add_noise(clean, *run.noise)) : run.Z_clean;

        run.bundle = estimator::make_bundle(dynamics::assemble_sm(cfg.estimator_sm(), cfg.V), cfg.dt);
        run.observability_rank = estimator::observability_rank(run.bundle.F, run.bundle.H);
        log_line(opts, "[" + cfg.run_id + "] observability rank " + std::to_string(run.observability_rank) + " / " +
                           std::to_string(estimator::kNx));
        if (run.observability_rank < estimator::kNx)
            throw NumericError("unobservable configuration: observability rank " +
                               std::to_string(run.observability_rank) + " < " + std::to_string(estimator::kNx));

        if (cfg.cov_source == CovSource::Estimated) {
            // Calibration record: by default always carries autoscaled noise so the
            // measurement covariance never collapses to the loading value.
            const bool injected = cfg.raw.at("covariance").value("calibration_noise", "autoscale") == "injected";
            Eigen::MatrixXd z_cal;
            if (injected) {
                z_cal = run.Z;
                run.calibration_noise = run.noise.value_or(truthsim::NoiseSpec{0, 0, 0, sxv, cfg.seeds.noise});
            } else {
                run.calibration_noise = truthsim::sensor_noise_autoscale(clean, sxv, cfg.seeds.noise);
                z_cal = measurement_matrix(truthsim::add_noise(clean, run.calibration_noise));
            }
            run.cov = estimator::estimate_covariances(run.X, z_cal, run.bundle.F, run.bundle.H);
            if (run.cov.low_sample_warning) log_line(opts, "[" + cfg.run_id + "] warning: fewer than 100 residuals");
            run.cov.Q(6, 6) *= cfg.xi_process_scale;
            run.cov.R(3, 3) = sxv * sxv;
        } else {
            run.cov.Q = cfg.Q;
            run.cov.R = cfg.R;
        }
        run.bundle.Q = run.cov.Q;
        run.bundle.R = run.cov.R;

        const Eigen::MatrixXd P0 = cfg.P0_diag.asDiagonal();
        run.kf = estimator::kf_run(run.bundle, run.Z, Eigen::VectorXd::Zero(estimator::kNx), P0);
        run.xi_est = run.kf.x.col(6);
        run.xi_real = run.X.col(6);
        run.report = analysis::accuracy_report(cfg.run_id, run.xi_est, run.xi_real, cfg.V * cfg.dt);
    } catch (const InstabilityError& e) {
        throw InstabilityError("[" + cfg.run_id + "] " + e.what(), e.state);
    } catch (const NumericError& e) {
        throw NumericError("[" + cfg.run_id + "] " + e.what());
    }
    const auto& w = run.report.band("whole");
    char buf[160];
    std::snprintf(buf, sizeof buf, "[%s] whole-range J = %.3f mm, J_rel = %.3f", cfg.run_id.c_str(), w.J_mm,
                  w.J_rel.value_or(std::nan("")));
    log_line(opts, buf);
    if (opts.write_outputs && !cfg.output_dir.empty()) write_outputs(run);
    return run;
}

// ---------------------------------------------------------------- sweep

std::vector<Variant> table3_variants() {
    return {{"no_noise", json::parse(R"({"noise": {"mode": "off"}})")},
            {"no_vertical", json::parse(R"({"vertical": {"enabled": false}})")},
            {"conicity_minus_10", json::parse(R"({"sm": {"conicity_multiplier": 0.9}})")},
            {"kalker_minus_50", json::parse(R"({"truth": {"kalker_multiplier": 0.5}})")},
            {"all_conditions",
             json::parse(R"({"sm": {"conicity_multiplier": 0.9}, "truth": {"kalker_multiplier": 0.5}})")}};
}

void SweepConfig::validate() const {
    std::set<std::string> names;
    const std::string base_id = base.value("run_id", std::string("standard"));
    names.insert(base_id);
    for (const auto& v : variants) {
        if (v.name.empty()) throw ConfigError("variant names must not be empty");
        if (!names.insert(v.name).second) throw ConfigError("duplicate variant name " + v.name);
        if (!v.overrides.is_object()) throw ConfigError("variant " + v.name + ": overrides must be an object");
    }
}

SweepConfig SweepConfig::from_json(const json& doc, const std::string& base_dir) {
    SweepConfig s;
    try {
        const json& b = doc.at("base");
        if (b.is_string()) {
            fs::path p(b.get<std::string>());
            if (p.is_relative()) p = fs::path(base_dir) / p;
            s.base = read_json(p.string());
        } else if (b.is_object()) {
            s.base = b;
        } else {
            throw ConfigError("sweep base must be a path or an object");
        }
        const json& v = doc.value("variants", json::array());
        if (v.is_string()) {
            if (v.get<std::string>() != "table3") throw ConfigError("unknown variant set " + v.get<std::string>());
            s.variants = table3_variants();
        } else {
            for (const auto& e : v) s.variants.push_back({e.at("name").get<std::string>(), e.value("overrides", json::object())});
        }
        s.output_dir = doc.value("output_dir", std::string());
    } catch (const json::exception& e) {
        throw ConfigError(std::string("sweep config: ") + e.what());
    }
    s.validate();
    return s;
}

SweepResult run_sweep(const SweepConfig& sweep, const RunOptions& opts) {
    sweep.validate();
    struct Job {
        std::string name;
        json doc;
    };
    std::vector<Job> jobs;
    const std::string base_id = sweep.base.value("run_id", std::string("standard"));
    jobs.push_back({base_id, sweep.base});
    for (const auto& v : sweep.variants) {
        json d = sweep.base;
        d.merge_patch(v.overrides);
        d["run_id"] = v.name;
        jobs.push_back({v.name, d});
    }
    // Validate every variant up front so a broken config fails before any run.
    std::vector<ScenarioConfig> cfgs;
    for (auto& j : jobs) {
        if (!sweep.output_dir.empty()) j.doc["output_dir"] = (fs::path(sweep.output_dir) / j.name).string();
        cfgs.push_back(parse_config(j.doc));
    }

    RunOptions inner = opts;
    inner.log = nullptr;
    std::vector<std::future<SweepRow>> futs;
    for (const auto& c : cfgs) {
        futs.push_back(std::async(std::launch::async, [c, inner] {
            SweepRow r;
            r.variant = c.run_id;
            try {
                r.report = run_scenario(c, inner).report;
                r.ok = true;
            } catch (const std::exception& e) {
                r.error = e.what();
            }
            return r;
        }));
    }
    SweepResult res;
    for (auto& f : futs) {
        res.rows.push_back(f.get());
        const auto& r = res.rows.back();
        if (r.ok) {
            char buf[160];
            const auto& w = r.report.band("whole");
            std::snprintf(buf, sizeof buf, "[%s] whole-range J = %.3f mm, J_rel = %.3f", r.variant.c_str(), w.J_mm,
                          w.J_rel.value_or(std::nan("")));
            log_line(opts, buf);
        } else {
            log_line(opts, "[" + r.variant + "] failed: " + r.error);
        }
    }
    if (!sweep.output_dir.empty()) {
        std::error_code ec;
        fs::create_directories(sweep.output_dir, ec);
        if (ec) throw IoError("cannot create " + sweep.output_dir + ": " + ec.message());
        write_text((fs::path(sweep.output_dir) / "sweep.json").string(), res.to_json().dump(2) + "\n");
        write_text((fs::path(sweep.output_dir) / "sweep.csv").string(), res.to_csv());
    }
    return res;
}

const SweepRow& SweepResult::row(const std::string& name) const {
    for (const auto& r : rows)
        if (r.variant == name) return r;
    throw ConfigError("sweep has no variant " + name);
}

namespace {
std::string cell(const analysis::BandResult& b) {
    char buf[64];
    if (b.J_rel) std::snprintf(buf, sizeof buf, "%.3f / %.3f", b.J_mm, *b.J_rel);
    else std::snprintf(buf, sizeof buf, "%.3f / -", b.J_mm);
    return buf;
}
}  // namespace

ojson SweepResult::to_json() const {
    ojson rows_j = ojson::array();
    for (const auto& r : rows) {
        ojson e;
        e["variant"] = r.variant;
        e["status"] = r.ok ? "ok" : "failed";
        if (!r.ok) {
            e["error"] = r.error;
        } else {
            ojson cells, bands = ojson::array();
            for (const auto& b : r.report.bands) {
                cells[b.name] = cell(b);
                bands.push_back({{"name", b.name},
                                 {"J_mm", b.J_mm},
                                 {"J_rel", b.J_rel ? ojson(*b.J_rel) : ojson(nullptr)}});
            }
            e["cells"] = cells;
            e["bands"] = bands;
        }
        rows_j.push_back(e);
    }
    ojson out;
    out["rows"] = rows_j;
    return out;
}

std::string SweepResult::to_csv() const {
    std::ostringstream o;
    o << "variant,whole,D1,D2,D3,status\r\n";
    for (const auto& r : rows) {
        o << csv::quote(r.variant);
        for (const auto& b : analysis::standard_bands()) {
            o << ',';
            if (r.ok) o << csv::quote(cell(r.report.band(b.name)));
        }
        o << ',' << (r.ok ? "ok" : csv::quote("failed: " + r.error)) << "\r\n";
    }
    return o.str();
}

// ---------------------------------------------------------------- ident

IdentConfig IdentConfig::from_json(const json& doc) {
    IdentConfig c;
    c.scenario = parse_config(doc);
    const json id = doc.value("ident", json::object());
    try {
        c.twin = id.value("twin", false);
        c.perturb = id.value("perturb", c.twin ? 2.0 : 1.0);
        c.bounds_decades = id.value("bounds_decades", c.twin ? 1.0 : 2.0);
        if (id.contains("guess")) {
            const auto g = vector_from(id.at("guess"), 4, "ident.guess");
            c.guess = std::array<double, 4>{g(0), g(1), g(2), g(3)};
        }
        c.options.max_iter = id.value("max_iter", c.options.max_iter);
        c.options.size_tol = id.value("size_tol", c.options.size_tol);
        c.options.initial_step = id.value("initial_step", c.options.initial_step);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("ident config: ") + e.what());
    }
    if (!(c.perturb > 0.0) || !(c.bounds_decades > 0.0)) throw ConfigError("ident perturb and bounds must be > 0");
    return c;
}

ojson IdentRun::to_json() const {
    ojson j;
    ojson params;
    for (std::size_t i = 0; i < 4; ++i) params[dynamics::SmParams::opt_names[i]] = result.p_opt[i];
    ojson guess, bounds;
    for (std::size_t i = 0; i < 4; ++i) {
        guess[dynamics::SmParams::opt_names[i]] = problem.guess[i];
        bounds[dynamics::SmParams::opt_names[i]] = {problem.bounds[i][0], problem.bounds[i][1]};
    }
    j["p_opt"] = params;
    j["J_ls"] = result.J;
    j["J_ls_initial"] = result.J_initial;
    j["iterations"] = result.iterations;
    j["converged"] = result.converged;
    j["J_rel_y"] = J_rel_y;
    j["guess"] = guess;
    j["bounds"] = bounds;
    j["trace"] = result.trace;
    return j;
}

IdentRun run_ident(const IdentConfig& icfg, const RunOptions& opts) {
    ScenarioConfig cfg = icfg.scenario;
    cfg.vertical = false;  // lateral irregularity only
    cfg.seeds.track = cfg.seeds.ident;
    if (icfg.twin) cfg.truth_model = TruthModel::SimplifiedModel;
    cfg.validate();

    const track::Profile profile = build_profile(cfg);
    const auto N = static_cast<Eigen::Index>(std::llround(cfg.duration / cfg.dt)) + 1;

    IdentRun run;
    auto& pr = run.problem;
    pr.V = cfg.V;
    pr.dt = cfg.dt;
    const dynamics::SmParams table1 = dynamics::SmParams::table1();
    if (icfg.twin) {
        pr.base = table1;
        pr.xi.resize(N);
        for (Eigen::Index k = 0; k < N; ++k) pr.xi(k) = profile.alignment_at(cfg.V * cfg.dt * static_cast<double>(k));
        const auto ref = dynamics::simulate_sm(dynamics::assemble_sm(table1, cfg.V), pr.xi, cfg.dt);
        if (ref.diverged) throw InstabilityError("twin reference diverged", "q");
        pr.y_ref = ref.q.col(0);
        pr.psi_ref = ref.q.col(1);
    } else {
        pr.base = cfg.estimator_sm();
        const auto truth =
            truthsim::simulate_truth(cfg.truth_params(), profile, cfg.V, cfg.duration, cfg.dt, std::nullopt);
        pr.xi = truth.xi_lead;
        pr.y_ref = truth.x.col(0);
        pr.psi_ref = truth.x.col(1);
    }
    const auto centre = table1.opt();
    if (icfg.guess) {
        pr.guess = *icfg.guess;
    } else {
        for (std::size_t i = 0; i < 4; ++i) pr.guess[i] = centre[i] * icfg.perturb;
    }
    pr.bounds = ident::IdentProblem::decade_bounds(centre, icfg.bounds_decades);

    log_line(opts, "[ident] " + std::string(icfg.twin ? "twin" : "truth") + " reference, " + std::to_string(N) +
                       " samples");
    run.result = ident::identify(pr, icfg.options);

    const auto fit = dynamics::simulate_sm(dynamics::assemble_sm(pr.base.with_opt(run.result.p_opt), cfg.V), pr.xi,
                                           cfg.dt);
    run.overlay.resize(N, 5);
    run.overlay.col(0) = Eigen::VectorXd::LinSpaced(N, 0.0, static_cast<double>(N - 1) * cfg.dt);
    run.overlay.col(1) = pr.y_ref;
    run.overlay.col(2) = fit.q.col(0);
    run.overlay.col(3) = pr.psi_ref;
    run.overlay.col(4) = fit.q.col(1);
    run.J_rel_y = analysis::rms(fit.q.col(0) - pr.y_ref) / analysis::rms(pr.y_ref);

    char buf[200];
    std::snprintf(buf, sizeof buf, "[ident] J_ls %.4g -> %.4g after %d iterations (%s), J_rel(y) = %.3f",
                  run.result.J_initial, run.result.J, run.result.iterations,
                  run.result.converged ? "converged" : "not converged", run.J_rel_y);
    log_line(opts, buf);

    if (opts.write_outputs && !cfg.output_dir.empty()) {
        std::error_code ec;
        fs::create_directories(cfg.output_dir, ec);
        if (ec) throw IoError("cannot create " + cfg.output_dir + ": " + ec.message());
        write_text((fs::path(cfg.output_dir) / "ident.json").string(), run.to_json().dump(2) + "\n");
        csv::write((fs::path(cfg.output_dir) / "overlay.csv").string(),
                   {{"t_s", "y_ref_m", "y_sm_m", "psi_ref_rad", "psi_sm_rad"},
                    {run.overlay.col(0), run.overlay.col(1), run.overlay.col(2), run.overlay.col(3),
                     run.overlay.col(4)}});
    }
    return run;
}

// ---------------------------------------------------------------- modes

ojson modes_report(const ScenarioConfig& cfg) {
    ojson j;
    const auto sm = cfg.estimator_sm();
    j["V"] = cfg.V;
    j["klingel_wavelength_m"] = dynamics::klingel_wavelength(sm);
    const auto ms = dynamics::modal_analysis(dynamics::assemble_sm(sm, cfg.V));
    ojson smj;
    smj["modes"] = modes_json(ms);
    if (const auto m = ms.least_damped_oscillatory()) {
        smj["least_damped"] = {{"freq_hz", m->freq_hz}, {"damping_ratio", m->damping_ratio},
                               {"wavelength_m", m->wavelength_m}};
    }
    j["sm"] = smj;

    const auto T = truthsim::assemble_truth(cfg.truth_params(), cfg.V);
    const auto mt = dynamics::modal_analysis(T.M, T.C, T.K, cfg.V);
    ojson tj;
    tj["modes"] = modes_json(mt);
    if (const auto m = mt.least_damped_oscillatory()) {
        tj["least_damped"] = {{"freq_hz", m->freq_hz}, {"damping_ratio", m->damping_ratio},
                              {"wavelength_m", m->wavelength_m}};
    }
    j["truth"] = tj;
    return j;
}

}  // namespace railkf::scenario
