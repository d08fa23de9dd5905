#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"
#include "railkf/analysis.hpp"
#include "railkf/dynamics.hpp"
#include "railkf/estimator.hpp"
#include "railkf/ident.hpp"
#include "railkf/track.hpp"
#include "railkf/truthsim.hpp"

namespace railkf::scenario {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

enum class NoiseMode { Autoscale, Configured, Off };
enum class CovSource { Estimated, Configured };
enum class TruthModel { Surrogate, SimplifiedModel };

struct Seeds {
    std::uint64_t track = 1;
    std::uint64_t noise = 101;
    std::uint64_t ident = 201;

    /// track = s, noise = s + 100, ident = s + 200.
    static Seeds from_base(std::uint64_t s) { return {s, s + 100, s + 200}; }
};

/// Parsed scenario. `raw` keeps the merged JSON document (defaults + file +
/// overrides) so sweeps can patch it and reports can echo it.
struct ScenarioConfig {
    std::string run_id = "standard";
    double V = 20.0;
    double duration = 20.0;
    double dt = 1e-3;
    double ds = 0.02;  ///< profile grid, m

    json track;  ///< source tree: psd | harmonic | file | sum
    bool vertical = true;
    double vertical_rms = 0.075e-3;

    NoiseMode noise_mode = NoiseMode::Autoscale;
    truthsim::NoiseSpec noise;  ///< sigmas used when noise_mode is Configured

    dynamics::SmParams sm = dynamics::SmParams::surrogate_equivalent();
    double conicity_multiplier = 1.0;

    TruthModel truth_model = TruthModel::Surrogate;
    truthsim::TruthParams truth;
    double kalker_multiplier = 1.0;

    CovSource cov_source = CovSource::Estimated;
    double xi_process_scale = 1e3;
    Eigen::MatrixXd Q, R;  ///< configured covariances (diagonal or read from a qr.json export)
    Eigen::VectorXd P0_diag = estimator::default_P0_diagonal();

    Seeds seeds;
    std::string output_dir;
    json raw;

    void validate() const;
    /// SM handed to the estimator (conicity multiplier applied).
    dynamics::SmParams estimator_sm() const;
    /// Truth vehicle (Kalker multiplier applied).
    truthsim::TruthParams truth_params() const;
};

/// Defaults of the standard case as a JSON document.
json default_config_json();
/// Merge `doc` onto the defaults and parse. Throws ConfigError.
ScenarioConfig parse_config(const json& doc);
ScenarioConfig load_config(const std::string& path);
/// Read a JSON file, IoError on failure to open, ConfigError on syntax.
json read_json(const std::string& path);
void write_text(const std::string& path, const std::string& text);

/// Profile on the scenario grid covering the truth run.
track::Profile build_profile(const ScenarioConfig& cfg);

/// z = [acc_w, gyro_w, acc_f, 0] per row.
Eigen::MatrixXd measurement_matrix(const truthsim::SensorRecord& rec);

struct ScenarioRun {
    ScenarioConfig cfg;
    track::Profile profile;
    std::optional<truthsim::TruthRun> truth;  ///< empty for the simplified-model truth
    Eigen::VectorXd t, s;
    Eigen::MatrixXd X;       ///< N x 7 reference states
    Eigen::MatrixXd Z;       ///< N x 4 filter input
    Eigen::MatrixXd Z_clean;
    std::optional<truthsim::NoiseSpec> noise;  ///< injected noise
    truthsim::NoiseSpec calibration_noise;
    estimator::FilterBundle bundle;
    estimator::Covariances cov;
    int observability_rank = 0;
    estimator::KfResult kf;
    Eigen::VectorXd xi_est, xi_real;
    analysis::AccuracyReport report;
};

struct RunOptions {
    bool write_outputs = true;
    std::ostream* log = nullptr;
};

/// track -> truth -> covariance estimation -> Kalman filter -> accuracy report.
ScenarioRun run_scenario(const ScenarioConfig& cfg, const RunOptions& opts = {});

struct Variant {
    std::string name;
    json overrides;
};

struct SweepConfig {
    json base;  ///< scenario document
    std::vector<Variant> variants;
    std::string output_dir;

    void validate() const;
    static SweepConfig from_json(const json& doc, const std::string& base_dir = ".");
};

/// The robustness variants: no noise, no vertical, conicity -10 %, Kalker -50 %, all together.
std::vector<Variant> table3_variants();

struct SweepRow {
    std::string variant;
    bool ok = false;
    std::string error;
    analysis::AccuracyReport report;
};

struct SweepResult {
    std::vector<SweepRow> rows;  ///< base row first
    ojson to_json() const;
    std::string to_csv() const;
    const SweepRow& row(const std::string& name) const;
};

SweepResult run_sweep(const SweepConfig& sweep, const RunOptions& opts = {});

struct IdentConfig {
    ScenarioConfig scenario;
    bool twin = false;                   ///< reference from the simplified model with table1() values
    std::optional<std::array<double, 4>> guess;  ///< default: table1() values times `perturb`
    double perturb = 1.0;
    double bounds_decades = 2.0;
    ident::IdentOptions options;

    static IdentConfig from_json(const json& doc);
};

struct IdentRun {
    ident::IdentProblem problem;
    ident::IdentResult result;
    Eigen::MatrixXd overlay;  ///< t, y_ref, y_sm, psi_ref, psi_sm
    double J_rel_y = 0.0;     ///< rms(y_sm - y_ref) / rms(y_ref)
    ojson to_json() const;
};

/// Lateral-only reference run and identification. Uses seeds.ident for the track.
IdentRun run_ident(const IdentConfig& cfg, const RunOptions& opts = {});

/// Modal summary of the estimator SM and the truth model at the configured speed.
ojson modes_report(const ScenarioConfig& cfg);

}  // namespace railkf::scenario
