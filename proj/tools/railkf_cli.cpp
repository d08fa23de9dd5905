// railkf: scenario runner for the lateral irregularity Kalman filter.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "railkf/errors.hpp"
#include "railkf/scenario.hpp"
#include "railkf/track.hpp"

namespace fs = std::filesystem;
namespace sc = railkf::scenario;

namespace {

enum Exit { kOk = 0, kConfig = 2, kNumeric = 3, kIo = 4, kNotConverged = 5, kPartial = 6 };

struct Common {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
    sub->add_option("--config", c.config, "JSON config file");
    sub->add_option("--out", c.out, "output directory");
    sub->add_option("--seed", c.seed, "base seed: track = s, noise = s + 100, ident = s + 200");
    sub->add_flag("--quiet", c.quiet, "suppress progress output");
}

sc::json scenario_doc(const Common& c) {
    sc::json doc = c.config.empty() ? sc::json::object() : sc::read_json(c.config);
    if (!c.out.empty()) doc["output_dir"] = c.out;
    if (c.seed) {
        const auto s = sc::Seeds::from_base(*c.seed);
        doc["seeds"] = {{"track", s.track}, {"noise", s.noise}, {"ident", s.ident}};
    }
    return doc;
}

sc::RunOptions options(const Common& c) {
    sc::RunOptions o;
    o.log = c.quiet ? nullptr : &std::cerr;
    return o;
}

int cmd_run(const Common& c) {
    const auto cfg = sc::parse_config(scenario_doc(c));
    const auto run = sc::run_scenario(cfg, options(c));
    if (!c.quiet) std::cout << run.report.to_json() << '\n';
    return kOk;
}

int cmd_sweep(const Common& c) {
    if (c.config.empty()) throw railkf::ConfigError("sweep needs --config");
    const sc::json doc = sc::read_json(c.config);
    const std::string dir = fs::path(c.config).parent_path().string();
    sc::SweepConfig sw = sc::SweepConfig::from_json(doc, dir.empty() ? "." : dir);
    if (!c.out.empty()) sw.output_dir = c.out;
    if (c.seed) {
        const auto s = sc::Seeds::from_base(*c.seed);
        sw.base["seeds"] = {{"track", s.track}, {"noise", s.noise}, {"ident", s.ident}};
    }
    const auto res = sc::run_sweep(sw, options(c));
    if (!c.quiet) std::cout << res.to_csv();
    for (const auto& r : res.rows)
        if (!r.ok) return kPartial;
    return kOk;
}

int cmd_ident(const Common& c) {
    const auto icfg = sc::IdentConfig::from_json(scenario_doc(c));
    const auto run = sc::run_ident(icfg, options(c));
    if (!c.quiet) std::cout << run.to_json().dump(2) << '\n';
    return run.result.converged ? kOk : kNotConverged;
}

int cmd_modes(const Common& c) {
    const auto cfg = sc::parse_config(scenario_doc(c));
    const auto j = sc::modes_report(cfg);
    if (!c.out.empty()) {
        fs::create_directories(c.out);
        sc::write_text((fs::path(c.out) / "modes.json").string(), j.dump(2) + "\n");
    }
    if (!c.quiet) std::cout << j.dump(2) << '\n';
    return kOk;
}

int cmd_gen_track(const Common& c) {
    const auto cfg = sc::parse_config(scenario_doc(c));
    const auto profile = sc::build_profile(cfg);
    const fs::path dir = c.out.empty() ? fs::path(".") : fs::path(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw railkf::IoError("cannot create " + dir.string() + ": " + ec.message());
    const std::string path = (dir / "profile.csv").string();
    railkf::track::write_profile_csv(profile, path);
    if (!c.quiet) std::cerr << "wrote " << path << " (" << profile.s.size() << " samples)\n";
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Lateral track irregularity estimation from on-board sensors"};
    app.require_subcommand(1);
    Common common;
    struct Verb {
        const char* name;
        const char* help;
        int (*fn)(const Common&);
    };
    const Verb verbs[] = {{"run", "run one scenario", cmd_run},
                          {"sweep", "run a base scenario and its variants", cmd_sweep},
                          {"ident", "identify the simplified-model suspension parameters", cmd_ident},
                          {"modes", "modal summary of the simplified and truth models", cmd_modes},
                          {"gen-track", "write the configured irregularity profile", cmd_gen_track}};
    std::vector<std::pair<CLI::App*, int (*)(const Common&)>> subs;
    for (const auto& v : verbs) {
        auto* sub = app.add_subcommand(v.name, v.help);
        add_common(sub, common);
        subs.emplace_back(sub, v.fn);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        for (const auto& [sub, fn] : subs)
            if (sub->parsed()) return fn(common);
    } catch (const railkf::ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const railkf::IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const railkf::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kNumeric;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kIo;
    }
    return kOk;
}
