// Copyright 2026 The loopdet Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "loopdet/cli/commands.hpp"
#include "loopdet/cli/config.hpp"
#include "loopdet/error.hpp"

namespace {

using namespace loopdet;
using namespace loopdet::cli;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> trials;
    std::optional<unsigned> workers;
    std::string format;
    std::string plane;
    std::string out;

    // calibrate only
    std::string channels;
    std::optional<double> ratio_stat;
    std::optional<double> t_over_eta;
    std::optional<double> theta;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Run configuration file");
    cmd->add_option("--seed", f.seed, "Random seed (overrides [simulation] seed)");
    cmd->add_option("--trials", f.trials, "Number of simulated pulses");
    cmd->add_option("--workers", f.workers, "Worker threads for Monte Carlo runs")->check(CLI::PositiveNumber);
    cmd->add_option("--format", f.format, "Output format")->check(CLI::IsMember({"csv", "json"}));
    cmd->add_option("--reference-plane", f.plane, "Where the source multi-photon content is evaluated")
        ->check(CLI::IsMember({"input", "detected"}));
    cmd->add_option("--out", f.out, "Output file ('-' for stdout)");
}

RunConfig build_config(const CommonFlags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.seed) {
        cfg.simulation.seed = *f.seed;
        cfg.seed_given = true;
    }
    if (f.trials) cfg.simulation.n_trials = *f.trials;
    if (f.workers) cfg.simulation.workers = *f.workers;
    if (!f.format.empty()) cfg.output.format = parse_format(f.format);
    if (!f.plane.empty()) cfg.output.plane = parse_plane(f.plane);
    if (!f.out.empty()) cfg.output.path = f.out;
    if (!f.channels.empty()) cfg.calibration.channels_csv = f.channels;
    if (f.ratio_stat) cfg.calibration.ratio_stat = *f.ratio_stat;
    if (f.t_over_eta) cfg.calibration.t_over_eta = *f.t_over_eta;
    if (f.theta) cfg.calibration.theta = *f.theta;
    return cfg;
}

int emit(const Report& report, const RunConfig& cfg) {
    const bool to_stdout = cfg.output.path == "-";
    if (to_stdout) {
        write_report(report, cfg.output.format, std::cout);
    } else {
        std::ofstream out(cfg.output.path, std::ios::binary | std::ios::trunc);
        if (!out) {
            std::cerr << "error: cannot write '" << cfg.output.path << "'\n";
            return kDataError;
        }
        write_report(report, cfg.output.format, out);
    }
    for (const auto& note : report.notes) (to_stdout ? std::cerr : std::cout) << note << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Time-multiplexed loop detector: channel model, entropy optimization, "
                 "Monte Carlo, calibration and postselection"};
    app.require_subcommand(1);

    CommonFlags flags;
    using Command = std::function<Report(const RunConfig&)>;
    const std::map<std::string, std::pair<std::string, Command>> commands = {
        {"channels", {"Channel transmissions h_k and shares H_k, optionally swept over r", cmd_channels}},
        {"optimize", {"Entropy-maximizing division ratio", cmd_optimize}},
        {"cm-curve", {"Device vs source multi-photon content over mu", cmd_cm_curve}},
        {"simulate-tof", {"Monte Carlo time-of-flight histogram", cmd_simulate_tof}},
        {"calibrate", {"Loop and input transmission from channel probabilities", cmd_calibrate}},
        {"postselect", {"Heralded postselection ratio w_M over mu", cmd_postselect}},
    };
    for (const auto& [name, entry] : commands) {
        CLI::App* sub = app.add_subcommand(name, entry.first);
        add_common(sub, flags);
        if (name == "calibrate") {
            sub->add_option("--channels", flags.channels, "CSV with columns k,H_k,sigma_k");
            sub->add_option("--ratio-stat", flags.ratio_stat, "Measured H_{k+1}/(H_k H_1)");
            sub->add_option("--t-over-eta", flags.t_over_eta, "Measured T/eta");
            sub->add_option("--theta", flags.theta, "Coupler excess transmission");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kConfigError;
    }

    try {
        const RunConfig cfg = build_config(flags);
        for (const auto& [name, entry] : commands) {
            if (app.got_subcommand(name)) return emit(entry.second(cfg), cfg);
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e.code());
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kDomainError;
    }
    return kConfigError;
}
