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

#pragma once

// Run configuration files: flat `key = value` lines grouped under `[section]`
// headers. `#` starts a comment. Lists are comma separated. Unknown sections
// or keys are rejected with the offending line number.
//
//   [device]       t0 theta tl eta r | t13 t14 t23 t24, dark_prob_per_bin,
//                  afterpulse_prob, afterpulse_decay_ns, dead_time_ns,
//                  loop_delay_ns, bin_width_ns, duty_factor_q, n_channels
//   [source]       kind = poisson|fock|custom, mu, n, pmf
//   [simulation]   seed, n_trials, n_bins, first_peak_ns, workers, chain_afterpulses
//   [sweep]        r_min r_max r_step, mu (list) | mu_min mu_max mu_points mu_log
//   [optimize]     grid_step, tolerance, normalized, n_channels
//   [calibration]  theta, t_over_eta, t_over_eta_sigma, ratio_stat, ratio_sigma,
//                  channels_csv, first_k, last_k
//   [postselect]   rule = exactly-one|at-least-one|first-channel,
//                  signal_transmission, noise
//   [output]       format = csv|json, path, reference_plane = input|detected

#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "loopdet/core_model.hpp"
#include "loopdet/entropy_opt.hpp"
#include "loopdet/error.hpp"
#include "loopdet/mc_sim.hpp"
#include "loopdet/photon_stats.hpp"
#include "loopdet/postselect.hpp"

namespace loopdet::cli {

enum class OutputFormat { csv, json };

struct SweepConfig {
    std::optional<double> r_min, r_max, r_step;
    std::vector<double> mu;
    std::optional<double> mu_min, mu_max;
    std::optional<std::size_t> mu_points;
    bool mu_log = true;
};

struct CalibrationConfig {
    double theta = 0.955;
    std::optional<double> t_over_eta;
    double t_over_eta_sigma = 0.0;
    std::optional<double> ratio_stat;
    double ratio_sigma = 0.0;
    std::string channels_csv;
    std::size_t first_k = 2;
    std::size_t last_k = 6;
};

struct OutputConfig {
    OutputFormat format = OutputFormat::csv;
    std::string path = "-";
    ReferencePlane plane = ReferencePlane::input;
};

struct RunConfig {
    DeviceParams device = measured_device();
    std::size_t n_channels = 15;
    PhotonSource source = Poissonian{2.13};
    SimConfig simulation;
    bool seed_given = false;
    SweepConfig sweep;
    OptimizeOptions optimize;
    CalibrationConfig calibration;
    PostselectOptions postselect;
    bool postselect_noise = false;
    OutputConfig output;
};

namespace detail {

struct Entry {
    std::string value;
    int line = 0;
};

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] inline void fail(int line, const std::string& what) {
    throw Error(Errc::config, (line > 0 ? "line " + std::to_string(line) + ": " : std::string()) + what);
}

inline double to_double(const Entry& e, const std::string& key) {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || errno == ERANGE || !std::isfinite(v)) {
        fail(e.line, "'" + key + "' expects a number, got '" + e.value + "'");
    }
    return v;
}

inline std::uint64_t to_uint(const Entry& e, const std::string& key) {
    const char* begin = e.value.c_str();
    char* end = nullptr;
    errno = 0;
    const unsigned long long v = std::strtoull(begin, &end, 10);
    if (end == begin || *end != '\0' || errno == ERANGE || e.value.front() == '-') {
        fail(e.line, "'" + key + "' expects a non-negative integer, got '" + e.value + "'");
    }
    return v;
}

inline bool to_bool(const Entry& e, const std::string& key) {
    if (e.value == "true" || e.value == "1" || e.value == "yes") return true;
    if (e.value == "false" || e.value == "0" || e.value == "no") return false;
    fail(e.line, "'" + key + "' expects true or false, got '" + e.value + "'");
}

inline std::vector<double> to_list(const Entry& e, const std::string& key) {
    std::vector<double> out;
    std::stringstream ss(e.value);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        out.push_back(to_double(Entry{item, e.line}, key));
    }
    return out;
}

using Sections = std::map<std::string, std::map<std::string, Entry>>;

inline Sections parse_sections(std::istream& in) {
    static const std::map<std::string, std::set<std::string>> allowed = {
        {"device",
         {"t0", "theta", "tl", "eta", "r", "t13", "t14", "t23", "t24", "dark_prob_per_bin", "afterpulse_prob",
          "afterpulse_decay_ns", "dead_time_ns", "loop_delay_ns", "bin_width_ns", "duty_factor_q", "n_channels"}},
        {"source", {"kind", "mu", "n", "pmf"}},
        {"simulation", {"seed", "n_trials", "n_bins", "first_peak_ns", "workers", "chain_afterpulses"}},
        {"sweep", {"r_min", "r_max", "r_step", "mu", "mu_min", "mu_max", "mu_points", "mu_log"}},
        {"optimize", {"grid_step", "tolerance", "normalized", "n_channels"}},
        {"calibration",
         {"theta", "t_over_eta", "t_over_eta_sigma", "ratio_stat", "ratio_sigma", "channels_csv", "first_k", "last_k"}},
        {"postselect", {"rule", "signal_transmission", "noise"}},
        {"output", {"format", "path", "reference_plane"}},
    };

    Sections out;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(line_no, "unterminated section header");
            section = trim(line.substr(1, line.size() - 2));
            if (!allowed.count(section)) fail(line_no, "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        if (section.empty()) fail(line_no, "key outside of any section");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (!allowed.at(section).count(key)) fail(line_no, "unknown key '" + key + "' in [" + section + "]");
        if (value.empty()) fail(line_no, "empty value for '" + key + "'");
        if (out[section].count(key)) fail(line_no, "duplicate key '" + key + "'");
        out[section][key] = Entry{value, line_no};
    }
    return out;
}

}  // namespace detail

inline ReferencePlane parse_plane(const std::string& s, int line = 0) {
    if (s == "input") return ReferencePlane::input;
    if (s == "detected") return ReferencePlane::detected;
    detail::fail(line, "reference plane must be 'input' or 'detected', got '" + s + "'");
}

inline OutputFormat parse_format(const std::string& s, int line = 0) {
    if (s == "csv") return OutputFormat::csv;
    if (s == "json") return OutputFormat::json;
    detail::fail(line, "format must be 'csv' or 'json', got '" + s + "'");
}

inline AcceptRule parse_rule(const std::string& s, int line = 0) {
    if (s == "exactly-one") return AcceptRule::exactly_one_click;
    if (s == "at-least-one") return AcceptRule::at_least_one_click;
    if (s == "first-channel") return AcceptRule::first_channel_only;
    detail::fail(line, "rule must be exactly-one, at-least-one or first-channel, got '" + s + "'");
}

/// Parses and range-checks a configuration. Physical values are validated
/// here, so a bad coefficient is reported as a config error with its line.
inline RunConfig parse_config(std::istream& in) {
    using detail::Entry;
    const auto sections = detail::parse_sections(in);
    RunConfig cfg;

    auto get = [&](const std::string& sec, const std::string& key) -> const Entry* {
        const auto s = sections.find(sec);
        if (s == sections.end()) return nullptr;
        const auto k = s->second.find(key);
        return k == s->second.end() ? nullptr : &k->second;
    };
    auto num = [&](const std::string& sec, const std::string& key, double& target) {
        if (const Entry* e = get(sec, key)) target = detail::to_double(*e, key);
    };
    auto unit = [&](const std::string& sec, const std::string& key, double& target) {
        if (const Entry* e = get(sec, key)) {
            target = detail::to_double(*e, key);
            if (!(target >= 0.0 && target <= 1.0)) detail::fail(e->line, "'" + key + "' must lie in [0, 1]");
        }
    };
    auto positive = [&](const std::string& sec, const std::string& key, double& target) {
        if (const Entry* e = get(sec, key)) {
            target = detail::to_double(*e, key);
            if (!(target > 0.0)) detail::fail(e->line, "'" + key + "' must be positive");
        }
    };

    // [device]
    auto& d = cfg.device;
    unit("device", "t0", d.t0);
    unit("device", "theta", d.theta);
    unit("device", "tl", d.tl);
    unit("device", "eta", d.eta);
    unit("device", "dark_prob_per_bin", d.dark_prob_per_bin);
    unit("device", "afterpulse_prob", d.afterpulse_prob);
    unit("device", "duty_factor_q", d.duty_factor_q);
    positive("device", "afterpulse_decay_ns", d.afterpulse_decay_ns);
    positive("device", "dead_time_ns", d.dead_time_ns);
    positive("device", "loop_delay_ns", d.loop_delay_ns);
    positive("device", "bin_width_ns", d.bin_width_ns);
    const bool has_full = get("device", "t13") || get("device", "t14") || get("device", "t23") || get("device", "t24");
    if (const Entry* e = get("device", "r")) {
        if (has_full) detail::fail(e->line, "give either r or t13/t14/t23/t24, not both");
        IdealCoupler c;
        unit("device", "r", c.r);
        d.coupler = c;
    } else if (has_full) {
        FullCoupler c;
        for (const char* key : {"t13", "t14", "t23", "t24"}) {
            if (!get("device", key)) detail::fail(0, std::string("full coupler needs ") + key);
        }
        unit("device", "t13", c.t13);
        unit("device", "t14", c.t14);
        unit("device", "t23", c.t23);
        unit("device", "t24", c.t24);
        d.coupler = c;
    }
    if (const Entry* e = get("device", "n_channels")) {
        cfg.n_channels = detail::to_uint(*e, "n_channels");
        if (cfg.n_channels == 0) detail::fail(e->line, "n_channels must be positive");
    }
    if (!(d.loop_delay_ns > d.dead_time_ns)) {
        const Entry* e = get("device", "loop_delay_ns");
        if (!e) e = get("device", "dead_time_ns");
        detail::fail(e ? e->line : 0, "loop_delay_ns must exceed dead_time_ns");
    }

    // [source]
    if (const Entry* kind = get("source", "kind")) {
        if (kind->value == "poisson") {
            const Entry* mu = get("source", "mu");
            if (!mu) detail::fail(kind->line, "poisson source needs mu");
            Poissonian p{detail::to_double(*mu, "mu")};
            if (!(p.mu >= 0.0)) detail::fail(mu->line, "mu must be non-negative");
            cfg.source = p;
        } else if (kind->value == "fock") {
            const Entry* n = get("source", "n");
            if (!n) detail::fail(kind->line, "fock source needs n");
            cfg.source = Fock{static_cast<std::size_t>(detail::to_uint(*n, "n"))};
        } else if (kind->value == "custom") {
            const Entry* pmf = get("source", "pmf");
            if (!pmf) detail::fail(kind->line, "custom source needs pmf");
            CustomPmf c{detail::to_list(*pmf, "pmf")};
            try {
                validate(PhotonSource{c});
            } catch (const Error& err) {
                detail::fail(pmf->line, err.what());
            }
            cfg.source = c;
        } else {
            detail::fail(kind->line, "source kind must be poisson, fock or custom");
        }
    } else if (const Entry* mu = get("source", "mu")) {
        Poissonian p{detail::to_double(*mu, "mu")};
        if (!(p.mu >= 0.0)) detail::fail(mu->line, "mu must be non-negative");
        cfg.source = p;
    }

    // [simulation]
    auto& s = cfg.simulation;
    s.n_channels = cfg.n_channels;
    if (const Entry* e = get("simulation", "seed")) {
        s.seed = detail::to_uint(*e, "seed");
        cfg.seed_given = true;
    }
    if (const Entry* e = get("simulation", "n_trials")) s.n_trials = detail::to_uint(*e, "n_trials");
    if (const Entry* e = get("simulation", "n_bins")) {
        s.n_bins = detail::to_uint(*e, "n_bins");
        if (s.n_bins == 0) detail::fail(e->line, "n_bins must be positive");
    }
    if (const Entry* e = get("simulation", "workers")) {
        s.workers = static_cast<unsigned>(detail::to_uint(*e, "workers"));
        if (s.workers == 0) detail::fail(e->line, "workers must be positive");
    }
    num("simulation", "first_peak_ns", s.first_peak_ns);
    if (const Entry* e = get("simulation", "chain_afterpulses")) s.chain_afterpulses = detail::to_bool(*e, "chain_afterpulses");

    // [sweep]
    auto& w = cfg.sweep;
    auto opt_num = [&](const std::string& key, std::optional<double>& target) {
        if (const Entry* e = get("sweep", key)) target = detail::to_double(*e, key);
    };
    opt_num("r_min", w.r_min);
    opt_num("r_max", w.r_max);
    opt_num("r_step", w.r_step);
    opt_num("mu_min", w.mu_min);
    opt_num("mu_max", w.mu_max);
    if (const Entry* e = get("sweep", "mu")) w.mu = detail::to_list(*e, "mu");
    if (const Entry* e = get("sweep", "mu_points")) w.mu_points = detail::to_uint(*e, "mu_points");
    if (const Entry* e = get("sweep", "mu_log")) w.mu_log = detail::to_bool(*e, "mu_log");
    if (const Entry* e = get("sweep", "r_step"); e && !(*w.r_step > 0.0)) detail::fail(e->line, "r_step must be positive");

    // [optimize]
    auto& o = cfg.optimize;
    positive("optimize", "grid_step", o.grid_step);
    positive("optimize", "tolerance", o.tolerance);
    if (const Entry* e = get("optimize", "normalized")) o.normalized = detail::to_bool(*e, "normalized");
    if (const Entry* e = get("optimize", "n_channels")) o.n_channels = detail::to_uint(*e, "n_channels");

    // [calibration]
    auto& c = cfg.calibration;
    positive("calibration", "theta", c.theta);
    if (const Entry* e = get("calibration", "t_over_eta")) c.t_over_eta = detail::to_double(*e, "t_over_eta");
    if (const Entry* e = get("calibration", "ratio_stat")) c.ratio_stat = detail::to_double(*e, "ratio_stat");
    num("calibration", "t_over_eta_sigma", c.t_over_eta_sigma);
    num("calibration", "ratio_sigma", c.ratio_sigma);
    if (const Entry* e = get("calibration", "channels_csv")) c.channels_csv = e->value;
    if (const Entry* e = get("calibration", "first_k")) c.first_k = detail::to_uint(*e, "first_k");
    if (const Entry* e = get("calibration", "last_k")) c.last_k = detail::to_uint(*e, "last_k");

    // [postselect]
    if (const Entry* e = get("postselect", "rule")) cfg.postselect.rule = parse_rule(e->value, e->line);
    unit("postselect", "signal_transmission", cfg.postselect.signal_transmission);
    if (const Entry* e = get("postselect", "noise")) cfg.postselect_noise = detail::to_bool(*e, "noise");

    // [output]
    if (const Entry* e = get("output", "format")) cfg.output.format = parse_format(e->value, e->line);
    if (const Entry* e = get("output", "path")) cfg.output.path = e->value;
    if (const Entry* e = get("output", "reference_plane")) cfg.output.plane = parse_plane(e->value, e->line);

    return cfg;
}

inline RunConfig parse_config_string(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

/// Relative channels_csv paths are resolved against the config file's directory.
inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::config, "cannot open config file '" + path + "'");
    RunConfig cfg = parse_config(in);
    auto& csv = cfg.calibration.channels_csv;
    if (!csv.empty() && std::filesystem::path(csv).is_relative()) {
        csv = (std::filesystem::path(path).parent_path() / csv).string();
    }
    return cfg;
}

}  // namespace loopdet::cli
