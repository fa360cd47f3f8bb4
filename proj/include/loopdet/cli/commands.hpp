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

// One function per CLI subcommand. Each turns a RunConfig into a Report: a
// table for CSV/JSON output plus metadata that only the JSON form carries.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <fmt/format.h>

#include "json.hpp"
#include "loopdet/calibration.hpp"
#include "loopdet/cli/config.hpp"
#include "loopdet/core_model.hpp"
#include "loopdet/entropy_opt.hpp"
#include "loopdet/error.hpp"
#include "loopdet/mc_sim.hpp"
#include "loopdet/photon_stats.hpp"
#include "loopdet/postselect.hpp"

namespace loopdet::cli {

using Cell = std::variant<std::monostate, double, std::int64_t, std::string>;

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<Cell>> rows;
};

struct Report {
    Table table;
    nlohmann::ordered_json meta = nlohmann::ordered_json::object();
    std::vector<std::string> notes;  // human-readable summary lines
};

enum ExitCode : int { kOk = 0, kConfigError = 2, kDomainError = 3, kDataError = 4 };

inline int exit_code_for(Errc code) {
    switch (code) {
        case Errc::config: return kConfigError;
        case Errc::insufficient_data:
        case Errc::malformed_data:
        case Errc::inconsistent_measurement: return kDataError;
        default: return kDomainError;
    }
}

inline std::string format_cell(const Cell& cell) {
    return std::visit(
        [](const auto& v) -> std::string {
            using T = std::decay_t<decltype(v)>;
            if constexpr (std::is_same_v<T, std::monostate>) {
                return {};
            } else if constexpr (std::is_same_v<T, std::string>) {
                return v;
            } else {
                return fmt::format("{}", v);
            }
        },
        cell);
}

inline void write_csv(const Table& table, std::ostream& out) {
    for (std::size_t i = 0; i < table.columns.size(); ++i) out << (i ? "," : "") << table.columns[i];
    out << '\n';
    for (const auto& row : table.rows) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << format_cell(row[i]);
        out << '\n';
    }
}

inline void write_json(const Report& report, std::ostream& out) {
    nlohmann::ordered_json doc;
    doc["meta"] = report.meta;
    auto rows = nlohmann::ordered_json::array();
    for (const auto& row : report.table.rows) {
        nlohmann::ordered_json obj;
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::visit(
                [&](const auto& v) {
                    using T = std::decay_t<decltype(v)>;
                    if constexpr (std::is_same_v<T, std::monostate>) {
                        obj[report.table.columns[i]] = nullptr;
                    } else {
                        obj[report.table.columns[i]] = v;
                    }
                },
                row[i]);
        }
        rows.push_back(std::move(obj));
    }
    doc["rows"] = std::move(rows);
    out << doc.dump(2) << '\n';
}

inline void write_report(const Report& report, OutputFormat format, std::ostream& out) {
    if (format == OutputFormat::json) {
        write_json(report, out);
    } else {
        write_csv(report.table, out);
    }
}

inline nlohmann::ordered_json to_json(const DeviceParams& p) {
    nlohmann::ordered_json j;
    j["t0"] = p.t0;
    j["theta"] = p.theta;
    j["tl"] = p.tl;
    j["eta"] = p.eta;
    if (const auto* ideal = std::get_if<IdealCoupler>(&p.coupler)) {
        j["r"] = ideal->r;
    } else {
        const auto& c = std::get<FullCoupler>(p.coupler);
        j["t13"] = c.t13;
        j["t14"] = c.t14;
        j["t23"] = c.t23;
        j["t24"] = c.t24;
    }
    j["dark_prob_per_bin"] = p.dark_prob_per_bin;
    j["afterpulse_prob"] = p.afterpulse_prob;
    j["afterpulse_decay_ns"] = p.afterpulse_decay_ns;
    j["dead_time_ns"] = p.dead_time_ns;
    j["loop_delay_ns"] = p.loop_delay_ns;
    j["bin_width_ns"] = p.bin_width_ns;
    j["duty_factor_q"] = p.duty_factor_q;
    return j;
}

/// Explicit mu list, else a log or linear grid, else `fallback`.
inline std::vector<double> mu_grid(const SweepConfig& sweep, std::vector<double> fallback = {}) {
    if (!sweep.mu.empty()) return sweep.mu;
    if (sweep.mu_min && sweep.mu_max && sweep.mu_points) {
        const std::size_t n = *sweep.mu_points;
        std::vector<double> out;
        for (std::size_t i = 0; i < n; ++i) {
            const double f = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.0;
            if (sweep.mu_log) {
                if (!(*sweep.mu_min > 0.0)) throw Error(Errc::config, "log mu grid needs mu_min > 0");
                out.push_back(std::exp(std::log(*sweep.mu_min) + f * (std::log(*sweep.mu_max) - std::log(*sweep.mu_min))));
            } else {
                out.push_back(*sweep.mu_min + f * (*sweep.mu_max - *sweep.mu_min));
            }
        }
        return out;
    }
    return fallback;
}

inline std::vector<double> default_mu_grid() {
    SweepConfig s;
    s.mu_min = 1e-3;
    s.mu_max = 10.0;
    s.mu_points = 41;
    return mu_grid(s);
}

/// Channel transmissions and normalized shares, optionally swept over r.
inline Report cmd_channels(const RunConfig& cfg) {
    Report rep;
    rep.table.columns = {"r", "k", "h_k", "H_k"};
    std::vector<std::optional<double>> ratios;
    if (cfg.sweep.r_step) {
        const double lo = cfg.sweep.r_min.value_or(0.0);
        const double hi = cfg.sweep.r_max.value_or(1.0);
        const auto n = static_cast<std::size_t>(std::floor((hi - lo) / *cfg.sweep.r_step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) ratios.emplace_back(lo + static_cast<double>(i) * *cfg.sweep.r_step);
    } else if (const auto* ideal = std::get_if<IdealCoupler>(&cfg.device.coupler)) {
        ratios.emplace_back(ideal->r);
    } else {
        ratios.emplace_back(std::nullopt);
    }

    for (const auto& r : ratios) {
        const DeviceParams params = r ? with_ratio(cfg.device, *r) : cfg.device;
        const auto profile = channel_transmissions(params, cfg.n_channels);
        const auto shares = normalized_channels(profile);
        const Cell r_cell = r ? Cell{*r} : Cell{};
        for (std::size_t k = 0; k < profile.n_channels(); ++k) {
            rep.table.rows.push_back({r_cell, static_cast<std::int64_t>(k + 1), profile.h[k], shares.h[k]});
        }
        rep.table.rows.push_back({r_cell, std::string("tail"), profile.remainder, shares.remainder});
    }
    rep.meta["command"] = "channels";
    rep.meta["n_channels"] = cfg.n_channels;
    rep.meta["device"] = to_json(cfg.device);
    return rep;
}

/// Entropy scan over r and the refined maximizer.
inline Report cmd_optimize(const RunConfig& cfg) {
    const auto scan = optimize_ratio(cfg.device, cfg.optimize);
    Report rep;
    rep.table.columns = {"r", "entropy"};
    for (std::size_t i = 0; i < scan.r_grid.size(); ++i) rep.table.rows.push_back({scan.r_grid[i], scan.entropy[i]});
    rep.meta["command"] = "optimize";
    rep.meta["r_star"] = scan.r_star;
    rep.meta["e_star"] = scan.e_star;
    rep.meta["entropy_convention"] = scan.normalized ? "normalized" : "raw";
    rep.meta["n_channels"] = scan.n_channels;
    rep.meta["device"] = to_json(cfg.device);
    rep.notes.push_back(fmt::format("r_star={} e_star={} convention={}", scan.r_star, scan.e_star,
                                    scan.normalized ? "normalized" : "raw"));
    return rep;
}

/// Device multi-photon content against the source's, over a mu grid.
inline Report cmd_cm_curve(const RunConfig& cfg) {
    const auto grid = mu_grid(cfg.sweep, default_mu_grid());
    const auto profile = channel_transmissions(cfg.device, cfg.n_channels);
    const double total = total_transmission(cfg.device);

    Report rep;
    rep.table.columns = {"mu", "cm_device", "cm_source", "ratio"};
    for (double mu : grid) {
        std::vector<Cell> row{mu, Cell{}, Cell{}, Cell{}};
        try {
            const double dev = multi_photon_content(poisson_click_distribution(mu, profile));
            const double src = reference_multi_photon_content(mu, total, cfg.output.plane);
            row = {mu, dev, src, dev / src};
        } catch (const Error&) {
            // undefined at mu = 0; left as a gap
        }
        rep.table.rows.push_back(std::move(row));
    }
    rep.meta["command"] = "cm-curve";
    rep.meta["reference_plane"] = to_string(cfg.output.plane);
    rep.meta["total_transmission"] = total;
    rep.meta["n_channels"] = cfg.n_channels;
    rep.meta["device"] = to_json(cfg.device);
    return rep;
}

inline nlohmann::ordered_json to_json(const PhotonSource& source) {
    nlohmann::ordered_json j;
    if (const auto* p = std::get_if<Poissonian>(&source)) {
        j["kind"] = "poisson";
        j["mu"] = p->mu;
    } else if (const auto* f = std::get_if<Fock>(&source)) {
        j["kind"] = "fock";
        j["n"] = f->n;
    } else {
        j["kind"] = "custom";
        j["pmf"] = std::get<CustomPmf>(source).pmf;
    }
    return j;
}

/// Monte Carlo time-of-flight histogram. Requires an explicit seed.
inline Report cmd_simulate_tof(const RunConfig& cfg) {
    if (!cfg.seed_given) throw Error(Errc::config, "simulate-tof needs a seed ([simulation] seed or --seed)");
    const auto run = run_simulation(cfg.source, cfg.device, cfg.simulation);
    const auto& hist = run.histogram;

    Report rep;
    rep.table.columns = {"bin_index", "time_ns", "count", "probability"};
    for (std::size_t i = 0; i < hist.n_bins(); ++i) {
        rep.table.rows.push_back({static_cast<std::int64_t>(i), hist.time_ns(i), static_cast<std::int64_t>(hist.counts[i]),
                                  hist.probability(i)});
    }
    rep.meta["command"] = "simulate-tof";
    rep.meta["seed"] = cfg.simulation.seed;
    rep.meta["n_trials"] = hist.n_trials;
    rep.meta["n_bins"] = hist.n_bins();
    rep.meta["bin_width_ns"] = hist.bin_width_ns;
    rep.meta["first_peak_ns"] = cfg.simulation.first_peak_ns;
    rep.meta["overflow"] = hist.overflow;
    rep.meta["source"] = to_json(cfg.source);
    rep.meta["device"] = to_json(cfg.device);
    rep.meta["p0"] = run.clicks.p0();
    rep.meta["p1"] = run.clicks.p1();
    rep.meta["pM"] = run.clicks.pM();
    if (run.clicks.p1() + run.clicks.pM() > 0.0) rep.meta["c_M"] = run.clicks.multi_photon_content();
    rep.notes.push_back(fmt::format("trials={} p0={} p1={} pM={} overflow={}", hist.n_trials, run.clicks.p0(),
                                    run.clicks.p1(), run.clicks.pM(), hist.overflow));
    return rep;
}

/// Reads `k,H_k,sigma_k` rows (header required; sigma_k optional).
inline std::vector<ChannelMeasurement> read_channel_csv(std::istream& in) {
    std::vector<ChannelMeasurement> out;
    std::string line;
    int line_no = 0;
    bool header = true;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("k,H_k", 0) != 0) {
                throw Error(Errc::malformed_data, "line 1: expected header 'k,H_k,sigma_k'");
            }
            continue;
        }
        std::stringstream ss(line);
        std::string field;
        std::vector<std::string> fields;
        while (std::getline(ss, field, ',')) fields.push_back(detail::trim(field));
        if (fields.size() < 2 || fields.size() > 3) {
            throw Error(Errc::malformed_data, "line " + std::to_string(line_no) + ": expected 2 or 3 fields");
        }
        try {
            ChannelMeasurement m;
            std::size_t used = 0;
            const long k = std::stol(fields[0], &used);
            if (used != fields[0].size() || k < 1) throw std::invalid_argument("k");
            m.k = static_cast<std::size_t>(k);
            m.H = std::stod(fields[1], &used);
            if (used != fields[1].size()) throw std::invalid_argument("H");
            if (fields.size() == 3) {
                m.sigma = std::stod(fields[2], &used);
                if (used != fields[2].size()) throw std::invalid_argument("sigma");
            }
            out.push_back(m);
        } catch (const std::logic_error&) {
            throw Error(Errc::malformed_data, "line " + std::to_string(line_no) + ": unreadable number");
        }
    }
    return out;
}

/// Loss calibration from channel probabilities (CSV) or a reduced ratio statistic.
inline Report cmd_calibrate(const RunConfig& cfg) {
    const auto& c = cfg.calibration;
    if (!c.t_over_eta) throw Error(Errc::config, "calibrate needs t_over_eta");
    CalibrationResult res;
    if (!c.channels_csv.empty()) {
        std::ifstream in(c.channels_csv);
        if (!in) throw Error(Errc::malformed_data, "cannot open '" + c.channels_csv + "'");
        const auto channels = read_channel_csv(in);
        res = calibrate_from_channels(channels, *c.t_over_eta, c.theta, CalibrationOptions{c.first_k, c.last_k},
                                      c.t_over_eta_sigma);
    } else if (c.ratio_stat) {
        res = calibrate_from_ratio(*c.ratio_stat, *c.t_over_eta, c.theta, c.ratio_sigma, c.t_over_eta_sigma);
    } else {
        throw Error(Errc::config, "calibrate needs channels_csv or ratio_stat");
    }

    Report rep;
    rep.table.columns = {"quantity", "value", "uncertainty"};
    auto add = [&](std::string name, double value, Cell sigma = Cell{}) {
        rep.table.rows.push_back({std::move(name), value, std::move(sigma)});
    };
    add("ratio_stat", res.ratio_stat, res.ratio_stat_sigma);
    add("ratio_spread", res.ratio_spread);
    add("t_over_eta", res.t_over_eta, c.t_over_eta_sigma);
    add("theta", c.theta);
    add("tl_hat", res.tl_hat, res.tl_sigma);
    add("t0_hat", res.t0_hat, res.t0_sigma);
    add("tl_loss_db", loss_db(res.tl_hat));
    add("t0_loss_db", loss_db(res.t0_hat));
    if (res.first_order) {
        add("tl_first_order", res.first_order->tl, res.first_order->tl_sigma);
        add("t0_first_order", res.first_order->t0, res.first_order->t0_sigma);
    }
    if (res.refined) {
        add("r_exact", res.refined->r);
        add("geometric_ratio", res.refined->geometric_ratio);
    }
    for (std::size_t i = 0; i < res.ratios.size(); ++i) {
        add(fmt::format("ratio_k{}", res.ratio_k[i]), res.ratios[i]);
        add(fmt::format("residual_k{}", res.ratio_k[i]), res.residuals[i]);
    }
    rep.meta["command"] = "calibrate";
    rep.meta["method"] = to_string(res.method);
    rep.meta["warnings"] = res.warnings;
    for (const auto& w : res.warnings) rep.notes.push_back("warning: " + w);
    rep.notes.push_back(fmt::format("tl_hat={} t0_hat={} ({})", res.tl_hat, res.t0_hat, to_string(res.method)));
    return rep;
}

/// w_M curve of heralded postselection over the configured mu grid.
inline Report cmd_postselect(const RunConfig& cfg) {
    const auto grid = mu_grid(cfg.sweep);
    if (grid.empty()) throw Error(Errc::config, "postselect needs a mu grid ([sweep] mu or mu_min/mu_max/mu_points)");
    for (double mu : grid) {
        if (!(mu >= 0.0) || !std::isfinite(mu)) throw Error(Errc::config, fmt::format("mu grid entry {} is not a valid mean", mu));
    }

    std::vector<WmPoint> points;
    if (cfg.postselect_noise) {
        if (!cfg.seed_given) throw Error(Errc::config, "noisy postselect needs a seed");
        if (cfg.output.plane != ReferencePlane::input) {
            throw Error(Errc::config, "noisy postselect is only defined at the input plane");
        }
        std::size_t n_max = 0;
        for (double mu : grid) n_max = std::max(n_max, poisson_cutoff(mu));
        SimConfig sim = cfg.simulation;
        sim.n_channels = cfg.n_channels;
        const auto accept = simulated_accept_probabilities(cfg.postselect.rule, cfg.device, n_max, sim);
        for (double mu : grid) {
            WmPoint p;
            p.mu = mu;
            try {
                p.result = postselect_with(source_pmf(Poissonian{mu}), accept, cfg.postselect);
            } catch (const Error& e) {
                p.error = e.what();
                p.error_code = e.code();
            }
            points.push_back(std::move(p));
        }
    } else {
        points = wm_curve(grid, cfg.device, cfg.n_channels, cfg.postselect, cfg.output.plane);
    }

    Report rep;
    rep.table.columns = {"mu", "cm_in", "cm_out", "w_M", "herald_rate"};
    auto opt = [](const std::optional<double>& v) { return v ? Cell{*v} : Cell{}; };
    for (const auto& p : points) {
        if (p.result) {
            rep.table.rows.push_back({p.mu, opt(p.result->cm_in), opt(p.result->cm_out), opt(p.result->w_M),
                                      p.result->herald_rate});
        } else {
            const Cell rate = p.error_code == Errc::no_acceptance ? Cell{0.0} : Cell{};
            rep.table.rows.push_back({p.mu, Cell{}, Cell{}, Cell{}, rate});
            rep.notes.push_back(fmt::format("mu={}: {}", p.mu, p.error));
        }
    }
    rep.meta["command"] = "postselect";
    rep.meta["rule"] = to_string(cfg.postselect.rule);
    rep.meta["reference_plane"] = to_string(cfg.output.plane);
    rep.meta["signal_transmission"] = cfg.postselect.signal_transmission;
    rep.meta["noise"] = cfg.postselect_noise;
    rep.meta["n_channels"] = cfg.n_channels;
    rep.meta["device"] = to_json(cfg.device);
    return rep;
}

}  // namespace loopdet::cli
