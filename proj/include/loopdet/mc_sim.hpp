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

// Pulse-by-pulse Monte Carlo of the physical device. Photons are routed pass by
// pass through the coupler and loop (the analytic channel transmissions are not
// used here), then the click detector applies its dead time, dark counts and
// afterpulses. Clicks are registered by a time-of-flight histogram.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <queue>
#include <span>
#include <thread>
#include <vector>

#include "loopdet/core_model.hpp"
#include "loopdet/error.hpp"
#include "loopdet/photon_stats.hpp"
#include "loopdet/random.hpp"

namespace loopdet {

struct SimConfig {
    std::uint64_t seed = 0;
    std::size_t n_trials = 100000;
    std::size_t n_bins = 1024;
    double first_peak_ns = 100.0;    // arrival time of channel 1 after the start pulse
    std::size_t n_channels = 15;     // channel windows used to classify clicks
    unsigned workers = 1;
    bool chain_afterpulses = false;  // whether afterpulses can trigger afterpulses
    std::size_t max_loop_passes = 100000;
};

enum class ClickOrigin : std::uint8_t { photon, dark, afterpulse };

/// Registered clicks of one pulse, sorted by time.
struct PulseOutcome {
    std::vector<double> click_times_ns;
    std::vector<int> click_channels;  // 0 for dark counts and afterpulses
    std::vector<ClickOrigin> click_origins;
    std::size_t n_photons_generated = 0;
};

/// Inverse-CDF sampler over a photon-number pmf.
class PhotonNumberSampler {
public:
    explicit PhotonNumberSampler(const PhotonSource& source) : cdf_(source_pmf(source)) {
        double acc = 0.0;
        for (double& v : cdf_) {
            acc += v;
            v = acc;
        }
        for (double& v : cdf_) v /= acc;
    }

    std::size_t operator()(Stream& rng) const {
        const double u = rng.uniform();
        const auto it = std::upper_bound(cdf_.begin(), cdf_.end(), u);
        return std::min(static_cast<std::size_t>(it - cdf_.begin()), cdf_.size() - 1);
    }

private:
    std::vector<double> cdf_;
};

namespace detail {

inline void validate_simulation(const DeviceParams& params, const SimConfig& config) {
    validate(params);
    const FullCoupler c = to_full(params.coupler);
    if (c.t13 + c.t14 > 1.0 + 1e-12 || c.t23 + c.t24 > 1.0 + 1e-12) {
        throw Error(Errc::parameter_domain, "coupler outputs exceed unit transmission; cannot route photons");
    }
    if (config.n_bins == 0) throw Error(Errc::parameter_domain, "n_bins must be positive");
    if (config.n_channels == 0) throw Error(Errc::parameter_domain, "n_channels must be positive");
    if (!(config.first_peak_ns >= 0.0)) throw Error(Errc::parameter_domain, "first_peak_ns must be non-negative");
}

// Channel index (1-based) where the photon is detected, or 0 if it is lost.
inline std::size_t route_photon(const DeviceParams& p, const FullCoupler& c, std::size_t max_passes, Stream& rng) {
    if (!rng.bernoulli(p.t0) || !rng.bernoulli(p.theta)) return 0;
    double u = rng.uniform();
    if (u < c.t13) return rng.bernoulli(p.eta) ? 1 : 0;
    if (u >= c.t13 + c.t14) return 0;
    for (std::size_t k = 2; k <= max_passes + 1; ++k) {
        if (!rng.bernoulli(p.tl) || !rng.bernoulli(p.theta)) return 0;
        u = rng.uniform();
        if (u < c.t23) return rng.bernoulli(p.eta) ? k : 0;
        if (u >= c.t23 + c.t24) return 0;
    }
    return 0;
}

struct PendingClick {
    double time;
    int channel;
    ClickOrigin origin;

    bool operator>(const PendingClick& o) const {
        return time != o.time ? time > o.time : channel > o.channel;
    }
};

}  // namespace detail

inline double window_length_ns(const DeviceParams& params, const SimConfig& config) {
    return static_cast<double>(config.n_bins) * params.bin_width_ns;
}

/// Nominal arrival time of channel k (1-based).
inline double channel_time_ns(const DeviceParams& params, const SimConfig& config, std::size_t k) {
    return config.first_peak_ns + static_cast<double>(k - 1) * params.loop_delay_ns;
}

/// Simulates pulse number `trial`. Draws come from streams keyed by
/// (config.seed, trial), so the result depends on nothing else.
inline PulseOutcome simulate_pulse(const PhotonNumberSampler& sampler, const DeviceParams& params,
                                   const SimConfig& config, std::uint64_t trial) {
    const FullCoupler coupler = to_full(params.coupler);
    Stream photons(config.seed, trial, StreamPurpose::photons);

    PulseOutcome out;
    out.n_photons_generated = sampler(photons);

    std::vector<std::size_t> hit_channels;
    for (std::size_t i = 0; i < out.n_photons_generated; ++i) {
        const std::size_t k = detail::route_photon(params, coupler, config.max_loop_passes, photons);
        if (k > 0) hit_channels.push_back(k);
    }
    std::sort(hit_channels.begin(), hit_channels.end());
    hit_channels.erase(std::unique(hit_channels.begin(), hit_channels.end()), hit_channels.end());

    std::priority_queue<detail::PendingClick, std::vector<detail::PendingClick>, std::greater<>> pending;
    for (std::size_t k : hit_channels) {
        pending.push({channel_time_ns(params, config, k), static_cast<int>(k), ClickOrigin::photon});
    }

    if (params.dark_prob_per_bin > 0.0) {
        Stream dark(config.seed, trial, StreamPurpose::dark_counts);
        const double log_miss = std::log1p(-params.dark_prob_per_bin);
        // Gaps between dark bins are geometric.
        double bin = -1.0;
        while (true) {
            bin += 1.0 + std::floor(std::log1p(-dark.uniform()) / log_miss);
            if (bin >= static_cast<double>(config.n_bins)) break;
            pending.push({(bin + dark.uniform()) * params.bin_width_ns, 0, ClickOrigin::dark});
        }
    }

    Stream after(config.seed, trial, StreamPurpose::afterpulses);
    double last_click = -std::numeric_limits<double>::infinity();
    while (!pending.empty()) {
        const detail::PendingClick click = pending.top();
        pending.pop();
        if (click.time - last_click < params.dead_time_ns) continue;  // detector still blind
        last_click = click.time;
        out.click_times_ns.push_back(click.time);
        out.click_channels.push_back(click.channel);
        out.click_origins.push_back(click.origin);

        const bool can_afterpulse = click.origin != ClickOrigin::afterpulse || config.chain_afterpulses;
        if (can_afterpulse && params.afterpulse_prob > 0.0 && after.bernoulli(params.afterpulse_prob)) {
            const double delay = after.exponential(params.afterpulse_decay_ns);
            // Carriers released while the diode is still quenched do not fire it.
            if (delay >= params.dead_time_ns) pending.push({click.time + delay, 0, ClickOrigin::afterpulse});
        }
    }
    return out;
}

inline PulseOutcome simulate_pulse(const PhotonSource& source, const DeviceParams& params, const SimConfig& config,
                                   std::uint64_t trial) {
    detail::validate_simulation(params, config);
    return simulate_pulse(PhotonNumberSampler(source), params, config, trial);
}

/// Click counts per time bin, summed over trials.
struct TofHistogram {
    double bin_width_ns = 5.0;
    std::vector<std::uint64_t> counts;
    std::uint64_t n_trials = 0;
    std::uint64_t overflow = 0;  // clicks later than the last bin

    TofHistogram() = default;
    TofHistogram(double bin_width, std::size_t n_bins) : bin_width_ns(bin_width), counts(n_bins, 0) {}

    std::size_t n_bins() const noexcept { return counts.size(); }
    double time_ns(std::size_t bin) const noexcept { return static_cast<double>(bin) * bin_width_ns; }
    double probability(std::size_t bin) const noexcept {
        return n_trials == 0 ? 0.0 : static_cast<double>(counts[bin]) / static_cast<double>(n_trials);
    }

    void add_click(double t_ns) {
        const double idx = std::floor(t_ns / bin_width_ns);
        if (idx >= 0.0 && idx < static_cast<double>(counts.size())) {
            ++counts[static_cast<std::size_t>(idx)];
        } else {
            ++overflow;
        }
    }

    void add(const PulseOutcome& outcome) {
        ++n_trials;
        for (double t : outcome.click_times_ns) add_click(t);
    }

    void merge(const TofHistogram& other) {
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
        n_trials += other.n_trials;
        overflow += other.overflow;
    }
};

inline TofHistogram accumulate_histogram(std::span<const PulseOutcome> outcomes, const DeviceParams& params,
                                         const SimConfig& config) {
    TofHistogram hist(params.bin_width_ns, config.n_bins);
    for (const auto& o : outcomes) hist.add(o);
    return hist;
}

/// Acceptance windows for classifying clicks into channels: width q times the
/// channel period, centered on each nominal channel arrival.
struct ChannelWindows {
    double first_peak_ns = 100.0;
    double period_ns = 60.0;
    double half_width_ns = 5.1;
    std::size_t n_channels = 15;

    static ChannelWindows from(const DeviceParams& params, const SimConfig& config) {
        return {config.first_peak_ns, params.loop_delay_ns, 0.5 * params.duty_factor_q * params.loop_delay_ns,
                config.n_channels};
    }

    /// 1-based channel whose window contains t, or 0.
    std::size_t channel_of(double t_ns) const {
        const double pos = (t_ns - first_peak_ns) / period_ns;
        const double k = std::round(pos);
        if (k < 0.0 || k >= static_cast<double>(n_channels)) return 0;
        const double center = first_peak_ns + k * period_ns;
        if (t_ns < center - half_width_ns || t_ns >= center + half_width_ns) return 0;
        return static_cast<std::size_t>(k) + 1;
    }

    /// Distinct channels that clicked during one pulse, ascending.
    std::vector<std::size_t> clicked_channels(const PulseOutcome& outcome) const {
        std::vector<std::size_t> out;
        for (double t : outcome.click_times_ns) {
            const std::size_t k = channel_of(t);
            if (k > 0) out.push_back(k);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        return out;
    }
};

/// Empirical click-number distribution with binomial standard errors.
struct EmpiricalClickDistribution {
    std::vector<std::uint64_t> counts;  // pulses with exactly m channel clicks
    std::uint64_t n_trials = 0;

    ClickDistribution distribution() const {
        ClickDistribution d;
        d.p_click.resize(counts.size(), 0.0);
        for (std::size_t m = 0; m < counts.size(); ++m) {
            d.p_click[m] = n_trials == 0 ? 0.0 : static_cast<double>(counts[m]) / static_cast<double>(n_trials);
        }
        return d;
    }

    static double binomial_se(double p, std::uint64_t n) {
        return n == 0 ? 0.0 : std::sqrt(p * (1.0 - p) / static_cast<double>(n));
    }

    double p0() const { return distribution().p0(); }
    double p1() const { return distribution().p1(); }
    double pM() const { return distribution().pM(); }
    double p0_se() const { return binomial_se(p0(), n_trials); }
    double p1_se() const { return binomial_se(p1(), n_trials); }
    double pM_se() const { return binomial_se(pM(), n_trials); }

    double multi_photon_content() const { return loopdet::multi_photon_content(distribution()); }

    /// c_M is a binomial proportion among the non-vacuum pulses.
    double multi_photon_content_se() const {
        const auto nonvac = static_cast<std::uint64_t>(std::llround((p1() + pM()) * static_cast<double>(n_trials)));
        return binomial_se(multi_photon_content(), nonvac);
    }

    void add(std::size_t n_clicked) { ++counts[std::min(n_clicked, counts.size() - 1)]; ++n_trials; }

    void merge(const EmpiricalClickDistribution& other) {
        for (std::size_t m = 0; m < counts.size(); ++m) counts[m] += other.counts[m];
        n_trials += other.n_trials;
    }
};

inline EmpiricalClickDistribution empirical_click_distribution(std::span<const PulseOutcome> outcomes,
                                                               const ChannelWindows& windows) {
    EmpiricalClickDistribution out;
    out.counts.assign(windows.n_channels + 1, 0);
    for (const auto& o : outcomes) out.add(windows.clicked_channels(o).size());
    return out;
}

/// Upper bounds on false multichannel detections caused by afterpulses: an
/// afterpulse lands in another channel's window with probability at most
/// p_ap q.
struct FalseDetectionBound {
    double cm_bound = 0.0;  // p_ap q, bound on the c_M excess
    double pM_bound = 0.0;  // p_1 p_ap q, bound on the false p_M
};

inline FalseDetectionBound false_cm_bound(double afterpulse_prob, double duty_factor_q, double p1) {
    detail::require_unit(afterpulse_prob, "afterpulse_prob");
    detail::require_unit(duty_factor_q, "duty_factor_q");
    detail::require_unit(p1, "p1");
    const double cm = afterpulse_prob * duty_factor_q;
    return {cm, p1 * cm};
}

inline FalseDetectionBound false_cm_bound(const DeviceParams& params, double p1) {
    validate(params);
    return false_cm_bound(params.afterpulse_prob, params.duty_factor_q, p1);
}

/// Everything a run accumulates. All fields merge commutatively, so the result
/// is independent of the worker count.
struct SimulationResult {
    TofHistogram histogram;
    TofHistogram afterpulse_histogram;  // afterpulse clicks only
    TofHistogram dark_histogram;        // dark clicks only
    EmpiricalClickDistribution clicks;
    std::vector<std::uint64_t> channel_clicks;  // pulses with a click in window k (index k-1)
    std::uint64_t consecutive_double_clicks = 0;  // pulses with clicks in two adjacent channel windows
    std::uint64_t only_first_channel = 0;         // pulses whose single click is in channel 1
    std::uint64_t photons_generated = 0;
    double min_click_separation_ns = std::numeric_limits<double>::infinity();

    void merge(const SimulationResult& other) {
        histogram.merge(other.histogram);
        afterpulse_histogram.merge(other.afterpulse_histogram);
        dark_histogram.merge(other.dark_histogram);
        clicks.merge(other.clicks);
        for (std::size_t k = 0; k < channel_clicks.size(); ++k) channel_clicks[k] += other.channel_clicks[k];
        consecutive_double_clicks += other.consecutive_double_clicks;
        only_first_channel += other.only_first_channel;
        photons_generated += other.photons_generated;
        min_click_separation_ns = std::min(min_click_separation_ns, other.min_click_separation_ns);
    }
};

namespace detail {

inline SimulationResult empty_result(const DeviceParams& params, const SimConfig& config) {
    SimulationResult r;
    r.histogram = TofHistogram(params.bin_width_ns, config.n_bins);
    r.afterpulse_histogram = TofHistogram(params.bin_width_ns, config.n_bins);
    r.dark_histogram = TofHistogram(params.bin_width_ns, config.n_bins);
    r.clicks.counts.assign(config.n_channels + 1, 0);
    r.channel_clicks.assign(config.n_channels, 0);
    return r;
}

inline void record(SimulationResult& r, const PulseOutcome& o, const ChannelWindows& windows) {
    r.histogram.add(o);
    ++r.afterpulse_histogram.n_trials;
    ++r.dark_histogram.n_trials;
    for (std::size_t i = 0; i < o.click_times_ns.size(); ++i) {
        if (o.click_origins[i] == ClickOrigin::afterpulse) r.afterpulse_histogram.add_click(o.click_times_ns[i]);
        if (o.click_origins[i] == ClickOrigin::dark) r.dark_histogram.add_click(o.click_times_ns[i]);
        if (i > 0) {
            r.min_click_separation_ns =
                std::min(r.min_click_separation_ns, o.click_times_ns[i] - o.click_times_ns[i - 1]);
        }
    }
    const auto clicked = windows.clicked_channels(o);
    r.clicks.add(clicked.size());
    if (clicked.size() == 1 && clicked[0] == 1) ++r.only_first_channel;
    for (std::size_t i = 0; i < clicked.size(); ++i) {
        ++r.channel_clicks[clicked[i] - 1];
    }
    for (std::size_t i = 1; i < clicked.size(); ++i) {
        if (clicked[i] == clicked[i - 1] + 1) {
            ++r.consecutive_double_clicks;
            break;
        }
    }
    r.photons_generated += o.n_photons_generated;
}

}  // namespace detail

/// Runs config.n_trials pulses on config.workers threads. Trial i always uses
/// the streams keyed by (seed, i).
inline SimulationResult run_simulation(const PhotonSource& source, const DeviceParams& params,
                                       const SimConfig& config) {
    detail::validate_simulation(params, config);
    const PhotonNumberSampler sampler(source);
    const ChannelWindows windows = ChannelWindows::from(params, config);

    const unsigned workers = std::max(1u, config.workers);
    std::vector<SimulationResult> partial(workers, detail::empty_result(params, config));
    auto work = [&](unsigned w) {
        const std::size_t begin = config.n_trials * w / workers;
        const std::size_t end = config.n_trials * (w + 1) / workers;
        for (std::size_t t = begin; t < end; ++t) {
            detail::record(partial[w], simulate_pulse(sampler, params, config, t), windows);
        }
    };

    if (workers == 1) {
        work(0);
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(workers);
        for (unsigned w = 0; w < workers; ++w) threads.emplace_back(work, w);
    }

    SimulationResult total = detail::empty_result(params, config);
    for (const auto& p : partial) total.merge(p);
    return total;
}

/// Keeps every pulse outcome; meant for small runs and inspection.
inline std::vector<PulseOutcome> simulate_outcomes(const PhotonSource& source, const DeviceParams& params,
                                                   const SimConfig& config) {
    detail::validate_simulation(params, config);
    const PhotonNumberSampler sampler(source);
    std::vector<PulseOutcome> out;
    out.reserve(config.n_trials);
    for (std::size_t t = 0; t < config.n_trials; ++t) out.push_back(simulate_pulse(sampler, params, config, t));
    return out;
}

}  // namespace loopdet
