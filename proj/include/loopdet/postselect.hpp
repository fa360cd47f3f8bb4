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

// Heralded postselection with perfectly correlated photon pairs: the loop
// detector measures one beam and the other beam is kept only when the herald
// outcome is accepted. Keeping n-photon pulses with probability P(accept | n)
// reshapes the kept beam's photon-number distribution.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopdet/core_model.hpp"
#include "loopdet/error.hpp"
#include "loopdet/mc_sim.hpp"
#include "loopdet/photon_stats.hpp"
#include "loopdet/random.hpp"

namespace loopdet {

enum class AcceptRule {
    exactly_one_click,   // exactly one channel fired
    at_least_one_click,  // any click
    first_channel_only,  // exactly one channel fired and it was channel 1
};

inline const char* to_string(AcceptRule rule) {
    switch (rule) {
        case AcceptRule::exactly_one_click: return "exactly-one";
        case AcceptRule::at_least_one_click: return "at-least-one";
        case AcceptRule::first_channel_only: return "first-channel";
    }
    return "?";
}

struct PostselectOptions {
    AcceptRule rule = AcceptRule::exactly_one_click;
    double signal_transmission = 1.0;  // collection efficiency of the kept beam
};

struct PostselectResult {
    std::optional<double> cm_in;   // kept beam without heralding
    std::optional<double> cm_out;  // kept beam after heralding
    std::optional<double> w_M;     // cm_out / cm_in
    double herald_rate = 0.0;
    std::vector<double> conditioned_pmf;  // photon number of the kept beam
};

/// P(accept | n photons enter the herald device), n = 0..n_max, from exact Fock statistics.
inline std::vector<double> accept_probabilities(AcceptRule rule, const ChannelProfile& herald, std::size_t n_max) {
    std::vector<double> out(n_max + 1, 0.0);
    if (rule == AcceptRule::first_channel_only) {
        const double miss = detail::miss_probability(herald);
        const double h1 = herald.h.empty() ? 0.0 : herald.h[0];
        for (std::size_t n = 1; n <= n_max; ++n) {
            out[n] = std::pow(miss + h1, static_cast<double>(n)) - std::pow(miss, static_cast<double>(n));
        }
        return out;
    }
    for (std::size_t n = 0; n <= n_max; ++n) {
        const auto d = fock_click_distribution(n, herald);
        out[n] = rule == AcceptRule::exactly_one_click ? d.p1() : 1.0 - d.p0();
    }
    return out;
}

namespace detail {

inline std::optional<double> pmf_multi_content(std::span<const double> pmf) {
    double ge1 = 0.0;
    double ge2 = 0.0;
    for (std::size_t n = 1; n < pmf.size(); ++n) {
        ge1 += pmf[n];
        if (n >= 2) ge2 += pmf[n];
    }
    if (!(ge1 > 0.0)) return std::nullopt;
    return ge2 / ge1;
}

// Binomial loss on the kept beam.
inline std::vector<double> thin(std::span<const double> pmf, double transmission) {
    if (transmission >= 1.0) return {pmf.begin(), pmf.end()};
    std::vector<double> out(pmf.size(), 0.0);
    for (std::size_t n = 0; n < pmf.size(); ++n) {
        if (pmf[n] == 0.0) continue;
        for (std::size_t m = 0; m <= n; ++m) out[m] += pmf[n] * binomial_pmf(n, m, transmission);
    }
    return out;
}

}  // namespace detail

/// Core of the postselection: pmf(n) weighted by P(accept | n). `accept` must
/// cover at least the support of `pmf`.
inline PostselectResult postselect_with(std::span<const double> pmf, std::span<const double> accept,
                                        const PostselectOptions& opts) {
    detail::require_unit(opts.signal_transmission, "signal_transmission");
    if (accept.size() < pmf.size()) throw Error(Errc::parameter_domain, "acceptance table shorter than source pmf");

    PostselectResult res;
    std::vector<double> weighted(pmf.size(), 0.0);
    for (std::size_t n = 0; n < pmf.size(); ++n) {
        weighted[n] = pmf[n] * accept[n];
        res.herald_rate += weighted[n];
    }
    if (!(res.herald_rate > 0.0)) throw Error(Errc::no_acceptance, "herald never accepts");
    for (double& v : weighted) v /= res.herald_rate;

    res.conditioned_pmf = detail::thin(weighted, opts.signal_transmission);
    res.cm_in = detail::pmf_multi_content(detail::thin(pmf, opts.signal_transmission));
    res.cm_out = detail::pmf_multi_content(res.conditioned_pmf);
    if (res.cm_in && res.cm_out && *res.cm_in > 0.0) res.w_M = *res.cm_out / *res.cm_in;
    return res;
}

/// Noise-free postselection with the herald device described by its channel profile.
inline PostselectResult postselect(const PhotonSource& source, const ChannelProfile& herald,
                                   const PostselectOptions& opts = {}) {
    const auto pmf = source_pmf(source);
    const auto accept = accept_probabilities(opts.rule, herald, pmf.size() - 1);
    return postselect_with(pmf, accept, opts);
}

/// P(accept | n) estimated by simulating the herald device with its dark
/// counts and afterpulses, config.n_trials pulses per photon number. Each n
/// uses its own seed derived from config.seed.
inline std::vector<double> simulated_accept_probabilities(AcceptRule rule, const DeviceParams& params,
                                                          std::size_t n_max, const SimConfig& config) {
    std::vector<double> out(n_max + 1, 0.0);
    for (std::size_t n = 0; n <= n_max; ++n) {
        SimConfig per_n = config;
        std::uint64_t mix = config.seed ^ (0xA5A5A5A5ull + n);
        per_n.seed = splitmix64(mix);
        const auto run = run_simulation(Fock{n}, params, per_n);
        const double trials = static_cast<double>(run.clicks.n_trials);
        switch (rule) {
            case AcceptRule::exactly_one_click:
                out[n] = static_cast<double>(run.clicks.counts[1]) / trials;
                break;
            case AcceptRule::at_least_one_click:
                out[n] = 1.0 - static_cast<double>(run.clicks.counts[0]) / trials;
                break;
            case AcceptRule::first_channel_only:
                out[n] = static_cast<double>(run.only_first_channel) / trials;
                break;
        }
    }
    return out;
}

/// Postselection with a noisy herald, acceptance estimated by Monte Carlo.
inline PostselectResult postselect_simulated(const PhotonSource& source, const DeviceParams& params,
                                             const SimConfig& config, const PostselectOptions& opts = {}) {
    const auto pmf = source_pmf(source);
    const auto accept = simulated_accept_probabilities(opts.rule, params, pmf.size() - 1, config);
    return postselect_with(pmf, accept, opts);
}

struct WmPoint {
    double mu = 0.0;
    std::optional<PostselectResult> result;
    std::string error;  // set when result is empty
    Errc error_code = Errc::no_acceptance;
};

/// Poissonian pair source of mean mu heralded by the device counting
/// n_channels channels. At the detected plane the herald is the normalized
/// profile with ideal efficiency and the source mean becomes mu T.
inline std::vector<WmPoint> wm_curve(std::span<const double> mu_grid, const DeviceParams& params,
                                     std::size_t n_channels, const PostselectOptions& opts = {},
                                     ReferencePlane plane = ReferencePlane::input) {
    if (mu_grid.empty()) throw Error(Errc::parameter_domain, "empty mu grid");
    const ChannelProfile full = channel_transmissions(params, n_channels);
    const double total = full.total();
    const ChannelProfile herald = plane == ReferencePlane::input ? full : normalized_channels(full);
    const double scale = plane == ReferencePlane::input ? 1.0 : total;

    std::size_t n_max = 0;
    for (double mu : mu_grid) {
        if (mu >= 0.0 && std::isfinite(mu)) n_max = std::max(n_max, poisson_cutoff(mu * scale));
    }
    const auto accept = accept_probabilities(opts.rule, herald, n_max);

    std::vector<WmPoint> out;
    out.reserve(mu_grid.size());
    for (double mu : mu_grid) {
        WmPoint point;
        point.mu = mu;
        try {
            const auto pmf = source_pmf(Poissonian{mu * scale});
            point.result = postselect_with(pmf, accept, opts);
        } catch (const Error& e) {
            point.error = e.what();
            point.error_code = e.code();
        }
        out.push_back(std::move(point));
    }
    return out;
}

}  // namespace loopdet
