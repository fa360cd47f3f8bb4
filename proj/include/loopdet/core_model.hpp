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

// Intensity model of the coupler + fiber loop + click detector chain.
//
// A photon entering port 1 of the coupler either leaves through port 3 toward
// the detector on the first pass (channel 1) or enters the loop through port 4.
// Each loop round trip delays it by one channel period; on every return to the
// coupler (port 2) it leaves toward the detector through port 3 or circulates
// again through port 4. Losses: t0 at the input, theta per coupler pass, tl per
// loop round trip, eta from port 3 through detection.

#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "loopdet/error.hpp"

namespace loopdet {

/// Four intensity transmissions t_ij from coupler port i to port j. Unitarity
/// is not enforced; excess loss of a real coupler lives in theta anyway.
struct FullCoupler {
    double t13 = 0.5;
    double t14 = 0.5;
    double t23 = 0.5;
    double t24 = 0.5;
};

/// Lossless symmetric coupler described by one division ratio r.
struct IdealCoupler {
    double r = 0.5;
};

using CouplerSetting = std::variant<FullCoupler, IdealCoupler>;

/// t13 = t24 = r, t14 = t23 = 1 - r.
inline FullCoupler to_full(const CouplerSetting& setting) {
    if (const auto* ideal = std::get_if<IdealCoupler>(&setting)) {
        return FullCoupler{ideal->r, 1.0 - ideal->r, 1.0 - ideal->r, ideal->r};
    }
    return std::get<FullCoupler>(setting);
}

/// Physical coefficients of the loop detector. Defaults describe the
/// laboratory device: 60 % detector efficiency, 0.955 coupler excess
/// transmission, 0.94 loop and 0.92 input transmission, 2e-7 dark clicks per
/// 5 ns bin, 8e-3 afterpulse probability, 50 ns dead time, 60 ns loop delay and
/// a 0.17 channel duty factor.
struct DeviceParams {
    double t0 = 0.92;
    double theta = 0.955;
    double tl = 0.94;
    double eta = 0.6;
    CouplerSetting coupler = IdealCoupler{0.446};

    double dark_prob_per_bin = 2e-7;
    double afterpulse_prob = 8e-3;
    double afterpulse_decay_ns = 200.0;
    double dead_time_ns = 50.0;
    double loop_delay_ns = 60.0;
    double bin_width_ns = 5.0;
    double duty_factor_q = 0.17;
};

inline DeviceParams measured_device() { return DeviceParams{}; }

/// Everything transmits perfectly and the detector never misfires.
inline DeviceParams lossless_device(double r) {
    DeviceParams p;
    p.t0 = p.theta = p.tl = p.eta = 1.0;
    p.coupler = IdealCoupler{r};
    p.dark_prob_per_bin = 0.0;
    p.afterpulse_prob = 0.0;
    return p;
}

inline DeviceParams with_ratio(DeviceParams p, double r) {
    p.coupler = IdealCoupler{r};
    return p;
}

namespace detail {

inline void require_unit(double value, const char* name) {
    if (!(value >= 0.0 && value <= 1.0)) {
        throw Error(Errc::parameter_domain,
                    std::string(name) + " = " + std::to_string(value) + " is outside [0, 1]");
    }
}

inline void require_positive(double value, const char* name) {
    if (!(value > 0.0) || !std::isfinite(value)) {
        throw Error(Errc::parameter_domain,
                    std::string(name) + " = " + std::to_string(value) + " must be positive");
    }
}

// Loop gain at or above this is treated as a divergent channel series.
inline constexpr double kConvergenceGuard = 1.0 - 1e-9;

}  // namespace detail

inline void validate(const CouplerSetting& setting) {
    if (const auto* ideal = std::get_if<IdealCoupler>(&setting)) {
        detail::require_unit(ideal->r, "r");
        return;
    }
    const auto& c = std::get<FullCoupler>(setting);
    detail::require_unit(c.t13, "t13");
    detail::require_unit(c.t14, "t14");
    detail::require_unit(c.t23, "t23");
    detail::require_unit(c.t24, "t24");
}

/// Throws Errc::parameter_domain on the first out-of-range field.
inline void validate(const DeviceParams& p) {
    detail::require_unit(p.t0, "t0");
    detail::require_unit(p.theta, "theta");
    detail::require_unit(p.tl, "tl");
    detail::require_unit(p.eta, "eta");
    validate(p.coupler);
    detail::require_unit(p.dark_prob_per_bin, "dark_prob_per_bin");
    detail::require_unit(p.afterpulse_prob, "afterpulse_prob");
    detail::require_unit(p.duty_factor_q, "duty_factor_q");
    detail::require_positive(p.afterpulse_decay_ns, "afterpulse_decay_ns");
    detail::require_positive(p.dead_time_ns, "dead_time_ns");
    detail::require_positive(p.loop_delay_ns, "loop_delay_ns");
    detail::require_positive(p.bin_width_ns, "bin_width_ns");
    if (!(p.loop_delay_ns > p.dead_time_ns)) {
        throw Error(Errc::parameter_domain, "loop_delay_ns must exceed dead_time_ns");
    }
}

/// Per-channel detection transmissions h_1..h_N and the mass of all later
/// channels. For a single input photon h_k is the probability of a click in
/// channel k.
struct ChannelProfile {
    std::vector<double> h;
    double remainder = 0.0;

    std::size_t n_channels() const noexcept { return h.size(); }
    double captured() const noexcept { return std::accumulate(h.begin(), h.end(), 0.0); }
    double total() const noexcept { return captured() + remainder; }

    /// Profile restricted to the first n channels; the dropped ones move into the remainder.
    ChannelProfile first(std::size_t n) const {
        if (n >= h.size()) return *this;
        ChannelProfile out;
        out.h.assign(h.begin(), h.begin() + static_cast<std::ptrdiff_t>(n));
        out.remainder = remainder + std::accumulate(h.begin() + static_cast<std::ptrdiff_t>(n), h.end(), 0.0);
        return out;
    }
};

/// Round-trip gain theta*tl*t24 of a photon that stays in the loop. Channel
/// transmissions fall geometrically with this ratio from channel 2 on.
inline double loop_gain(const DeviceParams& p) {
    return p.theta * p.tl * to_full(p.coupler).t24;
}

namespace detail {

inline void require_convergent(const DeviceParams& p) {
    const FullCoupler c = to_full(p.coupler);
    // With t14*t23 = 0 nothing ever leaves the loop toward the detector, so the
    // series is identically zero past channel 1.
    if (c.t14 * c.t23 > 0.0 && loop_gain(p) >= kConvergenceGuard) {
        throw Error(Errc::divergent_series, "theta*tl*t24 must be below 1");
    }
}

}  // namespace detail

/// h_1 = t0 theta t13 eta; h_k = t0 t14 theta^k tl^(k-1) t23 t24^(k-2) eta.
inline ChannelProfile channel_transmissions(const DeviceParams& p, std::size_t n_channels = 30) {
    validate(p);
    if (n_channels < 1) throw Error(Errc::parameter_domain, "n_channels must be at least 1");
    detail::require_convergent(p);

    const FullCoupler c = to_full(p.coupler);
    const double gain = loop_gain(p);

    ChannelProfile out;
    out.h.reserve(n_channels);
    out.h.push_back(p.t0 * p.theta * c.t13 * p.eta);

    double hk = p.t0 * c.t14 * p.theta * p.theta * p.tl * c.t23 * p.eta;  // k = 2
    for (std::size_t k = 2; k <= n_channels; ++k) {
        out.h.push_back(hk);
        hk *= gain;
    }
    // hk is now h_{N+1}; the rest is a geometric series.
    out.remainder = (c.t14 * c.t23 > 0.0) ? hk / (1.0 - gain) : 0.0;
    return out;
}

/// Probability that a single input photon is detected at all, summed over
/// every channel in closed form.
inline double total_transmission(const DeviceParams& p) {
    validate(p);
    detail::require_convergent(p);
    const FullCoupler c = to_full(p.coupler);
    const double loop_part =
        (c.t14 * c.t23 > 0.0) ? c.t14 * c.t23 * p.tl * p.theta / (1.0 - loop_gain(p)) : 0.0;
    return p.eta * p.t0 * p.theta * (c.t13 + loop_part);
}

/// Total transmission for the one-ratio coupler with excess loss theta, as a
/// function of r. The t13/t24 coefficients of params.coupler are ignored.
inline double total_transmission_simplified(double r, const DeviceParams& p) {
    validate(p);
    detail::require_unit(r, "r");
    detail::require_positive(p.tl, "tl");
    const double x = p.tl * p.theta;
    if (r * x >= detail::kConvergenceGuard) {
        throw Error(Errc::divergent_series, "r*tl*theta must be below 1");
    }
    return p.eta * p.t0 * (2.0 * x - 1.0) / p.tl -
           p.eta * p.t0 * (x - 1.0) * (x - 1.0) / (p.tl * (r * x - 1.0));
}

/// Leading, r-independent term eta t0 (2 tl theta - 1) / tl of the simplified
/// total transmission. Calibration inverts this term.
inline double total_transmission_first_term(const DeviceParams& p) {
    validate(p);
    detail::require_positive(p.tl, "tl");
    return p.eta * p.t0 * (2.0 * p.tl * p.theta - 1.0) / p.tl;
}

/// H_k = h_k / T, with T including the remainder; the result sums to one.
inline ChannelProfile normalized_channels(const ChannelProfile& profile) {
    const double total = profile.total();
    if (!(total > 0.0)) throw Error(Errc::degenerate_device, "total transmission is zero");
    ChannelProfile out;
    out.h.reserve(profile.h.size());
    for (double hk : profile.h) out.h.push_back(hk / total);
    out.remainder = profile.remainder / total;
    return out;
}

/// H_{k+1} / (H_k H_1) for k = first_k..last_k (1-based, inclusive). last_k = 0
/// means "as far as the list allows".
inline std::vector<double> channel_ratios(std::span<const double> H, std::size_t first_k = 2,
                                          std::size_t last_k = 0) {
    if (first_k < 1) throw Error(Errc::parameter_domain, "first_k must be at least 1");
    if (H.size() < 3) throw Error(Errc::insufficient_data, "need at least 3 channels");
    const std::size_t max_k = H.size() - 1;
    if (last_k == 0 || last_k > max_k) last_k = max_k;
    if (first_k > last_k) throw Error(Errc::insufficient_data, "empty channel range");

    std::vector<double> out;
    for (std::size_t k = first_k; k <= last_k; ++k) {
        const double denom = H[k - 1] * H[0];
        if (!(denom > 0.0)) {
            throw Error(Errc::undefined_ratio, "zero channel probability at k = " + std::to_string(k));
        }
        out.push_back(H[k] / denom);
    }
    return out;
}

/// Mean of H_{k+1} / (H_k H_1) over the channel range. For the one-ratio model
/// this is close to 2 theta tl - 1 and almost independent of r.
inline double channel_ratio_statistic(std::span<const double> H, std::size_t first_k = 2,
                                      std::size_t last_k = 0) {
    const auto ratios = channel_ratios(H, first_k, last_k);
    return std::accumulate(ratios.begin(), ratios.end(), 0.0) / static_cast<double>(ratios.size());
}

/// Insertion loss in dB of an intensity transmission.
inline double loss_db(double transmission) { return -10.0 * std::log10(transmission); }

}  // namespace loopdet
