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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "loopdet/core_model.hpp"
#include "loopdet/error.hpp"

namespace loopdet {

/// E = -sum_k h_k ln h_k over the listed channels, with 0 ln 0 = 0. Applied to
/// the raw transmissions by default, which do not sum to one in a lossy device;
/// `normalized` uses H_k = h_k / T instead.
inline double shannon_entropy(const ChannelProfile& profile, bool normalized = false) {
    const ChannelProfile& p = profile;
    const double scale = normalized ? p.total() : 1.0;
    if (normalized && !(scale > 0.0)) throw Error(Errc::degenerate_device, "total transmission is zero");
    double e = 0.0;
    for (double hk : p.h) {
        const double x = hk / scale;
        if (x > 0.0) e -= x * std::log(x);
    }
    return e;
}

/// Entropy of the lossless one-ratio device summed over all channels:
/// -2 r ln r - 2 (1 - r) ln(1 - r).
inline double ideal_entropy(double r) {
    detail::require_unit(r, "r");
    auto xlogx = [](double x) { return x > 0.0 ? x * std::log(x) : 0.0; };
    return -2.0 * xlogx(r) - 2.0 * xlogx(1.0 - r);
}

/// Golden-section search for the maximum of a unimodal f on [lo, hi].
/// Returns (x, f(x)) once the bracket is narrower than tol.
template <typename F>
std::pair<double, double> golden_section_maximize(F&& f, double lo, double hi, double tol) {
    static constexpr double kInvPhi = 0.6180339887498949;
    double a = lo;
    double b = hi;
    double x1 = b - kInvPhi * (b - a);
    double x2 = a + kInvPhi * (b - a);
    double f1 = f(x1);
    double f2 = f(x2);
    while (b - a > tol) {
        if (f1 < f2) {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + kInvPhi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - kInvPhi * (b - a);
            f1 = f(x1);
        }
    }
    return f1 >= f2 ? std::pair{x1, f1} : std::pair{x2, f2};
}

struct OptimizeOptions {
    std::size_t n_channels = 60;
    double grid_step = 1e-3;
    double tolerance = 1e-5;
    bool normalized = false;
    double r_min = 0.0;
    double r_max = 1.0;
};

struct EntropyScan {
    std::vector<double> r_grid;
    std::vector<double> entropy;
    double r_star = 0.0;
    double e_star = 0.0;
    bool normalized = false;
    std::size_t n_channels = 0;
};

/// Entropy of the device with its coupler replaced by an ideal one of ratio r.
inline double entropy_at_ratio(const DeviceParams& params, double r, std::size_t n_channels,
                               bool normalized = false) {
    const auto profile = channel_transmissions(with_ratio(params, r), n_channels);
    if (normalized && !(profile.total() > 0.0)) return 0.0;
    return shannon_entropy(profile, normalized);
}

/// Coarse scan over r followed by golden-section refinement around the best
/// grid point. The coupler setting of `params` is ignored; every other
/// coefficient is held fixed.
inline EntropyScan optimize_ratio(const DeviceParams& params, const OptimizeOptions& opts = {}) {
    validate(params);
    if (!(opts.grid_step > 0.0) || !(opts.tolerance > 0.0)) {
        throw Error(Errc::parameter_domain, "grid_step and tolerance must be positive");
    }
    detail::require_unit(opts.r_min, "r_min");
    detail::require_unit(opts.r_max, "r_max");
    if (!(opts.r_min < opts.r_max)) throw Error(Errc::parameter_domain, "r_min must be below r_max");

    EntropyScan scan;
    scan.normalized = opts.normalized;
    scan.n_channels = opts.n_channels;

    const auto n_steps = static_cast<std::size_t>(std::floor((opts.r_max - opts.r_min) / opts.grid_step + 1e-9));
    scan.r_grid.reserve(n_steps + 2);
    for (std::size_t i = 0; i <= n_steps; ++i) scan.r_grid.push_back(opts.r_min + static_cast<double>(i) * opts.grid_step);
    if (opts.r_max - scan.r_grid.back() > 1e-12) scan.r_grid.push_back(opts.r_max);

    auto objective = [&](double r) { return entropy_at_ratio(params, r, opts.n_channels, opts.normalized); };
    scan.entropy.reserve(scan.r_grid.size());
    for (double r : scan.r_grid) scan.entropy.push_back(objective(r));

    const auto [lo_it, hi_it] = std::minmax_element(scan.entropy.begin(), scan.entropy.end());
    if (*hi_it - *lo_it <= 1e-15 * (1.0 + std::abs(*hi_it))) {
        throw Error(Errc::no_maximum, "entropy is flat in r");
    }
    const auto best = static_cast<std::size_t>(hi_it - scan.entropy.begin());
    scan.r_star = scan.r_grid[best];
    scan.e_star = scan.entropy[best];

    const double lo = std::max(opts.r_min, scan.r_star - opts.grid_step);
    const double hi = std::min(opts.r_max, scan.r_star + opts.grid_step);
    const auto [r_ref, e_ref] = golden_section_maximize(objective, lo, hi, opts.tolerance);
    if (e_ref >= scan.e_star) {
        scan.r_star = r_ref;
        scan.e_star = e_ref;
    }
    return scan;
}

}  // namespace loopdet
