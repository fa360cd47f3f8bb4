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

// Inversion of the loss model. With the coupler excess transmission theta
// known, the normalized channel probabilities give the loop transmission
// through H_{k+1} / (H_k H_1) ~ 2 theta tl - 1, and the measured T / eta then
// gives the input coupling through the r-independent leading term of T.

#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopdet/error.hpp"

namespace loopdet {

/// tl = (ratio + 1) / (2 theta).
inline double infer_tl(double ratio_stat, double theta) {
    if (!(theta > 0.0)) throw Error(Errc::parameter_domain, "theta must be positive");
    if (!(ratio_stat > -1.0)) throw Error(Errc::model_domain, "ratio statistic must exceed -1");
    const double tl = (ratio_stat + 1.0) / (2.0 * theta);
    if (!(tl >= 0.0 && tl <= 1.0)) {
        throw Error(Errc::inconsistent_measurement, "inferred loop transmission " + std::to_string(tl) + " outside [0, 1]");
    }
    return tl;
}

/// t0 = (T / eta) tl / (2 tl theta - 1).
inline double infer_t0(double t_over_eta, double tl, double theta) {
    const double denom = 2.0 * tl * theta - 1.0;
    if (!(denom > 0.0)) throw Error(Errc::model_domain, "2 tl theta must exceed 1");
    if (!(t_over_eta >= 0.0)) throw Error(Errc::parameter_domain, "T/eta must be non-negative");
    const double t0 = t_over_eta * tl / denom;
    if (!(t0 >= 0.0 && t0 <= 1.0)) {
        throw Error(Errc::inconsistent_measurement, "inferred input transmission " + std::to_string(t0) + " outside [0, 1]");
    }
    return t0;
}

/// One measured normalized channel probability.
struct ChannelMeasurement {
    std::size_t k = 1;  // 1-based channel index
    double H = 0.0;
    double sigma = 0.0;
};

struct CalibrationOptions {
    std::size_t first_k = 2;
    std::size_t last_k = 6;
};

/// Exact inversion of the one-ratio model. With g = H_{k+1}/H_k = theta tl r
/// and the ratio statistic s, x = theta tl solves (s - g)(1 - g) = (x - g)^2.
struct RefinedEstimate {
    double tl = 0.0;
    double t0 = 0.0;
    double r = 0.0;
    double geometric_ratio = 0.0;
};

/// Result of the closed-form chain tl = (s + 1) / (2 theta), t0 = A tl / (2 tl theta - 1).
struct FirstOrderEstimate {
    double tl = 0.0;
    double t0 = 0.0;
    double tl_sigma = 0.0;
    double t0_sigma = 0.0;
};

enum class CalibrationMethod { first_order, exact };

inline const char* to_string(CalibrationMethod m) { return m == CalibrationMethod::exact ? "exact" : "first-order"; }

struct CalibrationResult {
    double tl_hat = 0.0;
    double t0_hat = 0.0;
    double tl_sigma = 0.0;
    double t0_sigma = 0.0;
    CalibrationMethod method = CalibrationMethod::first_order;

    double ratio_stat = 0.0;
    double ratio_spread = 0.0;  // sample standard deviation over k
    double ratio_stat_sigma = 0.0;
    double t_over_eta = 0.0;

    std::vector<std::size_t> ratio_k;
    std::vector<double> ratios;
    std::vector<double> residuals;  // ratio_k - mean

    std::optional<FirstOrderEstimate> first_order;
    std::optional<RefinedEstimate> refined;
    std::vector<std::string> warnings;
};

namespace detail {

inline FirstOrderEstimate first_order_estimate(double ratio_stat, double t_over_eta, double theta,
                                               double ratio_sigma, double t_over_eta_sigma) {
    FirstOrderEstimate est;
    est.tl = infer_tl(ratio_stat, theta);
    est.t0 = infer_t0(t_over_eta, est.tl, theta);
    est.tl_sigma = ratio_sigma / (2.0 * theta);
    const double denom = 2.0 * est.tl * theta - 1.0;
    const double d_t0_d_a = est.tl / denom;
    const double d_t0_d_tl = -t_over_eta / (denom * denom);
    est.t0_sigma = std::hypot(d_t0_d_a * t_over_eta_sigma, d_t0_d_tl * est.tl_sigma);
    return est;
}

inline std::optional<RefinedEstimate> exact_inversion(double ratio_stat, double g, double t_over_eta, double theta) {
    const double excess = (ratio_stat - g) * (1.0 - g);
    if (!(g > 0.0 && g < 1.0 && excess >= 0.0 && theta > 0.0)) return std::nullopt;
    RefinedEstimate est;
    const double x = g + std::sqrt(excess);
    est.geometric_ratio = g;
    est.r = g / x;
    est.tl = x / theta;
    est.t0 = t_over_eta / (theta * (est.r + (x - g) * (x - g) / (x * (1.0 - g))));
    // Round-off on noise-free input can land a hair above one.
    constexpr double slack = 1e-12;
    if (est.tl > 1.0 && est.tl <= 1.0 + slack) est.tl = 1.0;
    if (est.t0 > 1.0 && est.t0 <= 1.0 + slack) est.t0 = 1.0;
    if (!(est.tl >= 0.0 && est.tl <= 1.0 && est.t0 >= 0.0 && est.t0 <= 1.0 && est.r <= 1.0)) return std::nullopt;
    return est;
}

struct RatioReduction {
    std::vector<std::size_t> ratio_k;
    std::vector<double> ratios;
    std::vector<std::string> warnings;
    double mean = 0.0;
    std::optional<double> geometric;  // mean H_{k+1} / H_k over the used k >= 2
};

inline RatioReduction reduce_ratios(const std::map<std::size_t, double>& H, const CalibrationOptions& opts) {
    RatioReduction out;
    const double h1 = H.at(1);
    double geo_sum = 0.0;
    std::size_t geo_n = 0;
    for (std::size_t k = opts.first_k; k <= opts.last_k; ++k) {
        const auto cur = H.find(k);
        const auto next = H.find(k + 1);
        if (cur == H.end() || next == H.end()) continue;
        if (!(cur->second > 0.0) || !(next->second > 0.0)) {
            out.warnings.push_back("skipped k = " + std::to_string(k) + ": zero channel probability");
            continue;
        }
        out.ratio_k.push_back(k);
        out.ratios.push_back(next->second / (cur->second * h1));
        if (k >= 2) {
            geo_sum += next->second / cur->second;
            ++geo_n;
        }
    }
    if (!out.ratios.empty()) {
        out.mean = std::accumulate(out.ratios.begin(), out.ratios.end(), 0.0) / static_cast<double>(out.ratios.size());
    }
    if (geo_n > 0) out.geometric = geo_sum / static_cast<double>(geo_n);
    return out;
}

}  // namespace detail

/// The chain from an already reduced ratio statistic and T / eta.
inline CalibrationResult calibrate_from_ratio(double ratio_stat, double t_over_eta, double theta,
                                              double ratio_sigma = 0.0, double t_over_eta_sigma = 0.0) {
    CalibrationResult res;
    res.ratio_stat = ratio_stat;
    res.t_over_eta = t_over_eta;
    res.ratio_stat_sigma = ratio_sigma;
    const auto est = detail::first_order_estimate(ratio_stat, t_over_eta, theta, ratio_sigma, t_over_eta_sigma);
    res.first_order = est;
    res.tl_hat = est.tl;
    res.t0_hat = est.t0;
    res.tl_sigma = est.tl_sigma;
    res.t0_sigma = est.t0_sigma;
    return res;
}

/// Full chain from measured normalized channel probabilities. Channels with
/// zero probability are skipped (with a warning) in every ratio they enter.
/// When the channels also fix the geometric ratio, the reported estimate is
/// the exact inversion; otherwise it is the first-order chain.
inline CalibrationResult calibrate_from_channels(std::span<const ChannelMeasurement> channels, double t_over_eta,
                                                 double theta, const CalibrationOptions& opts = {},
                                                 double t_over_eta_sigma = 0.0) {
    if (channels.size() < 3) throw Error(Errc::insufficient_data, "need at least 3 channels");
    if (opts.first_k < 1 || opts.last_k < opts.first_k) throw Error(Errc::parameter_domain, "bad channel range");
    if (!(theta > 0.0)) throw Error(Errc::parameter_domain, "theta must be positive");
    if (!(t_over_eta >= 0.0) || !(t_over_eta_sigma >= 0.0)) throw Error(Errc::parameter_domain, "bad T/eta");

    std::map<std::size_t, double> H;
    std::map<std::size_t, double> sigma;
    for (const auto& c : channels) {
        if (c.k < 1) throw Error(Errc::parameter_domain, "channel index must be at least 1");
        if (!(c.H >= 0.0 && c.H <= 1.0)) throw Error(Errc::parameter_domain, "H_k outside [0, 1]");
        if (!(c.sigma >= 0.0)) throw Error(Errc::parameter_domain, "negative uncertainty");
        if (H.count(c.k)) throw Error(Errc::malformed_data, "channel " + std::to_string(c.k) + " listed twice");
        H[c.k] = c.H;
        sigma[c.k] = c.sigma;
    }
    if (!H.count(1) || !(H[1] > 0.0)) throw Error(Errc::insufficient_data, "channel 1 is missing or empty");

    auto base = detail::reduce_ratios(H, opts);
    if (base.ratios.empty()) throw Error(Errc::insufficient_data, "no usable channel ratios");

    CalibrationResult res;
    res.t_over_eta = t_over_eta;
    res.ratio_stat = base.mean;
    res.ratio_k = base.ratio_k;
    res.ratios = base.ratios;
    res.warnings = base.warnings;
    const double n = static_cast<double>(res.ratios.size());
    double ss = 0.0;
    for (double v : res.ratios) {
        res.residuals.push_back(v - res.ratio_stat);
        ss += (v - res.ratio_stat) * (v - res.ratio_stat);
    }
    res.ratio_spread = res.ratios.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;

    auto refined_of = [&](const detail::RatioReduction& red, double a) -> std::optional<RefinedEstimate> {
        if (!red.geometric) return std::nullopt;
        return detail::exact_inversion(red.mean, *red.geometric, a, theta);
    };
    res.refined = refined_of(base, t_over_eta);

    // Linear propagation by central differences over every input.
    double var_stat = 0.0, var_tl = 0.0, var_t0 = 0.0;
    bool refined_stable = res.refined.has_value();
    auto accumulate = [&](double s, const detail::RatioReduction& up, const detail::RatioReduction& dn,
                          double a_up, double a_dn, double step) {
        var_stat += std::pow(s * (up.mean - dn.mean) / (2.0 * step), 2);
        if (!res.refined) return;
        const auto ru = refined_of(up, a_up);
        const auto rd = refined_of(dn, a_dn);
        if (!ru || !rd) {
            refined_stable = false;
            return;
        }
        var_tl += std::pow(s * (ru->tl - rd->tl) / (2.0 * step), 2);
        var_t0 += std::pow(s * (ru->t0 - rd->t0) / (2.0 * step), 2);
    };
    for (const auto& [k, s] : sigma) {
        if (s == 0.0 || !(H[k] > 0.0)) continue;
        const double step = 1e-6 * H[k];
        auto up = H, dn = H;
        up[k] += step;
        dn[k] -= step;
        accumulate(s, detail::reduce_ratios(up, opts), detail::reduce_ratios(dn, opts), t_over_eta, t_over_eta, step);
    }
    if (t_over_eta_sigma > 0.0 && res.refined) {
        const double step = 1e-6 * std::max(t_over_eta, 1e-12);
        const auto ru = refined_of(base, t_over_eta + step);
        const auto rd = refined_of(base, t_over_eta - step);
        if (ru && rd) {
            var_t0 += std::pow(t_over_eta_sigma * (ru->t0 - rd->t0) / (2.0 * step), 2);
        } else {
            refined_stable = false;
        }
    }
    res.ratio_stat_sigma = std::sqrt(var_stat);

    try {
        res.first_order = detail::first_order_estimate(res.ratio_stat, t_over_eta, theta, res.ratio_stat_sigma,
                                                       t_over_eta_sigma);
    } catch (const Error& e) {
        if (!res.refined) throw;
        res.warnings.push_back(std::string("first-order chain failed: ") + e.what());
    }

    if (res.refined) {
        res.method = CalibrationMethod::exact;
        res.tl_hat = res.refined->tl;
        res.t0_hat = res.refined->t0;
        res.tl_sigma = std::sqrt(var_tl);
        res.t0_sigma = std::sqrt(var_t0);
        if (!refined_stable) res.warnings.push_back("uncertainty of the exact inversion is not linearizable here");
    } else {
        if (base.geometric) {
            res.warnings.push_back("channel ratios inconsistent with the one-ratio model; using the first-order chain");
        }
        res.method = CalibrationMethod::first_order;
        res.tl_hat = res.first_order->tl;
        res.t0_hat = res.first_order->t0;
        res.tl_sigma = res.first_order->tl_sigma;
        res.t0_sigma = res.first_order->t0_sigma;
    }
    return res;
}

}  // namespace loopdet
