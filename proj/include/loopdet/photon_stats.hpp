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

// Click-number statistics of the loop detector. A click is registered in
// channel k when at least one photon lands there; the detector cannot tell one
// photon from several in the same channel, so only the number of distinct
// channels that fired is observable.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "loopdet/core_model.hpp"
#include "loopdet/error.hpp"

namespace loopdet {

struct Poissonian {
    double mu = 0.0;
};

struct Fock {
    std::size_t n = 0;
};

/// Explicit photon-number distribution over n = 0..pmf.size()-1.
struct CustomPmf {
    std::vector<double> pmf;
};

using PhotonSource = std::variant<Poissonian, Fock, CustomPmf>;

inline void validate(const PhotonSource& source) {
    if (const auto* p = std::get_if<Poissonian>(&source)) {
        if (!(p->mu >= 0.0) || !std::isfinite(p->mu)) {
            throw Error(Errc::parameter_domain, "mu must be finite and non-negative");
        }
    } else if (const auto* c = std::get_if<CustomPmf>(&source)) {
        if (c->pmf.empty()) throw Error(Errc::parameter_domain, "empty photon-number pmf");
        double sum = 0.0;
        for (double v : c->pmf) {
            if (!(v >= 0.0)) throw Error(Errc::parameter_domain, "negative photon-number probability");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw Error(Errc::parameter_domain, "photon-number pmf sums to " + std::to_string(sum));
        }
    }
}

/// Photon-number cutoff mu + 10 sqrt(mu) + 20 used when a Poisson pmf has to be
/// materialized; the neglected tail is far below double precision.
inline std::size_t poisson_cutoff(double mu) {
    return static_cast<std::size_t>(std::ceil(mu + 10.0 * std::sqrt(mu) + 20.0));
}

inline std::vector<double> poisson_pmf(double mu, std::size_t n_max) {
    std::vector<double> out(n_max + 1);
    for (std::size_t n = 0; n <= n_max; ++n) {
        const double dn = static_cast<double>(n);
        out[n] = (mu == 0.0) ? (n == 0 ? 1.0 : 0.0)
                             : std::exp(dn * std::log(mu) - mu - std::lgamma(dn + 1.0));
    }
    return out;
}

/// Photon-number pmf of any source; Poisson sources are truncated at poisson_cutoff.
inline std::vector<double> source_pmf(const PhotonSource& source) {
    validate(source);
    return std::visit(
        [](const auto& s) -> std::vector<double> {
            using S = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<S, Poissonian>) {
                return poisson_pmf(s.mu, poisson_cutoff(s.mu));
            } else if constexpr (std::is_same_v<S, Fock>) {
                std::vector<double> pmf(s.n + 1, 0.0);
                pmf[s.n] = 1.0;
                return pmf;
            } else {
                return s.pmf;
            }
        },
        source);
}

/// Probability that exactly m distinct channels click, m = 0..N.
struct ClickDistribution {
    std::vector<double> p_click;

    double p0() const { return p_click.empty() ? 0.0 : p_click[0]; }
    double p1() const { return p_click.size() > 1 ? p_click[1] : 0.0; }
    double pM() const {
        return p_click.size() > 2 ? std::accumulate(p_click.begin() + 2, p_click.end(), 0.0) : 0.0;
    }
    double sum() const { return std::accumulate(p_click.begin(), p_click.end(), 0.0); }
};

namespace detail {

// Photons that miss every counted channel (lost or later than channel N).
inline double miss_probability(const ChannelProfile& profile) {
    double captured = 0.0;
    for (double hk : profile.h) {
        require_unit(hk, "h_k");
        captured += hk;
    }
    if (captured > 1.0 + 1e-12) {
        throw Error(Errc::parameter_domain, "channel transmissions sum above one");
    }
    return std::max(0.0, 1.0 - captured);
}

inline double binomial_pmf(std::size_t n, std::size_t k, double p) {
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    const double dn = static_cast<double>(n);
    const double dk = static_cast<double>(k);
    return std::exp(std::lgamma(dn + 1.0) - std::lgamma(dk + 1.0) - std::lgamma(dn - dk + 1.0) +
                    dk * std::log(p) + (dn - dk) * std::log1p(-p));
}

}  // namespace detail

/// Each channel clicks independently with probability 1 - exp(-mu h_k);
/// the count of clicking channels follows the Poisson-binomial law.
inline ClickDistribution poisson_click_distribution(double mu, const ChannelProfile& profile) {
    validate(PhotonSource{Poissonian{mu}});
    std::vector<double> dist(profile.n_channels() + 1, 0.0);
    dist[0] = 1.0;
    std::size_t filled = 0;
    for (double hk : profile.h) {
        detail::require_unit(hk, "h_k");
        const double q = -std::expm1(-mu * hk);
        ++filled;
        for (std::size_t m = filled; m > 0; --m) dist[m] = dist[m] * (1.0 - q) + dist[m - 1] * q;
        dist[0] *= 1.0 - q;
    }
    return ClickDistribution{std::move(dist)};
}

enum class FockMethod {
    automatic,            // sequential binomial splitting over channels
    enumeration,          // explicit sum over occupation numbers (small n and N only)
    inclusion_exclusion,  // alternating sum over channel subsets (N <= 20)
};

namespace detail {

inline ClickDistribution fock_by_splitting(std::size_t n, const ChannelProfile& profile) {
    const std::size_t N = profile.n_channels();
    const double miss = miss_probability(profile);
    const std::size_t m_cap = std::min(n, N);

    // state[r][m]: r photons still unassigned, m distinct channels hit so far.
    std::vector<std::vector<double>> state(n + 1, std::vector<double>(m_cap + 1, 0.0));
    state[n][0] = 1.0;
    double remaining_mass = miss + profile.captured();

    for (double hk : profile.h) {
        const double p = remaining_mass > 0.0 ? std::min(1.0, hk / remaining_mass) : 0.0;
        remaining_mass -= hk;
        if (p == 0.0) continue;
        std::vector<std::vector<double>> next(n + 1, std::vector<double>(m_cap + 1, 0.0));
        std::vector<double> row(n + 1);
        for (std::size_t r = 0; r <= n; ++r) {
            for (std::size_t j = 0; j <= r; ++j) row[j] = binomial_pmf(r, j, p);
            for (std::size_t m = 0; m <= m_cap; ++m) {
                const double w = state[r][m];
                if (w == 0.0) continue;
                next[r][m] += w * row[0];
                if (m == m_cap) continue;
                for (std::size_t j = 1; j <= r; ++j) next[r - j][m + 1] += w * row[j];
            }
        }
        state = std::move(next);
    }

    std::vector<double> dist(N + 1, 0.0);
    for (std::size_t r = 0; r <= n; ++r) {
        for (std::size_t m = 0; m <= m_cap; ++m) dist[m] += state[r][m];
    }
    return ClickDistribution{std::move(dist)};
}

inline void enumerate_occupations(std::span<const double> h, double miss, std::size_t k,
                                  std::size_t left, double log_weight, std::size_t hit,
                                  std::vector<double>& dist) {
    if (k == h.size()) {
        // Remaining photons miss every channel.
        double w = log_weight - std::lgamma(static_cast<double>(left) + 1.0);
        if (left > 0) {
            if (miss <= 0.0) return;
            w += static_cast<double>(left) * std::log(miss);
        }
        dist[hit] += std::exp(w);
        return;
    }
    for (std::size_t j = 0; j <= left; ++j) {
        if (j > 0 && h[k] <= 0.0) break;
        double w = log_weight - std::lgamma(static_cast<double>(j) + 1.0);
        if (j > 0) w += static_cast<double>(j) * std::log(h[k]);
        enumerate_occupations(h, miss, k + 1, left - j, w, hit + (j > 0 ? 1 : 0), dist);
    }
}

inline ClickDistribution fock_by_enumeration(std::size_t n, const ChannelProfile& profile) {
    if (n > 12) throw Error(Errc::parameter_domain, "enumeration is limited to n <= 12");
    const double miss = miss_probability(profile);
    std::vector<double> dist(profile.n_channels() + 1, 0.0);
    enumerate_occupations(profile.h, miss, 0, n, std::lgamma(static_cast<double>(n) + 1.0), 0, dist);
    return ClickDistribution{std::move(dist)};
}

inline ClickDistribution fock_by_inclusion_exclusion(std::size_t n, const ChannelProfile& profile) {
    const std::size_t N = profile.n_channels();
    if (N > 20) throw Error(Errc::parameter_domain, "inclusion-exclusion is limited to N <= 20");
    const double miss = miss_probability(profile);

    // by_size[j] = sum over channel subsets U with |U| = j of P(every photon in U or missed).
    std::vector<double> by_size(N + 1, 0.0);
    const std::uint32_t n_subsets = 1u << N;
    for (std::uint32_t mask = 0; mask < n_subsets; ++mask) {
        double mass = miss;
        std::size_t size = 0;
        for (std::size_t k = 0; k < N; ++k) {
            if (mask & (1u << k)) {
                mass += profile.h[k];
                ++size;
            }
        }
        by_size[size] += std::pow(std::min(mass, 1.0), static_cast<double>(n));
    }

    // P(exactly m) = sum_j (-1)^(m-j) C(N-j, m-j) by_size[j].
    std::vector<double> dist(N + 1, 0.0);
    for (std::size_t m = 0; m <= N; ++m) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= m; ++j) {
            const double c = std::round(std::exp(std::lgamma(double(N - j) + 1.0) -
                                                 std::lgamma(double(m - j) + 1.0) -
                                                 std::lgamma(double(N - m) + 1.0)));
            acc += ((m - j) % 2 == 0 ? c : -c) * by_size[j];
        }
        dist[m] = std::max(0.0, acc);
    }
    return ClickDistribution{std::move(dist)};
}

}  // namespace detail

/// n photons routed independently: each lands in channel k with probability
/// h_k or misses every counted channel.
inline ClickDistribution fock_click_distribution(std::size_t n, const ChannelProfile& profile,
                                                 FockMethod method = FockMethod::automatic) {
    switch (method) {
        case FockMethod::enumeration: return detail::fock_by_enumeration(n, profile);
        case FockMethod::inclusion_exclusion: return detail::fock_by_inclusion_exclusion(n, profile);
        case FockMethod::automatic: break;
    }
    return detail::fock_by_splitting(n, profile);
}

/// Fock click distributions for n = 0..n_max.
inline std::vector<ClickDistribution> fock_click_table(std::size_t n_max, const ChannelProfile& profile) {
    std::vector<ClickDistribution> out;
    out.reserve(n_max + 1);
    for (std::size_t n = 0; n <= n_max; ++n) out.push_back(fock_click_distribution(n, profile));
    return out;
}

/// Mixture of Fock click distributions weighted by the source pmf.
inline ClickDistribution custom_click_distribution(const PhotonSource& source, const ChannelProfile& profile) {
    const auto pmf = source_pmf(source);
    std::vector<double> dist(profile.n_channels() + 1, 0.0);
    for (std::size_t n = 0; n < pmf.size(); ++n) {
        if (pmf[n] == 0.0) continue;
        const auto fock = fock_click_distribution(n, profile);
        for (std::size_t m = 0; m < dist.size(); ++m) dist[m] += pmf[n] * fock.p_click[m];
    }
    return ClickDistribution{std::move(dist)};
}

/// Dispatches on the source kind; Poisson sources use the closed form.
inline ClickDistribution click_distribution(const PhotonSource& source, const ChannelProfile& profile) {
    validate(source);
    if (const auto* p = std::get_if<Poissonian>(&source)) return poisson_click_distribution(p->mu, profile);
    if (const auto* f = std::get_if<Fock>(&source)) return fock_click_distribution(f->n, profile);
    return custom_click_distribution(source, profile);
}

/// c_M = p_M / (p_1 + p_M): share of non-vacuum detections with two or more clicking channels.
inline double multi_photon_content(const ClickDistribution& d) {
    const double p1 = d.p1();
    const double pM = d.pM();
    if (!(p1 + pM > 0.0)) throw Error(Errc::undefined_content, "no non-vacuum detections");
    return pM / (p1 + pM);
}

namespace detail {

// P(n >= 1) and P(n >= 2) for a Poisson law without cancellation at small mu.
inline std::pair<double, double> poisson_tails(double mu) {
    const double ge1 = -std::expm1(-mu);
    if (mu < 0.5) {
        double term = std::exp(-mu) * mu * mu / 2.0;
        double ge2 = 0.0;
        for (int n = 2; n < 60 && term > 0.0; ++n) {
            ge2 += term;
            term *= mu / (n + 1);
            if (term < ge2 * 1e-18) break;
        }
        return {ge1, ge2};
    }
    return {ge1, ge1 - mu * std::exp(-mu)};
}

}  // namespace detail

/// P(n >= 2) / P(n >= 1) of the source itself.
inline double source_multi_photon_content(const PhotonSource& source) {
    validate(source);
    double ge1 = 0.0;
    double ge2 = 0.0;
    if (const auto* p = std::get_if<Poissonian>(&source)) {
        std::tie(ge1, ge2) = detail::poisson_tails(p->mu);
    } else {
        const auto pmf = source_pmf(source);
        for (std::size_t n = 1; n < pmf.size(); ++n) {
            ge1 += pmf[n];
            if (n >= 2) ge2 += pmf[n];
        }
    }
    if (!(ge1 > 0.0)) throw Error(Errc::undefined_content, "source never emits photons");
    return ge2 / ge1;
}

/// Mean photon number from the non-vacuum detection probability, assuming the
/// whole Poissonian pulse is seen with efficiency T: mu = -ln(1 - p) / T.
inline double infer_mu(double p_nonvacuum, double total_transmission) {
    if (!(p_nonvacuum >= 0.0 && p_nonvacuum <= 1.0)) {
        throw Error(Errc::parameter_domain, "detection probability outside [0, 1]");
    }
    if (!(total_transmission > 0.0)) throw Error(Errc::degenerate_device, "total transmission is zero");
    if (p_nonvacuum >= 1.0) throw Error(Errc::infinite_mu, "detection probability is one");
    return -std::log1p(-p_nonvacuum) / total_transmission;
}

/// Where the "true" multi-photon content of a Poissonian input is evaluated:
/// in front of the device (mean mu) or after the device loss (mean mu T).
enum class ReferencePlane { input, detected };

inline const char* to_string(ReferencePlane plane) {
    return plane == ReferencePlane::input ? "input" : "detected";
}

inline double reference_multi_photon_content(double mu, double total_transmission, ReferencePlane plane) {
    const double mean = plane == ReferencePlane::input ? mu : mu * total_transmission;
    return source_multi_photon_content(Poissonian{mean});
}

/// Device c_M for a Poissonian input of mean mu counting the first n_channels channels.
inline double device_multi_photon_content(const DeviceParams& params, double mu, std::size_t n_channels) {
    return multi_photon_content(poisson_click_distribution(mu, channel_transmissions(params, n_channels)));
}

}  // namespace loopdet
