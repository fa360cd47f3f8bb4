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

// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/core.h>

#include "loopdet/loopdet.hpp"

namespace {

using namespace loopdet;

struct Verdict {
    bool pass = false;
    std::string detail;
};

int g_failures = 0;

void criterion(int id, const std::string& name, double limit_s, const std::function<Verdict()>& body) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
        v = body();
    } catch (const std::exception& e) {
        v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_time = limit_s <= 0.0 || secs < limit_s;
    const bool ok = v.pass && in_time;
    if (!ok) ++g_failures;
    const std::string budget = limit_s > 0.0 ? fmt::format(" < {:g} s", limit_s) : "";
    fmt::print("{} [{:2}] {}: {} ({:.2f} s{}{})\n", ok ? "PASS" : "FAIL", id, name, v.detail, secs, budget,
               in_time ? "" : ", over budget");
    std::fflush(stdout);
}

DeviceParams lossless() { return lossless_device(0.5); }

DeviceParams quiet(DeviceParams p) {
    p.dark_prob_per_bin = 0.0;
    p.afterpulse_prob = 0.0;
    return p;
}

double entropy_optimum() { return optimize_ratio(measured_device()).r_star; }

double cm_at(double r, double mu, std::size_t n) {
    return device_multi_photon_content(with_ratio(measured_device(), r), mu, n);
}

std::vector<double> mu_grid(double lo, double hi, int n) {
    std::vector<double> g;
    for (int i = 0; i < n; ++i) g.push_back(lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
    return g;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(LOOPDET_CLI) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

constexpr std::uint64_t kSeed = 20261019;

}  // namespace

int main() {
    criterion(1, "Ideal-coupler optimum", 1.0, [] {
        const double r = optimize_ratio(lossless()).r_star;
        return Verdict{std::abs(r - 0.5) <= 1e-4, fmt::format("r* = {:.6f}, target 0.500 +- 1e-4", r)};
    });

    criterion(2, "Lossy optimum", 5.0, [] {
        const double r = entropy_optimum();
        bool all_below = true;
        int points = 0;
        for (double t0 : {0.8, 0.92, 0.99}) {
            for (double theta : {0.9, 0.955, 0.99}) {
                for (double tl : {0.8, 0.94, 0.99}) {
                    for (double eta : {0.3, 0.6, 0.99}) {
                        DeviceParams p = measured_device();
                        p.t0 = t0;
                        p.theta = theta;
                        p.tl = tl;
                        p.eta = eta;
                        all_below = all_below && optimize_ratio(p).r_star < 0.5;
                        ++points;
                    }
                }
            }
        }
        return Verdict{std::abs(r - 0.446) <= 0.010 && all_below,
                       fmt::format("r* = {:.4f}, target 0.446 +- 0.010; r* < 0.5 on {}/{} lossy points: {}", r, points,
                                   points, all_below ? "yes" : "no")};
    });

    criterion(3, "Calibration chain", 0.0, [] {
        const auto res = calibrate_from_ratio(0.80, 0.78, 0.955);
        const bool ok = std::abs(res.tl_hat - 0.94) <= 0.01 && std::abs(res.t0_hat - 0.92) <= 0.01;
        return Verdict{ok, fmt::format("tl_hat = {:.4f} (0.94 +- 0.01), t0_hat = {:.4f} (0.92 +- 0.01)", res.tl_hat,
                                       res.t0_hat)};
    });

    criterion(4, "Multi-photon content at mu = 4.26", 1.0, [] {
        // Input plane: Poisson c_M at the mean in front of the device.
        // Detected plane: Poisson c_M at mean mu T, after all device loss.
        const double r = entropy_optimum();
        const DeviceParams p = with_ratio(measured_device(), r);
        const double mu = 4.26;
        const double dev = device_multi_photon_content(p, mu, 15);
        const double T = total_transmission(p);
        const double in = reference_multi_photon_content(mu, T, ReferencePlane::input);
        const double det = reference_multi_photon_content(mu, T, ReferencePlane::detected);
        const double gap_in = (in - dev) / in;
        const double gap_det = (det - dev) / det;
        const bool ok = (gap_in >= 0.0 && gap_in <= 0.06) || (gap_det >= 0.0 && gap_det <= 0.06);
        return Verdict{ok, fmt::format("r = {:.4f}, device c_M = {:.4f}; input-plane source {:.4f} (deficit {:.1f}%), "
                                       "detected-plane source {:.4f} (deficit {:.1f}%); need <= 6% in one",
                                       r, dev, in, 100 * gap_in, det, 100 * gap_det)};
    });

    criterion(5, "Channel-count monotonicity", 5.0, [] {
        int bad = 0, points = 0;
        for (int i = 0; i <= 100; ++i) {
            const double r = i / 100.0;
            double prev = -1.0;
            for (std::size_t m : {2u, 3u, 4u, 15u}) {
                const double cm = cm_at(r, 4.26, m);
                if (cm < prev) ++bad;
                prev = cm;
            }
            ++points;
        }
        return Verdict{bad == 0, fmt::format("c_M(2) <= c_M(3) <= c_M(4) <= c_M(15) at {}/{} r grid points", points - bad,
                                             points)};
    });

    criterion(6, "Entropy-performance alignment", 10.0, [] {
        const double r_e = entropy_optimum();
        double best_r = 0.0, best = -1.0;
        for (int i = 0; i <= 1000; ++i) {
            const double r = i / 1000.0;
            const double cm = cm_at(r, 4.26, 15);
            if (cm > best) {
                best = cm;
                best_r = r;
            }
        }
        const auto [r_c, c_star] = golden_section_maximize([](double r) { return cm_at(r, 4.26, 15); },
                                                           std::max(0.0, best_r - 1e-3), std::min(1.0, best_r + 1e-3), 1e-6);
        const double diff = std::abs(r_e - r_c);
        return Verdict{diff <= 0.05, fmt::format("argmax E = {:.4f}, argmax c_M = {:.4f} (c_M = {:.4f}), |diff| = {:.4f}, "
                                                 "need <= 0.05",
                                                 r_e, r_c, c_star, diff)};
    });

    criterion(7, "Oracle equivalence", 120.0, [] {
        // Exhaustive routing over (N+1)^n assignments.
        auto oracle = [](std::size_t n, const std::vector<double>& h) {
            const std::size_t N = h.size();
            double miss = 1.0;
            for (double x : h) miss -= x;
            std::vector<double> dist(N + 1, 0.0);
            std::vector<std::size_t> route(n, 0);
            while (true) {
                double w = 1.0;
                std::vector<bool> hit(N, false);
                for (std::size_t i = 0; i < n; ++i) {
                    w *= route[i] == 0 ? miss : h[route[i] - 1];
                    if (route[i] > 0) hit[route[i] - 1] = true;
                }
                dist[static_cast<std::size_t>(std::count(hit.begin(), hit.end(), true))] += w;
                std::size_t i = 0;
                while (i < n && ++route[i] == N + 1) route[i++] = 0;
                if (i == n) break;
            }
            return dist;
        };
        Stream gen(kSeed, 0, StreamPurpose::auxiliary);
        double worst_enum = 0.0;
        for (int rep = 0; rep < 3; ++rep) {
            for (std::size_t N = 1; N <= 4; ++N) {
                std::vector<double> h(N);
                double s = 0.0;
                for (double& x : h) s += (x = gen.uniform());
                const double scale = (0.3 + 0.7 * gen.uniform()) / s;
                for (double& x : h) x *= scale;
                const ChannelProfile prof{h, 0.0};
                for (std::size_t n = 0; n <= 6; ++n) {
                    const auto ref = oracle(n, h);
                    const auto d = fock_click_distribution(n, prof);
                    for (std::size_t m = 0; m <= N; ++m) worst_enum = std::max(worst_enum, std::abs(d.p_click[m] - ref[m]));
                }
            }
        }
        const bool enum_ok = worst_enum <= 1e-13;

        double worst_mix = 0.0;
        for (double r : {0.2, 0.446, 0.7}) {
            const auto prof = channel_transmissions(with_ratio(measured_device(), r), 15);
            for (double mu : {0.1, 2.13, 4.26, 10.0}) {
                const auto a = poisson_click_distribution(mu, prof);
                const auto b = custom_click_distribution(CustomPmf{poisson_pmf(mu, poisson_cutoff(mu))}, prof);
                for (std::size_t m = 0; m < a.p_click.size(); ++m) worst_mix = std::max(worst_mix, std::abs(a.p_click[m] - b.p_click[m]));
            }
        }
        const bool mix_ok = worst_mix <= 1e-9;

        double worst_z = 0.0;
        const DeviceParams p = quiet(measured_device());
        const auto prof = channel_transmissions(p, 15);
        for (double mu : {0.1, 2.13, 4.26}) {
            SimConfig c;
            c.seed = kSeed;
            c.n_trials = 1000000;
            const auto run = run_simulation(Poissonian{mu}, p, c);
            const auto d = poisson_click_distribution(mu, prof);
            const double n = static_cast<double>(c.n_trials);
            for (auto [emp, ref] : {std::pair{run.clicks.p0(), d.p0()}, std::pair{run.clicks.p1(), d.p1()},
                                    std::pair{run.clicks.pM(), d.pM()}}) {
                const double se = std::sqrt(ref * (1.0 - ref) / n);
                if (se > 0.0) worst_z = std::max(worst_z, std::abs(emp - ref) / se);
            }
        }
        const bool mc_ok = worst_z <= 3.0;
        return Verdict{enum_ok && mix_ok && mc_ok,
                       fmt::format("enumeration max |diff| = {:.1e} (n <= 6, N <= 4, 3 profiles); Poisson vs Fock mixture "
                                   "max |diff| = {:.1e} (<= 1e-9); MC 1e6 trials max |z| over p0/p1/pM = {:.2f} (<= 3)",
                                   worst_enum, worst_mix, worst_z)};
    });

    criterion(8, "Noise bound", 120.0, [] {
        const double bound = false_cm_bound(8e-3, 0.17, 1.0).cm_bound;
        SimConfig c;
        c.seed = kSeed;
        c.n_trials = 1000000;
        const DeviceParams noisy = measured_device();
        const auto with_noise = run_simulation(Poissonian{4.26}, noisy, c);
        const auto clean = run_simulation(Poissonian{4.26}, quiet(noisy), c);
        const double excess = with_noise.clicks.multi_photon_content() - clean.clicks.multi_photon_content();
        const bool ok = std::abs(bound - 1.36e-3) <= 1e-12 && excess < bound;
        return Verdict{ok, fmt::format("bound p_ap q = {:.3e} (1.36e-3); c_M with noise {:.5f}, without {:.5f}, excess {:.2e} "
                                       "(< bound)",
                                       bound, with_noise.clicks.multi_photon_content(), clean.clicks.multi_photon_content(),
                                       excess)};
    });

    criterion(9, "TOF structure", 120.0, [] {
        SimConfig c;
        c.seed = kSeed;
        c.n_trials = 1000000;
        const DeviceParams p = measured_device();
        const auto run = run_simulation(Poissonian{2.13}, p, c);
        const auto& hist = run.histogram;

        // Peaks: runs of bins well above the flat background, located by centroid.
        std::vector<std::uint64_t> sorted(hist.counts.begin(), hist.counts.end());
        std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
        const double floor = std::max<double>(100.0, 20.0 * static_cast<double>(sorted[sorted.size() / 2]));
        std::vector<double> peaks;
        std::vector<std::pair<std::size_t, std::size_t>> spans;
        for (std::size_t b = 0; b < hist.n_bins();) {
            if (hist.counts[b] <= floor) {
                ++b;
                continue;
            }
            std::size_t e = b;
            double w = 0.0, wt = 0.0;
            while (e < hist.n_bins() && hist.counts[e] > floor) {
                w += static_cast<double>(hist.counts[e]);
                wt += static_cast<double>(hist.counts[e]) * (hist.time_ns(e) + 0.5 * hist.bin_width_ns);
                ++e;
            }
            peaks.push_back(wt / w);
            spans.emplace_back(b, e);
            b = e;
        }
        bool spacing_ok = peaks.size() >= 5;
        std::string gaps;
        for (std::size_t i = 1; i < peaks.size() && i < 8; ++i) {
            const double d = peaks[i] - peaks[i - 1];
            spacing_ok = spacing_ok && std::abs(d - 60.0) <= 5.0;
            gaps += fmt::format("{}{:.1f}", i > 1 ? "," : "", d);
        }
        std::uint64_t after_between = 0, dark_between = 0;
        if (spans.size() >= 2) {
            for (std::size_t b = spans[0].second; b < spans[1].first; ++b) {
                after_between += run.afterpulse_histogram.counts[b];
                dark_between += run.dark_histogram.counts[b];
            }
        }
        const bool ok = spacing_ok && spans.size() >= 2 && after_between == 0;
        return Verdict{ok, fmt::format("{} peaks, first spacings [{}] ns (60 +- 5); afterpulse counts between peaks 1 and 2 = "
                                       "{} (need 0), dark counts there = {}",
                                       peaks.size(), gaps, after_between, dark_between)};
    });

    criterion(10, "Postselection", 30.0, [] {
        const auto grid = mu_grid(0.01, 10.0, 121);
        std::string detail;
        bool any_ok = false;
        for (ReferencePlane plane : {ReferencePlane::input, ReferencePlane::detected}) {
            const auto curve = wm_curve(grid, measured_device(), 15, {}, plane);
            double max_band = 0.0, max_all = 0.0, worst_mu = 0.0;
            for (const auto& pt : curve) {
                if (!pt.result || !pt.result->w_M) continue;
                const double w = *pt.result->w_M;
                max_all = std::max(max_all, w);
                if (pt.mu >= 0.5 && pt.mu <= 5.0 && w > max_band) {
                    max_band = w;
                    worst_mu = pt.mu;
                }
            }
            const bool ok = max_band <= 0.45 && max_all <= 1.0;
            any_ok = any_ok || ok;
            detail += fmt::format("{}{} plane: max w_M on [0.5,5] = {:.3f} at mu = {:.2f} (<= 0.45), max on [0.01,10] = "
                                  "{:.3f} (<= 1)",
                                  detail.empty() ? "" : "; ", to_string(plane), max_band, worst_mu, max_all);
        }
        return Verdict{any_ok, detail};
    });

    criterion(11, "Determinism across worker counts", 0.0, [] {
        namespace fs = std::filesystem;
        const fs::path dir = fs::temp_directory_path() / ("loopdet_accept_" + std::to_string(::getpid()));
        fs::create_directories(dir);
        const std::string ini = (dir / "ps.ini").string();
        std::ofstream(ini) << "[sweep]\nmu = 0.5, 2.13, 4.26\n[postselect]\nnoise = true\n[simulation]\nn_trials = 20000\n";
        struct Case {
            std::string args;
            std::string ext;
        };
        const std::vector<Case> cases = {
            {"simulate-tof --seed 7 --trials 200000", "csv"},
            {"simulate-tof --seed 7 --trials 200000 --format json", "json"},
            {"postselect --config " + ini + " --seed 7", "csv"},
        };
        bool ok = true;
        int compared = 0;
        for (std::size_t i = 0; i < cases.size(); ++i) {
            std::vector<std::string> outputs;
            for (const char* workers : {"1", "8", "1"}) {
                const std::string out = (dir / fmt::format("c{}_w{}_{}.{}", i, workers, outputs.size(), cases[i].ext)).string();
                ok = ok && run_cli(cases[i].args + " --workers " + workers + " --out " + out) == 0;
                outputs.push_back(slurp(out));
            }
            ok = ok && !outputs[0].empty() && outputs[0] == outputs[1] && outputs[0] == outputs[2];
            compared += 3;
        }
        fs::remove_all(dir);
        return Verdict{ok, fmt::format("{} output files from simulate-tof (csv, json) and noisy postselect, workers 1/8/1: {}",
                                       compared, ok ? "byte-identical" : "differ")};
    });

    fmt::print("{} of 11 criteria failed\n", g_failures);
    return g_failures == 0 ? 0 : 1;
}
