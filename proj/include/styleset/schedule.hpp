#pragma once

// Cumulative signal-retention schedule for the diffusion process:
// alpha_bar[0] = 1, strictly decreasing, alpha_bar[T] near 0 but positive.

#include <cmath>
#include <stdexcept>
#include <vector>

namespace styleset {

struct NoiseSchedule {
    int steps = 0;                  // T
    std::vector<double> alpha_bar;  // size T+1

    double at(int t) const {
        if (t < 0 || t > steps) throw std::invalid_argument("NoiseSchedule: t out of range");
        return alpha_bar[static_cast<std::size_t>(t)];
    }

    void validate() const {
        if (steps < 1 || alpha_bar.size() != static_cast<std::size_t>(steps) + 1) {
            throw std::invalid_argument("NoiseSchedule: bad size");
        }
        if (alpha_bar[0] != 1.0) throw std::invalid_argument("NoiseSchedule: alpha_bar[0] != 1");
        for (std::size_t t = 0; t < alpha_bar.size(); ++t) {
            if (!(alpha_bar[t] > 0.0 && alpha_bar[t] <= 1.0)) {
                throw std::invalid_argument("NoiseSchedule: alpha_bar out of (0,1]");
            }
            if (t > 0 && !(alpha_bar[t] < alpha_bar[t - 1])) {
                throw std::invalid_argument("NoiseSchedule: alpha_bar not strictly decreasing");
            }
        }
    }

    static NoiseSchedule from_values(std::vector<double> values) {
        NoiseSchedule s;
        s.steps = static_cast<int>(values.size()) - 1;
        s.alpha_bar = std::move(values);
        s.validate();
        return s;
    }

    // Cosine schedule, normalized so alpha_bar[0] is exactly 1, with the
    // per-step ratio floored at 1e-3 to keep the tail positive.
    static NoiseSchedule cosine(int t_count) {
        if (t_count < 1) throw std::invalid_argument("NoiseSchedule: T must be >= 1");
        const double pi_half = 1.5707963267948966;
        const auto f = [&](double t) {
            const double a = std::cos((t / t_count + 0.008) / 1.008 * pi_half);
            return a * a;
        };
        const double f0 = f(0.0);
        NoiseSchedule s;
        s.steps = t_count;
        s.alpha_bar.resize(static_cast<std::size_t>(t_count) + 1);
        s.alpha_bar[0] = 1.0;
        double prev_raw = 1.0;
        for (int t = 1; t <= t_count; ++t) {
            const double raw = f(static_cast<double>(t)) / f0;
            const double ratio = std::max(raw / prev_raw, 1e-3);
            s.alpha_bar[static_cast<std::size_t>(t)] =
                s.alpha_bar[static_cast<std::size_t>(t) - 1] * std::min(ratio, 0.999999);
            prev_raw = raw;
        }
        s.validate();
        return s;
    }
};

}  // namespace styleset
