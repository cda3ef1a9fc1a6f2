#pragma once

// PCG32 (XSH-RR) with Box-Muller gaussians. Seeds are portable: the same
// (seed, stream) pair yields the same byte-for-byte draw sequence on every
// platform, which all of the reproducibility contracts lean on.

#include <cstdint>
#include <cmath>
#include <vector>

#include "styleset/tensor.hpp"

namespace styleset {

class Pcg32 {
public:
    static constexpr std::uint64_t kMultiplier = 6364136223846793005ULL;

    Pcg32(std::uint64_t seed, std::uint64_t stream) {
        state_ = 0;
        inc_ = (stream << 1u) | 1u;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        const std::uint64_t old = state_;
        state_ = old * kMultiplier + inc_;
        const auto xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        const auto rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    // Uniform in [0, 1).
    double next_unit() { return static_cast<double>(next_u32()) * 0x1p-32; }

    // Uniform integer in [0, bound) by rejection; unbiased.
    std::uint32_t next_below(std::uint32_t bound) {
        const std::uint32_t threshold = (~bound + 1u) % bound;
        for (;;) {
            const std::uint32_t r = next_u32();
            if (r >= threshold) return r % bound;
        }
    }

    std::uint64_t state() const { return state_; }
    std::uint64_t inc() const { return inc_; }

private:
    std::uint64_t state_;
    std::uint64_t inc_;
};

// One standard gaussian draw. Uses a consecutive uniform pair; u1 is mapped
// into (0, 1] so the log never sees zero. The sine-branch value of each pair
// is buffered and handed out on the next call.
class GaussianSource {
public:
    explicit GaussianSource(Pcg32& rng) : rng_(rng) {}

    double next() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(rng_.next_u32()) + 1.0) * 0x1p-32;
        const double u2 = static_cast<double>(rng_.next_u32()) * 0x1p-32;
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    Pcg32& rng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Standard-normal tensor. Each call starts a fresh Box-Muller pairing, so the
// draw sequence depends only on (rng state, numel).
template <class T>
TensorT<T> randn(Pcg32& rng, std::vector<std::size_t> dims) {
    TensorT<T> out(std::move(dims));
    GaussianSource gauss(rng);
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = static_cast<T>(gauss.next());
    return out;
}

}  // namespace styleset
