#pragma once

// Analytic epsilon predictor for a Gaussian-mixture data distribution.
// Under x_t = sqrt(ab) x0 + sqrt(1-ab) eps with x0 ~ sum_k pi_k N(m_k, s_k^2 I),
// the exact posterior gives
//   r_k ∝ pi_k N(x_t; sqrt(ab) m_k, (ab s_k^2 + 1 - ab) I)
//   E[x0|x_t] = sum_k r_k (sqrt(ab) s_k^2 x_t + (1-ab) m_k) / (ab s_k^2 + 1-ab)
//   eps*      = (x_t - sqrt(ab) E[x0|x_t]) / sqrt(1-ab)
//
// The responsibilities are a softmax over per-component log-likelihood
// logits, which is what makes the attention-sharing analogue below possible:
// a target's softmax can run over [reference-block logits ; own logits] with
// values contributed by the owning stream's state and lambda rescaling the
// reference block — the same concatenated-key construction the transformer
// path uses.

#include <cmath>
#include <stdexcept>
#include <vector>

#include "styleset/tensor.hpp"

namespace styleset {

template <class T>
struct GmmSpecT {
    std::vector<double> weights;    // pi_k, sums to 1
    std::vector<TensorT<T>> means;  // image-shaped
    std::vector<double> sigmas;     // s_k > 0, isotropic
    std::vector<int> content_ids;   // optional labels; empty when unused
    std::vector<int> style_ids;

    std::size_t size() const { return weights.size(); }

    void validate() const {
        if (weights.empty() || weights.size() != means.size() ||
            weights.size() != sigmas.size()) {
            throw std::invalid_argument("GmmSpec: malformed component lists");
        }
        double total = 0.0;
        for (double w : weights) {
            if (!(w > 0.0)) throw std::invalid_argument("GmmSpec: weights must be positive");
            total += w;
        }
        if (std::abs(total - 1.0) > 1e-6) {
            throw std::invalid_argument("GmmSpec: weights must sum to 1");
        }
        for (double s : sigmas) {
            if (!(s > 0.0)) throw std::invalid_argument("GmmSpec: sigmas must be positive");
        }
        for (const auto& m : means) {
            if (!m.same_shape(means[0])) {
                throw std::invalid_argument("GmmSpec: mean shape mismatch");
            }
        }
    }
};

using GmmSpec = GmmSpecT<float>;

// Keep only the components whose content label matches; renormalize pi.
template <class T>
GmmSpecT<T> gmm_conditioned(const GmmSpecT<T>& spec, int content_id) {
    if (spec.content_ids.empty()) return spec;
    GmmSpecT<T> out;
    double total = 0.0;
    for (std::size_t k = 0; k < spec.size(); ++k) {
        if (spec.content_ids[k] != content_id) continue;
        out.weights.push_back(spec.weights[k]);
        out.means.push_back(spec.means[k]);
        out.sigmas.push_back(spec.sigmas[k]);
        out.content_ids.push_back(spec.content_ids[k]);
        if (!spec.style_ids.empty()) out.style_ids.push_back(spec.style_ids[k]);
        total += static_cast<double>(spec.weights[k]);
    }
    if (out.weights.empty()) throw std::invalid_argument("gmm_conditioned: no such content");
    for (auto& w : out.weights) w /= total;
    return out;
}

namespace detail {

// log pi_k - D/2 log(2 pi v_k) - ||x - sqrt(ab) m_k||^2 / (2 v_k)
template <class T>
std::vector<double> gmm_logits(const TensorT<T>& x_t, double alpha_bar,
                               const GmmSpecT<T>& spec) {
    const double sqrt_ab = std::sqrt(alpha_bar);
    const auto dim = static_cast<double>(x_t.numel());
    std::vector<double> logits(spec.size());
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double s2 = spec.sigmas[k] * spec.sigmas[k];
        const double var = alpha_bar * s2 + (1.0 - alpha_bar);
        double sq = 0.0;
        const auto& mean = spec.means[k];
        for (std::size_t i = 0; i < x_t.numel(); ++i) {
            const double d = static_cast<double>(x_t[i]) - sqrt_ab * static_cast<double>(mean[i]);
            sq += d * d;
        }
        logits[k] = std::log(spec.weights[k]) -
                    0.5 * dim * std::log(2.0 * 3.14159265358979323846 * var) -
                    0.5 * sq / var;
    }
    return logits;
}

inline std::vector<double> softmax_logits(const std::vector<double>& logits) {
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    std::vector<double> p(logits.size());
    double sum = 0.0;
    for (std::size_t k = 0; k < logits.size(); ++k) {
        p[k] = std::exp(logits[k] - mx);
        sum += p[k];
    }
    for (auto& v : p) v /= sum;
    return p;
}

// Accumulate r_k * (sqrt(ab) s_k^2 x_owner + (1-ab) m_k) / v_k into e.
template <class T>
void accumulate_posterior(std::vector<double>& e, const TensorT<T>& x_owner,
                          double alpha_bar, const GmmSpecT<T>& spec,
                          const std::vector<double>& resp) {
    const double sqrt_ab = std::sqrt(alpha_bar);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        if (resp[k] == 0.0) continue;
        const double s2 = spec.sigmas[k] * spec.sigmas[k];
        const double var = alpha_bar * s2 + (1.0 - alpha_bar);
        const double cx = resp[k] * sqrt_ab * s2 / var;
        const double cm = resp[k] * (1.0 - alpha_bar) / var;
        const auto& mean = spec.means[k];
        for (std::size_t i = 0; i < e.size(); ++i) {
            e[i] += cx * static_cast<double>(x_owner[i]) + cm * static_cast<double>(mean[i]);
        }
    }
}

template <class T>
TensorT<T> eps_from_posterior(const TensorT<T>& x_t, double alpha_bar,
                              const std::vector<double>& e) {
    const double sqrt_ab = std::sqrt(alpha_bar);
    const double inv = 1.0 / std::sqrt(1.0 - alpha_bar);
    TensorT<T> eps(x_t.dims());
    for (std::size_t i = 0; i < eps.numel(); ++i) {
        eps[i] = static_cast<T>((static_cast<double>(x_t[i]) - sqrt_ab * e[i]) * inv);
    }
    eps.check_finite("gmm_eps");
    return eps;
}

}  // namespace detail

template <class T>
TensorT<T> gmm_eps(const TensorT<T>& x_t, double alpha_bar, const GmmSpecT<T>& spec) {
    spec.validate();
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) {
        throw std::invalid_argument("gmm_eps: alpha_bar out of (0,1]");
    }
    if (alpha_bar == 1.0) return TensorT<T>(x_t.dims());  // x_t = x_0, no noise
    const auto logits = detail::gmm_logits(x_t, alpha_bar, spec);
    const auto resp = detail::softmax_logits(logits);
    std::vector<double> e(x_t.numel(), 0.0);
    detail::accumulate_posterior(e, x_t, alpha_bar, spec, resp);
    return detail::eps_from_posterior(x_t, alpha_bar, e);
}

// Shared-attention analogue for the analytic model: the target's component
// softmax runs over the concatenation of the reference stream's logits and
// its own, with lambda scaling the reference block. Reference-block values
// are built from the reference state, so the target's posterior mean is
// pulled toward the reference trajectory. AdaIN does not apply here: the
// "feature matrix" has a single row, for which instance statistics are
// degenerate.
template <class T>
TensorT<T> gmm_eps_shared(const TensorT<T>& x_target, const TensorT<T>& x_reference,
                          double alpha_bar, const GmmSpecT<T>& target_spec,
                          const GmmSpecT<T>& reference_spec, double lambda,
                          std::vector<double>* probs_out = nullptr) {
    target_spec.validate();
    reference_spec.validate();
    if (!(lambda > 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("gmm_eps_shared: lambda out of (0,1]");
    }
    if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) {
        throw std::invalid_argument("gmm_eps_shared: alpha_bar out of (0,1]");
    }
    if (alpha_bar == 1.0) return TensorT<T>(x_target.dims());
    auto ref_logits = detail::gmm_logits(x_reference, alpha_bar, reference_spec);
    const auto own_logits = detail::gmm_logits(x_target, alpha_bar, target_spec);
    std::vector<double> joint;
    joint.reserve(ref_logits.size() + own_logits.size());
    for (double v : ref_logits) joint.push_back(lambda * v);
    for (double v : own_logits) joint.push_back(v);
    const auto resp = detail::softmax_logits(joint);
    if (probs_out != nullptr) *probs_out = resp;

    const std::vector<double> ref_resp(resp.begin(),
                                       resp.begin() + static_cast<std::ptrdiff_t>(ref_logits.size()));
    const std::vector<double> own_resp(resp.begin() + static_cast<std::ptrdiff_t>(ref_logits.size()),
                                       resp.end());
    std::vector<double> e(x_target.numel(), 0.0);
    detail::accumulate_posterior(e, x_reference, alpha_bar, reference_spec, ref_resp);
    detail::accumulate_posterior(e, x_target, alpha_bar, target_spec, own_resp);
    return detail::eps_from_posterior(x_target, alpha_bar, e);
}

}  // namespace styleset
