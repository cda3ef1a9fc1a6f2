#pragma once

// DDIM sampling and inversion plus the batched style-aligned generation
// drivers. Everything here is deterministic: sigma_t = 0 throughout, and the
// reference stream (batch element 0) is never influenced by the targets.

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "styleset/denoiser.hpp"
#include "styleset/gmm.hpp"
#include "styleset/rng.hpp"
#include "styleset/schedule.hpp"

namespace styleset {

// Fixed PCG stream id for sampling noise; per-image variation comes from the
// seed alone.
inline constexpr std::uint64_t kNoiseStream = 54;

template <class T>
TensorT<T> forward_noise(const TensorT<T>& x0, int t, const TensorT<T>& eps,
                         const NoiseSchedule& sched) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("forward_noise: shape mismatch");
    const double ab = sched.at(t);
    const T c0 = static_cast<T>(std::sqrt(ab));
    const T c1 = static_cast<T>(std::sqrt(1.0 - ab));
    TensorT<T> out(x0.dims());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c0 * x0[i] + c1 * eps[i];
    out.check_finite("forward_noise");
    return out;
}

// x_{t-1} = sqrt(ab[t-1]/ab[t]) x_t
//         + (sqrt(1-ab[t-1]) - sqrt(1-ab[t]) sqrt(ab[t-1]/ab[t])) eps_hat
//         + sigma_t z
template <class T>
TensorT<T> ddim_step(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t, double sigma_t,
                     const TensorT<T>* z, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.steps) throw std::invalid_argument("ddim_step: t out of [1,T]");
    if (sigma_t < 0.0) throw std::invalid_argument("ddim_step: sigma must be >= 0");
    if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_step: shape mismatch");
    const double ab_prev = sched.at(t - 1);
    const double ab = sched.at(t);
    const double c1 = std::sqrt(ab_prev / ab);
    const double c2 = std::sqrt(1.0 - ab_prev) - std::sqrt(1.0 - ab) * c1;
    const T c1t = static_cast<T>(c1), c2t = static_cast<T>(c2);
    TensorT<T> out(x_t.dims());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c1t * x_t[i] + c2t * eps_hat[i];
    if (sigma_t > 0.0) {
        if (z == nullptr || !z->same_shape(x_t)) {
            throw std::invalid_argument("ddim_step: missing noise for sigma > 0");
        }
        const T st = static_cast<T>(sigma_t);
        for (std::size_t i = 0; i < out.numel(); ++i) out[i] += st * (*z)[i];
    }
    out.check_finite("ddim_step");
    return out;
}

// Deterministic DDIM (sigma_t = 0).
template <class T>
TensorT<T> ddim_step(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t,
                     const NoiseSchedule& sched) {
    return ddim_step(x_t, eps_hat, t, 0.0, static_cast<const TensorT<T>*>(nullptr), sched);
}

// First-order inverse of ddim_step:
// x_{t+1} = sqrt(ab[t+1]/ab[t]) x_t
//         + (sqrt(1-ab[t+1]) - sqrt(ab[t+1](1-ab[t])/ab[t])) eps_hat
template <class T>
TensorT<T> ddim_invert_step(const TensorT<T>& x_t, const TensorT<T>& eps_hat, int t,
                            const NoiseSchedule& sched) {
    if (t < 0 || t >= sched.steps) throw std::invalid_argument("ddim_invert_step: t out of [0,T)");
    if (!x_t.same_shape(eps_hat)) throw std::invalid_argument("ddim_invert_step: shape mismatch");
    const double ab = sched.at(t);
    const double ab_next = sched.at(t + 1);
    const double c1 = std::sqrt(ab_next / ab);
    const double c2 = std::sqrt(1.0 - ab_next) - std::sqrt(ab_next * (1.0 - ab) / ab);
    const T c1t = static_cast<T>(c1), c2t = static_cast<T>(c2);
    TensorT<T> out(x_t.dims());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c1t * x_t[i] + c2t * eps_hat[i];
    out.check_finite("ddim_invert_step");
    return out;
}

// Epsilon predictor seen by the drivers. xs[0] is the reference stream.
template <class T>
class EpsModel {
public:
    virtual ~EpsModel() = default;
    virtual std::vector<TensorT<T>> eps_batch(const std::vector<TensorT<T>>& xs,
                                              const std::vector<Condition>& conds, int t,
                                              const ShareConfig& cfg, StepProbs<T>* probs) = 0;
    virtual std::vector<std::size_t> image_dims() const = 0;
};

template <class T>
class TransformerModel final : public EpsModel<T> {
public:
    TransformerModel(const DenoiserWeightsT<T>& weights, const NoiseSchedule& sched)
        : weights_(weights) {
        if (sched.steps != weights.config.timesteps) {
            throw std::invalid_argument(
                "TransformerModel: schedule steps != time-embedding table size");
        }
    }

    std::vector<TensorT<T>> eps_batch(const std::vector<TensorT<T>>& xs,
                                      const std::vector<Condition>& conds, int /*t*/,
                                      const ShareConfig& cfg, StepProbs<T>* probs) override {
        return eps_predict_batch(xs, conds, weights_, cfg, probs);
    }

    std::vector<std::size_t> image_dims() const override {
        const auto& c = weights_.config;
        return {static_cast<std::size_t>(c.image_size), static_cast<std::size_t>(c.image_size),
                static_cast<std::size_t>(c.channels)};
    }

private:
    const DenoiserWeightsT<T>& weights_;
};

// Analytic mixture model. Content conditioning restricts the components to
// the matching label (when labels are present). It has a single sharing site,
// gated by layer_mask entry 0.
template <class T>
class GmmModel final : public EpsModel<T> {
public:
    GmmModel(GmmSpecT<T> spec, const NoiseSchedule& sched) : spec_(std::move(spec)), sched_(sched) {
        spec_.validate();
    }

    std::vector<TensorT<T>> eps_batch(const std::vector<TensorT<T>>& xs,
                                      const std::vector<Condition>& conds, int t,
                                      const ShareConfig& cfg, StepProbs<T>* /*probs*/) override {
        if (xs.empty()) throw std::invalid_argument("GmmModel: empty batch");
        cfg.validate(1);
        const double ab = sched_.at(t);
        std::vector<TensorT<T>> eps(xs.size());
        const bool active = cfg.mode != ShareMode::None && cfg.layer_active(0) && xs.size() > 1;
        const GmmSpecT<T> ref_spec = conditioned(conds[0].content_id);
        eps[0] = gmm_eps(xs[0], ab, ref_spec);
        for (std::size_t i = 1; i < xs.size(); ++i) {
            const GmmSpecT<T> spec_i = conditioned(conds[i].content_id);
            if (!active) {
                eps[i] = gmm_eps(xs[i], ab, spec_i);
            } else {
                // Reference and Full collapse to the same thing for targets
                // here: the only foreign block this model can expose is the
                // reference stream's.
                eps[i] = gmm_eps_shared(xs[i], xs[0], ab, spec_i, ref_spec, cfg.lambda);
            }
        }
        return eps;
    }

    std::vector<std::size_t> image_dims() const override { return spec_.means[0].dims(); }

private:
    GmmSpecT<T> conditioned(int content_id) const {
        if (spec_.content_ids.empty()) return spec_;
        return gmm_conditioned(spec_, content_id);
    }

    GmmSpecT<T> spec_;
    const NoiseSchedule& sched_;
};

// Deterministic DDIM generation of a style-aligned set. conds[0] is the
// reference; one seed per batch element. The reference image is bitwise
// equal to the n=1 run with the same seed in every mode.
template <class T>
std::vector<TensorT<T>> sample_set(EpsModel<T>& model, std::vector<Condition> conds,
                                   const ShareConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                   const NoiseSchedule& sched, StepProbs<T>* probs_capture = nullptr,
                                   int probs_step = -1) {
    if (conds.empty()) throw std::invalid_argument("sample_set: empty batch");
    if (conds.size() != seeds.size()) {
        throw std::invalid_argument("sample_set: one seed per batch element required");
    }
    const auto dims = model.image_dims();
    std::vector<TensorT<T>> xs(conds.size());
    for (std::size_t i = 0; i < conds.size(); ++i) {
        Pcg32 rng(seeds[i], kNoiseStream);
        xs[i] = randn<T>(rng, dims);
    }
    for (int t = sched.steps; t >= 1; --t) {
        for (auto& c : conds) c.t = t;
        StepProbs<T>* sink = (probs_capture != nullptr && t == probs_step) ? probs_capture : nullptr;
        const std::vector<TensorT<T>> eps = model.eps_batch(xs, conds, t, cfg, sink);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            xs[i] = ddim_step(xs[i], eps[i], t, sched);
        }
    }
    return xs;
}

// Deterministic inversion x_0 -> x_T. Sharing is disabled throughout; only
// the reference is being inverted. states[t] = x_t for t in [0, T].
template <class T>
std::vector<TensorT<T>> ddim_invert(EpsModel<T>& model, const TensorT<T>& x0, Condition cond,
                                    const NoiseSchedule& sched) {
    std::vector<TensorT<T>> states;
    states.reserve(static_cast<std::size_t>(sched.steps) + 1);
    states.push_back(x0);
    const ShareConfig plain;
    for (int t = 0; t < sched.steps; ++t) {
        cond.t = t;
        try {
            const auto eps = model.eps_batch({states.back()}, {cond}, t, plain, nullptr);
            states.push_back(ddim_invert_step(states.back(), eps[0], t, sched));
        } catch (const std::runtime_error& e) {
            throw std::runtime_error("ddim_invert: erroneous trajectory at step " +
                                     std::to_string(t) + " (" + e.what() + ")");
        }
    }
    return states;
}

// Restyle targets to an input image's style: invert the image, then let the
// reference stream replay the recorded states x_T..x_0 (sharing its K/V at
// each step) while the targets sample from fresh noise. Returns the replayed
// reconstruction followed by the targets.
template <class T>
std::vector<TensorT<T>> restyle_from_image(EpsModel<T>& model, const TensorT<T>& image,
                                           Condition ref_cond,
                                           const std::vector<Condition>& target_conds,
                                           const ShareConfig& cfg,
                                           const std::vector<std::uint64_t>& target_seeds,
                                           const NoiseSchedule& sched,
                                           std::vector<TensorT<T>>* trajectory_out = nullptr) {
    if (target_conds.size() != target_seeds.size()) {
        throw std::invalid_argument("restyle_from_image: one seed per target required");
    }
    const std::vector<TensorT<T>> traj = ddim_invert(model, image, ref_cond, sched);
    if (trajectory_out != nullptr) *trajectory_out = traj;
    std::vector<TensorT<T>> result;
    result.push_back(traj[0]);
    if (target_conds.empty()) return result;

    const auto dims = model.image_dims();
    std::vector<TensorT<T>> xs(target_conds.size() + 1);
    std::vector<Condition> conds(target_conds.size() + 1);
    conds[0] = ref_cond;
    for (std::size_t j = 0; j < target_conds.size(); ++j) {
        Pcg32 rng(target_seeds[j], kNoiseStream);
        xs[j + 1] = randn<T>(rng, dims);
        conds[j + 1] = target_conds[j];
    }
    for (int t = sched.steps; t >= 1; --t) {
        xs[0] = traj[static_cast<std::size_t>(t)];
        for (auto& c : conds) c.t = t;
        const auto eps = model.eps_batch(xs, conds, t, cfg, nullptr);
        for (std::size_t j = 1; j < xs.size(); ++j) {
            xs[j] = ddim_step(xs[j], eps[j], t, sched);
        }
    }
    for (std::size_t j = 1; j < xs.size(); ++j) result.push_back(std::move(xs[j]));
    return result;
}

}  // namespace styleset
