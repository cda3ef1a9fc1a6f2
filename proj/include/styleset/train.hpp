#pragma once

// Hand-written reverse-mode gradients for the fixed denoiser architecture,
// plus a plain-SGD training loop. Training always runs with sharing disabled;
// sharing is strictly an inference-time behavior.

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "styleset/denoiser.hpp"
#include "styleset/diffusion.hpp"
#include "styleset/rng.hpp"
#include "styleset/schedule.hpp"

namespace styleset {

template <class T>
struct LayerTrace {
    TensorT<T> x_in;
    std::vector<TensorT<T>> q, k, v, probs;  // per head
    TensorT<T> concat;
    TensorT<T> x_mid;  // after attention residual
    TensorT<T> z1;     // ffn pre-activation
    TensorT<T> g;      // gelu(z1)
};

template <class T>
struct ForwardTrace {
    Condition cond;
    TensorT<T> patches;
    TensorT<T> x_embed;
    std::vector<LayerTrace<T>> layers;
    TensorT<T> x_final;
    TensorT<T> eps_tokens;
    TensorT<T> eps_image;
    bool recorded = false;
};

// Plain-mode forward pass that records every intermediate needed by
// backward(). Uses the same kernels in the same order as eps_predict, so the
// outputs are bit-identical (asserted in the tests).
template <class T>
ForwardTrace<T> eps_forward_traced(const TensorT<T>& image, const Condition& cond,
                                   const DenoiserWeightsT<T>& w) {
    const ModelConfig& mc = w.config;
    const auto heads = static_cast<std::size_t>(mc.heads);
    const auto dk = static_cast<std::size_t>(mc.d_head());
    ForwardTrace<T> trace;
    trace.cond = cond;
    trace.patches = patchify(image, mc);
    trace.x_embed = embed_tokens(image, cond, w);
    TensorT<T> x = trace.x_embed;
    trace.layers.resize(w.blocks.size());
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const auto& blk = w.blocks[l];
        LayerTrace<T>& lt = trace.layers[l];
        lt.x_in = x;
        const std::size_t m = x.rows();
        lt.concat = TensorT<T>({m, heads * dk});
        for (std::size_t h = 0; h < heads; ++h) {
            lt.q.push_back(matmul(x, blk.attn.wq[h]));
            lt.k.push_back(matmul(x, blk.attn.wk[h]));
            lt.v.push_back(matmul(x, blk.attn.wv[h]));
            AttentionOut<T> out = scaled_dot_attention(lt.q[h], lt.k[h], lt.v[h]);
            lt.probs.push_back(out.probs);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < dk; ++j) lt.concat(i, h * dk + j) = out.out(i, j);
        }
        lt.x_mid = add(lt.x_in, matmul(lt.concat, blk.attn.wo));
        lt.z1 = matmul(lt.x_mid, blk.ffn.w1);
        lt.g = gelu(lt.z1);
        x = add(lt.x_mid, matmul(lt.g, blk.ffn.w2));
    }
    trace.x_final = x;
    trace.eps_tokens = matmul(x, w.out_proj);
    trace.eps_image = unpatchify(trace.eps_tokens, mc);
    trace.recorded = true;
    return trace;
}

template <class T>
T mse_loss(const TensorT<T>& pred, const TensorT<T>& target) {
    if (!pred.same_shape(target)) throw std::invalid_argument("mse_loss: shape mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.numel(); ++i) {
        const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
        acc += d * d;
    }
    return static_cast<T>(acc / static_cast<double>(pred.numel()));
}

namespace detail {

// dL/dlogits for probs = softmax_rows(logits).
template <class T>
TensorT<T> softmax_backward(const TensorT<T>& probs, const TensorT<T>& dprobs) {
    TensorT<T> out(probs.dims());
    const std::size_t m = probs.rows(), n = probs.cols();
    for (std::size_t i = 0; i < m; ++i) {
        const T* p = probs.data() + i * n;
        const T* dp = dprobs.data() + i * n;
        T dot = T(0);
        for (std::size_t j = 0; j < n; ++j) dot += p[j] * dp[j];
        T* o = out.data() + i * n;
        for (std::size_t j = 0; j < n; ++j) o[j] = p[j] * (dp[j] - dot);
    }
    return out;
}

template <class T>
void add_matmul_at_b(const TensorT<T>& a, const TensorT<T>& b, TensorT<T>& acc) {
    // acc += a^T b
    axpy(T(1), matmul(transpose(a), b), acc);
}

}  // namespace detail

// Exact reverse-mode gradients for the recorded forward pass. `eps_target`
// is the noise the loss compares against; gradients accumulate into `grads`.
template <class T>
void backward(const ForwardTrace<T>& trace, const TensorT<T>& eps_target,
              const DenoiserWeightsT<T>& w, GradBundleT<T>& grads) {
    if (!trace.recorded) throw std::invalid_argument("backward: unrecorded forward");
    const ModelConfig& mc = w.config;
    const auto heads = static_cast<std::size_t>(mc.heads);
    const auto dk = static_cast<std::size_t>(mc.d_head());
    const auto d = static_cast<std::size_t>(mc.d_model);

    // d(mse)/d(eps_image)
    TensorT<T> d_img(trace.eps_image.dims());
    const T scale_factor = T(2) / static_cast<T>(trace.eps_image.numel());
    for (std::size_t i = 0; i < d_img.numel(); ++i) {
        d_img[i] = scale_factor * (trace.eps_image[i] - eps_target[i]);
    }
    TensorT<T> d_tokens = patchify(d_img, mc);  // unpatchify is a permutation

    detail::add_matmul_at_b(trace.x_final, d_tokens, grads.out_proj);
    TensorT<T> dx = matmul(d_tokens, transpose(w.out_proj));

    for (std::size_t l = w.blocks.size(); l-- > 0;) {
        const auto& blk = w.blocks[l];
        const LayerTrace<T>& lt = trace.layers[l];

        // x_out = x_mid + gelu(x_mid w1) w2
        detail::add_matmul_at_b(lt.g, dx, grads.blocks[l].ffn.w2);
        TensorT<T> dg = matmul(dx, transpose(blk.ffn.w2));
        TensorT<T> dz1(lt.z1.dims());
        for (std::size_t i = 0; i < dz1.numel(); ++i) {
            dz1[i] = dg[i] * gelu_grad_scalar(lt.z1[i]);
        }
        detail::add_matmul_at_b(lt.x_mid, dz1, grads.blocks[l].ffn.w1);
        TensorT<T> dx_mid = add(dx, matmul(dz1, transpose(blk.ffn.w1)));

        // x_mid = x_in + concat wo
        detail::add_matmul_at_b(lt.concat, dx_mid, grads.blocks[l].attn.wo);
        TensorT<T> dconcat = matmul(dx_mid, transpose(blk.attn.wo));
        TensorT<T> dx_in = dx_mid;  // residual path

        const std::size_t m = lt.x_in.rows();
        const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dk)));
        for (std::size_t h = 0; h < heads; ++h) {
            TensorT<T> dhead({m, dk});
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < dk; ++j) dhead(i, j) = dconcat(i, h * dk + j);

            TensorT<T> dprobs = matmul(dhead, transpose(lt.v[h]));
            TensorT<T> dv = matmul(transpose(lt.probs[h]), dhead);
            TensorT<T> dlogits = detail::softmax_backward(lt.probs[h], dprobs);
            for (std::size_t i = 0; i < dlogits.numel(); ++i) dlogits[i] *= inv_sqrt_dk;
            TensorT<T> dq = matmul(dlogits, lt.k[h]);
            TensorT<T> dkk = matmul(transpose(dlogits), lt.q[h]);

            detail::add_matmul_at_b(lt.x_in, dq, grads.blocks[l].attn.wq[h]);
            detail::add_matmul_at_b(lt.x_in, dkk, grads.blocks[l].attn.wk[h]);
            detail::add_matmul_at_b(lt.x_in, dv, grads.blocks[l].attn.wv[h]);
            axpy(T(1), matmul(dq, transpose(blk.attn.wq[h])), dx_in);
            axpy(T(1), matmul(dkk, transpose(blk.attn.wk[h])), dx_in);
            axpy(T(1), matmul(dv, transpose(blk.attn.wv[h])), dx_in);
        }
        dx = std::move(dx_in);
    }

    // x_embed = patches patch_embed + pos + content[c] + time[t]
    axpy(T(1), dx, grads.pos_embed);
    const auto c_row = static_cast<std::size_t>(trace.cond.content_id) * d;
    const auto t_row = static_cast<std::size_t>(trace.cond.t) * d;
    for (std::size_t i = 0; i < dx.rows(); ++i) {
        const T* row = dx.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) {
            grads.content_embed[c_row + j] += row[j];
            grads.time_embed[t_row + j] += row[j];
        }
    }
    detail::add_matmul_at_b(trace.patches, dx, grads.patch_embed);
}

// Deterministic epsilon-prediction loss at a fixed (t, eps) draw.
template <class T>
T loss_at(const TensorT<T>& x0, int content_id, int t, const TensorT<T>& eps,
          const NoiseSchedule& sched, const DenoiserWeightsT<T>& w) {
    const TensorT<T> x_t = forward_noise(x0, t, eps, sched);
    const Condition cond{content_id, t};
    return mse_loss(eps_predict(x_t, cond, w), eps);
}

// Spec objective: t uniform in [1,T], eps ~ N(0,I).
template <class T>
T loss(const TensorT<T>& x0, int content_id, Pcg32& rng, const NoiseSchedule& sched,
       const DenoiserWeightsT<T>& w) {
    const int t = 1 + static_cast<int>(rng.next_below(static_cast<std::uint32_t>(sched.steps)));
    const TensorT<T> eps = randn<T>(rng, x0.dims());
    return loss_at(x0, content_id, t, eps, sched, w);
}

template <class T>
std::pair<T, GradBundleT<T>> loss_and_grad(const TensorT<T>& x0, int content_id, int t,
                                           const TensorT<T>& eps, const NoiseSchedule& sched,
                                           const DenoiserWeightsT<T>& w) {
    const TensorT<T> x_t = forward_noise(x0, t, eps, sched);
    const Condition cond{content_id, t};
    const ForwardTrace<T> trace = eps_forward_traced(x_t, cond, w);
    GradBundleT<T> grads = zeros_like(w);
    backward(trace, eps, w, grads);
    return {mse_loss(trace.eps_image, eps), std::move(grads)};
}

template <class T>
std::vector<TensorT<T>*> tensor_list(DenoiserWeightsT<T>& w) {
    std::vector<TensorT<T>*> out;
    for_each_tensor(w, [&](const char*, TensorT<T>& t) { out.push_back(&t); });
    return out;
}

template <class T>
std::vector<const TensorT<T>*> tensor_list(const DenoiserWeightsT<T>& w) {
    std::vector<const TensorT<T>*> out;
    for_each_tensor(w, [&](const char*, const TensorT<T>& t) { out.push_back(&t); });
    return out;
}

template <class T>
void sgd_step(DenoiserWeightsT<T>& w, DenoiserWeightsT<T>& grads, T lr) {
    auto ws = tensor_list(w);
    auto gs = tensor_list(grads);
    for (std::size_t i = 0; i < ws.size(); ++i) {
        for (std::size_t j = 0; j < ws[i]->numel(); ++j) (*ws[i])[j] -= lr * (*gs[i])[j];
    }
}

struct TrainConfig {
    int epochs = 30;
    double lr = 1e-3;
    int batch = 32;
};

struct TrainReport {
    std::vector<std::pair<int, double>> loss_curve;  // (step, batch mean loss)
    double initial_loss = 0.0;
    double final_loss = 0.0;
};

// Plain minibatch SGD, single-threaded, bitwise reproducible for a fixed
// (seed, dataset, hyperparameters). Aborts with the step index if the loss
// goes non-finite.
template <class T>
TrainReport train(const std::vector<TensorT<T>>& images, const std::vector<int>& content_ids,
                  const TrainConfig& tc, Pcg32& rng, const NoiseSchedule& sched,
                  DenoiserWeightsT<T>& w) {
    if (images.empty() || images.size() != content_ids.size()) {
        throw std::invalid_argument("train: empty or mismatched dataset");
    }
    if (tc.epochs < 0 || tc.batch < 1) throw std::invalid_argument("train: bad config");
    TrainReport report;
    std::vector<std::size_t> order(images.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    int step = 0;
    for (int epoch = 0; epoch < tc.epochs; ++epoch) {
        // Fisher-Yates with the run's rng; part of the reproducible draw order.
        for (std::size_t i = order.size(); i-- > 1;) {
            const auto j = rng.next_below(static_cast<std::uint32_t>(i + 1));
            std::swap(order[i], order[j]);
        }
        for (std::size_t start = 0; start + static_cast<std::size_t>(tc.batch) <= order.size();
             start += static_cast<std::size_t>(tc.batch)) {
            GradBundleT<T> grads = zeros_like(w);
            double batch_loss = 0.0;
            try {
                for (int b = 0; b < tc.batch; ++b) {
                    const std::size_t idx = order[start + static_cast<std::size_t>(b)];
                    const int t = 1 + static_cast<int>(
                                          rng.next_below(static_cast<std::uint32_t>(sched.steps)));
                    const TensorT<T> eps = randn<T>(rng, images[idx].dims());
                    const TensorT<T> x_t = forward_noise(images[idx], t, eps, sched);
                    const Condition cond{content_ids[idx], t};
                    const ForwardTrace<T> trace = eps_forward_traced(x_t, cond, w);
                    backward(trace, eps, w, grads);
                    batch_loss += static_cast<double>(mse_loss(trace.eps_image, eps));
                }
            } catch (const std::runtime_error& e) {
                throw std::runtime_error("train: diverged at step " + std::to_string(step) + " (" +
                                         e.what() + ")");
            }
            batch_loss /= tc.batch;
            if (!std::isfinite(batch_loss)) {
                throw std::runtime_error("train: diverged (non-finite loss) at step " +
                                         std::to_string(step));
            }
            auto gs = tensor_list(grads);
            const T inv_batch = T(1) / static_cast<T>(tc.batch);
            for (auto* g : gs) {
                for (std::size_t j = 0; j < g->numel(); ++j) (*g)[j] *= inv_batch;
            }
            sgd_step(w, grads, static_cast<T>(tc.lr));
            if (step == 0) report.initial_loss = batch_loss;
            report.final_loss = batch_loss;
            report.loss_curve.emplace_back(step, batch_loss);
            ++step;
        }
    }
    return report;
}

}  // namespace styleset
