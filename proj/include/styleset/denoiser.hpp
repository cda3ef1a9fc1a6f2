#pragma once

// The epsilon-prediction transformer: patchify, additive condition/timestep
// embeddings, residual attention blocks with pluggable sharing, feed-forward
// blocks, unpatchify. Also the lockstep batch engine that evaluates a set of
// streams under a ShareConfig with stream 0 as the reference.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "styleset/attention.hpp"
#include "styleset/rng.hpp"
#include "styleset/runtime.hpp"
#include "styleset/tensor.hpp"

namespace styleset {

struct ModelConfig {
    int image_size = 16;
    int channels = 3;
    int patch = 4;
    int d_model = 64;
    int heads = 4;
    int layers = 4;
    int contents = 6;
    int timesteps = 50;  // time-embedding table covers t in [0, timesteps]

    int grid() const { return image_size / patch; }
    int tokens() const { return grid() * grid(); }
    int patch_dim() const { return patch * patch * channels; }
    int d_head() const { return d_model / heads; }

    void validate() const {
        if (image_size <= 0 || channels <= 0 || patch <= 0 || d_model <= 0 ||
            heads <= 0 || layers <= 0 || contents <= 0 || timesteps <= 0) {
            throw std::invalid_argument("ModelConfig: non-positive field");
        }
        if (image_size % patch != 0) {
            throw std::invalid_argument("ModelConfig: image size not divisible by patch");
        }
        if (d_model % heads != 0) {
            throw std::invalid_argument("ModelConfig: d_model not divisible by heads");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

struct Condition {
    int content_id = 0;
    int t = 0;
};

template <class T>
struct FeedForwardWeightsT {
    TensorT<T> w1;  // d_model x 4*d_model
    TensorT<T> w2;  // 4*d_model x d_model
};

template <class T>
struct BlockWeightsT {
    AttentionLayerWeightsT<T> attn;
    FeedForwardWeightsT<T> ffn;
};

template <class T>
struct DenoiserWeightsT {
    ModelConfig config;
    TensorT<T> patch_embed;    // patch_dim x d_model
    TensorT<T> pos_embed;      // tokens x d_model
    TensorT<T> content_embed;  // contents x d_model
    TensorT<T> time_embed;     // (timesteps+1) x d_model
    std::vector<BlockWeightsT<T>> blocks;
    TensorT<T> out_proj;  // d_model x patch_dim
};

using DenoiserWeights = DenoiserWeightsT<float>;

// Gradients are shape-congruent with the weights; reuse the container.
template <class T>
using GradBundleT = DenoiserWeightsT<T>;

// Stable tensor naming; also fixes the serialization order.
template <class T, class F>
void for_each_tensor(DenoiserWeightsT<T>& w, F&& f) {
    f("patch_embed", w.patch_embed);
    f("pos_embed", w.pos_embed);
    f("content_embed", w.content_embed);
    f("time_embed", w.time_embed);
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        auto& blk = w.blocks[l];
        for (std::size_t h = 0; h < blk.attn.wq.size(); ++h) {
            const std::string head = prefix + "head" + std::to_string(h) + ".";
            f((head + "wq").c_str(), blk.attn.wq[h]);
            f((head + "wk").c_str(), blk.attn.wk[h]);
            f((head + "wv").c_str(), blk.attn.wv[h]);
        }
        f((prefix + "wo").c_str(), blk.attn.wo);
        f((prefix + "ffn.w1").c_str(), blk.ffn.w1);
        f((prefix + "ffn.w2").c_str(), blk.ffn.w2);
    }
    f("out_proj", w.out_proj);
}

template <class T, class F>
void for_each_tensor(const DenoiserWeightsT<T>& w, F&& f) {
    for_each_tensor(const_cast<DenoiserWeightsT<T>&>(w),
                    [&](const char* name, TensorT<T>& t) { f(name, const_cast<const TensorT<T>&>(t)); });
}

template <class T>
DenoiserWeightsT<T> zeros_like(const DenoiserWeightsT<T>& w) {
    DenoiserWeightsT<T> g;
    g.config = w.config;
    g.patch_embed = TensorT<T>(w.patch_embed.dims());
    g.pos_embed = TensorT<T>(w.pos_embed.dims());
    g.content_embed = TensorT<T>(w.content_embed.dims());
    g.time_embed = TensorT<T>(w.time_embed.dims());
    g.blocks.resize(w.blocks.size());
    for (std::size_t l = 0; l < w.blocks.size(); ++l) {
        const auto& src = w.blocks[l];
        auto& dst = g.blocks[l];
        dst.attn.wq.reserve(src.attn.wq.size());
        for (const auto& t : src.attn.wq) dst.attn.wq.emplace_back(t.dims());
        for (const auto& t : src.attn.wk) dst.attn.wk.emplace_back(t.dims());
        for (const auto& t : src.attn.wv) dst.attn.wv.emplace_back(t.dims());
        dst.attn.wo = TensorT<T>(src.attn.wo.dims());
        dst.ffn.w1 = TensorT<T>(src.ffn.w1.dims());
        dst.ffn.w2 = TensorT<T>(src.ffn.w2.dims());
    }
    g.out_proj = TensorT<T>(w.out_proj.dims());
    return g;
}

template <class T>
DenoiserWeightsT<T> init_denoiser(const ModelConfig& cfg, Pcg32& rng) {
    cfg.validate();
    DenoiserWeightsT<T> w;
    w.config = cfg;
    const auto proj = [&](std::size_t rows, std::size_t cols) {
        const T s = static_cast<T>(1.0 / std::sqrt(static_cast<double>(rows)));
        return scale(randn<T>(rng, {rows, cols}), s);
    };
    const auto table = [&](std::size_t rows, std::size_t cols) {
        return scale(randn<T>(rng, {rows, cols}), T(0.02));
    };
    const auto pd = static_cast<std::size_t>(cfg.patch_dim());
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const auto dk = static_cast<std::size_t>(cfg.d_head());
    w.patch_embed = proj(pd, d);
    w.pos_embed = table(static_cast<std::size_t>(cfg.tokens()), d);
    w.content_embed = table(static_cast<std::size_t>(cfg.contents), d);
    w.time_embed = table(static_cast<std::size_t>(cfg.timesteps) + 1, d);
    w.blocks.resize(static_cast<std::size_t>(cfg.layers));
    for (auto& blk : w.blocks) {
        for (int h = 0; h < cfg.heads; ++h) {
            blk.attn.wq.push_back(proj(d, dk));
            blk.attn.wk.push_back(proj(d, dk));
            blk.attn.wv.push_back(proj(d, dk));
        }
        blk.attn.wo = scale(proj(d, d), T(0.5));
        blk.ffn.w1 = proj(d, 4 * d);
        blk.ffn.w2 = scale(proj(4 * d, d), T(0.5));
    }
    w.out_proj = scale(proj(d, pd), T(0.1));
    return w;
}

template <class T>
TensorT<T> patchify(const TensorT<T>& image, const ModelConfig& cfg) {
    const auto h = static_cast<std::size_t>(cfg.image_size);
    const auto c = static_cast<std::size_t>(cfg.channels);
    if (image.rank() != 3 || image.dim(0) != h || image.dim(1) != h || image.dim(2) != c) {
        throw std::invalid_argument("patchify: image dims mismatch");
    }
    const auto p = static_cast<std::size_t>(cfg.patch);
    const auto g = static_cast<std::size_t>(cfg.grid());
    TensorT<T> out({g * g, p * p * c});
    for (std::size_t gy = 0; gy < g; ++gy) {
        for (std::size_t gx = 0; gx < g; ++gx) {
            T* row = out.data() + (gy * g + gx) * out.cols();
            for (std::size_t py = 0; py < p; ++py) {
                for (std::size_t px = 0; px < p; ++px) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        row[(py * p + px) * c + ch] =
                            image[((gy * p + py) * h + (gx * p + px)) * c + ch];
                    }
                }
            }
        }
    }
    return out;
}

template <class T>
TensorT<T> unpatchify(const TensorT<T>& tokens, const ModelConfig& cfg) {
    const auto p = static_cast<std::size_t>(cfg.patch);
    const auto g = static_cast<std::size_t>(cfg.grid());
    const auto c = static_cast<std::size_t>(cfg.channels);
    const auto h = static_cast<std::size_t>(cfg.image_size);
    if (tokens.rank() != 2 || tokens.rows() != g * g || tokens.cols() != p * p * c) {
        throw std::invalid_argument("unpatchify: token dims mismatch");
    }
    TensorT<T> image({h, h, c});
    for (std::size_t gy = 0; gy < g; ++gy) {
        for (std::size_t gx = 0; gx < g; ++gx) {
            const T* row = tokens.data() + (gy * g + gx) * tokens.cols();
            for (std::size_t py = 0; py < p; ++py) {
                for (std::size_t px = 0; px < p; ++px) {
                    for (std::size_t ch = 0; ch < c; ++ch) {
                        image[((gy * p + py) * h + (gx * p + px)) * c + ch] =
                            row[(py * p + px) * c + ch];
                    }
                }
            }
        }
    }
    return image;
}

template <class T>
T gelu_scalar(T z) {
    return T(0.5) * z * (T(1) + std::erf(z * T(0.7071067811865476)));
}

template <class T>
T gelu_grad_scalar(T z) {
    const T phi = T(0.3989422804014327) * std::exp(T(-0.5) * z * z);
    const T cdf = T(0.5) * (T(1) + std::erf(z * T(0.7071067811865476)));
    return cdf + z * phi;
}

template <class T>
TensorT<T> gelu(const TensorT<T>& x) {
    TensorT<T> out(x.dims());
    for (std::size_t i = 0; i < x.numel(); ++i) out[i] = gelu_scalar(x[i]);
    return out;
}

// Patch embedding plus positional, content and timestep embeddings. The
// content id stands in for the prompt; style is deliberately unconditioned.
template <class T>
TensorT<T> embed_tokens(const TensorT<T>& image, const Condition& cond,
                        const DenoiserWeightsT<T>& w) {
    const ModelConfig& cfg = w.config;
    if (cond.content_id < 0 || cond.content_id >= cfg.contents) {
        throw std::invalid_argument("embed_tokens: content id out of range");
    }
    if (cond.t < 0 || cond.t > cfg.timesteps) {
        throw std::invalid_argument("embed_tokens: timestep out of range");
    }
    TensorT<T> x = matmul(patchify(image, cfg), w.patch_embed);
    const auto d = static_cast<std::size_t>(cfg.d_model);
    const T* content_row = w.content_embed.data() + static_cast<std::size_t>(cond.content_id) * d;
    const T* time_row = w.time_embed.data() + static_cast<std::size_t>(cond.t) * d;
    for (std::size_t i = 0; i < x.rows(); ++i) {
        T* row = x.data() + i * d;
        const T* pos_row = w.pos_embed.data() + i * d;
        for (std::size_t j = 0; j < d; ++j) row[j] += pos_row[j] + content_row[j] + time_row[j];
    }
    return x;
}

template <class T>
TensorT<T> feed_forward(const TensorT<T>& x, const FeedForwardWeightsT<T>& ffn) {
    return add(x, matmul(gelu(matmul(x, ffn.w1)), ffn.w2));
}

// Per-step probability capture: [stream][layer][head] -> m x keys.
template <class T>
struct StepProbs {
    std::vector<std::vector<std::vector<TensorT<T>>>> probs;

    void resize(std::size_t streams, std::size_t layers) {
        probs.assign(streams, std::vector<std::vector<TensorT<T>>>(layers));
    }
};

// Lockstep evaluation of a batch of streams. Stream 0 is the reference and
// always runs plain self-attention, so its output is bit-identical to an
// n=1 run in every mode. Targets consume reference K/V (Reference mode) or
// the concatenation of all streams' K/V in batch order (Full mode).
template <class T>
std::vector<TensorT<T>> eps_predict_batch(const std::vector<TensorT<T>>& images,
                                          const std::vector<Condition>& conds,
                                          const DenoiserWeightsT<T>& w, const ShareConfig& cfg,
                                          StepProbs<T>* probs_out = nullptr) {
    const ModelConfig& mc = w.config;
    mc.validate();
    const std::size_t n = images.size();
    if (n == 0) throw std::invalid_argument("eps_predict_batch: empty batch");
    if (conds.size() != n) throw std::invalid_argument("eps_predict_batch: conds size mismatch");
    cfg.validate(static_cast<std::size_t>(mc.layers));

    std::vector<TensorT<T>> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = embed_tokens(images[i], conds[i], w);

    const auto layers = static_cast<std::size_t>(mc.layers);
    const auto heads = static_cast<std::size_t>(mc.heads);
    const auto dk = static_cast<std::size_t>(mc.d_head());
    if (probs_out != nullptr) probs_out->resize(n, layers);

    ReferenceKV<T> ref = ReferenceKV<T>::sized(layers, heads);
    for (std::size_t l = 0; l < layers; ++l) {
        const auto& blk = w.blocks[l];
        const bool active = cfg.mode != ShareMode::None && cfg.layer_active(l) && n > 1;
        const auto sink = [&](std::size_t stream) -> std::vector<TensorT<T>>* {
            return probs_out != nullptr ? &probs_out->probs[stream][l] : nullptr;
        };

        if (!active) {
            parallel_for(n, [&](std::size_t i) {
                ShareContext<T> ctx{ShareRole::Plain, nullptr, l, sink(i)};
                x[i] = multi_head_block(x[i], blk.attn, cfg, ctx);
            });
        } else if (cfg.mode == ShareMode::Reference) {
            ShareContext<T> ref_ctx{ShareRole::Capture, &ref, l, sink(0)};
            x[0] = multi_head_block(x[0], blk.attn, cfg, ref_ctx);
            parallel_for(n - 1, [&](std::size_t j) {
                const std::size_t i = j + 1;
                ShareContext<T> ctx{ShareRole::Consume, &ref, l, sink(i)};
                x[i] = multi_head_block(x[i], blk.attn, cfg, ctx);
            });
        } else {  // Full: targets attend over every stream's keys/values
            std::vector<std::vector<StreamQKV<T>>> per_head(heads);
            for (auto& v : per_head) v.resize(n);
            for (std::size_t i = 0; i < n; ++i) {
                for (std::size_t h = 0; h < heads; ++h) {
                    per_head[h][i].q = matmul(x[i], blk.attn.wq[h]);
                    per_head[h][i].k = matmul(x[i], blk.attn.wk[h]);
                    per_head[h][i].v = matmul(x[i], blk.attn.wv[h]);
                }
            }
            std::vector<TensorT<T>> keys(heads), values(heads);
            for (std::size_t h = 0; h < heads; ++h) {
                keys[h] = per_head[h][0].k;
                values[h] = per_head[h][0].v;
                for (std::size_t i = 1; i < n; ++i) {
                    keys[h] = vstack(keys[h], per_head[h][i].k);
                    values[h] = vstack(values[h], per_head[h][i].v);
                }
            }
            ShareContext<T> ref_ctx{ShareRole::Plain, nullptr, l, sink(0)};
            TensorT<T> x0_next = multi_head_block(x[0], blk.attn, cfg, ref_ctx);
            parallel_for(n - 1, [&](std::size_t j) {
                const std::size_t i = j + 1;
                const std::size_t m = x[i].rows();
                TensorT<T> concat({m, heads * dk});
                for (std::size_t h = 0; h < heads; ++h) {
                    AttentionOut<T> out =
                        scaled_dot_attention(per_head[h][i].q, keys[h], values[h]);
                    if (auto* s = sink(i)) s->push_back(out.probs);
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t ccol = 0; ccol < dk; ++ccol)
                            concat(r, h * dk + ccol) = out.out(r, ccol);
                }
                x[i] = add(x[i], matmul(concat, blk.attn.wo));
            });
            x[0] = std::move(x0_next);
        }

        parallel_for(n, [&](std::size_t i) { x[i] = feed_forward(x[i], blk.ffn); });
    }

    std::vector<TensorT<T>> eps(n);
    parallel_for(n, [&](std::size_t i) {
        eps[i] = unpatchify(matmul(x[i], w.out_proj), mc);
    });
    return eps;
}

// Single-stream epsilon prediction (plain self-attention unless a sharing
// context is supplied by the batch driver).
template <class T>
TensorT<T> eps_predict(const TensorT<T>& image, const Condition& cond,
                       const DenoiserWeightsT<T>& w, const ShareConfig& cfg = ShareConfig{}) {
    return eps_predict_batch<T>({image}, {cond}, w, cfg)[0];
}

}  // namespace styleset
