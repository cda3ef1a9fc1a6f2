#pragma once

// Multi-head self-attention with pluggable sharing behavior.
//
// Three modes:
//   None      — plain per-stream self-attention.
//   Reference — targets attend to [reference keys ; own keys] with AdaIN'd
//               queries/keys and an optional lambda rescale of the
//               reference-key logits.
//   Full      — attention over the vertical concatenation of every stream's
//               keys and values, in batch order.

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "styleset/tensor.hpp"

namespace styleset {

enum class ShareMode { None, Full, Reference };

struct ShareConfig {
    ShareMode mode = ShareMode::None;
    bool use_adain = true;
    double lambda = 1.0;                    // in (0,1]; scales reference-key logits
    std::vector<std::uint8_t> layer_mask;   // per layer; empty means all layers

    bool layer_active(std::size_t layer) const {
        if (layer_mask.empty()) return true;
        return layer < layer_mask.size() && layer_mask[layer] != 0;
    }

    void validate(std::size_t layer_count) const {
        if (!(lambda > 0.0 && lambda <= 1.0)) {
            throw std::invalid_argument("ShareConfig: lambda must be in (0,1]");
        }
        if (!layer_mask.empty() && layer_mask.size() != layer_count) {
            throw std::invalid_argument("ShareConfig: layer_mask length != layer count");
        }
    }
};

// Re-standardize x per channel to y's statistics. Stats are taken across
// rows (positions); the 1e-5 floor absorbs constant channels.
template <class T>
TensorT<T> adain(const TensorT<T>& x, const TensorT<T>& y) {
    if (x.rank() != 2 || y.rank() != 2 || x.cols() != y.cols()) {
        throw std::invalid_argument("adain: channel count mismatch");
    }
    const auto sx = column_stats(x);
    const auto sy = column_stats(y);
    const std::size_t m = x.rows(), d = x.cols();
    TensorT<T> out({m, d});
    for (std::size_t c = 0; c < d; ++c) {
        const T denom = std::max(sx.stddev[c], T(1e-5));
        const T gain = sy.stddev[c] / denom;
        for (std::size_t i = 0; i < m; ++i) {
            out(i, c) = gain * (x(i, c) - sx.mean[c]) + sy.mean[c];
        }
    }
    out.check_finite("adain");
    return out;
}

template <class T>
struct AttentionOut {
    TensorT<T> out;    // m x d_v
    TensorT<T> probs;  // m x n, rows sum to 1
};

// softmax(Q K^T / sqrt(d_k)) V, with an optional per-key multiplicative
// rescale of the logits. Probabilities are returned for visualization.
template <class T>
AttentionOut<T> scaled_dot_attention(const TensorT<T>& q, const TensorT<T>& k,
                                     const TensorT<T>& v,
                                     const std::vector<T>* lambda_mask = nullptr) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2 || q.cols() != k.cols() ||
        k.rows() != v.rows()) {
        throw std::invalid_argument("scaled_dot_attention: dimension mismatch");
    }
    const std::size_t n = k.rows();
    if (lambda_mask != nullptr) {
        if (lambda_mask->size() != n) {
            throw std::invalid_argument("scaled_dot_attention: lambda_mask length != key count");
        }
        for (T s : *lambda_mask) {
            if (!(s > T(0) && s <= T(1))) {
                throw std::invalid_argument("scaled_dot_attention: lambda_mask entries must be in (0,1]");
            }
        }
    }
    const T inv_sqrt_dk = static_cast<T>(1.0 / std::sqrt(static_cast<double>(q.cols())));
    TensorT<T> logits = matmul(q, transpose(k));
    for (std::size_t i = 0; i < logits.rows(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            logits(i, j) *= inv_sqrt_dk;
            if (lambda_mask != nullptr) logits(i, j) *= (*lambda_mask)[j];
        }
    }
    AttentionOut<T> result;
    result.probs = softmax_rows(logits);
    result.out = matmul(result.probs, v);
    return result;
}

template <class T>
TensorT<T> vstack(const TensorT<T>& a, const TensorT<T>& b) {
    if (a.cols() != b.cols()) throw std::invalid_argument("vstack: column mismatch");
    TensorT<T> out({a.rows() + b.rows(), a.cols()});
    std::copy(a.data(), a.data() + a.numel(), out.data());
    std::copy(b.data(), b.data() + b.numel(), out.data() + a.numel());
    return out;
}

// Reference-stream projections published for one (step, layer, head) and read
// by every target stream afterwards.
template <class T>
struct HeadKV {
    TensorT<T> q, k, v;
};

template <class T>
struct LayerKV {
    std::vector<HeadKV<T>> heads;
};

template <class T>
struct ReferenceKV {
    std::vector<LayerKV<T>> layers;

    static ReferenceKV sized(std::size_t layer_count, std::size_t head_count) {
        ReferenceKV kv;
        kv.layers.resize(layer_count);
        for (auto& l : kv.layers) l.heads.resize(head_count);
        return kv;
    }
};

// Target-side shared attention against one reference stream:
// queries/keys AdaIN'd to the reference statistics, keys/values extended by
// the reference block, lambda applied to the reference-key logits only.
template <class T>
AttentionOut<T> shared_attention_reference(const TensorT<T>& q_t, const TensorT<T>& k_t,
                                           const TensorT<T>& v_t, const HeadKV<T>& ref,
                                           const ShareConfig& cfg) {
    if (q_t.cols() != ref.k.cols() || v_t.cols() != ref.v.cols()) {
        throw std::invalid_argument("shared_attention_reference: dimension mismatch");
    }
    TensorT<T> q_hat = cfg.use_adain ? adain(q_t, ref.q) : q_t;
    TensorT<T> k_hat = cfg.use_adain ? adain(k_t, ref.k) : k_t;
    const TensorT<T> keys = vstack(ref.k, k_hat);
    const TensorT<T> values = vstack(ref.v, v_t);
    std::vector<T> mask(keys.rows(), T(1));
    for (std::size_t j = 0; j < ref.k.rows(); ++j) mask[j] = static_cast<T>(cfg.lambda);
    return scaled_dot_attention(q_hat, keys, values, &mask);
}

template <class T>
struct StreamQKV {
    TensorT<T> q, k, v;
};

// Full attention sharing: every stream attends to the concatenation of all
// keys and values, in batch order.
template <class T>
std::vector<AttentionOut<T>> shared_attention_full(const std::vector<StreamQKV<T>>& streams) {
    if (streams.empty()) throw std::invalid_argument("shared_attention_full: empty batch");
    TensorT<T> keys = streams[0].k;
    TensorT<T> values = streams[0].v;
    for (std::size_t i = 1; i < streams.size(); ++i) {
        keys = vstack(keys, streams[i].k);
        values = vstack(values, streams[i].v);
    }
    std::vector<AttentionOut<T>> outs;
    outs.reserve(streams.size());
    for (const auto& s : streams) {
        outs.push_back(scaled_dot_attention(s.q, keys, values));
    }
    return outs;
}

template <class T>
struct AttentionLayerWeightsT {
    std::vector<TensorT<T>> wq, wk, wv;  // per head, d_h x d_k
    TensorT<T> wo;                       // (heads * d_k) x d_h

    std::size_t heads() const { return wq.size(); }
};

// How one stream participates in sharing at a given layer.
enum class ShareRole {
    Plain,    // self-attention only
    Capture,  // reference stream: self-attention, publish Q/K/V
    Consume,  // target stream: shared attention against the published entry
};

template <class T>
struct ShareContext {
    ShareRole role = ShareRole::Plain;
    ReferenceKV<T>* reference = nullptr;
    std::size_t layer = 0;
    std::vector<TensorT<T>>* probs_sink = nullptr;  // per-head probs, optional
};

// One residual multi-head attention block. The sharing mode is selected by
// cfg.mode AND cfg.layer_mask[layer]; a masked-off layer is plain
// self-attention on the very same code path as mode None.
template <class T>
TensorT<T> multi_head_block(const TensorT<T>& phi, const AttentionLayerWeightsT<T>& w,
                            const ShareConfig& cfg, const ShareContext<T>& ctx) {
    const std::size_t heads = w.heads();
    if (heads == 0 || w.wk.size() != heads || w.wv.size() != heads) {
        throw std::invalid_argument("multi_head_block: malformed weights");
    }
    const std::size_t m = phi.rows();
    const std::size_t d_k = w.wq[0].cols();
    const bool sharing = cfg.mode == ShareMode::Reference && cfg.layer_active(ctx.layer);
    TensorT<T> concat({m, heads * d_k});
    for (std::size_t h = 0; h < heads; ++h) {
        TensorT<T> q = matmul(phi, w.wq[h]);
        TensorT<T> k = matmul(phi, w.wk[h]);
        TensorT<T> v = matmul(phi, w.wv[h]);
        AttentionOut<T> head_out;
        if (sharing && ctx.role == ShareRole::Consume) {
            if (ctx.reference == nullptr) {
                throw std::invalid_argument("multi_head_block: missing reference context");
            }
            head_out = shared_attention_reference(q, k, v,
                                                  ctx.reference->layers.at(ctx.layer).heads.at(h), cfg);
        } else {
            head_out = scaled_dot_attention(q, k, v);
        }
        if (ctx.role == ShareRole::Capture) {
            if (ctx.reference == nullptr) {
                throw std::invalid_argument("multi_head_block: missing reference context");
            }
            auto& slot = ctx.reference->layers.at(ctx.layer).heads.at(h);
            slot.q = q;
            slot.k = std::move(k);
            slot.v = std::move(v);
        }
        if (ctx.probs_sink != nullptr) ctx.probs_sink->push_back(head_out.probs);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < d_k; ++j) {
                concat(i, h * d_k + j) = head_out.out(i, j);
            }
        }
    }
    TensorT<T> projected = matmul(concat, w.wo);
    return add(phi, projected);
}

}  // namespace styleset
