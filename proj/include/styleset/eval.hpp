#pragma once

// Desk-scale metrics: a handcrafted image embedder standing in for the usual
// pretrained feature extractors, set-consistency / content-alignment scores
// built on it, and the attention-map visualizations.

#include <array>
#include <vector>

#include "styleset/tensor.hpp"

namespace styleset {

inline constexpr int kEmbedDim = 64;

struct Embedding {
    std::array<float, kEmbedDim> v{};
};

float cosine(const Embedding& a, const Embedding& b);

// Per-quadrant color histograms (8 bins per channel) concatenated with
// per-quadrant gradient-orientation histograms (8 bins), projected by a
// fixed seeded random matrix and L2-normalized.
Embedding embed(const Tensor& image);

float set_consistency_embeddings(const std::vector<Embedding>& embeddings);
float set_consistency(const std::vector<Tensor>& images);

// Max over style prototypes of cosine(embed(image), embed(prototype)).
float content_alignment(const Tensor& image, int content_id);

// Style of the nearest (content, style) prototype embedding.
int classify_style(const Tensor& image);

// Fraction of the set whose classified style matches the reference's.
float style_match_rate(const std::vector<Tensor>& images, const Tensor& reference);

// One query row's reference-key block as a grayscale map over the reference
// token grid, min-max normalized to [0,1] and nearest-upsampled. A constant
// block keeps its raw probability value (clamped), so a zero block stays
// black and a full-mass single key stays white.
Tensor attention_prob_map(const Tensor& probs, std::size_t query_position,
                          std::size_t ref_key_count, std::size_t grid_h, std::size_t grid_w,
                          std::size_t upsample);

// Rows centered, top-3 principal directions by seeded power iteration with
// deflation, row projections min-max'd per component into RGB over the
// target token grid. Missing rank fills the channel with 0.
Tensor attention_pca_rgb(const Tensor& probs, std::size_t grid_h, std::size_t grid_w);

// The principal directions themselves (for verification).
std::vector<std::vector<double>> attention_pca_components(const Tensor& probs, int count);

}  // namespace styleset
