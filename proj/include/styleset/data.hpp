#pragma once

// Procedural "content x style" dataset: six shape classes rendered over four
// palette/background styles, 16x16x3 in [-1,1]. The denoiser is conditioned
// on content only; style stays marginal so that a vanilla batch diverges in
// style and sharing has something to align.

#include <string>
#include <vector>

#include "styleset/gmm.hpp"
#include "styleset/rng.hpp"
#include "styleset/tensor.hpp"

namespace styleset {

inline constexpr int kContentCount = 6;  // circle, square, triangle, cross, star, bar
inline constexpr int kStyleCount = 4;    // warm/stripes, cool/dots, mono/gradient, pastel/plain
inline constexpr int kImageSize = 16;
inline constexpr int kImageChannels = 3;

struct StyledSample {
    Tensor image;  // {16,16,3} in [-1,1]
    int content_id = 0;
    int style_id = 0;
};

// Deterministic rasterization with small seeded position/scale jitter.
StyledSample render(int content_id, int style_id, Pcg32& rng);

// Jitter-free render; these are the classifier prototypes and GMM means.
Tensor render_prototype(int content_id, int style_id);

// Every (content, style) pair appears; styles exactly uniform given content
// whenever count is a multiple of kStyleCount.
std::vector<StyledSample> make_dataset(int count, Pcg32& rng);

// One component per (content, style) prototype, uniform pi, s fixed at 0.1.
GmmSpec gmm_from_dataset(const std::vector<StyledSample>& samples);

// PPM files named content{c}_style{s}_{i}.ppm plus manifest.csv.
void export_dataset(const std::string& dir, const std::vector<StyledSample>& samples);

}  // namespace styleset
