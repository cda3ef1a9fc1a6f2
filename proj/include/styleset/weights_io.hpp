#pragma once

// SAWT container round-trip for the denoiser weights. A "_meta" tensor with
// the model configuration comes first; everything else is the stable
// for_each_tensor order. Round-trips are bit-exact.

#include <string>

#include "styleset/denoiser.hpp"

namespace styleset {

void save_weights(const std::string& path, const DenoiserWeights& w);
DenoiserWeights load_weights(const std::string& path);

}  // namespace styleset
