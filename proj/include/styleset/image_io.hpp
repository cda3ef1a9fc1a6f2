#pragma once

// Binary PPM (P6) for color images in [-1,1] and PGM (P5) for grayscale maps
// in [0,1], both maxval 255. Pixel encoding: clamp(round(255*(v+1)/2)) and
// clamp(round(255*v)) respectively.

#include <string>

#include "styleset/tensor.hpp"

namespace styleset {

void write_ppm(const std::string& path, const Tensor& image);  // {H,W,3} in [-1,1]
Tensor read_ppm(const std::string& path);                      // -> {H,W,3} in [-1,1]

void write_pgm(const std::string& path, const Tensor& map);    // {H,W} in [0,1]

}  // namespace styleset
