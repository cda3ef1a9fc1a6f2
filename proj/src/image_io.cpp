#include "styleset/image_io.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

namespace styleset {
namespace {

unsigned char quantize(float v, float lo, float hi) {
    const float unit = (v - lo) / (hi - lo);
    const float scaled = std::round(255.0f * unit);
    return static_cast<unsigned char>(std::min(255.0f, std::max(0.0f, scaled)));
}

void skip_comments(std::istream& in) {
    while (in.peek() == '#') {
        std::string line;
        std::getline(in, line);
    }
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(2) != 3) {
        throw std::invalid_argument("write_ppm: expected {H,W,3} image");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "P6\n" << image.dim(1) << " " << image.dim(0) << "\n255\n";
    for (std::size_t i = 0; i < image.numel(); ++i) {
        const unsigned char byte = quantize(image[i], -1.0f, 1.0f);
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

Tensor read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw std::runtime_error("read_ppm: not a P6 file: " + path);
    in >> std::ws;
    skip_comments(in);
    std::size_t w = 0, h = 0;
    int maxval = 0;
    in >> w >> h >> maxval;
    if (!in || maxval != 255) throw std::runtime_error("read_ppm: unsupported header: " + path);
    in.get();  // single whitespace after maxval
    Tensor image({h, w, 3});
    for (std::size_t i = 0; i < image.numel(); ++i) {
        char byte = 0;
        if (!in.get(byte)) throw std::runtime_error("read_ppm: truncated: " + path);
        image[i] = static_cast<float>(static_cast<unsigned char>(byte)) / 255.0f * 2.0f - 1.0f;
    }
    return image;
}

void write_pgm(const std::string& path, const Tensor& map) {
    if (map.rank() != 2) throw std::invalid_argument("write_pgm: expected {H,W} map");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for write: " + path);
    out << "P5\n" << map.dim(1) << " " << map.dim(0) << "\n255\n";
    for (std::size_t i = 0; i < map.numel(); ++i) {
        const unsigned char byte = quantize(map[i], 0.0f, 1.0f);
        out.write(reinterpret_cast<const char*>(&byte), 1);
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace styleset
