#include "styleset/data.hpp"

#include <array>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "styleset/image_io.hpp"

namespace styleset {
namespace {

struct Rgb {
    float r, g, b;
};

// [0,1] component values; images live in [-1,1].
constexpr Rgb to_unit(float r, float g, float b) { return Rgb{r, g, b}; }

void put(Tensor& img, int y, int x, Rgb c) {
    const std::size_t base = (static_cast<std::size_t>(y) * kImageSize + static_cast<std::size_t>(x)) * 3;
    img[base + 0] = 2.0f * c.r - 1.0f;
    img[base + 1] = 2.0f * c.g - 1.0f;
    img[base + 2] = 2.0f * c.b - 1.0f;
}

void paint_background(Tensor& img, int style_id) {
    for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
            Rgb c{};
            switch (style_id) {
                case 0:  // warm stripes
                    c = ((y / 2) % 2 == 0) ? to_unit(0.95f, 0.55f, 0.15f)
                                           : to_unit(0.75f, 0.20f, 0.10f);
                    break;
                case 1:  // cool dots
                    c = to_unit(0.10f, 0.22f, 0.55f);
                    if (y % 4 == 1 && x % 4 == 1) c = to_unit(0.35f, 0.75f, 0.95f);
                    break;
                case 2: {  // monochrome vertical gradient
                    const float v = 0.15f + 0.55f * static_cast<float>(y) / (kImageSize - 1);
                    c = to_unit(v, v, v);
                    break;
                }
                case 3:  // pastel plain
                    c = to_unit(0.90f, 0.75f, 0.82f);
                    break;
                default:
                    throw std::invalid_argument("render: style id out of range");
            }
            put(img, y, x, c);
        }
    }
}

Rgb foreground_color(int style_id) {
    switch (style_id) {
        case 0:
            return to_unit(1.00f, 0.90f, 0.25f);
        case 1:
            return to_unit(0.30f, 0.95f, 0.75f);
        case 2:
            return to_unit(0.98f, 0.98f, 0.98f);
        case 3:
            return to_unit(0.35f, 0.70f, 0.40f);
        default:
            throw std::invalid_argument("render: style id out of range");
    }
}

bool inside_shape(int content_id, float dx, float dy, float r) {
    const float ax = std::abs(dx), ay = std::abs(dy);
    switch (content_id) {
        case 0:  // circle
            return dx * dx + dy * dy <= r * r;
        case 1:  // square
            return ax <= 0.78f * r && ay <= 0.78f * r;
        case 2:  // upward triangle
            return dy >= -r && dy <= r && ax <= (dy + r) * 0.55f;
        case 3:  // cross
            return (ax <= 0.32f * r && ay <= r) || (ay <= 0.32f * r && ax <= r);
        case 4:  // four-point star
            return ax * ay <= 0.14f * r * r && ax + ay <= 1.25f * r;
        case 5:  // horizontal bar
            return ay <= 0.30f * r && ax <= 1.05f * r;
        default:
            throw std::invalid_argument("render: content id out of range");
    }
}

Tensor render_impl(int content_id, int style_id, float cx, float cy, float scale) {
    if (content_id < 0 || content_id >= kContentCount) {
        throw std::invalid_argument("render: content id out of range");
    }
    if (style_id < 0 || style_id >= kStyleCount) {
        throw std::invalid_argument("render: style id out of range");
    }
    Tensor img({kImageSize, kImageSize, kImageChannels});
    paint_background(img, style_id);
    const Rgb fg = foreground_color(style_id);
    const float r = 5.0f * scale;
    for (int y = 0; y < kImageSize; ++y) {
        for (int x = 0; x < kImageSize; ++x) {
            if (inside_shape(content_id, static_cast<float>(x) - cx, static_cast<float>(y) - cy, r)) {
                put(img, y, x, fg);
            }
        }
    }
    return img;
}

}  // namespace

StyledSample render(int content_id, int style_id, Pcg32& rng) {
    const float cx = 7.5f + static_cast<float>(static_cast<int>(rng.next_below(3)) - 1);
    const float cy = 7.5f + static_cast<float>(static_cast<int>(rng.next_below(3)) - 1);
    const float scale = 0.9f + 0.2f * static_cast<float>(rng.next_unit());
    return StyledSample{render_impl(content_id, style_id, cx, cy, scale), content_id, style_id};
}

Tensor render_prototype(int content_id, int style_id) {
    return render_impl(content_id, style_id, 7.5f, 7.5f, 1.0f);
}

std::vector<StyledSample> make_dataset(int count, Pcg32& rng) {
    if (count < 1) throw std::invalid_argument("make_dataset: count must be >= 1");
    std::vector<StyledSample> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        const int pair = i % (kContentCount * kStyleCount);
        out.push_back(render(pair / kStyleCount, pair % kStyleCount, rng));
    }
    return out;
}

GmmSpec gmm_from_dataset(const std::vector<StyledSample>& samples) {
    if (samples.empty()) throw std::invalid_argument("gmm_from_dataset: empty dataset");
    GmmSpec spec;
    std::array<std::array<bool, kStyleCount>, kContentCount> seen{};
    for (const auto& s : samples) seen[static_cast<std::size_t>(s.content_id)]
                                      [static_cast<std::size_t>(s.style_id)] = true;
    for (int c = 0; c < kContentCount; ++c) {
        for (int s = 0; s < kStyleCount; ++s) {
            if (!seen[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]) continue;
            spec.means.push_back(render_prototype(c, s));
            spec.sigmas.push_back(0.1);
            spec.content_ids.push_back(c);
            spec.style_ids.push_back(s);
        }
    }
    spec.weights.assign(spec.means.size(), 1.0 / static_cast<double>(spec.means.size()));
    spec.validate();
    return spec;
}

void export_dataset(const std::string& dir, const std::vector<StyledSample>& samples) {
    std::filesystem::create_directories(dir);
    std::ofstream manifest(dir + "/manifest.csv");
    if (!manifest) throw std::runtime_error("cannot open for write: " + dir + "/manifest.csv");
    manifest << "file,content_id,style_id\n";
    std::vector<int> counters(static_cast<std::size_t>(kContentCount * kStyleCount), 0);
    for (const auto& s : samples) {
        const auto slot = static_cast<std::size_t>(s.content_id * kStyleCount + s.style_id);
        const std::string name = "content" + std::to_string(s.content_id) + "_style" +
                                 std::to_string(s.style_id) + "_" +
                                 std::to_string(counters[slot]++) + ".ppm";
        write_ppm(dir + "/" + name, s.image);
        manifest << name << "," << s.content_id << "," << s.style_id << "\n";
    }
}

}  // namespace styleset
