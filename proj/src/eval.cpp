#include "styleset/eval.hpp"

#include <cmath>
#include <stdexcept>

#include "styleset/data.hpp"
#include "styleset/rng.hpp"

namespace styleset {
namespace {

constexpr int kQuadrants = 4;
constexpr int kBins = 8;
constexpr int kColorFeatures = kQuadrants * 3 * kBins;     // 96
constexpr int kGradFeatures = kQuadrants * kBins;          // 32
constexpr int kRawFeatures = kColorFeatures + kGradFeatures;
constexpr std::uint64_t kProjectionSeed = 0x535459u;  // fixed; embed is deterministic

float luminance(const Tensor& img, int y, int x) {
    const std::size_t base =
        (static_cast<std::size_t>(y) * img.dim(1) + static_cast<std::size_t>(x)) * 3;
    return (img[base] + img[base + 1] + img[base + 2]) / 3.0f;
}

std::vector<float> raw_features(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != kImageSize || image.dim(1) != kImageSize ||
        image.dim(2) != 3) {
        throw std::invalid_argument("embed: expected 16x16x3 image");
    }
    std::vector<float> feat(kRawFeatures, 0.0f);
    const int half = kImageSize / 2;
    for (int qy = 0; qy < 2; ++qy) {
        for (int qx = 0; qx < 2; ++qx) {
            const int quadrant = qy * 2 + qx;
            float* color = feat.data() + quadrant * 3 * kBins;
            float* grad = feat.data() + kColorFeatures + quadrant * kBins;
            double grad_total = 0.0;
            for (int y = qy * half; y < (qy + 1) * half; ++y) {
                for (int x = qx * half; x < (qx + 1) * half; ++x) {
                    const std::size_t base =
                        (static_cast<std::size_t>(y) * kImageSize + static_cast<std::size_t>(x)) * 3;
                    for (int c = 0; c < 3; ++c) {
                        const float v = image[base + static_cast<std::size_t>(c)];
                        int bin = static_cast<int>(std::floor((v + 1.0f) * 0.5f * kBins));
                        bin = std::min(kBins - 1, std::max(0, bin));
                        color[c * kBins + bin] += 1.0f / (half * half);
                    }
                    const int xm = std::max(x - 1, 0), xp = std::min(x + 1, kImageSize - 1);
                    const int ym = std::max(y - 1, 0), yp = std::min(y + 1, kImageSize - 1);
                    const float gx = luminance(image, y, xp) - luminance(image, y, xm);
                    const float gy = luminance(image, yp, x) - luminance(image, ym, x);
                    const float mag = std::sqrt(gx * gx + gy * gy);
                    if (mag > 1e-6f) {
                        const float angle = std::atan2(gy, gx);  // [-pi, pi]
                        int bin = static_cast<int>(
                            std::floor((angle + 3.14159265f) / (2.0f * 3.14159265f) * kBins));
                        bin = std::min(kBins - 1, std::max(0, bin));
                        grad[bin] += mag;
                        grad_total += mag;
                    }
                }
            }
            if (grad_total > 1e-6) {
                for (int b = 0; b < kBins; ++b) grad[b] /= static_cast<float>(grad_total);
            }
        }
    }
    return feat;
}

const std::vector<float>& projection_matrix() {
    static const std::vector<float> proj = [] {
        Pcg32 rng(kProjectionSeed, 1);
        TensorT<float> m = randn<float>(rng, {kEmbedDim, kRawFeatures});
        const float s = 1.0f / std::sqrt(static_cast<float>(kRawFeatures));
        std::vector<float> out(m.numel());
        for (std::size_t i = 0; i < m.numel(); ++i) out[i] = m[i] * s;
        return out;
    }();
    return proj;
}

const std::vector<Embedding>& prototype_embeddings() {
    static const std::vector<Embedding> protos = [] {
        std::vector<Embedding> out;
        out.reserve(static_cast<std::size_t>(kContentCount * kStyleCount));
        for (int c = 0; c < kContentCount; ++c) {
            for (int s = 0; s < kStyleCount; ++s) {
                out.push_back(embed(render_prototype(c, s)));
            }
        }
        return out;
    }();
    return protos;
}

}  // namespace

float cosine(const Embedding& a, const Embedding& b) {
    double dot = 0.0;
    for (int i = 0; i < kEmbedDim; ++i) dot += double(a.v[i]) * double(b.v[i]);
    return static_cast<float>(dot);  // embeddings are unit-norm
}

Embedding embed(const Tensor& image) {
    const std::vector<float> feat = raw_features(image);
    const std::vector<float>& proj = projection_matrix();
    Embedding e;
    for (int i = 0; i < kEmbedDim; ++i) {
        double acc = 0.0;
        const float* row = proj.data() + static_cast<std::size_t>(i) * kRawFeatures;
        for (int j = 0; j < kRawFeatures; ++j) acc += double(row[j]) * double(feat[j]);
        e.v[static_cast<std::size_t>(i)] = static_cast<float>(acc);
    }
    double norm = 0.0;
    for (float v : e.v) norm += double(v) * double(v);
    norm = std::sqrt(std::max(norm, 1e-24));
    for (float& v : e.v) v = static_cast<float>(v / norm);
    return e;
}

float set_consistency_embeddings(const std::vector<Embedding>& embeddings) {
    if (embeddings.size() < 2) {
        throw std::invalid_argument("set_consistency: need at least 2 images");
    }
    double acc = 0.0;
    std::size_t pairs = 0;
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        for (std::size_t j = i + 1; j < embeddings.size(); ++j) {
            acc += double(cosine(embeddings[i], embeddings[j]));
            ++pairs;
        }
    }
    return static_cast<float>(acc / static_cast<double>(pairs));
}

float set_consistency(const std::vector<Tensor>& images) {
    std::vector<Embedding> es;
    es.reserve(images.size());
    for (const auto& img : images) es.push_back(embed(img));
    return set_consistency_embeddings(es);
}

float content_alignment(const Tensor& image, int content_id) {
    if (content_id < 0 || content_id >= kContentCount) {
        throw std::invalid_argument("content_alignment: content id out of range");
    }
    const Embedding e = embed(image);
    const auto& protos = prototype_embeddings();
    float best = -1.0f;
    for (int s = 0; s < kStyleCount; ++s) {
        best = std::max(best,
                        cosine(e, protos[static_cast<std::size_t>(content_id * kStyleCount + s)]));
    }
    return best;
}

int classify_style(const Tensor& image) {
    const Embedding e = embed(image);
    const auto& protos = prototype_embeddings();
    float best = -2.0f;
    int best_style = 0;
    for (int c = 0; c < kContentCount; ++c) {
        for (int s = 0; s < kStyleCount; ++s) {
            const float score = cosine(e, protos[static_cast<std::size_t>(c * kStyleCount + s)]);
            if (score > best) {
                best = score;
                best_style = s;
            }
        }
    }
    return best_style;
}

float style_match_rate(const std::vector<Tensor>& images, const Tensor& reference) {
    if (images.empty()) throw std::invalid_argument("style_match_rate: empty set");
    const int ref_style = classify_style(reference);
    int matches = 0;
    for (const auto& img : images) {
        if (classify_style(img) == ref_style) ++matches;
    }
    return static_cast<float>(matches) / static_cast<float>(images.size());
}

Tensor attention_prob_map(const Tensor& probs, std::size_t query_position,
                          std::size_t ref_key_count, std::size_t grid_h, std::size_t grid_w,
                          std::size_t upsample) {
    if (probs.rank() != 2) throw std::invalid_argument("attention_prob_map: expected rank-2 probs");
    if (query_position >= probs.rows()) {
        throw std::invalid_argument("attention_prob_map: query position out of range");
    }
    if (ref_key_count > probs.cols() || ref_key_count != grid_h * grid_w || upsample == 0) {
        throw std::invalid_argument("attention_prob_map: grid/key mismatch");
    }
    const float* row = probs.data() + query_position * probs.cols();
    float mn = row[0], mx = row[0];
    for (std::size_t j = 0; j < ref_key_count; ++j) {
        mn = std::min(mn, row[j]);
        mx = std::max(mx, row[j]);
    }
    const bool constant = (mx - mn) <= 1e-12f;
    Tensor map({grid_h * upsample, grid_w * upsample});
    for (std::size_t y = 0; y < map.dim(0); ++y) {
        for (std::size_t x = 0; x < map.dim(1); ++x) {
            const float v = row[(y / upsample) * grid_w + (x / upsample)];
            const float norm =
                constant ? std::min(1.0f, std::max(0.0f, v)) : (v - mn) / (mx - mn);
            map(y, x) = norm;
        }
    }
    return map;
}

std::vector<std::vector<double>> attention_pca_components(const Tensor& probs, int count) {
    if (probs.rank() != 2) throw std::invalid_argument("attention_pca: expected rank-2 probs");
    const std::size_t m = probs.rows(), n = probs.cols();
    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) mean[j] += double(probs(i, j));
    for (auto& v : mean) v /= double(m);
    // covariance of centered rows
    std::vector<double> cov(n * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t a = 0; a < n; ++a) {
            const double da = double(probs(i, a)) - mean[a];
            for (std::size_t b = 0; b < n; ++b) {
                cov[a * n + b] += da * (double(probs(i, b)) - mean[b]);
            }
        }
    }
    for (auto& v : cov) v /= double(m);

    std::vector<std::vector<double>> components;
    Pcg32 rng(0x504341u, 7);  // fixed start vectors; PCA is deterministic
    double lambda1 = 0.0;
    for (int comp = 0; comp < count; ++comp) {
        std::vector<double> v(n);
        GaussianSource gauss(rng);
        for (auto& x : v) x = gauss.next();
        for (int iter = 0; iter < 100; ++iter) {
            std::vector<double> next(n, 0.0);
            for (std::size_t a = 0; a < n; ++a) {
                double acc = 0.0;
                for (std::size_t b = 0; b < n; ++b) acc += cov[a * n + b] * v[b];
                next[a] = acc;
            }
            // keep orthogonal to the components already found
            for (const auto& prev : components) {
                double dot = 0.0;
                for (std::size_t a = 0; a < n; ++a) dot += next[a] * prev[a];
                for (std::size_t a = 0; a < n; ++a) next[a] -= dot * prev[a];
            }
            double norm = 0.0;
            for (double x : next) norm += x * x;
            norm = std::sqrt(norm);
            if (norm < 1e-14) {
                std::fill(next.begin(), next.end(), 0.0);
                v = next;
                break;
            }
            for (auto& x : next) x /= norm;
            v = next;
        }
        double eigenvalue = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            double acc = 0.0;
            for (std::size_t b = 0; b < n; ++b) acc += cov[a * n + b] * v[b];
            eigenvalue += v[a] * acc;
        }
        if (comp == 0) lambda1 = eigenvalue;
        if (eigenvalue <= std::max(lambda1 * 1e-9, 1e-12)) {
            std::fill(v.begin(), v.end(), 0.0);  // rank exhausted
        } else {
            // deflate
            for (std::size_t a = 0; a < n; ++a)
                for (std::size_t b = 0; b < n; ++b) cov[a * n + b] -= eigenvalue * v[a] * v[b];
        }
        components.push_back(std::move(v));
    }
    return components;
}

Tensor attention_pca_rgb(const Tensor& probs, std::size_t grid_h, std::size_t grid_w) {
    const std::size_t m = probs.rows(), n = probs.cols();
    if (m != grid_h * grid_w) throw std::invalid_argument("attention_pca_rgb: grid mismatch");
    const auto components = attention_pca_components(probs, 3);
    std::vector<double> mean(n, 0.0);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) mean[j] += double(probs(i, j));
    for (auto& v : mean) v /= double(m);

    Tensor rgb({grid_h, grid_w, 3});
    for (int comp = 0; comp < 3; ++comp) {
        std::vector<double> proj(m, 0.0);
        double mn = 1e300, mx = -1e300;
        for (std::size_t i = 0; i < m; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                acc += (double(probs(i, j)) - mean[j]) * components[static_cast<std::size_t>(comp)][j];
            }
            proj[i] = acc;
            mn = std::min(mn, acc);
            mx = std::max(mx, acc);
        }
        for (std::size_t i = 0; i < m; ++i) {
            const double v = (mx - mn) <= 1e-12 ? 0.0 : (proj[i] - mn) / (mx - mn);
            rgb[i * 3 + static_cast<std::size_t>(comp)] = static_cast<float>(v);
        }
    }
    return rgb;
}

}  // namespace styleset
