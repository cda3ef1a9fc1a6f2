#include "styleset/weights_io.hpp"

#include <map>
#include <stdexcept>

#include "styleset/tensor_io.hpp"

namespace styleset {
namespace {

Tensor meta_tensor(const ModelConfig& c) {
    return Tensor({8}, {static_cast<float>(c.image_size), static_cast<float>(c.channels),
                        static_cast<float>(c.patch), static_cast<float>(c.d_model),
                        static_cast<float>(c.heads), static_cast<float>(c.layers),
                        static_cast<float>(c.contents), static_cast<float>(c.timesteps)});
}

ModelConfig config_from_meta(const Tensor& t) {
    if (t.numel() != 8) throw std::runtime_error("weights: malformed _meta tensor");
    ModelConfig c;
    c.image_size = static_cast<int>(t[0]);
    c.channels = static_cast<int>(t[1]);
    c.patch = static_cast<int>(t[2]);
    c.d_model = static_cast<int>(t[3]);
    c.heads = static_cast<int>(t[4]);
    c.layers = static_cast<int>(t[5]);
    c.contents = static_cast<int>(t[6]);
    c.timesteps = static_cast<int>(t[7]);
    c.validate();
    return c;
}

}  // namespace

void save_weights(const std::string& path, const DenoiserWeights& w) {
    NamedTensors tensors;
    tensors.emplace_back("_meta", meta_tensor(w.config));
    for_each_tensor(w, [&](const char* name, const Tensor& t) { tensors.emplace_back(name, t); });
    save_sawt(path, tensors);
}

DenoiserWeights load_weights(const std::string& path) {
    const NamedTensors tensors = load_sawt(path);
    if (tensors.empty() || tensors[0].first != "_meta") {
        throw std::runtime_error("weights: missing _meta tensor in " + path);
    }
    const ModelConfig cfg = config_from_meta(tensors[0].second);
    std::map<std::string, const Tensor*> by_name;
    for (std::size_t i = 1; i < tensors.size(); ++i) by_name[tensors[i].first] = &tensors[i].second;

    Pcg32 dummy(0, 0);
    DenoiserWeights w = init_denoiser<float>(cfg, dummy);
    std::size_t assigned = 0;
    for_each_tensor(w, [&](const char* name, Tensor& t) {
        const auto it = by_name.find(name);
        if (it == by_name.end()) throw std::runtime_error(std::string("weights: missing tensor ") + name);
        if (it->second->dims() != t.dims()) {
            throw std::runtime_error(std::string("weights: shape mismatch for ") + name);
        }
        t = *it->second;
        ++assigned;
    });
    if (assigned != by_name.size()) throw std::runtime_error("weights: unexpected extra tensors");
    return w;
}

}  // namespace styleset
