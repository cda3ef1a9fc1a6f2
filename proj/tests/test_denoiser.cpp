#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "styleset/denoiser.hpp"
#include "styleset/gmm.hpp"
#include "styleset/rng.hpp"
#include "styleset/runtime.hpp"
#include "styleset/weights_io.hpp"

using namespace styleset;

namespace {

ModelConfig tiny_config() {
    ModelConfig c;
    c.image_size = 8;
    c.patch = 4;
    c.d_model = 8;
    c.heads = 2;
    c.layers = 2;
    c.contents = 3;
    c.timesteps = 6;
    return c;
}

DenoiserWeights random_weights(std::uint64_t seed) {
    Pcg32 rng(seed, 1);
    return init_denoiser<float>(tiny_config(), rng);
}

// Posterior mean by trapezoid quadrature on a one-pixel mixture; independent
// of the closed-form implementation.
double quadrature_eps(double x_t, double alpha_bar, const std::vector<double>& pi,
                      const std::vector<double>& means, const std::vector<double>& sigmas) {
    const double sqrt_ab = std::sqrt(alpha_bar);
    double lo = means[0], hi = means[0], smax = 0.0;
    for (std::size_t k = 0; k < means.size(); ++k) {
        lo = std::min(lo, means[k]);
        hi = std::max(hi, means[k]);
        smax = std::max(smax, sigmas[k]);
    }
    lo -= 12.0 * smax + 12.0;
    hi += 12.0 * smax + 12.0;
    const int n = 200000;
    const double h = (hi - lo) / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x0 = lo + h * i;
        double q = 0.0;
        for (std::size_t k = 0; k < means.size(); ++k) {
            const double d = (x0 - means[k]) / sigmas[k];
            q += pi[k] * std::exp(-0.5 * d * d) / sigmas[k];
        }
        const double r = x_t - sqrt_ab * x0;
        const double like = std::exp(-0.5 * r * r / (1.0 - alpha_bar));
        const double weight = (i == 0 || i == n) ? 0.5 : 1.0;
        num += weight * x0 * q * like;
        den += weight * q * like;
    }
    const double posterior_mean = num / den;
    return (x_t - sqrt_ab * posterior_mean) / std::sqrt(1.0 - alpha_bar);
}

}  // namespace

TEST_CASE("patchify then unpatchify is the identity") {
    const ModelConfig c = tiny_config();
    Pcg32 rng(20, 1);
    const Tensor img = randn<float>(rng, {8, 8, 3});
    CHECK(unpatchify(patchify(img, c), c).bit_equal(img));
}

TEST_CASE("zero weights predict zero epsilon") {
    DenoiserWeights w = random_weights(1);
    w = zeros_like(w);
    Pcg32 rng(21, 1);
    const Tensor x = randn<float>(rng, {8, 8, 3});
    const Tensor eps = eps_predict(x, Condition{0, 1}, w);
    for (std::size_t i = 0; i < eps.numel(); ++i) CHECK(eps[i] == 0.0f);
}

TEST_CASE("all-false layer mask is bitwise identical to mode None") {
    const DenoiserWeights w = random_weights(2);
    Pcg32 rng(22, 1);
    const std::vector<Tensor> xs{randn<float>(rng, {8, 8, 3}), randn<float>(rng, {8, 8, 3})};
    const std::vector<Condition> conds{{0, 2}, {1, 2}};

    ShareConfig none;
    ShareConfig masked;
    masked.mode = ShareMode::Reference;
    masked.layer_mask = {0, 0};

    const auto a = eps_predict_batch(xs, conds, w, none);
    const auto b = eps_predict_batch(xs, conds, w, masked);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].bit_equal(b[i]));
}

TEST_CASE("eps_predict is pure and thread-count independent") {
    const DenoiserWeights w = random_weights(3);
    Pcg32 rng(23, 1);
    const std::vector<Tensor> xs{randn<float>(rng, {8, 8, 3}), randn<float>(rng, {8, 8, 3}),
                                 randn<float>(rng, {8, 8, 3})};
    const std::vector<Condition> conds{{0, 1}, {1, 1}, {2, 1}};
    ShareConfig cfg;
    cfg.mode = ShareMode::Reference;

    const auto once = eps_predict_batch(xs, conds, w, cfg);
    const auto twice = eps_predict_batch(xs, conds, w, cfg);
    set_thread_count(4);
    const auto threaded = eps_predict_batch(xs, conds, w, cfg);
    set_thread_count(1);
    for (std::size_t i = 0; i < once.size(); ++i) {
        CHECK(once[i].bit_equal(twice[i]));
        CHECK(once[i].bit_equal(threaded[i]));
    }
}

TEST_CASE("reference stream is bitwise invariant to batch size in all modes") {
    const DenoiserWeights w = random_weights(4);
    Pcg32 rng(24, 1);
    const Tensor ref_x = randn<float>(rng, {8, 8, 3});
    const std::vector<Tensor> batch{ref_x, randn<float>(rng, {8, 8, 3}),
                                    randn<float>(rng, {8, 8, 3})};
    const std::vector<Condition> conds{{0, 3}, {1, 3}, {2, 3}};

    const Tensor solo = eps_predict_batch<float>({ref_x}, {conds[0]}, w, ShareConfig{})[0];
    for (ShareMode mode : {ShareMode::None, ShareMode::Reference, ShareMode::Full}) {
        ShareConfig cfg;
        cfg.mode = mode;
        const auto outs = eps_predict_batch(batch, conds, w, cfg);
        CHECK(outs[0].bit_equal(solo));
    }
}

TEST_CASE("sharing changes target outputs") {
    const DenoiserWeights w = random_weights(5);
    Pcg32 rng(25, 1);
    const std::vector<Tensor> xs{randn<float>(rng, {8, 8, 3}), randn<float>(rng, {8, 8, 3})};
    const std::vector<Condition> conds{{0, 2}, {1, 2}};
    ShareConfig ref_cfg;
    ref_cfg.mode = ShareMode::Reference;
    const auto none = eps_predict_batch(xs, conds, w, ShareConfig{});
    const auto shared = eps_predict_batch(xs, conds, w, ref_cfg);
    CHECK(none[0].bit_equal(shared[0]));
    CHECK(max_abs_diff(none[1], shared[1]) > 0.0f);
}

TEST_CASE("condition validation") {
    const DenoiserWeights w = random_weights(6);
    Pcg32 rng(26, 1);
    const Tensor x = randn<float>(rng, {8, 8, 3});
    CHECK_THROWS_AS(eps_predict(x, Condition{99, 1}, w), std::invalid_argument);
    CHECK_THROWS_AS(eps_predict(x, Condition{0, 99}, w), std::invalid_argument);
    const Tensor bad = randn<float>(rng, {16, 16, 3});
    CHECK_THROWS_AS(eps_predict(bad, Condition{0, 1}, w), std::invalid_argument);
}

TEST_CASE("weights round trip bit exactly through SAWT") {
    const DenoiserWeights w = random_weights(7);
    const std::string path = (std::filesystem::temp_directory_path() / "weights.sawt").string();
    save_weights(path, w);
    const DenoiserWeights back = load_weights(path);
    CHECK(back.config == w.config);
    bool all_equal = true;
    for_each_tensor(w, [&](const char* name, const Tensor& t) {
        const Tensor* other = nullptr;
        for_each_tensor(back, [&](const char* n2, const Tensor& t2) {
            if (std::string(name) == n2) other = &t2;
        });
        REQUIRE(other != nullptr);
        all_equal = all_equal && t.bit_equal(*other);
    });
    CHECK(all_equal);
    std::filesystem::remove(path);
}

TEST_CASE("gmm_eps single component closed form") {
    GmmSpec spec;
    spec.weights = {1.0};
    spec.means = {Tensor({1})};
    spec.sigmas = {1.0};
    Tensor x({1});
    x[0] = 2.0f;
    const Tensor eps = gmm_eps(x, 0.64, spec);
    CHECK(eps[0] == doctest::Approx(1.2f).epsilon(1e-5));
}

TEST_CASE("gmm_eps no-noise limit and symmetry") {
    GmmSpec spec;
    spec.weights = {1.0};
    spec.means = {Tensor({1})};
    spec.sigmas = {1.0};
    Tensor x({1});
    x[0] = 2.0f;
    const Tensor at_one = gmm_eps(x, 1.0, spec);
    CHECK(at_one[0] == 0.0f);
    const Tensor near_one = gmm_eps(x, 1.0 - 1e-9, spec);
    CHECK(std::abs(near_one[0]) < 1e-3f);

    GmmSpec symmetric;
    symmetric.weights = {0.5, 0.5};
    Tensor plus({1}), minus({1});
    plus[0] = 1.5f;
    minus[0] = -1.5f;
    symmetric.means = {plus, minus};
    symmetric.sigmas = {0.3, 0.3};
    Tensor zero({1});
    const Tensor eps = gmm_eps(zero, 0.5, symmetric);
    CHECK(std::abs(eps[0]) < 1e-6f);
}

TEST_CASE("gmm_eps matches the quadrature oracle") {
    Pcg32 rng(27, 1);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t k = 1 + rng.next_below(3);
        std::vector<double> pi(k), means(k), sigmas(k);
        double total = 0.0;
        for (std::size_t i = 0; i < k; ++i) {
            pi[i] = 0.2 + rng.next_unit();
            total += pi[i];
            means[i] = -2.0 + 4.0 * rng.next_unit();
            sigmas[i] = 0.1 + 1.4 * rng.next_unit();
        }
        for (auto& p : pi) p /= total;
        const double alpha_bar = 0.05 + 0.9 * rng.next_unit();
        const double x_val = -3.0 + 6.0 * rng.next_unit();

        GmmSpecT<double> spec;
        for (std::size_t i = 0; i < k; ++i) {
            spec.weights.push_back(pi[i]);
            TensorD m({1});
            m[0] = means[i];
            spec.means.push_back(m);
            spec.sigmas.push_back(sigmas[i]);
        }
        TensorD x({1});
        x[0] = x_val;
        const TensorD got = gmm_eps(x, alpha_bar, spec);
        const double want = quadrature_eps(x_val, alpha_bar, pi, means, sigmas);
        CHECK(std::abs(got[0] - want) < 1e-4);
    }
}

TEST_CASE("gmm_eps validates inputs") {
    GmmSpec spec;
    spec.weights = {0.7, 0.7};  // does not sum to 1
    spec.means = {Tensor({1}), Tensor({1})};
    spec.sigmas = {1.0, 1.0};
    Tensor x({1});
    CHECK_THROWS_AS(gmm_eps(x, 0.5, spec), std::invalid_argument);
    spec.weights = {0.5, 0.5};
    CHECK_THROWS_AS(gmm_eps(x, 0.0, spec), std::invalid_argument);
    CHECK_THROWS_AS(gmm_eps(x, 1.5, spec), std::invalid_argument);
}
