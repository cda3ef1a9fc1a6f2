#include <cmath>

#include "doctest.h"
#include "styleset/attention.hpp"
#include "styleset/rng.hpp"

using namespace styleset;

namespace {

Tensor uniform_tensor(Pcg32& rng, std::size_t rows, std::size_t cols) {
    Tensor t({rows, cols});
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.next_unit());
    return t;
}

double reference_mass(const Tensor& probs, std::size_t ref_keys) {
    double mass = 0.0;
    for (std::size_t i = 0; i < probs.rows(); ++i) {
        for (std::size_t j = 0; j < ref_keys; ++j) mass += probs(i, j);
    }
    return mass / static_cast<double>(probs.rows());
}

}  // namespace

TEST_CASE("adain hand case and identity") {
    const Tensor x = Tensor::matrix(2, 1, {0, 2});
    const Tensor y = Tensor::matrix(2, 1, {10, 14});
    const Tensor out = adain(x, y);
    CHECK(out(0, 0) == doctest::Approx(10.0f).epsilon(1e-6));
    CHECK(out(1, 0) == doctest::Approx(14.0f).epsilon(1e-6));

    Pcg32 rng(4, 4);
    const Tensor z = randn<float>(rng, {6, 5});
    const Tensor self = adain(z, z);
    CHECK(max_abs_diff(self, z) < 1e-5f);
}

TEST_CASE("adain matches the reference moments") {
    Pcg32 rng(5, 1);
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor x = randn<float>(rng, {8, 4});
        Tensor y = randn<float>(rng, {12, 4});
        for (std::size_t i = 0; i < y.numel(); ++i) y[i] = 3.0f * y[i] + 1.5f;
        const Tensor out = adain(x, y);
        const auto so = column_stats(out);
        const auto sy = column_stats(y);
        for (std::size_t c = 0; c < 4; ++c) {
            CHECK(std::abs(so.mean[c] - sy.mean[c]) < 1e-5f);
            CHECK(std::abs(so.stddev[c] - sy.stddev[c]) < 1e-5f);
        }
    }
}

TEST_CASE("scaled_dot_attention single key and duplicate keys") {
    Pcg32 rng(6, 1);
    const Tensor q = randn<float>(rng, {3, 2});
    const Tensor k = randn<float>(rng, {1, 2});
    const Tensor v = Tensor::matrix(1, 2, {3, 7});
    const auto single = scaled_dot_attention(q, k, v);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(single.out(i, 0) == doctest::Approx(3.0f));
        CHECK(single.out(i, 1) == doctest::Approx(7.0f));
        CHECK(single.probs(i, 0) == doctest::Approx(1.0f));
    }

    const Tensor k2 = vstack(k, k);
    const Tensor v2 = vstack(v, v);
    const auto dup = scaled_dot_attention(q, k2, v2);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(dup.out(i, 0) == doctest::Approx(3.0f).epsilon(1e-6));
        CHECK(dup.out(i, 1) == doctest::Approx(7.0f).epsilon(1e-6));
        CHECK(dup.probs(i, 0) == doctest::Approx(0.5f).epsilon(1e-6));
        CHECK(dup.probs(i, 1) == doctest::Approx(0.5f).epsilon(1e-6));
    }
}

TEST_CASE("scaled_dot_attention lambda of one is a bitwise no-op") {
    Pcg32 rng(7, 1);
    const Tensor q = randn<float>(rng, {4, 8});
    const Tensor k = randn<float>(rng, {5, 8});
    const Tensor v = randn<float>(rng, {5, 3});
    const std::vector<float> ones(5, 1.0f);
    const auto plain = scaled_dot_attention(q, k, v);
    const auto masked = scaled_dot_attention(q, k, v, &ones);
    CHECK(plain.out.bit_equal(masked.out));
    CHECK(plain.probs.bit_equal(masked.probs));
}

TEST_CASE("scaled_dot_attention rejects mismatched dims and bad mask") {
    Pcg32 rng(8, 1);
    const Tensor q = randn<float>(rng, {4, 8});
    const Tensor k = randn<float>(rng, {5, 7});
    const Tensor v = randn<float>(rng, {5, 3});
    CHECK_THROWS_AS(scaled_dot_attention(q, k, v), std::invalid_argument);

    const Tensor k_ok = randn<float>(rng, {5, 8});
    std::vector<float> bad_mask(5, 1.0f);
    bad_mask[2] = 0.0f;
    CHECK_THROWS_AS(scaled_dot_attention(q, k_ok, v, &bad_mask), std::invalid_argument);
}

TEST_CASE("shared_attention_reference collapses on duplicate reference") {
    Pcg32 rng(9, 1);
    ShareConfig cfg;
    cfg.mode = ShareMode::Reference;
    cfg.use_adain = true;
    cfg.lambda = 1.0;
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor q = randn<float>(rng, {6, 8});
        const Tensor k = randn<float>(rng, {6, 8});
        const Tensor v = randn<float>(rng, {6, 4});
        const HeadKV<float> ref{q, k, v};
        const auto shared = shared_attention_reference(q, k, v, ref, cfg);
        const auto plain = scaled_dot_attention(q, k, v);
        CHECK(max_abs_diff(shared.out, plain.out) < 1e-5f);
        // probs rows still sum to 1 over both blocks
        for (std::size_t i = 0; i < shared.probs.rows(); ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < shared.probs.cols(); ++j) sum += shared.probs(i, j);
            CHECK(std::abs(sum - 1.0) < 1e-6);
        }
    }
}

TEST_CASE("tiny lambda pushes the mass onto the target block") {
    Pcg32 rng(10, 1);
    ShareConfig cfg;
    cfg.mode = ShareMode::Reference;
    cfg.use_adain = false;
    cfg.lambda = 1e-6;
    for (int rep = 0; rep < 10; ++rep) {
        Tensor q = randn<float>(rng, {5, 16});
        for (std::size_t i = 0; i < q.numel(); ++i) q[i] *= 3.0f;
        const Tensor k_t = q;  // self-similar keys: well-separated logits
        const Tensor v_t = randn<float>(rng, {5, 4});
        const HeadKV<float> ref{randn<float>(rng, {5, 16}), randn<float>(rng, {5, 16}),
                                randn<float>(rng, {5, 4})};
        const auto shared = shared_attention_reference(q, k_t, v_t, ref, cfg);
        CHECK(1.0 - reference_mass(shared.probs, 5) >= 0.99);
    }
}

TEST_CASE("adain inside sharing matches the reference query statistics") {
    Pcg32 rng(11, 1);
    const Tensor q_t = randn<float>(rng, {10, 6});
    const Tensor q_r = scale(randn<float>(rng, {10, 6}), 2.5f);
    const Tensor q_hat = adain(q_t, q_r);
    const auto sh = column_stats(q_hat);
    const auto sr = column_stats(q_r);
    for (std::size_t c = 0; c < 6; ++c) {
        CHECK(std::abs(sh.mean[c] - sr.mean[c]) < 1e-5f);
        CHECK(std::abs(sh.stddev[c] - sr.stddev[c]) < 1e-5f);
    }
}

TEST_CASE("reference mass is monotone in lambda on nonnegative-logit fixtures") {
    Pcg32 rng(12, 1);
    const std::vector<double> lambdas{1.0, 0.8, 0.6, 0.4, 0.2, 0.05};
    for (int rep = 0; rep < 30; ++rep) {
        const Tensor q = uniform_tensor(rng, 4, 8);
        const Tensor k_ref = uniform_tensor(rng, 6, 8);
        const Tensor k_tgt = uniform_tensor(rng, 4, 8);
        const Tensor v = randn<float>(rng, {10, 3});
        const Tensor keys = vstack(k_ref, k_tgt);
        double prev = 2.0;
        for (double lambda : lambdas) {
            std::vector<float> mask(10, 1.0f);
            for (std::size_t j = 0; j < 6; ++j) mask[j] = static_cast<float>(lambda);
            const auto out = scaled_dot_attention(q, keys, v, &mask);
            const double mass = reference_mass(out.probs, 6);
            CHECK(mass <= prev + 1e-7);
            prev = mass;
        }
    }
}

TEST_CASE("shared_attention_full degenerate batch equals plain attention") {
    Pcg32 rng(13, 1);
    const Tensor q = randn<float>(rng, {4, 8});
    const Tensor k = randn<float>(rng, {4, 8});
    const Tensor v = randn<float>(rng, {4, 5});
    const auto full = shared_attention_full<float>({{q, k, v}});
    const auto plain = scaled_dot_attention(q, k, v);
    CHECK(full.size() == 1);
    CHECK(full[0].out.bit_equal(plain.out));
    CHECK(full[0].probs.bit_equal(plain.probs));
}

TEST_CASE("shared_attention_full duplicate stream collapse and row sums") {
    Pcg32 rng(14, 1);
    for (int rep = 0; rep < 20; ++rep) {
        const Tensor q = randn<float>(rng, {5, 8});
        const Tensor k = randn<float>(rng, {5, 8});
        const Tensor v = randn<float>(rng, {5, 4});
        const auto both = shared_attention_full<float>({{q, k, v}, {q, k, v}});
        const auto plain = scaled_dot_attention(q, k, v);
        CHECK(max_abs_diff(both[0].out, plain.out) < 1e-5f);
        for (const auto& stream : both) {
            CHECK(stream.probs.cols() == 10);
            for (std::size_t i = 0; i < stream.probs.rows(); ++i) {
                double sum = 0.0;
                for (std::size_t j = 0; j < stream.probs.cols(); ++j) sum += stream.probs(i, j);
                CHECK(std::abs(sum - 1.0) < 1e-6);
            }
        }
    }
    CHECK_THROWS_AS(shared_attention_full<float>({}), std::invalid_argument);
}

TEST_CASE("multi_head_block zero output projection is the identity") {
    Pcg32 rng(15, 1);
    AttentionLayerWeightsT<float> w;
    for (int h = 0; h < 2; ++h) {
        w.wq.push_back(randn<float>(rng, {8, 4}));
        w.wk.push_back(randn<float>(rng, {8, 4}));
        w.wv.push_back(randn<float>(rng, {8, 4}));
    }
    w.wo = Tensor({8, 8});
    const Tensor phi = randn<float>(rng, {6, 8});
    const ShareConfig cfg;
    const TensorT<float> out = multi_head_block(phi, w, cfg, ShareContext<float>{});
    CHECK(out.bit_equal(phi));
}

TEST_CASE("multi_head_block masked-off layer is bitwise plain") {
    Pcg32 rng(16, 1);
    AttentionLayerWeightsT<float> w;
    for (int h = 0; h < 2; ++h) {
        w.wq.push_back(randn<float>(rng, {8, 4}));
        w.wk.push_back(randn<float>(rng, {8, 4}));
        w.wv.push_back(randn<float>(rng, {8, 4}));
    }
    w.wo = randn<float>(rng, {8, 8});
    const Tensor phi = randn<float>(rng, {6, 8});

    auto ref = ReferenceKV<float>::sized(1, 2);
    for (int h = 0; h < 2; ++h) {
        ref.layers[0].heads[static_cast<std::size_t>(h)] = {randn<float>(rng, {6, 4}),
                                                            randn<float>(rng, {6, 4}),
                                                            randn<float>(rng, {6, 4})};
    }
    ShareConfig masked;
    masked.mode = ShareMode::Reference;
    masked.layer_mask = {0};
    ShareContext<float> consume{ShareRole::Consume, &ref, 0, nullptr};

    ShareConfig none;
    const TensorT<float> a = multi_head_block(phi, w, masked, consume);
    const TensorT<float> b = multi_head_block(phi, w, none, ShareContext<float>{});
    CHECK(a.bit_equal(b));
}

TEST_CASE("one head equals two duplicated half-width heads") {
    Pcg32 rng(17, 1);
    const std::size_t d = 8, dk = 4, m = 5;
    const Tensor wq1 = randn<float>(rng, {d, dk});
    const Tensor wk1 = randn<float>(rng, {d, dk});
    const Tensor wv1 = randn<float>(rng, {d, dk});
    const Tensor wv2 = randn<float>(rng, {d, dk});
    const Tensor wo = randn<float>(rng, {d, d});
    const Tensor phi = randn<float>(rng, {m, d});

    AttentionLayerWeightsT<float> two;
    two.wq = {wq1, wq1};
    two.wk = {wk1, wk1};
    two.wv = {wv1, wv2};
    two.wo = wo;

    const float c = std::pow(2.0f, -0.25f);
    const auto stitch = [&](const Tensor& left, const Tensor& right, float s) {
        Tensor out({d, 2 * dk});
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < dk; ++j) {
                out(i, j) = s * left(i, j);
                out(i, dk + j) = s * right(i, j);
            }
        }
        return out;
    };
    AttentionLayerWeightsT<float> one;
    one.wq = {stitch(wq1, wq1, c)};
    one.wk = {stitch(wk1, wk1, c)};
    one.wv = {stitch(wv1, wv2, 1.0f)};
    one.wo = wo;

    const ShareConfig cfg;
    const TensorT<float> from_two = multi_head_block(phi, two, cfg, ShareContext<float>{});
    const TensorT<float> from_one = multi_head_block(phi, one, cfg, ShareContext<float>{});
    CHECK(max_abs_diff(from_two, from_one) < 1e-5f);
}
