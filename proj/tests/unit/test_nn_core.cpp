#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "helpers.hpp"
#include "pfcn/backbone.hpp"
#include "pfcn/gradcheck.hpp"
#include "pfcn/layers.hpp"
#include "pfcn/model.hpp"
#include "pfcn/ops.hpp"

using namespace pfcn;
using testutil::random_tensor;

namespace {

// Direct nested-loop cross-correlation with zero padding k/2.
Tensor<double> naive_conv(const Tensor<double>& x, const std::vector<double>& w, const std::vector<double>& b, int cout,
                          int k, int stride) {
    const int pad = k / 2;
    const int oh = (x.h + 2 * pad - k) / stride + 1, ow = (x.w + 2 * pad - k) / stride + 1;
    Tensor<double> y(cout, oh, ow);
    for (int o = 0; o < cout; ++o)
        for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
                double s = b.empty() ? 0.0 : b[o];
                for (int c = 0; c < x.c; ++c)
                    for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                            int iy = oy * stride + ky - pad, ix = ox * stride + kx - pad;
                            if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
                            s += w[((o * x.c + c) * k + ky) * k + kx] * x.at(c, iy, ix);
                        }
                y.at(o, oy, ox) = s;
            }
    return y;
}

Tensor<double> naive_gn_relu(const Tensor<double>& x, const std::vector<double>& gamma, const std::vector<double>& beta,
                             int groups) {
    Tensor<double> y = x;
    const int per = x.c / groups;
    for (int g = 0; g < groups; ++g) {
        double mean = 0, n = double(per) * x.h * x.w;
        for (int c = g * per; c < (g + 1) * per; ++c)
            for (double v : x.plane(c)) mean += v;
        mean /= n;
        double var = 0;
        for (int c = g * per; c < (g + 1) * per; ++c)
            for (double v : x.plane(c)) var += (v - mean) * (v - mean);
        var /= n;
        for (int c = g * per; c < (g + 1) * per; ++c)
            for (int i = 0; i < x.h * x.w; ++i) {
                double v = (x.plane(c)[i] - mean) / std::sqrt(var + 1e-5) * gamma[c] + beta[c];
                y.plane(c)[i] = std::max(0.0, v);
            }
    }
    return y;
}

double max_abs_diff(const Tensor<double>& a, const Tensor<double>& b) {
    REQUIRE(a.same_shape(b));
    double m = 0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

}  // namespace

TEST_CASE("conv2d matches the nested-loop oracle on random inputs") {
    for (int trial = 0; trial < 30; ++trial) {
        auto rng = testutil::rng_for(trial);
        const int cin = testutil::uniform_int(rng, 1, 5), cout = testutil::uniform_int(rng, 1, 5);
        const int h = testutil::uniform_int(rng, 1, 16), w = testutil::uniform_int(rng, 1, 16);
        const int k = trial % 3 == 0 ? 1 : 3, stride = trial % 2 ? 2 : 1;
        auto x = random_tensor<double>(rng, cin, h, w);
        auto wt = testutil::random_vector(rng, size_t(cout) * cin * k * k);
        auto b = trial % 4 ? testutil::random_vector(rng, cout) : std::vector<double>{};
        auto y = ops::conv2d<double>(x, wt, b, cout, k, stride, nullptr);
        CHECK(max_abs_diff(y, naive_conv(x, wt, b, cout, k, stride)) <= 1e-5);
    }
}

TEST_CASE("conv block equals layer-by-layer oracle on a random 8x8 input") {
    ParamStore<double> store;
    ConvBlock<double> block(store, "b", 3, 8, 3);
    std::mt19937_64 rng(11);
    block.init(rng);
    for (auto& p : store.all())
        for (auto& v : p->value) v += std::uniform_real_distribution<double>(-0.2, 0.2)(rng);
    auto x = random_tensor<double>(rng, 3, 8, 8);
    Tensor<double> ref = x;
    for (int l = 0; l < 3; ++l) {
        const auto& w = store.get("b." + std::to_string(l) + ".conv.weight").value;
        ref = naive_conv(ref, w, {}, 8, 3, 1);
        ref = naive_gn_relu(ref, store.get("b." + std::to_string(l) + ".gn.gamma").value,
                            store.get("b." + std::to_string(l) + ".gn.beta").value, ops::group_count(8));
    }
    CHECK(max_abs_diff(block.forward(x, nullptr), ref) <= 1e-5);
}

TEST_CASE("conv block on zeros and on a single pixel") {
    ParamStore<float> store;
    ConvBlock<float> block(store, "b", 4, 8, 3);
    std::mt19937_64 rng(2);
    block.init(rng);
    auto y = block.forward(Tensor<float>(4, 6, 6, 0.f), nullptr);
    for (float v : y.data) CHECK(std::abs(v) <= 1e-6f);

    auto one = block.forward(random_tensor<float>(rng, 4, 1, 1), nullptr);
    CHECK(one.c == 8);
    CHECK(one.h == 1);
    CHECK(one.w == 1);

    CHECK_THROWS_AS(block.forward(Tensor<float>(3, 4, 4), nullptr), ConfigError);
}

TEST_CASE("group count is the largest divisor up to eight") {
    CHECK(ops::group_count(32) == 8);
    CHECK(ops::group_count(12) == 6);
    CHECK(ops::group_count(7) == 7);
    CHECK(ops::group_count(3) == 3);
    CHECK(ops::group_count(1) == 1);
}

TEST_CASE("pyramid stage sizes follow the strides") {
    ParamStore<float> store;
    BackboneConfig cfg;
    Backbone<float> bb(store, cfg);
    std::mt19937_64 rng(1);
    bb.init(rng);
    for (int size : {16, 32, 48, 64, 80, 128}) {
        auto pyr = bb.forward(Tensor<float>(3, size, size + 16, 0.1f), nullptr);
        REQUIRE(pyr.num_stages() == 3);
        for (int s = 0; s < 3; ++s) {
            const int stride = 4 << s;
            CHECK(pyr.strides[s] == stride);
            CHECK(pyr.stages[s].h == (size + stride - 1) / stride);
            CHECK(pyr.stages[s].w == (size + 16 + stride - 1) / stride);
            CHECK(pyr.stages[s].c == 32);
        }
    }
    CHECK_THROWS_AS(check_input_size(60, 64, cfg), InputError);
    try {
        check_input_size(60, 64, cfg);
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("4") != std::string::npos);
    }
}

TEST_CASE("pyramid is bit-identical across runs with a fixed seed") {
    auto run = [] {
        ParamStore<float> store;
        Backbone<float> bb(store, BackboneConfig{});
        std::mt19937_64 rng(42);
        bb.init(rng);
        std::mt19937_64 img_rng(7);
        return bb.forward(random_tensor<float>(img_rng, 3, 64, 64), nullptr);
    };
    auto a = run(), b = run();
    for (int s = 0; s < 3; ++s) CHECK(a.stages[s].data == b.stages[s].data);
}

TEST_CASE("bilinear resize fixtures") {
    Tensor<double> c(1, 8, 8, 0.7);
    for (double v : ops::bilinear_resize(c, 4, 4).data) CHECK(v == doctest::Approx(0.7).epsilon(1e-12));

    std::mt19937_64 rng(3);
    auto x = random_tensor<double>(rng, 2, 5, 7);
    CHECK(ops::bilinear_resize(x, 5, 7).data == x.data);

    // Half-pixel centers: source x = (ox + 0.5) / 2 - 0.5, clamped to [0, 1].
    Tensor<double> m(1, 2, 2);
    m.at(0, 0, 1) = m.at(0, 1, 1) = 1;
    auto r = ops::bilinear_resize(m, 2, 4);
    const double expect[4] = {0.0, 0.25, 0.75, 1.0};
    for (int y = 0; y < 2; ++y)
        for (int ox = 0; ox < 4; ++ox) CHECK(r.at(0, y, ox) == doctest::Approx(expect[ox]));
}

TEST_CASE("bilinear outputs are convex combinations of inputs") {
    for (int trial = 0; trial < 50; ++trial) {
        auto rng = testutil::rng_for(trial, 5);
        auto x = random_tensor<double>(rng, 1, testutil::uniform_int(rng, 1, 9), testutil::uniform_int(rng, 1, 9));
        auto y = ops::bilinear_resize(x, testutil::uniform_int(rng, 1, 20), testutil::uniform_int(rng, 1, 20));
        const auto [lo, hi] = std::minmax_element(x.data.begin(), x.data.end());
        for (double v : y.data) {
            CHECK(v >= *lo - 1e-12);
            CHECK(v <= *hi + 1e-12);
        }
    }
}

TEST_CASE("bilinear backward is the adjoint of forward") {
    for (int trial = 0; trial < 20; ++trial) {
        auto rng = testutil::rng_for(trial, 6);
        const int ih = testutil::uniform_int(rng, 1, 8), iw = testutil::uniform_int(rng, 1, 8);
        const int oh = testutil::uniform_int(rng, 1, 16), ow = testutil::uniform_int(rng, 1, 16);
        auto x = random_tensor<double>(rng, 2, ih, iw);
        auto g = random_tensor<double>(rng, 2, oh, ow);
        auto y = ops::bilinear_resize(x, oh, ow);
        auto dx = ops::bilinear_resize_backward(g, ih, iw);
        double lhs = 0, rhs = 0;
        for (size_t i = 0; i < y.size(); ++i) lhs += y.data[i] * g.data[i];
        for (size_t i = 0; i < x.size(); ++i) rhs += x.data[i] * dx.data[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("finite difference check on a quadratic") {
    LossFunction quad = [](std::span<const double> p, std::span<double> g) {
        double s = 0;
        for (size_t i = 0; i < p.size(); ++i) {
            s += p[i] * p[i];
            if (!g.empty()) g[i] = 2 * p[i];
        }
        return s;
    };
    std::mt19937_64 rng(4);
    auto p = testutil::random_vector(rng, 20);
    auto rep = finite_difference_check(quad, p, 1e-4);
    CHECK(rep.finite);
    CHECK(rep.checked == 20);
    CHECK(rep.max_relative_error <= 1e-7);

    // The four-point stencil is exact on quartics: p^4 at h = 0.1.
    LossFunction quartic = [](std::span<const double> p, std::span<double> g) {
        if (!g.empty()) g[0] = 4 * p[0] * p[0] * p[0];
        return p[0] * p[0] * p[0] * p[0];
    };
    std::vector<double> x{0.7};
    CHECK(finite_difference_check(quartic, x, 0.1, 0, 0, Stencil::FourPoint).max_relative_error <= 1e-12);
    CHECK(finite_difference_check(quartic, x, 0.1).max_relative_error > 1e-3);

    LossFunction broken = [](std::span<const double> p, std::span<double> g) {
        if (!g.empty()) g[0] = 1;
        return std::log(p[0]);
    };
    std::vector<double> neg{-1.0};
    auto bad = finite_difference_check(broken, neg, 1e-4);
    CHECK_FALSE(bad.finite);
    CHECK_FALSE(bad.failure.empty());
}

namespace {

// Scalar probe of a tensor-valued op: L = sum(r * f(x)) for a fixed random r.
template <typename Forward, typename Backward>
double check_op(std::mt19937_64& rng, const Tensor<double>& x0, Forward fwd, Backward bwd) {
    auto y0 = fwd(x0);
    auto r = random_tensor<double>(rng, y0.c, y0.h, y0.w);
    LossFunction loss = [&](std::span<const double> p, std::span<double> g) {
        Tensor<double> x = x0;
        x.data.assign(p.begin(), p.end());
        auto y = fwd(x);
        double s = 0;
        for (size_t i = 0; i < y.size(); ++i) s += r.data[i] * y.data[i];
        if (!g.empty()) {
            auto dx = bwd(x, r);
            std::copy(dx.data.begin(), dx.data.end(), g.begin());
        }
        return s;
    };
    return finite_difference_check(loss, x0.data, 1e-6).max_relative_error;
}

}  // namespace

TEST_CASE("operator gradients agree with central differences") {
    std::mt19937_64 rng(8);
    auto x = random_tensor<double>(rng, 4, 6, 5);

    auto wt = testutil::random_vector(rng, 3 * 4 * 9);
    auto conv_f = [&](const Tensor<double>& in) {
        return ops::conv2d<double>(in, wt, std::vector<double>{}, 3, 3, 2, nullptr);
    };
    auto conv_b = [&](const Tensor<double>& in, const Tensor<double>& dy) {
        ops::ConvCache<double> cache;
        ops::conv2d<double>(in, wt, std::vector<double>{}, 3, 3, 2, &cache);
        std::vector<double> dw(wt.size());
        return ops::conv2d_backward<double>(cache, dy, wt, dw, std::span<double>{}, 3, 3, 2, true);
    };
    CHECK(check_op(rng, x, conv_f, conv_b) <= 1e-6);

    std::vector<double> gamma{1.2, 0.8, 1.0, 0.5}, beta{0.1, -0.2, 0.0, 0.3};
    auto gn_f = [&](const Tensor<double>& in) { return ops::group_norm<double>(in, gamma, beta, 2, nullptr); };
    auto gn_b = [&](const Tensor<double>& in, const Tensor<double>& dy) {
        ops::GroupNormCache<double> cache;
        ops::group_norm<double>(in, gamma, beta, 2, &cache);
        std::vector<double> dg(4), db(4);
        return ops::group_norm_backward<double>(cache, dy, gamma, dg, db);
    };
    CHECK(check_op(rng, x, gn_f, gn_b) <= 1e-5);

    auto up_f = [](const Tensor<double>& in) { return ops::bilinear_resize(in, 11, 13); };
    auto up_b = [](const Tensor<double>& in, const Tensor<double>& dy) {
        return ops::bilinear_resize_backward(dy, in.h, in.w);
    };
    CHECK(check_op(rng, x, up_f, up_b) <= 1e-6);
}

TEST_CASE("whole-model gradient in 64-bit mode") {
    ModelConfig cfg;
    cfg.backbone.stem_channels = 4;
    cfg.backbone.channels = 8;
    cfg.head_channels = 8;
    cfg.kernel_dim = 8;
    PanopticModel<double> m(cfg);
    m.init(3);
    std::mt19937_64 rng(9);
    auto img = random_tensor<double>(rng, 3, 32, 32);

    // L = sum of random projections of every output.
    auto probe = [&](const PanopticModel<double>::Output& out, PanopticModel<double>::OutputGrad* g) {
        std::mt19937_64 r(77);
        std::uniform_real_distribution<double> u(-1, 1);
        double s = 0;
        auto use = [&](const Tensor<double>& t, Tensor<double>* dt) {
            if (dt) *dt = Tensor<double>(t.c, t.h, t.w);
            for (size_t i = 0; i < t.size(); ++i) {
                double c = u(r);
                s += c * t.data[i];
                if (dt) dt->data[i] = c;
            }
        };
        if (g) {
            g->position_logits.resize(out.position_logits.size());
            g->kernels.resize(out.kernels.size());
        }
        for (size_t i = 0; i < out.position_logits.size(); ++i)
            use(out.position_logits[i], g ? &g->position_logits[i] : nullptr);
        for (size_t i = 0; i < out.kernels.size(); ++i) use(out.kernels[i], g ? &g->kernels[i] : nullptr);
        use(out.encoded, g ? &g->encoded : nullptr);
        return s;
    };

    m.params().zero_grad();
    PanopticModel<double>::Cache cache;
    PanopticModel<double>::OutputGrad grad;
    probe(m.forward(img, &cache), &grad);
    m.backward(cache, grad);

    int bad = 0, checked = 0;
    std::mt19937_64 pick(1);
    for (auto& p : m.params().all()) {
        for (int t = 0; t < 2; ++t) {
            size_t j = pick() % p->size();
            const double keep = p->value[j], h = 1e-6;
            p->value[j] = keep + h;
            const double up = probe(m.forward(img, nullptr), nullptr);
            p->value[j] = keep - h;
            const double down = probe(m.forward(img, nullptr), nullptr);
            p->value[j] = keep;
            const double fd = (up - down) / (2 * h), an = p->grad[j];
            ++checked;
            // A ReLU kink inside [-h, h] or cancellation on a near-zero
            // gradient shows up as absolute, not relative, disagreement.
            if (std::abs(fd - an) > 1e-4 * std::max(std::abs(fd), std::abs(an)) + 1e-7) {
                ++bad;
                MESSAGE(p->name << "[" << j << "] analytic " << an << " numeric " << fd);
            }
        }
    }
    CHECK(checked > 40);
    CHECK(bad == 0);
}

TEST_CASE("checkpoint round trip and shape checks") {
    ModelConfig cfg;
    cfg.head_channels = 16;
    cfg.kernel_dim = 8;
    PanopticModel<float> a(cfg), b(cfg);
    a.init(1);
    b.init(2);
    auto path = std::filesystem::temp_directory_path() / "pfcn_test_ckpt.bin";
    save_checkpoint(a.params(), path);
    load_checkpoint(b.params(), path);
    CHECK(a.params().flat_values() == b.params().flat_values());

    ModelConfig other = cfg;
    other.kernel_dim = 16;
    PanopticModel<float> c(other);
    CHECK_THROWS(load_checkpoint(c.params(), path));
    std::filesystem::remove(path);
}
