#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "mivec/ivc.hpp"
#include "mivec/rng.hpp"

using namespace mivec;

namespace {

template <typename T>
TensorT<T> random_hwc(int64_t H, int64_t W, int64_t C, uint64_t seed, double lo, double hi) {
    Rng rng(seed);
    TensorT<T> t({H, W, C});
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    return t;
}

} // namespace

TEST_CASE("zero flow is the identity warp") {
    auto src = random_hwc<float>(9, 7, 3, 1, 0.0, 1.0);
    TensorT<float> flow({9, 7, 2});
    flow.zero();
    CHECK(backward_warp(src, flow).bit_equal(src));
}

TEST_CASE("integer flow shifts with edge clamping, exactly") {
    auto src = random_hwc<float>(6, 8, 3, 2, 0.0, 1.0);
    TensorT<float> flow({6, 8, 2});
    for (int64_t i = 0; i < 6 * 8; ++i) {
        flow[i * 2 + 0] = 1.0f; // +x
        flow[i * 2 + 1] = 0.0f;
    }
    auto out = backward_warp(src, flow);
    for (int64_t y = 0; y < 6; ++y)
        for (int64_t x = 0; x < 8; ++x)
            for (int64_t c = 0; c < 3; ++c)
                CHECK(out.at(y, x, c) == src.at(y, std::min<int64_t>(x + 1, 7), c));
}

TEST_CASE("half-pixel flow averages neighbors") {
    auto src = random_hwc<float>(5, 6, 3, 3, 0.0, 1.0);
    TensorT<float> flow({5, 6, 2});
    for (int64_t i = 0; i < 5 * 6; ++i) {
        flow[i * 2 + 0] = 0.0f;
        flow[i * 2 + 1] = 0.5f; // +y
    }
    auto out = backward_warp(src, flow);
    for (int64_t y = 0; y < 5; ++y)
        for (int64_t x = 0; x < 6; ++x)
            for (int64_t c = 0; c < 3; ++c) {
                double expect = y == 4 ? src.at(4, x, c)
                                       : 0.5 * (src.at(y, x, c) + src.at(y + 1, x, c));
                CHECK(out.at(y, x, c) == doctest::Approx(expect).epsilon(1e-6));
            }
}

TEST_CASE("refine through a zero conv is the identity") {
    auto warped = random_hwc<float>(7, 7, 3, 4, 0.0, 1.0);
    ConvT<float> conv{TensorT<float>({3, 3, 3, 3}), TensorT<float>({3})};
    conv.w.zero();
    conv.b.zero();
    CHECK(refine(warped, conv).bit_equal(warped));

    conv.b.fill(0.25f);
    auto r = refine(warped, conv);
    for (int64_t i = 0; i < r.numel(); ++i) CHECK(r[i] == warped[i] + 0.25f);
}

TEST_CASE("fuse blends and clamps") {
    TensorT<float> itilde({1, 2, 3}), ibar({1, 2, 3}), wmap({1, 2, 1});
    itilde.fill(0.5f);
    ibar.fill(0.2f);
    wmap[0] = 1.0f;
    wmap[1] = 0.0f;
    auto out = fuse(itilde, ibar, wmap);
    CHECK(out.at(0, 0, 0) == 0.7f);
    CHECK(out.at(0, 1, 0) == 0.5f);

    itilde.fill(0.95f);
    out = fuse(itilde, ibar, wmap);
    CHECK(out.at(0, 0, 0) == 1.0f); // 1.15 clamps
    itilde.fill(-0.5f);
    out = fuse(itilde, ibar, wmap);
    CHECK(out.at(0, 1, 0) == 0.0f);

    CHECK_THROWS_AS(fuse(itilde, TensorT<float>({1, 3, 3}), wmap), ValidationError);
    CHECK_THROWS_AS(fuse(itilde, ibar, TensorT<float>({1, 3, 1})), ValidationError);
}

TEST_CASE("compensation forward matches its assembled pieces") {
    ModelConfig cfg;
    cfg.grid_h = cfg.grid_w = 2;
    cfg.grid_c = 4;
    cfg.T = 2;
    cfg.N = 2;
    cfg.factors = {2};
    auto m = init_model<float>(cfg);
    {
        Rng rng(5);
        for (int64_t i = 0; i < m.refine.w.numel(); ++i)
            m.refine.w[i] = static_cast<float>(rng.uniform(-0.05, 0.05));
    }

    const int64_t H = 8, W = 9;
    auto recon = random_hwc<float>(H, W, 3, 6, 0.0, 1.0);
    ForwardTraceT<float> net;
    net.rgb = random_hwc<float>(H, W, 3, 7, -0.2, 1.2);
    net.flow = random_hwc<float>(H, W, 2, 8, -1.5, 1.5);
    net.wmap = random_hwc<float>(H, W, 1, 9, 0.1, 0.9);

    CompensationTraceT<float> tr;
    compensate_forward(m, recon, net, tr);
    CHECK(tr.warped.bit_equal(backward_warp(recon, net.flow)));
    CHECK(tr.ibar.bit_equal(refine(tr.warped, m.refine)));
    CHECK(tr.fused.bit_equal(fuse(net.rgb, tr.ibar, net.wmap)));
    for (int64_t i = 0; i < tr.fused.numel(); ++i) {
        CHECK(tr.fused[i] >= 0.0f);
        CHECK(tr.fused[i] <= 1.0f);
    }
}

TEST_CASE("compensation backward agrees with finite differences") {
    ModelConfig cfg;
    cfg.grid_h = cfg.grid_w = 2;
    cfg.grid_c = 4;
    cfg.T = 2;
    cfg.N = 2;
    cfg.factors = {2};
    auto m = build_skeleton<double>(cfg);
    {
        Rng rng(11);
        for (int64_t i = 0; i < m.refine.w.numel(); ++i)
            m.refine.w[i] = rng.uniform(-0.1, 0.1);
        for (int64_t i = 0; i < m.refine.b.numel(); ++i)
            m.refine.b[i] = rng.uniform(-0.05, 0.05);
    }

    const int64_t H = 6, W = 6;
    auto recon = random_hwc<double>(H, W, 3, 12, 0.05, 0.95);
    auto rgb = random_hwc<double>(H, W, 3, 13, 0.15, 0.55);
    auto aux = random_hwc<double>(H, W, 3, 14, -0.4, 0.4);
    // Keep flow clear of the sign boundary so clamped samples stay clamped
    // under the finite-difference step.
    for (int64_t i = 0; i < aux.numel(); ++i)
        if (std::abs(aux[i]) < 0.05) aux[i] = aux[i] < 0 ? -0.05 : 0.05;
    auto gsel = random_hwc<double>(H, W, 3, 15, -1.0, 1.0);

    // A few saturated pixels so the clamp gate is exercised.
    rgb[0] = 1.4;
    rgb[1] = -1.2;

    auto forward_loss = [&](const ImplicitModelT<double>& model, const TensorT<double>& rgb_in,
                            const TensorT<double>& aux_in) {
        ForwardTraceT<double> net;
        net.rgb = rgb_in;
        net.flow = TensorT<double>({H, W, 2});
        net.wmap = TensorT<double>({H, W, 1});
        for (int64_t i = 0; i < H * W; ++i) {
            net.flow[i * 2 + 0] = aux_in[i * 3 + 0];
            net.flow[i * 2 + 1] = aux_in[i * 3 + 1];
            net.wmap[i] = 1.0 / (1.0 + std::exp(-aux_in[i * 3 + 2]));
        }
        CompensationTraceT<double> tr;
        compensate_forward(model, recon, net, tr);
        double L = 0;
        for (int64_t i = 0; i < tr.fused.numel(); ++i) L += gsel[i] * tr.fused[i];
        return L;
    };

    // Analytic gradients.
    ForwardTraceT<double> net;
    net.rgb = rgb;
    net.flow = TensorT<double>({H, W, 2});
    net.wmap = TensorT<double>({H, W, 1});
    for (int64_t i = 0; i < H * W; ++i) {
        net.flow[i * 2 + 0] = aux[i * 3 + 0];
        net.flow[i * 2 + 1] = aux[i * 3 + 1];
        net.wmap[i] = 1.0 / (1.0 + std::exp(-aux[i * 3 + 2]));
    }
    CompensationTraceT<double> tr;
    compensate_forward(m, recon, net, tr);
    TensorT<double> g_rgb({H, W, 3}), g_aux({H, W, 3});
    auto g = zeros_like(m);
    compensate_backward(m, recon, net, tr, gsel, g_rgb, g_aux, g);

    const double h = 1e-6;
    auto fd_ok = [&](double analytic, double numeric) {
        double denom = std::max(std::abs(analytic), std::abs(numeric));
        return std::abs(analytic - numeric) <= 1e-5 * std::max(denom, 1e-3);
    };

    int checked = 0;
    for (int64_t i = 0; i < rgb.numel(); i += 5) {
        auto r2 = rgb;
        r2[i] += h;
        double up = forward_loss(m, r2, aux);
        r2[i] -= 2 * h;
        double dn = forward_loss(m, r2, aux);
        CHECK(fd_ok(g_rgb[i], (up - dn) / (2 * h)));
        ++checked;
    }
    for (int64_t i = 0; i < aux.numel(); i += 4) { // stride 4 rotates the channels
        auto a2 = aux;
        a2[i] += h;
        double up = forward_loss(m, rgb, a2);
        a2[i] -= 2 * h;
        double dn = forward_loss(m, rgb, a2);
        CHECK(fd_ok(g_aux[i], (up - dn) / (2 * h)));
        ++checked;
    }
    for (int64_t i = 0; i < m.refine.w.numel(); i += 7) {
        auto m2 = m;
        m2.refine.w[i] += h;
        double up = forward_loss(m2, rgb, aux);
        m2.refine.w[i] -= 2 * h;
        double dn = forward_loss(m2, rgb, aux);
        CHECK(fd_ok(g.refine.w[i], (up - dn) / (2 * h)));
        ++checked;
    }
    for (int64_t i = 0; i < m.refine.b.numel(); ++i) {
        auto m2 = m;
        m2.refine.b[i] += h;
        double up = forward_loss(m2, rgb, aux);
        m2.refine.b[i] -= 2 * h;
        double dn = forward_loss(m2, rgb, aux);
        CHECK(fd_ok(g.refine.b[i], (up - dn) / (2 * h)));
        ++checked;
    }
    CHECK(checked > 60);

    // Saturated pixels pass no gradient to the rgb head.
    CHECK(g_rgb[0] == 0.0);
    CHECK(g_rgb[1] == 0.0);
}
