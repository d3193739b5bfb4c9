#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mivec/inrnet.hpp"

using namespace mivec;

namespace {

ModelConfig tiny_cfg() {
    ModelConfig cfg;
    cfg.grid_h = cfg.grid_w = 2;
    cfg.grid_c = 4;
    cfg.T = 4;
    cfg.N = 2;
    cfg.factors = {2};
    cfg.channels = {4};
    return cfg;
}

} // namespace

TEST_CASE("parameter count adds up tensor by tensor") {
    auto m = build_skeleton<float>(tiny_cfg());
    // g_t: 64 + 32 + 16; g_v: 32; emb: 32; block: 16*9*4 + 16;
    // heads: (3*3*3*4 + 3) * 2; refine: 3*3*3*3 + 3.
    CHECK(m.g_t1.numel() == 64);
    CHECK(m.g_t2.numel() == 32);
    CHECK(m.g_t3.numel() == 16);
    CHECK(m.g_v.numel() == 32);
    REQUIRE(m.g_emb.size() == 1);
    CHECK(m.g_emb[0].numel() == 32);
    CHECK(m.blocks[0].w.numel() == 576);
    CHECK(m.blocks[0].b.numel() == 16);
    CHECK(m.prunable_count() == 1049);
    CHECK(m.param_count() == 1074);

    auto flat = m.flat_prunable();
    CHECK(flat.size() == 1049);
    m.set_flat_prunable(flat);
    CHECK_THROWS_AS(m.set_flat_prunable(std::vector<float>(1048)), ValidationError);
}

TEST_CASE("temporal lookup sums the right stride slices") {
    ModelConfig cfg = tiny_cfg();
    cfg.T = 6;
    auto m = build_skeleton<float>(cfg);
    // Mark each slice with a distinct constant so the sum names its inputs.
    const int64_t n = 2 * 2 * 4;
    for (int k = 0; k < 6; ++k)
        for (int64_t i = 0; i < n; ++i) m.g_t1[k * n + i] = 100.0f + k;
    for (int k = 0; k < 3; ++k)
        for (int64_t i = 0; i < n; ++i) m.g_t2[k * n + i] = 10.0f + k;
    for (int k = 0; k < 2; ++k)
        for (int64_t i = 0; i < n; ++i) m.g_t3[k * n + i] = 1.0f + k;

    auto f5 = temporal_lookup(m, 5); // slices 5, 2, 1
    for (int64_t i = 0; i < n; ++i) CHECK(f5[i] == 105.0f + 12.0f + 2.0f);
    auto f0 = temporal_lookup(m, 0); // slices 0, 0, 0
    for (int64_t i = 0; i < n; ++i) CHECK(f0[i] == 100.0f + 10.0f + 1.0f);

    CHECK_THROWS_AS(temporal_lookup(m, 6), ValidationError);
    CHECK_THROWS_AS(temporal_lookup(m, -1), ValidationError);
    CHECK_THROWS_AS(view_lookup(m, 2), ValidationError);

    m.g_v.fill(0.5f);
    auto fused = fuse_features(f5, view_lookup(m, 1));
    for (int64_t i = 0; i < n; ++i) CHECK(fused[i] == 119.0f + 0.5f);
    CHECK_THROWS_AS(fuse_features(f5, TensorT<float>({2, 2, 5})), ValidationError);
}

TEST_CASE("conv block tiles the embedding across upscaled pixels") {
    ConvT<float> conv{TensorT<float>({4, 3, 3, 1}), TensorT<float>({4})};
    conv.w.zero();
    conv.b[0] = 0.1f;
    conv.b[1] = 0.2f;
    conv.b[2] = 0.3f;
    conv.b[3] = 0.4f;
    TensorT<float> in({1, 1, 1});
    in[0] = 7.0f; // irrelevant through the zero kernel

    TensorT<float> emb({2, 2, 2, 1});
    for (int64_t i = 0; i < 4; ++i) {
        emb[i] = -1.0f;               // view 0
        emb[4 + i] = 10.0f * (i + 1); // view 1
    }

    TensorT<float> phi;
    auto out = conv_block_forward(in, conv, 2, emb, 1, &phi);
    REQUIRE(phi.dims() == std::vector<int64_t>{2, 2, 1});
    CHECK(phi.at(0, 0, 0) == doctest::Approx(10.1).epsilon(1e-6));
    CHECK(phi.at(0, 1, 0) == doctest::Approx(20.2).epsilon(1e-6));
    CHECK(phi.at(1, 0, 0) == doctest::Approx(30.3).epsilon(1e-6));
    CHECK(phi.at(1, 1, 0) == doctest::Approx(40.4).epsilon(1e-6));
    // Far in the positive tail GELU is the identity for floats.
    CHECK(out.at(1, 1, 0) == phi.at(1, 1, 0));

    CHECK_THROWS_AS(conv_block_forward(in, conv, 2, TensorT<float>({2, 3, 3, 1}), 1),
                    ValidationError);
}

TEST_CASE("network output dims follow the grid and factors") {
    ModelConfig cfg;
    cfg.grid_h = cfg.grid_w = 4;
    cfg.grid_c = 6;
    cfg.T = 2;
    cfg.N = 2;
    cfg.factors = {5};
    auto m = init_model<float>(cfg);
    ForwardTraceT<float> tr;
    run_net(m, 1, 0, tr);
    CHECK(tr.rgb.dims() == std::vector<int64_t>{20, 20, 3});
    CHECK(tr.flow.dims() == std::vector<int64_t>{20, 20, 2});
    CHECK(tr.wmap.dims() == std::vector<int64_t>{20, 20, 1});
    for (int64_t i = 0; i < 20 * 20; ++i) {
        CHECK(tr.flow[i * 2 + 0] == tr.aux[i * 3 + 0]);
        CHECK(tr.wmap[i] > 0.0f);
        CHECK(tr.wmap[i] < 1.0f);
    }
}

TEST_CASE("full-hd geometry resolves without allocating it") {
    ModelConfig cfg;
    cfg.grid_h = 9;
    cfg.grid_w = 16;
    cfg.grid_c = 24;
    cfg.T = 2;
    cfg.N = 2;
    cfg.factors = {5, 3, 2, 2, 2};
    CHECK(cfg.upscale_total() == 120);
    CHECK(cfg.frame_h() == 1080);
    CHECK(cfg.frame_w() == 1920);
    CHECK_NOTHROW(cfg.check_output(1080, 1920));
    CHECK_THROWS_AS(cfg.check_output(720, 1280), ConfigError);

    // Derived channel schedule halves with a floor of 12.
    CHECK(cfg.resolved_channels() == std::vector<int>{24, 12, 12, 12, 12});
}

TEST_CASE("config text round-trips and rejects junk") {
    ModelConfig cfg = tiny_cfg();
    cfg.seed = 0xdeadbeefcafeULL;
    cfg.no_ivc = true;
    cfg.no_grid_emb = true;
    ModelConfig back = ModelConfig::parse(cfg.to_string());
    CHECK(back.grid_h == cfg.grid_h);
    CHECK(back.grid_w == cfg.grid_w);
    CHECK(back.grid_c == cfg.grid_c);
    CHECK(back.T == cfg.T);
    CHECK(back.N == cfg.N);
    CHECK(back.factors == cfg.factors);
    CHECK(back.channels == cfg.resolved_channels());
    CHECK(back.seed == cfg.seed);
    CHECK(back.no_grid_t == cfg.no_grid_t);
    CHECK(back.no_grid_v == cfg.no_grid_v);
    CHECK(back.no_grid_emb == cfg.no_grid_emb);
    CHECK(back.no_ivc == cfg.no_ivc);

    CHECK_THROWS_AS(ModelConfig::parse("grid_h=2\nwat=3\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("grid_h two\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("grid_h=x\n"), ConfigError);
    CHECK_THROWS_AS(ModelConfig::parse("T=0\n"), ConfigError); // fails validation
    ModelConfig bad = tiny_cfg();
    bad.channels = {4, 4};
    CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("initialization is a pure function of the seed") {
    ModelConfig cfg = tiny_cfg();
    cfg.seed = 42;
    auto a = init_model<float>(cfg);
    auto b = init_model<float>(cfg);
    CHECK(a.flat_prunable() == b.flat_prunable());

    cfg.seed = 43;
    auto c = init_model<float>(cfg);
    CHECK(a.flat_prunable() != c.flat_prunable());

    // The compensation refine conv starts at zero on purpose.
    for (int64_t i = 0; i < a.refine.w.numel(); ++i) CHECK(a.refine.w[i] == 0.0f);
    for (int64_t i = 0; i < a.refine.b.numel(); ++i) CHECK(a.refine.b[i] == 0.0f);

    // Init stays within the documented ranges.
    for (int64_t i = 0; i < a.g_t1.numel(); ++i) {
        CHECK(a.g_t1[i] >= -0.01f);
        CHECK(a.g_t1[i] <= 0.01f);
    }
}

TEST_CASE("ablation flags shrink the skeleton") {
    ModelConfig cfg = tiny_cfg();
    cfg.no_grid_t = true;
    auto mt = build_skeleton<float>(cfg);
    CHECK(mt.g_t1.dims() == std::vector<int64_t>{1, 2, 2, 4});
    CHECK(mt.g_t2.empty());
    CHECK(mt.g_t3.empty());
    mt.g_t1.fill(3.0f);
    CHECK(temporal_lookup(mt, 3)[0] == 3.0f); // any t reads the shared slice

    cfg = tiny_cfg();
    cfg.no_grid_v = true;
    auto mv = build_skeleton<float>(cfg);
    CHECK(mv.g_v.dims() == std::vector<int64_t>{1, 2, 2, 4});
    mv.g_v.fill(2.0f);
    CHECK(view_lookup(mv, 1)[0] == 2.0f);

    cfg = tiny_cfg();
    cfg.no_grid_emb = true;
    auto me = build_skeleton<float>(cfg);
    CHECK(me.g_emb.empty());

    // With the view grid and embeddings off, views are indistinguishable.
    cfg = tiny_cfg();
    cfg.no_grid_v = cfg.no_grid_emb = true;
    auto m = init_model<float>(cfg);
    ForwardTraceT<float> t0, t1;
    run_net(m, 0, 2, t0);
    run_net(m, 1, 2, t1);
    CHECK(t0.rgb.bit_equal(t1.rgb));
}
