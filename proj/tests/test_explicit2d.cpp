#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdlib>

#include "mivec/errors.hpp"
#include "mivec/explicit2d.hpp"
#include "mivec/metrics.hpp"
#include "mivec/rng.hpp"
#include "mivec/seqdata.hpp"

using namespace mivec;

namespace {

std::vector<Tensor> noise_frames(int T, int H, int W, uint64_t seed) {
    Rng rng(seed);
    std::vector<Tensor> frames;
    for (int t = 0; t < T; ++t) {
        Tensor f({H, W, 3});
        for (int64_t i = 0; i < f.numel(); ++i)
            f[i] = static_cast<float>(rng.below(256)) * (1.0f / 255.0f);
        frames.push_back(std::move(f));
    }
    return frames;
}

double max_abs_err(const std::vector<Tensor>& a, const std::vector<Tensor>& b) {
    double m = 0;
    for (size_t t = 0; t < a.size(); ++t)
        for (int64_t i = 0; i < a[t].numel(); ++i)
            m = std::max(m, std::abs(static_cast<double>(a[t][i]) - b[t][i]));
    return m;
}

} // namespace

TEST_CASE("flat mid-gray survives coarse quantization") {
    std::vector<Tensor> frames(1, Tensor({16, 16, 3}));
    frames[0].fill(0.5f);
    ExplicitCodecConfig cfg;
    cfg.qp = 4;
    auto res = encode_view(frames, cfg);
    CHECK(max_abs_err(frames, res.reconstructed) <= 1.0 / 255.0 + 1e-9);
    CHECK(res.bit_count == 8 * static_cast<int64_t>(res.payload.size()));
}

TEST_CASE("finer quantization costs more bits and buys quality") {
    auto seq = generate_synthetic(2, 2, 32, 40, 2.0, 11);
    std::vector<Tensor> frames(seq.frames.begin(), seq.frames.begin() + 2);

    ExplicitCodecConfig cfg;
    int64_t prev_bits = -1;
    double prev_psnr = -1;
    for (int qp : {4, 20, 36}) {
        cfg.qp = qp;
        auto res = encode_view(frames, cfg);
        double p = 0;
        for (int t = 0; t < 2; ++t) p += psnr(frames[t], res.reconstructed[t]);
        p /= 2;
        if (prev_bits >= 0) {
            CHECK(res.bit_count < prev_bits);
            CHECK(p < prev_psnr);
        }
        prev_bits = res.bit_count;
        prev_psnr = p;
    }
    cfg.qp = 4;
    CHECK(psnr(frames[0], encode_view(frames, cfg).reconstructed[0]) > 45.0);
}

TEST_CASE("decoder reproduces the encoder-side reconstruction bitwise") {
    // Odd sizes exercise the padded-block path.
    auto frames = noise_frames(3, 13, 17, 5);
    ExplicitCodecConfig cfg;
    cfg.qp = 24;
    auto res = encode_view(frames, cfg);
    auto dec = decode_view(res.payload, cfg, 13, 17, 3);
    REQUIRE(dec.size() == 3);
    for (int t = 0; t < 3; ++t) CHECK(dec[t].bit_equal(res.reconstructed[t]));
}

TEST_CASE("decoding more frames than the payload holds fails cleanly") {
    auto frames = noise_frames(2, 16, 16, 6);
    ExplicitCodecConfig cfg;
    auto res = encode_view(frames, cfg);
    CHECK_THROWS_AS(decode_view(res.payload, cfg, 16, 16, 40), CorruptStreamError);
}

TEST_CASE("corrupted payloads never escape as garbage states") {
    auto frames = noise_frames(1, 16, 24, 7);
    ExplicitCodecConfig cfg;
    cfg.qp = 30;
    auto res = encode_view(frames, cfg);
    Rng rng(99);

    int decoded = 0, rejected = 0;
    for (int trial = 0; trial < 300; ++trial) {
        auto bad = res.payload;
        size_t bit = rng.below(8 * bad.size());
        bad[bit / 8] ^= static_cast<uint8_t>(1u << (7 - bit % 8));
        try {
            auto dec = decode_view(bad, cfg, 16, 24, 1);
            REQUIRE(dec.size() == 1);
            CHECK(dec[0].dims() == std::vector<int64_t>{16, 24, 3});
            ++decoded;
        } catch (const CorruptStreamError&) {
            ++rejected;
        }
    }
    CHECK(decoded + rejected == 300);

    for (size_t cut : {size_t{0}, size_t{1}, size_t{5}, res.payload.size() / 2}) {
        std::vector<uint8_t> trunc(res.payload.begin(), res.payload.begin() + cut);
        try {
            auto dec = decode_view(trunc, cfg, 16, 24, 1);
            CHECK(dec.size() == 1);
        } catch (const CorruptStreamError&) {
        }
    }
}

TEST_CASE("configuration errors are rejected up front") {
    auto frames = noise_frames(1, 16, 16, 8);
    ExplicitCodecConfig cfg;
    cfg.qp = -1;
    CHECK_THROWS_AS(encode_view(frames, cfg), ConfigError);
    cfg.qp = 52;
    CHECK_THROWS_AS(encode_view(frames, cfg), ConfigError);

    cfg.qp = 28;
    auto bad = noise_frames(2, 16, 16, 8);
    bad[1] = Tensor({8, 16, 3});
    CHECK_THROWS_AS(encode_view(bad, cfg), ValidationError);

    ExplicitCodecConfig ext;
    ext.backend = ExplicitBackend::external;
    CHECK_THROWS_AS(encode_view(frames, ext), ConfigError); // no command template
}

TEST_CASE("external backend round-trips through shell commands") {
    auto frames = noise_frames(2, 16, 16, 12);
    ExplicitCodecConfig cfg;
    cfg.backend = ExplicitBackend::external;
    // A stand-in lossless codec: the stream is just a tar of the frame folder.
    cfg.external_command_template = "tar -C {input} -cf {output} v00";
    cfg.external_decode_command = "mkdir -p {output} && tar -C {output} -xf {input}";

    auto res = encode_view(frames, cfg);
    CHECK(res.payload.size() > 0);
    REQUIRE(res.reconstructed.size() == 2);
    for (int t = 0; t < 2; ++t) CHECK(res.reconstructed[t].bit_equal(frames[t]));

    auto dec = decode_view(res.payload, cfg, 16, 16, 2);
    REQUIRE(dec.size() == 2);
    for (int t = 0; t < 2; ++t) CHECK(dec[t].bit_equal(frames[t]));

    ExplicitCodecConfig nodecode = cfg;
    nodecode.external_decode_command.clear();
    CHECK_THROWS_AS(encode_view(frames, nodecode), ConfigError);

    ExplicitCodecConfig failing = cfg;
    failing.external_command_template = "false";
    CHECK_THROWS_AS(encode_view(frames, failing), BackendError);
}
