#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <chrono>
#include <cstdio>
#include <filesystem>

#include "mivec/rng.hpp"
#include "mivec/seqdata.hpp"

using namespace mivec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("mivec_test_" + std::to_string(
                                    std::chrono::steady_clock::now().time_since_epoch().count()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

} // namespace

TEST_CASE("byte conversion endpoints and rounding") {
    CHECK(to_byte(0.0f) == 0);
    CHECK(to_byte(1.0f) == 255);
    CHECK(to_byte(-0.5f) == 0);
    CHECK(to_byte(2.0f) == 255);
    CHECK(to_byte(0.5f) == 128);          // 127.5 rounds half away from zero
    CHECK(to_byte(128.0f / 255.0f) == 128);
    CHECK(to_byte(37.0f / 255.0f) == 37); // every byte value survives the trip
    for (int b = 0; b < 256; ++b) {
        CHECK(to_byte(static_cast<float>(b) / 255.0f) == b);
        // The png loader scales by the reciprocal; that form must round back too.
        CHECK(to_byte(static_cast<float>(b) * (1.0f / 255.0f)) == b);
    }
}

TEST_CASE("png round trip is byte exact") {
    TempDir tmp;
    Rng rng(3);
    Tensor f({13, 17, 3});
    // Same byte-to-float mapping the loader applies, so the trip is bitwise closed.
    for (int64_t i = 0; i < f.numel(); ++i)
        f[i] = static_cast<float>(rng.below(256)) * (1.0f / 255.0f);
    std::string p = (tmp.path / "x.png").string();
    save_png(f, p);
    Tensor g = load_png(p);
    REQUIRE(g.dims() == f.dims());
    CHECK(f.bit_equal(g));
}

TEST_CASE("sequence save/load round trip") {
    TempDir tmp;
    MultiViewSequence seq = generate_synthetic(3, 4, 32, 48, 1.5, 9);
    seq.validate();
    save_frames(seq, tmp.path.string());
    MultiViewSequence back = load_sequence(tmp.path.string());
    CHECK(back.N == 3);
    CHECK(back.T == 4);
    CHECK(back.H == 32);
    CHECK(back.W == 48);
    REQUIRE(back.cameras.size() == 3);
    for (int j = 0; j < 3; ++j) {
        CHECK(back.cameras[j].view_id == j);
        CHECK(back.cameras[j].position[0] == doctest::Approx(j * 1.5).epsilon(1e-12));
    }
    for (int j = 0; j < 3; ++j)
        for (int t = 0; t < 4; ++t) {
            const Tensor& a = seq.frame(j, t);
            const Tensor& b = back.frame(j, t);
            for (int64_t i = 0; i < a.numel(); ++i)
                CHECK(to_byte(a[i]) == to_byte(b[i]));
        }
}

TEST_CASE("missing frames and cameras are reported") {
    TempDir tmp;
    MultiViewSequence seq = generate_synthetic(2, 2, 16, 16, 1.0, 1);
    save_frames(seq, tmp.path.string());

    SUBCASE("missing cameras.json") {
        fs::remove(tmp.path / "cameras.json");
        CHECK_THROWS_AS(load_sequence(tmp.path.string()), IoError);
    }
    SUBCASE("missing frame in a non-reference view") {
        fs::remove(tmp.path / "v01" / "f0001.png");
        CHECK_THROWS_AS(load_sequence(tmp.path.string()), IoError);
    }
    SUBCASE("inconsistent resolution") {
        Tensor odd({8, 16, 3});
        save_png(odd, (tmp.path / "v01" / "f0001.png").string());
        CHECK_THROWS_AS(load_sequence(tmp.path.string()), ValidationError);
    }
}

TEST_CASE("synthetic scene is deterministic") {
    MultiViewSequence a = generate_synthetic(4, 8, 80, 80, 2.0, 7);
    MultiViewSequence b = generate_synthetic(4, 8, 80, 80, 2.0, 7);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) CHECK(a.frames[i].bit_equal(b.frames[i]));

    MultiViewSequence c = generate_synthetic(4, 8, 80, 80, 2.0, 8);
    bool any_diff = false;
    for (size_t i = 0; i < a.frames.size() && !any_diff; ++i)
        any_diff = !a.frames[i].bit_equal(c.frames[i]);
    CHECK(any_diff);
}

TEST_CASE("synthetic views are exact integer shifts of view zero") {
    // The camera moves right by 2j, so view j samples view 0 at x + 2j with
    // clamp-to-edge on the right.
    MultiViewSequence seq = generate_synthetic(3, 2, 40, 40, 2.0, 5);
    for (int j = 1; j < 3; ++j)
        for (int t = 0; t < 2; ++t) {
            const Tensor& v0 = seq.frame(0, t);
            const Tensor& vj = seq.frame(j, t);
            for (int64_t y = 0; y < 40; ++y)
                for (int64_t x = 0; x < 40; ++x)
                    for (int64_t c = 0; c < 3; ++c)
                        CHECK(vj.at(y, x, c) == v0.at(y, std::min<int64_t>(x + 2 * j, 39), c));
        }
}

TEST_CASE("synthetic preconditions") {
    CHECK_THROWS_AS(generate_synthetic(1, 4, 32, 32, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(generate_synthetic(2, 0, 32, 32, 1.0, 1), ValidationError);
    CHECK_THROWS_AS(generate_synthetic(2, 4, 8, 32, 1.0, 1), ValidationError);
    // disparity pushes the last view past W/4
    CHECK_THROWS_AS(generate_synthetic(5, 4, 32, 32, 2.5, 1), ValidationError);
    CHECK_THROWS_AS(generate_synthetic(2, 4, 32, 32, -1.0, 1), ValidationError);
}

TEST_CASE("frame values stay inside the unit interval") {
    MultiViewSequence seq = generate_synthetic(2, 3, 24, 24, 1.0, 13);
    for (const auto& f : seq.frames)
        for (int64_t i = 0; i < f.numel(); ++i) {
            CHECK(f[i] >= 0.0f);
            CHECK(f[i] <= 1.0f);
        }
}
