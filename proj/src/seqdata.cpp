#include "mivec/seqdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <png.h>

#include <json.hpp>

#include "mivec/errors.hpp"
#include "mivec/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace mivec {

void MultiViewSequence::validate() const {
    if (N < 2) throw ValidationError("sequence needs at least 2 views, got " + std::to_string(N));
    if (T < 1 || H < 1 || W < 1) throw ValidationError("sequence has empty dimensions");
    if (frames.size() != static_cast<size_t>(N) * T)
        throw ValidationError("frame count does not match N*T");
    if (cameras.size() != static_cast<size_t>(N))
        throw ValidationError("camera list length " + std::to_string(cameras.size()) +
                              " does not match N=" + std::to_string(N));
    for (const auto& f : frames) {
        if (f.dims() != std::vector<int64_t>{H, W, 3})
            throw ValidationError("frame shape " + f.shape_str() + " inconsistent with sequence");
        for (int64_t i = 0; i < f.numel(); ++i) {
            float v = f.data()[i];
            if (!std::isfinite(v) || v < 0.0f || v > 1.0f)
                throw ValidationError("frame component out of [0,1]");
        }
    }
}

uint8_t to_byte(float v) {
    float c = std::min(std::max(v, 0.0f), 1.0f);
    long b = std::lround(c * 255.0f);
    return static_cast<uint8_t>(b);
}

namespace {

struct PngFileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};

std::string view_dir(int j) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "v%02d", j);
    return buf;
}

std::string frame_name(int t) {
    char buf[12];
    std::snprintf(buf, sizeof buf, "f%04d.png", t);
    return buf;
}

} // namespace

Tensor load_png(const std::string& path) {
    std::unique_ptr<FILE, PngFileCloser> fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("seqdata", "cannot open " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8))
        throw IoError("seqdata", path + " is not a PNG file");

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("seqdata", "libpng init failed");
    }

    std::vector<uint8_t> pixels;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("seqdata", "failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (color & PNG_COLOR_MASK_ALPHA || png_get_valid(png, info, PNG_INFO_tRNS))
        png_set_strip_alpha(png);
    png_read_update_info(png, info);

    pixels.resize(static_cast<size_t>(h) * w * 3);
    rows.resize(h);
    for (png_uint_32 y = 0; y < h; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Tensor out({static_cast<int64_t>(h), static_cast<int64_t>(w), 3});
    const float inv = 1.0f / 255.0f;
    for (int64_t i = 0; i < out.numel(); ++i) out.data()[i] = pixels[i] * inv;
    return out;
}

void save_png(const Tensor& frame, const std::string& path) {
    if (frame.dims().size() != 3 || frame.dims()[2] != 3)
        throw ValidationError("save_png expects H x W x 3, got " + frame.shape_str());
    const int64_t H = frame.dims()[0], W = frame.dims()[1];

    std::unique_ptr<FILE, PngFileCloser> fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw IoError("seqdata", "cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw IoError("seqdata", "libpng init failed");
    }

    std::vector<uint8_t> pixels(static_cast<size_t>(H) * W * 3);
    for (int64_t i = 0; i < frame.numel(); ++i) pixels[i] = to_byte(frame.data()[i]);
    std::vector<png_bytep> rows(H);
    for (int64_t y = 0; y < H; ++y) rows[y] = pixels.data() + static_cast<size_t>(y) * W * 3;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("seqdata", "failed to encode " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(W), static_cast<png_uint_32>(H), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

MultiViewSequence load_sequence(const std::string& root) {
    MultiViewSequence seq;

    fs::path camfile = fs::path(root) / "cameras.json";
    std::ifstream cf(camfile);
    if (!cf) throw IoError("seqdata", "missing " + camfile.string());
    json jcams;
    try {
        cf >> jcams;
    } catch (const json::exception& e) {
        throw IoError("seqdata", "malformed " + camfile.string() + ": " + e.what());
    }
    if (!jcams.is_array() || jcams.empty())
        throw IoError("seqdata", camfile.string() + " must be a non-empty array");
    for (const auto& jc : jcams) {
        try {
            CameraParams c;
            c.view_id = jc.at("view_id").get<int>();
            auto p = jc.at("position");
            auto o = jc.at("orientation");
            for (int k = 0; k < 3; ++k) {
                c.position[k] = p.at(k).get<double>();
                c.orientation[k] = o.at(k).get<double>();
            }
            seq.cameras.push_back(c);
        } catch (const json::exception& e) {
            throw IoError("seqdata", "malformed camera entry: " + std::string(e.what()));
        }
    }
    seq.N = static_cast<int>(seq.cameras.size());

    // Frame count comes from view 0; every other view must match it.
    int T = 0;
    while (fs::exists(fs::path(root) / view_dir(0) / frame_name(T))) ++T;
    if (T == 0) throw IoError("seqdata", "no frames found under " + root + "/v00");
    seq.T = T;

    for (int j = 0; j < seq.N; ++j) {
        for (int t = 0; t < T; ++t) {
            fs::path p = fs::path(root) / view_dir(j) / frame_name(t);
            if (!fs::exists(p))
                throw IoError("seqdata", "missing frame (view " + std::to_string(j) + ", time " +
                                             std::to_string(t) + "): " + p.string());
            Tensor f = load_png(p.string());
            if (j == 0 && t == 0) {
                seq.H = static_cast<int>(f.dims()[0]);
                seq.W = static_cast<int>(f.dims()[1]);
            } else if (f.dims() != std::vector<int64_t>{seq.H, seq.W, 3}) {
                throw ValidationError("frame " + p.string() + " has shape " + f.shape_str() +
                                      ", expected " + std::to_string(seq.H) + "x" +
                                      std::to_string(seq.W));
            }
            seq.frames.push_back(std::move(f));
        }
    }
    seq.validate();
    return seq;
}

void save_frames(const MultiViewSequence& seq, const std::string& root) {
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw IoError("seqdata", "cannot create " + root + ": " + ec.message());

    json jcams = json::array();
    for (const auto& c : seq.cameras) {
        jcams.push_back({{"view_id", c.view_id},
                         {"position", {c.position[0], c.position[1], c.position[2]}},
                         {"orientation", {c.orientation[0], c.orientation[1], c.orientation[2]}}});
    }
    std::ofstream cf(fs::path(root) / "cameras.json");
    if (!cf) throw IoError("seqdata", "cannot write cameras.json under " + root);
    cf << jcams.dump(2) << "\n";

    for (int j = 0; j < seq.N; ++j) {
        fs::path dir = fs::path(root) / view_dir(j);
        fs::create_directories(dir, ec);
        if (ec) throw IoError("seqdata", "cannot create " + dir.string());
        for (int t = 0; t < seq.T; ++t) save_png(seq.frame(j, t), (dir / frame_name(t)).string());
    }
}

namespace {

// Smooth value noise: random lattice every `cell` pixels, cosine-interpolated.
std::vector<float> value_noise(int H, int W, int cell, float lo, float hi, Rng& rng) {
    int gh = H / cell + 2, gw = W / cell + 2;
    std::vector<float> lattice(static_cast<size_t>(gh) * gw);
    for (auto& v : lattice) v = static_cast<float>(rng.uniform(lo, hi));
    auto smooth = [](float u) { return 0.5f * (1.0f - std::cos(3.14159265358979323846f * u)); };
    std::vector<float> out(static_cast<size_t>(H) * W);
    for (int y = 0; y < H; ++y) {
        int cy = y / cell;
        float uy = smooth(static_cast<float>(y % cell) / cell);
        for (int x = 0; x < W; ++x) {
            int cx = x / cell;
            float ux = smooth(static_cast<float>(x % cell) / cell);
            float a = lattice[cy * gw + cx], b = lattice[cy * gw + cx + 1];
            float c = lattice[(cy + 1) * gw + cx], d = lattice[(cy + 1) * gw + cx + 1];
            out[static_cast<size_t>(y) * W + x] =
                (a + (b - a) * ux) * (1.0f - uy) + (c + (d - c) * ux) * uy;
        }
    }
    return out;
}

} // namespace

MultiViewSequence generate_synthetic(int N, int T, int H, int W, double disparity_px,
                                     uint64_t seed) {
    if (N < 2) throw ValidationError("generate_synthetic: N must be >= 2");
    if (T < 1) throw ValidationError("generate_synthetic: T must be >= 1");
    if (H < 16 || W < 16) throw ValidationError("generate_synthetic: H and W must be >= 16");
    if (disparity_px < 0 || disparity_px * (N - 1) >= W / 4.0)
        throw ValidationError("generate_synthetic: need 0 <= disparity_px*(N-1) < W/4");

    Rng rng(seed);

    // Two noise octaves per channel around mid-gray.
    std::vector<std::vector<float>> bg(3);
    for (int c = 0; c < 3; ++c) {
        auto coarse = value_noise(H, W, 16, -0.30f, 0.30f, rng);
        auto fine = value_noise(H, W, 5, -0.10f, 0.10f, rng);
        bg[c].resize(coarse.size());
        for (size_t i = 0; i < coarse.size(); ++i)
            bg[c][i] = std::min(std::max(0.5f + coarse[i] + fine[i], 0.02f), 0.98f);
    }

    int side = std::max(H / 5, 6);
    int sy = static_cast<int>(rng.below(static_cast<uint64_t>(std::max(H - side, 1))));
    int sx0 = static_cast<int>(rng.below(static_cast<uint64_t>(std::max(W / 2 - side, 1))));
    float sqcol[3];
    for (float& c : sqcol) c = static_cast<float>(rng.uniform(0.6, 0.95));

    MultiViewSequence seq;
    seq.N = N;
    seq.T = T;
    seq.H = H;
    seq.W = W;
    seq.frames.reserve(static_cast<size_t>(N) * T);

    // View 0 first; square slides 1 px per frame with a 2 px soft edge.
    std::vector<Tensor> base;
    base.reserve(T);
    for (int t = 0; t < T; ++t) {
        Tensor f({H, W, 3});
        int ox = sx0 + t;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                float dy = std::min(static_cast<float>(y - sy), static_cast<float>(sy + side - y));
                float dx = std::min(static_cast<float>(x - ox), static_cast<float>(ox + side - x));
                float m = std::min(std::max(std::min(dx, dy) / 2.0f + 1.0f, 0.0f), 1.0f);
                for (int c = 0; c < 3; ++c) {
                    float b = bg[c][static_cast<size_t>(y) * W + x];
                    f.at(y, x, c) = b + m * (sqcol[c] - b);
                }
            }
        base.push_back(std::move(f));
    }

    for (int j = 0; j < N; ++j) {
        double shift = j * disparity_px;
        for (int t = 0; t < T; ++t) {
            if (shift == 0.0) {
                seq.frames.push_back(base[t]);
                continue;
            }
            Tensor f({H, W, 3});
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    double sx = std::min(std::max(x + shift, 0.0), static_cast<double>(W - 1));
                    int x0 = std::min(static_cast<int>(sx), W - 2);
                    float u = static_cast<float>(sx - x0);
                    for (int c = 0; c < 3; ++c)
                        f.at(y, x, c) =
                            base[t].at(y, x0, c) * (1.0f - u) + base[t].at(y, x0 + 1, c) * u;
                }
            seq.frames.push_back(std::move(f));
        }
    }

    for (int j = 0; j < N; ++j) {
        CameraParams c;
        c.view_id = j;
        c.position = {j * disparity_px, 0.0, 0.0};
        seq.cameras.push_back(c);
    }
    return seq;
}

} // namespace mivec
