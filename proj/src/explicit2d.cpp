#include "mivec/explicit2d.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "mivec/bits.hpp"
#include "mivec/errors.hpp"
#include "mivec/seqdata.hpp"

namespace fs = std::filesystem;

namespace mivec {

namespace {

// Orthonormal DCT-II basis: C[u][x] = a_u cos((2x+1)u pi / 16).
struct DctBasis {
    double c[8][8];
    DctBasis() {
        for (int u = 0; u < 8; ++u) {
            double a = u == 0 ? std::sqrt(1.0 / 8.0) : std::sqrt(2.0 / 8.0);
            for (int x = 0; x < 8; ++x)
                c[u][x] = a * std::cos((2 * x + 1) * u * 3.14159265358979323846 / 16.0);
        }
    }
};
const DctBasis kDct;

void dct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int u = 0; u < 8; ++u)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int y = 0; y < 8; ++y) s += kDct.c[u][y] * in[y * 8 + x];
            tmp[u * 8 + x] = s;
        }
    for (int u = 0; u < 8; ++u)
        for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int x = 0; x < 8; ++x) s += kDct.c[v][x] * tmp[u * 8 + x];
            out[u * 8 + v] = s;
        }
}

void idct8x8(const double in[64], double out[64]) {
    double tmp[64];
    for (int y = 0; y < 8; ++y)
        for (int v = 0; v < 8; ++v) {
            double s = 0;
            for (int u = 0; u < 8; ++u) s += kDct.c[u][y] * in[u * 8 + v];
            tmp[y * 8 + v] = s;
        }
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            double s = 0;
            for (int v = 0; v < 8; ++v) s += kDct.c[v][x] * tmp[y * 8 + v];
            out[y * 8 + x] = s;
        }
}

constexpr int kZigzag[64] = {0,  1,  8,  16, 9,  2,  3,  10, 17, 24, 32, 25, 18, 11, 4,  5,
                             12, 19, 26, 33, 40, 48, 41, 34, 27, 20, 13, 6,  7,  14, 21, 28,
                             35, 42, 49, 56, 57, 50, 43, 36, 29, 22, 15, 23, 30, 37, 44, 51,
                             58, 59, 52, 45, 38, 31, 39, 46, 53, 60, 61, 54, 47, 55, 62, 63};

double qp_step(int qp) { return std::exp2((qp - 4) / 6.0); }

// (run, level) pairs; run 63 is end-of-block. A real 63-zero run is split as
// (31, level 0) + (31, level) so the sentinel stays unambiguous.
void encode_block_levels(BitWriter& bw, const long levels[64]) {
    int run = 0;
    for (int i = 0; i < 64; ++i) {
        if (levels[i] == 0) {
            ++run;
            continue;
        }
        if (run >= 63) {
            eg_put_unsigned(bw, 31);
            eg_put_signed(bw, 0);
            run -= 32;
        }
        eg_put_unsigned(bw, static_cast<uint64_t>(run));
        eg_put_signed(bw, levels[i]);
        run = 0;
    }
    if (run > 0) eg_put_unsigned(bw, 63);
}

void decode_block_levels(BitReader& br, long levels[64]) {
    std::fill(levels, levels + 64, 0L);
    int pos = 0;
    while (pos < 64) {
        uint64_t run = eg_get_unsigned(br);
        if (run == 63) return;
        if (run > 63 || pos + static_cast<int>(run) >= 64)
            throw CorruptStreamError("explicit2d", "zero run overflows block");
        int64_t level = eg_get_signed(br);
        if (level < -100000 || level > 100000)
            throw CorruptStreamError("explicit2d", "coefficient level out of range");
        pos += static_cast<int>(run);
        levels[pos++] = level;
    }
}

std::vector<uint8_t> encode_builtin(const std::vector<Tensor>& frames, int qp) {
    const int H = static_cast<int>(frames[0].dims()[0]);
    const int W = static_cast<int>(frames[0].dims()[1]);
    const int Hp = (H + 7) / 8 * 8, Wp = (W + 7) / 8 * 8;
    const double delta = qp_step(qp);

    std::vector<uint8_t> out;
    be_put_u16(out, static_cast<uint16_t>(qp));
    be_put_u16(out, static_cast<uint16_t>(Wp - W));
    be_put_u16(out, static_cast<uint16_t>(Hp - H));

    BitWriter bw;
    for (const Tensor& f : frames) {
        for (int c = 0; c < 3; ++c) {
            for (int by = 0; by < Hp / 8; ++by)
                for (int bx = 0; bx < Wp / 8; ++bx) {
                    double block[64], coef[64];
                    for (int y = 0; y < 8; ++y)
                        for (int x = 0; x < 8; ++x) {
                            int sy = std::min(by * 8 + y, H - 1);
                            int sx = std::min(bx * 8 + x, W - 1);
                            block[y * 8 + x] = 255.0 * f.at(sy, sx, c) - 128.0;
                        }
                    dct8x8(block, coef);
                    long levels[64];
                    for (int i = 0; i < 64; ++i) levels[i] = std::lround(coef[kZigzag[i]] / delta);
                    encode_block_levels(bw, levels);
                }
        }
    }
    const auto& bits = bw.bytes();
    out.insert(out.end(), bits.begin(), bits.end());
    return out;
}

std::vector<Tensor> decode_builtin(const std::vector<uint8_t>& payload, int H, int W, int T) {
    ByteReader hdr(payload.data(), payload.size(), "explicit2d");
    int qp = hdr.u16();
    int pad_r = hdr.u16();
    int pad_b = hdr.u16();
    const int Hp = H + pad_b, Wp = W + pad_r;
    if (Hp % 8 || Wp % 8) throw CorruptStreamError("explicit2d", "bad padding in payload header");
    const double delta = qp_step(qp);

    BitReader br(payload.data() + 6, (payload.size() - 6) * 8);
    std::vector<Tensor> frames;
    frames.reserve(T);
    for (int t = 0; t < T; ++t) {
        Tensor f({H, W, 3});
        for (int c = 0; c < 3; ++c)
            for (int by = 0; by < Hp / 8; ++by)
                for (int bx = 0; bx < Wp / 8; ++bx) {
                    long levels[64];
                    decode_block_levels(br, levels);
                    double coef[64] = {}, block[64];
                    for (int i = 0; i < 64; ++i) coef[kZigzag[i]] = levels[i] * delta;
                    idct8x8(coef, block);
                    for (int y = 0; y < 8; ++y) {
                        int sy = by * 8 + y;
                        if (sy >= H) break;
                        for (int x = 0; x < 8; ++x) {
                            int sx = bx * 8 + x;
                            if (sx >= W) break;
                            float v = static_cast<float>((block[y * 8 + x] + 128.0) / 255.0);
                            f.at(sy, sx, c) = std::min(std::max(v, 0.0f), 1.0f);
                        }
                    }
                }
        frames.push_back(std::move(f));
    }
    return frames;
}

std::string subst(std::string tpl, const std::string& key, const std::string& val) {
    size_t p;
    while ((p = tpl.find(key)) != std::string::npos) tpl.replace(p, key.size(), val);
    return tpl;
}

fs::path make_temp_dir() {
    std::string tpl = (fs::temp_directory_path() / "mivec-XXXXXX").string();
    std::vector<char> buf(tpl.begin(), tpl.end());
    buf.push_back('\0');
    if (!mkdtemp(buf.data())) throw IoError("explicit2d", "cannot create temp directory");
    return fs::path(buf.data());
}

void run_command(const std::string& cmd, const fs::path& log) {
    std::string full = cmd + " > " + log.string() + " 2>&1";
    int rc = std::system(full.c_str());
    if (rc != 0) {
        std::string diag;
        std::ifstream in(log);
        std::string line;
        while (std::getline(in, line)) {
            diag += line;
            diag += '\n';
            if (diag.size() > 2000) break;
        }
        throw BackendError("external codec exited with status " + std::to_string(rc) + ": " +
                           diag);
    }
}

void write_view_pngs(const std::vector<Tensor>& frames, const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir / "v00", ec);
    char name[16];
    for (size_t t = 0; t < frames.size(); ++t) {
        std::snprintf(name, sizeof name, "f%04zu.png", t);
        save_png(frames[t], (dir / "v00" / name).string());
    }
}

std::vector<Tensor> read_view_pngs(const fs::path& dir, int H, int W, int T) {
    std::vector<Tensor> frames;
    char name[16];
    for (int t = 0; t < T; ++t) {
        std::snprintf(name, sizeof name, "f%04d.png", t);
        fs::path p = dir / "v00" / name;
        if (!fs::exists(p))
            throw BackendError("external decoder produced no frame " + p.string());
        Tensor f = load_png(p.string());
        if (f.dims() != std::vector<int64_t>{H, W, 3})
            throw BackendError("external decoder frame " + p.string() + " has shape " +
                               f.shape_str());
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<Tensor> decode_external(const std::vector<uint8_t>& payload,
                                    const ExplicitCodecConfig& cfg, int H, int W, int T) {
    if (cfg.external_decode_command.empty())
        throw ConfigError("external backend needs --external-decode-cmd to reconstruct");
    fs::path tmp = make_temp_dir();
    fs::path in = tmp / "payload.bin";
    fs::path outdir = tmp / "rec";
    {
        std::ofstream f(in, std::ios::binary);
        f.write(reinterpret_cast<const char*>(payload.data()),
                static_cast<std::streamsize>(payload.size()));
    }
    std::string cmd = subst(subst(cfg.external_decode_command, "{input}", in.string()), "{output}",
                            outdir.string());
    run_command(cmd, tmp / "decode.log");
    auto frames = read_view_pngs(outdir, H, W, T);
    std::error_code ec;
    fs::remove_all(tmp, ec);
    return frames;
}

} // namespace

ExplicitResult encode_view(const std::vector<Tensor>& frames, const ExplicitCodecConfig& cfg) {
    if (cfg.qp < 0 || cfg.qp > 51)
        throw ConfigError("qp " + std::to_string(cfg.qp) + " out of [0,51]");
    for (const Tensor& f : frames)
        if (f.dims().size() != 3 || f.dims()[2] != 3 || f.dims() != frames[0].dims())
            throw ValidationError("explicit2d: inconsistent frame shapes");

    ExplicitResult res;
    if (cfg.backend == ExplicitBackend::builtin_dct) {
        if (frames.empty()) return res;
        const int H = static_cast<int>(frames[0].dims()[0]);
        const int W = static_cast<int>(frames[0].dims()[1]);
        res.payload = encode_builtin(frames, cfg.qp);
        res.bit_count = 8 * static_cast<int64_t>(res.payload.size());
        res.reconstructed =
            decode_view(res.payload, cfg, H, W, static_cast<int>(frames.size()));
        return res;
    }

    if (cfg.external_command_template.empty())
        throw ConfigError("external backend needs a command template");
    if (frames.empty()) return res;
    const int H = static_cast<int>(frames[0].dims()[0]);
    const int W = static_cast<int>(frames[0].dims()[1]);

    fs::path tmp = make_temp_dir();
    fs::path indir = tmp / "in";
    fs::path outfile = tmp / "stream.bin";
    write_view_pngs(frames, indir);
    std::string cmd = subst(subst(subst(cfg.external_command_template, "{input}", indir.string()),
                                  "{output}", outfile.string()),
                            "{qp}", std::to_string(cfg.qp));
    run_command(cmd, tmp / "encode.log");

    std::ifstream f(outfile, std::ios::binary);
    if (!f) throw BackendError("external encoder produced no output file");
    res.payload.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    res.bit_count = 8 * static_cast<int64_t>(res.payload.size());
    std::error_code ec;
    fs::remove_all(tmp, ec);
    res.reconstructed = decode_external(res.payload, cfg, H, W, static_cast<int>(frames.size()));
    return res;
}

std::vector<Tensor> decode_view(const std::vector<uint8_t>& payload,
                                const ExplicitCodecConfig& cfg, int H, int W, int T) {
    if (T == 0) return {};
    if (cfg.backend == ExplicitBackend::external) return decode_external(payload, cfg, H, W, T);
    return decode_builtin(payload, H, W, T);
}

} // namespace mivec
