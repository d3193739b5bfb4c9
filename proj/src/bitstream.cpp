#include "mivec/bitstream.hpp"

#include <chrono>
#include <cmath>
#include <cstring>

#include "mivec/bits.hpp"
#include "mivec/metrics.hpp"
#include "mivec/viewselect.hpp"

namespace mivec {

namespace {

constexpr double kCameraScale = 1e4;

std::vector<uint8_t> encode_cameras(const std::vector<CameraParams>& cams) {
    BitWriter bw;
    eg_put_unsigned(bw, cams.size());
    for (const auto& c : cams) {
        for (double v : c.position) eg_put_signed(bw, std::llround(v * kCameraScale));
        for (double v : c.orientation) eg_put_signed(bw, std::llround(v * kCameraScale));
    }
    return bw.take();
}

std::vector<CameraParams> decode_cameras(const uint8_t* data, size_t len) {
    BitReader br(data, static_cast<uint64_t>(len) * 8);
    uint64_t n = eg_get_unsigned(br);
    if (n > 65535) throw CorruptStreamError("bitstream", "implausible camera count");
    std::vector<CameraParams> cams(n);
    for (uint64_t i = 0; i < n; ++i) {
        cams[i].view_id = static_cast<int>(i);
        for (double& v : cams[i].position)
            v = static_cast<double>(eg_get_signed(br)) / kCameraScale;
        for (double& v : cams[i].orientation)
            v = static_cast<double>(eg_get_signed(br)) / kCameraScale;
    }
    return cams;
}

void put_segment(std::vector<uint8_t>& out, const std::vector<uint8_t>& seg) {
    be_put_u32(out, static_cast<uint32_t>(seg.size()));
    out.insert(out.end(), seg.begin(), seg.end());
}

std::vector<Tensor> model_frames(const ImplicitModel& model, const MultiViewSequence& hdr,
                                 int basic, const std::vector<Tensor>& explicit_recon,
                                 const std::vector<bool>& want) {
    std::vector<Tensor> frames(static_cast<size_t>(hdr.N) * hdr.T);
    StepTraceT<float> tr;
    for (int j = 0; j < hdr.N; ++j) {
        for (int t = 0; t < hdr.T; ++t) {
            size_t idx = static_cast<size_t>(j) * hdr.T + t;
            if (j == basic) {
                frames[idx] = explicit_recon[t];
            } else if (want[j]) {
                pipeline_forward(model, j, t, &explicit_recon[t], tr);
                frames[idx] = tr.comp.fused;
            } else {
                frames[idx] = Tensor({hdr.H, hdr.W, 3});
            }
        }
    }
    return frames;
}

} // namespace

EncodeResult encode_sequence(const MultiViewSequence& seq, const EncoderConfig& cfg) {
    auto t0 = std::chrono::steady_clock::now();
    seq.validate();

    std::optional<int> override_basic;
    if (cfg.basic_view >= 0) override_basic = cfg.basic_view;
    int basic = select_basic_view(seq, override_basic).basic_view_index;

    std::vector<Tensor> basic_frames(seq.T);
    for (int t = 0; t < seq.T; ++t) basic_frames[t] = seq.frame(basic, t);
    ExplicitResult ex = encode_view(basic_frames, cfg.explicit_codec);

    ModelConfig mc = cfg.model;
    mc.T = seq.T;
    mc.N = seq.N;
    mc.validate();
    mc.check_output(seq.H, seq.W);

    ImplicitModel model = init_model<float>(mc);
    TrainReport trep = train(model, seq, basic, ex.reconstructed, cfg.train);
    CompressSchedule sched =
        compress_train_schedule(model, seq, basic, ex.reconstructed, cfg.train, cfg.entropy_coded);
    std::vector<uint8_t> implicit = serialize(sched.compressed);

    // Everything below runs on the model a decoder would restore, so the
    // report's reconstructions are the decoder's, bit for bit.
    ImplicitModel restored = restore_model(deserialize(implicit));

    std::vector<uint8_t> out;
    out.insert(out.end(), {'M', 'V', 'B', '1'});
    be_put_u8(out, 1);
    be_put_u16(out, static_cast<uint16_t>(seq.N));
    be_put_u16(out, static_cast<uint16_t>(seq.T));
    be_put_u16(out, static_cast<uint16_t>(seq.H));
    be_put_u16(out, static_cast<uint16_t>(seq.W));
    be_put_u16(out, static_cast<uint16_t>(basic));
    be_put_u8(out, static_cast<uint8_t>(cfg.explicit_codec.backend));
    be_put_u8(out, static_cast<uint8_t>(cfg.explicit_codec.qp));
    std::string cfg_text = mc.to_string();
    be_put_u32(out, static_cast<uint32_t>(cfg_text.size()));
    out.insert(out.end(), cfg_text.begin(), cfg_text.end());

    EncodeResult res;
    res.report.header_bytes = out.size();
    std::vector<uint8_t> meta = encode_cameras(seq.cameras);
    put_segment(out, meta);
    put_segment(out, ex.payload);
    put_segment(out, implicit);
    be_put_u32(out, crc32(out.data(), out.size()));

    std::vector<bool> want(seq.N, true);
    res.report.recon = model_frames(restored, seq, basic, ex.reconstructed, want);

    TrainReport quality = evaluate_frames(seq, res.report.recon);
    res.report.basic_view = basic;
    res.report.view_psnr = quality.view_psnr;
    res.report.view_ssim = quality.view_ssim;
    res.report.metadata_bytes = meta.size();
    res.report.explicit_bytes = ex.payload.size();
    res.report.implicit_bytes = implicit.size();
    res.report.total_bytes = out.size();
    res.report.bpp = 8.0 * static_cast<double>(out.size()) /
                     (static_cast<double>(seq.N) * seq.T * seq.H * seq.W);
    res.report.model_ratio = compression_ratio(sched.compressed);
    res.report.pruned_fraction = sched.prune.mask.empty() ? 0.0 : sched.prune.pruned_fraction;
    res.report.param_count = model.param_count();
    res.report.epochs_run = trep.epochs_run;
    res.report.train_seconds = trep.wall_seconds;
    res.report.epoch_loss = std::move(trep.epoch_loss);
    res.report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    res.container = std::move(out);
    return res;
}

DecodeResult decode_sequence(const std::vector<uint8_t>& container, const DecodeOptions& opt) {
    if (container.size() < 8 || std::memcmp(container.data(), "MVB1", 4) != 0)
        throw CorruptStreamError("bitstream", "bad magic");
    size_t body = container.size();
    if (!opt.salvage) {
        uint32_t stored = 0;
        for (int i = 0; i < 4; ++i) stored = (stored << 8) | container[container.size() - 4 + i];
        if (crc32(container.data(), container.size() - 4) != stored)
            throw CorruptStreamError("bitstream", "container CRC mismatch");
        body -= 4;
    }

    ByteReader r(container.data(), body, "bitstream");
    r.bytes(4);
    if (r.u8() != 1) throw CorruptStreamError("bitstream", "unsupported version");
    int N = r.u16(), T = r.u16(), H = r.u16(), W = r.u16();
    if (N < 2 || T < 1 || H < 16 || W < 16)
        throw CorruptStreamError("bitstream", "implausible sequence dimensions");
    int basic = r.u16();
    if (basic >= N) throw CorruptStreamError("bitstream", "basic view index out of range");
    uint8_t backend = r.u8();
    if (backend > 1) throw CorruptStreamError("bitstream", "unknown explicit backend");
    int qp = r.u8();
    if (qp > 51) throw CorruptStreamError("bitstream", "quantizer out of range");
    uint32_t cfg_len = r.u32();
    if (cfg_len > 1u << 20) throw CorruptStreamError("bitstream", "config block too large");
    r.bytes(cfg_len); // informational copy; the implicit segment carries its own

    uint32_t meta_len = r.u32();
    if (meta_len > r.remaining()) throw CorruptStreamError("bitstream", "truncated metadata");
    const uint8_t* meta = r.bytes(meta_len);
    std::vector<CameraParams> cams = decode_cameras(meta, meta_len);
    if (cams.size() != static_cast<size_t>(N))
        throw CorruptStreamError("bitstream", "camera count does not match header");

    uint32_t ex_len = r.u32();
    if (ex_len > r.remaining()) throw CorruptStreamError("bitstream", "truncated explicit segment");
    const uint8_t* ex_ptr = r.bytes(ex_len);
    ExplicitCodecConfig xcfg;
    xcfg.backend = static_cast<ExplicitBackend>(backend);
    xcfg.qp = qp;
    xcfg.external_decode_command = opt.external_decode_command;
    std::vector<Tensor> basic_recon =
        decode_view(std::vector<uint8_t>(ex_ptr, ex_ptr + ex_len), xcfg, H, W, T);

    DecodeResult res;
    res.basic_view = basic;
    res.seq.N = N;
    res.seq.T = T;
    res.seq.H = H;
    res.seq.W = W;
    res.seq.cameras = cams;

    std::vector<bool> want(N, opt.views.empty());
    std::vector<size_t> requested;
    if (!opt.views.empty()) {
        for (size_t v : opt.views) {
            if (v >= static_cast<size_t>(N))
                throw ValidationError("requested view " + std::to_string(v) + " out of range");
            if (!want[v]) requested.push_back(v);
            want[v] = true;
        }
    } else {
        for (int j = 0; j < N; ++j) requested.push_back(static_cast<size_t>(j));
    }

    try {
        uint32_t im_len = r.u32();
        size_t take = im_len;
        if (take > r.remaining()) {
            if (!opt.salvage)
                throw CorruptStreamError("bitstream", "truncated implicit segment");
            take = r.remaining();
        }
        const uint8_t* im_ptr = r.bytes(take);
        if (!opt.salvage && r.remaining() != 0)
            throw CorruptStreamError("bitstream", "trailing bytes after implicit segment");
        ImplicitModel model = restore_model(deserialize(std::vector<uint8_t>(im_ptr, im_ptr + take)));
        if (model.cfg.T != T || model.cfg.N != N || model.cfg.frame_h() != H ||
            model.cfg.frame_w() != W)
            throw CorruptStreamError("bitstream", "model architecture does not match header");
        res.seq.frames = model_frames(model, res.seq, basic, basic_recon, want);
        res.decoded_views = requested;
    } catch (const CorruptStreamError&) {
        if (!opt.salvage) throw;
        res.salvaged = true;
        res.seq.frames.assign(static_cast<size_t>(N) * T, Tensor({H, W, 3}));
        for (int t = 0; t < T; ++t)
            res.seq.frames[static_cast<size_t>(basic) * T + t] = basic_recon[t];
        res.decoded_views = {static_cast<size_t>(basic)};
    }
    return res;
}

} // namespace mivec
