#include "mivec/training.hpp"

#include "mivec/metrics.hpp"

namespace mivec {

namespace {

Tensor round_to_bytes(const Tensor& f) {
    Tensor r = f.zeros_like();
    for (int64_t i = 0; i < f.numel(); ++i) r[i] = to_byte(f[i]) / 255.0f;
    return r;
}

} // namespace

TrainReport evaluate_frames(const MultiViewSequence& seq, const std::vector<Tensor>& frames) {
    if (frames.size() != static_cast<size_t>(seq.N) * seq.T)
        throw ValidationError("evaluate_frames: frame count does not match sequence");
    TrainReport rep;
    rep.view_psnr.assign(seq.N, 0.0);
    rep.view_ssim.assign(seq.N, 0.0);
    for (int j = 0; j < seq.N; ++j) {
        double mse = 0.0, ssim_sum = 0.0;
        for (int t = 0; t < seq.T; ++t) {
            const Tensor& out = frames[static_cast<size_t>(j) * seq.T + t];
            mse += mse_bytes(seq.frame(j, t), out);
            ssim_sum += ssim(round_to_bytes(seq.frame(j, t)), round_to_bytes(out));
        }
        rep.view_psnr[j] = psnr_from_mse(mse / seq.T);
        rep.view_ssim[j] = ssim_sum / seq.T;
    }
    return rep;
}

TrainReport evaluate_views(const ImplicitModel& model, const MultiViewSequence& seq, int basic,
                           const std::vector<Tensor>& recon) {
    std::vector<Tensor> frames(static_cast<size_t>(seq.N) * seq.T);
    StepTraceT<float> tr;
    for (int j = 0; j < seq.N; ++j) {
        for (int t = 0; t < seq.T; ++t) {
            if (j == basic) {
                frames[static_cast<size_t>(j) * seq.T + t] = recon[t];
            } else {
                pipeline_forward(model, j, t, &recon[t], tr);
                frames[static_cast<size_t>(j) * seq.T + t] = tr.comp.fused;
            }
        }
    }
    TrainReport rep = evaluate_frames(seq, frames);
    rep.param_count = model.param_count();
    return rep;
}

TrainReport train(ImplicitModel& model, const MultiViewSequence& seq, int basic,
                  const std::vector<Tensor>& recon, const TrainConfig& cfg) {
    cfg.validate();
    if (basic < 0 || basic >= seq.N) throw ValidationError("basic view index out of range");
    if (recon.size() != static_cast<size_t>(seq.T))
        throw ValidationError("explicit reconstruction frame count does not match sequence");
    model.cfg.check_output(seq.H, seq.W);

    auto start = std::chrono::steady_clock::now();
    std::vector<double> losses;
    Rng rng(cfg.seed);
    traindetail::run_epochs(model, seq, basic, recon, cfg, cfg.epochs, false, nullptr, rng,
                            losses);
    TrainReport rep = evaluate_views(model, seq, basic, recon);
    rep.epoch_loss = std::move(losses);
    rep.epochs_run = cfg.epochs;
    rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                           .count();
    return rep;
}

CompressSchedule compress_train_schedule(ImplicitModel& model, const MultiViewSequence& seq,
                                         int basic, const std::vector<Tensor>& recon,
                                         const TrainConfig& cfg, bool entropy_coded) {
    cfg.validate();
    CompressSchedule out;
    std::vector<uint8_t> mask;
    if (cfg.prune_fraction > 0.0) {
        out.prune = prune(model.flat_prunable(), cfg.prune_fraction);
        mask = out.prune.mask;
        traindetail::apply_mask(model, mask);
    }
    if (cfg.qat_epochs > 0) {
        // Fine-tuning stream continues from a seed offset so it does not
        // replay the float-training shuffles.
        Rng rng(cfg.seed + 0x9e3779b97f4a7c15ULL);
        std::vector<double> losses;
        traindetail::run_epochs(model, seq, basic, recon, cfg, cfg.qat_epochs, true,
                                mask.empty() ? nullptr : &mask, rng, losses);
    }
    out.compressed = pack_model(model, mask, entropy_coded);
    return out;
}

} // namespace mivec
