#pragma once

// Fitting the implicit model: joint L1/SSIM loss with analytic gradients,
// Adam, the epoch loop, and the prune -> quantization-aware-finetune ->
// quantize compression schedule.

#include <chrono>
#include <cmath>
#include <cstdint>
#include <vector>

#include "mivec/errors.hpp"
#include "mivec/inrnet.hpp"
#include "mivec/ivc.hpp"
#include "mivec/modelzip.hpp"
#include "mivec/seqdata.hpp"

namespace mivec {

struct TrainConfig {
    int epochs = 300;
    int batch_size = 2;
    double lr = 5e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double eps = 1e-8;
    double alpha = 0.7; // L1 weight; (1-alpha) weights the SSIM term
    uint64_t seed = 1;
    int qat_epochs = 30;
    double prune_fraction = 0.4;

    void validate() const {
        if (alpha < 0.0 || alpha > 1.0) throw ConfigError("alpha must be in [0,1]");
        if (prune_fraction < 0.0 || prune_fraction >= 1.0)
            throw ConfigError("prune fraction must be in [0,1)");
        if (epochs < 0 || qat_epochs < 0 || batch_size < 1)
            throw ConfigError("bad epoch/batch settings");
    }

    std::string to_string() const;
    static TrainConfig parse(const std::string& text);
};

inline std::string TrainConfig::to_string() const {
    std::string s;
    s += "epochs=" + std::to_string(epochs) + "\n";
    s += "batch_size=" + std::to_string(batch_size) + "\n";
    s += "lr=" + std::to_string(lr) + "\n";
    s += "beta1=" + std::to_string(beta1) + "\n";
    s += "beta2=" + std::to_string(beta2) + "\n";
    s += "alpha=" + std::to_string(alpha) + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += "qat_epochs=" + std::to_string(qat_epochs) + "\n";
    s += "prune_fraction=" + std::to_string(prune_fraction) + "\n";
    return s;
}

inline TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig cfg;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("bad train config line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "epochs") cfg.epochs = std::stoi(val);
            else if (key == "batch_size") cfg.batch_size = std::stoi(val);
            else if (key == "lr") cfg.lr = std::stod(val);
            else if (key == "beta1") cfg.beta1 = std::stod(val);
            else if (key == "beta2") cfg.beta2 = std::stod(val);
            else if (key == "alpha") cfg.alpha = std::stod(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "qat_epochs") cfg.qat_epochs = std::stoi(val);
            else if (key == "prune_fraction") cfg.prune_fraction = std::stod(val);
            else throw ConfigError("unknown train config key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("bad value for train config key '" + key + "'");
        }
    }
    cfg.validate();
    return cfg;
}

struct TrainReport {
    std::vector<double> epoch_loss;
    std::vector<double> view_psnr; // per view; basic slot holds explicit-recon quality
    std::vector<double> view_ssim;
    double wall_seconds = 0.0;
    int64_t param_count = 0;
    int epochs_run = 0;
};

namespace lossdetail {

template <typename T>
const std::vector<T>& gauss11() {
    static const std::vector<T> k = [] {
        std::vector<T> v(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            double d = i - 5;
            double g = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            v[i] = static_cast<T>(g);
            sum += g;
        }
        for (auto& x : v) x = static_cast<T>(static_cast<double>(x) / sum);
        return v;
    }();
    return k;
}

} // namespace lossdetail

// Differentiable valid-window SSIM on the 255 scale, same constants as the
// metric. Returns the mean SSIM; adds weight * d(ssim)/dx into gx.
template <typename T>
double ssim_with_grad(const TensorT<T>& gt, const TensorT<T>& x, TensorT<T>* gx, T weight) {
    const int64_t H = gt.dims()[0], W = gt.dims()[1], C = gt.dims()[2];
    if (H < 11 || W < 11) throw ValidationError("ssim loss needs frames at least 11x11");
    const auto& k = lossdetail::gauss11<T>();
    const T C1 = T(0.01 * 255.0) * T(0.01 * 255.0);
    const T C2 = T(0.03 * 255.0) * T(0.03 * 255.0);
    const int64_t Ho = H - 10, Wo = W - 10;
    const T norm = T(1) / static_cast<T>(Ho * Wo * C);

    TensorT<T> a({H, W}), b({H, W}), aa({H, W}), bb({H, W}), ab({H, W});
    TensorT<T> ma({Ho, Wo}), mb({Ho, Wo}), maa({Ho, Wo}), mbb({Ho, Wo}), mab({Ho, Wo});
    TensorT<T> p_mu({Ho, Wo}), p_bb({Ho, Wo}), p_ab({Ho, Wo});
    TensorT<T> f_mu({H, W}), f_bb({H, W}), f_ab({H, W});

    double total = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t i = 0; i < H * W; ++i) {
            T av = gt.data()[i * C + c] * T(255);
            T bv = x.data()[i * C + c] * T(255);
            a[i] = av;
            b[i] = bv;
            aa[i] = av * av;
            bb[i] = bv * bv;
            ab[i] = av * bv;
        }
        kernels::sep_corr_valid(a, k, ma);
        kernels::sep_corr_valid(b, k, mb);
        kernels::sep_corr_valid(aa, k, maa);
        kernels::sep_corr_valid(bb, k, mbb);
        kernels::sep_corr_valid(ab, k, mab);
        for (int64_t i = 0; i < Ho * Wo; ++i) {
            T ua = ma[i], ub = mb[i];
            T va = maa[i] - ua * ua;
            T vb = mbb[i] - ub * ub;
            T cov = mab[i] - ua * ub;
            T A1 = 2 * ua * ub + C1, B1 = ua * ua + ub * ub + C1;
            T A2 = 2 * cov + C2, B2 = va + vb + C2;
            T L = A1 / B1, CS = A2 / B2;
            total += static_cast<double>(L) * static_cast<double>(CS);
            if (gx) {
                p_ab[i] = L * 2 / B2;
                p_bb[i] = -L * A2 / (B2 * B2);
                p_mu[i] = CS * (2 * ua * B1 - 2 * ub * A1) / (B1 * B1) +
                          L * (2 * ub * A2 - 2 * ua * B2) / (B2 * B2);
            }
        }
        if (gx) {
            kernels::sep_corr_full(p_mu, k, f_mu);
            kernels::sep_corr_full(p_bb, k, f_bb);
            kernels::sep_corr_full(p_ab, k, f_ab);
            for (int64_t i = 0; i < H * W; ++i)
                gx->data()[i * C + c] +=
                    weight * norm * T(255) * (f_mu[i] + 2 * b[i] * f_bb[i] + a[i] * f_ab[i]);
        }
    }
    return total / static_cast<double>(Ho * Wo * C);
}

// alpha*L1 + (1-alpha)*(1-SSIM). When gx is non-null the scaled gradient is
// written into it (overwritten, not accumulated).
template <typename T>
double joint_loss_grad(const TensorT<T>& gt, const TensorT<T>& x, double alpha, TensorT<T>* gx,
                       T weight = T(1)) {
    if (!gt.same_shape(x))
        throw ValidationError("loss: shape mismatch " + gt.shape_str() + " vs " + x.shape_str());
    const int64_t n = x.numel();
    double l1 = 0.0;
    for (int64_t i = 0; i < n; ++i) l1 += std::abs(static_cast<double>(x[i]) - gt[i]);
    l1 /= static_cast<double>(n);
    if (gx) {
        const T gscale = weight * static_cast<T>(alpha) / static_cast<T>(n);
        for (int64_t i = 0; i < n; ++i) {
            T d = x[i] - gt[i];
            (*gx)[i] = d > T(0) ? gscale : (d < T(0) ? -gscale : T(0));
        }
    }
    double s = 1.0;
    if (alpha < 1.0) {
        s = ssim_with_grad(gt, x, gx, static_cast<T>(-(1.0 - alpha)) * weight);
    }
    return alpha * l1 + (1.0 - alpha) * (1.0 - s);
}

inline double joint_loss(const Tensor& gt, const Tensor& x, double alpha) {
    return joint_loss_grad<float>(gt, x, alpha, nullptr);
}

template <typename T>
struct StepTraceT {
    ForwardTraceT<T> net;
    CompensationTraceT<T> comp;
    bool used_ivc = false;
};

// Full reconstruction of one coordinate: network forward, then inter-view
// compensation when a basic-view reconstruction is available and the config
// allows it, else clamp(rgb).
template <typename T>
const TensorT<T>& pipeline_forward(const ImplicitModelT<T>& m, int j, int t,
                                   const TensorT<T>* recon, StepTraceT<T>& tr) {
    run_net(m, j, t, tr.net);
    tr.used_ivc = recon != nullptr && !m.cfg.no_ivc;
    if (tr.used_ivc) {
        compensate_forward(m, *recon, tr.net, tr.comp);
        return tr.comp.fused;
    }
    tr.comp.fused_pre = tr.net.rgb;
    tr.comp.fused = tr.net.rgb.zeros_like();
    for (int64_t i = 0; i < tr.net.rgb.numel(); ++i)
        tr.comp.fused[i] = std::min(std::max(tr.net.rgb[i], T(0)), T(1));
    return tr.comp.fused;
}

template <typename T>
void pipeline_backward(const ImplicitModelT<T>& m, int j, int t, const TensorT<T>* recon,
                       const StepTraceT<T>& tr, const TensorT<T>& g_fused,
                       ImplicitModelT<T>& grads) {
    TensorT<T> g_rgb = tr.net.rgb.zeros_like();
    TensorT<T> g_aux = tr.net.aux.zeros_like();
    if (tr.used_ivc) {
        compensate_backward(m, *recon, tr.net, tr.comp, g_fused, g_rgb, g_aux, grads);
    } else {
        for (int64_t i = 0; i < g_rgb.numel(); ++i) {
            T pre = tr.comp.fused_pre[i];
            g_rgb[i] = (pre > T(0) && pre < T(1)) ? g_fused[i] : T(0);
        }
    }
    backward_net(m, j, t, tr.net, g_rgb, g_aux, grads);
}

template <typename T>
struct AdamStateT {
    ImplicitModelT<T> m, v;
    int64_t steps = 0;
};

template <typename T>
std::vector<TensorT<T>*> collect_tensors(ImplicitModelT<T>& model) {
    std::vector<TensorT<T>*> out;
    model.each_tensor([&](TensorT<T>& t) { out.push_back(&t); });
    return out;
}

template <typename T>
void adam_step(ImplicitModelT<T>& params, ImplicitModelT<T>& grads, AdamStateT<T>& st,
               const TrainConfig& cfg) {
    st.steps += 1;
    const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
    const T bc1 = static_cast<T>(1.0 - std::pow(cfg.beta1, static_cast<double>(st.steps)));
    const T bc2 = static_cast<T>(1.0 - std::pow(cfg.beta2, static_cast<double>(st.steps)));
    const T lr = static_cast<T>(cfg.lr), eps = static_cast<T>(cfg.eps);
    auto ps = collect_tensors(params);
    auto gs = collect_tensors(grads);
    auto ms = collect_tensors(st.m);
    auto vs = collect_tensors(st.v);
    for (size_t ti = 0; ti < ps.size(); ++ti) {
        T* p = ps[ti]->data();
        const T* g = gs[ti]->data();
        T* mo = ms[ti]->data();
        T* vo = vs[ti]->data();
        const int64_t n = ps[ti]->numel();
        for (int64_t i = 0; i < n; ++i) {
            mo[i] = b1 * mo[i] + (T(1) - b1) * g[i];
            vo[i] = b2 * vo[i] + (T(1) - b2) * g[i] * g[i];
            T mhat = mo[i] / bc1;
            T vhat = vo[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
}

// Fake-quantized copy: prunable tensors mapped to dequantize(quantize(d)),
// biases untouched. Gradients w.r.t. the fake-quantized values pass through
// to the latent parameters unchanged (straight-through estimator).
template <typename T>
ImplicitModelT<T> ste_quantize_params(const ImplicitModelT<T>& model, int qmax = 127) {
    ImplicitModelT<T> q = model;
    q.each_prunable([&](TensorT<T>& t) {
        for (int64_t i = 0; i < t.numel(); ++i)
            t[i] = static_cast<T>(
                dequantize_level(quantize_level(static_cast<float>(t[i]), qmax), qmax));
    });
    return q;
}

namespace traindetail {

inline void apply_mask(ImplicitModel& model, const std::vector<uint8_t>& mask) {
    size_t pos = 0;
    model.each_prunable([&](Tensor& t) {
        for (int64_t i = 0; i < t.numel(); ++i, ++pos)
            if (!mask[pos]) t[i] = 0.0f;
    });
}

// One pass over all epochs. When `qat` is set the forward/backward run on a
// fake-quantized copy of the model and masked parameters stay frozen at zero.
inline void run_epochs(ImplicitModel& model, const MultiViewSequence& seq, int basic,
                       const std::vector<Tensor>& recon, const TrainConfig& cfg, int epochs,
                       bool qat, const std::vector<uint8_t>* mask, Rng& rng,
                       std::vector<double>& losses) {
    std::vector<std::pair<int, int>> coords;
    for (int j = 0; j < seq.N; ++j) {
        if (j == basic) continue;
        for (int t = 0; t < seq.T; ++t) coords.emplace_back(j, t);
    }
    if (coords.empty()) throw ValidationError("training set is empty");

    ImplicitModel grads = zeros_like(model);
    AdamStateT<float> adam{zeros_like(model), zeros_like(model), 0};
    StepTraceT<float> tr;
    Tensor g_fused({seq.H, seq.W, 3});

    for (int e = 0; e < epochs; ++e) {
        rng.shuffle(coords);
        double epoch_loss = 0.0;
        for (size_t base = 0; base < coords.size(); base += cfg.batch_size) {
            size_t bn = std::min(coords.size() - base, static_cast<size_t>(cfg.batch_size));
            grads.each_tensor([](Tensor& t) { t.zero(); });
            ImplicitModel eff;
            const ImplicitModel& fwd = qat ? (eff = ste_quantize_params(model), eff) : model;
            double batch_loss = 0.0;
            for (size_t bi = 0; bi < bn; ++bi) {
                auto [j, t] = coords[base + bi];
                const Tensor& gt = seq.frame(j, t);
                const Tensor& fused = pipeline_forward(fwd, j, t, &recon[t], tr);
                batch_loss +=
                    joint_loss_grad(gt, fused, cfg.alpha, &g_fused, 1.0f / static_cast<float>(bn));
                pipeline_backward(fwd, j, t, &recon[t], tr, g_fused, grads);
            }
            batch_loss /= static_cast<double>(bn);
            if (!std::isfinite(batch_loss))
                throw Error("training", "loss diverged (NaN/Inf) at epoch " + std::to_string(e));
            if (mask) {
                size_t pos = 0;
                grads.each_prunable([&](Tensor& t) {
                    for (int64_t i = 0; i < t.numel(); ++i, ++pos)
                        if (!(*mask)[pos]) t[i] = 0.0f;
                });
            }
            adam_step(model, grads, adam, cfg);
            if (mask) apply_mask(model, *mask);
            epoch_loss += batch_loss * static_cast<double>(bn);
        }
        losses.push_back(epoch_loss / static_cast<double>(coords.size()));
    }
}

} // namespace traindetail

// Per-view quality of the current model (byte-rounded PSNR/SSIM); the basic
// slot reports the explicit reconstruction quality.
// Scores an already reconstructed frame set (index j*T + t) against the source.
TrainReport evaluate_frames(const MultiViewSequence& seq, const std::vector<Tensor>& frames);

TrainReport evaluate_views(const ImplicitModel& model, const MultiViewSequence& seq, int basic,
                           const std::vector<Tensor>& recon);

TrainReport train(ImplicitModel& model, const MultiViewSequence& seq, int basic,
                  const std::vector<Tensor>& recon, const TrainConfig& cfg);

struct CompressSchedule {
    PruneResult prune;
    CompressedModel compressed;
};

// Prune with the configured fraction, fine-tune with fake-quantized forward
// passes and frozen mask, then emit the quantized container.
CompressSchedule compress_train_schedule(ImplicitModel& model, const MultiViewSequence& seq,
                                         int basic, const std::vector<Tensor>& recon,
                                         const TrainConfig& cfg, bool entropy_coded = true);

} // namespace mivec
