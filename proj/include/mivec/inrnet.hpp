#pragma once

// Implicit network: multi-level temporal feature grids + per-view grid fused
// additively, a cascade of Conv Blocks (3x3 conv, depth-to-space upscale, tiled
// per-view embedding, GELU), and three heads off the shared trunk: RGB, flow
// (2ch) and fusion weight (1ch through a sigmoid).

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mivec/errors.hpp"
#include "mivec/kernels.hpp"
#include "mivec/rng.hpp"
#include "mivec/tensor.hpp"

namespace mivec {

struct ModelConfig {
    int grid_h = 4, grid_w = 4, grid_c = 24;
    int T = 0, N = 0;
    std::vector<int> factors;  // per-block upscale
    std::vector<int> channels; // per-block output channels; empty = derived schedule
    uint64_t seed = 1;
    // Ablations: disabled grids collapse to a single shared slice; disabled
    // embeddings vanish; no_ivc skips warp/fuse so output is clamp(rgb).
    bool no_grid_t = false, no_grid_v = false, no_grid_emb = false, no_ivc = false;

    int upscale_total() const {
        int p = 1;
        for (int s : factors) p *= s;
        return p;
    }
    int frame_h() const { return grid_h * upscale_total(); }
    int frame_w() const { return grid_w * upscale_total(); }

    // c_1 = grid_c, then halved with a floor of 12.
    std::vector<int> resolved_channels() const {
        if (!channels.empty()) return channels;
        std::vector<int> cs(factors.size());
        int c = grid_c;
        for (size_t k = 0; k < factors.size(); ++k) {
            cs[k] = c;
            c = std::max(c / 2, 12);
        }
        return cs;
    }

    void validate() const;
    void check_output(int H, int W) const;

    std::string to_string() const;
    static ModelConfig parse(const std::string& text);
};

inline void ModelConfig::validate() const {
    if (grid_h < 1 || grid_w < 1 || grid_c < 1)
        throw ConfigError("grid dims must be positive, got " + std::to_string(grid_h) + "x" +
                          std::to_string(grid_w) + "x" + std::to_string(grid_c));
    if (T < 1) throw ConfigError("model config needs T >= 1");
    if (N < 2) throw ConfigError("model config needs N >= 2");
    if (factors.empty()) throw ConfigError("model config needs at least one block factor");
    for (int s : factors)
        if (s < 1) throw ConfigError("block factor must be >= 1");
    if (!channels.empty()) {
        if (channels.size() != factors.size())
            throw ConfigError("channels override length " + std::to_string(channels.size()) +
                              " does not match " + std::to_string(factors.size()) + " factors");
        for (int c : channels)
            if (c < 1) throw ConfigError("channel count must be >= 1");
    }
}

inline void ModelConfig::check_output(int H, int W) const {
    validate();
    if (frame_h() != H || frame_w() != W)
        throw ConfigError("grid output " + std::to_string(grid_h) + "*" +
                          std::to_string(upscale_total()) + "x" + std::to_string(grid_w) + "*" +
                          std::to_string(upscale_total()) + " = " + std::to_string(frame_h()) +
                          "x" + std::to_string(frame_w()) + " does not match frames " +
                          std::to_string(H) + "x" + std::to_string(W));
}

namespace detail {

inline std::string join_ints(const std::vector<int>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(v[i]);
    }
    return s;
}

inline std::vector<int> split_ints(const std::string& s) {
    std::vector<int> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("bad integer list entry '" + item + "'");
        }
    }
    return v;
}

} // namespace detail

inline std::string ModelConfig::to_string() const {
    std::string s;
    s += "grid_h=" + std::to_string(grid_h) + "\n";
    s += "grid_w=" + std::to_string(grid_w) + "\n";
    s += "grid_c=" + std::to_string(grid_c) + "\n";
    s += "T=" + std::to_string(T) + "\n";
    s += "N=" + std::to_string(N) + "\n";
    s += "factors=" + detail::join_ints(factors) + "\n";
    s += "channels=" + detail::join_ints(resolved_channels()) + "\n";
    s += "seed=" + std::to_string(seed) + "\n";
    s += "no_grid_t=" + std::to_string(no_grid_t ? 1 : 0) + "\n";
    s += "no_grid_v=" + std::to_string(no_grid_v ? 1 : 0) + "\n";
    s += "no_grid_emb=" + std::to_string(no_grid_emb ? 1 : 0) + "\n";
    s += "no_ivc=" + std::to_string(no_ivc ? 1 : 0) + "\n";
    return s;
}

inline ModelConfig ModelConfig::parse(const std::string& text) {
    ModelConfig cfg;
    cfg.T = cfg.N = 0;
    std::stringstream ss(text);
    std::string line;
    while (std::getline(ss, line)) {
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("bad config line '" + line + "'");
        std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "grid_h") cfg.grid_h = std::stoi(val);
            else if (key == "grid_w") cfg.grid_w = std::stoi(val);
            else if (key == "grid_c") cfg.grid_c = std::stoi(val);
            else if (key == "T") cfg.T = std::stoi(val);
            else if (key == "N") cfg.N = std::stoi(val);
            else if (key == "factors") cfg.factors = detail::split_ints(val);
            else if (key == "channels") cfg.channels = detail::split_ints(val);
            else if (key == "seed") cfg.seed = std::stoull(val);
            else if (key == "no_grid_t") cfg.no_grid_t = std::stoi(val) != 0;
            else if (key == "no_grid_v") cfg.no_grid_v = std::stoi(val) != 0;
            else if (key == "no_grid_emb") cfg.no_grid_emb = std::stoi(val) != 0;
            else if (key == "no_ivc") cfg.no_ivc = std::stoi(val) != 0;
            else throw ConfigError("unknown config key '" + key + "'");
        } catch (const ConfigError&) {
            throw;
        } catch (const std::exception&) {
            throw ConfigError("bad value for config key '" + key + "': '" + val + "'");
        }
    }
    cfg.validate();
    return cfg;
}

template <typename T>
struct ConvT {
    TensorT<T> w; // {C_out, 3, 3, C_in}
    TensorT<T> b; // {C_out}
};

template <typename T>
struct ImplicitModelT {
    ModelConfig cfg;
    // Temporal grids at strides 1/2/4 (single shared slice when no_grid_t).
    TensorT<T> g_t1, g_t2, g_t3;
    TensorT<T> g_v; // {N,h,w,c}, or {1,h,w,c} when no_grid_v
    std::vector<TensorT<T>> g_emb; // per block {N, s, s, c_out}; empty when no_grid_emb
    std::vector<ConvT<T>> blocks;
    ConvT<T> rgb_head, aux_head; // trunk -> 3 channels each
    ConvT<T> refine;             // 3 -> 3, owned here, applied by the compensation step

    // Canonical tensor order. Prunable weights first (grids, embeddings, conv
    // kernels), then float biases; serialization, pruning and quantization all
    // index parameters in this order.
    template <typename F>
    void each_prunable(F&& f) {
        if (!g_t1.empty()) f(g_t1);
        if (!g_t2.empty()) f(g_t2);
        if (!g_t3.empty()) f(g_t3);
        f(g_v);
        for (auto& e : g_emb) f(e);
        for (auto& bl : blocks) f(bl.w);
        f(rgb_head.w);
        f(aux_head.w);
        f(refine.w);
    }
    template <typename F>
    void each_prunable(F&& f) const {
        const_cast<ImplicitModelT*>(this)->each_prunable(
            [&](TensorT<T>& t) { f(static_cast<const TensorT<T>&>(t)); });
    }
    template <typename F>
    void each_bias(F&& f) {
        for (auto& bl : blocks) f(bl.b);
        f(rgb_head.b);
        f(aux_head.b);
        f(refine.b);
    }
    template <typename F>
    void each_bias(F&& f) const {
        const_cast<ImplicitModelT*>(this)->each_bias(
            [&](TensorT<T>& t) { f(static_cast<const TensorT<T>&>(t)); });
    }
    template <typename F>
    void each_tensor(F&& f) {
        each_prunable(f);
        each_bias(f);
    }

    int64_t prunable_count() const {
        int64_t n = 0;
        each_prunable([&](const TensorT<T>& t) { n += t.numel(); });
        return n;
    }
    int64_t param_count() const {
        int64_t n = prunable_count();
        each_bias([&](const TensorT<T>& t) { n += t.numel(); });
        return n;
    }

    std::vector<T> flat_prunable() const {
        std::vector<T> out;
        out.reserve(static_cast<size_t>(prunable_count()));
        each_prunable([&](const TensorT<T>& t) {
            out.insert(out.end(), t.data(), t.data() + t.numel());
        });
        return out;
    }
    void set_flat_prunable(const std::vector<T>& flat) {
        size_t pos = 0;
        each_prunable([&](TensorT<T>& t) {
            if (pos + static_cast<size_t>(t.numel()) > flat.size())
                throw ValidationError("flat parameter vector too short for model");
            std::copy(flat.begin() + pos, flat.begin() + pos + t.numel(), t.data());
            pos += static_cast<size_t>(t.numel());
        });
        if (pos != flat.size())
            throw ValidationError("flat parameter vector length does not match model");
    }

    template <typename U>
    ImplicitModelT<U> cast() const {
        ImplicitModelT<U> m;
        m.cfg = cfg;
        m.g_t1 = g_t1.template cast<U>();
        m.g_t2 = g_t2.template cast<U>();
        m.g_t3 = g_t3.template cast<U>();
        m.g_v = g_v.template cast<U>();
        for (const auto& e : g_emb) m.g_emb.push_back(e.template cast<U>());
        for (const auto& bl : blocks)
            m.blocks.push_back({bl.w.template cast<U>(), bl.b.template cast<U>()});
        m.rgb_head = {rgb_head.w.template cast<U>(), rgb_head.b.template cast<U>()};
        m.aux_head = {aux_head.w.template cast<U>(), aux_head.b.template cast<U>()};
        m.refine = {refine.w.template cast<U>(), refine.b.template cast<U>()};
        return m;
    }
};

using ImplicitModel = ImplicitModelT<float>;

// Same structure as m, every tensor zero. Used for gradients and Adam moments.
template <typename T>
ImplicitModelT<T> zeros_like(const ImplicitModelT<T>& m) {
    ImplicitModelT<T> z;
    z.cfg = m.cfg;
    z.g_t1 = m.g_t1.zeros_like();
    z.g_t2 = m.g_t2.zeros_like();
    z.g_t3 = m.g_t3.zeros_like();
    z.g_v = m.g_v.zeros_like();
    for (const auto& e : m.g_emb) z.g_emb.push_back(e.zeros_like());
    for (const auto& bl : m.blocks) z.blocks.push_back({bl.w.zeros_like(), bl.b.zeros_like()});
    z.rgb_head = {m.rgb_head.w.zeros_like(), m.rgb_head.b.zeros_like()};
    z.aux_head = {m.aux_head.w.zeros_like(), m.aux_head.b.zeros_like()};
    z.refine = {m.refine.w.zeros_like(), m.refine.b.zeros_like()};
    return z;
}

// Allocates all tensors for cfg, zero-filled.
template <typename T>
ImplicitModelT<T> build_skeleton(const ModelConfig& cfg) {
    cfg.validate();
    ImplicitModelT<T> m;
    m.cfg = cfg;
    const int64_t h = cfg.grid_h, w = cfg.grid_w, c = cfg.grid_c;
    if (cfg.no_grid_t) {
        m.g_t1 = TensorT<T>({1, h, w, c});
    } else {
        m.g_t1 = TensorT<T>({cfg.T, h, w, c});
        m.g_t2 = TensorT<T>({(cfg.T + 1) / 2, h, w, c});
        m.g_t3 = TensorT<T>({(cfg.T + 3) / 4, h, w, c});
    }
    m.g_v = TensorT<T>({cfg.no_grid_v ? 1 : cfg.N, h, w, c});

    auto cs = cfg.resolved_channels();
    int cin = cfg.grid_c;
    for (size_t k = 0; k < cfg.factors.size(); ++k) {
        int s = cfg.factors[k], cout = cs[k];
        m.blocks.push_back({TensorT<T>({cout * s * s, 3, 3, cin}), TensorT<T>({cout * s * s})});
        if (!cfg.no_grid_emb) m.g_emb.push_back(TensorT<T>({cfg.N, s, s, cout}));
        cin = cout;
    }
    m.rgb_head = {TensorT<T>({3, 3, 3, cin}), TensorT<T>({3})};
    m.aux_head = {TensorT<T>({3, 3, 3, cin}), TensorT<T>({3})};
    m.refine = {TensorT<T>({3, 3, 3, 3}), TensorT<T>({3})};
    return m;
}

// Grids and embeddings ~ U(-0.01, 0.01); conv weights and biases fan-in
// scaled U(-1/sqrt(9*Cin), +1/sqrt(9*Cin)); the refine conv starts at zero so
// compensation begins as an identity residual.
template <typename T>
ImplicitModelT<T> init_model(const ModelConfig& cfg) {
    ImplicitModelT<T> m = build_skeleton<T>(cfg);
    Rng rng(cfg.seed);
    auto fill_uniform = [&](TensorT<T>& t, double lo, double hi) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
    };
    fill_uniform(m.g_t1, -0.01, 0.01);
    if (!m.g_t2.empty()) fill_uniform(m.g_t2, -0.01, 0.01);
    if (!m.g_t3.empty()) fill_uniform(m.g_t3, -0.01, 0.01);
    fill_uniform(m.g_v, -0.01, 0.01);
    for (auto& e : m.g_emb) fill_uniform(e, -0.01, 0.01);
    auto fill_conv = [&](ConvT<T>& conv) {
        double bound = 1.0 / std::sqrt(9.0 * static_cast<double>(conv.w.dims()[3]));
        fill_uniform(conv.w, -bound, bound);
        fill_uniform(conv.b, -bound, bound);
    };
    for (auto& bl : m.blocks) fill_conv(bl);
    fill_conv(m.rgb_head);
    fill_conv(m.aux_head);
    return m;
}

template <typename T>
TensorT<T> temporal_lookup(const ImplicitModelT<T>& m, int t) {
    if (t < 0 || t >= m.cfg.T)
        throw ValidationError("time index " + std::to_string(t) + " out of [0," +
                              std::to_string(m.cfg.T) + ")");
    const int64_t n = static_cast<int64_t>(m.cfg.grid_h) * m.cfg.grid_w * m.cfg.grid_c;
    TensorT<T> out({m.cfg.grid_h, m.cfg.grid_w, m.cfg.grid_c});
    if (m.cfg.no_grid_t) {
        std::copy(m.g_t1.data(), m.g_t1.data() + n, out.data());
        return out;
    }
    const T* p1 = m.g_t1.data() + static_cast<int64_t>(t) * n;
    const T* p2 = m.g_t2.data() + static_cast<int64_t>(t / 2) * n;
    const T* p3 = m.g_t3.data() + static_cast<int64_t>(t / 4) * n;
    for (int64_t i = 0; i < n; ++i) out[i] = p1[i] + p2[i] + p3[i];
    return out;
}

template <typename T>
TensorT<T> view_lookup(const ImplicitModelT<T>& m, int j) {
    if (j < 0 || j >= m.cfg.N)
        throw ValidationError("view index " + std::to_string(j) + " out of [0," +
                              std::to_string(m.cfg.N) + ")");
    const int64_t n = static_cast<int64_t>(m.cfg.grid_h) * m.cfg.grid_w * m.cfg.grid_c;
    TensorT<T> out({m.cfg.grid_h, m.cfg.grid_w, m.cfg.grid_c});
    const T* p = m.g_v.data() + static_cast<int64_t>(m.cfg.no_grid_v ? 0 : j) * n;
    std::copy(p, p + n, out.data());
    return out;
}

template <typename T>
TensorT<T> fuse_features(const TensorT<T>& fea_t, const TensorT<T>& fea_v) {
    if (!fea_t.same_shape(fea_v))
        throw ValidationError("feature shape mismatch " + fea_t.shape_str() + " vs " +
                              fea_v.shape_str());
    TensorT<T> out = fea_t.zeros_like();
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = fea_t[i] + fea_v[i];
    return out;
}

// One Conv Block: conv 3x3 -> depth-to-space -> add tiled embedding -> GELU.
// `emb` may be empty (ablation); phi_out receives the pre-GELU map.
template <typename T>
TensorT<T> conv_block_forward(const TensorT<T>& in, const ConvT<T>& conv, int s,
                              const TensorT<T>& emb, int j, TensorT<T>* phi_out = nullptr) {
    const int64_t h = in.dims()[0], w = in.dims()[1];
    const int64_t cs = conv.w.dims()[0];
    const int64_t cout = cs / (s * s);
    TensorT<T> pre({h, w, cs});
    kernels::conv3x3_forward(in, conv.w, conv.b, pre);
    TensorT<T> phi({h * s, w * s, cout});
    kernels::depth_to_space(pre, s, phi);
    if (!emb.empty()) {
        if (emb.dims()[1] != s || emb.dims()[2] != s || emb.dims()[3] != cout)
            throw ValidationError("embedding shape " + emb.shape_str() + " does not match block");
        const T* ep = emb.data() + static_cast<int64_t>(j) * s * s * cout;
        for (int64_t y = 0; y < h * s; ++y)
            for (int64_t x = 0; x < w * s; ++x) {
                const T* e = ep + ((y % s) * s + (x % s)) * cout;
                T* p = phi.data() + (y * (w * s) + x) * cout;
                for (int64_t c = 0; c < cout; ++c) p[c] += e[c];
            }
    }
    if (phi_out) *phi_out = phi;
    TensorT<T> out = phi.zeros_like();
    kernels::gelu_forward(phi, out);
    return out;
}

template <typename T>
struct ForwardTraceT {
    std::vector<TensorT<T>> block_in; // conv input per block; block_in[0] is the fused grid map
    std::vector<TensorT<T>> phi;      // pre-GELU map per block
    TensorT<T> trunk;                 // last block activation
    TensorT<T> rgb;                   // {H,W,3}, unclamped
    TensorT<T> aux;                   // {H,W,3}, raw head output
    TensorT<T> flow;                  // {H,W,2}
    TensorT<T> wmap;                  // {H,W,1}, sigmoid of aux channel 2
};

template <typename T>
void run_net(const ImplicitModelT<T>& m, int j, int t, ForwardTraceT<T>& tr) {
    tr.block_in.clear();
    tr.phi.clear();
    tr.block_in.push_back(fuse_features(temporal_lookup(m, t), view_lookup(m, j)));
    static const TensorT<T> no_emb;
    for (size_t k = 0; k < m.blocks.size(); ++k) {
        TensorT<T> phi;
        const TensorT<T>& emb = m.cfg.no_grid_emb ? no_emb : m.g_emb[k];
        TensorT<T> act = conv_block_forward(tr.block_in.back(), m.blocks[k], m.cfg.factors[k],
                                            emb, j, &phi);
        tr.phi.push_back(std::move(phi));
        tr.block_in.push_back(std::move(act));
    }
    tr.trunk = std::move(tr.block_in.back());
    tr.block_in.pop_back();

    const int64_t H = tr.trunk.dims()[0], W = tr.trunk.dims()[1];
    tr.rgb = TensorT<T>({H, W, 3});
    kernels::conv3x3_forward(tr.trunk, m.rgb_head.w, m.rgb_head.b, tr.rgb);
    tr.aux = TensorT<T>({H, W, 3});
    kernels::conv3x3_forward(tr.trunk, m.aux_head.w, m.aux_head.b, tr.aux);
    tr.flow = TensorT<T>({H, W, 2});
    tr.wmap = TensorT<T>({H, W, 1});
    for (int64_t i = 0; i < H * W; ++i) {
        tr.flow[i * 2 + 0] = tr.aux[i * 3 + 0];
        tr.flow[i * 2 + 1] = tr.aux[i * 3 + 1];
        tr.wmap[i] = T(1) / (T(1) + std::exp(-tr.aux[i * 3 + 2]));
    }
}

struct NetOutput {
    Tensor itilde; // unclamped RGB
    Tensor flow;
    Tensor wmap;
};

// Convenience inference entry point; trace-based paths are used in training.
inline NetOutput forward(const ImplicitModel& m, int j, int t) {
    ForwardTraceT<float> tr;
    run_net(m, j, t, tr);
    return {std::move(tr.rgb), std::move(tr.flow), std::move(tr.wmap)};
}

// Accumulates parameter gradients into g given head output gradients. g_aux is
// in raw head space (the sigmoid on channel 2 is the caller's chain step).
template <typename T>
void backward_net(const ImplicitModelT<T>& m, int j, int t, const ForwardTraceT<T>& tr,
                  const TensorT<T>& g_rgb, const TensorT<T>& g_aux, ImplicitModelT<T>& g) {
    TensorT<T> g_trunk = tr.trunk.zeros_like();
    TensorT<T> tmp = tr.trunk.zeros_like();
    kernels::conv3x3_backward_input(g_rgb, m.rgb_head.w, g_trunk);
    kernels::conv3x3_backward_params(g_rgb, tr.trunk, g.rgb_head.w, g.rgb_head.b);
    kernels::conv3x3_backward_input(g_aux, m.aux_head.w, tmp);
    for (int64_t i = 0; i < g_trunk.numel(); ++i) g_trunk[i] += tmp[i];
    kernels::conv3x3_backward_params(g_aux, tr.trunk, g.aux_head.w, g.aux_head.b);

    TensorT<T> g_act = std::move(g_trunk);
    for (size_t k = m.blocks.size(); k-- > 0;) {
        const int s = m.cfg.factors[k];
        TensorT<T> g_phi = tr.phi[k].zeros_like();
        kernels::gelu_backward(tr.phi[k], g_act, g_phi);
        if (!m.cfg.no_grid_emb) {
            const int64_t Hs = g_phi.dims()[0], Ws = g_phi.dims()[1], c = g_phi.dims()[2];
            T* ep = g.g_emb[k].data() + static_cast<int64_t>(j) * s * s * c;
            for (int64_t y = 0; y < Hs; ++y)
                for (int64_t x = 0; x < Ws; ++x) {
                    T* e = ep + ((y % s) * s + (x % s)) * c;
                    const T* p = g_phi.data() + (y * Ws + x) * c;
                    for (int64_t cc = 0; cc < c; ++cc) e[cc] += p[cc];
                }
        }
        const int64_t h = tr.block_in[k].dims()[0], w = tr.block_in[k].dims()[1];
        TensorT<T> g_pre({h, w, m.blocks[k].w.dims()[0]});
        kernels::space_to_depth(g_phi, s, g_pre);
        kernels::conv3x3_backward_params(g_pre, tr.block_in[k], g.blocks[k].w, g.blocks[k].b);
        TensorT<T> g_in({h, w, m.blocks[k].w.dims()[3]});
        kernels::conv3x3_backward_input(g_pre, m.blocks[k].w, g_in);
        g_act = std::move(g_in);
    }

    // g_act is now the gradient of the fused grid features.
    const int64_t n = g_act.numel();
    if (m.cfg.no_grid_t) {
        for (int64_t i = 0; i < n; ++i) g.g_t1[i] += g_act[i];
    } else {
        T* p1 = g.g_t1.data() + static_cast<int64_t>(t) * n;
        T* p2 = g.g_t2.data() + static_cast<int64_t>(t / 2) * n;
        T* p3 = g.g_t3.data() + static_cast<int64_t>(t / 4) * n;
        for (int64_t i = 0; i < n; ++i) {
            p1[i] += g_act[i];
            p2[i] += g_act[i];
            p3[i] += g_act[i];
        }
    }
    T* pv = g.g_v.data() + static_cast<int64_t>(m.cfg.no_grid_v ? 0 : j) * n;
    for (int64_t i = 0; i < n; ++i) pv[i] += g_act[i];
}

} // namespace mivec
