#pragma once

// Inter-view compensation: warp the explicit reconstruction of the basic view
// by predicted flow, refine with a residual 3x3 conv, and blend into the
// implicit output through the predicted weight map.

#include "mivec/inrnet.hpp"
#include "mivec/kernels.hpp"
#include "mivec/tensor.hpp"

namespace mivec {

template <typename T>
TensorT<T> backward_warp(const TensorT<T>& src, const TensorT<T>& flow) {
    TensorT<T> out = src.zeros_like();
    kernels::warp_bilinear(src, flow, out);
    return out;
}

// Residual refinement: warped + Conv(warped).
template <typename T>
TensorT<T> refine(const TensorT<T>& warped, const ConvT<T>& conv) {
    TensorT<T> r = warped.zeros_like();
    kernels::conv3x3_forward(warped, conv.w, conv.b, r);
    for (int64_t i = 0; i < r.numel(); ++i) r[i] += warped[i];
    return r;
}

// Fused output clamp(itilde + w * ibar, 0, 1); w broadcast over channels.
template <typename T>
TensorT<T> fuse(const TensorT<T>& itilde, const TensorT<T>& ibar, const TensorT<T>& wmap) {
    if (!itilde.same_shape(ibar))
        throw ValidationError("fuse: shape mismatch " + itilde.shape_str() + " vs " +
                              ibar.shape_str());
    const int64_t HW = itilde.dims()[0] * itilde.dims()[1];
    if (wmap.numel() != HW)
        throw ValidationError("fuse: weight map shape " + wmap.shape_str() + " mismatch");
    TensorT<T> out = itilde.zeros_like();
    for (int64_t i = 0; i < HW; ++i) {
        T w = wmap[i];
        for (int64_t c = 0; c < 3; ++c) {
            T v = itilde[i * 3 + c] + w * ibar[i * 3 + c];
            out[i * 3 + c] = std::min(std::max(v, T(0)), T(1));
        }
    }
    return out;
}

template <typename T>
struct CompensationTraceT {
    TensorT<T> warped;    // warp(recon, flow)
    TensorT<T> ibar;      // warped + refine conv
    TensorT<T> fused_pre; // itilde + w*ibar before clamping
    TensorT<T> fused;     // clamped output
};

template <typename T>
void compensate_forward(const ImplicitModelT<T>& m, const TensorT<T>& recon,
                        const ForwardTraceT<T>& net, CompensationTraceT<T>& tr) {
    tr.warped = backward_warp(recon, net.flow);
    tr.ibar = refine(tr.warped, m.refine);
    tr.fused_pre = net.rgb.zeros_like();
    tr.fused = net.rgb.zeros_like();
    const int64_t HW = net.rgb.dims()[0] * net.rgb.dims()[1];
    for (int64_t i = 0; i < HW; ++i) {
        T w = net.wmap[i];
        for (int64_t c = 0; c < 3; ++c) {
            T v = net.rgb[i * 3 + c] + w * tr.ibar[i * 3 + c];
            tr.fused_pre[i * 3 + c] = v;
            tr.fused[i * 3 + c] = std::min(std::max(v, T(0)), T(1));
        }
    }
}

// Backward through fuse/refine/warp. Consumes d(loss)/d(fused); emits
// gradients for the rgb head (g_rgb), the raw aux head (g_aux: flow channels
// plus sigmoid-chained weight channel) and the refine conv parameters.
template <typename T>
void compensate_backward(const ImplicitModelT<T>& m, const TensorT<T>& recon,
                         const ForwardTraceT<T>& net, const CompensationTraceT<T>& tr,
                         const TensorT<T>& g_fused, TensorT<T>& g_rgb, TensorT<T>& g_aux,
                         ImplicitModelT<T>& g) {
    const int64_t H = net.rgb.dims()[0], W = net.rgb.dims()[1];
    const int64_t HW = H * W;
    TensorT<T> g_ibar = tr.ibar.zeros_like();
    for (int64_t i = 0; i < HW; ++i) {
        T w = net.wmap[i];
        T gw = 0;
        for (int64_t c = 0; c < 3; ++c) {
            T pre = tr.fused_pre[i * 3 + c];
            T gp = (pre > T(0) && pre < T(1)) ? g_fused[i * 3 + c] : T(0);
            g_rgb[i * 3 + c] = gp;
            g_ibar[i * 3 + c] = gp * w;
            gw += gp * tr.ibar[i * 3 + c];
        }
        g_aux[i * 3 + 0] = 0;
        g_aux[i * 3 + 1] = 0;
        g_aux[i * 3 + 2] = gw * net.wmap[i] * (T(1) - net.wmap[i]);
    }

    // ibar = warped + conv(warped): gradient reaches warped directly and
    // through the conv input path.
    TensorT<T> g_warped = tr.warped.zeros_like();
    kernels::conv3x3_backward_input(g_ibar, m.refine.w, g_warped);
    for (int64_t i = 0; i < g_warped.numel(); ++i) g_warped[i] += g_ibar[i];
    kernels::conv3x3_backward_params(g_ibar, tr.warped, g.refine.w, g.refine.b);

    TensorT<T> g_flow = net.flow.zeros_like();
    kernels::warp_bilinear_backward_flow(recon, net.flow, g_warped, g_flow);
    for (int64_t i = 0; i < HW; ++i) {
        g_aux[i * 3 + 0] = g_flow[i * 2 + 0];
        g_aux[i * 3 + 1] = g_flow[i * 2 + 1];
    }
}

} // namespace mivec
