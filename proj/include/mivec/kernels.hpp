#pragma once

// Hot loops for the implicit network and quality metrics.
//
// Every kernel here is written in gather form: each output element is a pure
// function of the inputs, so results are bit-identical for any OpenMP thread
// count. The kernels::ref namespace holds plain serial implementations used
// as test oracles and as the baseline in the kernel benchmark.

#include <cmath>
#include <vector>

#include "mivec/errors.hpp"
#include "mivec/tensor.hpp"

namespace mivec::kernels {

namespace detail {

template <typename T>
inline T dot(const T* a, const T* b, int64_t n) {
    T s = 0;
#pragma omp simd reduction(+ : s)
    for (int64_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, int64_t n) {
#pragma omp simd
    for (int64_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

} // namespace detail

// in {H,W,Cin}, w {Cout,3,3,Cin}, b {Cout}, out {H,W,Cout}. Zero padding, stride 1.
template <typename T>
void conv3x3_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                     TensorT<T>& out) {
    const int64_t H = in.dims()[0], W = in.dims()[1], Cin = in.dims()[2];
    const int64_t Cout = w.dims()[0];
    if (w.dims() != std::vector<int64_t>{Cout, 3, 3, Cin})
        throw ValidationError("conv3x3: weight shape " + w.shape_str() + " does not match input " + in.shape_str());
    if (out.dims() != std::vector<int64_t>{H, W, Cout})
        throw ValidationError("conv3x3: bad output shape " + out.shape_str());
    const T* ip = in.data();
    const T* bp = b.data();
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            T* orow = op + (y * W + x) * Cout;
            for (int64_t co = 0; co < Cout; ++co) {
                const T* wp = w.data() + co * 9 * Cin;
                T s = bp[co];
                for (int64_t ky = 0; ky < 3; ++ky) {
                    int64_t sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        int64_t sx = x + kx - 1;
                        if (sx < 0 || sx >= W) continue;
                        s += detail::dot(ip + (sy * W + sx) * Cin, wp + (ky * 3 + kx) * Cin, Cin);
                    }
                }
                orow[co] = s;
            }
        }
    }
}

// gin[y][x][ci] = sum_{ky,kx,co} gout[y-ky+1][x-kx+1][co] * w[co][ky][kx][ci].
// Uses a transposed weight copy so the inner reduction runs over contiguous co.
template <typename T>
void conv3x3_backward_input(const TensorT<T>& gout, const TensorT<T>& w, TensorT<T>& gin) {
    const int64_t H = gout.dims()[0], W = gout.dims()[1], Cout = gout.dims()[2];
    const int64_t Cin = w.dims()[3];
    if (gin.dims() != std::vector<int64_t>{H, W, Cin})
        throw ValidationError("conv3x3_backward_input: bad gin shape " + gin.shape_str());
    // wt {3,3,Cin,Cout}
    std::vector<T> wt(static_cast<size_t>(9 * Cin * Cout));
    for (int64_t co = 0; co < Cout; ++co)
        for (int64_t k = 0; k < 9; ++k)
            for (int64_t ci = 0; ci < Cin; ++ci)
                wt[(k * Cin + ci) * Cout + co] = w.data()[(co * 9 + k) * Cin + ci];
    const T* gp = gout.data();
    T* op = gin.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            T* orow = op + (y * W + x) * Cin;
            for (int64_t ci = 0; ci < Cin; ++ci) {
                T s = 0;
                for (int64_t ky = 0; ky < 3; ++ky) {
                    int64_t sy = y - ky + 1;
                    if (sy < 0 || sy >= H) continue;
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        int64_t sx = x - kx + 1;
                        if (sx < 0 || sx >= W) continue;
                        s += detail::dot(gp + (sy * W + sx) * Cout,
                                         wt.data() + ((ky * 3 + kx) * Cin + ci) * Cout, Cout);
                    }
                }
                orow[ci] = s;
            }
        }
    }
}

// Accumulates into gw {Cout,3,3,Cin} and gb {Cout}.
template <typename T>
void conv3x3_backward_params(const TensorT<T>& gout, const TensorT<T>& in, TensorT<T>& gw,
                             TensorT<T>& gb) {
    const int64_t H = in.dims()[0], W = in.dims()[1], Cin = in.dims()[2];
    const int64_t Cout = gout.dims()[2];
    if (gw.dims() != std::vector<int64_t>{Cout, 3, 3, Cin})
        throw ValidationError("conv3x3_backward_params: bad gw shape " + gw.shape_str());
    const T* gp = gout.data();
    const T* ip = in.data();
#pragma omp parallel for schedule(static)
    for (int64_t co = 0; co < Cout; ++co) {
        T* gwp = gw.data() + co * 9 * Cin;
        T bs = 0;
        for (int64_t y = 0; y < H; ++y) {
            for (int64_t x = 0; x < W; ++x) {
                T g = gp[(y * W + x) * Cout + co];
                if (g == T(0)) continue;
                bs += g;
                for (int64_t ky = 0; ky < 3; ++ky) {
                    int64_t sy = y + ky - 1;
                    if (sy < 0 || sy >= H) continue;
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        int64_t sx = x + kx - 1;
                        if (sx < 0 || sx >= W) continue;
                        detail::axpy(g, ip + (sy * W + sx) * Cin, gwp + (ky * 3 + kx) * Cin, Cin);
                    }
                }
            }
        }
        gb.data()[co] += bs;
    }
}

// in {H,W,C*s*s} -> out {H*s,W*s,C}; channel index (a*s+b)*C+c lands at
// out[y*s+a][x*s+b][c].
template <typename T>
void depth_to_space(const TensorT<T>& in, int s, TensorT<T>& out) {
    const int64_t H = in.dims()[0], W = in.dims()[1], Cs = in.dims()[2];
    const int64_t C = Cs / (s * s);
    if (C * s * s != Cs)
        throw ValidationError("depth_to_space: channels " + std::to_string(Cs) +
                              " not divisible by s^2");
    if (out.dims() != std::vector<int64_t>{H * s, W * s, C})
        throw ValidationError("depth_to_space: bad output shape " + out.shape_str());
    const T* ip = in.data();
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t a = 0; a < s; ++a)
                for (int64_t b = 0; b < s; ++b) {
                    const T* src = ip + ((y * W + x) * Cs) + (a * s + b) * C;
                    T* dst = op + (((y * s + a) * (W * s)) + (x * s + b)) * C;
                    for (int64_t c = 0; c < C; ++c) dst[c] = src[c];
                }
}

// Exact inverse permutation of depth_to_space; used as its gradient.
template <typename T>
void space_to_depth(const TensorT<T>& in, int s, TensorT<T>& out) {
    const int64_t Hs = in.dims()[0], Ws = in.dims()[1], C = in.dims()[2];
    const int64_t H = Hs / s, W = Ws / s;
    if (H * s != Hs || W * s != Ws)
        throw ValidationError("space_to_depth: dims not divisible by s");
    if (out.dims() != std::vector<int64_t>{H, W, C * s * s})
        throw ValidationError("space_to_depth: bad output shape " + out.shape_str());
    const T* ip = in.data();
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t a = 0; a < s; ++a)
                for (int64_t b = 0; b < s; ++b) {
                    const T* src = ip + (((y * s + a) * Ws) + (x * s + b)) * C;
                    T* dst = op + ((y * W + x) * (C * s * s)) + (a * s + b) * C;
                    for (int64_t c = 0; c < C; ++c) dst[c] = src[c];
                }
}

// Exact GELU: 0.5*x*(1+erf(x/sqrt(2))).
template <typename T>
void gelu_forward(const TensorT<T>& x, TensorT<T>& y) {
    const int64_t n = x.numel();
    const T* xp = x.data();
    T* yp = y.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        T v = xp[i];
        yp[i] = T(0.5) * v * (T(1) + std::erf(v * T(0.7071067811865476)));
    }
}

// gx = gy * (Phi(x) + x*phi(x)); Phi standard normal CDF, phi its density.
template <typename T>
void gelu_backward(const TensorT<T>& x, const TensorT<T>& gy, TensorT<T>& gx) {
    const int64_t n = x.numel();
    const T* xp = x.data();
    const T* gp = gy.data();
    T* op = gx.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n; ++i) {
        T v = xp[i];
        T cdf = T(0.5) * (T(1) + std::erf(v * T(0.7071067811865476)));
        T pdf = std::exp(T(-0.5) * v * v) * T(0.3989422804014327);
        op[i] = gp[i] * (cdf + v * pdf);
    }
}

// Backward bilinear warp: out(y,x,c) samples src at (y+flow[...,1], x+flow[...,0]),
// with the sample coordinate clamped to the image rectangle.
template <typename T>
void warp_bilinear(const TensorT<T>& src, const TensorT<T>& flow, TensorT<T>& out) {
    const int64_t H = src.dims()[0], W = src.dims()[1], C = src.dims()[2];
    if (flow.dims() != std::vector<int64_t>{H, W, 2})
        throw ValidationError("warp: flow shape " + flow.shape_str() + " does not match src");
    const T* sp = src.data();
    const T* fp = flow.data();
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            T fx = fp[(y * W + x) * 2 + 0];
            T fy = fp[(y * W + x) * 2 + 1];
            T sx = std::min(std::max(T(x) + fx, T(0)), T(W - 1));
            T sy = std::min(std::max(T(y) + fy, T(0)), T(H - 1));
            // floor lands on W-1 only when sx is exactly the edge, where wx = 0
            // and the lerp degenerates to p00; integer coordinates stay exact.
            int64_t x0 = static_cast<int64_t>(std::floor(sx));
            int64_t y0 = static_cast<int64_t>(std::floor(sy));
            int64_t x1 = std::min(x0 + 1, W - 1);
            int64_t y1 = std::min(y0 + 1, H - 1);
            T wx = sx - T(x0);
            T wy = sy - T(y0);
            const T* p00 = sp + (y0 * W + x0) * C;
            const T* p01 = sp + (y0 * W + x1) * C;
            const T* p10 = sp + (y1 * W + x0) * C;
            const T* p11 = sp + (y1 * W + x1) * C;
            T* orow = op + (y * W + x) * C;
            for (int64_t c = 0; c < C; ++c) {
                T top = p00[c] + wx * (p01[c] - p00[c]);
                T bot = p10[c] + wx * (p11[c] - p10[c]);
                orow[c] = top + wy * (bot - top);
            }
        }
    }
}

// gflow[y][x] = d out(y,x,:) / d flow, contracted with gout. Zero where the
// sample coordinate is clamped at the border.
template <typename T>
void warp_bilinear_backward_flow(const TensorT<T>& src, const TensorT<T>& flow,
                                 const TensorT<T>& gout, TensorT<T>& gflow) {
    const int64_t H = src.dims()[0], W = src.dims()[1], C = src.dims()[2];
    const T* sp = src.data();
    const T* fp = flow.data();
    const T* gp = gout.data();
    T* op = gflow.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y) {
        for (int64_t x = 0; x < W; ++x) {
            T fx = fp[(y * W + x) * 2 + 0];
            T fy = fp[(y * W + x) * 2 + 1];
            T ux = T(x) + fx;
            T uy = T(y) + fy;
            bool inx = ux > T(0) && ux < T(W - 1);
            bool iny = uy > T(0) && uy < T(H - 1);
            T sx = std::min(std::max(ux, T(0)), T(W - 1));
            T sy = std::min(std::max(uy, T(0)), T(H - 1));
            int64_t x0 = static_cast<int64_t>(std::floor(sx));
            int64_t y0 = static_cast<int64_t>(std::floor(sy));
            int64_t x1 = std::min(x0 + 1, W - 1);
            int64_t y1 = std::min(y0 + 1, H - 1);
            T wx = sx - T(x0);
            T wy = sy - T(y0);
            const T* p00 = sp + (y0 * W + x0) * C;
            const T* p01 = sp + (y0 * W + x1) * C;
            const T* p10 = sp + (y1 * W + x0) * C;
            const T* p11 = sp + (y1 * W + x1) * C;
            const T* grow = gp + (y * W + x) * C;
            T gx = 0, gy = 0;
            for (int64_t c = 0; c < C; ++c) {
                T dx = (T(1) - wy) * (p01[c] - p00[c]) + wy * (p11[c] - p10[c]);
                T dy = (T(1) - wx) * (p10[c] - p00[c]) + wx * (p11[c] - p01[c]);
                gx += grow[c] * dx;
                gy += grow[c] * dy;
            }
            op[(y * W + x) * 2 + 0] = inx ? gx : T(0);
            op[(y * W + x) * 2 + 1] = iny ? gy : T(0);
        }
    }
}

// Separable cross-correlation with a symmetric 1D kernel applied along both
// axes, valid windows only. in {H,W} -> out {H-K+1, W-K+1}.
template <typename T>
void sep_corr_valid(const TensorT<T>& in, const std::vector<T>& k, TensorT<T>& out) {
    const int64_t H = in.dims()[0], W = in.dims()[1];
    const int64_t K = static_cast<int64_t>(k.size());
    const int64_t Ho = H - K + 1, Wo = W - K + 1;
    if (Ho <= 0 || Wo <= 0)
        throw ValidationError("sep_corr_valid: input " + in.shape_str() + " smaller than kernel");
    if (out.dims() != std::vector<int64_t>{Ho, Wo})
        throw ValidationError("sep_corr_valid: bad output shape " + out.shape_str());
    TensorT<T> tmp({H, Wo});
    const T* ip = in.data();
    T* tp = tmp.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
            T s = 0;
            for (int64_t i = 0; i < K; ++i) s += k[i] * ip[y * W + x + i];
            tp[y * Wo + x] = s;
        }
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
            T s = 0;
            for (int64_t i = 0; i < K; ++i) s += k[i] * tp[(y + i) * Wo + x];
            op[y * Wo + x] = s;
        }
}

// Adjoint of sep_corr_valid for a symmetric kernel: full correlation with
// boundary clipping. in {h,w} -> out {h+K-1, w+K-1}.
template <typename T>
void sep_corr_full(const TensorT<T>& in, const std::vector<T>& k, TensorT<T>& out) {
    const int64_t h = in.dims()[0], w = in.dims()[1];
    const int64_t K = static_cast<int64_t>(k.size());
    const int64_t Ho = h + K - 1, Wo = w + K - 1;
    if (out.dims() != std::vector<int64_t>{Ho, Wo})
        throw ValidationError("sep_corr_full: bad output shape " + out.shape_str());
    TensorT<T> tmp({h, Wo});
    const T* ip = in.data();
    T* tp = tmp.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
            T s = 0;
            int64_t ilo = std::max<int64_t>(0, x - w + 1);
            int64_t ihi = std::min<int64_t>(K - 1, x);
            for (int64_t i = ilo; i <= ihi; ++i) s += k[i] * ip[y * w + (x - i)];
            tp[y * Wo + x] = s;
        }
    T* op = out.data();
#pragma omp parallel for schedule(static)
    for (int64_t y = 0; y < Ho; ++y)
        for (int64_t x = 0; x < Wo; ++x) {
            T s = 0;
            int64_t ilo = std::max<int64_t>(0, y - h + 1);
            int64_t ihi = std::min<int64_t>(K - 1, y);
            for (int64_t i = ilo; i <= ihi; ++i) s += k[i] * tp[(y - i) * Wo + x];
            op[y * Wo + x] = s;
        }
}

// Serial oracles. Written as plain loops, compared against the parallel
// kernels with a tolerance in tests and timed against them in the benchmark.
namespace ref {

template <typename T>
void conv3x3_forward(const TensorT<T>& in, const TensorT<T>& w, const TensorT<T>& b,
                     TensorT<T>& out) {
    const int64_t H = in.dims()[0], W = in.dims()[1], Cin = in.dims()[2];
    const int64_t Cout = w.dims()[0];
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t co = 0; co < Cout; ++co) {
                double s = b.data()[co];
                for (int64_t ky = 0; ky < 3; ++ky)
                    for (int64_t kx = 0; kx < 3; ++kx)
                        for (int64_t ci = 0; ci < Cin; ++ci) {
                            int64_t sy = y + ky - 1, sx = x + kx - 1;
                            if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                            s += static_cast<double>(in.at(sy, sx, ci)) *
                                 static_cast<double>(w.at(co, ky, kx, ci));
                        }
                out.at(y, x, co) = static_cast<T>(s);
            }
}

template <typename T>
void conv3x3_backward_input(const TensorT<T>& gout, const TensorT<T>& w, TensorT<T>& gin) {
    const int64_t H = gout.dims()[0], W = gout.dims()[1], Cout = gout.dims()[2];
    const int64_t Cin = w.dims()[3];
    gin.zero();
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t co = 0; co < Cout; ++co)
                for (int64_t ky = 0; ky < 3; ++ky)
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        int64_t sy = y + ky - 1, sx = x + kx - 1;
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            gin.at(sy, sx, ci) += gout.at(y, x, co) * w.at(co, ky, kx, ci);
                    }
}

template <typename T>
void conv3x3_backward_params(const TensorT<T>& gout, const TensorT<T>& in, TensorT<T>& gw,
                             TensorT<T>& gb) {
    const int64_t H = in.dims()[0], W = in.dims()[1], Cin = in.dims()[2];
    const int64_t Cout = gout.dims()[2];
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x)
            for (int64_t co = 0; co < Cout; ++co) {
                T g = gout.at(y, x, co);
                gb[co] += g;
                for (int64_t ky = 0; ky < 3; ++ky)
                    for (int64_t kx = 0; kx < 3; ++kx) {
                        int64_t sy = y + ky - 1, sx = x + kx - 1;
                        if (sy < 0 || sy >= H || sx < 0 || sx >= W) continue;
                        for (int64_t ci = 0; ci < Cin; ++ci)
                            gw.at(co, ky, kx, ci) += g * in.at(sy, sx, ci);
                    }
            }
}

template <typename T>
void warp_bilinear(const TensorT<T>& src, const TensorT<T>& flow, TensorT<T>& out) {
    const int64_t H = src.dims()[0], W = src.dims()[1], C = src.dims()[2];
    for (int64_t y = 0; y < H; ++y)
        for (int64_t x = 0; x < W; ++x) {
            T sx = std::min(std::max(T(x) + flow.at(y, x, 0), T(0)), T(W - 1));
            T sy = std::min(std::max(T(y) + flow.at(y, x, 1), T(0)), T(H - 1));
            int64_t x0 = static_cast<int64_t>(std::floor(sx));
            int64_t y0 = static_cast<int64_t>(std::floor(sy));
            int64_t x1 = std::min(x0 + 1, W - 1);
            int64_t y1 = std::min(y0 + 1, H - 1);
            T wx = sx - T(x0);
            T wy = sy - T(y0);
            for (int64_t c = 0; c < C; ++c) {
                T v = (T(1) - wy) * ((T(1) - wx) * src.at(y0, x0, c) + wx * src.at(y0, x1, c)) +
                      wy * ((T(1) - wx) * src.at(y1, x0, c) + wx * src.at(y1, x1, c));
                out.at(y, x, c) = v;
            }
        }
}

template <typename T>
void sep_corr_valid(const TensorT<T>& in, const std::vector<T>& k, TensorT<T>& out) {
    const int64_t H = in.dims()[0], W = in.dims()[1];
    const int64_t K = static_cast<int64_t>(k.size());
    for (int64_t y = 0; y + K <= H; ++y)
        for (int64_t x = 0; x + K <= W; ++x) {
            double s = 0;
            for (int64_t i = 0; i < K; ++i)
                for (int64_t j = 0; j < K; ++j)
                    s += static_cast<double>(k[i]) * static_cast<double>(k[j]) *
                         static_cast<double>(in.at(y + i, x + j));
            out.at(y, x) = static_cast<T>(s);
        }
}

} // namespace ref

} // namespace mivec::kernels
