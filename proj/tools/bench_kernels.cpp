// Times the OpenMP kernels against their serial reference twins on
// production-shaped tensors. Run with OMP_NUM_THREADS set to taste.
#include <chrono>
#include <cstdio>
#include <functional>

#include <omp.h>

#include "mivec/kernels.hpp"
#include "mivec/rng.hpp"

using namespace mivec;

namespace {

Tensor random_tensor(std::vector<int64_t> dims, Rng& rng) {
    Tensor t(std::move(dims));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
    fn(); // warm-up
    auto t0 = std::chrono::steady_clock::now();
    for (int i = 0; i < reps; ++i) fn();
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
               .count() /
           reps;
}

void row(const char* name, double ref_ms, double omp_ms) {
    std::printf("%-28s %10.3f ms %10.3f ms %8.2fx\n", name, ref_ms, omp_ms, ref_ms / omp_ms);
}

} // namespace

int main() {
    Rng rng(42);
    const int H = 20, W = 20, Cin = 24, Cout = 600; // first-block shape of the default model
    Tensor in = random_tensor({H, W, Cin}, rng);
    Tensor w = random_tensor({Cout, 3, 3, Cin}, rng);
    Tensor b = random_tensor({Cout}, rng);
    Tensor out({H, W, Cout}), out_ref({H, W, Cout});
    Tensor gout = random_tensor({H, W, Cout}, rng);
    Tensor gin({H, W, Cin}), gin_ref({H, W, Cin});
    Tensor gw({Cout, 3, 3, Cin}), gb({Cout});

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-28s %13s %13s %9s\n", "kernel", "serial", "parallel", "speedup");

    row("conv3x3 forward",
        time_ms([&] { kernels::ref::conv3x3_forward(in, w, b, out_ref); }, 5),
        time_ms([&] { kernels::conv3x3_forward(in, w, b, out); }, 5));

    row("conv3x3 backward input",
        time_ms([&] { kernels::ref::conv3x3_backward_input(gout, w, gin_ref); }, 5),
        time_ms([&] { kernels::conv3x3_backward_input(gout, w, gin); }, 5));

    row("conv3x3 backward params",
        time_ms(
            [&] {
                gw.zero();
                gb.zero();
                kernels::ref::conv3x3_backward_params(gout, in, gw, gb);
            },
            5),
        time_ms(
            [&] {
                gw.zero();
                gb.zero();
                kernels::conv3x3_backward_params(gout, in, gw, gb);
            },
            5));

    const int FH = 80, FW = 80;
    Tensor src = random_tensor({FH, FW, 3}, rng);
    Tensor flow = random_tensor({FH, FW, 2}, rng);
    Tensor warped({FH, FW, 3}), warped_ref({FH, FW, 3});
    row("bilinear warp",
        time_ms([&] { kernels::ref::warp_bilinear(src, flow, warped_ref); }, 50),
        time_ms([&] { kernels::warp_bilinear(src, flow, warped); }, 50));

    TensorT<double> img(std::vector<int64_t>{FH, FW});
    for (int64_t i = 0; i < img.numel(); ++i) img[i] = rng.uniform();
    std::vector<double> k(11, 1.0 / 11.0);
    TensorT<double> corr({FH - 10, FW - 10}), corr_ref({FH - 10, FW - 10});
    row("separable 11x11 corr",
        time_ms([&] { kernels::ref::sep_corr_valid(img, k, corr_ref); }, 50),
        time_ms([&] { kernels::sep_corr_valid(img, k, corr); }, 50));

    return 0;
}
