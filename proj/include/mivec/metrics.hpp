#pragma once

#include <array>
#include <string>
#include <vector>

#include "mivec/tensor.hpp"

namespace mivec {

struct RDPoint {
    std::string label;
    double bpp = 0.0;
    double psnr = 0.0;
    double ssim = 0.0;
};

struct BDRateReport {
    double bd_rate_percent = 0.0;
    std::array<double, 4> anchor_coef{}; // log10(rate) = c0 + c1 q + c2 q^2 + c3 q^3
    std::array<double, 4> test_coef{};
    double quality_lo = 0.0, quality_hi = 0.0;
};

enum class QualityKey { psnr, ssim };

// Mean squared error over byte-rounded components.
double mse_bytes(const Tensor& a, const Tensor& b);
double psnr_from_mse(double mse); // 10*log10(255^2/mse), capped at 99 dB
double psnr(const Tensor& a, const Tensor& b);

// Valid-window SSIM, 11x11 Gaussian sigma=1.5, K1=0.01 K2=0.03 on the 255
// scale, averaged over channels and windows. Inputs are [0,1] floats; no byte
// rounding happens here.
double ssim(const Tensor& a, const Tensor& b);

BDRateReport bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                     QualityKey key);

std::vector<RDPoint> read_rd_csv(const std::string& path);
void write_rd_csv(const std::string& path, const std::vector<RDPoint>& points);

} // namespace mivec
