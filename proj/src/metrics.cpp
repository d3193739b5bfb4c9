#include "mivec/metrics.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "mivec/errors.hpp"
#include "mivec/kernels.hpp"
#include "mivec/seqdata.hpp"

namespace mivec {

double mse_bytes(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims())
        throw ValidationError("psnr: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    double sum = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        double d = static_cast<double>(to_byte(a.data()[i])) - to_byte(b.data()[i]);
        sum += d * d;
    }
    return sum / static_cast<double>(a.numel());
}

double psnr_from_mse(double mse) {
    if (mse <= 0.0) return 99.0;
    return std::min(10.0 * std::log10(255.0 * 255.0 / mse), 99.0);
}

double psnr(const Tensor& a, const Tensor& b) { return psnr_from_mse(mse_bytes(a, b)); }

namespace {

std::vector<double> gauss11() {
    std::vector<double> k(11);
    double sum = 0.0;
    for (int i = 0; i < 11; ++i) {
        double d = i - 5;
        k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
        sum += k[i];
    }
    for (auto& v : k) v /= sum;
    return k;
}

} // namespace

double ssim(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims())
        throw ValidationError("ssim: shape mismatch " + a.shape_str() + " vs " + b.shape_str());
    if (a.dims().size() != 3 || a.dims()[2] < 1)
        throw ValidationError("ssim expects H x W x C, got " + a.shape_str());
    const int64_t H = a.dims()[0], W = a.dims()[1], C = a.dims()[2];
    if (H < 11 || W < 11)
        throw ValidationError("ssim needs frames at least 11x11, got " + a.shape_str());

    static const std::vector<double> k = gauss11();
    const double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    const double C2 = (0.03 * 255.0) * (0.03 * 255.0);
    const int64_t Ho = H - 10, Wo = W - 10;

    TensorT<double> x({H, W}), y({H, W}), xx({H, W}), yy({H, W}), xy({H, W});
    TensorT<double> mx({Ho, Wo}), my({Ho, Wo}), mxx({Ho, Wo}), myy({Ho, Wo}), mxy({Ho, Wo});

    double total = 0.0;
    for (int64_t c = 0; c < C; ++c) {
        for (int64_t i = 0; i < H * W; ++i) {
            double xv = a.data()[i * C + c] * 255.0;
            double yv = b.data()[i * C + c] * 255.0;
            x.data()[i] = xv;
            y.data()[i] = yv;
            xx.data()[i] = xv * xv;
            yy.data()[i] = yv * yv;
            xy.data()[i] = xv * yv;
        }
        kernels::sep_corr_valid(x, k, mx);
        kernels::sep_corr_valid(y, k, my);
        kernels::sep_corr_valid(xx, k, mxx);
        kernels::sep_corr_valid(yy, k, myy);
        kernels::sep_corr_valid(xy, k, mxy);
        for (int64_t i = 0; i < Ho * Wo; ++i) {
            double ux = mx.data()[i], uy = my.data()[i];
            double vx = mxx.data()[i] - ux * ux;
            double vy = myy.data()[i] - uy * uy;
            double cov = mxy.data()[i] - ux * uy;
            total += ((2 * ux * uy + C1) * (2 * cov + C2)) /
                     ((ux * ux + uy * uy + C1) * (vx + vy + C2));
        }
    }
    return total / static_cast<double>(Ho * Wo * C);
}

namespace {

// Least-squares cubic fit of log10(rate) against quality, partial-pivot solve.
std::array<double, 4> fit_cubic(const std::vector<RDPoint>& pts, QualityKey key) {
    double A[4][5] = {};
    for (const auto& p : pts) {
        double q = key == QualityKey::psnr ? p.psnr : p.ssim;
        if (p.bpp <= 0.0) throw ValidationError("bd_rate: non-positive bpp");
        double r = std::log10(p.bpp);
        double pw[4] = {1.0, q, q * q, q * q * q};
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) A[i][j] += pw[i] * pw[j];
            A[i][4] += pw[i] * r;
        }
    }
    for (int col = 0; col < 4; ++col) {
        int piv = col;
        for (int r = col + 1; r < 4; ++r)
            if (std::fabs(A[r][col]) > std::fabs(A[piv][col])) piv = r;
        for (int j = 0; j < 5; ++j) std::swap(A[col][j], A[piv][j]);
        if (std::fabs(A[col][col]) < 1e-30) throw ValidationError("bd_rate: degenerate fit");
        for (int r = 0; r < 4; ++r) {
            if (r == col) continue;
            double f = A[r][col] / A[col][col];
            for (int j = col; j < 5; ++j) A[r][j] -= f * A[col][j];
        }
    }
    return {A[0][4] / A[0][0], A[1][4] / A[1][1], A[2][4] / A[2][2], A[3][4] / A[3][3]};
}

double integrate_cubic(const std::array<double, 4>& c, double lo, double hi) {
    auto F = [&](double q) {
        return c[0] * q + c[1] * q * q / 2 + c[2] * q * q * q / 3 + c[3] * q * q * q * q / 4;
    };
    return F(hi) - F(lo);
}

} // namespace

BDRateReport bd_rate(const std::vector<RDPoint>& anchor, const std::vector<RDPoint>& test,
                     QualityKey key) {
    if (anchor.size() < 4 || test.size() < 4)
        throw ValidationError("bd_rate needs at least 4 points per curve");
    auto qof = [&](const RDPoint& p) { return key == QualityKey::psnr ? p.psnr : p.ssim; };
    double alo = qof(anchor[0]), ahi = alo, tlo = qof(test[0]), thi = tlo;
    for (const auto& p : anchor) {
        alo = std::min(alo, qof(p));
        ahi = std::max(ahi, qof(p));
    }
    for (const auto& p : test) {
        tlo = std::min(tlo, qof(p));
        thi = std::max(thi, qof(p));
    }
    BDRateReport rep;
    rep.quality_lo = std::max(alo, tlo);
    rep.quality_hi = std::min(ahi, thi);
    if (rep.quality_hi <= rep.quality_lo)
        throw ValidationError("bd_rate: quality ranges do not overlap");
    rep.anchor_coef = fit_cubic(anchor, key);
    rep.test_coef = fit_cubic(test, key);
    double span = rep.quality_hi - rep.quality_lo;
    double avg = (integrate_cubic(rep.test_coef, rep.quality_lo, rep.quality_hi) -
                  integrate_cubic(rep.anchor_coef, rep.quality_lo, rep.quality_hi)) /
                 span;
    rep.bd_rate_percent = (std::pow(10.0, avg) - 1.0) * 100.0;
    return rep;
}

std::vector<RDPoint> read_rd_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics", "cannot open " + path);
    std::vector<RDPoint> pts;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string label, sb, sp, ss2;
        if (!std::getline(ss, label, ',') || !std::getline(ss, sb, ',') ||
            !std::getline(ss, sp, ',') || !std::getline(ss, ss2))
            throw IoError("metrics", "malformed RD csv line: " + line);
        try {
            pts.push_back({label, std::stod(sb), std::stod(sp), std::stod(ss2)});
        } catch (const std::exception&) {
            if (pts.empty() && label == "label") continue; // header row
            throw IoError("metrics", "malformed RD csv line: " + line);
        }
    }
    return pts;
}

void write_rd_csv(const std::string& path, const std::vector<RDPoint>& points) {
    std::ofstream out(path);
    if (!out) throw IoError("metrics", "cannot write " + path);
    out << "label,bpp,psnr,ssim\n";
    char buf[160];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof buf, "%s,%.8f,%.6f,%.8f\n", p.label.c_str(), p.bpp, p.psnr,
                      p.ssim);
        out << buf;
    }
}

} // namespace mivec
