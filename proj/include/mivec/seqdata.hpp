#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "mivec/tensor.hpp"

namespace mivec {

struct CameraParams {
    std::array<double, 3> position{};
    std::array<double, 3> orientation{}; // yaw, pitch, roll in radians
    int view_id = 0;
};

// N views x T frames of H x W x 3 RGB in [0,1].
struct MultiViewSequence {
    int N = 0, T = 0, H = 0, W = 0;
    std::vector<Tensor> frames; // index j*T + t
    std::vector<CameraParams> cameras;

    Tensor& frame(int j, int t) { return frames[static_cast<size_t>(j) * T + t]; }
    const Tensor& frame(int j, int t) const { return frames[static_cast<size_t>(j) * T + t]; }

    void validate() const;
};

// round(clamp(x,0,1)*255), half rounds up.
uint8_t to_byte(float v);

Tensor load_png(const std::string& path);
void save_png(const Tensor& frame, const std::string& path);

// Directory layout: root/v{j:02d}/f{t:04d}.png plus root/cameras.json.
MultiViewSequence load_sequence(const std::string& root);
void save_frames(const MultiViewSequence& seq, const std::string& root);

// Deterministic test scene: smooth textured background plus one foreground
// square moving 1 px per frame; view j is view 0 shifted right by
// j*disparity_px with clamp-to-edge fill; cameras on a line at x=j*disparity_px.
MultiViewSequence generate_synthetic(int N, int T, int H, int W, double disparity_px,
                                     uint64_t seed);

} // namespace mivec
