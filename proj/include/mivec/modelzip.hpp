#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mivec/inrnet.hpp"

namespace mivec {

struct PruneResult {
    std::vector<uint8_t> mask; // one byte per parameter, 1 = kept
    double threshold = 0.0;
    double pruned_fraction = 0.0;
};

struct HuffmanTable {
    std::array<uint8_t, 255> lengths{}; // code length per symbol -127..127, 0 = absent
};

struct CompressedModel {
    std::string config_text; // architecture echo, ModelConfig format
    std::vector<std::vector<int64_t>> tensor_shapes;
    std::vector<uint8_t> mask;   // per prunable parameter; empty = nothing pruned
    std::vector<int16_t> levels; // kept parameters only, canonical order
    std::vector<float> biases;
    bool entropy_coded = true;

    bool operator==(const CompressedModel& o) const = default;
};

// Global unstructured magnitude pruning. Threshold is the floor(beta*n)-th
// smallest magnitude; parameters with |x| >= threshold are kept.
PruneResult prune(const std::vector<float>& params, double beta);

// level = sign(d) * floor(|tanh(d)|*Qmax + eps); the epsilon absorbs the
// float-storage rounding of values that sit exactly on a level boundary.
int quantize_level(float d, int qmax = 127);
float dequantize_level(int level, int qmax = 127);

std::vector<int16_t> quantize(const std::vector<float>& params, const std::vector<uint8_t>& mask,
                              int qmax = 127);

// Canonical Huffman over the fixed alphabet -127..127: code lengths from
// symbol frequencies, codes assigned shortest-first with ties by ascending
// symbol; a single-symbol stream gets length 1.
HuffmanTable huffman_build(const std::vector<int16_t>& symbols);
std::vector<uint8_t> huffman_encode(const HuffmanTable& table, const std::vector<int16_t>& symbols,
                                    uint64_t& bit_len);
std::vector<int16_t> huffman_decode(const HuffmanTable& table, const std::vector<uint8_t>& payload,
                                    uint64_t bit_len, size_t count);

std::vector<uint8_t> serialize(const CompressedModel& cm);
CompressedModel deserialize(const std::vector<uint8_t>& bytes);

// Ratio vs a 32-bit float baseline: 4*total_params / payload bytes, where the
// payload excludes the prune-mask block (the mask is transmitted but reported
// separately, matching how pruned-model ratios are usually quoted).
double compression_ratio(const CompressedModel& cm);
size_t mask_block_bytes(const CompressedModel& cm);

// Model-level glue: quantize a trained model into a container and back.
CompressedModel pack_model(const ImplicitModel& model, const std::vector<uint8_t>& mask,
                           bool entropy_coded);
ImplicitModel restore_model(const CompressedModel& cm);

} // namespace mivec
