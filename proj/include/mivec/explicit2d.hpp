#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mivec/tensor.hpp"

namespace mivec {

enum class ExplicitBackend : uint8_t { builtin_dct = 0, external = 1 };

struct ExplicitCodecConfig {
    ExplicitBackend backend = ExplicitBackend::builtin_dct;
    int qp = 28; // [0,51], quantizer step 2^((qp-4)/6)
    // Encoder command with {input} (PNG dir), {output} (payload file), {qp}.
    std::string external_command_template;
    // Decoder command with {input} (payload file), {output} (PNG dir).
    std::string external_decode_command;
};

struct ExplicitResult {
    std::vector<Tensor> reconstructed;
    std::vector<uint8_t> payload;
    int64_t bit_count = 0;
};

// Encodes one view. The returned reconstruction is produced by running
// decode_view on the payload, so it is bit-identical to what any decoder sees.
ExplicitResult encode_view(const std::vector<Tensor>& frames, const ExplicitCodecConfig& cfg);

std::vector<Tensor> decode_view(const std::vector<uint8_t>& payload,
                                const ExplicitCodecConfig& cfg, int H, int W, int T);

} // namespace mivec
