#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mivec/explicit2d.hpp"
#include "mivec/inrnet.hpp"
#include "mivec/modelzip.hpp"
#include "mivec/seqdata.hpp"
#include "mivec/training.hpp"

namespace mivec {

struct EncoderConfig {
    ExplicitCodecConfig explicit_codec;
    ModelConfig model;      // T and N are filled from the sequence
    TrainConfig train;
    int basic_view = -1;    // -1 selects by camera geometry
    bool entropy_coded = true;
};

struct EncodeReport {
    int basic_view = 0;
    double bpp = 0.0;
    std::vector<double> view_psnr; // byte-rounded, per view
    std::vector<double> view_ssim;
    size_t header_bytes = 0;
    size_t metadata_bytes = 0;
    size_t explicit_bytes = 0;
    size_t implicit_bytes = 0;
    size_t total_bytes = 0;
    double model_ratio = 0.0; // 4*params / implicit bytes excluding the mask block
    double pruned_fraction = 0.0;
    int64_t param_count = 0;
    int epochs_run = 0;
    double train_seconds = 0.0;
    double total_seconds = 0.0;
    std::vector<double> epoch_loss;
    // Final reconstructions, recomputed from the serialized model through the
    // decode path. A decoder fed this container produces these frames
    // bit-identically.
    std::vector<Tensor> recon; // index j*T + t
};

struct EncodeResult {
    std::vector<uint8_t> container;
    EncodeReport report;
};

struct DecodeOptions {
    std::vector<size_t> views; // empty = all views
    // Tolerate a damaged or truncated implicit segment: skip the container
    // CRC, decode what survives, and leave the remaining views black.
    bool salvage = false;
    std::string external_decode_command; // required for the external backend
};

struct DecodeResult {
    MultiViewSequence seq;
    int basic_view = 0;
    std::vector<size_t> decoded_views;
    bool salvaged = false; // true when salvage mode had to drop the implicit part
};

EncodeResult encode_sequence(const MultiViewSequence& seq, const EncoderConfig& cfg);

DecodeResult decode_sequence(const std::vector<uint8_t>& container, const DecodeOptions& opt = {});

} // namespace mivec
