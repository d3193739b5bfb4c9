#include "mivec/modelzip.hpp"

#include <algorithm>
#include <cstring>
#include <queue>

#include "mivec/bits.hpp"

namespace mivec {

PruneResult prune(const std::vector<float>& params, double beta) {
    if (params.empty()) throw ValidationError("prune: empty parameter list");
    if (beta < 0.0 || beta >= 1.0) throw ValidationError("prune fraction must be in [0,1)");
    const size_t n = params.size();
    std::vector<float> mags(n);
    for (size_t i = 0; i < n; ++i) mags[i] = std::fabs(params[i]);
    std::vector<float> sorted = mags;
    std::sort(sorted.begin(), sorted.end());
    size_t idx = static_cast<size_t>(std::floor(beta * static_cast<double>(n)));
    if (idx >= n) idx = n - 1;
    PruneResult res;
    res.threshold = sorted[idx];
    res.mask.resize(n);
    size_t zeros = 0;
    for (size_t i = 0; i < n; ++i) {
        res.mask[i] = mags[i] >= res.threshold ? 1 : 0;
        zeros += res.mask[i] ? 0 : 1;
    }
    res.pruned_fraction = static_cast<double>(zeros) / static_cast<double>(n);
    return res;
}

int quantize_level(float d, int qmax) {
    // The 5e-5 guard keeps levels stable when d is the float-rounded preimage
    // of an exact level boundary (atanh(level/qmax)).
    double t = std::tanh(std::fabs(static_cast<double>(d))) * qmax + 5e-5;
    int lvl = static_cast<int>(std::floor(t));
    if (lvl > qmax) lvl = qmax;
    return d < 0.0f ? -lvl : lvl;
}

float dequantize_level(int level, int qmax) {
    if (level < -qmax || level > qmax)
        throw CorruptStreamError("modelzip", "quantized level " + std::to_string(level) +
                                                 " out of range");
    return static_cast<float>(static_cast<double>(level) / qmax);
}

std::vector<int16_t> quantize(const std::vector<float>& params, const std::vector<uint8_t>& mask,
                              int qmax) {
    if (!mask.empty() && mask.size() != params.size())
        throw ValidationError("quantize: mask length does not match parameters");
    std::vector<int16_t> levels;
    levels.reserve(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
        if (!mask.empty() && !mask[i]) continue;
        levels.push_back(static_cast<int16_t>(quantize_level(params[i], qmax)));
    }
    return levels;
}

namespace {

constexpr int kAlphabet = 255; // symbols -127..127

int sym_index(int16_t s) { return s + 127; }
int16_t index_sym(int i) { return static_cast<int16_t>(i - 127); }

struct CanonicalCodes {
    // Per symbol index: code value and length; plus decode tables.
    std::vector<uint32_t> code;
    std::vector<uint8_t> len;
    int max_len = 0;
    std::vector<uint32_t> first;      // first code value of each length
    std::vector<uint32_t> offset;     // index into sorted symbol list per length
    std::vector<int16_t> sorted_syms; // symbols ordered by (length, value)
};

CanonicalCodes canonicalize(const HuffmanTable& table) {
    CanonicalCodes cc;
    cc.code.assign(kAlphabet, 0);
    cc.len.assign(kAlphabet, 0);
    std::vector<int> order;
    for (int i = 0; i < kAlphabet; ++i) {
        cc.len[i] = table.lengths[i];
        if (cc.len[i] > 0) {
            order.push_back(i);
            cc.max_len = std::max<int>(cc.max_len, cc.len[i]);
        }
    }
    if (order.empty()) throw CorruptStreamError("modelzip", "empty Huffman table");
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (cc.len[a] != cc.len[b]) return cc.len[a] < cc.len[b];
        return a < b;
    });
    uint64_t kraft = 0;
    for (int i : order) kraft += 1ULL << (cc.max_len - cc.len[i]);
    if (kraft > (1ULL << cc.max_len))
        throw CorruptStreamError("modelzip", "Huffman table violates Kraft inequality");

    cc.first.assign(cc.max_len + 1, 0);
    cc.offset.assign(cc.max_len + 1, 0);
    std::vector<uint32_t> count(cc.max_len + 1, 0);
    for (int i : order) count[cc.len[i]]++;
    uint32_t codeval = 0, idx = 0;
    for (int l = 1; l <= cc.max_len; ++l) {
        cc.first[l] = codeval;
        cc.offset[l] = idx;
        codeval = (codeval + count[l]) << 1;
        idx += count[l];
    }
    for (int i : order) cc.sorted_syms.push_back(index_sym(i));
    std::vector<uint32_t> next(cc.max_len + 1);
    for (int l = 1; l <= cc.max_len; ++l) next[l] = cc.first[l];
    for (int i : order) cc.code[i] = next[cc.len[i]]++;
    return cc;
}

} // namespace

HuffmanTable huffman_build(const std::vector<int16_t>& symbols) {
    if (symbols.empty()) throw ValidationError("huffman_build: empty symbol list");
    std::vector<uint64_t> freq(kAlphabet, 0);
    for (int16_t s : symbols) {
        if (s < -127 || s > 127) throw ValidationError("huffman symbol out of alphabet");
        freq[sym_index(s)]++;
    }

    struct Node {
        uint64_t freq;
        int id; // creation order, ties broken deterministically
        int sym = -1;
        int left = -1, right = -1;
    };
    std::vector<Node> nodes;
    auto cmp = [&](int a, int b) {
        if (nodes[a].freq != nodes[b].freq) return nodes[a].freq > nodes[b].freq;
        return nodes[a].id > nodes[b].id;
    };
    std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
    for (int i = 0; i < kAlphabet; ++i)
        if (freq[i]) {
            nodes.push_back({freq[i], static_cast<int>(nodes.size()), i});
            heap.push(static_cast<int>(nodes.size()) - 1);
        }

    HuffmanTable table;
    if (heap.size() == 1) {
        table.lengths[nodes[heap.top()].sym] = 1;
        return table;
    }
    while (heap.size() > 1) {
        int a = heap.top();
        heap.pop();
        int b = heap.top();
        heap.pop();
        nodes.push_back(
            {nodes[a].freq + nodes[b].freq, static_cast<int>(nodes.size()), -1, a, b});
        heap.push(static_cast<int>(nodes.size()) - 1);
    }
    // Depth-first walk assigns lengths.
    std::vector<std::pair<int, int>> stack{{heap.top(), 0}};
    while (!stack.empty()) {
        auto [n, depth] = stack.back();
        stack.pop_back();
        if (nodes[n].sym >= 0) {
            table.lengths[nodes[n].sym] = static_cast<uint8_t>(depth);
            continue;
        }
        stack.push_back({nodes[n].left, depth + 1});
        stack.push_back({nodes[n].right, depth + 1});
    }
    return table;
}

std::vector<uint8_t> huffman_encode(const HuffmanTable& table, const std::vector<int16_t>& symbols,
                                    uint64_t& bit_len) {
    CanonicalCodes cc = canonicalize(table);
    BitWriter bw;
    for (int16_t s : symbols) {
        int i = sym_index(s);
        if (cc.len[i] == 0) throw ValidationError("huffman_encode: symbol missing from table");
        bw.put_bits(cc.code[i], cc.len[i]);
    }
    bit_len = bw.bit_count();
    return bw.take();
}

std::vector<int16_t> huffman_decode(const HuffmanTable& table, const std::vector<uint8_t>& payload,
                                    uint64_t bit_len, size_t count) {
    if (bit_len > payload.size() * 8ULL)
        throw CorruptStreamError("modelzip", "Huffman payload shorter than declared bit length");
    CanonicalCodes cc = canonicalize(table);
    BitReader br(payload.data(), bit_len);
    std::vector<int16_t> out;
    out.reserve(count);
    for (size_t i = 0; i < count; ++i) {
        uint32_t v = 0;
        int l = 0;
        int16_t sym = 0;
        bool found = false;
        while (l < cc.max_len) {
            v = (v << 1) | static_cast<uint32_t>(br.get_bit());
            ++l;
            uint32_t f = cc.first[l];
            uint32_t n = (l + 1 <= cc.max_len ? cc.offset[l + 1] : cc.sorted_syms.size()) -
                         cc.offset[l];
            if (v >= f && v - f < n) {
                sym = cc.sorted_syms[cc.offset[l] + (v - f)];
                found = true;
                break;
            }
        }
        if (!found) throw CorruptStreamError("modelzip", "invalid Huffman prefix");
        out.push_back(sym);
    }
    return out;
}

namespace {

constexpr uint8_t kFlagMask = 1;
constexpr uint8_t kFlagEntropy = 2;

std::vector<uint8_t> pack_mask(const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> out((mask.size() + 7) / 8, 0);
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out[i / 8] |= static_cast<uint8_t>(0x80u >> (i % 8));
    return out;
}

std::vector<uint8_t> unpack_mask(const uint8_t* bytes, size_t n) {
    std::vector<uint8_t> mask(n);
    for (size_t i = 0; i < n; ++i) mask[i] = (bytes[i / 8] >> (7 - i % 8)) & 1;
    return mask;
}

} // namespace

std::vector<uint8_t> serialize(const CompressedModel& cm) {
    uint64_t total = 0;
    for (const auto& s : cm.tensor_shapes) {
        uint64_t n = 1;
        for (int64_t d : s) n *= static_cast<uint64_t>(d);
        total += n;
    }
    if (!cm.mask.empty() && cm.mask.size() != total)
        throw ValidationError("serialize: mask length does not match tensor shapes");
    size_t kept = cm.mask.empty()
                      ? static_cast<size_t>(total)
                      : static_cast<size_t>(std::count(cm.mask.begin(), cm.mask.end(), 1));
    if (cm.levels.size() != kept)
        throw ValidationError("serialize: level count does not match kept parameters");

    std::vector<uint8_t> out;
    out.insert(out.end(), {'M', 'V', 'I', 'C'});
    be_put_u8(out, 1);
    uint8_t flags = 0;
    if (!cm.mask.empty()) flags |= kFlagMask;
    if (cm.entropy_coded) flags |= kFlagEntropy;
    be_put_u8(out, flags);
    be_put_u32(out, static_cast<uint32_t>(cm.config_text.size()));
    out.insert(out.end(), cm.config_text.begin(), cm.config_text.end());
    be_put_u32(out, static_cast<uint32_t>(cm.tensor_shapes.size()));
    for (const auto& s : cm.tensor_shapes) {
        be_put_u8(out, static_cast<uint8_t>(s.size()));
        for (int64_t d : s) be_put_u32(out, static_cast<uint32_t>(d));
    }
    be_put_u64(out, total);
    if (!cm.mask.empty()) {
        auto packed = pack_mask(cm.mask);
        out.insert(out.end(), packed.begin(), packed.end());
    }
    be_put_u32(out, static_cast<uint32_t>(kept));
    if (cm.entropy_coded) {
        HuffmanTable table = huffman_build(cm.levels);
        uint64_t bit_len = 0;
        auto payload = huffman_encode(table, cm.levels, bit_len);
        out.insert(out.end(), table.lengths.begin(), table.lengths.end());
        be_put_u64(out, bit_len);
        out.insert(out.end(), payload.begin(), payload.end());
    } else {
        for (int16_t lvl : cm.levels) be_put_u8(out, static_cast<uint8_t>(lvl + 127));
    }
    be_put_u32(out, static_cast<uint32_t>(cm.biases.size()));
    for (float b : cm.biases) be_put_f32(out, b);
    be_put_u32(out, crc32(out.data(), out.size()));
    return out;
}

CompressedModel deserialize(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8) throw CorruptStreamError("modelzip", "container too short");
    uint32_t stored = 0;
    for (int i = 0; i < 4; ++i) stored = (stored << 8) | bytes[bytes.size() - 4 + i];
    if (crc32(bytes.data(), bytes.size() - 4) != stored)
        throw CorruptStreamError("modelzip", "CRC mismatch");

    ByteReader r(bytes.data(), bytes.size() - 4, "modelzip");
    const uint8_t* magic = r.bytes(4);
    if (std::memcmp(magic, "MVIC", 4) != 0)
        throw CorruptStreamError("modelzip", "bad magic");
    if (r.u8() != 1) throw CorruptStreamError("modelzip", "unsupported version");
    uint8_t flags = r.u8();

    CompressedModel cm;
    cm.entropy_coded = (flags & kFlagEntropy) != 0;
    uint32_t cfg_len = r.u32();
    if (cfg_len > 1u << 20) throw CorruptStreamError("modelzip", "config block too large");
    const uint8_t* cfg = r.bytes(cfg_len);
    cm.config_text.assign(reinterpret_cast<const char*>(cfg), cfg_len);

    uint32_t ntensors = r.u32();
    if (ntensors > 10000) throw CorruptStreamError("modelzip", "implausible tensor count");
    uint64_t total = 0;
    for (uint32_t i = 0; i < ntensors; ++i) {
        int rank = r.u8();
        if (rank < 1 || rank > 4) throw CorruptStreamError("modelzip", "bad tensor rank");
        std::vector<int64_t> dims;
        uint64_t n = 1;
        for (int d = 0; d < rank; ++d) {
            uint32_t v = r.u32();
            if (v == 0 || v > (1u << 28)) throw CorruptStreamError("modelzip", "bad tensor dim");
            dims.push_back(v);
            n *= v;
        }
        if (n > (1ULL << 32)) throw CorruptStreamError("modelzip", "tensor too large");
        total += n;
        cm.tensor_shapes.push_back(std::move(dims));
    }
    uint64_t total_decl = r.u64();
    if (total_decl != total)
        throw CorruptStreamError("modelzip", "parameter total does not match shapes");
    if (total > (1ULL << 32)) throw CorruptStreamError("modelzip", "parameter total too large");

    if (flags & kFlagMask) {
        size_t nbytes = (static_cast<size_t>(total) + 7) / 8;
        cm.mask = unpack_mask(r.bytes(nbytes), static_cast<size_t>(total));
    }
    uint32_t kept = r.u32();
    size_t expect_kept = cm.mask.empty()
                             ? static_cast<size_t>(total)
                             : static_cast<size_t>(std::count(cm.mask.begin(), cm.mask.end(), 1));
    if (kept != expect_kept)
        throw CorruptStreamError("modelzip", "kept count does not match mask");

    if (cm.entropy_coded) {
        HuffmanTable table;
        const uint8_t* lens = r.bytes(255);
        std::copy(lens, lens + 255, table.lengths.begin());
        uint64_t bit_len = r.u64();
        size_t nbytes = static_cast<size_t>((bit_len + 7) / 8);
        if (nbytes > r.remaining()) throw CorruptStreamError("modelzip", "truncated payload");
        const uint8_t* p = r.bytes(nbytes);
        std::vector<uint8_t> payload(p, p + nbytes);
        cm.levels = huffman_decode(table, payload, bit_len, kept);
    } else {
        const uint8_t* lv = r.bytes(kept);
        cm.levels.resize(kept);
        for (size_t i = 0; i < kept; ++i) {
            int v = static_cast<int>(lv[i]) - 127;
            if (v < -127 || v > 127) throw CorruptStreamError("modelzip", "raw level out of range");
            cm.levels[i] = static_cast<int16_t>(v);
        }
    }
    uint32_t nbias = r.u32();
    if (nbias * 4ULL != r.remaining())
        throw CorruptStreamError("modelzip", "bias block size mismatch");
    cm.biases.resize(nbias);
    for (uint32_t i = 0; i < nbias; ++i) cm.biases[i] = r.f32();
    return cm;
}

size_t mask_block_bytes(const CompressedModel& cm) {
    return cm.mask.empty() ? 0 : (cm.mask.size() + 7) / 8;
}

double compression_ratio(const CompressedModel& cm) {
    uint64_t total = 0;
    for (const auto& s : cm.tensor_shapes) {
        uint64_t n = 1;
        for (int64_t d : s) n *= static_cast<uint64_t>(d);
        total += n;
    }
    total += cm.biases.size();
    size_t bytes = serialize(cm).size() - mask_block_bytes(cm);
    return 4.0 * static_cast<double>(total) / static_cast<double>(bytes);
}

CompressedModel pack_model(const ImplicitModel& model, const std::vector<uint8_t>& mask,
                           bool entropy_coded) {
    CompressedModel cm;
    cm.config_text = model.cfg.to_string();
    model.each_prunable([&](const Tensor& t) { cm.tensor_shapes.push_back(t.dims()); });
    cm.mask = mask;
    cm.levels = quantize(model.flat_prunable(), mask);
    model.each_bias([&](const Tensor& t) {
        cm.biases.insert(cm.biases.end(), t.data(), t.data() + t.numel());
    });
    cm.entropy_coded = entropy_coded;
    return cm;
}

ImplicitModel restore_model(const CompressedModel& cm) {
    ModelConfig cfg;
    try {
        cfg = ModelConfig::parse(cm.config_text);
    } catch (const ConfigError& e) {
        throw CorruptStreamError("modelzip", std::string("bad architecture config: ") + e.what());
    }
    ImplicitModel m = build_skeleton<float>(cfg);

    std::vector<std::vector<int64_t>> shapes;
    m.each_prunable([&](const Tensor& t) { shapes.push_back(t.dims()); });
    if (shapes != cm.tensor_shapes)
        throw CorruptStreamError("modelzip", "tensor shape table does not match architecture");

    const size_t total = static_cast<size_t>(m.prunable_count());
    if (!cm.mask.empty() && cm.mask.size() != total)
        throw CorruptStreamError("modelzip", "mask length does not match architecture");
    size_t kept = cm.mask.empty() ? total
                                  : static_cast<size_t>(
                                        std::count(cm.mask.begin(), cm.mask.end(), 1));
    if (cm.levels.size() != kept)
        throw CorruptStreamError("modelzip", "level count does not match kept parameters");

    size_t pos = 0, li = 0;
    m.each_prunable([&](Tensor& t) {
        for (int64_t i = 0; i < t.numel(); ++i, ++pos) {
            if (!cm.mask.empty() && !cm.mask[pos]) {
                t[i] = 0.0f;
            } else {
                t[i] = dequantize_level(cm.levels[li++]);
            }
        }
    });

    size_t nbias = 0;
    m.each_bias([&](const Tensor& t) { nbias += static_cast<size_t>(t.numel()); });
    if (cm.biases.size() != nbias)
        throw CorruptStreamError("modelzip", "bias count does not match architecture");
    size_t bi = 0;
    m.each_bias([&](Tensor& t) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = cm.biases[bi++];
    });
    return m;
}

} // namespace mivec
