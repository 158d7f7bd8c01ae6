#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "minadapt/half.hpp"

namespace minadapt {

// Symmetric per-tensor grid quantization. q=16 is native storage (values are
// already on the binary16 grid, so it round-trips unchanged); q in {2,4,8}
// snaps each value to the nearest of 2^q levels spanning [-scale, +scale],
// where scale is the tensor's max |value| rounded to binary16.

inline void check_qbits(int q) {
    if (q != 2 && q != 4 && q != 8 && q != 16)
        throw std::invalid_argument("quantization level must be one of {2,4,8,16}");
}

struct QuantizedTensor {
    int qbits{16};
    double scale{0.0};                     // half-rounded max |value|; 0 for all-zero tensors
    std::vector<std::uint32_t> indices;    // grid indices, one per value (q < 16)
    std::vector<std::uint16_t> raw_half;   // binary16 payload (q == 16)
    std::size_t count{0};

    double level(std::uint32_t idx) const noexcept {
        const double step = 2.0 * scale / static_cast<double>((1u << qbits) - 1);
        return -scale + static_cast<double>(idx) * step;
    }

    std::vector<double> reconstruct() const {
        std::vector<double> out(count);
        if (qbits == 16) {
            for (std::size_t i = 0; i < count; ++i)
                out[i] = static_cast<double>(half_to_float(raw_half[i]));
        } else {
            for (std::size_t i = 0; i < count; ++i) out[i] = scale == 0.0 ? 0.0 : level(indices[i]);
        }
        return out;
    }
};

inline QuantizedTensor quantize_tensor(const std::vector<double>& values, int q) {
    check_qbits(q);
    QuantizedTensor out;
    out.qbits = q;
    out.count = values.size();
    if (q == 16) {
        out.raw_half.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i)
            out.raw_half[i] = float_to_half(static_cast<float>(values[i]));
        return out;
    }
    double absmax = 0.0;
    for (double v : values) absmax = std::abs(v) > absmax ? std::abs(v) : absmax;
    out.scale = half_round(absmax);
    out.indices.resize(values.size());
    if (out.scale == 0.0) return out;
    const double levels = static_cast<double>((1u << q) - 1);
    const double step = 2.0 * out.scale / levels;
    for (std::size_t i = 0; i < values.size(); ++i) {
        double idx = std::floor((values[i] + out.scale) / step + 0.5);
        if (idx < 0.0) idx = 0.0;
        if (idx > levels) idx = levels;
        out.indices[i] = static_cast<std::uint32_t>(idx);
    }
    return out;
}

// In-place round-to-grid; what training applies at the end of adapter fits.
inline void quantize_values(std::vector<double>& values, int q) {
    const auto qt = quantize_tensor(values, q);
    values = qt.reconstruct();
}

// -- bit packing ------------------------------------------------------------
// Indices are packed q bits each, MSB-first, final byte zero-padded. q=16
// payloads are the raw binary16 words, little-endian.

inline std::vector<std::uint8_t> pack_indices(const std::vector<std::uint32_t>& idx, int q) {
    std::vector<std::uint8_t> out((idx.size() * static_cast<std::size_t>(q) + 7) / 8, 0);
    std::size_t bit = 0;
    for (std::uint32_t v : idx) {
        for (int b = q - 1; b >= 0; --b) {
            if ((v >> b) & 1u) out[bit >> 3] |= static_cast<std::uint8_t>(0x80u >> (bit & 7));
            ++bit;
        }
    }
    return out;
}

inline std::vector<std::uint32_t> unpack_indices(const std::vector<std::uint8_t>& bytes,
                                                 std::size_t count, int q) {
    if (bytes.size() * 8 < count * static_cast<std::size_t>(q))
        throw std::runtime_error("unpack_indices: truncated payload");
    std::vector<std::uint32_t> out(count, 0);
    std::size_t bit = 0;
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t v = 0;
        for (int b = 0; b < q; ++b) {
            v = (v << 1) | ((bytes[bit >> 3] >> (7 - (bit & 7))) & 1u);
            ++bit;
        }
        out[i] = v;
    }
    return out;
}

}  // namespace minadapt
