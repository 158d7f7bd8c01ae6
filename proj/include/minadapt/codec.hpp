#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include "minadapt/bitstring.hpp"
#include "minadapt/model.hpp"

namespace minadapt {

// Model-driven lossless coding. Probabilities enter the coder only through
// QuantizedCdf, so encode/decode run on integers end to end and are
// bit-identical across platforms. The NLL estimator is computed over the same
// quantized distributions, which makes the "coded length <= NLL + 2 bits"
// bound assertable rather than approximate.

using u64 = std::uint64_t;
using u128 = unsigned __int128;

struct EstimatedBits {
    double value{0.0};  // >= 0, finite
};

// Upper cumulative edges, one per symbol; back() == 1 << precision.
// Every symbol holds at least one count, so no token is uncodable.
struct QuantizedCdf {
    std::vector<u64> cum;
    int precision{0};

    u64 total() const noexcept { return u64{1} << precision; }
    u64 lower(int sym) const noexcept { return sym == 0 ? 0 : cum[static_cast<std::size_t>(sym) - 1]; }
    u64 upper(int sym) const noexcept { return cum[static_cast<std::size_t>(sym)]; }
    u64 count(int sym) const noexcept { return upper(sym) - lower(sym); }
};

namespace detail {

// floor(p * scale) computed exactly from the double's bit pattern.
inline u64 floor_scaled(double p, u64 scale) noexcept {
    if (p <= 0.0) return 0;
    int exp = 0;
    const double frac = std::frexp(p, &exp);  // p = frac * 2^exp, frac in [0.5, 1)
    const auto mant = static_cast<u64>(frac * 9007199254740992.0);  // frac * 2^53, exact
    const int shift = 53 - exp;
    if (shift >= 120) return 0;
    const u128 prod = static_cast<u128>(mant) * scale;
    return static_cast<u64>(prod >> shift);
}

// Fractional part of p * scale, scaled to 2^-64 units; used to rank symbols
// when distributing leftover counts.
inline u64 frac_scaled(double p, u64 scale) noexcept {
    if (p <= 0.0) return 0;
    int exp = 0;
    const double frac = std::frexp(p, &exp);
    const auto mant = static_cast<u64>(frac * 9007199254740992.0);
    const int shift = 53 - exp;
    if (shift <= 0) return 0;  // integral
    const u128 prod = static_cast<u128>(mant) * scale;
    if (shift >= 128) return 0;
    const u128 rem = prod & ((static_cast<u128>(1) << shift) - 1);
    if (shift <= 64) return static_cast<u64>(rem << (64 - shift));
    return static_cast<u64>(rem >> (shift - 64));
}

}  // namespace detail

// Maps a probability vector onto integer counts summing to exactly
// 2^precision, with a floor of one count per symbol. Counts are proportional
// to the input after flooring; leftover counts go to the largest fractional
// parts (ties to the lower index).
inline QuantizedCdf quantize_distribution(std::span<const double> probs, int precision) {
    if (precision < 8 || precision > 30)
        throw std::invalid_argument("quantize_distribution: precision must be in [8, 30]");
    const std::size_t vocab = probs.size();
    const u64 total = u64{1} << precision;
    if (vocab == 0 || vocab > total - vocab)
        throw std::invalid_argument("quantize_distribution: vocabulary too large for precision");

    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("quantize_distribution: negative or non-finite probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9)
        throw std::invalid_argument("quantize_distribution: probabilities do not sum to 1");

    const u64 base = total - static_cast<u64>(vocab);
    std::vector<u64> counts(vocab);
    u64 assigned = 0;
    for (std::size_t i = 0; i < vocab; ++i) {
        counts[i] = detail::floor_scaled(probs[i], base) + 1;
        assigned += counts[i];
    }

    // assigned <= total by construction; hand out the remainder.
    u64 remainder = total - assigned;
    if (remainder > 0) {
        std::vector<std::size_t> order(vocab);
        for (std::size_t i = 0; i < vocab; ++i) order[i] = i;
        std::vector<u64> fracs(vocab);
        for (std::size_t i = 0; i < vocab; ++i) fracs[i] = detail::frac_scaled(probs[i], base);
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t a, std::size_t b) { return fracs[a] > fracs[b]; });
        for (u64 r = 0; r < remainder; ++r) ++counts[order[r % vocab]];
    }

    QuantizedCdf cdf;
    cdf.precision = precision;
    cdf.cum.resize(vocab);
    u64 acc = 0;
    for (std::size_t i = 0; i < vocab; ++i) {
        acc += counts[i];
        cdf.cum[i] = acc;
    }
    return cdf;
}

namespace detail {

// Binary arithmetic coder, 62-bit registers, classic carry handling via
// pending-bit counting. With counts bounded by 2^30 and the range kept above
// 2^60, the per-symbol truncation loss is below 2^-30 bits, so the emitted
// length stays within 2 bits of the quantized NLL.
inline constexpr int kStateBits = 62;
inline constexpr u64 kFull = u64{1} << kStateBits;
inline constexpr u64 kHalf = kFull >> 1;
inline constexpr u64 kQuarter = kFull >> 2;

class ArithmeticEncoder {
public:
    void encode(const QuantizedCdf& cdf, int sym) {
        const u64 range = high_ - low_ + 1;
        const u64 total = cdf.total();
        const u64 hi_edge = static_cast<u64>(static_cast<u128>(range) * cdf.upper(sym) / total);
        const u64 lo_edge = static_cast<u64>(static_cast<u128>(range) * cdf.lower(sym) / total);
        high_ = low_ + hi_edge - 1;
        low_ = low_ + lo_edge;
        for (;;) {
            if (high_ < kHalf) {
                emit(false);
            } else if (low_ >= kHalf) {
                emit(true);
                low_ -= kHalf;
                high_ -= kHalf;
            } else if (low_ >= kQuarter && high_ < 3 * kQuarter) {
                ++pending_;
                low_ -= kQuarter;
                high_ -= kQuarter;
            } else {
                break;
            }
            low_ <<= 1;
            high_ = (high_ << 1) | 1;
        }
    }

    // Terminates the stream; at most 2 bits beyond the quantized NLL total.
    BitString finish() {
        ++pending_;
        emit(low_ >= kQuarter);
        return std::move(out_);
    }

private:
    void emit(bool bit) {
        out_.push_back(bit);
        for (; pending_ > 0; --pending_) out_.push_back(!bit);
    }

    u64 low_{0};
    u64 high_{kFull - 1};
    u64 pending_{0};
    BitString out_;
};

class ArithmeticDecoder {
public:
    explicit ArithmeticDecoder(const BitString& code) : reader_(code) {
        for (int i = 0; i < kStateBits; ++i) code_ = (code_ << 1) | (reader_.next() ? 1u : 0u);
    }

    int decode(const QuantizedCdf& cdf) {
        const u64 range = high_ - low_ + 1;
        const u64 total = cdf.total();
        const u64 value =
            static_cast<u64>(((static_cast<u128>(code_ - low_) + 1) * total - 1) / range);
        // First symbol whose upper edge exceeds value.
        const auto it = std::upper_bound(cdf.cum.begin(), cdf.cum.end(), value);
        const int sym = static_cast<int>(it - cdf.cum.begin());
        const u64 hi_edge = static_cast<u64>(static_cast<u128>(range) * cdf.upper(sym) / total);
        const u64 lo_edge = static_cast<u64>(static_cast<u128>(range) * cdf.lower(sym) / total);
        high_ = low_ + hi_edge - 1;
        low_ = low_ + lo_edge;
        for (;;) {
            if (high_ < kHalf) {
                // nothing
            } else if (low_ >= kHalf) {
                low_ -= kHalf;
                high_ -= kHalf;
                code_ -= kHalf;
            } else if (low_ >= kQuarter && high_ < 3 * kQuarter) {
                low_ -= kQuarter;
                high_ -= kQuarter;
                code_ -= kQuarter;
            } else {
                break;
            }
            low_ <<= 1;
            high_ = (high_ << 1) | 1;
            code_ = (code_ << 1) | (reader_.next() ? 1u : 0u);
        }
        return sym;
    }

private:
    BitReader reader_;
    u64 low_{0};
    u64 high_{kFull - 1};
    u64 code_{0};
};

inline void check_token(Token t, int vocab) {
    if (t < 0 || t >= vocab) throw std::invalid_argument("token outside vocabulary");
}

}  // namespace detail

// Losslessly encodes `payload` under the model's evolving predictions, with
// `context` conditioning the first token. Deterministic.
inline BitString encode(const ProbModel& model, std::span<const Token> context,
                        std::span<const Token> payload, int precision) {
    const int vocab = model.vocab_size();
    detail::ArithmeticEncoder enc;
    TokenSeq ctx(context.begin(), context.end());
    for (Token t : ctx) detail::check_token(t, vocab);
    ctx.reserve(ctx.size() + payload.size());
    for (Token t : payload) {
        detail::check_token(t, vocab);
        const auto probs = model.next_distribution(ctx);
        const QuantizedCdf cdf = quantize_distribution(probs, precision);
        enc.encode(cdf, t);
        ctx.push_back(t);
    }
    return enc.finish();
}

// Inverse of encode. Requires the identical model state, context and
// precision; throws if the code runs out before n_tokens are produced.
inline TokenSeq decode(const ProbModel& model, std::span<const Token> context,
                       const BitString& code, std::size_t n_tokens, int precision) {
    const int vocab = model.vocab_size();
    TokenSeq ctx(context.begin(), context.end());
    for (Token t : ctx) detail::check_token(t, vocab);
    TokenSeq out;
    out.reserve(n_tokens);
    if (n_tokens == 0) return out;
    detail::ArithmeticDecoder dec(code);
    for (std::size_t i = 0; i < n_tokens; ++i) {
        const auto probs = model.next_distribution(ctx);
        const QuantizedCdf cdf = quantize_distribution(probs, precision);
        const int sym = dec.decode(cdf);
        out.push_back(sym);
        ctx.push_back(sym);
    }
    return out;
}

// Sum of -log2(quantized probability) over the payload: the fast size
// estimate used for length accounting. Computed over the same quantized
// distributions the coder would use.
inline EstimatedBits sequence_nll(const ProbModel& model, std::span<const Token> context,
                                  std::span<const Token> payload, int precision) {
    const int vocab = model.vocab_size();
    TokenSeq ctx(context.begin(), context.end());
    for (Token t : ctx) detail::check_token(t, vocab);
    double bits = 0.0;
    const double log2_total = static_cast<double>(precision);
    for (Token t : payload) {
        detail::check_token(t, vocab);
        const auto probs = model.next_distribution(ctx);
        const QuantizedCdf cdf = quantize_distribution(probs, precision);
        bits += log2_total - std::log2(static_cast<double>(cdf.count(t)));
        ctx.push_back(t);
    }
    return EstimatedBits{bits};
}

// Fused path for the builders: one model pass yielding both the exact code
// and the NLL estimate over the same quantized distributions. Bit-identical
// to calling encode and sequence_nll separately.
inline std::pair<BitString, double> encode_with_nll(const ProbModel& model,
                                                    std::span<const Token> context,
                                                    std::span<const Token> payload, int precision) {
    const int vocab = model.vocab_size();
    detail::ArithmeticEncoder enc;
    TokenSeq ctx(context.begin(), context.end());
    for (Token t : ctx) detail::check_token(t, vocab);
    double bits = 0.0;
    for (Token t : payload) {
        detail::check_token(t, vocab);
        const auto probs = model.next_distribution(ctx);
        const QuantizedCdf cdf = quantize_distribution(probs, precision);
        enc.encode(cdf, t);
        bits += static_cast<double>(precision) - std::log2(static_cast<double>(cdf.count(t)));
        ctx.push_back(t);
    }
    return {enc.finish(), bits};
}

inline constexpr int kDefaultPrecision = 16;

}  // namespace minadapt
