#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace minadapt {

// A sequence of bits with explicit length. Bits are packed MSB-first within
// each byte. Serialized form: 64-bit little-endian bit count, then packed
// bytes with the final byte zero-padded. This framing is used verbatim inside
// program payload files.
class BitString {
public:
    BitString() = default;

    std::size_t size() const noexcept { return nbits_; }
    bool empty() const noexcept { return nbits_ == 0; }

    void push_back(bool bit) {
        const std::size_t byte = nbits_ >> 3;
        if (byte == bytes_.size()) bytes_.push_back(0);
        if (bit) bytes_[byte] |= static_cast<std::uint8_t>(0x80u >> (nbits_ & 7));
        ++nbits_;
    }

    bool operator[](std::size_t i) const {
        return (bytes_[i >> 3] >> (7 - (i & 7))) & 1u;
    }

    bool operator==(const BitString& o) const noexcept {
        return nbits_ == o.nbits_ && bytes_ == o.bytes_;
    }

    void flip(std::size_t i) {
        if (i >= nbits_) throw std::out_of_range("BitString::flip: index past end");
        bytes_[i >> 3] ^= static_cast<std::uint8_t>(0x80u >> (i & 7));
    }

    const std::vector<std::uint8_t>& bytes() const noexcept { return bytes_; }

    void serialize(std::vector<std::uint8_t>& out) const {
        const std::uint64_t n = nbits_;
        for (int i = 0; i < 8; ++i)
            out.push_back(static_cast<std::uint8_t>((n >> (8 * i)) & 0xFF));
        out.insert(out.end(), bytes_.begin(), bytes_.end());
    }

    std::vector<std::uint8_t> serialize() const {
        std::vector<std::uint8_t> out;
        out.reserve(8 + bytes_.size());
        serialize(out);
        return out;
    }

    // Reads one framed BitString starting at `pos`; advances `pos`.
    static BitString deserialize(const std::vector<std::uint8_t>& buf, std::size_t& pos) {
        if (pos + 8 > buf.size())
            throw std::runtime_error("BitString::deserialize: truncated length prefix");
        std::uint64_t n = 0;
        for (int i = 0; i < 8; ++i)
            n |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        const std::size_t nbytes = static_cast<std::size_t>((n + 7) / 8);
        if (pos + nbytes > buf.size())
            throw std::runtime_error("BitString::deserialize: truncated payload");
        BitString bs;
        bs.nbits_ = static_cast<std::size_t>(n);
        bs.bytes_.assign(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                         buf.begin() + static_cast<std::ptrdiff_t>(pos + nbytes));
        pos += nbytes;
        // Zero-padding in the final byte is part of the format.
        if (n & 7) bs.bytes_.back() &= static_cast<std::uint8_t>(0xFF00u >> (n & 7));
        return bs;
    }

private:
    std::vector<std::uint8_t> bytes_;
    std::size_t nbits_{0};
};

// Sequential reader over a BitString. Bits past the end read as zero, up to a
// small slack; the coder needs this because its flush emits fewer bits than
// the decoder's register width. Reading far past the end throws, which is the
// "code exhausted" signal for truncated or mismatched input.
class BitReader {
public:
    explicit BitReader(const BitString& bits, std::size_t pad_limit = 128)
        : bits_(&bits), pad_limit_(pad_limit) {}

    bool next() {
        if (pos_ < bits_->size()) return (*bits_)[pos_++];
        if (pos_ - bits_->size() >= pad_limit_)
            throw std::runtime_error("bit stream exhausted (model/state mismatch?)");
        ++pos_;
        return false;
    }

    std::size_t consumed() const noexcept { return pos_; }

private:
    const BitString* bits_;
    std::size_t pos_{0};
    std::size_t pad_limit_;
};

}  // namespace minadapt
