#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace minadapt::bytes {

// Little-endian byte-level writers/readers shared by the checkpoint and
// program-descriptor formats. Explicit per-byte writes keep the files
// bit-exact across platforms.

inline void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }
inline void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xFF));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}
inline void put_str(std::vector<std::uint8_t>& out, const std::string& s) {
    put_u32(out, static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
}

struct Cursor {
    const std::vector<std::uint8_t>* buf;
    std::size_t pos{0};

    void need(std::size_t n) const {
        if (pos + n > buf->size()) throw std::runtime_error("binary payload: truncated");
    }
    bool done() const noexcept { return pos >= buf->size(); }
    std::uint8_t u8() {
        need(1);
        return (*buf)[pos++];
    }
    std::uint16_t u16() {
        need(2);
        const std::uint16_t v =
            static_cast<std::uint16_t>((*buf)[pos] | (static_cast<std::uint16_t>((*buf)[pos + 1]) << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>((*buf)[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>((*buf)[pos + static_cast<std::size_t>(i)]) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s(buf->begin() + static_cast<std::ptrdiff_t>(pos),
                      buf->begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return s;
    }
    std::vector<std::uint8_t> raw(std::size_t n) {
        need(n);
        std::vector<std::uint8_t> v(buf->begin() + static_cast<std::ptrdiff_t>(pos),
                                    buf->begin() + static_cast<std::ptrdiff_t>(pos + n));
        pos += n;
        return v;
    }
};

}  // namespace minadapt::bytes
