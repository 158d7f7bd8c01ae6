#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include "minadapt/model.hpp"

namespace minadapt {

// Character-level vocabulary with two reserved symbols. The token table is
// part of the model and travels with every checkpoint.
class Vocab {
public:
    static constexpr Token pad_id = 0;
    static constexpr Token eos_id = 1;

    Vocab() = default;
    explicit Vocab(std::string chars) : chars_(std::move(chars)) {
        for (std::size_t i = 0; i < chars_.size(); ++i)
            for (std::size_t j = i + 1; j < chars_.size(); ++j)
                if (chars_[i] == chars_[j]) throw std::invalid_argument("Vocab: duplicate symbol");
    }

    int size() const noexcept { return static_cast<int>(chars_.size()) + 2; }
    int char_count() const noexcept { return static_cast<int>(chars_.size()); }
    const std::string& chars() const noexcept { return chars_; }

    bool contains(char c) const noexcept { return chars_.find(c) != std::string::npos; }

    Token encode_char(char c) const {
        const auto pos = chars_.find(c);
        if (pos == std::string::npos)
            throw std::invalid_argument(std::string("Vocab: unknown symbol '") + c + "'");
        return static_cast<Token>(pos) + 2;
    }

    TokenSeq encode(std::string_view text) const {
        TokenSeq out;
        out.reserve(text.size());
        for (char c : text) out.push_back(encode_char(c));
        return out;
    }

    char decode_char(Token t) const {
        if (t >= 2 && t < size()) return chars_[static_cast<std::size_t>(t) - 2];
        return '\0';  // pad/eos have no printable form
    }

    // Renders tokens up to (not including) the first eos; pad renders as NUL,
    // which no scorer accepts.
    std::string decode(std::span<const Token> tokens) const {
        std::string out;
        for (Token t : tokens) {
            if (t == eos_id) break;
            out.push_back(decode_char(t));
        }
        return out;
    }

    bool operator==(const Vocab& o) const noexcept { return chars_ == o.chars_; }

private:
    std::string chars_;
};

// The canonical 70-symbol vocabulary (68 characters + pad + eos): lowercase,
// digits, uppercase A..V, and the punctuation the synthetic tasks emit.
inline const Vocab& default_vocab() {
    static const Vocab v(
        "abcdefghijklmnopqrstuvwxyz"
        "0123456789"
        "ABCDEFGHIJKLMNOPQRSTUV"
        " +-*()=:.,");
    return v;
}

}  // namespace minadapt
