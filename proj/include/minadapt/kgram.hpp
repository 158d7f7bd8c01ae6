#pragma once

#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "minadapt/model.hpp"
#include "minadapt/rng.hpp"
#include "minadapt/vocab.hpp"

namespace minadapt {

// Additively smoothed k-gram model. Contexts shorter than k-1 are padded on
// the left, so every position of a stream contributes one count.
class KgramModel : public ProbModel {
public:
    KgramModel(int order, double alpha, int vocab)
        : order_(order), alpha_(alpha), vocab_(vocab) {
        if (order < 1) throw std::invalid_argument("KgramModel: order must be >= 1");
        if (alpha <= 0.0) throw std::invalid_argument("KgramModel: alpha must be positive");
    }

    int order() const noexcept { return order_; }
    double alpha() const noexcept { return alpha_; }
    int vocab_size() const override { return vocab_; }

    void train(std::span<const Token> stream) {
        for (std::size_t i = 0; i < stream.size(); ++i) {
            check(stream[i]);
            const std::uint64_t key = context_key(stream, i);
            auto& slot = counts_[key];
            if (slot.counts.empty()) slot.counts.assign(static_cast<std::size_t>(vocab_), 0);
            ++slot.counts[static_cast<std::size_t>(stream[i])];
            ++slot.total;
        }
    }

    std::vector<double> next_distribution(std::span<const Token> context) const override {
        for (Token t : context) check(t);
        const std::uint64_t key = context_key(context, context.size());
        const auto it = counts_.find(key);
        std::vector<double> p(static_cast<std::size_t>(vocab_));
        const double denom_smooth = alpha_ * static_cast<double>(vocab_);
        if (it == counts_.end()) {
            const double u = alpha_ / denom_smooth;  // == 1/vocab
            for (auto& x : p) x = u;
            return p;
        }
        const double denom = static_cast<double>(it->second.total) + denom_smooth;
        for (int s = 0; s < vocab_; ++s)
            p[static_cast<std::size_t>(s)] =
                (static_cast<double>(it->second.counts[static_cast<std::size_t>(s)]) + alpha_) / denom;
        return p;
    }

private:
    struct Slot {
        std::vector<std::uint32_t> counts;
        std::uint64_t total{0};
    };

    void check(Token t) const {
        if (t < 0 || t >= vocab_) throw std::invalid_argument("KgramModel: unknown token");
    }

    // Hash of the k-1 tokens preceding position `pos`, left-padded.
    std::uint64_t context_key(std::span<const Token> seq, std::size_t pos) const {
        std::uint64_t h = 0xCBF29CE484222325ULL;
        for (int back = order_ - 1; back >= 1; --back) {
            const auto idx = static_cast<std::ptrdiff_t>(pos) - back;
            const Token t = idx >= 0 ? seq[static_cast<std::size_t>(idx)] : Vocab::pad_id;
            h = fnv1a64(&t, sizeof(t), h);
        }
        return h;
    }

    int order_;
    double alpha_;
    int vocab_;
    std::unordered_map<std::uint64_t, Slot> counts_;
};

}  // namespace minadapt
