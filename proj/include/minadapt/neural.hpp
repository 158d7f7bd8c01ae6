#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "minadapt/half.hpp"
#include "minadapt/model.hpp"
#include "minadapt/rng.hpp"
#include "minadapt/vocab.hpp"

namespace minadapt {

// Windowed two-layer language model: embedding -> tanh hidden -> softmax.
// Gradients are written out by hand, arithmetic runs in double with a fixed
// iteration order, and parameters live on the binary16 grid so that "16 bits
// per stored parameter" is literal. The pad row embeds to a fixed zero vector
// and eos never appears as an input, so neither owns trainable embedding
// rows.

struct NeuralConfig {
    int window{16};
    int d_embed{16};
    int d_hidden{64};
};

using Batch = std::vector<TokenSeq>;

class NeuralLm : public ProbModel {
public:
    NeuralLm() : NeuralLm(default_vocab(), NeuralConfig{}, 0) {}

    NeuralLm(Vocab vocab, NeuralConfig cfg, std::uint64_t seed)
        : vocab_(std::move(vocab)), cfg_(cfg) {
        const auto rows = static_cast<std::size_t>(embed_rows());
        embed_.assign(rows * static_cast<std::size_t>(cfg_.d_embed), 0.0);
        w1_.assign(static_cast<std::size_t>(input_dim()) * static_cast<std::size_t>(cfg_.d_hidden), 0.0);
        b1_.assign(static_cast<std::size_t>(cfg_.d_hidden), 0.0);
        w2_.assign(static_cast<std::size_t>(cfg_.d_hidden) * static_cast<std::size_t>(vocab_.size()), 0.0);
        b2_.assign(static_cast<std::size_t>(vocab_.size()), 0.0);
        init_params(seed);
    }

    const Vocab& vocab() const noexcept { return vocab_; }
    const NeuralConfig& config() const noexcept { return cfg_; }
    int vocab_size() const override { return vocab_.size(); }
    int embed_rows() const noexcept { return vocab_.size() - 2; }
    int input_dim() const noexcept { return cfg_.window * cfg_.d_embed; }

    // Tensor accessors; ids name the three adaptable weight matrices.
    enum class MatrixId : std::uint8_t { embed = 0, hidden = 1, output = 2 };

    std::vector<double>& tensor(MatrixId id) {
        switch (id) {
            case MatrixId::embed: return embed_;
            case MatrixId::hidden: return w1_;
            case MatrixId::output: return w2_;
        }
        throw std::logic_error("bad MatrixId");
    }
    const std::vector<double>& tensor(MatrixId id) const {
        return const_cast<NeuralLm*>(this)->tensor(id);
    }
    std::pair<int, int> matrix_shape(MatrixId id) const {
        switch (id) {
            case MatrixId::embed: return {embed_rows(), cfg_.d_embed};
            case MatrixId::hidden: return {input_dim(), cfg_.d_hidden};
            case MatrixId::output: return {cfg_.d_hidden, vocab_.size()};
        }
        throw std::logic_error("bad MatrixId");
    }

    std::vector<double>& bias1() noexcept { return b1_; }
    std::vector<double>& bias2() noexcept { return b2_; }
    const std::vector<double>& bias1() const noexcept { return b1_; }
    const std::vector<double>& bias2() const noexcept { return b2_; }

    std::size_t trainable_params() const noexcept {
        return embed_.size() + w1_.size() + b1_.size() + w2_.size() + b2_.size();
    }

    std::size_t head_params() const noexcept { return w2_.size() + b2_.size(); }

    // Logits for the next token after `context` (the last `window` tokens
    // condition the prediction; shorter contexts are left-padded).
    void logits_into(std::span<const Token> context, std::vector<double>& logits,
                     std::vector<double>& hidden_scratch) const {
        const int w = cfg_.window;
        const int de = cfg_.d_embed;
        const int dh = cfg_.d_hidden;
        const int v = vocab_.size();
        hidden_scratch.assign(static_cast<std::size_t>(dh), 0.0);
        for (int k = 0; k < dh; ++k) hidden_scratch[static_cast<std::size_t>(k)] = b1_[static_cast<std::size_t>(k)];
        for (int slot = 0; slot < w; ++slot) {
            const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(context.size()) - w + slot;
            const Token t = idx >= 0 ? context[static_cast<std::size_t>(idx)] : Vocab::pad_id;
            check_input(t);
            if (t == Vocab::pad_id) continue;  // zero embedding
            const double* e = &embed_[static_cast<std::size_t>(t - 2) * static_cast<std::size_t>(de)];
            const double* w1row = &w1_[static_cast<std::size_t>(slot * de) * static_cast<std::size_t>(dh)];
            for (int j = 0; j < de; ++j) {
                const double ej = e[j];
                if (ej == 0.0) continue;
                const double* wr = w1row + static_cast<std::size_t>(j) * static_cast<std::size_t>(dh);
                for (int k = 0; k < dh; ++k) hidden_scratch[static_cast<std::size_t>(k)] += ej * wr[k];
            }
        }
        for (int k = 0; k < dh; ++k)
            hidden_scratch[static_cast<std::size_t>(k)] = std::tanh(hidden_scratch[static_cast<std::size_t>(k)]);
        logits.assign(static_cast<std::size_t>(v), 0.0);
        for (int j = 0; j < v; ++j) logits[static_cast<std::size_t>(j)] = b2_[static_cast<std::size_t>(j)];
        for (int k = 0; k < dh; ++k) {
            const double hk = hidden_scratch[static_cast<std::size_t>(k)];
            if (hk == 0.0) continue;
            const double* wr = &w2_[static_cast<std::size_t>(k) * static_cast<std::size_t>(v)];
            for (int j = 0; j < v; ++j) logits[static_cast<std::size_t>(j)] += hk * wr[j];
        }
    }

    std::vector<double> next_distribution(std::span<const Token> context) const override {
        std::vector<double> logits, h;
        logits_into(context, logits, h);
        softmax_inplace(logits);
        return logits;
    }

    // Rounds every parameter onto the binary16 grid; training keeps this as
    // an invariant after each update.
    void round_to_half() {
        for (auto* t : {&embed_, &w1_, &b1_, &w2_, &b2_})
            for (auto& x : *t) x = half_round(x);
    }

    static void softmax_inplace(std::vector<double>& x) {
        double mx = x[0];
        for (double v : x) mx = v > mx ? v : mx;
        double sum = 0.0;
        for (auto& v : x) {
            v = std::exp(v - mx);
            sum += v;
        }
        for (auto& v : x) v /= sum;
    }

    bool operator==(const NeuralLm& o) const {
        return vocab_ == o.vocab_ && cfg_.window == o.cfg_.window && cfg_.d_embed == o.cfg_.d_embed &&
               cfg_.d_hidden == o.cfg_.d_hidden && embed_ == o.embed_ && w1_ == o.w1_ && b1_ == o.b1_ &&
               w2_ == o.w2_ && b2_ == o.b2_;
    }

private:
    void check_input(Token t) const {
        if (t == Vocab::eos_id)
            throw std::invalid_argument("NeuralLm: eos is a target-only symbol, not an input");
        if (t < 0 || t >= vocab_.size()) throw std::invalid_argument("NeuralLm: unknown token");
    }

    void init_params(std::uint64_t seed) {
        Rng rng(seed);
        const double e_scale = 0.3;
        const double w1_scale = 1.0 / std::sqrt(static_cast<double>(input_dim()));
        const double w2_scale = 1.0 / std::sqrt(static_cast<double>(cfg_.d_hidden));
        for (auto& x : embed_) x = half_round(e_scale * rng.normal());
        for (auto& x : w1_) x = half_round(w1_scale * rng.normal());
        for (auto& x : b1_) x = 0.0;
        for (auto& x : w2_) x = half_round(w2_scale * rng.normal());
        for (auto& x : b2_) x = 0.0;
    }

    Vocab vocab_;
    NeuralConfig cfg_;
    std::vector<double> embed_, w1_, b1_, w2_, b2_;
};

// Gradient accumulator with the same shapes as the model's tensors.
struct Gradients {
    std::vector<double> embed, w1, b1, w2, b2;

    explicit Gradients(const NeuralLm& m) { resize(m); }

    void resize(const NeuralLm& m) {
        embed.assign(m.tensor(NeuralLm::MatrixId::embed).size(), 0.0);
        w1.assign(m.tensor(NeuralLm::MatrixId::hidden).size(), 0.0);
        b1.assign(m.bias1().size(), 0.0);
        w2.assign(m.tensor(NeuralLm::MatrixId::output).size(), 0.0);
        b2.assign(m.bias2().size(), 0.0);
    }

    void zero() {
        for (auto* t : {&embed, &w1, &b1, &w2, &b2})
            for (auto& x : *t) x = 0.0;
    }
};

// Mean cross-entropy over every position of every sequence in the batch,
// with gradients accumulated into `g` (already divided by the position
// count). Targets include each sequence's tokens; contexts never contain eos.
inline double loss_and_gradients(const NeuralLm& m, const Batch& batch, Gradients& g) {
    if (batch.empty()) throw std::invalid_argument("loss_and_gradients: empty batch");
    const int w = m.config().window;
    const int de = m.config().d_embed;
    const int dh = m.config().d_hidden;
    const int v = m.vocab_size();
    const auto& w1 = m.tensor(NeuralLm::MatrixId::hidden);
    const auto& w2 = m.tensor(NeuralLm::MatrixId::output);
    const auto& embed = m.tensor(NeuralLm::MatrixId::embed);

    g.zero();
    std::vector<double> pre(static_cast<std::size_t>(dh));
    std::vector<double> h(static_cast<std::size_t>(dh));
    std::vector<double> probs(static_cast<std::size_t>(v));
    std::vector<double> dpre(static_cast<std::size_t>(dh));
    std::vector<Token> window(static_cast<std::size_t>(w));

    double total_ce = 0.0;
    std::size_t positions = 0;

    for (const auto& seq : batch) {
        for (std::size_t pos = 0; pos < seq.size(); ++pos) {
            const Token target = seq[pos];
            if (target < 0 || target >= v) throw std::invalid_argument("loss_and_gradients: unknown token");
            for (int slot = 0; slot < w; ++slot) {
                const std::ptrdiff_t idx = static_cast<std::ptrdiff_t>(pos) - w + slot;
                window[static_cast<std::size_t>(slot)] =
                    idx >= 0 ? seq[static_cast<std::size_t>(idx)] : Vocab::pad_id;
                if (window[static_cast<std::size_t>(slot)] == Vocab::eos_id)
                    throw std::invalid_argument("loss_and_gradients: eos inside a context window");
            }

            // forward
            for (int k = 0; k < dh; ++k) pre[static_cast<std::size_t>(k)] = m.bias1()[static_cast<std::size_t>(k)];
            for (int slot = 0; slot < w; ++slot) {
                const Token t = window[static_cast<std::size_t>(slot)];
                if (t == Vocab::pad_id) continue;
                const double* e = &embed[static_cast<std::size_t>(t - 2) * static_cast<std::size_t>(de)];
                for (int j = 0; j < de; ++j) {
                    const double ej = e[j];
                    const double* wr = &w1[(static_cast<std::size_t>(slot * de) + static_cast<std::size_t>(j)) *
                                           static_cast<std::size_t>(dh)];
                    for (int k = 0; k < dh; ++k) pre[static_cast<std::size_t>(k)] += ej * wr[k];
                }
            }
            for (int k = 0; k < dh; ++k) h[static_cast<std::size_t>(k)] = std::tanh(pre[static_cast<std::size_t>(k)]);
            for (int j = 0; j < v; ++j) probs[static_cast<std::size_t>(j)] = m.bias2()[static_cast<std::size_t>(j)];
            for (int k = 0; k < dh; ++k) {
                const double hk = h[static_cast<std::size_t>(k)];
                const double* wr = &w2[static_cast<std::size_t>(k) * static_cast<std::size_t>(v)];
                for (int j = 0; j < v; ++j) probs[static_cast<std::size_t>(j)] += hk * wr[j];
            }
            NeuralLm::softmax_inplace(probs);
            const double p_target = probs[static_cast<std::size_t>(target)];
            total_ce += -std::log(p_target);
            ++positions;

            // backward: dlogits = probs - onehot(target)
            probs[static_cast<std::size_t>(target)] -= 1.0;
            for (int j = 0; j < v; ++j) g.b2[static_cast<std::size_t>(j)] += probs[static_cast<std::size_t>(j)];
            for (int k = 0; k < dh; ++k) {
                const double hk = h[static_cast<std::size_t>(k)];
                double acc = 0.0;
                const double* wr = &w2[static_cast<std::size_t>(k) * static_cast<std::size_t>(v)];
                double* gr = &g.w2[static_cast<std::size_t>(k) * static_cast<std::size_t>(v)];
                for (int j = 0; j < v; ++j) {
                    gr[j] += hk * probs[static_cast<std::size_t>(j)];
                    acc += wr[j] * probs[static_cast<std::size_t>(j)];
                }
                dpre[static_cast<std::size_t>(k)] = acc * (1.0 - hk * hk);
            }
            for (int k = 0; k < dh; ++k) g.b1[static_cast<std::size_t>(k)] += dpre[static_cast<std::size_t>(k)];
            for (int slot = 0; slot < w; ++slot) {
                const Token t = window[static_cast<std::size_t>(slot)];
                if (t == Vocab::pad_id) continue;
                const double* e = &embed[static_cast<std::size_t>(t - 2) * static_cast<std::size_t>(de)];
                double* ge = &g.embed[static_cast<std::size_t>(t - 2) * static_cast<std::size_t>(de)];
                for (int j = 0; j < de; ++j) {
                    const std::size_t row = (static_cast<std::size_t>(slot * de) + static_cast<std::size_t>(j)) *
                                            static_cast<std::size_t>(dh);
                    const double* wr = &w1[row];
                    double* gr = &g.w1[row];
                    const double ej = e[j];
                    double dx = 0.0;
                    for (int k = 0; k < dh; ++k) {
                        gr[k] += ej * dpre[static_cast<std::size_t>(k)];
                        dx += wr[k] * dpre[static_cast<std::size_t>(k)];
                    }
                    ge[j] += dx;
                }
            }
        }
    }

    if (positions == 0) throw std::invalid_argument("loss_and_gradients: batch has no positions");
    const double inv = 1.0 / static_cast<double>(positions);
    for (auto* t : {&g.embed, &g.w1, &g.b1, &g.w2, &g.b2})
        for (auto& x : *t) x *= inv;
    const double loss = total_ce * inv;
    if (!std::isfinite(loss)) throw std::runtime_error("loss_and_gradients: non-finite loss");
    return loss;
}

inline double batch_loss(const NeuralLm& m, const Batch& batch) {
    Gradients g(m);  // simple path; training uses the fused version
    return loss_and_gradients(m, batch, g);
}

// One full-batch gradient step on mean cross-entropy. Deterministic given
// (model, batch order, lr); returns the updated model with every parameter
// re-rounded to the 16-bit grid.
inline NeuralLm train_step(NeuralLm model, const Batch& batch, double lr) {
    Gradients g(model);
    const double loss = loss_and_gradients(model, batch, g);
    if (!std::isfinite(loss)) throw std::runtime_error("train_step: divergent loss");
    auto upd = [lr](std::vector<double>& p, const std::vector<double>& gr) {
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = half_round(p[i] - lr * gr[i]);
    };
    upd(model.tensor(NeuralLm::MatrixId::embed), g.embed);
    upd(model.tensor(NeuralLm::MatrixId::hidden), g.w1);
    upd(model.bias1(), g.b1);
    upd(model.tensor(NeuralLm::MatrixId::output), g.w2);
    upd(model.bias2(), g.b2);
    return model;
}

}  // namespace minadapt
