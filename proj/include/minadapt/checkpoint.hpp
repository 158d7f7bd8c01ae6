#pragma once

#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "minadapt/bytes.hpp"
#include "minadapt/half.hpp"
#include "minadapt/neural.hpp"
#include "minadapt/rng.hpp"

namespace minadapt {

// Checkpoint file: magic, architecture, vocabulary listing, raw 16-bit
// little-endian parameter payload, provenance tag, seed-lineage records.
// Every field is written byte-by-byte, so files are bit-exact across
// platforms and safe to hash.

struct SeedRecord {
    std::string op;
    std::uint64_t seed{0};

    bool operator==(const SeedRecord&) const = default;
};

struct Checkpoint {
    NeuralLm model;
    std::string provenance;  // "random-init" | "pretrained" | "posttrained"
    std::vector<SeedRecord> lineage;
};

namespace ckfmt {

inline constexpr char kMagic[8] = {'M', 'N', 'A', 'D', 'C', 'K', '0', '1'};

inline void put_tensor(std::vector<std::uint8_t>& out, const std::vector<double>& t) {
    bytes::put_u64(out, t.size());
    for (double v : t) bytes::put_u16(out, float_to_half(static_cast<float>(v)));
}

inline void get_tensor(bytes::Cursor& c, std::vector<double>& t) {
    const std::uint64_t n = c.u64();
    if (n != t.size()) throw std::runtime_error("checkpoint: tensor shape mismatch");
    for (auto& v : t) v = static_cast<double>(half_to_float(c.u16()));
}

}  // namespace ckfmt

inline std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ck) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), std::begin(ckfmt::kMagic), std::end(ckfmt::kMagic));
    const auto& m = ck.model;
    bytes::put_str(out, m.vocab().chars());
    bytes::put_u32(out, static_cast<std::uint32_t>(m.config().window));
    bytes::put_u32(out, static_cast<std::uint32_t>(m.config().d_embed));
    bytes::put_u32(out, static_cast<std::uint32_t>(m.config().d_hidden));
    ckfmt::put_tensor(out, m.tensor(NeuralLm::MatrixId::embed));
    ckfmt::put_tensor(out, m.tensor(NeuralLm::MatrixId::hidden));
    ckfmt::put_tensor(out, m.bias1());
    ckfmt::put_tensor(out, m.tensor(NeuralLm::MatrixId::output));
    ckfmt::put_tensor(out, m.bias2());
    bytes::put_str(out, ck.provenance);
    bytes::put_u32(out, static_cast<std::uint32_t>(ck.lineage.size()));
    for (const auto& rec : ck.lineage) {
        bytes::put_str(out, rec.op);
        bytes::put_u64(out, rec.seed);
    }
    return out;
}

inline Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& buf) {
    bytes::Cursor c{&buf};
    c.need(8);
    for (char ch : ckfmt::kMagic)
        if (static_cast<char>(c.u8()) != ch) throw std::runtime_error("checkpoint: bad magic");
    const std::string chars = c.str();
    NeuralConfig cfg;
    cfg.window = static_cast<int>(c.u32());
    cfg.d_embed = static_cast<int>(c.u32());
    cfg.d_hidden = static_cast<int>(c.u32());
    Checkpoint ck{NeuralLm(Vocab(chars), cfg, 0), "", {}};
    ckfmt::get_tensor(c, ck.model.tensor(NeuralLm::MatrixId::embed));
    ckfmt::get_tensor(c, ck.model.tensor(NeuralLm::MatrixId::hidden));
    ckfmt::get_tensor(c, ck.model.bias1());
    ckfmt::get_tensor(c, ck.model.tensor(NeuralLm::MatrixId::output));
    ckfmt::get_tensor(c, ck.model.bias2());
    ck.provenance = c.str();
    const std::uint32_t n = c.u32();
    for (std::uint32_t i = 0; i < n; ++i) {
        SeedRecord rec;
        rec.op = c.str();
        rec.seed = c.u64();
        ck.lineage.push_back(std::move(rec));
    }
    return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::string& path) {
    const auto buf = serialize_checkpoint(ck);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint file for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint file: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(buf);
}

inline std::uint64_t checkpoint_hash(const Checkpoint& ck) {
    const auto buf = serialize_checkpoint(ck);
    return fnv1a64(buf.data(), buf.size());
}

// ---------------------------------------------------------------------------

struct LrSchedule {
    double start{0.1};
    double end{0.01};

    double at(int step, int total) const noexcept {
        if (total <= 1) return start;
        const double f = static_cast<double>(step) / static_cast<double>(total - 1);
        return start + f * (end - start);
    }
};

// Language-model pretraining over a token stream: each step samples a batch
// of fixed-length chunks at seeded offsets and applies one full-batch step.
// Deterministic given the seed; loss must improve over the run.
inline Checkpoint pretrain(NeuralLm model, std::span<const Token> corpus, int steps,
                           LrSchedule schedule, std::uint64_t seed, int batch_size = 16) {
    if (steps < 0) throw std::invalid_argument("pretrain: negative steps");
    Checkpoint ck{std::move(model), "pretrained", {{"pretrain", seed}}};
    if (steps == 0) return ck;
    const int chunk = ck.model.config().window + 1;
    if (corpus.size() < static_cast<std::size_t>(chunk))
        throw std::invalid_argument("pretrain: corpus shorter than one window");
    const std::size_t max_start = corpus.size() - static_cast<std::size_t>(chunk);

    double first_loss = 0.0, last_loss = 0.0;
    Batch batch(static_cast<std::size_t>(batch_size));
    for (int step = 0; step < steps; ++step) {
        Rng rng(derive_seed(seed, "pretrain-batch", static_cast<std::uint64_t>(step)));
        for (auto& seq : batch) {
            const auto start = static_cast<std::size_t>(rng.uniform_below(max_start + 1));
            seq.assign(corpus.begin() + static_cast<std::ptrdiff_t>(start),
                       corpus.begin() + static_cast<std::ptrdiff_t>(start + static_cast<std::size_t>(chunk)));
        }
        Gradients g(ck.model);
        const double loss = loss_and_gradients(ck.model, batch, g);
        if (!std::isfinite(loss)) throw std::runtime_error("pretrain: divergent loss");
        if (step == 0) first_loss = loss;
        last_loss = loss;
        const double lr = schedule.at(step, steps);
        auto upd = [lr](std::vector<double>& p, const std::vector<double>& gr) {
            for (std::size_t i = 0; i < p.size(); ++i) p[i] = half_round(p[i] - lr * gr[i]);
        };
        upd(ck.model.tensor(NeuralLm::MatrixId::embed), g.embed);
        upd(ck.model.tensor(NeuralLm::MatrixId::hidden), g.w1);
        upd(ck.model.bias1(), g.b1);
        upd(ck.model.tensor(NeuralLm::MatrixId::output), g.w2);
        upd(ck.model.bias2(), g.b2);
    }
    if (steps > 10 && last_loss >= first_loss)
        throw std::runtime_error("pretrain: loss did not improve");
    return ck;
}

}  // namespace minadapt
