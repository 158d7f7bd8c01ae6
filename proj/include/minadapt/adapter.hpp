#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "minadapt/neural.hpp"
#include "minadapt/quantize.hpp"
#include "minadapt/rng.hpp"

namespace minadapt {

// Low-rank adapters over the model's weight matrices. The adapted forward
// pass uses W + A*B per targeted matrix; biases stay frozen. A starts as
// seeded small noise and B as zero, so an untrained adapter is an exact
// identity. Bit cost per entry is q * r * (d_in + d_out).

struct AdapterEntry {
    NeuralLm::MatrixId target;
    int rank{1};
    int qbits{16};
    int d_in{0}, d_out{0};
    std::vector<double> a;  // d_in x rank, row-major
    std::vector<double> b;  // rank x d_out, row-major

    std::uint64_t bit_size() const noexcept {
        return static_cast<std::uint64_t>(qbits) *
               (static_cast<std::uint64_t>(rank) * (static_cast<std::uint64_t>(d_in) + static_cast<std::uint64_t>(d_out)));
    }
};

struct AdapterSpec {
    std::vector<AdapterEntry> entries;

    std::uint64_t bit_size() const noexcept {
        std::uint64_t total = 0;
        for (const auto& e : entries) total += e.bit_size();
        return total;
    }
};

// Fresh adapter for the given targets: A ~ N(0, 0.01^2) seeded, B = 0.
inline AdapterSpec make_adapter(const NeuralLm& model, const std::vector<NeuralLm::MatrixId>& targets,
                                int rank, int qbits, std::uint64_t seed) {
    if (rank < 1) throw std::invalid_argument("make_adapter: rank must be >= 1");
    check_qbits(qbits);
    if (targets.empty()) throw std::invalid_argument("make_adapter: no target matrices");
    AdapterSpec spec;
    Rng rng(derive_seed(seed, "adapter-init"));
    for (const auto id : targets) {
        AdapterEntry e;
        e.target = id;
        e.rank = rank;
        e.qbits = qbits;
        const auto [din, dout] = model.matrix_shape(id);
        e.d_in = din;
        e.d_out = dout;
        e.a.resize(static_cast<std::size_t>(din) * static_cast<std::size_t>(rank));
        e.b.assign(static_cast<std::size_t>(rank) * static_cast<std::size_t>(dout), 0.0);
        for (auto& x : e.a) x = 0.01 * rng.normal();
        spec.entries.push_back(std::move(e));
    }
    return spec;
}

// Materializes the adapted model: W_eff = W + A*B on each targeted matrix.
// Both the builder and the replayer reconstruct through this same routine,
// which is what makes replayed scores bit-identical.
inline NeuralLm apply_adapter(NeuralLm model, const AdapterSpec& spec) {
    for (const auto& e : spec.entries) {
        auto& w = model.tensor(e.target);
        const auto [din, dout] = model.matrix_shape(e.target);
        if (din != e.d_in || dout != e.d_out)
            throw std::invalid_argument("apply_adapter: shape mismatch with base model");
        for (int i = 0; i < din; ++i) {
            for (int r = 0; r < e.rank; ++r) {
                const double air = e.a[static_cast<std::size_t>(i) * static_cast<std::size_t>(e.rank) +
                                       static_cast<std::size_t>(r)];
                if (air == 0.0) continue;
                const double* brow = &e.b[static_cast<std::size_t>(r) * static_cast<std::size_t>(dout)];
                double* wrow = &w[static_cast<std::size_t>(i) * static_cast<std::size_t>(dout)];
                for (int j = 0; j < dout; ++j) wrow[j] += air * brow[j];
            }
        }
    }
    return model;
}

// Trains A,B by gradient descent with the base model frozen, then snaps the
// factors onto the q-bit grid. Deterministic given the seed.
inline AdapterSpec train_adapter(const NeuralLm& base, AdapterSpec spec, const std::vector<Batch>& batches,
                                 double lr, int epochs) {
    if (epochs < 0) throw std::invalid_argument("train_adapter: negative epochs");
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (const auto& batch : batches) {
            const NeuralLm adapted = apply_adapter(base, spec);
            Gradients g(adapted);
            const double loss = loss_and_gradients(adapted, batch, g);
            if (!std::isfinite(loss)) throw std::runtime_error("train_adapter: divergent loss");
            for (auto& e : spec.entries) {
                const std::vector<double>* gw = nullptr;
                switch (e.target) {
                    case NeuralLm::MatrixId::embed: gw = &g.embed; break;
                    case NeuralLm::MatrixId::hidden: gw = &g.w1; break;
                    case NeuralLm::MatrixId::output: gw = &g.w2; break;
                }
                // dA = dW * B^T, dB = A^T * dW
                std::vector<double> da(e.a.size(), 0.0);
                std::vector<double> db(e.b.size(), 0.0);
                for (int i = 0; i < e.d_in; ++i) {
                    const double* gwrow = &(*gw)[static_cast<std::size_t>(i) * static_cast<std::size_t>(e.d_out)];
                    for (int r = 0; r < e.rank; ++r) {
                        const double air = e.a[static_cast<std::size_t>(i) * static_cast<std::size_t>(e.rank) +
                                               static_cast<std::size_t>(r)];
                        const double* brow = &e.b[static_cast<std::size_t>(r) * static_cast<std::size_t>(e.d_out)];
                        double acc = 0.0;
                        for (int j = 0; j < e.d_out; ++j) {
                            acc += gwrow[j] * brow[j];
                            db[static_cast<std::size_t>(r) * static_cast<std::size_t>(e.d_out) +
                               static_cast<std::size_t>(j)] += air * gwrow[j];
                        }
                        da[static_cast<std::size_t>(i) * static_cast<std::size_t>(e.rank) +
                           static_cast<std::size_t>(r)] += acc;
                    }
                }
                for (std::size_t i = 0; i < e.a.size(); ++i) e.a[i] -= lr * da[i];
                for (std::size_t i = 0; i < e.b.size(); ++i) e.b[i] -= lr * db[i];
            }
        }
    }
    for (auto& e : spec.entries) {
        quantize_values(e.a, e.qbits);
        quantize_values(e.b, e.qbits);
    }
    return spec;
}

// Rounds every model tensor to the symmetric q-bit grid (per tensor); q=16
// leaves the stored 16-bit values unchanged.
inline NeuralLm quantize_parameters(NeuralLm model, int q) {
    check_qbits(q);
    if (q == 16) {
        model.round_to_half();  // identity on an already-rounded model
        return model;
    }
    quantize_values(model.tensor(NeuralLm::MatrixId::embed), q);
    quantize_values(model.tensor(NeuralLm::MatrixId::hidden), q);
    quantize_values(model.bias1(), q);
    quantize_values(model.tensor(NeuralLm::MatrixId::output), q);
    quantize_values(model.bias2(), q);
    return model;
}

inline AdapterSpec quantize_parameters(AdapterSpec spec, int q) {
    check_qbits(q);
    for (auto& e : spec.entries) {
        e.qbits = q;
        quantize_values(e.a, q);
        quantize_values(e.b, q);
    }
    return spec;
}

}  // namespace minadapt
