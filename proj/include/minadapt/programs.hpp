#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "minadapt/adapter.hpp"
#include "minadapt/bytes.hpp"
#include "minadapt/checkpoint.hpp"
#include "minadapt/codec.hpp"
#include "minadapt/frontier.hpp"
#include "minadapt/neural.hpp"
#include "minadapt/quantize.hpp"
#include "minadapt/replay_scripts.hpp"
#include "minadapt/tasks.hpp"

namespace minadapt {

// Adaptation programs: each strategy builds a self-contained, replayable
// descriptor whose payload (compressed data and/or quantized parameters)
// plus measured script overhead realizes the program's bit length. Replay
// consumes only the base checkpoint and the descriptor; builder-side and
// replayed models are bit-identical by construction and verified by hash.

enum class Strategy : std::uint8_t {
    base,
    icl,
    urial,
    subset_training,
    full_dataset,
    adapter,
    blora_grid,
    full_model,
    head_only,
    alpha_reweight,
};

inline const char* strategy_name(Strategy s) {
    switch (s) {
        case Strategy::base: return "base";
        case Strategy::icl: return "icl";
        case Strategy::urial: return "urial";
        case Strategy::subset_training: return "subset_training";
        case Strategy::full_dataset: return "full_dataset";
        case Strategy::adapter: return "adapter";
        case Strategy::blora_grid: return "blora_grid";
        case Strategy::full_model: return "full_model";
        case Strategy::head_only: return "head_only";
        case Strategy::alpha_reweight: return "alpha_reweight";
    }
    throw std::logic_error("bad strategy");
}

inline Strategy strategy_from_name(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(Strategy::alpha_reweight); ++i)
        if (name == strategy_name(static_cast<Strategy>(i))) return static_cast<Strategy>(i);
    throw std::invalid_argument("unknown strategy '" + name + "'");
}

// One encoded token block: per-example token counts plus the coded bits.
// The NLL estimate is recorded alongside the exact coded length.
struct DataSection {
    std::vector<std::uint32_t> example_lens;
    BitString code;
    double nll_bits{0.0};

    std::size_t token_count() const noexcept {
        std::size_t n = 0;
        for (auto len : example_lens) n += len;
        return n;
    }
};

// One quantized value block (adapter factor, model tensor, or alpha vector).
// Only the packed values count toward payload bits; framing is script logic.
struct ParamSection {
    std::string tag;  // e.g. "A:output", "B:output", "model:w2", "alpha"
    std::uint32_t rows{0}, cols{0};
    std::uint8_t qbits{16};
    std::uint16_t scale_half{0};
    std::uint64_t count{0};
    std::vector<std::uint8_t> data;

    std::uint64_t value_bits() const noexcept { return count * qbits; }
};

struct LengthAccount {
    std::uint64_t script_bits{0};
    std::uint64_t payload_data_bits_exact{0};
    double payload_data_bits_nll{0.0};
    std::uint64_t payload_param_bits{0};

    // kappa: exact coded route (the default) and the NLL-estimate route.
    double total_bits() const noexcept {
        return static_cast<double>(script_bits) + static_cast<double>(payload_data_bits_exact) +
               static_cast<double>(payload_param_bits);
    }
    double total_bits_nll_route() const noexcept {
        return static_cast<double>(script_bits) + payload_data_bits_nll +
               static_cast<double>(payload_param_bits);
    }
    double payload_bits() const noexcept {
        return static_cast<double>(payload_data_bits_exact) + static_cast<double>(payload_param_bits);
    }

    void validate() const {
        if (payload_data_bits_nll < 0.0 || !std::isfinite(payload_data_bits_nll))
            throw std::runtime_error("LengthAccount: bad NLL estimate");
        // exact coded length dominates the estimate (up to fp rounding)
        if (static_cast<double>(payload_data_bits_exact) + 1e-6 < payload_data_bits_nll &&
            payload_data_bits_exact != 0)
            throw std::runtime_error("LengthAccount: coded length below NLL estimate");
    }
};

struct ProgramDescriptor {
    Strategy strategy{Strategy::base};
    std::uint64_t base_checkpoint_hash{0};
    int precision{kDefaultPrecision};
    std::uint64_t seed{0};
    std::map<std::string, std::string> hyperparameters;
    std::vector<DataSection> data_sections;
    std::vector<ParamSection> param_sections;
    LengthAccount account;

    std::string hyperparams_summary() const {
        std::string out;
        for (const auto& [k, v] : hyperparameters) {
            if (!out.empty()) out += ";";
            out += k + "=" + v;
        }
        return out;
    }
};

// -- script manifest ----------------------------------------------------------

// Per-strategy replay-script sizes measured from the canonical sources.
class ScriptManifest {
public:
    static const ScriptManifest& measured() {
        static const ScriptManifest m = [] {
            ScriptManifest out;
            out.bits_[Strategy::base] = 8 * replay_scripts::base.size();
            out.bits_[Strategy::icl] = 8 * replay_scripts::icl.size();
            out.bits_[Strategy::urial] = 8 * replay_scripts::urial.size();
            out.bits_[Strategy::subset_training] = 8 * replay_scripts::subset_training.size();
            out.bits_[Strategy::full_dataset] = 8 * replay_scripts::subset_training.size();
            out.bits_[Strategy::adapter] = 8 * replay_scripts::adapter.size();
            out.bits_[Strategy::blora_grid] = 8 * replay_scripts::adapter.size();
            out.bits_[Strategy::full_model] = 8 * replay_scripts::full_model.size();
            out.bits_[Strategy::head_only] = 8 * replay_scripts::head_only.size();
            out.bits_[Strategy::alpha_reweight] = 8 * replay_scripts::alpha_reweight.size();
            return out;
        }();
        return m;
    }

    std::uint64_t script_bits(Strategy s) const {
        const auto it = bits_.find(s);
        if (it == bits_.end())
            throw std::runtime_error(std::string("ScriptManifest: no entry for strategy ") +
                                     strategy_name(s));
        return it->second;
    }

    std::map<Strategy, std::uint64_t> bits_;
};

// Recomputes the account from the payload sections and the manifest; the NLL
// component is the builder-recorded estimate carried by the data sections.
inline LengthAccount total_length(const ProgramDescriptor& d,
                                  const ScriptManifest& manifest = ScriptManifest::measured()) {
    LengthAccount acc;
    acc.script_bits = manifest.script_bits(d.strategy);
    for (const auto& sec : d.data_sections) {
        acc.payload_data_bits_exact += sec.code.size();
        acc.payload_data_bits_nll += sec.nll_bits;
    }
    for (const auto& sec : d.param_sections) acc.payload_param_bits += sec.value_bits();
    acc.validate();
    return acc;
}

// -- payload section helpers --------------------------------------------------

inline ParamSection section_from_values(const std::string& tag, const std::vector<double>& values,
                                        int rows, int cols, int qbits) {
    const QuantizedTensor qt = quantize_tensor(values, qbits);
    ParamSection sec;
    sec.tag = tag;
    sec.rows = static_cast<std::uint32_t>(rows);
    sec.cols = static_cast<std::uint32_t>(cols);
    sec.qbits = static_cast<std::uint8_t>(qbits);
    sec.count = values.size();
    if (qbits == 16) {
        sec.data.reserve(values.size() * 2);
        for (const std::uint16_t h : qt.raw_half) {
            sec.data.push_back(static_cast<std::uint8_t>(h & 0xFF));
            sec.data.push_back(static_cast<std::uint8_t>(h >> 8));
        }
    } else {
        sec.scale_half = float_to_half(static_cast<float>(qt.scale));
        sec.data = pack_indices(qt.indices, qbits);
    }
    return sec;
}

inline std::vector<double> section_values(const ParamSection& sec) {
    if (sec.qbits == 16) {
        if (sec.data.size() < sec.count * 2) throw std::runtime_error("ParamSection: truncated halfs");
        std::vector<double> out(sec.count);
        for (std::size_t i = 0; i < sec.count; ++i) {
            const std::uint16_t h = static_cast<std::uint16_t>(sec.data[2 * i] |
                                                               (static_cast<std::uint16_t>(sec.data[2 * i + 1]) << 8));
            out[i] = static_cast<double>(half_to_float(h));
        }
        return out;
    }
    QuantizedTensor qt;
    qt.qbits = sec.qbits;
    qt.scale = static_cast<double>(half_to_float(sec.scale_half));
    qt.count = sec.count;
    qt.indices = unpack_indices(sec.data, sec.count, sec.qbits);
    return qt.reconstruct();
}

inline const char* matrix_tag(NeuralLm::MatrixId id) {
    switch (id) {
        case NeuralLm::MatrixId::embed: return "embed";
        case NeuralLm::MatrixId::hidden: return "hidden";
        case NeuralLm::MatrixId::output: return "output";
    }
    throw std::logic_error("bad MatrixId");
}

inline NeuralLm::MatrixId matrix_from_tag(const std::string& tag) {
    if (tag == "embed") return NeuralLm::MatrixId::embed;
    if (tag == "hidden") return NeuralLm::MatrixId::hidden;
    if (tag == "output") return NeuralLm::MatrixId::output;
    throw std::runtime_error("unknown matrix tag '" + tag + "'");
}

inline std::vector<ParamSection> adapter_to_sections(const AdapterSpec& spec) {
    std::vector<ParamSection> out;
    for (const auto& e : spec.entries) {
        const std::string suffix = matrix_tag(e.target);
        out.push_back(section_from_values("A:" + suffix, e.a, e.d_in, e.rank, e.qbits));
        out.push_back(section_from_values("B:" + suffix, e.b, e.rank, e.d_out, e.qbits));
    }
    return out;
}

inline AdapterSpec adapter_from_sections(const NeuralLm& model,
                                         const std::vector<ParamSection>& sections) {
    AdapterSpec spec;
    for (std::size_t i = 0; i + 1 < sections.size(); i += 2) {
        const auto& sa = sections[i];
        const auto& sb = sections[i + 1];
        if (sa.tag.rfind("A:", 0) != 0 || sb.tag.rfind("B:", 0) != 0)
            throw std::runtime_error("adapter_from_sections: unexpected section tags");
        AdapterEntry e;
        e.target = matrix_from_tag(sa.tag.substr(2));
        e.rank = static_cast<int>(sa.cols);
        e.qbits = sa.qbits;
        const auto [din, dout] = model.matrix_shape(e.target);
        e.d_in = din;
        e.d_out = dout;
        if (static_cast<int>(sa.rows) != din || static_cast<int>(sb.cols) != dout ||
            sb.rows != sa.cols)
            throw std::runtime_error("adapter_from_sections: shape mismatch");
        e.a = section_values(sa);
        e.b = section_values(sb);
        spec.entries.push_back(std::move(e));
    }
    return spec;
}

// Model tensors (full or head-only snapshots) as 16-bit sections.
inline std::vector<ParamSection> model_to_sections(const NeuralLm& m, bool head_only_snapshot) {
    std::vector<ParamSection> out;
    if (!head_only_snapshot) {
        const auto [er, ec] = m.matrix_shape(NeuralLm::MatrixId::embed);
        out.push_back(section_from_values("model:embed", m.tensor(NeuralLm::MatrixId::embed), er, ec, 16));
        const auto [hr, hc] = m.matrix_shape(NeuralLm::MatrixId::hidden);
        out.push_back(section_from_values("model:hidden", m.tensor(NeuralLm::MatrixId::hidden), hr, hc, 16));
        out.push_back(section_from_values("model:b1", m.bias1(), 1, static_cast<int>(m.bias1().size()), 16));
    }
    const auto [orr, oc] = m.matrix_shape(NeuralLm::MatrixId::output);
    out.push_back(section_from_values("model:output", m.tensor(NeuralLm::MatrixId::output), orr, oc, 16));
    out.push_back(section_from_values("model:b2", m.bias2(), 1, static_cast<int>(m.bias2().size()), 16));
    return out;
}

inline void load_model_sections(NeuralLm& m, const std::vector<ParamSection>& sections) {
    for (const auto& sec : sections) {
        std::vector<double>* target = nullptr;
        if (sec.tag == "model:embed") target = &m.tensor(NeuralLm::MatrixId::embed);
        else if (sec.tag == "model:hidden") target = &m.tensor(NeuralLm::MatrixId::hidden);
        else if (sec.tag == "model:b1") target = &m.bias1();
        else if (sec.tag == "model:output") target = &m.tensor(NeuralLm::MatrixId::output);
        else if (sec.tag == "model:b2") target = &m.bias2();
        else throw std::runtime_error("load_model_sections: unknown tag '" + sec.tag + "'");
        if (sec.count != target->size()) throw std::runtime_error("load_model_sections: size mismatch");
        *target = section_values(sec);
    }
}

// -- weight deltas (alpha reweighting) ----------------------------------------

// Per-batch weight update, grouped as three adapted units: embedding, hidden
// layer (weights+bias) and output layer (weights+bias).
struct WeightDelta {
    std::vector<double> embed, w1, b1, w2, b2;
};

inline constexpr int kDeltaGroups = 3;

inline WeightDelta weight_delta(const NeuralLm& before, const NeuralLm& after) {
    auto diff = [](const std::vector<double>& a, const std::vector<double>& b) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < a.size(); ++i) out[i] = b[i] - a[i];
        return out;
    };
    WeightDelta d;
    d.embed = diff(before.tensor(NeuralLm::MatrixId::embed), after.tensor(NeuralLm::MatrixId::embed));
    d.w1 = diff(before.tensor(NeuralLm::MatrixId::hidden), after.tensor(NeuralLm::MatrixId::hidden));
    d.b1 = diff(before.bias1(), after.bias1());
    d.w2 = diff(before.tensor(NeuralLm::MatrixId::output), after.tensor(NeuralLm::MatrixId::output));
    d.b2 = diff(before.bias2(), after.bias2());
    return d;
}

// base + sum_i alpha[i*3+k] * delta_i^k, with group k scaling its tensors.
inline NeuralLm apply_weight_deltas(NeuralLm model, const std::vector<WeightDelta>& deltas,
                                    const std::vector<double>& alphas) {
    if (alphas.size() != deltas.size() * kDeltaGroups)
        throw std::invalid_argument("apply_weight_deltas: alpha count mismatch");
    auto axpy = [](std::vector<double>& dst, const std::vector<double>& src, double a) {
        for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += a * src[i];
    };
    for (std::size_t i = 0; i < deltas.size(); ++i) {
        const double a_embed = alphas[i * kDeltaGroups + 0];
        const double a_hidden = alphas[i * kDeltaGroups + 1];
        const double a_output = alphas[i * kDeltaGroups + 2];
        axpy(model.tensor(NeuralLm::MatrixId::embed), deltas[i].embed, a_embed);
        axpy(model.tensor(NeuralLm::MatrixId::hidden), deltas[i].w1, a_hidden);
        axpy(model.bias1(), deltas[i].b1, a_hidden);
        axpy(model.tensor(NeuralLm::MatrixId::output), deltas[i].w2, a_output);
        axpy(model.bias2(), deltas[i].b2, a_output);
    }
    return model;
}

inline std::vector<double> alphas_from_section(const ParamSection& sec) {
    if (sec.tag != "alpha") throw std::runtime_error("alphas_from_section: wrong tag");
    return section_values(sec);
}

// -- shared builder plumbing ----------------------------------------------------

inline std::uint64_t model_param_hash(const NeuralLm& m) {
    std::vector<std::uint8_t> buf;
    for (const auto* t : {&m.tensor(NeuralLm::MatrixId::embed), &m.tensor(NeuralLm::MatrixId::hidden),
                          &m.bias1(), &m.tensor(NeuralLm::MatrixId::output), &m.bias2()})
        for (const double v : *t) bytes::put_u16(buf, float_to_half(static_cast<float>(v)));
    return fnv1a64(buf.data(), buf.size());
}

inline std::string format_example(const TaskSpec& task, const Example& ex) {
    return task.apply_template(ex.input) + ex.reference;
}

// Training view of a slice of examples: formatted text plus eos terminator.
inline Batch training_batch(const TaskSpec& task, const Vocab& vocab,
                            std::span<const Example> examples) {
    Batch batch;
    batch.reserve(examples.size());
    for (const auto& ex : examples) {
        TokenSeq seq = vocab.encode(format_example(task, ex));
        seq.push_back(Vocab::eos_id);
        batch.push_back(std::move(seq));
    }
    return batch;
}

inline std::vector<Batch> make_batches(const TaskSpec& task, const Vocab& vocab,
                                       const Dataset& data, int batch_size) {
    if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
    std::vector<Batch> out;
    for (std::size_t at = 0; at < data.examples.size(); at += static_cast<std::size_t>(batch_size)) {
        const std::size_t end = std::min(at + static_cast<std::size_t>(batch_size), data.examples.size());
        out.push_back(training_batch(task, vocab,
                                     std::span<const Example>(data.examples.data() + at, end - at)));
    }
    return out;
}

// Encodes a slice of formatted examples as one coder stream under the given
// model state, recording per-example token counts and the NLL estimate.
inline DataSection encode_examples(const ProbModel& model, const TaskSpec& task, const Vocab& vocab,
                                   std::span<const Example> examples, int precision) {
    DataSection sec;
    TokenSeq all;
    for (const auto& ex : examples) {
        const TokenSeq tokens = vocab.encode(format_example(task, ex));
        sec.example_lens.push_back(static_cast<std::uint32_t>(tokens.size()));
        all.insert(all.end(), tokens.begin(), tokens.end());
    }
    const auto [code, nll] = encode_with_nll(model, {}, all, precision);
    sec.code = code;
    sec.nll_bits = nll;
    return sec;
}

struct ReplayedProgram {
    NeuralLm model;
    std::string prompt_prefix;
};

struct BuildResult {
    ProgramDescriptor descriptor;
    ReplayedProgram builder_view;  // the adapted model as the builder produced it
};

struct TrainOpts {
    double lr{0.1};
    int epochs{1};
    int batch_size{16};
};

namespace build_detail {

inline ProgramDescriptor init_descriptor(Strategy s, const Checkpoint& ck, int precision,
                                         std::uint64_t seed) {
    ProgramDescriptor d;
    d.strategy = s;
    d.base_checkpoint_hash = checkpoint_hash(ck);
    d.precision = precision;
    d.seed = seed;
    return d;
}

inline void set_train_opts(ProgramDescriptor& d, const TrainOpts& opts) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", opts.lr);
    d.hyperparameters["lr"] = buf;
    d.hyperparameters["epochs"] = std::to_string(opts.epochs);
    d.hyperparameters["batch_size"] = std::to_string(opts.batch_size);
}

inline TrainOpts get_train_opts(const ProgramDescriptor& d) {
    TrainOpts opts;
    opts.lr = std::stod(d.hyperparameters.at("lr"));
    opts.epochs = std::stoi(d.hyperparameters.at("epochs"));
    opts.batch_size = std::stoi(d.hyperparameters.at("batch_size"));
    return opts;
}

}  // namespace build_detail

// -- builders -------------------------------------------------------------------

inline BuildResult build_base(const Checkpoint& ck) {
    ProgramDescriptor d = build_detail::init_descriptor(Strategy::base, ck, kDefaultPrecision, 0);
    d.account = total_length(d);
    return {std::move(d), {ck.model, ""}};
}

inline std::string icl_prompt_text(const TaskSpec& task, const Dataset& examples) {
    std::string prompt;
    for (const auto& ex : examples.examples) prompt += format_example(task, ex) + " ";
    return prompt;
}

namespace build_detail {

inline BuildResult build_prompt_program(Strategy strategy, const Checkpoint& ck, const TaskSpec& task,
                                        const std::string& prompt_text, int precision,
                                        std::map<std::string, std::string> extra_hp) {
    const Vocab& vocab = ck.model.vocab();
    const TokenSeq tokens = vocab.encode(prompt_text);
    if (static_cast<int>(tokens.size()) > ck.model.config().window)
        throw std::invalid_argument("prompt exceeds model context window");
    ProgramDescriptor d = init_descriptor(strategy, ck, precision, 0);
    d.hyperparameters = std::move(extra_hp);
    DataSection sec;
    sec.example_lens.push_back(static_cast<std::uint32_t>(tokens.size()));
    const auto [code, nll] = encode_with_nll(ck.model, {}, tokens, precision);
    sec.code = code;
    sec.nll_bits = nll;
    d.data_sections.push_back(std::move(sec));
    d.account = total_length(d);
    return {std::move(d), {ck.model, prompt_text}};
}

}  // namespace build_detail

inline BuildResult build_icl(const Checkpoint& ck, const TaskSpec& task, const Dataset& examples,
                             int precision = kDefaultPrecision) {
    if (examples.examples.empty()) throw std::invalid_argument("build_icl: examples must be nonempty");
    const std::string prompt = icl_prompt_text(task, examples);
    return build_detail::build_prompt_program(
        Strategy::icl, ck, task, prompt, precision,
        {{"n_examples", std::to_string(examples.examples.size())}});
}

inline BuildResult build_urial(const Checkpoint& ck, const TaskSpec& task, const std::string& explanation,
                               const Dataset& examples, int precision = kDefaultPrecision) {
    if (examples.examples.empty()) throw std::invalid_argument("build_urial: examples must be nonempty");
    const std::string prompt = explanation + icl_prompt_text(task, examples);
    return build_detail::build_prompt_program(
        Strategy::urial, ck, task, prompt, precision,
        {{"n_examples", std::to_string(examples.examples.size())},
         {"explanation_chars", std::to_string(explanation.size())}});
}

// Fig-2a-style data program: each batch is compressed under the current
// model state, appended to the payload, then trained on; replay walks the
// same sections with the evolving model. Multiple epochs re-encode the data
// under the later (cheaper) states.
inline BuildResult build_subset_training(const Checkpoint& ck, const TaskSpec& task, const Dataset& subset,
                                         const TrainOpts& opts, int precision = kDefaultPrecision,
                                         std::uint64_t seed = 0,
                                         Strategy strategy = Strategy::subset_training) {
    if (subset.examples.empty())
        throw std::invalid_argument("build_subset_training: subset must be nonempty");
    const Vocab& vocab = ck.model.vocab();
    ProgramDescriptor d = build_detail::init_descriptor(strategy, ck, precision, seed);
    build_detail::set_train_opts(d, opts);
    d.hyperparameters["n_examples"] = std::to_string(subset.examples.size());

    NeuralLm model = ck.model;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t at = 0; at < subset.examples.size();
             at += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t end =
                std::min(at + static_cast<std::size_t>(opts.batch_size), subset.examples.size());
            const std::span<const Example> slice(subset.examples.data() + at, end - at);
            d.data_sections.push_back(encode_examples(model, task, vocab, slice, precision));
            model = train_step(model, training_batch(task, vocab, slice), opts.lr);
        }
    }
    d.hyperparameters["final_params_fnv"] = std::to_string(model_param_hash(model));
    d.account = total_length(d);
    return {std::move(d), {std::move(model), ""}};
}

inline BuildResult build_full_dataset(const Checkpoint& ck, const TaskSpec& task, const Dataset& data,
                                      const TrainOpts& opts, int precision = kDefaultPrecision,
                                      std::uint64_t seed = 0) {
    return build_subset_training(ck, task, data, opts, precision, seed, Strategy::full_dataset);
}

inline BuildResult build_adapter(const Checkpoint& ck, const TaskSpec& task, const Dataset& data,
                                 int rank, int qbits, const TrainOpts& opts, std::uint64_t seed,
                                 std::vector<NeuralLm::MatrixId> targets = {NeuralLm::MatrixId::embed,
                                                                            NeuralLm::MatrixId::hidden,
                                                                            NeuralLm::MatrixId::output},
                                 Strategy strategy = Strategy::adapter) {
    const Vocab& vocab = ck.model.vocab();
    AdapterSpec spec = make_adapter(ck.model, targets, rank, qbits, seed);
    const auto batches = make_batches(task, vocab, data, opts.batch_size);
    spec = train_adapter(ck.model, std::move(spec), batches, opts.lr, opts.epochs);

    ProgramDescriptor d = build_detail::init_descriptor(strategy, ck, kDefaultPrecision, seed);
    build_detail::set_train_opts(d, opts);
    d.hyperparameters["rank"] = std::to_string(rank);
    d.hyperparameters["qbits"] = std::to_string(qbits);
    d.hyperparameters["n_examples"] = std::to_string(data.examples.size());
    d.param_sections = adapter_to_sections(spec);
    d.account = total_length(d);
    if (d.account.payload_param_bits != spec.bit_size())
        throw std::logic_error("build_adapter: accounting mismatch against the closed form");
    return {std::move(d), {apply_adapter(ck.model, spec), ""}};
}

// One adapter program per grid cell; frontier selection happens downstream.
inline std::vector<BuildResult> build_blora_grid(const Checkpoint& ck, const TaskSpec& task,
                                                 const Dataset& data,
                                                 const std::vector<std::pair<int, int>>& grid,
                                                 const TrainOpts& opts, std::uint64_t seed) {
    if (grid.empty()) throw std::invalid_argument("build_blora_grid: empty grid");
    std::vector<BuildResult> out;
    for (const auto& [rank, qbits] : grid)
        out.push_back(build_adapter(ck, task, data, rank, qbits, opts,
                                    derive_seed(seed, "blora-cell", static_cast<std::uint64_t>(rank * 100 + qbits)),
                                    {NeuralLm::MatrixId::embed, NeuralLm::MatrixId::hidden,
                                     NeuralLm::MatrixId::output},
                                    Strategy::blora_grid));
    return out;
}

inline BuildResult build_full_model(const Checkpoint& ck, const TaskSpec& task, const Dataset& data,
                                    const TrainOpts& opts, std::uint64_t seed = 0) {
    const Vocab& vocab = ck.model.vocab();
    NeuralLm model = ck.model;
    const auto batches = make_batches(task, vocab, data, opts.batch_size);
    for (int epoch = 0; epoch < opts.epochs; ++epoch)
        for (const auto& batch : batches) model = train_step(model, batch, opts.lr);

    ProgramDescriptor d = build_detail::init_descriptor(Strategy::full_model, ck, kDefaultPrecision, seed);
    build_detail::set_train_opts(d, opts);
    d.hyperparameters["n_examples"] = std::to_string(data.examples.size());
    d.param_sections = model_to_sections(model, false);
    d.account = total_length(d);
    if (d.account.payload_param_bits != 16 * model.trainable_params())
        throw std::logic_error("build_full_model: accounting mismatch against 16 x param count");
    return {std::move(d), {std::move(model), ""}};
}

inline BuildResult build_head_only(const Checkpoint& ck, const TaskSpec& task, const Dataset& data,
                                   const TrainOpts& opts, std::uint64_t seed = 0) {
    const Vocab& vocab = ck.model.vocab();
    NeuralLm model = ck.model;
    const auto batches = make_batches(task, vocab, data, opts.batch_size);
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (const auto& batch : batches) {
            Gradients g(model);
            const double loss = loss_and_gradients(model, batch, g);
            if (!std::isfinite(loss)) throw std::runtime_error("build_head_only: divergent loss");
            auto& w2 = model.tensor(NeuralLm::MatrixId::output);
            for (std::size_t i = 0; i < w2.size(); ++i) w2[i] = half_round(w2[i] - opts.lr * g.w2[i]);
            auto& b2 = model.bias2();
            for (std::size_t i = 0; i < b2.size(); ++i) b2[i] = half_round(b2[i] - opts.lr * g.b2[i]);
        }
    }
    ProgramDescriptor d = build_detail::init_descriptor(Strategy::head_only, ck, kDefaultPrecision, seed);
    build_detail::set_train_opts(d, opts);
    d.hyperparameters["n_examples"] = std::to_string(data.examples.size());
    d.param_sections = model_to_sections(model, true);
    d.account = total_length(d);
    if (d.account.payload_param_bits != 16 * model.head_params())
        throw std::logic_error("build_head_only: accounting mismatch against 16 x head params");
    return {std::move(d), {std::move(model), ""}};
}

// Data + parametric hybrid: fine-tune on the subset (compressing each batch
// like subset training and collecting per-batch weight deltas), then freeze
// the base weights and train one 16-bit alpha per (batch, layer group) on
// the rest of the data through the reweighted forward pass.
inline BuildResult build_alpha_reweight(const Checkpoint& ck, const TaskSpec& task, const Dataset& subset,
                                        const Dataset& rest, double lr_alpha, int alpha_epochs,
                                        const TrainOpts& opts, int precision = kDefaultPrecision,
                                        std::uint64_t seed = 0) {
    if (subset.examples.empty()) throw std::invalid_argument("build_alpha_reweight: empty subset");
    for (const auto& a : subset.examples)
        for (const auto& b : rest.examples)
            if (a.input == b.input)
                throw std::invalid_argument("build_alpha_reweight: subset and rest must be disjoint");

    const Vocab& vocab = ck.model.vocab();
    ProgramDescriptor d = build_detail::init_descriptor(Strategy::alpha_reweight, ck, precision, seed);
    build_detail::set_train_opts(d, opts);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.10g", lr_alpha);
    d.hyperparameters["lr_alpha"] = buf;
    d.hyperparameters["alpha_epochs"] = std::to_string(alpha_epochs);
    d.hyperparameters["n_subset"] = std::to_string(subset.examples.size());
    d.hyperparameters["n_rest"] = std::to_string(rest.examples.size());

    // phase 1: compressed fine-tune, collecting per-batch deltas
    NeuralLm model = ck.model;
    std::vector<WeightDelta> deltas;
    for (int epoch = 0; epoch < opts.epochs; ++epoch) {
        for (std::size_t at = 0; at < subset.examples.size();
             at += static_cast<std::size_t>(opts.batch_size)) {
            const std::size_t end =
                std::min(at + static_cast<std::size_t>(opts.batch_size), subset.examples.size());
            const std::span<const Example> slice(subset.examples.data() + at, end - at);
            d.data_sections.push_back(encode_examples(model, task, vocab, slice, precision));
            const NeuralLm before = model;
            model = train_step(model, training_batch(task, vocab, slice), opts.lr);
            deltas.push_back(weight_delta(before, model));
        }
    }

    // phase 2: train alphas on the rest, base weights frozen
    std::vector<double> alphas(deltas.size() * kDeltaGroups, 1.0);
    const auto rest_batches = make_batches(task, vocab, rest, opts.batch_size);
    for (int epoch = 0; epoch < alpha_epochs; ++epoch) {
        for (const auto& batch : rest_batches) {
            const NeuralLm eff = apply_weight_deltas(ck.model, deltas, alphas);
            Gradients g(eff);
            const double loss = loss_and_gradients(eff, batch, g);
            if (!std::isfinite(loss)) throw std::runtime_error("build_alpha_reweight: divergent loss");
            auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
                double acc = 0.0;
                for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
                return acc;
            };
            for (std::size_t i = 0; i < deltas.size(); ++i) {
                alphas[i * kDeltaGroups + 0] -= lr_alpha * dot(deltas[i].embed, g.embed);
                alphas[i * kDeltaGroups + 1] -=
                    lr_alpha * (dot(deltas[i].w1, g.w1) + dot(deltas[i].b1, g.b1));
                alphas[i * kDeltaGroups + 2] -=
                    lr_alpha * (dot(deltas[i].w2, g.w2) + dot(deltas[i].b2, g.b2));
            }
        }
    }
    for (auto& a : alphas) a = half_round(a);  // 16 bits per alpha

    ParamSection alpha_sec = section_from_values("alpha", alphas,
                                                 static_cast<int>(deltas.size()), kDeltaGroups, 16);
    d.param_sections.push_back(std::move(alpha_sec));

    NeuralLm final_model = apply_weight_deltas(ck.model, deltas, alphas);
    d.hyperparameters["final_params_fnv"] = std::to_string(model_param_hash(final_model));
    d.account = total_length(d);
    return {std::move(d), {std::move(final_model), ""}};
}

// -- replay ---------------------------------------------------------------------

// Rebuilds the adapted model/prompt from (base checkpoint, descriptor
// payload) alone. Where the build involved training, the final parameter
// hash is verified; a mismatch is a hard failure.
inline ReplayedProgram replay_program(const ProgramDescriptor& d, const Checkpoint& base) {
    if (checkpoint_hash(base) != d.base_checkpoint_hash)
        throw std::runtime_error("replay_program: descriptor does not match this checkpoint");
    const Vocab& vocab = base.model.vocab();

    auto decode_section_batch = [&](const NeuralLm& model, const DataSection& sec) {
        const TokenSeq tokens = decode(model, {}, sec.code, sec.token_count(), d.precision);
        Batch batch;
        std::size_t at = 0;
        for (const std::uint32_t len : sec.example_lens) {
            TokenSeq seq(tokens.begin() + static_cast<std::ptrdiff_t>(at),
                         tokens.begin() + static_cast<std::ptrdiff_t>(at + len));
            seq.push_back(Vocab::eos_id);
            batch.push_back(std::move(seq));
            at += len;
        }
        return batch;
    };
    auto verify_hash = [&](const NeuralLm& model) {
        const auto it = d.hyperparameters.find("final_params_fnv");
        if (it == d.hyperparameters.end()) return;
        if (std::to_string(model_param_hash(model)) != it->second)
            throw std::runtime_error("replay_program: replayed model hash mismatch (nondeterminism)");
    };

    switch (d.strategy) {
        case Strategy::base:
            return {base.model, ""};
        case Strategy::icl:
        case Strategy::urial: {
            const DataSection& sec = d.data_sections.at(0);
            const TokenSeq tokens = decode(base.model, {}, sec.code, sec.token_count(), d.precision);
            return {base.model, vocab.decode(tokens)};
        }
        case Strategy::subset_training:
        case Strategy::full_dataset: {
            const TrainOpts opts = build_detail::get_train_opts(d);
            NeuralLm model = base.model;
            for (const auto& sec : d.data_sections)
                model = train_step(model, decode_section_batch(model, sec), opts.lr);
            verify_hash(model);
            return {std::move(model), ""};
        }
        case Strategy::adapter:
        case Strategy::blora_grid: {
            const AdapterSpec spec = adapter_from_sections(base.model, d.param_sections);
            return {apply_adapter(base.model, spec), ""};
        }
        case Strategy::full_model:
        case Strategy::head_only: {
            NeuralLm model = base.model;
            load_model_sections(model, d.param_sections);
            return {std::move(model), ""};
        }
        case Strategy::alpha_reweight: {
            const TrainOpts opts = build_detail::get_train_opts(d);
            NeuralLm model = base.model;
            std::vector<WeightDelta> deltas;
            for (const auto& sec : d.data_sections) {
                const NeuralLm before = model;
                model = train_step(model, decode_section_batch(model, sec), opts.lr);
                deltas.push_back(weight_delta(before, model));
            }
            const std::vector<double> alphas = alphas_from_section(d.param_sections.at(0));
            NeuralLm reweighted = apply_weight_deltas(base.model, deltas, alphas);
            verify_hash(reweighted);
            return {std::move(reweighted), ""};
        }
    }
    throw std::logic_error("replay_program: bad strategy");
}

// Full replay followed by evaluation: the (kappa, tau) point with provenance.
inline LengthPerformancePoint run_program(const ProgramDescriptor& d, const Checkpoint& base,
                                          const TaskSpec& task, int n_eval, std::uint64_t eval_seed) {
    const ReplayedProgram rp = replay_program(d, base);
    ModelCompleter completer(rp.model, base.model.vocab(), task, rp.prompt_prefix,
                             task.config().max_output_tokens);
    const EvalResult res = evaluate(completer, task, n_eval, eval_seed);
    LengthPerformancePoint p;
    p.kappa_bits = d.account.total_bits();
    p.tau = res.tau;
    p.strategy = strategy_name(d.strategy);
    p.hyperparams = d.hyperparams_summary();
    p.seed = eval_seed;
    p.n_eval = n_eval;
    return p;
}

// -- descriptor file format -------------------------------------------------------
// Text header (strategy, checkpoint hash, precision, seeds, hyperparameters
// as key=value lines), then "payload" and the length-prefixed binary
// sections. Bit-exact.

inline std::vector<std::uint8_t> serialize_descriptor(const ProgramDescriptor& d) {
    std::string header = "MINADAPT-PROGRAM 1\n";
    header += std::string("strategy=") + strategy_name(d.strategy) + "\n";
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(d.base_checkpoint_hash));
    header += std::string("checkpoint=") + buf + "\n";
    header += "precision=" + std::to_string(d.precision) + "\n";
    header += "seed=" + std::to_string(d.seed) + "\n";
    for (const auto& [k, v] : d.hyperparameters) header += "hp." + k + "=" + v + "\n";
    header += "payload\n";

    std::vector<std::uint8_t> out(header.begin(), header.end());
    bytes::put_u32(out, static_cast<std::uint32_t>(d.data_sections.size()));
    for (const auto& sec : d.data_sections) {
        bytes::put_u8(out, 0);
        bytes::put_u32(out, static_cast<std::uint32_t>(sec.example_lens.size()));
        for (const auto len : sec.example_lens) bytes::put_u32(out, len);
        std::uint64_t nll_bits_raw;
        static_assert(sizeof(nll_bits_raw) == sizeof(sec.nll_bits));
        std::memcpy(&nll_bits_raw, &sec.nll_bits, 8);
        bytes::put_u64(out, nll_bits_raw);
        sec.code.serialize(out);
    }
    bytes::put_u32(out, static_cast<std::uint32_t>(d.param_sections.size()));
    for (const auto& sec : d.param_sections) {
        bytes::put_u8(out, 1);
        bytes::put_str(out, sec.tag);
        bytes::put_u32(out, sec.rows);
        bytes::put_u32(out, sec.cols);
        bytes::put_u8(out, sec.qbits);
        bytes::put_u16(out, sec.scale_half);
        bytes::put_u64(out, sec.count);
        bytes::put_u64(out, sec.data.size());
        out.insert(out.end(), sec.data.begin(), sec.data.end());
    }
    return out;
}

inline ProgramDescriptor deserialize_descriptor(const std::vector<std::uint8_t>& buf) {
    ProgramDescriptor d;
    std::size_t pos = 0;
    bool in_payload = false;
    bool first = true;
    while (pos < buf.size() && !in_payload) {
        std::size_t eol = pos;
        while (eol < buf.size() && buf[eol] != '\n') ++eol;
        const std::string line(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                               buf.begin() + static_cast<std::ptrdiff_t>(eol));
        pos = eol + 1;
        if (first) {
            if (line != "MINADAPT-PROGRAM 1") throw std::runtime_error("descriptor: bad magic line");
            first = false;
            continue;
        }
        if (line == "payload") {
            in_payload = true;
            break;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::runtime_error("descriptor: malformed header line");
        const std::string key = line.substr(0, eq);
        const std::string val = line.substr(eq + 1);
        if (key == "strategy") d.strategy = strategy_from_name(val);
        else if (key == "checkpoint") d.base_checkpoint_hash = std::stoull(val, nullptr, 16);
        else if (key == "precision") d.precision = std::stoi(val);
        else if (key == "seed") d.seed = std::stoull(val);
        else if (key.rfind("hp.", 0) == 0) d.hyperparameters[key.substr(3)] = val;
        else throw std::runtime_error("descriptor: unknown header key '" + key + "'");
    }
    if (!in_payload) throw std::runtime_error("descriptor: missing payload marker");

    bytes::Cursor c{&buf, pos};
    const std::uint32_t n_data = c.u32();
    for (std::uint32_t i = 0; i < n_data; ++i) {
        if (c.u8() != 0) throw std::runtime_error("descriptor: expected data section");
        DataSection sec;
        const std::uint32_t n_lens = c.u32();
        sec.example_lens.resize(n_lens);
        for (auto& len : sec.example_lens) len = c.u32();
        const std::uint64_t nll_bits_raw = c.u64();
        std::memcpy(&sec.nll_bits, &nll_bits_raw, 8);
        sec.code = BitString::deserialize(buf, c.pos);
        d.data_sections.push_back(std::move(sec));
    }
    const std::uint32_t n_param = c.u32();
    for (std::uint32_t i = 0; i < n_param; ++i) {
        if (c.u8() != 1) throw std::runtime_error("descriptor: expected param section");
        ParamSection sec;
        sec.tag = c.str();
        sec.rows = c.u32();
        sec.cols = c.u32();
        sec.qbits = c.u8();
        sec.scale_half = c.u16();
        sec.count = c.u64();
        const std::uint64_t nbytes = c.u64();
        sec.data = c.raw(nbytes);
        d.param_sections.push_back(std::move(sec));
    }
    d.account = total_length(d);
    return d;
}

inline void save_descriptor(const ProgramDescriptor& d, const std::string& path) {
    const auto buf = serialize_descriptor(d);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open descriptor file for writing: " + path);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

inline ProgramDescriptor load_descriptor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open descriptor file: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_descriptor(buf);
}

}  // namespace minadapt
