#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "minadapt/programs.hpp"

using namespace minadapt;

namespace {

struct Fixture {
    TaskSpec task = make_task("arith");
    Checkpoint random_init;
    Checkpoint pretrained;

    Fixture() {
        NeuralLm model(default_vocab(), NeuralConfig{16, 4, 16}, 11);
        random_init = Checkpoint{model, "random-init", {{"init", 11}}};
        const auto corpus = make_pretraining_corpus(5, 30000);
        pretrained = pretrain(model, corpus, 300, {0.25, 0.05}, 5);
    }
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

double builder_tau(const BuildResult& b, const TaskSpec& task, int n, std::uint64_t seed) {
    ModelCompleter c(b.builder_view.model, b.builder_view.model.vocab(), task,
                     b.builder_view.prompt_prefix, task.config().max_output_tokens);
    return evaluate(c, task, n, seed).tau;
}

}  // namespace

TEST_CASE("manifest: every strategy has a measured script size") {
    const auto& m = ScriptManifest::measured();
    for (int i = 0; i <= static_cast<int>(Strategy::alpha_reweight); ++i) {
        const auto s = static_cast<Strategy>(i);
        REQUIRE(m.script_bits(s) > 0);
        REQUIRE(m.script_bits(s) % 8 == 0);  // byte-measured
    }
    // the empty-prompt baseline carries the least machinery
    for (int i = 1; i <= static_cast<int>(Strategy::alpha_reweight); ++i)
        REQUIRE(m.script_bits(Strategy::base) <= m.script_bits(static_cast<Strategy>(i)));
    // grid cells replay exactly like plain adapters
    REQUIRE(m.script_bits(Strategy::blora_grid) == m.script_bits(Strategy::adapter));

    ScriptManifest missing;
    REQUIRE_THROWS_AS(missing.script_bits(Strategy::base), std::runtime_error);
}

TEST_CASE("base: payload-free program equals the raw model") {
    const auto& f = fixture();
    const auto b = build_base(f.pretrained);
    REQUIRE(b.descriptor.account.payload_data_bits_exact == 0);
    REQUIRE(b.descriptor.account.payload_param_bits == 0);
    REQUIRE(b.descriptor.account.total_bits() ==
            static_cast<double>(ScriptManifest::measured().script_bits(Strategy::base)));

    const auto direct = evaluate(f.pretrained.model, f.pretrained.model.vocab(), f.task, 40, 3,
                                 f.task.config().max_output_tokens);
    const auto point = run_program(b.descriptor, f.pretrained, f.task, 40, 3);
    REQUIRE(point.tau == direct.tau);
}

TEST_CASE("icl: payload roundtrip and coder bound") {
    const auto& f = fixture();
    const Dataset none{f.task.id(), 1, {}};
    REQUIRE_THROWS_AS(build_icl(f.pretrained, f.task, none), std::invalid_argument);

    const auto examples = sample_dataset(f.task, 1, 21);
    const auto b = build_icl(f.pretrained, f.task, examples);
    REQUIRE(b.descriptor.account.payload_data_bits_exact > 0);
    REQUIRE(static_cast<double>(b.descriptor.account.payload_data_bits_exact) <=
            b.descriptor.account.payload_data_bits_nll + 2.0);

    const auto rp = replay_program(b.descriptor, f.pretrained);
    REQUIRE(rp.prompt_prefix == icl_prompt_text(f.task, examples));
    REQUIRE(rp.prompt_prefix == b.builder_view.prompt_prefix);
}

TEST_CASE("icl: prompt longer than the context window is rejected") {
    const auto& f = fixture();
    const auto examples = sample_dataset(f.task, 16, 22);  // far beyond a 16-token window
    REQUIRE_THROWS_AS(build_icl(f.pretrained, f.task, examples), std::invalid_argument);
}

TEST_CASE("icl: pretrained checkpoint compresses the prompt better than random-init") {
    const auto& f = fixture();
    const auto examples = sample_dataset(f.task, 1, 23);
    const auto pre = build_icl(f.pretrained, f.task, examples);
    const auto rnd = build_icl(f.random_init, f.task, examples);
    REQUIRE(pre.descriptor.account.payload_data_bits_exact <
            rnd.descriptor.account.payload_data_bits_exact);
}

TEST_CASE("urial: empty explanation degenerates to icl") {
    const auto& f = fixture();
    const auto examples = sample_dataset(f.task, 1, 24);
    const auto icl = build_icl(f.pretrained, f.task, examples);
    const auto urial = build_urial(f.pretrained, f.task, "", examples);
    REQUIRE(urial.descriptor.data_sections[0].code == icl.descriptor.data_sections[0].code);

    const auto urial_full = build_urial(f.pretrained, f.task, "sums: ", examples);
    REQUIRE(urial_full.descriptor.account.payload_data_bits_exact >
            icl.descriptor.account.payload_data_bits_exact);
    // kappa additionally reflects the urial script entry
    REQUIRE(urial_full.descriptor.account.total_bits() >
            icl.descriptor.account.total_bits());

    const auto rp = replay_program(urial_full.descriptor, f.pretrained);
    REQUIRE(rp.prompt_prefix == urial_full.builder_view.prompt_prefix);
}

TEST_CASE("subset training: epochs=0 is the identity program") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 25);
    const auto b = build_subset_training(f.pretrained, f.task, subset, {0.1, 0, 4});
    REQUIRE(b.descriptor.data_sections.empty());
    REQUIRE(b.descriptor.account.payload_data_bits_exact == 0);
    REQUIRE(b.builder_view.model == f.pretrained.model);
}

TEST_CASE("subset training: replayed model and score match the builder exactly") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 26);
    const auto b = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 4}, 16, 7);
    const auto rp = replay_program(b.descriptor, f.pretrained);
    REQUIRE(rp.model == b.builder_view.model);

    const double tau_builder = builder_tau(b, f.task, 40, 9);
    const auto point = run_program(b.descriptor, f.pretrained, f.task, 40, 9);
    REQUIRE(point.tau == tau_builder);
}

TEST_CASE("subset training: payload under pretrained model is smaller") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 16, 27);
    const auto pre = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 8});
    const auto rnd = build_subset_training(f.random_init, f.task, subset, {0.1, 1, 8});
    REQUIRE(pre.descriptor.account.payload_data_bits_exact <
            rnd.descriptor.account.payload_data_bits_exact);
    REQUIRE(pre.descriptor.account.payload_data_bits_nll < rnd.descriptor.account.payload_data_bits_nll);
}

TEST_CASE("subset training: corrupted payload fails replay verification") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 28);
    auto b = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 4});
    auto& code = b.descriptor.data_sections[0].code;
    code.flip(code.size() / 2);
    REQUIRE_THROWS(replay_program(b.descriptor, f.pretrained));
}

TEST_CASE("adapter: worked bit-size examples") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 8, 29);
    // default model for the 2144-bit example: d_h=64, |V|=70, output matrix
    NeuralLm wide(default_vocab(), NeuralConfig{16, 16, 64}, 1);
    const Checkpoint ck{wide, "random-init", {{"init", 1}}};
    const auto b = build_adapter(ck, f.task, data, 1, 16, {0.1, 0, 8}, 3,
                                 {NeuralLm::MatrixId::output});
    REQUIRE(b.descriptor.account.payload_param_bits == 2144);

    // q=4, r=2 over an 8x8 matrix: 4*(2*16) = 128 bits
    NeuralLm tiny(default_vocab(), NeuralConfig{2, 4, 8}, 2);  // hidden matrix is 8x8
    const Checkpoint ck2{tiny, "random-init", {{"init", 2}}};
    const auto b2 = build_adapter(ck2, f.task, data, 2, 4, {0.1, 0, 8}, 3,
                                  {NeuralLm::MatrixId::hidden});
    REQUIRE(b2.descriptor.account.payload_param_bits == 128);
}

TEST_CASE("adapter: replay reproduces the builder-side score exactly") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 16, 30);
    const auto b = build_adapter(f.pretrained, f.task, data, 2, 8, {0.2, 2, 8}, 17);
    const auto rp = replay_program(b.descriptor, f.pretrained);
    REQUIRE(rp.model == b.builder_view.model);
    const auto point = run_program(b.descriptor, f.pretrained, f.task, 40, 5);
    REQUIRE(point.tau == builder_tau(b, f.task, 40, 5));
}

TEST_CASE("blora grid: degenerate grid equals the plain adapter build") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 8, 31);
    const auto grid = build_blora_grid(f.pretrained, f.task, data, {{1, 16}}, {0.2, 1, 8}, 9);
    REQUIRE(grid.size() == 1);
    const auto plain = build_adapter(f.pretrained, f.task, data, 1, 16, {0.2, 1, 8},
                                     derive_seed(9, "blora-cell", 116));
    REQUIRE(grid[0].descriptor.account.payload_param_bits ==
            plain.descriptor.account.payload_param_bits);
    REQUIRE(grid[0].descriptor.account.total_bits() == plain.descriptor.account.total_bits());
    REQUIRE(grid[0].builder_view.model == plain.builder_view.model);
}

TEST_CASE("blora grid: payload scales linearly in q") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 8, 32);
    const auto grid = build_blora_grid(f.pretrained, f.task, data, {{1, 2}, {1, 16}}, {0.2, 1, 8}, 9);
    REQUIRE(grid[0].descriptor.account.payload_param_bits * 8 ==
            grid[1].descriptor.account.payload_param_bits);
    REQUIRE_THROWS_AS(build_blora_grid(f.pretrained, f.task, data, {}, {0.2, 1, 8}, 9),
                      std::invalid_argument);
}

TEST_CASE("full model: snapshot accounting equals 16 x parameter count") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 8, 33);
    NeuralLm wide(default_vocab(), NeuralConfig{16, 16, 64}, 4);
    const Checkpoint ck{wide, "random-init", {{"init", 4}}};
    const auto b = build_full_model(ck, f.task, data, {0.1, 0, 8});
    // oracle: the parameter-count routine over tensor shapes
    REQUIRE(wide.trainable_params() == 22086);
    REQUIRE(b.descriptor.account.payload_param_bits == 16 * 22086);
    REQUIRE(b.descriptor.account.payload_param_bits == 353376);
    // epochs=0 still carries the snapshot, and the adapted model is the base
    REQUIRE(b.builder_view.model == ck.model);

    const auto rp = replay_program(b.descriptor, ck);
    REQUIRE(rp.model == ck.model);
}

TEST_CASE("full model vs adapter: kappa ordering") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 8, 34);
    const auto full = build_full_model(f.pretrained, f.task, data, {0.1, 1, 8});
    const auto small = build_adapter(f.pretrained, f.task, data, 1, 2, {0.1, 1, 8}, 5);
    REQUIRE(full.descriptor.account.total_bits() > small.descriptor.account.total_bits());
}

TEST_CASE("head only: worked size and frozen body") {
    const auto& f = fixture();
    const auto data = sample_dataset(f.task, 16, 35);
    NeuralLm wide(default_vocab(), NeuralConfig{16, 16, 64}, 6);
    const Checkpoint ck{wide, "random-init", {{"init", 6}}};
    const auto b = build_head_only(ck, f.task, data, {0.2, 2, 8});
    REQUIRE(b.descriptor.account.payload_param_bits == 16 * (64 * 70 + 70));
    REQUIRE(b.descriptor.account.payload_param_bits == 72800);

    // all non-head parameters bit-identical before/after
    REQUIRE(b.builder_view.model.tensor(NeuralLm::MatrixId::embed) ==
            ck.model.tensor(NeuralLm::MatrixId::embed));
    REQUIRE(b.builder_view.model.tensor(NeuralLm::MatrixId::hidden) ==
            ck.model.tensor(NeuralLm::MatrixId::hidden));
    REQUIRE(b.builder_view.model.bias1() == ck.model.bias1());
    REQUIRE(b.builder_view.model.tensor(NeuralLm::MatrixId::output) !=
            ck.model.tensor(NeuralLm::MatrixId::output));

    const auto rp = replay_program(b.descriptor, ck);
    REQUIRE(rp.model == b.builder_view.model);
}

TEST_CASE("alpha reweight: zero alpha-steps reproduce plain fine-tuning") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 36);
    const auto rest = sample_dataset(f.task, 8, 37);
    const TrainOpts opts{0.1, 1, 4};
    const auto hybrid = build_alpha_reweight(f.pretrained, f.task, subset, rest, 0.05, 0, opts);
    const auto plain = build_subset_training(f.pretrained, f.task, subset, opts);
    REQUIRE(hybrid.builder_view.model == plain.builder_view.model);

    // payload = subset payload + 16 * (n_batches * n_groups)
    const auto n_batches = hybrid.descriptor.data_sections.size();
    REQUIRE(hybrid.descriptor.account.payload_param_bits == 16 * (n_batches * 3));
    REQUIRE(hybrid.descriptor.account.payload_data_bits_exact ==
            plain.descriptor.account.payload_data_bits_exact);
}

TEST_CASE("alpha reweight: trained alphas replay bit-identically") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 38);
    const auto rest = sample_dataset(f.task, 12, 39);
    const auto b = build_alpha_reweight(f.pretrained, f.task, subset, rest, 0.5, 2, {0.1, 1, 4});
    const auto rp = replay_program(b.descriptor, f.pretrained);
    REQUIRE(rp.model == b.builder_view.model);

    const auto point = run_program(b.descriptor, f.pretrained, f.task, 30, 13);
    REQUIRE(point.tau == builder_tau(b, f.task, 30, 13));
}

TEST_CASE("alpha reweight: overlapping subset and rest rejected") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 40);
    REQUIRE_THROWS_AS(build_alpha_reweight(f.pretrained, f.task, subset, subset, 0.1, 1, {0.1, 1, 4}),
                      std::invalid_argument);
}

TEST_CASE("total_length: fixed manifest mirror of external constants") {
    // external convention: subset-training script 5704 bits; with a 1e6-bit
    // payload the program totals 1 005 704 bits
    ScriptManifest fixture_manifest;
    fixture_manifest.bits_[Strategy::subset_training] = reference_script_bits().at("subset_training");
    ProgramDescriptor d;
    d.strategy = Strategy::subset_training;
    DataSection sec;
    sec.example_lens.push_back(1);
    for (int i = 0; i < 1000000; ++i) sec.code.push_back(i & 1);
    sec.nll_bits = 999999.0;
    d.data_sections.push_back(std::move(sec));
    const auto acc = total_length(d, fixture_manifest);
    REQUIRE(acc.total_bits() == 1005704.0);

    // adapter with the 2144-bit payload: kappa = measured script + 2144
    const auto& measured = ScriptManifest::measured();
    ProgramDescriptor a;
    a.strategy = Strategy::adapter;
    a.param_sections.push_back(ParamSection{"A:output", 64, 1, 16, 0, 64, std::vector<std::uint8_t>(128)});
    a.param_sections.push_back(ParamSection{"B:output", 1, 70, 16, 0, 70, std::vector<std::uint8_t>(140)});
    const auto acc2 = total_length(a);
    REQUIRE(acc2.payload_param_bits == 2144);
    REQUIRE(acc2.total_bits() ==
            static_cast<double>(measured.script_bits(Strategy::adapter)) + 2144.0);
}

TEST_CASE("descriptor file: bit-exact roundtrip and self-contained replay") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 41);
    const auto b = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 4}, 16, 3);

    const auto path = std::filesystem::temp_directory_path() / "minadapt_prog_test.bin";
    save_descriptor(b.descriptor, path.string());
    const auto loaded = load_descriptor(path.string());
    REQUIRE(serialize_descriptor(loaded) == serialize_descriptor(b.descriptor));
    REQUIRE(loaded.account.total_bits() == b.descriptor.account.total_bits());
    REQUIRE(loaded.account.payload_data_bits_nll == b.descriptor.account.payload_data_bits_nll);

    // replay consumes only (checkpoint, descriptor payload): the Dataset
    // object is gone from this scope's inputs entirely
    const auto rp = replay_program(loaded, f.pretrained);
    REQUIRE(rp.model == b.builder_view.model);
    std::filesystem::remove(path);

    // wrong checkpoint is rejected
    REQUIRE_THROWS(replay_program(loaded, f.random_init));
}

TEST_CASE("strategy ordering: icl < subset training < full model on a default-config sweep") {
    const auto& f = fixture();
    const auto icl_examples = sample_dataset(f.task, 1, 42);
    const auto subset = sample_dataset(f.task, 64, 42);
    const auto icl = build_icl(f.pretrained, f.task, icl_examples);
    const auto sub = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 16});
    const auto full = build_full_model(f.pretrained, f.task, subset, {0.1, 1, 16});
    REQUIRE(icl.descriptor.account.total_bits() < sub.descriptor.account.total_bits());
    REQUIRE(sub.descriptor.account.total_bits() < full.descriptor.account.total_bits());
}

TEST_CASE("descriptor: deterministic rebuild produces identical bytes") {
    const auto& f = fixture();
    const auto subset = sample_dataset(f.task, 8, 43);
    const auto b1 = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 4}, 16, 7);
    const auto b2 = build_subset_training(f.pretrained, f.task, subset, {0.1, 1, 4}, 16, 7);
    REQUIRE(serialize_descriptor(b1.descriptor) == serialize_descriptor(b2.descriptor));
}
