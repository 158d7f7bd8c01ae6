#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "minadapt/codec.hpp"
#include "minadapt/rng.hpp"

using namespace minadapt;

namespace {

// Fixed-table test model: context-independent distribution.
struct FixedModel : ProbModel {
    std::vector<double> probs;
    explicit FixedModel(std::vector<double> p) : probs(std::move(p)) {}
    int vocab_size() const override { return static_cast<int>(probs.size()); }
    std::vector<double> next_distribution(std::span<const Token>) const override { return probs; }
};

// Minimal smoothed bigram, written independently of the library's k-gram
// model so codec tests do not depend on later modules.
struct TestBigram : ProbModel {
    int vocab;
    double alpha;
    std::map<std::pair<int, int>, int> counts;
    std::map<int, int> totals;

    TestBigram(int v, double a) : vocab(v), alpha(a) {}

    void train(std::span<const Token> seq) {
        for (std::size_t i = 1; i < seq.size(); ++i) {
            counts[{seq[i - 1], seq[i]}]++;
            totals[seq[i - 1]]++;
        }
    }

    int vocab_size() const override { return vocab; }

    std::vector<double> next_distribution(std::span<const Token> ctx) const override {
        const int prev = ctx.empty() ? 0 : ctx.back();
        const auto tot_it = totals.find(prev);
        const double tot = tot_it == totals.end() ? 0.0 : tot_it->second;
        std::vector<double> p(static_cast<std::size_t>(vocab));
        for (int s = 0; s < vocab; ++s) {
            const auto it = counts.find({prev, s});
            const double c = it == counts.end() ? 0.0 : it->second;
            p[static_cast<std::size_t>(s)] = (c + alpha) / (tot + alpha * vocab);
        }
        return p;
    }
};

// Context-sensitive pseudo-random model: distribution depends on a hash of
// the recent context, so roundtrip tests exercise evolving state.
struct HashModel : ProbModel {
    int vocab;
    std::uint64_t salt;
    HashModel(int v, std::uint64_t s) : vocab(v), salt(s) {}
    int vocab_size() const override { return vocab; }
    std::vector<double> next_distribution(std::span<const Token> ctx) const override {
        std::uint64_t h = salt;
        const std::size_t start = ctx.size() > 4 ? ctx.size() - 4 : 0;
        for (std::size_t i = start; i < ctx.size(); ++i)
            h = fnv1a64(&ctx[i], sizeof(Token), h);
        Rng rng(h);
        std::vector<double> p(static_cast<std::size_t>(vocab));
        double sum = 0.0;
        for (auto& x : p) {
            x = 0.05 + rng.uniform();
            sum += x;
        }
        for (auto& x : p) x /= sum;
        return p;
    }
};

TokenSeq to_tokens(std::string_view s, std::string_view alphabet) {
    TokenSeq out;
    for (char c : s) out.push_back(static_cast<Token>(alphabet.find(c)));
    return out;
}

// Oracle for the flooring rule: independent recomputation in extended
// precision plus explicit remainder distribution.
std::vector<u64> oracle_counts(const std::vector<double>& probs, int precision) {
    const u64 total = u64{1} << precision;
    const u64 base = total - probs.size();
    std::vector<u64> counts(probs.size());
    std::vector<long double> fracs(probs.size());
    u64 assigned = 0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        const long double x = static_cast<long double>(probs[i]) * static_cast<long double>(base);
        counts[i] = static_cast<u64>(std::floor(x)) + 1;
        fracs[i] = x - std::floor(x);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(probs.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return fracs[a] > fracs[b]; });
    for (u64 r = 0; r < total - assigned; ++r) ++counts[order[r % counts.size()]];
    return counts;
}

}  // namespace

TEST_CASE("quantize: symmetric split") {
    const std::vector<double> p{0.5, 0.5};
    const auto cdf = quantize_distribution(p, 8);
    REQUIRE(cdf.cum == std::vector<u64>{128, 256});
}

TEST_CASE("quantize: zero-probability symbol keeps one count") {
    const std::vector<double> p{1.0, 0.0};
    const auto cdf = quantize_distribution(p, 8);
    REQUIRE(cdf.cum == std::vector<u64>{255, 256});
}

TEST_CASE("quantize: flooring rule at precision 16") {
    const std::vector<double> p{0.7, 0.2, 0.1};
    const auto cdf = quantize_distribution(p, 16);
    REQUIRE(cdf.cum.back() == 65536);
    const auto expect = oracle_counts(p, 16);
    u64 lo = 0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const u64 c = cdf.cum[i] - lo;
        lo = cdf.cum[i];
        REQUIRE(c == expect[i]);
        // counts track probs within +-vocab
        REQUIRE(std::abs(static_cast<double>(c) - p[i] * 65536.0) <= 3.0);
    }
}

TEST_CASE("quantize: random vectors satisfy the floor contract") {
    Rng rng(101);
    for (int trial = 0; trial < 200; ++trial) {
        const int vocab = 2 + rng.uniform_int(60);
        const int precision = 8 + rng.uniform_int(23);
        std::vector<double> p(static_cast<std::size_t>(vocab));
        double sum = 0.0;
        for (auto& x : p) {
            x = rng.uniform() < 0.2 ? 0.0 : rng.uniform();
            sum += x;
        }
        if (sum == 0.0) {
            p[0] = 1.0;
            sum = 1.0;
        }
        for (auto& x : p) x /= sum;
        const auto cdf = quantize_distribution(p, precision);
        const u64 total = u64{1} << precision;
        REQUIRE(cdf.cum.back() == total);
        u64 lo = 0;
        for (int s = 0; s < vocab; ++s) {
            const u64 c = cdf.cum[static_cast<std::size_t>(s)] - lo;
            lo = cdf.cum[static_cast<std::size_t>(s)];
            REQUIRE(c >= 1);
            REQUIRE(std::abs(static_cast<double>(c) - p[static_cast<std::size_t>(s)] * static_cast<double>(total)) <=
                    static_cast<double>(vocab) + 1.0);
        }
    }
}

TEST_CASE("quantize: argument validation") {
    const std::vector<double> ok{0.5, 0.5};
    REQUIRE_THROWS_AS(quantize_distribution(ok, 7), std::invalid_argument);
    REQUIRE_THROWS_AS(quantize_distribution(ok, 31), std::invalid_argument);
    const std::vector<double> bad_sum{0.5, 0.4};
    REQUIRE_THROWS_AS(quantize_distribution(bad_sum, 16), std::invalid_argument);
    std::vector<double> huge(200, 1.0 / 200);
    REQUIRE_THROWS_AS(quantize_distribution(huge, 8), std::invalid_argument);
}

TEST_CASE("encode: uniform entropy bound") {
    FixedModel m({0.5, 0.5});
    const TokenSeq payload{0, 1, 1, 0, 1, 0, 0, 1};
    const auto bits = encode(m, {}, payload, 16);
    REQUIRE(bits.size() <= 10);  // 8 bits entropy + 2 coder slack
    const auto back = decode(m, {}, bits, payload.size(), 16);
    REQUIRE(back == payload);
}

TEST_CASE("encode: empty payload terminates in at most 2 bits") {
    FixedModel m({0.25, 0.25, 0.25, 0.25});
    const auto bits = encode(m, {}, {}, 16);
    REQUIRE(bits.size() <= 2);
    REQUIRE(decode(m, {}, bits, 0, 16).empty());
}

TEST_CASE("encode: bigram payload length tracks NLL") {
    TestBigram m(3, 0.1);
    const auto corpus = to_tokens("abababab", "abc");
    m.train(corpus);
    const auto payload = to_tokens("abab", "abc");
    const int precision = 16;
    const auto bits = encode(m, {}, payload, precision);
    const double nll = sequence_nll(m, {}, payload, precision).value;
    REQUIRE(static_cast<double>(bits.size()) >= nll - 1e-9);
    const double slack = 2.0 + 4.0 * std::pow(2.0, -precision + 1) * std::log2(std::exp(1.0));
    REQUIRE(static_cast<double>(bits.size()) <= nll + slack);
}

TEST_CASE("decode: n_tokens=0 yields empty sequence") {
    FixedModel m({0.9, 0.1});
    BitString empty_code;
    REQUIRE(decode(m, {}, empty_code, 0, 16).empty());
}

TEST_CASE("roundtrip: random models, contexts and payloads") {
    Rng rng(7);
    for (int trial = 0; trial < 200; ++trial) {
        const int vocab = 2 + rng.uniform_int(40);
        const int precision = 10 + rng.uniform_int(15);
        HashModel m(vocab, rng.next_u64());
        TokenSeq context(rng.uniform_int(8));
        for (auto& t : context) t = rng.uniform_int(vocab);
        TokenSeq payload(rng.uniform_int(64));
        for (auto& t : payload) t = rng.uniform_int(vocab);

        const auto bits = encode(m, context, payload, precision);
        const auto back = decode(m, context, bits, payload.size(), precision);
        REQUIRE(back == payload);

        // determinism: same inputs, identical bits
        const auto bits2 = encode(m, context, payload, precision);
        REQUIRE(bits == bits2);

        // efficiency: coded length within 2 bits of quantized NLL
        const double nll = sequence_nll(m, context, payload, precision).value;
        REQUIRE(static_cast<double>(bits.size()) <= nll + 2.0);
        REQUIRE(static_cast<double>(bits.size()) >= nll - 1e-6);
    }
}

TEST_CASE("roundtrip: corrupting one bit is detected by comparison") {
    Rng rng(13);
    int detected = 0;
    int trials = 0;
    for (int t = 0; t < 50; ++t) {
        HashModel m(17, rng.next_u64());
        TokenSeq payload(80);
        for (auto& x : payload) x = rng.uniform_int(17);
        auto bits = encode(m, {}, payload, 16);
        if (bits.size() < 100) continue;
        ++trials;
        const auto pos = static_cast<std::size_t>(rng.uniform_below(bits.size()));
        bits.flip(pos);
        bool mismatch;
        try {
            mismatch = decode(m, {}, bits, payload.size(), 16) != payload;
        } catch (const std::runtime_error&) {
            mismatch = true;  // code exhausted counts as detection
        }
        if (mismatch) ++detected;
    }
    REQUIRE(trials > 0);
    REQUIRE(detected == trials);
}

TEST_CASE("monotone cost: appending tokens never shrinks the code") {
    Rng rng(29);
    for (int trial = 0; trial < 40; ++trial) {
        HashModel m(11, rng.next_u64());
        TokenSeq payload(1 + rng.uniform_int(30));
        for (auto& x : payload) x = rng.uniform_int(11);
        const auto base = encode(m, {}, payload, 14);
        TokenSeq longer = payload;
        longer.push_back(rng.uniform_int(11));
        const auto ext = encode(m, {}, longer, 14);
        REQUIRE(ext.size() >= base.size());
    }
}

TEST_CASE("sequence_nll: exact halves") {
    FixedModel m({0.5, 0.5});
    const TokenSeq payload{0, 1, 0, 1};
    REQUIRE(sequence_nll(m, {}, payload, 16).value == Catch::Approx(4.0).margin(1e-12));
}

TEST_CASE("sequence_nll: empty payload is zero") {
    FixedModel m({1.0, 0.0});
    REQUIRE(sequence_nll(m, {}, {}, 16).value == 0.0);
}

TEST_CASE("sequence_nll: matches an independent log-sum recomputation") {
    TestBigram m(4, 0.5);
    const auto corpus = to_tokens("abcabcaabbcc", "abcd");
    m.train(corpus);
    const auto payload = to_tokens("abcabc", "abcd");
    const TokenSeq context = to_tokens("ab", "abcd");
    const int precision = 16;
    const double nll = sequence_nll(m, context, payload, precision).value;

    // Oracle: natural-log accumulation over quantized counts, converted once.
    TokenSeq ctx = context;
    double nats = 0.0;
    for (Token t : payload) {
        const auto cdf = quantize_distribution(m.next_distribution(ctx), precision);
        nats += std::log(static_cast<double>(cdf.count(t))) -
                std::log(static_cast<double>(cdf.total()));
        ctx.push_back(t);
    }
    const double oracle = -nats / std::log(2.0);
    REQUIRE(nll == Catch::Approx(oracle).epsilon(1e-9));
}

TEST_CASE("quantization soundness: per-token NLL bounded by precision") {
    Rng rng(31);
    for (int trial = 0; trial < 30; ++trial) {
        const int vocab = 2 + rng.uniform_int(20);
        const int precision = 8 + rng.uniform_int(10);
        HashModel m(vocab, rng.next_u64());
        TokenSeq payload(10);
        for (auto& x : payload) x = rng.uniform_int(vocab);
        const double nll = sequence_nll(m, {}, payload, precision).value;
        REQUIRE(nll <= static_cast<double>(precision) * static_cast<double>(payload.size()) + 1e-9);
    }
}

TEST_CASE("token validation") {
    FixedModel m({0.5, 0.5});
    const TokenSeq bad{0, 2};
    REQUIRE_THROWS_AS(encode(m, {}, bad, 16), std::invalid_argument);
    REQUIRE_THROWS_AS(sequence_nll(m, {}, bad, 16), std::invalid_argument);
}

TEST_CASE("bitstring: serialization framing roundtrip") {
    Rng rng(91);
    for (int trial = 0; trial < 50; ++trial) {
        BitString bs;
        const int n = rng.uniform_int(70);
        for (int i = 0; i < n; ++i) bs.push_back(rng.uniform() < 0.5);
        const auto buf = bs.serialize();
        REQUIRE(buf.size() == 8 + (bs.size() + 7) / 8);
        std::size_t pos = 0;
        const auto back = BitString::deserialize(buf, pos);
        REQUIRE(pos == buf.size());
        REQUIRE(back == bs);
    }
}
