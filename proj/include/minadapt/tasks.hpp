#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "minadapt/model.hpp"
#include "minadapt/rng.hpp"
#include "minadapt/vocab.hpp"

namespace minadapt {

// Synthetic, distribution-defined tasks T = (X, Y, D, s). Three families:
//   arith      - integer expressions, scored by exact final-answer match
//   cipher     - toy translation via word substitution + reversal, scored by
//                unigram overlap
//   constraint - verifiable instruction following, scored by the fraction of
//                rules satisfied
// Samplers are pure functions of their seeds; scorers are deterministic.

struct TaskConfig {
    // arith
    int depth{1};           // number of binary operators per expression
    int operand_lo{10};
    int operand_hi{99};
    std::string ops{"+-"};
    // cipher
    bool identity_cipher{false};
    // constraint
    int max_rules{2};
    // evaluation
    int max_output_tokens{16};
};

namespace task_detail {

inline const std::vector<std::string>& nouns() {
    static const std::vector<std::string> v{"cat", "dog",  "bird",  "fish",  "frog",
                                            "owl", "wolf", "mouse", "horse", "crab"};
    return v;
}
inline const std::vector<std::string>& verbs() {
    static const std::vector<std::string> v{"sees", "finds", "likes", "chases",
                                            "meets", "helps", "hears", "follows"};
    return v;
}

// Fixed letter rotation; keeps cipher words inside the lowercase alphabet.
inline std::string rot5(const std::string& w) {
    std::string out = w;
    for (char& c : out)
        if (c >= 'a' && c <= 'z') c = static_cast<char>('a' + (c - 'a' + 5) % 26);
    return out;
}

inline std::vector<std::string> split_words(const std::string& s) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == ' ') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

inline std::string trim(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && s[b] == ' ') ++b;
    while (e > b && s[e - 1] == ' ') --e;
    return s.substr(b, e - b);
}

// Leading integer of the output: the "final answer" convention for arith.
inline std::string extract_integer(const std::string& s) {
    const std::string t = trim(s);
    std::string out;
    std::size_t i = 0;
    if (i < t.size() && t[i] == '-') out.push_back(t[i++]);
    while (i < t.size() && t[i] >= '0' && t[i] <= '9') out.push_back(t[i++]);
    if (out.empty() || out == "-") return "";
    return out;
}

// Recursive-descent evaluator over +, -, * and parentheses.
struct ExprParser {
    const std::string& s;
    std::size_t pos{0};

    explicit ExprParser(const std::string& text) : s(text) {}

    long long parse() {
        const long long v = expr();
        if (pos != s.size()) throw std::invalid_argument("ExprParser: trailing input");
        return v;
    }

    long long expr() {
        long long v = term();
        while (pos < s.size() && (s[pos] == '+' || s[pos] == '-')) {
            const char op = s[pos++];
            const long long r = term();
            v = op == '+' ? v + r : v - r;
        }
        return v;
    }

    long long term() {
        long long v = factor();
        while (pos < s.size() && s[pos] == '*') {
            ++pos;
            v *= factor();
        }
        return v;
    }

    long long factor() {
        if (pos < s.size() && s[pos] == '(') {
            ++pos;
            const long long v = expr();
            if (pos >= s.size() || s[pos] != ')') throw std::invalid_argument("ExprParser: missing )");
            ++pos;
            return v;
        }
        const std::size_t start = pos;
        if (pos < s.size() && s[pos] == '-') ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
        if (pos == start) throw std::invalid_argument("ExprParser: expected number");
        return std::stoll(s.substr(start, pos - start));
    }
};

// Constraint rules. An instruction is "<rule> [<rule>]: <payload>"; every
// rule is checkable from (input, output) alone.
enum class Rule { lower, upper, nospace, rep2, rep3 };

inline std::string rule_name(Rule r) {
    switch (r) {
        case Rule::lower: return "low";
        case Rule::upper: return "cap";
        case Rule::nospace: return "nospace";
        case Rule::rep2: return "rep2";
        case Rule::rep3: return "rep3";
    }
    return "?";
}

inline std::string fold(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == ' ') continue;
        if (c >= 'A' && c <= 'Z') out.push_back(static_cast<char>(c - 'A' + 'a'));
        else out.push_back(c);
    }
    return out;
}

inline bool rule_satisfied(Rule r, const std::string& payload, const std::string& output) {
    switch (r) {
        case Rule::lower:
            return std::none_of(output.begin(), output.end(),
                                [](char c) { return c >= 'A' && c <= 'Z'; });
        case Rule::upper:
            return std::none_of(output.begin(), output.end(),
                                [](char c) { return c >= 'a' && c <= 'z'; });
        case Rule::nospace:
            return output.find(' ') == std::string::npos;
        case Rule::rep2:
        case Rule::rep3: {
            const std::string unit = fold(payload);
            if (unit.empty()) return false;
            const int k = r == Rule::rep2 ? 2 : 3;
            std::string want;
            for (int i = 0; i < k; ++i) want += unit;
            return fold(output) == want;
        }
    }
    return false;
}

struct ParsedInstruction {
    std::vector<Rule> rules;
    std::string payload;
};

inline ParsedInstruction parse_instruction(const std::string& input) {
    const auto colon = input.find(':');
    if (colon == std::string::npos) return {{}, input};
    ParsedInstruction out;
    for (const auto& word : split_words(input.substr(0, colon))) {
        if (word == "low") out.rules.push_back(Rule::lower);
        else if (word == "cap") out.rules.push_back(Rule::upper);
        else if (word == "nospace") out.rules.push_back(Rule::nospace);
        else if (word == "rep2") out.rules.push_back(Rule::rep2);
        else if (word == "rep3") out.rules.push_back(Rule::rep3);
    }
    std::string payload = input.substr(colon + 1);
    if (!payload.empty() && payload.front() == ' ') payload.erase(payload.begin());
    out.payload = payload;
    return out;
}

}  // namespace task_detail

// A task: seeded input sampler, reference solver, deterministic scorer and
// the prompt template applied at evaluation.
class TaskSpec {
public:
    TaskSpec(std::string id, TaskConfig config) : id_(std::move(id)), config_(config) {
        if (id_ == "arith") {
            template_ = "{}";
        } else if (id_ == "cipher") {
            template_ = "{}=";
        } else if (id_ == "constraint") {
            template_ = "{}=";
        } else {
            throw std::invalid_argument("make_task: unknown task id '" + id_ + "'");
        }
    }

    const std::string& id() const noexcept { return id_; }
    const TaskConfig& config() const noexcept { return config_; }
    const std::string& prompt_template() const noexcept { return template_; }

    std::string apply_template(const std::string& input) const {
        const auto pos = template_.find("{}");
        return template_.substr(0, pos) + input + template_.substr(pos + 2);
    }

    std::string sample_input(Rng& rng) const {
        if (id_ == "arith") return sample_arith(rng);
        if (id_ == "cipher") return sample_cipher(rng);
        return sample_constraint(rng);
    }

    std::string reference_output(const std::string& input) const {
        if (id_ == "arith") {
            std::string expr = input;
            if (!expr.empty() && expr.back() == '=') expr.pop_back();
            return std::to_string(task_detail::ExprParser(expr).parse());
        }
        if (id_ == "cipher") return encipher(input);
        const auto parsed = task_detail::parse_instruction(input);
        return solve_constraint(parsed);
    }

    double score(const std::string& input, const std::string& output) const {
        if (id_ == "arith") {
            const std::string want = reference_output(input);
            return task_detail::extract_integer(output) == want ? 1.0 : 0.0;
        }
        if (id_ == "cipher") {
            const auto ref = task_detail::split_words(reference_output(input));
            const auto got = task_detail::split_words(task_detail::trim(output));
            if (ref.empty() && got.empty()) return 1.0;
            if (ref.empty() || got.empty()) return 0.0;
            std::map<std::string, int> counts;
            for (const auto& w : ref) ++counts[w];
            int overlap = 0;
            for (const auto& w : got) {
                auto it = counts.find(w);
                if (it != counts.end() && it->second > 0) {
                    --it->second;
                    ++overlap;
                }
            }
            return static_cast<double>(overlap) /
                   static_cast<double>(std::max(ref.size(), got.size()));
        }
        const auto parsed = task_detail::parse_instruction(input);
        if (parsed.rules.empty()) return 0.0;
        int ok = 0;
        for (const auto r : parsed.rules)
            if (task_detail::rule_satisfied(r, parsed.payload, output)) ++ok;
        return static_cast<double>(ok) / static_cast<double>(parsed.rules.size());
    }

private:
    std::string sample_arith(Rng& rng) const { return gen_expr(rng, config_.depth) + "="; }

    std::string gen_expr(Rng& rng, int depth) const {
        if (depth <= 0) {
            const int span = config_.operand_hi - config_.operand_lo + 1;
            return std::to_string(config_.operand_lo + rng.uniform_int(span));
        }
        const int left_depth = rng.uniform_int(depth);
        const int right_depth = depth - 1 - left_depth;
        const char op = config_.ops[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(config_.ops.size())))];
        std::string left = gen_expr(rng, left_depth);
        std::string right = gen_expr(rng, right_depth);
        if (left_depth > 0) left = "(" + left + ")";
        if (right_depth > 0) right = "(" + right + ")";
        return left + op + right;
    }

    std::string sample_cipher(Rng& rng) const {
        const auto& ns = task_detail::nouns();
        const auto& vs = task_detail::verbs();
        const int pattern = rng.uniform_int(3);
        const std::string n1 = ns[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ns.size())))];
        const std::string n2 = ns[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ns.size())))];
        const std::string v = vs[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(vs.size())))];
        if (pattern == 0) return "the " + n1 + " " + v + " a " + n2;
        if (pattern == 1) return "a " + n1 + " " + v + " the " + n2;
        return "the " + n1 + " " + v;
    }

    std::string encipher(const std::string& source) const {
        auto words = task_detail::split_words(source);
        if (!config_.identity_cipher) {
            for (auto& w : words) w = task_detail::rot5(w);
            std::reverse(words.begin(), words.end());
        }
        std::string out;
        for (std::size_t i = 0; i < words.size(); ++i) {
            if (i) out.push_back(' ');
            out += words[i];
        }
        return out;
    }

    std::string sample_constraint(Rng& rng) const {
        using task_detail::Rule;
        std::vector<Rule> rules;
        const int n_rules = 1 + rng.uniform_int(std::max(1, config_.max_rules));
        const std::vector<Rule> all{Rule::lower, Rule::upper, Rule::nospace, Rule::rep2, Rule::rep3};
        while (static_cast<int>(rules.size()) < n_rules) {
            const Rule r = all[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(all.size())))];
            const bool dup = std::find(rules.begin(), rules.end(), r) != rules.end();
            const bool case_clash =
                (r == Rule::lower && std::find(rules.begin(), rules.end(), Rule::upper) != rules.end()) ||
                (r == Rule::upper && std::find(rules.begin(), rules.end(), Rule::lower) != rules.end());
            const bool rep_clash =
                (r == Rule::rep2 && std::find(rules.begin(), rules.end(), Rule::rep3) != rules.end()) ||
                (r == Rule::rep3 && std::find(rules.begin(), rules.end(), Rule::rep2) != rules.end());
            if (!dup && !case_clash && !rep_clash) rules.push_back(r);
        }
        std::sort(rules.begin(), rules.end());

        // payload: 3-6 symbols, at least one letter, no ':'
        static const std::string alphabet = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUV0123456789";
        const int len = 3 + rng.uniform_int(4);
        std::string payload;
        payload.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(48))]);  // letter first
        for (int i = 1; i < len; ++i) {
            if (rng.uniform() < 0.15 && payload.back() != ' ') payload.push_back(' ');
            else payload.push_back(alphabet[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(alphabet.size())))]);
        }
        while (!payload.empty() && payload.back() == ' ') payload.pop_back();

        std::string head;
        for (std::size_t i = 0; i < rules.size(); ++i) {
            if (i) head.push_back(' ');
            head += task_detail::rule_name(rules[i]);
        }
        return head + ": " + payload;
    }

    std::string solve_constraint(const task_detail::ParsedInstruction& parsed) const {
        using task_detail::Rule;
        std::string x = parsed.payload;
        const auto has = [&](Rule r) {
            return std::find(parsed.rules.begin(), parsed.rules.end(), r) != parsed.rules.end();
        };
        if (has(Rule::lower))
            for (char& c : x)
                if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
        if (has(Rule::upper))
            for (char& c : x)
                if (c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
        if (has(Rule::nospace)) {
            std::string y;
            for (char c : x)
                if (c != ' ') y.push_back(c);
            x = y;
        }
        int reps = 1;
        if (has(Rule::rep2)) reps = 2;
        if (has(Rule::rep3)) reps = 3;
        std::string out;
        for (int i = 0; i < reps; ++i) {
            if (i && !has(Rule::nospace)) out.push_back(' ');
            out += x;
        }
        return out;
    }

    std::string id_;
    TaskConfig config_;
    std::string template_;
};

inline TaskSpec make_task(const std::string& id, TaskConfig config = {}) { return TaskSpec(id, config); }

// ---------------------------------------------------------------------------

struct Example {
    std::string input;
    std::string reference;

    bool operator==(const Example&) const = default;
};

struct Dataset {
    std::string task_id;
    std::uint64_t seed{0};
    std::vector<Example> examples;

    bool operator==(const Dataset&) const = default;
};

// n i.i.d. draws with per-example sub-seeds in the "train-data" namespace;
// evaluation uses "eval-data", so equal user seeds never alias.
inline Dataset sample_dataset(const TaskSpec& task, int n, std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("sample_dataset: negative n");
    Dataset ds{task.id(), seed, {}};
    ds.examples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "train-data", static_cast<std::uint64_t>(i)));
        Example ex;
        ex.input = task.sample_input(rng);
        ex.reference = task.reference_output(ex.input);
        ds.examples.push_back(std::move(ex));
    }
    return ds;
}

// Dataset file: provenance header line, then one example per line with input
// and reference separated by a tab.
inline std::string format_dataset(const Dataset& ds) {
    std::string out = "# task=" + ds.task_id + " seed=" + std::to_string(ds.seed) +
                      " n=" + std::to_string(ds.examples.size()) + "\n";
    for (const auto& ex : ds.examples) out += ex.input + "\t" + ex.reference + "\n";
    return out;
}

inline Dataset parse_dataset(const std::string& text) {
    Dataset ds;
    std::size_t pos = 0;
    bool header_done = false;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!header_done) {
            if (line.rfind("# ", 0) != 0) throw std::runtime_error("dataset: missing provenance header");
            for (const auto& field : task_detail::split_words(line.substr(2))) {
                const auto eq = field.find('=');
                if (eq == std::string::npos) continue;
                const std::string key = field.substr(0, eq);
                const std::string val = field.substr(eq + 1);
                if (key == "task") ds.task_id = val;
                else if (key == "seed") ds.seed = std::stoull(val);
            }
            header_done = true;
            continue;
        }
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos) throw std::runtime_error("dataset: malformed example line");
        ds.examples.push_back({line.substr(0, tab), line.substr(tab + 1)});
    }
    return ds;
}

struct EvalResult {
    double tau{0.0};
    int n{0};
    double std_error{0.0};
};

// Anything that maps an input to an output text; implemented by greedy model
// decoding and by the reference-solver stub.
struct Completer {
    virtual ~Completer() = default;
    virtual std::string complete(const std::string& input) = 0;
};

class SolverCompleter : public Completer {
public:
    explicit SolverCompleter(const TaskSpec& task) : task_(&task) {}
    std::string complete(const std::string& input) override { return task_->reference_output(input); }

private:
    const TaskSpec* task_;
};

// Greedy decoding: argmax per step with ties broken toward the lowest symbol
// index, until eos or the token budget runs out.
class ModelCompleter : public Completer {
public:
    ModelCompleter(const ProbModel& model, const Vocab& vocab, const TaskSpec& task,
                   std::string prompt_prefix, int max_output_tokens)
        : model_(&model), vocab_(&vocab), task_(&task), prompt_(std::move(prompt_prefix)),
          max_tokens_(max_output_tokens) {}

    std::string complete(const std::string& input) override {
        TokenSeq ctx = vocab_->encode(prompt_ + task_->apply_template(input));
        TokenSeq generated;
        for (int step = 0; step < max_tokens_; ++step) {
            const auto probs = model_->next_distribution(ctx);
            int best = 0;
            for (int s = 1; s < static_cast<int>(probs.size()); ++s)
                if (probs[static_cast<std::size_t>(s)] > probs[static_cast<std::size_t>(best)]) best = s;
            if (best == Vocab::eos_id) break;
            generated.push_back(best);
            ctx.push_back(best);
        }
        return vocab_->decode(generated);
    }

private:
    const ProbModel* model_;
    const Vocab* vocab_;
    const TaskSpec* task_;
    std::string prompt_;
    int max_tokens_;
};

// Mean score over n fresh eval-namespace draws, with the standard error of
// the mean. Unscoreable outputs simply score 0.
inline EvalResult evaluate(Completer& completer, const TaskSpec& task, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("evaluate: n must be >= 1");
    std::vector<double> scores(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Rng rng(derive_seed(seed, "eval-data", static_cast<std::uint64_t>(i)));
        const std::string input = task.sample_input(rng);
        scores[static_cast<std::size_t>(i)] = task.score(input, completer.complete(input));
    }
    double mean = 0.0;
    for (double s : scores) mean += s;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double s : scores) var += (s - mean) * (s - mean);
    const double sd = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 0.0;
    return EvalResult{mean, n, sd / std::sqrt(static_cast<double>(n))};
}

inline EvalResult evaluate(const ProbModel& model, const Vocab& vocab, const TaskSpec& task, int n,
                           std::uint64_t seed, int max_output_tokens, const std::string& prompt = "") {
    ModelCompleter c(model, vocab, task, prompt, max_output_tokens);
    return evaluate(c, task, n, seed);
}

// ---------------------------------------------------------------------------
// Pretraining corpus: grammar sentences, bare arithmetic facts (no prompt
// formatting) and cipher word pairs, with every chunk screened against the
// default evaluation inputs so no exact eval item can appear.

inline constexpr std::uint64_t kDefaultEvalSeed = 7;
inline constexpr int kDefaultEvalN = 500;

inline const std::set<std::string>& default_eval_exclusions() {
    static const std::set<std::string> cache = [] {
        std::set<std::string> out;
        for (const char* id : {"arith", "cipher", "constraint"}) {
            const TaskSpec task = make_task(id);
            for (int i = 0; i < kDefaultEvalN; ++i) {
                Rng rng(derive_seed(kDefaultEvalSeed, "eval-data", static_cast<std::uint64_t>(i)));
                out.insert(task.sample_input(rng));
            }
        }
        return out;
    }();
    return cache;
}

inline TokenSeq make_pretraining_corpus(std::uint64_t seed, std::size_t size_tokens) {
    const Vocab& vocab = default_vocab();
    const TaskSpec arith = make_task("arith");
    const TaskSpec cipher = make_task("cipher");

    // Split the exclusion set by surface shape: arith items are matched
    // exactly against the fact's input part; cipher items (which contain
    // spaces, like grammar sentences) need a substring scan. Constraint
    // items contain ':' which the corpus never emits.
    static const std::set<std::string>& all_excluded = default_eval_exclusions();
    static const std::vector<std::string> sentence_items = [] {
        std::vector<std::string> out;
        for (const auto& item : all_excluded)
            if (item.find(' ') != std::string::npos && item.find(':') == std::string::npos)
                out.push_back(item);
        return out;
    }();
    const auto sentence_contaminated = [&](const std::string& chunk) {
        for (const auto& item : sentence_items)
            if (chunk.find(item) != std::string::npos) return true;
        return false;
    };

    Rng rng(derive_seed(seed, "corpus"));
    std::string text;
    text.reserve(size_tokens + 64);
    while (text.size() < size_tokens) {
        std::string chunk;
        for (int attempt = 0; attempt < 8 && chunk.empty(); ++attempt) {
            const double mix = rng.uniform();
            if (mix < 0.40) {
                const std::string sentence = cipher.sample_input(rng);
                if (!sentence_contaminated(sentence)) chunk = sentence + ". ";
            } else if (mix < 0.80) {
                const std::string input = arith.sample_input(rng);
                if (all_excluded.count(input) == 0)
                    chunk = input + arith.reference_output(input) + " ";
            } else {
                const auto& ns = task_detail::nouns();
                const std::string w = ns[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ns.size())))];
                chunk = w + "=" + task_detail::rot5(w) + ". ";
            }
        }
        text += chunk;
    }
    text.resize(size_tokens);
    return vocab.encode(text);
}

}  // namespace minadapt
