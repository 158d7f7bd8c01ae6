#pragma once

#include <span>
#include <vector>

namespace minadapt {

using Token = int;
using TokenSeq = std::vector<Token>;

// An autoregressive next-token distribution. The coder, the evaluators and
// the program builders all consume models through this surface.
struct ProbModel {
    virtual ~ProbModel() = default;
    virtual int vocab_size() const = 0;
    // Distribution over the next token given `context`; entries strictly
    // positive, summing to 1 within 1e-9.
    virtual std::vector<double> next_distribution(std::span<const Token> context) const = 0;
};

}  // namespace minadapt
