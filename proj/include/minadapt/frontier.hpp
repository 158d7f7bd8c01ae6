#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace minadapt {

// Length-performance points and their Pareto structure. Every number here is
// an upper-bound estimate obtained from a concrete witness program, never a
// true complexity; the witness travels with the point.

struct LengthPerformancePoint {
    double kappa_bits{0.0};
    double tau{0.0};
    std::string strategy;
    std::string hyperparams;   // compact "k=v;k=v" summary
    std::uint64_t seed{0};
    int n_eval{0};
    std::string witness_path;  // descriptor file backing this point
    std::uint64_t order{0};    // provenance ordering, used only for ties

    bool operator==(const LengthPerformancePoint&) const = default;
};

// p dominates q: no worse in both coordinates, strictly better in one.
inline bool dominates(const LengthPerformancePoint& p, const LengthPerformancePoint& q) {
    return p.kappa_bits <= q.kappa_bits && p.tau >= q.tau &&
           (p.kappa_bits < q.kappa_bits || p.tau > q.tau);
}

// The non-dominated subset, sorted by kappa ascending; strictly increasing in
// both coordinates. Exact duplicates keep the earliest provenance order.
class ParetoFrontier {
public:
    ParetoFrontier() = default;

    static ParetoFrontier filter(std::vector<LengthPerformancePoint> pool) {
        std::stable_sort(pool.begin(), pool.end(),
                         [](const LengthPerformancePoint& a, const LengthPerformancePoint& b) {
                             if (a.kappa_bits != b.kappa_bits) return a.kappa_bits < b.kappa_bits;
                             if (a.tau != b.tau) return a.tau > b.tau;
                             return a.order < b.order;
                         });
        ParetoFrontier out;
        double best_tau = -1.0;
        bool first = true;
        for (auto& p : pool) {
            if (first || p.tau > best_tau) {
                best_tau = p.tau;
                out.points_.push_back(std::move(p));
                first = false;
            }
        }
        return out;
    }

    const std::vector<LengthPerformancePoint>& points() const noexcept { return points_; }
    bool empty() const noexcept { return points_.empty(); }
    std::size_t size() const noexcept { return points_.size(); }

    // Upper-bound estimate of the complexity of reaching tau_target: the
    // smallest kappa among frontier points with tau >= target. Absence is a
    // value, not an error.
    std::optional<double> complexity_at(double tau_target) const {
        for (const auto& p : points_)
            if (p.tau >= tau_target) return p.kappa_bits;
        return std::nullopt;
    }

    // The witness behind complexity_at, when one exists.
    const LengthPerformancePoint* witness_at(double tau_target) const {
        for (const auto& p : points_)
            if (p.tau >= tau_target) return &p;
        return nullptr;
    }

    // Witness semantics: true certifies a found program within budget; false
    // only means no witness was found.
    bool is_adaptable(double kappa_budget, double tau_target) const {
        const auto c = complexity_at(tau_target);
        return c.has_value() && *c <= kappa_budget;
    }

private:
    std::vector<LengthPerformancePoint> points_;
};

inline ParetoFrontier pareto_filter(std::vector<LengthPerformancePoint> pool) {
    return ParetoFrontier::filter(std::move(pool));
}

// Difference of two upper bounds at the same target; sign is not guaranteed
// by theory, which is why absence on either side propagates.
inline std::optional<double> information_estimate(const ParetoFrontier& reference,
                                                  const ParetoFrontier& conditioned,
                                                  double tau_target) {
    const auto a = reference.complexity_at(tau_target);
    const auto b = conditioned.complexity_at(tau_target);
    if (!a || !b) return std::nullopt;
    return *a - *b;
}

// Union of pools re-filtered; surviving points keep their provenance, with
// ordering reassigned by pool position for deterministic tie-breaks.
inline ParetoFrontier merge(const std::vector<std::vector<LengthPerformancePoint>>& pools) {
    std::vector<LengthPerformancePoint> all;
    for (const auto& pool : pools)
        for (const auto& p : pool) {
            all.push_back(p);
            all.back().order = all.size() - 1;
        }
    return pareto_filter(std::move(all));
}

inline ParetoFrontier merge(const ParetoFrontier& a, const ParetoFrontier& b) {
    return merge(std::vector<std::vector<LengthPerformancePoint>>{a.points(), b.points()});
}

// -- CSV export -------------------------------------------------------------
// Columns: kappa_bits,tau,strategy,hyperparams,seed,n_eval,witness_descriptor_path

inline std::string points_to_csv(const std::vector<LengthPerformancePoint>& points) {
    std::string out = "kappa_bits,tau,strategy,hyperparams,seed,n_eval,witness_descriptor_path\n";
    char buf[64];
    for (const auto& p : points) {
        std::snprintf(buf, sizeof(buf), "%.6f,%.8f,", p.kappa_bits, p.tau);
        out += buf;
        out += p.strategy + "," + p.hyperparams + "," + std::to_string(p.seed) + "," +
               std::to_string(p.n_eval) + "," + p.witness_path + "\n";
    }
    return out;
}

inline std::vector<LengthPerformancePoint> points_from_csv(const std::string& csv) {
    std::vector<LengthPerformancePoint> out;
    std::size_t pos = 0;
    bool header = true;
    while (pos < csv.size()) {
        auto eol = csv.find('\n', pos);
        if (eol == std::string::npos) eol = csv.size();
        const std::string line = csv.substr(pos, eol - pos);
        pos = eol + 1;
        if (header) {
            header = false;
            continue;
        }
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t f = 0;
        for (int i = 0; i < 6; ++i) {
            const auto comma = line.find(',', f);
            if (comma == std::string::npos) throw std::runtime_error("points_from_csv: malformed row");
            fields.push_back(line.substr(f, comma - f));
            f = comma + 1;
        }
        fields.push_back(line.substr(f));
        LengthPerformancePoint p;
        p.kappa_bits = std::stod(fields[0]);
        p.tau = std::stod(fields[1]);
        p.strategy = fields[2];
        p.hyperparams = fields[3];
        p.seed = std::stoull(fields[4]);
        p.n_eval = std::stoi(fields[5]);
        p.witness_path = fields[6];
        p.order = out.size();
        out.push_back(std::move(p));
    }
    return out;
}

}  // namespace minadapt
