#pragma once

// Greedy set-cover minimization of a rule pool.

#include <vector>

#include "json.hpp"
#include "sure/extraction.hpp"

namespace sure {

/// Selection stops once the best residual gain falls below this fraction of
/// the describable universe D_R.
inline constexpr double kDefaultStopFraction = 0.005;

struct SelectionStep {
    std::size_t pool_index = 0;
    std::size_t gain = 0;
};

struct MinimalRuleSet {
    std::vector<PooledRule> rules;  // in selection order
    Bitset covered;
    std::size_t universe_size = 0;  // |D_R|
    double set_coverage = 0;        // |covered| / n
    std::vector<SelectionStep> selection_log;
};

/// Union of all pool covers.
inline Bitset cover_universe(const RulePool& pool, std::size_t n_instances) {
    Bitset u(n_instances);
    for (const auto& pr : pool.rules) {
        u |= pr.metrics.cover;
    }
    return u;
}

namespace detail {

/// True when candidate a beats candidate b at equal gain: higher fidelity,
/// then shorter, then earlier in the pool. Fidelity compares exactly.
inline bool better_tie(const RuleMetrics& a, std::size_t ia, const RuleMetrics& b, std::size_t ib) {
    const auto lhs = static_cast<unsigned __int128>(a.correct_count) * b.coverage_count;
    const auto rhs = static_cast<unsigned __int128>(b.correct_count) * a.coverage_count;
    if (lhs != rhs) {
        return lhs > rhs;
    }
    if (a.length != b.length) {
        return a.length < b.length;
    }
    return ia < ib;
}

}  // namespace detail

/// Repeatedly takes the rule covering the most still-uncovered instances.
/// Terminates when D_R is covered or the best gain is below
/// stop_fraction * |D_R|; pass 0 to disable the threshold.
inline MinimalRuleSet greedy_minimal_set(const RulePool& pool, std::size_t n_instances,
                                         double stop_fraction = kDefaultStopFraction) {
    MinimalRuleSet rs;
    rs.covered = Bitset(n_instances);
    const Bitset universe = cover_universe(pool, n_instances);
    rs.universe_size = universe.count();
    const double threshold = stop_fraction * static_cast<double>(rs.universe_size);

    std::vector<bool> taken(pool.rules.size(), false);
    while (rs.covered.count() < rs.universe_size) {
        std::size_t best = pool.rules.size();
        std::size_t best_gain = 0;
        for (std::size_t i = 0; i < pool.rules.size(); ++i) {
            if (taken[i]) {
                continue;
            }
            const auto& m = pool.rules[i].metrics;
            if (m.coverage_count < best_gain) {
                continue;  // cannot beat the current best
            }
            const std::size_t gain = (m.cover - rs.covered).count();
            if (gain == 0) {
                continue;
            }
            if (best == pool.rules.size() || gain > best_gain ||
                (gain == best_gain && detail::better_tie(m, i, pool.rules[best].metrics, best))) {
                best = i;
                best_gain = gain;
            }
        }
        if (best == pool.rules.size() || static_cast<double>(best_gain) < threshold) {
            break;
        }
        taken[best] = true;
        rs.covered |= pool.rules[best].metrics.cover;
        rs.rules.push_back(pool.rules[best]);
        rs.selection_log.push_back({best, best_gain});
    }
    rs.set_coverage = n_instances ? static_cast<double>(rs.covered.count()) / static_cast<double>(n_instances) : 0.0;
    return rs;
}

inline MinimalRuleSet greedy_minimal_set(const RulePool& pool, const DiscretizedDataset& data,
                                         double stop_fraction = kDefaultStopFraction) {
    return greedy_minimal_set(pool, data.n_instances(), stop_fraction);
}

/// Fraction of the full dataset covered by the union of the set's rules.
inline double set_coverage(const MinimalRuleSet& rs, const DiscretizedDataset& data) {
    const std::size_t n = data.n_instances();
    if (rs.rules.empty() || n == 0) {
        return 0.0;
    }
    const CoverIndex index(data);
    Bitset u(n);
    for (const auto& pr : rs.rules) {
        u |= index.cover(pr.rule.conditions);
    }
    return static_cast<double>(u.count()) / static_cast<double>(n);
}

inline double average_length(const MinimalRuleSet& rs) {
    if (rs.rules.empty()) {
        return 0.0;
    }
    double total = 0;
    for (const auto& pr : rs.rules) {
        total += static_cast<double>(pr.rule.length());
    }
    return total / static_cast<double>(rs.rules.size());
}

inline nlohmann::json to_json(const MinimalRuleSet& rs, const BinningScheme& scheme,
                              const std::vector<std::string>& class_names) {
    nlohmann::json rules = nlohmann::json::array();
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        auto jr = to_json(rs.rules[i].rule, rs.rules[i].metrics, scheme, class_names);
        jr["id"] = i;
        rules.push_back(std::move(jr));
    }
    nlohmann::json log = nlohmann::json::array();
    for (const auto& s : rs.selection_log) {
        log.push_back({{"pool_index", s.pool_index}, {"gain", s.gain}});
    }
    return {{"format", "sure.rule_set"},
            {"version", kFormatVersion},
            {"number_of_rules", rs.rules.size()},
            {"set_coverage", rs.set_coverage},
            {"universe_size", rs.universe_size},
            {"covered_count", rs.covered.count()},
            {"rules", std::move(rules)},
            {"selection_log", std::move(log)}};
}

}  // namespace sure
