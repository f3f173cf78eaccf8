#pragma once

// Rule pool generation: depth-first search of every surrogate tree, emitting
// the first node on each path whose accumulated conditions satisfy the
// fidelity, coverage and length constraints.

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sure/common.hpp"
#include "sure/forest.hpp"
#include "sure/tabular.hpp"

namespace sure {

struct Condition {
    FeatureIndex feature = 0;
    BinIndex bin_lo = 0;  // inclusive
    BinIndex bin_hi = 0;  // inclusive
    std::uint32_t order = 0;

    bool contains(BinIndex code) const { return code >= bin_lo && code <= bin_hi; }
    /// Same predicate, ignoring the position it was found at.
    bool same_predicate(const Condition& o) const {
        return feature == o.feature && bin_lo == o.bin_lo && bin_hi == o.bin_hi;
    }
    bool operator==(const Condition&) const = default;
};

struct RuleSource {
    std::uint32_t tree = 0;
    NodeId node = 0;
    bool operator==(const RuleSource&) const = default;
};

struct Rule {
    std::vector<Condition> conditions;  // ordered by Condition::order
    ClassId consequent = 0;
    RuleSource source;

    std::size_t length() const { return conditions.size(); }
    const Condition* find(FeatureIndex f) const {
        for (const auto& c : conditions) {
            if (c.feature == f) {
                return &c;
            }
        }
        return nullptr;
    }
    bool matches(std::span<const BinIndex> codes) const {
        return std::all_of(conditions.begin(), conditions.end(),
                           [&](const Condition& c) { return c.contains(codes[c.feature]); });
    }
    bool operator==(const Rule&) const = default;
};

struct RuleMetrics {
    double fidelity = 0;
    std::size_t correct_count = 0;  // covered rows whose prediction equals the consequent
    std::size_t coverage_count = 0;
    double coverage_frac = 0;
    std::size_t length = 0;
    ClassId consequent = 0;
    std::vector<std::uint32_t> per_class;  // covered rows by black-box prediction
    Bitset cover;
    bool valid = false;  // false when the cover is empty
};

struct Constraints {
    double min_fidelity = 0.85;
    std::size_t min_coverage = 5;
    std::size_t max_num_condition = 3;
    std::size_t num_bin = kDefaultNumBin;

    void validate() const {
        if (!(min_fidelity > 0.0 && min_fidelity <= 1.0)) {
            throw Error("min_fidelity must be in (0, 1]");
        }
        if (min_coverage < 1) {
            throw Error("min_coverage must be at least 1");
        }
        if (max_num_condition < 1) {
            throw Error("max_num_condition must be at least 1");
        }
        if (num_bin < 2) {
            throw Error("num_bin must be at least 2");
        }
    }

    /// The three rule-level predicates of the pruning search.
    bool accepts(const RuleMetrics& m) const {
        return m.valid && m.coverage_count >= min_coverage && m.length >= 1 &&
               m.length <= max_num_condition && m.fidelity >= min_fidelity;
    }

    bool operator==(const Constraints&) const = default;
};

struct PooledRule {
    Rule rule;
    RuleMetrics metrics;
};

struct RulePool {
    std::vector<PooledRule> rules;
    Constraints constraints;
    std::string dataset_fingerprint;
};

/// Precomputed instance bitsets for fast conjunction covers.
class CoverIndex {
public:
    explicit CoverIndex(const DiscretizedDataset& data) : n_(data.n_instances()) {
        const std::size_t d = data.n_features();
        below_.resize(d);
        for (FeatureIndex f = 0; f < d; ++f) {
            const std::size_t bins = data.scheme().effective_bins(f);
            std::vector<Bitset> eq(bins, Bitset(n_));
            for (std::size_t i = 0; i < n_; ++i) {
                eq[data.code(i, f)].set(i);
            }
            below_[f].assign(bins + 1, Bitset(n_));
            for (std::size_t b = 1; b <= bins; ++b) {
                below_[f][b] = below_[f][b - 1] | eq[b - 1];
            }
        }
        predicted_.assign(data.n_classes(), Bitset(n_));
        truth_.assign(data.n_classes(), Bitset(n_));
        for (std::size_t i = 0; i < n_; ++i) {
            predicted_[data.prediction(i)].set(i);
            truth_[data.base().true_labels[i]].set(i);
        }
        all_ = Bitset(n_);
        all_.set();
    }

    std::size_t n_instances() const { return n_; }
    std::size_t n_classes() const { return predicted_.size(); }
    const Bitset& all() const { return all_; }
    const Bitset& predicted(ClassId c) const { return predicted_.at(c); }
    const Bitset& truth(ClassId c) const { return truth_.at(c); }

    Bitset interval(FeatureIndex f, BinIndex lo, BinIndex hi) const {
        const auto& masks = below_.at(f);
        if (lo > hi) {
            return Bitset(n_);
        }
        if (hi + 1 >= masks.size()) {
            throw Error("condition bin interval out of range");
        }
        return masks[hi + 1] - masks[lo];
    }

    Bitset cover(std::span<const Condition> conditions) const {
        Bitset out = all_;
        for (const auto& c : conditions) {
            out &= interval(c.feature, c.bin_lo, c.bin_hi);
        }
        return out;
    }

private:
    std::size_t n_;
    std::vector<std::vector<Bitset>> below_;  // below_[f][b]: rows with code < b
    std::vector<Bitset> predicted_;
    std::vector<Bitset> truth_;
    Bitset all_;
};

/// Metrics for an instance set treated as a rule's cover. The consequent is
/// the majority prediction over the cover (ties to the lowest class id).
inline RuleMetrics metrics_from_cover(Bitset cover, std::size_t length, const CoverIndex& index) {
    RuleMetrics m;
    m.length = length;
    m.coverage_count = cover.count();
    m.coverage_frac = static_cast<double>(m.coverage_count) / static_cast<double>(index.n_instances());
    m.per_class.assign(index.n_classes(), 0);
    for (ClassId c = 0; c < index.n_classes(); ++c) {
        m.per_class[c] = static_cast<std::uint32_t>((cover & index.predicted(c)).count());
    }
    m.valid = m.coverage_count > 0;
    m.consequent = argmax_class(m.per_class);
    m.correct_count = m.per_class.empty() ? 0 : m.per_class[m.consequent];
    m.fidelity = m.valid ? static_cast<double>(m.correct_count) / static_cast<double>(m.coverage_count) : 0.0;
    m.cover = std::move(cover);
    return m;
}

inline void check_rule_features(const Rule& rule, const DiscretizedDataset& data) {
    for (const auto& c : rule.conditions) {
        if (c.feature >= data.n_features()) {
            throw Error("rule references unknown feature index " + std::to_string(c.feature));
        }
        if (c.bin_lo > c.bin_hi || c.bin_hi >= data.scheme().effective_bins(c.feature)) {
            throw Error("rule condition has an invalid bin interval");
        }
    }
}

inline RuleMetrics evaluate_rule(const Rule& rule, const CoverIndex& index) {
    return metrics_from_cover(index.cover(rule.conditions), rule.length(), index);
}

inline RuleMetrics evaluate_rule(const Rule& rule, const DiscretizedDataset& data) {
    check_rule_features(rule, data);
    return evaluate_rule(rule, CoverIndex(data));
}

namespace detail {

class PathSearch {
public:
    PathSearch(const SurrogateTree& tree, std::uint32_t tree_index, const DiscretizedDataset& data,
               const CoverIndex& index, const Constraints& constraints, std::vector<PooledRule>& out)
        : tree_(tree), tree_index_(tree_index), data_(data), index_(index), constraints_(constraints), out_(out) {}

    void run() {
        std::vector<Condition> path;
        visit(0, path, index_.all());
    }

private:
    void visit(NodeId id, std::vector<Condition>& path, const Bitset& cover) {
        auto metrics = metrics_from_cover(cover, path.size(), index_);
        if (constraints_.accepts(metrics)) {
            Rule rule;
            rule.conditions = path;
            rule.consequent = metrics.consequent;
            rule.source = {tree_index_, id};
            out_.push_back({std::move(rule), std::move(metrics)});
            return;
        }
        const auto& node = tree_.nodes.at(id);
        if (node.is_leaf()) {
            return;
        }
        // Cover only shrinks and merged length only grows below this node.
        if (metrics.coverage_count < constraints_.min_coverage || path.size() > constraints_.max_num_condition) {
            return;
        }
        const FeatureIndex f = *node.feature;
        const auto top = static_cast<BinIndex>(data_.scheme().effective_bins(f) - 1);
        const BinIndex b = node.threshold_bin;
        descend(*node.left_child, path, cover, f, 0, b == 0 ? 0 : b - 1, b == 0);
        descend(*node.right_child, path, cover, f, b, top, b > top);
    }

    void descend(NodeId child, std::vector<Condition>& path, const Bitset& cover, FeatureIndex f, BinIndex lo,
                 BinIndex hi, bool empty) {
        if (empty) {
            return;
        }
        auto it = std::find_if(path.begin(), path.end(), [&](const Condition& c) { return c.feature == f; });
        if (it != path.end()) {
            // Deeper visits may reallocate `path`; address the entry by position.
            const auto pos = static_cast<std::size_t>(it - path.begin());
            const Condition saved = *it;
            const Condition merged{f, std::max(saved.bin_lo, lo), std::min(saved.bin_hi, hi), saved.order};
            if (merged.bin_lo <= merged.bin_hi) {
                path[pos] = merged;
                visit(child, path, cover & index_.interval(f, merged.bin_lo, merged.bin_hi));
                path[pos] = saved;
            }
        } else {
            path.push_back({f, lo, hi, static_cast<std::uint32_t>(path.size())});
            visit(child, path, cover & index_.interval(f, lo, hi));
            path.pop_back();
        }
    }

    const SurrogateTree& tree_;
    std::uint32_t tree_index_;
    const DiscretizedDataset& data_;
    const CoverIndex& index_;
    const Constraints& constraints_;
    std::vector<PooledRule>& out_;
};

inline std::vector<std::uint32_t> rule_key(const Rule& r) {
    std::vector<std::uint32_t> key;
    std::vector<Condition> sorted = r.conditions;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.feature < b.feature; });
    for (const auto& c : sorted) {
        key.push_back(static_cast<std::uint32_t>(c.feature));
        key.push_back(c.bin_lo);
        key.push_back(c.bin_hi);
    }
    key.push_back(r.consequent);
    return key;
}

}  // namespace detail

/// Runs the pruning search over each tree in order and drops exact duplicates
/// (same condition set and consequent), keeping the first occurrence.
inline RulePool extract_rules(std::span<const SurrogateTree> trees, const DiscretizedDataset& data,
                              const Constraints& constraints, const Deadline& deadline = {}) {
    constraints.validate();
    const CoverIndex index(data);
    RulePool pool;
    pool.constraints = constraints;
    pool.dataset_fingerprint = fingerprint(data.base());
    std::set<std::vector<std::uint32_t>> seen;
    std::vector<PooledRule> found;
    for (std::size_t t = 0; t < trees.size(); ++t) {
        deadline.check("rule extraction");
        found.clear();
        detail::PathSearch(trees[t], static_cast<std::uint32_t>(t), data, index, constraints, found).run();
        for (auto& pr : found) {
            if (seen.insert(detail::rule_key(pr.rule)).second) {
                pool.rules.push_back(std::move(pr));
            }
        }
    }
    return pool;
}

inline RulePool extract_rules(const SurrogateForest& forest, const DiscretizedDataset& data,
                              const Constraints& constraints, const Deadline& deadline = {}) {
    return extract_rules(std::span<const SurrogateTree>(forest.trees), data, constraints, deadline);
}

// ---------------------------------------------------------------------------
// Presentation and serialization

inline std::string condition_text(const Condition& c, const BinningScheme& scheme) {
    const auto& name = scheme.feature_names.at(c.feature);
    if (scheme.features.at(c.feature).kind == FeatureKind::categorical) {
        return name + " in " + raw_range_text(scheme, c.feature, c.bin_lo, c.bin_hi);
    }
    return name + " is " + bin_range_label(scheme, c.feature, c.bin_lo, c.bin_hi) + " (" +
           raw_range_text(scheme, c.feature, c.bin_lo, c.bin_hi) + ")";
}

inline std::string rule_text(const Rule& rule, const BinningScheme& scheme,
                             const std::vector<std::string>& class_names) {
    std::string out = "IF ";
    if (rule.conditions.empty()) {
        out += "(all instances)";
    }
    for (std::size_t i = 0; i < rule.conditions.size(); ++i) {
        if (i) {
            out += " AND ";
        }
        out += condition_text(rule.conditions[i], scheme);
    }
    return out + " THEN " + class_names.at(rule.consequent);
}

inline nlohmann::json to_json(const Condition& c, const BinningScheme& scheme) {
    return {{"feature", c.feature},
            {"feature_name", scheme.feature_names.at(c.feature)},
            {"bin_lo", c.bin_lo},
            {"bin_hi", c.bin_hi},
            {"order", c.order},
            {"label", bin_range_label(scheme, c.feature, c.bin_lo, c.bin_hi)},
            {"raw_range", raw_range_text(scheme, c.feature, c.bin_lo, c.bin_hi)}};
}

inline nlohmann::json to_json(const RuleMetrics& m) {
    return {{"fidelity", m.fidelity},
            {"correct_count", m.correct_count},
            {"coverage_count", m.coverage_count},
            {"coverage_frac", m.coverage_frac},
            {"length", m.length},
            {"per_class", m.per_class}};
}

inline nlohmann::json to_json(const Rule& rule, const RuleMetrics& metrics, const BinningScheme& scheme,
                              const std::vector<std::string>& class_names) {
    nlohmann::json conds = nlohmann::json::array();
    for (const auto& c : rule.conditions) {
        conds.push_back(to_json(c, scheme));
    }
    return {{"conditions", std::move(conds)},
            {"consequent", rule.consequent},
            {"consequent_name", class_names.at(rule.consequent)},
            {"source", {{"tree", rule.source.tree}, {"node", rule.source.node}}},
            {"metrics", to_json(metrics)},
            {"text", rule_text(rule, scheme, class_names)}};
}

inline nlohmann::json to_json(const Constraints& c) {
    return {{"min_fidelity", c.min_fidelity},
            {"min_coverage", c.min_coverage},
            {"max_num_condition", c.max_num_condition},
            {"num_bin", c.num_bin}};
}

inline Constraints constraints_from_json(const nlohmann::json& j, Constraints c = {}) {
    auto read = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            const auto& v = j.at(key);
            using T = std::decay_t<decltype(field)>;
            if constexpr (std::is_floating_point_v<T>) {
                if (!v.is_number()) {
                    throw Error(std::string(key) + " must be a number");
                }
            } else {
                if (!v.is_number_integer() || v.get<long long>() < 0) {
                    throw Error(std::string(key) + " must be a non-negative integer");
                }
            }
            field = v.get<T>();
        }
    };
    read("min_fidelity", c.min_fidelity);
    read("min_coverage", c.min_coverage);
    read("max_num_condition", c.max_num_condition);
    read("num_bin", c.num_bin);
    return c;
}

inline nlohmann::json to_json(const RulePool& pool, const BinningScheme& scheme,
                              const std::vector<std::string>& class_names) {
    nlohmann::json rules = nlohmann::json::array();
    for (const auto& pr : pool.rules) {
        rules.push_back(to_json(pr.rule, pr.metrics, scheme, class_names));
    }
    return {{"format", "sure.rule_pool"},
            {"version", kFormatVersion},
            {"dataset_fingerprint", pool.dataset_fingerprint},
            {"constraints", to_json(pool.constraints)},
            {"rules", std::move(rules)}};
}

}  // namespace sure
