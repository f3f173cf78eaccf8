#pragma once

// Hierarchical surrogate rules: an n-ary prefix tree over the ordered
// conditions of a minimal rule set. Layer l holds the l-th conditions.

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "sure/cover.hpp"
#include "sure/extraction.hpp"

namespace sure {

struct NodeStats {
    std::size_t cover_count = 0;
    std::vector<std::uint32_t> per_class_count;        // by black-box prediction
    std::vector<std::uint32_t> per_class_error_count;  // prediction != true label, keyed by prediction
    std::vector<std::uint32_t> per_true_class_count;   // by true label
};

struct HierNode {
    std::uint32_t node_id = 0;
    std::optional<std::uint32_t> parent;
    std::optional<Condition> condition;
    std::uint32_t depth = 0;
    std::vector<std::uint32_t> children;
    std::optional<std::uint32_t> rule_id;
    NodeStats stats;
};

struct HsrTree {
    std::vector<HierNode> nodes;
    std::uint32_t root = 0;
    std::uint32_t max_depth = 0;
    /// Minimal-set rule ids rejected because an identical condition path exists.
    std::vector<std::uint32_t> duplicate_rules;

    const HierNode& node(std::uint32_t id) const {
        if (id >= nodes.size()) {
            throw Error("unknown hierarchy node id " + std::to_string(id));
        }
        return nodes[id];
    }

    /// Conditions from the root down to (and including) `id`.
    std::vector<Condition> path(std::uint32_t id) const {
        std::vector<Condition> out;
        for (std::optional<std::uint32_t> cur = id; cur; cur = node(*cur).parent) {
            if (node(*cur).condition) {
                out.push_back(*node(*cur).condition);
            }
        }
        std::reverse(out.begin(), out.end());
        return out;
    }
};

inline HsrTree build_hsr(std::span<const Rule> rules) {
    HsrTree tree;
    tree.nodes.emplace_back();
    for (std::uint32_t r = 0; r < rules.size(); ++r) {
        std::uint32_t cur = tree.root;
        for (const auto& cond : rules[r].conditions) {
            auto& kids = tree.nodes[cur].children;
            auto it = std::find_if(kids.begin(), kids.end(), [&](std::uint32_t k) {
                return tree.nodes[k].condition->same_predicate(cond);
            });
            if (it != kids.end()) {
                cur = *it;
                continue;
            }
            HierNode child;
            child.node_id = static_cast<std::uint32_t>(tree.nodes.size());
            child.parent = cur;
            child.condition = cond;
            child.condition->order = tree.nodes[cur].depth;
            child.depth = tree.nodes[cur].depth + 1;
            tree.max_depth = std::max(tree.max_depth, child.depth);
            tree.nodes[cur].children.push_back(child.node_id);
            cur = child.node_id;
            tree.nodes.push_back(std::move(child));
        }
        if (tree.nodes[cur].rule_id || cur == tree.root) {
            tree.duplicate_rules.push_back(r);
        } else {
            tree.nodes[cur].rule_id = r;
        }
    }
    // Siblings run low to high: by feature column, then bin interval.
    for (auto& n : tree.nodes) {
        std::sort(n.children.begin(), n.children.end(), [&](std::uint32_t a, std::uint32_t b) {
            const auto& ca = *tree.nodes[a].condition;
            const auto& cb = *tree.nodes[b].condition;
            return std::tie(ca.feature, ca.bin_lo, ca.bin_hi) < std::tie(cb.feature, cb.bin_lo, cb.bin_hi);
        });
    }
    return tree;
}

inline HsrTree build_hsr(const MinimalRuleSet& rs) {
    std::vector<Rule> rules;
    rules.reserve(rs.rules.size());
    for (const auto& pr : rs.rules) {
        rules.push_back(pr.rule);
    }
    return build_hsr(rules);
}

/// Condition lists of every rule terminus, indexed by rule id.
inline std::vector<std::vector<Condition>> flatten_termini(const HsrTree& tree) {
    std::size_t count = 0;
    for (const auto& n : tree.nodes) {
        if (n.rule_id) {
            count = std::max<std::size_t>(count, *n.rule_id + 1);
        }
    }
    std::vector<std::vector<Condition>> out(count);
    for (const auto& n : tree.nodes) {
        if (n.rule_id) {
            out[*n.rule_id] = tree.path(n.node_id);
        }
    }
    return out;
}

inline NodeStats stats_from_cover(const Bitset& cover, const CoverIndex& index) {
    NodeStats s;
    const std::size_t k = index.n_classes();
    s.cover_count = cover.count();
    s.per_class_count.assign(k, 0);
    s.per_class_error_count.assign(k, 0);
    s.per_true_class_count.assign(k, 0);
    for (ClassId c = 0; c < k; ++c) {
        const Bitset pred = cover & index.predicted(c);
        s.per_class_count[c] = static_cast<std::uint32_t>(pred.count());
        s.per_class_error_count[c] = static_cast<std::uint32_t>((pred - index.truth(c)).count());
        s.per_true_class_count[c] = static_cast<std::uint32_t>((cover & index.truth(c)).count());
    }
    return s;
}

inline void annotate_stats(HsrTree& tree, const CoverIndex& index) {
    std::vector<Bitset> covers(tree.nodes.size());
    // Parents precede children in node-id order.
    for (auto& n : tree.nodes) {
        if (!n.parent) {
            covers[n.node_id] = index.all();
        } else {
            const auto& c = *n.condition;
            covers[n.node_id] = covers[*n.parent] & index.interval(c.feature, c.bin_lo, c.bin_hi);
        }
        n.stats = stats_from_cover(covers[n.node_id], index);
    }
}

inline HsrTree annotate_stats(HsrTree tree, const DiscretizedDataset& data) {
    annotate_stats(tree, CoverIndex(data));
    return tree;
}

/// The node's prefix conjunction as a rule; consequent is the majority
/// prediction over the node's cover. The root yields an empty antecedent.
inline Rule node_rule(const HsrTree& tree, std::uint32_t node_id) {
    const auto& n = tree.node(node_id);
    Rule r;
    r.conditions = tree.path(node_id);
    r.consequent = n.stats.per_class_count.empty() ? 0 : argmax_class(n.stats.per_class_count);
    return r;
}

inline nlohmann::json to_json(const NodeStats& s) {
    return {{"cover_count", s.cover_count},
            {"per_class_count", s.per_class_count},
            {"per_class_error_count", s.per_class_error_count},
            {"per_true_class_count", s.per_true_class_count}};
}

inline nlohmann::json to_json(const HsrTree& tree, const BinningScheme& scheme) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        nlohmann::json jn = {{"id", n.node_id},
                             {"parent", n.parent ? nlohmann::json(*n.parent) : nlohmann::json(nullptr)},
                             {"depth", n.depth},
                             {"children", n.children},
                             {"rule_id", n.rule_id ? nlohmann::json(*n.rule_id) : nlohmann::json(nullptr)},
                             {"condition", n.condition ? to_json(*n.condition, scheme) : nlohmann::json(nullptr)},
                             {"stats", to_json(n.stats)}};
        nodes.push_back(std::move(jn));
    }
    return {{"format", "sure.hierarchy"},
            {"version", kFormatVersion},
            {"root", tree.root},
            {"max_depth", tree.max_depth},
            {"nodes", std::move(nodes)},
            {"duplicate_rules", tree.duplicate_rules}};
}

}  // namespace sure
