#pragma once

// Shared fixtures, generators and row-scan oracles for the test suites.
// Oracles deliberately avoid CoverIndex and bitsets: they re-derive answers
// from raw values and thresholds one row at a time.

#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <memory>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "sure/analysis.hpp"
#include "sure/cover.hpp"
#include "sure/extraction.hpp"
#include "sure/hierarchy.hpp"
#include "sure/tabular.hpp"

namespace sure::fixtures {

inline std::string data_path(const std::string& name) { return std::string(SURE_DATA_DIR) + "/" + name; }

inline std::shared_ptr<const Dataset> diabetes() {
    static const auto ds = std::make_shared<const Dataset>(
        load_dataset(data_path("diabetes.csv"), "Outcome", data_path("diabetes_preds.txt")));
    return ds;
}

inline std::shared_ptr<const Dataset> loan() {
    static const auto ds =
        std::make_shared<const Dataset>(load_dataset(data_path("loan.csv"), "Status", data_path("loan_preds.txt")));
    return ds;
}

/// Dataset whose raw values are the bin codes themselves, paired with a
/// scheme whose thresholds sit at half-integers, so bin_of(v) == v.
struct Coded {
    std::shared_ptr<const Dataset> dataset;
    std::shared_ptr<const DiscretizedDataset> data;
};

inline Coded make_coded(const std::vector<std::vector<BinIndex>>& codes, const std::vector<std::size_t>& bins,
                        const std::vector<ClassId>& predictions, std::vector<ClassId> labels = {},
                        std::size_t n_classes = 0) {
    auto ds = std::make_shared<Dataset>();
    for (std::size_t f = 0; f < bins.size(); ++f) {
        ds->features.push_back({"f" + std::to_string(f), FeatureKind::numeric, f, {}});
    }
    for (const auto& row : codes) {
        ds->rows.emplace_back(row.begin(), row.end());
    }
    ds->predictions = predictions;
    ds->true_labels = labels.empty() ? predictions : std::move(labels);
    ClassId top = 0;
    for (auto c : ds->predictions) {
        top = std::max(top, c);
    }
    for (auto c : ds->true_labels) {
        top = std::max(top, c);
    }
    for (std::size_t c = 0; c < std::max<std::size_t>(n_classes, top + 1); ++c) {
        ds->class_names.push_back("c" + std::to_string(c));
    }
    BinningScheme scheme;
    scheme.num_bin = *std::max_element(bins.begin(), bins.end());
    for (std::size_t f = 0; f < bins.size(); ++f) {
        scheme.feature_names.push_back(ds->features[f].name);
        FeatureBins fb;
        for (std::size_t b = 1; b < bins[f]; ++b) {
            fb.thresholds.push_back(static_cast<double>(b) - 0.5);
        }
        scheme.features.push_back(fb);
    }
    std::shared_ptr<const Dataset> base = ds;
    return {base, std::make_shared<const DiscretizedDataset>(discretize(base, scheme))};
}

/// Random coded dataset. Predictions follow a random two-feature rule with
/// `noise` of labels replaced at random, so trees have something to find.
inline Coded random_coded(std::mt19937_64& rng, std::size_t n, std::size_t d, std::size_t max_bins, std::size_t k,
                          double noise = 0.1) {
    std::uniform_int_distribution<std::size_t> bins_dist(2, max_bins);
    std::vector<std::size_t> bins(d);
    for (auto& b : bins) {
        b = bins_dist(rng);
    }
    std::vector<std::vector<BinIndex>> codes(n, std::vector<BinIndex>(d));
    for (auto& row : codes) {
        for (std::size_t f = 0; f < d; ++f) {
            row[f] = static_cast<BinIndex>(std::uniform_int_distribution<std::size_t>(0, bins[f] - 1)(rng));
        }
    }
    const std::size_t fa = std::uniform_int_distribution<std::size_t>(0, d - 1)(rng);
    const std::size_t fb = std::uniform_int_distribution<std::size_t>(0, d - 1)(rng);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<ClassId> any(0, static_cast<ClassId>(k - 1));
    std::vector<ClassId> preds(n), labels(n);
    for (std::size_t i = 0; i < n; ++i) {
        ClassId c = static_cast<ClassId>((codes[i][fa] + (codes[i][fb] > 0 ? 1 : 0)) % k);
        preds[i] = coin(rng) < noise ? any(rng) : c;
        labels[i] = coin(rng) < 0.2 ? any(rng) : preds[i];
    }
    return make_coded(codes, bins, preds, labels, k);
}

inline Rule random_rule(std::mt19937_64& rng, const DiscretizedDataset& data, std::size_t max_len) {
    const std::size_t d = data.n_features();
    std::vector<FeatureIndex> order(d);
    std::iota(order.begin(), order.end(), FeatureIndex{0});
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t len = std::uniform_int_distribution<std::size_t>(0, std::min(max_len, d))(rng);
    Rule r;
    for (std::size_t i = 0; i < len; ++i) {
        const auto f = order[i];
        const auto bins = data.scheme().effective_bins(f);
        auto a = static_cast<BinIndex>(std::uniform_int_distribution<std::size_t>(0, bins - 1)(rng));
        auto b = static_cast<BinIndex>(std::uniform_int_distribution<std::size_t>(0, bins - 1)(rng));
        r.conditions.push_back({f, std::min(a, b), std::max(a, b), static_cast<std::uint32_t>(i)});
    }
    r.consequent = std::uniform_int_distribution<ClassId>(0, static_cast<ClassId>(data.n_classes() - 1))(rng);
    return r;
}

// ---------------------------------------------------------------------------
// Row-scan oracles

/// Raw-value test of one condition against the scheme's thresholds.
inline bool oracle_condition(const DiscretizedDataset& data, std::size_t row, const Condition& c) {
    const auto& fb = data.scheme().features[c.feature];
    const double v = data.base().rows[row][c.feature];
    if (fb.kind == FeatureKind::categorical) {
        return v >= c.bin_lo && v <= c.bin_hi;
    }
    const double inf = std::numeric_limits<double>::infinity();
    const double lo = c.bin_lo == 0 ? -inf : fb.thresholds[c.bin_lo - 1];
    const double hi = c.bin_hi >= fb.thresholds.size() ? inf : fb.thresholds[c.bin_hi];
    return v >= lo && v < hi;
}

inline bool oracle_matches(const DiscretizedDataset& data, std::size_t row, const std::vector<Condition>& conds) {
    for (const auto& c : conds) {
        if (!oracle_condition(data, row, c)) {
            return false;
        }
    }
    return true;
}

struct OracleMetrics {
    std::size_t coverage = 0;
    std::vector<std::size_t> per_class;
    ClassId consequent = 0;
    std::size_t correct = 0;
    double fidelity = 0;
    std::vector<std::size_t> rows;
};

inline OracleMetrics oracle_metrics(const DiscretizedDataset& data, const std::vector<Condition>& conds) {
    OracleMetrics m;
    m.per_class.assign(data.n_classes(), 0);
    for (std::size_t i = 0; i < data.n_instances(); ++i) {
        if (oracle_matches(data, i, conds)) {
            ++m.coverage;
            ++m.per_class[data.base().predictions[i]];
            m.rows.push_back(i);
        }
    }
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        if (m.per_class[c] > m.per_class[m.consequent]) {
            m.consequent = static_cast<ClassId>(c);
        }
    }
    m.correct = m.coverage ? m.per_class[m.consequent] : 0;
    m.fidelity = m.coverage ? static_cast<double>(m.correct) / static_cast<double>(m.coverage) : 0.0;
    return m;
}

inline double oracle_set_coverage(const DiscretizedDataset& data, const MinimalRuleSet& rs) {
    if (rs.rules.empty()) {
        return 0.0;
    }
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.n_instances(); ++i) {
        for (const auto& pr : rs.rules) {
            if (oracle_matches(data, i, pr.rule.conditions)) {
                ++hit;
                break;
            }
        }
    }
    return static_cast<double>(hit) / static_cast<double>(data.n_instances());
}

inline FilterSpec random_spec(std::mt19937_64& rng, const DiscretizedDataset& data) {
    FilterSpec spec;
    std::bernoulli_distribution coin(0.3);
    for (FeatureIndex f = 0; f < data.n_features(); ++f) {
        if (coin(rng)) {
            spec.required_features.insert(f);
        }
        if (coin(rng)) {
            auto& allowed = spec.feature_values[f];
            for (BinIndex b = 0; b < data.scheme().effective_bins(f); ++b) {
                if (coin(rng)) {
                    allowed.insert(b);
                }
            }
        }
    }
    for (ClassId c = 0; c < data.n_classes(); ++c) {
        if (coin(rng)) {
            spec.predictions.insert(c);
        }
    }
    return spec;
}

inline std::vector<std::size_t> oracle_filter(const MinimalRuleSet& rs, const FilterSpec& spec) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        const auto& r = rs.rules[i].rule;
        bool ok = spec.predictions.empty() || spec.predictions.count(r.consequent) > 0;
        for (auto f : spec.required_features) {
            bool present = false;
            for (const auto& c : r.conditions) {
                present = present || c.feature == f;
            }
            ok = ok && present;
        }
        for (const auto& [f, allowed] : spec.feature_values) {
            for (const auto& c : r.conditions) {
                if (c.feature != f) {
                    continue;
                }
                bool any = false;
                for (BinIndex b = c.bin_lo; b <= c.bin_hi; ++b) {
                    any = any || allowed.count(b) > 0;
                }
                ok = ok && any;
            }
        }
        if (ok) {
            out.push_back(i);
        }
    }
    return out;
}

inline std::vector<std::uint32_t> oracle_overlap(const DiscretizedDataset& data, const Rule& a, const Rule& b) {
    std::vector<std::uint32_t> per_class(data.n_classes(), 0);
    for (std::size_t i = 0; i < data.n_instances(); ++i) {
        if (oracle_matches(data, i, a.conditions) && oracle_matches(data, i, b.conditions)) {
            ++per_class[data.base().predictions[i]];
        }
    }
    return per_class;
}

/// Every tree node with its merged path conditions, found by an explicit
/// stack walk that tracks one [lo, hi] interval per feature.
struct NodePath {
    NodeId node = 0;
    std::optional<NodeId> parent;
    std::vector<Condition> conditions;
    bool empty = false;  // some interval became empty along the way
};

inline std::vector<NodePath> enumerate_paths(const SurrogateTree& tree, const BinningScheme& scheme) {
    std::vector<NodePath> out;
    std::vector<NodePath> stack{{0, std::nullopt, {}, false}};
    while (!stack.empty()) {
        NodePath cur = stack.back();
        stack.pop_back();
        out.push_back(cur);
        const auto& n = tree.nodes[cur.node];
        if (n.is_leaf()) {
            continue;
        }
        const FeatureIndex f = *n.feature;
        const auto top = static_cast<BinIndex>(scheme.effective_bins(f) - 1);
        auto child = [&](NodeId id, long lo, long hi) {
            NodePath next{id, cur.node, cur.conditions, cur.empty};
            auto it = std::find_if(next.conditions.begin(), next.conditions.end(),
                                   [&](const Condition& c) { return c.feature == f; });
            if (it == next.conditions.end()) {
                if (lo > hi) {
                    next.empty = true;
                    lo = hi = 0;
                }
                next.conditions.push_back({f, static_cast<BinIndex>(lo), static_cast<BinIndex>(hi),
                                           static_cast<std::uint32_t>(next.conditions.size())});
            } else {
                long new_lo = std::max<long>(it->bin_lo, lo), new_hi = std::min<long>(it->bin_hi, hi);
                if (new_lo > new_hi) {
                    next.empty = true;
                } else {
                    it->bin_lo = static_cast<BinIndex>(new_lo);
                    it->bin_hi = static_cast<BinIndex>(new_hi);
                }
            }
            stack.push_back(std::move(next));
        };
        const long b = n.threshold_bin;
        child(*n.right_child, b, top);
        child(*n.left_child, 0, b - 1);
    }
    return out;
}

/// True when `ancestor` lies on the root path of `node`.
inline bool is_ancestor(const std::vector<NodePath>& paths, NodeId ancestor, NodeId node) {
    std::map<NodeId, std::optional<NodeId>> parent;
    for (const auto& p : paths) {
        parent[p.node] = p.parent;
    }
    for (auto cur = parent.at(node); cur; cur = parent.at(*cur)) {
        if (*cur == ancestor) {
            return true;
        }
    }
    return false;
}

/// A minimal rule set assembled from arbitrary rules, metrics filled in.
inline MinimalRuleSet make_rule_set(const std::vector<Rule>& rules, const DiscretizedDataset& data) {
    MinimalRuleSet rs;
    const CoverIndex index(data);
    rs.covered = Bitset(data.n_instances());
    for (const auto& r : rules) {
        auto m = evaluate_rule(r, index);
        rs.covered |= m.cover;
        rs.rules.push_back({r, std::move(m)});
    }
    rs.universe_size = rs.covered.count();
    rs.set_coverage = static_cast<double>(rs.covered.count()) / static_cast<double>(data.n_instances());
    return rs;
}

/// Pool whose covers are given directly as instance-id lists.
inline RulePool pool_from_sets(const std::vector<std::vector<std::size_t>>& sets, std::size_t n) {
    RulePool pool;
    for (std::size_t s = 0; s < sets.size(); ++s) {
        PooledRule pr;
        pr.rule.conditions.push_back({s, 0, 0, 0});
        pr.metrics.cover = Bitset(n);
        for (auto i : sets[s]) {
            pr.metrics.cover.set(i);
        }
        pr.metrics.coverage_count = pr.metrics.cover.count();
        pr.metrics.correct_count = pr.metrics.coverage_count;
        pr.metrics.fidelity = 1.0;
        pr.metrics.length = 1;
        pr.metrics.valid = pr.metrics.coverage_count > 0;
        pool.rules.push_back(std::move(pr));
    }
    return pool;
}

}  // namespace sure::fixtures
