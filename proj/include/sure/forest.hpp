#pragma once

// CART surrogate trees and random forests grown on black-box predictions.
//
// Split search runs over discretized codes only: a split on feature f at bin b
// sends rows with code < b left and code >= b right.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <random>
#include <thread>
#include <variant>
#include <vector>

#include "json.hpp"
#include "sure/common.hpp"
#include "sure/tabular.hpp"

namespace sure {

using NodeId = std::uint32_t;

struct SplitNode {
    NodeId node_id = 0;
    std::optional<FeatureIndex> feature;
    BinIndex threshold_bin = 0;
    std::optional<NodeId> left_child;
    std::optional<NodeId> right_child;
    std::vector<std::uint32_t> class_counts;
    std::uint32_t depth = 0;

    bool is_leaf() const { return !feature.has_value(); }
    bool operator==(const SplitNode&) const = default;
};

struct SurrogateTree {
    std::vector<SplitNode> nodes;  // nodes[0] is the root

    const SplitNode& root() const { return nodes.front(); }
    std::size_t depth() const {
        std::uint32_t d = 0;
        for (const auto& n : nodes) {
            d = std::max(d, n.depth);
        }
        return d;
    }
    bool operator==(const SurrogateTree&) const = default;
};

enum class FeatureSubset { sqrt, all, fixed };

struct ForestConfig {
    std::size_t n_trees = 100;
    std::optional<std::size_t> max_depth;  // unlimited when empty
    std::size_t min_samples_leaf = 1;
    FeatureSubset features_per_split = FeatureSubset::sqrt;
    std::size_t fixed_features = 1;  // used with FeatureSubset::fixed
    std::uint64_t rng_seed = 42;
    /// Worker threads; 0 picks hardware concurrency. Output does not depend on it.
    std::size_t n_threads = 0;

    std::size_t features_for(std::size_t n_features) const {
        switch (features_per_split) {
        case FeatureSubset::all:
            return n_features;
        case FeatureSubset::fixed:
            return std::clamp<std::size_t>(fixed_features, 1, n_features);
        case FeatureSubset::sqrt:
        default:
            return std::clamp<std::size_t>(
                static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(n_features)))), 1,
                n_features);
        }
    }

    void validate() const {
        if (n_trees == 0) {
            throw Error("n_trees must be positive");
        }
        if (max_depth && *max_depth == 0) {
            throw Error("max_depth must be positive");
        }
        if (min_samples_leaf == 0) {
            throw Error("min_samples_leaf must be positive");
        }
        if (features_per_split == FeatureSubset::fixed && fixed_features == 0) {
            throw Error("fixed feature count must be positive");
        }
    }
};

struct SurrogateForest {
    std::vector<SurrogateTree> trees;
    ForestConfig config;
    /// Row indices drawn for each tree's bootstrap sample.
    std::vector<std::vector<std::uint32_t>> bootstrap_indices;
    std::vector<std::string> warnings;
};

/// Majority class of a count vector; ties go to the lowest class id.
inline ClassId argmax_class(std::span<const std::uint32_t> counts) {
    ClassId best = 0;
    for (std::size_t c = 1; c < counts.size(); ++c) {
        if (counts[c] > counts[best]) {
            best = static_cast<ClassId>(c);
        }
    }
    return best;
}

inline double gini(std::span<const std::uint32_t> counts) {
    double total = 0, sq = 0;
    for (auto c : counts) {
        total += c;
        sq += static_cast<double>(c) * c;
    }
    return total == 0 ? 0.0 : 1.0 - sq / (total * total);
}

namespace detail {

class TreeGrower {
public:
    TreeGrower(const DiscretizedDataset& data, const ForestConfig& config, bool subset_features,
               std::mt19937_64& rng)
        : data_(data), config_(config), subset_features_(subset_features), rng_(rng),
          k_(data.n_classes()), features_(data.n_features()) {
        for (std::size_t f = 0; f < features_.size(); ++f) {
            features_[f] = f;
        }
    }

    SurrogateTree grow(std::vector<std::uint32_t> rows) {
        tree_.nodes.clear();
        build(std::move(rows), 0);
        return std::move(tree_);
    }

private:
    struct Split {
        FeatureIndex feature = 0;
        BinIndex bin = 0;
        double score = -1;  // sum over children of sum_c count_c^2 / n_child
    };

    NodeId build(std::vector<std::uint32_t> rows, std::uint32_t depth) {
        const auto id = static_cast<NodeId>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        {
            auto& node = tree_.nodes.back();
            node.node_id = id;
            node.depth = depth;
            node.class_counts.assign(k_, 0);
            for (auto r : rows) {
                ++node.class_counts[data_.prediction(r)];
            }
        }
        const auto counts = tree_.nodes[id].class_counts;
        const auto n = rows.size();
        const bool pure = std::count_if(counts.begin(), counts.end(), [](auto c) { return c > 0; }) <= 1;
        if (pure || (config_.max_depth && depth >= *config_.max_depth) || n < 2 * config_.min_samples_leaf) {
            return id;
        }
        auto split = best_split(rows, counts);
        if (!split) {
            return id;
        }
        std::vector<std::uint32_t> left, right;
        for (auto r : rows) {
            (data_.code(r, split->feature) < split->bin ? left : right).push_back(r);
        }
        rows.clear();
        rows.shrink_to_fit();
        const NodeId l = build(std::move(left), depth + 1);
        const NodeId rgt = build(std::move(right), depth + 1);
        auto& node = tree_.nodes[id];
        node.feature = split->feature;
        node.threshold_bin = split->bin;
        node.left_child = l;
        node.right_child = rgt;
        return id;
    }

    std::optional<Split> best_split(const std::vector<std::uint32_t>& rows,
                                    const std::vector<std::uint32_t>& counts) {
        const std::size_t d = features_.size();
        std::size_t n_try = d;
        if (subset_features_) {
            n_try = config_.features_for(d);
            // Partial Fisher-Yates: the first n_try entries become the sample.
            for (std::size_t i = 0; i < n_try; ++i) {
                std::uniform_int_distribution<std::size_t> pick(i, d - 1);
                std::swap(features_[i], features_[pick(rng_)]);
            }
        } else {
            std::sort(features_.begin(), features_.end());
        }
        const double n = static_cast<double>(rows.size());
        double parent = 0;
        for (auto c : counts) {
            parent += static_cast<double>(c) * c;
        }
        parent /= n;
        const double eps = 1e-12 * std::max(1.0, n);

        std::optional<Split> best;
        for (std::size_t t = 0; t < n_try; ++t) {
            const FeatureIndex f = features_[t];
            const std::size_t bins = data_.scheme().effective_bins(f);
            if (bins < 2) {
                continue;
            }
            hist_.assign(bins * k_, 0);
            for (auto r : rows) {
                ++hist_[data_.code(r, f) * k_ + data_.prediction(r)];
            }
            left_.assign(k_, 0);
            std::size_t n_left = 0;
            for (BinIndex b = 1; b < bins; ++b) {
                for (std::size_t c = 0; c < k_; ++c) {
                    left_[c] += hist_[(b - 1) * k_ + c];
                    n_left += hist_[(b - 1) * k_ + c];
                }
                const std::size_t n_right = rows.size() - n_left;
                if (n_left < config_.min_samples_leaf || n_right < config_.min_samples_leaf) {
                    continue;
                }
                double sl = 0, sr = 0;
                for (std::size_t c = 0; c < k_; ++c) {
                    const double cl = left_[c];
                    const double cr = static_cast<double>(counts[c]) - cl;
                    sl += cl * cl;
                    sr += cr * cr;
                }
                const double score = sl / static_cast<double>(n_left) + sr / static_cast<double>(n_right);
                if (score > parent + eps && (!best || score > best->score + eps)) {
                    best = Split{f, b, score};
                }
            }
        }
        return best;
    }

    const DiscretizedDataset& data_;
    const ForestConfig& config_;
    bool subset_features_;
    std::mt19937_64& rng_;
    std::size_t k_;
    std::vector<FeatureIndex> features_;
    std::vector<std::uint32_t> hist_;
    std::vector<std::uint32_t> left_;
    SurrogateTree tree_;
};

inline void check_trainable(const DiscretizedDataset& data) {
    if (data.n_instances() == 0) {
        throw Error("cannot train on an empty dataset");
    }
}

inline bool single_class(const DiscretizedDataset& data) {
    const auto& p = data.base().predictions;
    return std::adjacent_find(p.begin(), p.end(), std::not_equal_to<>()) == p.end();
}

}  // namespace detail

/// Single surrogate decision tree: every row once, all features at each node.
inline SurrogateTree train_single_tree(const DiscretizedDataset& data, const ForestConfig& config = {}) {
    config.validate();
    detail::check_trainable(data);
    std::mt19937_64 rng(mix_seed(config.rng_seed, std::numeric_limits<std::uint64_t>::max()));
    std::vector<std::uint32_t> rows(data.n_instances());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i] = static_cast<std::uint32_t>(i);
    }
    return detail::TreeGrower(data, config, false, rng).grow(std::move(rows));
}

inline SurrogateForest train_forest(const DiscretizedDataset& data, const ForestConfig& config = {},
                                    const Deadline& deadline = {}) {
    config.validate();
    detail::check_trainable(data);
    SurrogateForest forest;
    forest.config = config;
    forest.trees.resize(config.n_trees);
    forest.bootstrap_indices.resize(config.n_trees);
    if (detail::single_class(data)) {
        forest.warnings.push_back("predictions contain a single class; every tree is a single leaf");
    }

    const std::size_t n = data.n_instances();
    auto train_one = [&](std::size_t t) {
        std::mt19937_64 rng(mix_seed(config.rng_seed, t));
        std::uniform_int_distribution<std::uint32_t> draw(0, static_cast<std::uint32_t>(n - 1));
        std::vector<std::uint32_t> sample(n);
        for (auto& s : sample) {
            s = draw(rng);
        }
        forest.bootstrap_indices[t] = sample;
        forest.trees[t] = detail::TreeGrower(data, config, true, rng).grow(std::move(sample));
    };

    std::size_t workers = config.n_threads ? config.n_threads : std::thread::hardware_concurrency();
    workers = std::clamp<std::size_t>(workers, 1, config.n_trees);
    if (workers == 1) {
        for (std::size_t t = 0; t < config.n_trees; ++t) {
            deadline.check("forest training");
            train_one(t);
        }
        return forest;
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> timed_out{false};
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t t = next++; t < config.n_trees && !timed_out; t = next++) {
                    if (deadline.expired()) {
                        timed_out = true;
                        return;
                    }
                    train_one(t);
                }
            });
        }
    }
    if (timed_out) {
        throw TimeoutError("time budget exceeded during forest training");
    }
    return forest;
}

inline ClassId tree_predict(const SurrogateTree& tree, std::span<const BinIndex> codes) {
    const SplitNode* node = &tree.nodes.at(0);
    while (!node->is_leaf()) {
        if (*node->feature >= codes.size()) {
            throw Error("code vector shorter than the tree's feature space");
        }
        node = &tree.nodes[codes[*node->feature] < node->threshold_bin ? *node->left_child : *node->right_child];
    }
    return argmax_class(node->class_counts);
}

// ---------------------------------------------------------------------------
// Serialization

inline const char* to_string(FeatureSubset s) {
    switch (s) {
    case FeatureSubset::all:
        return "all";
    case FeatureSubset::fixed:
        return "fixed";
    case FeatureSubset::sqrt:
    default:
        return "sqrt";
    }
}

inline FeatureSubset feature_subset_from_string(std::string_view s) {
    if (s == "sqrt") {
        return FeatureSubset::sqrt;
    }
    if (s == "all") {
        return FeatureSubset::all;
    }
    if (s == "fixed") {
        return FeatureSubset::fixed;
    }
    throw Error("unknown features_per_split: " + std::string(s));
}

inline nlohmann::json to_json(const ForestConfig& c) {
    return {{"n_trees", c.n_trees},
            {"max_depth", c.max_depth ? nlohmann::json(*c.max_depth) : nlohmann::json(nullptr)},
            {"min_samples_leaf", c.min_samples_leaf},
            {"features_per_split", to_string(c.features_per_split)},
            {"fixed_features", c.fixed_features},
            {"rng_seed", c.rng_seed}};
}

inline ForestConfig forest_config_from_json(const nlohmann::json& j, ForestConfig c = {}) {
    if (j.contains("n_trees")) {
        c.n_trees = j.at("n_trees").get<std::size_t>();
    }
    if (j.contains("max_depth")) {
        c.max_depth = j.at("max_depth").is_null() ? std::nullopt
                                                  : std::optional<std::size_t>(j.at("max_depth").get<std::size_t>());
    }
    if (j.contains("min_samples_leaf")) {
        c.min_samples_leaf = j.at("min_samples_leaf").get<std::size_t>();
    }
    if (j.contains("features_per_split")) {
        c.features_per_split = feature_subset_from_string(j.at("features_per_split").get<std::string>());
    }
    if (j.contains("fixed_features")) {
        c.fixed_features = j.at("fixed_features").get<std::size_t>();
    }
    if (j.contains("rng_seed")) {
        c.rng_seed = j.at("rng_seed").get<std::uint64_t>();
    }
    return c;
}

inline nlohmann::json to_json(const SurrogateTree& tree) {
    nlohmann::json nodes = nlohmann::json::array();
    for (const auto& n : tree.nodes) {
        nlohmann::json jn = {{"id", n.node_id}, {"depth", n.depth}, {"class_counts", n.class_counts}};
        if (!n.is_leaf()) {
            jn["feature"] = *n.feature;
            jn["threshold_bin"] = n.threshold_bin;
            jn["left"] = *n.left_child;
            jn["right"] = *n.right_child;
        }
        nodes.push_back(std::move(jn));
    }
    return {{"nodes", std::move(nodes)}};
}

inline SurrogateTree tree_from_json(const nlohmann::json& j) {
    SurrogateTree tree;
    for (const auto& jn : j.at("nodes")) {
        SplitNode n;
        n.node_id = jn.at("id").get<NodeId>();
        n.depth = jn.at("depth").get<std::uint32_t>();
        n.class_counts = jn.at("class_counts").get<std::vector<std::uint32_t>>();
        if (jn.contains("feature")) {
            n.feature = jn.at("feature").get<FeatureIndex>();
            n.threshold_bin = jn.at("threshold_bin").get<BinIndex>();
            n.left_child = jn.at("left").get<NodeId>();
            n.right_child = jn.at("right").get<NodeId>();
        }
        tree.nodes.push_back(std::move(n));
    }
    return tree;
}

inline nlohmann::json to_json(const SurrogateForest& forest) {
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : forest.trees) {
        trees.push_back(to_json(t));
    }
    return {{"format", "sure.forest"},
            {"version", kFormatVersion},
            {"config", to_json(forest.config)},
            {"trees", std::move(trees)},
            {"bootstrap_indices", forest.bootstrap_indices},
            {"warnings", forest.warnings}};
}

inline SurrogateForest forest_from_json(const nlohmann::json& j) {
    if (j.at("format") != "sure.forest" || j.at("version") != kFormatVersion) {
        throw Error("unsupported forest document");
    }
    SurrogateForest f;
    f.config = forest_config_from_json(j.at("config"));
    for (const auto& jt : j.at("trees")) {
        f.trees.push_back(tree_from_json(jt));
    }
    f.bootstrap_indices = j.at("bootstrap_indices").get<std::vector<std::vector<std::uint32_t>>>();
    f.warnings = j.at("warnings").get<std::vector<std::string>>();
    return f;
}

}  // namespace sure
