#include <gtest/gtest.h>

#include "support.hpp"
#include "sure/forest.hpp"

using namespace sure;
using namespace sure::fixtures;

namespace {

std::shared_ptr<const DiscretizedDataset> diabetes_coded(std::size_t num_bin = 3) {
    auto ds = diabetes();
    return std::make_shared<const DiscretizedDataset>(discretize(ds, compute_binning(*ds, num_bin)));
}

void check_structure(const SurrogateTree& tree, std::size_t n_rows, std::size_t k) {
    ASSERT_FALSE(tree.nodes.empty());
    std::vector<int> parents(tree.nodes.size(), 0);
    std::uint32_t root_total = 0;
    for (auto c : tree.root().class_counts) {
        root_total += c;
    }
    EXPECT_EQ(root_total, n_rows);
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
        const auto& n = tree.nodes[id];
        EXPECT_EQ(n.node_id, id);
        ASSERT_EQ(n.class_counts.size(), k);
        if (n.is_leaf()) {
            EXPECT_FALSE(n.left_child);
            EXPECT_FALSE(n.right_child);
            continue;
        }
        ASSERT_TRUE(n.left_child && n.right_child);
        const auto& l = tree.nodes.at(*n.left_child);
        const auto& r = tree.nodes.at(*n.right_child);
        ++parents[*n.left_child];
        ++parents[*n.right_child];
        EXPECT_EQ(l.depth, n.depth + 1);
        EXPECT_EQ(r.depth, n.depth + 1);
        double nl = 0, nr = 0;
        for (std::size_t c = 0; c < k; ++c) {
            EXPECT_EQ(n.class_counts[c], l.class_counts[c] + r.class_counts[c]);
            nl += l.class_counts[c];
            nr += r.class_counts[c];
        }
        // Accepted splits strictly reduce weighted impurity.
        const double weighted = (nl * gini(l.class_counts) + nr * gini(r.class_counts)) / (nl + nr);
        EXPECT_LT(weighted, gini(n.class_counts) + 1e-12);
        EXPECT_GT(nl, 0);
        EXPECT_GT(nr, 0);
    }
    // Every non-root node has exactly one parent, so the tree is connected and acyclic.
    EXPECT_EQ(parents[0], 0);
    for (std::size_t id = 1; id < parents.size(); ++id) {
        EXPECT_EQ(parents[id], 1) << "node " << id;
    }
}

}  // namespace

TEST(Forest, DefaultHundredTrees) {
    auto data = diabetes_coded();
    auto forest = train_forest(*data);
    EXPECT_EQ(forest.trees.size(), 100u);
    ASSERT_EQ(forest.bootstrap_indices.size(), 100u);
    for (std::size_t t = 0; t < forest.trees.size(); ++t) {
        EXPECT_EQ(forest.bootstrap_indices[t].size(), data->n_instances());
        check_structure(forest.trees[t], data->n_instances(), data->n_classes());
    }
    EXPECT_TRUE(forest.warnings.empty());
}

TEST(Forest, SameSeedSameForest) {
    auto data = diabetes_coded();
    ForestConfig c;
    c.n_trees = 20;
    c.rng_seed = 99;
    auto a = train_forest(*data, c);
    c.n_threads = 1;
    auto b = train_forest(*data, c);
    c.n_threads = 3;
    auto d = train_forest(*data, c);
    EXPECT_EQ(to_json(a.trees[0]).dump(), to_json(b.trees[0]).dump());
    EXPECT_EQ(a.trees, b.trees);
    EXPECT_EQ(a.trees, d.trees);
    c.rng_seed = 100;
    EXPECT_NE(train_forest(*data, c).trees, a.trees);
}

TEST(Forest, ConstantPredictionsGiveLeaves) {
    std::vector<std::vector<BinIndex>> codes = {{0, 1}, {1, 0}, {2, 1}, {1, 1}};
    auto coded = make_coded(codes, {3, 2}, {1, 1, 1, 1}, {0, 1, 0, 1});
    auto forest = train_forest(*coded.data, ForestConfig{.n_trees = 5});
    ASSERT_FALSE(forest.warnings.empty());
    for (const auto& t : forest.trees) {
        EXPECT_EQ(t.nodes.size(), 1u);
    }
    EXPECT_EQ(train_single_tree(*coded.data).nodes.size(), 1u);
}

// Two binary features with XOR predictions: no single split separates them.
TEST(SingleTree, XorNeedsDepthTwo) {
    std::vector<std::vector<BinIndex>> codes;
    std::vector<ClassId> preds;
    // Cell frequencies are skewed so the root split strictly lowers Gini;
    // a perfectly balanced XOR has zero gain and stays a leaf.
    const std::size_t reps[2][2] = {{6, 2}, {2, 2}};
    for (BinIndex a = 0; a < 2; ++a) {
        for (BinIndex b = 0; b < 2; ++b) {
            for (std::size_t r = 0; r < reps[a][b]; ++r) {
                codes.push_back({a, b});
                preds.push_back(a ^ b);
            }
        }
    }
    auto coded = make_coded(codes, {2, 2}, preds);
    // Every depth-1 tree leaves impure children.
    for (FeatureIndex f = 0; f < 2; ++f) {
        std::uint32_t left[2] = {0, 0}, right[2] = {0, 0};
        for (std::size_t i = 0; i < codes.size(); ++i) {
            (codes[i][f] < 1 ? left : right)[preds[i]]++;
        }
        EXPECT_GT(gini(left), 0.0);
        EXPECT_GT(gini(right), 0.0);
    }
    auto tree = train_single_tree(*coded.data);
    EXPECT_GE(tree.depth(), 2u);
    for (std::size_t i = 0; i < codes.size(); ++i) {
        EXPECT_EQ(tree_predict(tree, coded.data->row_codes(i)), preds[i]);
    }
}

TEST(SingleTree, BalancedXorHasNoImprovingSplit) {
    std::vector<std::vector<BinIndex>> codes = {{0, 0}, {0, 1}, {1, 0}, {1, 1}};
    auto coded = make_coded(codes, {2, 2}, {0, 1, 1, 0});
    EXPECT_EQ(train_single_tree(*coded.data).nodes.size(), 1u);
}

TEST(SingleTree, Deterministic) {
    auto data = diabetes_coded();
    EXPECT_EQ(to_json(train_single_tree(*data)).dump(), to_json(train_single_tree(*data)).dump());
    check_structure(train_single_tree(*data), data->n_instances(), data->n_classes());
}

TEST(SingleTree, ReplaysConsistentTrainingRows) {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        auto coded = random_coded(rng, 120, 4, 4, 3, 0.0);
        auto tree = train_single_tree(*coded.data);
        // Rows sharing a code vector share a prediction, so a full tree is exact.
        for (std::size_t i = 0; i < coded.data->n_instances(); ++i) {
            ASSERT_EQ(tree_predict(tree, coded.data->row_codes(i)), coded.data->prediction(i));
        }
    }
}

TEST(TreePredict, ArgmaxAndTies) {
    SurrogateTree t;
    t.nodes.push_back({0, std::nullopt, 0, std::nullopt, std::nullopt, {3, 7}, 0});
    std::vector<BinIndex> codes = {0};
    EXPECT_EQ(tree_predict(t, codes), 1u);
    t.nodes[0].class_counts = {5, 5};
    EXPECT_EQ(tree_predict(t, codes), 0u);
}

TEST(Forest, DepthCapAndLeafSize) {
    auto data = diabetes_coded();
    ForestConfig c;
    c.n_trees = 10;
    c.max_depth = 2;
    c.min_samples_leaf = 20;
    for (const auto& t : train_forest(*data, c).trees) {
        EXPECT_LE(t.depth(), 2u);
        for (const auto& n : t.nodes) {
            std::uint32_t total = 0;
            for (auto x : n.class_counts) {
                total += x;
            }
            EXPECT_GE(total, 20u);
        }
    }
}

TEST(Forest, FeaturesPerSplit) {
    ForestConfig c;
    EXPECT_EQ(c.features_for(7), 3u);
    EXPECT_EQ(c.features_for(9), 3u);
    EXPECT_EQ(c.features_for(10), 4u);
    c.features_per_split = FeatureSubset::all;
    EXPECT_EQ(c.features_for(7), 7u);
    c.features_per_split = FeatureSubset::fixed;
    c.fixed_features = 12;
    EXPECT_EQ(c.features_for(7), 7u);
}

TEST(Forest, ConfigValidation) {
    EXPECT_THROW(ForestConfig{.n_trees = 0}.validate(), Error);
    EXPECT_THROW(ForestConfig{.max_depth = 0}.validate(), Error);
    EXPECT_THROW(ForestConfig{.min_samples_leaf = 0}.validate(), Error);
}

TEST(Forest, JsonRoundTrip) {
    auto data = diabetes_coded();
    ForestConfig c;
    c.n_trees = 5;
    c.max_depth = 6;
    c.features_per_split = FeatureSubset::fixed;
    c.fixed_features = 2;
    auto forest = train_forest(*data, c);
    auto back = forest_from_json(nlohmann::json::parse(to_json(forest).dump()));
    EXPECT_EQ(back.trees, forest.trees);
    EXPECT_EQ(to_json(back.config), to_json(forest.config));
    EXPECT_EQ(back.bootstrap_indices, forest.bootstrap_indices);
}

TEST(Forest, DeadlineStopsTraining) {
    auto data = diabetes_coded();
    const Deadline expired(std::chrono::duration<double>(0));
    EXPECT_THROW(train_forest(*data, ForestConfig{.n_threads = 1}, expired), TimeoutError);
    EXPECT_THROW(train_forest(*data, ForestConfig{.n_threads = 2}, expired), TimeoutError);
}
