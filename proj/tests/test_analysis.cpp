#include <gtest/gtest.h>

#include <sstream>

#include "support.hpp"
#include "sure/analysis.hpp"

using namespace sure;
using namespace sure::fixtures;

namespace {

struct Generated {
    std::shared_ptr<const Dataset> dataset;
    GenerationResult result;
};

const Generated& diabetes_generation() {
    static const Generated g = [] {
        PipelineConfig cfg;
        cfg.forest.n_trees = 40;
        return Generated{diabetes(), run_pipeline(diabetes(), cfg)};
    }();
    return g;
}

}  // namespace

TEST(Filter, EmptySpecMatchesAll) {
    const auto& rs = diabetes_generation().result.rule_set;
    auto ids = filter_rules(rs, FilterSpec{});
    EXPECT_EQ(ids.size(), rs.rules.size());
}

TEST(Filter, ByPrediction) {
    const auto& rs = diabetes_generation().result.rule_set;
    FilterSpec spec;
    spec.predictions = {1};
    for (auto id : filter_rules(rs, spec)) {
        EXPECT_EQ(rs.rules[id].rule.consequent, 1u);
    }
    EXPECT_EQ(filter_rules(rs, spec), oracle_filter(rs, spec));
}

TEST(Filter, ByFeatureExistence) {
    const auto& g = diabetes_generation();
    FilterSpec spec;
    spec.required_features = {*g.dataset->feature_index("Glucose")};
    EXPECT_EQ(filter_rules(g.result.rule_set, spec), oracle_filter(g.result.rule_set, spec));
    EXPECT_FALSE(filter_rules(g.result.rule_set, spec).empty());
}

TEST(Filter, RandomSpecsMatchOracleAndCompose) {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        auto coded = random_coded(rng, 60, 4, 4, 3);
        std::vector<Rule> rules;
        for (int r = 0; r < 8; ++r) {
            rules.push_back(random_rule(rng, *coded.data, 3));
        }
        auto rs = make_rule_set(rules, *coded.data);
        auto a = random_spec(rng, *coded.data);
        auto b = random_spec(rng, *coded.data);
        ASSERT_EQ(filter_rules(rs, a), oracle_filter(rs, a));
        // The conjunction of two specs selects the intersection of their
        // results. Value constraints on one feature do not compose that way
        // (an interval can meet {low} and {high} but not their intersection),
        // so b only constrains features a leaves alone.
        for (const auto& [f, allowed] : a.feature_values) {
            b.feature_values.erase(f);
        }
        FilterSpec both = a;
        both.required_features.insert(b.required_features.begin(), b.required_features.end());
        both.feature_values.insert(b.feature_values.begin(), b.feature_values.end());
        if (!a.predictions.empty() && !b.predictions.empty()) {
            std::set<ClassId> common;
            for (auto c : a.predictions) {
                if (b.predictions.count(c)) {
                    common.insert(c);
                }
            }
            if (common.empty()) {
                continue;  // an empty prediction set means "any", not "none"
            }
            both.predictions = common;
        } else {
            both.predictions = a.predictions.empty() ? b.predictions : a.predictions;
        }
        auto ra = filter_rules(rs, a), rb = filter_rules(rs, b);
        std::vector<std::size_t> inter;
        std::set_intersection(ra.begin(), ra.end(), rb.begin(), rb.end(), std::back_inserter(inter));
        ASSERT_EQ(filter_rules(rs, both), inter);
    }
}

TEST(Overlap, SelfIsIdentity) {
    const auto& g = diabetes_generation().result;
    const CoverIndex index(*g.data);
    for (std::size_t i = 0; i < g.rule_set.rules.size(); ++i) {
        std::vector<std::size_t> others = {i};
        auto report = overlap(g.rule_set, i, others, index);
        ASSERT_EQ(report.entries.size(), 1u);
        EXPECT_EQ(report.entries[0].per_class, g.rule_set.rules[i].metrics.per_class);
        EXPECT_EQ(report.entries[0].total, g.rule_set.rules[i].metrics.coverage_count);
    }
}

TEST(Overlap, DisjointRulesAreZero) {
    auto coded = make_coded({{0}, {0}, {1}, {1}}, {2}, {0, 1, 0, 1});
    Rule a, b;
    a.conditions = {{0, 0, 0, 0}};
    b.conditions = {{0, 1, 1, 0}};
    auto rs = make_rule_set({a, b}, *coded.data);
    std::vector<std::size_t> others = {1};
    auto report = overlap(rs, 0, others, *coded.data);
    EXPECT_EQ(report.entries[0].per_class, (std::vector<std::uint32_t>{0, 0}));
    EXPECT_EQ(report.entries[0].total, 0u);
}

TEST(Overlap, RandomMatchesOracleAndIsSymmetric) {
    std::mt19937_64 rng(43);
    for (int trial = 0; trial < 200; ++trial) {
        auto coded = random_coded(rng, 60, 4, 4, 3);
        std::vector<Rule> rules;
        for (int r = 0; r < 5; ++r) {
            rules.push_back(random_rule(rng, *coded.data, 3));
        }
        auto rs = make_rule_set(rules, *coded.data);
        std::vector<std::size_t> all = {0, 1, 2, 3, 4};
        for (std::size_t a = 0; a < 5; ++a) {
            auto report = overlap(rs, a, all, *coded.data);
            for (std::size_t b = 0; b < 5; ++b) {
                auto expect = oracle_overlap(*coded.data, rules[a], rules[b]);
                ASSERT_EQ(report.entries[b].per_class, expect);
                ASSERT_LE(report.entries[b].total, std::min(rs.rules[a].metrics.coverage_count,
                                                            rs.rules[b].metrics.coverage_count));
                std::vector<std::size_t> just_a = {a};
                ASSERT_EQ(overlap(rs, b, just_a, *coded.data).entries[0].total, report.entries[b].total);
            }
        }
    }
}

TEST(Overlap, BadIds) {
    const auto& g = diabetes_generation().result;
    std::vector<std::size_t> others = {g.rule_set.rules.size()};
    EXPECT_THROW(overlap(g.rule_set, 0, others, *g.data), Error);
    EXPECT_THROW(overlap(g.rule_set, g.rule_set.rules.size(), {}, *g.data), Error);
}

TEST(Sweep, SinglePointGrid) {
    SweepGrid grid;
    grid.num_bin = {3};
    grid.min_coverage = {10};
    grid.max_num_condition = {3};
    grid.min_fidelity = {0.85};
    ForestConfig fc;
    fc.n_trees = 20;
    auto result = run_sweep(diabetes(), grid, fc);
    ASSERT_EQ(result.rows.size(), 4u);
    for (const auto& row : result.rows) {
        EXPECT_EQ(row.runs, 1u);
        EXPECT_EQ(row.missing, 0u);
        EXPECT_DOUBLE_EQ(row.mean_set_coverage, result.rows[0].mean_set_coverage);
    }
    EXPECT_EQ(result.rows[0].parameter, "num_bin");
    EXPECT_EQ(result.rows[3].parameter, "min_fidelity");
}

TEST(Sweep, DefaultGridShape) {
    ForestConfig fc;
    fc.n_trees = 10;
    auto result = run_sweep(diabetes(), SweepGrid{}, fc);
    ASSERT_EQ(result.rows.size(), 4u + 5u + 4u + 5u);
    for (const auto& row : result.rows) {
        EXPECT_EQ(row.runs + row.missing, 400u / (row.parameter == "num_bin" || row.parameter == "max_num_condition"
                                                      ? 4u
                                                      : 5u));
    }
    std::ostringstream csv;
    write_csv(csv, result);
    const std::string text = csv.str();
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 19);
}

// Coverage near 1.0 across bin counts on the diabetes fixture, read as a
// mean of at least 0.9 per num_bin row with the default forest.
TEST(Sweep, DiabetesCoverageNearOneAcrossNumBin) {
    auto result = run_sweep(diabetes(), SweepGrid{});
    for (std::size_t i = 0; i < 4; ++i) {
        ASSERT_EQ(result.rows[i].parameter, "num_bin");
        EXPECT_GE(result.rows[i].mean_set_coverage, 0.9) << "num_bin = " << result.rows[i].value;
    }
}

TEST(Sweep, DeterministicAcrossThreadCounts) {
    SweepGrid grid;
    grid.num_bin = {2, 3};
    grid.min_coverage = {10, 30};
    grid.max_num_condition = {2, 3};
    grid.min_fidelity = {0.8};
    ForestConfig fc;
    fc.n_trees = 10;
    grid.n_threads = 1;
    auto a = run_sweep(diabetes(), grid, fc);
    grid.n_threads = 3;
    auto b = run_sweep(diabetes(), grid, fc);
    ASSERT_EQ(a.rows.size(), b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        EXPECT_EQ(a.rows[i].mean_number_of_rules, b.rows[i].mean_number_of_rules);
        EXPECT_EQ(a.rows[i].mean_set_coverage, b.rows[i].mean_set_coverage);
    }
}

TEST(Sweep, TimeoutsAreMissing) {
    SweepGrid grid;
    grid.num_bin = {3};
    grid.min_coverage = {10};
    grid.max_num_condition = {3};
    grid.min_fidelity = {0.85};
    grid.timeout_seconds = 1e-9;
    auto result = run_sweep(diabetes(), grid);
    for (const auto& row : result.rows) {
        EXPECT_EQ(row.runs, 0u);
        EXPECT_EQ(row.missing, 1u);
    }
}

TEST(Sweep, GridSpecJson) {
    auto g = sweep_grid_from_json(nlohmann::json::parse(R"({"num_bin": [2, 4], "threads": 2})"));
    EXPECT_EQ(g.num_bin, (std::vector<std::size_t>{2, 4}));
    EXPECT_EQ(g.min_coverage.size(), 5u);
    EXPECT_EQ(g.n_threads, 2u);
    EXPECT_THROW(sweep_grid_from_json(nlohmann::json::parse(R"({"num_bin": []})")), Error);
}

TEST(Compare, ShapeAndDirection) {
    auto report = compare_hsr_sdt(loan(), 10);
    ASSERT_EQ(report.rows.size(), 10u);
    for (const auto& row : report.rows) {
        EXPECT_GE(row.hsr.set_coverage, row.sdt.set_coverage) << "max length " << row.max_length;
    }
    EXPECT_GE(report.rows.back().sdt.avg_num_conditions, report.rows.back().hsr.avg_num_conditions);
    std::ostringstream csv;
    write_csv(csv, report);
    std::istringstream in(csv.str());
    std::string line;
    std::size_t lines = 0;
    while (std::getline(in, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 6);
        ++lines;
    }
    EXPECT_EQ(lines, 11u);
}

TEST(Compare, LengthOneIsWeakOnMultiClass) {
    // Class = (a + b) mod 3 over two 3-bin features: one condition pins a
    // single feature and leaves every class equally likely.
    std::vector<std::vector<BinIndex>> codes;
    std::vector<ClassId> preds;
    for (int rep = 0; rep < 20; ++rep) {
        for (BinIndex a = 0; a < 3; ++a) {
            for (BinIndex b = 0; b < 3; ++b) {
                codes.push_back({a, b});
                preds.push_back((a + b) % 3);
            }
        }
    }
    auto coded = make_coded(codes, {3, 3}, preds);
    auto report = compare_hsr_sdt(coded.dataset, 1);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_LT(report.rows[0].hsr.set_coverage, 0.5);
    EXPECT_LT(report.rows[0].sdt.set_coverage, 0.5);
}
