#pragma once

// Rule filtering, pairwise overlap, the parameter sweep harness and the
// forest-vs-single-tree comparison harness.

#include <atomic>
#include <chrono>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <set>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sure/pipeline.hpp"

namespace sure {

struct FilterSpec {
    std::set<FeatureIndex> required_features;
    std::map<FeatureIndex, std::set<BinIndex>> feature_values;
    std::set<ClassId> predictions;  // empty: any class

    bool empty() const { return required_features.empty() && feature_values.empty() && predictions.empty(); }
};

inline bool rule_matches(const Rule& rule, const FilterSpec& spec) {
    for (auto f : spec.required_features) {
        if (!rule.find(f)) {
            return false;
        }
    }
    for (const auto& [f, allowed] : spec.feature_values) {
        const Condition* c = rule.find(f);
        if (!c) {
            continue;
        }
        auto it = allowed.lower_bound(c->bin_lo);
        if (it == allowed.end() || *it > c->bin_hi) {
            return false;
        }
    }
    return spec.predictions.empty() || spec.predictions.count(rule.consequent) > 0;
}

inline std::vector<std::size_t> filter_rules(const MinimalRuleSet& rs, const FilterSpec& spec) {
    std::vector<std::size_t> ids;
    for (std::size_t i = 0; i < rs.rules.size(); ++i) {
        if (rule_matches(rs.rules[i].rule, spec)) {
            ids.push_back(i);
        }
    }
    return ids;
}

struct OverlapEntry {
    std::size_t rule_id = 0;
    std::vector<std::uint32_t> per_class;
    std::size_t total = 0;
};

struct OverlapReport {
    std::size_t anchor = 0;
    std::vector<OverlapEntry> entries;
};

inline OverlapReport overlap(const MinimalRuleSet& rs, std::size_t anchor, std::span<const std::size_t> others,
                             const CoverIndex& index) {
    auto check = [&](std::size_t id) {
        if (id >= rs.rules.size()) {
            throw Error("unknown rule id " + std::to_string(id));
        }
    };
    check(anchor);
    OverlapReport report;
    report.anchor = anchor;
    const Bitset anchor_cover = index.cover(rs.rules[anchor].rule.conditions);
    for (auto id : others) {
        check(id);
        const Bitset both = anchor_cover & index.cover(rs.rules[id].rule.conditions);
        OverlapEntry e;
        e.rule_id = id;
        e.total = both.count();
        for (ClassId c = 0; c < index.n_classes(); ++c) {
            e.per_class.push_back(static_cast<std::uint32_t>((both & index.predicted(c)).count()));
        }
        report.entries.push_back(std::move(e));
    }
    return report;
}

inline OverlapReport overlap(const MinimalRuleSet& rs, std::size_t anchor, std::span<const std::size_t> others,
                             const DiscretizedDataset& data) {
    return overlap(rs, anchor, others, CoverIndex(data));
}

inline nlohmann::json to_json(const OverlapReport& r) {
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : r.entries) {
        entries.push_back({{"rule_id", e.rule_id}, {"per_class", e.per_class}, {"total", e.total}});
    }
    return {{"anchor", r.anchor}, {"entries", std::move(entries)}};
}

// ---------------------------------------------------------------------------
// Parameter sweep

struct SweepGrid {
    std::vector<std::size_t> num_bin{2, 3, 4, 5};
    std::vector<std::size_t> min_coverage{10, 20, 30, 40, 50};
    std::vector<std::size_t> max_num_condition{2, 3, 4, 5};
    std::vector<double> min_fidelity{0.70, 0.75, 0.80, 0.85, 0.90};
    /// Per-cell budget in seconds; 0 disables.
    double timeout_seconds = 0;
    /// Parallel cells; 0 picks hardware concurrency.
    std::size_t n_threads = 0;
};

struct SweepRow {
    std::string parameter;
    double value = 0;
    double mean_number_of_rules = 0;
    double mean_set_coverage = 0;
    double mean_response_time_seconds = 0;
    std::size_t runs = 0;
    std::size_t missing = 0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
};

struct SweepCell {
    std::size_t bins_i = 0, cov_i = 0, len_i = 0, fid_i = 0;
    bool ok = false;
    double number_of_rules = 0;
    double set_coverage = 0;
    double seconds = 0;
};

inline SweepGrid sweep_grid_from_json(const nlohmann::json& j) {
    SweepGrid g;
    if (j.contains("num_bin")) {
        g.num_bin = j.at("num_bin").get<std::vector<std::size_t>>();
    }
    if (j.contains("min_coverage")) {
        g.min_coverage = j.at("min_coverage").get<std::vector<std::size_t>>();
    }
    if (j.contains("max_num_condition")) {
        g.max_num_condition = j.at("max_num_condition").get<std::vector<std::size_t>>();
    }
    if (j.contains("min_fidelity")) {
        g.min_fidelity = j.at("min_fidelity").get<std::vector<double>>();
    }
    if (j.contains("timeout_seconds")) {
        g.timeout_seconds = j.at("timeout_seconds").get<double>();
    }
    if (j.contains("threads")) {
        g.n_threads = j.at("threads").get<std::size_t>();
    }
    if (g.num_bin.empty() || g.min_coverage.empty() || g.max_num_condition.empty() || g.min_fidelity.empty()) {
        throw Error("every sweep parameter needs at least one value");
    }
    return g;
}

/// Every combination of the four grids runs once (seeded from its
/// coordinates); each (parameter, value) row averages the runs that share
/// that value, i.e. over all combinations of the other three parameters.
inline SweepResult run_sweep(std::shared_ptr<const Dataset> dataset, const SweepGrid& grid,
                             const ForestConfig& base_forest = {}) {
    std::vector<SweepCell> cells;
    for (std::size_t a = 0; a < grid.num_bin.size(); ++a) {
        for (std::size_t b = 0; b < grid.min_coverage.size(); ++b) {
            for (std::size_t c = 0; c < grid.max_num_condition.size(); ++c) {
                for (std::size_t d = 0; d < grid.min_fidelity.size(); ++d) {
                    cells.push_back({a, b, c, d});
                }
            }
        }
    }
    auto run_cell = [&](SweepCell& cell) {
        PipelineConfig cfg;
        cfg.constraints.num_bin = grid.num_bin[cell.bins_i];
        cfg.constraints.min_coverage = grid.min_coverage[cell.cov_i];
        cfg.constraints.max_num_condition = grid.max_num_condition[cell.len_i];
        cfg.constraints.min_fidelity = grid.min_fidelity[cell.fid_i];
        cfg.forest = base_forest;
        cfg.forest.n_threads = 1;
        std::uint64_t seed = base_forest.rng_seed;
        for (auto coord : {cell.bins_i, cell.cov_i, cell.len_i, cell.fid_i}) {
            seed = mix_seed(seed, coord);
        }
        cfg.forest.rng_seed = seed;
        const Deadline deadline = grid.timeout_seconds > 0
                                      ? Deadline(std::chrono::duration<double>(grid.timeout_seconds))
                                      : Deadline();
        try {
            auto g = run_pipeline(dataset, cfg, deadline);
            cell.ok = true;
            cell.number_of_rules = static_cast<double>(g.rule_set.rules.size());
            cell.set_coverage = g.rule_set.set_coverage;
            cell.seconds = g.elapsed_seconds;
        } catch (const TimeoutError&) {
            cell.ok = false;
        }
    };

    std::size_t workers = grid.n_threads ? grid.n_threads : std::thread::hardware_concurrency();
    workers = std::clamp<std::size_t>(workers, 1, cells.size());
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) {
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < cells.size(); i = next++) {
                    try {
                        run_cell(cells[i]);
                    } catch (...) {
                        std::lock_guard lock(failure_mutex);
                        failure = std::current_exception();
                    }
                }
            });
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }

    SweepResult result;
    auto aggregate = [&](const char* name, std::size_t count, auto value_of, auto coord_of) {
        for (std::size_t v = 0; v < count; ++v) {
            SweepRow row;
            row.parameter = name;
            row.value = value_of(v);
            for (const auto& cell : cells) {
                if (coord_of(cell) != v) {
                    continue;
                }
                if (!cell.ok) {
                    ++row.missing;
                    continue;
                }
                ++row.runs;
                row.mean_number_of_rules += cell.number_of_rules;
                row.mean_set_coverage += cell.set_coverage;
                row.mean_response_time_seconds += cell.seconds;
            }
            if (row.runs) {
                const double k = static_cast<double>(row.runs);
                row.mean_number_of_rules /= k;
                row.mean_set_coverage /= k;
                row.mean_response_time_seconds /= k;
            }
            result.rows.push_back(row);
        }
    };
    aggregate("num_bin", grid.num_bin.size(), [&](std::size_t v) { return double(grid.num_bin[v]); },
              [](const SweepCell& c) { return c.bins_i; });
    aggregate("min_coverage", grid.min_coverage.size(), [&](std::size_t v) { return double(grid.min_coverage[v]); },
              [](const SweepCell& c) { return c.cov_i; });
    aggregate("max_num_condition", grid.max_num_condition.size(),
              [&](std::size_t v) { return double(grid.max_num_condition[v]); },
              [](const SweepCell& c) { return c.len_i; });
    aggregate("min_fidelity", grid.min_fidelity.size(), [&](std::size_t v) { return grid.min_fidelity[v]; },
              [](const SweepCell& c) { return c.fid_i; });
    return result;
}

inline void write_csv(std::ostream& out, const SweepResult& r) {
    out << "parameter,value,mean_number_of_rules,mean_set_coverage,mean_response_time_seconds,runs,missing\n";
    for (const auto& row : r.rows) {
        out << row.parameter << ',' << detail::format_value(row.value) << ','
            << detail::format_value(row.mean_number_of_rules) << ',' << detail::format_value(row.mean_set_coverage)
            << ',' << detail::format_value(row.mean_response_time_seconds) << ',' << row.runs << ','
            << row.missing << '\n';
    }
}

// ---------------------------------------------------------------------------
// Forest (HSR) versus single surrogate tree (SDT)

struct MethodMetrics {
    double set_coverage = 0;
    std::size_t number_of_rules = 0;
    double avg_num_conditions = 0;
};

struct ComparisonRow {
    std::size_t max_length = 0;
    MethodMetrics hsr;
    MethodMetrics sdt;
};

struct ComparisonReport {
    Constraints base;
    std::vector<ComparisonRow> rows;
};

/// Fixed comparison parameters: 85% fidelity, 5 instances, 3 bins.
inline Constraints comparison_constraints() {
    Constraints c;
    c.min_fidelity = 0.85;
    c.min_coverage = 5;
    c.num_bin = 3;
    return c;
}

inline ComparisonReport compare_hsr_sdt(std::shared_ptr<const Dataset> dataset, std::size_t max_length = 10,
                                        const ForestConfig& forest_config = {},
                                        double stop_fraction = kDefaultStopFraction) {
    if (max_length < 1) {
        throw Error("max length must be at least 1");
    }
    ComparisonReport report;
    report.base = comparison_constraints();
    const auto data = discretize(dataset, compute_binning(*dataset, report.base.num_bin));
    const auto forest = train_forest(data, forest_config);
    const auto single = train_single_tree(data, forest_config);
    auto measure = [&](std::span<const SurrogateTree> trees, const Constraints& c) {
        const auto pool = extract_rules(trees, data, c);
        const auto rs = greedy_minimal_set(pool, data, stop_fraction);
        return MethodMetrics{rs.set_coverage, rs.rules.size(), average_length(rs)};
    };
    for (std::size_t len = 1; len <= max_length; ++len) {
        Constraints c = report.base;
        c.max_num_condition = len;
        ComparisonRow row;
        row.max_length = len;
        row.hsr = measure(forest.trees, c);
        row.sdt = measure(std::span<const SurrogateTree>(&single, 1), c);
        report.rows.push_back(row);
    }
    return report;
}

inline void write_csv(std::ostream& out, const ComparisonReport& r) {
    out << "max_length,hsr_set_coverage,hsr_number_of_rules,hsr_avg_num_conditions,"
           "sdt_set_coverage,sdt_number_of_rules,sdt_avg_num_conditions\n";
    for (const auto& row : r.rows) {
        out << row.max_length << ',' << detail::format_value(row.hsr.set_coverage) << ','
            << row.hsr.number_of_rules << ',' << detail::format_value(row.hsr.avg_num_conditions) << ','
            << detail::format_value(row.sdt.set_coverage) << ',' << row.sdt.number_of_rules << ','
            << detail::format_value(row.sdt.avg_num_conditions) << '\n';
    }
}

}  // namespace sure
