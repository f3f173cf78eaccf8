#pragma once

// End-to-end generation: binning -> forest -> pruned extraction -> greedy
// cover -> hierarchy.

#include <chrono>
#include <memory>
#include <sstream>
#include <string>

#include "json.hpp"
#include "sure/cover.hpp"
#include "sure/extraction.hpp"
#include "sure/forest.hpp"
#include "sure/hierarchy.hpp"
#include "sure/tabular.hpp"

namespace sure {

struct PipelineConfig {
    Constraints constraints;
    ForestConfig forest;
    double stop_fraction = kDefaultStopFraction;
};

struct GenerationResult {
    std::shared_ptr<const DiscretizedDataset> data;
    std::shared_ptr<const SurrogateForest> forest;
    RulePool pool;
    MinimalRuleSet rule_set;
    HsrTree hierarchy;
    PipelineConfig config;
    double elapsed_seconds = 0;

    const BinningScheme& scheme() const { return data->scheme(); }
    const Dataset& dataset() const { return data->base(); }
};

/// Runs the whole generation. `cached_forest`, when given, must have been
/// trained on the same discretization with config.forest.
inline GenerationResult run_pipeline(std::shared_ptr<const Dataset> dataset, const PipelineConfig& config,
                                     const Deadline& deadline = {},
                                     std::shared_ptr<const SurrogateForest> cached_forest = nullptr,
                                     std::shared_ptr<const DiscretizedDataset> cached_data = nullptr) {
    config.constraints.validate();
    const auto start = std::chrono::steady_clock::now();
    GenerationResult out;
    out.config = config;
    if (cached_data && cached_data->scheme().num_bin == config.constraints.num_bin) {
        out.data = std::move(cached_data);
    } else {
        auto scheme = compute_binning(*dataset, config.constraints.num_bin);
        out.data = std::make_shared<const DiscretizedDataset>(discretize(dataset, scheme));
    }
    deadline.check("binning");
    out.forest = cached_forest ? std::move(cached_forest)
                               : std::make_shared<const SurrogateForest>(train_forest(*out.data, config.forest, deadline));
    deadline.check("forest training");
    out.pool = extract_rules(*out.forest, *out.data, config.constraints, deadline);
    deadline.check("rule extraction");
    out.rule_set = greedy_minimal_set(out.pool, *out.data, config.stop_fraction);
    out.hierarchy = build_hsr(out.rule_set);
    annotate_stats(out.hierarchy, CoverIndex(*out.data));
    out.elapsed_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return out;
}

inline GenerationResult run_pipeline(const Dataset& dataset, const PipelineConfig& config, const Deadline& deadline = {}) {
    return run_pipeline(std::make_shared<const Dataset>(dataset), config, deadline);
}

inline nlohmann::json summary_json(const GenerationResult& g) {
    return {{"number_of_rules", g.rule_set.rules.size()},
            {"set_coverage", g.rule_set.set_coverage},
            {"pool_size", g.pool.rules.size()},
            {"universe_size", g.rule_set.universe_size},
            {"avg_num_conditions", average_length(g.rule_set)},
            {"hierarchy_depth", g.hierarchy.max_depth}};
}

/// Deterministic generation document. Wall-clock timing is deliberately
/// absent so identical inputs give identical bytes.
inline nlohmann::json to_json(const GenerationResult& g) {
    return {{"format", "sure.generation"},
            {"version", kFormatVersion},
            {"dataset_fingerprint", fingerprint(g.dataset())},
            {"seed", g.config.forest.rng_seed},
            {"constraints", to_json(g.config.constraints)},
            {"forest_config", to_json(g.config.forest)},
            {"stop_fraction", g.config.stop_fraction},
            {"class_names", g.dataset().class_names},
            {"binning", to_json(g.scheme())},
            {"summary", summary_json(g)},
            {"rule_set", to_json(g.rule_set, g.scheme(), g.dataset().class_names)},
            {"hierarchy", to_json(g.hierarchy, g.scheme())},
            {"forest_warnings", g.forest->warnings}};
}

/// Plain-text listing of the minimal rule set, one rule per line.
inline std::string rule_listing(const GenerationResult& g) {
    std::ostringstream out;
    out << "# " << g.rule_set.rules.size() << " rules, set coverage "
        << detail::format_value(g.rule_set.set_coverage) << "\n";
    for (std::size_t i = 0; i < g.rule_set.rules.size(); ++i) {
        const auto& pr = g.rule_set.rules[i];
        out << "R" << (i + 1) << ": " << rule_text(pr.rule, g.scheme(), g.dataset().class_names)
            << "  [fidelity " << detail::format_value(pr.metrics.fidelity) << ", coverage "
            << pr.metrics.coverage_count << "]\n";
    }
    return out.str();
}

}  // namespace sure
