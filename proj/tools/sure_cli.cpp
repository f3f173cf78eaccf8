// Command-line front end: generate, sweep, compare, export, serve, demo-labeler.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "sure/analysis.hpp"
#include "sure/labeler.hpp"
#include "sure/pipeline.hpp"
#include "sure/service.hpp"

namespace {

struct DataArgs {
    std::string data;
    std::string preds;
    std::string label_col;
    std::string delimiter = ",";
    std::vector<std::string> categorical;

    void add(CLI::App* cmd) {
        cmd->add_option("--data", data, "Delimited data table with a header row")->required()->check(CLI::ExistingFile);
        cmd->add_option("--preds", preds, "Black-box predictions, one per line")->required()->check(CLI::ExistingFile);
        cmd->add_option("--label-col", label_col, "Column holding the true label")->required();
        cmd->add_option("--delimiter", delimiter, "Field delimiter")->capture_default_str();
        cmd->add_option("--categorical", categorical, "Force these columns to be categorical");
    }

    std::shared_ptr<const sure::Dataset> load() const {
        if (delimiter.size() != 1) {
            throw sure::Error("--delimiter must be a single character");
        }
        sure::LoadOptions opts;
        opts.delimiter = delimiter[0];
        opts.categorical_columns = categorical;
        return std::make_shared<const sure::Dataset>(sure::load_dataset(data, label_col, preds, opts));
    }
};

struct ForestArgs {
    std::uint64_t seed = 42;
    std::size_t trees = 100;
    std::size_t max_depth = 0;
    std::size_t threads = 0;

    void add(CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Forest RNG seed")->capture_default_str();
        cmd->add_option("--trees", trees, "Number of trees")->capture_default_str()->check(CLI::PositiveNumber);
        cmd->add_option("--max-depth", max_depth, "Tree depth cap, 0 for none")->capture_default_str();
        cmd->add_option("--threads", threads, "Worker threads, 0 for all cores")->capture_default_str();
    }

    sure::ForestConfig config() const {
        sure::ForestConfig c;
        c.rng_seed = seed;
        c.n_trees = trees;
        if (max_depth > 0) {
            c.max_depth = max_depth;
        }
        c.n_threads = threads;
        return c;
    }
};

void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw sure::Error("cannot write " + path.string());
    }
    out << text;
    if (!out) {
        throw sure::Error("write failed for " + path.string());
    }
}

httplib::Server* g_server = nullptr;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Hierarchical surrogate rules for black-box classifiers"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Extract a minimal rule set and its hierarchy");
    DataArgs gen_data;
    ForestArgs gen_forest;
    sure::Constraints constraints;
    double stop_fraction = sure::kDefaultStopFraction;
    double time_budget = 0;
    std::string gen_out = "out";
    gen_data.add(gen);
    gen_forest.add(gen);
    gen->add_option("--min-fidelity", constraints.min_fidelity)->capture_default_str();
    gen->add_option("--min-coverage", constraints.min_coverage)->capture_default_str();
    gen->add_option("--max-conditions", constraints.max_num_condition)->capture_default_str();
    gen->add_option("--num-bins", constraints.num_bin)->capture_default_str();
    gen->add_option("--stop-fraction", stop_fraction, "Greedy stop threshold as a fraction of |D_R|, 0 disables")
        ->capture_default_str();
    gen->add_option("--time-budget", time_budget, "Seconds before giving up, 0 for none")->capture_default_str();
    gen->add_option("--out", gen_out, "Output directory for rules.json and rules.txt")->capture_default_str();

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Vary one constraint at a time over a grid");
    DataArgs sweep_data;
    ForestArgs sweep_forest;
    std::string grid_spec;
    std::string sweep_out = "sweep.csv";
    sweep_data.add(sweep);
    sweep_forest.add(sweep);
    sweep->add_option("--grid-spec", grid_spec, "JSON grid file; omitted keys keep their defaults")
        ->check(CLI::ExistingFile);
    sweep->add_option("--out", sweep_out)->capture_default_str();

    // compare
    auto* compare = app.add_subcommand("compare", "Forest rules (HSR) against a single surrogate tree (SDT)");
    DataArgs cmp_data;
    ForestArgs cmp_forest;
    std::size_t max_length = 10;
    std::string cmp_out = "compare.csv";
    cmp_data.add(compare);
    cmp_forest.add(compare);
    compare->add_option("--max-length", max_length)->capture_default_str()->check(CLI::PositiveNumber);
    compare->add_option("--out", cmp_out)->capture_default_str();

    // export
    auto* exp = app.add_subcommand("export", "Write the dataset and binning scheme as JSON");
    DataArgs exp_data;
    std::size_t exp_bins = sure::kDefaultNumBin;
    std::string exp_out = "dataset.json";
    exp_data.add(exp);
    exp->add_option("--num-bins", exp_bins)->capture_default_str();
    exp->add_option("--out", exp_out)->capture_default_str();

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP session service");
    sure::ServiceConfig svc;
    serve->add_option("--host", svc.host)->envname("SURE_HOST")->capture_default_str();
    serve->add_option("--port", svc.port)->envname("SURE_PORT")->capture_default_str();
    serve->add_option("--data-dir", svc.data_dir, "Root for server-side dataset paths")
        ->envname("SURE_DATA_DIR")
        ->capture_default_str();
    serve->add_option("--session-cap", svc.session_cap)->envname("SURE_SESSION_CAP")->capture_default_str();
    serve->add_option("--time-budget", svc.time_budget_seconds, "Per-generate budget in seconds, 0 for none")
        ->envname("SURE_TIME_BUDGET")
        ->capture_default_str();
    serve->add_option("--seed", svc.seed)->envname("SURE_SEED")->capture_default_str();
    serve->add_option("--max-upload", svc.max_upload_bytes, "Request size cap in bytes")
        ->envname("SURE_MAX_UPLOAD")
        ->capture_default_str();

    // demo-labeler
    auto* lab = app.add_subcommand("demo-labeler", "Label rows with a boolean expression plus seeded noise");
    std::string lab_data, lab_out, lab_delim = ",";
    sure::LabelerOptions lab_opts;
    lab->add_option("--data", lab_data)->required()->check(CLI::ExistingFile);
    lab->add_option("--rule", lab_opts.rule, "Expression(s); ';' separates classes 1, 2, ...")->required();
    lab->add_option("--noise", lab_opts.noise, "Flip probability")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    lab->add_option("--seed", lab_opts.seed)->capture_default_str();
    lab->add_option("--classes", lab_opts.class_names, "Output names for class 0, 1, ...")->delimiter(',');
    lab->add_option("--delimiter", lab_delim)->capture_default_str();
    lab->add_option("--out", lab_out, "Predictions file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) {
            sure::PipelineConfig cfg;
            cfg.constraints = constraints;
            cfg.forest = gen_forest.config();
            cfg.stop_fraction = stop_fraction;
            try {
                cfg.constraints.validate();
                cfg.forest.validate();
            } catch (const sure::Error& e) {
                std::cerr << "error: " << e.what() << "\n";
                return 2;
            }
            const auto deadline = time_budget > 0 ? sure::Deadline(std::chrono::duration<double>(time_budget))
                                                  : sure::Deadline();
            const auto result = sure::run_pipeline(gen_data.load(), cfg, deadline);
            const std::filesystem::path dir(gen_out);
            write_text(dir / "rules.json", sure::to_json(result).dump(2) + "\n");
            write_text(dir / "rules.txt", sure::rule_listing(result));
            std::cout << "number_of_rules: " << result.rule_set.rules.size() << "\n"
                      << "set_coverage: " << sure::detail::format_value(result.rule_set.set_coverage) << "\n"
                      << "pool_size: " << result.pool.rules.size() << "\n"
                      << "elapsed_seconds: " << sure::detail::format_value(result.elapsed_seconds) << "\n";
        } else if (*sweep) {
            sure::SweepGrid grid;
            if (!grid_spec.empty()) {
                grid = sure::sweep_grid_from_json(nlohmann::json::parse(sure::detail::read_file(grid_spec)));
            }
            const auto result = sure::run_sweep(sweep_data.load(), grid, sweep_forest.config());
            std::ostringstream csv;
            sure::write_csv(csv, result);
            write_text(sweep_out, csv.str());
            std::cout << "wrote " << result.rows.size() << " rows to " << sweep_out << "\n";
        } else if (*compare) {
            const auto report = sure::compare_hsr_sdt(cmp_data.load(), max_length, cmp_forest.config());
            std::ostringstream csv;
            sure::write_csv(csv, report);
            write_text(cmp_out, csv.str());
            std::cout << "wrote " << report.rows.size() << " rows to " << cmp_out << "\n";
        } else if (*exp) {
            const auto ds = exp_data.load();
            const auto scheme = sure::compute_binning(*ds, exp_bins);
            nlohmann::json doc = {{"format", "sure.export"},
                                  {"version", sure::kFormatVersion},
                                  {"dataset_fingerprint", sure::fingerprint(*ds)},
                                  {"dataset", sure::to_json(*ds)},
                                  {"binning", sure::to_json(scheme)}};
            write_text(exp_out, doc.dump(2) + "\n");
        } else if (*serve) {
            sure::Service service(svc);
            httplib::Server server;
            service.bind(server);
            g_server = &server;
            std::signal(SIGINT, [](int) { g_server->stop(); });
            std::signal(SIGTERM, [](int) { g_server->stop(); });
            std::cout << "listening on " << svc.host << ":" << svc.port << std::endl;
            if (!server.listen(svc.host, svc.port)) {
                std::cerr << "error: cannot listen on " << svc.host << ":" << svc.port << "\n";
                return 1;
            }
        } else if (*lab) {
            if (lab_delim.size() != 1) {
                std::cerr << "error: --delimiter must be a single character\n";
                return 2;
            }
            const auto table = sure::parse_table(sure::detail::read_file(lab_data), lab_delim[0]);
            const auto result = sure::run_labeler(table, lab_opts);
            write_text(lab_out, sure::labels_text(result));
            std::cout << "labeled " << result.labels.size() << " rows, flipped " << result.flipped << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
