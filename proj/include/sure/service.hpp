#pragma once

// HTTP session service backing the rule explorer.
//
//   POST   /sessions                      create from server-side paths or inline text
//   GET    /sessions/{id}                 session summary
//   DELETE /sessions/{id}
//   POST   /sessions/{id}/generate        run the pipeline with new constraints
//   GET    /sessions/{id}/rules           minimal rule set, optionally filtered
//   GET    /sessions/{id}/hierarchy       HSR tree export
//   GET    /sessions/{id}/nodes/{node}    rule detail for one hierarchy node
//   POST   /sessions/{id}/overlap         per-class overlap against an anchor rule
//
// Handlers are plain member functions returning a Response so they can be
// exercised without a socket; bind() wires them into an httplib::Server.

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "sure/analysis.hpp"
#include "sure/pipeline.hpp"

namespace sure {

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    /// Root for server-side dataset paths; relative request paths resolve here.
    std::string data_dir = ".";
    std::size_t session_cap = 64;
    double time_budget_seconds = 60.0;
    std::uint64_t seed = 42;
    std::size_t max_upload_bytes = 64u << 20;
    std::size_t forest_threads = 0;
};

struct Response {
    int status = 200;
    std::string body;
    std::map<std::string, std::string> headers;

    nlohmann::json json() const { return nlohmann::json::parse(body); }
};

namespace detail {

inline Response json_response(int status, const nlohmann::json& j) {
    return {status, j.dump(), {}};
}

inline Response error_response(int status, const std::string& message) {
    return json_response(status, {{"error", message}, {"status", status}});
}

inline std::vector<std::string> split(std::string_view s, char sep) {
    std::vector<std::string> out;
    if (s.empty()) {
        return out;
    }
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
        if (pos == std::string_view::npos) {
            break;
        }
        start = pos + 1;
    }
    return out;
}

}  // namespace detail

class Session {
public:
    Session(std::string id, std::shared_ptr<const Dataset> dataset)
        : id_(std::move(id)), dataset_(std::move(dataset)), fingerprint_(sure::fingerprint(*dataset_)),
          created_(std::chrono::system_clock::now()), last_access_(created_) {}

    const std::string& id() const { return id_; }
    const Dataset& dataset() const { return *dataset_; }
    std::shared_ptr<const Dataset> dataset_ptr() const { return dataset_; }
    const std::string& fingerprint() const { return fingerprint_; }

    std::shared_ptr<const GenerationResult> current() const {
        std::lock_guard lock(mutex_);
        return current_;
    }

    void touch() {
        std::lock_guard lock(mutex_);
        last_access_ = std::chrono::system_clock::now();
    }

    nlohmann::json summary() const {
        std::lock_guard lock(mutex_);
        auto to_epoch = [](auto tp) {
            return std::chrono::duration_cast<std::chrono::seconds>(tp.time_since_epoch()).count();
        };
        return {{"session_id", id_},
                {"dataset_fingerprint", fingerprint_},
                {"n_instances", dataset_->n_instances()},
                {"n_features", dataset_->n_features()},
                {"class_names", dataset_->class_names},
                {"features", [&] {
                     nlohmann::json f = nlohmann::json::array();
                     for (const auto& m : dataset_->features) {
                         f.push_back(m.name);
                     }
                     return f;
                 }()},
                {"generated", current_ != nullptr},
                {"created_at", to_epoch(created_)},
                {"last_access_at", to_epoch(last_access_)}};
    }

    /// Runs generation; throws Error("busy") if another generate is running.
    std::shared_ptr<const GenerationResult> generate(const PipelineConfig& config, const Deadline& deadline) {
        bool expected = false;
        if (!generating_.compare_exchange_strong(expected, true)) {
            throw BusyError();
        }
        struct Reset {
            std::atomic<bool>& flag;
            ~Reset() { flag = false; }
        } reset{generating_};

        std::shared_ptr<const DiscretizedDataset> data;
        std::shared_ptr<const SurrogateForest> forest;
        const std::string forest_key =
            std::to_string(config.constraints.num_bin) + "|" + to_json(config.forest).dump();
        {
            std::lock_guard lock(mutex_);
            if (auto it = binnings_.find(config.constraints.num_bin); it != binnings_.end()) {
                data = it->second;
            }
            if (auto it = forests_.find(forest_key); it != forests_.end()) {
                forest = it->second;
            }
        }
        auto result = std::make_shared<const GenerationResult>(
            run_pipeline(dataset_, config, deadline, data && forest ? forest : nullptr, data));
        std::lock_guard lock(mutex_);
        binnings_[config.constraints.num_bin] = result->data;
        forests_[forest_key] = result->forest;
        current_ = result;
        last_access_ = std::chrono::system_clock::now();
        return result;
    }

    struct BusyError : Error {
        BusyError() : Error("a generation is already running for this session") {}
    };

private:
    std::string id_;
    std::shared_ptr<const Dataset> dataset_;
    std::string fingerprint_;
    mutable std::mutex mutex_;
    std::atomic<bool> generating_{false};
    std::map<std::size_t, std::shared_ptr<const DiscretizedDataset>> binnings_;
    std::map<std::string, std::shared_ptr<const SurrogateForest>> forests_;
    std::shared_ptr<const GenerationResult> current_;
    std::chrono::system_clock::time_point created_;
    std::chrono::system_clock::time_point last_access_;
};

class Service {
public:
    explicit Service(ServiceConfig config = {}) : config_(std::move(config)) {}

    const ServiceConfig& config() const { return config_; }

    Response create_session(const std::string& body) {
        if (body.size() > config_.max_upload_bytes) {
            return detail::error_response(413, "upload exceeds " + std::to_string(config_.max_upload_bytes) + " bytes");
        }
        nlohmann::json req;
        try {
            req = nlohmann::json::parse(body);
        } catch (const nlohmann::json::exception& e) {
            return detail::error_response(400, std::string("malformed JSON: ") + e.what());
        }
        try {
            LoadOptions opts;
            if (req.contains("delimiter")) {
                auto d = req.at("delimiter").get<std::string>();
                if (d.size() != 1) {
                    throw Error("delimiter must be a single character");
                }
                opts.delimiter = d[0];
            }
            if (req.contains("categorical_columns")) {
                opts.categorical_columns = req.at("categorical_columns").get<std::vector<std::string>>();
            }
            if (!req.contains("label_column")) {
                throw Error("label_column is required");
            }
            const auto label = req.at("label_column").get<std::string>();
            std::string data_text, pred_text;
            if (req.contains("data_csv")) {
                data_text = req.at("data_csv").get<std::string>();
                pred_text = req.at("predictions").get<std::string>();
            } else if (req.contains("data_path")) {
                data_text = detail::read_file(resolve(req.at("data_path").get<std::string>()));
                pred_text = detail::read_file(resolve(req.at("prediction_path").get<std::string>()));
            } else {
                throw Error("provide data_csv + predictions or data_path + prediction_path");
            }
            if (data_text.size() + pred_text.size() > config_.max_upload_bytes) {
                return detail::error_response(413, "dataset exceeds the size cap");
            }
            auto dataset = std::make_shared<const Dataset>(parse_dataset(data_text, label, pred_text, opts));
            std::lock_guard lock(mutex_);
            if (sessions_.size() >= config_.session_cap) {
                return detail::error_response(503, "session cap reached");
            }
            auto id = "s" + std::to_string(++next_id_);
            auto session = std::make_shared<Session>(id, std::move(dataset));
            sessions_[id] = session;
            return detail::json_response(201, with_seed(*session));
        } catch (const Error& e) {
            return detail::error_response(400, e.what());
        } catch (const nlohmann::json::exception& e) {
            return detail::error_response(400, std::string("bad request field: ") + e.what());
        }
    }

    Response get_session(const std::string& id) {
        auto s = find(id);
        if (!s) {
            return not_found(id);
        }
        s->touch();
        return detail::json_response(200, with_seed(*s));
    }

    Response delete_session(const std::string& id) {
        std::lock_guard lock(mutex_);
        if (sessions_.erase(id) == 0) {
            return not_found(id);
        }
        return detail::json_response(200, {{"deleted", id}});
    }

    Response generate(const std::string& id, const std::string& body) {
        auto s = find(id);
        if (!s) {
            return not_found(id);
        }
        PipelineConfig cfg;
        cfg.forest.rng_seed = config_.seed;
        cfg.forest.n_threads = config_.forest_threads;
        try {
            const auto req = body.empty() ? nlohmann::json::object() : nlohmann::json::parse(body);
            if (!req.is_object()) {
                throw Error("request body must be a JSON object");
            }
            cfg.constraints = constraints_from_json(req);
            if (req.contains("forest")) {
                cfg.forest = forest_config_from_json(req.at("forest"), cfg.forest);
            }
            if (req.contains("seed")) {
                cfg.forest.rng_seed = req.at("seed").get<std::uint64_t>();
            }
            cfg.constraints.validate();
            cfg.forest.validate();
        } catch (const nlohmann::json::parse_error& e) {
            return detail::error_response(400, std::string("malformed JSON: ") + e.what());
        } catch (const nlohmann::json::exception& e) {
            return detail::error_response(422, e.what());
        } catch (const Error& e) {
            return detail::error_response(422, e.what());
        }
        try {
            const Deadline deadline = config_.time_budget_seconds > 0
                                          ? Deadline(std::chrono::duration<double>(config_.time_budget_seconds))
                                          : Deadline();
            auto result = s->generate(cfg, deadline);
            nlohmann::json out = {{"session_id", id},
                                  {"dataset_fingerprint", s->fingerprint()},
                                  {"seed", cfg.forest.rng_seed},
                                  {"generation", to_json(*result)}};
            auto r = detail::json_response(200, out);
            r.headers["X-Elapsed-Seconds"] = detail::format_value(result->elapsed_seconds);
            return r;
        } catch (const Session::BusyError& e) {
            return detail::error_response(409, e.what());
        } catch (const TimeoutError& e) {
            return detail::error_response(504, e.what());
        } catch (const Error& e) {
            return detail::error_response(422, e.what());
        }
    }

    /// Query keys: features=a,b  values=a:0|1;b:high  predictions=c1,c2
    Response rules(const std::string& id, const std::multimap<std::string, std::string>& params) {
        auto [s, g, err] = generated(id);
        if (!g) {
            return err;
        }
        FilterSpec spec;
        try {
            spec = parse_filter(g->dataset(), g->scheme(), params);
        } catch (const Error& e) {
            return detail::error_response(400, e.what());
        }
        auto ids = filter_rules(g->rule_set, spec);
        nlohmann::json rules = nlohmann::json::array();
        for (auto i : ids) {
            const auto& pr = g->rule_set.rules[i];
            auto jr = to_json(pr.rule, pr.metrics, g->scheme(), g->dataset().class_names);
            jr["id"] = i;
            rules.push_back(std::move(jr));
        }
        return detail::json_response(200, stamp(*s, *g, {{"rule_ids", ids}, {"rules", std::move(rules)}}));
    }

    Response hierarchy(const std::string& id) {
        auto [s, g, err] = generated(id);
        if (!g) {
            return err;
        }
        return detail::json_response(200, stamp(*s, *g, {{"hierarchy", to_json(g->hierarchy, g->scheme())}}));
    }

    Response node(const std::string& id, const std::string& node_text) {
        auto [s, g, err] = generated(id);
        if (!g) {
            return err;
        }
        auto node_id = detail::parse_number(node_text);
        if (!node_id || *node_id < 0 || *node_id >= static_cast<double>(g->hierarchy.nodes.size()) ||
            *node_id != std::floor(*node_id)) {
            return detail::error_response(404, "unknown node id " + node_text);
        }
        const auto nid = static_cast<std::uint32_t>(*node_id);
        const auto& n = g->hierarchy.node(nid);
        const auto rule = node_rule(g->hierarchy, nid);
        const auto& names = g->dataset().class_names;
        nlohmann::json conds = nlohmann::json::array();
        for (const auto& c : rule.conditions) {
            conds.push_back(to_json(c, g->scheme()));
        }
        std::string summary;
        if (!n.parent) {
            summary = "all " + std::to_string(n.stats.cover_count) + " instances;";
            for (std::size_t c = 0; c < names.size(); ++c) {
                summary += " predicted " + names[c] + ": " + std::to_string(n.stats.per_class_count[c]) +
                           (c + 1 < names.size() ? "," : "");
            }
        }
        nlohmann::json out = {{"node_id", nid},
                              {"is_root", !n.parent.has_value()},
                              {"depth", n.depth},
                              {"rule_id", n.rule_id ? nlohmann::json(*n.rule_id) : nlohmann::json(nullptr)},
                              {"text", rule_text(rule, g->scheme(), names)},
                              {"summary", summary},
                              {"conditions", std::move(conds)},
                              {"consequent", rule.consequent},
                              {"consequent_name", names.at(rule.consequent)},
                              {"stats", to_json(n.stats)}};
        return detail::json_response(200, stamp(*s, *g, std::move(out)));
    }

    Response overlap(const std::string& id, const std::string& body) {
        auto [s, g, err] = generated(id);
        if (!g) {
            return err;
        }
        std::size_t anchor = 0;
        std::vector<std::size_t> others;
        try {
            auto req = nlohmann::json::parse(body);
            anchor = req.at("anchor").get<std::size_t>();
            if (req.contains("others")) {
                others = req.at("others").get<std::vector<std::size_t>>();
            }
        } catch (const nlohmann::json::exception& e) {
            return detail::error_response(400, std::string("bad overlap request: ") + e.what());
        }
        try {
            auto report = sure::overlap(g->rule_set, anchor, others, CoverIndex(*g->data));
            return detail::json_response(200, stamp(*s, *g, {{"overlap", to_json(report)}}));
        } catch (const Error& e) {
            return detail::error_response(404, e.what());
        }
    }

    void bind(httplib::Server& server) {
        auto send = [](httplib::Response& res, const Response& r) {
            res.status = r.status;
            for (const auto& [k, v] : r.headers) {
                res.set_header(k, v);
            }
            res.set_content(r.body, "application/json");
        };
        server.set_payload_max_length(config_.max_upload_bytes);
        server.Get("/", [send](const httplib::Request&, httplib::Response& res) {
            send(res, detail::json_response(200, {{"service", "sure"}, {"version", kFormatVersion}}));
        });
        server.Post("/sessions", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, create_session(req.body));
        });
        server.Get(R"(/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, get_session(req.matches[1]));
        });
        server.Delete(R"(/sessions/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, delete_session(req.matches[1]));
        });
        server.Post(R"(/sessions/([^/]+)/generate)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, generate(req.matches[1], req.body));
        });
        server.Get(R"(/sessions/([^/]+)/rules)", [this, send](const httplib::Request& req, httplib::Response& res) {
            std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
            send(res, rules(req.matches[1], params));
        });
        server.Get(R"(/sessions/([^/]+)/hierarchy)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, hierarchy(req.matches[1]));
        });
        server.Get(R"(/sessions/([^/]+)/nodes/([^/]+))",
                   [this, send](const httplib::Request& req, httplib::Response& res) {
                       send(res, node(req.matches[1], req.matches[2]));
                   });
        server.Post(R"(/sessions/([^/]+)/overlap)", [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, overlap(req.matches[1], req.body));
        });
    }

    /// Parses the rule-list filter query into a FilterSpec. Features accept
    /// names or indices; bins accept indices or ordinal labels; classes accept
    /// names.
    static FilterSpec parse_filter(const Dataset& ds, const BinningScheme& scheme,
                                   const std::multimap<std::string, std::string>& params) {
        FilterSpec spec;
        auto feature = [&](const std::string& tok) -> FeatureIndex {
            if (auto f = ds.feature_index(tok)) {
                return *f;
            }
            if (auto v = detail::parse_number(tok); v && *v >= 0 && *v < double(ds.n_features()) && *v == std::floor(*v)) {
                return static_cast<FeatureIndex>(*v);
            }
            throw Error("unknown feature '" + tok + "'");
        };
        auto bin = [&](FeatureIndex f, const std::string& tok) -> BinIndex {
            const auto count = scheme.effective_bins(f);
            for (std::size_t b = 0; b < count; ++b) {
                if (tok == bin_label(b, count) ||
                    (scheme.features[f].kind == FeatureKind::categorical && tok == scheme.features[f].categories[b])) {
                    return static_cast<BinIndex>(b);
                }
            }
            if (auto v = detail::parse_number(tok); v && *v >= 0 && *v < double(count) && *v == std::floor(*v)) {
                return static_cast<BinIndex>(*v);
            }
            throw Error("unknown bin '" + tok + "' for feature " + scheme.feature_names[f]);
        };
        for (const auto& [key, value] : params) {
            if (key == "features") {
                for (const auto& tok : detail::split(value, ',')) {
                    spec.required_features.insert(feature(tok));
                }
            } else if (key == "values") {
                for (const auto& entry : detail::split(value, ';')) {
                    auto colon = entry.find(':');
                    if (colon == std::string::npos) {
                        throw Error("values entry must look like feature:bin|bin");
                    }
                    auto f = feature(detail::trim(entry.substr(0, colon)));
                    auto& allowed = spec.feature_values[f];
                    for (const auto& tok : detail::split(entry.substr(colon + 1), '|')) {
                        allowed.insert(bin(f, tok));
                    }
                }
            } else if (key == "predictions") {
                for (const auto& tok : detail::split(value, ',')) {
                    auto c = ds.class_id(tok);
                    if (!c) {
                        throw Error("unknown class '" + tok + "'");
                    }
                    spec.predictions.insert(*c);
                }
            }
        }
        return spec;
    }

private:
    struct Lookup {
        std::shared_ptr<Session> session;
        std::shared_ptr<const GenerationResult> result;
        Response error;
    };

    std::string resolve(const std::string& path) const {
        namespace fs = std::filesystem;
        const fs::path root = fs::weakly_canonical(config_.data_dir);
        const fs::path full = fs::weakly_canonical(fs::path(path).is_absolute() ? fs::path(path) : root / path);
        auto rel = full.lexically_relative(root);
        if (rel.empty() || *rel.begin() == "..") {
            throw Error("path outside the data directory: " + path);
        }
        return full.string();
    }

    std::shared_ptr<Session> find(const std::string& id) {
        std::lock_guard lock(mutex_);
        auto it = sessions_.find(id);
        return it == sessions_.end() ? nullptr : it->second;
    }

    static Response not_found(const std::string& id) { return detail::error_response(404, "unknown session " + id); }

    Lookup generated(const std::string& id) {
        auto s = find(id);
        if (!s) {
            return {nullptr, nullptr, not_found(id)};
        }
        s->touch();
        auto g = s->current();
        if (!g) {
            return {s, nullptr, detail::error_response(409, "no rules generated yet for session " + id)};
        }
        return {s, g, {}};
    }

    /// Seed of the current generation, or the service default before one runs.
    nlohmann::json with_seed(const Session& s) const {
        auto j = s.summary();
        auto g = s.current();
        j["seed"] = g ? g->config.forest.rng_seed : config_.seed;
        return j;
    }

    static nlohmann::json stamp(const Session& s, const GenerationResult& g, nlohmann::json body) {
        body["session_id"] = s.id();
        body["dataset_fingerprint"] = s.fingerprint();
        body["seed"] = g.config.forest.rng_seed;
        return body;
    }

    ServiceConfig config_;
    std::mutex mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::size_t next_id_ = 0;
};

}  // namespace sure
