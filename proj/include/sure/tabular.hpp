#pragma once

// Tabular ingestion, percentile binning and discretization.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sure/common.hpp"

namespace sure {

inline constexpr int kFormatVersion = 1;
inline constexpr std::size_t kDefaultNumBin = 3;

enum class FeatureKind { numeric, categorical };

inline const char* to_string(FeatureKind kind) {
    return kind == FeatureKind::numeric ? "numeric" : "categorical";
}

struct FeatureMeta {
    std::string name;
    FeatureKind kind = FeatureKind::numeric;
    std::size_t column_index = 0;
    /// Sorted category vocabulary; empty for numeric features. Categorical
    /// cells are stored in Dataset::rows as an index into this list.
    std::vector<std::string> categories;

    bool operator==(const FeatureMeta&) const = default;
};

struct Dataset {
    std::vector<FeatureMeta> features;
    std::vector<std::vector<double>> rows;
    std::vector<ClassId> true_labels;
    std::vector<ClassId> predictions;
    std::vector<std::string> class_names;

    std::size_t n_instances() const { return rows.size(); }
    std::size_t n_features() const { return features.size(); }
    std::size_t n_classes() const { return class_names.size(); }

    std::optional<FeatureIndex> feature_index(std::string_view name) const {
        for (const auto& f : features) {
            if (f.name == name) {
                return f.column_index;
            }
        }
        return std::nullopt;
    }

    std::optional<ClassId> class_id(std::string_view name) const {
        for (std::size_t c = 0; c < class_names.size(); ++c) {
            if (class_names[c] == name) {
                return static_cast<ClassId>(c);
            }
        }
        return std::nullopt;
    }

    /// Checks every structural invariant; throws Error on the first violation.
    void validate() const;
};

struct LoadOptions {
    char delimiter = ',';
    /// Columns forced to categorical. Other columns are numeric unless their
    /// first value does not parse as a number.
    std::vector<std::string> categorical_columns;
    /// When non-empty, the only accepted class names (in this id order).
    std::vector<std::string> class_names;
};

namespace detail {

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_record(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur.push_back('"');
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur.push_back(c);
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == delim) {
            out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(trim(cur));
    return out;
}

inline std::vector<std::string> nonblank_lines(std::istream& in) {
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!trim(line).empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

inline std::optional<double> parse_number(std::string_view s) {
    if (s.empty()) {
        return std::nullopt;
    }
    double v = 0;
    const char* first = s.data();
    if (*first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
        return std::nullopt;
    }
    return v;
}

inline bool is_missing(std::string_view s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "?" || s == "null";
}

/// Numeric-aware ordering for class names: all-numeric vocabularies sort by
/// value, anything else sorts lexicographically.
inline void sort_class_names(std::vector<std::string>& names) {
    bool all_numeric = std::all_of(names.begin(), names.end(),
                                   [](const auto& s) { return parse_number(s).has_value(); });
    if (all_numeric) {
        std::sort(names.begin(), names.end(), [](const auto& a, const auto& b) {
            double x = *parse_number(a), y = *parse_number(b);
            return x != y ? x < y : a < b;
        });
    } else {
        std::sort(names.begin(), names.end());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open file: " + path);
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace detail

/// Header plus trimmed string cells of a delimited table.
struct RawTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> cells;

    std::optional<std::size_t> column(std::string_view name) const {
        auto it = std::find(header.begin(), header.end(), name);
        if (it == header.end()) {
            return std::nullopt;
        }
        return static_cast<std::size_t>(it - header.begin());
    }
};

/// Parses a header-led delimited table. Rejects ragged rows, duplicate column
/// names and missing cells.
inline RawTable parse_table(std::string_view text, char delimiter = ',') {
    std::istringstream in{std::string(text)};
    auto lines = detail::nonblank_lines(in);
    if (lines.empty()) {
        throw Error("empty table: no header row");
    }
    RawTable table;
    table.header = detail::split_record(lines.front(), delimiter);
    if (lines.size() < 2) {
        throw Error("empty table: no data rows");
    }
    std::set<std::string> seen;
    for (const auto& h : table.header) {
        if (h.empty()) {
            throw Error("empty column name in header");
        }
        if (!seen.insert(h).second) {
            throw Error("duplicate column name: " + h);
        }
    }
    table.cells.reserve(lines.size() - 1);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        auto rec = detail::split_record(lines[r], delimiter);
        if (rec.size() != table.header.size()) {
            throw Error("row " + std::to_string(r) + ": expected " + std::to_string(table.header.size()) +
                        " fields, found " + std::to_string(rec.size()));
        }
        for (std::size_t c = 0; c < rec.size(); ++c) {
            if (detail::is_missing(rec[c])) {
                throw Error("row " + std::to_string(r) + ", column '" + table.header[c] + "': missing value");
            }
        }
        table.cells.push_back(std::move(rec));
    }
    return table;
}

/// Parses a header-led delimited table plus a predictions listing (one value
/// per line, optionally under a single header line).
inline Dataset parse_dataset(std::string_view data_text, std::string_view label_column,
                             std::string_view prediction_text, const LoadOptions& options = {}) {
    auto table = parse_table(data_text, options.delimiter);
    const auto& header = table.header;
    const auto& cells = table.cells;
    auto label_found = table.column(label_column);
    if (!label_found) {
        throw Error("label column not found: " + std::string(label_column));
    }
    const std::size_t label_col = *label_found;
    const std::size_t n = cells.size();

    std::istringstream pred_in{std::string(prediction_text)};
    auto pred_lines = detail::nonblank_lines(pred_in);
    if (pred_lines.size() == n + 1) {
        pred_lines.erase(pred_lines.begin());  // single-column table header
    }
    if (pred_lines.size() != n) {
        throw Error("row-count mismatch: data has " + std::to_string(n) + " rows, predictions has " +
                    std::to_string(pred_lines.size()));
    }
    std::vector<std::string> pred_names(n);
    for (std::size_t i = 0; i < n; ++i) {
        pred_names[i] = detail::split_record(pred_lines[i], options.delimiter).front();
    }

    Dataset ds;
    if (!options.class_names.empty()) {
        ds.class_names = options.class_names;
    } else {
        std::set<std::string> names;
        for (std::size_t i = 0; i < n; ++i) {
            names.insert(cells[i][label_col]);
            names.insert(pred_names[i]);
        }
        ds.class_names.assign(names.begin(), names.end());
        detail::sort_class_names(ds.class_names);
    }
    auto lookup_class = [&](const std::string& name, std::size_t row, const char* what) {
        auto id = ds.class_id(name);
        if (!id) {
            throw Error("row " + std::to_string(row + 1) + ": unknown class name in " + what + ": '" +
                        name + "'");
        }
        return *id;
    };
    ds.true_labels.resize(n);
    ds.predictions.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        ds.true_labels[i] = lookup_class(cells[i][label_col], i, "labels");
        ds.predictions[i] = lookup_class(pred_names[i], i, "predictions");
    }

    std::vector<std::size_t> source_cols;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == label_col) {
            continue;
        }
        FeatureMeta meta;
        meta.name = header[c];
        meta.column_index = ds.features.size();
        bool forced = std::find(options.categorical_columns.begin(), options.categorical_columns.end(),
                                meta.name) != options.categorical_columns.end();
        if (forced || !detail::parse_number(cells[0][c])) {
            meta.kind = FeatureKind::categorical;
            std::set<std::string> cats;
            for (const auto& rec : cells) {
                cats.insert(rec[c]);
            }
            meta.categories.assign(cats.begin(), cats.end());
        }
        ds.features.push_back(std::move(meta));
        source_cols.push_back(c);
    }

    ds.rows.assign(n, std::vector<double>(ds.features.size()));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < ds.features.size(); ++j) {
            const auto& raw = cells[i][source_cols[j]];
            const auto& meta = ds.features[j];
            if (meta.kind == FeatureKind::numeric) {
                auto v = detail::parse_number(raw);
                if (!v) {
                    throw Error("row " + std::to_string(i + 1) + ", column '" + meta.name +
                                "': non-numeric value '" + raw + "' in numeric column");
                }
                ds.rows[i][j] = *v;
            } else {
                auto it = std::lower_bound(meta.categories.begin(), meta.categories.end(), raw);
                ds.rows[i][j] = static_cast<double>(it - meta.categories.begin());
            }
        }
    }
    ds.validate();
    return ds;
}

inline Dataset load_dataset(const std::string& data_path, std::string_view label_column,
                            const std::string& prediction_path, const LoadOptions& options = {}) {
    return parse_dataset(detail::read_file(data_path), label_column,
                         detail::read_file(prediction_path), options);
}

inline void Dataset::validate() const {
    const std::size_t n = rows.size();
    if (n == 0) {
        throw Error("dataset has no instances");
    }
    if (true_labels.size() != n || predictions.size() != n) {
        throw Error("row-count mismatch between rows, labels and predictions");
    }
    std::set<std::string> names;
    for (std::size_t j = 0; j < features.size(); ++j) {
        if (features[j].column_index != j) {
            throw Error("feature column indices must be dense and ordered");
        }
        if (!names.insert(features[j].name).second) {
            throw Error("duplicate feature name: " + features[j].name);
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != features.size()) {
            throw Error("row " + std::to_string(i + 1) + " has wrong width");
        }
        if (true_labels[i] >= class_names.size() || predictions[i] >= class_names.size()) {
            throw Error("row " + std::to_string(i + 1) + ": class id out of range");
        }
        for (std::size_t j = 0; j < features.size(); ++j) {
            double v = rows[i][j];
            if (!std::isfinite(v)) {
                throw Error("row " + std::to_string(i + 1) + ": missing value");
            }
            if (features[j].kind == FeatureKind::categorical &&
                (v < 0 || v >= static_cast<double>(features[j].categories.size()) || v != std::floor(v))) {
                throw Error("row " + std::to_string(i + 1) + ": bad category code");
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Binning

struct FeatureBins {
    FeatureKind kind = FeatureKind::numeric;
    /// Strictly increasing cut points; bin b holds values in [t_{b-1}, t_b).
    std::vector<double> thresholds;
    std::vector<std::string> categories;

    std::size_t effective_bins() const {
        return kind == FeatureKind::numeric ? thresholds.size() + 1 : categories.size();
    }

    bool operator==(const FeatureBins&) const = default;
};

struct BinningScheme {
    std::size_t num_bin = kDefaultNumBin;
    std::vector<std::string> feature_names;
    std::vector<FeatureBins> features;
    /// Numeric features that collapsed to a single bin (constant columns).
    std::vector<FeatureIndex> degenerate_features;

    std::size_t effective_bins(FeatureIndex f) const { return features.at(f).effective_bins(); }

    BinIndex bin_of(FeatureIndex f, double raw) const {
        const auto& fb = features.at(f);
        if (fb.kind == FeatureKind::categorical) {
            return static_cast<BinIndex>(raw);
        }
        return static_cast<BinIndex>(
            std::upper_bound(fb.thresholds.begin(), fb.thresholds.end(), raw) - fb.thresholds.begin());
    }

    bool operator==(const BinningScheme&) const = default;
};

/// Linear interpolation between order statistics: h = (n - 1) q.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) {
        throw Error("quantile of empty sample");
    }
    double h = static_cast<double>(sorted.size() - 1) * q;
    auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= sorted.size()) {
        return sorted.back();
    }
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

inline BinningScheme compute_binning(const Dataset& dataset, std::size_t num_bin = kDefaultNumBin) {
    if (num_bin < 2) {
        throw Error("num_bin must be at least 2");
    }
    BinningScheme scheme;
    scheme.num_bin = num_bin;
    for (const auto& meta : dataset.features) {
        scheme.feature_names.push_back(meta.name);
        FeatureBins fb;
        fb.kind = meta.kind;
        if (meta.kind == FeatureKind::categorical) {
            fb.categories = meta.categories;
        } else {
            std::vector<double> values(dataset.n_instances());
            for (std::size_t i = 0; i < values.size(); ++i) {
                values[i] = dataset.rows[i][meta.column_index];
            }
            std::sort(values.begin(), values.end());
            for (std::size_t b = 1; b < num_bin; ++b) {
                double t = quantile_sorted(values, static_cast<double>(b) / static_cast<double>(num_bin));
                // A cut at or below the minimum would only create an empty bin.
                if (t > values.front() && (fb.thresholds.empty() || t > fb.thresholds.back())) {
                    fb.thresholds.push_back(t);
                }
            }
            if (fb.thresholds.empty()) {
                scheme.degenerate_features.push_back(meta.column_index);
            }
        }
        scheme.features.push_back(std::move(fb));
    }
    return scheme;
}

/// Ordinal descriptor for bin `b` out of `count` effective bins.
inline std::string bin_label(std::size_t b, std::size_t count) {
    static const std::vector<std::vector<const char*>> names = {
        {"all"},
        {"low", "high"},
        {"low", "medium", "high"},
        {"low", "medium-low", "medium-high", "high"},
        {"very low", "low", "medium", "high", "very high"},
    };
    if (count >= 1 && count <= names.size()) {
        return names[count - 1][b];
    }
    return "q" + std::to_string(b + 1);
}

namespace detail {
inline std::string format_value(double v) {
    std::ostringstream ss;
    ss.precision(6);
    ss << v;
    return ss.str();
}
}  // namespace detail

/// Human-readable raw-value range for the inclusive bin interval [lo, hi].
inline std::string raw_range_text(const BinningScheme& scheme, FeatureIndex f, BinIndex lo, BinIndex hi) {
    const auto& fb = scheme.features.at(f);
    if (fb.kind == FeatureKind::categorical) {
        std::string out = "{";
        for (BinIndex b = lo; b <= hi; ++b) {
            if (b != lo) {
                out += ", ";
            }
            out += fb.categories.at(b);
        }
        return out + "}";
    }
    const bool open_low = lo == 0;
    const bool open_high = hi + 1 >= fb.effective_bins();
    if (open_low && open_high) {
        return "any";
    }
    if (open_low) {
        return "< " + detail::format_value(fb.thresholds[hi]);
    }
    if (open_high) {
        return ">= " + detail::format_value(fb.thresholds[lo - 1]);
    }
    return "[" + detail::format_value(fb.thresholds[lo - 1]) + ", " +
           detail::format_value(fb.thresholds[hi]) + ")";
}

/// Ordinal text for an interval, e.g. "low" or "medium-high".
inline std::string bin_range_label(const BinningScheme& scheme, FeatureIndex f, BinIndex lo, BinIndex hi) {
    const auto& fb = scheme.features.at(f);
    if (fb.kind == FeatureKind::categorical) {
        return raw_range_text(scheme, f, lo, hi);
    }
    auto count = fb.effective_bins();
    if (lo == hi) {
        return bin_label(lo, count);
    }
    return bin_label(lo, count) + " to " + bin_label(hi, count);
}

// ---------------------------------------------------------------------------

class DiscretizedDataset {
public:
    DiscretizedDataset(std::shared_ptr<const Dataset> base, BinningScheme scheme, std::vector<BinIndex> codes)
        : base_(std::move(base)), scheme_(std::move(scheme)), codes_(std::move(codes)) {}

    const Dataset& base() const { return *base_; }
    std::shared_ptr<const Dataset> base_ptr() const { return base_; }
    const BinningScheme& scheme() const { return scheme_; }

    std::size_t n_instances() const { return base_->n_instances(); }
    std::size_t n_features() const { return base_->n_features(); }
    std::size_t n_classes() const { return base_->n_classes(); }

    BinIndex code(std::size_t row, FeatureIndex f) const { return codes_[row * n_features() + f]; }
    std::span<const BinIndex> row_codes(std::size_t row) const {
        return {codes_.data() + row * n_features(), n_features()};
    }
    const std::vector<BinIndex>& codes() const { return codes_; }

    ClassId prediction(std::size_t row) const { return base_->predictions[row]; }

private:
    std::shared_ptr<const Dataset> base_;
    BinningScheme scheme_;
    std::vector<BinIndex> codes_;
};

inline DiscretizedDataset discretize(std::shared_ptr<const Dataset> dataset, const BinningScheme& scheme) {
    const auto& ds = *dataset;
    if (scheme.features.size() != ds.n_features()) {
        throw Error("feature mismatch between dataset and binning scheme");
    }
    for (std::size_t j = 0; j < ds.n_features(); ++j) {
        const auto& meta = ds.features[j];
        const auto& fb = scheme.features[j];
        if (scheme.feature_names[j] != meta.name || fb.kind != meta.kind ||
            (meta.kind == FeatureKind::categorical && fb.categories != meta.categories)) {
            throw Error("feature mismatch between dataset and binning scheme at '" + meta.name + "'");
        }
    }
    std::vector<BinIndex> codes(ds.n_instances() * ds.n_features());
    for (std::size_t i = 0; i < ds.n_instances(); ++i) {
        for (std::size_t j = 0; j < ds.n_features(); ++j) {
            codes[i * ds.n_features() + j] = scheme.bin_of(j, ds.rows[i][j]);
        }
    }
    return DiscretizedDataset(std::move(dataset), scheme, std::move(codes));
}

inline DiscretizedDataset discretize(const Dataset& dataset, const BinningScheme& scheme) {
    return discretize(std::make_shared<const Dataset>(dataset), scheme);
}

// ---------------------------------------------------------------------------
// Serialization

inline nlohmann::json to_json(const Dataset& ds) {
    nlohmann::json features = nlohmann::json::array();
    for (const auto& f : ds.features) {
        nlohmann::json jf = {{"name", f.name}, {"kind", to_string(f.kind)}, {"column_index", f.column_index}};
        if (f.kind == FeatureKind::categorical) {
            jf["categories"] = f.categories;
        }
        features.push_back(std::move(jf));
    }
    return {{"format", "sure.dataset"},
            {"version", kFormatVersion},
            {"features", std::move(features)},
            {"class_names", ds.class_names},
            {"rows", ds.rows},
            {"true_labels", ds.true_labels},
            {"predictions", ds.predictions}};
}

inline Dataset dataset_from_json(const nlohmann::json& j) {
    if (j.at("format") != "sure.dataset" || j.at("version") != kFormatVersion) {
        throw Error("unsupported dataset document");
    }
    Dataset ds;
    for (const auto& jf : j.at("features")) {
        FeatureMeta f;
        f.name = jf.at("name").get<std::string>();
        f.kind = jf.at("kind") == "categorical" ? FeatureKind::categorical : FeatureKind::numeric;
        f.column_index = jf.at("column_index").get<std::size_t>();
        if (jf.contains("categories")) {
            f.categories = jf.at("categories").get<std::vector<std::string>>();
        }
        ds.features.push_back(std::move(f));
    }
    ds.class_names = j.at("class_names").get<std::vector<std::string>>();
    ds.rows = j.at("rows").get<std::vector<std::vector<double>>>();
    ds.true_labels = j.at("true_labels").get<std::vector<ClassId>>();
    ds.predictions = j.at("predictions").get<std::vector<ClassId>>();
    ds.validate();
    return ds;
}

/// Content hash over the canonical serialization.
inline std::string fingerprint(const Dataset& ds) {
    return hex64(fnv1a(to_json(ds).dump()));
}

inline nlohmann::json to_json(const BinningScheme& scheme) {
    nlohmann::json features = nlohmann::json::array();
    for (std::size_t j = 0; j < scheme.features.size(); ++j) {
        const auto& fb = scheme.features[j];
        nlohmann::json jf = {{"name", scheme.feature_names[j]},
                             {"kind", to_string(fb.kind)},
                             {"effective_bins", fb.effective_bins()}};
        if (fb.kind == FeatureKind::numeric) {
            jf["thresholds"] = fb.thresholds;
        } else {
            jf["categories"] = fb.categories;
        }
        features.push_back(std::move(jf));
    }
    return {{"format", "sure.binning"},
            {"version", kFormatVersion},
            {"num_bin", scheme.num_bin},
            {"features", std::move(features)},
            {"degenerate_features", scheme.degenerate_features}};
}

inline BinningScheme binning_from_json(const nlohmann::json& j) {
    if (j.at("format") != "sure.binning" || j.at("version") != kFormatVersion) {
        throw Error("unsupported binning document");
    }
    BinningScheme s;
    s.num_bin = j.at("num_bin").get<std::size_t>();
    for (const auto& jf : j.at("features")) {
        s.feature_names.push_back(jf.at("name").get<std::string>());
        FeatureBins fb;
        fb.kind = jf.at("kind") == "categorical" ? FeatureKind::categorical : FeatureKind::numeric;
        if (fb.kind == FeatureKind::numeric) {
            fb.thresholds = jf.at("thresholds").get<std::vector<double>>();
        } else {
            fb.categories = jf.at("categories").get<std::vector<std::string>>();
        }
        s.features.push_back(std::move(fb));
    }
    s.degenerate_features = j.at("degenerate_features").get<std::vector<FeatureIndex>>();
    return s;
}

inline nlohmann::json to_json(const DiscretizedDataset& dd) {
    return {{"format", "sure.discretized"},
            {"version", kFormatVersion},
            {"dataset_fingerprint", fingerprint(dd.base())},
            {"scheme", to_json(dd.scheme())},
            {"n_instances", dd.n_instances()},
            {"n_features", dd.n_features()},
            {"codes", dd.codes()}};
}

}  // namespace sure
