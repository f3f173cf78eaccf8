#pragma once

// Synthetic black box: labels rows of a raw table with boolean expressions
// over its columns, then flips a seeded fraction of labels.
//
// Grammar:
//   expr    := and ( ("or" | "||") and )*
//   and     := unary ( ("and" | "&&") unary )*
//   unary   := ("not" | "!") unary | "(" expr ")" | compare
//   compare := operand ( "<" | "<=" | ">" | ">=" | "==" | "!=" ) operand
//   operand := column name | number | 'quoted' | "quoted"
//
// Several expressions separated by ';' give a multi-class labeler: the label
// is 1 + the index of the first true expression, or 0 when none holds.

#include <cctype>
#include <memory>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "sure/tabular.hpp"

namespace sure {

class Expression {
public:
    /// Parses `text` against the table's column names.
    static Expression parse(std::string_view text, const std::vector<std::string>& columns);

    bool evaluate(const std::vector<std::string>& row) const { return eval(*root_, row); }

private:
    enum class Op { lt, le, gt, ge, eq, ne };
    struct Operand {
        std::optional<std::size_t> column;
        std::string literal;
        std::optional<double> number;
    };
    struct Node {
        enum class Kind { and_, or_, not_, compare } kind = Kind::compare;
        std::unique_ptr<Node> lhs, rhs;
        Op op = Op::eq;
        Operand a, b;
    };

    class Parser;

    static bool eval(const Node& n, const std::vector<std::string>& row) {
        switch (n.kind) {
        case Node::Kind::and_:
            return eval(*n.lhs, row) && eval(*n.rhs, row);
        case Node::Kind::or_:
            return eval(*n.lhs, row) || eval(*n.rhs, row);
        case Node::Kind::not_:
            return !eval(*n.lhs, row);
        case Node::Kind::compare:
        default:
            return compare(n, row);
        }
    }

    static bool compare(const Node& n, const std::vector<std::string>& row) {
        auto text = [&](const Operand& o) -> const std::string& { return o.column ? row[*o.column] : o.literal; };
        auto number = [&](const Operand& o) { return o.column ? detail::parse_number(row[*o.column]) : o.number; };
        auto x = number(n.a), y = number(n.b);
        if (x && y) {
            switch (n.op) {
            case Op::lt: return *x < *y;
            case Op::le: return *x <= *y;
            case Op::gt: return *x > *y;
            case Op::ge: return *x >= *y;
            case Op::eq: return *x == *y;
            case Op::ne: return *x != *y;
            }
        }
        const auto& s = text(n.a);
        const auto& t = text(n.b);
        switch (n.op) {
        case Op::lt: return s < t;
        case Op::le: return s <= t;
        case Op::gt: return s > t;
        case Op::ge: return s >= t;
        case Op::eq: return s == t;
        case Op::ne: return s != t;
        }
        return false;
    }

    std::shared_ptr<const Node> root_;
};

class Expression::Parser {
public:
    Parser(std::string_view text, const std::vector<std::string>& columns) : text_(text), columns_(columns) {}

    std::unique_ptr<Node> run() {
        auto n = parse_or();
        skip_ws();
        if (pos_ != text_.size()) {
            fail("unexpected input");
        }
        return n;
    }

private:
    [[noreturn]] void fail(const std::string& what) const {
        throw Error("expression error at offset " + std::to_string(pos_) + ": " + what + " in '" +
                    std::string(text_) + "'");
    }

    void skip_ws() {
        while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) {
            ++pos_;
        }
    }

    static bool ident_char(char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
    }

    bool keyword(std::string_view kw) {
        skip_ws();
        if (text_.substr(pos_, kw.size()) == kw) {
            const std::size_t end = pos_ + kw.size();
            const bool word = std::isalpha(static_cast<unsigned char>(kw.front()));
            if (!word || end == text_.size() || !ident_char(text_[end])) {
                pos_ = end;
                return true;
            }
        }
        return false;
    }

    std::unique_ptr<Node> parse_or() {
        auto lhs = parse_and();
        while (keyword("or") || keyword("||")) {
            auto n = std::make_unique<Node>();
            n->kind = Node::Kind::or_;
            n->lhs = std::move(lhs);
            n->rhs = parse_and();
            lhs = std::move(n);
        }
        return lhs;
    }

    std::unique_ptr<Node> parse_and() {
        auto lhs = parse_unary();
        while (keyword("and") || keyword("&&")) {
            auto n = std::make_unique<Node>();
            n->kind = Node::Kind::and_;
            n->lhs = std::move(lhs);
            n->rhs = parse_unary();
            lhs = std::move(n);
        }
        return lhs;
    }

    std::unique_ptr<Node> parse_unary() {
        if (keyword("not") || (peek("!") && !peek("!=") && keyword("!"))) {
            auto n = std::make_unique<Node>();
            n->kind = Node::Kind::not_;
            n->lhs = parse_unary();
            return n;
        }
        if (keyword("(")) {
            auto n = parse_or();
            if (!keyword(")")) {
                fail("expected ')'");
            }
            return n;
        }
        auto n = std::make_unique<Node>();
        n->a = parse_operand();
        n->op = parse_op();
        n->b = parse_operand();
        return n;
    }

    bool peek(std::string_view s) {
        skip_ws();
        return text_.substr(pos_, s.size()) == s;
    }

    Op parse_op() {
        skip_ws();
        static const std::pair<const char*, Op> ops[] = {{"<=", Op::le}, {">=", Op::ge}, {"==", Op::eq},
                                                         {"!=", Op::ne}, {"<", Op::lt},  {">", Op::gt},
                                                         {"=", Op::eq}};
        for (const auto& [tok, op] : ops) {
            if (peek(tok)) {
                pos_ += std::string_view(tok).size();
                return op;
            }
        }
        fail("expected comparison operator");
    }

    Operand parse_operand() {
        skip_ws();
        if (pos_ >= text_.size()) {
            fail("expected operand");
        }
        Operand o;
        const char c = text_[pos_];
        if (c == '\'' || c == '"') {
            auto end = text_.find(c, pos_ + 1);
            if (end == std::string_view::npos) {
                fail("unterminated string");
            }
            o.literal = std::string(text_.substr(pos_ + 1, end - pos_ - 1));
            o.number = detail::parse_number(o.literal);
            pos_ = end + 1;
            return o;
        }
        const std::size_t start = pos_;
        while (pos_ < text_.size() && (ident_char(text_[pos_]) || text_[pos_] == '+')) {
            ++pos_;
        }
        if (start == pos_) {
            fail("expected operand");
        }
        std::string tok(text_.substr(start, pos_ - start));
        for (std::size_t i = 0; i < columns_.size(); ++i) {
            if (columns_[i] == tok) {
                o.column = i;
                return o;
            }
        }
        o.number = detail::parse_number(tok);
        if (!o.number) {
            fail("unknown column '" + tok + "'");
        }
        o.literal = tok;
        return o;
    }

    std::string_view text_;
    const std::vector<std::string>& columns_;
    std::size_t pos_ = 0;
};

inline Expression Expression::parse(std::string_view text, const std::vector<std::string>& columns) {
    Expression e;
    e.root_ = Parser(text, columns).run();
    return e;
}

struct LabelerOptions {
    /// One or more expressions separated by ';'.
    std::string rule;
    double noise = 0.0;
    std::uint64_t seed = 42;
    /// Output name per class id; defaults to "0", "1", ...
    std::vector<std::string> class_names;
};

struct LabelerResult {
    std::vector<std::string> labels;
    std::vector<ClassId> clean;   // before noise
    std::vector<ClassId> noisy;   // after noise
    std::size_t flipped = 0;
};

inline LabelerResult run_labeler(const RawTable& table, const LabelerOptions& options) {
    if (!(options.noise >= 0.0 && options.noise <= 1.0)) {
        throw Error("noise must be in [0, 1]");
    }
    std::vector<Expression> exprs;
    std::string_view rest = options.rule;
    while (true) {
        auto semi = rest.find(';');
        auto part = detail::trim(rest.substr(0, semi));
        if (part.empty()) {
            throw Error("empty labeler expression");
        }
        exprs.push_back(Expression::parse(part, table.header));
        if (semi == std::string_view::npos) {
            break;
        }
        rest.remove_prefix(semi + 1);
    }
    const std::size_t k = exprs.size() + 1;
    std::vector<std::string> names = options.class_names;
    if (names.empty()) {
        for (std::size_t c = 0; c < k; ++c) {
            names.push_back(std::to_string(c));
        }
    }
    if (names.size() != k) {
        throw Error("labeler needs " + std::to_string(k) + " class names, got " + std::to_string(names.size()));
    }

    LabelerResult out;
    std::mt19937_64 rng(options.seed);
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> other(1, k - 1);
    for (const auto& row : table.cells) {
        ClassId label = 0;
        for (std::size_t e = 0; e < exprs.size(); ++e) {
            if (exprs[e].evaluate(row)) {
                label = static_cast<ClassId>(e + 1);
                break;
            }
        }
        out.clean.push_back(label);
        ClassId noisy = label;
        if (coin(rng) < options.noise) {
            noisy = static_cast<ClassId>((label + other(rng)) % k);
            ++out.flipped;
        }
        out.noisy.push_back(noisy);
        out.labels.push_back(names[noisy]);
    }
    return out;
}

inline std::string labels_text(const LabelerResult& r) {
    std::string out;
    for (const auto& l : r.labels) {
        out += l;
        out += '\n';
    }
    return out;
}

}  // namespace sure
