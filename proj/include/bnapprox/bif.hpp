#pragma once

// Reader and canonical writer for the BIF 0.15 subset used by the public
// bnlearn networks:
//
//   network <name> { property ...; }
//   variable <name> { type discrete [ n ] { v1, ..., vn }; property ...; }
//   probability ( child | p1, p2 ) { (a, b) 0.1, 0.9; ... }
//   probability ( root ) { table 0.2, 0.8; }
//
// `//` and `/* */` comments are allowed anywhere.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "bnapprox/network.hpp"

namespace bnapprox {

struct BifVariable {
    std::string name;
    std::vector<std::string> values;

    friend bool operator==(const BifVariable&, const BifVariable&) = default;
};

struct BifProbability {
    std::string child;
    std::vector<std::string> parents;
    /// Parent-value tuple -> distribution over child values. Root CPTs use the
    /// empty tuple.
    std::map<std::vector<std::string>, std::vector<double>> rows;

    friend bool operator==(const BifProbability&, const BifProbability&) = default;
};

struct BifDocument {
    std::string network_name;
    std::vector<BifVariable> variables;
    std::vector<BifProbability> probability_blocks;

    friend bool operator==(const BifDocument&, const BifDocument&) = default;
};

enum class BifErrorKind {
    syntax,
    duplicate_variable,
    duplicate_value,
    undeclared_variable,
    unknown_value,
    duplicate_probability,
    duplicate_row,
    row_count_mismatch,
    vector_length_mismatch,
    invalid_probability,
    missing_probability,
    cycle,
};

inline const char* to_string(BifErrorKind kind) noexcept {
    switch (kind) {
        case BifErrorKind::syntax: return "syntax error";
        case BifErrorKind::duplicate_variable: return "duplicate variable";
        case BifErrorKind::duplicate_value: return "duplicate value label";
        case BifErrorKind::undeclared_variable: return "undeclared variable";
        case BifErrorKind::unknown_value: return "unknown value label";
        case BifErrorKind::duplicate_probability: return "duplicate probability block";
        case BifErrorKind::duplicate_row: return "duplicate probability row";
        case BifErrorKind::row_count_mismatch: return "row count mismatch";
        case BifErrorKind::vector_length_mismatch: return "probability vector length mismatch";
        case BifErrorKind::invalid_probability: return "invalid probability vector";
        case BifErrorKind::missing_probability: return "missing probability block";
        case BifErrorKind::cycle: return "cycle in network";
    }
    return "bif error";
}

/// Structured parse/validation error. `line` and `column` are 1-based; 0 when
/// the error is not tied to a source position.
class BifError : public std::runtime_error {
public:
    BifError(BifErrorKind kind, std::size_t line, std::size_t column, const std::string& detail)
        : std::runtime_error(format(kind, line, column, detail)), kind_(kind), line_(line), column_(column) {}

    BifErrorKind kind() const noexcept { return kind_; }
    std::size_t line() const noexcept { return line_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(BifErrorKind kind, std::size_t line, std::size_t column, const std::string& detail) {
        std::string msg = to_string(kind);
        if (line != 0) msg += " at " + std::to_string(line) + ":" + std::to_string(column);
        if (!detail.empty()) msg += ": " + detail;
        return msg;
    }

    BifErrorKind kind_;
    std::size_t line_;
    std::size_t column_;
};

namespace detail {

struct BifToken {
    enum class Kind { word, punct, end } kind;
    std::string text;
    std::size_t line;
    std::size_t column;
};

inline bool is_bif_punct(char c) {
    return c == '{' || c == '}' || c == '[' || c == ']' || c == '(' || c == ')' || c == ';' || c == ',' ||
           c == '|';
}

inline bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

inline std::vector<BifToken> tokenize_bif(std::string_view src) {
    std::vector<BifToken> out;
    std::size_t line = 1, col = 1, i = 0;
    auto advance = [&](std::size_t n) {
        for (std::size_t k = 0; k < n && i < src.size(); ++k, ++i) {
            if (src[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
    };
    while (i < src.size()) {
        const char c = src[i];
        if (is_space(c)) {
            advance(1);
        } else if (c == '/' && i + 1 < src.size() && src[i + 1] == '/') {
            while (i < src.size() && src[i] != '\n') advance(1);
        } else if (c == '/' && i + 1 < src.size() && src[i + 1] == '*') {
            const std::size_t l0 = line, c0 = col;
            advance(2);
            while (i < src.size() && !(src[i] == '*' && i + 1 < src.size() && src[i + 1] == '/')) advance(1);
            if (i >= src.size()) throw BifError(BifErrorKind::syntax, l0, c0, "unterminated comment");
            advance(2);
        } else if (is_bif_punct(c)) {
            out.push_back({BifToken::Kind::punct, std::string(1, c), line, col});
            advance(1);
        } else if (c == '"') {
            const std::size_t l0 = line, c0 = col;
            advance(1);
            const std::size_t start = i;
            while (i < src.size() && src[i] != '"') advance(1);
            if (i >= src.size()) throw BifError(BifErrorKind::syntax, l0, c0, "unterminated string");
            out.push_back({BifToken::Kind::word, std::string(src.substr(start, i - start)), l0, c0});
            advance(1);
        } else {
            const std::size_t l0 = line, c0 = col, start = i;
            while (i < src.size() && !is_space(src[i]) && !is_bif_punct(src[i]) && src[i] != '"' &&
                   !(src[i] == '/' && i + 1 < src.size() && (src[i + 1] == '/' || src[i + 1] == '*')))
                advance(1);
            out.push_back({BifToken::Kind::word, std::string(src.substr(start, i - start)), l0, c0});
        }
    }
    out.push_back({BifToken::Kind::end, "", line, col});
    return out;
}

class BifParser {
public:
    explicit BifParser(std::string_view src) : tokens_(tokenize_bif(src)) {}

    BifDocument parse() {
        BifDocument doc;
        std::set<std::string> seen_children;
        while (peek().kind != BifToken::Kind::end) {
            const BifToken& t = peek();
            if (t.kind == BifToken::Kind::word && t.text == "network") {
                next();
                doc.network_name = expect_word("network name").text;
                parse_property_block();
            } else if (t.kind == BifToken::Kind::word && t.text == "variable") {
                next();
                parse_variable(doc);
            } else if (t.kind == BifToken::Kind::word && t.text == "probability") {
                next();
                parse_probability(doc, seen_children);
            } else {
                fail(t, "expected 'network', 'variable' or 'probability', found '" + t.text + "'");
            }
        }
        return doc;
    }

private:
    const BifToken& peek() const { return tokens_[pos_]; }
    const BifToken& next() {
        const BifToken& t = tokens_[pos_];
        if (t.kind != BifToken::Kind::end) ++pos_;
        return t;
    }
    [[noreturn]] static void fail(const BifToken& t, const std::string& msg) {
        throw BifError(BifErrorKind::syntax, t.line, t.column, msg);
    }
    bool at_punct(char c) const { return peek().kind == BifToken::Kind::punct && peek().text[0] == c; }
    bool at_word(std::string_view w) const { return peek().kind == BifToken::Kind::word && peek().text == w; }
    void expect_punct(char c) {
        if (!at_punct(c)) fail(peek(), std::string("expected '") + c + "', found '" + describe(peek()) + "'");
        next();
    }
    const BifToken& expect_word(const char* what) {
        if (peek().kind != BifToken::Kind::word) fail(peek(), std::string("expected ") + what + ", found '" + describe(peek()) + "'");
        return next();
    }
    static std::string describe(const BifToken& t) { return t.kind == BifToken::Kind::end ? "end of input" : t.text; }

    static bool parse_number(const std::string& text, double& out) {
        const char* first = text.data();
        const char* last = text.data() + text.size();
        if (first != last && *first == '+') ++first;
        auto [ptr, ec] = std::from_chars(first, last, out);
        return ec == std::errc() && ptr == last;
    }

    void skip_property() {
        // property <anything> ;
        next();
        while (!at_punct(';')) {
            if (peek().kind == BifToken::Kind::end) fail(peek(), "unterminated property");
            next();
        }
        next();
    }

    void parse_property_block() {
        expect_punct('{');
        while (!at_punct('}')) {
            if (at_word("property")) {
                skip_property();
            } else {
                fail(peek(), "expected 'property' or '}', found '" + describe(peek()) + "'");
            }
        }
        next();
    }

    void parse_variable(BifDocument& doc) {
        const BifToken& name_tok = expect_word("variable name");
        BifVariable var{name_tok.text, {}};
        for (const auto& v : doc.variables)
            if (v.name == var.name)
                throw BifError(BifErrorKind::duplicate_variable, name_tok.line, name_tok.column, var.name);
        expect_punct('{');
        bool typed = false;
        while (!at_punct('}')) {
            if (at_word("property")) {
                skip_property();
            } else if (at_word("type")) {
                if (typed) fail(peek(), "variable '" + var.name + "' declares its type twice");
                next();
                if (!at_word("discrete")) fail(peek(), "only discrete variables are supported");
                next();
                expect_punct('[');
                const BifToken& count_tok = expect_word("value count");
                std::size_t count = 0;
                {
                    auto [ptr, ec] = std::from_chars(count_tok.text.data(), count_tok.text.data() + count_tok.text.size(), count);
                    if (ec != std::errc() || ptr != count_tok.text.data() + count_tok.text.size())
                        fail(count_tok, "invalid value count '" + count_tok.text + "'");
                }
                expect_punct(']');
                expect_punct('{');
                std::set<std::string> labels;
                while (true) {
                    const BifToken& label = expect_word("value label");
                    if (!labels.insert(label.text).second)
                        throw BifError(BifErrorKind::duplicate_value, label.line, label.column, var.name + "." + label.text);
                    var.values.push_back(label.text);
                    if (at_punct(',')) {
                        next();
                        continue;
                    }
                    break;
                }
                if (var.values.size() != count)
                    fail(count_tok, "variable '" + var.name + "' declares " + std::to_string(count) + " values but lists " +
                                        std::to_string(var.values.size()));
                expect_punct('}');
                expect_punct(';');
                typed = true;
            } else {
                fail(peek(), "expected 'type', 'property' or '}', found '" + describe(peek()) + "'");
            }
        }
        next();
        if (!typed) fail(name_tok, "variable '" + var.name + "' has no type declaration");
        doc.variables.push_back(std::move(var));
    }

    std::vector<double> parse_numbers() {
        std::vector<double> out;
        while (true) {
            const BifToken& t = expect_word("probability");
            double v = 0.0;
            if (!parse_number(t.text, v)) fail(t, "invalid number '" + t.text + "'");
            out.push_back(v);
            if (at_punct(',')) {
                next();
                continue;
            }
            break;
        }
        expect_punct(';');
        return out;
    }

    void parse_probability(BifDocument& doc, std::set<std::string>& seen_children) {
        const BifToken& open = peek();
        expect_punct('(');
        BifProbability block;
        const BifToken& child_tok = expect_word("child variable");
        block.child = child_tok.text;
        if (at_punct('|')) {
            next();
            while (true) {
                block.parents.push_back(expect_word("parent variable").text);
                if (at_punct(',')) {
                    next();
                    continue;
                }
                break;
            }
        }
        expect_punct(')');
        if (!seen_children.insert(block.child).second)
            throw BifError(BifErrorKind::duplicate_probability, child_tok.line, child_tok.column, block.child);

        expect_punct('{');
        while (!at_punct('}')) {
            if (at_word("property")) {
                skip_property();
            } else if (at_word("table")) {
                const BifToken& t = next();
                if (!block.parents.empty())
                    fail(t, "'table' form is only supported for root variables");
                if (block.rows.count({}))
                    throw BifError(BifErrorKind::duplicate_row, t.line, t.column, block.child);
                block.rows[{}] = parse_numbers();
            } else if (at_punct('(')) {
                const BifToken& t = next();
                std::vector<std::string> key;
                while (true) {
                    key.push_back(expect_word("parent value").text);
                    if (at_punct(',')) {
                        next();
                        continue;
                    }
                    break;
                }
                expect_punct(')');
                if (block.rows.count(key)) throw BifError(BifErrorKind::duplicate_row, t.line, t.column, block.child);
                row_positions_[{block.child, key}] = {t.line, t.column};
                block.rows[key] = parse_numbers();
            } else {
                fail(peek(), "expected a probability row, 'table' or '}', found '" + describe(peek()) + "'");
            }
        }
        next();
        block_positions_[block.child] = {open.line, open.column};
        doc.probability_blocks.push_back(std::move(block));
    }

public:
    // Positions of blocks/rows, for semantic errors reported after parsing.
    std::map<std::string, std::pair<std::size_t, std::size_t>> block_positions_;
    std::map<std::pair<std::string, std::vector<std::string>>, std::pair<std::size_t, std::size_t>> row_positions_;

private:
    std::vector<BifToken> tokens_;
    std::size_t pos_ = 0;
};

}  // namespace detail

/// Check the structural invariants of a document (declared names, full row
/// coverage, normalized vectors). Throws BifError.
inline void validate_bif(const BifDocument& doc,
                         const std::map<std::string, std::pair<std::size_t, std::size_t>>& block_pos = {},
                         const std::map<std::pair<std::string, std::vector<std::string>>,
                                        std::pair<std::size_t, std::size_t>>& row_pos = {}) {
    std::map<std::string, const BifVariable*> vars;
    for (const auto& v : doc.variables) {
        if (!vars.emplace(v.name, &v).second) throw BifError(BifErrorKind::duplicate_variable, 0, 0, v.name);
        if (v.values.empty()) throw BifError(BifErrorKind::syntax, 0, 0, "variable '" + v.name + "' has no values");
        std::set<std::string> labels(v.values.begin(), v.values.end());
        if (labels.size() != v.values.size()) throw BifError(BifErrorKind::duplicate_value, 0, 0, v.name);
    }
    std::set<std::string> children;
    for (const auto& block : doc.probability_blocks) {
        auto [bl, bc] = block_pos.count(block.child) ? block_pos.at(block.child) : std::pair<std::size_t, std::size_t>{0, 0};
        if (!children.insert(block.child).second) throw BifError(BifErrorKind::duplicate_probability, bl, bc, block.child);
        auto child_it = vars.find(block.child);
        if (child_it == vars.end()) throw BifError(BifErrorKind::undeclared_variable, bl, bc, block.child);
        const BifVariable& child = *child_it->second;
        std::size_t expected_rows = 1;
        std::vector<const BifVariable*> parents;
        std::set<std::string> parent_names;
        for (const auto& p : block.parents) {
            auto it = vars.find(p);
            if (it == vars.end()) throw BifError(BifErrorKind::undeclared_variable, bl, bc, p + " (parent of " + block.child + ")");
            if (p == block.child || !parent_names.insert(p).second)
                throw BifError(BifErrorKind::syntax, bl, bc, "invalid parent list for '" + block.child + "'");
            parents.push_back(it->second);
            expected_rows *= it->second->values.size();
        }
        for (const auto& [key, probs] : block.rows) {
            auto [rl, rc] = row_pos.count({block.child, key}) ? row_pos.at({block.child, key}) : std::pair{bl, bc};
            if (key.size() != parents.size())
                throw BifError(BifErrorKind::syntax, rl, rc,
                               "row of '" + block.child + "' names " + std::to_string(key.size()) + " parent values, expected " +
                                   std::to_string(parents.size()));
            for (std::size_t k = 0; k < key.size(); ++k) {
                const auto& values = parents[k]->values;
                if (std::find(values.begin(), values.end(), key[k]) == values.end())
                    throw BifError(BifErrorKind::unknown_value, rl, rc, parents[k]->name + "=" + key[k]);
            }
            if (probs.size() != child.values.size())
                throw BifError(BifErrorKind::vector_length_mismatch, rl, rc,
                               block.child + ": expected " + std::to_string(child.values.size()) + " entries, found " +
                                   std::to_string(probs.size()));
            double sum = 0.0;
            for (double p : probs) {
                if (!(p >= 0.0) || !std::isfinite(p))
                    throw BifError(BifErrorKind::invalid_probability, rl, rc, block.child + ": negative or non-finite entry");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw BifError(BifErrorKind::invalid_probability, rl, rc, block.child + ": entries sum to " + std::to_string(sum));
        }
        if (block.rows.size() != expected_rows)
            throw BifError(BifErrorKind::row_count_mismatch, bl, bc,
                           block.child + ": expected " + std::to_string(expected_rows) + " rows, found " +
                               std::to_string(block.rows.size()));
    }
}

inline BifDocument parse_bif(std::string_view source) {
    detail::BifParser parser(source);
    BifDocument doc = parser.parse();
    validate_bif(doc, parser.block_positions_, parser.row_positions_);
    return doc;
}

inline BifDocument read_bif_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open network file '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_bif(ss.str());
}

namespace detail {

/// Six significant digits when that reproduces the value exactly, otherwise
/// the shortest representation that does.
inline std::string format_probability(double p) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", p);
    double back = 0.0;
    std::from_chars(buf, buf + std::strlen(buf), back);
    if (back == p) return buf;
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, p);
    return std::string(buf, end);
}

/// Identifier as written to BIF; quoted when it would not tokenize as one word.
inline std::string bif_word(const std::string& w) {
    bool plain = !w.empty();
    for (std::size_t i = 0; i < w.size() && plain; ++i)
        plain = !is_space(w[i]) && !is_bif_punct(w[i]) && w[i] != '"' &&
                !(w[i] == '/' && i + 1 < w.size() && (w[i + 1] == '/' || w[i + 1] == '*'));
    return plain ? w : "\"" + w + "\"";
}

/// Parent-value tuples in canonical order: row-major over parents as listed,
/// values in declared order, last parent fastest.
inline std::vector<std::vector<std::size_t>> parent_tuples(const std::vector<std::size_t>& cards) {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> idx(cards.size(), 0);
    while (true) {
        out.push_back(idx);
        std::size_t k = cards.size();
        while (k > 0) {
            --k;
            if (++idx[k] < cards[k]) break;
            idx[k] = 0;
            if (k == 0) return out;
        }
        if (cards.empty()) return out;
    }
}

}  // namespace detail

/// Deterministic BIF text: variables in declared order, rows in canonical
/// parent order, probabilities with 6 significant digits.
inline std::string serialize_bif(const BifDocument& doc) {
    std::map<std::string, const BifVariable*> vars;
    for (const auto& v : doc.variables) vars[v.name] = &v;

    std::ostringstream out;
    out << "network " << detail::bif_word(doc.network_name.empty() ? "unknown" : doc.network_name) << " {\n}\n";
    for (const auto& v : doc.variables) {
        out << "variable " << detail::bif_word(v.name) << " {\n  type discrete [ " << v.values.size() << " ] { ";
        for (std::size_t k = 0; k < v.values.size(); ++k) out << (k ? ", " : "") << detail::bif_word(v.values[k]);
        out << " };\n}\n";
    }
    auto write_probs = [&](const std::vector<double>& probs) {
        for (std::size_t k = 0; k < probs.size(); ++k) out << (k ? ", " : "") << detail::format_probability(probs[k]);
        out << ";\n";
    };
    // Blocks follow variable declaration order.
    for (const auto& v : doc.variables) {
        auto it = std::find_if(doc.probability_blocks.begin(), doc.probability_blocks.end(),
                               [&](const BifProbability& b) { return b.child == v.name; });
        if (it == doc.probability_blocks.end()) continue;
        const BifProbability& block = *it;
        out << "probability ( " << detail::bif_word(block.child);
        for (std::size_t k = 0; k < block.parents.size(); ++k) out << (k ? ", " : " | ") << detail::bif_word(block.parents[k]);
        out << " ) {\n";
        if (block.parents.empty()) {
            out << "  table ";
            write_probs(block.rows.at({}));
        } else {
            std::vector<std::size_t> cards;
            for (const auto& p : block.parents) cards.push_back(vars.at(p)->values.size());
            for (const auto& tuple : detail::parent_tuples(cards)) {
                std::vector<std::string> key;
                for (std::size_t k = 0; k < tuple.size(); ++k) key.push_back(vars.at(block.parents[k])->values[tuple[k]]);
                out << "  (";
                for (std::size_t k = 0; k < key.size(); ++k) out << (k ? ", " : "") << detail::bif_word(key[k]);
                out << ") ";
                write_probs(block.rows.at(key));
            }
        }
        out << "}\n";
    }
    return out.str();
}

/// Build the network: variables in declaration order, parents in the order of
/// each probability block, CPT rows in canonical parent-tuple order.
inline Network to_network(const BifDocument& doc) {
    validate_bif(doc);
    std::map<std::string, std::size_t> index;
    std::vector<Variable> variables;
    for (const auto& v : doc.variables) {
        index[v.name] = variables.size();
        variables.push_back({v.name, v.values});
    }
    const std::size_t n = variables.size();
    std::vector<std::vector<std::size_t>> parents(n);
    std::vector<std::vector<double>> cpts(n);
    std::vector<bool> has_block(n, false);
    for (const auto& block : doc.probability_blocks) {
        const std::size_t child = index.at(block.child);
        has_block[child] = true;
        std::vector<std::size_t> cards;
        for (const auto& p : block.parents) {
            parents[child].push_back(index.at(p));
            cards.push_back(variables[index.at(p)].cardinality());
        }
        auto& table = cpts[child];
        for (const auto& tuple : detail::parent_tuples(cards)) {
            std::vector<std::string> key;
            for (std::size_t k = 0; k < tuple.size(); ++k) key.push_back(variables[parents[child][k]].labels[tuple[k]]);
            const auto& probs = block.rows.at(key);
            table.insert(table.end(), probs.begin(), probs.end());
        }
    }
    for (std::size_t i = 0; i < n; ++i)
        if (!has_block[i]) throw BifError(BifErrorKind::missing_probability, 0, 0, variables[i].name);

    // Cycle check before Network construction so the error is a BifError.
    std::vector<int> state(n, 0);  // 0 = unvisited, 1 = on stack, 2 = done
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t s = 0; s < n; ++s) {
        if (state[s]) continue;
        stack.push_back({s, 0});
        state[s] = 1;
        while (!stack.empty()) {
            auto& [v, k] = stack.back();
            if (k < parents[v].size()) {
                const std::size_t p = parents[v][k++];
                if (state[p] == 1) throw BifError(BifErrorKind::cycle, 0, 0, "through '" + variables[p].name + "'");
                if (state[p] == 0) {
                    state[p] = 1;
                    stack.push_back({p, 0});
                }
            } else {
                state[v] = 2;
                stack.pop_back();
            }
        }
    }
    return Network(doc.network_name, std::move(variables), std::move(parents), std::move(cpts));
}

inline Network load_network(const std::string& path) { return to_network(read_bif_file(path)); }

}  // namespace bnapprox
