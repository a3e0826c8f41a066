#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shift {

// ---------------------------------------------------------------------------
// Relational values and tables
// ---------------------------------------------------------------------------

struct Value {
    enum class Kind { Null, Number, Text };
    Kind kind = Kind::Null;
    double num = 0.0;
    std::string text;

    static Value null() { return {}; }
    static Value number(double v) { return {Kind::Number, v, {}}; }
    static Value str(std::string s) { return {Kind::Text, 0.0, std::move(s)}; }
    bool is_null() const { return kind == Kind::Null; }
    bool operator==(const Value&) const = default;
};

// Total order for ORDER BY: nulls sort last, numbers and text each compare
// naturally, comparing a number with a text throws TypeMismatch.
int compare_values(const Value& a, const Value& b);

struct Row {
    std::vector<Value> values; // parallel to Table::columns
};

struct Table {
    std::vector<std::string> columns;
    std::vector<Row> rows;

    int column_index(const std::string& name) const; // -1 when absent
};

// ---------------------------------------------------------------------------
// Query tree
// ---------------------------------------------------------------------------

struct QueryNode;
using QueryPtr = std::shared_ptr<QueryNode>;

enum class CmpOp { Eq, Ne, Lt, Le, Gt, Ge };

struct Expr {
    enum class Kind { And, Or, Not, Cmp, InRef, InSubquery, Attr, Lit };
    Kind kind = Kind::Lit;
    std::vector<std::shared_ptr<Expr>> kids; // And/Or operands, Not operand, Cmp sides
    CmpOp op = CmpOp::Eq;
    bool negated = false;     // IN vs NOT IN
    std::string attr;         // Attr: canonical, possibly "View.Name" qualified
    Value lit;                // Lit
    std::string ref_name;     // InRef: named result
    QueryPtr subquery;        // InSubquery
    std::string subquery_alias;
};

// Scoring key of a view: a registered proxy algorithm (CosineNN, EuclideanNN,
// Linear, LEEP, FineTune) or dataset-similarity metric (Task2Vec, MomentsCos)
// with optional named arguments, e.g. Linear(lr=0.1).
struct ScoringCall {
    std::string name;
    std::vector<std::pair<std::string, Value>> args;
};

enum class ScoringKind { None, Proxy, DataSim };
ScoringKind scoring_kind(const std::string& name);

// Top-k-per-group sugar evaluated after WHERE: keep the first k rows of each
// group when the group is sorted by the ord attribute.
struct RetrieveClause {
    uint64_t k = 1;
    std::string group_attr;
    std::string ord_attr;
    bool desc = false;
};

enum class NodeKind { Select, Union, Ref };

struct QueryNode {
    NodeKind kind = NodeKind::Select;
    std::string alias; // "(...) Name" binds the result under Name

    // --- Select ---
    std::vector<std::string> select_list; // empty means *
    std::vector<std::string> from_views;  // NATURAL JOIN chain, canonical names
    QueryPtr from_subquery;               // alternative to from_views
    std::shared_ptr<Expr> where;
    std::optional<RetrieveClause> retrieve;
    std::string order_attr;               // plain ORDER BY key ("" if none)
    std::optional<ScoringCall> scoring;   // scoring ORDER BY key
    bool order_desc = false;
    bool has_dir = false;                 // direction written explicitly
    std::optional<uint64_t> limit;
    std::string tested_on;                // test reader of a proxy view
    std::string trained_on;               // train reader of a proxy view
    std::string tested_against;           // target reader of a similarity view
    std::vector<std::string> with_readers; // reserved auxiliary readers

    // --- Union ---
    std::vector<QueryPtr> legs;

    // --- Ref ---
    std::string ref_name;
};

// One script statement: an optional "Name :=" binding or CREATE ... VIEW
// definition in front of a query. A bare query has an empty name.
struct Statement {
    std::string name;
    QueryPtr query;
};

struct Script {
    std::vector<Statement> statements; // executed in order; last one answers
};

// ---------------------------------------------------------------------------
// Parsing and printing
// ---------------------------------------------------------------------------

// Parses a whole script (bindings, view definitions, queries). Throws
// QuerySyntaxError with 1-based line/column on malformed input.
Script parse_script(std::string_view text);

// Parses exactly one query (no bindings); convenience for tests and the API.
QueryPtr parse_query(std::string_view text);

// Canonical single-line rendering: uppercase keywords, normalized view and
// attribute names, numeric suffixes expanded, <SHIFT> tags dropped. Stable
// under parse -> print -> parse -> print.
std::string pretty_print(const QueryNode& node);
std::string pretty_print(const Script& script);

// JSON shape documented in docs/formats.md.
std::string query_to_json(const QueryNode& node);

} // namespace shift
