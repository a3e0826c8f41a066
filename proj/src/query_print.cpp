#include <charconv>

#include <json.hpp>

#include "shift/errors.hpp"
#include "shift/query.hpp"

namespace shift {

namespace {

std::string fmt_number(double v) {
    char buf[32];
    // Integral values as plain integers, everything else shortest-round-trip.
    if (v == (double)(long long)v && v > -9.0e15 && v < 9.0e15) {
        auto [p, ec] = std::to_chars(buf, buf + sizeof buf, (long long)v);
        if (ec == std::errc{}) return std::string(buf, p);
    }
    auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc{}) fail(ErrorCode::OutOfRange, "unprintable number");
    return std::string(buf, p);
}

std::string fmt_value(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null: return "NULL";
        case Value::Kind::Number: return fmt_number(v.num);
        case Value::Kind::Text: {
            std::string out = "'";
            for (char c : v.text) {
                out.push_back(c);
                if (c == '\'') out.push_back('\'');
            }
            out.push_back('\'');
            return out;
        }
    }
    return "NULL";
}

const char* cmp_text(CmpOp op) {
    switch (op) {
        case CmpOp::Eq: return "=";
        case CmpOp::Ne: return "!=";
        case CmpOp::Lt: return "<";
        case CmpOp::Le: return "<=";
        case CmpOp::Gt: return ">";
        case CmpOp::Ge: return ">=";
    }
    return "?";
}

std::string print_node(const QueryNode& node);

// Precedence: Or < And < Not < predicates. Parenthesize a child only when it
// binds looser than its context.
int expr_prec(const Expr& e) {
    switch (e.kind) {
        case Expr::Kind::Or: return 0;
        case Expr::Kind::And: return 1;
        case Expr::Kind::Not: return 2;
        default: return 3;
    }
}

std::string print_expr(const Expr& e, int context_prec) {
    std::string out;
    switch (e.kind) {
        case Expr::Kind::Or:
        case Expr::Kind::And: {
            const char* sep = e.kind == Expr::Kind::Or ? " OR " : " AND ";
            for (size_t i = 0; i < e.kids.size(); ++i) {
                if (i) out += sep;
                out += print_expr(*e.kids[i], expr_prec(e));
            }
            break;
        }
        case Expr::Kind::Not:
            out = "NOT " + print_expr(*e.kids[0], expr_prec(e));
            break;
        case Expr::Kind::Cmp:
            out = print_expr(*e.kids[0], 3) + " " + cmp_text(e.op) + " " +
                  print_expr(*e.kids[1], 3);
            break;
        case Expr::Kind::InRef:
            out = print_expr(*e.kids[0], 3) + (e.negated ? " NOT IN " : " IN ") + e.ref_name;
            break;
        case Expr::Kind::InSubquery:
            out = print_expr(*e.kids[0], 3) + (e.negated ? " NOT IN (" : " IN (") +
                  print_node(*e.subquery) + ")";
            if (!e.subquery_alias.empty()) out += " " + e.subquery_alias;
            break;
        case Expr::Kind::Attr:
            out = e.attr;
            break;
        case Expr::Kind::Lit:
            out = fmt_value(e.lit);
            break;
    }
    if (expr_prec(e) < context_prec && e.kids.size() > 1 &&
        (e.kind == Expr::Kind::Or || e.kind == Expr::Kind::And))
        return "(" + out + ")";
    return out;
}

std::string print_scoring(const ScoringCall& call) {
    std::string out = call.name;
    if (!call.args.empty()) {
        out += "(";
        for (size_t i = 0; i < call.args.size(); ++i) {
            if (i) out += ", ";
            out += call.args[i].first + "=" + fmt_value(call.args[i].second);
        }
        out += ")";
    }
    return out;
}

std::string print_select(const QueryNode& node) {
    std::string out = "SELECT ";
    if (node.select_list.empty()) {
        out += "*";
    } else {
        for (size_t i = 0; i < node.select_list.size(); ++i) {
            if (i) out += ", ";
            out += node.select_list[i];
        }
    }
    out += " FROM ";
    if (node.from_subquery) {
        out += "(" + print_node(*node.from_subquery) + ")";
        if (!node.from_subquery->alias.empty()) out += " " + node.from_subquery->alias;
    } else {
        for (size_t i = 0; i < node.from_views.size(); ++i) {
            if (i) out += " NATURAL JOIN ";
            out += node.from_views[i];
        }
    }
    if (node.where) out += " WHERE " + print_expr(*node.where, 0);
    if (node.retrieve) {
        out += " RETRIEVE " + std::to_string(node.retrieve->k) + " GRP " +
               node.retrieve->group_attr + " ORD " + node.retrieve->ord_attr;
        if (node.retrieve->desc) out += " DESC";
    }
    if (node.scoring) {
        out += " ORDER BY " + print_scoring(*node.scoring);
    } else if (!node.order_attr.empty()) {
        out += " ORDER BY " + node.order_attr;
    }
    if (node.has_dir) out += node.order_desc ? " DESC" : " ASC";
    if (node.limit) out += " LIMIT " + std::to_string(*node.limit);
    if (!node.tested_on.empty()) out += " TESTED ON " + node.tested_on;
    if (!node.trained_on.empty()) out += " TRAINED ON " + node.trained_on;
    if (!node.tested_against.empty()) out += " TESTED AGAINST " + node.tested_against;
    if (!node.with_readers.empty()) {
        out += " WITH ";
        for (size_t i = 0; i < node.with_readers.size(); ++i) {
            if (i) out += ", ";
            out += node.with_readers[i];
        }
    }
    return out;
}

// Body without the alias wrapper.
std::string print_body(const QueryNode& node) {
    switch (node.kind) {
        case NodeKind::Select: return print_select(node);
        case NodeKind::Ref: return node.ref_name;
        case NodeKind::Union: {
            std::string out;
            for (size_t i = 0; i < node.legs.size(); ++i) {
                if (i) out += " UNION ";
                const QueryNode& leg = *node.legs[i];
                // A union leg needs parens when aliased or itself a union.
                if (!leg.alias.empty() || leg.kind == NodeKind::Union)
                    out += "(" + print_body(leg) + ")" +
                           (leg.alias.empty() ? "" : " " + leg.alias);
                else
                    out += print_body(leg);
            }
            return out;
        }
    }
    return "";
}

std::string print_node(const QueryNode& node) { return print_body(node); }

} // namespace

std::string pretty_print(const QueryNode& node) {
    if (!node.alias.empty()) return "(" + print_body(node) + ") " + node.alias;
    return print_body(node);
}

std::string pretty_print(const Script& script) {
    std::string out;
    for (size_t i = 0; i < script.statements.size(); ++i) {
        if (i) out += "\n";
        const Statement& s = script.statements[i];
        if (!s.name.empty()) out += s.name + " := ";
        out += pretty_print(*s.query);
    }
    return out;
}

// ---------------------------------------------------------------------------
// JSON encoding
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;

json value_to_json(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null: return nullptr;
        case Value::Kind::Number: return v.num;
        case Value::Kind::Text: return v.text;
    }
    return nullptr;
}

json expr_to_json(const Expr& e) {
    json j;
    switch (e.kind) {
        case Expr::Kind::And:
        case Expr::Kind::Or: {
            j["op"] = e.kind == Expr::Kind::And ? "and" : "or";
            j["args"] = json::array();
            for (const auto& k : e.kids) j["args"].push_back(expr_to_json(*k));
            break;
        }
        case Expr::Kind::Not:
            j["op"] = "not";
            j["args"] = json::array({expr_to_json(*e.kids[0])});
            break;
        case Expr::Kind::Cmp:
            j["op"] = cmp_text(e.op);
            j["args"] = json::array({expr_to_json(*e.kids[0]), expr_to_json(*e.kids[1])});
            break;
        case Expr::Kind::InRef:
            j["op"] = e.negated ? "not_in" : "in";
            j["args"] = json::array({expr_to_json(*e.kids[0])});
            j["ref"] = e.ref_name;
            break;
        case Expr::Kind::InSubquery:
            j["op"] = e.negated ? "not_in" : "in";
            j["args"] = json::array({expr_to_json(*e.kids[0])});
            j["subquery"] = json::parse(query_to_json(*e.subquery));
            if (!e.subquery_alias.empty()) j["alias"] = e.subquery_alias;
            break;
        case Expr::Kind::Attr:
            j["attr"] = e.attr;
            break;
        case Expr::Kind::Lit:
            j["value"] = value_to_json(e.lit);
            break;
    }
    return j;
}

json node_to_json(const QueryNode& node) {
    json j;
    if (!node.alias.empty()) j["alias"] = node.alias;
    switch (node.kind) {
        case NodeKind::Ref:
            j["kind"] = "ref";
            j["name"] = node.ref_name;
            return j;
        case NodeKind::Union: {
            j["kind"] = "union";
            j["legs"] = json::array();
            for (const auto& leg : node.legs) j["legs"].push_back(node_to_json(*leg));
            return j;
        }
        case NodeKind::Select: break;
    }
    j["kind"] = node.scoring
                    ? (scoring_kind(node.scoring->name) == ScoringKind::DataSim
                           ? "similarity_view"
                           : "scoring_view")
                    : "select";
    j["select"] = node.select_list.empty() ? json::array({"*"}) : json(node.select_list);
    if (node.from_subquery)
        j["from"] = node_to_json(*node.from_subquery);
    else
        j["from"] = node.from_views;
    if (node.where) j["where"] = expr_to_json(*node.where);
    if (node.retrieve) {
        j["retrieve"] = {{"k", node.retrieve->k},
                         {"group", node.retrieve->group_attr},
                         {"ord", node.retrieve->ord_attr},
                         {"desc", node.retrieve->desc}};
    }
    if (node.scoring) {
        json args = json::object();
        for (const auto& [k, v] : node.scoring->args) args[k] = value_to_json(v);
        j["scoring"] = {{"name", node.scoring->name}, {"args", args}};
    } else if (!node.order_attr.empty()) {
        j["order_by"] = node.order_attr;
    }
    if (node.scoring || !node.order_attr.empty())
        j["descending"] = node.order_desc;
    if (node.limit) j["limit"] = *node.limit;
    if (!node.tested_on.empty()) j["tested_on"] = node.tested_on;
    if (!node.trained_on.empty()) j["trained_on"] = node.trained_on;
    if (!node.tested_against.empty()) j["tested_against"] = node.tested_against;
    if (!node.with_readers.empty()) j["with"] = node.with_readers;
    return j;
}

} // namespace

std::string query_to_json(const QueryNode& node) { return node_to_json(node).dump(); }

} // namespace shift
