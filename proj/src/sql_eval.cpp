#include "shift/sql_eval.hpp"

#include <algorithm>
#include <cstdio>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "shift/errors.hpp"

namespace shift {

int compare_values(const Value& a, const Value& b) {
    if (a.is_null() && b.is_null()) return 0;
    if (a.is_null()) return 1; // nulls sort last
    if (b.is_null()) return -1;
    if (a.kind != b.kind)
        fail(ErrorCode::TypeMismatch, "cannot compare a number with a string");
    if (a.kind == Value::Kind::Number)
        return a.num < b.num ? -1 : (a.num > b.num ? 1 : 0);
    return a.text < b.text ? -1 : (a.text > b.text ? 1 : 0);
}

int Table::column_index(const std::string& name) const {
    for (size_t i = 0; i < columns.size(); ++i)
        if (columns[i] == name) return int(i);
    return -1;
}

namespace {

const std::map<std::string, std::set<std::string>>& view_schemas() {
    static const std::map<std::string, std::set<std::string>> schemas{
        {"Models",
         {"ModelId", "Source", "Input", "nParam", "UpstreamAccuracy", "FeatureDim",
          "InferenceCost", "LoadCost"}},
        {"DataReaders",
         {"DataReaderId", "Modality", "nSamples", "LabelCardinality", "Type", "Kind",
          "Parent"}},
        {"BenchmarkResults", {"ModelId", "DataReaderId", "Accuracy", "WallTime"}},
    };
    return schemas;
}

std::pair<std::string, std::string> split_attr(const std::string& attr) {
    size_t dot = attr.find('.');
    if (dot == std::string::npos) return {"", attr};
    return {attr.substr(0, dot), attr.substr(dot + 1)};
}

std::string value_key(const Value& v) {
    switch (v.kind) {
        case Value::Kind::Null: return "n";
        case Value::Kind::Number: {
            char buf[32];
            snprintf(buf, sizeof buf, "d%.17g", v.num);
            return buf;
        }
        case Value::Kind::Text: return "t" + v.text;
    }
    return "n";
}

std::string row_key(const Row& row) {
    std::string key;
    for (const Value& v : row.values) {
        key += value_key(v);
        key.push_back('\x1f');
    }
    return key;
}

} // namespace

int resolve_attr(const Table& table, const std::string& attr) {
    auto [qualifier, name] = split_attr(attr);
    if (!qualifier.empty()) {
        auto it = view_schemas().find(qualifier);
        if (it == view_schemas().end())
            fail(ErrorCode::UnknownView, "unknown view '" + qualifier + "'");
        if (!it->second.count(name))
            fail(ErrorCode::UnknownAttribute,
                 "view " + qualifier + " has no attribute '" + name + "'");
    }
    int idx = table.column_index(name);
    if (idx < 0) fail(ErrorCode::UnknownAttribute, "unknown attribute '" + name + "'");
    return idx;
}

std::string row_entity_id(const Table& table, const Row& row) {
    for (const char* key : {"ModelId", "DataReaderId"}) {
        int idx = table.column_index(key);
        if (idx >= 0 && !row.values[idx].is_null()) return row.values[idx].text;
    }
    return "";
}

Table project_rows(const Table& in, const std::vector<size_t>& rows,
                   const std::vector<std::string>& select_list) {
    Table out;
    std::vector<int> keep;
    if (select_list.empty()) {
        out.columns = in.columns;
        for (size_t i = 0; i < in.columns.size(); ++i) keep.push_back(int(i));
    } else {
        for (const auto& attr : select_list) {
            keep.push_back(resolve_attr(in, attr));
            out.columns.push_back(in.columns[keep.back()]);
        }
    }
    for (size_t r : rows) {
        Row row;
        for (int c : keep) row.values.push_back(in.rows[r].values[c]);
        out.rows.push_back(std::move(row));
    }
    return out;
}

// ---------------------------------------------------------------------------

SqlEvaluator::SqlEvaluator(CatalogView view) : view_(std::move(view)) {}

void SqlEvaluator::bind(const std::string& name, Table table) {
    env_[name] = std::move(table);
}

const Table* SqlEvaluator::binding(const std::string& name) const {
    auto it = env_.find(name);
    return it == env_.end() ? nullptr : &it->second;
}

void SqlEvaluator::set_scoring_delegate(std::function<Table(const QueryNode&)> delegate) {
    delegate_ = std::move(delegate);
}

Table SqlEvaluator::view_table(const std::string& name) const {
    Table t;
    if (name == "Models") {
        t.columns = {"ModelId", "Source", "Input", "nParam", "UpstreamAccuracy",
                     "FeatureDim", "InferenceCost", "LoadCost"};
        for (const auto& m : view_.models()) {
            Row row;
            row.values = {
                Value::str(m.model_id),
                Value::str(to_string(m.source)),
                Value::str(to_string(m.input_modality)),
                Value::number(double(m.n_params)),
                m.upstream_accuracy ? Value::number(*m.upstream_accuracy) : Value::null(),
                Value::number(double(m.feature_dim)),
                Value::number(m.per_sample_inference_cost),
                Value::number(m.load_cost),
            };
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (name == "DataReaders") {
        t.columns = {"DataReaderId", "Modality", "nSamples", "LabelCardinality",
                     "Type", "Kind", "Parent"};
        for (const auto& r : view_.readers()) {
            Row row;
            row.values = {
                Value::str(r.reader_id),
                Value::str(to_string(r.modality)),
                Value::number(double(r.n_samples)),
                Value::number(double(r.label_cardinality)),
                Value::str(r.type_tag),
                Value::str(to_string(r.reader_kind)),
                r.parent_reader ? Value::str(*r.parent_reader) : Value::null(),
            };
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    if (name == "BenchmarkResults") {
        t.columns = {"ModelId", "DataReaderId", "Accuracy", "WallTime"};
        for (const auto& r : view_.results()) {
            Row row;
            row.values = {
                Value::str(r.model_id),
                Value::str(r.reader_id),
                Value::number(r.accuracy),
                r.wall_time ? Value::number(*r.wall_time) : Value::null(),
            };
            t.rows.push_back(std::move(row));
        }
        return t;
    }
    fail(ErrorCode::UnknownView, "unknown view '" + name + "'");
}

namespace {

Table natural_join(const Table& left, const Table& right) {
    std::vector<std::pair<int, int>> shared; // (left idx, right idx)
    std::vector<int> right_extra;
    for (size_t rc = 0; rc < right.columns.size(); ++rc) {
        int lc = left.column_index(right.columns[rc]);
        if (lc >= 0)
            shared.emplace_back(lc, int(rc));
        else
            right_extra.push_back(int(rc));
    }
    Table out;
    out.columns = left.columns;
    for (int rc : right_extra) out.columns.push_back(right.columns[rc]);

    // Hash right rows on the shared-column key.
    std::unordered_map<std::string, std::vector<size_t>> index;
    for (size_t r = 0; r < right.rows.size(); ++r) {
        std::string key;
        for (auto [lc, rc] : shared) {
            key += value_key(right.rows[r].values[rc]);
            key.push_back('\x1f');
        }
        index[key].push_back(r);
    }
    for (const Row& lrow : left.rows) {
        std::string key;
        for (auto [lc, rc] : shared) {
            key += value_key(lrow.values[lc]);
            key.push_back('\x1f');
        }
        auto it = index.find(key);
        if (it == index.end()) continue;
        for (size_t r : it->second) {
            Row row;
            row.values = lrow.values;
            for (int rc : right_extra) row.values.push_back(right.rows[r].values[rc]);
            out.rows.push_back(std::move(row));
        }
    }
    return out;
}

void collect_qualifiers(const Expr& e, std::set<std::string>& out) {
    if (e.kind == Expr::Kind::Attr) {
        auto dot = e.attr.find('.');
        if (dot != std::string::npos) out.insert(e.attr.substr(0, dot));
        return;
    }
    for (const auto& kid : e.kids) collect_qualifiers(*kid, out);
    // Subqueries resolve in their own scope; nothing to collect inside.
}

void collect_node_qualifiers(const QueryNode& node, std::set<std::string>& out) {
    auto add = [&](const std::string& attr) {
        auto dot = attr.find('.');
        if (dot != std::string::npos) out.insert(attr.substr(0, dot));
    };
    for (const auto& a : node.select_list) add(a);
    if (node.where) collect_qualifiers(*node.where, out);
    if (node.retrieve) {
        add(node.retrieve->group_attr);
        add(node.retrieve->ord_attr);
    }
    if (!node.order_attr.empty()) add(node.order_attr);
}

} // namespace

Table SqlEvaluator::base_table(const QueryNode& node) {
    if (node.from_subquery) return eval(*node.from_subquery);

    std::vector<std::string> joined = node.from_views;
    // A qualified reference to a view missing from FROM pulls that view in
    // via NATURAL JOIN; Models and DataReaders share no attribute, so the
    // BenchmarkResults bridge joins first when needed.
    std::set<std::string> wanted;
    collect_node_qualifiers(node, wanted);
    for (const auto& view : wanted) {
        if (!view_schemas().count(view)) continue; // resolver reports these
        if (std::find(joined.begin(), joined.end(), view) != joined.end()) continue;
        bool bridged =
            std::find(joined.begin(), joined.end(), "BenchmarkResults") != joined.end();
        if (!bridged && view != "BenchmarkResults") {
            // Check for a direct shared attribute before bridging.
            bool direct = false;
            for (const auto& present : joined) {
                if (!view_schemas().count(present)) continue;
                for (const auto& attr : view_schemas().at(present))
                    if (view_schemas().at(view).count(attr)) direct = true;
            }
            if (!direct) joined.push_back("BenchmarkResults");
        }
        joined.push_back(view);
    }

    Table result;
    bool first = true;
    for (const auto& name : joined) {
        Table next;
        if (view_schemas().count(name)) {
            next = view_table(name);
        } else if (const Table* bound = binding(name)) {
            next = *bound;
        } else {
            fail(ErrorCode::UnknownView, "unknown view '" + name + "'");
        }
        if (first) {
            result = std::move(next);
            first = false;
        } else {
            result = natural_join(result, next);
        }
    }
    return result;
}

Table SqlEvaluator::eval_pool(const QueryNode& node) {
    Table table = base_table(node);

    if (node.where) {
        // Materialize IN sources once, not per row.
        std::unordered_map<const Expr*, std::unordered_set<std::string>> in_sets;
        std::function<void(const Expr&)> prepare = [&](const Expr& e) {
            if (e.kind == Expr::Kind::InRef || e.kind == Expr::Kind::InSubquery) {
                const Table* source = nullptr;
                Table owned;
                if (e.kind == Expr::Kind::InRef) {
                    source = binding(e.ref_name);
                    if (!source)
                        fail(ErrorCode::UnresolvedReference,
                             "no result named '" + e.ref_name + "'");
                } else {
                    owned = eval(*e.subquery);
                    if (!e.subquery_alias.empty()) bind(e.subquery_alias, owned);
                    source = &owned;
                }
                // Single-column results match on that column; wider ones must
                // carry a column named after the probed attribute.
                int col = 0;
                if (source->columns.size() != 1) {
                    auto name = split_attr(e.kids[0]->attr).second;
                    col = source->column_index(name);
                    if (col < 0)
                        fail(ErrorCode::TypeMismatch,
                             "IN source has no column matching '" + name + "'");
                }
                auto& set = in_sets[&e];
                for (const Row& row : source->rows)
                    set.insert(value_key(row.values[col]));
            }
            for (const auto& kid : e.kids) prepare(*kid);
            if (e.kind == Expr::Kind::InSubquery) return; // handled above
        };
        prepare(*node.where);

        auto operand = [&](const Expr& e, const Row& row) -> Value {
            if (e.kind == Expr::Kind::Lit) return e.lit;
            if (e.kind == Expr::Kind::Attr)
                return row.values[size_t(resolve_attr(table, e.attr))];
            fail(ErrorCode::TypeMismatch, "expected an attribute or literal");
        };
        std::function<bool(const Expr&, const Row&)> matches = [&](const Expr& e,
                                                                   const Row& row) -> bool {
            switch (e.kind) {
                case Expr::Kind::And:
                    for (const auto& kid : e.kids)
                        if (!matches(*kid, row)) return false;
                    return true;
                case Expr::Kind::Or:
                    for (const auto& kid : e.kids)
                        if (matches(*kid, row)) return true;
                    return false;
                case Expr::Kind::Not:
                    return !matches(*e.kids[0], row);
                case Expr::Kind::Cmp: {
                    Value a = operand(*e.kids[0], row);
                    Value b = operand(*e.kids[1], row);
                    if (a.is_null() || b.is_null()) return false;
                    int c = compare_values(a, b);
                    switch (e.op) {
                        case CmpOp::Eq: return c == 0;
                        case CmpOp::Ne: return c != 0;
                        case CmpOp::Lt: return c < 0;
                        case CmpOp::Le: return c <= 0;
                        case CmpOp::Gt: return c > 0;
                        case CmpOp::Ge: return c >= 0;
                    }
                    return false;
                }
                case Expr::Kind::InRef:
                case Expr::Kind::InSubquery: {
                    Value v = operand(*e.kids[0], row);
                    if (v.is_null()) return false;
                    bool present = in_sets[&e].count(value_key(v)) > 0;
                    return e.negated ? !present : present;
                }
                default:
                    fail(ErrorCode::TypeMismatch, "predicate expected");
            }
        };

        Table filtered;
        filtered.columns = table.columns;
        for (const Row& row : table.rows)
            if (matches(*node.where, row)) filtered.rows.push_back(row);
        table = std::move(filtered);
    }

    if (node.retrieve) {
        const RetrieveClause& r = *node.retrieve;
        int group_col = resolve_attr(table, r.group_attr);
        int ord_col = resolve_attr(table, r.ord_attr);
        // Stable grouping: groups ordered by key, rows within a group by the
        // ord attribute (ties by entity id, then input order), first k kept.
        std::map<std::string, std::vector<size_t>> groups;
        std::map<std::string, Value> group_values;
        for (size_t i = 0; i < table.rows.size(); ++i) {
            std::string key = value_key(table.rows[i].values[group_col]);
            groups[key].push_back(i);
            group_values.emplace(key, table.rows[i].values[group_col]);
        }
        std::vector<std::pair<Value, std::string>> ordered_groups;
        for (auto& [key, value] : group_values) ordered_groups.emplace_back(value, key);
        std::sort(ordered_groups.begin(), ordered_groups.end(),
                  [](const auto& a, const auto& b) {
                      return compare_values(a.first, b.first) < 0;
                  });
        Table out;
        out.columns = table.columns;
        for (const auto& [value, key] : ordered_groups) {
            auto& rows = groups[key];
            std::stable_sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
                int c = compare_values(table.rows[a].values[ord_col],
                                       table.rows[b].values[ord_col]);
                if (r.desc) c = -c;
                if (c != 0) return c < 0;
                return row_entity_id(table, table.rows[a]) <
                       row_entity_id(table, table.rows[b]);
            });
            for (size_t i = 0; i < rows.size() && i < r.k; ++i)
                out.rows.push_back(table.rows[rows[i]]);
        }
        table = std::move(out);
    }

    return table;
}

Table SqlEvaluator::eval_select(const QueryNode& node) {
    Table table = eval_pool(node);

    if (!node.order_attr.empty()) {
        int col = resolve_attr(table, node.order_attr);
        std::vector<size_t> order(table.rows.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
            const Value& va = table.rows[a].values[col];
            const Value& vb = table.rows[b].values[col];
            // Nulls last in either direction.
            if (va.is_null() != vb.is_null()) return vb.is_null();
            int c = compare_values(va, vb);
            if (node.order_desc) c = -c;
            if (c != 0) return c < 0;
            return row_entity_id(table, table.rows[a]) < row_entity_id(table, table.rows[b]);
        });
        Table sorted;
        sorted.columns = table.columns;
        for (size_t i : order) sorted.rows.push_back(std::move(table.rows[i]));
        table = std::move(sorted);
    }

    if (node.limit && table.rows.size() > *node.limit) table.rows.resize(*node.limit);

    std::vector<size_t> all(table.rows.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = i;
    return project_rows(table, all, node.select_list);
}

Table SqlEvaluator::eval(const QueryNode& node) {
    Table result;
    switch (node.kind) {
        case NodeKind::Ref: {
            const Table* bound = binding(node.ref_name);
            if (!bound)
                fail(ErrorCode::UnresolvedReference,
                     "no result named '" + node.ref_name + "'");
            result = *bound;
            break;
        }
        case NodeKind::Union: {
            std::unordered_set<std::string> seen;
            bool first = true;
            for (const auto& leg : node.legs) {
                Table t = eval(*leg);
                if (first) {
                    result.columns = t.columns;
                    first = false;
                } else if (t.columns != result.columns) {
                    fail(ErrorCode::TypeMismatch, "UNION legs have different schemas");
                }
                for (Row& row : t.rows)
                    if (seen.insert(row_key(row)).second) result.rows.push_back(std::move(row));
            }
            break;
        }
        case NodeKind::Select: {
            if (node.scoring) {
                if (!delegate_)
                    fail(ErrorCode::UnsupportedMethod,
                         "scoring views need the execution engine");
                result = delegate_(node);
            } else {
                result = eval_select(node);
            }
            break;
        }
    }
    if (!node.alias.empty()) bind(node.alias, result);
    return result;
}

Table SqlEvaluator::eval_script(const Script& script) {
    Table result;
    for (const Statement& s : script.statements) {
        result = eval(*s.query);
        if (!s.name.empty()) bind(s.name, result);
    }
    return result;
}

} // namespace shift
