#pragma once

#include <functional>
#include <map>
#include <string>

#include "shift/catalog.hpp"
#include "shift/query.hpp"

namespace shift {

// Resolves an attribute (possibly "View.Name" qualified) to a column index.
// A qualifier must be one of the three catalog views and own the attribute;
// throws UnknownView / UnknownAttribute.
int resolve_attr(const Table& table, const std::string& attr);

// Deterministic tie-break key of a row: its ModelId if the table has one,
// else its DataReaderId, else "".
std::string row_entity_id(const Table& table, const Row& row);

// Evaluates the pure-SQL part of a query tree against a catalog snapshot.
// Scoring and similarity views are delegated to a callback (the execution
// engine); without one they raise UnsupportedMethod. Named results (Q1-style
// bindings and "(...) Alias" forms) live in an environment that fills up in
// evaluation order.
class SqlEvaluator {
public:
    explicit SqlEvaluator(CatalogView view);

    void bind(const std::string& name, Table table);
    const Table* binding(const std::string& name) const;

    void set_scoring_delegate(std::function<Table(const QueryNode&)> delegate);

    Table eval(const QueryNode& node);
    // Runs statements in order, binding named ones; the last statement's
    // result is the script's result.
    Table eval_script(const Script& script);

    // Pool of a scoring view: FROM + implicit joins + WHERE + RETRIEVE, with
    // neither ordering, limit, nor projection applied. Used by the engine.
    Table eval_pool(const QueryNode& node);

    const CatalogView& catalog() const { return view_; }

private:
    CatalogView view_;
    std::map<std::string, Table> env_;
    std::function<Table(const QueryNode&)> delegate_;

    Table eval_select(const QueryNode& node);
    Table base_table(const QueryNode& node);
    Table view_table(const std::string& name) const;
};

// Projects `rows` (indices into `in`) onto the select list; an empty list
// keeps every column.
Table project_rows(const Table& in, const std::vector<size_t>& rows,
                   const std::vector<std::string>& select_list);

} // namespace shift
