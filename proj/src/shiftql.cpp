#include <algorithm>
#include <cctype>
#include <charconv>

#include "shift/errors.hpp"
#include "shift/query.hpp"

namespace shift {

ScoringKind scoring_kind(const std::string& name) {
    static const struct {
        const char* name;
        ScoringKind kind;
    } registry[] = {
        {"CosineNN", ScoringKind::Proxy},   {"EuclideanNN", ScoringKind::Proxy},
        {"Linear", ScoringKind::Proxy},     {"LEEP", ScoringKind::Proxy},
        {"FineTune", ScoringKind::Proxy},   {"Task2Vec", ScoringKind::DataSim},
        {"MomentsCos", ScoringKind::DataSim},
    };
    for (const auto& entry : registry)
        if (name == entry.name) return entry.kind;
    return ScoringKind::None;
}

namespace {

// ---------------------------------------------------------------------------
// Lexer
// ---------------------------------------------------------------------------

struct Token {
    enum class Kind { End, Ident, Number, String, Sym, ShiftOpen, ShiftClose };
    Kind kind = Kind::End;
    std::string text;
    double num = 0.0;
    int line = 1;
    int col = 1;
};

bool ieq(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (std::toupper((unsigned char)a[i]) != std::toupper((unsigned char)b[i]))
            return false;
    return true;
}

class Lexer {
public:
    explicit Lexer(std::string_view text) : text_(text) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        while (true) {
            skip_space();
            Token t = next_token();
            bool end = t.kind == Token::Kind::End;
            out.push_back(std::move(t));
            if (end) return out;
        }
    }

private:
    std::string_view text_;
    size_t pos_ = 0;
    int line_ = 1, col_ = 1;

    char peek(size_t ahead = 0) const {
        return pos_ + ahead < text_.size() ? text_[pos_ + ahead] : '\0';
    }
    char advance() {
        char c = text_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }
    [[noreturn]] void error(const std::string& msg, int line, int col) const {
        throw QuerySyntaxError(msg, line, col);
    }

    void skip_space() {
        while (pos_ < text_.size()) {
            char c = peek();
            if (std::isspace((unsigned char)c)) {
                advance();
            } else if (c == '-' && peek(1) == '-') {
                while (pos_ < text_.size() && peek() != '\n') advance();
            } else {
                return;
            }
        }
    }

    Token next_token() {
        Token t;
        t.line = line_;
        t.col = col_;
        if (pos_ >= text_.size()) return t;
        char c = peek();
        if (std::isalpha((unsigned char)c) || c == '_') return ident(t);
        if (std::isdigit((unsigned char)c)) return number(t);
        if (c == '\'') return string_lit(t);
        if (c == '<') return angle(t);
        return symbol(t);
    }

    Token ident(Token t) {
        size_t start = pos_;
        while (pos_ < text_.size() &&
               (std::isalnum((unsigned char)peek()) || peek() == '_'))
            advance();
        t.kind = Token::Kind::Ident;
        t.text = std::string(text_.substr(start, pos_ - start));
        return t;
    }

    Token number(Token t) {
        size_t start = pos_;
        while (std::isdigit((unsigned char)peek())) advance();
        if (peek() == '.' && std::isdigit((unsigned char)peek(1))) {
            advance();
            while (std::isdigit((unsigned char)peek())) advance();
        }
        if (peek() == 'e' || peek() == 'E') {
            size_t mark = pos_;
            int mark_line = line_, mark_col = col_;
            advance();
            if (peek() == '+' || peek() == '-') advance();
            if (!std::isdigit((unsigned char)peek())) {
                pos_ = mark; // not an exponent after all
                line_ = mark_line;
                col_ = mark_col;
            } else {
                while (std::isdigit((unsigned char)peek())) advance();
            }
        }
        std::string digits(text_.substr(start, pos_ - start));
        double scale = 1.0;
        char suffix = peek();
        if (suffix == 'K' || suffix == 'k' || suffix == 'M' || suffix == 'm') {
            advance();
            scale = (suffix == 'K' || suffix == 'k') ? 1e3 : 1e6;
        }
        if (std::isalnum((unsigned char)peek()) || peek() == '_')
            error("malformed numeric literal", t.line, t.col);
        double value = 0.0;
        auto [p, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), value);
        if (ec != std::errc{} || p != digits.data() + digits.size())
            error("malformed numeric literal", t.line, t.col);
        t.kind = Token::Kind::Number;
        t.num = value * scale;
        return t;
    }

    Token string_lit(Token t) {
        advance(); // opening quote
        std::string out;
        while (true) {
            if (pos_ >= text_.size() || peek() == '\n')
                error("unterminated string literal", t.line, t.col);
            char c = advance();
            if (c == '\'') {
                if (peek() == '\'') { // doubled quote escapes itself
                    advance();
                    out.push_back('\'');
                    continue;
                }
                break;
            }
            out.push_back(c);
        }
        t.kind = Token::Kind::String;
        t.text = std::move(out);
        return t;
    }

    Token angle(Token t) {
        // "<SHIFT>"/"</SHIFT>" tags, otherwise the comparison operators.
        for (std::string_view tag : {std::string_view("<SHIFT>"), std::string_view("</SHIFT>")}) {
            if (pos_ + tag.size() <= text_.size() &&
                ieq(text_.substr(pos_, tag.size()), tag)) {
                for (size_t i = 0; i < tag.size(); ++i) advance();
                t.kind = tag[1] == '/' ? Token::Kind::ShiftClose : Token::Kind::ShiftOpen;
                t.text = std::string(tag);
                return t;
            }
        }
        return symbol(t);
    }

    Token symbol(Token t) {
        static const std::string_view two[] = {":=", "==", "!=", "<>", "<=", ">="};
        for (auto s : two) {
            if (pos_ + 2 <= text_.size() && text_.substr(pos_, 2) == s) {
                advance();
                advance();
                t.kind = Token::Kind::Sym;
                t.text = std::string(s);
                return t;
            }
        }
        char c = peek();
        static const std::string singles = "()=<>,.;*";
        if (singles.find(c) == std::string::npos)
            error(std::string("unexpected character '") + c + "'", t.line, t.col);
        advance();
        t.kind = Token::Kind::Sym;
        t.text = std::string(1, c);
        return t;
    }
};

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

const char* const kKeywords[] = {
    "SELECT", "FROM",    "WHERE",    "ORDER",      "BY",     "LIMIT",  "NATURAL",
    "JOIN",   "UNION",   "NOT",      "IN",         "AND",    "OR",     "AS",
    "DESC",   "ASC",     "RETRIEVE", "GRP",        "ORD",    "CREATE", "PROXY",
    "SCORING", "DATASET", "SIMILARITY", "VIEW",    "TESTED", "TRAINED", "ON",
    "AGAINST", "WITH",
};

bool is_reserved(const std::string& word) {
    for (const char* kw : kKeywords)
        if (ieq(word, kw)) return true;
    return false;
}

std::string canonical_view(const std::string& name) {
    if (name == "Models" || name == "Model") return "Models";
    if (name == "DataReaders" || name == "DataReader") return "DataReaders";
    if (name == "BenchmarkResults" || name == "BenchmarkResult") return "BenchmarkResults";
    return name;
}

std::string canonical_attr(const std::string& name) {
    if (name == "ReaderId") return "DataReaderId";
    return name;
}

class Parser {
public:
    explicit Parser(std::vector<Token> tokens) : tokens_(std::move(tokens)) {}

    Script parse_script() {
        Script script;
        while (!at_end()) {
            script.statements.push_back(parse_statement());
            while (accept_sym(";")) {
            }
        }
        if (script.statements.empty()) error(peek(), "empty query text");
        return script;
    }

private:
    std::vector<Token> tokens_;
    size_t pos_ = 0;

    const Token& peek(size_t ahead = 0) const {
        size_t i = std::min(pos_ + ahead, tokens_.size() - 1);
        return tokens_[i];
    }
    const Token& next() { return tokens_[std::min(pos_++, tokens_.size() - 1)]; }
    bool at_end() const { return peek().kind == Token::Kind::End; }

    [[noreturn]] void error(const Token& t, const std::string& msg,
                            ErrorCode code = ErrorCode::SyntaxError) const {
        throw QuerySyntaxError(msg, t.line, t.col, code);
    }

    bool is_kw(const Token& t, std::string_view kw) const {
        return t.kind == Token::Kind::Ident && ieq(t.text, kw);
    }
    bool accept_kw(std::string_view kw) {
        if (is_kw(peek(), kw)) {
            next();
            return true;
        }
        return false;
    }
    void expect_kw(std::string_view kw) {
        if (!accept_kw(kw))
            error(peek(), "expected " + std::string(kw) + " before '" + describe(peek()) + "'");
    }
    bool accept_sym(std::string_view s) {
        if (peek().kind == Token::Kind::Sym && peek().text == s) {
            next();
            return true;
        }
        return false;
    }
    void expect_sym(std::string_view s) {
        if (!accept_sym(s))
            error(peek(), "expected '" + std::string(s) + "' before '" + describe(peek()) + "'");
    }
    std::string expect_ident(const std::string& what) {
        if (peek().kind != Token::Kind::Ident || is_reserved(peek().text))
            error(peek(), "expected " + what + " before '" + describe(peek()) + "'");
        return next().text;
    }
    static std::string describe(const Token& t) {
        switch (t.kind) {
            case Token::Kind::End: return "end of input";
            case Token::Kind::Number: return "number";
            case Token::Kind::String: return "string";
            default: return t.text;
        }
    }

    Statement parse_statement() {
        if (is_kw(peek(), "CREATE")) return parse_create_view();
        if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text) &&
            peek(1).kind == Token::Kind::Sym && peek(1).text == ":=") {
            Statement s;
            s.name = next().text;
            next(); // :=
            s.query = parse_union();
            return s;
        }
        return {"", parse_union()};
    }

    Statement parse_create_view() {
        const Token& create = peek();
        expect_kw("CREATE");
        ScoringKind expected;
        if (accept_kw("PROXY")) {
            expect_kw("SCORING");
            expected = ScoringKind::Proxy;
        } else if (accept_kw("DATASET")) {
            expect_kw("SIMILARITY");
            expected = ScoringKind::DataSim;
        } else {
            error(peek(), "unknown view keyword '" + describe(peek()) + "'",
                  ErrorCode::UnknownKeyword);
        }
        expect_kw("VIEW");
        Statement s;
        s.name = expect_ident("view name");
        s.query = parse_term();
        if (!s.query || s.query->kind != NodeKind::Select || !s.query->scoring)
            error(create, "view definition needs a scoring ORDER BY clause");
        ScoringKind actual = scoring_kind(s.query->scoring->name);
        if (actual != ScoringKind::None && actual != expected)
            error(create, expected == ScoringKind::Proxy
                              ? "proxy scoring view declared with a similarity metric"
                              : "similarity view declared with a proxy algorithm");
        return s;
    }

    QueryPtr parse_union() {
        QueryPtr first = parse_term();
        if (!is_kw(peek(), "UNION")) return first;
        auto node = std::make_shared<QueryNode>();
        node->kind = NodeKind::Union;
        node->legs.push_back(std::move(first));
        while (accept_kw("UNION")) node->legs.push_back(parse_term());
        return node;
    }

    QueryPtr parse_term() {
        if (accept_sym("(")) {
            QueryPtr inner = parse_union();
            expect_sym(")");
            if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text))
                inner->alias = next().text;
            return inner;
        }
        if (is_kw(peek(), "SELECT")) return parse_select();
        if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text)) {
            auto node = std::make_shared<QueryNode>();
            node->kind = NodeKind::Ref;
            node->ref_name = next().text;
            return node;
        }
        error(peek(), "expected a query before '" + describe(peek()) + "'");
    }

    QueryPtr parse_select() {
        expect_kw("SELECT");
        auto node = std::make_shared<QueryNode>();
        node->kind = NodeKind::Select;
        if (!accept_sym("*")) {
            node->select_list.push_back(parse_attr());
            while (accept_sym(",")) node->select_list.push_back(parse_attr());
        }
        expect_kw("FROM");
        parse_from(*node);
        if (accept_kw("WHERE")) node->where = parse_or();
        if (is_kw(peek(), "RETRIEVE")) parse_retrieve(*node);
        bool tagged = false;
        if (peek().kind == Token::Kind::ShiftOpen) {
            next();
            tagged = true;
        }
        if (accept_kw("ORDER")) {
            expect_kw("BY");
            parse_order_key(*node);
            if (accept_kw("DESC")) {
                node->order_desc = true;
                node->has_dir = true;
            } else if (accept_kw("ASC")) {
                node->has_dir = true;
            }
        }
        if (accept_kw("LIMIT")) {
            if (peek().kind != Token::Kind::Number)
                error(peek(), "expected a number after LIMIT");
            double v = next().num;
            if (v < 1 || v != uint64_t(v))
                error(peek(), "LIMIT must be a positive integer");
            node->limit = uint64_t(v);
        }
        parse_reader_clauses(*node);
        if (node->scoring && !node->limit)
            error(peek(), "scoring views select a top-K and need a LIMIT");
        if (tagged) {
            if (peek().kind != Token::Kind::ShiftClose)
                error(peek(), "expected </SHIFT> before '" + describe(peek()) + "'");
            next();
        }
        return node;
    }

    void parse_from(QueryNode& node) {
        if (accept_sym("(")) {
            node.from_subquery = parse_union();
            expect_sym(")");
            accept_kw("AS");
            if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text))
                node.from_subquery->alias = next().text;
            return;
        }
        node.from_views.push_back(canonical_view(expect_ident("a view name")));
        while (is_kw(peek(), "NATURAL")) {
            next();
            expect_kw("JOIN");
            node.from_views.push_back(canonical_view(expect_ident("a view name")));
        }
    }

    std::string parse_attr() {
        std::string first = expect_ident("an attribute name");
        if (accept_sym(".")) {
            std::string attr = expect_ident("an attribute name");
            return canonical_view(first) + "." + canonical_attr(attr);
        }
        return canonical_attr(first);
    }

    void parse_retrieve(QueryNode& node) {
        expect_kw("RETRIEVE");
        RetrieveClause r;
        if (peek().kind != Token::Kind::Number)
            error(peek(), "expected a count after RETRIEVE");
        double v = next().num;
        if (v < 1 || v != uint64_t(v)) error(peek(), "RETRIEVE count must be a positive integer");
        r.k = uint64_t(v);
        expect_kw("GRP");
        r.group_attr = parse_attr();
        expect_kw("ORD");
        r.ord_attr = parse_attr();
        if (accept_kw("DESC"))
            r.desc = true;
        else
            accept_kw("ASC");
        node.retrieve = r;
    }

    void parse_order_key(QueryNode& node) {
        const Token& name_tok = peek();
        if (name_tok.kind != Token::Kind::Ident)
            error(name_tok, "expected an ORDER BY key before '" + describe(name_tok) + "'");
        if (is_reserved(name_tok.text))
            error(name_tok, "expected an ORDER BY key before '" + describe(name_tok) + "'");
        // Call syntax or a registered algorithm name makes a scoring key;
        // anything else is a plain attribute.
        if (peek(1).kind == Token::Kind::Sym && peek(1).text == "(") {
            ScoringCall call;
            call.name = next().text;
            next(); // (
            if (!accept_sym(")")) {
                do {
                    std::string key = expect_ident("an argument name");
                    expect_sym("=");
                    if (peek().kind == Token::Kind::Number)
                        call.args.emplace_back(key, Value::number(next().num));
                    else if (peek().kind == Token::Kind::String)
                        call.args.emplace_back(key, Value::str(next().text));
                    else
                        error(peek(), "expected an argument value");
                } while (accept_sym(","));
                expect_sym(")");
            }
            node.scoring = std::move(call);
            return;
        }
        if (scoring_kind(name_tok.text) != ScoringKind::None) {
            ScoringCall call;
            call.name = next().text;
            node.scoring = std::move(call);
            return;
        }
        node.order_attr = parse_attr();
    }

    void parse_reader_clauses(QueryNode& node) {
        while (true) {
            const Token& t = peek();
            if (is_kw(t, "TESTED")) {
                next();
                bool against = false;
                if (accept_kw("AGAINST"))
                    against = true;
                else
                    expect_kw("ON");
                require_scoring(node, t);
                std::string reader = expect_ident("a reader name");
                // Similarity views take their target via either spelling.
                bool similarity = scoring_kind(node.scoring->name) == ScoringKind::DataSim;
                std::string& slot = (against || similarity) ? node.tested_against
                                                            : node.tested_on;
                if (!slot.empty()) error(t, "duplicate TESTED clause");
                slot = std::move(reader);
            } else if (is_kw(t, "TRAINED")) {
                next();
                expect_kw("ON");
                require_scoring(node, t);
                if (!node.trained_on.empty()) error(t, "duplicate TRAINED ON clause");
                node.trained_on = expect_ident("a reader name");
            } else if (is_kw(t, "WITH")) {
                next();
                require_scoring(node, t);
                node.with_readers.push_back(expect_ident("a reader name"));
                while (accept_sym(",")) node.with_readers.push_back(expect_ident("a reader name"));
            } else {
                return;
            }
        }
    }

    void require_scoring(const QueryNode& node, const Token& at) const {
        if (!node.scoring)
            error(at, "reader clauses require a scoring ORDER BY key");
    }

    // ----- WHERE expressions -----

    std::shared_ptr<Expr> parse_or() {
        auto left = parse_and();
        if (!is_kw(peek(), "OR")) return left;
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Or;
        node->kids.push_back(std::move(left));
        while (accept_kw("OR")) node->kids.push_back(parse_and());
        return node;
    }

    std::shared_ptr<Expr> parse_and() {
        auto left = parse_not();
        if (!is_kw(peek(), "AND")) return left;
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::And;
        node->kids.push_back(std::move(left));
        while (accept_kw("AND")) node->kids.push_back(parse_not());
        return node;
    }

    std::shared_ptr<Expr> parse_not() {
        if (is_kw(peek(), "NOT") && !is_kw(peek(1), "IN")) {
            next();
            auto node = std::make_shared<Expr>();
            node->kind = Expr::Kind::Not;
            node->kids.push_back(parse_not());
            return node;
        }
        return parse_predicate();
    }

    std::shared_ptr<Expr> parse_predicate() {
        if (accept_sym("(")) {
            auto inner = parse_or();
            expect_sym(")");
            return inner;
        }
        auto lhs = parse_operand();
        bool negated = false;
        if (is_kw(peek(), "NOT") && is_kw(peek(1), "IN")) {
            next();
            negated = true;
        }
        if (accept_kw("IN")) return parse_in(std::move(lhs), negated);
        const Token& op_tok = peek();
        CmpOp op;
        if (accept_sym("=") || accept_sym("=="))
            op = CmpOp::Eq;
        else if (accept_sym("!=") || accept_sym("<>"))
            op = CmpOp::Ne;
        else if (accept_sym("<="))
            op = CmpOp::Le;
        else if (accept_sym(">="))
            op = CmpOp::Ge;
        else if (accept_sym("<"))
            op = CmpOp::Lt;
        else if (accept_sym(">"))
            op = CmpOp::Gt;
        else
            error(op_tok, "expected a comparison before '" + describe(op_tok) + "'");
        auto rhs = parse_operand();
        auto node = std::make_shared<Expr>();
        node->kind = Expr::Kind::Cmp;
        node->op = op;
        node->kids.push_back(std::move(lhs));
        node->kids.push_back(std::move(rhs));
        return node;
    }

    std::shared_ptr<Expr> parse_operand() {
        auto node = std::make_shared<Expr>();
        if (peek().kind == Token::Kind::Number) {
            node->kind = Expr::Kind::Lit;
            node->lit = Value::number(next().num);
            return node;
        }
        if (peek().kind == Token::Kind::String) {
            node->kind = Expr::Kind::Lit;
            node->lit = Value::str(next().text);
            return node;
        }
        if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text)) {
            node->kind = Expr::Kind::Attr;
            node->attr = parse_attr();
            return node;
        }
        error(peek(), "expected an attribute or literal before '" + describe(peek()) + "'");
    }

    std::shared_ptr<Expr> parse_in(std::shared_ptr<Expr> lhs, bool negated) {
        auto node = std::make_shared<Expr>();
        node->negated = negated;
        node->kids.push_back(std::move(lhs));
        if (accept_sym("(")) {
            node->kind = Expr::Kind::InSubquery;
            node->subquery = parse_union();
            expect_sym(")");
            if (peek().kind == Token::Kind::Ident && !is_reserved(peek().text))
                node->subquery_alias = next().text;
            return node;
        }
        node->kind = Expr::Kind::InRef;
        node->ref_name = expect_ident("a named result");
        return node;
    }
};

} // namespace

Script parse_script(std::string_view text) {
    Lexer lexer(text);
    Parser parser(lexer.run());
    return parser.parse_script();
}

QueryPtr parse_query(std::string_view text) {
    Script script = parse_script(text);
    if (script.statements.size() != 1)
        throw QuerySyntaxError("expected a single query", 1, 1);
    return script.statements.front().query;
}

} // namespace shift
