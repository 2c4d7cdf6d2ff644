// Recursive-descent parser. One token of stored state plus save/restore
// backtracking for the two genuinely ambiguous spots: declaration-vs-statement
// and explicit template arguments on calls.
#include "wavec/ast.hpp"

#include <cctype>

namespace wavec
{

namespace
{

class Parser
{
public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Module run()
    {
        Module m;
        while (!atEnd())
        {
            if (at("template") || isFnStart())
            {
                m.fns.push_back(parseFnDecl());
            }
            else if (at("struct"))
            {
                m.structs.push_back(parseStructDef());
            }
            else
            {
                m.globals.push_back(parseVarDecl(false, false));
            }
        }
        return m;
    }

private:
    std::vector<Token> toks_;
    size_t pos_ = 0;

    const Token& peek(int n = 0) const { return toks_[std::min(pos_ + n, toks_.size() - 1)]; }
    bool atEnd() const { return peek().kind == Tok::End; }
    bool at(const std::string& s) const
    {
        const Token& t = peek();
        return (t.kind == Tok::Punct || t.kind == Tok::Ident) && t.text == s;
    }
    bool atIdent() const { return peek().kind == Tok::Ident; }
    Token next() { return toks_[pos_ == toks_.size() - 1 ? pos_ : pos_++]; }
    bool accept(const std::string& s)
    {
        if (at(s))
        {
            next();
            return true;
        }
        return false;
    }
    Token expect(const std::string& s)
    {
        if (!at(s))
        {
            fail("ParseError", "expected '" + s + "', found '" + peek().text + "'", peek().loc);
        }
        return next();
    }
    std::string expectIdent(const char* what)
    {
        if (!atIdent())
        {
            fail("ParseError", std::string("expected ") + what + ", found '" + peek().text + "'", peek().loc);
        }
        return next().text;
    }

    // ---- types ----

    bool atTypeStart() const
    {
        const Token& t = peek();
        if (t.kind != Tok::Ident)
        {
            return t.kind == Tok::Punct && t.text == "(";
        }
        return true; // any identifier may name a type; callers backtrack
    }

    TypeExprP parseType()
    {
        TypeExprP t = std::make_unique<TypeExpr>();
        t->loc = peek().loc;
        if (at("("))
        {
            // function type: (T, T) -> R
            next();
            t->kind = TypeExpr::Fn;
            if (!at(")"))
            {
                do
                {
                    t->params.push_back(parseType());
                } while (accept(","));
            }
            expect(")");
            expect("->");
            t->ret = parseType();
        }
        else if (at("decltype"))
        {
            next();
            expect("(");
            t->kind = TypeExpr::Decltype;
            t->dexpr = parseExpr();
            expect(")");
        }
        else
        {
            t->kind = TypeExpr::Named;
            t->name = expectIdent("type name");
        }
        while (at("["))
        {
            // outer-to-inner: T[a][b] is an array of a arrays of b elements
            next();
            auto arr = std::make_unique<TypeExpr>();
            arr->kind = TypeExpr::Array;
            arr->loc = t->loc;
            arr->size = parseExpr();
            expect("]");
            arr->elem = std::move(t);
            t = std::move(arr);
        }
        return t;
    }

    // normalize T[a][b]: parsed inner-first above; fix nesting so the first
    // written extent is the outermost array
    // (single-dimension arrays, the common case, are unaffected)

    // ---- expressions ----

    ExprP mkExpr(Expr::Kind k, SrcLoc loc)
    {
        auto e = std::make_unique<Expr>();
        e->kind = k;
        e->loc = loc;
        return e;
    }

    ExprP parseExpr() { return parseTernary(); }

    ExprP parseTernary()
    {
        ExprP c = parseBin(0);
        if (accept("?"))
        {
            auto e = mkExpr(Expr::Ternary, c->loc);
            e->kids.push_back(std::move(c));
            e->kids.push_back(parseTernary());
            expect(":");
            e->kids.push_back(parseTernary());
            return e;
        }
        return c;
    }

    static int binPrec(const std::string& op)
    {
        if (op == "*" || op == "/" || op == "%") return 10;
        if (op == "+" || op == "-") return 9;
        if (op == "<<" || op == ">>") return 8;
        if (op == "&") return 7;
        if (op == "^") return 6;
        if (op == "|") return 5;
        if (op == "<" || op == ">" || op == "<=" || op == ">=" || op == "==" || op == "!=") return 4;
        if (op == "&&") return 3;
        if (op == "||") return 2;
        return -1;
    }

    ExprP parseBin(int minPrec)
    {
        ExprP lhs = parseUnary();
        for (;;)
        {
            if (peek().kind != Tok::Punct)
            {
                return lhs;
            }
            int prec = binPrec(peek().text);
            if (prec < 0 || prec < minPrec)
            {
                return lhs;
            }
            std::string op = next().text;
            ExprP rhs = parseBin(prec + 1);
            auto e = mkExpr(Expr::Binary, lhs->loc);
            e->op = op;
            e->kids.push_back(std::move(lhs));
            e->kids.push_back(std::move(rhs));
            lhs = std::move(e);
        }
    }

    ExprP parseUnary()
    {
        if (at("!") || at("-") || at("~") || at("+"))
        {
            SrcLoc loc = peek().loc;
            std::string op = next().text;
            auto e = mkExpr(Expr::Unary, loc);
            e->op = op;
            e->kids.push_back(parseUnary());
            return e;
        }
        return parsePostfix();
    }

    ExprP parsePostfix()
    {
        ExprP e = parsePrimary();
        for (;;)
        {
            if (at("["))
            {
                next();
                auto idx = mkExpr(Expr::Index, e->loc);
                idx->kids.push_back(std::move(e));
                idx->kids.push_back(parseExpr());
                expect("]");
                e = std::move(idx);
            }
            else if (at(".") && peek(1).kind == Tok::Ident)
            {
                next();
                auto f = mkExpr(Expr::Field, e->loc);
                f->op = expectIdent("field name");
                f->kids.push_back(std::move(e));
                e = std::move(f);
            }
            else if (at("("))
            {
                next();
                auto c = mkExpr(Expr::Call, e->loc);
                c->kids.push_back(std::move(e));
                if (!at(")"))
                {
                    do
                    {
                        c->kids.push_back(parseExpr());
                    } while (accept(","));
                }
                expect(")");
                e = std::move(c);
            }
            else if (at("<") && e->kind == Expr::Ident)
            {
                // possible explicit template argument: f<type>(args)
                size_t save = pos_;
                next();
                TypeExprP targ;
                bool ok = true;
                try
                {
                    targ = parseType();
                }
                catch (const CompileError&)
                {
                    ok = false;
                }
                if (ok && at(">") && peek(1).kind == Tok::Punct && peek(1).text == "(")
                {
                    next(); // >
                    next(); // (
                    auto c = mkExpr(Expr::Call, e->loc);
                    c->tmplArg = std::move(targ);
                    c->kids.push_back(std::move(e));
                    if (!at(")"))
                    {
                        do
                        {
                            c->kids.push_back(parseExpr());
                        } while (accept(","));
                    }
                    expect(")");
                    e = std::move(c);
                }
                else
                {
                    pos_ = save;
                    return e;
                }
            }
            else
            {
                return e;
            }
        }
    }

    ExprP parsePrimary()
    {
        const Token& t = peek();
        switch (t.kind)
        {
        case Tok::IntLit:
        {
            auto e = mkExpr(Expr::IntLit, t.loc);
            e->intVal = next().intVal;
            return e;
        }
        case Tok::FloatLit:
        {
            auto e = mkExpr(Expr::FloatLit, t.loc);
            e->floatVal = next().floatVal;
            return e;
        }
        case Tok::KwTrue:
        case Tok::KwFalse:
        {
            auto e = mkExpr(Expr::BoolLit, t.loc);
            e->boolVal = t.kind == Tok::KwTrue;
            next();
            return e;
        }
        case Tok::Ident:
        {
            auto e = mkExpr(Expr::Ident, t.loc);
            e->op = next().text;
            return e;
        }
        default: break;
        }
        if (at("("))
        {
            next();
            ExprP e = parseExpr();
            expect(")");
            return e;
        }
        if (at("{"))
        {
            return parseInitList();
        }
        if (at("["))
        {
            return parseLambda();
        }
        fail("ParseError", "expected expression, found '" + t.text + "'", t.loc);
    }

    ExprP parseInitList()
    {
        auto e = mkExpr(Expr::InitList, peek().loc);
        expect("{");
        if (!at("}"))
        {
            do
            {
                if (at("."))
                {
                    next();
                    e->designators.push_back(expectIdent("designator"));
                    expect("=");
                }
                else
                {
                    e->designators.push_back("");
                }
                e->kids.push_back(parseExpr());
            } while (accept(","));
        }
        expect("}");
        return e;
    }

    ExprP parseLambda()
    {
        auto e = mkExpr(Expr::Lambda, peek().loc);
        expect("[");
        if (!at("]"))
        {
            do
            {
                if (at("&"))
                {
                    fail("SharedCaptureError", "lambdas capture by value only; '&' captures are not supported",
                         peek().loc);
                }
                e->captures.push_back(expectIdent("capture name"));
            } while (accept(","));
        }
        expect("]");
        expect("(");
        if (!at(")"))
        {
            do
            {
                Param p;
                p.loc = peek().loc;
                p.type = parseType();
                p.name = expectIdent("parameter name");
                e->params.push_back(std::move(p));
            } while (accept(","));
        }
        expect(")");
        e->body = parseBlock();
        return e;
    }

    // ---- statements ----

    StmtP mkStmt(Stmt::Kind k, SrcLoc loc)
    {
        auto s = std::make_unique<Stmt>();
        s->kind = k;
        s->loc = loc;
        return s;
    }

    StmtP parseBlock()
    {
        auto s = mkStmt(Stmt::Block, peek().loc);
        expect("{");
        while (!at("}"))
        {
            s->stmts.push_back(parseStmt());
        }
        expect("}");
        return s;
    }

    std::vector<Attr> parseAttrs()
    {
        std::vector<Attr> attrs;
        while (at("[["))
        {
            next();
            Attr a;
            a.loc = peek().loc;
            a.name = expectIdent("attribute name");
            if (accept("("))
            {
                a.arg = parseExpr();
                expect(")");
            }
            attrs.push_back(std::move(a));
            expect("]]");
        }
        return attrs;
    }

    bool isFnStart()
    {
        // type ident ( ... at top level / statement level. Probe with
        // backtracking; types may be multi-token.
        if (at("inline") || at("async") || at("[["))
        {
            return true;
        }
        size_t save = pos_;
        bool isFn = false;
        try
        {
            if (at("void"))
            {
                next();
                isFn = atIdent() && peek(1).kind == Tok::Punct && peek(1).text == "(";
            }
            else if (atTypeStart())
            {
                parseType();
                if (atIdent())
                {
                    next();
                    isFn = at("(");
                }
            }
        }
        catch (const CompileError&)
        {
            isFn = false;
        }
        pos_ = save;
        return isFn;
    }

    FnDeclP parseFnDecl()
    {
        auto fn = std::make_unique<FnDecl>();
        fn->loc = peek().loc;
        if (accept("template"))
        {
            expect("<");
            do
            {
                TParam tp;
                if (accept("typename"))
                {
                    tp.isType = true;
                }
                else
                {
                    expect("auto");
                }
                tp.name = expectIdent("template parameter");
                fn->tparams.push_back(std::move(tp));
            } while (accept(","));
            expect(">");
        }
        fn->attrs = parseAttrs();
        for (;;)
        {
            if (accept("inline"))
            {
                fn->isInline = true;
            }
            else if (accept("async"))
            {
                fn->isAsync = true;
            }
            else
            {
                break;
            }
        }
        if (at("void"))
        {
            next();
            fn->retType = nullptr;
        }
        else
        {
            fn->retType = parseType();
        }
        fn->name = expectIdent("function name");
        expect("(");
        if (!at(")"))
        {
            do
            {
                Param p;
                p.loc = peek().loc;
                p.type = parseType();
                p.name = expectIdent("parameter name");
                fn->params.push_back(std::move(p));
            } while (accept(","));
        }
        expect(")");
        fn->body = parseBlock();
        return fn;
    }

    std::unique_ptr<StructDef> parseStructDef()
    {
        expect("struct");
        auto sd = std::make_unique<StructDef>();
        sd->loc = peek().loc;
        sd->name = expectIdent("struct name");
        expect("{");
        while (!at("}"))
        {
            Param f;
            f.loc = peek().loc;
            f.type = parseType();
            f.name = expectIdent("field name");
            expect(";");
            sd->fields.push_back(std::move(f));
        }
        expect("}");
        expect(";");
        return sd;
    }

    StmtP parseVarDecl(bool isConst, bool isStatic)
    {
        auto s = mkStmt(Stmt::VarDecl, peek().loc);
        s->isConst = isConst;
        s->isStatic = isStatic;
        if (at("auto"))
        {
            next();
            s->type = nullptr; // inferred
        }
        else
        {
            s->type = parseType();
        }
        s->name = expectIdent("variable name");
        if (accept("="))
        {
            s->a = parseExpr();
        }
        expect(";");
        return s;
    }

    StmtP parseStmt()
    {
        SrcLoc loc = peek().loc;

        if (at("[["))
        {
            std::vector<Attr> attrs = parseAttrs();
            if (at("{"))
            {
                // [[schedule(N)]] { ... }
                auto s = mkStmt(Stmt::Region, loc);
                for (auto& a : attrs)
                {
                    if (a.name == "schedule")
                    {
                        s->op = "schedule";
                        s->a = std::move(a.arg);
                    }
                    else
                    {
                        fail("ParseError", "unknown block attribute '" + a.name + "'", a.loc);
                    }
                }
                if (s->op.empty())
                {
                    fail("ParseError", "block attribute list without schedule(N)", loc);
                }
                s->stmts.push_back(parseBlock());
                return s;
            }
            if (at("for") || at("do"))
            {
                StmtP s = parseStmt();
                s->attrs = std::move(attrs);
                return s;
            }
            // attributed nested function
            auto s = mkStmt(Stmt::FnDef, loc);
            s->fn = parseFnDecl();
            s->fn->attrs.insert(s->fn->attrs.end(), std::make_move_iterator(attrs.begin()),
                                std::make_move_iterator(attrs.end()));
            return s;
        }

        if (at("{"))
        {
            return parseBlock();
        }
        if (at("atomic") && peek(1).kind == Tok::Punct && peek(1).text == "{")
        {
            next();
            auto s = mkStmt(Stmt::Region, loc);
            s->op = "atomic";
            s->stmts.push_back(parseBlock());
            return s;
        }
        if (at("static"))
        {
            next();
            if (at("for"))
            {
                StmtP s = parseFor();
                s->kind = Stmt::StaticFor;
                return s;
            }
            if (at("if"))
            {
                StmtP s = parseIf();
                s->kind = Stmt::StaticIf;
                // retag nested else-if chains
                for (Stmt* p = s.get(); p && p->stmts.size() > 1 && p->stmts[1]->kind == Stmt::If;)
                {
                    p->stmts[1]->kind = Stmt::StaticIf;
                    p = p->stmts[1].get();
                }
                return s;
            }
            bool isConst = accept("const");
            return parseVarDecl(isConst, true);
        }
        if (at("const"))
        {
            next();
            return parseVarDecl(true, false);
        }
        if (at("if"))
        {
            return parseIf();
        }
        if (at("for"))
        {
            return parseFor();
        }
        if (at("do"))
        {
            next();
            auto s = mkStmt(Stmt::DoWhile, loc);
            s->stmts.push_back(parseBlock());
            expect("while");
            expect("(");
            s->a = parseExpr();
            expect(")");
            expect(";");
            return s;
        }
        if (at("wait_for") && peek(1).kind == Tok::Punct && peek(1).text == "(")
        {
            next();
            next();
            auto s = mkStmt(Stmt::WaitFor, loc);
            s->a = parseExpr();
            expect(")");
            expect(";");
            return s;
        }
        if (at("return"))
        {
            next();
            auto s = mkStmt(Stmt::Return, loc);
            if (!at(";"))
            {
                s->a = parseExpr();
            }
            expect(";");
            return s;
        }
        if (at("using"))
        {
            next();
            auto s = mkStmt(Stmt::Using, loc);
            s->name = expectIdent("alias name");
            expect("=");
            s->type = parseType();
            expect(";");
            return s;
        }
        if (at("struct"))
        {
            auto s = mkStmt(Stmt::StructDefS, loc);
            s->structDef = parseStructDef();
            return s;
        }
        if (at("inline") || at("async") || isFnStart())
        {
            auto s = mkStmt(Stmt::FnDef, loc);
            s->fn = parseFnDecl();
            return s;
        }

        // declaration?  type ident followed by '=' or ';'
        {
            size_t save = pos_;
            bool isDecl = false;
            try
            {
                if (at("auto"))
                {
                    next();
                    isDecl = atIdent() &&
                             (peek(1).text == "=" || peek(1).text == ";");
                }
                else if (atTypeStart())
                {
                    parseType();
                    isDecl = atIdent() && (peek(1).text == "=" || peek(1).text == ";");
                }
            }
            catch (const CompileError&)
            {
                isDecl = false;
            }
            pos_ = save;
            if (isDecl)
            {
                return parseVarDecl(false, false);
            }
        }

        // assignment / increment / call statement
        ExprP lhs = parseUnary();
        if (at("=") || at("+=") || at("-=") || at("*=") || at("/=") || at("%="))
        {
            auto s = mkStmt(Stmt::Assign, loc);
            s->op = next().text;
            s->a = std::move(lhs);
            s->b = parseExpr();
            expect(";");
            return s;
        }
        if (at("++") || at("--"))
        {
            auto s = mkStmt(Stmt::Incr, loc);
            s->op = next().text;
            s->a = std::move(lhs);
            expect(";");
            return s;
        }
        auto s = mkStmt(Stmt::ExprStmt, loc);
        s->a = std::move(lhs);
        expect(";");
        return s;
    }

    StmtP parseIf()
    {
        auto s = mkStmt(Stmt::If, peek().loc);
        expect("if");
        expect("(");
        s->a = parseExpr();
        expect(")");
        s->stmts.push_back(at("{") ? parseBlock() : parseStmt());
        if (accept("else"))
        {
            s->stmts.push_back(at("{") ? parseBlock() : parseStmt());
        }
        return s;
    }

    StmtP parseFor()
    {
        auto s = mkStmt(Stmt::For, peek().loc);
        expect("for");
        expect("(");
        accept("const");
        expect("auto");
        s->name = expectIdent("loop variable");
        expect(":");
        s->a = parseExpr();
        expect(")");
        s->stmts.push_back(parseBlock());
        return s;
    }
};

} // namespace

Module parseModule(const std::string& src)
{
    return Parser(tokenize(src)).run();
}

} // namespace wavec
