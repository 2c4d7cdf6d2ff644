// Tokens and syntax tree for the source language. The tree is a plain tagged
// structure: one Expr/Stmt node type each with a kind enum and a handful of
// reused fields. Compact to build and walk; the elaborator converts it into
// the flat monomorphic form the rest of the pipeline consumes.
#pragma once

#include "wavec/core.hpp"

#include <memory>
#include <string>
#include <vector>

namespace wavec
{

enum class Tok
{
    End,
    Ident,
    IntLit,
    FloatLit,
    Punct,   // operators and punctuation, text in `text`
    KwTrue,
    KwFalse,
};

struct Token
{
    Tok kind = Tok::End;
    std::string text;
    uint64_t intVal = 0;
    double floatVal = 0.0;
    SrcLoc loc;
};

std::vector<Token> tokenize(const std::string& src);

// ---------------------------------------------------------------------------

struct Expr;
struct Stmt;
struct FnDecl;
using ExprP = std::unique_ptr<Expr>;
using StmtP = std::unique_ptr<Stmt>;
using FnDeclP = std::unique_ptr<FnDecl>;

// Syntactic type expression. Resolved against scope during elaboration.
struct TypeExpr
{
    enum Kind
    {
        Named,    // bool, uint32, float32, auto, struct name, template param
        Array,    // elem[size]
        Fn,       // (T1, T2) -> R
        Decltype, // decltype(expr)
    };

    Kind kind = Named;
    std::string name;
    SrcLoc loc;
    std::unique_ptr<TypeExpr> elem;             // Array
    ExprP size;                                 // Array
    std::vector<std::unique_ptr<TypeExpr>> params; // Fn
    std::unique_ptr<TypeExpr> ret;              // Fn
    ExprP dexpr;                                // Decltype
};
using TypeExprP = std::unique_ptr<TypeExpr>;

struct Param
{
    TypeExprP type;
    std::string name;
    SrcLoc loc;
};

struct Attr
{
    std::string name; // thread_rate, schedule, unordered
    ExprP arg;        // optional constant argument
    SrcLoc loc;
};

struct Expr
{
    enum Kind
    {
        IntLit,
        FloatLit,
        BoolLit,
        Ident,
        Unary,    // op in `op`, kids[0]
        Binary,   // op in `op`, kids[0], kids[1]
        Ternary,  // kids[0] ? kids[1] : kids[2]
        Index,    // kids[0][kids[1]]
        Field,    // kids[0].op
        Call,     // kids[0](kids[1..]); optional explicit type arg in tmplArg
        Lambda,
        InitList, // {} or { .a = e, ... }; designators parallel to kids
    };

    Kind kind = IntLit;
    SrcLoc loc;
    uint64_t intVal = 0;
    double floatVal = 0.0;
    bool boolVal = false;
    std::string op;   // operator text / identifier / field name
    std::vector<ExprP> kids;
    TypeExprP tmplArg;
    // Lambda:
    std::vector<std::string> captures;
    std::vector<Param> params;
    StmtP body;
    std::vector<std::string> designators;
};

struct StructDef
{
    std::string name;
    std::vector<Param> fields;
    SrcLoc loc;
};

struct Stmt
{
    enum Kind
    {
        Block,     // stmts
        VarDecl,   // type name = a; isConst/isStatic
        Assign,    // a <op>= b, op in `op` ("=", "+=", "-=", "*=")
        Incr,      // a++ / a--, op in `op`
        ExprStmt,  // a (call for effect)
        If,        // a cond, stmts[0] then, stmts[1] else (optional)
        For,       // runtime: for (const auto name : a) stmts[0]; attrs may hold unordered
        DoWhile,   // do stmts[0] while (a)
        StaticFor, // compile time unrolled
        StaticIf,  // a cond, stmts[0] then, stmts[1] else (optional)
        WaitFor,   // wait_for(a)
        Region,    // atomic { } or [[schedule(a)]] { }; op = "atomic"/"schedule", stmts[0] body
        Return,    // a optional
        FnDef,     // nested function definition
        StructDefS,
        Using,     // using name = type
    };

    Kind kind = Block;
    SrcLoc loc;
    std::vector<StmtP> stmts;
    TypeExprP type;
    std::string name;
    std::string op;
    ExprP a, b;
    bool isConst = false;
    bool isStatic = false;
    std::vector<Attr> attrs;
    FnDeclP fn;
    std::unique_ptr<StructDef> structDef;
};

struct TParam
{
    bool isType = false; // typename T vs auto N
    std::string name;
};

struct FnDecl
{
    std::string name;
    SrcLoc loc;
    std::vector<TParam> tparams;
    std::vector<Attr> attrs;
    bool isInline = false;
    bool isAsync = false;
    TypeExprP retType; // may be auto
    std::vector<Param> params;
    StmtP body;
};

struct Module
{
    std::vector<StmtP> globals;  // VarDecl statements (shared variables)
    std::vector<FnDeclP> fns;
    std::vector<std::unique_ptr<StructDef>> structs;
};

Module parseModule(const std::string& src);

} // namespace wavec
