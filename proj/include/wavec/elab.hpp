// Elaborated program form: monomorphic, closure-free, statically unrolled.
// All inline functions and directly-called lambdas are spliced away; lambdas
// handed to batching constructs become named functions with captures rewritten
// to trailing parameters. Locals are scalar slots (arrays/records with static
// indices are flattened element-wise). This is what the IR builder, the
// serialized interpreter and the execution enumerator consume.
#pragma once

#include "wavec/ast.hpp"
#include "wavec/core.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace wavec
{

struct EExpr
{
    enum Kind
    {
        Const,
        Local,      // slot
        SharedRead, // var, optional kids[0] index
        Un,         // op, kids[0]
        Bin,        // op, kids[0..1]
        Sel,        // kids[0] ? kids[1] : kids[2]
    };

    Kind kind = Const;
    ETypeP type;
    SrcLoc loc;
    Value cval;
    bool flexible = false; // literal still open to context retyping
    int slot = -1;
    std::string var;
    std::string op;
    std::vector<EExpr> kids;
};

struct EStmt
{
    enum Kind
    {
        Let,         // slot = a
        SharedWrite, // var[idx] = a   (idx optional)
        If,          // a ? body : els
        For,         // for slot in 0..bound: body   (ordered flag)
        DoWhile,     // do body while (a)
        WaitFor,     // retry { body; } until a
        Region,      // atomic/schedule(N): body
        BatchedCall, // callee(count, args...)
        DoCall,      // pipelined_do callee(args...)
        AsyncCall,
        NormCall,    // slot = callee(args...) (slot -1 for void)
        Return,      // a if hasRet
    };

    Kind kind = Let;
    SrcLoc loc;
    int slot = -1;
    EExpr a;
    std::string var;
    bool hasIdx = false;
    EExpr idx;
    std::vector<EStmt> body;
    std::vector<EStmt> els;
    int64_t bound = 0;
    bool ordered = true;
    int regionN = 0;
    int callee = -1;
    EExpr count;
    std::vector<EExpr> args;
    bool hasRet = false;
};

struct EFn
{
    enum Kind
    {
        Normal,
        Batched, // body of pipelined_for
        DoBody,  // body of pipelined_do
        Async,
    };

    std::string name;
    Kind kind = Normal;
    int threadRate = 0; // 0 = unconstrained
    std::vector<int> paramSlots;
    std::vector<ETypeP> slotTypes;
    std::vector<std::string> slotNames;
    ETypeP retType;
    std::vector<EStmt> body;
};

struct ESharedVar
{
    std::string name;
    ETypeP type;
    Value init;
    bool readOnlyInput = false; // never written by the program (dataset memory)
};

struct ElabProgram
{
    std::vector<ESharedVar> shared;
    std::vector<EFn> fns;
    int entry = -1;

    int sharedIndex(const std::string& name) const;
};

using ConstBindings = std::map<std::string, int64_t>;

// Module-level name/shape validation (duplicate symbols, entry resolvable,
// shared declarations well-formed). Throws CompileError on problems.
void checkModule(const Module& m);

// Full elaboration: resolve + typecheck + monomorphize + unroll + inline.
ElabProgram elaborate(const Module& m, const ConstBindings& consts,
                      const std::string& entryName = "");

// Walk helper used by several property tests: visit every statement.
void forEachStmt(const std::vector<EStmt>& body, const std::function<void(const EStmt&)>& f);

} // namespace wavec
