// Predicated CFG IR. build_cfg translates the elaborated program into basic
// blocks cut only at dispatch sites, loops, and waits; if_convert flattens the
// remaining structured conditionals into predicates and select merges (locals
// become pure dataflow); optimize folds/propagates/prunes without touching
// shared-access sites; verify_ir re-checks the structural invariants.
#pragma once

#include "wavec/elab.hpp"
#include "wavec/oracle.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace wavec
{

struct SharedVarDecl
{
    std::string name;
    ETypeP type;
    Value init;
    bool isRam = false;         // arrays at or above the ram threshold
    bool readOnlyInput = false; // dataset memory: never written
};

struct IrOp
{
    enum Kind
    {
        Const,
        Input,      // value of a local slot at block entry
        Un,         // op, args[0]
        Bin,        // op, args[0..1]
        Sel,        // args[0] ? args[1] : args[2]
        ReadLocal,  // slot            (removed by if_convert)
        WriteLocal, // slot <- args[0] (removed by if_convert)
        ReadShared, // var, args = [idx?]
        WriteShared // var, args = [idx?, value]
    };

    Kind kind = Const;
    ETypeP type;
    SrcLoc loc;
    Value cval;
    std::string op;        // Un/Bin operator
    int slot = -1;         // Input/ReadLocal/WriteLocal
    std::string var;       // shared accesses
    bool hasIdx = false;
    std::vector<int> args; // operand op ids (block-local, must precede)
    int pred = -1;         // op id of the enable predicate; -1 = always
    int site = -1;         // global static site id for shared accesses
    int region = -1;       // index into the block's region list
    int depthCost = 0;
    int latency = 0;
    bool registeredInput = false; // operands must be ready a stage early
};

// Structured conditional annotation carried between build_cfg and if_convert:
// ops in [thenBegin,thenEnd) belong to the then side, [elseBegin,elseEnd) to
// the else side, with pre-built predicate ops for each side.
struct IrCond
{
    int condOp = -1;
    int predThen = -1;
    int predElse = -1;
    int thenBegin = 0, thenEnd = 0;
    int elseBegin = 0, elseEnd = 0;
};

struct IrRegion
{
    int n = 1;             // credit width; 1 = atomic
    std::vector<int> ops;  // shared-access op ids inside the region
};

struct IrTerm
{
    enum Kind
    {
        Ret,         // leave the function (args = [value] if hasRet)
        BatchedCall, // args = [count, captures...]; succ resumes after collect
        DoCall,      // args = [captures...]; callee returns the re-arm flag
        NormCall,    // args = call arguments; retSlot receives the result
        AsyncSpawn,  // args = call arguments; caller continues immediately
        LoopEnter,   // args = [enterCond]; false bypasses the loop entirely
        LoopBack,    // args = [continueCond]; true re-enters the body
        Wait,        // succ after the wait evaluator block passes
        Goto         // unconditional fall-through (introduced by inlining)
    };

    Kind kind = Ret;
    int succ = -1;      // continuation block id (-1: none)
    int callee = -1;    // function index for calls
    int callSiteId = -1;
    std::vector<int> args;
    bool hasRet = false;
    int retSlot = -1;   // NormCall result slot
    int predOp = -1;    // Wait/AsyncSpawn predication (-1 = always)
    int loopId = -1;    // LoopEnter/LoopBack
    int waitBlock = -1; // Wait: the evaluator block id
};

struct IrBlock
{
    enum Kind
    {
        Stage,   // becomes a pipeline
        WaitEval // evaluated atomically for the FIFO-head thread
    };

    int id = 0;
    Kind kind = Stage;
    std::vector<IrOp> ops;
    std::vector<IrCond> conds;     // cleared by if_convert
    std::vector<IrRegion> regions;
    IrTerm term;
    int condOut = -1;              // WaitEval: op id of the pass condition
    std::set<int> liveIn;          // slots read before written
    std::set<int> liveOut;         // slots that must survive this block
    std::map<int, int> slotDefs;   // slot -> op id of its final value (post if_convert)
};

struct IrLoop
{
    int id = 0;
    int entryBlock = -1; // body entry
    int exitBlock = -1;  // continuation after the loop
    bool ordered = true;
};

struct IrFunction
{
    enum Kind
    {
        Normal,
        Batched,
        DoBody,
        Async
    };

    std::string name;
    Kind kind = Normal;
    int threadRate = 0; // 0 = unconstrained
    std::vector<int> paramSlots;
    std::vector<ETypeP> slotTypes;
    std::vector<std::string> slotNames;
    ETypeP retType;
    std::vector<IrBlock> blocks; // block ids are global; entry is blocks[0]
    std::vector<IrLoop> loops;
    int entryBlock = -1;
    bool removed = false; // spliced into its caller by inlining
};

struct SiteInfo
{
    int id = 0;
    std::string var;
    bool isWrite = false;
    int fn = -1;
    int block = -1;
    int regionN = 0; // 0 = not in a region
};

struct LatencyTable
{
    int fadd = 6;
    int fsub = 6;
    int fmul = 4;
    int imul = 2;
    int idiv = 2;
    int imod = 2;

    void override(const std::string& name, int cycles);
};

struct IrProgram
{
    std::vector<SharedVarDecl> shared;
    std::vector<IrFunction> fns;
    int entry = -1;
    std::vector<SiteInfo> sites;     // indexed by site id, program order
    int callSiteCount = 0;

    int sharedIndex(const std::string& name) const;
    const IrBlock* findBlock(int id) const;
};

// ElaboratedProgram -> CFG with structured conditionals still annotated.
IrProgram buildCfg(const ElabProgram& prog, const LatencyTable& lat, int ramThreshold = 4);

// Flatten conditionals: predicate side effects, merge locals through selects,
// and value-number slots away inside blocks (fills slotDefs/liveIn/liveOut).
void ifConvert(IrProgram& prog);

// Region store forwarding: inside atomic/schedule regions, scalar reads after
// a write become select chains over the written values, and multiple scalar
// writes coalesce into one commit per variable (reads sample region entry,
// writes commit together). Array accesses are checked instead: a region may
// write an array element at most once and never read it back afterwards.
void forwardRegions(IrProgram& prog);

// Splice normal functions with exactly one call site and no attributes.
void inlineSingleCallsite(IrProgram& prog);

// Constant folding, copy propagation, dead-op elimination to fixpoint.
// Shared-access ops are never reordered, merged, or deleted.
void optimize(IrProgram& prog);

// Structural invariant check; returns human-readable diagnostics, empty iff ok.
std::vector<std::string> verifyIr(const IrProgram& prog);

// Serialized reference execution of the IR itself (threads run to completion
// in dispatch order). Used to prove the IR passes preserve program semantics.
SharedState interpretIr(const IrProgram& prog, const SharedState& inputs);

// JSON artifact (schema 1): functions -> blocks -> ops with sites/preds/latencies.
std::string dumpIrJson(const IrProgram& prog);

// Convenience: full pipeline build_cfg + if_convert + inline + optimize + verify.
IrProgram buildIr(const ElabProgram& prog, const LatencyTable& lat, int ramThreshold = 4);

} // namespace wavec
