// CFG construction, if-conversion, single-callsite inlining, block-local
// optimization, structural verification, and a serialized IR interpreter used
// to prove the passes preserve program semantics.
#include "wavec/ir.hpp"
#include "wavec/eval.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <deque>
#include <functional>

namespace wavec
{

void LatencyTable::override(const std::string& name, int cycles)
{
    if (cycles < 0 || cycles > 64)
    {
        fail("ConfigError", "latency for '" + name + "' out of range [0,64]");
    }
    if (name == "fadd") { fadd = cycles; }
    else if (name == "fsub") { fsub = cycles; }
    else if (name == "fmul") { fmul = cycles; }
    else if (name == "imul") { imul = cycles; }
    else if (name == "idiv") { idiv = cycles; }
    else if (name == "imod") { imod = cycles; }
    else
    {
        fail("ConfigError", "unknown latency op '" + name +
                                "' (expected fadd/fsub/fmul/imul/idiv/imod)");
    }
}

int IrProgram::sharedIndex(const std::string& name) const
{
    for (size_t i = 0; i < shared.size(); ++i)
    {
        if (shared[i].name == name) { return static_cast<int>(i); }
    }
    return -1;
}

const IrBlock* IrProgram::findBlock(int id) const
{
    for (const IrFunction& f : fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            if (b.id == id) { return &b; }
        }
    }
    return nullptr;
}

namespace
{

bool isFloat(const EType& t) { return t.kind == EType::F32; }

// Fills depth cost, latency and the registered-input flag for one op.
void assignCost(const IrProgram& p, IrOp& op, const LatencyTable& lat)
{
    op.depthCost = 0;
    op.latency = 0;
    op.registeredInput = false;
    switch (op.kind)
    {
    case IrOp::Const:
    case IrOp::Input:
    case IrOp::ReadLocal:
    case IrOp::WriteLocal:
        return;
    case IrOp::Un:
        op.depthCost = (op.op == "cvt") ? 0 : 1;
        return;
    case IrOp::Sel:
        op.depthCost = 1;
        return;
    case IrOp::Bin:
        break;
    case IrOp::ReadShared:
    case IrOp::WriteShared:
    {
        const int si = p.sharedIndex(op.var);
        const bool ram = si >= 0 && p.shared[si].isRam;
        if (op.kind == IrOp::ReadShared)
        {
            op.depthCost = ram ? 3 : 2;
            op.registeredInput = ram; // address is registered into the port
        }
        else
        {
            op.depthCost = ram ? 3 : 1;
        }
        return;
    }
    }
    // Binary operators: multi-cycle units are keyed on the result type
    // (float compares produce bool and price like integer compares).
    if (isFloat(*op.type))
    {
        if (op.op == "+") { op.depthCost = 3; op.latency = lat.fadd; op.registeredInput = true; return; }
        if (op.op == "-") { op.depthCost = 3; op.latency = lat.fsub; op.registeredInput = true; return; }
        if (op.op == "*") { op.depthCost = 3; op.latency = lat.fmul; op.registeredInput = true; return; }
    }
    if (op.type->isInt())
    {
        if (op.op == "*") { op.depthCost = 2; op.latency = lat.imul; op.registeredInput = true; return; }
        if (op.op == "/") { op.depthCost = 2; op.latency = lat.idiv; op.registeredInput = true; return; }
        if (op.op == "%") { op.depthCost = 2; op.latency = lat.imod; op.registeredInput = true; return; }
    }
    op.depthCost = 1; // compares, bitwise, shifts, add/sub, logic
}

void assignCosts(IrProgram& p, const LatencyTable& lat)
{
    for (IrFunction& f : p.fns)
    {
        for (IrBlock& b : f.blocks)
        {
            for (IrOp& op : b.ops)
            {
                assignCost(p, op, lat);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// build_cfg
// ---------------------------------------------------------------------------
class Builder
{
public:
    Builder(const ElabProgram& src, int ramThreshold) : src_(src), ramThreshold_(ramThreshold) {}

    IrProgram run()
    {
        for (const ESharedVar& v : src_.shared)
        {
            SharedVarDecl d;
            d.name = v.name;
            d.type = v.type;
            d.init = v.init;
            d.isRam = v.type->kind == EType::Array && v.type->len >= ramThreshold_;
            d.readOnlyInput = v.readOnlyInput;
            out_.shared.push_back(std::move(d));
        }
        out_.fns.resize(src_.fns.size());
        out_.entry = src_.entry;
        built_.assign(src_.fns.size(), 0);
        buildFn(src_.entry);
        for (size_t i = 0; i < src_.fns.size(); ++i)
        {
            if (built_[i] == 0) { buildFn(static_cast<int>(i)); }
        }
        out_.callSiteCount = nextCallSite_;
        return std::move(out_);
    }

private:
    // One structured conditional currently open while emitting statements.
    struct CondCtx
    {
        int predThen = -1;
        int predElse = -1;
        bool inElse = false;
        int annBlock = -1; // local block index of the live annotation
        int annIdx = -1;
        int spillThen = -1; // slots holding the predicates across block splits
        int spillElse = -1;
    };

    struct FnCtx
    {
        IrFunction* fn = nullptr;
        int fnIdx = -1;
        std::vector<IrBlock> blocks;
        int cur = 0;
        std::vector<CondCtx> conds;
        int curRegion = -1; // region index in the current block
        bool terminated = false;
    };

    const ElabProgram& src_;
    const int ramThreshold_;
    IrProgram out_;
    std::vector<char> built_;
    int nextBlock_ = 0;
    int nextSite_ = 0;
    int nextCallSite_ = 0;

    void buildFn(int idx)
    {
        if (built_[idx] != 0) { return; }
        built_[idx] = 1;
        const EFn& ef = src_.fns[idx];
        IrFunction& f = out_.fns[idx];
        f.name = ef.name;
        f.kind = static_cast<IrFunction::Kind>(ef.kind);
        f.threadRate = ef.threadRate;
        f.paramSlots = ef.paramSlots;
        f.slotTypes = ef.slotTypes;
        f.slotNames = ef.slotNames;
        f.retType = ef.retType;

        FnCtx cx;
        cx.fn = &f;
        cx.fnIdx = idx;
        cx.cur = newBlock(cx, IrBlock::Stage);
        f.entryBlock = cx.blocks[cx.cur].id;
        emitStmts(cx, ef.body);
        if (!cx.terminated)
        {
            cx.blocks[cx.cur].term.kind = IrTerm::Ret;
            cx.blocks[cx.cur].term.hasRet = false;
        }
        f.blocks = std::move(cx.blocks);
    }

    int newBlock(FnCtx& cx, IrBlock::Kind kind)
    {
        IrBlock b;
        b.id = nextBlock_++;
        b.kind = kind;
        cx.blocks.push_back(std::move(b));
        return static_cast<int>(cx.blocks.size()) - 1;
    }

    IrBlock& cur(FnCtx& cx) { return cx.blocks[cx.cur]; }

    int emitOp(FnCtx& cx, IrOp op)
    {
        IrBlock& b = cur(cx);
        b.ops.push_back(std::move(op));
        return static_cast<int>(b.ops.size()) - 1;
    }

    int newSlot(FnCtx& cx, ETypeP type, const std::string& name)
    {
        cx.fn->slotTypes.push_back(std::move(type));
        cx.fn->slotNames.push_back(name);
        return static_cast<int>(cx.fn->slotTypes.size()) - 1;
    }

    int activePred(const FnCtx& cx)
    {
        if (cx.conds.empty()) { return -1; }
        const CondCtx& c = cx.conds.back();
        return c.inElse ? c.predElse : c.predThen;
    }

    int emitReadLocal(FnCtx& cx, int slot, SrcLoc loc)
    {
        IrOp op;
        op.kind = IrOp::ReadLocal;
        op.type = cx.fn->slotTypes[slot];
        op.loc = loc;
        op.slot = slot;
        return emitOp(cx, std::move(op));
    }

    void emitWriteLocal(FnCtx& cx, int slot, int val, SrcLoc loc)
    {
        IrOp op;
        op.kind = IrOp::WriteLocal;
        op.type = cx.fn->slotTypes[slot];
        op.loc = loc;
        op.slot = slot;
        op.args = {val};
        emitOp(cx, std::move(op));
    }

    int emitConst(FnCtx& cx, Value v, ETypeP type, SrcLoc loc)
    {
        IrOp op;
        op.kind = IrOp::Const;
        op.type = std::move(type);
        op.loc = loc;
        op.cval = std::move(v);
        return emitOp(cx, std::move(op));
    }

    int emitExpr(FnCtx& cx, const EExpr& e)
    {
        switch (e.kind)
        {
        case EExpr::Const:
            return emitConst(cx, e.cval, e.type, e.loc);
        case EExpr::Local:
            return emitReadLocal(cx, e.slot, e.loc);
        case EExpr::SharedRead:
        {
            IrOp op;
            op.kind = IrOp::ReadShared;
            op.type = e.type;
            op.loc = e.loc;
            op.var = e.var;
            if (!e.kids.empty())
            {
                op.hasIdx = true;
                op.args = {emitExpr(cx, e.kids[0])};
            }
            op.site = nextSite_++;
            op.region = cx.curRegion;
            recordSite(cx, op.site, e.var, false);
            const int id = emitOp(cx, std::move(op));
            if (cx.curRegion >= 0) { cur(cx).regions[cx.curRegion].ops.push_back(id); }
            return id;
        }
        case EExpr::Un:
        {
            const int a = emitExpr(cx, e.kids[0]);
            IrOp op;
            op.kind = IrOp::Un;
            op.type = e.type;
            op.loc = e.loc;
            op.op = e.op;
            op.args = {a};
            return emitOp(cx, std::move(op));
        }
        case EExpr::Bin:
        {
            const int a = emitExpr(cx, e.kids[0]);
            const int b = emitExpr(cx, e.kids[1]);
            IrOp op;
            op.kind = IrOp::Bin;
            op.type = e.type;
            op.loc = e.loc;
            op.op = e.op;
            op.args = {a, b};
            return emitOp(cx, std::move(op));
        }
        case EExpr::Sel:
        {
            const int c = emitExpr(cx, e.kids[0]);
            const int t = emitExpr(cx, e.kids[1]);
            const int f = emitExpr(cx, e.kids[2]);
            IrOp op;
            op.kind = IrOp::Sel;
            op.type = e.type;
            op.loc = e.loc;
            op.args = {c, t, f};
            return emitOp(cx, std::move(op));
        }
        }
        fail("InternalError", "unhandled expression kind", e.loc);
    }

    void recordSite(FnCtx& cx, int id, const std::string& var, bool isWrite)
    {
        SiteInfo s;
        s.id = id;
        s.var = var;
        s.isWrite = isWrite;
        s.fn = cx.fnIdx;
        s.block = cur(cx).id;
        s.regionN = cx.curRegion >= 0 ? cur(cx).regions[cx.curRegion].n : 0;
        out_.sites.push_back(std::move(s));
    }

    // Closes the open conditional ranges, spills their predicates to slots,
    // and leaves the current block ready to take a terminator.
    void closeCondsForSplit(FnCtx& cx)
    {
        for (CondCtx& c : cx.conds)
        {
            IrCond& ann = cx.blocks[c.annBlock].conds[c.annIdx];
            const int end = static_cast<int>(cx.blocks[c.annBlock].ops.size());
            if (c.inElse) { ann.elseEnd = end; }
            else { ann.thenEnd = end; }
        }
        // Spill outside the just-closed ranges so the spills are unconditional.
        for (CondCtx& c : cx.conds)
        {
            if (c.spillThen < 0)
            {
                c.spillThen = newSlot(cx, tBool(), "if.pred.t");
                c.spillElse = newSlot(cx, tBool(), "if.pred.e");
            }
            emitWriteLocal(cx, c.spillThen, c.predThen, SrcLoc{});
            emitWriteLocal(cx, c.spillElse, c.predElse, SrcLoc{});
        }
    }

    // Reopens the conditional annotations in the freshly started block.
    void reopenConds(FnCtx& cx)
    {
        for (CondCtx& c : cx.conds)
        {
            c.predThen = emitReadLocal(cx, c.spillThen, SrcLoc{});
            c.predElse = emitReadLocal(cx, c.spillElse, SrcLoc{});
            IrCond ann;
            ann.predThen = c.predThen;
            ann.predElse = c.predElse;
            const int pos = static_cast<int>(cur(cx).ops.size());
            if (c.inElse)
            {
                ann.elseBegin = pos;
                ann.elseEnd = pos;
            }
            else
            {
                ann.thenBegin = pos;
                ann.thenEnd = pos;
            }
            c.annBlock = cx.cur;
            c.annIdx = static_cast<int>(cur(cx).conds.size());
            cur(cx).conds.push_back(ann);
        }
    }

    void emitStmts(FnCtx& cx, const std::vector<EStmt>& body)
    {
        for (const EStmt& s : body)
        {
            if (cx.terminated) { return; } // unreachable tail after a return
            emitStmt(cx, s);
        }
    }

    void emitStmt(FnCtx& cx, const EStmt& s)
    {
        switch (s.kind)
        {
        case EStmt::Let:
        {
            const int v = emitExpr(cx, s.a);
            emitWriteLocal(cx, s.slot, v, s.loc);
            return;
        }
        case EStmt::SharedWrite:
        {
            const int v = emitExpr(cx, s.a);
            IrOp op;
            op.kind = IrOp::WriteShared;
            op.type = s.a.type;
            op.loc = s.loc;
            op.var = s.var;
            if (s.hasIdx)
            {
                op.hasIdx = true;
                op.args = {emitExpr(cx, s.idx), v};
            }
            else
            {
                op.args = {v};
            }
            op.site = nextSite_++;
            op.region = cx.curRegion;
            op.pred = -1; // if_convert fills predicates in
            recordSite(cx, op.site, s.var, true);
            const int id = emitOp(cx, std::move(op));
            if (cx.curRegion >= 0) { cur(cx).regions[cx.curRegion].ops.push_back(id); }
            return;
        }
        case EStmt::If:
        {
            const int c = emitExpr(cx, s.a);
            IrOp notOp;
            notOp.kind = IrOp::Un;
            notOp.type = tBool();
            notOp.loc = s.loc;
            notOp.op = "!";
            notOp.args = {c};
            const int nc = emitOp(cx, std::move(notOp));
            const int parent = activePred(cx);
            int pt = c;
            int pe = nc;
            if (parent >= 0)
            {
                IrOp a1;
                a1.kind = IrOp::Bin;
                a1.type = tBool();
                a1.loc = s.loc;
                a1.op = "&&";
                a1.args = {parent, c};
                pt = emitOp(cx, std::move(a1));
                IrOp a2;
                a2.kind = IrOp::Bin;
                a2.type = tBool();
                a2.loc = s.loc;
                a2.op = "&&";
                a2.args = {parent, nc};
                pe = emitOp(cx, std::move(a2));
            }
            CondCtx ctx;
            ctx.predThen = pt;
            ctx.predElse = pe;
            ctx.annBlock = cx.cur;
            ctx.annIdx = static_cast<int>(cur(cx).conds.size());
            IrCond ann;
            ann.condOp = c;
            ann.predThen = pt;
            ann.predElse = pe;
            ann.thenBegin = static_cast<int>(cur(cx).ops.size());
            ann.thenEnd = ann.thenBegin;
            cur(cx).conds.push_back(ann);
            cx.conds.push_back(ctx);

            emitStmts(cx, s.body);
            {
                CondCtx& top = cx.conds.back();
                IrCond& a = cx.blocks[top.annBlock].conds[top.annIdx];
                a.thenEnd = static_cast<int>(cx.blocks[top.annBlock].ops.size());
                top.inElse = true;
                a.elseBegin = a.thenEnd;
                a.elseEnd = a.elseBegin;
            }
            emitStmts(cx, s.els);
            {
                CondCtx& top = cx.conds.back();
                IrCond& a = cx.blocks[top.annBlock].conds[top.annIdx];
                a.elseEnd = static_cast<int>(cx.blocks[top.annBlock].ops.size());
            }
            cx.conds.pop_back();
            return;
        }
        case EStmt::Region:
        {
            IrRegion r;
            r.n = s.regionN;
            cur(cx).regions.push_back(r);
            const int saved = cx.curRegion;
            cx.curRegion = static_cast<int>(cur(cx).regions.size()) - 1;
            emitStmts(cx, s.body);
            cx.curRegion = saved;
            return;
        }
        case EStmt::WaitFor:
        {
            const int p = activePred(cx);
            closeCondsForSplit(cx);
            const int callBlock = cx.cur;
            cx.blocks[callBlock].term.kind = IrTerm::Wait;
            cx.blocks[callBlock].term.predOp = p;

            // The evaluator block: side statements plus the pass condition,
            // evaluated atomically for the FIFO-head thread.
            const int wb = newBlock(cx, IrBlock::WaitEval);
            cx.cur = wb;
            {
                std::vector<CondCtx> savedConds;
                savedConds.swap(cx.conds);
                emitStmts(cx, s.body);
                cx.blocks[wb].condOut = emitExpr(cx, s.a);
                savedConds.swap(cx.conds);
            }
            const int cont = newBlock(cx, IrBlock::Stage);
            cx.blocks[callBlock].term.waitBlock = cx.blocks[wb].id;
            cx.blocks[callBlock].term.succ = cx.blocks[cont].id;
            cx.blocks[wb].term.kind = IrTerm::Goto;
            cx.blocks[wb].term.succ = cx.blocks[cont].id;
            cx.cur = cont;
            reopenConds(cx);
            return;
        }
        case EStmt::For:
        {
            assert(cx.conds.empty());
            const int bv = emitExpr(cx, s.a);
            const int boundSlot = newSlot(cx, s.a.type, "loop.bound");
            emitWriteLocal(cx, boundSlot, bv, s.loc);
            const int zero = emitConst(cx, zeroOf(*cx.fn->slotTypes[s.slot]),
                                       cx.fn->slotTypes[s.slot], s.loc);
            emitWriteLocal(cx, s.slot, zero, s.loc);
            IrOp ne;
            ne.kind = IrOp::Bin;
            ne.type = tBool();
            ne.loc = s.loc;
            ne.op = "!=";
            ne.args = {bv, emitConst(cx, zeroOf(*s.a.type), s.a.type, s.loc)};
            const int enter = emitOp(cx, std::move(ne));

            const int loopId = static_cast<int>(cx.fn->loops.size());
            IrLoop lp;
            lp.id = loopId;
            lp.ordered = s.ordered;
            cx.fn->loops.push_back(lp);

            const int pre = cx.cur;
            cx.blocks[pre].term.kind = IrTerm::LoopEnter;
            cx.blocks[pre].term.loopId = loopId;
            cx.blocks[pre].term.args = {enter};

            const int bodyB = newBlock(cx, IrBlock::Stage);
            cx.blocks[pre].term.succ = cx.blocks[bodyB].id;
            cx.fn->loops[loopId].entryBlock = cx.blocks[bodyB].id;
            cx.cur = bodyB;
            emitStmts(cx, s.body);

            // i += 1; continue while i < bound
            const int iv = emitReadLocal(cx, s.slot, s.loc);
            const int one = emitConst(cx, Value::ofInt(1), cx.fn->slotTypes[s.slot], s.loc);
            IrOp add;
            add.kind = IrOp::Bin;
            add.type = cx.fn->slotTypes[s.slot];
            add.loc = s.loc;
            add.op = "+";
            add.args = {iv, one};
            const int i1 = emitOp(cx, std::move(add));
            emitWriteLocal(cx, s.slot, i1, s.loc);
            const int bv2 = emitReadLocal(cx, boundSlot, s.loc);
            IrOp lt;
            lt.kind = IrOp::Bin;
            lt.type = tBool();
            lt.loc = s.loc;
            lt.op = "<";
            lt.args = {i1, bv2};
            const int cont = emitOp(cx, std::move(lt));
            const int bodyEnd = cx.cur;
            cx.blocks[bodyEnd].term.kind = IrTerm::LoopBack;
            cx.blocks[bodyEnd].term.loopId = loopId;
            cx.blocks[bodyEnd].term.args = {cont};

            const int post = newBlock(cx, IrBlock::Stage);
            cx.blocks[bodyEnd].term.succ = cx.blocks[post].id;
            cx.fn->loops[loopId].exitBlock = cx.blocks[post].id;
            cx.cur = post;
            return;
        }
        case EStmt::DoWhile:
        {
            assert(cx.conds.empty());
            const int loopId = static_cast<int>(cx.fn->loops.size());
            IrLoop lp;
            lp.id = loopId;
            lp.ordered = s.ordered;
            cx.fn->loops.push_back(lp);

            const int pre = cx.cur;
            cx.blocks[pre].term.kind = IrTerm::LoopEnter;
            cx.blocks[pre].term.loopId = loopId;

            const int bodyB = newBlock(cx, IrBlock::Stage);
            cx.blocks[pre].term.succ = cx.blocks[bodyB].id;
            cx.fn->loops[loopId].entryBlock = cx.blocks[bodyB].id;
            cx.cur = bodyB;
            emitStmts(cx, s.body);
            const int cont = emitExpr(cx, s.a);
            const int bodyEnd = cx.cur;
            cx.blocks[bodyEnd].term.kind = IrTerm::LoopBack;
            cx.blocks[bodyEnd].term.loopId = loopId;
            cx.blocks[bodyEnd].term.args = {cont};

            const int post = newBlock(cx, IrBlock::Stage);
            cx.blocks[bodyEnd].term.succ = cx.blocks[post].id;
            cx.fn->loops[loopId].exitBlock = cx.blocks[post].id;
            cx.cur = post;
            return;
        }
        case EStmt::BatchedCall:
        case EStmt::DoCall:
        case EStmt::AsyncCall:
        case EStmt::NormCall:
        {
            std::vector<int> args;
            if (s.kind == EStmt::BatchedCall) { args.push_back(emitExpr(cx, s.count)); }
            for (const EExpr& a : s.args) { args.push_back(emitExpr(cx, a)); }
            const int callBlock = cx.cur;
            IrTerm& t = cx.blocks[callBlock].term;
            switch (s.kind)
            {
            case EStmt::BatchedCall: t.kind = IrTerm::BatchedCall; break;
            case EStmt::DoCall: t.kind = IrTerm::DoCall; break;
            case EStmt::AsyncCall: t.kind = IrTerm::AsyncSpawn; break;
            default: t.kind = IrTerm::NormCall; break;
            }
            t.callee = s.callee;
            t.callSiteId = nextCallSite_++;
            t.args = std::move(args);
            if (s.kind == EStmt::NormCall) { t.retSlot = s.slot; }
            buildFn(s.callee); // callee blocks take the next ids (call order)
            const int cont = newBlock(cx, IrBlock::Stage);
            cx.blocks[callBlock].term.succ = cx.blocks[cont].id;
            cx.cur = cont;
            return;
        }
        case EStmt::Return:
        {
            IrTerm& t = cur(cx).term;
            t.kind = IrTerm::Ret;
            t.hasRet = s.hasRet;
            if (s.hasRet) { t.args = {emitExpr(cx, s.a)}; }
            cx.terminated = true;
            return;
        }
        }
    }
};

// ---------------------------------------------------------------------------
// Liveness over slots (post if_convert). liveIn = slots read before any local
// definition (the Input ops); liveOut = slots some later block still needs.
// ---------------------------------------------------------------------------
void computeLiveness(IrProgram& p)
{
    for (IrFunction& f : p.fns)
    {
        if (f.removed) { continue; }
        std::map<int, int> local; // block id -> index
        for (size_t i = 0; i < f.blocks.size(); ++i) { local[f.blocks[i].id] = static_cast<int>(i); }
        auto succs = [&](const IrBlock& b) {
            std::vector<int> out;
            const IrTerm& t = b.term;
            switch (t.kind)
            {
            case IrTerm::Ret:
                break;
            case IrTerm::Wait:
                out.push_back(t.waitBlock);
                break;
            case IrTerm::LoopEnter:
                out.push_back(t.succ);
                out.push_back(f.loops[t.loopId].exitBlock);
                break;
            case IrTerm::LoopBack:
                out.push_back(f.loops[t.loopId].entryBlock);
                out.push_back(t.succ);
                break;
            default:
                if (t.succ >= 0) { out.push_back(t.succ); }
                break;
            }
            return out;
        };

        std::vector<std::set<int>> use(f.blocks.size()), def(f.blocks.size()),
            in(f.blocks.size()), outs(f.blocks.size());
        for (size_t i = 0; i < f.blocks.size(); ++i)
        {
            const IrBlock& b = f.blocks[i];
            std::set<int> defined;
            for (const IrOp& op : b.ops)
            {
                if (op.kind == IrOp::Input || op.kind == IrOp::ReadLocal)
                {
                    if (defined.count(op.slot) == 0) { use[i].insert(op.slot); }
                }
                if (op.kind == IrOp::WriteLocal) { defined.insert(op.slot); }
            }
            for (const auto& [slot, opId] : b.slotDefs)
            {
                (void)opId;
                defined.insert(slot);
            }
            def[i] = std::move(defined);
        }
        bool changed = true;
        while (changed)
        {
            changed = false;
            for (size_t ii = f.blocks.size(); ii-- > 0;)
            {
                const IrBlock& b = f.blocks[ii];
                std::set<int> o;
                for (int s : succs(b))
                {
                    auto it = local.find(s);
                    if (it == local.end()) { continue; }
                    for (int v : in[it->second]) { o.insert(v); }
                }
                std::set<int> i2 = use[ii];
                for (int v : o)
                {
                    if (def[ii].count(v) == 0) { i2.insert(v); }
                }
                if (o != outs[ii] || i2 != in[ii])
                {
                    changed = true;
                    outs[ii] = std::move(o);
                    in[ii] = std::move(i2);
                }
            }
        }
        for (size_t i = 0; i < f.blocks.size(); ++i)
        {
            f.blocks[i].liveIn = use[i];
            f.blocks[i].liveOut = outs[i];
        }
    }
}

} // namespace

IrProgram buildCfg(const ElabProgram& prog, const LatencyTable& lat, int ramThreshold)
{
    Builder b(prog, ramThreshold);
    IrProgram p = b.run();
    assignCosts(p, lat);
    return p;
}

// ---------------------------------------------------------------------------
// if_convert
// ---------------------------------------------------------------------------
namespace
{

void convertBlock(IrFunction& f, IrBlock& b)
{
    const size_t n = b.ops.size();
    // Innermost enclosing side predicate per op (old ids; later conds win).
    std::vector<int> sidePred(n, -1);
    for (const IrCond& c : b.conds)
    {
        for (int i = c.thenBegin; i < c.thenEnd; ++i) { sidePred[i] = c.predThen; }
        for (int i = c.elseBegin; i < c.elseEnd; ++i) { sidePred[i] = c.predElse; }
    }

    std::vector<IrOp> out;
    out.reserve(n);
    std::vector<int> remap(n, -1);
    std::map<int, int> slotDef;
    std::set<int> liveIn;

    auto getDef = [&](int slot) {
        auto it = slotDef.find(slot);
        if (it != slotDef.end()) { return it->second; }
        IrOp in;
        in.kind = IrOp::Input;
        in.type = f.slotTypes[slot];
        in.slot = slot;
        out.push_back(std::move(in));
        const int id = static_cast<int>(out.size()) - 1;
        slotDef[slot] = id;
        liveIn.insert(slot);
        return id;
    };
    auto mapId = [&](int id) {
        assert(id >= 0 && remap[id] >= 0);
        return remap[id];
    };

    for (size_t i = 0; i < n; ++i)
    {
        IrOp& op = b.ops[i];
        const int pred = sidePred[i] >= 0 ? mapId(sidePred[i]) : -1;
        switch (op.kind)
        {
        case IrOp::ReadLocal:
            remap[i] = getDef(op.slot);
            break;
        case IrOp::WriteLocal:
        {
            const int v = mapId(op.args[0]);
            if (pred >= 0)
            {
                const int old = getDef(op.slot);
                IrOp sel;
                sel.kind = IrOp::Sel;
                sel.type = f.slotTypes[op.slot];
                sel.loc = op.loc;
                sel.args = {pred, v, old};
                out.push_back(std::move(sel));
                slotDef[op.slot] = static_cast<int>(out.size()) - 1;
            }
            else
            {
                slotDef[op.slot] = v;
            }
            remap[i] = slotDef[op.slot];
            break;
        }
        default:
        {
            IrOp copy = op;
            for (int& a : copy.args) { a = mapId(a); }
            if (copy.kind == IrOp::ReadShared || copy.kind == IrOp::WriteShared)
            {
                copy.pred = pred;
            }
            out.push_back(std::move(copy));
            remap[i] = static_cast<int>(out.size()) - 1;
            break;
        }
        }
    }

    for (IrRegion& r : b.regions)
    {
        for (int& id : r.ops) { id = remap[id]; }
    }
    for (int& a : b.term.args) { a = mapId(a); }
    if (b.term.predOp >= 0) { b.term.predOp = mapId(b.term.predOp); }
    if (b.condOut >= 0) { b.condOut = mapId(b.condOut); }
    b.ops = std::move(out);
    b.conds.clear();
    b.slotDefs = std::move(slotDef);
    b.liveIn = std::move(liveIn);
}

} // namespace

void ifConvert(IrProgram& prog)
{
    for (IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        for (IrBlock& b : f.blocks) { convertBlock(f, b); }
    }
    computeLiveness(prog);
}

// ---------------------------------------------------------------------------
// forward_regions
// ---------------------------------------------------------------------------
namespace
{

// Rewrites one block's regions; access ops carry order keys in `site`
// (original id doubled; inserted entry reads take the preceding odd key).
void forwardRegionsBlock(const IrProgram& p, IrBlock& b)
{
    struct RState
    {
        std::map<std::string, int> base;    // entry-read op id (new)
        std::map<std::string, int> chain;   // forwarded value op id (new)
        std::map<std::string, int> pred;    // accumulated commit predicate
        std::map<std::string, bool> always; // some contributing write is unconditional
        std::map<std::string, int> writesSeen;
        std::map<std::string, int> ramWrites;
    };

    // Total scalar writes per variable per region (to spot the last one).
    std::vector<std::map<std::string, int>> writesTotal(b.regions.size());
    for (size_t ri = 0; ri < b.regions.size(); ++ri)
    {
        for (int id : b.regions[ri].ops)
        {
            const IrOp& op = b.ops[id];
            const bool ram = p.shared[p.sharedIndex(op.var)].isRam;
            if (op.kind == IrOp::WriteShared && !ram) { ++writesTotal[ri][op.var]; }
        }
    }

    std::vector<IrOp> out;
    out.reserve(b.ops.size());
    std::vector<int> remap(b.ops.size(), -1);
    std::vector<std::vector<int>> members(b.regions.size());
    std::vector<RState> st(b.regions.size());

    auto mapId = [&](int id) {
        assert(id >= 0 && remap[id] >= 0);
        return remap[id];
    };
    auto push = [&](IrOp op) {
        out.push_back(std::move(op));
        return static_cast<int>(out.size()) - 1;
    };

    for (size_t i = 0; i < b.ops.size(); ++i)
    {
        const IrOp& op = b.ops[i];
        const bool access = op.kind == IrOp::ReadShared || op.kind == IrOp::WriteShared;
        if (!access || op.region < 0)
        {
            IrOp copy = op;
            for (int& a : copy.args) { a = mapId(a); }
            if (copy.pred >= 0) { copy.pred = mapId(copy.pred); }
            remap[i] = push(std::move(copy));
            continue;
        }
        const int ri = op.region;
        RState& s = st[ri];
        const bool ram = p.shared[p.sharedIndex(op.var)].isRam;

        if (op.kind == IrOp::ReadShared)
        {
            if (ram)
            {
                if (s.ramWrites.count(op.var) != 0)
                {
                    fail("RegionError",
                         "array '" + op.var + "' read after being written inside a region",
                         op.loc);
                }
                IrOp copy = op;
                for (int& a : copy.args) { a = mapId(a); }
                if (copy.pred >= 0) { copy.pred = mapId(copy.pred); }
                remap[i] = push(std::move(copy));
                members[ri].push_back(remap[i]);
                continue;
            }
            auto ch = s.chain.find(op.var);
            if (ch != s.chain.end())
            {
                remap[i] = ch->second; // forwarded from the pending write
                continue;
            }
            auto bs = s.base.find(op.var);
            if (bs != s.base.end())
            {
                remap[i] = bs->second; // the entry read already exists
                continue;
            }
            IrOp copy = op;
            if (copy.pred >= 0) { copy.pred = mapId(copy.pred); }
            remap[i] = push(std::move(copy));
            s.base[op.var] = remap[i];
            members[ri].push_back(remap[i]);
            continue;
        }

        // WriteShared
        if (ram)
        {
            if (++s.ramWrites[op.var] > 1)
            {
                fail("RegionError",
                     "array '" + op.var + "' written more than once inside a region", op.loc);
            }
            IrOp copy = op;
            for (int& a : copy.args) { a = mapId(a); }
            if (copy.pred >= 0) { copy.pred = mapId(copy.pred); }
            remap[i] = push(std::move(copy));
            members[ri].push_back(remap[i]);
            continue;
        }
        const int v = mapId(op.args.back());
        const int pr = op.pred >= 0 ? mapId(op.pred) : -1;
        if (pr < 0)
        {
            s.chain[op.var] = v;
            s.always[op.var] = true;
        }
        else
        {
            if (s.chain.count(op.var) == 0)
            {
                // No value to fall back on yet: materialize the entry read.
                int baseId;
                auto bs = s.base.find(op.var);
                if (bs != s.base.end()) { baseId = bs->second; }
                else
                {
                    IrOp rd;
                    rd.kind = IrOp::ReadShared;
                    rd.type = p.shared[p.sharedIndex(op.var)].type;
                    rd.loc = op.loc;
                    rd.var = op.var;
                    rd.region = ri;
                    rd.site = op.site - 1; // order key just before this write
                    rd.depthCost = 2;
                    baseId = push(std::move(rd));
                    s.base[op.var] = baseId;
                    members[ri].push_back(baseId);
                }
                s.chain[op.var] = baseId;
            }
            IrOp sel;
            sel.kind = IrOp::Sel;
            sel.type = op.type;
            sel.loc = op.loc;
            sel.args = {pr, v, s.chain[op.var]};
            sel.depthCost = 1;
            s.chain[op.var] = push(std::move(sel));
            if (!s.always[op.var])
            {
                auto pd = s.pred.find(op.var);
                if (pd == s.pred.end()) { s.pred[op.var] = pr; }
                else
                {
                    IrOp orOp;
                    orOp.kind = IrOp::Bin;
                    orOp.type = tBool();
                    orOp.loc = op.loc;
                    orOp.op = "||";
                    orOp.args = {pd->second, pr};
                    orOp.depthCost = 1;
                    s.pred[op.var] = push(std::move(orOp));
                }
            }
        }
        if (++s.writesSeen[op.var] == writesTotal[ri][op.var])
        {
            IrOp w = op;
            w.args = {s.chain[op.var]};
            w.hasIdx = false;
            w.pred = s.always[op.var] ? -1 : s.pred[op.var];
            remap[i] = push(std::move(w));
            members[ri].push_back(remap[i]);
        }
        else
        {
            remap[i] = s.chain[op.var]; // coalesced into a later commit
        }
    }

    for (size_t ri = 0; ri < b.regions.size(); ++ri)
    {
        b.regions[ri].ops = std::move(members[ri]);
    }
    for (auto& [slot, def] : b.slotDefs) { def = mapId(def); }
    for (int& a : b.term.args) { a = mapId(a); }
    if (b.term.predOp >= 0) { b.term.predOp = mapId(b.term.predOp); }
    if (b.condOut >= 0) { b.condOut = mapId(b.condOut); }
    b.ops = std::move(out);
}

} // namespace

void forwardRegions(IrProgram& prog)
{
    // Turn site ids into order keys so inserted entry reads can slot between.
    for (IrFunction& f : prog.fns)
    {
        for (IrBlock& b : f.blocks)
        {
            for (IrOp& op : b.ops)
            {
                if (op.site >= 0) { op.site *= 2; }
            }
        }
    }
    for (IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        for (IrBlock& b : f.blocks)
        {
            if (!b.regions.empty()) { forwardRegionsBlock(prog, b); }
        }
    }
    // Renumber sites back to dense program order and rebuild the table.
    struct Ref
    {
        int key;
        IrOp* op;
        int fn;
        int block;
        int regionN;
    };
    std::vector<Ref> refs;
    for (size_t fi = 0; fi < prog.fns.size(); ++fi)
    {
        for (IrBlock& b : prog.fns[fi].blocks)
        {
            for (IrOp& op : b.ops)
            {
                if (op.kind != IrOp::ReadShared && op.kind != IrOp::WriteShared) { continue; }
                const int rn = op.region >= 0 ? b.regions[op.region].n : 0;
                refs.push_back({op.site, &op, static_cast<int>(fi), b.id, rn});
            }
        }
    }
    std::sort(refs.begin(), refs.end(), [](const Ref& a, const Ref& b) { return a.key < b.key; });
    prog.sites.clear();
    for (size_t i = 0; i < refs.size(); ++i)
    {
        refs[i].op->site = static_cast<int>(i);
        SiteInfo si;
        si.id = static_cast<int>(i);
        si.var = refs[i].op->var;
        si.isWrite = refs[i].op->kind == IrOp::WriteShared;
        si.fn = refs[i].fn;
        si.block = refs[i].block;
        si.regionN = refs[i].regionN;
        prog.sites.push_back(std::move(si));
    }
}

// ---------------------------------------------------------------------------
// inline_single_callsite
// ---------------------------------------------------------------------------
void inlineSingleCallsite(IrProgram& prog)
{
    bool changed = true;
    while (changed)
    {
        changed = false;
        // callee -> list of (fn, block index) of NormCall terms; other call
        // kinds disqualify the callee entirely.
        std::map<int, std::vector<std::pair<int, int>>> normCalls;
        std::set<int> disqualified;
        for (size_t fi = 0; fi < prog.fns.size(); ++fi)
        {
            const IrFunction& f = prog.fns[fi];
            if (f.removed) { continue; }
            for (size_t bi = 0; bi < f.blocks.size(); ++bi)
            {
                const IrTerm& t = f.blocks[bi].term;
                if (t.kind == IrTerm::NormCall)
                {
                    normCalls[t.callee].push_back({static_cast<int>(fi), static_cast<int>(bi)});
                }
                else if (t.kind == IrTerm::BatchedCall || t.kind == IrTerm::DoCall ||
                         t.kind == IrTerm::AsyncSpawn)
                {
                    disqualified.insert(t.callee);
                }
            }
        }
        for (const auto& [callee, sitesList] : normCalls)
        {
            if (sitesList.size() != 1 || disqualified.count(callee) != 0) { continue; }
            if (callee == prog.entry) { continue; }
            IrFunction& F = prog.fns[callee];
            if (F.removed || F.kind != IrFunction::Normal || F.threadRate != 0) { continue; }
            const auto [ci, bi] = sitesList[0];
            if (ci == callee) { continue; }
            IrFunction& C = prog.fns[ci];

            const int slotOff = static_cast<int>(C.slotTypes.size());
            C.slotTypes.insert(C.slotTypes.end(), F.slotTypes.begin(), F.slotTypes.end());
            for (const std::string& nm : F.slotNames) { C.slotNames.push_back(F.name + "." + nm); }
            const int loopOff = static_cast<int>(C.loops.size());
            for (IrLoop lp : F.loops)
            {
                lp.id += loopOff;
                C.loops.push_back(lp);
            }

            IrTerm call = C.blocks[bi].term;
            // Bind arguments to the (renumbered) parameter slots and fall
            // through into the callee's entry block.
            IrTerm fall;
            fall.kind = IrTerm::Goto;
            fall.succ = F.entryBlock;
            C.blocks[bi].term = fall;
            for (size_t k = 0; k < F.paramSlots.size(); ++k)
            {
                C.blocks[bi].slotDefs[F.paramSlots[k] + slotOff] = call.args[k];
            }

            for (IrBlock blk : F.blocks)
            {
                for (IrOp& op : blk.ops)
                {
                    if (op.slot >= 0) { op.slot += slotOff; }
                }
                std::map<int, int> defs;
                for (const auto& [s, d] : blk.slotDefs) { defs[s + slotOff] = d; }
                blk.slotDefs = std::move(defs);
                std::set<int> li, lo;
                for (int s : blk.liveIn) { li.insert(s + slotOff); }
                for (int s : blk.liveOut) { lo.insert(s + slotOff); }
                blk.liveIn = std::move(li);
                blk.liveOut = std::move(lo);
                if (blk.term.loopId >= 0) { blk.term.loopId += loopOff; }
                if (blk.term.kind == IrTerm::NormCall && blk.term.retSlot >= 0)
                {
                    blk.term.retSlot += slotOff;
                }
                if (blk.term.kind == IrTerm::Ret)
                {
                    if (blk.term.hasRet && call.retSlot >= 0)
                    {
                        blk.slotDefs[call.retSlot] = blk.term.args[0];
                    }
                    IrTerm g;
                    g.kind = IrTerm::Goto;
                    g.succ = call.succ;
                    blk.term = g;
                }
                C.blocks.push_back(std::move(blk));
            }
            F.blocks.clear();
            F.loops.clear();
            F.removed = true;
            for (SiteInfo& s : prog.sites)
            {
                if (s.fn == callee) { s.fn = ci; }
            }
            changed = true;
            break; // re-scan: the splice may change other counts' context
        }
    }
    computeLiveness(prog);
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------
namespace
{

bool isConstOp(const IrOp& op) { return op.kind == IrOp::Const; }

bool intPow2(int64_t v, int& k)
{
    if (v <= 0 || (v & (v - 1)) != 0) { return false; }
    k = 0;
    while ((int64_t(1) << k) != v) { ++k; }
    return true;
}

void foldToConst(IrOp& op, Value v)
{
    op.cval = std::move(v);
    op.kind = IrOp::Const;
    op.op.clear();
    op.args.clear();
    op.depthCost = 0;
    op.latency = 0;
    op.registeredInput = false;
}

// One round of local simplification; returns true when something changed.
bool simplifyBlock(IrBlock& b)
{
    bool changed = false;
    std::vector<int> alias(b.ops.size(), -1);
    std::function<int(int)> resolve = [&](int id) {
        while (alias[id] >= 0) { id = alias[id]; }
        return id;
    };

    for (size_t i = 0; i < b.ops.size(); ++i)
    {
        IrOp& op = b.ops[i];
        for (int& a : op.args) { a = resolve(a); }
        if (op.pred >= 0) { op.pred = resolve(op.pred); }
        auto argConst = [&](int k) { return isConstOp(b.ops[op.args[k]]); };
        auto argVal = [&](int k) -> const Value& { return b.ops[op.args[k]].cval; };

        switch (op.kind)
        {
        case IrOp::Un:
            if (argConst(0))
            {
                foldToConst(op, evalUnOp(op.op, argVal(0), *op.type));
                changed = true;
            }
            else if (op.op == "cvt" && b.ops[op.args[0]].type->same(*op.type))
            {
                alias[i] = op.args[0];
                changed = true;
            }
            break;
        case IrOp::Bin:
        {
            if (argConst(0) && argConst(1))
            {
                foldToConst(op, evalBinOp(op.op, argVal(0), argVal(1),
                                          *b.ops[op.args[0]].type, *op.type));
                changed = true;
                break;
            }
            if (op.op == "&&" || op.op == "||")
            {
                const bool isAnd = op.op == "&&";
                for (int k = 0; k < 2; ++k)
                {
                    if (!argConst(k)) { continue; }
                    const bool v = argVal(k).i != 0;
                    if (v == isAnd) { alias[i] = op.args[1 - k]; }
                    else { foldToConst(op, Value::ofInt(isAnd ? 0 : 1)); }
                    changed = true;
                    break;
                }
                break;
            }
            if (op.type->isInt() && argConst(1))
            {
                const int64_t c = argVal(1).i;
                int k = 0;
                if (op.op == "*" && c == 1) { alias[i] = op.args[0]; changed = true; break; }
                if ((op.op == "+" || op.op == "-" || op.op == "|" || op.op == "^" ||
                     op.op == "<<" || op.op == ">>") &&
                    c == 0)
                {
                    alias[i] = op.args[0];
                    changed = true;
                    break;
                }
                // Strength reduction: pow2 multiply/divide/modulo become
                // shift/mask (the literal operand is rewritten in place).
                const bool reduce =
                    (op.op == "*" || (!op.type->isSigned && (op.op == "/" || op.op == "%")));
                if (reduce && intPow2(c, k))
                {
                    if (op.op == "*") { op.op = "<<"; b.ops[op.args[1]].cval = Value::ofInt(k); }
                    else if (op.op == "/") { op.op = ">>"; b.ops[op.args[1]].cval = Value::ofInt(k); }
                    else { op.op = "&"; b.ops[op.args[1]].cval = Value::ofInt(c - 1); }
                    op.depthCost = 1;
                    op.latency = 0;
                    op.registeredInput = false;
                    changed = true;
                    break;
                }
            }
            break;
        }
        case IrOp::Sel:
            if (argConst(0))
            {
                alias[i] = argVal(0).i != 0 ? op.args[1] : op.args[2];
                changed = true;
            }
            else if (op.args[1] == op.args[2])
            {
                alias[i] = op.args[1];
                changed = true;
            }
            break;
        default:
            break;
        }
    }

    for (IrOp& op : b.ops)
    {
        for (int& a : op.args) { a = resolve(a); }
        if (op.pred >= 0) { op.pred = resolve(op.pred); }
    }
    for (IrRegion& r : b.regions)
    {
        for (int& id : r.ops) { id = resolve(id); }
    }
    for (int& a : b.term.args) { a = resolve(a); }
    if (b.term.predOp >= 0) { b.term.predOp = resolve(b.term.predOp); }
    if (b.condOut >= 0) { b.condOut = resolve(b.condOut); }
    for (auto& [slot, def] : b.slotDefs) { def = resolve(def); }
    return changed;
}

// Removes dead ops; shared accesses and anything feeding live state survive.
// Skipped while structured conditionals remain: their ranges index raw ops.
bool dceBlock(IrBlock& b)
{
    if (!b.conds.empty()) { return false; }
    const size_t n = b.ops.size();
    std::vector<char> live(n, 0);
    std::deque<int> work;
    auto mark = [&](int id) {
        if (id >= 0 && live[id] == 0)
        {
            live[id] = 1;
            work.push_back(id);
        }
    };
    for (size_t i = 0; i < n; ++i)
    {
        const IrOp::Kind k = b.ops[i].kind;
        if (k == IrOp::ReadShared || k == IrOp::WriteShared || k == IrOp::WriteLocal)
        {
            mark(static_cast<int>(i));
        }
    }
    for (int a : b.term.args) { mark(a); }
    mark(b.term.predOp);
    mark(b.condOut);
    for (const auto& [slot, def] : b.slotDefs)
    {
        if (b.liveOut.count(slot) != 0) { mark(def); }
    }
    while (!work.empty())
    {
        const int id = work.front();
        work.pop_front();
        for (int a : b.ops[id].args) { mark(a); }
        mark(b.ops[id].pred);
    }

    bool any = false;
    for (size_t i = 0; i < n; ++i)
    {
        if (live[i] == 0) { any = true; }
    }
    if (!any) { return false; }

    std::vector<int> remap(n, -1);
    std::vector<IrOp> out;
    for (size_t i = 0; i < n; ++i)
    {
        if (live[i] == 0) { continue; }
        remap[i] = static_cast<int>(out.size());
        out.push_back(std::move(b.ops[i]));
    }
    for (IrOp& op : out)
    {
        for (int& a : op.args) { a = remap[a]; }
        if (op.pred >= 0) { op.pred = remap[op.pred]; }
    }
    for (IrRegion& r : b.regions)
    {
        for (int& id : r.ops) { id = remap[id]; }
    }
    for (int& a : b.term.args) { a = remap[a]; }
    if (b.term.predOp >= 0) { b.term.predOp = remap[b.term.predOp]; }
    if (b.condOut >= 0) { b.condOut = remap[b.condOut]; }
    std::map<int, int> defs;
    for (const auto& [slot, def] : b.slotDefs)
    {
        if (remap[def] >= 0) { defs[slot] = remap[def]; }
    }
    b.slotDefs = std::move(defs);
    std::set<int> li;
    for (const IrOp& op : out)
    {
        if (op.kind == IrOp::Input) { li.insert(op.slot); }
    }
    b.liveIn = std::move(li);
    b.ops = std::move(out);
    return true;
}

// Drops definitions of slots nothing downstream reads.
bool pruneDeadDefs(IrProgram& p)
{
    computeLiveness(p);
    bool changed = false;
    for (IrFunction& f : p.fns)
    {
        if (f.removed) { continue; }
        for (IrBlock& b : f.blocks)
        {
            for (auto it = b.slotDefs.begin(); it != b.slotDefs.end();)
            {
                if (b.liveOut.count(it->first) == 0)
                {
                    it = b.slotDefs.erase(it);
                    changed = true;
                }
                else
                {
                    ++it;
                }
            }
        }
    }
    return changed;
}

} // namespace

void optimize(IrProgram& prog)
{
    for (int round = 0; round < 16; ++round)
    {
        bool changed = pruneDeadDefs(prog);
        for (IrFunction& f : prog.fns)
        {
            if (f.removed) { continue; }
            for (IrBlock& b : f.blocks)
            {
                if (simplifyBlock(b)) { changed = true; }
                if (dceBlock(b)) { changed = true; }
            }
        }
        if (!changed) { break; }
    }
    computeLiveness(prog);
}

// ---------------------------------------------------------------------------
// verify_ir
// ---------------------------------------------------------------------------
std::vector<std::string> verifyIr(const IrProgram& prog)
{
    std::vector<std::string> diags;
    auto bad = [&](const std::string& m) { diags.push_back(m); };

    std::set<int> blockIds;
    std::set<int> seenSites;
    for (size_t fi = 0; fi < prog.fns.size(); ++fi)
    {
        const IrFunction& f = prog.fns[fi];
        if (f.removed)
        {
            if (!f.blocks.empty()) { bad(f.name + ": removed function still has blocks"); }
            continue;
        }
        if (prog.findBlock(f.entryBlock) == nullptr)
        {
            bad(f.name + ": missing entry block");
        }
        for (int s : f.paramSlots)
        {
            if (s < 0 || s >= static_cast<int>(f.slotTypes.size()))
            {
                bad(f.name + ": parameter slot out of range");
            }
        }
        for (const IrBlock& b : f.blocks)
        {
            const std::string where = f.name + " block " + std::to_string(b.id);
            if (!blockIds.insert(b.id).second) { bad(where + ": duplicate block id"); }

            int lastSite = -1;
            for (size_t i = 0; i < b.ops.size(); ++i)
            {
                const IrOp& op = b.ops[i];
                for (int a : op.args)
                {
                    if (a < 0 || a >= static_cast<int>(i))
                    {
                        bad(where + " op " + std::to_string(i) + ": operand does not precede it");
                    }
                }
                if (op.pred >= 0)
                {
                    if (op.pred >= static_cast<int>(i))
                    {
                        bad(where + " op " + std::to_string(i) + ": predicate does not precede it");
                    }
                    else if (b.ops[op.pred].type->kind != EType::Bool)
                    {
                        bad(where + " op " + std::to_string(i) + ": predicate is not bool");
                    }
                }
                const bool isAccess =
                    op.kind == IrOp::ReadShared || op.kind == IrOp::WriteShared;
                if (isAccess)
                {
                    if (prog.sharedIndex(op.var) < 0)
                    {
                        bad(where + ": access to unknown shared '" + op.var + "'");
                    }
                    if (op.site < 0 || op.site >= static_cast<int>(prog.sites.size()))
                    {
                        bad(where + ": bad site id");
                    }
                    else
                    {
                        if (!seenSites.insert(op.site).second)
                        {
                            bad(where + ": site " + std::to_string(op.site) + " duplicated");
                        }
                        const SiteInfo& si = prog.sites[op.site];
                        if (si.var != op.var ||
                            si.isWrite != (op.kind == IrOp::WriteShared) ||
                            si.block != b.id)
                        {
                            bad(where + ": site table mismatch for site " +
                                std::to_string(op.site));
                        }
                        if (op.site <= lastSite)
                        {
                            bad(where + ": sites out of program order");
                        }
                        lastSite = op.site;
                    }
                }
                else if (op.site >= 0)
                {
                    bad(where + ": non-access op carries a site id");
                }
            }
            for (size_t ri = 0; ri < b.regions.size(); ++ri)
            {
                for (int id : b.regions[ri].ops)
                {
                    if (id < 0 || id >= static_cast<int>(b.ops.size()))
                    {
                        bad(where + ": region op out of range");
                    }
                    else if (b.ops[id].kind != IrOp::ReadShared &&
                             b.ops[id].kind != IrOp::WriteShared)
                    {
                        bad(where + ": region lists a non-access op");
                    }
                    else if (b.ops[id].region != static_cast<int>(ri))
                    {
                        bad(where + ": region back-reference mismatch");
                    }
                }
            }
            const IrTerm& t = b.term;
            auto checkArg = [&](int a) {
                if (a < 0 || a >= static_cast<int>(b.ops.size()))
                {
                    bad(where + ": terminator argument out of range");
                }
            };
            for (int a : t.args) { checkArg(a); }
            if (t.predOp >= 0) { checkArg(t.predOp); }
            if (b.condOut >= 0) { checkArg(b.condOut); }
            if (b.kind == IrBlock::WaitEval && b.condOut < 0)
            {
                bad(where + ": wait evaluator without a pass condition");
            }
            switch (t.kind)
            {
            case IrTerm::Ret:
                if (t.hasRet && t.args.size() != 1) { bad(where + ": return value missing"); }
                break;
            case IrTerm::LoopEnter:
            case IrTerm::LoopBack:
                if (t.loopId < 0 || t.loopId >= static_cast<int>(f.loops.size()))
                {
                    bad(where + ": bad loop id");
                }
                if (t.kind == IrTerm::LoopBack && t.args.size() != 1)
                {
                    bad(where + ": loop-back needs a continue condition");
                }
                break;
            case IrTerm::Wait:
            {
                const IrBlock* wb = prog.findBlock(t.waitBlock);
                if (wb == nullptr || wb->kind != IrBlock::WaitEval)
                {
                    bad(where + ": wait terminator without evaluator block");
                }
                break;
            }
            case IrTerm::BatchedCall:
            case IrTerm::DoCall:
            case IrTerm::NormCall:
            case IrTerm::AsyncSpawn:
                if (t.callee < 0 || t.callee >= static_cast<int>(prog.fns.size()) ||
                    prog.fns[t.callee].removed)
                {
                    bad(where + ": bad callee");
                }
                if (t.kind == IrTerm::BatchedCall && t.args.empty())
                {
                    bad(where + ": batched call without a count");
                }
                break;
            case IrTerm::Goto:
                break;
            }
            if (t.kind != IrTerm::Ret && prog.findBlock(t.succ) == nullptr)
            {
                bad(where + ": missing successor block");
            }
            for (const auto& [slot, def] : b.slotDefs)
            {
                if (slot < 0 || slot >= static_cast<int>(f.slotTypes.size()))
                {
                    bad(where + ": slot def out of range");
                }
                if (def < 0 || def >= static_cast<int>(b.ops.size()))
                {
                    bad(where + ": slot def references a bad op");
                }
            }
        }
    }
    for (size_t i = 0; i < prog.sites.size(); ++i)
    {
        if (seenSites.count(static_cast<int>(i)) == 0)
        {
            bad("site " + std::to_string(i) + " (" + prog.sites[i].var +
                ") not present in any block");
        }
    }
    if (prog.entry < 0 || prog.entry >= static_cast<int>(prog.fns.size()))
    {
        bad("bad entry function");
    }
    return diags;
}

// ---------------------------------------------------------------------------
// interpret_ir: serialized reference execution of the IR itself.
// ---------------------------------------------------------------------------
namespace
{

class IrMachine
{
public:
    IrMachine(const IrProgram& p, const SharedState& inputs) : p_(p)
    {
        for (const SharedVarDecl& v : p.shared)
        {
            auto it = inputs.find(v.name);
            shared_[v.name] = it != inputs.end() ? it->second : v.init;
        }
    }

    SharedState run()
    {
        callFn(p_.entry, {});
        return shared_;
    }

private:
    const IrProgram& p_;
    SharedState shared_;
    int64_t steps_ = 0;

    void tick(SrcLoc loc = {})
    {
        if (++steps_ > 200000000)
        {
            fail("StepLimit", "IR interpretation exceeded the step budget", loc);
        }
    }

    struct BlockResult
    {
        std::vector<Value> vals;
        std::vector<std::pair<int, Value>> writes; // op id -> index value used
    };

    // Evaluates a block. Shared writes commit immediately unless `buffer`
    // is set (wait evaluators commit only when the pass condition holds).
    // Structured conditionals still present (pre if_convert) suppress the
    // inactive side's ops entirely.
    std::vector<Value> evalBlock(const IrBlock& b, std::vector<Value>& slots, bool buffer,
                                 std::vector<std::pair<const IrOp*, std::vector<Value>>>* buffered)
    {
        std::vector<Value> vals(b.ops.size(), Value::ofInt(0));
        std::vector<char> sup(b.ops.size(), 0);
        for (size_t i = 0; i < b.ops.size(); ++i)
        {
            tick(b.ops[i].loc);
            for (const IrCond& c : b.conds)
            {
                const int ii = static_cast<int>(i);
                if (ii >= c.thenBegin && ii < c.thenEnd && vals[c.predThen].i == 0)
                {
                    sup[i] = 1;
                }
                if (ii >= c.elseBegin && ii < c.elseEnd && vals[c.predElse].i == 0)
                {
                    sup[i] = 1;
                }
            }
            const IrOp& op = b.ops[i];
            if (sup[i] != 0)
            {
                vals[i] = zeroOf(*opType(op));
                continue;
            }
            switch (op.kind)
            {
            case IrOp::Const: vals[i] = op.cval; break;
            case IrOp::Input: vals[i] = slots[op.slot]; break;
            case IrOp::ReadLocal: vals[i] = slots[op.slot]; break;
            case IrOp::WriteLocal: slots[op.slot] = vals[op.args[0]]; break;
            case IrOp::Un:
                vals[i] = evalUnOp(op.op, vals[op.args[0]], *op.type);
                break;
            case IrOp::Bin:
                vals[i] = evalBinOp(op.op, vals[op.args[0]], vals[op.args[1]],
                                    *b.ops[op.args[0]].type, *op.type);
                break;
            case IrOp::Sel:
                vals[i] = vals[op.args[0]].i != 0 ? vals[op.args[1]] : vals[op.args[2]];
                break;
            case IrOp::ReadShared:
            {
                const Value& cell = shared_.at(op.var);
                if (op.hasIdx)
                {
                    const int64_t ix = vals[op.args[0]].i;
                    if (ix < 0 || ix >= static_cast<int64_t>(cell.elems.size()))
                    {
                        vals[i] = zeroOf(*op.type); // reads of a bad lane gate to zero
                    }
                    else
                    {
                        vals[i] = cell.elems[ix];
                    }
                }
                else
                {
                    vals[i] = cell;
                }
                break;
            }
            case IrOp::WriteShared:
            {
                if (op.pred >= 0 && vals[op.pred].i == 0) { break; }
                if (buffer)
                {
                    std::vector<Value> argv;
                    for (int a : op.args) { argv.push_back(vals[a]); }
                    buffered->push_back({&op, std::move(argv)});
                    break;
                }
                commitWrite(op, vals);
                break;
            }
            }
        }
        return vals;
    }

    static const ETypeP& opType(const IrOp& op)
    {
        static const ETypeP unit = tInt(32, false);
        return op.type ? op.type : unit;
    }

    void commitWrite(const IrOp& op, const std::vector<Value>& vals)
    {
        std::vector<Value> argv;
        for (int a : op.args) { argv.push_back(vals[a]); }
        commitWriteVals(op, argv);
    }

    void commitWriteVals(const IrOp& op, const std::vector<Value>& argv)
    {
        Value& cell = shared_[op.var];
        if (op.hasIdx)
        {
            const int64_t ix = argv[0].i;
            if (ix < 0 || ix >= static_cast<int64_t>(cell.elems.size()))
            {
                fail("OutOfBounds", "write to '" + op.var + "' index " + std::to_string(ix),
                     op.loc);
            }
            cell.elems[ix] = argv[1];
        }
        else
        {
            cell = argv[0];
        }
    }

    void applySlotDefs(const IrBlock& b, const std::vector<Value>& vals,
                       std::vector<Value>& slots)
    {
        for (const auto& [slot, def] : b.slotDefs)
        {
            slots[slot] = vals[def];
        }
    }

    Value callFn(int fnIdx, const std::vector<Value>& args)
    {
        const IrFunction& fn = p_.fns[fnIdx];
        std::vector<Value> slots(fn.slotTypes.size());
        for (size_t i = 0; i < fn.slotTypes.size(); ++i)
        {
            slots[i] = zeroOf(*fn.slotTypes[i]);
        }
        assert(args.size() == fn.paramSlots.size());
        for (size_t i = 0; i < args.size(); ++i)
        {
            slots[fn.paramSlots[i]] = args[i];
        }

        int cur = fn.entryBlock;
        while (true)
        {
            tick();
            const IrBlock* bp = p_.findBlock(cur);
            if (bp == nullptr)
            {
                fail("InternalError", "dangling block id " + std::to_string(cur));
            }
            const IrBlock& b = *bp;
            std::vector<Value> vals = evalBlock(b, slots, false, nullptr);
            applySlotDefs(b, vals, slots);
            const IrTerm& t = b.term;
            switch (t.kind)
            {
            case IrTerm::Ret:
                return t.hasRet ? vals[t.args[0]] : Value::ofInt(0);
            case IrTerm::Goto:
                cur = t.succ;
                break;
            case IrTerm::LoopEnter:
            {
                const bool enter = t.args.empty() || vals[t.args[0]].i != 0;
                cur = enter ? t.succ : owningLoops(fnIdx)[t.loopId].exitBlock;
                break;
            }
            case IrTerm::LoopBack:
                cur = vals[t.args[0]].i != 0 ? owningLoops(fnIdx)[t.loopId].entryBlock
                                             : t.succ;
                break;
            case IrTerm::Wait:
            {
                const bool on = t.predOp < 0 || vals[t.predOp].i != 0;
                const IrBlock& wb = *p_.findBlock(t.waitBlock);
                if (!on)
                {
                    cur = wb.term.succ;
                    break;
                }
                std::vector<std::pair<const IrOp*, std::vector<Value>>> buf;
                std::vector<Value> wvals = evalBlock(wb, slots, true, &buf);
                if (wvals[wb.condOut].i == 0)
                {
                    fail("SerializedDeadlock",
                         "wait condition can never pass when running alone", wb.ops.empty()
                             ? SrcLoc{}
                             : wb.ops[0].loc);
                }
                for (const auto& [op, argv] : buf) { commitWriteVals(*op, argv); }
                applySlotDefs(wb, wvals, slots);
                cur = wb.term.succ;
                break;
            }
            case IrTerm::BatchedCall:
            {
                const IrFunction& callee = p_.fns[t.callee];
                const int64_t n = vals[t.args[0]].i;
                std::vector<Value> caps;
                for (size_t k = 1; k < t.args.size(); ++k) { caps.push_back(vals[t.args[k]]); }
                const EType& it = *callee.slotTypes[callee.paramSlots[0]];
                for (int64_t i = 0; i < n; ++i)
                {
                    std::vector<Value> a;
                    a.push_back(Value::ofInt(wrapInt(i, it.bits(), it.isSigned)));
                    a.insert(a.end(), caps.begin(), caps.end());
                    callFn(t.callee, a);
                }
                cur = t.succ;
                break;
            }
            case IrTerm::DoCall:
            {
                const IrFunction& callee = p_.fns[t.callee];
                std::vector<Value> caps;
                for (int a : t.args) { caps.push_back(vals[a]); }
                const EType& it = *callee.slotTypes[callee.paramSlots[0]];
                for (int64_t i = 0;; ++i)
                {
                    tick();
                    std::vector<Value> a;
                    a.push_back(Value::ofInt(wrapInt(i, it.bits(), it.isSigned)));
                    a.insert(a.end(), caps.begin(), caps.end());
                    const Value r = callFn(t.callee, a);
                    if (r.i == 0) { break; }
                }
                cur = t.succ;
                break;
            }
            case IrTerm::AsyncSpawn:
            {
                std::vector<Value> a;
                for (int x : t.args) { a.push_back(vals[x]); }
                callFn(t.callee, a);
                cur = t.succ;
                break;
            }
            case IrTerm::NormCall:
            {
                std::vector<Value> a;
                for (int x : t.args) { a.push_back(vals[x]); }
                const Value r = callFn(t.callee, a);
                if (t.retSlot >= 0) { slots[t.retSlot] = r; }
                cur = t.succ;
                break;
            }
            }
        }
    }

    const std::vector<IrLoop>& owningLoops(int fnIdx) const { return p_.fns[fnIdx].loops; }
};

} // namespace

SharedState interpretIr(const IrProgram& prog, const SharedState& inputs)
{
    IrMachine m(prog, inputs);
    return m.run();
}

// ---------------------------------------------------------------------------
// dump_ir_json
// ---------------------------------------------------------------------------
namespace
{

const char* opKindName(IrOp::Kind k)
{
    switch (k)
    {
    case IrOp::Const: return "const";
    case IrOp::Input: return "input";
    case IrOp::Un: return "un";
    case IrOp::Bin: return "bin";
    case IrOp::Sel: return "sel";
    case IrOp::ReadLocal: return "read-local";
    case IrOp::WriteLocal: return "write-local";
    case IrOp::ReadShared: return "read-shared";
    case IrOp::WriteShared: return "write-shared";
    }
    return "?";
}

const char* termKindName(IrTerm::Kind k)
{
    switch (k)
    {
    case IrTerm::Ret: return "ret";
    case IrTerm::BatchedCall: return "batched-call";
    case IrTerm::DoCall: return "do-call";
    case IrTerm::NormCall: return "call";
    case IrTerm::AsyncSpawn: return "async-spawn";
    case IrTerm::LoopEnter: return "loop-enter";
    case IrTerm::LoopBack: return "loop-back";
    case IrTerm::Wait: return "wait";
    case IrTerm::Goto: return "goto";
    }
    return "?";
}

nlohmann::json valueJson(const Value& v)
{
    if (v.kind == Value::F) { return v.f; }
    if (v.kind == Value::A)
    {
        nlohmann::json a = nlohmann::json::array();
        for (const Value& e : v.elems) { a.push_back(valueJson(e)); }
        return a;
    }
    return v.i;
}

} // namespace

std::string dumpIrJson(const IrProgram& prog)
{
    nlohmann::json j;
    j["schema"] = 1;
    j["entry"] = prog.fns[prog.entry].name;
    j["call-sites"] = prog.callSiteCount;

    nlohmann::json shared = nlohmann::json::array();
    for (const SharedVarDecl& v : prog.shared)
    {
        shared.push_back({{"name", v.name},
                          {"type", v.type->str()},
                          {"storage", v.isRam ? "ram" : "register"},
                          {"read-only-input", v.readOnlyInput},
                          {"init", valueJson(v.init)}});
    }
    j["shared"] = std::move(shared);

    nlohmann::json sites = nlohmann::json::array();
    for (const SiteInfo& s : prog.sites)
    {
        sites.push_back({{"id", s.id},
                         {"var", s.var},
                         {"kind", s.isWrite ? "write" : "read"},
                         {"fn", s.fn},
                         {"block", s.block},
                         {"region-n", s.regionN}});
    }
    j["sites"] = std::move(sites);

    nlohmann::json fns = nlohmann::json::array();
    for (const IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        nlohmann::json jf;
        jf["name"] = f.name;
        jf["kind"] = f.kind == IrFunction::Normal
                         ? "normal"
                         : f.kind == IrFunction::Batched
                               ? "batched"
                               : f.kind == IrFunction::DoBody ? "do-body" : "async";
        jf["thread-rate"] = f.threadRate;
        jf["params"] = f.paramSlots;
        jf["entry-block"] = f.entryBlock;
        nlohmann::json slots = nlohmann::json::array();
        for (size_t i = 0; i < f.slotTypes.size(); ++i)
        {
            slots.push_back({{"name", f.slotNames[i]}, {"type", f.slotTypes[i]->str()}});
        }
        jf["slots"] = std::move(slots);
        nlohmann::json loops = nlohmann::json::array();
        for (const IrLoop& l : f.loops)
        {
            loops.push_back({{"id", l.id},
                             {"entry", l.entryBlock},
                             {"exit", l.exitBlock},
                             {"ordered", l.ordered}});
        }
        jf["loops"] = std::move(loops);

        nlohmann::json blocks = nlohmann::json::array();
        for (const IrBlock& b : f.blocks)
        {
            nlohmann::json jb;
            jb["id"] = b.id;
            jb["kind"] = b.kind == IrBlock::Stage ? "stage" : "wait-eval";
            nlohmann::json ops = nlohmann::json::array();
            for (size_t i = 0; i < b.ops.size(); ++i)
            {
                const IrOp& op = b.ops[i];
                nlohmann::json jo;
                jo["id"] = i;
                jo["kind"] = opKindName(op.kind);
                if (op.type) { jo["type"] = op.type->str(); }
                if (!op.op.empty()) { jo["op"] = op.op; }
                if (op.kind == IrOp::Const) { jo["value"] = valueJson(op.cval); }
                if (op.slot >= 0) { jo["slot"] = op.slot; }
                if (!op.var.empty()) { jo["var"] = op.var; }
                if (!op.args.empty()) { jo["args"] = op.args; }
                if (op.pred >= 0) { jo["pred"] = op.pred; }
                if (op.site >= 0) { jo["site"] = op.site; }
                if (op.region >= 0) { jo["region"] = op.region; }
                jo["depth"] = op.depthCost;
                if (op.latency > 0) { jo["latency"] = op.latency; }
                if (op.registeredInput) { jo["registered-input"] = true; }
                ops.push_back(std::move(jo));
            }
            jb["ops"] = std::move(ops);
            nlohmann::json regions = nlohmann::json::array();
            for (const IrRegion& r : b.regions)
            {
                regions.push_back({{"n", r.n}, {"ops", r.ops}});
            }
            jb["regions"] = std::move(regions);
            nlohmann::json jt;
            jt["kind"] = termKindName(b.term.kind);
            if (b.term.succ >= 0) { jt["succ"] = b.term.succ; }
            if (b.term.callee >= 0)
            {
                jt["callee"] = prog.fns[b.term.callee].name;
                jt["call-site"] = b.term.callSiteId;
            }
            if (!b.term.args.empty()) { jt["args"] = b.term.args; }
            if (b.term.hasRet) { jt["has-ret"] = true; }
            if (b.term.retSlot >= 0) { jt["ret-slot"] = b.term.retSlot; }
            if (b.term.predOp >= 0) { jt["pred"] = b.term.predOp; }
            if (b.term.loopId >= 0) { jt["loop"] = b.term.loopId; }
            if (b.term.waitBlock >= 0) { jt["wait-block"] = b.term.waitBlock; }
            jb["term"] = std::move(jt);
            if (b.condOut >= 0) { jb["cond-out"] = b.condOut; }
            jb["live-in"] = std::vector<int>(b.liveIn.begin(), b.liveIn.end());
            jb["live-out"] = std::vector<int>(b.liveOut.begin(), b.liveOut.end());
            nlohmann::json defs = nlohmann::json::object();
            for (const auto& [slot, def] : b.slotDefs)
            {
                defs[std::to_string(slot)] = def;
            }
            jb["slot-defs"] = std::move(defs);
            blocks.push_back(std::move(jb));
        }
        jf["blocks"] = std::move(blocks);
        fns.push_back(std::move(jf));
    }
    j["functions"] = std::move(fns);
    return j.dump(2);
}

IrProgram buildIr(const ElabProgram& prog, const LatencyTable& lat, int ramThreshold)
{
    IrProgram p = buildCfg(prog, lat, ramThreshold);
    ifConvert(p);
    forwardRegions(p);
    inlineSingleCallsite(p);
    optimize(p);
    const std::vector<std::string> diags = verifyIr(p);
    if (!diags.empty())
    {
        fail("InternalError", "IR verification failed: " + diags.front());
    }
    return p;
}

} // namespace wavec
