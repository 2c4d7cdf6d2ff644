#include "wavec/lower.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

namespace wavec
{

namespace
{

const char* kindName(const GraphNode::Kind k)
{
    switch (k)
    {
    case GraphNode::StagePipe: return "stage-pipeline";
    case GraphNode::Fifo: return "fifo";
    case GraphNode::Dispatch: return "dispatch-fsm";
    case GraphNode::Collect: return "collect-fsm";
    case GraphNode::LoopArbiter: return "loop-arbiter";
    case GraphNode::WaitEvaluator: return "wait-evaluator";
    case GraphNode::RegionGuard: return "region-guard";
    case GraphNode::RateLimiter: return "rate-limiter";
    case GraphNode::ReturnDispatch: return "return-dispatch";
    }
    return "?";
}

struct Builder
{
    const IrProgram& p;
    const Schedule& sched;
    const LowerOptions& opt;
    PipelineGraph g;

    int add(GraphNode n)
    {
        n.id = int(g.nodes.size());
        g.nodes.push_back(std::move(n));
        return g.nodes.back().id;
    }

    void edge(const int from, const int to, const std::string& kind = "flow")
    {
        g.edges.push_back({from, to, kind});
    }

    int capOf(const std::string& role) const
    {
        const auto it = opt.roleCapacity.find(role);
        return it != opt.roleCapacity.end() ? it->second : opt.fifoCapacity;
    }

    int64_t slotBits(const IrFunction& fn, const std::set<int>& slots, const int skip = -1) const
    {
        int64_t bits = 0;
        for (const int s : slots)
        {
            if (s != skip) { bits += fn.slotTypes[s]->bits(); }
        }
        return bits;
    }

    int fifo(const std::string& role, const std::string& name, const int64_t width,
             const int fn, const int callSite = -1, const bool ordered = false,
             const int loopId = -1)
    {
        GraphNode n;
        n.kind = GraphNode::Fifo;
        n.name = name;
        n.fn = fn;
        n.role = role;
        n.capacity = capOf(role);
        n.widthBits = int(width);
        n.callSite = callSite;
        n.ordered = ordered;
        n.loopId = loopId;
        return add(n);
    }

    void build()
    {
        // Functions first: argument/return plumbing exists before any caller
        // wiring references it.
        for (size_t f = 0; f < p.fns.size(); ++f)
        {
            const IrFunction& fn = p.fns[f];
            if (fn.removed) { continue; }
            FnWiring w;
            int64_t argBits = 8; // hidden call-site id
            for (const int s : fn.paramSlots) { argBits += fn.slotTypes[s]->bits(); }
            w.argFifo = fifo("arg", "arg:" + fn.name, argBits, int(f));
            const int64_t retBits = 8 + (fn.retType->kind == EType::Void ? 0 : fn.retType->bits());
            w.retFifo = fifo("ret", "ret:" + fn.name, retBits, int(f));
            GraphNode rd;
            rd.kind = GraphNode::ReturnDispatch;
            rd.name = "return:" + fn.name;
            rd.fn = int(f);
            rd.callee = int(f);
            w.retDispatch = add(rd);
            edge(w.retFifo, w.retDispatch);
            if (fn.threadRate > 0)
            {
                GraphNode rl;
                rl.kind = GraphNode::RateLimiter;
                rl.name = "rate:" + fn.name;
                rl.fn = int(f);
                rl.ii = fn.threadRate;
                w.rateLimiter = add(rl);
                edge(w.rateLimiter, w.argFifo, "credit");
            }
            g.fns[int(f)] = w;
        }

        // Blocks: one pipeline (or evaluator) per block, plus region guards.
        for (size_t f = 0; f < p.fns.size(); ++f)
        {
            const IrFunction& fn = p.fns[f];
            if (fn.removed) { continue; }
            for (const IrBlock& b : fn.blocks)
            {
                const BlockSchedule& bs = sched.blocks.at(b.id);
                GraphNode n;
                n.kind = b.kind == IrBlock::WaitEval ? GraphNode::WaitEvaluator
                                                     : GraphNode::StagePipe;
                n.name = (b.kind == IrBlock::WaitEval ? "eval:" : "pipe:") + fn.name + "#" +
                         std::to_string(b.id);
                n.fn = int(f);
                n.block = b.id;
                n.stages = bs.stageCount;
                g.blocks[b.id].pipe = add(n);
                for (size_t r = 0; r < b.regions.size(); ++r)
                {
                    GraphNode rg;
                    rg.kind = GraphNode::RegionGuard;
                    rg.name = "guard:" + fn.name + "#" + std::to_string(b.id) + "r" +
                              std::to_string(r);
                    rg.fn = int(f);
                    rg.block = b.id;
                    rg.region = int(r);
                    rg.credits = b.regions[r].n;
                    rg.span = bs.regions[r].span;
                    const int id = add(rg);
                    g.regionGuards[b.id].push_back(id);
                    edge(id, g.blocks[b.id].pipe, "credit");
                }
            }
            edge(g.fns[int(f)].argFifo, g.blocks[fn.entryBlock].pipe);
        }

        // Loops: entry/loopback/exit fifos and the arbiter, keyed by loop id.
        for (size_t f = 0; f < p.fns.size(); ++f)
        {
            const IrFunction& fn = p.fns[f];
            if (fn.removed) { continue; }
            for (const IrLoop& lp : fn.loops)
            {
                const IrBlock* body = p.findBlock(lp.entryBlock);
                const IrBlock* exit = p.findBlock(lp.exitBlock);
                const std::string tag = fn.name + "$loop" + std::to_string(lp.id);
                const int ef = fifo("entry", "entry:" + tag,
                                    slotBits(fn, body->liveIn) + 1, int(f), -1, false, lp.id);
                const int lb = fifo("loopback", "loopback:" + tag,
                                    slotBits(fn, body->liveIn), int(f), -1, false, lp.id);
                const int xf = fifo("exit", "exit:" + tag, slotBits(fn, exit->liveIn),
                                    int(f), -1, lp.ordered, lp.id);
                GraphNode la;
                la.kind = GraphNode::LoopArbiter;
                la.name = "arbiter:" + tag;
                la.fn = int(f);
                la.loopId = lp.id;
                const int ar = add(la);
                g.loopArbiter[lp.id] = ar;
                edge(ef, ar);
                edge(lb, ar);
                edge(ar, g.blocks[lp.entryBlock].pipe);
                edge(ar, xf); // zero-iteration bypass
                edge(xf, g.blocks[lp.exitBlock].pipe);
                BlockWiring& bw = g.blocks[lp.entryBlock];
                bw.entryFifo = ef;
                bw.loopbackFifo = lb;
                bw.exitFifo = xf;
            }
        }

        // Terms: glue each block's exit to what its terminator names.
        for (size_t f = 0; f < p.fns.size(); ++f)
        {
            const IrFunction& fn = p.fns[f];
            if (fn.removed) { continue; }
            for (const IrBlock& b : fn.blocks)
            {
                wireTerm(int(f), fn, b);
            }
        }

        bindings();
        report();
    }

    void wireTerm(const int f, const IrFunction& fn, const IrBlock& b)
    {
        BlockWiring& w = g.blocks[b.id];
        const int pipe = w.pipe;
        const IrTerm& t = b.term;
        switch (t.kind)
        {
        case IrTerm::Ret:
            w.retFifo = g.fns[f].retFifo;
            edge(pipe, w.retFifo);
            break;
        case IrTerm::Goto:
            w.succPipe = g.blocks[t.succ].pipe;
            edge(pipe, w.succPipe);
            break;
        case IrTerm::NormCall:
        case IrTerm::BatchedCall:
        case IrTerm::DoCall:
        {
            const IrBlock* succ = p.findBlock(t.succ);
            CallSiteInfo cs;
            cs.id = t.callSiteId;
            cs.kind = t.kind;
            cs.callee = t.callee;
            cs.callerFn = f;
            cs.callerBlock = b.id;
            cs.succBlock = t.succ;
            cs.retSlot = t.retSlot;
            const std::string tag = "@cs" + std::to_string(t.callSiteId);
            cs.ctxFifo = fifo("ctx", "ctx" + tag, slotBits(fn, succ->liveIn, t.retSlot),
                              f, t.callSiteId);
            w.ctxFifo = cs.ctxFifo;
            edge(pipe, cs.ctxFifo);
            edge(cs.ctxFifo, g.blocks[t.succ].pipe);
            if (t.kind == IrTerm::NormCall)
            {
                w.argFifo = g.fns[t.callee].argFifo;
                edge(pipe, w.argFifo);
                edge(g.fns[t.callee].retDispatch, g.blocks[t.succ].pipe);
            }
            else
            {
                GraphNode d;
                d.kind = GraphNode::Dispatch;
                d.name = "dispatch" + tag;
                d.fn = f;
                d.callee = t.callee;
                d.callSite = t.callSiteId;
                d.doMode = t.kind == IrTerm::DoCall;
                cs.dispatch = add(d);
                GraphNode c;
                c.kind = GraphNode::Collect;
                c.name = "collect" + tag;
                c.fn = f;
                c.callee = t.callee;
                c.callSite = t.callSiteId;
                cs.collect = add(c);
                w.dispatch = cs.dispatch;
                w.collect = cs.collect;
                w.argFifo = g.fns[t.callee].argFifo;
                edge(pipe, cs.dispatch);
                edge(cs.dispatch, w.argFifo);
                edge(g.fns[t.callee].retDispatch, cs.collect);
                edge(cs.collect, g.blocks[t.succ].pipe);
            }
            g.sites[t.callSiteId] = cs;
            break;
        }
        case IrTerm::AsyncSpawn:
        {
            CallSiteInfo cs;
            cs.id = t.callSiteId;
            cs.kind = t.kind;
            cs.callee = t.callee;
            cs.callerFn = f;
            cs.callerBlock = b.id;
            cs.succBlock = t.succ;
            g.sites[t.callSiteId] = cs;
            w.argFifo = g.fns[t.callee].argFifo;
            w.succPipe = g.blocks[t.succ].pipe;
            edge(pipe, w.argFifo);
            edge(pipe, w.succPipe);
            break;
        }
        case IrTerm::LoopEnter:
        {
            const BlockWiring& body = g.blocks[t.succ];
            w.entryFifo = body.entryFifo;
            edge(pipe, w.entryFifo);
            break;
        }
        case IrTerm::LoopBack:
        {
            const IrLoop* lp = nullptr;
            for (const IrLoop& l : fn.loops)
            {
                if (l.id == t.loopId) { lp = &l; }
            }
            const BlockWiring& body = g.blocks[lp->entryBlock];
            w.loopbackFifo = body.loopbackFifo;
            w.exitFifo = body.exitFifo;
            edge(pipe, w.loopbackFifo);
            edge(pipe, w.exitFifo);
            break;
        }
        case IrTerm::Wait:
        {
            const IrBlock* evb = p.findBlock(t.waitBlock);
            const IrBlock* succ = p.findBlock(t.succ);
            std::set<int> live = succ->liveIn;
            live.insert(evb->liveIn.begin(), evb->liveIn.end());
            w.waitFifo = fifo("wait", "wait:" + fn.name + "#" + std::to_string(t.waitBlock),
                              slotBits(fn, live) + 1, f);
            w.waitEval = g.blocks[t.waitBlock].pipe;
            edge(pipe, w.waitFifo);
            edge(w.waitFifo, w.waitEval);
            edge(w.waitEval, g.blocks[t.succ].pipe);
            break;
        }
        }
    }

    void bindings()
    {
        for (const IrFunction& fn : p.fns)
        {
            if (fn.removed) { continue; }
            for (const IrBlock& b : fn.blocks)
            {
                std::map<std::string, std::vector<int>> byVar;
                for (const IrOp& op : b.ops)
                {
                    if (op.site >= 0) { byVar[op.var].push_back(op.site); }
                }
                for (auto& [var, sites] : byVar)
                {
                    std::sort(sites.begin(), sites.end());
                    g.bindings.push_back({g.blocks[b.id].pipe, var, sites});
                }
            }
        }
    }

    // Bits a block's thread context carries across each stage boundary: op
    // results from when they exist to their last consumer, slot inputs from
    // entry, in-flight multi-cycle results, plus a valid bit and thread id.
    int64_t blockRegisterBits(const IrFunction& fn, const IrBlock& b) const
    {
        const BlockSchedule& bs = sched.blocks.at(b.id);
        if (bs.stageCount <= 1) { return 0; }
        const size_t n = b.ops.size();
        std::vector<int> lastUse(n, -1);
        auto use = [&](const int id, const int stage) {
            lastUse[id] = std::max(lastUse[id], stage);
        };
        for (size_t i = 0; i < n; ++i)
        {
            for (const int a : b.ops[i].args) { use(a, bs.ops[i].start); }
            if (b.ops[i].pred >= 0) { use(b.ops[i].pred, bs.ops[i].start); }
        }
        const int last = bs.stageCount - 1;
        for (const auto& [slot, id] : b.slotDefs)
        {
            if (b.liveOut.count(slot)) { use(id, last); }
        }
        for (const int a : b.term.args) { use(a, last); }
        if (b.term.predOp >= 0) { use(b.term.predOp, last); }
        if (b.condOut >= 0) { use(b.condOut, last); }

        int64_t bits = 0;
        for (size_t i = 0; i < n; ++i)
        {
            const IrOp& op = b.ops[i];
            if (op.kind == IrOp::WriteShared || op.kind == IrOp::Const) { continue; }
            const int64_t w = op.type->bits();
            if (op.kind == IrOp::Input)
            {
                if (lastUse[i] > 0) { bits += w * lastUse[i]; }
                continue;
            }
            const int from = bs.ops[i].end;
            if (lastUse[i] > from) { bits += w * (lastUse[i] - from); }
            if (bs.ops[i].end > bs.ops[i].start) { bits += w * (bs.ops[i].end - bs.ops[i].start); }
        }
        return bits + int64_t(17) * (bs.stageCount - 1);
    }

    void report()
    {
        ResourceReport& r = g.report;
        for (const GraphNode& n : g.nodes)
        {
            switch (n.kind)
            {
            case GraphNode::StagePipe: r.stageCount += n.stages; break;
            case GraphNode::WaitEvaluator: r.stageCount += 1; break;
            case GraphNode::Fifo:
                ++r.fifoCount;
                r.fifoBits += int64_t(n.capacity) * n.widthBits;
                break;
            case GraphNode::Dispatch:
            case GraphNode::Collect:
            case GraphNode::LoopArbiter:
            case GraphNode::ReturnDispatch:
                ++r.fsmCount;
                break;
            default: break;
            }
            if (n.kind == GraphNode::WaitEvaluator) { ++r.fsmCount; }
        }
        for (const SharedVarDecl& v : p.shared)
        {
            if (v.isRam)
            {
                if (!v.readOnlyInput)
                {
                    ++r.ramCount;
                    r.ramBits += v.type->bits();
                }
            }
            else { r.pipelineRegisterBits += v.type->bits(); }
        }
        for (const IrFunction& fn : p.fns)
        {
            if (fn.removed) { continue; }
            for (const IrBlock& b : fn.blocks)
            {
                if (b.kind == IrBlock::Stage)
                {
                    r.pipelineRegisterBits += blockRegisterBits(fn, b);
                }
            }
        }
    }
};

} // namespace

PipelineGraph lowerProgram(const IrProgram& prog, const Schedule& sched,
                           const LowerOptions& opt)
{
    Builder b{prog, sched, opt, {}};
    b.build();
    return b.g;
}

std::string dumpGraphJson(const PipelineGraph& g)
{
    nlohmann::json root;
    root["schema"] = 1;
    nlohmann::json nodes = nlohmann::json::array();
    for (const GraphNode& n : g.nodes)
    {
        nlohmann::json j;
        j["id"] = n.id;
        j["kind"] = kindName(n.kind);
        j["name"] = n.name;
        if (n.fn >= 0) { j["fn"] = n.fn; }
        if (n.block >= 0) { j["block"] = n.block; }
        switch (n.kind)
        {
        case GraphNode::StagePipe: j["stages"] = n.stages; break;
        case GraphNode::Fifo:
            j["role"] = n.role;
            j["capacity"] = n.capacity;
            j["width-bits"] = n.widthBits;
            if (n.ordered) { j["ordered"] = true; }
            break;
        case GraphNode::RegionGuard:
            j["credits"] = n.credits;
            j["span"] = n.span;
            j["region"] = n.region;
            break;
        case GraphNode::RateLimiter: j["ii"] = n.ii; break;
        case GraphNode::Dispatch:
            j["callee"] = n.callee;
            j["call-site"] = n.callSite;
            if (n.doMode) { j["do-mode"] = true; }
            break;
        case GraphNode::Collect:
            j["callee"] = n.callee;
            j["call-site"] = n.callSite;
            break;
        default: break;
        }
        nodes.push_back(std::move(j));
    }
    root["nodes"] = std::move(nodes);
    nlohmann::json edges = nlohmann::json::array();
    for (const GraphEdge& e : g.edges)
    {
        edges.push_back({{"from", e.from}, {"to", e.to}, {"kind", e.kind}});
    }
    root["edges"] = std::move(edges);
    nlohmann::json binds = nlohmann::json::array();
    for (const StoreBinding& b : g.bindings)
    {
        binds.push_back({{"node", b.node}, {"var", b.var}, {"sites", b.sites}});
    }
    root["bindings"] = std::move(binds);
    root["report"] = {
        {"stage-count", g.report.stageCount},
        {"pipeline-register-bits", g.report.pipelineRegisterBits},
        {"fifo-count", g.report.fifoCount},
        {"fifo-bits", g.report.fifoBits},
        {"ram-count", g.report.ramCount},
        {"ram-bits", g.report.ramBits},
        {"fsm-count", g.report.fsmCount},
    };
    return root.dump(2) + "\n";
}

std::string dumpGraphDot(const PipelineGraph& g)
{
    std::string out = "digraph pipeline {\n  rankdir=LR;\n";
    for (const GraphNode& n : g.nodes)
    {
        std::string shape = "box";
        if (n.kind == GraphNode::Fifo) { shape = "cds"; }
        else if (n.kind == GraphNode::RegionGuard || n.kind == GraphNode::RateLimiter)
        {
            shape = "diamond";
        }
        else if (n.kind != GraphNode::StagePipe) { shape = "ellipse"; }
        out += "  n" + std::to_string(n.id) + " [shape=" + shape + " label=\"" + n.name +
               "\"];\n";
    }
    for (const GraphEdge& e : g.edges)
    {
        out += "  n" + std::to_string(e.from) + " -> n" + std::to_string(e.to);
        if (e.kind == "credit") { out += " [style=dashed]"; }
        out += ";\n";
    }
    out += "}\n";
    return out;
}

} // namespace wavec
