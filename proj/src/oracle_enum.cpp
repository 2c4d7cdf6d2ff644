// Bounded enumeration of every final shared state a legal pipelined execution
// can produce. The model: each thread's straight-line body becomes a list of
// schedulable units (one shared access each, plus the local math glued to it);
// a DFS assigns units to rounds subject to the same rules the scheduler and
// runtime enforce — program order within a thread, strictly increasing rounds
// per unit across threads, storage dependencies, one write port per array,
// region credits and single-cycle region access groups. Reads sample the state
// at round start; writes commit at round end. Richer control flow (loops,
// waits, nested dispatch) reports BoundsExceeded rather than guessing.
#include "wavec/oracle.hpp"
#include "wavec/eval.hpp"

#include <algorithm>
#include <cassert>
#include <set>
#include <tuple>

namespace wavec
{

namespace
{

struct Ins
{
    enum K
    {
        Eval, // slots[dst] = e        (guarded by pred)
        Rd,   // slots[dst] = var[idx] (always runs; reads are benign)
        Wr,   // var[idx] = e          (commit guarded by pred)
    };

    K k = Eval;
    int dst = -1;
    EExpr e;
    ETypeP ty; // Rd result type (zero of it on an out-of-range read)
    std::string var;
    bool hasIdx = false;
    EExpr idxE;
    int pred = -1;
};

struct Unit
{
    enum A
    {
        Pure,        // local computation only
        Read,        // one shared read
        Write,       // one shared write
        RegionEval,  // all of a region's reads + math, writes held back
        RegionCommit // the held-back writes land
    };

    A access = Pure;
    std::vector<Ins> ins;
    int regionSite = -1;
    int regionN = 1;
    // Static access lists (any predicate) for port and dependency legality.
    std::vector<std::pair<std::string, bool>> reads;  // (var, isArray)
    std::vector<std::pair<std::string, bool>> writes; // (var, isArray)
};

struct PendW
{
    std::string var;
    bool hasIdx = false;
    int64_t idx = 0;
    Value val;

    bool operator<(const PendW& o) const
    {
        return std::tie(var, hasIdx, idx, val) < std::tie(o.var, o.hasIdx, o.idx, o.val);
    }
};

struct State
{
    std::vector<int> ip;                   // next unit per thread
    std::vector<std::vector<Value>> slots; // per-thread locals
    std::vector<std::vector<PendW>> pend;  // per-thread uncommitted region writes
    SharedState shared;

    bool operator<(const State& o) const
    {
        return std::tie(ip, slots, pend, shared) < std::tie(o.ip, o.slots, o.pend, o.shared);
    }
};

struct Commit
{
    std::string var;
    bool hasIdx = false;
    int64_t idx = 0;
    Value val;
};

EExpr mkLocal(int slot, ETypeP t)
{
    EExpr e;
    e.kind = EExpr::Local;
    e.slot = slot;
    e.type = std::move(t);
    return e;
}

EExpr mkNot(EExpr a)
{
    EExpr e;
    e.kind = EExpr::Un;
    e.op = "!";
    e.type = tBool();
    e.kids.push_back(std::move(a));
    return e;
}

EExpr mkAnd(EExpr a, EExpr b)
{
    EExpr e;
    e.kind = EExpr::Bin;
    e.op = "&&";
    e.type = tBool();
    e.kids.push_back(std::move(a));
    e.kids.push_back(std::move(b));
    return e;
}

// Compiles one thread body into units and owns the extra temp slots.
class BodyCompiler
{
public:
    BodyCompiler(const ElabProgram& prog, const EFn& fn) : prog_(prog), fn_(fn) {}

    void run()
    {
        compileStmts(fn_.body, -1, nullptr);
        flushLeading();
    }

    std::vector<Unit> units;
    std::vector<ETypeP> tempTypes; // appended after fn slot types

private:
    const ElabProgram& prog_;
    const EFn& fn_;
    std::vector<Ins> leading_; // pure instructions before the first access

    [[noreturn]] static void outOfBounds(const EStmt& s)
    {
        fail("BoundsExceeded",
             "execution enumeration only models straight-line dispatched bodies", s.loc);
    }

    int newTemp(ETypeP t)
    {
        tempTypes.push_back(std::move(t));
        return static_cast<int>(fn_.slotTypes.size() + tempTypes.size() - 1);
    }

    bool isArrayVar(const std::string& name) const
    {
        const int i = prog_.sharedIndex(name);
        assert(i >= 0);
        return prog_.shared[i].type->kind == EType::Array;
    }

    void flushLeading()
    {
        if (leading_.empty())
        {
            return;
        }
        Unit u;
        u.access = Unit::Pure;
        u.ins = std::move(leading_);
        leading_.clear();
        units.push_back(std::move(u));
    }

    void appendEval(Ins i, std::vector<Ins>* regionIns)
    {
        if (regionIns != nullptr)
        {
            regionIns->push_back(std::move(i));
        }
        else if (!units.empty())
        {
            units.back().ins.push_back(std::move(i));
        }
        else
        {
            leading_.push_back(std::move(i));
        }
    }

    void appendAccess(Unit::A acc, Ins i, std::vector<Ins>* regionIns)
    {
        const std::pair<std::string, bool> touch{i.var, isArrayVar(i.var)};
        if (regionIns != nullptr)
        {
            regionIns->push_back(std::move(i));
            return;
        }
        Unit u;
        u.access = acc;
        u.ins = std::move(leading_);
        leading_.clear();
        if (acc == Unit::Read)
        {
            u.reads.push_back(touch);
        }
        else
        {
            u.writes.push_back(touch);
        }
        u.ins.push_back(std::move(i));
        units.push_back(std::move(u));
    }

    // Replaces every shared read inside e with a fresh temp fed by a Rd
    // instruction, leaving a pure expression.
    EExpr hoist(const EExpr& e, std::vector<Ins>* regionIns)
    {
        if (e.kind == EExpr::SharedRead)
        {
            Ins r;
            r.k = Ins::Rd;
            r.var = e.var;
            r.ty = e.type;
            if (!e.kids.empty())
            {
                r.hasIdx = true;
                r.idxE = hoist(e.kids[0], regionIns);
            }
            r.dst = newTemp(e.type);
            const ETypeP t = e.type;
            const int slot = r.dst;
            appendAccess(Unit::Read, std::move(r), regionIns);
            return mkLocal(slot, t);
        }
        EExpr out = e;
        for (EExpr& k : out.kids)
        {
            k = hoist(k, regionIns);
        }
        return out;
    }

    void compileStmts(const std::vector<EStmt>& body, int pred, std::vector<Ins>* regionIns)
    {
        for (const EStmt& s : body)
        {
            compileStmt(s, pred, regionIns);
        }
    }

    void compileStmt(const EStmt& s, int pred, std::vector<Ins>* regionIns)
    {
        switch (s.kind)
        {
        case EStmt::Let:
        {
            Ins i;
            i.k = Ins::Eval;
            i.dst = s.slot;
            i.e = hoist(s.a, regionIns);
            i.pred = pred;
            appendEval(std::move(i), regionIns);
            return;
        }
        case EStmt::SharedWrite:
        {
            Ins i;
            i.k = Ins::Wr;
            i.var = s.var;
            if (s.hasIdx)
            {
                i.hasIdx = true;
                i.idxE = hoist(s.idx, regionIns);
            }
            i.e = hoist(s.a, regionIns);
            i.pred = pred;
            appendAccess(Unit::Write, std::move(i), regionIns);
            return;
        }
        case EStmt::If:
        {
            const EExpr c = hoist(s.a, regionIns);
            const int pt = newTemp(tBool());
            const int pe = newTemp(tBool());
            Ins mk;
            mk.k = Ins::Eval;
            mk.dst = pt;
            mk.e = pred < 0 ? c : mkAnd(mkLocal(pred, tBool()), c);
            appendEval(std::move(mk), regionIns);
            Ins mke;
            mke.k = Ins::Eval;
            mke.dst = pe;
            mke.e = pred < 0 ? mkNot(c) : mkAnd(mkLocal(pred, tBool()), mkNot(c));
            appendEval(std::move(mke), regionIns);
            for (const EStmt& b : s.body)
            {
                if (b.kind == EStmt::Region)
                {
                    outOfBounds(b); // predicated regions exceed the bounded model
                }
            }
            for (const EStmt& b : s.els)
            {
                if (b.kind == EStmt::Region)
                {
                    outOfBounds(b);
                }
            }
            compileStmts(s.body, pt, regionIns);
            compileStmts(s.els, pe, regionIns);
            return;
        }
        case EStmt::Region:
        {
            if (regionIns != nullptr)
            {
                outOfBounds(s); // nested regions
            }
            flushLeading();
            Unit ev;
            ev.access = Unit::RegionEval;
            ev.regionN = std::max(1, s.regionN);
            std::vector<Ins> inner;
            compileStmts(s.body, -1, &inner);
            for (const Ins& i : inner)
            {
                if (i.k == Ins::Rd)
                {
                    ev.reads.emplace_back(i.var, isArrayVar(i.var));
                }
            }
            Unit cm;
            cm.access = Unit::RegionCommit;
            cm.regionN = ev.regionN;
            for (const Ins& i : inner)
            {
                if (i.k == Ins::Wr)
                {
                    cm.writes.emplace_back(i.var, isArrayVar(i.var));
                }
            }
            ev.ins = std::move(inner);
            ev.regionSite = static_cast<int>(units.size());
            cm.regionSite = ev.regionSite;
            units.push_back(std::move(ev));
            units.push_back(std::move(cm));
            return;
        }
        case EStmt::Return:
            if (!s.hasRet)
            {
                return; // tail of a void body
            }
            outOfBounds(s);
        case EStmt::For:
        case EStmt::DoWhile:
        case EStmt::WaitFor:
        case EStmt::BatchedCall:
        case EStmt::DoCall:
        case EStmt::AsyncCall:
        case EStmt::NormCall:
            outOfBounds(s);
        }
    }
};

class Enumerator
{
public:
    Enumerator(const ElabProgram& prog, const SharedState& inputs, const EnumBounds& bounds)
        : prog_(prog), bounds_(bounds)
    {
        for (const ESharedVar& v : prog.shared)
        {
            auto it = inputs.find(v.name);
            shared0_[v.name] = it != inputs.end() ? it->second : v.init;
        }
    }

    std::set<SharedState> run()
    {
        const EFn& entry = prog_.fns[prog_.entry];
        const EStmt* call = findDispatch(entry);
        if (call == nullptr)
        {
            // No concurrency anywhere: the single serialized execution is the
            // whole set.
            std::set<SharedState> one;
            one.insert(interpretSerialized(prog_, shared0_));
            return one;
        }

        // Evaluate the batch count and captures in the entry's local frame.
        std::vector<Value> eslots(entry.slotTypes.size());
        for (size_t i = 0; i < eslots.size(); ++i)
        {
            eslots[i] = zeroOf(*entry.slotTypes[i]);
        }
        for (const EStmt& s : entry.body)
        {
            if (s.kind == EStmt::Let)
            {
                eslots[s.slot] = evalIn(s.a, eslots, shared0_);
            }
        }
        const int64_t n = evalIn(call->count, eslots, shared0_).i;
        if (n > bounds_.maxThreads)
        {
            fail("BoundsExceeded", "thread count " + std::to_string(n) +
                                       " exceeds the enumeration bound of " +
                                       std::to_string(bounds_.maxThreads),
                 call->loc);
        }
        std::set<SharedState> results;
        if (n <= 0)
        {
            results.insert(shared0_);
            return results;
        }

        const EFn& callee = prog_.fns[call->callee];
        BodyCompiler bc(prog_, callee);
        bc.run();
        units_ = std::move(bc.units);

        std::vector<Value> caps;
        for (const EExpr& a : call->args)
        {
            caps.push_back(evalIn(a, eslots, shared0_));
        }

        State st;
        st.ip.assign(n, 0);
        st.pend.resize(n);
        st.shared = shared0_;
        const EType& it = *callee.slotTypes[callee.paramSlots[0]];
        for (int64_t t = 0; t < n; ++t)
        {
            std::vector<Value> slots(callee.slotTypes.size() + bc.tempTypes.size());
            for (size_t i = 0; i < callee.slotTypes.size(); ++i)
            {
                slots[i] = zeroOf(*callee.slotTypes[i]);
            }
            for (size_t i = 0; i < bc.tempTypes.size(); ++i)
            {
                slots[callee.slotTypes.size() + i] = zeroOf(*bc.tempTypes[i]);
            }
            slots[callee.paramSlots[0]] = Value::ofInt(wrapInt(t, it.bits(), it.isSigned));
            for (size_t i = 0; i + 1 < callee.paramSlots.size(); ++i)
            {
                slots[callee.paramSlots[i + 1]] = caps[i];
            }
            st.slots.push_back(std::move(slots));
        }

        dfs(st, 0);
        return results_;
    }

private:
    const ElabProgram& prog_;
    const EnumBounds& bounds_;
    SharedState shared0_;
    std::vector<Unit> units_;
    std::set<State> visited_;
    std::set<SharedState> results_;

    // Locates the single dispatch site (entry must be lets + one pipelined_for
    // call); null means the program has no concurrency at all.
    const EStmt* findDispatch(const EFn& entry) const
    {
        bool anyCall = false;
        forEachStmt(entry.body, [&](const EStmt& s) {
            if (s.kind == EStmt::BatchedCall || s.kind == EStmt::DoCall ||
                s.kind == EStmt::AsyncCall || s.kind == EStmt::NormCall ||
                s.kind == EStmt::WaitFor)
            {
                anyCall = true;
            }
        });
        if (!anyCall)
        {
            return nullptr;
        }
        const EStmt* call = nullptr;
        for (const EStmt& s : entry.body)
        {
            if (s.kind == EStmt::Let || (s.kind == EStmt::Return && !s.hasRet))
            {
                continue;
            }
            if (s.kind == EStmt::BatchedCall && call == nullptr)
            {
                call = &s;
                continue;
            }
            fail("BoundsExceeded",
                 "execution enumeration models one batched dispatch from a "
                 "straight-line entry",
                 s.loc);
        }
        if (call == nullptr)
        {
            fail("BoundsExceeded",
                 "execution enumeration models one batched dispatch from a "
                 "straight-line entry",
                 entry.body.empty() ? SrcLoc{} : entry.body.front().loc);
        }
        return call;
    }

    // Pure or shared-reading expression evaluation against explicit storage.
    static Value evalIn(const EExpr& e, const std::vector<Value>& slots, const SharedState& sh)
    {
        switch (e.kind)
        {
        case EExpr::Const:
            return e.cval;
        case EExpr::Local:
            return slots[e.slot];
        case EExpr::SharedRead:
        {
            const Value& v = sh.at(e.var);
            if (e.kids.empty())
            {
                return v;
            }
            const int64_t ix = evalIn(e.kids[0], slots, sh).i;
            if (ix < 0 || ix >= static_cast<int64_t>(v.elems.size()))
            {
                return zeroOf(*e.type);
            }
            return v.elems[ix];
        }
        case EExpr::Un:
            return evalUnOp(e.op, evalIn(e.kids[0], slots, sh), *e.type);
        case EExpr::Bin:
        {
            const Value a = evalIn(e.kids[0], slots, sh);
            const Value b = evalIn(e.kids[1], slots, sh);
            return evalBinOp(e.op, a, b, *e.kids[0].type, *e.type);
        }
        case EExpr::Sel:
        {
            const Value c = evalIn(e.kids[0], slots, sh);
            const Value a = evalIn(e.kids[1], slots, sh);
            const Value b = evalIn(e.kids[2], slots, sh);
            return c.i != 0 ? a : b;
        }
        }
        fail("InternalError", "unreachable expression kind", e.loc);
    }

    // How many consecutive units thread t may legally execute in one round,
    // considering program order, the wavefront rule against the thread ahead,
    // and within-round storage/port dependencies.
    std::vector<int> legalRuns(const State& st, int t) const
    {
        std::vector<int> ks{0};
        std::set<std::string> written;
        std::set<std::string> readArr;
        const int total = static_cast<int>(units_.size());
        for (int k = 1;; ++k)
        {
            const int u = st.ip[t] + k - 1;
            if (u >= total)
            {
                break;
            }
            if (t > 0 && st.ip[t - 1] <= u)
            {
                break; // the thread ahead has not cleared this unit yet
            }
            const Unit& un = units_[u];
            bool ok = true;
            for (const auto& [var, isArr] : un.reads)
            {
                if (written.count(var) != 0 || (isArr && readArr.count(var) != 0))
                {
                    ok = false;
                }
            }
            for (const auto& [var, isArr] : un.writes)
            {
                (void)isArr;
                if (written.count(var) != 0)
                {
                    ok = false;
                }
            }
            if (!ok)
            {
                break;
            }
            for (const auto& [var, isArr] : un.reads)
            {
                if (isArr)
                {
                    readArr.insert(var);
                }
            }
            for (const auto& [var, isArr] : un.writes)
            {
                (void)isArr;
                written.insert(var);
            }
            ks.push_back(k);
        }
        return ks;
    }

    static bool predOn(const Ins& i, const std::vector<Value>& slots)
    {
        return i.pred < 0 || slots[i.pred].i != 0;
    }

    // Runs thread t's chosen units against the round-start state, buffering
    // commits. Returns false if the round is illegal (array write port reuse).
    bool execThread(State& ns, const SharedState& pre, int t, int k,
                    std::vector<Commit>& commits, std::set<std::string>& arrPort) const
    {
        std::vector<Value>& slots = ns.slots[t];
        for (int j = 0; j < k; ++j)
        {
            const Unit& un = units_[ns.ip[t] + j];
            for (const auto& [var, isArr] : un.writes)
            {
                if (isArr && !arrPort.insert(var).second)
                {
                    return false; // one write port per array per cycle
                }
            }
            if (un.access == Unit::RegionCommit)
            {
                for (const PendW& p : ns.pend[t])
                {
                    commits.push_back({p.var, p.hasIdx, p.idx, p.val});
                }
                ns.pend[t].clear();
                continue;
            }
            const bool inRegion = un.access == Unit::RegionEval;
            for (const Ins& i : un.ins)
            {
                switch (i.k)
                {
                case Ins::Eval:
                    if (predOn(i, slots))
                    {
                        slots[i.dst] = evalIn(i.e, slots, pre);
                    }
                    break;
                case Ins::Rd:
                {
                    const Value* fwd = nullptr;
                    int64_t ix = 0;
                    if (i.hasIdx)
                    {
                        ix = evalIn(i.idxE, slots, pre).i;
                    }
                    if (inRegion)
                    {
                        // A region reads its own pending writes (forwarding).
                        for (const PendW& p : ns.pend[t])
                        {
                            if (p.var == i.var && p.hasIdx == i.hasIdx && p.idx == ix)
                            {
                                fwd = &p.val;
                            }
                        }
                    }
                    if (fwd != nullptr)
                    {
                        slots[i.dst] = *fwd;
                        break;
                    }
                    const Value& v = pre.at(i.var);
                    if (!i.hasIdx)
                    {
                        slots[i.dst] = v;
                    }
                    else if (ix < 0 || ix >= static_cast<int64_t>(v.elems.size()))
                    {
                        slots[i.dst] = zeroOf(*i.ty);
                    }
                    else
                    {
                        slots[i.dst] = v.elems[ix];
                    }
                    break;
                }
                case Ins::Wr:
                {
                    if (!predOn(i, slots))
                    {
                        break;
                    }
                    Commit c;
                    c.var = i.var;
                    c.hasIdx = i.hasIdx;
                    if (i.hasIdx)
                    {
                        c.idx = evalIn(i.idxE, slots, pre).i;
                    }
                    c.val = evalIn(i.e, slots, pre);
                    if (inRegion)
                    {
                        // Coalesce with an earlier pending write to the slot.
                        bool merged = false;
                        for (PendW& p : ns.pend[t])
                        {
                            if (p.var == c.var && p.hasIdx == c.hasIdx && p.idx == c.idx)
                            {
                                p.val = c.val;
                                merged = true;
                            }
                        }
                        if (!merged)
                        {
                            ns.pend[t].push_back({c.var, c.hasIdx, c.idx, c.val});
                        }
                    }
                    else
                    {
                        commits.push_back(std::move(c));
                    }
                    break;
                }
                }
            }
        }
        ns.ip[t] += k;
        return true;
    }

    void dfs(const State& st, int depth)
    {
        if (depth > bounds_.maxCycles)
        {
            fail("BoundsExceeded", "enumeration exceeded the round budget");
        }
        if (!visited_.insert(st).second)
        {
            return;
        }
        if (static_cast<int>(visited_.size()) > bounds_.maxStates)
        {
            fail("BoundsExceeded", "enumeration exceeded the state budget");
        }
        const int nT = static_cast<int>(st.ip.size());
        const int total = static_cast<int>(units_.size());
        bool done = true;
        for (int t = 0; t < nT; ++t)
        {
            if (st.ip[t] < total)
            {
                done = false;
            }
        }
        if (done)
        {
            results_.insert(st.shared);
            return;
        }

        std::vector<std::vector<int>> choices(nT);
        for (int t = 0; t < nT; ++t)
        {
            choices[t] = legalRuns(st, t);
        }

        std::vector<int> k(nT, 0);
        enumerate(st, choices, k, 0, depth);
    }

    void enumerate(const State& st, const std::vector<std::vector<int>>& choices,
                   std::vector<int>& k, int t, int depth)
    {
        const int nT = static_cast<int>(st.ip.size());
        if (t == nT)
        {
            bool any = false;
            for (int v : k)
            {
                if (v > 0)
                {
                    any = true;
                }
            }
            if (!any)
            {
                return;
            }
            tryRound(st, k, depth);
            return;
        }
        for (int v : choices[t])
        {
            k[t] = v;
            enumerate(st, choices, k, t + 1, depth);
        }
        k[t] = 0;
    }

    void tryRound(const State& st, const std::vector<int>& k, int depth)
    {
        const int nT = static_cast<int>(st.ip.size());
        // Region credits: threads already inside plus threads entering this
        // round must not exceed the region's width.
        for (size_t u = 0; u < units_.size(); ++u)
        {
            if (units_[u].access != Unit::RegionEval)
            {
                continue;
            }
            const int evalIdx = static_cast<int>(u);
            int inside = 0;
            int entering = 0;
            for (int t = 0; t < nT; ++t)
            {
                if (st.ip[t] == evalIdx + 1)
                {
                    ++inside;
                }
                if (st.ip[t] <= evalIdx && evalIdx < st.ip[t] + k[t])
                {
                    ++entering;
                }
            }
            if (inside + entering > units_[u].regionN)
            {
                return;
            }
        }

        State ns = st;
        const SharedState pre = st.shared;
        std::vector<Commit> commits;
        std::set<std::string> arrPort;
        for (int t = 0; t < nT; ++t)
        {
            if (k[t] > 0 && !execThread(ns, pre, t, k[t], commits, arrPort))
            {
                return;
            }
        }

        // Two commits to one location in a single cycle would be a runtime
        // write-conflict error, not a final state.
        std::set<std::pair<std::string, int64_t>> where;
        for (const Commit& c : commits)
        {
            if (!where.insert({c.var, c.hasIdx ? c.idx : -1}).second)
            {
                return;
            }
        }
        for (const Commit& c : commits)
        {
            Value& v = ns.shared.at(c.var);
            if (!c.hasIdx)
            {
                v = c.val;
                continue;
            }
            if (c.idx < 0 || c.idx >= static_cast<int64_t>(v.elems.size()))
            {
                fail("OutOfBounds", "write to '" + c.var + "' at index " + std::to_string(c.idx));
            }
            v.elems[c.idx] = c.val;
        }
        dfs(ns, depth + 1);
    }
};

} // namespace

std::set<SharedState> enumerateExecutions(const ElabProgram& prog, const SharedState& inputs,
                                          const EnumBounds& bounds)
{
    Enumerator e(prog, inputs, bounds);
    return e.run();
}

} // namespace wavec
