// Serialized reference interpreter: threads run one at a time to completion,
// in dispatch order. Trivially satisfies the ordering rules, so its result is
// always a member of the valid-execution set.
#include "wavec/oracle.hpp"
#include "wavec/eval.hpp"

#include <cassert>

namespace wavec
{

namespace
{

class Machine
{
public:
    Machine(const ElabProgram& prog, const SharedState& inputs) : prog_(prog)
    {
        for (const ESharedVar& v : prog.shared)
        {
            auto it = inputs.find(v.name);
            if (it != inputs.end())
            {
                checkInputShape(v, it->second);
                shared_[v.name] = it->second;
            }
            else
            {
                shared_[v.name] = v.init;
            }
        }
    }

    SharedState run()
    {
        const EFn& entry = prog_.fns[prog_.entry];
        std::vector<Value> args;
        callFn(entry, args);
        return shared_;
    }

private:
    const ElabProgram& prog_;
    SharedState shared_;
    int64_t steps_ = 0;

    static void checkInputShape(const ESharedVar& v, const Value& in)
    {
        if (v.type->kind == EType::Array)
        {
            if (in.kind != Value::A ||
                static_cast<int64_t>(in.elems.size()) != v.type->len)
            {
                fail("InputError", "input '" + v.name + "' does not match " + v.type->str());
            }
            return;
        }
        if (in.kind == Value::A)
        {
            fail("InputError", "input '" + v.name + "' does not match " + v.type->str());
        }
    }

    void tick(SrcLoc loc)
    {
        if (++steps_ > 200000000)
        {
            fail("StepLimit", "serialized interpretation exceeded the step budget", loc);
        }
    }

    Value callFn(const EFn& f, const std::vector<Value>& args)
    {
        assert(args.size() == f.paramSlots.size());
        std::vector<Value> slots(f.slotTypes.size());
        for (size_t i = 0; i < f.slotTypes.size(); ++i)
        {
            slots[i] = zeroOf(*f.slotTypes[i]);
        }
        for (size_t i = 0; i < args.size(); ++i)
        {
            slots[f.paramSlots[i]] = args[i];
        }
        Value ret = Value::ofInt(0);
        execStmts(f.body, slots, ret);
        return ret;
    }

    void execStmts(const std::vector<EStmt>& body, std::vector<Value>& slots, Value& ret)
    {
        for (const EStmt& s : body)
        {
            exec(s, slots, ret);
        }
    }

    void exec(const EStmt& s, std::vector<Value>& slots, Value& ret)
    {
        tick(s.loc);
        switch (s.kind)
        {
        case EStmt::Let:
            slots[s.slot] = eval(s.a, slots);
            return;
        case EStmt::SharedWrite:
        {
            Value v = eval(s.a, slots);
            if (s.hasIdx)
            {
                const int64_t ix = eval(s.idx, slots).i;
                Value& arr = shared_.at(s.var);
                if (ix < 0 || ix >= static_cast<int64_t>(arr.elems.size()))
                {
                    fail("OutOfBounds", "write to '" + s.var + "' at index " +
                                            std::to_string(ix),
                         s.loc);
                }
                arr.elems[ix] = v;
            }
            else
            {
                shared_.at(s.var) = v;
            }
            return;
        }
        case EStmt::If:
            if (eval(s.a, slots).i != 0)
            {
                execStmts(s.body, slots, ret);
            }
            else
            {
                execStmts(s.els, slots, ret);
            }
            return;
        case EStmt::For:
        {
            const int64_t n = eval(s.a, slots).i;
            for (int64_t i = 0; i < n; ++i)
            {
                tick(s.loc);
                slots[s.slot] = Value::ofInt(i);
                execStmts(s.body, slots, ret);
            }
            return;
        }
        case EStmt::DoWhile:
            do
            {
                tick(s.loc);
                execStmts(s.body, slots, ret);
            } while (eval(s.a, slots).i != 0);
            return;
        case EStmt::WaitFor:
        {
            // Running alone: evaluate once; a false outcome can never change.
            execStmts(s.body, slots, ret);
            if (eval(s.a, slots).i == 0)
            {
                fail("SerializedDeadlock",
                     "wait can never pass in a serialized execution", s.loc);
            }
            return;
        }
        case EStmt::Region:
            execStmts(s.body, slots, ret);
            return;
        case EStmt::BatchedCall:
        {
            const int64_t n = eval(s.count, slots).i;
            const EFn& callee = prog_.fns[s.callee];
            std::vector<Value> caps;
            for (const EExpr& a : s.args)
            {
                caps.push_back(eval(a, slots));
            }
            const EType& it = *callee.slotTypes[callee.paramSlots[0]];
            for (int64_t i = 0; i < n; ++i)
            {
                std::vector<Value> args;
                args.push_back(Value::ofInt(wrapInt(i, it.bits(), it.isSigned)));
                args.insert(args.end(), caps.begin(), caps.end());
                callFn(callee, args);
            }
            return;
        }
        case EStmt::DoCall:
        {
            const EFn& callee = prog_.fns[s.callee];
            std::vector<Value> caps;
            for (const EExpr& a : s.args)
            {
                caps.push_back(eval(a, slots));
            }
            const EType& it = *callee.slotTypes[callee.paramSlots[0]];
            for (int64_t i = 0;; ++i)
            {
                tick(s.loc);
                std::vector<Value> args;
                args.push_back(Value::ofInt(wrapInt(i, it.bits(), it.isSigned)));
                args.insert(args.end(), caps.begin(), caps.end());
                const Value more = callFn(callee, args);
                if (more.i == 0)
                {
                    break;
                }
            }
            return;
        }
        case EStmt::AsyncCall:
        case EStmt::NormCall:
        {
            const EFn& callee = prog_.fns[s.callee];
            std::vector<Value> args;
            for (const EExpr& a : s.args)
            {
                args.push_back(eval(a, slots));
            }
            const Value r = callFn(callee, args);
            if (s.kind == EStmt::NormCall && s.slot >= 0)
            {
                slots[s.slot] = r;
            }
            return;
        }
        case EStmt::Return:
            if (s.hasRet)
            {
                ret = eval(s.a, slots);
            }
            return;
        }
    }

    Value eval(const EExpr& e, std::vector<Value>& slots)
    {
        switch (e.kind)
        {
        case EExpr::Const:
            return e.cval;
        case EExpr::Local:
            return slots[e.slot];
        case EExpr::SharedRead:
        {
            const Value& v = shared_.at(e.var);
            if (e.kids.empty())
            {
                return v;
            }
            // Reads past the end yield zero (gated read-enable); speculative
            // and predicated-off accesses rely on this being benign.
            const int64_t ix = eval(e.kids[0], slots).i;
            if (ix < 0 || ix >= static_cast<int64_t>(v.elems.size()))
            {
                return zeroOf(*e.type);
            }
            return v.elems[ix];
        }
        case EExpr::Un:
            return evalUnOp(e.op, eval(e.kids[0], slots), *e.type);
        case EExpr::Bin:
        {
            const Value a = eval(e.kids[0], slots);
            const Value b = eval(e.kids[1], slots);
            return evalBinOp(e.op, a, b, *e.kids[0].type, *e.type);
        }
        case EExpr::Sel:
        {
            // Both arms are computed (mux semantics), then one is selected.
            const Value c = eval(e.kids[0], slots);
            const Value a = eval(e.kids[1], slots);
            const Value b = eval(e.kids[2], slots);
            return c.i != 0 ? a : b;
        }
        }
        fail("InternalError", "unreachable expression kind", e.loc);
    }
};

} // namespace

SharedState interpretSerialized(const ElabProgram& prog, const SharedState& inputs)
{
    Machine m(prog, inputs);
    return m.run();
}

SharedState interpretSequential(const ElabProgram& prog, const SharedState& inputs)
{
    return interpretSerialized(prog, inputs);
}

} // namespace wavec
