// Elaboration: name resolution, type checking, monomorphization of templates,
// static-for unrolling, static-if resolution, inlining of `inline` functions
// and directly-invoked lambdas, closure rewriting (captures become trailing
// parameters of batched bodies), static-local hoisting, and flattening of
// local aggregates into scalar slots.
#include "wavec/elab.hpp"
#include "wavec/eval.hpp"

#include <cassert>
#include <deque>
#include <memory>
#include <set>
#include <sstream>

namespace wavec
{

int ElabProgram::sharedIndex(const std::string& name) const
{
    for (size_t i = 0; i < shared.size(); ++i)
    {
        if (shared[i].name == name)
        {
            return static_cast<int>(i);
        }
    }
    return -1;
}

void forEachStmt(const std::vector<EStmt>& body, const std::function<void(const EStmt&)>& f)
{
    for (const EStmt& s : body)
    {
        f(s);
        forEachStmt(s.body, f);
        forEachStmt(s.els, f);
    }
}

namespace
{

bool intTypeName(const std::string& s, int* width, bool* isSigned)
{
    size_t k = 0;
    bool sgn = true;
    if (s.compare(0, 4, "uint") == 0)
    {
        sgn = false;
        k = 4;
    }
    else if (s.compare(0, 3, "int") == 0)
    {
        k = 3;
    }
    else
    {
        return false;
    }
    if (k >= s.size())
    {
        return false;
    }
    int w = 0;
    for (; k < s.size(); ++k)
    {
        if (s[k] < '0' || s[k] > '9')
        {
            return false;
        }
        w = w * 10 + (s[k] - '0');
        if (w > 64)
        {
            return false;
        }
    }
    if (w < 1)
    {
        return false;
    }
    *width = w;
    *isSigned = sgn;
    return true;
}

// Flattened local variable: one slot per scalar element.
struct Shape
{
    ETypeP type;
    std::vector<int> slots;
    bool isConst = false;
};

struct Closure;
using ClosureP = std::shared_ptr<Closure>;

struct Binding
{
    enum K
    {
        None,
        LocalVal,
        SharedV,
        ConstVal,
        TypeAlias,
        FnRef,    // module-level named function
        ClosureV, // lambda or nested function + captured environment
    };

    K kind = None;
    Shape shape;        // LocalVal
    std::string shared; // SharedV (mangled name)
    Value cv;           // ConstVal
    ETypeP ctype;
    bool cflex = false;
    ETypeP alias;               // TypeAlias
    const FnDecl* fn = nullptr; // FnRef
    ClosureP clos;              // ClosureV
};

using Env = std::map<std::string, Binding>;

struct Closure
{
    const Expr* lam = nullptr;     // lambda form
    const FnDecl* decl = nullptr;  // nested-function form
    Env statics;                   // compile-time entities visible at creation
    std::vector<std::pair<std::string, Shape>> valueCaps; // by-value captures
    std::vector<ETypeP> paramTypes;                       // resolved at creation
    EFn* creator = nullptr;        // function whose slots valueCaps refer to
    std::string debugName;
};

struct RVal
{
    enum K
    {
        None, // void
        Scalar,
        Agg,       // flattened local aggregate
        SharedArr, // shared array referenced by name (index pending)
        Fn,
    };

    K k = None;
    EExpr e;     // Scalar
    Shape shape; // Agg
    std::string var;
    ETypeP varType; // SharedArr
    Binding fnb;    // Fn
};

struct LV
{
    enum K
    {
        LSlot,
        LShared,
    };

    K k = LSlot;
    int slot = -1;
    ETypeP type;
    std::string var;
    bool hasIdx = false;
    EExpr idx;
    SrcLoc loc;
};

class Elaborator
{
public:
    Elaborator(const Module& m, const ConstBindings& consts, std::string entryName)
        : mod_(m), consts_(consts), entryName_(std::move(entryName))
    {
    }

    ElabProgram run();

private:
    struct ScopeLevel
    {
        Env env;
        bool barrier = false;
    };

    struct InlineCtx
    {
        ETypeP declRet; // null: deduce; Void kind: none expected
        int condDepthAtEntry = 0;
        int loopDepthAtEntry = 0;
        bool returned = false;
        RVal result;
        std::string what;
    };

    // RAII for entering a function body (instantiation may happen
    // mid-expression of the enclosing function).
    struct FnFrame
    {
        Elaborator& E;
        EFn* savedFn;
        std::vector<EStmt>* savedBuf;
        size_t savedScopes;
        size_t savedInline;
        size_t savedInlineBase;
        int savedCond, savedRegion, savedLoop, savedWait;

        FnFrame(Elaborator& e, EFn* fn)
            : E(e), savedFn(e.curFn_), savedBuf(e.buf_), savedScopes(e.scopes_.size()),
              savedInline(e.inlineStack_.size()), savedInlineBase(e.inlineBase_),
              savedCond(e.condDepth_), savedRegion(e.regionDepth_),
              savedLoop(e.loopDepth_), savedWait(e.waitDepth_)
        {
            E.curFn_ = fn;
            E.buf_ = &fn->body;
            E.inlineBase_ = E.inlineStack_.size();
            E.condDepth_ = E.regionDepth_ = E.loopDepth_ = E.waitDepth_ = 0;
        }

        ~FnFrame()
        {
            E.curFn_ = savedFn;
            E.buf_ = savedBuf;
            E.scopes_.resize(savedScopes);
            E.inlineStack_.resize(savedInline);
            E.inlineBase_ = savedInlineBase;
            E.condDepth_ = savedCond;
            E.regionDepth_ = savedRegion;
            E.loopDepth_ = savedLoop;
            E.waitDepth_ = savedWait;
        }
    };

    const Module& mod_;
    ConstBindings consts_;
    std::string entryName_;

    std::vector<ESharedVar> shared_;
    std::map<std::string, int> sharedIdx_;
    std::vector<std::unique_ptr<EFn>> built_;
    std::map<std::string, int> fnMemo_;
    std::set<std::string> fnInProgress_;

    Env moduleEnv_;
    std::vector<ScopeLevel> scopes_;
    std::deque<InlineCtx> inlineStack_; // deque: element references survive growth

    EFn* curFn_ = nullptr;
    std::vector<EStmt>* buf_ = nullptr;
    size_t inlineBase_ = 0;
    int instDepth_ = 0;
    int condDepth_ = 0;
    int regionDepth_ = 0;
    int loopDepth_ = 0;
    int waitDepth_ = 0;
    int lambdaCounter_ = 0;
    int staticCounter_ = 0;

    // ---- scopes -----------------------------------------------------------

    void pushScope(bool barrier = false, const Env* seed = nullptr)
    {
        ScopeLevel l;
        l.barrier = barrier;
        if (seed != nullptr)
        {
            l.env = *seed;
        }
        scopes_.push_back(std::move(l));
    }

    const Binding* lookup(const std::string& name)
    {
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
        {
            auto f = it->env.find(name);
            if (f != it->env.end())
            {
                return &f->second;
            }
            if (it->barrier)
            {
                break;
            }
        }
        auto f = moduleEnv_.find(name);
        if (f != moduleEnv_.end())
        {
            return &f->second;
        }
        auto c = consts_.find(name);
        if (c != consts_.end())
        {
            Binding b;
            b.kind = Binding::ConstVal;
            b.cv = Value::ofInt(wrapInt(c->second, 32, false));
            b.ctype = tInt(32, false);
            b.cflex = true;
            moduleEnv_[name] = b;
            return &moduleEnv_[name];
        }
        return nullptr;
    }

    void bind(const std::string& name, Binding b)
    {
        assert(!scopes_.empty());
        scopes_.back().env[name] = std::move(b);
    }

    // Compile-time entities visible at this point (for closure bodies).
    Env collectStaticEnv()
    {
        Env out;
        for (auto it = scopes_.rbegin(); it != scopes_.rend(); ++it)
        {
            for (const auto& kv : it->env)
            {
                if (out.count(kv.first) != 0)
                {
                    continue;
                }
                if (kv.second.kind != Binding::LocalVal)
                {
                    out[kv.first] = kv.second;
                }
            }
            if (it->barrier)
            {
                break;
            }
        }
        return out;
    }

    // ---- slots ------------------------------------------------------------

    int newSlot(const ETypeP& t, const std::string& name)
    {
        if (curFn_ == nullptr)
        {
            fail("ElabError", "runtime value used at module scope");
        }
        curFn_->slotTypes.push_back(t);
        curFn_->slotNames.push_back(name);
        return static_cast<int>(curFn_->slotTypes.size()) - 1;
    }

    void flattenSlots(const ETypeP& t, const std::string& name, std::vector<int>& out)
    {
        if (t->kind == EType::Array)
        {
            for (int64_t i = 0; i < t->len; ++i)
            {
                flattenSlots(t->elem, name + "[" + std::to_string(i) + "]", out);
            }
            return;
        }
        if (t->kind == EType::Record)
        {
            for (const auto& f : t->fields)
            {
                flattenSlots(f.second, name + "." + f.first, out);
            }
            return;
        }
        out.push_back(newSlot(t, name));
    }

    Shape allocShape(const ETypeP& t, const std::string& name)
    {
        Shape sh;
        sh.type = t;
        flattenSlots(t, name, sh.slots);
        return sh;
    }

    static int64_t slotCount(const EType& t)
    {
        if (t.kind == EType::Array)
        {
            return t.len * slotCount(*t.elem);
        }
        if (t.kind == EType::Record)
        {
            int64_t n = 0;
            for (const auto& f : t.fields)
            {
                n += slotCount(*f.second);
            }
            return n;
        }
        return 1;
    }

    static void flattenTypes(const ETypeP& t, std::vector<ETypeP>& out)
    {
        if (t->kind == EType::Array)
        {
            for (int64_t i = 0; i < t->len; ++i)
            {
                flattenTypes(t->elem, out);
            }
            return;
        }
        if (t->kind == EType::Record)
        {
            for (const auto& f : t->fields)
            {
                flattenTypes(f.second, out);
            }
            return;
        }
        out.push_back(t);
    }

    Shape subIndex(const Shape& sh, int64_t i, SrcLoc loc)
    {
        if (sh.type->kind != EType::Array)
        {
            fail("TypeError", "indexing a non-array value of type " + sh.type->str(), loc);
        }
        if (i < 0 || i >= sh.type->len)
        {
            fail("ElabError", "static index " + std::to_string(i) + " out of bounds for " + sh.type->str(), loc);
        }
        const int64_t per = slotCount(*sh.type->elem);
        Shape out;
        out.type = sh.type->elem;
        out.isConst = sh.isConst;
        out.slots.assign(sh.slots.begin() + i * per, sh.slots.begin() + (i + 1) * per);
        return out;
    }

    Shape subField(const Shape& sh, const std::string& name, SrcLoc loc)
    {
        if (sh.type->kind != EType::Record)
        {
            fail("TypeError", "member access on non-record type " + sh.type->str(), loc);
        }
        int64_t off = 0;
        for (const auto& f : sh.type->fields)
        {
            const int64_t n = slotCount(*f.second);
            if (f.first == name)
            {
                Shape out;
                out.type = f.second;
                out.isConst = sh.isConst;
                out.slots.assign(sh.slots.begin() + off, sh.slots.begin() + off + n);
                return out;
            }
            off += n;
        }
        fail("TypeError", "record " + sh.type->str() + " has no member '" + name + "'", loc);
    }

    // ---- emit helpers ------------------------------------------------------

    void emit(EStmt s)
    {
        buf_->push_back(std::move(s));
    }

    template <typename F>
    std::vector<EStmt> collect(F f)
    {
        std::vector<EStmt> out;
        std::vector<EStmt>* saved = buf_;
        buf_ = &out;
        f();
        buf_ = saved;
        return out;
    }

    EExpr mkConst(Value v, ETypeP t, SrcLoc loc, bool flexible = false)
    {
        EExpr e;
        e.kind = EExpr::Const;
        e.type = std::move(t);
        e.loc = loc;
        e.cval = std::move(v);
        e.flexible = flexible;
        return e;
    }

    EExpr mkLocal(int slot, ETypeP t, SrcLoc loc)
    {
        EExpr e;
        e.kind = EExpr::Local;
        e.type = std::move(t);
        e.loc = loc;
        e.slot = slot;
        return e;
    }

    void emitLet(int slot, EExpr v, SrcLoc loc)
    {
        EStmt s;
        s.kind = EStmt::Let;
        s.loc = loc;
        s.slot = slot;
        s.a = std::move(v);
        emit(std::move(s));
    }

    // ---- types -------------------------------------------------------------

    // Returns null for `auto`.
    ETypeP resolveType(const TypeExpr* t)
    {
        if (t == nullptr)
        {
            return nullptr;
        }
        switch (t->kind)
        {
        case TypeExpr::Named:
        {
            if (t->name == "auto")
            {
                return nullptr;
            }
            if (t->name == "void")
            {
                return tVoid();
            }
            if (t->name == "bool")
            {
                return tBool();
            }
            if (t->name == "float32")
            {
                return tF32();
            }
            int w = 0;
            bool sgn = false;
            if (intTypeName(t->name, &w, &sgn))
            {
                return tInt(w, sgn);
            }
            const Binding* b = lookup(t->name);
            if (b != nullptr && b->kind == Binding::TypeAlias)
            {
                return b->alias;
            }
            fail("TypeError", "unknown type '" + t->name + "'", t->loc);
        }
        case TypeExpr::Array:
        {
            ETypeP elem = resolveType(t->elem.get());
            if (elem == nullptr)
            {
                fail("TypeError", "array element type cannot be auto", t->loc);
            }
            const int64_t n = constEvalInt(*t->size);
            if (n < 0)
            {
                fail("ElabError", "array length must be >= 0", t->loc);
            }
            return tArray(elem, n);
        }
        case TypeExpr::Decltype:
        {
            return typeOfExprTrial(*t->dexpr);
        }
        case TypeExpr::Fn:
            fail("TypeError", "function types are only valid as parameter types", t->loc);
        }
        return nullptr;
    }

    ETypeP typeOfRVal(const RVal& r, SrcLoc loc)
    {
        switch (r.k)
        {
        case RVal::None:
            return tVoid();
        case RVal::Scalar:
            return r.e.type;
        case RVal::Agg:
            return r.shape.type;
        case RVal::SharedArr:
            return r.varType;
        case RVal::Fn:
            fail("TypeError", "function value has no runtime type", loc);
        }
        return tVoid();
    }

    // decltype / deduction support: evaluate in a discard buffer.
    ETypeP typeOfExprTrial(const Expr& e)
    {
        std::vector<EStmt> discard;
        std::vector<EStmt>* saved = buf_;
        buf_ = &discard;
        ETypeP t;
        try
        {
            RVal r = elabExpr(e, nullptr);
            t = typeOfRVal(r, e.loc);
        }
        catch (...)
        {
            buf_ = saved;
            throw;
        }
        buf_ = saved;
        return t;
    }

    static EType unify(const EType& a, const EType& b, SrcLoc loc)
    {
        if (a.kind == EType::Bool && b.kind == EType::Bool)
        {
            return a;
        }
        if (a.kind == EType::F32 && b.kind == EType::F32)
        {
            return a;
        }
        if (a.kind == EType::Int && b.kind == EType::Int)
        {
            if (a.isSigned == b.isSigned)
            {
                return a.width >= b.width ? a : b;
            }
            const EType& s = a.isSigned ? a : b;
            const EType& u = a.isSigned ? b : a;
            if (u.width >= s.width)
            {
                return u;
            }
            return s;
        }
        fail("TypeError", "incompatible operand types " + a.str() + " and " + b.str(), loc);
    }

    // Representation change needed when converting? (values are canonical
    // int64: sign-extended if signed, zero-extended if unsigned)
    static bool reprChanges(const EType& from, const EType& to)
    {
        if (from.kind != EType::Int || to.kind != EType::Int)
        {
            return false;
        }
        if (from.isSigned == to.isSigned && to.width >= from.width)
        {
            return false;
        }
        if (!from.isSigned && to.isSigned && to.width > from.width)
        {
            return false;
        }
        return true;
    }

    EExpr coerce(EExpr e, const ETypeP& to, SrcLoc loc)
    {
        const EType& from = *e.type;
        if (from.same(*to))
        {
            e.flexible = false;
            return e;
        }
        if (e.kind == EExpr::Const && e.flexible && from.kind == EType::Int)
        {
            if (to->kind == EType::F32)
            {
                return mkConst(convertValue(e.cval, from, *to), to, loc);
            }
            if (to->kind == EType::Int)
            {
                const int64_t v = e.cval.i;
                const int64_t w = wrapInt(v, to->width, to->isSigned);
                if (w != v)
                {
                    fail("TypeError",
                         "literal " + std::to_string(v) + " does not fit in " + to->str(), loc);
                }
                return mkConst(Value::ofInt(w), to, loc);
            }
            if (to->kind == EType::Bool)
            {
                fail("TypeError", "integer literal used where bool expected", loc);
            }
        }
        if (from.kind == EType::Int && to->kind == EType::Int)
        {
            if (e.kind == EExpr::Const)
            {
                return mkConst(convertValue(e.cval, from, *to), to, loc);
            }
            if (!reprChanges(from, *to))
            {
                EExpr out = std::move(e);
                out.type = to;
                return out;
            }
            if (to->width < from.width)
            {
                fail("TypeError",
                     "implicit narrowing from " + from.str() + " to " + to->str(), loc);
            }
            EExpr cv;
            cv.kind = EExpr::Un;
            cv.op = "cvt";
            cv.type = to;
            cv.loc = loc;
            cv.kids.push_back(std::move(e));
            return cv;
        }
        fail("TypeError", "cannot convert " + from.str() + " to " + to->str(), loc);
    }

    // ---- constant evaluation ----------------------------------------------

    int64_t constEvalInt(const Expr& e)
    {
        std::vector<EStmt> discard;
        std::vector<EStmt>* saved = buf_;
        buf_ = &discard;
        RVal r;
        try
        {
            r = elabExpr(e, nullptr);
        }
        catch (...)
        {
            buf_ = saved;
            throw;
        }
        buf_ = saved;
        if (r.k != RVal::Scalar || r.e.kind != EExpr::Const || r.e.type->kind == EType::F32)
        {
            fail("ElabError", "expression is not a compile-time integer constant", e.loc);
        }
        return r.e.cval.i;
    }

    Value constEvalValue(const Expr& e, const ETypeP& want)
    {
        if (e.kind == Expr::InitList)
        {
            return constEvalInitList(e, want);
        }
        std::vector<EStmt> discard;
        std::vector<EStmt>* saved = buf_;
        buf_ = &discard;
        RVal r;
        try
        {
            r = elabExpr(e, want.get());
        }
        catch (...)
        {
            buf_ = saved;
            throw;
        }
        buf_ = saved;
        if (r.k != RVal::Scalar || r.e.kind != EExpr::Const)
        {
            fail("ElabError", "initializer is not a compile-time constant", e.loc);
        }
        EExpr c = coerce(std::move(r.e), want, e.loc);
        return c.cval;
    }

    Value constEvalInitList(const Expr& e, const ETypeP& want)
    {
        Value v = zeroOf(*want);
        if (e.kids.empty())
        {
            return v;
        }
        if (want->kind == EType::Array)
        {
            if (static_cast<int64_t>(e.kids.size()) > want->len)
            {
                fail("TypeError", "too many initializers for " + want->str(), e.loc);
            }
            for (size_t i = 0; i < e.kids.size(); ++i)
            {
                if (!e.designators[i].empty())
                {
                    fail("TypeError", "designators are only valid for records", e.loc);
                }
                v.elems[i] = constEvalValue(*e.kids[i], want->elem);
            }
            return v;
        }
        fail("TypeError", "brace initializer not valid for " + want->str(), e.loc);
    }

    // ---- main entry --------------------------------------------------------

    void registerStruct(const StructDef& sd)
    {
        ETypeP t = std::make_shared<EType>();
        t->kind = EType::Record;
        for (const Param& f : sd.fields)
        {
            ETypeP ft = resolveType(f.type.get());
            if (ft == nullptr || ft->kind == EType::Void)
            {
                fail("TypeError", "invalid field type in struct " + sd.name, f.loc);
            }
            t->fields.emplace_back(f.name, ft);
        }
        Binding b;
        b.kind = Binding::TypeAlias;
        b.alias = t;
        if (scopes_.empty())
        {
            moduleEnv_[sd.name] = std::move(b);
        }
        else
        {
            bind(sd.name, std::move(b));
        }
    }

    void registerSharedVar(const std::string& name, ETypeP type, Value init)
    {
        if (sharedIdx_.count(name) != 0)
        {
            fail("ElabError", "duplicate shared variable '" + name + "'");
        }
        sharedIdx_[name] = static_cast<int>(shared_.size());
        ESharedVar v;
        v.name = name;
        v.type = std::move(type);
        v.init = std::move(init);
        shared_.push_back(std::move(v));
    }

    void moduleDecls()
    {
        for (const auto& sd : mod_.structs)
        {
            registerStruct(*sd);
        }
        for (const StmtP& g : mod_.globals)
        {
            if (g->kind == Stmt::StructDefS)
            {
                registerStruct(*g->structDef);
                continue;
            }
            if (g->kind == Stmt::Using)
            {
                Binding b;
                b.kind = Binding::TypeAlias;
                b.alias = resolveType(g->type.get());
                if (b.alias == nullptr)
                {
                    fail("TypeError", "using alias cannot name auto", g->loc);
                }
                moduleEnv_[g->name] = std::move(b);
                continue;
            }
            if (g->kind != Stmt::VarDecl)
            {
                fail("ElabError", "unsupported module-level statement", g->loc);
            }
            ETypeP t = resolveType(g->type.get());
            if (g->isConst)
            {
                // Module constant; --const bindings take precedence.
                if (consts_.count(g->name) != 0)
                {
                    continue;
                }
                if (g->a == nullptr)
                {
                    fail("ElabError", "const '" + g->name + "' needs an initializer", g->loc);
                }
                Binding b;
                b.kind = Binding::ConstVal;
                if (t == nullptr)
                {
                    std::vector<EStmt> discard;
                    std::vector<EStmt>* saved = buf_;
                    buf_ = &discard;
                    RVal r = elabExpr(*g->a, nullptr);
                    buf_ = saved;
                    if (r.k != RVal::Scalar || r.e.kind != EExpr::Const)
                    {
                        fail("ElabError", "const initializer must be a constant", g->loc);
                    }
                    b.cv = r.e.cval;
                    b.ctype = r.e.type;
                    b.cflex = r.e.flexible;
                }
                else
                {
                    if (t->kind == EType::Array || t->kind == EType::Record)
                    {
                        fail("TypeError", "module constants must be scalar", g->loc);
                    }
                    b.cv = constEvalValue(*g->a, t);
                    b.ctype = t;
                }
                moduleEnv_[g->name] = std::move(b);
                continue;
            }
            if (t == nullptr)
            {
                fail("TypeError", "module variables need an explicit type", g->loc);
            }
            if (t->kind == EType::Void || t->kind == EType::Record)
            {
                fail("TypeError", "unsupported shared variable type " + t->str(), g->loc);
            }
            if (t->kind == EType::Array &&
                (t->elem->kind == EType::Array || t->elem->kind == EType::Record))
            {
                fail("TypeError", "shared arrays must have scalar elements", g->loc);
            }
            Value init = (g->a != nullptr) ? constEvalValue(*g->a, t) : zeroOf(*t);
            registerSharedVar(g->name, t, std::move(init));
            Binding b;
            b.kind = Binding::SharedV;
            b.shared = g->name;
            moduleEnv_[g->name] = std::move(b);
        }
        for (const FnDeclP& f : mod_.fns)
        {
            if (moduleEnv_.count(f->name) != 0)
            {
                fail("ElabError", "duplicate module symbol '" + f->name + "'", f->loc);
            }
            Binding b;
            b.kind = Binding::FnRef;
            b.fn = f.get();
            moduleEnv_[f->name] = std::move(b);
        }
    }

    const FnDecl* pickEntry()
    {
        if (!entryName_.empty())
        {
            for (const FnDeclP& f : mod_.fns)
            {
                if (f->name == entryName_)
                {
                    return f.get();
                }
            }
            fail("ElabError", "entry function '" + entryName_ + "' not found");
        }
        const FnDecl* unique = nullptr;
        bool multiple = false;
        for (const FnDeclP& f : mod_.fns)
        {
            if (f->isInline || f->isAsync || !f->tparams.empty() || !f->params.empty())
            {
                continue;
            }
            if (f->name == "main")
            {
                return f.get();
            }
            multiple = unique != nullptr;
            unique = f.get();
        }
        if (unique == nullptr || multiple)
        {
            fail("ElabError", "cannot determine a unique zero-parameter entry function");
        }
        return unique;
    }

    static int fnAttrThreadRate(const FnDecl& d)
    {
        for (const Attr& a : d.attrs)
        {
            if (a.name == "thread_rate")
            {
                return -1; // resolved by caller (needs const eval in scope)
            }
        }
        return 0;
    }

    int threadRateOf(const FnDecl& d)
    {
        for (const Attr& a : d.attrs)
        {
            if (a.name == "thread_rate")
            {
                if (a.arg == nullptr)
                {
                    fail("ElabError", "thread_rate needs an argument", a.loc);
                }
                const int64_t n = constEvalInt(*a.arg);
                if (n < 1)
                {
                    fail("ElabError", "thread_rate must be >= 1", a.loc);
                }
                return static_cast<int>(n);
            }
            if (a.name != "unordered")
            {
                fail("ElabError", "unknown function attribute '" + a.name + "'", a.loc);
            }
        }
        return 0;
    }

    // ---- function instantiation --------------------------------------------

    int instantiateNamedFn(const FnDecl* d, EFn::Kind kind)
    {
        const std::string key = "fn:" + d->name;
        if (fnInProgress_.count(key) != 0)
        {
            fail("ElabError", "runtime recursion is not supported ('" + d->name + "')", d->loc);
        }
        auto m = fnMemo_.find(key);
        if (m != fnMemo_.end())
        {
            return m->second;
        }
        if (!d->tparams.empty())
        {
            fail("ElabError", "template function '" + d->name + "' must be inline", d->loc);
        }
        fnInProgress_.insert(key);
        const int idx = static_cast<int>(built_.size());
        built_.push_back(std::make_unique<EFn>());
        fnMemo_[key] = idx;
        EFn& f = *built_[idx];
        f.name = d->name;
        f.kind = kind;
        {
            FnFrame frame(*this, &f);
            pushScope(true);
            f.threadRate = threadRateOf(*d);
            for (const Param& p : d->params)
            {
                ETypeP pt = resolveType(p.type.get());
                if (pt == nullptr || pt->kind == EType::Void)
                {
                    fail("TypeError", "invalid parameter type", p.loc);
                }
                if (pt->kind == EType::Array || pt->kind == EType::Record)
                {
                    fail("TypeError",
                         "non-inline functions take scalar parameters only", p.loc);
                }
                Shape sh = allocShape(pt, p.name);
                f.paramSlots.push_back(sh.slots[0]);
                Binding b;
                b.kind = Binding::LocalVal;
                b.shape = std::move(sh);
                bind(p.name, std::move(b));
            }
            // A null return type in the syntax tree means `void`.
            ETypeP rt = (d->retType == nullptr) ? tVoid() : resolveType(d->retType.get());
            if (rt == nullptr)
            {
                fail("TypeError", "non-inline functions cannot return auto", d->loc);
            }
            if (rt->kind == EType::Array || rt->kind == EType::Record)
            {
                fail("TypeError", "non-inline functions return scalars or void", d->loc);
            }
            f.retType = rt;
            elabBody(*d->body);
            validateTail(f, d->loc);
        }
        fnInProgress_.erase(key);
        return idx;
    }

    void validateTail(const EFn& f, SrcLoc loc)
    {
        const bool needsValue = f.retType->kind != EType::Void;
        if (!needsValue)
        {
            return;
        }
        if (f.body.empty() || f.body.back().kind != EStmt::Return || !f.body.back().hasRet)
        {
            fail("TypeError",
                 "function '" + f.name + "' must end with a return of type " + f.retType->str(),
                 loc);
        }
    }

    struct CallableSrc
    {
        const std::vector<Param>* params = nullptr;
        const Stmt* body = nullptr;
        const FnDecl* decl = nullptr; // for attrs
        const Env* statics = nullptr;
        const std::vector<std::pair<std::string, Shape>>* valueCaps = nullptr;
        EFn* creator = nullptr;
        std::string name;
    };

    CallableSrc callableSrc(const Binding& fnb, SrcLoc loc)
    {
        CallableSrc s;
        if (fnb.kind == Binding::FnRef)
        {
            s.params = &fnb.fn->params;
            s.body = fnb.fn->body.get();
            s.decl = fnb.fn;
            s.name = fnb.fn->name;
            return s;
        }
        if (fnb.kind == Binding::ClosureV)
        {
            const Closure& c = *fnb.clos;
            s.statics = &c.statics;
            s.valueCaps = &c.valueCaps;
            s.creator = c.creator;
            s.name = c.debugName;
            if (c.lam != nullptr)
            {
                s.params = &c.lam->params;
                s.body = c.lam->body.get();
            }
            else
            {
                s.params = &c.decl->params;
                s.body = c.decl->body.get();
                s.decl = c.decl;
            }
            return s;
        }
        fail("TypeError", "expression is not callable", loc);
    }

    int instantiateBatched(const Binding& fnb, EFn::Kind kind, const ETypeP& doTokenType,
                           SrcLoc loc, std::vector<EExpr>* outArgs)
    {
        CallableSrc src = callableSrc(fnb, loc);
        if (src.decl != nullptr && (src.decl->isInline || !src.decl->tparams.empty()))
        {
            fail("TypeError", "inline/template functions cannot be used as thread bodies", loc);
        }
        const int idx = static_cast<int>(built_.size());
        built_.push_back(std::make_unique<EFn>());
        EFn& f = *built_[idx];
        f.name = src.name.empty() ? ("body$" + std::to_string(idx)) : src.name;
        f.kind = kind;
        if (src.params->size() != 1)
        {
            fail("TypeError", "thread body must take exactly one index parameter", loc);
        }

        std::vector<EExpr> capArgs;
        if (src.valueCaps != nullptr)
        {
            for (const auto& cap : *src.valueCaps)
            {
                if (src.creator != curFn_)
                {
                    fail("ElabError",
                         "captured values cannot cross an intermediate function boundary", loc);
                }
                for (const int slot : cap.second.slots)
                {
                    capArgs.push_back(mkLocal(slot, curFn_->slotTypes[slot], loc));
                }
            }
        }

        {
            FnFrame frame(*this, &f);
            pushScope(true, src.statics);
            pushScope(false);
            if (src.decl != nullptr)
            {
                f.threadRate = threadRateOf(*src.decl);
            }

            const Param& ip = (*src.params)[0];
            ETypeP it = resolveType(ip.type.get());
            if (it == nullptr || !(it->isInt() || it->kind == EType::Bool))
            {
                fail("TypeError", "thread body index parameter must be an integer", ip.loc);
            }
            if (doTokenType != nullptr && !it->same(*doTokenType))
            {
                fail("TypeError", "pipelined_do token type mismatch: " + it->str() + " vs " +
                                      doTokenType->str(),
                     ip.loc);
            }
            {
                Shape sh = allocShape(it, ip.name);
                f.paramSlots.push_back(sh.slots[0]);
                Binding b;
                b.kind = Binding::LocalVal;
                b.shape = std::move(sh);
                bind(ip.name, std::move(b));
            }
            if (src.valueCaps != nullptr)
            {
                for (const auto& cap : *src.valueCaps)
                {
                    Shape sh = allocShape(cap.second.type, cap.first);
                    for (const int slot : sh.slots)
                    {
                        f.paramSlots.push_back(slot);
                    }
                    sh.isConst = true;
                    Binding b;
                    b.kind = Binding::LocalVal;
                    b.shape = std::move(sh);
                    bind(cap.first, std::move(b));
                }
            }
            f.retType = (kind == EFn::DoBody) ? tBool() : tVoid();
            elabBody(*src.body);
            if (kind == EFn::DoBody)
            {
                if (f.body.empty() || f.body.back().kind != EStmt::Return ||
                    !f.body.back().hasRet)
                {
                    fail("TypeError", "pipelined_do body must end with `return <bool>;`", loc);
                }
            }
        }
        if (outArgs != nullptr)
        {
            *outArgs = std::move(capArgs);
        }
        return idx;
    }

    // ---- statements --------------------------------------------------------

    void elabBody(const Stmt& block)
    {
        if (block.kind == Stmt::Block)
        {
            pushScope();
            for (const StmtP& s : block.stmts)
            {
                checkUnreachableAfterReturn(s->loc);
                elabStmt(*s);
            }
            scopes_.pop_back();
        }
        else
        {
            elabStmt(block);
        }
    }

    bool inInlineBody() const
    {
        return inlineStack_.size() > inlineBase_;
    }

    void checkUnreachableAfterReturn(SrcLoc loc)
    {
        if (inInlineBody() && inlineStack_.back().returned)
        {
            fail("TypeError", "statements after return in an inline function", loc);
        }
    }

    void elabStmt(const Stmt& s)
    {
        switch (s.kind)
        {
        case Stmt::Block:
            elabBody(s);
            return;
        case Stmt::VarDecl:
            elabVarDecl(s);
            return;
        case Stmt::Assign:
            elabAssign(s);
            return;
        case Stmt::Incr:
            elabIncr(s);
            return;
        case Stmt::ExprStmt:
            elabExpr(*s.a, nullptr);
            return;
        case Stmt::If:
            elabIf(s);
            return;
        case Stmt::For:
            elabFor(s);
            return;
        case Stmt::DoWhile:
            elabDoWhile(s);
            return;
        case Stmt::StaticFor:
            elabStaticFor(s);
            return;
        case Stmt::StaticIf:
            elabStaticIf(s);
            return;
        case Stmt::WaitFor:
            elabWaitFor(s);
            return;
        case Stmt::Region:
            elabRegion(s);
            return;
        case Stmt::Return:
            elabReturn(s);
            return;
        case Stmt::FnDef:
            elabNestedFn(s);
            return;
        case Stmt::StructDefS:
            registerStruct(*s.structDef);
            return;
        case Stmt::Using:
        {
            Binding b;
            b.kind = Binding::TypeAlias;
            b.alias = resolveType(s.type.get());
            if (b.alias == nullptr)
            {
                fail("TypeError", "using alias cannot name auto", s.loc);
            }
            bind(s.name, std::move(b));
            return;
        }
        }
    }

    void elabNestedFn(const Stmt& s)
    {
        const FnDecl* d = s.fn.get();
        ClosureP c = std::make_shared<Closure>();
        c->decl = d;
        c->statics = collectStaticEnv();
        c->creator = curFn_;
        c->debugName = d->name;
        Binding b;
        b.kind = Binding::ClosureV;
        b.clos = std::move(c);
        bind(d->name, std::move(b));
    }

    void hoistStatic(const Stmt& s)
    {
        ETypeP t = resolveType(s.type.get());
        if (t == nullptr)
        {
            fail("TypeError", "static locals need an explicit type", s.loc);
        }
        if (t->kind == EType::Record || t->kind == EType::Void)
        {
            fail("TypeError", "unsupported static local type " + t->str(), s.loc);
        }
        Value init = (s.a != nullptr) ? constEvalValue(*s.a, t) : zeroOf(*t);
        std::string mangled = curFn_->name + "." + s.name;
        if (sharedIdx_.count(mangled) != 0)
        {
            mangled += "#" + std::to_string(staticCounter_++);
        }
        registerSharedVar(mangled, t, std::move(init));
        Binding b;
        b.kind = Binding::SharedV;
        b.shared = mangled;
        bind(s.name, std::move(b));
    }

    void elabVarDecl(const Stmt& s)
    {
        if (s.isStatic)
        {
            hoistStatic(s);
            return;
        }
        ETypeP declType = resolveType(s.type.get()); // null for auto

        if (s.isConst && s.a != nullptr && s.a->kind != Expr::InitList)
        {
            // Fold into a compile-time constant when possible.
            const size_t mark = buf_->size();
            const size_t slotMark = curFn_->slotTypes.size();
            RVal r = elabExpr(*s.a, declType.get());
            if (r.k == RVal::Scalar && r.e.kind == EExpr::Const && buf_->size() == mark &&
                curFn_->slotTypes.size() == slotMark)
            {
                EExpr c = (declType != nullptr) ? coerce(std::move(r.e), declType, s.loc)
                                                : std::move(r.e);
                Binding b;
                b.kind = Binding::ConstVal;
                b.cv = c.cval;
                b.ctype = c.type;
                b.cflex = c.flexible;
                bind(s.name, std::move(b));
                return;
            }
            if (r.k == RVal::Fn)
            {
                bind(s.name, r.fnb);
                return;
            }
            // Fall through: runtime const local.
            finishVarDecl(s, declType, &r);
            return;
        }
        if (s.a != nullptr && s.a->kind != Expr::InitList)
        {
            RVal r = elabExpr(*s.a, declType.get());
            if (r.k == RVal::Fn)
            {
                bind(s.name, r.fnb);
                return;
            }
            finishVarDecl(s, declType, &r);
            return;
        }
        finishVarDecl(s, declType, nullptr);
    }

    void finishVarDecl(const Stmt& s, ETypeP declType, RVal* init)
    {
        ETypeP t = declType;
        if (t == nullptr)
        {
            if (init == nullptr)
            {
                fail("TypeError", "auto variable '" + s.name + "' needs an initializer", s.loc);
            }
            t = typeOfRVal(*init, s.loc);
            if (t->kind == EType::Void)
            {
                fail("TypeError", "cannot declare a variable of void type", s.loc);
            }
        }
        Shape sh = allocShape(t, s.name);
        sh.isConst = s.isConst;
        if (init != nullptr)
        {
            initShapeFromRVal(sh, *init, s.loc);
        }
        else if (s.a != nullptr)
        {
            initShapeFromInitList(sh, *s.a);
        }
        else
        {
            zeroFill(sh, s.loc);
        }
        Binding b;
        b.kind = Binding::LocalVal;
        b.shape = std::move(sh);
        bind(s.name, std::move(b));
    }

    void zeroFill(const Shape& sh, SrcLoc loc)
    {
        for (const int slot : sh.slots)
        {
            const ETypeP& t = curFn_->slotTypes[slot];
            emitLet(slot, mkConst(zeroOf(*t), t, loc), loc);
        }
    }

    void initShapeFromRVal(const Shape& sh, RVal& r, SrcLoc loc)
    {
        if (r.k == RVal::Scalar)
        {
            if (sh.slots.size() != 1)
            {
                fail("TypeError", "scalar initializer for aggregate " + sh.type->str(), loc);
            }
            emitLet(sh.slots[0], coerce(std::move(r.e), sh.type, loc), loc);
            return;
        }
        if (r.k == RVal::Agg)
        {
            if (!r.shape.type->same(*sh.type))
            {
                fail("TypeError", "initializer type " + r.shape.type->str() +
                                      " does not match " + sh.type->str(),
                     loc);
            }
            for (size_t i = 0; i < sh.slots.size(); ++i)
            {
                const int src = r.shape.slots[i];
                emitLet(sh.slots[i], mkLocal(src, curFn_->slotTypes[src], loc), loc);
            }
            return;
        }
        fail("TypeError", "invalid initializer", loc);
    }

    void initShapeFromInitList(const Shape& sh, const Expr& e)
    {
        assert(e.kind == Expr::InitList);
        if (e.kids.empty())
        {
            zeroFill(sh, e.loc);
            return;
        }
        const EType& t = *sh.type;
        if (t.kind == EType::Record)
        {
            const bool designated = !e.designators.empty() && !e.designators[0].empty();
            if (designated)
            {
                std::set<std::string> seen;
                std::vector<std::pair<const std::string*, const Expr*>> inits;
                for (size_t i = 0; i < e.kids.size(); ++i)
                {
                    if (e.designators[i].empty())
                    {
                        fail("TypeError", "mixing designated and positional initializers",
                             e.loc);
                    }
                    if (!seen.insert(e.designators[i]).second)
                    {
                        fail("TypeError", "duplicate designator ." + e.designators[i], e.loc);
                    }
                    inits.emplace_back(&e.designators[i], e.kids[i].get());
                }
                // Evaluate in source order, assign to named fields.
                std::set<std::string> assigned;
                for (const auto& kv : inits)
                {
                    Shape fs = subField(sh, *kv.first, e.loc);
                    initSubShape(fs, *kv.second);
                    assigned.insert(*kv.first);
                }
                for (const auto& f : t.fields)
                {
                    if (assigned.count(f.first) == 0)
                    {
                        Shape fs = subField(sh, f.first, e.loc);
                        zeroFill(fs, e.loc);
                    }
                }
                return;
            }
            if (e.kids.size() > t.fields.size())
            {
                fail("TypeError", "too many initializers for " + t.str(), e.loc);
            }
            for (size_t i = 0; i < t.fields.size(); ++i)
            {
                Shape fs = subField(sh, t.fields[i].first, e.loc);
                if (i < e.kids.size())
                {
                    initSubShape(fs, *e.kids[i]);
                }
                else
                {
                    zeroFill(fs, e.loc);
                }
            }
            return;
        }
        if (t.kind == EType::Array)
        {
            if (static_cast<int64_t>(e.kids.size()) > t.len)
            {
                fail("TypeError", "too many initializers for " + t.str(), e.loc);
            }
            for (int64_t i = 0; i < t.len; ++i)
            {
                Shape es = subIndex(sh, i, e.loc);
                if (i < static_cast<int64_t>(e.kids.size()))
                {
                    if (!e.designators[i].empty())
                    {
                        fail("TypeError", "designators are only valid for records", e.loc);
                    }
                    initSubShape(es, *e.kids[i]);
                }
                else
                {
                    zeroFill(es, e.loc);
                }
            }
            return;
        }
        fail("TypeError", "brace initializer not valid for " + t.str(), e.loc);
    }

    void initSubShape(const Shape& sh, const Expr& e)
    {
        if (e.kind == Expr::InitList)
        {
            initShapeFromInitList(sh, e);
            return;
        }
        RVal r = elabExpr(e, sh.type.get());
        initShapeFromRVal(sh, r, e.loc);
    }

    // ---- lvalues -----------------------------------------------------------

    LV resolveLV(const Expr& e)
    {
        LV lv;
        lv.loc = e.loc;
        if (e.kind == Expr::Ident)
        {
            const Binding* b = lookup(e.op);
            if (b == nullptr)
            {
                fail("TypeError", "unknown variable '" + e.op + "'", e.loc);
            }
            if (b->kind == Binding::LocalVal)
            {
                if (b->shape.isConst)
                {
                    fail("TypeError", "assignment to const '" + e.op + "'", e.loc);
                }
                if (b->shape.slots.size() != 1)
                {
                    fail("TypeError", "cannot assign whole aggregates", e.loc);
                }
                lv.k = LV::LSlot;
                lv.slot = b->shape.slots[0];
                lv.type = b->shape.type;
                return lv;
            }
            if (b->kind == Binding::SharedV)
            {
                const int si = sharedIdx_.at(b->shared);
                const ETypeP& t = shared_[si].type;
                if (t->kind == EType::Array)
                {
                    fail("TypeError", "shared arrays are assigned element-wise", e.loc);
                }
                lv.k = LV::LShared;
                lv.var = b->shared;
                lv.type = t;
                return lv;
            }
            fail("TypeError", "'" + e.op + "' is not assignable", e.loc);
        }
        if (e.kind == Expr::Index)
        {
            // Shared array element?
            if (e.kids[0]->kind == Expr::Ident)
            {
                const Binding* b = lookup(e.kids[0]->op);
                if (b != nullptr && b->kind == Binding::SharedV)
                {
                    const int si = sharedIdx_.at(b->shared);
                    const ETypeP& t = shared_[si].type;
                    if (t->kind != EType::Array)
                    {
                        fail("TypeError", "indexing non-array shared variable", e.loc);
                    }
                    RVal ix = elabExpr(*e.kids[1], nullptr);
                    lv.k = LV::LShared;
                    lv.var = b->shared;
                    lv.type = t->elem;
                    lv.hasIdx = true;
                    lv.idx = requireScalarInt(std::move(ix), e.kids[1]->loc);
                    return lv;
                }
            }
            Shape base = resolveLocalShape(*e.kids[0]);
            const int64_t i = constEvalInt(*e.kids[1]);
            Shape sub = subIndex(base, i, e.loc);
            if (sub.isConst)
            {
                fail("TypeError", "assignment to const aggregate element", e.loc);
            }
            if (sub.slots.size() != 1)
            {
                fail("TypeError", "cannot assign whole aggregates", e.loc);
            }
            lv.k = LV::LSlot;
            lv.slot = sub.slots[0];
            lv.type = sub.type;
            return lv;
        }
        if (e.kind == Expr::Field)
        {
            Shape base = resolveLocalShape(*e.kids[0]);
            Shape sub = subField(base, e.op, e.loc);
            if (sub.isConst)
            {
                fail("TypeError", "assignment to const member", e.loc);
            }
            if (sub.slots.size() != 1)
            {
                fail("TypeError", "cannot assign whole aggregates", e.loc);
            }
            lv.k = LV::LSlot;
            lv.slot = sub.slots[0];
            lv.type = sub.type;
            return lv;
        }
        fail("TypeError", "invalid assignment target", e.loc);
    }

    Shape resolveLocalShape(const Expr& e)
    {
        if (e.kind == Expr::Ident)
        {
            const Binding* b = lookup(e.op);
            if (b == nullptr || b->kind != Binding::LocalVal)
            {
                fail("TypeError", "expected a local aggregate", e.loc);
            }
            return b->shape;
        }
        if (e.kind == Expr::Index)
        {
            Shape base = resolveLocalShape(*e.kids[0]);
            return subIndex(base, constEvalInt(*e.kids[1]), e.loc);
        }
        if (e.kind == Expr::Field)
        {
            Shape base = resolveLocalShape(*e.kids[0]);
            return subField(base, e.op, e.loc);
        }
        fail("TypeError", "expected a local aggregate", e.loc);
    }

    EExpr requireScalarInt(RVal r, SrcLoc loc)
    {
        if (r.k != RVal::Scalar || !r.e.type->isInt())
        {
            fail("TypeError", "index must be an integer", loc);
        }
        EExpr e = std::move(r.e);
        if (e.flexible)
        {
            e = coerce(std::move(e), tInt(32, false), loc);
        }
        return e;
    }

    EExpr readLV(const LV& lv)
    {
        if (lv.k == LV::LSlot)
        {
            return mkLocal(lv.slot, lv.type, lv.loc);
        }
        EExpr e;
        e.kind = EExpr::SharedRead;
        e.type = lv.type;
        e.loc = lv.loc;
        e.var = lv.var;
        if (lv.hasIdx)
        {
            e.kids.push_back(lv.idx);
        }
        return e;
    }

    void writeLV(const LV& lv, EExpr v)
    {
        if (lv.k == LV::LSlot)
        {
            emitLet(lv.slot, std::move(v), lv.loc);
            return;
        }
        EStmt s;
        s.kind = EStmt::SharedWrite;
        s.loc = lv.loc;
        s.var = lv.var;
        s.hasIdx = lv.hasIdx;
        if (lv.hasIdx)
        {
            s.idx = lv.idx;
        }
        s.a = std::move(v);
        emit(std::move(s));
    }

    void elabAssign(const Stmt& s)
    {
        LV lv = resolveLV(*s.a);
        if (s.op == "=")
        {
            RVal r = elabExpr(*s.b, lv.type.get());
            if (r.k != RVal::Scalar)
            {
                fail("TypeError", "expected a scalar value", s.loc);
            }
            writeLV(lv, coerce(std::move(r.e), lv.type, s.loc));
            return;
        }
        // compound: read-modify-write, read ordered before rhs
        EExpr cur = readLV(lv);
        RVal r = elabExpr(*s.b, lv.type.get());
        if (r.k != RVal::Scalar)
        {
            fail("TypeError", "expected a scalar value", s.loc);
        }
        const std::string op = s.op.substr(0, s.op.size() - 1);
        EExpr v = buildBin(op, std::move(cur), std::move(r.e), s.loc, lv.type.get());
        writeLV(lv, coerce(std::move(v), lv.type, s.loc));
    }

    void elabIncr(const Stmt& s)
    {
        LV lv = resolveLV(*s.a);
        if (!lv.type->isInt())
        {
            fail("TypeError", "++/-- require an integer", s.loc);
        }
        EExpr cur = readLV(lv);
        EExpr one = mkConst(Value::ofInt(1), lv.type, s.loc);
        const std::string op = (s.op == "++") ? "+" : "-";
        EExpr v = buildBin(op, std::move(cur), std::move(one), s.loc, lv.type.get());
        writeLV(lv, coerce(std::move(v), lv.type, s.loc));
    }

    void elabIf(const Stmt& s)
    {
        RVal c = elabExpr(*s.a, nullptr);
        if (c.k != RVal::Scalar || c.e.type->kind != EType::Bool)
        {
            fail("TypeError", "if condition must be bool", s.loc);
        }
        if (c.e.kind == EExpr::Const)
        {
            const bool taken = c.e.cval.i != 0;
            if (taken)
            {
                elabBody(*s.stmts[0]);
            }
            else if (s.stmts.size() > 1)
            {
                elabBody(*s.stmts[1]);
            }
            return;
        }
        EStmt out;
        out.kind = EStmt::If;
        out.loc = s.loc;
        out.a = std::move(c.e);
        ++condDepth_;
        out.body = collect([&] { elabBody(*s.stmts[0]); });
        if (s.stmts.size() > 1)
        {
            out.els = collect([&] { elabBody(*s.stmts[1]); });
        }
        --condDepth_;
        emit(std::move(out));
    }

    void elabFor(const Stmt& s)
    {
        if (condDepth_ > 0)
        {
            fail("IfConvertError", "loop inside a conditional", s.loc);
        }
        if (regionDepth_ > 0)
        {
            fail("ElabError", "loop inside atomic/schedule region", s.loc);
        }
        if (waitDepth_ > 0)
        {
            fail("ElabError", "loop inside wait_for expression", s.loc);
        }
        bool ordered = true;
        for (const Attr& a : s.attrs)
        {
            if (a.name == "unordered")
            {
                ordered = false;
            }
            else
            {
                fail("ElabError", "unknown loop attribute '" + a.name + "'", a.loc);
            }
        }
        RVal bound = elabExpr(*s.a, nullptr);
        EStmt out;
        out.kind = EStmt::For;
        out.loc = s.loc;
        out.ordered = ordered;
        out.a = coerce(requireScalarInt(std::move(bound), s.loc), tInt(32, false), s.loc);
        out.bound = (out.a.kind == EExpr::Const) ? out.a.cval.i : -1;

        pushScope();
        ETypeP it = out.a.type;
        Shape sh = allocShape(it, s.name);
        sh.isConst = true;
        out.slot = sh.slots[0];
        Binding b;
        b.kind = Binding::LocalVal;
        b.shape = std::move(sh);
        bind(s.name, std::move(b));
        ++loopDepth_;
        out.body = collect([&] { elabBody(*s.stmts[0]); });
        --loopDepth_;
        scopes_.pop_back();
        emit(std::move(out));
    }

    void elabDoWhile(const Stmt& s)
    {
        if (condDepth_ > 0)
        {
            fail("IfConvertError", "loop inside a conditional", s.loc);
        }
        if (regionDepth_ > 0)
        {
            fail("ElabError", "loop inside atomic/schedule region", s.loc);
        }
        if (waitDepth_ > 0)
        {
            fail("ElabError", "loop inside wait_for expression", s.loc);
        }
        EStmt out;
        out.kind = EStmt::DoWhile;
        out.loc = s.loc;
        pushScope();
        ++loopDepth_;
        out.body = collect([&] {
            elabBody(*s.stmts[0]);
            RVal c = elabExpr(*s.a, nullptr);
            if (c.k != RVal::Scalar || c.e.type->kind != EType::Bool)
            {
                fail("TypeError", "do-while condition must be bool", s.loc);
            }
            out.a = std::move(c.e);
        });
        --loopDepth_;
        scopes_.pop_back();
        emit(std::move(out));
    }

    void elabStaticFor(const Stmt& s)
    {
        const int64_t n = constEvalInt(*s.a);
        if (n < 0)
        {
            fail("ElabError", "static for bound must be >= 0", s.loc);
        }
        if (n > 65536)
        {
            fail("ElabError", "static for bound too large", s.loc);
        }
        for (int64_t i = 0; i < n; ++i)
        {
            pushScope();
            Binding b;
            b.kind = Binding::ConstVal;
            b.cv = Value::ofInt(i);
            b.ctype = tInt(32, false);
            b.cflex = true;
            bind(s.name, std::move(b));
            elabBody(*s.stmts[0]);
            scopes_.pop_back();
        }
    }

    void elabStaticIf(const Stmt& s)
    {
        const int64_t c = constEvalInt(*s.a);
        if (c != 0)
        {
            elabBody(*s.stmts[0]);
        }
        else if (s.stmts.size() > 1)
        {
            elabBody(*s.stmts[1]);
        }
    }

    void elabWaitFor(const Stmt& s)
    {
        if (regionDepth_ > 0)
        {
            fail("ElabError", "wait_for inside atomic/schedule region", s.loc);
        }
        if (waitDepth_ > 0)
        {
            fail("ElabError", "nested wait_for", s.loc);
        }
        EStmt out;
        out.kind = EStmt::WaitFor;
        out.loc = s.loc;
        ++waitDepth_;
        out.body = collect([&] {
            RVal c = elabExpr(*s.a, nullptr);
            if (c.k != RVal::Scalar || c.e.type->kind != EType::Bool)
            {
                fail("TypeError", "wait_for expression must be bool", s.loc);
            }
            out.a = std::move(c.e);
        });
        --waitDepth_;
        emit(std::move(out));
    }

    void elabRegion(const Stmt& s)
    {
        if (regionDepth_ > 0)
        {
            fail("ElabError", "nested atomic/schedule regions", s.loc);
        }
        if (waitDepth_ > 0)
        {
            fail("ElabError", "region inside wait_for expression", s.loc);
        }
        int64_t n = 1;
        if (s.op == "schedule")
        {
            n = constEvalInt(*s.a);
            if (n < 1)
            {
                fail("ElabError", "schedule(N) requires N >= 1", s.loc);
            }
        }
        EStmt out;
        out.kind = EStmt::Region;
        out.loc = s.loc;
        out.regionN = static_cast<int>(n);
        ++regionDepth_;
        out.body = collect([&] { elabBody(*s.stmts[0]); });
        --regionDepth_;
        emit(std::move(out));
    }

    void elabReturn(const Stmt& s)
    {
        if (inInlineBody())
        {
            // Re-index after evaluating: nested inlining grows the stack.
            const size_t ci = inlineStack_.size() - 1;
            const ETypeP declRet = inlineStack_[ci].declRet;
            const std::string what = inlineStack_[ci].what;
            if (inlineStack_[ci].returned)
            {
                fail("TypeError", "multiple returns in " + what, s.loc);
            }
            if (condDepth_ > inlineStack_[ci].condDepthAtEntry ||
                loopDepth_ > inlineStack_[ci].loopDepthAtEntry)
            {
                fail("IfConvertError", "return from a conditional or loop in " + what,
                     s.loc);
            }
            RVal result;
            if (s.a == nullptr)
            {
                if (declRet != nullptr && declRet->kind != EType::Void)
                {
                    fail("TypeError", what + " must return a value", s.loc);
                }
            }
            else
            {
                const EType* want =
                    (declRet != nullptr && declRet->kind != EType::Void) ? declRet.get()
                                                                         : nullptr;
                RVal r = elabExpr(*s.a, want);
                if (r.k == RVal::Scalar && want != nullptr)
                {
                    r.e = coerce(std::move(r.e), declRet, s.loc);
                }
                if (r.k == RVal::Agg && want != nullptr && !r.shape.type->same(*want))
                {
                    fail("TypeError", "return type mismatch in " + what, s.loc);
                }
                result = std::move(r);
            }
            inlineStack_[ci].result = std::move(result);
            inlineStack_[ci].returned = true;
            return;
        }
        // Top-level function return.
        if (condDepth_ > 0 || loopDepth_ > 0)
        {
            fail("IfConvertError", "return inside a conditional or loop", s.loc);
        }
        EStmt out;
        out.kind = EStmt::Return;
        out.loc = s.loc;
        if (s.a != nullptr)
        {
            if (curFn_->retType == nullptr || curFn_->retType->kind == EType::Void)
            {
                fail("TypeError", "void function cannot return a value", s.loc);
            }
            RVal r = elabExpr(*s.a, curFn_->retType.get());
            if (r.k != RVal::Scalar)
            {
                fail("TypeError", "function return values must be scalar", s.loc);
            }
            out.a = coerce(std::move(r.e), curFn_->retType, s.loc);
            out.hasRet = true;
        }
        else if (curFn_->retType != nullptr && curFn_->retType->kind != EType::Void)
        {
            fail("TypeError", "function must return a value", s.loc);
        }
        emit(std::move(out));
    }

    // ---- expressions --------------------------------------------------------

    ETypeP defaultIntType()
    {
        return tInt(32, false);
    }

    RVal scalarRV(EExpr e)
    {
        RVal r;
        r.k = RVal::Scalar;
        r.e = std::move(e);
        return r;
    }

    EExpr scalarExpr(const Expr& e, const EType* expected)
    {
        RVal r = elabExpr(e, expected);
        if (r.k == RVal::SharedArr)
        {
            fail("TypeError", "shared array '" + r.var + "' used without an index", e.loc);
        }
        if (r.k != RVal::Scalar)
        {
            fail("TypeError", "expected a scalar value", e.loc);
        }
        return std::move(r.e);
    }

    RVal elabExpr(const Expr& e, const EType* expected)
    {
        switch (e.kind)
        {
        case Expr::IntLit:
        {
            if (expected != nullptr && expected->kind == EType::F32)
            {
                return scalarRV(
                    mkConst(Value::ofFloat(static_cast<float>(e.intVal)), tF32(), e.loc));
            }
            if (expected != nullptr && expected->kind == EType::Int)
            {
                ETypeP t = tInt(expected->width, expected->isSigned);
                const int64_t v = static_cast<int64_t>(e.intVal);
                if (wrapInt(v, t->width, t->isSigned) != v)
                {
                    fail("TypeError", "literal does not fit in " + t->str(), e.loc);
                }
                return scalarRV(mkConst(Value::ofInt(v), t, e.loc));
            }
            const bool wide = e.intVal > 0xFFFFFFFFull;
            ETypeP t = wide ? tInt(64, false) : tInt(32, false);
            return scalarRV(
                mkConst(Value::ofInt(static_cast<int64_t>(e.intVal)), t, e.loc, true));
        }
        case Expr::FloatLit:
            return scalarRV(
                mkConst(Value::ofFloat(static_cast<float>(e.floatVal)), tF32(), e.loc));
        case Expr::BoolLit:
            return scalarRV(mkConst(Value::ofInt(e.boolVal ? 1 : 0), tBool(), e.loc));
        case Expr::Ident:
            return elabIdent(e);
        case Expr::Unary:
            return elabUnary(e, expected);
        case Expr::Binary:
        {
            EExpr a = scalarExpr(*e.kids[0], arithHint(e.op, expected));
            EExpr b = scalarExpr(*e.kids[1],
                                 rhsHint(e.op, a) ? a.type.get() : nullptr);
            return scalarRV(buildBin(e.op, std::move(a), std::move(b), e.loc,
                                     arithHint(e.op, expected)));
        }
        case Expr::Ternary:
            return elabTernary(scalarExpr(*e.kids[0], nullptr), e, expected);
        case Expr::Index:
            return elabIndex(e);
        case Expr::Field:
        {
            RVal base = elabExpr(*e.kids[0], nullptr);
            if (base.k != RVal::Agg)
            {
                fail("TypeError", "member access on non-record value", e.loc);
            }
            Shape sub = subField(base.shape, e.op, e.loc);
            if (sub.slots.size() == 1 && sub.type->kind != EType::Array &&
                sub.type->kind != EType::Record)
            {
                return scalarRV(mkLocal(sub.slots[0], sub.type, e.loc));
            }
            RVal r;
            r.k = RVal::Agg;
            r.shape = std::move(sub);
            return r;
        }
        case Expr::Call:
            return elabCall(e, expected);
        case Expr::Lambda:
            return makeClosure(e);
        case Expr::InitList:
            fail("TypeError", "brace initializer is only valid in a declaration", e.loc);
        }
        fail("TypeError", "unsupported expression", e.loc);
    }

    RVal elabTernary(EExpr c, const Expr& e, const EType* expected)
    {
        if (c.type->kind != EType::Bool)
        {
            fail("TypeError", "?: condition must be bool", e.loc);
        }
        EExpr a = scalarExpr(*e.kids[1], expected);
        EExpr b = scalarExpr(*e.kids[2], expected != nullptr ? expected : a.type.get());
        retypeFlex(a, b, e.loc);
        EType ut = unify(*a.type, *b.type, e.loc);
        ETypeP utp = std::make_shared<EType>(ut);
        a = coerce(std::move(a), utp, e.loc);
        b = coerce(std::move(b), utp, e.loc);
        if (c.kind == EExpr::Const)
        {
            return scalarRV(c.cval.i != 0 ? std::move(a) : std::move(b));
        }
        EExpr out;
        out.kind = EExpr::Sel;
        out.type = utp;
        out.loc = e.loc;
        out.kids.push_back(std::move(c));
        out.kids.push_back(std::move(a));
        out.kids.push_back(std::move(b));
        return scalarRV(std::move(out));
    }

    RVal elabIdent(const Expr& e)
    {
        const Binding* b = lookup(e.op);
        if (b == nullptr)
        {
            fail("ElabError", "unbound identifier '" + e.op + "'", e.loc);
        }
        switch (b->kind)
        {
        case Binding::LocalVal:
        {
            const Shape& sh = b->shape;
            if (sh.slots.size() == 1 && sh.type->kind != EType::Array &&
                sh.type->kind != EType::Record)
            {
                return scalarRV(mkLocal(sh.slots[0], sh.type, e.loc));
            }
            RVal r;
            r.k = RVal::Agg;
            r.shape = sh;
            return r;
        }
        case Binding::SharedV:
        {
            const int si = sharedIdx_.at(b->shared);
            const ETypeP& t = shared_[si].type;
            if (t->kind == EType::Array)
            {
                RVal r;
                r.k = RVal::SharedArr;
                r.var = b->shared;
                r.varType = t;
                return r;
            }
            EExpr rd;
            rd.kind = EExpr::SharedRead;
            rd.type = t;
            rd.loc = e.loc;
            rd.var = b->shared;
            return scalarRV(std::move(rd));
        }
        case Binding::ConstVal:
            return scalarRV(mkConst(b->cv, b->ctype, e.loc, b->cflex));
        case Binding::FnRef:
        case Binding::ClosureV:
        {
            RVal r;
            r.k = RVal::Fn;
            r.fnb = *b;
            return r;
        }
        case Binding::TypeAlias:
            fail("TypeError", "type '" + e.op + "' used as a value", e.loc);
        case Binding::None:
            break;
        }
        fail("ElabError", "unbound identifier '" + e.op + "'", e.loc);
    }

    RVal elabIndex(const Expr& e)
    {
        RVal base = elabExpr(*e.kids[0], nullptr);
        if (base.k == RVal::SharedArr)
        {
            EExpr ix = requireScalarInt(elabExpr(*e.kids[1], nullptr), e.kids[1]->loc);
            EExpr rd;
            rd.kind = EExpr::SharedRead;
            rd.type = base.varType->elem;
            rd.loc = e.loc;
            rd.var = base.var;
            rd.kids.push_back(std::move(ix));
            return scalarRV(std::move(rd));
        }
        if (base.k == RVal::Agg)
        {
            const int64_t i = constEvalInt(*e.kids[1]);
            Shape sub = subIndex(base.shape, i, e.loc);
            if (sub.slots.size() == 1 && sub.type->kind != EType::Array &&
                sub.type->kind != EType::Record)
            {
                return scalarRV(mkLocal(sub.slots[0], sub.type, e.loc));
            }
            RVal r;
            r.k = RVal::Agg;
            r.shape = std::move(sub);
            return r;
        }
        fail("TypeError", "indexing a non-array value", e.loc);
    }

    RVal elabUnary(const Expr& e, const EType* expected)
    {
        EExpr a = scalarExpr(*e.kids[0], e.op == "!" ? nullptr : expected);
        const std::string& op = e.op;
        ETypeP rt;
        if (op == "!")
        {
            if (a.type->kind != EType::Bool)
            {
                fail("TypeError", "'!' requires bool", e.loc);
            }
            rt = tBool();
        }
        else if (op == "-")
        {
            if (!a.type->isNumeric())
            {
                fail("TypeError", "'-' requires a numeric operand", e.loc);
            }
            rt = a.type->kind == EType::F32 ? tF32() : tInt(a.type->width, true);
        }
        else if (op == "~")
        {
            if (!a.type->isInt())
            {
                fail("TypeError", "'~' requires an integer", e.loc);
            }
            rt = a.type;
        }
        else
        {
            fail("TypeError", "unsupported unary operator '" + op + "'", e.loc);
        }
        const bool flex = a.flexible;
        if (a.kind == EExpr::Const)
        {
            EExpr out = mkConst(evalUnOp(op, a.cval, *rt), rt, e.loc, flex && op != "!");
            return scalarRV(std::move(out));
        }
        EExpr out;
        out.kind = EExpr::Un;
        out.op = op;
        out.type = rt;
        out.loc = e.loc;
        out.kids.push_back(std::move(a));
        return scalarRV(std::move(out));
    }

    static const EType* arithHint(const std::string& op, const EType* expected)
    {
        if (expected == nullptr)
        {
            return nullptr;
        }
        if (op == "+" || op == "-" || op == "*" || op == "/" || op == "%" || op == "&" ||
            op == "|" || op == "^")
        {
            return expected;
        }
        return nullptr;
    }

    static bool rhsHint(const std::string& op, const EExpr& lhs)
    {
        if (op == "<<" || op == ">>" || op == "&&" || op == "||")
        {
            return false;
        }
        return lhs.type->isNumeric();
    }

    void retypeFlex(EExpr& a, EExpr& b, SrcLoc loc)
    {
        if (a.flexible && !b.flexible && b.type->isNumeric())
        {
            a = coerce(std::move(a), b.type, loc);
        }
        else if (b.flexible && !a.flexible && a.type->isNumeric())
        {
            b = coerce(std::move(b), a.type, loc);
        }
    }

    EExpr buildBin(const std::string& op, EExpr a, EExpr b, SrcLoc loc,
                   const EType* expected)
    {
        const bool bothFlex = a.flexible && b.flexible;
        retypeFlex(a, b, loc);

        ETypeP opnd;
        ETypeP res;
        if (op == "&&" || op == "||")
        {
            if (a.type->kind != EType::Bool || b.type->kind != EType::Bool)
            {
                fail("TypeError", "'" + op + "' requires bool operands", loc);
            }
            opnd = tBool();
            res = tBool();
        }
        else if (op == "<<" || op == ">>")
        {
            if (!a.type->isInt() || !b.type->isInt())
            {
                fail("TypeError", "shift requires integer operands", loc);
            }
            if (a.flexible)
            {
                a = coerce(std::move(a), defaultIntType(), loc);
            }
            if (b.flexible)
            {
                b = coerce(std::move(b), defaultIntType(), loc);
            }
            opnd = a.type;
            res = a.type;
        }
        else if (op == "&" || op == "|" || op == "^")
        {
            if (a.type->kind == EType::Bool && b.type->kind == EType::Bool)
            {
                opnd = tBool();
                res = tBool();
            }
            else
            {
                if (!a.type->isInt() || !b.type->isInt())
                {
                    fail("TypeError", "'" + op + "' requires integers", loc);
                }
                EType u = unify(*a.type, *b.type, loc);
                opnd = std::make_shared<EType>(u);
                res = opnd;
            }
        }
        else if (op == "==" || op == "!=" || op == "<" || op == "<=" || op == ">" ||
                 op == ">=")
        {
            if (a.type->kind == EType::Bool && b.type->kind == EType::Bool)
            {
                if (op != "==" && op != "!=")
                {
                    fail("TypeError", "ordered comparison of bool values", loc);
                }
                opnd = tBool();
            }
            else
            {
                if (!a.type->isNumeric() || !b.type->isNumeric() ||
                    (a.type->kind == EType::F32) != (b.type->kind == EType::F32))
                {
                    fail("TypeError", "incomparable operand types " + a.type->str() +
                                          " and " + b.type->str(),
                         loc);
                }
                EType u = unify(*a.type, *b.type, loc);
                opnd = std::make_shared<EType>(u);
            }
            res = tBool();
        }
        else if (op == "+" || op == "-" || op == "*" || op == "/" || op == "%")
        {
            if (!a.type->isNumeric() || !b.type->isNumeric() ||
                (a.type->kind == EType::F32) != (b.type->kind == EType::F32))
            {
                fail("TypeError",
                     "arithmetic on incompatible types " + a.type->str() + " and " +
                         b.type->str(),
                     loc);
            }
            if (op == "%" && a.type->kind == EType::F32)
            {
                fail("TypeError", "'%' requires integers", loc);
            }
            EType u = unify(*a.type, *b.type, loc);
            opnd = std::make_shared<EType>(u);
            res = opnd;
            if (bothFlex && expected != nullptr && expected->isNumeric() &&
                (expected->kind == EType::F32) == (u.kind == EType::F32))
            {
                opnd = std::make_shared<EType>(*expected);
                res = opnd;
            }
        }
        else
        {
            fail("TypeError", "unsupported operator '" + op + "'", loc);
        }

        const bool flexOut = bothFlex && res->isInt();
        a = coerce(std::move(a), opnd, loc);
        b = coerce(std::move(b), opnd, loc);
        if (a.kind == EExpr::Const && b.kind == EExpr::Const)
        {
            return mkConst(evalBinOp(op, a.cval, b.cval, *opnd, *res), res, loc, flexOut);
        }
        EExpr out;
        out.kind = EExpr::Bin;
        out.op = op;
        out.type = res;
        out.loc = loc;
        out.flexible = false;
        out.kids.push_back(std::move(a));
        out.kids.push_back(std::move(b));
        return out;
    }

    // ---- closures & calls ----------------------------------------------------

    RVal makeClosure(const Expr& lamE)
    {
        ClosureP c = std::make_shared<Closure>();
        c->lam = &lamE;
        c->statics = collectStaticEnv();
        c->creator = curFn_;
        c->debugName =
            curFn_->name + "$lambda" + std::to_string(++lambdaCounter_);
        for (const std::string& cap : lamE.captures)
        {
            const Binding* b = lookup(cap);
            if (b == nullptr)
            {
                fail("ElabError", "capture of unknown name '" + cap + "'", lamE.loc);
            }
            switch (b->kind)
            {
            case Binding::LocalVal:
            {
                // By-value: copy now into const slots.
                Shape sh = allocShape(b->shape.type, c->debugName + "." + cap);
                for (size_t i = 0; i < sh.slots.size(); ++i)
                {
                    const int src = b->shape.slots[i];
                    emitLet(sh.slots[i], mkLocal(src, curFn_->slotTypes[src], lamE.loc),
                            lamE.loc);
                }
                sh.isConst = true;
                c->valueCaps.emplace_back(cap, std::move(sh));
                break;
            }
            case Binding::ConstVal:
            case Binding::FnRef:
            case Binding::ClosureV:
            case Binding::TypeAlias:
                c->statics[cap] = *b;
                break;
            case Binding::SharedV:
                fail("SharedCaptureError",
                     "shared variable '" + cap + "' is accessed directly, not captured",
                     lamE.loc);
            case Binding::None:
                fail("ElabError", "capture of unknown name '" + cap + "'", lamE.loc);
            }
        }
        for (const Param& p : lamE.params)
        {
            // Param types resolve in the creation scope; may be null for auto.
            ETypeP pt;
            if (p.type != nullptr && p.type->kind == TypeExpr::Named &&
                p.type->name == "auto")
            {
                pt = nullptr;
            }
            else
            {
                pt = resolveType(p.type.get());
            }
            c->paramTypes.push_back(pt);
        }
        RVal r;
        r.k = RVal::Fn;
        r.fnb.kind = Binding::ClosureV;
        r.fnb.clos = std::move(c);
        return r;
    }

    RVal elabCall(const Expr& e, const EType* expected)
    {
        const Expr& cal = *e.kids[0];
        std::vector<const Expr*> argEs;
        for (size_t i = 1; i < e.kids.size(); ++i)
        {
            argEs.push_back(e.kids[i].get());
        }

        if (cal.kind == Expr::Ident)
        {
            const std::string& name = cal.op;
            if (name == "pipelined_for")
            {
                elabPipelinedFor(e, argEs);
                return RVal{};
            }
            if (name == "pipelined_do")
            {
                elabPipelinedDo(e, argEs);
                return RVal{};
            }
            if (name == "eq")
            {
                if (argEs.size() != 2)
                {
                    fail("TypeError", "eq(a, b) takes two float32 arguments", e.loc);
                }
                EExpr a = scalarExpr(*argEs[0], tF32().get());
                EExpr b = scalarExpr(*argEs[1], tF32().get());
                if (a.type->kind != EType::F32 || b.type->kind != EType::F32)
                {
                    fail("TypeError", "eq(a, b) takes two float32 arguments", e.loc);
                }
                return scalarRV(buildFeq(std::move(a), std::move(b), e.loc));
            }
            const Binding* b = lookup(name);
            if (b == nullptr)
            {
                fail("ElabError", "unknown function '" + name + "'", e.loc);
            }
            return callBinding(*b, argEs, e.loc, expected);
        }
        if (cal.kind == Expr::Lambda)
        {
            RVal f = makeClosure(cal);
            return callBinding(f.fnb, argEs, e.loc, expected);
        }
        RVal f = elabExpr(cal, nullptr);
        if (f.k != RVal::Fn)
        {
            fail("TypeError", "expression is not callable", cal.loc);
        }
        return callBinding(f.fnb, argEs, e.loc, expected);
    }

    EExpr buildFeq(EExpr a, EExpr b, SrcLoc loc)
    {
        if (a.kind == EExpr::Const && b.kind == EExpr::Const)
        {
            return mkConst(evalBinOp("feq", a.cval, b.cval, *tF32(), *tBool()), tBool(),
                           loc);
        }
        EExpr out;
        out.kind = EExpr::Bin;
        out.op = "feq";
        out.type = tBool();
        out.loc = loc;
        out.kids.push_back(std::move(a));
        out.kids.push_back(std::move(b));
        return out;
    }

    void requireTopLevelCallPosition(const char* what, SrcLoc loc)
    {
        if (condDepth_ > 0)
        {
            fail("IfConvertError", std::string(what) + " inside a conditional", loc);
        }
        if (regionDepth_ > 0)
        {
            fail("ElabError", std::string(what) + " inside atomic/schedule region", loc);
        }
        if (waitDepth_ > 0)
        {
            fail("ElabError", std::string(what) + " inside wait_for expression", loc);
        }
    }

    void elabPipelinedFor(const Expr& e, const std::vector<const Expr*>& argEs)
    {
        requireTopLevelCallPosition("batched call", e.loc);
        if (argEs.size() != 2)
        {
            fail("TypeError", "pipelined_for(count, body) takes two arguments", e.loc);
        }
        EExpr count = requireScalarInt(elabExpr(*argEs[0], nullptr), argEs[0]->loc);
        RVal f = elabExpr(*argEs[1], nullptr);
        if (f.k != RVal::Fn)
        {
            fail("TypeError", "pipelined_for body must be a function", argEs[1]->loc);
        }
        std::vector<EExpr> capArgs;
        const int callee = instantiateBatched(f.fnb, EFn::Batched, nullptr, e.loc, &capArgs);
        EStmt s;
        s.kind = EStmt::BatchedCall;
        s.loc = e.loc;
        s.callee = callee;
        s.count = std::move(count);
        s.args = std::move(capArgs);
        emit(std::move(s));
    }

    void elabPipelinedDo(const Expr& e, const std::vector<const Expr*>& argEs)
    {
        requireTopLevelCallPosition("pipelined_do", e.loc);
        if (e.tmplArg == nullptr)
        {
            fail("TypeError", "pipelined_do<T>(body) needs an explicit token type", e.loc);
        }
        if (argEs.size() != 1)
        {
            fail("TypeError", "pipelined_do<T>(body) takes one argument", e.loc);
        }
        ETypeP tok = resolveType(e.tmplArg.get());
        if (tok == nullptr || !tok->isInt())
        {
            fail("TypeError", "pipelined_do token type must be an integer", e.loc);
        }
        RVal f = elabExpr(*argEs[0], nullptr);
        if (f.k != RVal::Fn)
        {
            fail("TypeError", "pipelined_do body must be a function", argEs[0]->loc);
        }
        std::vector<EExpr> capArgs;
        const int callee = instantiateBatched(f.fnb, EFn::DoBody, tok, e.loc, &capArgs);
        EStmt s;
        s.kind = EStmt::DoCall;
        s.loc = e.loc;
        s.callee = callee;
        s.args = std::move(capArgs);
        emit(std::move(s));
    }

    RVal callBinding(const Binding& fnb, const std::vector<const Expr*>& argEs, SrcLoc loc,
                     const EType* expected)
    {
        if (fnb.kind == Binding::FnRef && !fnb.fn->isInline)
        {
            if (fnb.fn->isAsync)
            {
                return elabAsyncCall(fnb.fn, argEs, loc);
            }
            return elabNormCall(fnb.fn, argEs, loc);
        }
        // Inline function or closure: splice.
        std::vector<RVal> args;
        args.reserve(argEs.size());
        const CallableSrc src = callableSrc(fnb, loc);
        for (size_t i = 0; i < argEs.size(); ++i)
        {
            const Expr* pe = argEs[i];
            if (pe->kind == Expr::Lambda)
            {
                args.push_back(makeClosure(*pe));
                continue;
            }
            args.push_back(elabExpr(*pe, paramHint(src, i)));
        }
        return inlineCall(fnb, std::move(args), loc, expected);
    }

    // Best-effort element-type hint for literal typing; full checking happens
    // at parameter binding.
    const EType* paramHint(const CallableSrc& src, size_t i)
    {
        if (src.params == nullptr || i >= src.params->size())
        {
            return nullptr;
        }
        const TypeExpr* t = (*src.params)[i].type.get();
        if (t == nullptr || t->kind != TypeExpr::Named)
        {
            return nullptr;
        }
        int w = 0;
        bool sgn = false;
        ETypeP ht;
        if (t->name == "bool")
        {
            ht = tBool();
        }
        else if (t->name == "float32")
        {
            ht = tF32();
        }
        else if (intTypeName(t->name, &w, &sgn))
        {
            ht = tInt(w, sgn);
        }
        else
        {
            return nullptr;
        }
        hintKeep_.push_back(std::move(ht));
        return hintKeep_.back().get();
    }

    std::vector<ETypeP> hintKeep_;

    RVal elabAsyncCall(const FnDecl* d, const std::vector<const Expr*>& argEs, SrcLoc loc)
    {
        requireTopLevelCallPosition("async call", loc);
        const int callee = instantiateNamedFn(d, EFn::Async);
        const EFn& f = *built_[callee];
        if (f.retType->kind != EType::Void)
        {
            fail("TypeError", "async functions must return void", loc);
        }
        if (argEs.size() != f.paramSlots.size())
        {
            fail("TypeError", "wrong number of arguments to '" + d->name + "'", loc);
        }
        EStmt s;
        s.kind = EStmt::AsyncCall;
        s.loc = loc;
        s.callee = callee;
        for (size_t i = 0; i < argEs.size(); ++i)
        {
            const ETypeP& pt = f.slotTypes[f.paramSlots[i]];
            EExpr a = scalarExpr(*argEs[i], pt.get());
            s.args.push_back(coerce(std::move(a), pt, loc));
        }
        emit(std::move(s));
        return RVal{};
    }

    RVal elabNormCall(const FnDecl* d, const std::vector<const Expr*>& argEs, SrcLoc loc)
    {
        requireTopLevelCallPosition("function call", loc);
        const int callee = instantiateNamedFn(d, EFn::Normal);
        const EFn& f = *built_[callee];
        if (argEs.size() != f.paramSlots.size())
        {
            fail("TypeError", "wrong number of arguments to '" + d->name + "'", loc);
        }
        EStmt s;
        s.kind = EStmt::NormCall;
        s.loc = loc;
        s.callee = callee;
        for (size_t i = 0; i < argEs.size(); ++i)
        {
            const ETypeP& pt = f.slotTypes[f.paramSlots[i]];
            EExpr a = scalarExpr(*argEs[i], pt.get());
            s.args.push_back(coerce(std::move(a), pt, loc));
        }
        RVal out;
        if (f.retType->kind != EType::Void)
        {
            const int slot = newSlot(f.retType, d->name + "$ret");
            s.slot = slot;
            out = scalarRV(mkLocal(slot, f.retType, loc));
        }
        emit(std::move(s));
        return out;
    }

    // Template parameter deduction for inline calls.
    void deducePattern(const TypeExpr* pat, const EType& actual,
                       const std::set<std::string>& typeNames,
                       const std::set<std::string>& autoNames, SrcLoc loc)
    {
        switch (pat->kind)
        {
        case TypeExpr::Named:
        {
            if (pat->name == "auto")
            {
                return;
            }
            if (typeNames.count(pat->name) != 0)
            {
                const Binding* b = lookup(pat->name);
                if (b != nullptr && b->kind == Binding::TypeAlias && b->alias != nullptr)
                {
                    if (!b->alias->same(actual))
                    {
                        fail("TypeError",
                             "conflicting deduction for " + pat->name + ": " +
                                 b->alias->str() + " vs " + actual.str(),
                             loc);
                    }
                    return;
                }
                Binding nb;
                nb.kind = Binding::TypeAlias;
                nb.alias = std::make_shared<EType>(actual);
                bind(pat->name, std::move(nb));
                return;
            }
            ETypeP t = resolveType(pat);
            if (t == nullptr || !t->same(actual))
            {
                fail("TypeError",
                     "argument type " + actual.str() + " does not match parameter", loc);
            }
            return;
        }
        case TypeExpr::Array:
        {
            if (actual.kind != EType::Array)
            {
                fail("TypeError", "expected an array argument", loc);
            }
            deducePattern(pat->elem.get(), *actual.elem, typeNames, autoNames, loc);
            if (pat->size->kind == Expr::Ident && autoNames.count(pat->size->op) != 0)
            {
                const Binding* b = lookup(pat->size->op);
                if (b != nullptr && b->kind == Binding::ConstVal)
                {
                    if (b->cv.i != actual.len)
                    {
                        fail("TypeError", "conflicting deduction for " + pat->size->op, loc);
                    }
                    return;
                }
                Binding nb;
                nb.kind = Binding::ConstVal;
                nb.cv = Value::ofInt(actual.len);
                nb.ctype = tInt(32, false);
                nb.cflex = true;
                bind(pat->size->op, std::move(nb));
                return;
            }
            if (constEvalInt(*pat->size) != actual.len)
            {
                fail("TypeError", "array length mismatch", loc);
            }
            return;
        }
        case TypeExpr::Fn:
        case TypeExpr::Decltype:
            return;
        }
    }

    bool tparamBound(const std::string& name)
    {
        const Binding* b = lookup(name);
        return b != nullptr &&
               ((b->kind == Binding::TypeAlias && b->alias != nullptr) ||
                b->kind == Binding::ConstVal);
    }

    ETypeP trialClosureResult(const Binding& fnb, const std::vector<ETypeP>& ptypes,
                              SrcLoc loc)
    {
        EFn scratch;
        scratch.name = "$trial";
        scratch.retType = tVoid();
        FnFrame frame(*this, &scratch);
        pushScope(true);
        std::vector<RVal> args;
        for (const ETypeP& pt : ptypes)
        {
            if (pt->kind == EType::Array || pt->kind == EType::Record)
            {
                RVal r;
                r.k = RVal::Agg;
                r.shape = allocShape(pt, "$targ");
                args.push_back(std::move(r));
            }
            else
            {
                args.push_back(scalarRV(mkLocal(newSlot(pt, "$targ"), pt, loc)));
            }
        }
        RVal r = inlineCall(fnb, std::move(args), loc, nullptr);
        return typeOfRVal(r, loc);
    }

    RVal inlineCall(const Binding& fnb, std::vector<RVal> args, SrcLoc loc,
                    const EType* expected)
    {
        (void)expected;
        const CallableSrc src = callableSrc(fnb, loc);
        if (src.decl != nullptr && src.decl->isAsync)
        {
            fail("TypeError", "async functions cannot be called inline", loc);
        }
        if (++instDepth_ > 64)
        {
            fail("RecursionLimit", "inline expansion exceeds depth 64", loc);
        }
        const size_t scopeMark = scopes_.size();
        pushScope(true, src.statics);
        pushScope(false);

        if (src.valueCaps != nullptr)
        {
            for (const auto& cap : *src.valueCaps)
            {
                if (src.creator != curFn_)
                {
                    fail("ElabError",
                         "captured values cannot cross an intermediate function boundary",
                         loc);
                }
                Binding b;
                b.kind = Binding::LocalVal;
                b.shape = cap.second;
                bind(cap.first, std::move(b));
            }
        }

        if (args.size() != src.params->size())
        {
            fail("TypeError", "wrong number of arguments to " + src.name, loc);
        }

        // Template deduction (named inline templates only).
        std::set<std::string> typeNames;
        std::set<std::string> autoNames;
        if (src.decl != nullptr)
        {
            for (const TParam& tp : src.decl->tparams)
            {
                (tp.isType ? typeNames : autoNames).insert(tp.name);
            }
            for (size_t i = 0; i < args.size(); ++i)
            {
                const TypeExpr* pat = (*src.params)[i].type.get();
                if (pat->kind == TypeExpr::Fn)
                {
                    if (args[i].k != RVal::Fn)
                    {
                        fail("TypeError", "expected a function argument", loc);
                    }
                    // Deduce from the lambda's declared parameter types.
                    if (args[i].fnb.kind == Binding::ClosureV)
                    {
                        const Closure& c = *args[i].fnb.clos;
                        for (size_t j = 0;
                             j < pat->params.size() && j < c.paramTypes.size(); ++j)
                        {
                            if (c.paramTypes[j] != nullptr)
                            {
                                deducePattern(pat->params[j].get(), *c.paramTypes[j],
                                              typeNames, autoNames, loc);
                            }
                        }
                    }
                    continue;
                }
                if (args[i].k == RVal::Fn)
                {
                    fail("TypeError", "unexpected function argument", loc);
                }
                deducePattern(pat, *typeOfRVal(args[i], loc), typeNames, autoNames, loc);
            }
            // Remaining tparams: deduce via a function argument's result type.
            for (const TParam& tp : src.decl->tparams)
            {
                if (tparamBound(tp.name))
                {
                    continue;
                }
                bool done = false;
                for (size_t i = 0; i < args.size() && !done; ++i)
                {
                    const TypeExpr* pat = (*src.params)[i].type.get();
                    if (pat->kind != TypeExpr::Fn || pat->ret == nullptr)
                    {
                        continue;
                    }
                    if (pat->ret->kind != TypeExpr::Named || pat->ret->name != tp.name)
                    {
                        continue;
                    }
                    std::vector<ETypeP> ptypes;
                    bool ok = true;
                    for (const auto& pp : pat->params)
                    {
                        ETypeP t = resolveType(pp.get());
                        if (t == nullptr)
                        {
                            ok = false;
                            break;
                        }
                        ptypes.push_back(std::move(t));
                    }
                    if (!ok)
                    {
                        continue;
                    }
                    ETypeP rt = trialClosureResult(args[i].fnb, ptypes, loc);
                    deducePattern(pat->ret.get(), *rt, typeNames, autoNames, loc);
                    done = tparamBound(tp.name);
                }
                if (!tparamBound(tp.name))
                {
                    fail("TypeError",
                         "cannot deduce template parameter " + tp.name + " for " + src.name,
                         loc);
                }
            }
        }

        // Bind parameters.
        for (size_t i = 0; i < args.size(); ++i)
        {
            const Param& p = (*src.params)[i];
            const TypeExpr* pat = p.type.get();
            if (pat->kind == TypeExpr::Fn)
            {
                bind(p.name, args[i].fnb);
                continue;
            }
            ETypeP pt = resolveType(pat);
            RVal& a = args[i];
            if (pt != nullptr && (pt->kind == EType::Array || pt->kind == EType::Record))
            {
                if (a.k != RVal::Agg || !a.shape.type->same(*pt))
                {
                    fail("TypeError",
                         "argument " + std::to_string(i + 1) + " of " + src.name +
                             " must have type " + pt->str(),
                         loc);
                }
                Binding b;
                b.kind = Binding::LocalVal;
                b.shape = a.shape;
                b.shape.isConst = true; // by-value: callee may not mutate caller storage
                bind(p.name, std::move(b));
                continue;
            }
            if (a.k != RVal::Scalar)
            {
                fail("TypeError",
                     "argument " + std::to_string(i + 1) + " of " + src.name +
                         " must be scalar",
                     loc);
            }
            EExpr v = (pt != nullptr) ? coerce(std::move(a.e), pt, loc) : std::move(a.e);
            if (v.kind == EExpr::Const)
            {
                Binding b;
                b.kind = Binding::ConstVal;
                b.cv = v.cval;
                b.ctype = v.type;
                b.cflex = v.flexible;
                bind(p.name, std::move(b));
            }
            else
            {
                Shape sh = allocShape(v.type, src.name + "." + p.name);
                emitLet(sh.slots[0], std::move(v), loc);
                Binding b;
                b.kind = Binding::LocalVal;
                b.shape = std::move(sh);
                bind(p.name, std::move(b));
            }
        }

        // Return context.
        InlineCtx ctx;
        ctx.what = "inline function '" + src.name + "'";
        ctx.condDepthAtEntry = condDepth_;
        ctx.loopDepthAtEntry = loopDepth_;
        if (src.decl != nullptr)
        {
            ctx.declRet = (src.decl->retType == nullptr)
                              ? tVoid()
                              : resolveType(src.decl->retType.get()); // null for auto
        }
        inlineStack_.push_back(std::move(ctx));

        elabBody(*src.body);

        InlineCtx done = std::move(inlineStack_.back());
        inlineStack_.pop_back();
        scopes_.resize(scopeMark);
        --instDepth_;

        const bool wantsValue =
            done.declRet != nullptr && done.declRet->kind != EType::Void;
        if (wantsValue && !done.returned)
        {
            fail("TypeError", done.what + " must return a value", loc);
        }
        if (!done.returned)
        {
            return RVal{};
        }
        return std::move(done.result);
    }

    // ---- finalize ------------------------------------------------------------

    void markReadOnlyInputs()
    {
        std::set<std::string> written;
        for (const auto& f : built_)
        {
            forEachStmt(f->body, [&](const EStmt& s) {
                if (s.kind == EStmt::SharedWrite)
                {
                    written.insert(s.var);
                }
            });
        }
        for (ESharedVar& v : shared_)
        {
            v.readOnlyInput = (written.count(v.name) == 0) && v.type->kind == EType::Array;
        }
    }
};

ElabProgram Elaborator::run()
{
    moduleDecls();
    const FnDecl* entry = pickEntry();
    const int idx = instantiateNamedFn(entry, EFn::Normal);
    markReadOnlyInputs();
    ElabProgram prog;
    prog.shared = std::move(shared_);
    for (auto& f : built_)
    {
        prog.fns.push_back(std::move(*f));
    }
    prog.entry = idx;
    return prog;
}

} // namespace

void checkModule(const Module& m)
{
    std::set<std::string> names;
    for (const FnDeclP& f : m.fns)
    {
        if (!names.insert(f->name).second)
        {
            fail("ElabError", "duplicate function '" + f->name + "'", f->loc);
        }
    }
    for (const StmtP& g : m.globals)
    {
        if (g->kind == Stmt::VarDecl && !names.insert(g->name).second)
        {
            fail("ElabError", "duplicate module symbol '" + g->name + "'", g->loc);
        }
    }
}

ElabProgram elaborate(const Module& m, const ConstBindings& consts,
                      const std::string& entryName)
{
    checkModule(m);
    Elaborator e(m, consts, entryName);
    return e.run();
}

} // namespace wavec
