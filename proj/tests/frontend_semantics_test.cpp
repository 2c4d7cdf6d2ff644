#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "wavec/elab.hpp"
#include "wavec/oracle.hpp"

#include <fstream>
#include <sstream>

using namespace wavec;

namespace
{

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

ElabProgram loadCorpus(const std::string& name, const ConstBindings& consts,
                       const std::string& entry = "")
{
    const Module m = parseModule(slurp(std::string(CORPUS_DIR) + "/" + name));
    return elaborate(m, consts, entry);
}

Value intArray(const std::vector<int64_t>& xs)
{
    Value v;
    v.kind = Value::A;
    for (const int64_t x : xs)
    {
        v.elems.push_back(Value::ofInt(x));
    }
    return v;
}

Value floatArray(const std::vector<float>& xs)
{
    Value v;
    v.kind = Value::A;
    for (const float x : xs)
    {
        v.elems.push_back(Value::ofFloat(x));
    }
    return v;
}

// Micro dataset: 4 items, 4 buckets, threshold 0 -> hist [0,3,3,4].
const ConstBindings kMicro = {{"N", 4}, {"SIZE", 4}, {"THRESHOLD", 0}, {"L", 2}};

SharedState microInputs()
{
    SharedState in;
    in["feature"] = intArray({1, 1, 2, 3});
    in["weight"] = floatArray({1, 2, 3, 4});
    return in;
}

void checkHist(const SharedState& out, const std::vector<float>& want)
{
    const Value& hist = out.at("hist");
    REQUIRE(hist.elems.size() >= want.size());
    for (size_t i = 0; i < want.size(); ++i)
    {
        CAPTURE(i);
        CHECK(hist.elems[i].f == want[i]);
    }
}

} // namespace

TEST_CASE("ordering example serializes to x=19 y=18")
{
    const ElabProgram p = loadCorpus("ordering.wf", {});
    const SharedState out = interpretSerialized(p, {});
    CHECK(out.at("x").i == 19);
    CHECK(out.at("y").i == 18);
}

TEST_CASE("histogram variants agree with the sequential oracle on the micro dataset")
{
    const std::vector<float> want = {0, 3, 3, 4};

    SUBCASE("statically scheduled")
    {
        const ElabProgram p = loadCorpus("static.wf", kMicro);
        checkHist(interpretSerialized(p, microInputs()), want);
    }
    SUBCASE("dynamically scheduled")
    {
        const ElabProgram p = loadCorpus("dynamic.wf", kMicro);
        checkHist(interpretSerialized(p, microInputs()), want);
    }
    SUBCASE("replicated")
    {
        const ElabProgram p = loadCorpus("replicated.wf", kMicro);
        checkHist(interpretSerialized(p, microInputs()), want);
    }
    SUBCASE("speculative")
    {
        const ElabProgram p = loadCorpus("speculative.wf", kMicro);
        checkHist(interpretSerialized(p, microInputs()), want);
    }
}

TEST_CASE("threshold above all features leaves the histogram empty")
{
    ConstBindings c = kMicro;
    c["THRESHOLD"] = 100;
    const ElabProgram p = loadCorpus("static.wf", c);
    checkHist(interpretSerialized(p, microInputs()), {0, 0, 0, 0});
}

TEST_CASE("zero-length batch leaves shared state at its initial value")
{
    ConstBindings c = kMicro;
    c["N"] = 0;
    const ElabProgram p = loadCorpus("static.wf", c);
    SharedState in;
    in["feature"] = intArray({});
    in["weight"] = floatArray({});
    const SharedState out = interpretSerialized(p, in);
    checkHist(out, {0, 0, 0, 0});
}

TEST_CASE("map-reduce computes the sum of squares of 0..15")
{
    const ElabProgram p = loadCorpus("map_reduce.wf", {});
    const SharedState out = interpretSerialized(p, {});
    CHECK(out.at("result").i == 1240);
}

TEST_CASE("elaborated form is free of unresolved constructs")
{
    const ElabProgram p = loadCorpus("speculative.wf", kMicro);
    CHECK(p.entry >= 0);
    for (const EFn& f : p.fns)
    {
        forEachStmt(f.body, [&](const EStmt& s) {
            // Every statement kind in the elaborated form is concrete; calls
            // name functions by index.
            if (s.kind == EStmt::BatchedCall || s.kind == EStmt::DoCall ||
                s.kind == EStmt::NormCall || s.kind == EStmt::AsyncCall)
            {
                CHECK(s.callee >= 0);
                CHECK(s.callee < static_cast<int>(p.fns.size()));
            }
        });
    }
}

TEST_CASE("reduce expands to N-1 applications with a ceil(log2 N) chain")
{
    // reduce over a runtime array: every application becomes one '+' node.
    for (const int n : {1, 2, 3, 4, 7, 8, 16, 33, 64})
    {
        CAPTURE(n);
        std::ostringstream src;
        src << "uint32 result;\n";
        src << "template <typename T, auto N>\n";
        src << "inline T reduce((T, T) -> T f, T[N] x) {\n";
        src << "  static if (N == 1) { return x[0]; } else {\n";
        src << "    const auto NewN = (N + 1) / 2;\n";
        src << "    T[NewN] new_array;\n";
        src << "    static for(const auto i : N/2) {\n";
        src << "      new_array[i] = f(x[2*i], x[2*i + 1]);\n";
        src << "    }\n";
        src << "    static if ((N % 2) == 1) { new_array[NewN - 1] = x[N - 1]; }\n";
        src << "    return reduce(f, new_array);\n";
        src << "  }\n";
        src << "}\n";
        src << "void main() {\n";
        src << "  uint32[" << n << "] v;\n";
        src << "  static for(const auto i : " << n << ") { v[i] = i + 1; }\n";
        src << "  result = reduce([](uint32 a, uint32 b) { return a + b; }, v);\n";
        src << "}\n";
        const Module m = parseModule(src.str());
        const ElabProgram p = elaborate(m, {});

        // Count '+' applications over runtime operands and measure the
        // dependence depth of '+' nodes through slot assignments.
        const EFn& entry = p.fns[p.entry];
        std::vector<int> slotDepth(entry.slotTypes.size(), 0);
        int adds = 0;
        int maxDepth = 0;
        std::function<int(const EExpr&)> depthOf = [&](const EExpr& e) -> int {
            if (e.kind == EExpr::Local)
            {
                return slotDepth[e.slot];
            }
            int d = 0;
            for (const EExpr& k : e.kids)
            {
                d = std::max(d, depthOf(k));
            }
            if (e.kind == EExpr::Bin && e.op == "+")
            {
                ++adds;
                ++d;
            }
            return d;
        };
        forEachStmt(entry.body, [&](const EStmt& s) {
            if (s.kind == EStmt::Let)
            {
                slotDepth[s.slot] = depthOf(s.a);
                maxDepth = std::max(maxDepth, slotDepth[s.slot]);
            }
            else if (s.kind == EStmt::SharedWrite)
            {
                maxDepth = std::max(maxDepth, depthOf(s.a));
            }
        });
        CHECK(adds == n - 1);
        int lg = 0;
        while ((1 << lg) < n)
        {
            ++lg;
        }
        CHECK(maxDepth == lg);

        // And the value is right: sum 1..n.
        const SharedState out = interpretSerialized(p, {});
        CHECK(out.at("result").i == n * (n + 1) / 2);
    }
}

TEST_CASE("frontend rejects ill-formed programs with the right error codes")
{
    auto codeOf = [](const std::string& src) -> std::string {
        try
        {
            const Module m = parseModule(src);
            elaborate(m, {{"N", 4}});
        }
        catch (const CompileError& e)
        {
            return e.diag.code;
        }
        return "";
    };

    SUBCASE("float to int assignment")
    {
        CHECK(codeOf("uint32 g;\n"
                     "void main() { int32 x = 1.5; g = 0; }") == "TypeError");
    }
    SUBCASE("reference capture")
    {
        CHECK(codeOf("uint32 g;\n"
                     "void main() { uint32 v = 1; pipelined_for(2, [&v](uint32 i) { g = v; }); }") ==
              "SharedCaptureError");
    }
    SUBCASE("unbound const")
    {
        CHECK(codeOf("uint32 g;\n"
                     "void main() { g = MISSING; }") == "ElabError");
    }
    SUBCASE("loop under a conditional")
    {
        CHECK(codeOf("uint32 g;\n"
                     "void main() { pipelined_for(2, [](uint32 i) {\n"
                     "  if (i == 0) { for (const auto k : 4) { g = k; } }\n"
                     "}); }") == "IfConvertError");
    }
    SUBCASE("return under a conditional in an inline function")
    {
        CHECK(codeOf("uint32 g;\n"
                     "inline uint32 f(uint32 a) { if (a == 0) { return 1; } return 2; }\n"
                     "void main() { g = f(g); }") == "IfConvertError");
    }
    SUBCASE("runtime recursion")
    {
        CHECK(codeOf("uint32 g;\n"
                     "void spin() { g = 1; spin(); }\n"
                     "void main() { spin(); }") == "ElabError");
    }
    SUBCASE("unbounded inline recursion")
    {
        CHECK(codeOf("uint32 g;\n"
                     "inline uint32 down(uint32 x) { return down(x); }\n"
                     "void main() { g = down(g); }") == "RecursionLimit");
    }
}

TEST_CASE("wait_for under a conditional is accepted and lock-protected updates serialize")
{
    const ElabProgram p = loadCorpus("dynamic.wf", kMicro);
    const EFn* batched = nullptr;
    for (const EFn& f : p.fns)
    {
        if (f.kind == EFn::Batched)
        {
            batched = &f;
        }
    }
    REQUIRE(batched != nullptr);
    bool sawWaitInsideIf = false;
    forEachStmt(batched->body, [&](const EStmt& s) {
        if (s.kind == EStmt::If)
        {
            for (const EStmt& t : s.body)
            {
                if (t.kind == EStmt::WaitFor)
                {
                    sawWaitInsideIf = true;
                }
            }
        }
    });
    CHECK(sawWaitInsideIf);
}
