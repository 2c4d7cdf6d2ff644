// CFG construction goldens, pass soundness against the serialized oracle,
// inlining rules, and the structural verifier.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "wavec/ir.hpp"
#include "wavec/oracle.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

using namespace wavec;

namespace
{

std::string slurp(const std::string& path)
{
    std::ifstream in(path);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

ElabProgram load(const std::string& src, const ConstBindings& consts = {},
                 const std::string& entry = "")
{
    const Module m = parseModule(src);
    checkModule(m);
    return elaborate(m, consts, entry);
}

ElabProgram loadCorpus(const std::string& name, const ConstBindings& consts = {})
{
    return load(slurp(std::string(CORPUS_DIR) + "/" + name), consts);
}

// All blocks of a program ordered by global id.
std::vector<const IrBlock*> blocksById(const IrProgram& p)
{
    std::vector<const IrBlock*> out;
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks) { out.push_back(&b); }
    }
    std::sort(out.begin(), out.end(),
              [](const IrBlock* a, const IrBlock* b) { return a->id < b->id; });
    return out;
}

// Deterministic dataset covering in-range buckets on both threshold sides.
SharedState makeInputs(const ElabProgram& e, int64_t buckets)
{
    SharedState in;
    for (const ESharedVar& v : e.shared)
    {
        if (!v.readOnlyInput || v.type->kind != EType::Array) { continue; }
        Value a;
        a.kind = Value::A;
        for (int64_t i = 0; i < v.type->len; ++i)
        {
            if (v.type->elem->kind == EType::F32)
            {
                a.elems.push_back(Value::ofFloat(float(i % 5 + 1)));
            }
            else
            {
                a.elems.push_back(Value::ofInt((i * 5 + 3) % buckets));
            }
        }
        in[v.name] = std::move(a);
    }
    return in;
}

const ConstBindings kSmall = {{"N", 16}, {"SIZE", 8}, {"THRESHOLD", 2}, {"L", 4}};

} // namespace

TEST_CASE("straight-line program builds a single block")
{
    const char* src = R"(
uint32 g;
uint32 out;

void main() {
  uint32 a = g + 1;
  out = a * 2;
}
)";
    const IrProgram p = buildIr(load(src), LatencyTable{});
    const auto blocks = blocksById(p);
    REQUIRE(blocks.size() == 1);
    CHECK(blocks[0]->term.kind == IrTerm::Ret);
    REQUIRE(p.sites.size() == 2);
    CHECK(p.sites[0].var == "g");
    CHECK_FALSE(p.sites[0].isWrite);
    CHECK(p.sites[1].var == "out");
    CHECK(p.sites[1].isWrite);
}

TEST_CASE("sequential loop builds pre/body/post blocks")
{
    const char* src = R"(
uint32 out;

void main() {
  uint32 acc = 0;
  for (const auto i : 5) {
    acc = acc + i;
  }
  out = acc;
}
)";
    const IrProgram p = buildIr(load(src), LatencyTable{});
    const auto blocks = blocksById(p);
    REQUIRE(blocks.size() == 3);
    CHECK(blocks[0]->term.kind == IrTerm::LoopEnter);
    CHECK(blocks[1]->term.kind == IrTerm::LoopBack);
    CHECK(blocks[2]->term.kind == IrTerm::Ret);
    const IrFunction& f = p.fns[p.entry];
    REQUIRE(f.loops.size() == 1);
    CHECK(f.loops[0].entryBlock == blocks[1]->id);
    CHECK(f.loops[0].exitBlock == blocks[2]->id);
    CHECK(f.loops[0].ordered);
    CHECK(blocks[0]->term.succ == blocks[1]->id);
    CHECK(blocks[1]->term.succ == blocks[2]->id);

    const SharedState r = interpretIr(p, {});
    CHECK(r.at("out").i == 10);
}

TEST_CASE("dispatch and loop block numbering follows call order")
{
    const ConstBindings consts = {{"N", 512}, {"SIZE", 32}, {"THRESHOLD", 8}, {"L", 8}};
    const IrProgram p = buildCfg(loadCorpus("replicated.wf", consts), LatencyTable{});
    const auto blocks = blocksById(p);
    REQUIRE(blocks.size() == 7);
    for (int i = 0; i < 7; ++i) { CHECK(blocks[i]->id == i); }

    CHECK(blocks[0]->term.kind == IrTerm::BatchedCall);
    CHECK(blocks[1]->term.kind == IrTerm::Ret);
    CHECK(blocks[2]->term.kind == IrTerm::BatchedCall);
    CHECK(blocks[3]->term.kind == IrTerm::LoopEnter);
    CHECK(blocks[4]->term.kind == IrTerm::LoopBack);
    CHECK(blocks[5]->term.kind == IrTerm::Ret);
    CHECK(blocks[6]->term.kind == IrTerm::Ret);

    // Caller owns 0/2/6; phase one is a single block; phase two self-loops.
    const IrFunction& entry = p.fns[p.entry];
    std::set<int> entryIds;
    for (const IrBlock& b : entry.blocks) { entryIds.insert(b.id); }
    CHECK(entryIds == std::set<int>({0, 2, 6}));

    const int body2 = blocks[2]->term.callee;
    REQUIRE(p.fns[body2].loops.size() == 1);
    CHECK(p.fns[body2].loops[0].entryBlock == 4);
    CHECK(p.fns[body2].loops[0].exitBlock == 5);

    // The replicated-update region sits in phase one with credit width L.
    REQUIRE(blocks[1]->regions.size() == 1);
    CHECK(blocks[1]->regions[0].n == 8);
    CHECK(blocks[1]->regions[0].ops.size() == 2);
    CHECK(blocks[0]->term.args.size() == 1); // dispatch count, no captures
}

TEST_CASE("wait under a conditional splits the block and keeps the predicate")
{
    const IrProgram raw = buildCfg(loadCorpus("dynamic.wf", kSmall), LatencyTable{});
    const auto blocks = blocksById(raw);
    REQUIRE(blocks.size() == 5);
    CHECK(blocks[1]->term.kind == IrTerm::Wait);
    CHECK(blocks[1]->term.predOp >= 0);
    CHECK(blocks[1]->term.waitBlock == blocks[2]->id);
    CHECK(blocks[2]->kind == IrBlock::WaitEval);
    CHECK(blocks[2]->condOut >= 0);
    CHECK(blocks[2]->term.succ == blocks[3]->id);
    CHECK(blocks[1]->term.succ == blocks[3]->id);

    // After conversion the continuation's effects carry the spilled predicate.
    IrProgram p = raw;
    ifConvert(p);
    const IrBlock* cont = p.findBlock(blocks[3]->id);
    REQUIRE(cont != nullptr);
    int writes = 0;
    for (const IrOp& op : cont->ops)
    {
        if (op.kind == IrOp::WriteShared)
        {
            ++writes;
            CHECK(op.pred >= 0);
        }
    }
    CHECK(writes == 2); // histogram update and the lock release
}

TEST_CASE("region accesses under a conditional are predicated")
{
    IrProgram p = buildIr(loadCorpus("static.wf", kSmall), LatencyTable{});
    int regionOps = 0;
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            for (const IrRegion& r : b.regions)
            {
                CHECK(r.n == 1);
                for (int id : r.ops)
                {
                    ++regionOps;
                    CHECK(b.ops[id].pred >= 0);
                    CHECK(b.ops[id].region >= 0);
                }
            }
        }
    }
    CHECK(regionOps == 2);
}

TEST_CASE("region forwarding coalesces scalar traffic to one commit per variable")
{
    const IrProgram p = buildIr(loadCorpus("speculative.wf", kSmall), LatencyTable{});
    int regions = 0;
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            for (const IrRegion& r : b.regions)
            {
                ++regions;
                std::map<std::string, int> writes;
                std::map<std::string, bool> wrote;
                for (int id : r.ops)
                {
                    const IrOp& op = b.ops[id];
                    const bool ram = p.shared[p.sharedIndex(op.var)].isRam;
                    if (ram) { continue; }
                    if (op.kind == IrOp::WriteShared)
                    {
                        ++writes[op.var];
                        wrote[op.var] = true;
                    }
                    else
                    {
                        CHECK(!wrote[op.var]); // reads only sample the region entry
                    }
                }
                for (const auto& [var, n] : writes) { CHECK(n == 1); }
            }
        }
    }
    CHECK(regions >= 2); // the speculative dispatcher carries several regions
}

TEST_CASE("passes preserve serialized semantics on the corpus")
{
    const std::vector<std::pair<std::string, ConstBindings>> cases = {
        {"ordering.wf", {}},
        {"cond_ordering.wf", {}},
        {"map_reduce.wf", {}},
        {"static.wf", kSmall},
        {"dynamic.wf", kSmall},
        {"replicated.wf", kSmall},
        {"speculative.wf", kSmall},
    };
    for (const auto& [name, consts] : cases)
    {
        CAPTURE(name);
        const ElabProgram e = loadCorpus(name, consts);
        const SharedState inputs = makeInputs(e, 8);
        const SharedState ref = interpretSerialized(e, inputs);

        IrProgram p = buildCfg(e, LatencyTable{});
        CHECK(interpretIr(p, inputs) == ref);
        ifConvert(p);
        CHECK(interpretIr(p, inputs) == ref);
        forwardRegions(p);
        CHECK(interpretIr(p, inputs) == ref);
        inlineSingleCallsite(p);
        CHECK(interpretIr(p, inputs) == ref);
        optimize(p);
        CHECK(interpretIr(p, inputs) == ref);
        CHECK(verifyIr(p).empty());
    }
}

TEST_CASE("fully static program folds to a constant store")
{
    IrProgram p = buildIr(loadCorpus("map_reduce.wf"), LatencyTable{});
    const auto blocks = blocksById(p);
    REQUIRE(blocks.size() == 1);
    REQUIRE(blocks[0]->ops.size() == 2);
    CHECK(blocks[0]->ops[0].kind == IrOp::Const);
    CHECK(blocks[0]->ops[0].cval.i == 1240);
    CHECK(blocks[0]->ops[1].kind == IrOp::WriteShared);
    CHECK(interpretIr(p, {}).at("result").i == 1240);
}

TEST_CASE("single-callsite helpers are spliced into the caller")
{
    const char* once = R"(
uint32 g;
uint32 out;

uint32 helper(uint32 a) {
  return a + g;
}

void main() {
  uint32 t = helper(3);
  out = t;
}
)";
    IrProgram p = buildIr(load(once), LatencyTable{});
    int liveFns = 0;
    for (const IrFunction& f : p.fns)
    {
        if (!f.removed) { ++liveFns; }
    }
    CHECK(liveFns == 1);
    for (const IrFunction& f : p.fns)
    {
        if (f.name == "helper") { CHECK(f.removed); }
    }
    SharedState in;
    in["g"] = Value::ofInt(10);
    CHECK(interpretIr(p, in).at("out").i == 13);

    const char* twice = R"(
uint32 g;
uint32 out;

uint32 helper(uint32 a) {
  return a + g;
}

void main() {
  uint32 t = helper(3);
  uint32 u = helper(4);
  out = t + u;
}
)";
    IrProgram p2 = buildIr(load(twice), LatencyTable{});
    for (const IrFunction& f : p2.fns)
    {
        CHECK_FALSE(f.removed);
    }
    CHECK(interpretIr(p2, {}).at("out").i == 7);
}

TEST_CASE("strength reduction rewrites pow2 multiply and modulo")
{
    const char* src = R"(
uint32[64] ram;
uint32 out;

void main() {
  pipelined_for(8, [](uint32 i) {
    uint32 k = (i % 8) * 32;
    out = out + ram[k + i / 4];
  });
}
)";
    IrProgram p = buildIr(load(src), LatencyTable{});
    bool sawShl = false;
    bool sawAnd = false;
    bool sawShr = false;
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            for (const IrOp& op : b.ops)
            {
                if (op.kind != IrOp::Bin) { continue; }
                CHECK(op.op != "*");
                CHECK(op.op != "/");
                CHECK(op.op != "%");
                if (op.op == "<<") { sawShl = true; }
                if (op.op == "&") { sawAnd = true; }
                if (op.op == ">>") { sawShr = true; }
            }
        }
    }
    CHECK(sawShl);
    CHECK(sawAnd);
    CHECK(sawShr);
}

TEST_CASE("ir json artifact is well-formed")
{
    const IrProgram p = buildIr(loadCorpus("static.wf", kSmall), LatencyTable{});
    const nlohmann::json j = nlohmann::json::parse(dumpIrJson(p));
    CHECK(j.at("schema") == 1);
    CHECK(j.at("functions").is_array());
    CHECK(j.at("sites").is_array());
    CHECK(j.at("functions").size() >= 1);
    bool foundRam = false;
    for (const auto& v : j.at("shared"))
    {
        if (v.at("storage") == "ram") { foundRam = true; }
    }
    CHECK(foundRam);
}
