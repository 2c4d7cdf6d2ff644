// Stage placement goldens for the wavefront scheduler plus the independent
// schedule validator, including tampered schedules it must reject.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "wavec/ir.hpp"
#include "wavec/sched.hpp"

#include <fstream>
#include <set>
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

ElabProgram load(const std::string& src, const ConstBindings& consts = {})
{
    const Module m = parseModule(src);
    checkModule(m);
    return elaborate(m, consts, "");
}

ElabProgram loadCorpus(const std::string& name, const ConstBindings& consts = {})
{
    return load(slurp(std::string(CORPUS_DIR) + "/" + name), consts);
}

const IrBlock* blockById(const IrProgram& p, int id)
{
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            if (b.id == id) { return &b; }
        }
    }
    return nullptr;
}

// Site starts of one block in site-id order.
std::vector<int> siteStarts(const IrBlock& b, const BlockSchedule& bs)
{
    std::vector<std::pair<int, int>> found;
    for (size_t i = 0; i < b.ops.size(); ++i)
    {
        const IrOp& op = b.ops[i];
        if (op.kind == IrOp::ReadShared || op.kind == IrOp::WriteShared)
        {
            found.push_back({op.site, bs.ops[i].start});
        }
    }
    std::sort(found.begin(), found.end());
    std::vector<int> out;
    for (const auto& [site, start] : found) { out.push_back(start); }
    return out;
}

std::set<int> distinctStarts(const BlockSchedule& bs)
{
    std::set<int> out;
    for (const OpSched& os : bs.ops)
    {
        if (os.start >= 0) { out.insert(os.start); }
    }
    return out;
}

const ConstBindings kSmall = {{"N", 16}, {"SIZE", 8}, {"THRESHOLD", 2}, {"L", 4}};
const ConstBindings kFull = {{"N", 512}, {"SIZE", 32}, {"THRESHOLD", 8}, {"L", 8}};

} // namespace

TEST_CASE("replicated update spans the float-add latency window")
{
    const IrProgram p = buildIr(loadCorpus("replicated.wf", kFull), LatencyTable{});
    const Schedule s = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, s).empty());

    // First dispatched body: gated read-modify-write on the histogram.
    const BlockSchedule& b1 = s.blocks.at(1);
    REQUIRE(b1.regions.size() == 1);
    CHECK(b1.regions[0].firstStage == 2);
    CHECK(b1.regions[0].lastStage == 9);
    CHECK(b1.regions[0].span == 8);
    CHECK(b1.regions[0].n == 8);
    CHECK(b1.stageCount == 10);
    CHECK(distinctStarts(b1) == std::set<int>{0, 1, 2, 3, 9});
    CHECK(b1.depthViolations.empty());

    // Both dataset fetches issue together in the entry stage.
    const std::vector<int> starts = siteStarts(*blockById(p, 1), b1);
    REQUIRE(starts.size() == 4);
    CHECK(starts[0] == 0); // feature fetch
    CHECK(starts[1] == 0); // weight fetch
    CHECK(starts[2] == 2); // histogram read
    CHECK(starts[3] == 9); // histogram write
    REQUIRE(b1.sameCycleSites.size() == 1);
    CHECK(b1.sameCycleSites[0].size() == 2);

    // The update span is pinned by the adder latency, not the depth budget.
    for (const int depth : {2, 16})
    {
        const Schedule alt = scheduleProgram(p, depth);
        CHECK(validateSchedule(p, alt).empty());
        CHECK(alt.blocks.at(1).regions[0].span == 8);
    }
}

TEST_CASE("exclusive update packs the full read-modify-write window")
{
    const IrProgram p = buildIr(loadCorpus("static.wf", kFull), LatencyTable{});
    const Schedule s = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, s).empty());

    const BlockSchedule& body = s.blocks.at(1);
    REQUIRE(body.regions.size() == 1);
    CHECK(body.regions[0].firstStage == 1);
    CHECK(body.regions[0].lastStage == 8);
    CHECK(body.regions[0].span == 8);
    CHECK(body.regions[0].n == 1);
    CHECK(body.stageCount == 9);
    CHECK(body.depthViolations.empty());
}

TEST_CASE("depth budget splits the shared-counter block")
{
    const IrProgram p = buildIr(loadCorpus("ordering.wf"), LatencyTable{});

    const Schedule wide = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, wide).empty());
    CHECK(wide.blocks.at(1).stageCount == 2);
    CHECK(siteStarts(*blockById(p, 1), wide.blocks.at(1)) == std::vector<int>{0, 0, 0, 1});

    const Schedule narrow = scheduleProgram(p, 2);
    CHECK(validateSchedule(p, narrow).empty());
    CHECK(narrow.blocks.at(1).stageCount == 4);
    CHECK(siteStarts(*blockById(p, 1), narrow.blocks.at(1)) ==
          std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("memory ports serialize same-variable reads")
{
    const char* src = R"(
uint32[8] tbl;
uint32 out;

void main() {
  pipelined_for(4, [](uint32 i) {
    out = tbl[i] + tbl[3];
  });
}
)";
    const IrProgram p = buildIr(load(src), LatencyTable{});
    Schedule s = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, s).empty());

    const IrBlock* body = blockById(p, 1);
    REQUIRE(body != nullptr);
    BlockSchedule& bs = s.blocks.at(1);
    // Depth alone would admit both fetches in stage 0; the single read port
    // per variable splits them.
    CHECK(siteStarts(*body, bs) == std::vector<int>{0, 1, 1});
    CHECK(bs.stageCount == 2);

    const Schedule tight = scheduleProgram(p, 2);
    CHECK(validateSchedule(p, tight).empty());
    CHECK(tight.blocks.at(1).depthViolations == std::vector<int>{0, 1});

    // Forcing the second fetch back into stage 0 must trip the validator.
    for (size_t i = 0; i < body->ops.size(); ++i)
    {
        if (body->ops[i].kind == IrOp::ReadShared && bs.ops[i].start == 1)
        {
            bs.ops[i] = {0, 0};
        }
    }
    bool port = false;
    for (const std::string& d : validateSchedule(p, s))
    {
        port = port || d.rfind("PortConflict", 0) == 0;
    }
    CHECK(port);
}

TEST_CASE("atomic blocks co-schedule their reads and their writes")
{
    const char* src = R"(
uint32 a;
uint32 b;

void main() {
  pipelined_for(4, [](uint32 i) {
    atomic {
      a = a + i;
      b = b + 17;
    }
  });
}
)";
    const IrProgram p = buildIr(load(src), LatencyTable{});
    const Schedule s = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, s).empty());

    const IrBlock* body = blockById(p, 1);
    REQUIRE(body != nullptr);
    const BlockSchedule& bs = s.blocks.at(1);
    REQUIRE(bs.regions.size() == 1);
    // Members never migrate for depth: the whole read-modify-write packs
    // into one stage (initiation interval 1) and the overload is reported.
    CHECK(bs.regions[0].firstStage == 0);
    CHECK(bs.regions[0].lastStage == 0);
    CHECK(bs.regions[0].span == 1);
    CHECK(bs.depthViolations == std::vector<int>{0});
    for (const int id : body->regions[0].ops)
    {
        CHECK(bs.ops[id].start == 0);
    }

    auto tamper = [&](IrOp::Kind kind, const std::string& expect) {
        Schedule bad = s;
        BlockSchedule& bb = bad.blocks.at(1);
        bb.stageCount = 2;
        for (const int id : body->regions[0].ops)
        {
            if (body->ops[id].kind == kind && body->ops[id].var == "b")
            {
                bb.ops[id] = {1, 1};
            }
        }
        bool hit = false;
        for (const std::string& d : validateSchedule(p, bad))
        {
            hit = hit || d.rfind(expect, 0) == 0;
        }
        CHECK(hit);
    };
    tamper(IrOp::WriteShared, "RegionWriteSplit");
    tamper(IrOp::ReadShared, "RegionReadSplit");
}

TEST_CASE("validator rejects order and predicate violations")
{
    const IrProgram ord = buildIr(loadCorpus("ordering.wf"), LatencyTable{});
    Schedule s = scheduleProgram(ord, 6);
    const IrBlock* body = blockById(ord, 1);
    for (size_t i = 0; i < body->ops.size(); ++i)
    {
        // Delay the second fetch past the first store.
        if (body->ops[i].kind == IrOp::ReadShared && body->ops[i].var == "y")
        {
            s.blocks.at(1).ops[i] = {2, 2};
        }
    }
    bool order = false;
    for (const std::string& d : validateSchedule(ord, s))
    {
        order = order || d.rfind("ProgramOrderViolation", 0) == 0;
    }
    CHECK(order);

    const IrProgram st = buildIr(loadCorpus("static.wf", kFull), LatencyTable{});
    Schedule s2 = scheduleProgram(st, 6);
    const IrBlock* stBody = blockById(st, 1);
    for (const int id : stBody->regions[0].ops)
    {
        const int pr = stBody->ops[id].pred;
        if (pr >= 0) { s2.blocks.at(1).ops[pr] = {2, 2}; }
    }
    bool late = false;
    for (const std::string& d : validateSchedule(st, s2))
    {
        late = late || d.rfind("RegionPredLate", 0) == 0;
    }
    CHECK(late);
}

TEST_CASE("wait evaluators schedule as one atomic stage")
{
    const IrProgram p = buildIr(loadCorpus("dynamic.wf", kSmall), LatencyTable{});
    const Schedule s = scheduleProgram(p, 6);
    CHECK(validateSchedule(p, s).empty());

    int waitBlocks = 0;
    for (const IrFunction& f : p.fns)
    {
        for (const IrBlock& b : f.blocks)
        {
            if (b.kind != IrBlock::WaitEval) { continue; }
            ++waitBlocks;
            const BlockSchedule& bs = s.blocks.at(b.id);
            CHECK(bs.stageCount == 1);
            for (size_t i = 0; i < b.ops.size(); ++i)
            {
                if (b.ops[i].kind != IrOp::Const && b.ops[i].kind != IrOp::Input)
                {
                    CHECK(bs.ops[i].start == 0);
                    CHECK(bs.ops[i].end == 0);
                }
            }
        }
    }
    CHECK(waitBlocks == 1);
}

TEST_CASE("schedules validate, repeat, and widen as the budget shrinks")
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
        const IrProgram p = buildIr(loadCorpus(name, consts), LatencyTable{});
        const Schedule tight = scheduleProgram(p, 2);
        const Schedule wide = scheduleProgram(p, 16);
        for (const Schedule* s : {&tight, &wide})
        {
            for (const std::string& d : validateSchedule(p, *s)) { CAPTURE(d); }
            CHECK(validateSchedule(p, *s).empty());
        }
        CHECK(dumpScheduleJson(p, tight) == dumpScheduleJson(p, scheduleProgram(p, 2)));
        for (const auto& [id, bs] : tight.blocks)
        {
            CHECK(bs.stageCount >= wide.blocks.at(id).stageCount);
        }
    }
}

TEST_CASE("stage placements match the frozen artifacts")
{
    const std::vector<std::pair<std::string, std::string>> cases = {
        {"replicated.wf", "replicated_sched.json"},
        {"static.wf", "static_sched.json"},
    };
    for (const auto& [src, golden] : cases)
    {
        CAPTURE(src);
        const IrProgram p = buildIr(loadCorpus(src, kFull), LatencyTable{});
        const Schedule s = scheduleProgram(p, 6);
        CHECK(dumpScheduleJson(p, s) == slurp(std::string(TESTDATA_DIR) + "/" + golden));
    }
}
