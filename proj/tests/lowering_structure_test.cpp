// Pipeline-graph structure: block pipelines glued by FIFOs and controller
// nodes, region guards with the scheduled spans, and the resource report's
// orderings across the histogram variants.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "wavec/lower.hpp"

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

ElabProgram load(const std::string& src, const ConstBindings& consts = {})
{
    const Module m = parseModule(src);
    checkModule(m);
    return elaborate(m, consts, "");
}

struct Built
{
    IrProgram ir;
    Schedule sched;
    PipelineGraph graph;
};

Built build(const std::string& src, const ConstBindings& consts = {},
            const LowerOptions& opt = {})
{
    Built b;
    b.ir = buildIr(load(src, consts), LatencyTable{});
    b.sched = scheduleProgram(b.ir, 6);
    b.graph = lowerProgram(b.ir, b.sched, opt);
    return b;
}

Built buildCorpus(const std::string& name, const ConstBindings& consts,
                  const LowerOptions& opt = {})
{
    return build(slurp(std::string(CORPUS_DIR) + "/" + name), consts, opt);
}

const ConstBindings kSmall = {{"N", 16}, {"SIZE", 8}, {"THRESHOLD", 2}, {"L", 4}};
const ConstBindings kFull = {{"N", 512}, {"SIZE", 32}, {"THRESHOLD", 8}, {"L", 8}};

int countKind(const PipelineGraph& g, const GraphNode::Kind k)
{
    int n = 0;
    for (const GraphNode& node : g.nodes) { n += node.kind == k ? 1 : 0; }
    return n;
}

const GraphNode* findKind(const PipelineGraph& g, const GraphNode::Kind k)
{
    for (const GraphNode& node : g.nodes)
    {
        if (node.kind == k) { return &node; }
    }
    return nullptr;
}

} // namespace

TEST_CASE("every block becomes one node and every edge one fifo or wire")
{
    const std::pair<const char*, ConstBindings> programs[] = {
        {"ordering.wf", {}},           {"static.wf", kSmall},
        {"dynamic.wf", kSmall},        {"replicated.wf", kSmall},
        {"speculative.wf", kSmall},    {"map_reduce.wf", {}},
        {"cond_ordering.wf", {}},
    };
    for (const auto& [name, consts] : programs)
    {
        CAPTURE(name);
        const Built b = buildCorpus(name, consts);
        int blockCount = 0;
        for (const IrFunction& fn : b.ir.fns)
        {
            if (fn.removed) { continue; }
            blockCount += int(fn.blocks.size());
            for (const IrBlock& blk : fn.blocks)
            {
                REQUIRE(b.graph.blocks.count(blk.id) == 1);
                const GraphNode& n = b.graph.nodes[b.graph.blocks.at(blk.id).pipe];
                CHECK(n.block == blk.id);
                CHECK(n.stages == b.sched.blocks.at(blk.id).stageCount);
                CHECK((n.kind == (blk.kind == IrBlock::WaitEval ? GraphNode::WaitEvaluator
                                                                : GraphNode::StagePipe)));
            }
        }
        CHECK(countKind(b.graph, GraphNode::StagePipe) +
                  countKind(b.graph, GraphNode::WaitEvaluator) ==
              blockCount);
        for (const GraphEdge& e : b.graph.edges)
        {
            REQUIRE(e.from >= 0);
            REQUIRE(e.from < int(b.graph.nodes.size()));
            REQUIRE(e.to >= 0);
            REQUIRE(e.to < int(b.graph.nodes.size()));
        }
        // Artifact determinism: rebuilding dumps byte-identical JSON.
        const Built again = buildCorpus(name, consts);
        CHECK(dumpGraphJson(b.graph) == dumpGraphJson(again.graph));
        CHECK(dumpGraphJson(b.graph).find("\"schema\": 1") != std::string::npos);
    }
}

TEST_CASE("call sites get dispatch, collect, and context plumbing")
{
    const Built b = buildCorpus("static.wf", kFull);
    CHECK(countKind(b.graph, GraphNode::Dispatch) == 1);
    CHECK(countKind(b.graph, GraphNode::Collect) == 1);
    CHECK(countKind(b.graph, GraphNode::ReturnDispatch) == 2);

    const GraphNode* rate = findKind(b.graph, GraphNode::RateLimiter);
    REQUIRE(rate != nullptr);
    CHECK(rate->ii == 8);

    const GraphNode* guard = findKind(b.graph, GraphNode::RegionGuard);
    REQUIRE(guard != nullptr);
    CHECK(guard->credits == 1);
    CHECK(guard->span == 8);

    // The hidden call-site id travels with every argument token.
    bool sawArg = false;
    for (const GraphNode& n : b.graph.nodes)
    {
        if (n.kind == GraphNode::Fifo && n.role == "arg" && n.name == "arg:body")
        {
            sawArg = true;
            CHECK(n.capacity == 2);
            CHECK(n.widthBits == 32 + 8);
        }
    }
    CHECK(sawArg);
}

TEST_CASE("loops lower to an arbiter with entry, loopback, and ordered exit")
{
    const Built b = buildCorpus("replicated.wf", kFull);
    CHECK(countKind(b.graph, GraphNode::Dispatch) == 2);
    CHECK(countKind(b.graph, GraphNode::Collect) == 2);
    CHECK(countKind(b.graph, GraphNode::LoopArbiter) == 1);

    const GraphNode* guard = findKind(b.graph, GraphNode::RegionGuard);
    REQUIRE(guard != nullptr);
    CHECK(guard->credits == 8);
    CHECK(guard->span == 8);

    int entry = 0, loopback = 0, exits = 0;
    for (const GraphNode& n : b.graph.nodes)
    {
        if (n.kind != GraphNode::Fifo) { continue; }
        entry += n.role == "entry" ? 1 : 0;
        loopback += n.role == "loopback" ? 1 : 0;
        if (n.role == "exit")
        {
            ++exits;
            CHECK(n.ordered); // plain `for` keeps entry order at its exit
        }
    }
    CHECK(entry == 1);
    CHECK(loopback == 1);
    CHECK(exits == 1);

    // The arbiter merges both fifos and feeds the body plus the bypass path.
    const int ar = b.graph.loopArbiter.begin()->second;
    int in = 0, out = 0;
    for (const GraphEdge& e : b.graph.edges)
    {
        in += e.to == ar ? 1 : 0;
        out += e.from == ar && e.kind == "flow" ? 1 : 0;
    }
    CHECK(in == 2);
    CHECK(out == 2);
}

TEST_CASE("wait sites lower to a head-of-line evaluator")
{
    const Built b = buildCorpus("dynamic.wf", kFull);
    CHECK(countKind(b.graph, GraphNode::WaitEvaluator) == 1);
    const GraphNode* wf = nullptr;
    for (const GraphNode& n : b.graph.nodes)
    {
        if (n.kind == GraphNode::Fifo && n.role == "wait") { wf = &n; }
    }
    REQUIRE(wf != nullptr);
    const GraphNode* we = findKind(b.graph, GraphNode::WaitEvaluator);
    bool feeds = false;
    for (const GraphEdge& e : b.graph.edges)
    {
        feeds = feeds || (e.from == wf->id && e.to == we->id);
    }
    CHECK(feeds);
    // The evaluator owns the lock sites: a read and a conditional write.
    bool lockBinding = false;
    for (const StoreBinding& sb : b.graph.bindings)
    {
        if (sb.node == we->id && sb.var == "locks") { lockBinding = sb.sites.size() == 2; }
    }
    CHECK(lockBinding);
}

TEST_CASE("fifo capacity follows the global and per-role configuration")
{
    LowerOptions opt;
    opt.fifoCapacity = 5;
    opt.roleCapacity["loopback"] = 3;
    const Built b = buildCorpus("replicated.wf", kSmall, opt);
    for (const GraphNode& n : b.graph.nodes)
    {
        if (n.kind != GraphNode::Fifo) { continue; }
        CHECK(n.capacity == (n.role == "loopback" ? 3 : 5));
    }
}

TEST_CASE("resource report reproduces the cost orderings across variants")
{
    const ResourceReport stat = buildCorpus("static.wf", kFull).graph.report;
    const ResourceReport dyn = buildCorpus("dynamic.wf", kFull).graph.report;
    const ResourceReport rep = buildCorpus("replicated.wf", kFull).graph.report;
    const ResourceReport spec = buildCorpus("speculative.wf", kFull).graph.report;

    // Replication multiplies the mutable histogram storage.
    CHECK(rep.ramBits >= 2 * stat.ramBits);
    // Dynamic scheduling and speculation both pay in registers and queues.
    CHECK(dyn.pipelineRegisterBits + dyn.fifoBits > stat.pipelineRegisterBits + stat.fifoBits);
    CHECK(spec.pipelineRegisterBits + spec.fifoBits > stat.pipelineRegisterBits + stat.fifoBits);
    CHECK(dyn.fsmCount > stat.fsmCount);
    for (const ResourceReport* r : {&stat, &dyn, &rep, &spec})
    {
        CHECK(r->ramCount >= 1);
        CHECK(r->stageCount >= 2);
        CHECK(r->fifoCount >= 4);
    }
}

TEST_CASE("an empty program still has its argument and return queues")
{
    const Built b = build("void main() {}");
    CHECK(b.graph.report.stageCount == 1);
    CHECK(b.graph.report.fifoCount >= 2);
    CHECK(b.graph.report.ramCount == 0);
    CHECK(b.graph.report.fsmCount == 1); // just the return dispatcher
}

TEST_CASE("graphviz export names every node once")
{
    const Built b = buildCorpus("dynamic.wf", kSmall);
    const std::string dot = dumpGraphDot(b.graph);
    CHECK(dot.rfind("digraph", 0) == 0);
    for (const GraphNode& n : b.graph.nodes)
    {
        CHECK(dot.find("n" + std::to_string(n.id) + " [shape=") != std::string::npos);
    }
}
