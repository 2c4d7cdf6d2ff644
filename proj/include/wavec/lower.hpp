// Hardware realization of a scheduled program: every basic block becomes a
// fixed stage pipeline, every control edge a FIFO or direct wire, and the
// dispatch/collection, loop, wait and region-credit machinery become explicit
// controller nodes. The simulator executes this graph; the resource report
// summarizes what it would cost.
#pragma once

#include "wavec/ir.hpp"
#include "wavec/sched.hpp"

#include <map>
#include <string>
#include <vector>

namespace wavec
{

struct GraphNode
{
    enum Kind
    {
        StagePipe,      // one block as fixed-latency stages
        Fifo,           // elastic buffer; role says which edge it realizes
        Dispatch,       // expands (count, args) into indexed threads, one per cycle
        Collect,        // holds the caller until its whole group returned
        LoopArbiter,    // merges loopback (strict priority) and entry threads
        WaitEvaluator,  // head-of-line conditional evaluator
        RegionGuard,    // credit counter bounding region occupancy
        RateLimiter,    // at most one function entry per ii cycles
        ReturnDispatch  // routes returns back to their call site
    };

    int id = -1;
    Kind kind = StagePipe;
    std::string name;
    int fn = -1;
    int block = -1;     // StagePipe/WaitEvaluator: block id; RegionGuard: owner
    int stages = 0;     // StagePipe
    int capacity = 0;   // Fifo (a reorder buffer of the same depth when ordered)
    int widthBits = 0;  // Fifo payload width
    std::string role;   // Fifo: arg | ret | ctx | entry | loopback | exit | wait
    int credits = 0;    // RegionGuard
    int span = 0;       // RegionGuard
    int region = -1;    // RegionGuard: region index within the block
    int ii = 0;         // RateLimiter
    int callee = -1;    // Dispatch/Collect/ReturnDispatch
    int callSite = -1;  // Dispatch/Collect/Fifo-ctx
    bool ordered = false; // exit Fifo: release in loop-entry order
    int loopId = -1;
    bool doMode = false;  // Dispatch: pipelined_do launch-flag protocol
};

struct GraphEdge
{
    int from = -1;
    int to = -1;
    std::string kind; // flow | credit
};

// Which shared variables a node touches, by static site.
struct StoreBinding
{
    int node = -1;
    std::string var;
    std::vector<int> sites;
};

struct ResourceReport
{
    int stageCount = 0;
    int64_t pipelineRegisterBits = 0;
    int fifoCount = 0;
    int64_t fifoBits = 0;
    int ramCount = 0;
    int64_t ramBits = 0;
    int fsmCount = 0;
};

// Wiring shortcuts the simulator follows when a thread leaves a block.
struct BlockWiring
{
    int pipe = -1;         // this block's own node
    int succPipe = -1;     // direct-wire successor (Goto, async parent path)
    int retFifo = -1;      // Ret: function return fifo
    int argFifo = -1;      // calls/spawn: callee argument fifo
    int ctxFifo = -1;      // calls: caller context fifo
    int dispatch = -1;
    int collect = -1;
    int entryFifo = -1;    // LoopEnter
    int loopbackFifo = -1; // LoopBack (true path)
    int exitFifo = -1;     // LoopBack (false path)
    int waitFifo = -1;     // Wait
    int waitEval = -1;
};

struct CallSiteInfo
{
    int id = -1;
    IrTerm::Kind kind = IrTerm::NormCall;
    int callee = -1;
    int callerFn = -1;
    int callerBlock = -1;
    int succBlock = -1; // continuation in the caller (-1: none)
    int dispatch = -1;
    int collect = -1;
    int ctxFifo = -1;
    int retSlot = -1;
};

struct FnWiring
{
    int argFifo = -1;
    int retFifo = -1;
    int retDispatch = -1;
    int rateLimiter = -1; // -1 when the function is unconstrained
};

struct PipelineGraph
{
    std::vector<GraphNode> nodes;
    std::vector<GraphEdge> edges;
    std::vector<StoreBinding> bindings;
    ResourceReport report;

    std::map<int, BlockWiring> blocks;   // by block id
    std::map<int, FnWiring> fns;         // by function index
    std::map<int, CallSiteInfo> sites;   // by call-site id
    std::map<int, std::vector<int>> regionGuards; // block id -> guard node ids
    std::map<int, int> loopArbiter;      // loop id -> arbiter node id
};

struct LowerOptions
{
    int fifoCapacity = 2;                     // applies to every role by default
    std::map<std::string, int> roleCapacity;  // per-role override
};

PipelineGraph lowerProgram(const IrProgram& prog, const Schedule& sched,
                           const LowerOptions& opt = {});

// JSON artifact (schema 1): nodes, edges, shared-store bindings, report.
std::string dumpGraphJson(const PipelineGraph& g);

// Graphviz rendering of the same graph.
std::string dumpGraphDot(const PipelineGraph& g);

} // namespace wavec
