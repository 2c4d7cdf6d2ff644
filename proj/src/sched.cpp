#include "wavec/sched.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <limits>
#include <map>
#include <set>
#include <utility>

namespace wavec
{

namespace
{

bool isAccess(const IrOp& op)
{
    return op.kind == IrOp::ReadShared || op.kind == IrOp::WriteShared;
}

bool isAnchored(const IrOp& op)
{
    return op.kind != IrOp::Const && op.kind != IrOp::Input;
}

bool varIsRam(const IrProgram& p, const std::string& var)
{
    const int si = p.sharedIndex(var);
    return si >= 0 && p.shared[si].isRam;
}

void fillSiteGroups(const IrBlock& b, BlockSchedule& bs)
{
    std::map<int, std::vector<int>> byStage;
    for (size_t i = 0; i < b.ops.size(); ++i)
    {
        if (isAccess(b.ops[i])) { byStage[bs.ops[i].start].push_back(b.ops[i].site); }
    }
    for (auto& [stage, sites] : byStage)
    {
        if (sites.size() > 1) { bs.sameCycleSites.push_back(std::move(sites)); }
    }
}

void fillRegions(const IrBlock& b, BlockSchedule& bs)
{
    for (const IrRegion& r : b.regions)
    {
        RegionSched rs;
        rs.n = r.n;
        int lo = -1;
        int hi = 0;
        for (int id : r.ops)
        {
            const int s = bs.ops[id].start;
            lo = lo < 0 ? s : std::min(lo, s);
            hi = std::max(hi, s);
        }
        rs.firstStage = std::max(lo, 0);
        rs.lastStage = hi;
        rs.span = rs.lastStage - rs.firstStage + 1;
        bs.regions.push_back(rs);
    }
}

BlockSchedule scheduleBlock(const IrProgram& p, const IrBlock& b, const int budget)
{
    BlockSchedule bs;
    bs.block = b.id;
    const size_t n = b.ops.size();
    bs.ops.assign(n, OpSched{});

    if (b.kind == IrBlock::WaitEval)
    {
        // Wait expressions evaluate atomically in a single stage.
        for (size_t i = 0; i < n; ++i)
        {
            if (isAnchored(b.ops[i])) { bs.ops[i] = {0, 0}; }
        }
        bs.stageCount = 1;
        fillRegions(b, bs);
        fillSiteGroups(b, bs);
        return bs;
    }

    // An exclusive region must issue all its reads in one stage, which a
    // single array port cannot satisfy twice.
    for (const IrRegion& r : b.regions)
    {
        if (r.n != 1) { continue; }
        std::map<std::string, int> reads;
        for (const int id : r.ops)
        {
            const IrOp& op = b.ops[id];
            if (op.kind == IrOp::ReadShared && varIsRam(p, op.var) && ++reads[op.var] > 1)
            {
                fail("ScheduleError",
                     "exclusive region reads array '" + op.var + "' through two sites",
                     op.loc);
            }
        }
    }

    // Ops feeding a region predicate must settle by the region's entry stage,
    // and ops feeding a region write by its commit stage; depth pressure may
    // not push either past the region (it would stretch the region's span and
    // with it the initiation interval).
    std::vector<std::vector<bool>> predCone(b.regions.size(), std::vector<bool>(n, false));
    std::vector<std::vector<bool>> writeCone(b.regions.size(), std::vector<bool>(n, false));
    auto markCone = [&](std::vector<bool>& cone, std::vector<int> work) {
        while (!work.empty())
        {
            const int id = work.back();
            work.pop_back();
            if (cone[id]) { continue; }
            cone[id] = true;
            for (const int a : b.ops[id].args) { work.push_back(a); }
            if (b.ops[id].pred >= 0) { work.push_back(b.ops[id].pred); }
        }
    };
    for (size_t r = 0; r < b.regions.size(); ++r)
    {
        std::vector<int> preds;
        std::vector<int> writeArgs;
        for (const int id : b.regions[r].ops)
        {
            if (b.ops[id].pred >= 0) { preds.push_back(b.ops[id].pred); }
            if (b.ops[id].kind == IrOp::WriteShared)
            {
                for (const int a : b.ops[id].args) { writeArgs.push_back(a); }
            }
        }
        markCone(predCone[r], std::move(preds));
        markCone(writeCone[r], std::move(writeArgs));
    }

    // Minimum stage lead a region's writes keep over its reads, from the
    // longest value/predicate path between them (registered hops and op
    // latencies). Exclusive-region reads are dragged up to writes minus this
    // lead, collapsing the span (and so the initiation interval) whenever the
    // data allows it.
    std::vector<int> minLead(b.regions.size(), 0);
    for (size_t r = 0; r < b.regions.size(); ++r)
    {
        if (b.regions[r].n != 1) { continue; }
        constexpr int kFar = -(1 << 20);
        std::vector<int> d(n, kFar);
        for (const int id : b.regions[r].ops)
        {
            if (b.ops[id].kind == IrOp::ReadShared) { d[id] = 0; }
        }
        for (size_t i = 0; i < n; ++i)
        {
            const IrOp& op = b.ops[i];
            const int carry = op.registeredInput ? 1 : 0;
            for (const int a : op.args)
            {
                d[i] = std::max(d[i], d[a] + b.ops[a].latency + carry);
            }
            if (op.pred >= 0)
            {
                d[i] = std::max(d[i], d[op.pred] + b.ops[op.pred].latency);
            }
        }
        int lead = 0;
        for (const int id : b.regions[r].ops)
        {
            if (b.ops[id].kind == IrOp::WriteShared) { lead = std::max(lead, d[id]); }
        }
        minLead[r] = lead;
    }

    std::vector<int> start(n, 0);
    std::vector<int> end(n, 0);
    std::vector<int> writePin(b.regions.size(), 0);
    std::vector<int> readPin(b.regions.size(), 0);
    std::vector<int> predFloor(b.regions.size(), 0);

    bool stable = false;
    for (int sweep = 0; sweep < 64 && !stable; ++sweep)
    {
        // Group targets ratchet up from the previous sweep so co-scheduled
        // ops converge onto a common stage.
        for (size_t r = 0; r < b.regions.size(); ++r)
        {
            for (int id : b.regions[r].ops)
            {
                const IrOp& op = b.ops[id];
                if (op.pred >= 0) { predFloor[r] = std::max(predFloor[r], end[op.pred]); }
                if (op.kind == IrOp::WriteShared)
                {
                    writePin[r] = std::max(writePin[r], start[id]);
                }
                else { readPin[r] = std::max(readPin[r], start[id]); }
            }
            readPin[r] = std::max(readPin[r], writePin[r] - minLead[r]);
        }

        std::vector<int> firstPrev(b.regions.size(), 0);
        for (size_t r = 0; r < b.regions.size(); ++r)
        {
            int fp = std::numeric_limits<int>::max();
            for (const int id : b.regions[r].ops) { fp = std::min(fp, start[id]); }
            firstPrev[r] = fp;
        }

        std::map<int, int> load;                               // stage -> depth used
        std::map<std::pair<int, std::string>, int> rdPort;     // (stage, ram var) -> sites
        std::map<std::pair<int, std::string>, int> wrPort;
        std::vector<int> regionFirst(b.regions.size(), -1);
        std::vector<int> regionFloor(b.regions.size(), 0);
        std::map<std::string, int> lastWriteStage;
        std::map<std::string, int> lastWriteRegion;
        int prevOrder = 0;

        std::vector<int> ns(n, -1);
        std::vector<int> ne(n, -1);
        stable = true;
        for (size_t i = 0; i < n; ++i)
        {
            const IrOp& op = b.ops[i];
            if (!isAnchored(op)) { continue; }

            int lb = 0;
            const int carry = op.registeredInput ? 1 : 0;
            for (const int a : op.args) { lb = std::max(lb, ne[a] + carry); }
            if (op.pred >= 0) { lb = std::max(lb, ne[op.pred]); }

            const bool access = isAccess(op);
            const bool ram = access && varIsRam(p, op.var);
            bool pinned = false;
            if (access)
            {
                if (op.region >= 0)
                {
                    if (regionFirst[op.region] < 0) { regionFloor[op.region] = prevOrder; }
                    lb = std::max(lb, regionFloor[op.region]);
                    lb = std::max(lb, predFloor[op.region]);
                    if (op.kind == IrOp::WriteShared)
                    {
                        lb = std::max(lb, writePin[op.region]);
                        pinned = true;
                    }
                    else if (b.regions[op.region].n == 1)
                    {
                        lb = std::max(lb, readPin[op.region]);
                        pinned = true;
                    }
                }
                else { lb = std::max(lb, prevOrder); }
                // A write must land strictly before any later same-variable
                // access so the next stage observes the committed value.
                const auto lw = lastWriteStage.find(op.var);
                if (lw != lastWriteStage.end())
                {
                    const bool sameRegion =
                        op.region >= 0 && lastWriteRegion[op.var] == op.region;
                    if (!sameRegion) { lb = std::max(lb, lw->second + 1); }
                }
            }

            int bumpCap = std::numeric_limits<int>::max();
            for (size_t r = 0; r < b.regions.size(); ++r)
            {
                if (predCone[r][i]) { bumpCap = std::min(bumpCap, firstPrev[r]); }
                if (writeCone[r][i]) { bumpCap = std::min(bumpCap, writePin[r]); }
            }

            int s = lb;
            for (;;)
            {
                // The depth budget is soft: pinned ops, oversized ops, region
                // members (packing a region tight keeps its initiation
                // interval down), and region predicate support stay put and
                // the overloaded stage is reported instead.
                if (!pinned && op.region < 0 && op.depthCost > 0 &&
                    op.depthCost <= budget && load[s] + op.depthCost > budget && s < bumpCap)
                {
                    ++s;
                    continue;
                }
                if (ram)
                {
                    auto& port = op.kind == IrOp::WriteShared ? wrPort : rdPort;
                    if (port[{s, op.var}] >= 1)
                    {
                        ++s;
                        continue;
                    }
                }
                break;
            }

            load[s] += op.depthCost;
            if (ram)
            {
                auto& port = op.kind == IrOp::WriteShared ? wrPort : rdPort;
                ++port[{s, op.var}];
            }
            if (access)
            {
                if (op.region >= 0)
                {
                    regionFirst[op.region] = regionFirst[op.region] < 0
                                                 ? s
                                                 : std::min(regionFirst[op.region], s);
                    prevOrder = regionFirst[op.region];
                }
                else { prevOrder = s; }
                if (op.kind == IrOp::WriteShared)
                {
                    lastWriteStage[op.var] = s;
                    lastWriteRegion[op.var] = op.region;
                }
            }
            ns[i] = s;
            ne[i] = s + op.latency;
            if (ns[i] != start[i]) { stable = false; }
        }
        start = std::move(ns);
        end = std::move(ne);
    }
    if (!stable) { fail("InternalError", "schedule did not stabilize"); }

    int maxEnd = 0;
    std::map<int, int> load;
    for (size_t i = 0; i < n; ++i)
    {
        bs.ops[i] = {start[i], end[i]};
        if (!isAnchored(b.ops[i])) { continue; }
        maxEnd = std::max(maxEnd, end[i]);
        load[start[i]] += b.ops[i].depthCost;
    }
    bs.stageCount = maxEnd + 1;
    for (const auto& [stage, used] : load)
    {
        if (used > budget) { bs.depthViolations.push_back(stage); }
    }
    fillRegions(b, bs);
    fillSiteGroups(b, bs);
    return bs;
}

} // namespace

Schedule scheduleProgram(const IrProgram& prog, const int logicDepth)
{
    if (logicDepth < 1 || logicDepth > 1024)
    {
        fail("ConfigError", "logic depth must be between 1 and 1024");
    }
    Schedule s;
    s.logicDepth = logicDepth;
    for (const IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        for (const IrBlock& b : f.blocks)
        {
            s.blocks.emplace(b.id, scheduleBlock(prog, b, logicDepth));
        }
    }
    return s;
}

std::vector<std::string> validateSchedule(const IrProgram& prog, const Schedule& s)
{
    std::vector<std::string> out;
    auto flag = [&](const std::string& what, const IrBlock& b, const std::string& detail) {
        out.push_back(what + ": block " + std::to_string(b.id) + ", " + detail);
    };

    for (const IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        for (const IrBlock& b : f.blocks)
        {
            const auto it = s.blocks.find(b.id);
            if (it == s.blocks.end())
            {
                out.push_back("MissingBlock: block " + std::to_string(b.id));
                continue;
            }
            const BlockSchedule& bs = it->second;
            if (bs.ops.size() != b.ops.size() || bs.regions.size() != b.regions.size())
            {
                flag("ShapeMismatch", b, "op or region table size differs");
                continue;
            }
            if (b.kind == IrBlock::WaitEval)
            {
                // Wait expressions evaluate as one atomic stage.
                for (size_t i = 0; i < b.ops.size(); ++i)
                {
                    const bool anchored = isAnchored(b.ops[i]);
                    const OpSched want = anchored ? OpSched{0, 0} : OpSched{-1, -1};
                    if (bs.ops[i].start != want.start || bs.ops[i].end != want.end)
                    {
                        flag("BadStage", b, "op " + std::to_string(i) + " in a wait evaluator");
                    }
                }
                if (bs.stageCount != 1) { flag("BadStage", b, "multi-stage wait evaluator"); }
                continue;
            }

            const std::set<int> viol(bs.depthViolations.begin(), bs.depthViolations.end());
            std::map<int, int> load;
            std::map<std::pair<int, std::string>, int> rdPort;
            std::map<std::pair<int, std::string>, int> wrPort;

            for (size_t i = 0; i < b.ops.size(); ++i)
            {
                const IrOp& op = b.ops[i];
                const OpSched& os = bs.ops[i];
                if (!isAnchored(op))
                {
                    if (os.start != -1 || os.end != -1)
                    {
                        flag("BadAnchor", b, "op " + std::to_string(i) + " is staged");
                    }
                    continue;
                }
                if (os.start < 0 || os.end != os.start + op.latency ||
                    os.end >= bs.stageCount)
                {
                    flag("BadStage", b, "op " + std::to_string(i) + " outside the pipeline");
                    continue;
                }
                const int carry = op.registeredInput ? 1 : 0;
                for (const int a : op.args)
                {
                    if (os.start < bs.ops[a].end + carry)
                    {
                        flag("DataHazard", b,
                             "op " + std::to_string(i) + " starts before operand " +
                                 std::to_string(a) + " is ready");
                    }
                }
                if (op.pred >= 0 && os.start < bs.ops[op.pred].end)
                {
                    flag("PredLate", b, "op " + std::to_string(i) + " outruns its predicate");
                }
                load[os.start] += op.depthCost;
                if (isAccess(op) && varIsRam(prog, op.var))
                {
                    auto& port = op.kind == IrOp::WriteShared ? wrPort : rdPort;
                    if (++port[{os.start, op.var}] > 1)
                    {
                        flag("PortConflict", b,
                             "variable '" + op.var + "' at stage " + std::to_string(os.start));
                    }
                }
            }
            for (const auto& [stage, used] : load)
            {
                if (used > s.logicDepth && viol.count(stage) == 0)
                {
                    flag("DepthBudget", b,
                         "stage " + std::to_string(stage) + " uses " + std::to_string(used));
                }
            }

            // Region structure: one read stage (exclusive regions), one write
            // stage, predicates resolved on entry.
            for (size_t r = 0; r < b.regions.size(); ++r)
            {
                const IrRegion& reg = b.regions[r];
                const RegionSched& rs = bs.regions[r];
                int rdStage = -1;
                int wrStage = -1;
                for (const int id : reg.ops)
                {
                    const IrOp& op = b.ops[id];
                    const int st = bs.ops[id].start;
                    if (st < rs.firstStage || st > rs.lastStage)
                    {
                        flag("RegionBounds", b, "op " + std::to_string(id) + " leaves region " +
                                                    std::to_string(r));
                    }
                    if (op.kind == IrOp::WriteShared)
                    {
                        if (wrStage >= 0 && st != wrStage)
                        {
                            flag("RegionWriteSplit", b, "region " + std::to_string(r));
                        }
                        wrStage = st;
                    }
                    else
                    {
                        if (reg.n == 1 && rdStage >= 0 && st != rdStage)
                        {
                            flag("RegionReadSplit", b, "region " + std::to_string(r));
                        }
                        rdStage = st;
                    }
                    if (op.pred >= 0 && bs.ops[op.pred].end > rs.firstStage)
                    {
                        flag("RegionPredLate", b, "region " + std::to_string(r));
                    }
                }
                if (rs.span != rs.lastStage - rs.firstStage + 1 || rs.n != reg.n)
                {
                    flag("RegionBounds", b, "region " + std::to_string(r) + " extent mismatch");
                }
            }

            // Program order over sites: later sites never observe an earlier
            // stage; region members count as one macro-site at entry.
            int prevOrder = 0;
            int prevSite = -1;
            std::map<std::string, std::pair<int, int>> lastWrite; // var -> (stage, region)
            for (size_t i = 0; i < b.ops.size(); ++i)
            {
                const IrOp& op = b.ops[i];
                if (!isAccess(op)) { continue; }
                const int orderStage =
                    op.region >= 0 ? bs.regions[op.region].firstStage : bs.ops[i].start;
                if (orderStage < prevOrder)
                {
                    flag("ProgramOrderViolation", b,
                         "site " + std::to_string(op.site) + " precedes site " +
                             std::to_string(prevSite));
                }
                prevOrder = orderStage;
                prevSite = op.site;
                const auto lw = lastWrite.find(op.var);
                if (lw != lastWrite.end())
                {
                    const bool sameRegion = op.region >= 0 && lw->second.second == op.region;
                    if (!sameRegion && bs.ops[i].start <= lw->second.first)
                    {
                        flag("ProgramOrderViolation", b,
                             "site " + std::to_string(op.site) +
                                 " does not follow the prior write to '" + op.var + "'");
                    }
                }
                if (op.kind == IrOp::WriteShared)
                {
                    lastWrite[op.var] = {bs.ops[i].start, op.region};
                }
            }
        }
    }
    return out;
}

std::string dumpScheduleJson(const IrProgram& prog, const Schedule& s)
{
    nlohmann::json root;
    root["schema"] = 1;
    root["logic-depth"] = s.logicDepth;
    nlohmann::json blocks = nlohmann::json::array();
    for (const IrFunction& f : prog.fns)
    {
        if (f.removed) { continue; }
        for (const IrBlock& b : f.blocks)
        {
            const BlockSchedule& bs = s.blocks.at(b.id);
            nlohmann::json jb;
            jb["id"] = b.id;
            jb["kind"] = b.kind == IrBlock::WaitEval ? "wait-eval" : "stage";
            jb["stage-count"] = bs.stageCount;
            nlohmann::json ops = nlohmann::json::array();
            for (const OpSched& os : bs.ops)
            {
                ops.push_back({{"start", os.start}, {"end", os.end}});
            }
            jb["ops"] = std::move(ops);
            nlohmann::json regions = nlohmann::json::array();
            for (const RegionSched& rs : bs.regions)
            {
                regions.push_back({{"first-stage", rs.firstStage},
                                   {"last-stage", rs.lastStage},
                                   {"span", rs.span},
                                   {"n", rs.n},
                                   {"ii", (rs.span + rs.n - 1) / rs.n}});
            }
            jb["regions"] = std::move(regions);
            jb["same-cycle-sites"] = bs.sameCycleSites;
            jb["depth-violations"] = bs.depthViolations;
            blocks.push_back(std::move(jb));
        }
    }
    root["blocks"] = std::move(blocks);
    return root.dump(2) + "\n";
}

} // namespace wavec
