#pragma once

#include "wavec/ir.hpp"

#include <map>
#include <string>
#include <vector>

namespace wavec
{

// Stage placement for one op: start = stage where operands are consumed,
// end = stage where the result is available (same stage for combinational
// results). Constants and pipeline inputs are available before stage 0 and
// carry -1/-1.
struct OpSched
{
    int start = -1;
    int end = -1;
};

// Stage extent of one region within its block; a thread holds the region's
// credit from firstStage through lastStage.
struct RegionSched
{
    int firstStage = 0;
    int lastStage = 0;
    int span = 1;
    int n = 1;
};

struct BlockSchedule
{
    int block = -1;
    std::vector<OpSched> ops; // indexed like IrBlock::ops
    int stageCount = 1;
    std::vector<RegionSched> regions;
    std::vector<std::vector<int>> sameCycleSites; // site ids sharing a start stage
    std::vector<int> depthViolations;             // stages exceeding the soft depth budget
};

struct Schedule
{
    int logicDepth = 6;
    std::map<int, BlockSchedule> blocks; // keyed by global block id
};

// Computes a per-block wavefront schedule; deterministic for a given program
// and depth budget.
Schedule scheduleProgram(const IrProgram& prog, int logicDepth);

// Re-checks a schedule against the program independently of how it was
// produced; returns human-readable diagnostics (empty when clean).
std::vector<std::string> validateSchedule(const IrProgram& prog, const Schedule& s);

std::string dumpScheduleJson(const IrProgram& prog, const Schedule& s);

} // namespace wavec
