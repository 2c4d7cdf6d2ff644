// Reference semantics independent of the pipeline machinery: a serialized
// interpreter (each thread runs to completion before its successor starts)
// and a bounded enumerator of every final state reachable under the
// thread-ordering rules.
#pragma once

#include "wavec/elab.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace wavec
{

using SharedState = std::map<std::string, Value>;

// Canonical member of the valid-execution set. Throws on deadlock (a wait
// that can never pass when running alone), out-of-bounds access, or runaway
// loops.
SharedState interpretSerialized(const ElabProgram& prog, const SharedState& inputs);

// Plain sequential reading of the program; identical engine to the serialized
// interpreter (one thread at a time *is* the sequential reading). Kept as a
// separate name because tests use it as the functional-correctness oracle.
SharedState interpretSequential(const ElabProgram& prog, const SharedState& inputs);

struct EnumBounds
{
    int maxThreads = 4;
    int maxCycles = 64;
    int maxStates = 200000;
};

// Exact set of final shared states reachable under: per-thread program order,
// per-site thread order, region occupancy, and same-cycle region writes.
// Throws BoundsExceeded for programs outside the supported fragment or
// exceeding the bounds.
std::set<SharedState> enumerateExecutions(const ElabProgram& prog, const SharedState& inputs,
                                          const EnumBounds& bounds);

} // namespace wavec
