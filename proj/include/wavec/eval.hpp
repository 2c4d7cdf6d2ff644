// Scalar operator semantics shared by constant folding, the reference
// interpreters and the simulator. Integer ops wrap two's-complement at the
// result width; float ops are IEEE float32; division by zero yields 0; shift
// amounts >= width yield 0 (or the sign fill for arithmetic right shifts).
#pragma once

#include "wavec/core.hpp"

#include <string>

namespace wavec
{

// opnd: unified operand type; res: result type (differs from opnd for
// comparisons, which produce bool).
Value evalBinOp(const std::string& op, const Value& a, const Value& b,
                const EType& opnd, const EType& res);

Value evalUnOp(const std::string& op, const Value& a, const EType& res);

// Width/sign conversion (int<->int re-wrap; flexible-literal int->float).
Value convertValue(const Value& v, const EType& from, const EType& to);

} // namespace wavec
