#include "wavec/eval.hpp"

#include <cassert>
#include <cmath>
#include <cstdint>

namespace wavec
{

namespace
{

int64_t shiftLeft(const int64_t v, const int64_t amt, const EType& res)
{
    if (amt < 0 || amt >= res.bits())
    {
        return 0;
    }
    return static_cast<int64_t>(static_cast<uint64_t>(v) << static_cast<uint64_t>(amt));
}

int64_t shiftRight(const int64_t v, const int64_t amt, const EType& res)
{
    if (amt < 0 || amt >= res.bits())
    {
        return (res.isSigned && v < 0) ? -1 : 0;
    }
    if (res.isSigned)
    {
        return v >> amt; // operands are kept sign-extended, so this is arithmetic
    }
    return static_cast<int64_t>(static_cast<uint64_t>(v) >> static_cast<uint64_t>(amt));
}

} // namespace

Value evalBinOp(const std::string& op, const Value& a, const Value& b,
                const EType& opnd, const EType& res)
{
    if (op == "feq")
    {
        return Value::ofInt(a.bitsEqual(b) ? 1 : 0);
    }
    if (opnd.kind == EType::F32)
    {
        const float x = a.f;
        const float y = b.f;
        if (op == "+") return Value::ofFloat(x + y);
        if (op == "-") return Value::ofFloat(x - y);
        if (op == "*") return Value::ofFloat(x * y);
        if (op == "/") return Value::ofFloat(x / y);
        if (op == "==") return Value::ofInt(x == y ? 1 : 0);
        if (op == "!=") return Value::ofInt(x != y ? 1 : 0);
        if (op == "<") return Value::ofInt(x < y ? 1 : 0);
        if (op == "<=") return Value::ofInt(x <= y ? 1 : 0);
        if (op == ">") return Value::ofInt(x > y ? 1 : 0);
        if (op == ">=") return Value::ofInt(x >= y ? 1 : 0);
        assert(false && "bad float op");
    }

    const int64_t x = a.i;
    const int64_t y = b.i;
    int64_t r = 0;
    if (op == "+") r = static_cast<int64_t>(static_cast<uint64_t>(x) + static_cast<uint64_t>(y));
    else if (op == "-") r = static_cast<int64_t>(static_cast<uint64_t>(x) - static_cast<uint64_t>(y));
    else if (op == "*") r = static_cast<int64_t>(static_cast<uint64_t>(x) * static_cast<uint64_t>(y));
    else if (op == "/")
    {
        if (y == 0) r = 0;
        else if (opnd.isSigned) r = x / y;
        else r = static_cast<int64_t>(static_cast<uint64_t>(x) / static_cast<uint64_t>(y));
    }
    else if (op == "%")
    {
        if (y == 0) r = 0;
        else if (opnd.isSigned) r = x % y;
        else r = static_cast<int64_t>(static_cast<uint64_t>(x) % static_cast<uint64_t>(y));
    }
    else if (op == "<<") r = shiftLeft(x, y, res);
    else if (op == ">>") r = shiftRight(x, y, res);
    else if (op == "&") r = x & y;
    else if (op == "|") r = x | y;
    else if (op == "^") r = x ^ y;
    else if (op == "==") return Value::ofInt(x == y ? 1 : 0);
    else if (op == "!=") return Value::ofInt(x != y ? 1 : 0);
    else if (op == "<") return Value::ofInt(x < y ? 1 : 0);
    else if (op == "<=") return Value::ofInt(x <= y ? 1 : 0);
    else if (op == ">") return Value::ofInt(x > y ? 1 : 0);
    else if (op == ">=") return Value::ofInt(x >= y ? 1 : 0);
    else if (op == "&&") return Value::ofInt((x != 0 && y != 0) ? 1 : 0);
    else if (op == "||") return Value::ofInt((x != 0 || y != 0) ? 1 : 0);
    else assert(false && "bad int op");
    return Value::ofInt(wrapInt(r, res.bits(), res.isSigned));
}

Value evalUnOp(const std::string& op, const Value& a, const EType& res)
{
    if (res.kind == EType::F32 && op == "-")
    {
        return Value::ofFloat(-a.f);
    }
    if (op == "!")
    {
        return Value::ofInt(a.i == 0 ? 1 : 0);
    }
    if (op == "-")
    {
        return Value::ofInt(wrapInt(-a.i, res.bits(), res.isSigned));
    }
    if (op == "~")
    {
        return Value::ofInt(wrapInt(~a.i, res.bits(), res.isSigned));
    }
    if (op == "cvt")
    {
        return Value::ofInt(wrapInt(a.i, res.bits(), res.isSigned));
    }
    assert(false && "bad unop");
    return a;
}

Value convertValue(const Value& v, const EType& from, const EType& to)
{
    if (to.kind == EType::F32)
    {
        if (from.kind == EType::F32)
        {
            return v;
        }
        return Value::ofFloat(from.isSigned ? static_cast<float>(v.i)
                                            : static_cast<float>(static_cast<uint64_t>(v.i)));
    }
    assert(from.kind != EType::F32 && "no float->int conversion");
    return Value::ofInt(wrapInt(v.i, to.bits(), to.isSigned));
}

} // namespace wavec
