#include "wavec/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

namespace wavec
{

std::string Diag::str() const
{
    std::ostringstream os;
    os << code;
    if (loc.line > 0)
    {
        os << " at " << loc.line << ":" << loc.col;
    }
    os << ": " << msg;
    return os.str();
}

CompileError::CompileError(Diag d) : std::runtime_error(d.str()), diag(std::move(d)) {}

void fail(const std::string& code, const std::string& msg, SrcLoc loc)
{
    throw CompileError(Diag{code, msg, loc});
}

int64_t EType::bits() const
{
    switch (kind)
    {
    case Void: return 0;
    case Bool: return 1;
    case Int: return width;
    case F32: return 32;
    case Array: return len * elem->bits();
    case Record:
    {
        int64_t n = 0;
        for (const auto& f : fields)
        {
            n += f.second->bits();
        }
        return n;
    }
    }
    return 0;
}

std::string EType::str() const
{
    switch (kind)
    {
    case Void: return "void";
    case Bool: return "bool";
    case Int: return (isSigned ? "int" : "uint") + std::to_string(width);
    case F32: return "float32";
    case Array: return elem->str() + "[" + std::to_string(len) + "]";
    case Record:
    {
        std::string s = "{";
        for (size_t i = 0; i < fields.size(); ++i)
        {
            if (i) s += ",";
            s += fields[i].second->str();
            s += " ";
            s += fields[i].first;
        }
        return s + "}";
    }
    }
    return "?";
}

bool EType::same(const EType& o) const
{
    if (kind != o.kind) return false;
    switch (kind)
    {
    case Void:
    case Bool:
    case F32: return true;
    case Int: return width == o.width && isSigned == o.isSigned;
    case Array: return len == o.len && elem->same(*o.elem);
    case Record:
        if (fields.size() != o.fields.size()) return false;
        for (size_t i = 0; i < fields.size(); ++i)
        {
            if (fields[i].first != o.fields[i].first) return false;
            if (!fields[i].second->same(*o.fields[i].second)) return false;
        }
        return true;
    }
    return false;
}

ETypeP tVoid()
{
    static ETypeP t = std::make_shared<EType>();
    return t;
}

ETypeP tBool()
{
    auto t = std::make_shared<EType>();
    t->kind = EType::Bool;
    t->width = 1;
    return t;
}

ETypeP tInt(int width, bool isSigned)
{
    auto t = std::make_shared<EType>();
    t->kind = EType::Int;
    t->width = width;
    t->isSigned = isSigned;
    return t;
}

ETypeP tF32()
{
    auto t = std::make_shared<EType>();
    t->kind = EType::F32;
    return t;
}

ETypeP tArray(ETypeP elem, int64_t len)
{
    auto t = std::make_shared<EType>();
    t->kind = EType::Array;
    t->elem = std::move(elem);
    t->len = len;
    return t;
}

int64_t wrapInt(int64_t v, int width, bool isSigned)
{
    if (width >= 64)
    {
        return v;
    }
    uint64_t mask = (uint64_t(1) << width) - 1;
    uint64_t u = uint64_t(v) & mask;
    if (isSigned && (u >> (width - 1)))
    {
        return int64_t(u | ~mask); // sign-extend
    }
    return int64_t(u);
}

bool Value::bitsEqual(const Value& o) const
{
    if (kind != o.kind) return false;
    switch (kind)
    {
    case I: return i == o.i;
    case F:
    {
        uint32_t a, b;
        std::memcpy(&a, &f, 4);
        std::memcpy(&b, &o.f, 4);
        return a == b;
    }
    case A:
        if (elems.size() != o.elems.size()) return false;
        for (size_t k = 0; k < elems.size(); ++k)
        {
            if (!elems[k].bitsEqual(o.elems[k])) return false;
        }
        return true;
    }
    return false;
}

bool operator==(const Value& a, const Value& b)
{
    return a.bitsEqual(b);
}

bool operator<(const Value& a, const Value& b)
{
    if (a.kind != b.kind) return a.kind < b.kind;
    switch (a.kind)
    {
    case Value::I: return a.i < b.i;
    case Value::F:
    {
        uint32_t x, y;
        std::memcpy(&x, &a.f, 4);
        std::memcpy(&y, &b.f, 4);
        return x < y;
    }
    case Value::A:
        return std::lexicographical_compare(a.elems.begin(), a.elems.end(),
                                            b.elems.begin(), b.elems.end());
    }
    return false;
}

std::string Value::str() const
{
    switch (kind)
    {
    case I: return std::to_string(i);
    case F:
    {
        char buf[48];
        snprintf(buf, sizeof buf, "%.9g", double(f));
        return buf;
    }
    case A:
    {
        std::string s = "[";
        for (size_t k = 0; k < elems.size(); ++k)
        {
            if (k) s += ",";
            s += elems[k].str();
        }
        return s + "]";
    }
    }
    return "?";
}

Value zeroOf(const EType& t)
{
    switch (t.kind)
    {
    case EType::F32: return Value::ofFloat(0.0f);
    case EType::Array:
    {
        Value v;
        v.kind = Value::A;
        v.elems.assign(size_t(t.len), zeroOf(*t.elem));
        return v;
    }
    case EType::Record:
    {
        Value v;
        v.kind = Value::A;
        for (const auto& f : t.fields)
        {
            v.elems.push_back(zeroOf(*f.second));
        }
        return v;
    }
    default: return Value::ofInt(0);
    }
}

int64_t ulpDistance(float a, float b)
{
    if (std::isnan(a) || std::isnan(b))
    {
        return INT64_MAX;
    }
    int32_t ia, ib;
    std::memcpy(&ia, &a, 4);
    std::memcpy(&ib, &b, 4);
    // Map the sign-magnitude float ordering onto a monotone integer line.
    int64_t ka = ia >= 0 ? ia : int64_t(INT32_MIN) - ia;
    int64_t kb = ib >= 0 ? ib : int64_t(INT32_MIN) - ib;
    return ka >= kb ? ka - kb : kb - ka;
}

} // namespace wavec
