// Core shared definitions: source locations, diagnostics, semantic types and
// runtime values. Everything downstream (frontend, IR, scheduler, simulator,
// oracle) works in terms of these.
#pragma once

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace wavec
{

struct SrcLoc
{
    int line = 0;
    int col = 0;
};

// One structured diagnostic. `code` is a stable machine-readable tag
// (e.g. "ParseError", "TypeError", "WavefrontViolation"); tests match on it.
struct Diag
{
    std::string code;
    std::string msg;
    SrcLoc loc;

    std::string str() const;
};

struct CompileError : std::runtime_error
{
    Diag diag;
    explicit CompileError(Diag d);
};

[[noreturn]] void fail(const std::string& code, const std::string& msg, SrcLoc loc = {});

// ---------------------------------------------------------------------------
// Semantic types. Kept deliberately small: bool, fixed-width ints (1..64),
// float32, fixed-length arrays, record types (structs), and void for
// functions without a result. Function types exist only pre-elaboration.
// ---------------------------------------------------------------------------
struct EType;
using ETypeP = std::shared_ptr<EType>;

struct EType
{
    enum Kind
    {
        Void,
        Bool,
        Int,
        F32,
        Array,
        Record,
    };

    Kind kind = Void;
    int width = 0;        // Int
    bool isSigned = false;
    ETypeP elem;          // Array
    int64_t len = 0;
    std::vector<std::pair<std::string, ETypeP>> fields; // Record

    bool isInt() const { return kind == Int; }
    bool isNumeric() const { return kind == Int || kind == F32; }
    // Bits of storage one value of this type occupies (registers, FIFO slots).
    int64_t bits() const;
    std::string str() const;
    bool same(const EType& o) const;
};

ETypeP tVoid();
ETypeP tBool();
ETypeP tInt(int width, bool isSigned);
ETypeP tF32();
ETypeP tArray(ETypeP elem, int64_t len);

// ---------------------------------------------------------------------------
// Runtime values. Integers are stored normalized to their declared width
// (two's complement wrap-around on every operation; signed values are kept
// sign-extended in the int64 so comparisons behave naturally).
// ---------------------------------------------------------------------------
struct Value
{
    enum Kind
    {
        I, // bool or int
        F, // float32
        A, // array / record (flattened elements)
    };

    Kind kind = I;
    int64_t i = 0;
    float f = 0.0f;
    std::vector<Value> elems;

    static Value ofInt(int64_t v) { Value x; x.kind = I; x.i = v; return x; }
    static Value ofFloat(float v) { Value x; x.kind = F; x.f = v; return x; }

    bool bitsEqual(const Value& o) const;
    double num() const { return kind == F ? double(f) : double(i); }
    std::string str() const;
};

// Total order / equality over the bit representation (floats compared by raw
// bits so state sets are deterministic even around NaN).
bool operator<(const Value& a, const Value& b);
bool operator==(const Value& a, const Value& b);
inline bool operator!=(const Value& a, const Value& b) { return !(a == b); }

// Wrap an arbitrary int64 to the given width/signedness (two's complement).
int64_t wrapInt(int64_t v, int width, bool isSigned);

// Zero value of a type (arrays/records get element-wise zeros).
Value zeroOf(const EType& t);

// ULP distance between two float32 values (used for reassociated-sum bounds).
int64_t ulpDistance(float a, float b);

} // namespace wavec
