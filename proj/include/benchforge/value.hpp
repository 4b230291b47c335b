#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

namespace benchforge {

enum class ValueKind { Bool, Int, Float, String };

const char* to_string(ValueKind kind);

// A typed configuration scalar.  The kind is part of the value's identity:
// 1 (Int) and 1.0 (Float) are distinct, which is what makes kind-preserving
// config merging enforceable.
class Value {
public:
    Value() : v_(std::string{}) {}
    Value(bool b) : v_(b) {}
    Value(std::int64_t i) : v_(i) {}
    Value(int i) : v_(static_cast<std::int64_t>(i)) {}
    Value(double d) : v_(d) {}
    Value(std::string s) : v_(std::move(s)) {}
    Value(const char* s) : v_(std::string(s)) {}

    ValueKind kind() const {
        switch (v_.index()) {
        case 0: return ValueKind::Bool;
        case 1: return ValueKind::Int;
        case 2: return ValueKind::Float;
        default: return ValueKind::String;
        }
    }

    bool as_bool() const { return std::get<bool>(v_); }
    std::int64_t as_int() const { return std::get<std::int64_t>(v_); }
    double as_float() const { return std::get<double>(v_); }
    const std::string& as_string() const { return std::get<std::string>(v_); }

    // Numeric view regardless of Int/Float kind; nullopt for Bool/String.
    std::optional<double> numeric() const {
        if (kind() == ValueKind::Int) return static_cast<double>(as_int());
        if (kind() == ValueKind::Float) return as_float();
        return std::nullopt;
    }

    // Canonical text form: "true"/"false", decimal integers, shortest
    // round-trip decimals for floats, strings verbatim.  This is the form
    // used in instantiated commands and serialized snapshots, so it must be
    // byte-stable across platforms.
    std::string render() const;

    bool operator==(const Value& other) const = default;

private:
    std::variant<bool, std::int64_t, double, std::string> v_;
};

using ValueList = std::vector<Value>;

// A configuration entry: either a scalar or a list of scalars.
class Entry {
public:
    Entry() : v_(Value{}) {}
    Entry(Value v) : v_(std::move(v)) {}
    Entry(ValueList l) : v_(std::move(l)) {}
    Entry(bool b) : v_(Value(b)) {}
    Entry(std::int64_t i) : v_(Value(i)) {}
    Entry(int i) : v_(Value(i)) {}
    Entry(double d) : v_(Value(d)) {}
    Entry(const char* s) : v_(Value(s)) {}
    Entry(std::string s) : v_(Value(std::move(s))) {}

    bool is_list() const { return v_.index() == 1; }
    const Value& scalar() const { return std::get<Value>(v_); }
    const ValueList& list() const { return std::get<ValueList>(v_); }

    std::string render() const;

    bool operator==(const Entry& other) const = default;

private:
    std::variant<Value, ValueList> v_;
};

// Parses a scalar using the same inference rules as the YAML loader:
// integers, then floats, then the booleans true/false/True/False, then
// string.  Quoted-ness is not visible here, so this is for CLI overrides
// and filter literals, not for YAML files.
Value parse_scalar_text(const std::string& text);

// Dotted key-path helpers.  Segments are non-empty and never contain '.'.
std::vector<std::string> split_key_path(const std::string& path);
bool valid_key_path(const std::string& path);

inline const char* to_string(ValueKind kind) {
    switch (kind) {
    case ValueKind::Bool: return "bool";
    case ValueKind::Int: return "int";
    case ValueKind::Float: return "float";
    case ValueKind::String: return "string";
    }
    return "?";
}

}  // namespace benchforge
