#include "benchforge/value.hpp"

#include <cctype>
#include <cerrno>
#include <cmath>
#include <cstdlib>

#include "benchforge/errors.hpp"
#include "benchforge/util.hpp"

namespace benchforge {

std::string Value::render() const {
    switch (kind()) {
    case ValueKind::Bool: return as_bool() ? "true" : "false";
    case ValueKind::Int: return util::render_int(as_int());
    case ValueKind::Float: return util::render_double(as_float());
    case ValueKind::String: return as_string();
    }
    return {};
}

std::string Entry::render() const {
    if (!is_list()) return scalar().render();
    std::string out = "[";
    bool first = true;
    for (const auto& v : list()) {
        if (!first) out += ", ";
        first = false;
        out += v.render();
    }
    out += "]";
    return out;
}

namespace {

// ^[+-]?[0-9]+$
bool looks_like_int(const std::string& s) {
    std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
    if (i == s.size()) return false;
    for (; i < s.size(); ++i)
        if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
    return true;
}

// ^[+-]?([0-9]+\.[0-9]*|\.[0-9]+|[0-9]+)([eE][+-]?[0-9]+)?$ with at least one
// of '.' or an exponent present, so plain integers stay integers and hex or
// inf/nan spellings stay strings.
bool looks_like_float(const std::string& s) {
    std::size_t i = (s[0] == '+' || s[0] == '-') ? 1 : 0;
    std::size_t digits = 0, frac_digits = 0;
    bool dot = false, exponent = false;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++digits;
    if (i < s.size() && s[i] == '.') {
        dot = true;
        ++i;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++frac_digits;
    }
    if (digits == 0 && frac_digits == 0) return false;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        exponent = true;
        ++i;
        if (i < s.size() && (s[i] == '+' || s[i] == '-')) ++i;
        std::size_t exp_digits = 0;
        while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]))) ++i, ++exp_digits;
        if (exp_digits == 0) return false;
    }
    return i == s.size() && (dot || exponent);
}

}  // namespace

Value parse_scalar_text(const std::string& text) {
    if (text == "true" || text == "True") return Value(true);
    if (text == "false" || text == "False") return Value(false);
    if (text.empty()) return Value(text);
    if (looks_like_int(text)) {
        errno = 0;
        char* end = nullptr;
        long long i = std::strtoll(text.c_str(), &end, 10);
        if (errno == ERANGE)
            throw Error(ErrorKind::Config, "integer literal out of range: '" + text + "'");
        return Value(static_cast<std::int64_t>(i));
    }
    if (looks_like_float(text)) {
        errno = 0;
        double d = std::strtod(text.c_str(), nullptr);
        if (errno == ERANGE && (d == HUGE_VAL || d == -HUGE_VAL))
            throw Error(ErrorKind::Config, "float literal out of range: '" + text + "'");
        return Value(d);
    }
    return Value(text);
}

std::vector<std::string> split_key_path(const std::string& path) {
    if (!valid_key_path(path))
        throw Error(ErrorKind::Config, "invalid key path '" + path + "'");
    return util::split(path, '.');
}

bool valid_key_path(const std::string& path) {
    if (path.empty()) return false;
    if (path.front() == '.' || path.back() == '.') return false;
    if (path.find("..") != std::string::npos) return false;
    return true;
}

}  // namespace benchforge
