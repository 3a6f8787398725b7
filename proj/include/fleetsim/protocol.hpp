#pragma once

#include "fleetsim/error.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace fleetsim::protocol {

enum class Kind { reset, reset_ok, step, step_ok, error, close };

inline const char* to_string(Kind k) {
    switch (k) {
        case Kind::reset: return "reset";
        case Kind::reset_ok: return "reset_ok";
        case Kind::step: return "step";
        case Kind::step_ok: return "step_ok";
        case Kind::error: return "error";
        case Kind::close: return "close";
    }
    return "?";
}

inline std::optional<Kind> kind_from_string(std::string_view s) {
    for (auto k : {Kind::reset, Kind::reset_ok, Kind::step, Kind::step_ok, Kind::error, Kind::close})
        if (s == to_string(k)) return k;
    return std::nullopt;
}

/// Machine-readable error codes carried in `code`.
namespace code {
inline constexpr std::string_view kBadShape = "BAD_SHAPE";
inline constexpr std::string_view kBadState = "BAD_STATE";
inline constexpr std::string_view kUnknownScenario = "UNKNOWN_SCENARIO";
inline constexpr std::string_view kParse = "PARSE";
}  // namespace code

/// One wire message. Only the fields of its kind are meaningful.
///
///   reset     scenario, seed (optional)
///   reset_ok  V, R, t_norm, reward, done
///   step      action
///   step_ok   V, R, t_norm, reward, done
///   error     code, message (optional)
///   close     -
///
/// V and R are cell counts in row-major (m, n) order, m along x.
struct Message {
    Kind kind = Kind::close;
    std::string scenario;
    std::optional<std::uint64_t> seed;
    std::vector<std::int64_t> V;
    std::vector<std::int64_t> R;
    double t_norm = 0.0;
    double reward = 0.0;
    bool done = false;
    std::vector<double> action;
    std::string code;
    std::optional<std::string> message;

    friend bool operator==(const Message&, const Message&) = default;
};

/// Thrown by decode; always maps to the PARSE code.
class ParseError : public SchemaError {
public:
    using SchemaError::SchemaError;
};

inline Message make_reset(std::string scenario, std::optional<std::uint64_t> seed = std::nullopt) {
    Message m;
    m.kind = Kind::reset;
    m.scenario = std::move(scenario);
    m.seed = seed;
    return m;
}

inline Message make_step(std::vector<double> action) {
    Message m;
    m.kind = Kind::step;
    m.action = std::move(action);
    return m;
}

inline Message make_error(std::string_view code, std::optional<std::string> message = std::nullopt) {
    Message m;
    m.kind = Kind::error;
    m.code = std::string(code);
    m.message = std::move(message);
    return m;
}

inline Message make_close() { return Message{}; }

/// Canonical single-line form: `kind` first, then the kind's fields in the
/// order listed on Message, no whitespace.
inline std::string encode(const Message& m) {
    nlohmann::ordered_json j;
    j["kind"] = to_string(m.kind);
    switch (m.kind) {
        case Kind::reset:
            j["scenario"] = m.scenario;
            if (m.seed) j["seed"] = *m.seed;
            break;
        case Kind::reset_ok:
        case Kind::step_ok:
            j["V"] = m.V;
            j["R"] = m.R;
            j["t_norm"] = m.t_norm;
            j["reward"] = m.reward;
            j["done"] = m.done;
            break;
        case Kind::step: j["action"] = m.action; break;
        case Kind::error:
            j["code"] = m.code;
            if (m.message) j["message"] = *m.message;
            break;
        case Kind::close: break;
    }
    return j.dump();
}

namespace detail {

inline const nlohmann::json& field(const nlohmann::json& j, const char* name) {
    auto it = j.find(name);
    if (it == j.end()) throw ParseError(std::string("missing field '") + name + "'");
    return *it;
}

inline double real(const nlohmann::json& v, const char* name) {
    if (!v.is_number()) throw ParseError(std::string("field '") + name + "' must be a number");
    return v.get<double>();
}

inline std::vector<std::int64_t> counts(const nlohmann::json& v, const char* name) {
    if (!v.is_array()) throw ParseError(std::string("field '") + name + "' must be an array");
    std::vector<std::int64_t> out;
    out.reserve(v.size());
    for (const auto& e : v) {
        if (!e.is_number_integer() || e.get<std::int64_t>() < 0)
            throw ParseError(std::string("field '") + name + "' must hold nonnegative integers");
        out.push_back(e.get<std::int64_t>());
    }
    return out;
}

inline std::vector<double> reals(const nlohmann::json& v, const char* name) {
    if (!v.is_array()) throw ParseError(std::string("field '") + name + "' must be an array");
    std::vector<double> out;
    out.reserve(v.size());
    for (const auto& e : v) out.push_back(real(e, name));
    return out;
}

inline void only(const nlohmann::json& j, std::initializer_list<const char*> allowed) {
    for (const auto& [key, value] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ParseError("unexpected field '" + key + "'");
    }
}

}  // namespace detail

/// Parses one line. Anything that is not a well-formed message of a known
/// kind throws ParseError.
inline Message decode(std::string_view line) {
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("message must be a JSON object");
    const auto& kind_field = detail::field(j, "kind");
    if (!kind_field.is_string()) throw ParseError("field 'kind' must be a string");
    const auto kind = kind_from_string(kind_field.get<std::string>());
    if (!kind) throw ParseError("unknown kind '" + kind_field.get<std::string>() + "'");

    Message m;
    m.kind = *kind;
    switch (m.kind) {
        case Kind::reset: {
            detail::only(j, {"kind", "scenario", "seed"});
            const auto& s = detail::field(j, "scenario");
            if (!s.is_string()) throw ParseError("field 'scenario' must be a string");
            m.scenario = s.get<std::string>();
            if (auto it = j.find("seed"); it != j.end()) {
                if (!it->is_number_unsigned()) throw ParseError("field 'seed' must be a nonnegative integer");
                m.seed = it->get<std::uint64_t>();
            }
            break;
        }
        case Kind::reset_ok:
        case Kind::step_ok: {
            detail::only(j, {"kind", "V", "R", "t_norm", "reward", "done"});
            m.V = detail::counts(detail::field(j, "V"), "V");
            m.R = detail::counts(detail::field(j, "R"), "R");
            m.t_norm = detail::real(detail::field(j, "t_norm"), "t_norm");
            m.reward = detail::real(detail::field(j, "reward"), "reward");
            const auto& d = detail::field(j, "done");
            if (!d.is_boolean()) throw ParseError("field 'done' must be a boolean");
            m.done = d.get<bool>();
            break;
        }
        case Kind::step:
            detail::only(j, {"kind", "action"});
            m.action = detail::reals(detail::field(j, "action"), "action");
            break;
        case Kind::error: {
            detail::only(j, {"kind", "code", "message"});
            const auto& c = detail::field(j, "code");
            if (!c.is_string()) throw ParseError("field 'code' must be a string");
            m.code = c.get<std::string>();
            if (auto it = j.find("message"); it != j.end()) {
                if (!it->is_string()) throw ParseError("field 'message' must be a string");
                m.message = it->get<std::string>();
            }
            break;
        }
        case Kind::close: detail::only(j, {"kind"}); break;
    }
    return m;
}

}  // namespace fleetsim::protocol
