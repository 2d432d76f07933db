// SPDX-License-Identifier: Apache-2.0
#include "misbind/wire.hpp"

#include "misbind/error.hpp"

#include <array>
#include <utility>

namespace misbind::wire {

namespace {

constexpr std::array<std::pair<Method, std::string_view>, 3> kMethods{{
    {Method::Initialize, "initialize"},
    {Method::ToolsList, "tools/list"},
    {Method::ToolsCall, "tools/call"},
}};

[[noreturn]] void malformed(const std::string& why)
{
    throw Error(ErrorCode::MalformedFrame, why);
}

std::string_view strip_newline(std::string_view line)
{
    if (!line.empty() && line.back() == '\n') line.remove_suffix(1);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    return line;
}

std::optional<json> parse_object(std::string_view line)
{
    auto j = json::parse(strip_newline(line), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    return j;
}

std::optional<std::int64_t> integer_id(const json& id)
{
    if (id.is_number_integer() && !id.is_number_unsigned()) return id.get<std::int64_t>();
    if (id.is_number_unsigned()) {
        const auto u = id.get<std::uint64_t>();
        if (u <= static_cast<std::uint64_t>(INT64_MAX)) return static_cast<std::int64_t>(u);
    }
    return std::nullopt;
}

} // namespace

std::string_view method_name(Method m)
{
    for (const auto& [method, name] : kMethods) {
        if (method == m) return name;
    }
    return "";
}

std::optional<Method> parse_method(std::string_view name)
{
    for (const auto& [method, known] : kMethods) {
        if (known == name) return method;
    }
    return std::nullopt;
}

std::string encode_message(const WireMessage& msg)
{
    json j = {{"jsonrpc", "2.0"}};
    std::visit(
        [&j](const auto& m) {
            using T = std::decay_t<decltype(m)>;
            if constexpr (std::is_same_v<T, Request>) {
                j["id"] = m.id;
                j["method"] = method_name(m.method);
                j["params"] = m.params;
            } else if constexpr (std::is_same_v<T, Response>) {
                j["id"] = m.id;
                j["result"] = m.result;
            } else {
                j["id"] = m.id ? json(*m.id) : json(nullptr);
                j["error"] = {{"code", m.error.code}, {"message", m.error.message}};
            }
        },
        msg);
    // dump() escapes control characters, so the only '\n' is the terminator.
    auto line = j.dump(-1, ' ', false, json::error_handler_t::replace);
    line.push_back('\n');
    return line;
}

WireMessage decode_message(std::string_view line)
{
    const auto parsed = parse_object(line);
    if (!parsed) malformed("not a JSON object");
    const json& j = *parsed;

    const auto version = j.find("jsonrpc");
    if (version == j.end() || !version->is_string() || *version != "2.0") malformed("missing jsonrpc \"2.0\"");

    const bool has_method = j.contains("method");
    const bool has_result = j.contains("result");
    const bool has_error = j.contains("error");
    if (static_cast<int>(has_method) + static_cast<int>(has_result) + static_cast<int>(has_error) != 1) {
        malformed("exactly one of method/result/error is required");
    }

    const auto id_it = j.find("id");
    std::optional<std::int64_t> id;
    if (id_it != j.end() && !id_it->is_null()) {
        id = integer_id(*id_it);
        if (!id) malformed("id must be an integer");
    }

    if (has_method) {
        const auto& method = j.at("method");
        if (!method.is_string()) malformed("method must be a string");
        if (!id) {
            throw Error(ErrorCode::UnsupportedMethod, "notification '" + method.get<std::string>() + "' is outside the subset");
        }
        const auto m = parse_method(method.get<std::string>());
        if (!m) throw Error(ErrorCode::UnsupportedMethod, "method '" + method.get<std::string>() + "'");
        Request r;
        r.id = *id;
        r.method = *m;
        if (const auto p = j.find("params"); p != j.end()) {
            if (!p->is_object()) malformed("params must be an object");
            r.params = *p;
        }
        return r;
    }

    if (has_result) {
        if (!id) malformed("response without integer id");
        return Response{*id, j.at("result")};
    }

    const auto& err = j.at("error");
    if (!err.is_object()) malformed("error must be an object");
    const auto code = err.find("code");
    const auto message = err.find("message");
    if (code == err.end() || !code->is_number_integer()) malformed("error.code must be an integer");
    if (message == err.end() || !message->is_string()) malformed("error.message must be a string");
    if (id_it == j.end()) malformed("error-response without id");
    return ErrorResponse{id, RpcError{code->get<int>(), message->get<std::string>()}};
}

std::optional<std::int64_t> recover_id(std::string_view line)
{
    const auto parsed = parse_object(line);
    if (!parsed) return std::nullopt;
    const auto id = parsed->find("id");
    if (id == parsed->end()) return std::nullopt;
    return integer_id(*id);
}

bool is_notification(std::string_view line)
{
    const auto parsed = parse_object(line);
    return parsed && parsed->contains("method") && !parsed->contains("id");
}

json to_json(const ToolDescriptor& d)
{
    return {{"name", d.name}, {"description", d.description}, {"inputSchema", {{"type", "object"}}}};
}

ToolDescriptor descriptor_from_json(const json& j)
{
    if (!j.is_object()) malformed("tool descriptor must be an object");
    const auto name = j.find("name");
    if (name == j.end() || !name->is_string() || name->get<std::string>().empty()) {
        malformed("tool descriptor needs a non-empty name");
    }
    ToolDescriptor d{name->get<std::string>(), {}};
    if (const auto desc = j.find("description"); desc != j.end() && desc->is_string()) d.description = *desc;
    return d;
}

std::string format_marker(const EvidenceMarker& m)
{
    return std::string(kMarkerPrefix) + "::" + m.provider_id + "::" + m.trial_id;
}

std::optional<EvidenceMarker> parse_marker(std::string_view text)
{
    std::vector<std::string_view> fields;
    std::size_t start = 0;
    while (true) {
        const auto pos = text.find("::", start);
        if (pos == std::string_view::npos) {
            fields.push_back(text.substr(start));
            break;
        }
        fields.push_back(text.substr(start, pos - start));
        start = pos + 2;
    }
    if (fields.size() != 3 || fields[0] != kMarkerPrefix || fields[1].empty() || fields[2].empty()) {
        return std::nullopt;
    }
    return EvidenceMarker{std::string(fields[1]), std::string(fields[2])};
}

json to_json(const ToolCallResult& r)
{
    json j = {{"content", json::array({{{"type", "text"}, {"text", r.content}}})}, {"isError", false}};
    if (r.evidence_marker) j["evidence_marker"] = *r.evidence_marker;
    return j;
}

ToolCallResult call_result_from_json(const json& result)
{
    if (!result.is_object()) malformed("tools/call result must be an object");
    ToolCallResult r;
    if (const auto content = result.find("content"); content != result.end() && content->is_array()) {
        for (const auto& item : *content) {
            if (item.is_object() && item.value("type", "") == "text" && item.contains("text") && item["text"].is_string()) {
                r.content += item["text"].get<std::string>();
            }
        }
    }
    if (const auto marker = result.find("evidence_marker"); marker != result.end()) {
        if (!marker->is_string()) malformed("evidence_marker must be a string");
        r.evidence_marker = marker->get<std::string>();
    }
    return r;
}

} // namespace misbind::wire
