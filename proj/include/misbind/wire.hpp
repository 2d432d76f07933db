// SPDX-License-Identifier: Apache-2.0
#pragma once

// MCP-subset message layer: JSON-RPC 2.0 objects, one per line.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace misbind::wire {

using json = nlohmann::json;

enum class Method { Initialize, ToolsList, ToolsCall };

std::string_view method_name(Method m);
/// Subset membership by table lookup; nullopt for anything outside the subset.
std::optional<Method> parse_method(std::string_view name);

// Standard JSON-RPC error codes used by the servers.
inline constexpr int kParseError = -32700;
inline constexpr int kInvalidRequest = -32600;
inline constexpr int kMethodNotFound = -32601;
inline constexpr int kInvalidParams = -32602;

/// Carried in initialize; nothing branches on it.
inline constexpr std::string_view kDefaultProtocolVersion = "2025-06-18";

struct Request {
    std::int64_t id = 0;
    Method method = Method::Initialize;
    json params = json::object();

    friend bool operator==(const Request&, const Request&) = default;
};

struct Response {
    std::int64_t id = 0;
    json result = json::object();

    friend bool operator==(const Response&, const Response&) = default;
};

struct RpcError {
    int code = 0;
    std::string message;

    friend bool operator==(const RpcError&, const RpcError&) = default;
};

/// `id` is null only when the server could not recover the request id
/// (parse errors and invalid requests).
struct ErrorResponse {
    std::optional<std::int64_t> id;
    RpcError error;

    friend bool operator==(const ErrorResponse&, const ErrorResponse&) = default;
};

using WireMessage = std::variant<Request, Response, ErrorResponse>;

/// One JSON object followed by exactly one '\n'. Never fails for a valid message.
std::string encode_message(const WireMessage& msg);

/// Parses one line (trailing '\n' optional). Throws misbind::Error with
/// MalformedFrame or UnsupportedMethod.
WireMessage decode_message(std::string_view line);

/// Id carried by a frame that failed to decode, if one could be recovered.
/// Servers use this to address the error-response.
std::optional<std::int64_t> recover_id(std::string_view line);

/// True when the line is a JSON-RPC notification (method but no id).
bool is_notification(std::string_view line);

struct ToolDescriptor {
    std::string name;
    std::string description;

    friend bool operator==(const ToolDescriptor&, const ToolDescriptor&) = default;
};

json to_json(const ToolDescriptor& d);
ToolDescriptor descriptor_from_json(const json& j);

inline constexpr std::string_view kMarkerPrefix = "EVID";

struct EvidenceMarker {
    std::string provider_id;
    std::string trial_id;

    friend bool operator==(const EvidenceMarker&, const EvidenceMarker&) = default;
};

std::string format_marker(const EvidenceMarker& m);
/// Exactly three "::"-separated fields, the first being the prefix.
std::optional<EvidenceMarker> parse_marker(std::string_view text);

struct ToolCallResult {
    std::string content;
    std::optional<std::string> evidence_marker;

    friend bool operator==(const ToolCallResult&, const ToolCallResult&) = default;
};

json to_json(const ToolCallResult& r);
ToolCallResult call_result_from_json(const json& result);

} // namespace misbind::wire
