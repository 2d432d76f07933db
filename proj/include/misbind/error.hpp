// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace misbind {

enum class ErrorCode {
    // wire
    MalformedFrame,
    UnsupportedMethod,
    HandshakeTimeout,
    HandshakeRejected,
    CallTimeout,
    RemoteError,
    SpawnError,
    // registry
    ConfigNotFound,
    ConfigParseError,
    DuplicateServerId,
    DirNotFound,
    // orchestrator
    NoServersReachable,
    NoCandidate,
    PinnedProviderAbsent,
    PinnedProviderAmbiguous,
    // harness
    InvalidConfig,
    DomainError,
    EvidenceMismatch,
    ReplayDivergence,
    MalformedLog,
    // risk
    SchemaError,
    UnknownVulnerabilityId,
    DuplicateTriple,
    InconsistentCell,
};

std::string_view to_string(ErrorCode code);
std::optional<ErrorCode> parse_error_code(std::string_view name);

/// Every failure the library reports. `rpc_code` carries the JSON-RPC error
/// code when the failure originated from a peer's error-response.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, std::optional<int> rpc_code = std::nullopt);

    ErrorCode code() const noexcept { return code_; }
    std::optional<int> rpc_code() const noexcept { return rpc_code_; }

private:
    ErrorCode code_;
    std::optional<int> rpc_code_;
};

} // namespace misbind
