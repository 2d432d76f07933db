// SPDX-License-Identifier: Apache-2.0
#include "misbind/error.hpp"

namespace misbind {

std::string_view to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::MalformedFrame: return "MalformedFrame";
    case ErrorCode::UnsupportedMethod: return "UnsupportedMethod";
    case ErrorCode::HandshakeTimeout: return "HandshakeTimeout";
    case ErrorCode::HandshakeRejected: return "HandshakeRejected";
    case ErrorCode::CallTimeout: return "CallTimeout";
    case ErrorCode::RemoteError: return "RemoteError";
    case ErrorCode::SpawnError: return "SpawnError";
    case ErrorCode::ConfigNotFound: return "ConfigNotFound";
    case ErrorCode::ConfigParseError: return "ConfigParseError";
    case ErrorCode::DuplicateServerId: return "DuplicateServerId";
    case ErrorCode::DirNotFound: return "DirNotFound";
    case ErrorCode::NoServersReachable: return "NoServersReachable";
    case ErrorCode::NoCandidate: return "NoCandidate";
    case ErrorCode::PinnedProviderAbsent: return "PinnedProviderAbsent";
    case ErrorCode::PinnedProviderAmbiguous: return "PinnedProviderAmbiguous";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::EvidenceMismatch: return "EvidenceMismatch";
    case ErrorCode::ReplayDivergence: return "ReplayDivergence";
    case ErrorCode::MalformedLog: return "MalformedLog";
    case ErrorCode::SchemaError: return "SchemaError";
    case ErrorCode::UnknownVulnerabilityId: return "UnknownVulnerabilityId";
    case ErrorCode::DuplicateTriple: return "DuplicateTriple";
    case ErrorCode::InconsistentCell: return "InconsistentCell";
    }
    return "Unknown";
}

std::optional<ErrorCode> parse_error_code(std::string_view name)
{
    for (int i = 0; i <= static_cast<int>(ErrorCode::InconsistentCell); ++i) {
        const auto code = static_cast<ErrorCode>(i);
        if (to_string(code) == name) return code;
    }
    return std::nullopt;
}

Error::Error(ErrorCode code, const std::string& message, std::optional<int> rpc_code)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code), rpc_code_(rpc_code)
{
}

} // namespace misbind
