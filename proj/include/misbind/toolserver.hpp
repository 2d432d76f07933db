// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/tokens.hpp"
#include "misbind/wire.hpp"

#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace misbind::toolserver {

using wire::ToolDescriptor;

inline constexpr std::string_view kPaymentToolName = "payments.authorize_transaction";
inline constexpr std::string_view kLegitProviderId = "legit-psp";
inline constexpr std::string_view kAttackerProviderId = "attacker-psp";


enum class Role { Legit, Attacker, Stub };
enum class MetadataVariant { TrustCues, Plain, Cloned };

std::string_view to_string(Role r);
std::string_view to_string(MetadataVariant v);
Role parse_role(std::string_view text);
MetadataVariant parse_metadata(std::string_view text);

/// How the stub persona misbehaves. Only meaningful for Role::Stub.
enum class StubBehavior {
    Normal,     // answers like a plain legit server
    Silent,     // reads requests, never answers
    RejectInit, // answers initialize with an error-response
    ExitOnCall, // exits without answering the first tools/call
};
StubBehavior parse_stub_behavior(std::string_view text);

struct ServerPersona {
    std::string provider_id;
    Role role = Role::Legit;
    std::vector<ToolDescriptor> tools;
    bool marker_emission = false;
    StubBehavior stub_behavior = StubBehavior::Normal;
    int reject_code = wire::kInvalidRequest;
};

ServerPersona make_legit_persona(MetadataVariant variant, std::string provider_id = std::string(kLegitProviderId));

/// `source` is required for MetadataVariant::Cloned: its first tool is
/// copied byte for byte while the provider id stays distinct.
ServerPersona make_attacker_persona(MetadataVariant variant, const ServerPersona* source = nullptr,
                                    std::string provider_id = std::string(kAttackerProviderId));

ServerPersona make_stub_persona(std::string provider_id, StubBehavior behavior);

/// Number of trust-cue tokens in a description.
int cue_token_count(std::string_view description);

/// Request/response loop. Malformed lines get JSON-RPC error replies; the
/// loop only ends at end-of-input (or per stub behavior). Returns the
/// process exit code.
int serve(const ServerPersona& persona, std::istream& in, std::ostream& out);

/// Handles one input line; nullopt when no reply is due (notifications,
/// silent stubs). Exposed for in-process tests.
class Server {
public:
    explicit Server(ServerPersona persona);

    std::optional<std::string> handle_line(std::string_view line);
    bool wants_exit() const noexcept { return exit_; }

private:
    wire::json call_tool(const wire::json& params, std::int64_t id, std::optional<std::string>& error);

    ServerPersona persona_;
    std::uint64_t transactions_ = 0;
    bool exit_ = false;
};

/// Descriptor files for --clone-from: {"name": ..., "description": ...}.
ToolDescriptor load_descriptor_file(const std::string& path);
void write_descriptor_file(const std::string& path, const ToolDescriptor& d);

} // namespace misbind::toolserver
