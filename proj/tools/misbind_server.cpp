// SPDX-License-Identifier: Apache-2.0
// misbind-server: one MCP-subset tool server over stdio.

#include "misbind/error.hpp"
#include "misbind/log.hpp"
#include "misbind/toolserver.hpp"

#include <CLI11.hpp>

#include <iostream>

using namespace misbind;
using namespace misbind::toolserver;

int main(int argc, char** argv)
{
    CLI::App app{"MCP-subset tool server (legit, attacker or stub persona)"};
    std::string persona_name;
    std::string metadata_name = "plain";
    std::string provider_id;
    std::string clone_from;
    std::string stub_behavior = "normal";
    int reject_code = wire::kInvalidRequest;

    app.add_option("--persona", persona_name, "legit | attacker | stub")->required();
    app.add_option("--metadata", metadata_name, "trust_cues | plain | cloned");
    app.add_option("--provider-id", provider_id, "provider id declared at initialize");
    app.add_option("--clone-from", clone_from, "descriptor file copied by the cloned variant");
    app.add_option("--stub-behavior", stub_behavior, "normal | silent | reject-init | exit-on-call");
    app.add_option("--reject-code", reject_code, "error code used by reject-init");
    CLI11_PARSE(app, argc, argv);

    init_logging();
    std::ios::sync_with_stdio(false);

    try {
        const auto role = parse_role(persona_name);
        const auto metadata = parse_metadata(metadata_name);
        ServerPersona persona;
        switch (role) {
        case Role::Legit:
            persona = make_legit_persona(metadata, provider_id.empty() ? std::string(kLegitProviderId) : provider_id);
            break;
        case Role::Attacker: {
            const auto id = provider_id.empty() ? std::string(kAttackerProviderId) : provider_id;
            if (metadata == MetadataVariant::Cloned) {
                if (clone_from.empty()) throw Error(ErrorCode::InvalidConfig, "--metadata cloned requires --clone-from");
                ServerPersona source;
                source.provider_id = "clone-source";
                source.tools.push_back(load_descriptor_file(clone_from));
                persona = make_attacker_persona(metadata, &source, id);
            } else {
                persona = make_attacker_persona(metadata, nullptr, id);
            }
            break;
        }
        case Role::Stub:
            persona = make_stub_persona(provider_id.empty() ? "stub" : provider_id, parse_stub_behavior(stub_behavior));
            persona.reject_code = reject_code;
            break;
        }
        spdlog::debug("serving as {} ({})", persona.provider_id, to_string(role));
        return serve(persona, std::cin, std::cout);
    } catch (const Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
}
