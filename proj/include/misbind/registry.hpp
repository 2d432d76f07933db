// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <variant>
#include <vector>

namespace misbind::registry {

struct StaticPosition {
    std::size_t position = 0;
    friend bool operator==(const StaticPosition&, const StaticPosition&) = default;
};

struct RegistryFile {
    std::string filename;
    friend bool operator==(const RegistryFile&, const RegistryFile&) = default;
};

struct ServerSpec {
    std::string server_id;
    std::string command;
    std::vector<std::string> args;
    std::variant<StaticPosition, RegistryFile> source;

    friend bool operator==(const ServerSpec&, const ServerSpec&) = default;
};

enum class Surface { Static, Registry };

std::string_view to_string(Surface s);
Surface parse_surface(std::string_view text);

struct DiscoverySnapshot {
    std::vector<ServerSpec> specs;
    Surface surface = Surface::Static;
    std::string ordering_rule;

    friend bool operator==(const DiscoverySnapshot&, const DiscoverySnapshot&) = default;
};

/// "${NAME}" placeholders expanded in command and args at load time, so
/// shipped files need not hard-code build paths.
using Substitutions = std::map<std::string, std::string>;

/// {"servers": [{server_id, command, args}, ...]} in file order.
/// ConfigNotFound, ConfigParseError (with line:column), DuplicateServerId.
DiscoverySnapshot load_static_config(const std::string& path, const Substitutions& subs = {});

/// Every *.json file in `dir`, one server per file, ordered byte-wise by
/// filename. Other entries are skipped with a warning. DirNotFound,
/// ConfigParseError naming the file, DuplicateServerId.
DiscoverySnapshot load_registry_dir(const std::string& dir, const Substitutions& subs = {});

} // namespace misbind::registry
