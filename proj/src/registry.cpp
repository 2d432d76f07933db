// SPDX-License-Identifier: Apache-2.0
#include "misbind/registry.hpp"

#include "misbind/error.hpp"
#include "misbind/log.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace misbind::registry {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string read_file(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::ConfigNotFound, path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json parse_with_position(const std::string& text, const std::string& origin)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // e.byte is 1-based; translate into line:column for the message.
        std::size_t line = 1;
        std::size_t column = 1;
        const auto upto = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
        for (std::size_t i = 0; i < upto; ++i) {
            if (text[i] == '\n') {
                ++line;
                column = 1;
            } else {
                ++column;
            }
        }
        throw Error(ErrorCode::ConfigParseError,
                    origin + ":" + std::to_string(line) + ":" + std::to_string(column) + ": " + e.what());
    }
}

std::string expand(std::string value, const Substitutions& subs)
{
    for (const auto& [name, replacement] : subs) {
        const auto token = "${" + name + "}";
        for (auto pos = value.find(token); pos != std::string::npos; pos = value.find(token, pos + replacement.size())) {
            value.replace(pos, token.size(), replacement);
        }
    }
    return value;
}

ServerSpec spec_from_json(const json& j, const std::string& origin, const Substitutions& subs)
{
    auto fail = [&](const std::string& why) -> ServerSpec { throw Error(ErrorCode::ConfigParseError, origin + ": " + why); };
    if (!j.is_object()) return fail("server spec must be an object");

    const auto id = j.find("server_id");
    if (id == j.end() || !id->is_string() || id->get<std::string>().empty()) return fail("server_id must be a non-empty string");
    const auto command = j.find("command");
    if (command == j.end() || !command->is_string() || command->get<std::string>().empty()) {
        return fail("command must be a non-empty string");
    }

    ServerSpec spec;
    spec.server_id = id->get<std::string>();
    spec.command = expand(command->get<std::string>(), subs);
    if (const auto args = j.find("args"); args != j.end()) {
        if (!args->is_array()) return fail("args must be an array of strings");
        for (const auto& a : *args) {
            if (!a.is_string()) return fail("args must be an array of strings");
            spec.args.push_back(expand(a.get<std::string>(), subs));
        }
    }
    // Unknown fields are ignored.
    return spec;
}

void check_unique(const std::vector<ServerSpec>& specs, const std::string& origin)
{
    std::set<std::string> seen;
    for (const auto& s : specs) {
        if (!seen.insert(s.server_id).second) {
            throw Error(ErrorCode::DuplicateServerId, origin + ": server_id '" + s.server_id + "' appears twice");
        }
    }
}

} // namespace

std::string_view to_string(Surface s)
{
    return s == Surface::Static ? "static" : "registry";
}

Surface parse_surface(std::string_view text)
{
    if (text == "static") return Surface::Static;
    if (text == "registry") return Surface::Registry;
    throw Error(ErrorCode::InvalidConfig, "unknown discovery surface '" + std::string(text) + "'");
}

DiscoverySnapshot load_static_config(const std::string& path, const Substitutions& subs)
{
    if (!fs::is_regular_file(path)) throw Error(ErrorCode::ConfigNotFound, path);
    const auto doc = parse_with_position(read_file(path), path);
    if (!doc.is_object() || !doc.contains("servers") || !doc["servers"].is_array()) {
        throw Error(ErrorCode::ConfigParseError, path + ": expected an object with a 'servers' array");
    }

    DiscoverySnapshot snap;
    snap.surface = Surface::Static;
    snap.ordering_rule = "configuration file order";
    std::size_t position = 0;
    for (const auto& entry : doc["servers"]) {
        auto spec = spec_from_json(entry, path + ": servers[" + std::to_string(position) + "]", subs);
        spec.source = StaticPosition{position++};
        snap.specs.push_back(std::move(spec));
    }
    check_unique(snap.specs, path);
    return snap;
}

DiscoverySnapshot load_registry_dir(const std::string& dir, const Substitutions& subs)
{
    if (!fs::is_directory(dir)) throw Error(ErrorCode::DirNotFound, dir);

    std::vector<std::string> names;
    for (const auto& entry : fs::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            names.push_back(name);
        } else {
            spdlog::warn("registry {}: ignoring non-spec entry '{}'", dir, name);
        }
    }
    // std::string comparison is byte-wise (char_traits compares as unsigned char).
    std::sort(names.begin(), names.end());

    DiscoverySnapshot snap;
    snap.surface = Surface::Registry;
    snap.ordering_rule = "lexicographic filename order (byte-wise)";
    for (const auto& name : names) {
        const auto path = (fs::path(dir) / name).string();
        auto spec = spec_from_json(parse_with_position(read_file(path), name), name, subs);
        spec.source = RegistryFile{name};
        snap.specs.push_back(std::move(spec));
    }
    check_unique(snap.specs, dir);
    return snap;
}

} // namespace misbind::registry
