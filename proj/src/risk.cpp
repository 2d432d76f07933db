// SPDX-License-Identifier: Apache-2.0
#include "misbind/risk.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

namespace misbind::risk {

namespace {

constexpr Vulnerability kCatalog[] = {
    {"weak-or-absent-identity-verification", "Weak or absent identity verification", Stage::Creation,
     ThreatSource::MaliciousHuman},
    {"lack-of-registration-artifact-integrity", "Lack of registration artifact integrity", Stage::Creation,
     ThreatSource::SupplyChain},
    {"insufficient-namespace-isolation", "Insufficient namespace isolation", Stage::Creation,
     ThreatSource::MaliciousHuman},
    {"absence-of-baseline-security-policy", "Absence of baseline security policy", Stage::Creation,
     ThreatSource::Accidental},
    {"lack-of-mandatory-validation-or-attestation", "Lack of mandatory validation or attestation", Stage::Operation,
     ThreatSource::CompromisedAgent},
    {"insufficient-data-exchange-control", "Insufficient data exchange control", Stage::Operation,
     ThreatSource::CompromisedAgent},
    {"inadequate-least-privilege-enforcement", "Inadequate least-privilege enforcement", Stage::Operation,
     ThreatSource::CompromisedAgent},
    {"missing-rate-limiting", "Missing rate limiting", Stage::Operation, ThreatSource::MaliciousHuman},
    {"failure-to-revoke-credentials", "Failure to revoke credentials", Stage::Update, ThreatSource::Accidental},
    {"absence-of-rollback-protection", "Absence of rollback protection", Stage::Update, ThreatSource::MaliciousHuman},
    {"unverified-maintenance-updates", "Unverified maintenance updates", Stage::Update, ThreatSource::SupplyChain},
    {"uncontrolled-transitive-dependency-evolution", "Uncontrolled transitive dependency evolution", Stage::Update,
     ThreatSource::SupplyChain},
};

std::string lower(std::string_view s)
{
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
    return out;
}

std::string trim(std::string_view s)
{
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return std::string(s.substr(b, e - b + 1));
}

std::string cell_name(Protocol p, Stage s, std::string_view id)
{
    return std::string(to_string(p)) + "/" + std::string(to_string(s)) + "/" + std::string(id);
}

const std::string& require_string(const json& obj, const char* key, const std::string& where)
{
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_string()) {
        throw Error(ErrorCode::SchemaError, where + ": field '" + key + "' must be a string");
    }
    return it->get_ref<const std::string&>();
}

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigNotFound, path);
    std::stringstream ss;
    ss << in.rdbuf();
    auto doc = json::parse(ss.str(), nullptr, false);
    if (doc.is_discarded()) throw Error(ErrorCode::SchemaError, path + ": not valid JSON");
    return doc;
}

std::string escape_cell(std::string_view s)
{
    std::string out;
    for (const char c : s) {
        if (c == '|') out += '\\';
        out += c;
    }
    return out;
}

std::string csv_field(std::string_view s)
{
    if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

} // namespace

std::string_view to_string(Level l)
{
    switch (l) {
    case Level::Low: return "Low";
    case Level::Medium: return "Medium";
    case Level::High: return "High";
    }
    return "?";
}

std::string_view to_string(Protocol p)
{
    switch (p) {
    case Protocol::MCP: return "MCP";
    case Protocol::A2A: return "A2A";
    case Protocol::Agora: return "Agora";
    case Protocol::ANP: return "ANP";
    }
    return "?";
}

std::string_view to_string(Stage s)
{
    switch (s) {
    case Stage::Creation: return "Creation";
    case Stage::Operation: return "Operation";
    case Stage::Update: return "Update";
    }
    return "?";
}

std::string_view to_string(ThreatSource t)
{
    switch (t) {
    case ThreatSource::MaliciousHuman: return "malicious_human";
    case ThreatSource::CompromisedAgent: return "compromised_agent";
    case ThreatSource::SupplyChain: return "supply_chain";
    case ThreatSource::Accidental: return "accidental";
    }
    return "?";
}

char level_letter(Level l)
{
    return to_string(l).front();
}

Level parse_level(std::string_view text)
{
    const auto t = lower(trim(text));
    if (t == "low" || t == "l") return Level::Low;
    if (t == "medium" || t == "m") return Level::Medium;
    if (t == "high" || t == "h") return Level::High;
    throw Error(ErrorCode::SchemaError, "unknown level '" + std::string(text) + "'");
}

Protocol parse_protocol(std::string_view text)
{
    const auto t = lower(text);
    for (const auto p : kProtocols) {
        if (lower(to_string(p)) == t) return p;
    }
    throw Error(ErrorCode::SchemaError, "unknown protocol '" + std::string(text) + "'");
}

Stage parse_stage(std::string_view text)
{
    const auto t = lower(text);
    for (const auto s : kStages) {
        if (lower(to_string(s)) == t) return s;
    }
    throw Error(ErrorCode::SchemaError, "unknown stage '" + std::string(text) + "'");
}

ThreatSource parse_threat_source(std::string_view text)
{
    for (const auto t : {ThreatSource::MaliciousHuman, ThreatSource::CompromisedAgent, ThreatSource::SupplyChain,
                         ThreatSource::Accidental}) {
        if (to_string(t) == text) return t;
    }
    throw Error(ErrorCode::SchemaError, "unknown threat source '" + std::string(text) + "'");
}

Level combine(Level likelihood, Level impact)
{
    // Rows: likelihood Low/Medium/High; columns: impact Low/Medium/High.
    static constexpr Level kMatrix[3][3] = {
        {Level::Low, Level::Low, Level::Medium},
        {Level::Low, Level::Medium, Level::High},
        {Level::Medium, Level::High, Level::High},
    };
    return kMatrix[static_cast<int>(likelihood)][static_cast<int>(impact)];
}

std::span<const Vulnerability> catalog()
{
    return kCatalog;
}

const Vulnerability* find_vulnerability(std::string_view id)
{
    for (const auto& v : kCatalog) {
        if (v.id == id) return &v;
    }
    return nullptr;
}

RiskRegister register_from_json(const json& doc)
{
    if (!doc.is_object()) throw Error(ErrorCode::SchemaError, "register must be a JSON object");
    RiskRegister reg;
    if (const auto v = doc.find("version"); v != doc.end()) {
        if (!v->is_number_integer()) throw Error(ErrorCode::SchemaError, "field 'version' must be an integer");
        reg.version = v->get<int>();
    }
    if (const auto p = doc.find("provenance"); p != doc.end()) {
        if (!p->is_string()) throw Error(ErrorCode::SchemaError, "field 'provenance' must be a string");
        reg.provenance = p->get<std::string>();
    }
    const auto entries = doc.find("entries");
    if (entries == doc.end() || !entries->is_array()) {
        throw Error(ErrorCode::SchemaError, "field 'entries' must be an array");
    }

    std::set<std::tuple<Protocol, Stage, std::string>> seen;
    for (std::size_t i = 0; i < entries->size(); ++i) {
        const auto& e = (*entries)[i];
        const auto where = "entries[" + std::to_string(i) + "]";
        if (!e.is_object()) throw Error(ErrorCode::SchemaError, where + ": must be an object");

        RiskEntry entry;
        entry.protocol = parse_protocol(require_string(e, "protocol", where));
        entry.stage = parse_stage(require_string(e, "stage", where));
        entry.vulnerability_id = require_string(e, "vulnerability_id", where);
        const auto* vuln = find_vulnerability(entry.vulnerability_id);
        if (vuln == nullptr) {
            throw Error(ErrorCode::UnknownVulnerabilityId, where + ": unknown vulnerability id '" + entry.vulnerability_id + "'");
        }
        if (vuln->stage != entry.stage) {
            throw Error(ErrorCode::SchemaError, where + ": '" + entry.vulnerability_id + "' belongs to stage " +
                                                    std::string(to_string(vuln->stage)));
        }
        entry.likelihood = parse_level(require_string(e, "likelihood", where));
        entry.impact = parse_level(require_string(e, "impact", where));
        if (const auto r = e.find("rationale"); r != e.end()) {
            if (!r->is_string()) throw Error(ErrorCode::SchemaError, where + ": field 'rationale' must be a string");
            entry.rationale = r->get<std::string>();
        }
        entry.threat_source = e.contains("threat_source") ? parse_threat_source(require_string(e, "threat_source", where))
                                                          : vuln->threat_source;

        if (!seen.emplace(entry.protocol, entry.stage, entry.vulnerability_id).second) {
            throw Error(ErrorCode::DuplicateTriple,
                        where + ": duplicate " + cell_name(entry.protocol, entry.stage, entry.vulnerability_id));
        }
        reg.entries.push_back(std::move(entry));
    }
    return reg;
}

RiskRegister load_register(const std::string& path)
{
    try {
        return register_from_json(read_json_file(path));
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ConfigNotFound) throw;
        throw Error(e.code(), path + ": " + e.what());
    }
}

json to_json(const RiskRegister& reg)
{
    json entries = json::array();
    for (const auto& e : reg.entries) {
        entries.push_back({{"protocol", to_string(e.protocol)},
                           {"stage", to_string(e.stage)},
                           {"vulnerability_id", e.vulnerability_id},
                           {"likelihood", to_string(e.likelihood)},
                           {"impact", to_string(e.impact)},
                           {"rationale", e.rationale},
                           {"threat_source", to_string(e.threat_source)}});
    }
    return {{"version", reg.version}, {"provenance", reg.provenance}, {"entries", entries}};
}

const AssessedEntry* Assessment::find(Protocol p, Stage s, std::string_view vulnerability_id) const
{
    for (const auto& a : entries) {
        if (a.entry.protocol == p && a.entry.stage == s && a.entry.vulnerability_id == vulnerability_id) return &a;
    }
    return nullptr;
}

Assessment assess(const RiskRegister& reg)
{
    Assessment out;
    for (const auto& e : reg.entries) {
        const auto r = combine(e.likelihood, e.impact);
        out.entries.push_back({e, r});
        auto& t = out.totals[{e.protocol, e.stage}];
        switch (r) {
        case Level::High: ++t.high; break;
        case Level::Medium: ++t.medium; break;
        case Level::Low: ++t.low; break;
        }
    }
    return out;
}

Format parse_format(std::string_view text)
{
    if (text == "md" || text == "markdown") return Format::Markdown;
    if (text == "csv") return Format::Csv;
    throw Error(ErrorCode::InvalidConfig, "unknown format '" + std::string(text) + "'");
}

std::string format_cell_label(Level risk, Level likelihood, Level impact)
{
    std::string out(to_string(risk));
    out += " (";
    out += level_letter(likelihood);
    out += "×";
    out += level_letter(impact);
    out += ")";
    return out;
}

std::string report(const Assessment& assessment, Format format)
{
    std::ostringstream out;
    if (format == Format::Csv) {
        out << "protocol,stage,vulnerability_id,likelihood,impact,risk,threat_source,rationale\n";
        for (const auto& a : assessment.entries) {
            const auto& e = a.entry;
            out << to_string(e.protocol) << ',' << to_string(e.stage) << ',' << e.vulnerability_id << ','
                << to_string(e.likelihood) << ',' << to_string(e.impact) << ',' << to_string(a.risk) << ','
                << to_string(e.threat_source) << ',' << csv_field(e.rationale) << '\n';
        }
        return out.str();
    }

    std::vector<Protocol> protocols;
    for (const auto p : kProtocols) {
        if (std::any_of(assessment.entries.begin(), assessment.entries.end(),
                        [&](const AssessedEntry& a) { return a.entry.protocol == p; })) {
            protocols.push_back(p);
        }
    }

    out << "# Lifecycle risk assessment\n";
    for (const auto stage : kStages) {
        const bool present = std::any_of(assessment.entries.begin(), assessment.entries.end(),
                                         [&](const AssessedEntry& a) { return a.entry.stage == stage; });
        if (!present) continue;
        out << "\n## " << to_string(stage) << " stage\n\n| Vulnerability |";
        for (const auto p : protocols) out << ' ' << to_string(p) << " |";
        out << "\n|---|";
        for (std::size_t i = 0; i < protocols.size(); ++i) out << "---|";
        out << '\n';
        for (const auto& v : kCatalog) {
            if (v.stage != stage) continue;
            out << "| " << v.title << " |";
            for (const auto p : protocols) {
                const auto* a = assessment.find(p, stage, v.id);
                if (a == nullptr) {
                    out << " - |";
                    continue;
                }
                out << ' ' << format_cell_label(a->risk, a->entry.likelihood, a->entry.impact);
                if (!a->entry.rationale.empty()) out << ": " << escape_cell(a->entry.rationale);
                out << " |";
            }
            out << '\n';
        }
        out << "\nTotals (High/Medium/Low):";
        for (std::size_t i = 0; i < protocols.size(); ++i) {
            const auto it = assessment.totals.find({protocols[i], stage});
            const Totals t = it == assessment.totals.end() ? Totals{} : it->second;
            out << (i == 0 ? " " : ", ") << to_string(protocols[i]) << ' ' << t.high << '/' << t.medium << '/' << t.low;
        }
        out << '\n';
    }
    return out.str();
}

CellLabel parse_cell_label(std::string_view text)
{
    const auto bad = [&] { return Error(ErrorCode::SchemaError, "unparsable cell label '" + std::string(text) + "'"); };
    const auto open = text.find('(');
    const auto close = text.rfind(')');
    if (open == std::string_view::npos || close == std::string_view::npos || close < open) throw bad();
    std::string inner(text.substr(open + 1, close - open - 1));
    for (const std::string_view sep : {"×", "x", "X", "*"}) {
        if (const auto pos = inner.find(sep); pos != std::string::npos) {
            try {
                return CellLabel{parse_level(text.substr(0, open)), parse_level(inner.substr(0, pos)),
                                 parse_level(inner.substr(pos + sep.size()))};
            } catch (const Error&) {
                throw bad();
            }
        }
    }
    throw bad();
}

std::vector<PublishedCell> published_from_json(const json& doc)
{
    const auto cells = doc.find("cells");
    if (!doc.is_object() || cells == doc.end() || !cells->is_array()) {
        throw Error(ErrorCode::SchemaError, "field 'cells' must be an array");
    }
    std::vector<PublishedCell> out;
    for (std::size_t i = 0; i < cells->size(); ++i) {
        const auto& c = (*cells)[i];
        const auto where = "cells[" + std::to_string(i) + "]";
        if (!c.is_object()) throw Error(ErrorCode::SchemaError, where + ": must be an object");
        PublishedCell cell{parse_protocol(require_string(c, "protocol", where)), parse_stage(require_string(c, "stage", where)),
                           require_string(c, "vulnerability_id", where), require_string(c, "label", where), {}};
        if (find_vulnerability(cell.vulnerability_id) == nullptr) {
            throw Error(ErrorCode::UnknownVulnerabilityId, where + ": unknown vulnerability id '" + cell.vulnerability_id + "'");
        }
        cell.parsed = parse_cell_label(cell.label);
        out.push_back(std::move(cell));
    }
    return out;
}

std::vector<PublishedCell> load_published(const std::string& path)
{
    return published_from_json(read_json_file(path));
}

VerifyOutcome verify(const Assessment& assessment, std::span<const PublishedCell> published)
{
    VerifyOutcome out;
    for (const auto& cell : published) {
        ++out.total;
        const auto name = cell_name(cell.protocol, cell.stage, cell.vulnerability_id);
        const auto& want = cell.parsed;
        if (combine(want.likelihood, want.impact) != want.risk) {
            out.inconsistent.push_back({name, "printed '" + cell.label + "' but the matrix gives " +
                                                  std::string(to_string(combine(want.likelihood, want.impact)))});
            continue;
        }
        const auto* got = assessment.find(cell.protocol, cell.stage, cell.vulnerability_id);
        if (got == nullptr) {
            out.mismatches.push_back(name + ": missing from register");
            continue;
        }
        const auto label = format_cell_label(got->risk, got->entry.likelihood, got->entry.impact);
        if (got->risk != want.risk || got->entry.likelihood != want.likelihood || got->entry.impact != want.impact) {
            out.mismatches.push_back(name + ": expected " + cell.label + ", assessed " + label);
            continue;
        }
        ++out.matched;
    }
    return out;
}

} // namespace misbind::risk
