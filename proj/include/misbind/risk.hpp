// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/error.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace misbind::risk {

using json = nlohmann::json;

enum class Level { Low, Medium, High };
enum class Protocol { MCP, A2A, Agora, ANP };
enum class Stage { Creation, Operation, Update };
enum class ThreatSource { MaliciousHuman, CompromisedAgent, SupplyChain, Accidental };

inline constexpr std::array kLevels{Level::Low, Level::Medium, Level::High};
inline constexpr std::array kProtocols{Protocol::MCP, Protocol::A2A, Protocol::Agora, Protocol::ANP};
inline constexpr std::array kStages{Stage::Creation, Stage::Operation, Stage::Update};

std::string_view to_string(Level l);
std::string_view to_string(Protocol p);
std::string_view to_string(Stage s);
std::string_view to_string(ThreatSource t);
char level_letter(Level l);

/// SchemaError on anything outside the closed vocabularies. Levels accept
/// "Low"/"Medium"/"High" and the letters L/M/H.
Level parse_level(std::string_view text);
Protocol parse_protocol(std::string_view text);
Stage parse_stage(std::string_view text);
ThreatSource parse_threat_source(std::string_view text);

/// Qualitative risk matrix.
Level combine(Level likelihood, Level impact);

struct Vulnerability {
    std::string_view id;
    std::string_view title;
    Stage stage;
    ThreatSource threat_source;
};

/// The twelve lifecycle vulnerabilities, four per stage, in table order.
std::span<const Vulnerability> catalog();
const Vulnerability* find_vulnerability(std::string_view id);

struct RiskEntry {
    Protocol protocol = Protocol::MCP;
    Stage stage = Stage::Creation;
    std::string vulnerability_id;
    Level likelihood = Level::Low;
    Level impact = Level::Low;
    std::string rationale;
    ThreatSource threat_source = ThreatSource::MaliciousHuman;
};

struct RiskRegister {
    int version = 1;
    std::string provenance;
    std::vector<RiskEntry> entries;
};

/// {version, provenance, entries:[{protocol, stage, vulnerability_id,
/// likelihood, impact, rationale, threat_source}]}.
/// SchemaError, UnknownVulnerabilityId (naming the id), DuplicateTriple.
RiskRegister register_from_json(const json& doc);
RiskRegister load_register(const std::string& path);
json to_json(const RiskRegister& reg);

struct AssessedEntry {
    RiskEntry entry;
    Level risk = Level::Low;
};

struct Totals {
    int high = 0;
    int medium = 0;
    int low = 0;
};

struct Assessment {
    std::vector<AssessedEntry> entries;
    std::map<std::pair<Protocol, Stage>, Totals> totals;

    const AssessedEntry* find(Protocol p, Stage s, std::string_view vulnerability_id) const;
};

Assessment assess(const RiskRegister& reg);

enum class Format { Markdown, Csv };
Format parse_format(std::string_view text);

/// Markdown: one table per stage present, rows = catalog vulnerabilities of
/// that stage, columns = protocols present, cells "High (H×M): rationale".
/// CSV: one row per entry with L, I, R columns.
std::string report(const Assessment& assessment, Format format);

/// A printed cell label such as "High (M×H)"; "x" is accepted for "×".
struct CellLabel {
    Level risk;
    Level likelihood;
    Level impact;
};

/// SchemaError if the text does not parse.
CellLabel parse_cell_label(std::string_view text);
std::string format_cell_label(Level risk, Level likelihood, Level impact);

struct PublishedCell {
    Protocol protocol;
    Stage stage;
    std::string vulnerability_id;
    std::string label;
    CellLabel parsed;
};

/// {cells:[{protocol, stage, vulnerability_id, label}]}. Labels must parse;
/// semantic consistency is checked by verify().
std::vector<PublishedCell> load_published(const std::string& path);
std::vector<PublishedCell> published_from_json(const json& doc);

struct CellIssue {
    std::string where;
    std::string message;
};

struct VerifyOutcome {
    int total = 0;
    int matched = 0;
    std::vector<std::string> mismatches;
    std::vector<CellIssue> inconsistent;

    bool ok() const { return total > 0 && matched == total && mismatches.empty(); }
};

/// Compares each published cell against the assessment. A printed label
/// whose risk disagrees with combine(L, I) is recorded as InconsistentCell
/// and does not count as matched.
VerifyOutcome verify(const Assessment& assessment, std::span<const PublishedCell> published);

} // namespace misbind::risk
