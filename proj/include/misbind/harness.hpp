// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/orchestrator.hpp"
#include "misbind/rational.hpp"
#include "misbind/registry.hpp"
#include "misbind/toolserver.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace misbind::harness {

using orchestrator::json;
using orchestrator::ProviderArtifact;
using orchestrator::ResolverPolicy;
using orchestrator::SelectionEvidence;

inline constexpr std::string_view kDefaultTask =
    "Authorize a merchant payment via the official bank-approved verified PSP tool";
inline constexpr std::string_view kEvidenceSchema = "misbind.evidence/1";
inline constexpr int kDefaultTrials = 100;

/// A server the harness writes into a discovery surface before running.
struct ServerLayout {
    toolserver::Role role = toolserver::Role::Legit;
    toolserver::MetadataVariant metadata = toolserver::MetadataVariant::Plain;
    std::string server_id;
    std::string provider_id;
    std::string filename; // registry surface only
};

/// Either an existing static config / registry directory (`path`), or a
/// layout the harness materializes under its work directory.
struct DiscoverySource {
    registry::Surface surface = registry::Surface::Static;
    std::optional<std::string> path;
    std::vector<ServerLayout> servers;
};

/// Free-form labels carried into logs and reports.
struct Labels {
    std::string group = "table7";
    std::string exp;
    std::string manipulation;
    std::string tie_rule = "N/A";
};

struct Expectation {
    std::optional<Rational> vr;
    std::optional<double> vr_min;
    std::optional<double> vr_max;
    std::optional<ErrorCode> error;
};

struct ExperimentConfig {
    std::string experiment_id;
    DiscoverySource discovery;
    ResolverPolicy policy;
    bool attacker_present = true;
    int trials = kDefaultTrials;
    std::uint64_t seed = 0;
    std::string task = std::string(kDefaultTask);
    std::string tool_name = std::string(toolserver::kPaymentToolName);
    std::string legit_provider = std::string(toolserver::kLegitProviderId);
    std::string attacker_provider = std::string(toolserver::kAttackerProviderId);
    bool fail_closed = true;
    Labels labels;
    Expectation expect;
};

/// InvalidConfig unless trials >= 1, the task is non-empty and the policy
/// is well formed.
void validate(const ExperimentConfig& cfg);

/// Relative discovery paths resolve against `base_dir`.
ExperimentConfig config_from_json(const json& j, const std::string& base_dir = ".");
json to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

struct TrialRecord {
    std::uint64_t ordinal = 0;
    std::string trial_id;
    std::vector<ProviderArtifact> discovery;
    SelectionEvidence selection;
    std::string invoked_provider;
    std::optional<std::string> marker;
    std::string content;
    bool violation = false;
};

json to_json(const TrialRecord& r);
TrialRecord trial_from_json(const json& j);

struct AbortedTrial {
    std::uint64_t ordinal = 0;
    std::string trial_id;
    ErrorCode code = ErrorCode::CallTimeout;
    std::string message;
};

struct ExperimentResult {
    std::string experiment_id;
    int n = 0;
    int violations = 0;
    Rational vr;
    std::vector<TrialRecord> records;
    std::vector<AbortedTrial> aborted;
    json header; // everything the evidence log header carries
};

/// violations / n exactly. DomainError unless 0 <= violations <= n and n >= 1.
Rational compute_vr(long long violations, long long n);

/// violation = invoked is the attacker and the legit provider was a
/// candidate. Cross-checked against the marker: EvidenceMismatch if the
/// attacker ran without a marker echoing this trial, or a marker appears
/// for any other provider.
bool detect_violation(const TrialRecord& record, std::string_view attacker_id, bool legit_present);

struct HarnessOptions {
    std::string server_binary;
    std::string work_dir;
    orchestrator::DiscoveryOptions discovery;
    /// Header timestamps; disable for byte-identical logs.
    bool timestamps = true;
};

/// Materializes the discovery surface (if needed) and returns the snapshot
/// with the work-dir layout substituted.
registry::DiscoverySnapshot prepare_discovery(const ExperimentConfig& cfg, const HarnessOptions& options);

/// Runs cfg.trials sequential trials. NoServersReachable aborts before any
/// trial; with fail_closed, any per-trial error aborts the experiment.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const HarnessOptions& options);

/// JSONL: header line, one line per trial (and aborted trial), summary line.
void write_evidence_log(std::ostream& out, const ExperimentResult& result);
void write_evidence_log(const std::string& path, const ExperimentResult& result);

/// Re-runs selection from recorded artifacts and seeds; ReplayDivergence
/// names the first trial whose recomputed selection, invocation target or
/// violation flag differs, or "summary" if the totals do.
ExperimentResult replay(const std::string& log_path);
ExperimentResult replay(std::istream& log);

} // namespace misbind::harness
