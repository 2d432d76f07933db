// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/rational.hpp"
#include "misbind/registry.hpp"
#include "misbind/session.hpp"
#include "misbind/wire.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace misbind::orchestrator {

using wire::json;
using wire::ToolCallResult;
using wire::ToolDescriptor;

/// One advertisement bound to the provider that made it. `discovery_index`
/// is the position in the unified index: snapshot order outer,
/// advertisement order inner.
struct ToolCandidate {
    ToolDescriptor descriptor;
    std::string provider_id;
    std::size_t discovery_index = 0;

    friend bool operator==(const ToolCandidate&, const ToolCandidate&) = default;
};

enum class PolicyKind { FirstMatch, BestMatch, Pinned };
enum class TieBreak { None, SeededRandom };

struct ResolverPolicy {
    PolicyKind kind = PolicyKind::FirstMatch;
    TieBreak tie_break = TieBreak::None; // best_match only
    std::uint64_t seed = 0;              // used with SeededRandom
    std::string pinned_provider;         // used with Pinned

    static ResolverPolicy first_match() { return {}; }
    static ResolverPolicy best_match() { return {PolicyKind::BestMatch, TieBreak::None, 0, {}}; }
    static ResolverPolicy best_match_seeded(std::uint64_t seed) { return {PolicyKind::BestMatch, TieBreak::SeededRandom, seed, {}}; }
    static ResolverPolicy pinned(std::string provider) { return {PolicyKind::Pinned, TieBreak::None, 0, std::move(provider)}; }

    friend bool operator==(const ResolverPolicy&, const ResolverPolicy&) = default;
};

/// Rejects a tie_break on first_match/pinned and an empty pinned provider.
void validate(const ResolverPolicy& p);
std::string describe(const ResolverPolicy& p);
json to_json(const ResolverPolicy& p);
/// {"kind": "first_match"|"best_match"|"pinned", "tie_break": "none"|"seeded_random",
///  "seed": u64, "provider": text}
ResolverPolicy policy_from_json(const json& j);

struct ScoreBreakdown {
    Rational score;
    std::vector<std::string> matched_tokens;
    std::vector<std::string> matched_cues;
    std::size_t task_token_count = 0;
};

/// |task tokens ∩ description tokens| / |task tokens|, both normalized.
ScoreBreakdown score_breakdown(std::string_view task, std::string_view description);
Rational score_candidate(std::string_view task, const ToolCandidate& candidate);

struct CandidateEvidence {
    std::string provider_id;
    std::size_t discovery_index = 0;
    std::optional<Rational> score;
    std::vector<std::string> matched_tokens;
    std::vector<std::string> matched_cues;

    friend bool operator==(const CandidateEvidence&, const CandidateEvidence&) = default;
};

struct SelectionEvidence {
    std::vector<CandidateEvidence> candidates;
    std::string chosen;
    std::size_t chosen_index = 0;
    bool tie_detected = false;
    std::optional<std::uint64_t> rng_seed_used;

    friend bool operator==(const SelectionEvidence&, const SelectionEvidence&) = default;
};

json to_json(const SelectionEvidence& e);
SelectionEvidence selection_from_json(const json& j);

/// Per-trial tie-break stream: seed XOR trial ordinal.
constexpr std::uint64_t derive_stream_seed(std::uint64_t seed, std::uint64_t trial_ordinal)
{
    return seed ^ trial_ordinal;
}

/// mt19937_64 (output fully specified by the standard) with a hand-written
/// unbiased bounded draw; std::uniform_int_distribution is not portable
/// across standard libraries.
class TieBreakRng {
public:
    explicit TieBreakRng(std::uint64_t stream_seed) : engine_(stream_seed) {}
    /// Uniform in [0, bound).
    std::uint64_t below(std::uint64_t bound);

private:
    std::mt19937_64 engine_;
};

struct Resolution {
    ToolCandidate candidate;
    SelectionEvidence evidence;
};

/// NoCandidate on an empty index; PinnedProviderAbsent /
/// PinnedProviderAmbiguous for pinned lookups that do not hit exactly once.
Resolution resolve(std::string_view task, std::span<const ToolCandidate> index, const ResolverPolicy& policy,
                   std::uint64_t trial_ordinal = 0);

/// What one reachable server advertised.
struct ProviderArtifact {
    std::string server_id;
    std::string provider_id;
    std::vector<ToolDescriptor> tools;

    friend bool operator==(const ProviderArtifact&, const ProviderArtifact&) = default;
};

json to_json(const ProviderArtifact& a);
ProviderArtifact artifact_from_json(const json& j);

/// Rebuilds the unified index from recorded artifacts (used by replay).
std::vector<ToolCandidate> index_from_artifacts(std::span<const ProviderArtifact> artifacts);

struct DiscoveryFailure {
    std::string server_id;
    ErrorCode code = ErrorCode::SpawnError;
    std::string message;
};

struct DiscoveryOptions {
    wire::SessionOptions session;
    bool concurrent = true;
};

/// Live sessions plus the immutable candidate index built from them.
class Discovery {
public:
    const std::vector<ToolCandidate>& index() const noexcept { return index_; }
    const std::vector<ProviderArtifact>& artifacts() const noexcept { return artifacts_; }
    const std::vector<DiscoveryFailure>& failures() const noexcept { return failures_; }

    /// Candidates advertising `tool_name`, in index order.
    std::vector<ToolCandidate> candidates_for(std::string_view tool_name) const;
    bool has_provider(std::string_view provider_id) const;

    /// tools/call on the candidate's provider with {trial_id, task, ...}.
    /// CallTimeout when the server is silent or gone.
    ToolCallResult invoke(const ToolCandidate& candidate, std::string_view task, const std::string& trial_id);

    wire::Session& session_for(const ToolCandidate& candidate);

private:
    friend Discovery build_candidate_index(const registry::DiscoverySnapshot&, const DiscoveryOptions&);

    std::vector<std::unique_ptr<wire::Session>> sessions_; // parallel to artifacts_
    std::vector<ProviderArtifact> artifacts_;
    std::vector<std::size_t> slot_of_index_;               // discovery_index -> session slot
    std::vector<ToolCandidate> index_;
    std::vector<DiscoveryFailure> failures_;
};

/// Spawns, handshakes and lists every spec. Unreachable servers are
/// recorded in failures(); NoServersReachable if none answer.
Discovery build_candidate_index(const registry::DiscoverySnapshot& snapshot, const DiscoveryOptions& options = {});

} // namespace misbind::orchestrator
