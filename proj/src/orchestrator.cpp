// SPDX-License-Identifier: Apache-2.0
#include "misbind/orchestrator.hpp"

#include "misbind/error.hpp"
#include "misbind/log.hpp"
#include "misbind/tokens.hpp"

#include <algorithm>
#include <future>
#include <limits>

namespace misbind::orchestrator {

namespace {

[[noreturn]] void bad_policy(const std::string& why)
{
    throw Error(ErrorCode::InvalidConfig, "resolver policy: " + why);
}

std::vector<std::string> string_list(const json& j, const char* field)
{
    std::vector<std::string> out;
    if (const auto it = j.find(field); it != j.end() && it->is_array()) {
        for (const auto& s : *it) out.push_back(s.get<std::string>());
    }
    return out;
}

} // namespace

void validate(const ResolverPolicy& p)
{
    if (p.kind != PolicyKind::BestMatch && p.tie_break != TieBreak::None) {
        bad_policy("tie_break applies to best_match only");
    }
    if (p.kind == PolicyKind::Pinned && p.pinned_provider.empty()) bad_policy("pinned needs a provider id");
}

std::string describe(const ResolverPolicy& p)
{
    switch (p.kind) {
    case PolicyKind::FirstMatch: return "first_match";
    case PolicyKind::BestMatch:
        return p.tie_break == TieBreak::SeededRandom ? "best_match+seeded_random" : "best_match";
    case PolicyKind::Pinned: return "pinned(" + p.pinned_provider + ")";
    }
    return "";
}

json to_json(const ResolverPolicy& p)
{
    json j;
    switch (p.kind) {
    case PolicyKind::FirstMatch: j["kind"] = "first_match"; break;
    case PolicyKind::BestMatch:
        j["kind"] = "best_match";
        j["tie_break"] = p.tie_break == TieBreak::SeededRandom ? "seeded_random" : "none";
        if (p.tie_break == TieBreak::SeededRandom) j["seed"] = p.seed;
        break;
    case PolicyKind::Pinned:
        j["kind"] = "pinned";
        j["provider"] = p.pinned_provider;
        break;
    }
    return j;
}

ResolverPolicy policy_from_json(const json& j)
{
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) bad_policy("expected an object with a kind");
    ResolverPolicy p;
    const auto kind = j["kind"].get<std::string>();
    if (kind == "first_match") p.kind = PolicyKind::FirstMatch;
    else if (kind == "best_match") p.kind = PolicyKind::BestMatch;
    else if (kind == "pinned") p.kind = PolicyKind::Pinned;
    else bad_policy("unknown kind '" + kind + "'");

    const auto tie = j.value("tie_break", std::string("none"));
    if (tie == "seeded_random") p.tie_break = TieBreak::SeededRandom;
    else if (tie != "none") bad_policy("unknown tie_break '" + tie + "'");

    if (const auto seed = j.find("seed"); seed != j.end()) {
        if (!seed->is_number_unsigned() && !(seed->is_number_integer() && seed->get<std::int64_t>() >= 0)) {
            bad_policy("seed must be a non-negative integer");
        }
        p.seed = seed->get<std::uint64_t>();
    }
    if (p.kind == PolicyKind::Pinned) {
        if (!j.contains("provider") || !j["provider"].is_string()) bad_policy("pinned needs a provider");
        p.pinned_provider = j["provider"].get<std::string>();
    }
    validate(p);
    return p;
}

ScoreBreakdown score_breakdown(std::string_view task, std::string_view description)
{
    const auto task_tokens = normalize_tokens(task);
    const auto desc_tokens = normalize_tokens(description);
    ScoreBreakdown b;
    b.task_token_count = task_tokens.size();
    for (const auto& t : task_tokens) {
        if (std::find(desc_tokens.begin(), desc_tokens.end(), t) != desc_tokens.end()) {
            b.matched_tokens.push_back(t);
            if (is_trust_cue(t)) b.matched_cues.push_back(t);
        }
    }
    b.score = task_tokens.empty() ? Rational(0, 1)
                                  : Rational(static_cast<std::int64_t>(b.matched_tokens.size()),
                                             static_cast<std::int64_t>(task_tokens.size()));
    return b;
}

Rational score_candidate(std::string_view task, const ToolCandidate& candidate)
{
    return score_breakdown(task, candidate.descriptor.description).score;
}

json to_json(const SelectionEvidence& e)
{
    json candidates = json::array();
    for (const auto& c : e.candidates) {
        candidates.push_back({
            {"provider_id", c.provider_id},
            {"discovery_index", c.discovery_index},
            {"score", c.score ? json(c.score->str()) : json(nullptr)},
            {"matched_tokens", c.matched_tokens},
            {"matched_cues", c.matched_cues},
        });
    }
    return {
        {"candidates", std::move(candidates)},
        {"chosen", e.chosen},
        {"chosen_index", e.chosen_index},
        {"tie_detected", e.tie_detected},
        {"rng_seed_used", e.rng_seed_used ? json(*e.rng_seed_used) : json(nullptr)},
    };
}

SelectionEvidence selection_from_json(const json& j)
{
    SelectionEvidence e;
    for (const auto& c : j.at("candidates")) {
        CandidateEvidence ce;
        ce.provider_id = c.at("provider_id").get<std::string>();
        ce.discovery_index = c.at("discovery_index").get<std::size_t>();
        if (const auto& s = c.at("score"); !s.is_null()) ce.score = Rational::parse(s.get<std::string>());
        ce.matched_tokens = string_list(c, "matched_tokens");
        ce.matched_cues = string_list(c, "matched_cues");
        e.candidates.push_back(std::move(ce));
    }
    e.chosen = j.at("chosen").get<std::string>();
    e.chosen_index = j.at("chosen_index").get<std::size_t>();
    e.tie_detected = j.at("tie_detected").get<bool>();
    if (const auto& s = j.at("rng_seed_used"); !s.is_null()) e.rng_seed_used = s.get<std::uint64_t>();
    return e;
}

std::uint64_t TieBreakRng::below(std::uint64_t bound)
{
    if (bound == 0) throw Error(ErrorCode::DomainError, "TieBreakRng::below(0)");
    // Reject the low (2^64 mod bound) values so every residue is equally likely.
    const std::uint64_t threshold = (std::numeric_limits<std::uint64_t>::max() - bound + 1) % bound;
    while (true) {
        const std::uint64_t x = engine_();
        if (x >= threshold) return x % bound;
    }
}

Resolution resolve(std::string_view task, std::span<const ToolCandidate> index, const ResolverPolicy& policy,
                   std::uint64_t trial_ordinal)
{
    validate(policy);
    if (index.empty()) throw Error(ErrorCode::NoCandidate, "no provider advertises the requested tool");

    SelectionEvidence evidence;
    for (const auto& c : index) evidence.candidates.push_back({c.provider_id, c.discovery_index, std::nullopt, {}, {}});

    std::size_t pick = 0; // position within `index`
    switch (policy.kind) {
    case PolicyKind::FirstMatch: {
        for (std::size_t i = 1; i < index.size(); ++i) {
            if (index[i].discovery_index < index[pick].discovery_index) pick = i;
        }
        break;
    }
    case PolicyKind::BestMatch: {
        for (std::size_t i = 0; i < index.size(); ++i) {
            auto b = score_breakdown(task, index[i].descriptor.description);
            evidence.candidates[i].score = b.score;
            evidence.candidates[i].matched_tokens = std::move(b.matched_tokens);
            evidence.candidates[i].matched_cues = std::move(b.matched_cues);
        }
        Rational best = *evidence.candidates[0].score;
        for (const auto& c : evidence.candidates) best = std::max(best, *c.score);
        std::vector<std::size_t> argmax;
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (*evidence.candidates[i].score == best) argmax.push_back(i);
        }
        std::sort(argmax.begin(), argmax.end(),
                  [&](std::size_t a, std::size_t b) { return index[a].discovery_index < index[b].discovery_index; });
        evidence.tie_detected = argmax.size() >= 2;
        pick = argmax.front();
        if (evidence.tie_detected && policy.tie_break == TieBreak::SeededRandom) {
            const auto stream = derive_stream_seed(policy.seed, trial_ordinal);
            TieBreakRng rng(stream);
            pick = argmax[rng.below(argmax.size())];
            evidence.rng_seed_used = stream;
        }
        break;
    }
    case PolicyKind::Pinned: {
        std::vector<std::size_t> hits;
        for (std::size_t i = 0; i < index.size(); ++i) {
            if (index[i].provider_id == policy.pinned_provider) hits.push_back(i);
        }
        if (hits.empty()) {
            throw Error(ErrorCode::PinnedProviderAbsent, "pinned provider '" + policy.pinned_provider + "' is not in the index");
        }
        if (hits.size() > 1) {
            throw Error(ErrorCode::PinnedProviderAmbiguous,
                        "pinned provider '" + policy.pinned_provider + "' advertises the tool more than once");
        }
        pick = hits.front();
        break;
    }
    }

    evidence.chosen = index[pick].provider_id;
    evidence.chosen_index = index[pick].discovery_index;
    return {index[pick], std::move(evidence)};
}

json to_json(const ProviderArtifact& a)
{
    json tools = json::array();
    for (const auto& t : a.tools) tools.push_back({{"name", t.name}, {"description", t.description}});
    return {{"server_id", a.server_id}, {"provider_id", a.provider_id}, {"tools", std::move(tools)}};
}

ProviderArtifact artifact_from_json(const json& j)
{
    ProviderArtifact a;
    a.server_id = j.at("server_id").get<std::string>();
    a.provider_id = j.at("provider_id").get<std::string>();
    for (const auto& t : j.at("tools")) a.tools.push_back(wire::descriptor_from_json(t));
    return a;
}

std::vector<ToolCandidate> index_from_artifacts(std::span<const ProviderArtifact> artifacts)
{
    std::vector<ToolCandidate> index;
    for (const auto& a : artifacts) {
        for (const auto& t : a.tools) index.push_back({t, a.provider_id, index.size()});
    }
    return index;
}

std::vector<ToolCandidate> Discovery::candidates_for(std::string_view tool_name) const
{
    std::vector<ToolCandidate> out;
    std::copy_if(index_.begin(), index_.end(), std::back_inserter(out),
                 [&](const ToolCandidate& c) { return c.descriptor.name == tool_name; });
    return out;
}

bool Discovery::has_provider(std::string_view provider_id) const
{
    return std::any_of(artifacts_.begin(), artifacts_.end(), [&](const ProviderArtifact& a) { return a.provider_id == provider_id; });
}

wire::Session& Discovery::session_for(const ToolCandidate& candidate)
{
    if (candidate.discovery_index >= slot_of_index_.size()) {
        throw Error(ErrorCode::NoCandidate, "candidate is not part of this index");
    }
    return *sessions_[slot_of_index_[candidate.discovery_index]];
}

ToolCallResult Discovery::invoke(const ToolCandidate& candidate, std::string_view task, const std::string& trial_id)
{
    json arguments = {
        {"trial_id", trial_id},
        {"task", std::string(task)},
        {"merchant_id", "M-1001"},
        {"amount", "125.00"},
        {"currency", "USD"},
    };
    return session_for(candidate).call_tool(candidate.descriptor.name, arguments);
}

Discovery build_candidate_index(const registry::DiscoverySnapshot& snapshot, const DiscoveryOptions& options)
{
    struct Probe {
        std::unique_ptr<wire::Session> session;
        ProviderArtifact artifact;
        std::optional<DiscoveryFailure> failure;
    };

    auto probe = [&options](const registry::ServerSpec& spec) {
        Probe p;
        p.artifact.server_id = spec.server_id;
        try {
            auto session = std::make_unique<wire::Session>(wire::ChildProcess::spawn(spec.command, spec.args), options.session);
            p.artifact.provider_id = session->handshake().provider;
            p.artifact.tools = session->list_tools();
            p.session = std::move(session);
        } catch (const Error& e) {
            p.failure = DiscoveryFailure{spec.server_id, e.code(), e.what()};
        }
        return p;
    };

    // Handshakes may complete in any order; results are merged in snapshot order.
    std::vector<Probe> probes;
    if (options.concurrent && snapshot.specs.size() > 1) {
        std::vector<std::future<Probe>> pending;
        for (const auto& spec : snapshot.specs) pending.push_back(std::async(std::launch::async, probe, std::cref(spec)));
        for (auto& f : pending) probes.push_back(f.get());
    } else {
        for (const auto& spec : snapshot.specs) probes.push_back(probe(spec));
    }

    Discovery d;
    for (auto& p : probes) {
        if (p.failure) {
            spdlog::warn("discovery: server '{}' unreachable: {}", p.failure->server_id, p.failure->message);
            d.failures_.push_back(std::move(*p.failure));
            continue;
        }
        const auto slot = d.sessions_.size();
        for (const auto& t : p.artifact.tools) {
            d.index_.push_back({t, p.artifact.provider_id, d.index_.size()});
            d.slot_of_index_.push_back(slot);
        }
        d.sessions_.push_back(std::move(p.session));
        d.artifacts_.push_back(std::move(p.artifact));
    }
    if (d.sessions_.empty()) {
        throw Error(ErrorCode::NoServersReachable,
                    std::to_string(snapshot.specs.size()) + " server spec(s), none reachable");
    }
    return d;
}

} // namespace misbind::orchestrator
