// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "misbind/error.hpp"
#include "misbind/orchestrator.hpp"
#include "misbind/toolserver.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cctype>
#include <map>
#include <numeric>
#include <random>
#include <regex>
#include <set>

using namespace misbind;
using namespace misbind::orchestrator;
using toolserver::MetadataVariant;

namespace {

const std::string kTask = "Authorize a merchant payment via the official bank-approved verified PSP tool";
const std::string kTool = std::string(toolserver::kPaymentToolName);

// Independent scorer: regex tokenization into std::set, no shared code.
Rational oracle_score(const std::string& task, const std::string& description)
{
    static const std::regex token("[A-Za-z0-9-]+");
    auto tokens = [](const std::string& s) {
        std::set<std::string> out;
        for (auto it = std::sregex_iterator(s.begin(), s.end(), token); it != std::sregex_iterator(); ++it) {
            std::string t = it->str();
            std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return std::tolower(c); });
            out.insert(t);
        }
        return out;
    };
    const auto a = tokens(task);
    const auto b = tokens(description);
    if (a.empty()) return Rational(0, 1);
    std::vector<std::string> both;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(both));
    return Rational(static_cast<std::int64_t>(both.size()), static_cast<std::int64_t>(a.size()));
}

ToolCandidate cand(std::string provider, std::string description, std::size_t index)
{
    return {{kTool, std::move(description)}, std::move(provider), index};
}

std::string desc(MetadataVariant v, bool attacker)
{
    return attacker ? toolserver::make_attacker_persona(v).tools[0].description
                    : toolserver::make_legit_persona(v).tools[0].description;
}

ErrorCode code_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    return ErrorCode::RemoteError;
}

registry::ServerSpec server_spec(const std::string& id, std::vector<std::string> args)
{
    return {id, testsupport::kServer, std::move(args), registry::StaticPosition{0}};
}

} // namespace

// Token sets listed by hand from the fixed task and descriptions.
TEST(Score, HandListedTokenOverlaps)
{
    const std::set<std::string> task = {"authorize", "a", "merchant", "payment", "via", "the",
                                        "official", "bank-approved", "verified", "psp", "tool"};
    const std::set<std::string> legit_cues = {"authorize", "a", "merchant", "payment", "with", "the",
                                              "official", "bank-approved", "verified", "psp"};
    const std::set<std::string> attacker_cues = {"official", "bank-approved", "verified", "psp", "gateway",
                                                 "authorize", "a", "merchant", "payment", "instantly"};
    const std::set<std::string> plain = {"authorize", "a", "merchant", "payment"};
    auto overlap = [&](const std::set<std::string>& d) {
        std::size_t n = 0;
        for (const auto& t : d) n += task.count(t);
        return Rational(static_cast<std::int64_t>(n), static_cast<std::int64_t>(task.size()));
    };
    ASSERT_EQ(overlap(legit_cues), Rational(9, 11));
    ASSERT_EQ(overlap(attacker_cues), Rational(8, 11));
    ASSERT_EQ(overlap(plain), Rational(4, 11));

    EXPECT_EQ(score_breakdown(kTask, desc(MetadataVariant::TrustCues, false)).score, Rational(9, 11));
    EXPECT_EQ(score_breakdown(kTask, desc(MetadataVariant::TrustCues, true)).score, Rational(8, 11));
    EXPECT_EQ(score_breakdown(kTask, desc(MetadataVariant::Plain, false)).score, Rational(4, 11));
    EXPECT_EQ(score_breakdown(kTask, desc(MetadataVariant::Plain, true)).score, Rational(4, 11));

    const auto b = score_breakdown(kTask, desc(MetadataVariant::TrustCues, true));
    EXPECT_EQ(b.task_token_count, 11u);
    EXPECT_EQ(b.matched_cues, (std::vector<std::string>{"official", "bank-approved", "verified", "psp"}));
}

TEST(Score, BasicLaws)
{
    EXPECT_GT(score_candidate(kTask, cand("x", desc(MetadataVariant::TrustCues, false), 0)),
              score_candidate(kTask, cand("x", desc(MetadataVariant::Plain, false), 0)));
    EXPECT_EQ(score_candidate(kTask, cand("x", "", 0)), Rational(0, 1));
    EXPECT_EQ(score_candidate(kTask, cand("a", "same text", 0)), score_candidate(kTask, cand("b", "same text", 7)));
}

TEST(Score, MatchesOracleAndStaysInBounds)
{
    const std::vector<std::string> words = {"Authorize", "a", "merchant", "PAYMENT", "via", "the", "official",
                                            "bank-approved", "Verified", "psp", "tool", "refund", "x", "--",
                                            "gateway", "fast", "PSP-2", "é", "1", "bank", "approved"};
    const std::vector<std::string> seps = {" ", ",", ": ", "\t", "/", ".", "_", "!"};
    std::mt19937_64 rng(99);
    auto sentence = [&](std::size_t max) {
        std::string s;
        for (std::size_t i = 0, n = rng() % max; i < n; ++i) s += words[rng() % words.size()] + seps[rng() % seps.size()];
        return s;
    };
    for (int i = 0; i < 3000; ++i) {
        const auto task = sentence(12);
        const auto d = sentence(14);
        const auto got = score_breakdown(task, d).score;
        EXPECT_EQ(got, oracle_score(task, d)) << task << " | " << d;
        EXPECT_LE(Rational(0, 1), got);
        EXPECT_LE(got, Rational(1, 1));
    }
}

TEST(Resolve, FirstMatchExamples)
{
    const std::vector<ToolCandidate> legit_first = {cand("legit-psp", "", 0), cand("attacker-psp", "", 1)};
    const std::vector<ToolCandidate> attacker_first = {cand("attacker-psp", "", 0), cand("legit-psp", "", 1)};
    EXPECT_EQ(resolve(kTask, legit_first, ResolverPolicy::first_match()).candidate.provider_id, "legit-psp");
    EXPECT_EQ(resolve(kTask, attacker_first, ResolverPolicy::first_match()).candidate.provider_id, "attacker-psp");
    EXPECT_EQ(code_of([] { resolve(kTask, {}, ResolverPolicy::first_match()); }), ErrorCode::NoCandidate);
    const auto ev = resolve(kTask, legit_first, ResolverPolicy::first_match()).evidence;
    EXPECT_FALSE(ev.tie_detected);
    EXPECT_FALSE(ev.candidates[0].score);
}

TEST(Resolve, FirstMatchPermutationLaw)
{
    std::mt19937_64 rng(17);
    for (int round = 0; round < 500; ++round) {
        std::vector<ToolCandidate> c;
        const auto n = 2 + rng() % 5;
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), rng() % 4);
        for (std::size_t i = 0; i < n; ++i) c.push_back(cand("p" + std::to_string(idx[i]), "d", idx[i]));
        const auto expected = "p" + std::to_string(idx.front());
        for (int k = 0; k < 5; ++k) {
            std::shuffle(c.begin(), c.end(), rng);
            const auto r = resolve(kTask, c, ResolverPolicy::first_match());
            EXPECT_EQ(r.candidate.provider_id, expected);
            EXPECT_EQ(r.evidence.chosen, expected);
        }
    }
}

TEST(Resolve, BestMatchByMetadata)
{
    const std::vector<ToolCandidate> attacker_cues = {cand("legit-psp", desc(MetadataVariant::Plain, false), 0),
                                                      cand("attacker-psp", desc(MetadataVariant::TrustCues, true), 1)};
    const std::vector<ToolCandidate> legit_cues = {cand("attacker-psp", desc(MetadataVariant::Plain, true), 0),
                                                   cand("legit-psp", desc(MetadataVariant::TrustCues, false), 1)};
    const auto a = resolve(kTask, attacker_cues, ResolverPolicy::best_match());
    EXPECT_EQ(a.candidate.provider_id, "attacker-psp");
    EXPECT_FALSE(a.evidence.tie_detected);
    EXPECT_EQ(*a.evidence.candidates[1].score, Rational(8, 11));
    EXPECT_EQ(resolve(kTask, legit_cues, ResolverPolicy::best_match()).candidate.provider_id, "legit-psp");
}

TEST(Resolve, ArgmaxLawIsSeedIndependent)
{
    const std::vector<ToolCandidate> c = {cand("legit-psp", desc(MetadataVariant::Plain, false), 0),
                                          cand("attacker-psp", desc(MetadataVariant::TrustCues, true), 1),
                                          cand("other", "nothing relevant", 2)};
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto r = resolve(kTask, c, ResolverPolicy::best_match_seeded(seed * 7919 + 1), seed);
        EXPECT_EQ(r.candidate.provider_id, "attacker-psp");
        EXPECT_FALSE(r.evidence.tie_detected);
        EXPECT_FALSE(r.evidence.rng_seed_used);
    }
}

TEST(Resolve, ClonedTieIsDeterministicPerSeed)
{
    const auto legit = toolserver::make_legit_persona(MetadataVariant::TrustCues);
    const auto attacker = toolserver::make_attacker_persona(MetadataVariant::Cloned, &legit);
    const std::vector<ToolCandidate> c = {{legit.tools[0], legit.provider_id, 0}, {attacker.tools[0], attacker.provider_id, 1}};
    for (std::uint64_t seed : {1ull, 2025ull, 0xFFFFFFFFFFFFFFFFull}) {
        for (std::uint64_t t = 0; t < 50; ++t) {
            const auto a = resolve(kTask, c, ResolverPolicy::best_match_seeded(seed), t);
            const auto b = resolve(kTask, c, ResolverPolicy::best_match_seeded(seed), t);
            EXPECT_EQ(a.evidence, b.evidence);
            EXPECT_TRUE(a.evidence.tie_detected);
            EXPECT_EQ(a.evidence.rng_seed_used, derive_stream_seed(seed, t));
        }
    }
    // Without a tie-break the lowest discovery index wins the tie.
    const auto r = resolve(kTask, c, ResolverPolicy::best_match());
    EXPECT_TRUE(r.evidence.tie_detected);
    EXPECT_EQ(r.candidate.provider_id, "legit-psp");
}

TEST(Resolve, TieUniformity)
{
    for (std::size_t k : {2u, 3u}) {
        std::vector<ToolCandidate> c;
        for (std::size_t i = 0; i < k; ++i) c.push_back(cand("p" + std::to_string(i), desc(MetadataVariant::TrustCues, false), i));
        std::map<std::string, int> hits;
        for (std::uint64_t s = 0; s < 1000; ++s) {
            const auto seed = 0x9E3779B97F4A7C15ull * (s + 1);
            ++hits[resolve(kTask, c, ResolverPolicy::best_match_seeded(seed), 0).candidate.provider_id];
        }
        for (std::size_t i = 0; i < k; ++i) {
            const double f = hits["p" + std::to_string(i)] / 1000.0;
            EXPECT_NEAR(f, 1.0 / static_cast<double>(k), 0.05) << "k=" << k << " p" << i;
        }
    }
}

TEST(Resolve, PinnedSoundnessExhaustive)
{
    const std::vector<std::string> providers = {"legit-psp", "attacker-psp", "other"};
    const std::vector<std::string> descs = {desc(MetadataVariant::TrustCues, false), desc(MetadataVariant::TrustCues, true),
                                            desc(MetadataVariant::Plain, false), ""};
    const std::vector<std::string> pins = {"legit-psp", "attacker-psp", "other", "missing"};
    int checked = 0;
    for (const auto& p0 : providers) {
        for (const auto& p1 : providers) {
            for (const auto& d0 : descs) {
                for (const auto& d1 : descs) {
                    const std::vector<ToolCandidate> c = {cand(p0, d0, 0), cand(p1, d1, 1)};
                    for (const auto& pin : pins) {
                        ++checked;
                        const int matches = (p0 == pin) + (p1 == pin);
                        try {
                            const auto r = resolve(kTask, c, ResolverPolicy::pinned(pin));
                            EXPECT_EQ(matches, 1);
                            EXPECT_EQ(r.candidate.provider_id, pin);
                        } catch (const Error& e) {
                            EXPECT_EQ(e.code(), matches == 0 ? ErrorCode::PinnedProviderAbsent : ErrorCode::PinnedProviderAmbiguous);
                        }
                    }
                }
            }
        }
    }
    EXPECT_EQ(checked, 3 * 3 * 4 * 4 * 4);
}

TEST(Resolve, OracleEquivalence)
{
    const std::vector<std::string> pool = {desc(MetadataVariant::TrustCues, false), desc(MetadataVariant::TrustCues, true),
                                           desc(MetadataVariant::Plain, false), "", "verified tool", "the psp"};
    std::mt19937_64 rng(123);
    for (int round = 0; round < 2000; ++round) {
        std::vector<ToolCandidate> c;
        const auto n = 1 + rng() % 5;
        for (std::size_t i = 0; i < n; ++i) c.push_back(cand("p" + std::to_string(i), pool[rng() % pool.size()], i));

        Rational best(0, 1);
        for (const auto& x : c) best = std::max(best, oracle_score(kTask, x.descriptor.description));
        const auto r = resolve(kTask, c, ResolverPolicy::best_match_seeded(rng()), rng() % 100);
        EXPECT_EQ(oracle_score(kTask, r.candidate.descriptor.description), best);
        const auto argmax = std::count_if(c.begin(), c.end(), [&](const ToolCandidate& x) {
            return oracle_score(kTask, x.descriptor.description) == best;
        });
        EXPECT_EQ(r.evidence.tie_detected, argmax >= 2);

        const auto f = resolve(kTask, c, ResolverPolicy::first_match());
        EXPECT_EQ(f.candidate.discovery_index, 0u);
    }
}

TEST(Rng, PortableEngineAndBoundedDraw)
{
    std::mt19937_64 engine;
    engine.discard(9999);
    EXPECT_EQ(engine(), 9981545732273789042ull);
    TieBreakRng rng(42);
    std::vector<int> counts(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.below(7);
        ASSERT_LT(v, 7u);
        ++counts[v];
    }
    for (const int c : counts) EXPECT_NEAR(c, 1000, 150);
    EXPECT_EQ(TieBreakRng(1).below(1), 0u);
}

TEST(Policy, JsonRoundTripAndValidation)
{
    for (const auto& p : {ResolverPolicy::first_match(), ResolverPolicy::best_match(), ResolverPolicy::best_match_seeded(77),
                          ResolverPolicy::pinned("legit-psp")}) {
        EXPECT_EQ(policy_from_json(to_json(p)), p);
    }
    EXPECT_THROW(policy_from_json(json{{"kind", "first_match"}, {"tie_break", "seeded_random"}}), Error);
    EXPECT_THROW(policy_from_json(json{{"kind", "pinned"}}), Error);
    EXPECT_THROW(policy_from_json(json{{"kind", "lottery"}}), Error);
}

TEST(Evidence, JsonRoundTrip)
{
    const std::vector<ToolCandidate> c = {cand("legit-psp", desc(MetadataVariant::TrustCues, false), 0),
                                          cand("attacker-psp", desc(MetadataVariant::TrustCues, false), 1)};
    const auto r = resolve(kTask, c, ResolverPolicy::best_match_seeded(5), 3);
    EXPECT_EQ(selection_from_json(to_json(r.evidence)), r.evidence);
}

TEST(Discovery, IndexAcrossLiveServers)
{
    registry::DiscoverySnapshot snap;
    snap.specs = {server_spec("legit", {"--persona", "legit", "--metadata", "trust_cues"}),
                  server_spec("attacker", {"--persona", "attacker", "--metadata", "plain"})};
    for (const bool concurrent : {true, false}) {
        DiscoveryOptions opt;
        opt.concurrent = concurrent;
        auto d = build_candidate_index(snap, opt);
        ASSERT_EQ(d.index().size(), 2u);
        EXPECT_EQ(d.index()[0].provider_id, "legit-psp");
        EXPECT_EQ(d.index()[0].discovery_index, 0u);
        EXPECT_EQ(d.index()[1].provider_id, "attacker-psp");
        EXPECT_EQ(d.index()[1].discovery_index, 1u);
        EXPECT_EQ(d.candidates_for(kTool).size(), 2u);
        EXPECT_TRUE(d.candidates_for("other.tool").empty());
        EXPECT_TRUE(d.failures().empty());

        const auto attacker_call = d.invoke(d.index()[1], kTask, "t42");
        ASSERT_TRUE(attacker_call.evidence_marker);
        EXPECT_EQ(*attacker_call.evidence_marker, "EVID::attacker-psp::t42");
        EXPECT_FALSE(d.invoke(d.index()[0], kTask, "t42").evidence_marker);
    }
}

TEST(Discovery, LegitOnlyAndEmpty)
{
    registry::DiscoverySnapshot snap;
    snap.specs = {server_spec("legit", {"--persona", "legit"})};
    EXPECT_EQ(build_candidate_index(snap).index().size(), 1u);
    EXPECT_EQ(code_of([] { build_candidate_index(registry::DiscoverySnapshot{}); }), ErrorCode::NoServersReachable);
}

TEST(Discovery, UnreachableServersAreRecorded)
{
    registry::DiscoverySnapshot snap;
    snap.specs = {registry::ServerSpec{"ghost", "/nonexistent/server", {}, registry::StaticPosition{0}},
                  server_spec("silent", {"--persona", "stub", "--stub-behavior", "silent"}),
                  server_spec("legit", {"--persona", "legit"})};
    DiscoveryOptions opt;
    opt.session.handshake_timeout = wire::Millis{300};
    auto d = build_candidate_index(snap, opt);
    ASSERT_EQ(d.index().size(), 1u);
    EXPECT_EQ(d.index()[0].discovery_index, 0u);
    ASSERT_EQ(d.failures().size(), 2u);
    EXPECT_EQ(d.failures()[0].server_id, "ghost");
    EXPECT_EQ(d.failures()[0].code, ErrorCode::SpawnError);
    EXPECT_EQ(d.failures()[1].code, ErrorCode::HandshakeTimeout);

    snap.specs.pop_back();
    EXPECT_EQ(code_of([&] { build_candidate_index(snap, opt); }), ErrorCode::NoServersReachable);
}

TEST(Discovery, InvokeAfterServerDeathTimesOut)
{
    registry::DiscoverySnapshot snap;
    snap.specs = {server_spec("attacker", {"--persona", "attacker"})};
    DiscoveryOptions opt;
    opt.session.call_timeout = wire::Millis{300};
    auto d = build_candidate_index(snap, opt);
    const auto c = d.index()[0];
    d.session_for(c).process().kill();
    EXPECT_EQ(code_of([&] { d.invoke(c, kTask, "t1"); }), ErrorCode::CallTimeout);
}
