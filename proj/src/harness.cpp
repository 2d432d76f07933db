// SPDX-License-Identifier: Apache-2.0
#include "misbind/harness.hpp"

#include "misbind/error.hpp"
#include "misbind/log.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace misbind::harness {

namespace fs = std::filesystem;
using orchestrator::PolicyKind;
using orchestrator::TieBreak;
using toolserver::MetadataVariant;
using toolserver::Role;

namespace {

[[noreturn]] void invalid(const std::string& why)
{
    throw Error(ErrorCode::InvalidConfig, why);
}

std::string now_utc()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string trial_id_for(std::uint64_t ordinal)
{
    return "t" + std::to_string(ordinal);
}

ServerLayout layout_from_json(const json& j, std::size_t position, const ExperimentConfig& cfg)
{
    if (!j.is_object()) invalid("discovery.servers entries must be objects");
    ServerLayout s;
    s.role = toolserver::parse_role(j.value("role", std::string("legit")));
    s.metadata = toolserver::parse_metadata(j.value("metadata", std::string("plain")));
    s.server_id = j.value("server_id", std::string(toolserver::to_string(s.role)));
    const auto default_provider = s.role == Role::Attacker ? cfg.attacker_provider : cfg.legit_provider;
    s.provider_id = j.value("provider_id", default_provider);
    char prefix[8];
    std::snprintf(prefix, sizeof prefix, "%02zu-", position + 1);
    s.filename = j.value("filename", std::string(prefix) + s.server_id + ".json");
    return s;
}

json layout_to_json(const ServerLayout& s)
{
    return {{"role", toolserver::to_string(s.role)},
            {"metadata", toolserver::to_string(s.metadata)},
            {"server_id", s.server_id},
            {"provider_id", s.provider_id},
            {"filename", s.filename}};
}

Expectation expectation_from_json(const json& j)
{
    Expectation e;
    if (!j.is_object()) return e;
    if (const auto vr = j.find("vr"); vr != j.end()) e.vr = Rational::parse(vr->get<std::string>());
    if (const auto lo = j.find("vr_min"); lo != j.end()) e.vr_min = lo->get<double>();
    if (const auto hi = j.find("vr_max"); hi != j.end()) e.vr_max = hi->get<double>();
    if (const auto err = j.find("error"); err != j.end()) {
        e.error = parse_error_code(err->get<std::string>());
        if (!e.error) invalid("unknown expected error '" + err->get<std::string>() + "'");
    }
    return e;
}

json expectation_to_json(const Expectation& e)
{
    json j = json::object();
    if (e.vr) j["vr"] = e.vr->decimal(3);
    if (e.vr_min) j["vr_min"] = *e.vr_min;
    if (e.vr_max) j["vr_max"] = *e.vr_max;
    if (e.error) j["error"] = to_string(*e.error);
    return j;
}

ResolverPolicy effective_policy(const ExperimentConfig& cfg)
{
    auto p = cfg.policy;
    if (p.kind == PolicyKind::BestMatch && p.tie_break == TieBreak::SeededRandom) p.seed = cfg.seed;
    return p;
}

bool legit_among(const std::vector<orchestrator::ToolCandidate>& candidates, std::string_view legit)
{
    return std::any_of(candidates.begin(), candidates.end(),
                       [&](const orchestrator::ToolCandidate& c) { return c.provider_id == legit; });
}

[[noreturn]] void diverge(const std::string& where, const std::string& what)
{
    throw Error(ErrorCode::ReplayDivergence, where + ": " + what);
}

} // namespace

void validate(const ExperimentConfig& cfg)
{
    if (cfg.experiment_id.empty()) invalid("experiment_id is required");
    if (cfg.trials < 1) invalid(cfg.experiment_id + ": trials must be >= 1");
    if (cfg.task.empty()) invalid(cfg.experiment_id + ": task must be non-empty");
    if (cfg.tool_name.empty()) invalid(cfg.experiment_id + ": tool_name must be non-empty");
    orchestrator::validate(cfg.policy);
}

ExperimentConfig config_from_json(const json& j, const std::string& base_dir)
{
    if (!j.is_object()) invalid("experiment config must be an object");
    ExperimentConfig cfg;
    try {
        cfg.experiment_id = j.value("experiment_id", std::string());
        cfg.trials = j.value("trials", kDefaultTrials);
        cfg.task = j.value("task", std::string(kDefaultTask));
        cfg.tool_name = j.value("tool_name", cfg.tool_name);
        cfg.legit_provider = j.value("legit_provider", cfg.legit_provider);
        cfg.attacker_provider = j.value("attacker_provider", cfg.attacker_provider);
        cfg.attacker_present = j.value("attacker_present", true);
        cfg.fail_closed = j.value("fail_closed", true);
        if (const auto p = j.find("policy"); p != j.end()) cfg.policy = orchestrator::policy_from_json(*p);
        cfg.seed = cfg.policy.seed;
        if (const auto s = j.find("seed"); s != j.end()) cfg.seed = s->get<std::uint64_t>();
        cfg.policy = effective_policy(cfg);

        const auto d = j.find("discovery");
        if (d == j.end() || !d->is_object()) invalid("discovery object is required");
        cfg.discovery.surface = registry::parse_surface(d->value("surface", std::string("static")));
        if (const auto path = d->find("path"); path != d->end()) {
            fs::path p = path->get<std::string>();
            if (p.is_relative()) p = fs::path(base_dir) / p;
            cfg.discovery.path = p.lexically_normal().string();
        }
        if (const auto servers = d->find("servers"); servers != d->end()) {
            if (!servers->is_array()) invalid("discovery.servers must be an array");
            for (std::size_t i = 0; i < servers->size(); ++i) {
                cfg.discovery.servers.push_back(layout_from_json((*servers)[i], i, cfg));
            }
        }
        if (const auto l = j.find("labels"); l != j.end() && l->is_object()) {
            cfg.labels.group = l->value("group", cfg.labels.group);
            cfg.labels.exp = l->value("exp", cfg.labels.exp);
            cfg.labels.manipulation = l->value("manipulation", cfg.labels.manipulation);
            cfg.labels.tie_rule = l->value("tie_rule", cfg.labels.tie_rule);
        }
        if (const auto e = j.find("expect"); e != j.end()) cfg.expect = expectation_from_json(*e);
    } catch (const json::exception& e) {
        invalid(std::string("experiment config: ") + e.what());
    }
    return cfg;
}

json to_json(const ExperimentConfig& cfg)
{
    json discovery = {{"surface", registry::to_string(cfg.discovery.surface)}};
    if (cfg.discovery.path) discovery["path"] = *cfg.discovery.path;
    if (!cfg.discovery.servers.empty()) {
        json servers = json::array();
        for (const auto& s : cfg.discovery.servers) servers.push_back(layout_to_json(s));
        discovery["servers"] = std::move(servers);
    }
    return {
        {"experiment_id", cfg.experiment_id},
        {"discovery", std::move(discovery)},
        {"policy", orchestrator::to_json(effective_policy(cfg))},
        {"attacker_present", cfg.attacker_present},
        {"trials", cfg.trials},
        {"seed", cfg.seed},
        {"task", cfg.task},
        {"tool_name", cfg.tool_name},
        {"legit_provider", cfg.legit_provider},
        {"attacker_provider", cfg.attacker_provider},
        {"fail_closed", cfg.fail_closed},
        {"labels",
         {{"group", cfg.labels.group},
          {"exp", cfg.labels.exp},
          {"manipulation", cfg.labels.manipulation},
          {"tie_rule", cfg.labels.tie_rule}}},
        {"expect", expectation_to_json(cfg.expect)},
    };
}

ExperimentConfig load_experiment_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigNotFound, path);
    std::stringstream ss;
    ss << in.rdbuf();
    const auto j = json::parse(ss.str(), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::ConfigParseError, path + ": not valid JSON");
    auto cfg = config_from_json(j, fs::path(path).parent_path().string());
    if (cfg.experiment_id.empty()) cfg.experiment_id = fs::path(path).stem().string();
    return cfg;
}

json to_json(const TrialRecord& r)
{
    json discovery = json::array();
    for (const auto& a : r.discovery) discovery.push_back(orchestrator::to_json(a));
    return {
        {"type", "trial"},
        {"ordinal", r.ordinal},
        {"trial_id", r.trial_id},
        {"discovery", std::move(discovery)},
        {"selection", orchestrator::to_json(r.selection)},
        {"invoked_provider", r.invoked_provider},
        {"marker", r.marker ? json(*r.marker) : json(nullptr)},
        {"content", r.content},
        {"violation", r.violation},
    };
}

TrialRecord trial_from_json(const json& j)
{
    TrialRecord r;
    r.ordinal = j.at("ordinal").get<std::uint64_t>();
    r.trial_id = j.at("trial_id").get<std::string>();
    for (const auto& a : j.at("discovery")) r.discovery.push_back(orchestrator::artifact_from_json(a));
    r.selection = orchestrator::selection_from_json(j.at("selection"));
    r.invoked_provider = j.at("invoked_provider").get<std::string>();
    if (const auto& m = j.at("marker"); !m.is_null()) r.marker = m.get<std::string>();
    r.content = j.value("content", std::string());
    r.violation = j.at("violation").get<bool>();
    return r;
}

Rational compute_vr(long long violations, long long n)
{
    if (n < 1 || violations < 0 || violations > n) {
        throw Error(ErrorCode::DomainError,
                    "violation rate needs 0 <= violations <= n and n >= 1, got " + std::to_string(violations) + "/" +
                        std::to_string(n));
    }
    return Rational(violations, n);
}

bool detect_violation(const TrialRecord& record, std::string_view attacker_id, bool legit_present)
{
    const bool attacker_ran = record.invoked_provider == attacker_id;
    auto mismatch = [&](const std::string& why) -> bool {
        throw Error(ErrorCode::EvidenceMismatch, record.trial_id + ": " + why);
    };

    if (record.marker) {
        const auto m = wire::parse_marker(*record.marker);
        if (!m) return mismatch("unparsable evidence marker '" + *record.marker + "'");
        if (!attacker_ran) return mismatch("marker present but '" + record.invoked_provider + "' was invoked");
        if (m->provider_id != record.invoked_provider) return mismatch("marker names provider '" + m->provider_id + "'");
        if (m->trial_id != record.trial_id) return mismatch("marker echoes trial '" + m->trial_id + "'");
    } else if (attacker_ran) {
        return mismatch("attacker invoked but no evidence marker returned");
    }

    const bool violation = attacker_ran && legit_present;
    if (violation != (record.marker.has_value() && legit_present)) return mismatch("violation flag disagrees with marker");
    return violation;
}

registry::DiscoverySnapshot prepare_discovery(const ExperimentConfig& cfg, const HarnessOptions& options)
{
    const registry::Substitutions subs{{"MISBIND_SERVER", options.server_binary}};
    if (cfg.discovery.path) {
        return cfg.discovery.surface == registry::Surface::Static
                   ? registry::load_static_config(*cfg.discovery.path, subs)
                   : registry::load_registry_dir(*cfg.discovery.path, subs);
    }
    if (options.server_binary.empty()) invalid("server binary path is required to materialize discovery");
    if (options.work_dir.empty()) invalid("work directory is required to materialize discovery");

    const fs::path work = fs::path(options.work_dir) / cfg.experiment_id;
    fs::create_directories(work);

    std::vector<ServerLayout> servers;
    for (const auto& s : cfg.discovery.servers) {
        if (s.role == Role::Attacker && !cfg.attacker_present) continue;
        servers.push_back(s);
    }

    const auto legit = std::find_if(servers.begin(), servers.end(), [](const ServerLayout& s) { return s.role == Role::Legit; });
    const fs::path clone_source = work / "legit-descriptor.json";

    auto entry_for = [&](const ServerLayout& s) {
        json args = {"--persona", toolserver::to_string(s.role), "--metadata", toolserver::to_string(s.metadata),
                     "--provider-id", s.provider_id};
        if (s.metadata == MetadataVariant::Cloned) {
            if (legit == servers.end()) invalid(cfg.experiment_id + ": cloned metadata needs a legit server to clone");
            const auto source = toolserver::make_legit_persona(legit->metadata, legit->provider_id);
            toolserver::write_descriptor_file(clone_source.string(), source.tools.front());
            args.push_back("--clone-from");
            args.push_back(clone_source.string());
        }
        return json{{"server_id", s.server_id}, {"command", options.server_binary}, {"args", std::move(args)}};
    };

    if (cfg.discovery.surface == registry::Surface::Static) {
        json doc = {{"servers", json::array()}};
        for (const auto& s : servers) doc["servers"].push_back(entry_for(s));
        const auto path = work / "servers.json";
        std::ofstream(path) << doc.dump(2) << "\n";
        return registry::load_static_config(path.string(), subs);
    }

    const auto dir = work / "registry";
    fs::remove_all(dir);
    fs::create_directories(dir);
    for (const auto& s : servers) std::ofstream(dir / s.filename) << entry_for(s).dump(2) << "\n";
    return registry::load_registry_dir(dir.string(), subs);
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const HarnessOptions& options)
{
    validate(cfg);
    const auto policy = effective_policy(cfg);
    const auto snapshot = prepare_discovery(cfg, options);
    auto discovery = orchestrator::build_candidate_index(snapshot, options.discovery);
    const auto candidates = discovery.candidates_for(cfg.tool_name);
    const bool legit_present = legit_among(candidates, cfg.legit_provider);

    ExperimentResult result;
    result.experiment_id = cfg.experiment_id;

    json failures = json::array();
    for (const auto& f : discovery.failures()) {
        failures.push_back({{"server_id", f.server_id}, {"code", to_string(f.code)}, {"message", f.message}});
    }
    result.header = {
        {"type", "header"},
        {"schema", kEvidenceSchema},
        {"experiment_id", cfg.experiment_id},
        {"surface", registry::to_string(snapshot.surface)},
        {"ordering_rule", snapshot.ordering_rule},
        {"policy", orchestrator::to_json(policy)},
        {"task", cfg.task},
        {"tool_name", cfg.tool_name},
        {"seed", cfg.seed},
        {"trials", cfg.trials},
        {"legit_provider", cfg.legit_provider},
        {"attacker_provider", cfg.attacker_provider},
        {"attacker_present", discovery.has_provider(cfg.attacker_provider)},
        {"labels",
         {{"group", cfg.labels.group},
          {"exp", cfg.labels.exp},
          {"manipulation", cfg.labels.manipulation},
          {"tie_rule", cfg.labels.tie_rule}}},
        {"discovery_failures", std::move(failures)},
    };
    if (options.timestamps) result.header["started_at"] = now_utc();

    for (int t = 0; t < cfg.trials; ++t) {
        const auto ordinal = static_cast<std::uint64_t>(t);
        TrialRecord rec;
        rec.ordinal = ordinal;
        rec.trial_id = trial_id_for(ordinal);
        rec.discovery = discovery.artifacts();
        try {
            auto resolution = orchestrator::resolve(cfg.task, candidates, policy, ordinal);
            rec.selection = std::move(resolution.evidence);
            const auto call = discovery.invoke(resolution.candidate, cfg.task, rec.trial_id);
            rec.invoked_provider = resolution.candidate.provider_id;
            rec.marker = call.evidence_marker;
            rec.content = call.content;
            rec.violation = detect_violation(rec, cfg.attacker_provider, legit_present);
        } catch (const Error& e) {
            if (e.code() == ErrorCode::EvidenceMismatch || cfg.fail_closed) {
                throw Error(e.code(), cfg.experiment_id + " aborted at " + rec.trial_id + ": " + e.what(), e.rpc_code());
            }
            spdlog::warn("{}: trial {} aborted: {}", cfg.experiment_id, rec.trial_id, e.what());
            result.aborted.push_back({ordinal, rec.trial_id, e.code(), e.what()});
            continue;
        }
        if (rec.violation) ++result.violations;
        result.records.push_back(std::move(rec));
    }

    result.n = static_cast<int>(result.records.size());
    if (result.n == 0) throw Error(ErrorCode::DomainError, cfg.experiment_id + ": every trial aborted");
    result.vr = compute_vr(result.violations, result.n);
    return result;
}

void write_evidence_log(std::ostream& out, const ExperimentResult& result)
{
    out << result.header.dump() << "\n";
    // Trials and aborted trials interleave by ordinal.
    auto rec = result.records.begin();
    auto ab = result.aborted.begin();
    while (rec != result.records.end() || ab != result.aborted.end()) {
        if (ab == result.aborted.end() || (rec != result.records.end() && rec->ordinal < ab->ordinal)) {
            out << to_json(*rec++).dump() << "\n";
        } else {
            out << json{{"type", "aborted"},
                        {"ordinal", ab->ordinal},
                        {"trial_id", ab->trial_id},
                        {"code", to_string(ab->code)},
                        {"message", ab->message}}
                       .dump()
                << "\n";
            ++ab;
        }
    }
    out << json{{"type", "summary"},
                {"n", result.n},
                {"violations", result.violations},
                {"aborted", result.aborted.size()},
                {"vr", result.vr.str()},
                {"vr_decimal", result.vr.decimal(3)}}
               .dump()
        << "\n";
}

void write_evidence_log(const std::string& path, const ExperimentResult& result)
{
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::ConfigNotFound, "cannot write evidence log " + path);
    write_evidence_log(out, result);
}

ExperimentResult replay(std::istream& log)
{
    std::string line;
    std::size_t line_no = 0;
    auto parse_line = [&](const std::string& text) {
        auto j = json::parse(text, nullptr, false);
        if (j.is_discarded() || !j.is_object()) {
            throw Error(ErrorCode::MalformedLog, "line " + std::to_string(line_no) + " is not a JSON object");
        }
        return j;
    };

    if (!std::getline(log, line)) throw Error(ErrorCode::MalformedLog, "empty evidence log");
    ++line_no;
    const auto header = parse_line(line);
    if (header.value("type", "") != "header" || header.value("schema", "") != kEvidenceSchema) {
        throw Error(ErrorCode::MalformedLog, std::string("first line must be a ") + std::string(kEvidenceSchema) + " header");
    }

    ExperimentResult result;
    std::optional<json> summary;
    try {
        result.header = header;
        result.experiment_id = header.at("experiment_id").get<std::string>();
        const auto policy = orchestrator::policy_from_json(header.at("policy"));
        const auto task = header.at("task").get<std::string>();
        const auto tool_name = header.at("tool_name").get<std::string>();
        const auto legit = header.at("legit_provider").get<std::string>();
        const auto attacker = header.at("attacker_provider").get<std::string>();

        std::uint64_t expected_ordinal = 0;
        while (std::getline(log, line)) {
            ++line_no;
            if (line.empty()) continue;
            const auto j = parse_line(line);
            const auto type = j.value("type", "");
            if (summary) throw Error(ErrorCode::MalformedLog, "records after summary");
            if (type == "summary") {
                summary = j;
                continue;
            }
            if (type == "aborted") {
                result.aborted.push_back({j.at("ordinal").get<std::uint64_t>(), j.at("trial_id").get<std::string>(),
                                          parse_error_code(j.value("code", "")).value_or(ErrorCode::CallTimeout),
                                          j.value("message", "")});
                expected_ordinal = result.aborted.back().ordinal + 1;
                continue;
            }
            if (type != "trial") throw Error(ErrorCode::MalformedLog, "line " + std::to_string(line_no) + ": unknown type");

            const auto recorded = trial_from_json(j);
            const auto where = "trial " + recorded.trial_id;
            if (recorded.ordinal != expected_ordinal) diverge(where, "ordinal " + std::to_string(recorded.ordinal) + " out of sequence");
            ++expected_ordinal;

            const auto index = orchestrator::index_from_artifacts(recorded.discovery);
            std::vector<orchestrator::ToolCandidate> candidates;
            std::copy_if(index.begin(), index.end(), std::back_inserter(candidates),
                         [&](const orchestrator::ToolCandidate& c) { return c.descriptor.name == tool_name; });

            orchestrator::Resolution recomputed;
            try {
                recomputed = orchestrator::resolve(task, candidates, policy, recorded.ordinal);
            } catch (const Error& e) {
                diverge(where, std::string("selection no longer resolves: ") + e.what());
            }
            const auto& want = recomputed.evidence;
            const auto& got = recorded.selection;
            if (want.chosen != got.chosen) diverge(where, "chosen provider '" + got.chosen + "', recomputed '" + want.chosen + "'");
            if (want.chosen_index != got.chosen_index) diverge(where, "chosen index differs");
            if (want.tie_detected != got.tie_detected) diverge(where, "tie flag differs");
            if (want.rng_seed_used != got.rng_seed_used) diverge(where, "tie-break seed differs");
            if (want.candidates != got.candidates) diverge(where, "candidate scores differ");
            if (recorded.invoked_provider != want.chosen) {
                diverge(where, "invoked provider '" + recorded.invoked_provider + "', selection chose '" + want.chosen + "'");
            }
            const bool violation = detect_violation(recorded, attacker, legit_among(candidates, legit));
            if (violation != recorded.violation) diverge(where, "violation flag differs");

            if (violation) ++result.violations;
            result.records.push_back(recorded);
        }
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedLog, "line " + std::to_string(line_no) + ": " + e.what());
    }

    if (!summary) throw Error(ErrorCode::MalformedLog, "missing summary line");
    result.n = static_cast<int>(result.records.size());
    result.vr = compute_vr(result.violations, result.n);
    try {
        if (summary->at("n").get<int>() != result.n) diverge("summary", "n differs");
        if (summary->at("violations").get<int>() != result.violations) diverge("summary", "violation count differs");
        if (Rational::parse(summary->at("vr").get<std::string>()) != result.vr) diverge("summary", "VR differs");
    } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedLog, std::string("summary: ") + e.what());
    }
    return result;
}

ExperimentResult replay(const std::string& log_path)
{
    std::ifstream in(log_path);
    if (!in) throw Error(ErrorCode::ConfigNotFound, log_path);
    return replay(in);
}

} // namespace misbind::harness
