// SPDX-License-Identifier: Apache-2.0
#include "misbind/campaign.hpp"

#include "misbind/error.hpp"

#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <sstream>

namespace misbind::campaign {

namespace fs = std::filesystem;
using harness::json;
using orchestrator::PolicyKind;

namespace {

std::string surface_label(registry::Surface s)
{
    return s == registry::Surface::Static ? "static multi-server configuration" : "registry directory";
}

std::string policy_label(const orchestrator::ResolverPolicy& p)
{
    switch (p.kind) {
    case PolicyKind::FirstMatch: return "First-match";
    case PolicyKind::BestMatch: return "Best-match";
    case PolicyKind::Pinned: return "Pinned (" + p.pinned_provider + ")";
    }
    return "";
}

std::string group_title(const std::string& group)
{
    if (group == "table7") return "Unauthorized tool execution under name collision";
    if (group == "mitigation") return "Mitigation: provider pinning";
    if (group == "control") return "Controls: attacker absent";
    return group;
}

std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> ordered_groups(const CampaignReport& report)
{
    std::vector<std::string> groups{"table7", "mitigation", "control"};
    for (const auto& row : report.rows) {
        if (std::find(groups.begin(), groups.end(), row.config.labels.group) == groups.end()) {
            groups.push_back(row.config.labels.group);
        }
    }
    return groups;
}

struct Cells {
    std::string n;
    std::string violations;
    std::string vr;
};

Cells cells_of(const CampaignRow& row)
{
    if (row.result) {
        return {std::to_string(row.result->n), std::to_string(row.result->violations), row.result->vr.decimal(3)};
    }
    return {std::to_string(row.config.trials), "-", row.error ? "aborted: " + std::string(to_string(row.error->code)) : "-"};
}

std::string expectation_text(const harness::Expectation& e)
{
    if (e.error) return "error " + std::string(to_string(*e.error));
    if (e.vr) return "VR = " + e.vr->decimal(3);
    if (e.vr_min || e.vr_max) {
        std::ostringstream ss;
        ss.precision(2);
        ss << std::fixed << "VR in [" << e.vr_min.value_or(0.0) << ", " << e.vr_max.value_or(1.0) << "]";
        return ss.str();
    }
    return "completes";
}

} // namespace

CampaignConfig campaign_from_json(const json& doc, const std::string& base_dir)
{
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "campaign must be a JSON object");
    const auto experiments = doc.find("experiments");
    if (experiments == doc.end() || !experiments->is_object() || experiments->empty()) {
        throw Error(ErrorCode::InvalidConfig, "campaign has no experiments");
    }
    const json defaults = doc.value("defaults", json::object());

    CampaignConfig campaign;
    for (const auto& [id, body] : experiments->items()) {
        json merged = defaults;
        merged.merge_patch(body);
        merged["experiment_id"] = id;
        campaign.experiments.push_back(harness::config_from_json(merged, base_dir));
    }
    return campaign;
}

CampaignConfig load_campaign(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::ConfigNotFound, path);
    std::stringstream ss;
    ss << in.rdbuf();
    // ordered_json keeps the document's experiment order.
    const auto ordered = nlohmann::ordered_json::parse(ss.str(), nullptr, false);
    if (ordered.is_discarded()) throw Error(ErrorCode::ConfigParseError, path + ": not valid JSON");
    if (!ordered.is_object() || !ordered.contains("experiments") || !ordered["experiments"].is_object() ||
        ordered["experiments"].empty()) {
        throw Error(ErrorCode::InvalidConfig, path + ": campaign has no experiments");
    }

    const auto base_dir = fs::path(path).parent_path().string();
    const json defaults = json::parse(ordered.value("defaults", nlohmann::ordered_json::object()).dump());
    CampaignConfig campaign;
    for (const auto& [id, body] : ordered["experiments"].items()) {
        json merged = defaults;
        merged.merge_patch(json::parse(body.dump()));
        merged["experiment_id"] = id;
        campaign.experiments.push_back(harness::config_from_json(merged, base_dir.empty() ? "." : base_dir));
    }
    return campaign;
}

bool CampaignReport::all_expectations_met() const
{
    return std::all_of(rows.begin(), rows.end(), [](const CampaignRow& r) { return r.expectation_met; });
}

void check_expectation(CampaignRow& row)
{
    const auto& e = row.config.expect;
    const auto want = expectation_text(e);
    std::string got;
    if (row.error) {
        got = "error " + std::string(to_string(row.error->code));
        row.expectation_met = e.error && *e.error == row.error->code;
    } else if (row.result) {
        const auto& vr = row.result->vr;
        got = "VR = " + vr.decimal(3) + " (" + std::to_string(row.result->violations) + "/" + std::to_string(row.result->n) + ")";
        if (e.error) {
            row.expectation_met = false;
        } else {
            bool ok = true;
            if (e.vr) ok = ok && vr == *e.vr;
            if (e.vr_min) ok = ok && vr.to_double() >= *e.vr_min;
            if (e.vr_max) ok = ok && vr.to_double() <= *e.vr_max;
            row.expectation_met = ok;
        }
    } else {
        got = "not run";
        row.expectation_met = false;
    }
    row.verdict = std::string(row.expectation_met ? "PASS" : "FAIL") + ": expected " + want + ", got " + got;
}

CampaignReport run_campaign(const CampaignConfig& campaign, const CampaignOptions& options)
{
    const fs::path out = options.out_dir.empty() ? fs::path(".") : fs::path(options.out_dir);
    auto harness_options = options.harness;
    if (harness_options.work_dir.empty()) harness_options.work_dir = (out / "work").string();

    auto run_one = [&](ExperimentConfig cfg) {
        if (options.trials_override) cfg.trials = *options.trials_override;
        if (options.seed_override) {
            cfg.seed = *options.seed_override;
            if (cfg.policy.tie_break == orchestrator::TieBreak::SeededRandom) cfg.policy.seed = cfg.seed;
        }
        CampaignRow row;
        row.config = cfg;
        try {
            auto result = harness::run_experiment(cfg, harness_options);
            row.log_path = (out / "logs" / (cfg.experiment_id + ".jsonl")).string();
            harness::write_evidence_log(row.log_path, result);
            row.result = std::move(result);
        } catch (const Error& e) {
            row.error = RowError{e.code(), e.what()};
        }
        check_expectation(row);
        return row;
    };

    CampaignReport report;
    const auto jobs = std::max<std::size_t>(1, options.jobs);
    for (std::size_t start = 0; start < campaign.experiments.size(); start += jobs) {
        std::vector<std::future<CampaignRow>> batch;
        const auto end = std::min(campaign.experiments.size(), start + jobs);
        for (std::size_t i = start; i < end; ++i) {
            batch.push_back(std::async(jobs > 1 ? std::launch::async : std::launch::deferred, run_one, campaign.experiments[i]));
        }
        for (auto& f : batch) report.rows.push_back(f.get());
    }
    return report;
}

CampaignRow row_from_result(const ExperimentResult& result)
{
    CampaignRow row;
    const auto& h = result.header;
    row.config.experiment_id = result.experiment_id;
    row.config.discovery.surface = registry::parse_surface(h.value("surface", std::string("static")));
    row.config.policy = orchestrator::policy_from_json(h.at("policy"));
    row.config.trials = h.value("trials", result.n);
    row.config.seed = h.value("seed", std::uint64_t{0});
    if (const auto l = h.find("labels"); l != h.end() && l->is_object()) {
        row.config.labels.group = l->value("group", row.config.labels.group);
        row.config.labels.exp = l->value("exp", std::string());
        row.config.labels.manipulation = l->value("manipulation", std::string());
        row.config.labels.tie_rule = l->value("tie_rule", row.config.labels.tie_rule);
    }
    row.result = result;
    row.expectation_met = true;
    return row;
}

std::string render_markdown(const CampaignReport& report)
{
    std::ostringstream md;
    md << "# Tool-identity collision campaign\n";
    for (const auto& group : ordered_groups(report)) {
        std::vector<const CampaignRow*> rows;
        for (const auto& r : report.rows) {
            if (r.config.labels.group == group) rows.push_back(&r);
        }
        if (rows.empty()) continue;
        md << "\n## " << group_title(group) << "\n\n";
        md << "| Exp | Discovery surface | Resolver policy | Attacker lever / manipulation | Tie rule | N | #Violation | VR |\n";
        md << "|---|---|---|---|---|---|---|---|\n";
        for (const auto* r : rows) {
            const auto c = cells_of(*r);
            const auto exp = r->config.labels.exp.empty() ? r->config.experiment_id : r->config.labels.exp;
            md << "| " << exp << " | " << surface_label(r->config.discovery.surface) << " | " << policy_label(r->config.policy)
               << " | " << r->config.labels.manipulation << " | " << r->config.labels.tie_rule << " | " << c.n << " | "
               << c.violations << " | " << c.vr << " |\n";
        }
    }
    bool any_verdict = false;
    for (const auto& r : report.rows) any_verdict = any_verdict || !r.verdict.empty();
    if (any_verdict) {
        md << "\n## Verification\n\n";
        for (const auto& r : report.rows) md << "- " << r.config.experiment_id << ": " << r.verdict << "\n";
    }
    return md.str();
}

std::string render_csv(const CampaignReport& report)
{
    std::ostringstream csv;
    csv << "exp,discovery_surface,resolver_policy,manipulation,tie_rule,n,violations,vr,group,experiment_id,status\n";
    for (const auto& group : ordered_groups(report)) {
        for (const auto& r : report.rows) {
            if (r.config.labels.group != group) continue;
            const auto c = cells_of(r);
            const auto exp = r.config.labels.exp.empty() ? r.config.experiment_id : r.config.labels.exp;
            const std::string status = r.error ? std::string(to_string(r.error->code)) : "ok";
            csv << csv_field(exp) << ',' << csv_field(surface_label(r.config.discovery.surface)) << ','
                << csv_field(policy_label(r.config.policy)) << ',' << csv_field(r.config.labels.manipulation) << ','
                << csv_field(r.config.labels.tie_rule) << ',' << c.n << ',' << c.violations << ','
                << csv_field(r.result ? c.vr : "") << ',' << csv_field(group) << ',' << csv_field(r.config.experiment_id)
                << ',' << status << '\n';
        }
    }
    return csv.str();
}

} // namespace misbind::campaign
