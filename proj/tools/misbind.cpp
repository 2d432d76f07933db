// SPDX-License-Identifier: Apache-2.0
// misbind: run tool-identity collision experiments, replay their evidence,
// and assess lifecycle risk registers.

#include "misbind/campaign.hpp"
#include "misbind/error.hpp"
#include "misbind/harness.hpp"
#include "misbind/log.hpp"
#include "misbind/risk.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#ifndef MISBIND_DATA_DIR
#define MISBIND_DATA_DIR "data"
#endif

namespace fs = std::filesystem;
using namespace misbind;

namespace {

constexpr int kOk = 0;
constexpr int kFailure = 1;
constexpr int kUsage = 2;

int exit_code_for(const Error& e)
{
    switch (e.code()) {
    case ErrorCode::ConfigNotFound:
    case ErrorCode::ConfigParseError:
    case ErrorCode::InvalidConfig: return kUsage;
    default: return kFailure;
    }
}

std::string resolve_server_binary(const std::string& flag)
{
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("MISBIND_SERVER"); env != nullptr && *env != '\0') return env;
    std::error_code ec;
    const auto self = fs::read_symlink("/proc/self/exe", ec);
    if (!ec) {
        const auto sibling = self.parent_path() / "misbind-server";
        if (fs::exists(sibling)) return sibling.string();
    }
    return "misbind-server";
}

void write_file(const fs::path& path, const std::string& text)
{
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidConfig, "cannot write " + path.string());
    out << text;
}

struct RunArgs {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<int> trials;
    std::string out;
    bool no_timestamps = false;
};

int cmd_run(const RunArgs& a, const std::string& server)
{
    auto cfg = harness::load_experiment_config(a.config);
    if (a.seed) {
        cfg.seed = *a.seed;
        if (cfg.policy.tie_break == orchestrator::TieBreak::SeededRandom) cfg.policy.seed = *a.seed;
    }
    if (a.trials) cfg.trials = *a.trials;
    harness::validate(cfg);

    const fs::path log = a.out.empty() ? fs::path(cfg.experiment_id + ".jsonl") : fs::path(a.out);
    harness::HarnessOptions options;
    options.server_binary = server;
    options.work_dir = ((log.has_parent_path() ? log.parent_path() : fs::path(".")) / "work").string();
    options.timestamps = !a.no_timestamps;

    const auto result = harness::run_experiment(cfg, options);
    harness::write_evidence_log(log.string(), result);
    std::cout << "experiment_id " << result.experiment_id << "\n"
              << "N " << result.n << "\n"
              << "violations " << result.violations << "\n"
              << "VR " << result.vr.decimal(3) << "\n"
              << "log " << log.string() << "\n";
    return kOk;
}

struct CampaignArgs {
    std::string table7;
    std::string out_dir = "campaign-out";
    bool verify = false;
    std::size_t jobs = 1;
    std::optional<int> trials;
    std::optional<std::uint64_t> seed;
    bool no_timestamps = false;
};

int cmd_campaign(const CampaignArgs& a, const std::string& server)
{
    const auto campaign = campaign::load_campaign(a.table7);
    campaign::CampaignOptions options;
    options.harness.server_binary = server;
    options.harness.timestamps = !a.no_timestamps;
    options.out_dir = a.out_dir;
    options.jobs = a.jobs;
    options.trials_override = a.trials;
    options.seed_override = a.seed;

    auto report = campaign::run_campaign(campaign, options);
    if (!a.verify) {
        for (auto& row : report.rows) row.verdict.clear();
    }
    const auto md = campaign::render_markdown(report);
    write_file(fs::path(a.out_dir) / "report.md", md);
    write_file(fs::path(a.out_dir) / "report.csv", campaign::render_csv(report));
    std::cout << md;

    if (a.verify) {
        const bool ok = report.all_expectations_met();
        std::cout << "\nverify: " << (ok ? "PASS" : "FAIL") << "\n";
        return ok ? kOk : kFailure;
    }
    for (const auto& row : report.rows) {
        const bool expected_error = row.error && row.config.expect.error && *row.config.expect.error == row.error->code;
        if (row.error && !expected_error) {
            std::cerr << row.config.experiment_id << ": " << row.error->message << "\n";
            return kFailure;
        }
    }
    return kOk;
}

int cmd_replay(const std::string& log)
{
    if (!fs::exists(log)) throw Error(ErrorCode::ConfigNotFound, log);
    const auto result = harness::replay(log);
    std::cout << "experiment_id " << result.experiment_id << "\n"
              << "N " << result.n << "\n"
              << "violations " << result.violations << "\n"
              << "VR " << result.vr.decimal(3) << "\n"
              << "replay OK\n";
    return kOk;
}

int cmd_report(const std::vector<std::string>& logs, const std::string& format)
{
    const auto fmt = risk::parse_format(format);
    campaign::CampaignReport report;
    for (const auto& log : logs) {
        if (!fs::exists(log)) throw Error(ErrorCode::ConfigNotFound, log);
        report.rows.push_back(campaign::row_from_result(harness::replay(log)));
    }
    std::cout << (fmt == risk::Format::Csv ? campaign::render_csv(report) : campaign::render_markdown(report));
    return kOk;
}

struct RiskArgs {
    std::string register_path = std::string(MISBIND_DATA_DIR) + "/risk/register.json";
    std::string published_path = std::string(MISBIND_DATA_DIR) + "/risk/published_ratings.json";
    std::string format = "md";
    bool verify = false;
    bool strict = false;
};

int cmd_risk(const RiskArgs& a)
{
    const auto fmt = risk::parse_format(a.format);
    const auto assessment = risk::assess(risk::load_register(a.register_path));
    std::cout << risk::report(assessment, fmt);
    if (!a.verify && !a.strict) return kOk;

    const auto published = risk::load_published(a.published_path);
    const auto outcome = risk::verify(assessment, published);
    int rc = kOk;
    for (const auto& issue : outcome.inconsistent) {
        std::cerr << "InconsistentCell: " << issue.where << ": " << issue.message << "\n";
        if (a.strict) rc = kFailure;
    }
    if (a.verify) {
        for (const auto& m : outcome.mismatches) std::cerr << "mismatch: " << m << "\n";
        std::cerr << "verify: " << outcome.matched << "/" << outcome.total << " cells match\n";
        if (!outcome.ok()) rc = kFailure;
    }
    return rc;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Tool-identity collision testbed and lifecycle risk assessment"};
    app.require_subcommand(1);
    std::string server_flag;
    app.add_option("--server", server_flag, "tool server binary (default: $MISBIND_SERVER or sibling misbind-server)");

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "run one experiment");
    run->add_option("--config", run_args.config, "experiment config")->required();
    run->add_option("--seed", run_args.seed, "override the experiment seed");
    run->add_option("--trials", run_args.trials, "override N");
    run->add_option("--out", run_args.out, "evidence log path");
    run->add_flag("--no-timestamps", run_args.no_timestamps, "omit wall-clock fields from the log");

    CampaignArgs campaign_args;
    auto* camp = app.add_subcommand("campaign", "run a campaign and emit the report");
    camp->add_option("--table7", campaign_args.table7, "campaign config")->required();
    camp->add_option("--out-dir", campaign_args.out_dir, "output directory");
    camp->add_flag("--verify", campaign_args.verify, "check every row against its expectation");
    camp->add_option("--jobs", campaign_args.jobs, "experiments run concurrently")->check(CLI::PositiveNumber);
    camp->add_option("--trials", campaign_args.trials, "override N for every experiment");
    camp->add_option("--seed", campaign_args.seed, "override every experiment seed");
    camp->add_flag("--no-timestamps", campaign_args.no_timestamps, "omit wall-clock fields from logs");

    std::string replay_log;
    auto* rep = app.add_subcommand("replay", "re-derive selections and VR from an evidence log");
    rep->add_option("--log", replay_log, "evidence log")->required();

    std::vector<std::string> report_logs;
    std::string report_format = "md";
    auto* rpt = app.add_subcommand("report", "render logs as a campaign table");
    rpt->add_option("--logs", report_logs, "evidence logs")->required();
    rpt->add_option("--format", report_format, "md | csv")->check(CLI::IsMember({"md", "markdown", "csv"}));

    RiskArgs risk_args;
    auto* rsk = app.add_subcommand("risk", "assess a lifecycle risk register");
    rsk->add_option("--register", risk_args.register_path, "register file");
    rsk->add_option("--published", risk_args.published_path, "printed ratings to verify against");
    rsk->add_option("--format", risk_args.format, "md | csv")->check(CLI::IsMember({"md", "markdown", "csv"}));
    rsk->add_flag("--verify", risk_args.verify, "compare against the published ratings");
    rsk->add_flag("--strict", risk_args.strict, "fail on inconsistent printed cells");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kUsage;
    }

    init_logging();
    try {
        const auto server = resolve_server_binary(server_flag);
        if (*run) return cmd_run(run_args, server);
        if (*camp) return cmd_campaign(campaign_args, server);
        if (*rep) return cmd_replay(replay_log);
        if (*rpt) return cmd_report(report_logs, report_format);
        if (*rsk) return cmd_risk(risk_args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kUsage;
}
