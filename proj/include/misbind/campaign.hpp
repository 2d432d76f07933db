// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/harness.hpp"

#include <optional>
#include <string>
#include <vector>

namespace misbind::campaign {

using harness::ExperimentConfig;
using harness::ExperimentResult;

/// {"version": 1, "defaults": {...}, "experiments": {"<id>": {...}, ...}}.
/// Each experiment is merged over "defaults"; document order is kept.
struct CampaignConfig {
    std::vector<ExperimentConfig> experiments;
};

/// ConfigNotFound, ConfigParseError, or InvalidConfig (including an empty
/// experiment map).
CampaignConfig load_campaign(const std::string& path);
CampaignConfig campaign_from_json(const harness::json& doc, const std::string& base_dir = ".");

struct RowError {
    ErrorCode code;
    std::string message;
};

struct CampaignRow {
    ExperimentConfig config;
    std::optional<ExperimentResult> result; // absent when the experiment aborted
    std::optional<RowError> error;
    bool expectation_met = false;
    std::string verdict;
    std::string log_path;
};

struct CampaignOptions {
    harness::HarnessOptions harness;
    std::string out_dir;
    std::size_t jobs = 1;
    std::optional<int> trials_override;
    std::optional<std::uint64_t> seed_override;
};

struct CampaignReport {
    std::vector<CampaignRow> rows;

    bool all_expectations_met() const;
};

/// Compares one row against its configured expectation and fills
/// expectation_met / verdict. Rows without an expectation pass iff they ran.
void check_expectation(CampaignRow& row);

/// Runs every experiment (up to `jobs` at once, each with its own servers,
/// work directory and log), writes <out_dir>/logs/<id>.jsonl, and checks
/// expectations. Experiment errors are recorded on the row, not thrown.
CampaignReport run_campaign(const CampaignConfig& campaign, const CampaignOptions& options);

/// Row reconstructed from an evidence log header and its replayed result.
CampaignRow row_from_result(const ExperimentResult& result);

/// Fixed columns: Exp | Discovery surface | Resolver policy |
/// Attacker lever / manipulation | Tie rule | N | #Violation | VR,
/// one section per row group (table7, mitigation, control, ...).
std::string render_markdown(const CampaignReport& report);
std::string render_csv(const CampaignReport& report);

} // namespace misbind::campaign
