// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace misbind {

/// Tokens a metadata-scoring resolver rewards.
inline constexpr std::string_view kTrustCueTokens[] = {"official", "bank-approved", "verified", "psp"};

bool is_trust_cue(std::string_view token);

/// Lowercase, split on every byte that is neither ASCII alphanumeric nor '-',
/// drop empties, keep first occurrences only.
std::vector<std::string> normalize_tokens(std::string_view text);

} // namespace misbind
