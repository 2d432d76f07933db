// SPDX-License-Identifier: Apache-2.0
#include "misbind/tokens.hpp"

#include <algorithm>
#include <iterator>

namespace misbind {

namespace {

bool is_token_byte(char c)
{
    const auto u = static_cast<unsigned char>(c);
    return (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') || (u >= '0' && u <= '9') || u == '-';
}

char ascii_lower(char c)
{
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

} // namespace

bool is_trust_cue(std::string_view token)
{
    return std::find(std::begin(kTrustCueTokens), std::end(kTrustCueTokens), token) != std::end(kTrustCueTokens);
}

std::vector<std::string> normalize_tokens(std::string_view text)
{
    std::vector<std::string> tokens;
    std::string current;
    auto flush = [&] {
        if (!current.empty() && std::find(tokens.begin(), tokens.end(), current) == tokens.end()) {
            tokens.push_back(current);
        }
        current.clear();
    };
    for (const char c : text) {
        if (is_token_byte(c)) {
            current.push_back(ascii_lower(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

} // namespace misbind
