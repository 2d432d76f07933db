// SPDX-License-Identifier: Apache-2.0
#include "misbind/rational.hpp"

#include "misbind/error.hpp"

#include <numeric>

namespace misbind {

Rational::Rational(std::int64_t num, std::int64_t den)
{
    if (den <= 0 || num < 0) {
        throw Error(ErrorCode::DomainError,
                    "rational requires num >= 0 and den > 0, got " + std::to_string(num) + "/" + std::to_string(den));
    }
    const auto g = std::gcd(num, den);
    num_ = num / g;
    den_ = den / g;
}

std::string Rational::str() const
{
    return std::to_string(num_) + "/" + std::to_string(den_);
}

std::string Rational::decimal(int places) const
{
    std::int64_t scale = 1;
    for (int i = 0; i < places; ++i) scale *= 10;
    const __int128 scaled = (static_cast<__int128>(num_) * scale * 2 + den_) / (2 * static_cast<__int128>(den_));
    const auto whole = static_cast<std::int64_t>(scaled / scale);
    auto frac = std::to_string(static_cast<std::int64_t>(scaled % scale));
    if (places == 0) return std::to_string(whole);
    frac.insert(0, static_cast<std::size_t>(places) - frac.size(), '0');
    return std::to_string(whole) + "." + frac;
}

Rational Rational::parse(const std::string& text)
{
    const auto slash = text.find('/');
    try {
        if (const auto dot = text.find('.'); dot != std::string::npos && slash == std::string::npos) {
            const auto whole = text.substr(0, dot);
            const auto frac = text.substr(dot + 1);
            if (whole.empty() || frac.empty() || frac.size() > 18) throw std::invalid_argument("decimal");
            for (const char c : whole + frac) {
                if (c < '0' || c > '9') throw std::invalid_argument("decimal");
            }
            std::int64_t scale = 1;
            for (std::size_t i = 0; i < frac.size(); ++i) scale *= 10;
            return Rational(std::stoll(whole) * scale + std::stoll(frac), scale);
        }
        if (slash == std::string::npos) {
            std::size_t used = 0;
            const auto n = std::stoll(text, &used);
            if (used != text.size()) throw std::invalid_argument("trailing");
            return Rational(n, 1);
        }
        std::size_t used_num = 0;
        std::size_t used_den = 0;
        const auto num_text = text.substr(0, slash);
        const auto den_text = text.substr(slash + 1);
        const auto n = std::stoll(num_text, &used_num);
        const auto d = std::stoll(den_text, &used_den);
        if (used_num != num_text.size() || used_den != den_text.size()) throw std::invalid_argument("trailing");
        return Rational(n, d);
    } catch (const std::logic_error&) {
        throw Error(ErrorCode::DomainError, "not a rational: '" + text + "'");
    }
}

} // namespace misbind
