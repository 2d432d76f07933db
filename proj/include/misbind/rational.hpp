// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <compare>
#include <cstdint>
#include <string>

namespace misbind {

/// Exact non-negative fraction, always stored in lowest terms.
class Rational {
public:
    constexpr Rational() = default;
    Rational(std::int64_t num, std::int64_t den);

    std::int64_t num() const noexcept { return num_; }
    std::int64_t den() const noexcept { return den_; }

    double to_double() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

    /// "num/den"; the inverse of parse().
    std::string str() const;
    /// Decimal rendering with `places` digits, rounded half up (0.520).
    std::string decimal(int places = 3) const;

    /// Accepts "num/den", an integer, or a decimal such as "0.520".
    static Rational parse(const std::string& text);

    friend bool operator==(const Rational&, const Rational&) = default;
    friend std::strong_ordering operator<=>(const Rational& a, const Rational& b)
    {
        // Cross-multiplied in 128 bits so large denominators cannot overflow.
        const __int128 lhs = static_cast<__int128>(a.num_) * b.den_;
        const __int128 rhs = static_cast<__int128>(b.num_) * a.den_;
        if (lhs < rhs) return std::strong_ordering::less;
        if (lhs > rhs) return std::strong_ordering::greater;
        return std::strong_ordering::equal;
    }

private:
    std::int64_t num_ = 0;
    std::int64_t den_ = 1;
};

} // namespace misbind
