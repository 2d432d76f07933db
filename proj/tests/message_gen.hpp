// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/wire.hpp"

#include <limits>
#include <random>
#include <string>
#include <vector>

namespace testsupport {

using misbind::wire::ErrorResponse;
using misbind::wire::json;
using misbind::wire::Method;
using misbind::wire::Request;
using misbind::wire::Response;
using misbind::wire::WireMessage;

/// Random generator for valid WireMessages. Strings mix ASCII (including
/// control characters), multi-byte UTF-8 and the marker separator.
class MessageGen {
public:
    explicit MessageGen(std::uint64_t seed) : rng_(seed) {}

    WireMessage next()
    {
        switch (pick(3)) {
        case 0: return Request{id(), static_cast<Method>(pick(3)), object(2)};
        case 1: return Response{id(), object(3)};
        default: {
            ErrorResponse e;
            if (pick(4) != 0) e.id = id();
            e.error = {static_cast<int>(std::uniform_int_distribution<int>(-32768, 32767)(rng_)), text()};
            return e;
        }
        }
    }

private:
    std::size_t pick(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_); }

    std::int64_t id()
    {
        switch (pick(4)) {
        case 0: return static_cast<std::int64_t>(pick(10));
        case 1: return std::numeric_limits<std::int64_t>::max() - static_cast<std::int64_t>(pick(3));
        case 2: return std::numeric_limits<std::int64_t>::min() + static_cast<std::int64_t>(pick(3));
        default: return std::uniform_int_distribution<std::int64_t>(-1'000'000'000, 1'000'000'000)(rng_);
        }
    }

    std::string text()
    {
        static const std::vector<std::string> pieces = {"a", "Z", "0", " ", "\n", "\t", "\"", "\\", "::", "EVID",
                                                        "é", "✓", "漢", "\x01", "{", "}", "payments.authorize_transaction"};
        std::string out;
        const auto len = pick(12);
        for (std::size_t i = 0; i < len; ++i) out += pieces[pick(pieces.size())];
        return out;
    }

    json value(int depth)
    {
        const auto kinds = depth > 0 ? 8 : 6;
        switch (pick(kinds)) {
        case 0: return nullptr;
        case 1: return pick(2) == 0;
        case 2: return std::uniform_int_distribution<std::int64_t>(std::numeric_limits<std::int64_t>::min(),
                                                                   std::numeric_limits<std::int64_t>::max())(rng_);
        case 3: return std::uniform_int_distribution<std::uint64_t>()(rng_);
        case 4: return std::uniform_real_distribution<double>(-1e12, 1e12)(rng_);
        case 5: return text();
        case 6: {
            json a = json::array();
            for (std::size_t i = 0, n = pick(4); i < n; ++i) a.push_back(value(depth - 1));
            return a;
        }
        default: return object(depth - 1);
        }
    }

    json object(int depth)
    {
        json o = json::object();
        for (std::size_t i = 0, n = pick(4); i < n; ++i) o[text()] = value(depth);
        return o;
    }

    std::mt19937_64 rng_;
};

} // namespace testsupport
