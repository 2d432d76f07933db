// SPDX-License-Identifier: Apache-2.0
#include "support.hpp"

#include "misbind/error.hpp"
#include "misbind/session.hpp"

#include <gtest/gtest.h>

#include <chrono>

using namespace misbind;
using namespace misbind::wire;
using testsupport::kServer;

namespace {

ChildProcess spawn_server(std::vector<std::string> args)
{
    return ChildProcess::spawn(kServer, args);
}

SessionOptions fast(Millis timeout = Millis{400})
{
    SessionOptions o;
    o.handshake_timeout = timeout;
    o.call_timeout = timeout;
    return o;
}

} // namespace

TEST(Session, HandshakeEchoesDeclaredIdentity)
{
    Session s(spawn_server({"--persona", "legit", "--metadata", "plain"}));
    const auto info = session_handshake(s);
    EXPECT_EQ(info.provider, "legit-psp");
    EXPECT_EQ(info.protocol_version, std::string(kDefaultProtocolVersion));
    const auto tools = s.list_tools();
    ASSERT_EQ(tools.size(), 1u);
    EXPECT_EQ(tools[0].name, "payments.authorize_transaction");
}

TEST(Session, DefaultDeadlineIsFiveSeconds)
{
    EXPECT_EQ(kDefaultHandshakeTimeout, Millis{5000});
    EXPECT_EQ(SessionOptions{}.handshake_timeout, Millis{5000});
}

TEST(Session, SilentServerTimesOut)
{
    Session s(spawn_server({"--persona", "stub", "--stub-behavior", "silent"}), fast());
    const auto start = std::chrono::steady_clock::now();
    try {
        s.handshake();
        FAIL() << "handshake succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HandshakeTimeout);
    }
    const auto elapsed = std::chrono::steady_clock::now() - start;
    EXPECT_GE(elapsed, Millis{400});
    EXPECT_LT(elapsed, Millis{3000});
}

TEST(Session, RejectedHandshakeCarriesServerCode)
{
    Session s(spawn_server({"--persona", "stub", "--stub-behavior", "reject-init", "--reject-code", "-32600"}), fast());
    try {
        s.handshake();
        FAIL() << "handshake succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::HandshakeRejected);
        ASSERT_TRUE(e.rpc_code());
        EXPECT_EQ(*e.rpc_code(), -32600);
    }
}

TEST(Session, SpawnFailureIsReported)
{
    EXPECT_THROW(ChildProcess::spawn("/nonexistent/misbind-server", {}), Error);
}

TEST(Session, CallAfterDeathTimesOut)
{
    Session s(spawn_server({"--persona", "attacker", "--metadata", "plain"}), fast());
    s.handshake();
    s.process().kill();
    try {
        s.call_tool("payments.authorize_transaction", json{{"trial_id", "t1"}});
        FAIL() << "call succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CallTimeout);
    }
}

TEST(Session, ServerExitingMidCallTimesOut)
{
    Session s(spawn_server({"--persona", "stub", "--stub-behavior", "exit-on-call"}), fast());
    s.handshake();
    try {
        s.call_tool("payments.authorize_transaction", json::object());
        FAIL() << "call succeeded";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::CallTimeout);
    }
}

TEST(Session, MalformedFramesNeverKillTheServer)
{
    auto child = spawn_server({"--persona", "legit", "--metadata", "trust_cues"});
    const std::vector<std::string> garbage = {
        "not json", "{", "[]", "{\"jsonrpc\":\"2.0\"}", "{\"jsonrpc\":\"2.0\",\"id\":1,\"method\":\"resources/list\"}",
        "{\"jsonrpc\":\"2.0\",\"method\":\"notifications/initialized\"}", "\x01\x02\x03", "null", "42",
        std::string(100000, 'x'),
    };
    int replies_expected = 0;
    for (const auto& g : garbage) {
        ASSERT_TRUE(child.write_all(g + "\n"));
        if (g.find("notifications/") == std::string::npos) ++replies_expected;
    }
    for (int i = 0; i < replies_expected; ++i) {
        const auto line = child.read_line(Millis{2000});
        ASSERT_TRUE(line) << "reply " << i;
        const auto m = decode_message(*line);
        EXPECT_TRUE(std::holds_alternative<ErrorResponse>(m));
    }
    ASSERT_TRUE(child.running());
    ASSERT_TRUE(child.write_all(encode_message(Request{5, Method::ToolsList, json::object()})));
    const auto line = child.read_line(Millis{2000});
    ASSERT_TRUE(line);
    const auto& r = std::get<Response>(decode_message(*line));
    EXPECT_EQ(r.id, 5);
    EXPECT_TRUE(child.running());
    EXPECT_EQ(child.shutdown(Millis{2000}), 0);
}
