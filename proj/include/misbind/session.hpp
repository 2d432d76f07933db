// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "misbind/error.hpp"
#include "misbind/wire.hpp"

#include <sys/types.h>

#include <chrono>
#include <cstdint>
#include <string>
#include <vector>

namespace misbind::wire {

using Millis = std::chrono::milliseconds;

inline constexpr Millis kDefaultHandshakeTimeout{5000};
inline constexpr Millis kDefaultCallTimeout{5000};

/// A spawned child with its stdin/stdout wired to pipes. Move-only; the
/// destructor closes stdin, waits briefly and kills the child if needed.
class ChildProcess {
public:
    static ChildProcess spawn(const std::string& command, const std::vector<std::string>& args);

    ChildProcess(ChildProcess&& other) noexcept;
    ChildProcess& operator=(ChildProcess&& other) noexcept;
    ChildProcess(const ChildProcess&) = delete;
    ChildProcess& operator=(const ChildProcess&) = delete;
    ~ChildProcess();

    pid_t pid() const noexcept { return pid_; }
    bool running();

    /// Writes the whole buffer; false if the peer has gone away.
    bool write_all(std::string_view data);
    /// Reads one '\n'-terminated line; nullopt on timeout or end-of-stream
    /// (see at_eof()).
    std::optional<std::string> read_line(Millis timeout);
    bool at_eof() const noexcept { return eof_; }

    void close_stdin();
    /// SIGKILL and reap. Used by tests to simulate server death.
    void kill();
    /// Closes stdin and waits up to `grace` for a clean exit; returns the exit status if reaped.
    std::optional<int> shutdown(Millis grace = Millis{1000});

private:
    ChildProcess(pid_t pid, int to_child, int from_child);
    void release() noexcept;

    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    bool eof_ = false;
    std::optional<int> status_;
};

struct SessionInfo {
    std::string provider;
    std::string version;
    std::string protocol_version;
};

struct SessionOptions {
    Millis handshake_timeout = kDefaultHandshakeTimeout;
    Millis call_timeout = kDefaultCallTimeout;
    std::string protocol_version = std::string(kDefaultProtocolVersion);
    std::string client_name = "misbind-orchestrator";
};

/// Client side of one server connection. Request ids start at 1 and strictly
/// increase. Owned by one thread at a time.
class Session {
public:
    Session(ChildProcess process, SessionOptions options = {});

    /// initialize round trip. HandshakeTimeout, HandshakeRejected (with the
    /// server's rpc code) or MalformedFrame.
    SessionInfo handshake();
    std::vector<ToolDescriptor> list_tools();
    /// CallTimeout when the server is silent or gone; RemoteError for an
    /// error-response.
    ToolCallResult call_tool(const std::string& name, const json& arguments);

    const SessionInfo& info() const noexcept { return info_; }
    ChildProcess& process() noexcept { return process_; }

private:
    std::variant<Response, ErrorResponse> round_trip(Method method, json params, Millis timeout, ErrorCode on_timeout);

    ChildProcess process_;
    SessionOptions options_;
    SessionInfo info_;
    std::int64_t next_id_ = 1;
};

/// Spawn-free entry point: handshake over an already-spawned child.
SessionInfo session_handshake(Session& session);

} // namespace misbind::wire
