// SPDX-License-Identifier: Apache-2.0
#include "misbind/session.hpp"

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <mutex>
#include <thread>
#include <utility>

extern char** environ;

namespace misbind::wire {

namespace {

void ignore_sigpipe()
{
    static std::once_flag once;
    std::call_once(once, [] { ::signal(SIGPIPE, SIG_IGN); });
}

using Clock = std::chrono::steady_clock;

} // namespace

ChildProcess::ChildProcess(pid_t pid, int to_child, int from_child)
    : pid_(pid), to_child_(to_child), from_child_(from_child)
{
}

ChildProcess ChildProcess::spawn(const std::string& command, const std::vector<std::string>& args)
{
    ignore_sigpipe();
    if (command.empty()) throw Error(ErrorCode::SpawnError, "empty command");

    int in_pipe[2];
    int out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) throw Error(ErrorCode::SpawnError, std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        const int err = errno;
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        throw Error(ErrorCode::SpawnError, std::strerror(err));
    }

    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);

    std::vector<std::string> argv_storage;
    argv_storage.reserve(args.size() + 1);
    argv_storage.push_back(command);
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<char*> argv;
    for (auto& a : argv_storage) argv.push_back(a.data());
    argv.push_back(nullptr);

    pid_t pid = -1;
    const int rc = ::posix_spawnp(&pid, command.c_str(), &actions, nullptr, argv.data(), environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    if (rc != 0) {
        ::close(in_pipe[1]);
        ::close(out_pipe[0]);
        throw Error(ErrorCode::SpawnError, command + ": " + std::strerror(rc));
    }
    return ChildProcess(pid, in_pipe[1], out_pipe[0]);
}

ChildProcess::ChildProcess(ChildProcess&& other) noexcept
    : pid_(std::exchange(other.pid_, -1)),
      to_child_(std::exchange(other.to_child_, -1)),
      from_child_(std::exchange(other.from_child_, -1)),
      buffer_(std::move(other.buffer_)),
      eof_(other.eof_),
      status_(other.status_)
{
}

ChildProcess& ChildProcess::operator=(ChildProcess&& other) noexcept
{
    if (this != &other) {
        release();
        pid_ = std::exchange(other.pid_, -1);
        to_child_ = std::exchange(other.to_child_, -1);
        from_child_ = std::exchange(other.from_child_, -1);
        buffer_ = std::move(other.buffer_);
        eof_ = other.eof_;
        status_ = other.status_;
    }
    return *this;
}

ChildProcess::~ChildProcess()
{
    release();
}

void ChildProcess::release() noexcept
{
    if (pid_ > 0 && !status_) {
        try {
            if (!shutdown(Millis{500})) kill();
        } catch (...) {
        }
    }
    if (to_child_ >= 0) ::close(to_child_);
    if (from_child_ >= 0) ::close(from_child_);
    to_child_ = from_child_ = -1;
    pid_ = -1;
}

bool ChildProcess::running()
{
    if (pid_ <= 0 || status_) return false;
    int status = 0;
    const pid_t r = ::waitpid(pid_, &status, WNOHANG);
    if (r == pid_) {
        status_ = status;
        return false;
    }
    return r == 0;
}

bool ChildProcess::write_all(std::string_view data)
{
    if (to_child_ < 0) return false;
    while (!data.empty()) {
        const auto n = ::write(to_child_, data.data(), data.size());
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

std::optional<std::string> ChildProcess::read_line(Millis timeout)
{
    const auto deadline = Clock::now() + timeout;
    while (true) {
        if (const auto nl = buffer_.find('\n'); nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl + 1);
            buffer_.erase(0, nl + 1);
            return line;
        }
        if (eof_ || from_child_ < 0) return std::nullopt;

        const auto remaining = std::chrono::ceil<Millis>(deadline - Clock::now());
        if (remaining.count() <= 0) return std::nullopt;
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(remaining.count()));
        if (ready < 0) {
            if (errno == EINTR) continue;
            return std::nullopt;
        }
        if (ready == 0) return std::nullopt;

        char chunk[4096];
        const auto n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            eof_ = true;
        } else if (n == 0) {
            eof_ = true;
        } else {
            buffer_.append(chunk, static_cast<std::size_t>(n));
        }
    }
}

void ChildProcess::close_stdin()
{
    if (to_child_ >= 0) {
        ::close(to_child_);
        to_child_ = -1;
    }
}

void ChildProcess::kill()
{
    if (pid_ <= 0 || status_) return;
    ::kill(pid_, SIGKILL);
    int status = 0;
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    status_ = status;
}

std::optional<int> ChildProcess::shutdown(Millis grace)
{
    close_stdin();
    if (pid_ <= 0) return std::nullopt;
    const auto deadline = Clock::now() + grace;
    while (running()) {
        if (Clock::now() >= deadline) return std::nullopt;
        std::this_thread::sleep_for(Millis{2});
    }
    return status_;
}

Session::Session(ChildProcess process, SessionOptions options)
    : process_(std::move(process)), options_(std::move(options))
{
}

std::variant<Response, ErrorResponse> Session::round_trip(Method method, json params, Millis timeout, ErrorCode on_timeout)
{
    const auto id = next_id_++;
    const auto line = encode_message(Request{id, method, std::move(params)});
    const auto what = std::string(method_name(method));
    if (!process_.write_all(line)) throw Error(on_timeout, what + ": server closed its input");

    const auto deadline = Clock::now() + timeout;
    while (true) {
        const auto remaining = std::chrono::ceil<Millis>(deadline - Clock::now());
        const auto reply = remaining.count() > 0 ? process_.read_line(remaining) : std::nullopt;
        if (!reply) {
            if (process_.at_eof()) throw Error(on_timeout, what + ": server closed its output");
            throw Error(on_timeout, what + ": no response within " + std::to_string(timeout.count()) + " ms");
        }
        // Servers in this subset never send requests of their own, so any
        // decodable frame is an answer.
        auto msg = decode_message(*reply);
        if (auto* r = std::get_if<Response>(&msg)) {
            if (r->id != id) throw Error(ErrorCode::MalformedFrame, what + ": response id " + std::to_string(r->id) + " != " + std::to_string(id));
            return std::move(*r);
        }
        if (auto* e = std::get_if<ErrorResponse>(&msg)) {
            if (e->id && *e->id != id) throw Error(ErrorCode::MalformedFrame, what + ": error id mismatch");
            return std::move(*e);
        }
        throw Error(ErrorCode::MalformedFrame, what + ": server sent a request");
    }
}

SessionInfo Session::handshake()
{
    json params = {
        {"protocolVersion", options_.protocol_version},
        {"capabilities", json::object()},
        {"clientInfo", {{"name", options_.client_name}, {"version", "1.0.0"}}},
    };
    auto reply = round_trip(Method::Initialize, std::move(params), options_.handshake_timeout, ErrorCode::HandshakeTimeout);
    if (auto* e = std::get_if<ErrorResponse>(&reply)) {
        throw Error(ErrorCode::HandshakeRejected, "initialize: " + e->error.message, e->error.code);
    }
    const auto& result = std::get<Response>(reply).result;
    const auto server_info = result.find("serverInfo");
    if (!result.is_object() || server_info == result.end() || !server_info->is_object() ||
        !server_info->contains("name") || !(*server_info)["name"].is_string()) {
        throw Error(ErrorCode::MalformedFrame, "initialize: result lacks serverInfo.name");
    }
    info_.provider = (*server_info)["name"].get<std::string>();
    info_.version = server_info->value("version", "");
    info_.protocol_version = result.value("protocolVersion", "");
    return info_;
}

std::vector<ToolDescriptor> Session::list_tools()
{
    auto reply = round_trip(Method::ToolsList, json::object(), options_.call_timeout, ErrorCode::CallTimeout);
    if (auto* e = std::get_if<ErrorResponse>(&reply)) {
        throw Error(ErrorCode::RemoteError, "tools/list: " + e->error.message, e->error.code);
    }
    const auto& result = std::get<Response>(reply).result;
    if (!result.is_object() || !result.contains("tools") || !result["tools"].is_array()) {
        throw Error(ErrorCode::MalformedFrame, "tools/list: result lacks a tools array");
    }
    std::vector<ToolDescriptor> tools;
    for (const auto& t : result["tools"]) tools.push_back(descriptor_from_json(t));
    return tools;
}

ToolCallResult Session::call_tool(const std::string& name, const json& arguments)
{
    auto reply = round_trip(Method::ToolsCall, {{"name", name}, {"arguments", arguments}}, options_.call_timeout,
                            ErrorCode::CallTimeout);
    if (auto* e = std::get_if<ErrorResponse>(&reply)) {
        throw Error(ErrorCode::RemoteError, "tools/call: " + e->error.message, e->error.code);
    }
    return call_result_from_json(std::get<Response>(reply).result);
}

SessionInfo session_handshake(Session& session)
{
    return session.handshake();
}

} // namespace misbind::wire
