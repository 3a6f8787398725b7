#pragma once

#include "fleetsim/config.hpp"
#include "fleetsim/engine.hpp"
#include "fleetsim/protocol.hpp"
#include "fleetsim/rebalance.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cerrno>
#include <cstring>
#include <iostream>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

namespace fleetsim {

/// Named scenarios a client may reset into.
class ScenarioCatalog {
public:
    /// Holds the built-in "canonical" scenario.
    static ScenarioCatalog with_builtin() {
        ScenarioCatalog c;
        c.add("canonical", canonical_config());
        return c;
    }

    void add(const std::string& name, ScenarioConfig cfg) {
        cfg.name = name;
        entries_[name] = std::move(cfg);
    }

    /// `name=path` as given on the command line.
    void add_spec(const std::string& spec) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
            throw SchemaError("scenario entry must look like name=path, got '" + spec + "'");
        add(spec.substr(0, eq), load_config(spec.substr(eq + 1)));
    }

    const ScenarioConfig* find(const std::string& name) const {
        auto it = entries_.find(name);
        return it == entries_.end() ? nullptr : &it->second;
    }

    bool empty() const noexcept { return entries_.empty(); }
    std::vector<std::string> names() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_) out.push_back(k);
        return out;
    }

private:
    std::map<std::string, ScenarioConfig> entries_;
};

/// Protocol state machine for one client. Every reset starts a fresh
/// episode; each step advances to the next rebalance event or the horizon.
class EnvSession {
public:
    enum class State { idle, running, done };

    explicit EnvSession(std::shared_ptr<const ScenarioCatalog> catalog) : catalog_(std::move(catalog)) {}

    State state() const noexcept { return state_; }
    const Simulation* simulation() const noexcept { return sim_.get(); }
    bool closed() const noexcept { return closed_; }

    /// Response to a decoded request; close yields no response.
    std::optional<protocol::Message> handle(const protocol::Message& msg) {
        using protocol::Kind;
        switch (msg.kind) {
            case Kind::reset: return reset(msg.scenario, msg.seed.value_or(0));
            case Kind::step: return step(msg.action);
            case Kind::close: closed_ = true; return std::nullopt;
            default:
                return protocol::make_error(protocol::code::kBadState,
                                            std::string("clients may not send '") + protocol::to_string(msg.kind) + "'");
        }
    }

    /// Wire-level entry point: one line in, at most one line out.
    std::optional<std::string> handle_line(std::string_view line) {
        protocol::Message msg;
        try {
            msg = protocol::decode(line);
        } catch (const protocol::ParseError& e) {
            return protocol::encode(protocol::make_error(protocol::code::kParse, e.what()));
        }
        std::optional<protocol::Message> reply;
        try {
            reply = handle(msg);
        } catch (const Error& e) {
            sim_.reset();
            state_ = State::idle;
            reply = protocol::make_error(protocol::code::kBadState, e.what());
        }
        if (!reply) return std::nullopt;
        return protocol::encode(*reply);
    }

    protocol::Message reset(const std::string& name, std::uint64_t seed) {
        const auto* cfg = catalog_->find(name);
        if (!cfg) return protocol::make_error(protocol::code::kUnknownScenario, "no scenario named '" + name + "'");
        sim_ = std::make_unique<Simulation>(build_scenario(*cfg, seed));
        cells_ = sim_->scenario().grid.cell_count();
        state_ = State::running;
        advance_to_event();
        sim_->interval_reward();
        return observation(protocol::Kind::reset_ok);
    }

    protocol::Message step(const std::vector<double>& action) {
        if (state_ == State::idle) return protocol::make_error(protocol::code::kBadState, "step before reset");
        if (state_ == State::done) return protocol::make_error(protocol::code::kBadState, "episode is done; reset first");
        if (action.size() != cells_)
            return protocol::make_error(protocol::code::kBadShape, "action has " + std::to_string(action.size()) +
                                                                       " entries, grid has " + std::to_string(cells_));
        policy_.set_next(action);
        sim_->rebalance(policy_);
        sim_->finish_step();
        advance_to_event();
        auto out = observation(protocol::Kind::step_ok);
        out.reward = sim_->interval_reward();
        return out;
    }

private:
    /// Runs whole steps until a rebalance event is open or the horizon.
    void advance_to_event() {
        while (!sim_->done()) {
            sim_->begin_step();
            if (sim_->rebalance_pending()) {
                sim_->open_rebalance();
                return;
            }
            sim_->finish_step();
        }
        state_ = State::done;
    }

    protocol::Message observation(protocol::Kind kind) const {
        const auto obs = state_ == State::done ? sim_->observe() : sim_->open_observation();
        protocol::Message m;
        m.kind = kind;
        m.V.assign(obs.V.flat().begin(), obs.V.flat().end());
        m.R.assign(obs.R.flat().begin(), obs.R.flat().end());
        m.t_norm = obs.t_norm;
        m.done = state_ == State::done;
        return m;
    }

    std::shared_ptr<const ScenarioCatalog> catalog_;
    std::unique_ptr<Simulation> sim_;
    ExternalActionPolicy policy_;
    std::size_t cells_ = 0;
    State state_ = State::idle;
    bool closed_ = false;
};

/// Reads requests line by line until close or end of input.
inline void serve_stream(std::istream& in, std::ostream& out, std::shared_ptr<const ScenarioCatalog> catalog) {
    EnvSession session(std::move(catalog));
    std::string line;
    while (!session.closed() && std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        if (auto reply = session.handle_line(line)) out << *reply << '\n' << std::flush;
    }
}

namespace detail {

inline bool send_all(int fd, std::string_view data) {
    while (!data.empty()) {
        const auto n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            return false;
        }
        data.remove_prefix(static_cast<std::size_t>(n));
    }
    return true;
}

/// Runs one session over a connected socket until close, EOF or a write
/// failure. The caller owns the descriptor.
inline void serve_socket(int fd, std::shared_ptr<const ScenarioCatalog> catalog) {
    constexpr std::size_t kMaxLine = 16u << 20;
    EnvSession session(std::move(catalog));
    std::string buffer;
    char chunk[65536];
    while (!session.closed()) {
        const auto n = ::recv(fd, chunk, sizeof chunk, 0);
        if (n < 0 && errno == EINTR) continue;
        if (n <= 0) return;
        buffer.append(chunk, static_cast<std::size_t>(n));
        std::size_t start = 0;
        for (auto nl = buffer.find('\n', start); nl != std::string::npos; nl = buffer.find('\n', start)) {
            std::string_view line(buffer.data() + start, nl - start);
            start = nl + 1;
            if (line.empty() || line == "\r") continue;
            auto reply = session.handle_line(line);
            if (reply && !send_all(fd, *reply + '\n')) return;
            if (session.closed()) return;
        }
        buffer.erase(0, start);
        if (buffer.size() > kMaxLine) {
            send_all(fd, protocol::encode(protocol::make_error(protocol::code::kParse, "line too long")) + '\n');
            return;
        }
    }
}

}  // namespace detail

/// TCP listener; each connection is one session on its own thread.
class TcpEnvServer {
public:
    TcpEnvServer(std::shared_ptr<const ScenarioCatalog> catalog, const std::string& host, std::uint16_t port)
        : catalog_(std::move(catalog)) {
        if (!catalog_ || catalog_->empty()) throw ValidationError("scenario catalog is empty");
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        hints.ai_flags = AI_PASSIVE;
        addrinfo* res = nullptr;
        const auto port_str = std::to_string(port);
        if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_str.c_str(), &hints, &res); rc != 0)
            throw Error("cannot resolve " + host + ": " + ::gai_strerror(rc));
        std::string last_error = "no address";
        for (auto* ai = res; ai; ai = ai->ai_next) {
            int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            int yes = 1;
            ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &yes, sizeof yes);
            if (::bind(fd, ai->ai_addr, ai->ai_addrlen) == 0 && ::listen(fd, 128) == 0) {
                listen_fd_ = fd;
                break;
            }
            last_error = std::strerror(errno);
            ::close(fd);
        }
        ::freeaddrinfo(res);
        if (listen_fd_ < 0) throw Error("cannot listen on " + host + ":" + port_str + ": " + last_error);

        sockaddr_storage addr{};
        socklen_t len = sizeof addr;
        ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
        port_ = ntohs(addr.ss_family == AF_INET6 ? reinterpret_cast<sockaddr_in6*>(&addr)->sin6_port
                                                 : reinterpret_cast<sockaddr_in*>(&addr)->sin_port);
    }

    TcpEnvServer(const TcpEnvServer&) = delete;
    TcpEnvServer& operator=(const TcpEnvServer&) = delete;

    ~TcpEnvServer() {
        stop();
        std::list<Worker> workers;
        {
            std::lock_guard lock(mu_);
            workers.swap(workers_);
        }
        for (auto& w : workers) w.thread.join();
        if (listen_fd_ >= 0) ::close(listen_fd_);
    }

    /// The bound port (useful when 0 was requested).
    std::uint16_t port() const noexcept { return port_; }

    /// Accepts connections until stop().
    void run() {
        while (!stopping_) {
            reap();
            pollfd p{listen_fd_, POLLIN, 0};
            if (::poll(&p, 1, 100) <= 0) continue;
            const int fd = ::accept(listen_fd_, nullptr, nullptr);
            if (fd < 0) continue;
            int yes = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &yes, sizeof yes);
            std::lock_guard lock(mu_);
            if (stopping_) {
                ::close(fd);
                break;
            }
            auto& w = workers_.emplace_back();
            w.fd = fd;
            w.finished = std::make_shared<std::atomic<bool>>(false);
            w.thread = std::thread([this, fd, finished = w.finished] {
                detail::serve_socket(fd, catalog_);
                {
                    std::lock_guard lock(mu_);
                    for (auto& other : workers_)
                        if (other.fd == fd) other.fd = -1;
                    ::close(fd);
                }
                *finished = true;
            });
        }
    }

    /// Makes run() return and disconnects every open session.
    void stop() noexcept {
        stopping_ = true;
        std::lock_guard lock(mu_);
        for (auto& w : workers_)
            if (w.fd >= 0) ::shutdown(w.fd, SHUT_RDWR);
    }

    std::size_t active_sessions() const {
        std::lock_guard lock(mu_);
        return static_cast<std::size_t>(
            std::count_if(workers_.begin(), workers_.end(), [](const Worker& w) { return !*w.finished; }));
    }

private:
    struct Worker {
        int fd = -1;
        std::shared_ptr<std::atomic<bool>> finished;
        std::thread thread;
    };

    void reap() {
        std::list<Worker> done;
        {
            std::lock_guard lock(mu_);
            for (auto it = workers_.begin(); it != workers_.end();) {
                auto next = std::next(it);
                if (*it->finished) done.splice(done.end(), workers_, it);
                it = next;
            }
        }
        for (auto& w : done) w.thread.join();
    }

    std::shared_ptr<const ScenarioCatalog> catalog_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    mutable std::mutex mu_;
    std::list<Worker> workers_;
};

/// Splits HOST:PORT; the host may be empty or a bracketed IPv6 literal.
inline std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& s) {
    const auto colon = s.rfind(':');
    if (colon == std::string::npos) throw SchemaError("endpoint must be HOST:PORT, got '" + s + "'");
    std::string host = s.substr(0, colon);
    if (host.size() >= 2 && host.front() == '[' && host.back() == ']') host = host.substr(1, host.size() - 2);
    const auto port_text = s.substr(colon + 1);
    unsigned port = 0;
    auto [p, ec] = std::from_chars(port_text.data(), port_text.data() + port_text.size(), port);
    if (ec != std::errc{} || p != port_text.data() + port_text.size() || port > 65535)
        throw SchemaError("bad port in endpoint '" + s + "'");
    return {host, static_cast<std::uint16_t>(port)};
}

}  // namespace fleetsim
