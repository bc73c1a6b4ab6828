#pragma once

// WebSocket + HTTP front end of one Session.
//
//   ws://host:port/   binary protocol (see protocol.hpp); the first message of
//                     a connection must be HELLO {"role": "operator"|"viewer"}
//   GET /model        the robot model document, for client-side FK
//   GET /             index.html (and other files) from the static directory,
//                     or a built-in placeholder page
//
// One operator per session; a second operator HELLO gets a CONTROL error and
// the connection is closed. Viewers receive every broadcast but their
// OPERATOR_FRAMEs are ignored and they may only send ping/stats.
//
// Threads: one io thread owns all sockets; the tick thread owns the Session
// and handles inbound messages in arrival order before each tick. Inbound
// and outbound traffic both pass through a LatencyHarness.

#include "otv/config.hpp"
#include "otv/robot_model.hpp"
#include "otv/sim_world.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <stdexcept>

namespace otv {

class BindError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class Session;

class Server {
public:
    /// Port 0 in cfg picks an ephemeral port.
    Server(const RobotModel& model, SessionConfig cfg, SceneSpec scene, std::filesystem::path static_dir = {});
    ~Server();
    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    /// Binds and starts serving. BindError when the address is unavailable.
    void start();
    /// Stops the tick loop, finishes any recording and closes every socket.
    /// Idempotent.
    void stop();

    std::uint16_t port() const;
    bool running() const;

    /// Runs `f` on the tick thread between ticks and waits for it.
    void with_session(const std::function<void(Session&)>& f);

private:
    class Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace otv
