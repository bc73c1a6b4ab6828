#include "otv/server.hpp"

#include "otv/latency.hpp"
#include "otv/protocol.hpp"
#include "otv/session.hpp"

#include <boost/asio.hpp>
#include <boost/beast/core.hpp>
#include <boost/beast/http.hpp>
#include <boost/beast/websocket.hpp>

#include <atomic>
#include <chrono>
#include <deque>
#include <fstream>
#include <future>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

namespace otv {
namespace {

namespace beast = boost::beast;
namespace http = beast::http;
namespace websocket = beast::websocket;
namespace net = boost::asio;
using tcp = net::ip::tcp;
using nlohmann::json;

constexpr std::size_t kMaxQueued = 512;   // per connection, beyond this new messages are dropped
constexpr std::size_t kMaxMessage = 1 << 20;

const char* kPlaceholderPage = R"(<!doctype html>
<html><head><meta charset="utf-8"><title>otv</title></head>
<body>
<h1>otv teleoperation server</h1>
<p>No console assets are installed. Point the server at a built console with
<code>--static DIR</code>, or connect a client to this address over WebSocket.</p>
<p>The robot model is at <a href="/model">/model</a>.</p>
</body></html>
)";

std::string mime_type(const std::filesystem::path& p) {
    const std::string ext = p.extension().string();
    if (ext == ".html") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".wasm") return "application/wasm";
    return "application/octet-stream";
}

std::string error_name(const ProtocolError& e) {
    if (dynamic_cast<const UnknownTag*>(&e)) return "UnknownTag";
    if (dynamic_cast<const TruncatedPayload*>(&e)) return "TruncatedPayload";
    if (dynamic_cast<const BadUtf8*>(&e)) return "BadUtf8";
    if (dynamic_cast<const NonUnitQuaternion*>(&e)) return "NonUnitQuaternion";
    return "MalformedPayload";
}

}  // namespace

class Server::Impl {
public:
    class WsConn;
    class HttpConn;

    Impl(const RobotModel& model, SessionConfig cfg, SceneSpec scene, std::filesystem::path static_dir)
        : model_(model),
          cfg_(cfg),
          static_dir_(std::move(static_dir)),
          session_(model, std::move(cfg), std::move(scene)),
          uplink_(cfg_.latency.delay_ms, cfg_.latency.jitter_ms, cfg_.latency.seed),
          downlink_(cfg_.latency.delay_ms, cfg_.latency.jitter_ms, cfg_.latency.seed + 1),
          acceptor_(ioc_) {}

    ~Impl() { stop(); }

    void start();
    void stop();
    std::uint16_t port() const { return port_; }
    bool running() const { return running_; }
    void with_session(const std::function<void(Session&)>& f);

    // io thread -> tick thread
    void inbound(int conn, std::string bytes);
    void closed(int conn);
    void opened(const std::shared_ptr<WsConn>& c);
    http::response<http::string_body> handle_http(const http::request<http::string_body>& req) const;

private:
    struct Peer {
        enum class Role { none, operator_, viewer } role = Role::none;
    };

    void accept();
    void tick_loop();
    void handle(int conn, const std::string& bytes, double now);
    void handle_hello(int conn, Peer& peer, const json& body, double now);
    void send(int conn, const Message& m, double now);
    void broadcast(const Message& m, double now);
    void flush(double now);
    void post_close(int conn);

    const RobotModel& model_;
    SessionConfig cfg_;
    std::filesystem::path static_dir_;
    Session session_;

    // Shared between the threads.
    std::mutex inbox_mutex_;
    LatencyHarness uplink_;
    std::deque<int> uplink_conn_;
    std::vector<int> closed_;
    std::deque<std::packaged_task<void()>> tasks_;
    double clock_ = 0.0;   // seconds since start, written by the tick thread

    // Tick thread only.
    LatencyHarness downlink_;
    std::deque<std::vector<int>> downlink_to_;
    std::map<int, Peer> peers_;
    std::optional<int> operator_;

    // io thread only.
    std::map<int, std::shared_ptr<WsConn>> conns_;
    int next_id_ = 1;

    net::io_context ioc_;
    tcp::acceptor acceptor_;
    std::thread io_thread_;
    std::thread tick_thread_;
    std::atomic<bool> running_{false};
    std::atomic<bool> stopping_{false};
    std::chrono::steady_clock::time_point started_;
    std::uint16_t port_ = 0;
};

class Server::Impl::WsConn : public std::enable_shared_from_this<WsConn> {
public:
    WsConn(tcp::socket socket, Impl* srv, int id) : ws_(std::move(socket)), srv_(srv), id_(id) {}

    int id() const { return id_; }

    void start(http::request<http::string_body> req) {
        ws_.set_option(websocket::stream_base::timeout::suggested(beast::role_type::server));
        ws_.read_message_max(kMaxMessage);
        ws_.binary(true);
        ws_.async_accept(req, [self = shared_from_this()](beast::error_code ec) {
            if (ec) return;
            self->srv_->opened(self);
            self->read();
        });
    }

    void send(std::shared_ptr<const std::string> m) {
        if (closing_ || queue_.size() >= kMaxQueued) return;
        queue_.push_back(std::move(m));
        if (queue_.size() == 1) write();
    }

    void close_after_flush() {
        closing_ = true;
        if (queue_.empty()) close();
    }

    void close() {
        if (close_sent_) return;
        close_sent_ = true;
        ws_.async_close(websocket::close_code::normal, [self = shared_from_this()](beast::error_code) {});
    }

private:
    void read() {
        ws_.async_read(buffer_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->srv_->closed(self->id_);
                return;
            }
            self->srv_->inbound(self->id_, beast::buffers_to_string(self->buffer_.data()));
            self->buffer_.consume(self->buffer_.size());
            self->read();
        });
    }

    void write() {
        ws_.async_write(net::buffer(*queue_.front()), [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) {
                self->queue_.clear();
                return;
            }
            self->queue_.pop_front();
            if (!self->queue_.empty()) self->write();
            else if (self->closing_) self->close();
        });
    }

    websocket::stream<beast::tcp_stream> ws_;
    beast::flat_buffer buffer_;
    std::deque<std::shared_ptr<const std::string>> queue_;
    Impl* srv_;
    int id_;
    bool closing_ = false;
    bool close_sent_ = false;
};

class Server::Impl::HttpConn : public std::enable_shared_from_this<HttpConn> {
public:
    HttpConn(tcp::socket socket, Impl* srv) : stream_(std::move(socket)), srv_(srv) {}

    void read() {
        req_ = {};
        stream_.expires_after(std::chrono::seconds(30));
        http::async_read(stream_, buffer_, req_, [self = shared_from_this()](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (websocket::is_upgrade(self->req_)) {
                const int id = self->srv_->next_id_++;
                stream_ready(self, id);
                return;
            }
            self->respond();
        });
    }

private:
    static void stream_ready(const std::shared_ptr<HttpConn>& self, int id) {
        self->stream_.expires_never();
        auto ws = std::make_shared<WsConn>(self->stream_.release_socket(), self->srv_, id);
        ws->start(std::move(self->req_));
    }

    void respond() {
        auto res = std::make_shared<http::response<http::string_body>>(srv_->handle_http(req_));
        http::async_write(stream_, *res, [self = shared_from_this(), res](beast::error_code ec, std::size_t) {
            if (ec) return;
            if (!res->keep_alive()) {
                beast::error_code ignored;
                self->stream_.socket().shutdown(tcp::socket::shutdown_send, ignored);
                return;
            }
            self->read();
        });
    }

    beast::tcp_stream stream_;
    beast::flat_buffer buffer_;
    http::request<http::string_body> req_;
    Impl* srv_;
};

void Server::Impl::start() {
    if (running_) return;
    beast::error_code ec;
    const auto address = net::ip::make_address(cfg_.host, ec);
    if (ec) throw BindError("bad listen address '" + cfg_.host + "': " + ec.message());
    const tcp::endpoint ep(address, cfg_.port);
    acceptor_.open(ep.protocol(), ec);
    if (!ec) acceptor_.set_option(net::socket_base::reuse_address(true), ec);
    if (!ec) acceptor_.bind(ep, ec);
    if (!ec) acceptor_.listen(net::socket_base::max_listen_connections, ec);
    if (ec) throw BindError("cannot listen on " + cfg_.host + ":" + std::to_string(cfg_.port) + ": " + ec.message());
    port_ = acceptor_.local_endpoint().port();

    running_ = true;
    started_ = std::chrono::steady_clock::now();
    accept();
    io_thread_ = std::thread([this] { ioc_.run(); });
    tick_thread_ = std::thread([this] { tick_loop(); });
}

void Server::Impl::stop() {
    if (!running_ || stopping_.exchange(true)) return;
    running_ = false;
    if (tick_thread_.joinable()) tick_thread_.join();
    net::post(ioc_, [this] {
        beast::error_code ignored;
        acceptor_.close(ignored);
        for (auto& [_, c] : conns_) c->close();
    });
    // Give the close handshakes a moment before tearing the loop down.
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
    ioc_.stop();
    if (io_thread_.joinable()) io_thread_.join();
}

void Server::Impl::accept() {
    acceptor_.async_accept([this](beast::error_code ec, tcp::socket socket) {
        if (ec) return;   // acceptor closed
        std::make_shared<HttpConn>(std::move(socket), this)->read();
        accept();
    });
}

void Server::Impl::opened(const std::shared_ptr<WsConn>& c) { conns_[c->id()] = c; }

void Server::Impl::inbound(int conn, std::string bytes) {
    std::lock_guard lock(inbox_mutex_);
    uplink_.push(std::move(bytes),
                 std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count());
    uplink_conn_.push_back(conn);
}

void Server::Impl::closed(int conn) {
    conns_.erase(conn);
    std::lock_guard lock(inbox_mutex_);
    closed_.push_back(conn);
}

void Server::Impl::with_session(const std::function<void(Session&)>& f) {
    if (!running_) {
        f(session_);
        return;
    }
    std::packaged_task<void()> task([&] { f(session_); });
    auto done = task.get_future();
    {
        std::lock_guard lock(inbox_mutex_);
        tasks_.push_back(std::move(task));
    }
    done.get();
}

http::response<http::string_body> Server::Impl::handle_http(const http::request<http::string_body>& req) const {
    http::response<http::string_body> res;
    res.version(req.version());
    res.keep_alive(req.keep_alive());
    res.set(http::field::server, "otv");
    const auto reply = [&](http::status s, std::string type, std::string body) {
        res.result(s);
        res.set(http::field::content_type, type);
        res.body() = std::move(body);
        res.prepare_payload();
        return res;
    };
    if (req.method() != http::verb::get && req.method() != http::verb::head)
        return reply(http::status::method_not_allowed, "text/plain", "only GET is supported\n");

    std::string target(req.target());
    if (const auto q = target.find('?'); q != std::string::npos) target.resize(q);
    if (target == "/model") return reply(http::status::ok, "text/plain; charset=utf-8", model_.source());
    if (target == "/") target = "/index.html";

    if (!static_dir_.empty() && target.find("..") == std::string::npos) {
        const std::filesystem::path file = static_dir_ / target.substr(1);
        std::ifstream in(file, std::ios::binary);
        if (in && std::filesystem::is_regular_file(file)) {
            std::ostringstream ss;
            ss << in.rdbuf();
            return reply(http::status::ok, mime_type(file), ss.str());
        }
    }
    if (target == "/index.html") return reply(http::status::ok, "text/html; charset=utf-8", kPlaceholderPage);
    return reply(http::status::not_found, "text/plain", "not found\n");
}

void Server::Impl::send(int conn, const Message& m, double now) {
    downlink_.push(encode_message(m), now);
    downlink_to_.push_back({conn});
}

void Server::Impl::broadcast(const Message& m, double now) {
    std::vector<int> to;
    for (const auto& [id, peer] : peers_)
        if (peer.role != Peer::Role::none) to.push_back(id);
    if (to.empty()) return;
    downlink_.push(encode_message(m), now);
    downlink_to_.push_back(std::move(to));
}

void Server::Impl::flush(double now) {
    for (std::string& bytes : downlink_.drain(now)) {
        auto payload = std::make_shared<const std::string>(std::move(bytes));
        std::vector<int> to = std::move(downlink_to_.front());
        downlink_to_.pop_front();
        net::post(ioc_, [this, payload, to = std::move(to)] {
            for (int id : to)
                if (auto it = conns_.find(id); it != conns_.end()) it->second->send(payload);
        });
    }
}

void Server::Impl::post_close(int conn) {
    net::post(ioc_, [this, conn] {
        if (auto it = conns_.find(conn); it != conns_.end()) it->second->close_after_flush();
    });
}

void Server::Impl::handle_hello(int conn, Peer& peer, const json& body, double now) {
    const auto reject = [&](const std::string& code, const std::string& why) {
        send(conn, ControlMsg{{{"reply", "hello"}, {"ok", false}, {"error", code}, {"message", why}}}, now);
        flush(now);
        post_close(conn);
        peers_.erase(conn);
    };
    if (peer.role != Peer::Role::none) {
        send(conn, ControlMsg{{{"reply", "hello"}, {"ok", false}, {"error", "already_greeted"}}}, now);
        return;
    }
    const std::string role = body.value("role", std::string{});
    if (body.contains("protocol_version") && body["protocol_version"] != kProtocolVersion)
        return reject("protocol_version", "server speaks protocol version " + std::to_string(kProtocolVersion));
    if (role == "operator") {
        if (operator_ && *operator_ != conn) return reject("operator_taken", "this robot already has an operator");
        operator_ = conn;
        peer.role = Peer::Role::operator_;
    } else if (role == "viewer") {
        peer.role = Peer::Role::viewer;
    } else {
        return reject("bad_role", "role must be operator or viewer");
    }
    json reply = {{"accepted", true},
                  {"role", role},
                  {"protocol_version", kProtocolVersion},
                  {"robot", model_.name()},
                  {"action_names", model_.action_names()},
                  {"rate_hz", cfg_.rate_hz},
                  {"frame_stride", cfg_.frame_stride},
                  {"render", {{"width", cfg_.render_width}, {"height", cfg_.render_height}}},
                  {"mode", mode_name(session_.mode())}};
    send(conn, HelloMsg{std::move(reply)}, now);
}

void Server::Impl::handle(int conn, const std::string& bytes, double now) {
    Peer& peer = peers_[conn];
    Message m;
    try {
        m = decode_message(bytes);
    } catch (const ProtocolError& e) {
        send(conn, ControlMsg{{{"ok", false}, {"error", error_name(e)}, {"message", e.what()}}}, now);
        return;
    }
    if (const auto* h = std::get_if<HelloMsg>(&m)) return handle_hello(conn, peer, h->body, now);
    if (peer.role == Peer::Role::none) {
        send(conn, ControlMsg{{{"ok", false}, {"error", "hello_required"}}}, now);
        return;
    }
    if (const auto* f = std::get_if<OperatorFrameMsg>(&m)) {
        if (peer.role == Peer::Role::operator_) session_.submit(f->frame);
        return;   // viewers: ignored
    }
    if (const auto* c = std::get_if<ControlMsg>(&m)) {
        const std::string cmd = c->body.value("cmd", std::string{});
        if (peer.role != Peer::Role::operator_ && cmd != "ping" && cmd != "stats") {
            send(conn, ControlMsg{{{"reply", cmd}, {"ok", false}, {"error", "operator_only"}}}, now);
            return;
        }
        send(conn, ControlMsg{session_.control(c->body)}, now);
        return;
    }
    send(conn, ControlMsg{{{"ok", false}, {"error", "unexpected_message"},
                          {"message", std::string(type_name(type_of(m))) + " is server-to-client only"}}},
         now);
}

void Server::Impl::tick_loop() {
    using clock = std::chrono::steady_clock;
    const auto period = std::chrono::duration_cast<clock::duration>(std::chrono::duration<double>(1.0 / cfg_.rate_hz));
    auto next = clock::now();
    while (running_) {
        const double now = std::chrono::duration<double>(clock::now() - started_).count();
        std::vector<std::pair<int, std::string>> msgs;
        std::vector<int> gone;
        std::deque<std::packaged_task<void()>> tasks;
        {
            std::lock_guard lock(inbox_mutex_);
            for (std::string& b : uplink_.drain(now)) {
                msgs.emplace_back(uplink_conn_.front(), std::move(b));
                uplink_conn_.pop_front();
            }
            gone.swap(closed_);
            tasks.swap(tasks_);
        }
        for (auto& [conn, bytes] : msgs) handle(conn, bytes, now);
        for (int conn : gone) {
            peers_.erase(conn);
            if (operator_ == conn) operator_.reset();
        }
        for (auto& t : tasks) t();

        TickResult r = session_.tick(now);
        for (const Message& m : r.outbound) broadcast(m, now);
        flush(now);

        next += period;
        const auto t = clock::now();
        if (t > next + 10 * period) next = t;   // fell far behind: do not burst to catch up
        std::this_thread::sleep_until(next);
    }
    session_.shutdown();
    std::deque<std::packaged_task<void()>> tasks;
    {
        std::lock_guard lock(inbox_mutex_);
        tasks.swap(tasks_);
    }
    for (auto& t : tasks) t();
}

Server::Server(const RobotModel& model, SessionConfig cfg, SceneSpec scene, std::filesystem::path static_dir)
    : impl_(std::make_unique<Impl>(model, std::move(cfg), std::move(scene), std::move(static_dir))) {}

Server::~Server() = default;
void Server::start() { impl_->start(); }
void Server::stop() { impl_->stop(); }
std::uint16_t Server::port() const { return impl_->port(); }
bool Server::running() const { return impl_->running(); }
void Server::with_session(const std::function<void(Session&)>& f) { impl_->with_session(f); }

}  // namespace otv
