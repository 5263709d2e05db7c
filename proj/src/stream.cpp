#include "spv/stream.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <json.hpp>

#include "spv/error.hpp"
#include "spv/image_io.hpp"
#include "spv/parallel.hpp"

namespace spv::stream {
namespace {

using json = nlohmann::json;

constexpr int kPollMs = 100;

/// Reads exactly n bytes. Returns false on orderly EOF before the first
/// byte; throws IoError on a short read or when `stop` is raised.
bool read_exact(int fd, void* buf, std::size_t n, const std::atomic<bool>* stop) {
    auto* p = static_cast<std::uint8_t*>(buf);
    std::size_t got = 0;
    while (got < n) {
        if (stop != nullptr) {
            pollfd pfd{fd, POLLIN, 0};
            const int r = ::poll(&pfd, 1, kPollMs);
            if (r < 0 && errno != EINTR) throw IoError(std::string("poll: ") + std::strerror(errno));
            if (stop->load()) throw IoError("server shutting down");
            if (r <= 0) continue;
        }
        const ssize_t k = ::recv(fd, p + got, n - got, 0);
        if (k == 0) {
            if (got == 0) return false;
            throw IoError("connection closed mid-message");
        }
        if (k < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("recv: ") + std::strerror(errno));
        }
        got += static_cast<std::size_t>(k);
    }
    return true;
}

void write_all(int fd, const void* buf, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(buf);
    while (n > 0) {
        const ssize_t k = ::send(fd, p, n, MSG_NOSIGNAL);
        if (k < 0) {
            if (errno == EINTR) continue;
            throw IoError(std::string("send: ") + std::strerror(errno));
        }
        p += k;
        n -= static_cast<std::size_t>(k);
    }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
           static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

std::uint32_t read_u32(int fd, const std::atomic<bool>* stop, bool* eof = nullptr) {
    std::uint8_t b[4];
    const bool ok = read_exact(fd, b, 4, stop);
    if (!ok) {
        if (eof == nullptr) throw IoError("connection closed");
        *eof = true;
        return 0;
    }
    return get_u32(b);
}

void send_frame(int fd, std::uint32_t w, std::uint32_t h, const std::uint8_t* pixels) {
    std::vector<std::uint8_t> msg;
    msg.reserve(8 + static_cast<std::size_t>(w) * h);
    put_u32(msg, w);
    put_u32(msg, h);
    msg.insert(msg.end(), pixels, pixels + static_cast<std::size_t>(w) * h);
    write_all(fd, msg.data(), msg.size());
}

void send_error(int fd, const std::string& message) {
    std::vector<std::uint8_t> msg;
    put_u32(msg, 0);
    put_u32(msg, 0);
    put_u32(msg, static_cast<std::uint32_t>(message.size()));
    msg.insert(msg.end(), message.begin(), message.end());
    try {
        write_all(fd, msg.data(), msg.size());
    } catch (const IoError&) {
        // Peer already gone.
    }
}

}  // namespace

SessionConfig parse_session_config(const std::string& json_text) {
    SessionConfig cfg;
    if (json_text.empty()) return cfg;
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("session config is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ValidationError("session config must be a JSON object");
    for (const auto& [key, value] : doc.items()) {
        bool* slot = nullptr;
        if (key == "sobel") slot = &cfg.sobel;
        else if (key == "gaussian") slot = &cfg.gaussian;
        else throw ValidationError("unknown session config key '" + key + "'");
        if (!value.is_boolean()) throw ValidationError("session config key '" + key + "' must be a boolean");
        *slot = value.get<bool>();
    }
    return cfg;
}

std::string session_config_to_json(const SessionConfig& cfg) {
    return json{{"sobel", cfg.sobel}, {"gaussian", cfg.gaussian}}.dump();
}

Server::Server(pipeline::PipelineConfig base, std::uint16_t port, unsigned render_workers)
    : base_(std::move(base)), render_workers_(render_workers == 0 ? 1 : render_workers) {
    pipeline::FrameTransform probe(base_);  // validates the configuration early
    listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (listen_fd_ < 0) throw IoError(std::string("socket: ") + std::strerror(errno));
    int one = 1;
    ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(port);
    if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 16) != 0) {
        const std::string why = std::strerror(errno);
        ::close(listen_fd_);
        throw IoError("cannot listen on port " + std::to_string(port) + ": " + why);
    }
    socklen_t len = sizeof addr;
    ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Server::~Server() {
    stop();
    std::lock_guard lock(threads_mutex_);
    for (auto& t : threads_)
        if (t.joinable()) t.join();
    if (listen_fd_ >= 0) ::close(listen_fd_);
}

void Server::run() {
    while (!stopping_) {
        pollfd pfd{listen_fd_, POLLIN, 0};
        const int r = ::poll(&pfd, 1, kPollMs);
        if (r <= 0) continue;
        const int fd = ::accept(listen_fd_, nullptr, nullptr);
        if (fd < 0) continue;
        int one = 1;
        ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
        std::lock_guard lock(threads_mutex_);
        threads_.emplace_back([this, fd] { handle(fd); });
    }
    std::lock_guard lock(threads_mutex_);
    for (auto& t : threads_)
        if (t.joinable()) t.join();
    threads_.clear();
}

void Server::handle(int fd) {
    try {
        std::uint8_t magic[4];
        if (!read_exact(fd, magic, 4, &stopping_)) {
            ::close(fd);
            return;
        }
        if (std::memcmp(magic, kMagic, 4) != 0) throw ValidationError("bad session magic");
        const std::uint32_t len = read_u32(fd, &stopping_);
        if (len > kMaxConfigBytes) throw ValidationError("session config too large");
        std::string text(len, '\0');
        if (len > 0 && !read_exact(fd, text.data(), len, &stopping_)) throw IoError("connection closed");
        const SessionConfig session = parse_session_config(text);

        auto cfg = base_;
        cfg.sobel = session.sobel;
        cfg.gaussian = session.gaussian;
        const pipeline::FrameTransform transform(cfg);
        pipeline::FrameTransform::Workspace ws;
        std::unique_ptr<ThreadPool> pool;
        if (render_workers_ > 1) pool = std::make_unique<ThreadPool>(render_workers_);

        std::vector<std::uint8_t> in;
        while (!stopping_) {
            bool eof = false;
            const std::uint32_t w = read_u32(fd, &stopping_, &eof);
            if (eof) break;
            const std::uint32_t h = read_u32(fd, &stopping_);
            if (w == 0 || h == 0 || w > kMaxFrameSide || h > kMaxFrameSide)
                throw ValidationError("frame size " + std::to_string(w) + "x" + std::to_string(h) +
                                      " out of range");
            in.resize(static_cast<std::size_t>(w) * h);
            if (!read_exact(fd, in.data(), in.size(), &stopping_)) throw IoError("connection closed");
            const Frame gray = image_io::from_gray8(static_cast<int>(w), static_cast<int>(h), in.data());
            const Frame& out = transform.process(gray, ws, pool.get());
            const auto bytes = image_io::to_gray8(out);
            send_frame(fd, static_cast<std::uint32_t>(out.width), static_cast<std::uint32_t>(out.height),
                       bytes.data());
        }
    } catch (const IoError&) {
        // Transport failure: nothing useful can be sent.
    } catch (const std::exception& e) {
        send_error(fd, e.what());
    }
    ::close(fd);
    ++served_;
}

Client::Client(const std::string& host, std::uint16_t port, const std::string& config_json) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (::getaddrinfo(host.c_str(), std::to_string(port).c_str(), &hints, &res) != 0 || res == nullptr)
        throw IoError("cannot resolve '" + host + "'");
    fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    const int rc = fd_ < 0 ? -1 : ::connect(fd_, res->ai_addr, res->ai_addrlen);
    ::freeaddrinfo(res);
    if (rc != 0) {
        const std::string why = std::strerror(errno);
        if (fd_ >= 0) ::close(fd_);
        throw IoError("cannot connect to " + host + ":" + std::to_string(port) + ": " + why);
    }
    int one = 1;
    ::setsockopt(fd_, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::vector<std::uint8_t> hello(kMagic, kMagic + 4);
    put_u32(hello, static_cast<std::uint32_t>(config_json.size()));
    hello.insert(hello.end(), config_json.begin(), config_json.end());
    send_bytes(hello);
}

Client::~Client() {
    if (fd_ >= 0) ::close(fd_);
}

void Client::send_bytes(const std::vector<std::uint8_t>& bytes) { write_all(fd_, bytes.data(), bytes.size()); }

GrayImage Client::receive() {
    GrayImage img;
    img.width = read_u32(fd_, nullptr);
    img.height = read_u32(fd_, nullptr);
    if (img.width == 0 && img.height == 0) {
        const std::uint32_t len = read_u32(fd_, nullptr);
        std::string msg(len, '\0');
        if (len > 0) read_exact(fd_, msg.data(), len, nullptr);
        throw ValidationError("server error: " + msg);
    }
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    if (!img.pixels.empty() && !read_exact(fd_, img.pixels.data(), img.pixels.size(), nullptr))
        throw IoError("connection closed");
    return img;
}

GrayImage Client::process(const GrayImage& frame) {
    if (frame.pixels.size() != static_cast<std::size_t>(frame.width) * frame.height)
        throw ContractError("frame pixel count does not match its size");
    std::vector<std::uint8_t> msg;
    msg.reserve(8 + frame.pixels.size());
    put_u32(msg, frame.width);
    put_u32(msg, frame.height);
    msg.insert(msg.end(), frame.pixels.begin(), frame.pixels.end());
    send_bytes(msg);
    return receive();
}

}  // namespace spv::stream
