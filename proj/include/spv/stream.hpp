#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "spv/pipeline.hpp"

namespace spv::stream {

/// Session handshake: "SPVS", u32 length, UTF-8 JSON config document.
/// Per frame: u32 width, u32 height, width*height gray8 bytes; the reply has
/// the same layout. A reply with width = height = 0 is an error frame and is
/// followed by u32 length and a UTF-8 message; the server then closes.
inline constexpr std::uint8_t kMagic[4] = {'S', 'P', 'V', 'S'};
inline constexpr std::uint32_t kMaxConfigBytes = 1u << 16;
inline constexpr std::uint32_t kMaxFrameSide = 8192;

/// Per-session overrides. Unknown keys and wrong types are rejected.
struct SessionConfig {
    bool sobel = true;
    bool gaussian = true;
};

/// Empty text yields the defaults. Throws ValidationError.
SessionConfig parse_session_config(const std::string& json_text);
std::string session_config_to_json(const SessionConfig& cfg);

struct GrayImage {
    std::uint32_t width = 0;
    std::uint32_t height = 0;
    std::vector<std::uint8_t> pixels;
};

/// Threaded TCP server on the loopback interface. Each connection gets its
/// own thread and workspace; frames on one connection are handled in order.
class Server {
public:
    /// Port 0 picks an ephemeral port. Throws IoError if binding fails.
    Server(pipeline::PipelineConfig base, std::uint16_t port, unsigned render_workers = 1);
    ~Server();

    Server(const Server&) = delete;
    Server& operator=(const Server&) = delete;

    std::uint16_t port() const { return port_; }

    /// Accepts connections until stop() is called.
    void run();
    void stop() { stopping_ = true; }
    bool stopping() const { return stopping_; }

    std::size_t connections_served() const { return served_; }

private:
    void handle(int fd);

    pipeline::PipelineConfig base_;
    unsigned render_workers_;
    int listen_fd_ = -1;
    std::uint16_t port_ = 0;
    std::atomic<bool> stopping_{false};
    std::atomic<std::size_t> served_{0};
    std::mutex threads_mutex_;
    std::vector<std::thread> threads_;
};

/// Blocking client, used by tests and the loopback benchmark.
class Client {
public:
    /// Connects and sends the handshake. Throws IoError.
    Client(const std::string& host, std::uint16_t port, const std::string& config_json = "{}");
    ~Client();

    Client(const Client&) = delete;
    Client& operator=(const Client&) = delete;

    /// Throws ValidationError carrying the server message on an error frame.
    GrayImage process(const GrayImage& frame);

    /// Raw access for protocol tests.
    void send_bytes(const std::vector<std::uint8_t>& bytes);
    GrayImage receive();

private:
    int fd_ = -1;
};

}  // namespace spv::stream
