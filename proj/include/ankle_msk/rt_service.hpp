#pragma once

#include <atomic>
#include <cstdint>
#include <list>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "ankle_msk/controller.hpp"
#include "ankle_msk/model_config.hpp"

namespace ankle_msk {

enum class PlantMode { torque_tracking, impedance_angle };

// Stand-in prosthesis: first-order actuator lag with saturation, optionally
// an ideal spring that turns torque into angle.
struct PlantSettings {
  PlantMode mode = PlantMode::torque_tracking;
  double lag_ms = 20.0;
  double saturation = 150.0;  // N m
  double kp = 2.0;            // N m / deg
  double neutral_deg = 90.0;
  double min_angle = 70.0;
  double max_angle = 130.0;

  void validate() const;
};

struct PlantState {
  double tau_meas = 0.0;
  double theta = 90.0;
};

class VirtualPlant {
 public:
  explicit VirtualPlant(const PlantSettings& settings = {});

  // Exact exponential step of the lag over dt seconds.
  const PlantState& step(double tau_cmd, double dt);
  void reset();
  const PlantState& state() const { return state_; }

 private:
  PlantSettings settings_;
  PlantState state_;
};

// Tick latencies in 1 us buckets; the last bucket collects everything above.
class LatencyHistogram {
 public:
  static constexpr std::size_t kBuckets = 100000;

  LatencyHistogram() : counts_(kBuckets + 1, 0) {}
  void add(std::int64_t us);
  std::uint64_t count() const { return total_; }
  // Smallest bucket value with at least q of the samples at or below it.
  std::int64_t percentile(double q) const;
  std::int64_t max() const { return max_; }
  std::vector<std::pair<std::int64_t, std::uint64_t>> nonzero() const;
  void reset();

 private:
  std::vector<std::uint64_t> counts_;
  std::uint64_t total_ = 0;
  std::int64_t max_ = 0;
};

struct ServiceConfig {
  std::string address = "127.0.0.1";
  std::uint16_t port = 0;  // 0 picks a free port
  double rate_hz = 1000.0;
  PlantSettings plant;
  std::size_t queue_capacity = 1024;

  void validate() const;
};

struct TickInput {
  double t = 0.0;
  double emg_ta = 0.0, emg_gas = 0.0;  // V
  double theta = 90.0;                 // deg
};

struct TickOutput {
  double t = 0.0;
  double tau_cmd = 0.0, tau_meas = 0.0;
  double theta_plant = 0.0;
  double a_ta = 0.0, a_gas = 0.0;
  std::int64_t lat_us = 0;
  bool fault = false;
};

struct SessionStats {
  std::uint64_t ticks = 0;
  std::uint64_t deadline_misses = 0;
  std::uint64_t faults = 0;
  std::int64_t p50_us = 0, p99_us = 0, max_us = 0;
  std::vector<std::pair<std::int64_t, std::uint64_t>> histogram;
};

// Controller, plant and counters for one connection. Faulted samples (non-
// finite input or an angle outside the model geometry) hold the previous
// command.
class ControlSession {
 public:
  ControlSession(const ModelConfig& config, const ServiceConfig& service);

  TickOutput tick(const TickInput& in);
  SessionStats stats() const;
  void reset();

 private:
  TorqueController controller_;
  VirtualPlant plant_;
  double dt_;
  std::int64_t period_us_;
  TickOutput last_;
  std::uint64_t ticks_ = 0, misses_ = 0, faults_ = 0;
  LatencyHistogram latency_;
};

namespace protocol {

inline constexpr std::string_view kVersion = "v1";

struct Hello {
  std::string version;
  double rate_hz = 0.0;
};

// `HELLO <version> rate=<Hz>`; throws InvalidInput if malformed.
Hello parse_hello(std::string_view line);
std::string format_hello(double rate_hz);
std::string format_ok(const std::string& model_hash);
std::string format_error(std::string_view code, std::string_view msg);

// Tick lines; null fields read as NaN. Throws InvalidInput if malformed.
TickInput parse_tick(std::string_view line);
std::string format_tick(const TickInput& in);
std::string format_tick_response(const TickOutput& out);
TickOutput parse_tick_response(std::string_view line);

std::string format_stats(const SessionStats& stats);
SessionStats parse_stats(std::string_view line);

}  // namespace protocol

// TCP line server. Each connection gets a reader, a compute and a writer
// thread joined by bounded single-producer/single-consumer queues.
class Server {
 public:
  Server(ModelConfig config, ServiceConfig service);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and starts accepting; returns once the socket is listening.
  void start();
  void stop();
  std::uint16_t port() const { return port_; }
  const std::string& model_hash() const { return hash_; }

  struct Connection;

 private:
  void accept_loop(std::stop_token stop);
  void reap(bool all);

  std::shared_ptr<const ModelConfig> config_;
  ServiceConfig service_;
  std::string hash_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::mutex mutex_;
  std::list<std::unique_ptr<Connection>> connections_;
  std::jthread acceptor_;
};

// Blocking client: one request line, one response line.
class Client {
 public:
  Client(const std::string& host, std::uint16_t port);
  ~Client();
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // Returns the server's model hash; throws on an error line.
  std::string handshake(double rate_hz);
  TickOutput tick(const TickInput& in);
  SessionStats stats();
  // Raw exchange for protocol tests.
  std::string request(const std::string& line);
  void send_line(const std::string& line);
  // Empty string on end of stream.
  std::string read_line();
  void close();

 private:
  int fd_ = -1;
  std::string buffer_;
};

}  // namespace ankle_msk
