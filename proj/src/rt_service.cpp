#include "ankle_msk/rt_service.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstring>
#include <limits>

#include <boost/lockfree/spsc_queue.hpp>
#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "ankle_msk/errors.hpp"
#include "json_doc.hpp"

namespace ankle_msk {

using json_doc::json;

void PlantSettings::validate() const {
  if (!(lag_ms > 0.0)) throw InvalidParameter(fmt::format("plant lag must be positive, got {} ms", lag_ms));
  if (!(saturation > 0.0)) throw InvalidParameter(fmt::format("plant saturation must be positive, got {}", saturation));
  if (!(kp > 0.0)) throw InvalidParameter(fmt::format("plant stiffness must be positive, got {}", kp));
  if (!(min_angle < max_angle)) throw InvalidParameter("plant angle range is empty");
}

VirtualPlant::VirtualPlant(const PlantSettings& settings) : settings_(settings) {
  settings_.validate();
  reset();
}

const PlantState& VirtualPlant::step(double tau_cmd, double dt) {
  if (!(dt > 0.0)) throw InvalidParameter(fmt::format("plant step needs dt > 0, got {}", dt));
  const double target = std::clamp(tau_cmd, -settings_.saturation, settings_.saturation);
  const double k = -std::expm1(-dt / (settings_.lag_ms * 1e-3));
  state_.tau_meas += k * (target - state_.tau_meas);
  if (settings_.mode == PlantMode::impedance_angle) {
    state_.theta =
        std::clamp(settings_.neutral_deg - state_.tau_meas / settings_.kp, settings_.min_angle, settings_.max_angle);
  }
  return state_;
}

void VirtualPlant::reset() {
  state_.tau_meas = 0.0;
  state_.theta = std::clamp(settings_.neutral_deg, settings_.min_angle, settings_.max_angle);
}

void LatencyHistogram::add(std::int64_t us) {
  us = std::max<std::int64_t>(us, 0);
  ++counts_[std::min<std::size_t>(static_cast<std::size_t>(us), kBuckets)];
  ++total_;
  max_ = std::max(max_, us);
}

std::int64_t LatencyHistogram::percentile(double q) const {
  if (total_ == 0) return 0;
  const auto need = static_cast<std::uint64_t>(std::ceil(q * static_cast<double>(total_)));
  std::uint64_t seen = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    seen += counts_[i];
    if (seen >= std::max<std::uint64_t>(need, 1)) return static_cast<std::int64_t>(i);
  }
  return static_cast<std::int64_t>(kBuckets);
}

std::vector<std::pair<std::int64_t, std::uint64_t>> LatencyHistogram::nonzero() const {
  std::vector<std::pair<std::int64_t, std::uint64_t>> out;
  for (std::size_t i = 0; i < counts_.size(); ++i) {
    if (counts_[i]) out.emplace_back(static_cast<std::int64_t>(i), counts_[i]);
  }
  return out;
}

void LatencyHistogram::reset() {
  std::fill(counts_.begin(), counts_.end(), 0);
  total_ = 0;
  max_ = 0;
}

void ServiceConfig::validate() const {
  if (!(rate_hz > 0.0)) throw InvalidParameter(fmt::format("control rate must be positive, got {}", rate_hz));
  if (queue_capacity < 2) throw InvalidParameter("queue capacity must be at least 2");
  plant.validate();
}

ControlSession::ControlSession(const ModelConfig& config, const ServiceConfig& service)
    : controller_(config, service.rate_hz),
      plant_(service.plant),
      dt_(1.0 / service.rate_hz),
      period_us_(static_cast<std::int64_t>(std::llround(1e6 / service.rate_hz))) {
  last_.theta_plant = plant_.state().theta;
}

TickOutput ControlSession::tick(const TickInput& in) {
  const auto start = std::chrono::steady_clock::now();
  TickOutput out = last_;
  out.t = in.t;
  out.fault = false;
  if (std::isfinite(in.emg_ta) && std::isfinite(in.emg_gas) && std::isfinite(in.theta)) {
    try {
      const ControllerOutput c = controller_.step(in.emg_ta, in.emg_gas, in.theta);
      out.tau_cmd = c.tau;
      out.a_ta = c.front.a_ta;
      out.a_gas = c.front.a_gas;
    } catch (const DegenerateGeometry&) {
      out.fault = true;
    }
  } else {
    out.fault = true;
  }
  const PlantState& p = plant_.step(out.tau_cmd, dt_);
  out.tau_meas = p.tau_meas;
  out.theta_plant = p.theta;
  const auto elapsed = std::chrono::steady_clock::now() - start;
  out.lat_us = std::chrono::duration_cast<std::chrono::microseconds>(elapsed).count();

  ++ticks_;
  if (out.fault) ++faults_;
  if (out.lat_us >= period_us_) ++misses_;
  latency_.add(out.lat_us);
  last_ = out;
  return out;
}

SessionStats ControlSession::stats() const {
  SessionStats s;
  s.ticks = ticks_;
  s.deadline_misses = misses_;
  s.faults = faults_;
  s.p50_us = latency_.percentile(0.5);
  s.p99_us = latency_.percentile(0.99);
  s.max_us = latency_.max();
  s.histogram = latency_.nonzero();
  return s;
}

void ControlSession::reset() {
  controller_.reset();
  plant_.reset();
  last_ = TickOutput{};
  last_.theta_plant = plant_.state().theta;
  ticks_ = misses_ = faults_ = 0;
  latency_.reset();
}

namespace protocol {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

json parse_object(std::string_view line) {
  json j = json::parse(line.begin(), line.end(), nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw InvalidInput("line is not a JSON object");
  return j;
}

double field(const json& j, const char* key) {
  const auto it = j.find(key);
  if (it == j.end()) throw InvalidInput(fmt::format("missing field '{}'", key));
  if (it->is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!it->is_number()) throw InvalidInput(fmt::format("field '{}' is not a number", key));
  return it->get<double>();
}

std::string num(double v) {
  if (!std::isfinite(v)) return "null";
  return fmt::format("{:.17g}", v);
}

}  // namespace

Hello parse_hello(std::string_view line) {
  line = trim(line);
  std::vector<std::string_view> words;
  while (!line.empty()) {
    const auto sp = line.find(' ');
    words.push_back(line.substr(0, sp));
    if (sp == std::string_view::npos) break;
    line = trim(line.substr(sp + 1));
  }
  if (words.size() != 3 || words[0] != "HELLO" || !words[2].starts_with("rate=")) {
    throw InvalidInput("expected 'HELLO <version> rate=<Hz>'");
  }
  Hello h;
  h.version = std::string(words[1]);
  const std::string_view r = words[2].substr(5);
  const auto [ptr, ec] = std::from_chars(r.data(), r.data() + r.size(), h.rate_hz);
  if (ec != std::errc() || ptr != r.data() + r.size() || !(h.rate_hz > 0.0)) {
    throw InvalidInput(fmt::format("bad rate '{}'", r));
  }
  return h;
}

std::string format_hello(double rate_hz) { return fmt::format("HELLO {} rate={}", kVersion, rate_hz); }

std::string format_ok(const std::string& model_hash) { return fmt::format("OK {} model={}", kVersion, model_hash); }

std::string format_error(std::string_view code, std::string_view msg) {
  return json{{"error", code}, {"msg", msg}}.dump();
}

TickInput parse_tick(std::string_view line) {
  const json j = parse_object(line);
  for (const auto& [key, _] : j.items()) {
    if (key != "t" && key != "emg_ta" && key != "emg_gas" && key != "theta") {
      throw InvalidInput(fmt::format("unknown field '{}'", key));
    }
  }
  TickInput in;
  in.t = field(j, "t");
  in.emg_ta = field(j, "emg_ta");
  in.emg_gas = field(j, "emg_gas");
  in.theta = field(j, "theta");
  return in;
}

std::string format_tick(const TickInput& in) {
  return fmt::format(R"({{"t":{},"emg_ta":{},"emg_gas":{},"theta":{}}})", num(in.t), num(in.emg_ta),
                     num(in.emg_gas), num(in.theta));
}

std::string format_tick_response(const TickOutput& o) {
  return fmt::format(R"({{"t":{},"tau_cmd":{},"tau_meas":{},"theta_plant":{},"a_ta":{},"a_gas":{},"lat_us":{}}})",
                     num(o.t), num(o.tau_cmd), num(o.tau_meas), num(o.theta_plant), num(o.a_ta), num(o.a_gas),
                     o.lat_us);
}

TickOutput parse_tick_response(std::string_view line) {
  const json j = parse_object(line);
  if (j.contains("error")) {
    throw InvalidInput(fmt::format("server error {}: {}", j.value("error", ""), j.value("msg", "")));
  }
  TickOutput o;
  o.t = field(j, "t");
  o.tau_cmd = field(j, "tau_cmd");
  o.tau_meas = field(j, "tau_meas");
  o.theta_plant = field(j, "theta_plant");
  o.a_ta = field(j, "a_ta");
  o.a_gas = field(j, "a_gas");
  const auto it = j.find("lat_us");
  if (it == j.end() || !it->is_number_integer()) throw InvalidInput("missing integer field 'lat_us'");
  o.lat_us = it->get<std::int64_t>();
  return o;
}

std::string format_stats(const SessionStats& s) {
  json hist = json::array();
  for (const auto& [us, n] : s.histogram) hist.push_back({us, n});
  json j{{"ticks", s.ticks},   {"deadline_misses", s.deadline_misses}, {"faults", s.faults},
         {"p50_us", s.p50_us}, {"p99_us", s.p99_us},                   {"max_us", s.max_us},
         {"histogram", hist}};
  return j.dump();
}

SessionStats parse_stats(std::string_view line) {
  const json j = parse_object(line);
  if (j.contains("error")) throw InvalidInput(fmt::format("server error {}", j.value("error", "")));
  try {
    SessionStats s;
    s.ticks = j.at("ticks").get<std::uint64_t>();
    s.deadline_misses = j.at("deadline_misses").get<std::uint64_t>();
    s.faults = j.at("faults").get<std::uint64_t>();
    s.p50_us = j.at("p50_us").get<std::int64_t>();
    s.p99_us = j.at("p99_us").get<std::int64_t>();
    s.max_us = j.at("max_us").get<std::int64_t>();
    for (const auto& b : j.at("histogram")) s.histogram.emplace_back(b.at(0).get<std::int64_t>(), b.at(1).get<std::uint64_t>());
    return s;
  } catch (const json::exception& e) {
    throw InvalidInput(fmt::format("malformed stats line: {}", e.what()));
  }
}

}  // namespace protocol

namespace {

// Bounded SPSC queue. Blocking waits use atomic wait/notify on sequence
// counters so neither side spins.
template <class T>
class Channel {
 public:
  explicit Channel(std::size_t capacity) : queue_(capacity) {}

  bool push(const T& v) {
    while (true) {
      if (closed_.load(std::memory_order_acquire)) return false;
      if (queue_.push(v)) {
        pushed_.fetch_add(1, std::memory_order_release);
        pushed_.notify_one();
        return true;
      }
      const auto seen = popped_.load(std::memory_order_acquire);
      if (queue_.write_available() > 0 || closed_.load(std::memory_order_acquire)) continue;
      popped_.wait(seen, std::memory_order_acquire);
    }
  }

  // False once the channel is closed and drained.
  bool pop(T& out) {
    while (true) {
      if (queue_.pop(out)) {
        popped_.fetch_add(1, std::memory_order_release);
        popped_.notify_one();
        return true;
      }
      const auto seen = pushed_.load(std::memory_order_acquire);
      if (queue_.read_available() > 0) continue;
      if (closed_.load(std::memory_order_acquire)) return false;
      pushed_.wait(seen, std::memory_order_acquire);
    }
  }

  void close() {
    closed_.store(true, std::memory_order_release);
    pushed_.fetch_add(1, std::memory_order_release);
    pushed_.notify_all();
    popped_.fetch_add(1, std::memory_order_release);
    popped_.notify_all();
  }

 private:
  boost::lockfree::spsc_queue<T> queue_;
  std::atomic<std::uint64_t> pushed_{0}, popped_{0};
  std::atomic<bool> closed_{false};
};

std::string_view trim_line(std::string_view s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.remove_suffix(1);
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  return s;
}

bool send_all(int fd, std::string_view data) {
  while (!data.empty()) {
    const ssize_t n = ::send(fd, data.data(), data.size(), MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    data.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void set_nodelay(int fd) {
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
}

}  // namespace

struct Server::Connection {
  Connection(int fd, std::shared_ptr<const ModelConfig> config, const ServiceConfig& service, std::string hash)
      : fd_(fd), config_(std::move(config)), service_(service), hash_(std::move(hash)),
        in_(service.queue_capacity), out_(service.queue_capacity) {
    writer_ = std::jthread([this] { write_loop(); });
    compute_ = std::jthread([this] { compute_loop(); });
    reader_ = std::jthread([this] { read_loop(); });
  }

  ~Connection() {
    ::shutdown(fd_, SHUT_RDWR);
    in_.close();
    out_.close();
    reader_.join();
    compute_.join();
    writer_.join();
    ::close(fd_);
  }

  bool finished() const { return done_.load() == 3; }

 private:
  void read_loop() {
    std::string buf;
    char chunk[4096];
    while (true) {
      const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
      if (n < 0 && errno == EINTR) continue;
      if (n <= 0) break;
      buf.append(chunk, static_cast<std::size_t>(n));
      std::size_t start = 0;
      for (std::size_t nl; (nl = buf.find('\n', start)) != std::string::npos; start = nl + 1) {
        if (!in_.push(buf.substr(start, nl - start))) goto out;
      }
      buf.erase(0, start);
    }
  out:
    in_.close();
    done_.fetch_add(1);
  }

  void compute_loop() {
    bool greeted = false;
    std::unique_ptr<ControlSession> session;
    std::string line;
    while (in_.pop(line)) {
      const std::string_view l = trim_line(line);
      if (l.empty()) continue;
      if (!greeted) {
        try {
          const protocol::Hello h = protocol::parse_hello(l);
          if (h.version != protocol::kVersion) {
            out_.push(protocol::format_error("version", fmt::format("unsupported protocol version '{}'", h.version)));
            break;
          }
          if (h.rate_hz != service_.rate_hz) {
            out_.push(protocol::format_error(
                "rate", fmt::format("client rate {} Hz does not match control rate {} Hz", h.rate_hz, service_.rate_hz)));
            break;
          }
        } catch (const InvalidInput& e) {
          out_.push(protocol::format_error("handshake", e.what()));
          break;
        }
        session = std::make_unique<ControlSession>(*config_, service_);
        greeted = true;
        out_.push(protocol::format_ok(hash_));
        continue;
      }
      if (l == "STATS") {
        out_.push(protocol::format_stats(session->stats()));
        continue;
      }
      try {
        out_.push(protocol::format_tick_response(session->tick(protocol::parse_tick(l))));
      } catch (const InvalidInput& e) {
        out_.push(protocol::format_error("bad_request", e.what()));
      }
    }
    if (session) {
      const SessionStats s = session->stats();
      spdlog::info("session closed: {} ticks, {} deadline misses, {} faults, p50 {} us, p99 {} us", s.ticks,
                   s.deadline_misses, s.faults, s.p50_us, s.p99_us);
    }
    in_.close();
    out_.close();
    done_.fetch_add(1);
  }

  void write_loop() {
    std::string line;
    bool ok = true;
    while (out_.pop(line)) {
      line += '\n';
      if (ok) ok = send_all(fd_, line);
    }
    ::shutdown(fd_, SHUT_RDWR);
    done_.fetch_add(1);
  }

  int fd_;
  std::shared_ptr<const ModelConfig> config_;
  ServiceConfig service_;
  std::string hash_;
  Channel<std::string> in_, out_;
  std::atomic<int> done_{0};
  std::jthread writer_, compute_, reader_;
};

Server::Server(ModelConfig config, ServiceConfig service)
    : config_(std::make_shared<const ModelConfig>(std::move(config))), service_(std::move(service)) {
  config_->validate();
  service_.validate();
  hash_ = ankle_msk::model_hash(*config_);
}

Server::~Server() { stop(); }

void Server::start() {
  if (listen_fd_ >= 0) return;
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd < 0) throw Error(fmt::format("socket: {}", std::strerror(errno)));
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(service_.port);
  if (::inet_pton(AF_INET, service_.address.c_str(), &addr.sin_addr) != 1) {
    ::close(fd);
    throw InvalidInput(fmt::format("bad IPv4 address '{}'", service_.address));
  }
  if (::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0 || ::listen(fd, 16) < 0) {
    const std::string err = std::strerror(errno);
    ::close(fd);
    throw Error(fmt::format("cannot listen on {}:{}: {}", service_.address, service_.port, err));
  }
  socklen_t len = sizeof addr;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  listen_fd_ = fd;
  spdlog::info("listening on {}:{} at {} Hz, model {}", service_.address, port_, service_.rate_hz, hash_);
  acceptor_ = std::jthread([this](std::stop_token st) { accept_loop(st); });
}

void Server::stop() {
  if (acceptor_.joinable()) {
    acceptor_.request_stop();
    acceptor_.join();
  }
  reap(true);
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

void Server::accept_loop(std::stop_token stop) {
  while (!stop.stop_requested()) {
    pollfd p{listen_fd_, POLLIN, 0};
    const int r = ::poll(&p, 1, 50);
    reap(false);
    if (r <= 0 || !(p.revents & POLLIN)) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    set_nodelay(fd);
    std::lock_guard lock(mutex_);
    connections_.push_back(std::make_unique<Connection>(fd, config_, service_, hash_));
  }
}

void Server::reap(bool all) {
  std::list<std::unique_ptr<Connection>> dead;
  {
    std::lock_guard lock(mutex_);
    for (auto it = connections_.begin(); it != connections_.end();) {
      if (all || (*it)->finished()) {
        dead.push_back(std::move(*it));
        it = connections_.erase(it);
      } else {
        ++it;
      }
    }
  }
  dead.clear();
}

Client::Client(const std::string& host, std::uint16_t port) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw Error(fmt::format("socket: {}", std::strerror(errno)));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, host.c_str(), &addr.sin_addr) != 1) {
    close();
    throw InvalidInput(fmt::format("bad IPv4 address '{}'", host));
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) < 0) {
    const std::string err = std::strerror(errno);
    close();
    throw Error(fmt::format("cannot connect to {}:{}: {}", host, port, err));
  }
  set_nodelay(fd_);
}

Client::~Client() { close(); }

void Client::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

void Client::send_line(const std::string& line) {
  if (fd_ < 0 || !send_all(fd_, line + "\n")) throw Error("connection closed while sending");
}

std::string Client::read_line() {
  while (true) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string line = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return line;
    }
    if (fd_ < 0) return {};
    char chunk[4096];
    const ssize_t n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return {};
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string Client::request(const std::string& line) {
  send_line(line);
  std::string reply = read_line();
  if (reply.empty()) throw Error("connection closed by server");
  return reply;
}

std::string Client::handshake(double rate_hz) {
  const std::string reply = request(protocol::format_hello(rate_hz));
  const std::string prefix = fmt::format("OK {} model=", protocol::kVersion);
  if (!reply.starts_with(prefix)) throw InvalidInput(fmt::format("handshake rejected: {}", reply));
  return reply.substr(prefix.size());
}

TickOutput Client::tick(const TickInput& in) { return protocol::parse_tick_response(request(protocol::format_tick(in))); }

SessionStats Client::stats() { return protocol::parse_stats(request("STATS")); }

}  // namespace ankle_msk
