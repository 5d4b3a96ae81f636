#pragma once

#include "annot/recording_io.hpp"
#include "annot/rsvp.hpp"
#include "annot/sim.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace annot::bridge {

enum class MarkerKind { Onset, FixationStart, CountSubmitted };

std::string kind_name(MarkerKind kind);
std::optional<MarkerKind> parse_kind(const std::string& name);

struct MarkerEvent {
  std::size_t stimulus_index{0};
  std::int64_t client_monotonic_ns{0};
  MarkerKind kind{MarkerKind::Onset};

  bool operator==(const MarkerEvent&) const = default;
};

// One ping exchange: t0 client send, t1 server receive, t2 server send,
// t3 client receive.
struct ClockSample {
  std::int64_t client_send_ns{0};
  std::int64_t server_recv_ns{0};
  std::int64_t server_send_ns{0};
  std::int64_t client_recv_ns{0};
};

// server_time - client_time: median over samples of (t1 - t0) - rtt/2 with
// rtt = (t3 - t0) - (t2 - t1). Needs at least kMinClockSamples.
inline constexpr std::size_t kMinClockSamples = 3;
std::optional<std::int64_t> estimate_offset(const std::vector<ClockSample>& samples);

struct Session {
  std::string id;
  std::string plan_name;
  std::vector<ClockSample> clock_samples;
  std::optional<std::int64_t> clock_offset_ns;
  std::vector<MarkerEvent> markers;  // append-only
  std::optional<long long> count;
};

// "seq,stimulus_index,client_monotonic_ns,kind".
std::string marker_log_csv(const std::vector<MarkerEvent>& log);
std::vector<MarkerEvent> marker_log_from_csv(const std::string& text);

struct AlignResult {
  std::vector<Marker> markers;          // recording sample indices, sorted by stimulus index
  std::vector<std::size_t> dropped;     // stimulus indices outside the recording
};

// onset_sample = round((client_ns + offset - start_time_ns) * rate / 1e9).
// Only onset events are aligned; labels come from the plan.
AlignResult align_markers(const Session& session, const rsvp::SequencePlan& plan, const io::RecordingHeader& header);

// ---------------------------------------------------------------------------

struct ServerConfig {
  std::string host{"127.0.0.1"};
  int port{0};  // 0 = any free port
  // <image_id>.{png,jpg,jpeg,gif,svg,webp}; empty = placeholder images.
  std::filesystem::path image_root;
  // Server clock; defaults to steady_clock nanoseconds.
  std::function<std::int64_t()> clock;
};

class Server {
public:
  // plans: name -> plan; the first entry is served when no name is given.
  Server(std::map<std::string, rsvp::SequencePlan> plans, ServerConfig cfg);
  ~Server();
  Server(const Server&) = delete;
  Server& operator=(const Server&) = delete;

  // Binds and serves on a background thread. Throws PortUnavailable.
  void start();
  // Blocks serving on the calling thread until stop().
  void listen_blocking();
  void stop();

  int port() const;
  std::string url() const;

  // Snapshot of one session; nullopt if unknown.
  std::optional<Session> session(const std::string& id) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

// Validates image resolution (UnresolvableImages lists missing ids) and
// starts a server for one plan named "default".
std::unique_ptr<Server> serve_session(const rsvp::SequencePlan& plan, const std::filesystem::path& image_root,
                                      ServerConfig cfg = {});

// Throws UnresolvableImages listing every plan image missing under root.
void require_images(const rsvp::SequencePlan& plan, const std::filesystem::path& root);

// Resolves <root>/<id>.<ext>; nullopt if absent.
std::optional<std::filesystem::path> resolve_image(const std::filesystem::path& root, const std::string& image_id);

// Coloured rectangle with the id written on it.
std::string placeholder_svg(const std::string& image_id);

} // namespace annot::bridge
