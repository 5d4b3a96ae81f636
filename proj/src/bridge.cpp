#include "annot/bridge.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"

#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>
#include <thread>

namespace annot::bridge {

using nlohmann::json;

std::string kind_name(MarkerKind kind) {
  switch (kind) {
    case MarkerKind::Onset: return "onset";
    case MarkerKind::FixationStart: return "fixation_start";
    case MarkerKind::CountSubmitted: return "count_submitted";
  }
  return "?";
}

std::optional<MarkerKind> parse_kind(const std::string& name) {
  for (auto k : {MarkerKind::Onset, MarkerKind::FixationStart, MarkerKind::CountSubmitted})
    if (kind_name(k) == name) return k;
  return std::nullopt;
}

std::optional<std::int64_t> estimate_offset(const std::vector<ClockSample>& samples) {
  if (samples.size() < kMinClockSamples) return std::nullopt;
  std::vector<std::int64_t> est;
  for (const auto& s : samples) {
    const std::int64_t rtt = (s.client_recv_ns - s.client_send_ns) - (s.server_send_ns - s.server_recv_ns);
    est.push_back((s.server_recv_ns - s.client_send_ns) - rtt / 2);
  }
  std::sort(est.begin(), est.end());
  const std::size_t mid = est.size() / 2;
  if (est.size() % 2 == 1) return est[mid];
  return est[mid - 1] + (est[mid] - est[mid - 1]) / 2;
}

std::string marker_log_csv(const std::vector<MarkerEvent>& log) {
  std::string out = "seq,stimulus_index,client_monotonic_ns,kind\n";
  for (std::size_t i = 0; i < log.size(); ++i)
    out += std::to_string(i) + "," + std::to_string(log[i].stimulus_index) + "," +
           std::to_string(log[i].client_monotonic_ns) + "," + kind_name(log[i].kind) + "\n";
  return out;
}

std::vector<MarkerEvent> marker_log_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "seq,stimulus_index,client_monotonic_ns,kind")
    throw Error(Errc::MalformedFile, "marker log: unexpected header");
  std::vector<MarkerEvent> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string seq, idx, ns, kind;
    std::getline(ls, seq, ',');
    std::getline(ls, idx, ',');
    std::getline(ls, ns, ',');
    std::getline(ls, kind);
    auto k = parse_kind(kind);
    if (!k) throw Error(Errc::MalformedFile, "marker log: unknown kind '" + kind + "'");
    try {
      out.push_back({std::stoul(idx), std::stoll(ns), *k});
    } catch (const std::exception&) {
      throw Error(Errc::MalformedFile, "marker log: bad row '" + line + "'");
    }
  }
  return out;
}

AlignResult align_markers(const Session& session, const rsvp::SequencePlan& plan, const io::RecordingHeader& header) {
  if (!session.clock_offset_ns)
    throw Error(Errc::NoClockOffset, "session " + session.id + " has no clock offset estimate");
  AlignResult out;
  std::set<std::size_t> seen;
  for (const auto& ev : session.markers) {
    if (ev.kind != MarkerKind::Onset || !seen.insert(ev.stimulus_index).second) continue;
    if (ev.stimulus_index >= plan.stimuli.size()) {
      out.dropped.push_back(ev.stimulus_index);
      continue;
    }
    const std::int64_t delta = ev.client_monotonic_ns + *session.clock_offset_ns - header.start_time_ns;
    const long double pos = static_cast<long double>(delta) * header.rate_hz_sampling / 1e9L;
    const long long sample = std::llround(pos);
    if (sample < 0 || static_cast<std::size_t>(sample) >= header.n_samples) {
      out.dropped.push_back(ev.stimulus_index);
      continue;
    }
    out.markers.push_back({static_cast<std::size_t>(sample), ev.stimulus_index, plan.stimuli[ev.stimulus_index].is_target});
  }
  std::sort(out.markers.begin(), out.markers.end(),
            [](const Marker& a, const Marker& b) { return a.stimulus_index < b.stimulus_index; });
  std::sort(out.dropped.begin(), out.dropped.end());
  return out;
}

std::optional<std::filesystem::path> resolve_image(const std::filesystem::path& root, const std::string& image_id) {
  // Ids come from plans, but never let one escape the root.
  if (image_id.empty() || image_id.find('/') != std::string::npos || image_id.find('\\') != std::string::npos ||
      image_id == "." || image_id == "..")
    return std::nullopt;
  for (const char* ext : {".png", ".jpg", ".jpeg", ".gif", ".svg", ".webp"}) {
    auto p = root / (image_id + ext);
    if (std::filesystem::is_regular_file(p)) return p;
  }
  return std::nullopt;
}

std::string placeholder_svg(const std::string& image_id) {
  const auto h = sha256_hex(image_id);
  const int hue = static_cast<int>(std::stoul(h.substr(0, 4), nullptr, 16) % 360);
  std::string text;
  for (char c : image_id) {
    if (c == '&') text += "&amp;";
    else if (c == '<') text += "&lt;";
    else if (c == '>') text += "&gt;";
    else text += c;
  }
  return "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"512\" height=\"512\" viewBox=\"0 0 512 512\">"
         "<rect width=\"512\" height=\"512\" fill=\"hsl(" + std::to_string(hue) + ",60%,55%)\"/>"
         "<text x=\"256\" y=\"256\" font-family=\"sans-serif\" font-size=\"32\" text-anchor=\"middle\" "
         "dominant-baseline=\"middle\" fill=\"#111\">" + text + "</text></svg>\n";
}

// ---------------------------------------------------------------------------

namespace {

std::int64_t steady_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

std::string mime_for(const std::filesystem::path& p) {
  const auto ext = p.extension().string();
  if (ext == ".png") return "image/png";
  if (ext == ".jpg" || ext == ".jpeg") return "image/jpeg";
  if (ext == ".gif") return "image/gif";
  if (ext == ".svg") return "image/svg+xml";
  if (ext == ".webp") return "image/webp";
  return "application/octet-stream";
}

struct PendingPing {
  std::string session_id;
  std::int64_t client_send_ns{0};
  std::int64_t server_recv_ns{0};
  std::int64_t server_send_ns{0};
};

void reply(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

} // namespace

struct Server::Impl {
  struct ServedPlan {
    rsvp::SequencePlan plan;
    std::string json_text;
  };

  std::map<std::string, ServedPlan> plans;
  std::string default_plan;
  std::set<std::string> image_ids;
  ServerConfig cfg;
  httplib::Server http;
  std::thread thread;
  int bound_port{0};

  mutable std::mutex mu;
  std::map<std::string, Session> sessions;
  std::map<std::uint64_t, PendingPing> pings;
  std::uint64_t next_session{1};
  std::uint64_t next_exchange{1};

  std::int64_t now() const { return cfg.clock ? cfg.clock() : steady_ns(); }

  // Caller holds mu.
  Session* find_session(const std::string& id) {
    auto it = sessions.find(id);
    return it == sessions.end() ? nullptr : &it->second;
  }

  static std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    try {
      return json::parse(req.body);
    } catch (const json::exception&) {
      reply(res, 400, {{"error", "body is not valid JSON"}});
      return std::nullopt;
    }
  }

  void routes() {
    // httplib's default also sets SO_REUSEPORT, which would let a second
    // server share a port that is already in use.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof(yes));
    });

    http.Get("/session/new", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string name = req.has_param("plan") ? req.get_param_value("plan") : default_plan;
      if (!plans.count(name)) return reply(res, 404, {{"error", "unknown plan"}, {"plan", name}});
      std::lock_guard lock(mu);
      Session s;
      s.id = "s" + std::to_string(next_session++);
      s.plan_name = name;
      const auto id = s.id;
      sessions.emplace(id, std::move(s));
      reply(res, 200, {{"session_id", id}, {"plan", name}, {"server_time_ns", now()}});
    });

    http.Get("/plan", [this](const httplib::Request& req, httplib::Response& res) {
      std::string name = default_plan;
      if (req.has_param("session")) {
        std::lock_guard lock(mu);
        auto* s = find_session(req.get_param_value("session"));
        if (!s) return reply(res, 404, {{"error", "unknown session"}});
        name = s->plan_name;
      } else if (req.has_param("plan")) {
        name = req.get_param_value("plan");
        if (!plans.count(name)) return reply(res, 404, {{"error", "unknown plan"}, {"plan", name}});
      }
      res.set_content(plans.at(name).json_text, "application/json");
    });

    http.Get(R"(/stimuli/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string id = req.matches[1];
      if (!image_ids.count(id)) return reply(res, 404, {{"error", "unknown image"}, {"image_id", id}});
      if (cfg.image_root.empty()) return res.set_content(placeholder_svg(id), "image/svg+xml");
      auto p = resolve_image(cfg.image_root, id);
      if (!p) return reply(res, 404, {{"error", "image file missing"}, {"image_id", id}});
      res.set_content(read_file(*p), mime_for(*p));
    });

    http.Post("/time", [this](const httplib::Request& req, httplib::Response& res) {
      const auto t1 = now();
      auto body = parse_body(req, res);
      if (!body) return;
      std::lock_guard lock(mu);
      const std::string sid = body->value("session_id", "");
      auto* s = find_session(sid);
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      if (body->contains("exchange_id")) {
        // Second leg: the client reports when the reply arrived.
        if (!(*body)["exchange_id"].is_number_unsigned() || !body->contains("client_recv_ns"))
          return reply(res, 400, {{"error", "exchange_id and client_recv_ns required"}});
        auto it = pings.find((*body)["exchange_id"].get<std::uint64_t>());
        if (it == pings.end() || it->second.session_id != sid) return reply(res, 404, {{"error", "unknown exchange"}});
        ClockSample cs{it->second.client_send_ns, it->second.server_recv_ns, it->second.server_send_ns,
                       (*body)["client_recv_ns"].get<std::int64_t>()};
        pings.erase(it);
        s->clock_samples.push_back(cs);
        s->clock_offset_ns = estimate_offset(s->clock_samples);
        json out{{"samples", s->clock_samples.size()}};
        out["clock_offset_ns"] = s->clock_offset_ns ? json(*s->clock_offset_ns) : json(nullptr);
        return reply(res, 200, out);
      }
      if (!body->contains("client_send_ns") || !(*body)["client_send_ns"].is_number_integer())
        return reply(res, 400, {{"error", "client_send_ns required"}});
      const auto id = next_exchange++;
      PendingPing p{sid, (*body)["client_send_ns"].get<std::int64_t>(), t1, 0};
      p.server_send_ns = now();
      pings[id] = p;
      reply(res, 200, {{"exchange_id", id}, {"server_recv_ns", p.server_recv_ns}, {"server_send_ns", p.server_send_ns}});
    });

    http.Post("/markers", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      if (!body->is_object() || !body->contains("events") || !(*body)["events"].is_array())
        return reply(res, 400, {{"error", "expected {session_id, events: [...]}"}});
      std::lock_guard lock(mu);
      auto* s = find_session(body->value("session_id", ""));
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      const auto n_stimuli = plans.at(s->plan_name).plan.stimuli.size();

      // Validate the whole batch before appending anything.
      std::vector<MarkerEvent> batch;
      std::int64_t last = s->markers.empty() ? INT64_MIN : s->markers.back().client_monotonic_ns;
      for (const auto& e : (*body)["events"]) {
        if (!e.is_object() || !e.contains("stimulus_index") || !e["stimulus_index"].is_number_integer() ||
            !e.contains("client_monotonic_ns") || !e["client_monotonic_ns"].is_number_integer())
          return reply(res, 400, {{"error", "event needs integer stimulus_index and client_monotonic_ns"}});
        const auto kind = parse_kind(e.value("kind", "onset"));
        if (!kind) return reply(res, 400, {{"error", "unknown kind"}, {"kind", e.value("kind", "")}});
        const auto raw_index = e["stimulus_index"].get<long long>();
        if (*kind != MarkerKind::CountSubmitted && (raw_index < 0 || static_cast<std::size_t>(raw_index) >= n_stimuli))
          return reply(res, 422, {{"error", "stimulus_index out of range"}, {"stimulus_index", raw_index}});
        if (*kind == MarkerKind::Onset && !s->clock_offset_ns)
          return reply(res, 409, {{"error", "clock offset not established; complete the /time handshake first"}});
        MarkerEvent ev{static_cast<std::size_t>(std::max(0LL, raw_index)), e["client_monotonic_ns"].get<std::int64_t>(),
                       *kind};
        if (ev.client_monotonic_ns < last)
          return reply(res, 422, {{"error", "timestamp decreased"}, {"stimulus_index", raw_index}});
        last = ev.client_monotonic_ns;
        batch.push_back(ev);
      }
      s->markers.insert(s->markers.end(), batch.begin(), batch.end());
      reply(res, 200, {{"accepted", batch.size()}, {"total", s->markers.size()}});
    });

    http.Get("/markers.csv", [this](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mu);
      auto* s = find_session(req.get_param_value("session"));
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      res.set_content(marker_log_csv(s->markers), "text/csv");
    });

    http.Post("/count", [this](const httplib::Request& req, httplib::Response& res) {
      auto body = parse_body(req, res);
      if (!body) return;
      if (!body->contains("value") || !(*body)["value"].is_number_integer())
        return reply(res, 400, {{"error", "integer value required"}});
      std::lock_guard lock(mu);
      auto* s = find_session(body->value("session_id", ""));
      if (!s) return reply(res, 404, {{"error", "unknown session"}});
      // Recorded verbatim; judging the count is not the bridge's job.
      s->count = (*body)["value"].get<long long>();
      reply(res, 200, {{"session_id", s->id}, {"value", *s->count}});
    });
  }

  void bind() {
    if (cfg.port == 0) {
      bound_port = http.bind_to_any_port(cfg.host);
      if (bound_port <= 0) throw Error(Errc::PortUnavailable, "could not bind " + cfg.host);
    } else {
      if (!http.bind_to_port(cfg.host, cfg.port))
        throw Error(Errc::PortUnavailable, "port " + std::to_string(cfg.port) + " on " + cfg.host + " is unavailable");
      bound_port = cfg.port;
    }
  }
};

Server::Server(std::map<std::string, rsvp::SequencePlan> plans, ServerConfig cfg) : impl_(std::make_unique<Impl>()) {
  if (plans.empty()) throw Error(Errc::InvalidPlan, "no plan to serve");
  for (auto& [name, plan] : plans) {
    if (!rsvp::validate_plan(plan).empty()) throw Error(Errc::InvalidPlan, "plan '" + name + "' is invalid");
    for (const auto& s : plan.stimuli) impl_->image_ids.insert(s.image_id);
    impl_->plans[name] = {plan, rsvp::plan_to_json(plan)};
  }
  impl_->default_plan = plans.begin()->first;
  impl_->cfg = std::move(cfg);
  impl_->routes();
}

Server::~Server() { stop(); }

void Server::start() {
  impl_->bind();
  impl_->thread = std::thread([this] { impl_->http.listen_after_bind(); });
  impl_->http.wait_until_ready();
}

void Server::listen_blocking() {
  impl_->bind();
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (!impl_) return;
  impl_->http.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int Server::port() const { return impl_->bound_port; }

std::string Server::url() const { return "http://" + impl_->cfg.host + ":" + std::to_string(impl_->bound_port); }

std::optional<Session> Server::session(const std::string& id) const {
  std::lock_guard lock(impl_->mu);
  auto it = impl_->sessions.find(id);
  if (it == impl_->sessions.end()) return std::nullopt;
  return it->second;
}

void require_images(const rsvp::SequencePlan& plan, const std::filesystem::path& root) {
  std::vector<std::string> missing;
  std::set<std::string> checked;
  for (const auto& s : plan.stimuli)
    if (checked.insert(s.image_id).second && !resolve_image(root, s.image_id)) missing.push_back(s.image_id);
  if (missing.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < missing.size() && i < 20; ++i) list += (i ? "," : "") + missing[i];
  if (missing.size() > 20) list += ",...";
  throw Error(Errc::UnresolvableImages,
              std::to_string(missing.size()) + " images not found under " + root.string() + ": " + list);
}

std::unique_ptr<Server> serve_session(const rsvp::SequencePlan& plan, const std::filesystem::path& image_root,
                                      ServerConfig cfg) {
  if (!image_root.empty()) require_images(plan, image_root);
  cfg.image_root = image_root;
  auto server = std::make_unique<Server>(std::map<std::string, rsvp::SequencePlan>{{"default", plan}}, std::move(cfg));
  server->start();
  return server;
}

} // namespace annot::bridge
