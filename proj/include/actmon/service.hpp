#pragma once

// Multi-device monitoring service: authenticated ingest with per-device
// sequence numbers, one DevicePipeline per device, append-only per-device
// logs on disk, history/alert queries and an alert feed for subscribers.
//
// Data directory layout (one sub-directory per device):
//   <data_dir>/<device_id>/ingest.jsonl   accepted input records, in order
//   <data_dir>/<device_id>/events.jsonl   pipeline output plus acknowledgments
// On start-up the ingest log is replayed to rebuild pipeline state and the
// events log is loaded as the record of what was emitted.

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/pipeline.hpp"
#include "actmon/trace_io.hpp"

namespace actmon {

struct DeviceEntry {
    std::string token;
    DeviceSettings settings;
};

struct ServiceConfig {
    MonitorConfig monitor;
    std::map<std::string, DeviceEntry> devices;
    bool open_registration = false;  // accept any device id whose token equals the device id
    std::optional<std::filesystem::path> data_dir;
};

inline void to_json(nlohmann::json& j, const ServiceConfig& c) {
    nlohmann::json devices = nlohmann::json::object();
    for (const auto& [id, d] : c.devices) {
        nlohmann::json e = {{"privacy", to_string(d.settings.privacy)}};
        e["owner"] = d.settings.owner ? nlohmann::json(*d.settings.owner) : nlohmann::json(nullptr);
        devices[id] = e;  // tokens are never echoed
    }
    j = {{"monitor", c.monitor}, {"devices", devices}, {"open_registration", c.open_registration}};
}

/// Reads the "service" section of a config document.
inline ServiceConfig service_config_from_json(const nlohmann::json& j) {
    ServiceConfig c;
    try {
        if (j.contains("monitor")) c.monitor = j.at("monitor").get<MonitorConfig>();
        c.open_registration = j.value("open_registration", false);
        if (j.contains("devices")) {
            for (const auto& [id, d] : j.at("devices").items()) {
                DeviceEntry e;
                e.token = d.value("token", "");
                e.settings.privacy = parse_privacy(d.value("privacy", "full"));
                if (d.contains("owner") && d.at("owner").is_string()) e.settings.owner = d.at("owner").get<std::string>();
                c.devices[id] = e;
            }
        }
        if (j.contains("data_dir") && j.at("data_dir").is_string()) c.data_dir = j.at("data_dir").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("service config: ") + e.what());
    }
    c.monitor.validate();
    return c;
}

struct IngestAck {
    std::size_t accepted = 0;
    std::size_t duplicates = 0;
    std::size_t rejected = 0;
    std::vector<std::string> errors;
};

inline nlohmann::json to_json(const IngestAck& a) {
    return {{"accepted", a.accepted}, {"duplicates", a.duplicates}, {"rejected", a.rejected}, {"errors", a.errors}};
}

struct HistoryQuery {
    std::optional<std::string> device;
    std::optional<double> from;  // inclusive
    std::optional<double> to;    // exclusive
    std::optional<ActivityClass> cls;
};

struct AlertQuery {
    std::optional<std::string> device;
    std::optional<double> from;
    std::optional<double> to;
    std::optional<AlertKind> kind;
    bool unacknowledged_only = false;
};

/// Device ids become directory names.
inline void check_device_id(const std::string& id) {
    if (id.empty() || id.size() > 128 || id == "." || id == "..")
        throw Error(ErrorKind::Parameter, "invalid device id");
    for (char c : id)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            throw Error(ErrorKind::Parameter, "device id may only contain letters, digits, '-', '_' and '.'");
}

enum class RecordKind { Header, Sample, Audio };

/// Classifies a wire record; throws a parse error if it is malformed.
inline RecordKind wire_kind(const nlohmann::json& r) {
    if (!r.is_object()) throw Error(ErrorKind::Parse, "record is not an object");
    if (!r.contains("device_id") || !r.at("device_id").is_string()) throw Error(ErrorKind::Parse, "record lacks device_id");
    if (r.contains("t")) {
        sample_from_json(r);
        return RecordKind::Sample;
    }
    if (r.contains("t_start")) {
        audio_from_json(r);
        return RecordKind::Audio;
    }
    if (r.contains("rate_hz") && r.contains("unit")) {
        AccelStream tmp;
        header_from_json(r, tmp);
        return RecordKind::Header;
    }
    throw Error(ErrorKind::Parse, "record is neither header, sample nor audio frame");
}

inline std::uint64_t wire_seq(const nlohmann::json& r) {
    if (!r.contains("seq") || !r.at("seq").is_number_unsigned()) throw Error(ErrorKind::Parse, "record lacks seq");
    return r.at("seq").get<std::uint64_t>();
}

class MonitorService {
public:
    explicit MonitorService(ServiceConfig cfg, std::shared_ptr<const ModelSet> models = nullptr)
        : cfg_(std::move(cfg)), models_(models ? std::move(models) : std::make_shared<ModelSet>()) {
        cfg_.monitor.validate();
        if (cfg_.data_dir) recover();
    }

    MonitorService(const MonitorService&) = delete;
    MonitorService& operator=(const MonitorService&) = delete;

    // -- ingest -----------------------------------------------------------

    /// Records carry device_id and seq; a batch is checked as a whole before
    /// anything is applied, so a malformed batch leaves every session as it was.
    IngestAck ingest(const std::string& token, const std::vector<nlohmann::json>& records) {
        std::map<std::string, std::vector<std::pair<std::uint64_t, const nlohmann::json*>>> by_device;
        for (const auto& r : records) {
            wire_kind(r);
            const auto seq = wire_seq(r);
            by_device[r.at("device_id").get<std::string>()].push_back({seq, &r});
        }
        for (const auto& [id, _] : by_device) authorize(token, id);
        IngestAck ack;
        for (auto& [id, recs] : by_device) {
            std::stable_sort(recs.begin(), recs.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
            auto& s = session(id);
            std::lock_guard lock(s.mu);
            for (const auto& [seq, r] : recs) apply(s, seq, *r, ack, true);
        }
        return ack;
    }

    /// Newline-delimited records as sent over the wire.
    IngestAck ingest_ndjson(const std::string& token, const std::string& body) {
        return ingest(token, parse_lines(body));
    }

    /// A whole trace (header line, then samples and audio frames). Sequence
    /// numbers are assigned here; anything at or before what the session has
    /// already seen counts as a duplicate, so re-sending a snapshot is a no-op.
    IngestAck ingest_snapshot(const std::string& token, const std::string& device_id, const std::string& body) {
        auto lines = parse_lines(body);
        if (lines.empty()) throw Error(ErrorKind::Parse, "empty snapshot");
        for (auto& r : lines) {
            if (!r.is_object()) throw Error(ErrorKind::Parse, "record is not an object");
            if (r.contains("device_id") && r.at("device_id") != device_id && !r.contains("rate_hz"))
                throw Error(ErrorKind::Parse, "snapshot record for another device");
            r["device_id"] = device_id;
            wire_kind(r);
        }
        if (wire_kind(lines.front()) != RecordKind::Header) throw Error(ErrorKind::Parse, "snapshot must start with a header");
        authorize(token, device_id);
        auto& s = session(device_id);
        std::lock_guard lock(s.mu);
        IngestAck ack;
        for (auto& r : lines) {
            const auto kind = wire_kind(r);
            const bool seen = (kind == RecordKind::Header && s.pipeline && s.pipeline->rate_hz() == r.at("rate_hz") &&
                               to_string(s.pipeline->unit()) == r.at("unit")) ||
                              (kind == RecordKind::Sample && s.pipeline && s.pipeline->last_t() &&
                               r.at("t").get<double>() <= *s.pipeline->last_t()) ||
                              (kind == RecordKind::Audio && s.last_audio_start &&
                               r.at("t_start").get<double>() <= *s.last_audio_start);
            if (seen) {
                ++ack.duplicates;
                continue;
            }
            apply(s, s.last_seq + 1, r, ack, true);
        }
        return ack;
    }

    // -- queries ----------------------------------------------------------

    std::vector<std::string> device_ids() const {
        std::shared_lock lock(map_mu_);
        std::vector<std::string> out;
        for (const auto& [id, _] : sessions_) out.push_back(id);
        return out;
    }

    nlohmann::json status(const std::string& id) const {
        const auto& s = existing(id);
        std::lock_guard lock(s.mu);
        nlohmann::json j = s.pipeline ? s.pipeline->status() : nlohmann::json{{"device_id", id}};
        j["last_seq"] = s.last_seq;
        std::size_t open = 0;
        for (const auto& r : s.log)
            if (r.at("type") == "alert" && !s.acks.contains(r.at("alert_id").get<std::string>())) ++open;
        j["unacknowledged_alerts"] = open;
        return j;
    }

    nlohmann::json statuses() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& id : device_ids()) out.push_back(status(id));
        return out;
    }

    /// History records, time ordered (device id breaks ties).
    std::vector<nlohmann::json> history(const HistoryQuery& q) const {
        std::vector<nlohmann::json> out;
        for (const auto& id : selected(q.device)) {
            const auto& s = existing(id);
            std::lock_guard lock(s.mu);
            for (const auto& r : s.log) {
                if (r.at("type") != "history" || !in_range(r.at("t").get<double>(), q.from, q.to)) continue;
                if (q.cls) {
                    auto c = r.find("class");
                    if (c == r.end() || !c->is_string() || *c != to_string(*q.cls)) continue;
                }
                out.push_back(r);
            }
        }
        sort_by_time(out);
        return out;
    }

    /// Alerts with their acknowledgment state folded in.
    std::vector<nlohmann::json> alerts(const AlertQuery& q) const {
        std::vector<nlohmann::json> out;
        for (const auto& id : selected(q.device)) {
            const auto& s = existing(id);
            std::lock_guard lock(s.mu);
            for (const auto& r : s.log) {
                if (r.at("type") != "alert" || !in_range(r.at("t").get<double>(), q.from, q.to)) continue;
                if (q.kind && r.at("kind") != to_string(*q.kind)) continue;
                auto a = with_ack(s, r);
                if (q.unacknowledged_only && a.at("acknowledged").get<bool>()) continue;
                out.push_back(std::move(a));
            }
        }
        sort_by_time(out);
        return out;
    }

    /// The device's event log as stored: one JSON document per line.
    std::string log_text(const std::string& id, bool include_acks = true) const {
        const auto& s = existing(id);
        std::lock_guard lock(s.mu);
        std::string out;
        for (const auto& r : s.log) {
            if (!include_acks && r.at("type") == "ack") continue;
            out += r.dump();
            out += '\n';
        }
        return out;
    }

    /// Appends an acknowledgment; the alert itself is never modified.
    nlohmann::json acknowledge(const std::string& alert_id, const std::string& note) {
        const auto colon = alert_id.rfind(':');
        if (colon == std::string::npos) throw Error(ErrorKind::NotFound, "no alert " + alert_id);
        auto& s = existing_mut(alert_id.substr(0, colon));
        std::lock_guard lock(s.mu);
        const nlohmann::json* found = nullptr;
        for (const auto& r : s.log)
            if (r.at("type") == "alert" && r.at("alert_id") == alert_id) found = &r;
        if (!found) throw Error(ErrorKind::NotFound, "no alert " + alert_id);
        nlohmann::json ack = {{"type", "ack"}, {"device_id", s.id}, {"alert_id", alert_id}, {"note", note},
                              {"ack_seq", s.acks_total++}};
        s.acks[alert_id] = note;
        append_events(s, {ack});
        const nlohmann::json result = with_ack(s, *found);
        publish({result});
        return result;
    }

    /// Alert feed: entries with index >= `after`, waiting up to `timeout`
    /// for at least one. Acknowledgments are re-published as updated entries.
    std::pair<std::vector<nlohmann::json>, std::size_t> wait_alerts(std::size_t after,
                                                                    std::chrono::milliseconds timeout) const {
        std::unique_lock lock(feed_mu_);
        feed_cv_.wait_for(lock, timeout, [&] { return feed_.size() > after || stopping_; });
        std::vector<nlohmann::json> out;
        for (std::size_t i = after; i < feed_.size(); ++i) out.push_back(feed_[i]);
        return {out, feed_.size()};
    }

    void stop_waiters() {
        {
            std::lock_guard lock(feed_mu_);
            stopping_ = true;
        }
        feed_cv_.notify_all();
    }

    // -- configuration ----------------------------------------------------

    nlohmann::json config() const {
        std::shared_lock lock(cfg_mu_);
        return cfg_;
    }

    /// Replaces the monitor thresholds and per-device settings used for
    /// sessions created from now on. Tokens are kept unless given.
    nlohmann::json update_config(const nlohmann::json& j) {
        std::unique_lock lock(cfg_mu_);
        ServiceConfig next = cfg_;
        try {
            if (j.contains("monitor")) {
                nlohmann::json merged = cfg_.monitor;
                merged.merge_patch(j.at("monitor"));
                next.monitor = merged.get<MonitorConfig>();
            }
            if (j.contains("devices")) {
                for (const auto& [id, d] : j.at("devices").items()) {
                    check_device_id(id);
                    auto& e = next.devices[id];
                    if (d.contains("token")) e.token = d.at("token").get<std::string>();
                    if (d.contains("privacy")) e.settings.privacy = parse_privacy(d.at("privacy").get<std::string>());
                    if (d.contains("owner"))
                        e.settings.owner = d.at("owner").is_string() ? std::optional(d.at("owner").get<std::string>())
                                                                     : std::nullopt;
                }
            }
        } catch (const nlohmann::json::exception& e) {
            throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
        }
        next.monitor.validate();
        cfg_ = next;
        return cfg_;
    }

private:
    struct Session {
        std::string id;
        mutable std::mutex mu;
        std::optional<DevicePipeline> pipeline;
        std::uint64_t last_seq = 0;
        std::optional<double> last_audio_start;
        std::vector<nlohmann::json> log;
        std::map<std::string, std::string> acks;
        std::size_t acks_total = 0;
        std::optional<std::ofstream> ingest_out;
        std::optional<std::ofstream> events_out;
    };

    static std::vector<nlohmann::json> parse_lines(const std::string& body) {
        std::vector<nlohmann::json> out;
        std::istringstream in(body);
        std::string line;
        std::size_t n = 0;
        while (std::getline(in, line)) {
            ++n;
            if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
            out.push_back(parse_json_line(line, n));
        }
        return out;
    }

    static bool in_range(double t, std::optional<double> from, std::optional<double> to) {
        return (!from || t >= *from) && (!to || t < *to);
    }

    static void sort_by_time(std::vector<nlohmann::json>& v) {
        std::stable_sort(v.begin(), v.end(), [](const nlohmann::json& a, const nlohmann::json& b) {
            const double ta = a.at("t").get<double>(), tb = b.at("t").get<double>();
            if (ta != tb) return ta < tb;
            return a.at("device_id").get<std::string>() < b.at("device_id").get<std::string>();
        });
    }

    static nlohmann::json with_ack(const Session& s, const nlohmann::json& alert) {
        nlohmann::json a = alert;
        const auto it = s.acks.find(alert.at("alert_id").get<std::string>());
        a["acknowledged"] = it != s.acks.end();
        a["note"] = it != s.acks.end() ? nlohmann::json(it->second) : nlohmann::json(nullptr);
        return a;
    }

    void authorize(const std::string& token, const std::string& id) const {
        check_device_id(id);
        std::shared_lock lock(cfg_mu_);
        const auto it = cfg_.devices.find(id);
        // an entry without a token only carries settings
        if (it != cfg_.devices.end() && !it->second.token.empty()) {
            if (token != it->second.token)
                throw Error(ErrorKind::Auth, "bad token for device " + id);
            return;
        }
        if (cfg_.open_registration && token == id) return;
        throw Error(ErrorKind::Auth, "unknown device " + id);
    }

    std::vector<std::string> selected(const std::optional<std::string>& device) const {
        if (!device) return device_ids();
        existing(*device);
        return {*device};
    }

    const Session& existing(const std::string& id) const {
        std::shared_lock lock(map_mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "unknown device " + id);
        return *it->second;
    }

    Session& existing_mut(const std::string& id) {
        std::shared_lock lock(map_mu_);
        const auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "unknown device " + id);
        return *it->second;
    }

    Session& session(const std::string& id) {
        {
            std::shared_lock lock(map_mu_);
            const auto it = sessions_.find(id);
            if (it != sessions_.end()) return *it->second;
        }
        std::unique_lock lock(map_mu_);
        auto& slot = sessions_[id];
        if (!slot) {
            slot = std::make_unique<Session>();
            slot->id = id;
            open_files(*slot);
        }
        return *slot;
    }

    void open_files(Session& s) {
        if (!cfg_.data_dir) return;
        const auto dir = *cfg_.data_dir / s.id;
        std::filesystem::create_directories(dir);
        s.ingest_out.emplace(dir / "ingest.jsonl", std::ios::app);
        s.events_out.emplace(dir / "events.jsonl", std::ios::app);
        if (!*s.ingest_out || !*s.events_out) throw Error(ErrorKind::Io, "cannot open logs in " + dir.string());
    }

    DeviceSettings settings_for(const std::string& id) const {
        std::shared_lock lock(cfg_mu_);
        const auto it = cfg_.devices.find(id);
        return it == cfg_.devices.end() ? DeviceSettings{} : it->second.settings;
    }

    MonitorConfig monitor_config() const {
        std::shared_lock lock(cfg_mu_);
        return cfg_.monitor;
    }

    /// Applies one record to a locked session. `persist` is false while
    /// replaying the ingest log at start-up.
    void apply(Session& s, std::uint64_t seq, const nlohmann::json& r, IngestAck& ack, bool persist) {
        if (seq <= s.last_seq) {
            ++ack.duplicates;
            return;
        }
        RecordList out;
        try {
            switch (wire_kind(r)) {
            case RecordKind::Header: {
                AccelStream h;
                header_from_json(r, h);
                if (s.pipeline) {
                    if (s.pipeline->rate_hz() != h.rate_hz || s.pipeline->unit() != h.unit)
                        throw Error(ErrorKind::Stream, "header conflicts with the open session");
                } else {
                    s.pipeline.emplace(s.id, h.rate_hz, h.unit, monitor_config(), models_, settings_for(s.id));
                }
                break;
            }
            case RecordKind::Sample:
                if (!s.pipeline) throw Error(ErrorKind::Stream, "sample before header");
                out = s.pipeline->push(sample_from_json(r));
                break;
            case RecordKind::Audio: {
                if (!s.pipeline) throw Error(ErrorKind::Stream, "audio before header");
                auto f = audio_from_json(r);
                if (s.last_audio_start && f.t_start <= *s.last_audio_start)
                    throw Error(ErrorKind::Stream, "audio frame out of order");
                out = s.pipeline->push_audio(f);
                s.last_audio_start = f.t_start;
                break;
            }
            }
        } catch (const Error& e) {
            ++ack.rejected;
            ack.errors.push_back("seq " + std::to_string(seq) + ": " + e.what());
            return;
        }
        s.last_seq = seq;
        ++ack.accepted;
        if (!persist) return;
        if (s.ingest_out) {
            nlohmann::json stored = r;
            stored["seq"] = seq;
            *s.ingest_out << stored.dump() << '\n';
            s.ingest_out->flush();
        }
        append_events(s, out);
        std::vector<nlohmann::json> fresh;
        for (const auto& x : out)
            if (x.at("type") == "alert") fresh.push_back(with_ack(s, x));
        if (!fresh.empty()) publish(fresh);
    }

    void append_events(Session& s, const RecordList& recs) {
        for (const auto& x : recs) {
            if (s.events_out) *s.events_out << x.dump() << '\n';
            s.log.push_back(x);
        }
        if (s.events_out && !recs.empty()) s.events_out->flush();
    }

    void publish(const std::vector<nlohmann::json>& alerts) {
        {
            std::lock_guard lock(feed_mu_);
            for (const auto& a : alerts) feed_.push_back(a);
        }
        feed_cv_.notify_all();
    }

    void recover() {
        namespace fs = std::filesystem;
        fs::create_directories(*cfg_.data_dir);
        std::vector<fs::path> dirs;
        for (const auto& d : fs::directory_iterator(*cfg_.data_dir))
            if (d.is_directory()) dirs.push_back(d.path());
        std::sort(dirs.begin(), dirs.end());
        for (const auto& dir : dirs) {
            const std::string id = dir.filename().string();
            check_device_id(id);
            auto s = std::make_unique<Session>();
            s->id = id;
            IngestAck ignored;
            if (std::ifstream in(dir / "ingest.jsonl"); in) {
                std::string line;
                std::size_t n = 0;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    const auto r = parse_json_line(line, ++n);
                    apply(*s, wire_seq(r), r, ignored, false);
                }
            }
            if (std::ifstream in(dir / "events.jsonl"); in) {
                std::string line;
                std::size_t n = 0;
                while (std::getline(in, line)) {
                    if (line.empty()) continue;
                    auto r = parse_json_line(line, ++n);
                    if (r.at("type") == "ack") {
                        s->acks[r.at("alert_id").get<std::string>()] = r.at("note").get<std::string>();
                        ++s->acks_total;
                    }
                    s->log.push_back(std::move(r));
                }
            }
            for (const auto& r : s->log)
                if (r.at("type") == "alert") feed_.push_back(with_ack(*s, r));
            open_files(*s);
            sessions_[id] = std::move(s);
        }
    }

    ServiceConfig cfg_;
    mutable std::shared_mutex cfg_mu_;
    std::shared_ptr<const ModelSet> models_;
    mutable std::shared_mutex map_mu_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    mutable std::mutex feed_mu_;
    mutable std::condition_variable feed_cv_;
    std::vector<nlohmann::json> feed_;
    bool stopping_ = false;
};

}  // namespace actmon
