#pragma once

// HTTP transport for MonitorService. Paths and bodies are documented in
// docs/api.md; everything is JSON except the NDJSON ingest bodies, the log
// endpoint (NDJSON) and the alert stream (server-sent events).

#include <chrono>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/service.hpp"

// After Eigen: <resolv.h>, pulled in by httplib, defines a `_res` macro that
// collides with Eigen parameter names.
#include <httplib.h>

namespace actmon::http {

inline int status_for(ErrorKind k) {
    switch (k) {
    case ErrorKind::Auth: return 401;
    case ErrorKind::NotFound: return 404;
    case ErrorKind::Stream: return 409;
    case ErrorKind::Io: return 500;
    default: return 400;
    }
}

inline void send_json(httplib::Response& res, const nlohmann::json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& msg) {
    send_json(res, {{"error", kind}, {"message", msg}}, status);
}

inline std::string bearer_token(const httplib::Request& req) {
    const auto h = req.get_header_value("Authorization");
    constexpr std::string_view prefix = "Bearer ";
    if (h.size() <= prefix.size() || h.compare(0, prefix.size(), prefix) != 0)
        throw Error(ErrorKind::Auth, "missing bearer token");
    return h.substr(prefix.size());
}

inline std::optional<double> number_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    const auto v = req.get_param_value(key);
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size() || !std::isfinite(d)) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw Error(ErrorKind::Parameter, std::string("query parameter '") + key + "' is not a number");
    }
}

inline std::optional<std::string> string_param(const httplib::Request& req, const char* key) {
    if (!req.has_param(key)) return std::nullopt;
    return req.get_param_value(key);
}

inline nlohmann::json as_array(std::vector<nlohmann::json> v) {
    nlohmann::json a = nlohmann::json::array();
    for (auto& x : v) a.push_back(std::move(x));
    return a;
}

struct ApiOptions {
    std::chrono::milliseconds stream_poll{1000};  // SSE keep-alive interval
};

/// Registers every endpoint on `server`. The service must outlive it.
inline void mount_routes(httplib::Server& server, MonitorService& svc, ApiOptions opts = {}) {
    server.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        try {
            std::rethrow_exception(ep);
        } catch (const Error& e) {
            send_error(res, status_for(e.kind()), to_string(e.kind()), e.what());
        } catch (const nlohmann::json::exception& e) {
            send_error(res, 400, "parse", e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    });

    server.Get("/healthz", [](const httplib::Request&, httplib::Response& res) { send_json(res, {{"ok", true}}); });

    server.Post("/api/v1/ingest", [&svc](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(svc.ingest_ndjson(bearer_token(req), req.body)));
    });

    server.Post("/api/v1/devices/:id/snapshot", [&svc](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(svc.ingest_snapshot(bearer_token(req), req.path_params.at("id"), req.body)));
    });

    server.Get("/api/v1/devices", [&svc](const httplib::Request&, httplib::Response& res) {
        send_json(res, {{"devices", svc.statuses()}});
    });

    server.Get("/api/v1/devices/:id/status", [&svc](const httplib::Request& req, httplib::Response& res) {
        send_json(res, svc.status(req.path_params.at("id")));
    });

    server.Get("/api/v1/devices/:id/log", [&svc](const httplib::Request& req, httplib::Response& res) {
        const bool acks = req.get_param_value("acks") != "false";
        res.set_content(svc.log_text(req.path_params.at("id"), acks), "application/x-ndjson");
    });

    server.Get("/api/v1/history", [&svc](const httplib::Request& req, httplib::Response& res) {
        HistoryQuery q;
        q.device = string_param(req, "device");
        q.from = number_param(req, "from");
        q.to = number_param(req, "to");
        if (auto c = string_param(req, "class")) q.cls = parse_activity_class(*c);
        send_json(res, {{"records", as_array(svc.history(q))}});
    });

    server.Get("/api/v1/alerts", [&svc](const httplib::Request& req, httplib::Response& res) {
        AlertQuery q;
        q.device = string_param(req, "device");
        q.from = number_param(req, "from");
        q.to = number_param(req, "to");
        if (auto k = string_param(req, "kind")) q.kind = parse_alert_kind(*k);
        q.unacknowledged_only = req.get_param_value("unacked") == "true";
        send_json(res, {{"alerts", as_array(svc.alerts(q))}});
    });

    server.Post("/api/v1/alerts/:id/ack", [&svc](const httplib::Request& req, httplib::Response& res) {
        std::string note;
        if (!req.body.empty()) {
            const auto j = nlohmann::json::parse(req.body);
            note = j.value("note", "");
        }
        send_json(res, svc.acknowledge(req.path_params.at("id"), note));
    });

    // Server-sent events. `after` (or Last-Event-ID) is the feed index to resume from.
    server.Get("/api/v1/alerts/stream", [&svc, opts](const httplib::Request& req, httplib::Response& res) {
        std::size_t start = 0;
        if (req.has_header("Last-Event-ID")) start = std::stoull(req.get_header_value("Last-Event-ID"));
        if (auto a = number_param(req, "after")) start = static_cast<std::size_t>(*a);
        auto next = std::make_shared<std::size_t>(start);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [&svc, next, opts](std::size_t, httplib::DataSink& sink) {
            auto [items, end] = svc.wait_alerts(*next, opts.stream_poll);
            if (items.empty()) {
                const std::string ping = ": keep-alive\n\n";
                return sink.write(ping.data(), ping.size());
            }
            for (std::size_t i = 0; i < items.size(); ++i) {
                const std::string ev =
                    "id: " + std::to_string(*next + i + 1) + "\nevent: alert\ndata: " + items[i].dump() + "\n\n";
                if (!sink.write(ev.data(), ev.size())) return false;
            }
            *next = end;
            return true;
        });
    });

    server.Get("/api/v1/config", [&svc](const httplib::Request&, httplib::Response& res) {
        send_json(res, svc.config());
    });

    server.Put("/api/v1/config", [&svc](const httplib::Request& req, httplib::Response& res) {
        send_json(res, svc.update_config(nlohmann::json::parse(req.body)));
    });

    server.Get("/api/v1/schemas", [](const httplib::Request&, httplib::Response& res) {
        nlohmann::json out = nlohmann::json::array();
        for (auto s : {Schema::Activity, Schema::MotionAuth, Schema::AudioAuth, Schema::AuthCombined, Schema::Shock})
            out.push_back(schema_manifest(s));
        send_json(res, {{"schemas", out}});
    });
}

}  // namespace actmon::http
