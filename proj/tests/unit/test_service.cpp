#include <filesystem>
#include <thread>

#include <gtest/gtest.h>

#include "actmon/corpus.hpp"
#include "actmon/evaluation.hpp"
#include "actmon/pipeline.hpp"
#include "actmon/service.hpp"
#include "actmon/synth.hpp"
#include "actmon/trace_io.hpp"
// last: see the note in http_api.hpp
#include "actmon/http_api.hpp"

using namespace actmon;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

/// Header line, then samples and frames in delivery order.
std::string snapshot_body(const AccelStream& trace, std::span<const AudioFrame> audio = {}) {
    std::string body = header_to_json(trace).dump() + "\n";
    for (const auto& r : delivery_order(trace, audio))
        body += (r.sample ? sample_to_json(*r.sample) : audio_to_json(*r.audio)).dump() + "\n";
    return body;
}

/// Same content as wire records with explicit sequence numbers.
std::vector<json> wire_records(const AccelStream& trace, std::span<const AudioFrame> audio = {}) {
    std::vector<json> out;
    std::uint64_t seq = 1;
    auto h = header_to_json(trace);
    h["seq"] = seq++;
    out.push_back(h);
    for (const auto& r : delivery_order(trace, audio)) {
        json j = r.sample ? sample_to_json(*r.sample) : audio_to_json(*r.audio);
        j["device_id"] = trace.device_id;
        j["seq"] = seq++;
        out.push_back(j);
    }
    return out;
}

AccelStream still_trace(const std::string& id, double seconds, std::uint64_t seed = 1) {
    auto spec = synth::default_activity_spec(ActivityClass::NoActivity);
    spec.duration_s = seconds;
    spec.seed = seed;
    return synth::gen_activity_trace(spec, id);
}

AccelStream walk_trace(const std::string& id, double seconds, std::uint64_t seed = 1) {
    auto spec = synth::default_activity_spec(ActivityClass::Walking);
    spec.duration_s = seconds;
    spec.seed = seed;
    return synth::gen_activity_trace(spec, id);
}

ServiceConfig open_config() {
    ServiceConfig c;
    c.open_registration = true;
    return c;
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("actmon-svc-" + name + "-" + std::to_string(::getpid()));
    fs::remove_all(p);
    return p;
}

std::shared_ptr<const ModelSet> small_activity_models() {
    static const auto models = [] {
        corpus::ActivityRecipe r;
        r.per_class = 20;
        r.train_per_class = 20;
        const auto entries = corpus::activity_corpus(r);
        auto set = std::make_shared<ModelSet>();
        set->activity = train_activity_classifier(corpus::activity_instances(entries, corpus::Split::Train), TrainConfig{});
        return std::shared_ptr<const ModelSet>(set);
    }();
    return models;
}

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorKind::Io;
}

}  // namespace

// ---------------------------------------------------------------------------
// Calorie mapping
// ---------------------------------------------------------------------------

TEST(Calorie, ZeroActivityIsZero) {
    const std::vector<double> levels(5, 0.0), dts(5, 10.0);
    EXPECT_DOUBLE_EQ(calorie_estimate(levels, dts, 0.15), 0.0);
}

TEST(Calorie, HandComputedAndLinear) {
    const std::vector<double> levels{0.5, 0.2}, dts{10.0, 10.0};
    EXPECT_NEAR(calorie_estimate(levels, dts, 0.15), 1.05, 1e-12);
    const std::vector<double> doubled{1.0, 0.4};
    EXPECT_NEAR(calorie_estimate(doubled, dts, 0.15), 2.0 * 1.05, 1e-12);
    EXPECT_THROW(calorie_estimate(levels, std::vector<double>{1.0}, 0.15), Error);
}

TEST(Calorie, HistoryKcalMatchesMapping) {
    const auto trace = walk_trace("cal", 60.0);
    const auto recs = process_trace(trace, {}, MonitorConfig{}, nullptr);
    std::vector<double> levels, dts;
    double kcal = 0.0;
    for (const auto& r : recs) {
        if (r.at("type") != "history") continue;
        levels.push_back(r.at("level"));
        dts.push_back(r.at("t").get<double>() - r.at("t_start").get<double>());
        kcal += r.at("kcal").get<double>();
        EXPECT_EQ(r.at("kcal_note"), kCalorieNote);
    }
    // the trailing instance stays open until a later sample arrives
    ASSERT_EQ(levels.size(), 5u);
    EXPECT_NEAR(kcal, calorie_estimate(levels, dts, MonitorConfig{}.kcal_per_g_s), 1e-12);
    EXPECT_GT(kcal, 0.0);
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

TEST(Pipeline, GapStartsNewSegment) {
    auto trace = still_trace("gap", 20.0);
    for (auto& s : trace.samples)
        if (s.t >= 10.0) s.t += 7.0;
    const auto recs = process_trace(trace, {}, MonitorConfig{}, nullptr);
    int gaps = 0;
    for (const auto& r : recs)
        if (r.at("type") == "gap") {
            ++gaps;
            EXPECT_NEAR(r.at("gap_s").get<double>(), 7.02, 1e-9);
        }
    EXPECT_EQ(gaps, 1);
}

TEST(Pipeline, NonIncreasingTimestampIsStreamError) {
    DevicePipeline p("d", 50.0, Unit::G, MonitorConfig{}, nullptr);
    p.push({1.0, 0, 0, 1});
    EXPECT_EQ(kind_of([&] { p.push({1.0, 0, 0, 1}); }), ErrorKind::Stream);
}

TEST(Pipeline, CoarseModeHidesClassAndAuth) {
    const auto trace = walk_trace("coarse", 30.0);
    DeviceSettings coarse;
    coarse.privacy = PrivacyMode::Coarse;
    const auto recs = process_trace(trace, {}, MonitorConfig{}, small_activity_models(), coarse);
    int n = 0;
    for (const auto& r : recs) {
        if (r.at("type") != "history") continue;
        ++n;
        EXPECT_FALSE(r.contains("class"));
        EXPECT_FALSE(r.contains("auth"));
        EXPECT_FALSE(r.contains("security"));
        EXPECT_TRUE(r.contains("level"));
    }
    EXPECT_EQ(n, 2);
    DevicePipeline p("coarse", 50.0, Unit::G, MonitorConfig{}, small_activity_models(), coarse);
    for (const auto& s : trace.samples) p.push(s);
    const auto st = p.status();
    EXPECT_FALSE(st.contains("class"));
    EXPECT_FALSE(st.contains("security"));
}

TEST(Pipeline, IdleTimeoutRaisedOnce) {
    MonitorConfig cfg;
    cfg.idle_timeout_s = 30.0;
    const auto recs = process_trace(still_trace("idle", 80.0), {}, cfg, nullptr);
    std::vector<json> alerts;
    for (const auto& r : recs)
        if (r.at("type") == "alert") alerts.push_back(r);
    ASSERT_EQ(alerts.size(), 1u);
    EXPECT_EQ(alerts[0].at("kind"), "idle_timeout");
    EXPECT_DOUBLE_EQ(alerts[0].at("t").get<double>(), 30.0);
    EXPECT_EQ(alerts[0].at("alert_id"), "idle:0");
}

TEST(Pipeline, ConfigValidation) {
    MonitorConfig cfg;
    cfg.activity.instance_s = 9.0;
    EXPECT_THROW(cfg.validate(), Error);
    cfg = {};
    cfg.high_activity_s = 0.0;
    EXPECT_THROW(cfg.validate(), Error);
    const json j = MonitorConfig{};
    EXPECT_EQ(json(j.get<MonitorConfig>()), j);
}

// ---------------------------------------------------------------------------
// Service
// ---------------------------------------------------------------------------

TEST(Service, LiveLogEqualsBatch) {
    const auto day = corpus::gen_day(corpus::DayRecipe{});
    MonitorService svc(open_config(), small_activity_models());
    const auto ack = svc.ingest_snapshot("day-1", "day-1", snapshot_body(day.accel));
    EXPECT_EQ(ack.accepted, day.accel.samples.size() + 1);
    EXPECT_EQ(svc.log_text("day-1", false), format_log(process_trace(day.accel, {}, MonitorConfig{}, small_activity_models())));
}

TEST(Service, SnapshotIsIdempotent) {
    const auto trace = walk_trace("snap", 25.0);
    MonitorService svc(open_config());
    const auto body = snapshot_body(trace);
    svc.ingest_snapshot("snap", "snap", body);
    const auto log = svc.log_text("snap");
    const auto status = svc.status("snap");
    const auto again = svc.ingest_snapshot("snap", "snap", body);
    EXPECT_EQ(again.accepted, 0u);
    EXPECT_EQ(again.duplicates, trace.samples.size() + 1);
    EXPECT_EQ(svc.log_text("snap"), log);
    EXPECT_EQ(svc.status("snap"), status);
}

TEST(Service, WireSequenceDeduplicates) {
    const auto trace = walk_trace("seq", 12.0);
    const auto recs = wire_records(trace);
    MonitorService svc(open_config());
    std::vector<json> first(recs.begin(), recs.begin() + 300);
    svc.ingest("seq", first);
    const auto ack = svc.ingest("seq", recs);  // overlap is dropped
    EXPECT_EQ(ack.duplicates, 300u);
    EXPECT_EQ(ack.accepted, recs.size() - 300);
    EXPECT_EQ(svc.log_text("seq"), format_log(process_trace(trace, {}, MonitorConfig{}, nullptr)));
}

TEST(Service, ConcurrentDevicesMatchSequential) {
    std::vector<AccelStream> traces;
    for (int d = 0; d < 3; ++d) {
        auto t = d == 1 ? still_trace("dev" + std::to_string(d), 60.0, d + 1) : walk_trace("dev" + std::to_string(d), 60.0, d + 1);
        traces.push_back(t);
    }
    MonitorConfig mc;
    mc.idle_timeout_s = 20.0;
    ServiceConfig cfg = open_config();
    cfg.monitor = mc;

    MonitorService concurrent(cfg);
    std::vector<std::thread> pool;
    for (const auto& t : traces)
        pool.emplace_back([&concurrent, &t] {
            const auto recs = wire_records(t);
            for (std::size_t i = 0; i < recs.size(); i += 97) {
                std::vector<json> batch(recs.begin() + i, recs.begin() + std::min(recs.size(), i + 97));
                concurrent.ingest(t.device_id, batch);
            }
        });
    for (auto& th : pool) th.join();

    for (const auto& t : traces) {
        MonitorService alone(cfg);
        alone.ingest(t.device_id, wire_records(t));
        EXPECT_EQ(concurrent.log_text(t.device_id), alone.log_text(t.device_id)) << t.device_id;
        EXPECT_EQ(concurrent.log_text(t.device_id), format_log(process_trace(t, {}, mc, nullptr)));
    }
    EXPECT_EQ(concurrent.alerts({}).size(), 1u);
}

TEST(Service, MalformedBatchLeavesSessionUntouched) {
    const auto trace = walk_trace("bad", 12.0);
    auto recs = wire_records(trace);
    MonitorService svc(open_config());
    svc.ingest("bad", std::vector<json>(recs.begin(), recs.begin() + 100));
    const auto before = svc.status("bad");
    std::vector<json> batch(recs.begin() + 100, recs.begin() + 200);
    batch[50].erase("ax");
    EXPECT_EQ(kind_of([&] { svc.ingest("bad", batch); }), ErrorKind::Parse);
    EXPECT_EQ(svc.status("bad"), before);
    EXPECT_EQ(kind_of([&] { svc.ingest_ndjson("bad", "{not json\n"); }), ErrorKind::Parse);
    // the rest still goes in
    svc.ingest("bad", std::vector<json>(recs.begin() + 100, recs.end()));
    EXPECT_EQ(svc.log_text("bad"), format_log(process_trace(trace, {}, MonitorConfig{}, nullptr)));
}

TEST(Service, RejectsUnknownDevicesAndTokens) {
    ServiceConfig cfg;
    cfg.devices["phone"] = DeviceEntry{"s3cret", {}};
    MonitorService svc(cfg);
    const auto body = snapshot_body(walk_trace("phone", 3.0));
    EXPECT_EQ(kind_of([&] { svc.ingest_snapshot("wrong", "phone", body); }), ErrorKind::Auth);
    EXPECT_EQ(kind_of([&] { svc.ingest_snapshot("other", "other", body); }), ErrorKind::Auth);
    EXPECT_EQ(svc.ingest_snapshot("s3cret", "phone", body).rejected, 0u);
    EXPECT_EQ(kind_of([&] { svc.status("nobody"); }), ErrorKind::NotFound);
    EXPECT_EQ(kind_of([&] { svc.acknowledge("nobody:0", ""); }), ErrorKind::NotFound);
    EXPECT_EQ(kind_of([&] { svc.acknowledge("phone:9", ""); }), ErrorKind::NotFound);
    EXPECT_EQ(svc.device_ids(), std::vector<std::string>{"phone"});
}

TEST(Service, ClassAndRangeQueries) {
    const auto day = corpus::gen_day(corpus::DayRecipe{});
    MonitorService svc(open_config(), small_activity_models());
    svc.ingest_snapshot("day-1", "day-1", snapshot_body(day.accel));
    const auto all = svc.history({});
    double planned = 0.0;
    for (const auto& [cls, dur] : corpus::DayRecipe{}.plan) planned += dur;
    // every instance closes except the trailing one
    ASSERT_EQ(all.size(), static_cast<std::size_t>(planned / MonitorConfig{}.activity.instance_s) - 1);
    HistoryQuery q;
    q.cls = ActivityClass::Running;
    const auto running = svc.history(q);
    EXPECT_FALSE(running.empty());
    for (const auto& r : running) EXPECT_EQ(r.at("class"), "running");
    std::size_t by_hand = 0;
    for (const auto& r : all) by_hand += r.at("class") == "running";
    EXPECT_EQ(running.size(), by_hand);

    q = {};
    q.from = 100.0;
    q.to = 200.0;
    const auto window = svc.history(q);
    EXPECT_EQ(window.size(), 10u);
    for (const auto& r : window) {
        EXPECT_GE(r.at("t").get<double>(), 100.0);
        EXPECT_LT(r.at("t").get<double>(), 200.0);
    }
    q.from = 150.0;
    q.to = 150.0;
    EXPECT_TRUE(svc.history(q).empty());
}

TEST(Service, AcknowledgmentAppendsOnly) {
    ServiceConfig cfg = open_config();
    cfg.monitor.idle_timeout_s = 20.0;
    MonitorService svc(cfg);
    svc.ingest_snapshot("idle", "idle", snapshot_body(still_trace("idle", 50.0)));
    const auto log_before = svc.log_text("idle", false);
    auto open = svc.alerts({.unacknowledged_only = true});
    ASSERT_EQ(open.size(), 1u);
    EXPECT_EQ(open[0].at("acknowledged"), false);
    const auto acked = svc.acknowledge("idle:0", "checked");
    EXPECT_EQ(acked.at("acknowledged"), true);
    EXPECT_EQ(svc.log_text("idle", false), log_before);
    const auto full = svc.log_text("idle", true);
    EXPECT_EQ(full.substr(0, log_before.size()), log_before);
    EXPECT_NE(full.find("\"type\":\"ack\""), std::string::npos);
    EXPECT_TRUE(svc.alerts({.unacknowledged_only = true}).empty());
    AlertQuery k;
    k.kind = AlertKind::RiskyEvent;
    EXPECT_TRUE(svc.alerts(k).empty());
    EXPECT_EQ(svc.status("idle").at("unacknowledged_alerts"), 0);
}

TEST(Service, ConfigUpdateAppliesToNewSessions) {
    MonitorService svc(open_config());
    svc.ingest_snapshot("a", "a", snapshot_body(still_trace("a", 5.0)));
    svc.update_config({{"monitor", {{"idle_timeout_s", 20.0}}}, {"devices", {{"b", {{"privacy", "coarse"}}}}}});
    EXPECT_DOUBLE_EQ(svc.config().at("monitor").at("idle_timeout_s").get<double>(), 20.0);
    svc.ingest_snapshot("a", "a", snapshot_body(still_trace("a", 50.0)));
    EXPECT_TRUE(svc.alerts({.device = "a"}).empty());  // session opened under the old settings
    svc.ingest_snapshot("b", "b", snapshot_body(still_trace("b", 50.0)));
    EXPECT_EQ(svc.alerts({.device = "b"}).size(), 1u);
    EXPECT_FALSE(svc.history({.device = "b"}).front().contains("class"));
    EXPECT_EQ(kind_of([&] { svc.update_config({{"monitor", {{"gap_limit_s", -1}}}}); }), ErrorKind::Parameter);
}

TEST(Service, SurvivesRestart) {
    const auto dir = scratch("restart");
    ServiceConfig cfg = open_config();
    cfg.data_dir = dir;
    cfg.monitor.idle_timeout_s = 20.0;
    const auto trace = still_trace("persist", 60.0);
    const auto recs = wire_records(trace);
    std::string log, status;
    {
        MonitorService svc(cfg);
        svc.ingest("persist", std::vector<json>(recs.begin(), recs.begin() + 1500));
        svc.acknowledge("persist:0", "seen");
        log = svc.log_text("persist");
    }
    {
        MonitorService svc(cfg);
        EXPECT_EQ(svc.log_text("persist"), log);
        EXPECT_TRUE(svc.alerts({.unacknowledged_only = true}).empty());
        svc.ingest("persist", recs);  // the first 1500 are duplicates now
        status = svc.status("persist").dump();
    }
    ServiceConfig plain = cfg;
    plain.data_dir.reset();
    MonitorService ref(plain);
    ref.ingest("persist", recs);
    ref.acknowledge("persist:0", "seen");
    // ack lands at a different position in the log; compare without acks
    MonitorService reopened(cfg);
    EXPECT_EQ(reopened.log_text("persist", false), ref.log_text("persist", false));
    EXPECT_EQ(json::parse(status), ref.status("persist"));
    fs::remove_all(dir);
}

TEST(Service, AlertFeedWaits) {
    ServiceConfig cfg = open_config();
    cfg.monitor.idle_timeout_s = 20.0;
    MonitorService svc(cfg);
    auto [none, end0] = svc.wait_alerts(0, std::chrono::milliseconds(10));
    EXPECT_TRUE(none.empty());
    std::thread producer([&] { svc.ingest_snapshot("w", "w", snapshot_body(still_trace("w", 30.0))); });
    auto [items, end] = svc.wait_alerts(0, std::chrono::milliseconds(5000));
    producer.join();
    ASSERT_EQ(items.size(), 1u);
    EXPECT_EQ(end, 1u);
    EXPECT_EQ(items[0].at("kind"), "idle_timeout");
}

// ---------------------------------------------------------------------------
// HTTP
// ---------------------------------------------------------------------------

class HttpApi : public ::testing::Test {
protected:
    void SetUp() override {
        ServiceConfig cfg;
        cfg.devices["phone"] = DeviceEntry{"tok", {}};
        cfg.monitor.idle_timeout_s = 20.0;
        svc_ = std::make_unique<MonitorService>(cfg);
        http::ApiOptions opts;
        opts.stream_poll = std::chrono::milliseconds(50);
        http::mount_routes(server_, *svc_, opts);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        svc_->stop_waiters();
        server_.stop();
        thread_.join();
    }
    httplib::Client client() {
        httplib::Client c("127.0.0.1", port_);
        c.set_read_timeout(5, 0);
        return c;
    }

    httplib::Server server_;
    std::unique_ptr<MonitorService> svc_;
    std::thread thread_;
    int port_ = 0;
};

TEST_F(HttpApi, RoundTrip) {
    auto c = client();
    EXPECT_EQ(c.Get("/healthz")->status, 200);

    const auto body = snapshot_body(still_trace("phone", 30.0));
    auto res = c.Post("/api/v1/devices/phone/snapshot", body, "application/x-ndjson");
    ASSERT_TRUE(res);
    EXPECT_EQ(res->status, 401);
    EXPECT_EQ(json::parse(res->body).at("error"), "auth");

    httplib::Headers auth{{"Authorization", "Bearer tok"}};
    res = c.Post("/api/v1/devices/phone/snapshot", auth, body, "application/x-ndjson");
    ASSERT_EQ(res->status, 200) << res->body;
    EXPECT_EQ(json::parse(res->body).at("accepted"), 1501);

    EXPECT_EQ(json::parse(c.Get("/api/v1/devices")->body).at("devices").size(), 1u);
    EXPECT_EQ(json::parse(c.Get("/api/v1/devices/phone/status")->body), svc_->status("phone"));
    EXPECT_EQ(c.Get("/api/v1/devices/ghost/status")->status, 404);
    EXPECT_EQ(c.Get("/api/v1/devices/phone/log?acks=false")->body, svc_->log_text("phone", false));

    const auto hist = json::parse(c.Get("/api/v1/history?device=phone&from=0&to=30")->body).at("records");
    EXPECT_EQ(hist.size(), 2u);
    EXPECT_EQ(c.Get("/api/v1/history?from=abc")->status, 400);
    EXPECT_EQ(c.Get("/api/v1/history?class=flying")->status, 400);

    auto alerts = json::parse(c.Get("/api/v1/alerts?unacked=true")->body).at("alerts");
    ASSERT_EQ(alerts.size(), 1u);
    res = c.Post("/api/v1/alerts/phone:0/ack", R"({"note":"ok"})", "application/json");
    EXPECT_EQ(res->status, 200);
    EXPECT_EQ(json::parse(res->body).at("acknowledged"), true);
    EXPECT_TRUE(json::parse(c.Get("/api/v1/alerts?unacked=true")->body).at("alerts").empty());
    EXPECT_EQ(c.Post("/api/v1/alerts/phone:7/ack", "", "application/json")->status, 404);

    res = c.Put("/api/v1/config", R"({"monitor":{"high_activity_s":45}})", "application/json");
    EXPECT_EQ(res->status, 200);
    EXPECT_DOUBLE_EQ(json::parse(c.Get("/api/v1/config")->body).at("monitor").at("high_activity_s").get<double>(), 45.0);
    EXPECT_EQ(c.Put("/api/v1/config", "{", "application/json")->status, 400);

    EXPECT_EQ(json::parse(c.Get("/api/v1/schemas")->body).at("schemas").size(), 5u);
}

TEST_F(HttpApi, IngestNdjsonAndStream) {
    auto c = client();
    std::string body;
    for (const auto& r : wire_records(still_trace("phone", 30.0))) {
        auto x = r;
        x["device_id"] = "phone";
        body += x.dump() + "\n";
    }
    httplib::Headers auth{{"Authorization", "Bearer tok"}};
    auto res = c.Post("/api/v1/ingest", auth, body, "application/x-ndjson");
    ASSERT_EQ(res->status, 200) << res->body;

    std::string got;
    auto sc = client();
    sc.Get("/api/v1/alerts/stream?after=0", [&](const char* data, std::size_t n) {
        got.append(data, n);
        return got.find("\n\n") == std::string::npos;  // stop after the first event
    });
    EXPECT_EQ(got.rfind("id: 1\nevent: alert\ndata: ", 0), 0u) << got;
    const auto data = json::parse(got.substr(got.find("data: ") + 6, got.find("\n\n") - got.find("data: ") - 6));
    EXPECT_EQ(data.at("alert_id"), "phone:0");
}
