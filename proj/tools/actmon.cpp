// actmon: corpus generation, training, evaluation, offline detection, replay
// and the monitoring server behind one binary.

#include <atomic>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "actmon/activity.hpp"
#include "actmon/auth.hpp"
#include "actmon/corpus.hpp"
#include "actmon/evaluation.hpp"
#include "actmon/events.hpp"
#include "actmon/mlp.hpp"
#include "actmon/pipeline.hpp"
#include "actmon/service.hpp"
#include "actmon/synth.hpp"
#include "actmon/trace_io.hpp"
#include "actmon/train_config.hpp"
// after Eigen: httplib pulls in resolv.h
#include "actmon/http_api.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace actmon;

namespace {

constexpr int kExitMismatch = 3;

int exit_code(ErrorKind k) {
    switch (k) {
    case ErrorKind::EmptyInput: return 10;
    case ErrorKind::InsufficientData: return 11;
    case ErrorKind::Parameter: return 12;
    case ErrorKind::Schema: return 13;
    case ErrorKind::Data: return 14;
    case ErrorKind::Stream: return 15;
    case ErrorKind::Parse: return 16;
    case ErrorKind::Auth: return 17;
    case ErrorKind::NotFound: return 18;
    case ErrorKind::Io: return 19;
    case ErrorKind::CorruptModel: return 20;
    }
    return 1;
}

// ---------------------------------------------------------------------------
// configuration
// ---------------------------------------------------------------------------

json builtin_defaults() {
    return {{"train", TrainConfig{}},
            {"monitor", MonitorConfig{}},
            {"auth", {{"features", "combined"}, {"per_vote", 30}}},
            {"service", {{"open_registration", false}, {"devices", json::object()}}},
            {"serve", {{"host", "127.0.0.1"}, {"port", 8080}}}};
}

fs::path default_config_path() {
    if (const char* env = std::getenv("ACTMON_CONFIG")) return env;
    return "config/default.json";
}

json read_json_file(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::NotFound, "no such file: " + p.string());
    std::ifstream in(p);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + p.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, p.string() + ": " + e.what());
    }
}

// "monitor.events.quiet_duration=6" -> patch; values parse as JSON, else string
void apply_override(json& cfg, const std::string& kv) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) throw Error(ErrorKind::Parameter, "--set expects key=value, got '" + kv + "'");
    std::string ptr = "/" + kv.substr(0, eq);
    std::replace(ptr.begin(), ptr.end(), '.', '/');
    const std::string raw = kv.substr(eq + 1);
    json value;
    try {
        value = json::parse(raw);
    } catch (const json::exception&) {
        value = raw;
    }
    const json::json_pointer p(ptr);
    if (!cfg.contains(p)) throw Error(ErrorKind::Parameter, "unknown config key '" + kv.substr(0, eq) + "'");
    cfg[p] = value;
}

struct Options {
    std::string config_path;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
};

struct Resolved {
    json doc;
    TrainConfig train;
    MonitorConfig monitor;
};

Resolved resolve(const Options& o) {
    Resolved r;
    r.doc = builtin_defaults();
    const fs::path path = o.config_path.empty() ? default_config_path() : fs::path(o.config_path);
    if (!o.config_path.empty() || fs::exists(path)) r.doc.merge_patch(read_json_file(path));
    for (const auto& kv : o.overrides) apply_override(r.doc, kv);
    if (o.seed) r.doc["train"]["seed"] = *o.seed;
    try {
        r.train = r.doc.at("train").get<TrainConfig>();
        r.monitor = r.doc.at("monitor").get<MonitorConfig>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, std::string("config: ") + e.what());
    }
    r.train.validate();
    r.monitor.validate();
    // echo the canonical form so every default is visible
    r.doc["train"] = r.train;
    r.doc["monitor"] = r.monitor;
    return r;
}

void print_config(const std::string& command, const json& doc) {
    std::cerr << "actmon " << command << " config " << doc.dump() << '\n';
}

// ---------------------------------------------------------------------------
// file helpers
// ---------------------------------------------------------------------------

void require_file(const fs::path& p) {
    if (!fs::exists(p)) throw Error(ErrorKind::NotFound, "no such file: " + p.string());
}

void write_json(const fs::path& p, const json& j) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    out << j.dump(2) << '\n';
}

void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    std::ofstream out(p);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + p.string());
    out << s;
}

template <class T>
T load_model(const fs::path& p) {
    const json j = read_json_file(p);
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw Error(ErrorKind::CorruptModel, p.string() + ": " + e.what());
    }
}

// every line of a trace file is one record; audio is optional
struct LoadedTrace {
    AccelStream accel;
    std::vector<AudioFrame> audio;
};

LoadedTrace load_trace(const fs::path& trace, const std::string& audio) {
    require_file(trace);
    LoadedTrace t;
    t.accel = read_trace(trace);
    if (!audio.empty()) {
        require_file(audio);
        t.audio = read_audio(fs::path(audio));
    }
    return t;
}

void require_shock(const MlpModel& m) {
    if (m.schema != Schema::Shock) throw Error(ErrorKind::Schema, "model is not a shock detector");
}

std::shared_ptr<const ModelSet> load_models(const std::string& activity, const std::string& shock,
                                            const std::string& identifier) {
    auto set = std::make_shared<ModelSet>();
    if (!activity.empty()) set->activity = load_model<ActivityModels>(activity);
    if (!shock.empty()) {
        set->shock = load_model<MlpModel>(shock);
        require_shock(*set->shock);
    }
    if (!identifier.empty()) set->identifier = load_model<MlpModel>(identifier);
    return set;
}

FeatureSet feature_set_of(const MlpModel& m) {
    switch (m.schema) {
    case Schema::AuthCombined: return FeatureSet::Combined;
    case Schema::MotionAuth: return FeatureSet::MotionOnly;
    case Schema::AudioAuth: return FeatureSet::AudioOnly;
    default: throw Error(ErrorKind::Schema, "model is not a user identifier");
    }
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_synth(const Resolved& r, const std::string& recipe, std::optional<std::uint64_t> seed, const fs::path& out) {
    std::vector<corpus::Entry> entries;
    std::uint64_t used = 0;
    if (recipe == "activities") {
        corpus::ActivityRecipe rec;
        if (seed) rec.seed = *seed;
        used = rec.seed;
        entries = corpus::activity_corpus(rec);
    } else if (recipe == "events") {
        // train split from the training recipe, test split from the evaluation recipe
        auto train = corpus::training_event_recipe();
        corpus::EventRecipe test;
        if (seed) {
            train.seed = synth::mix_seed(*seed, 1);
            test.seed = *seed;
        }
        used = test.seed;
        // both recipes number their traces from 0, so ids carry the split
        for (auto split : {corpus::Split::Train, corpus::Split::Test}) {
            for (auto& e : corpus::event_corpus(split == corpus::Split::Train ? train : test, split)) {
                e.id = std::string(corpus::to_string(split)) + "-" + e.id;
                e.accel.device_id = e.id;
                entries.push_back(std::move(e));
            }
        }
    } else if (recipe == "auth") {
        corpus::AuthRecipe rec;
        if (seed) rec.seed = *seed;
        used = rec.seed;
        entries = corpus::auth_corpus(rec, synth::default_profiles());
    } else if (recipe == "day") {
        corpus::DayRecipe rec;
        if (seed) rec.seed = *seed;
        used = rec.seed;
        const auto day = corpus::gen_day(rec);
        corpus::Entry e;
        e.id = rec.device_id;
        e.label = "day";
        e.split = corpus::Split::Test;
        e.accel = day.accel;
        json segs = json::array();
        for (const auto& s : day.segments) segs.push_back({{"class", to_string(s.cls)}, {"t_start", s.t_start}, {"t_end", s.t_end}});
        e.truth = {{"segments", segs}};
        entries.push_back(std::move(e));
    } else {
        throw Error(ErrorKind::Parameter, "unknown recipe '" + recipe + "'");
    }
    (void)r;
    const json manifest = corpus::write_corpus(entries, out, recipe, used);
    // the manifest itself carries every file checksum; hash it for a one-line summary
    std::ostringstream ss;
    ss << manifest.dump();
    std::cout << "wrote " << entries.size() << " entries to " << out.string() << " checksum "
              << corpus::hex64(corpus::fnv1a(ss.str())) << '\n';
    return 0;
}

int cmd_train_activity(const Resolved& r, const fs::path& corpus_dir, const fs::path& out) {
    const auto entries = corpus::read_corpus(corpus_dir, corpus::Split::Train);
    const auto inst = corpus::activity_instances(entries, corpus::Split::Train, r.monitor.activity);
    const auto report = train_activity_classifier_detailed(inst, r.train);
    write_json(out, json(report.models));
    std::cout << "trained activity classifier on " << inst.size() << " instances -> " << out.string() << '\n';
    return 0;
}

int cmd_train_shock(const Resolved& r, const fs::path& corpus_dir, const fs::path& out) {
    const auto entries = corpus::read_corpus(corpus_dir, corpus::Split::Train);
    const auto res = eval::train_shock_detector(entries, r.monitor.events, r.train);
    write_json(out, json(res.model));
    std::cout << "trained shock detector on " << entries.size() << " traces, final loss " << res.final_loss << " -> "
              << out.string() << '\n';
    return 0;
}

int cmd_enroll(const Resolved& r, const fs::path& corpus_dir, const std::string& features, const fs::path& out) {
    const auto set = parse_feature_set(features.empty() ? r.doc.at("auth").at("features").get<std::string>() : features);
    const auto entries = corpus::read_corpus(corpus_dir, corpus::Split::Train);
    const auto users = eval::user_list(entries);
    const auto windows = eval::auth_windows(entries, users, set, corpus::Split::Train);
    const auto model = enroll(eval::enrollment_set(windows, users), r.train);
    write_json(out, json(model));
    std::cout << "enrolled " << users.size() << " users from " << windows.xs.size() << " windows -> " << out.string()
              << '\n';
    return 0;
}

int cmd_eval(const Resolved& r, const std::string& task, const fs::path& corpus_dir, const fs::path& model_path,
             const fs::path& out_dir) {
    const auto entries = corpus::read_corpus(corpus_dir, corpus::Split::Test);
    json report;
    if (task == "activity") {
        const auto models = load_model<ActivityModels>(model_path);
        const auto test = corpus::activity_instances(entries, corpus::Split::Test, r.monitor.activity);
        const auto cm = evaluate_classifier(models, test);
        report = evaluation_report(cm);
        std::string tsv = "true\tpredicted\tcount\n";
        for (auto t : kActivityClasses)
            for (auto p : kActivityClasses)
                tsv += std::string(to_string(t)) + "\t" + to_string(p) + "\t" +
                       std::to_string(cm.counts[index_of(t)][index_of(p)]) + "\n";
        write_text(out_dir / "confusion.tsv", tsv);
    } else if (task == "events") {
        const auto model = load_model<MlpModel>(model_path);
        require_shock(model);
        const auto ev = eval::evaluate_events(entries, model, r.monitor.events);
        report = eval::to_json(ev);
        std::string tsv = "id\tlabel\trisky\tfree_falls\talarms_three_step\talarms_impact_only\tfirst_alarm_t\n";
        for (const auto& o : ev.traces) {
            tsv += o.id + "\t" + o.label + "\t" + (o.risky ? "1" : "0") + "\t" + std::to_string(o.free_falls.size()) +
                   "\t" + std::to_string(o.three_step.size()) + "\t" + std::to_string(o.impact_only.size()) + "\t" +
                   (o.three_step.empty() ? std::string("nan") : std::to_string(o.three_step.front().t_alarm)) + "\n";
        }
        write_text(out_dir / "alarms.tsv", tsv);
    } else if (task == "auth") {
        const auto model = load_model<MlpModel>(model_path);
        const auto set = feature_set_of(model);
        const auto& users = model.class_names;
        const auto test = eval::auth_windows(entries, users, set, corpus::Split::Test);
        if (test.xs.empty()) throw Error(ErrorKind::EmptyInput, "no test windows in " + corpus_dir.string());
        std::vector<AuthDecision> decisions;
        std::vector<std::size_t> labels;
        std::string tsv = "source\tt\ttrue\tpredicted\tscore\n";
        std::size_t correct = 0;
        for (std::size_t i = 0; i < test.xs.size(); ++i) {
            decisions.push_back(identify_window(test.xs[i], model, test.t[i]));
            labels.push_back(static_cast<std::size_t>(test.labels[i]));
            correct += decisions.back().user == labels.back();
            tsv += test.source[i] + "\t" + std::to_string(test.t[i]) + "\t" + users[labels.back()] + "\t" +
                   decisions.back().user_id + "\t" + std::to_string(decisions.back().score) + "\n";
        }
        const auto per_vote = r.doc.at("auth").at("per_vote").get<std::size_t>();
        std::vector<AuthDecision> voted;
        std::vector<std::size_t> voted_labels;
        eval::vote_groups(decisions, labels, test.source, per_vote, voted, voted_labels);
        std::size_t vc = 0;
        for (std::size_t i = 0; i < voted.size(); ++i) vc += voted[i].user == voted_labels[i];
        const auto metrics = auth_metrics(decisions, labels, users);
        report = {{"task", "auth"},
                  {"features", to_string(set)},
                  {"windows", decisions.size()},
                  {"window_accuracy", static_cast<double>(correct) / static_cast<double>(decisions.size())},
                  {"votes", voted.size()},
                  {"voted_accuracy", voted.empty() ? 0.0 : static_cast<double>(vc) / static_cast<double>(voted.size())},
                  {"metrics", to_json(metrics)}};
        write_text(out_dir / "scores.tsv", tsv);
        write_text(out_dir / "metrics.tsv", format_metrics_table(metrics));
    } else {
        throw Error(ErrorKind::Parameter, "unknown task '" + task + "'");
    }
    write_json(out_dir / "report.json", report);
    std::cout << report.dump(2) << '\n';
    return 0;
}

DeviceSettings settings_from(const std::string& privacy, const std::string& owner) {
    DeviceSettings s;
    s.privacy = parse_privacy(privacy);
    if (!owner.empty()) s.owner = owner;
    return s;
}

int cmd_detect(const Resolved& r, const LoadedTrace& t, std::shared_ptr<const ModelSet> models,
               const DeviceSettings& settings, const std::string& out) {
    const auto log = format_log(process_trace(t.accel, t.audio, r.monitor, std::move(models), settings));
    if (out.empty())
        std::cout << log;
    else
        write_text(out, log);
    return 0;
}

ServiceConfig service_config(const Resolved& r, const std::string& data_dir) {
    json s = r.doc.at("service");
    s["monitor"] = r.monitor;
    ServiceConfig c = service_config_from_json(s);
    if (!data_dir.empty()) c.data_dir = data_dir;
    return c;
}

std::string snapshot_body(const LoadedTrace& t) {
    std::string body = header_to_json(t.accel).dump() + "\n";
    for (const auto& rec : delivery_order(t.accel, t.audio))
        body += (rec.sample ? sample_to_json(*rec.sample) : audio_to_json(*rec.audio)).dump() + "\n";
    return body;
}

// Uploads the trace as a snapshot and compares the server's event log with
// the offline pipeline. `against` is "serve" (an in-process server on a free
// port) or a base URL of a running server.
int cmd_replay(const Resolved& r, const LoadedTrace& t, std::shared_ptr<const ModelSet> models,
               const DeviceSettings& settings, const std::string& against, std::string token) {
    const std::string id = t.accel.device_id;
    if (token.empty()) token = id;
    std::optional<MonitorService> svc;
    httplib::Server server;
    std::thread loop;
    std::string base = against;
    if (against == "serve") {
        ServiceConfig cfg = service_config(r, "");
        cfg.open_registration = true;
        cfg.data_dir.reset();
        cfg.devices[id].settings = settings;
        svc.emplace(cfg, models);
        http::mount_routes(server, *svc);
        const int port = server.bind_to_any_port("127.0.0.1");
        if (port <= 0) throw Error(ErrorKind::Io, "cannot bind a local port");
        loop = std::thread([&server] { server.listen_after_bind(); });
        server.wait_until_ready();
        base = "http://127.0.0.1:" + std::to_string(port);
    }
    auto finish = [&] {
        if (loop.joinable()) {
            server.stop();
            loop.join();
        }
    };
    try {
        httplib::Client cli(base);
        cli.set_read_timeout(600, 0);
        const httplib::Headers auth{{"Authorization", "Bearer " + token}};
        auto res = cli.Post("/api/v1/devices/" + id + "/snapshot", auth, snapshot_body(t), "application/x-ndjson");
        if (!res) throw Error(ErrorKind::Io, "cannot reach " + base);
        if (res->status != 200) throw Error(ErrorKind::Data, "snapshot rejected: " + res->body);
        res = cli.Get("/api/v1/devices/" + id + "/log?acks=false", auth);
        if (!res || res->status != 200) throw Error(ErrorKind::Io, "cannot fetch log from " + base);
        const std::string live = res->body;
        const std::string offline = format_log(process_trace(t.accel, t.audio, r.monitor, models, settings));
        finish();
        if (live == offline) {
            std::cout << "replay identical: " << std::count(live.begin(), live.end(), '\n') << " records\n";
            return 0;
        }
        std::cout << "replay MISMATCH\n--- offline\n" << offline << "--- served\n" << live;
        return kExitMismatch;
    } catch (...) {
        finish();
        throw;
    }
}

std::atomic<bool> g_stop{false};
httplib::Server* g_server = nullptr;

extern "C" void on_signal(int) {
    g_stop = true;
    if (g_server) g_server->stop();
}

int cmd_serve(const Resolved& r, std::shared_ptr<const ModelSet> models, const std::string& data_dir) {
    const ServiceConfig cfg = service_config(r, data_dir);
    MonitorService svc(cfg, std::move(models));
    httplib::Server server;
    http::mount_routes(server, svc);
    const auto host = r.doc.at("serve").at("host").get<std::string>();
    const int port = r.doc.at("serve").at("port").get<int>();
    if (!server.bind_to_port(host, port)) throw Error(ErrorKind::Io, "cannot bind " + host + ":" + std::to_string(port));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::cout << "listening on http://" << host << ":" << port << std::endl;
    server.listen_after_bind();
    svc.stop_waiters();
    g_server = nullptr;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"actmon: activity monitoring, risky-event detection and implicit authentication"};
    app.require_subcommand(1);
    Options opt;
    app.add_option("-c,--config", opt.config_path, "config file (default $ACTMON_CONFIG or config/default.json)");
    app.add_option("--set", opt.overrides, "override a config value, e.g. --set monitor.idle_timeout_s=600")
        ->take_all();

    std::string recipe, out, corpus_dir, model, task, features, trace, audio, activity_model, shock_model,
        identifier_model, privacy = "full", owner, against = "serve", token, data_dir;
    std::optional<std::uint64_t> seed;

    auto* config = app.add_subcommand("config", "print the resolved configuration");

    auto* synth = app.add_subcommand("synth", "generate a synthetic corpus with manifest and checksums");
    synth->add_option("--recipe", recipe, "activities | events | auth | day")
        ->required()
        ->check(CLI::IsMember({"activities", "events", "auth", "day"}));
    synth->add_option("--seed", seed, "generator seed (default: the recipe's own)");
    synth->add_option("--out", out, "output directory")->required();

    auto* train_act = app.add_subcommand("train-activity", "fit the per-class GMM activity classifier");
    auto* train_shock = app.add_subcommand("train-shock", "train the MLP shock detector");
    auto* enroll_cmd = app.add_subcommand("enroll", "train the user identifier from walking sessions");
    for (auto* sc : {train_act, train_shock, enroll_cmd}) {
        sc->add_option("--corpus", corpus_dir, "corpus directory (train split is used)")->required();
        sc->add_option("--out", out, "model file")->required();
        sc->add_option("--seed", seed, "training seed");
    }
    enroll_cmd->add_option("--features", features, "combined | motion | audio");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a model on a corpus's test split");
    eval_cmd->add_option("--task", task, "activity | events | auth")
        ->required()
        ->check(CLI::IsMember({"activity", "events", "auth"}));
    eval_cmd->add_option("--corpus", corpus_dir, "corpus directory")->required();
    eval_cmd->add_option("--model", model, "model file")->required();
    eval_cmd->add_option("--out", out, "report directory")->required();

    auto* detect = app.add_subcommand("detect", "run the monitoring pipeline over a recorded trace");
    auto* replay = app.add_subcommand("replay", "stream a trace through a server and compare with detect");
    for (auto* sc : {detect, replay}) {
        sc->add_option("--trace", trace, "acceleration trace (JSON lines)")->required();
        sc->add_option("--audio", audio, "audio frames (JSON lines)");
        sc->add_option("--activity-model", activity_model);
        sc->add_option("--shock-model", shock_model);
        sc->add_option("--identifier-model", identifier_model);
        sc->add_option("--privacy", privacy, "full | coarse")->check(CLI::IsMember({"full", "coarse"}));
        sc->add_option("--owner", owner, "enrolled owner of the device");
    }
    detect->add_option("--out", out, "log file (default stdout)");
    replay->add_option("--against", against, "'serve' for an in-process server, or a base URL");
    replay->add_option("--token", token, "device token (default: the device id)");

    auto* serve = app.add_subcommand("serve", "run the monitoring server");
    serve->add_option("--activity-model", activity_model);
    serve->add_option("--shock-model", shock_model);
    serve->add_option("--identifier-model", identifier_model);
    serve->add_option("--data-dir", data_dir, "persist sessions here and recover them on start");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (seed && !synth->parsed()) opt.seed = seed;
        const Resolved r = resolve(opt);
        const std::string name = app.get_subcommands().front()->get_name();
        print_config(name, r.doc);
        if (config->parsed()) {
            std::cout << r.doc.dump(2) << '\n';
            return 0;
        }
        if (synth->parsed()) return cmd_synth(r, recipe, seed, out);
        if (train_act->parsed()) return cmd_train_activity(r, corpus_dir, out);
        if (train_shock->parsed()) return cmd_train_shock(r, corpus_dir, out);
        if (enroll_cmd->parsed()) return cmd_enroll(r, corpus_dir, features, out);
        if (eval_cmd->parsed()) return cmd_eval(r, task, corpus_dir, model, out);
        const auto models = load_models(activity_model, shock_model, identifier_model);
        if (serve->parsed()) return cmd_serve(r, models, data_dir);
        const auto t = load_trace(trace, audio);
        const auto settings = settings_from(privacy, owner);
        if (detect->parsed()) return cmd_detect(r, t, models, settings, out);
        return cmd_replay(r, t, models, settings, against, token);
    } catch (const Error& e) {
        std::cerr << "actmon: " << e.what() << '\n';
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::cerr << "actmon: " << e.what() << '\n';
        return 1;
    }
}
