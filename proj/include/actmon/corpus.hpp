#pragma once

// Corpus recipes (activities, events, auth sessions, a monitored day) and the
// on-disk layout: one trace file per entry, an optional audio side-file and a
// manifest with labels, ground truth, split tags and checksums.

#include <array>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/activity.hpp"
#include "actmon/error.hpp"
#include "actmon/synth.hpp"
#include "actmon/trace_io.hpp"

namespace actmon::corpus {

using json = nlohmann::json;

enum class Split { Train, Test };

inline const char* to_string(Split s) { return s == Split::Train ? "train" : "test"; }

inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::Train;
    if (s == "test") return Split::Test;
    throw Error(ErrorKind::Parse, "unknown split '" + s + "'");
}

struct Entry {
    std::string id;
    std::string label;  // activity class, event kind or user id
    Split split = Split::Train;
    AccelStream accel;
    std::vector<AudioFrame> audio;
    json truth = json::object();
};

// ---------------------------------------------------------------------------
// Activities
// ---------------------------------------------------------------------------

struct ActivityRecipe {
    int per_class = 80;
    int train_per_class = 52;
    double rate_hz = 50.0;
    double instance_s = 10.0;
    std::uint64_t seed = 7;
    double amplitude_jitter = 0.5;  // relative, uniform
    double freq_jitter = 0.15;
};

/// Per-instance variation around the default class spec: the amplitude and
/// step rate vary between instances, noise stays at the class level.
inline synth::ActivityGenSpec activity_instance_spec(ActivityClass c, const ActivityRecipe& r, std::uint64_t seed) {
    auto spec = synth::default_activity_spec(c);
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    spec.amplitude_g *= 1.0 + r.amplitude_jitter * u(rng);
    spec.freq_hz *= 1.0 + r.freq_jitter * u(rng);
    spec.noise_g *= 1.0 + 0.2 * u(rng);
    spec.duration_s = r.instance_s;
    spec.rate_hz = r.rate_hz;
    spec.seed = synth::mix_seed(seed, 1);
    return spec;
}

inline std::vector<Entry> activity_corpus(const ActivityRecipe& r) {
    if (r.per_class <= 0 || r.train_per_class < 0 || r.train_per_class > r.per_class)
        throw Error(ErrorKind::Parameter, "bad activity recipe sizes");
    std::vector<Entry> out;
    for (auto c : kActivityClasses) {
        for (int i = 0; i < r.per_class; ++i) {
            const auto seed = synth::mix_seed(r.seed, index_of(c) * 100000 + static_cast<std::uint64_t>(i));
            const auto spec = activity_instance_spec(c, r, seed);
            Entry e;
            e.id = std::string("act-") + to_string(c) + "-" + std::to_string(i);
            e.label = to_string(c);
            e.split = i < r.train_per_class ? Split::Train : Split::Test;
            e.accel = synth::gen_activity_trace(spec, e.id);
            e.truth = {{"amplitude_g", spec.amplitude_g}, {"freq_hz", spec.freq_hz}};
            out.push_back(std::move(e));
        }
    }
    return out;
}

inline std::vector<ActivityInstance> activity_instances(const std::vector<Entry>& entries, Split split,
                                                        const ActivityFeatureConfig& cfg = {}) {
    std::vector<ActivityInstance> out;
    for (const auto& e : entries) {
        if (e.split != split) continue;
        ActivityInstance inst;
        inst.device_id = e.id;
        inst.t_start = e.accel.samples.empty() ? 0.0 : e.accel.samples.front().t;
        inst.duration_s = e.accel.duration();
        inst.feature = instance_feature_from_trace(e.accel, cfg);
        inst.label = parse_activity_class(e.label);
        out.push_back(std::move(inst));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Events
// ---------------------------------------------------------------------------

struct EventRecipe {
    int abandoned = 30;
    int picked_up = 6;
    // normal traces by kind: walking, jogging, stairs, lift, slam
    std::array<int, 5> normal{28, 24, 20, 14, 12};
    double duration_s = 16.0;
    double rate_hz = 50.0;
    std::uint64_t seed = 11;
};

/// Training split: drops and ordinary handling, no slams (the detector has to
/// generalize to those).
inline EventRecipe training_event_recipe(std::uint64_t seed = 5) {
    EventRecipe r;
    r.abandoned = 24;
    r.picked_up = 12;
    r.normal = {30, 26, 24, 18, 0};
    r.seed = seed;
    return r;
}

inline std::vector<Entry> event_corpus(const EventRecipe& r, Split split) {
    std::vector<Entry> out;
    std::uint64_t salt = 0;
    auto fall = [&](bool abandoned, int i) {
        const auto seed = synth::mix_seed(r.seed, salt++);
        std::mt19937_64 rng(seed);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        synth::FallGenSpec spec;
        spec.seed = synth::mix_seed(seed, 1);
        spec.height_m = 0.6 + 0.3 * u(rng);
        spec.impact_g = 2.5 + 1.5 * u(rng);
        spec.click_amplitude = 0.5 + 0.4 * u(rng);
        spec.carry_s = 2.5 + 2.0 * u(rng);
        spec.post = abandoned ? synth::PostImpact::Abandoned : synth::PostImpact::PickedUp;
        spec.pickup_after_s = 0.5 + 0.5 * u(rng);
        spec.after_s = r.duration_s - spec.carry_s - 0.5;
        auto g = synth::gen_fall_trace(spec, r.rate_hz);
        Entry e;
        e.id = std::string(abandoned ? "drop-abandoned-" : "drop-pickup-") + std::to_string(i);
        e.label = abandoned ? "drop_abandoned" : "drop_pickup";
        e.split = split;
        g.accel.device_id = e.id;
        e.accel = std::move(g.accel);
        e.audio = std::move(g.audio);
        e.truth = g.truth.to_json();
        e.truth["height_m"] = spec.height_m;
        e.truth["impact_g"] = spec.impact_g;
        out.push_back(std::move(e));
    };
    for (int i = 0; i < r.abandoned; ++i) fall(true, i);
    for (int i = 0; i < r.picked_up; ++i) fall(false, i);
    constexpr std::array kinds{synth::NormalKind::Walking, synth::NormalKind::Jogging, synth::NormalKind::Stairs,
                               synth::NormalKind::Lift, synth::NormalKind::Slam};
    for (std::size_t k = 0; k < kinds.size(); ++k) {
        for (int i = 0; i < r.normal[k]; ++i) {
            auto g = synth::gen_normal_trace(kinds[k], r.duration_s, synth::mix_seed(r.seed, salt++), r.rate_hz);
            Entry e;
            e.id = std::string("normal-") + synth::to_string(kinds[k]) + "-" + std::to_string(i);
            e.label = synth::to_string(kinds[k]);
            e.split = split;
            g.accel.device_id = e.id;
            e.accel = std::move(g.accel);
            e.audio = std::move(g.audio);
            e.truth = g.truth.to_json();
            out.push_back(std::move(e));
        }
    }
    return out;
}

inline bool is_shock_episode(const Entry& e) { return e.label == "drop_abandoned" || e.label == "drop_pickup"; }

// ---------------------------------------------------------------------------
// Authentication sessions
// ---------------------------------------------------------------------------

struct AuthRecipe {
    int sessions = 3;
    int test_session = 2;  // held out; the others train
    std::uint64_t seed = 13;
    synth::SessionSpec session;  // duration, rates and day-to-day variation; seed is per session
};

inline std::vector<Entry> auth_corpus(const AuthRecipe& r, const std::vector<synth::GaitProfile>& profiles) {
    if (r.test_session < 0 || r.test_session >= r.sessions) throw Error(ErrorKind::Parameter, "test session out of range");
    std::vector<Entry> out;
    for (std::size_t u = 0; u < profiles.size(); ++u) {
        for (int s = 0; s < r.sessions; ++s) {
            synth::SessionSpec spec = r.session;
            spec.seed = synth::mix_seed(r.seed, u * 1000 + static_cast<std::uint64_t>(s));
            auto g = synth::gen_user_session(profiles[u], spec);
            Entry e;
            e.id = profiles[u].user_id + "-s" + std::to_string(s);
            e.label = profiles[u].user_id;
            e.split = s == r.test_session ? Split::Test : Split::Train;
            g.accel.device_id = e.id;
            e.accel = std::move(g.accel);
            e.audio = std::move(g.audio);
            e.truth = {{"session", s}};
            out.push_back(std::move(e));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// A monitored day: consecutive labeled activity segments on one device
// ---------------------------------------------------------------------------

struct DaySegment {
    ActivityClass cls;
    double t_start = 0.0;
    double t_end = 0.0;
};

struct DayRecipe {
    std::vector<std::pair<ActivityClass, double>> plan{
        {ActivityClass::NoActivity, 60}, {ActivityClass::Walking, 120}, {ActivityClass::Running, 90},
        {ActivityClass::Walking, 60},    {ActivityClass::Resting, 120}, {ActivityClass::Running, 60},
        {ActivityClass::NoActivity, 90}};
    double rate_hz = 50.0;
    std::uint64_t seed = 17;
    std::string device_id = "day-1";
};

struct DayTrace {
    AccelStream accel;
    std::vector<DaySegment> segments;
};

/// Segments are generated in one orientation-consistent stream; each segment
/// keeps its own seeded gait parameters.
inline DayTrace gen_day(const DayRecipe& r) {
    DayTrace d;
    d.accel.device_id = r.device_id;
    d.accel.rate_hz = r.rate_hz;
    d.accel.unit = Unit::G;
    double t = 0.0;
    std::uint64_t salt = 0;
    for (const auto& [cls, dur] : r.plan) {
        auto spec = synth::default_activity_spec(cls);
        spec.duration_s = dur;
        spec.rate_hz = r.rate_hz;
        spec.seed = synth::mix_seed(r.seed, salt++);
        auto seg = synth::gen_activity_trace(spec, r.device_id, t);
        d.segments.push_back({cls, t, t + dur});
        for (auto& s : seg.samples) d.accel.samples.push_back(s);
        t += dur;
    }
    return d;
}

// ---------------------------------------------------------------------------
// Files and manifest
// ---------------------------------------------------------------------------

/// 64-bit FNV-1a over a byte string.
inline std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline std::string file_checksum(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot read " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return hex64(fnv1a(ss.str()));
}

/// Writes every entry under `dir` and a manifest.json; returns the manifest.
inline json write_corpus(const std::vector<Entry>& entries, const std::filesystem::path& dir, const std::string& recipe,
                         std::uint64_t seed, const json& extra = json::object()) {
    std::set<std::string> seen;
    for (const auto& e : entries)
        if (!seen.insert(e.id).second) throw Error(ErrorKind::Data, "duplicate corpus entry id " + e.id);
    std::filesystem::create_directories(dir / "traces");
    json items = json::array();
    for (const auto& e : entries) {
        const std::filesystem::path trace = std::filesystem::path("traces") / (e.id + ".jsonl");
        write_trace(e.accel, dir / trace);
        json item = {{"id", e.id},
                     {"file", trace.generic_string()},
                     {"label", e.label},
                     {"split", to_string(e.split)},
                     {"truth", e.truth},
                     {"checksum", file_checksum(dir / trace)}};
        if (!e.audio.empty()) {
            const std::filesystem::path audio = std::filesystem::path("traces") / (e.id + ".audio.jsonl");
            write_audio(e.audio, dir / audio);
            item["audio_file"] = audio.generic_string();
            item["audio_checksum"] = file_checksum(dir / audio);
        }
        items.push_back(std::move(item));
    }
    json manifest = {{"type", "actmon-corpus"}, {"version", 1}, {"recipe", recipe}, {"seed", seed}, {"entries", items}};
    for (auto it = extra.begin(); it != extra.end(); ++it) manifest[it.key()] = it.value();
    std::ofstream out(dir / "manifest.json");
    if (!out) throw Error(ErrorKind::Io, "cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
    return manifest;
}

inline json read_manifest(const std::filesystem::path& dir) {
    const auto p = dir / "manifest.json";
    std::ifstream in(p);
    if (!in) throw Error(ErrorKind::NotFound, "no corpus manifest at " + p.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Parse, "bad manifest: " + std::string(e.what()));
    }
    if (m.value("type", "") != "actmon-corpus") throw Error(ErrorKind::Schema, "not an actmon corpus manifest");
    return m;
}

/// Loads entries back, optionally only one split.
inline std::vector<Entry> read_corpus(const std::filesystem::path& dir, std::optional<Split> only = std::nullopt) {
    const json m = read_manifest(dir);
    std::vector<Entry> out;
    for (const auto& item : m.at("entries")) {
        Entry e;
        e.id = item.at("id").get<std::string>();
        e.label = item.at("label").get<std::string>();
        e.split = parse_split(item.at("split").get<std::string>());
        if (only && e.split != *only) continue;
        e.truth = item.value("truth", json::object());
        e.accel = read_trace(dir / item.at("file").get<std::string>());
        if (item.contains("audio_file")) e.audio = read_audio(dir / item.at("audio_file").get<std::string>());
        out.push_back(std::move(e));
    }
    return out;
}

}  // namespace actmon::corpus
