#pragma once

// Per-device live pipeline: high-pass -> activity level -> 10 s activity
// instances -> risky-event detector -> 2 s identification windows with
// voting -> graded security. Emits history, alert, decision and gap records.
// The same object drives offline batch runs and the live service, so both
// produce identical logs for identical input order.

#include <cmath>
#include <deque>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/activity.hpp"
#include "actmon/auth.hpp"
#include "actmon/error.hpp"
#include "actmon/events.hpp"
#include "actmon/features.hpp"
#include "actmon/signal.hpp"

namespace actmon {

enum class PrivacyMode { Full, Coarse };

inline const char* to_string(PrivacyMode p) { return p == PrivacyMode::Full ? "full" : "coarse"; }

inline PrivacyMode parse_privacy(const std::string& s) {
    if (s == "full") return PrivacyMode::Full;
    if (s == "coarse") return PrivacyMode::Coarse;
    throw Error(ErrorKind::Parameter, "privacy must be 'full' or 'coarse'");
}

enum class AlertKind { RiskyEvent, HighActivity, LowActivity, IdleTimeout, AuthLocked };

inline constexpr std::array<AlertKind, 5> kAlertKinds{AlertKind::RiskyEvent, AlertKind::HighActivity,
                                                      AlertKind::LowActivity, AlertKind::IdleTimeout,
                                                      AlertKind::AuthLocked};

inline const char* to_string(AlertKind k) {
    switch (k) {
    case AlertKind::RiskyEvent: return "risky_event";
    case AlertKind::HighActivity: return "high_activity";
    case AlertKind::LowActivity: return "low_activity";
    case AlertKind::IdleTimeout: return "idle_timeout";
    case AlertKind::AuthLocked: return "auth_locked";
    }
    return "?";
}

inline AlertKind parse_alert_kind(const std::string& s) {
    for (auto k : kAlertKinds)
        if (s == to_string(k)) return k;
    throw Error(ErrorKind::Parse, "unknown alert kind '" + s + "'");
}

/// Thresholds of the monitoring layer. The activity-derived alerts are
/// evaluated each time a 10 s instance closes.
struct MonitorConfig {
    EventConfig events;
    ActivityFeatureConfig activity;
    SecurityConfig security;
    double prominence_g = kDefaultProminence;
    double high_activity_level = 0.6;  // g, mean level
    double high_activity_s = 30.0;
    double low_activity_level = 0.05;  // g
    double low_activity_s = 3600.0;
    double idle_level = 0.03;  // g; above still-phone sensor noise, below resting sway
    double idle_timeout_s = 1800.0;
    double gap_limit_s = 5.0;
    double kcal_per_g_s = 0.15;  // indicative only

    void validate() const {
        events.validate();
        if (!(activity.window_s > 0.0) || !(activity.instance_s >= activity.window_s))
            throw Error(ErrorKind::Parameter, "activity windows must be positive and fit in an instance");
        if (std::abs(std::remainder(activity.instance_s, activity.window_s)) > 1e-9)
            throw Error(ErrorKind::Parameter, "activity instance must be a whole number of windows");
        if (!(activity.cutoff_hz > 0.0)) throw Error(ErrorKind::Parameter, "cutoff must be positive");
        if (!(prominence_g > 0.0) || !(high_activity_level > 0.0) || !(high_activity_s > 0.0) ||
            !(low_activity_level > 0.0) || !(low_activity_s > 0.0) || !(idle_level > 0.0) || !(idle_timeout_s > 0.0) ||
            !(gap_limit_s > 0.0) || !(kcal_per_g_s >= 0.0))
            throw Error(ErrorKind::Parameter, "monitor thresholds must be positive");
        if (!(security.trusted_score >= 0.0 && security.trusted_score <= 1.0) || !(security.stale_after_s > 0.0) ||
            security.vote_windows < 1)
            throw Error(ErrorKind::Parameter, "invalid security settings");
    }
};

inline void to_json(nlohmann::json& j, const MonitorConfig& c) {
    j = {{"events", c.events},
         {"activity",
          {{"cutoff_hz", c.activity.cutoff_hz}, {"window_s", c.activity.window_s}, {"instance_s", c.activity.instance_s}}},
         {"security", c.security},
         {"prominence_g", c.prominence_g},
         {"high_activity_level", c.high_activity_level},
         {"high_activity_s", c.high_activity_s},
         {"low_activity_level", c.low_activity_level},
         {"low_activity_s", c.low_activity_s},
         {"idle_level", c.idle_level},
         {"idle_timeout_s", c.idle_timeout_s},
         {"gap_limit_s", c.gap_limit_s},
         {"kcal_per_g_s", c.kcal_per_g_s}};
}

inline void from_json(const nlohmann::json& j, MonitorConfig& c) {
    MonitorConfig d;
    if (j.contains("events")) c.events = j.at("events").get<EventConfig>();
    if (j.contains("activity")) {
        const auto& a = j.at("activity");
        c.activity.cutoff_hz = a.value("cutoff_hz", d.activity.cutoff_hz);
        c.activity.window_s = a.value("window_s", d.activity.window_s);
        c.activity.hop_s = c.activity.window_s;
        c.activity.instance_s = a.value("instance_s", d.activity.instance_s);
    }
    if (j.contains("security")) c.security = j.at("security").get<SecurityConfig>();
    c.prominence_g = j.value("prominence_g", d.prominence_g);
    c.high_activity_level = j.value("high_activity_level", d.high_activity_level);
    c.high_activity_s = j.value("high_activity_s", d.high_activity_s);
    c.low_activity_level = j.value("low_activity_level", d.low_activity_level);
    c.low_activity_s = j.value("low_activity_s", d.low_activity_s);
    c.idle_level = j.value("idle_level", d.idle_level);
    c.idle_timeout_s = j.value("idle_timeout_s", d.idle_timeout_s);
    c.gap_limit_s = j.value("gap_limit_s", d.gap_limit_s);
    c.kcal_per_g_s = j.value("kcal_per_g_s", d.kcal_per_g_s);
}

/// Trained models shared read-only by every device pipeline. Any may be absent.
struct ModelSet {
    std::optional<ActivityModels> activity;
    std::optional<MlpModel> shock;
    std::optional<MlpModel> identifier;
};

/// kcal = c * sum(level * dt). Indicative only.
inline double calorie_estimate(std::span<const double> levels, std::span<const double> dts, double c) {
    if (levels.size() != dts.size()) throw Error(ErrorKind::Parameter, "levels and durations differ in length");
    double acc = 0.0;
    for (std::size_t i = 0; i < levels.size(); ++i) acc += levels[i] * dts[i];
    return c * acc;
}

inline constexpr const char* kCalorieNote = "indicative only";

struct DeviceSettings {
    PrivacyMode privacy = PrivacyMode::Full;
    std::optional<std::string> owner;  // enrolled user id of the phone's owner
};

/// Emitted records, in order.
using RecordList = std::vector<nlohmann::json>;

class DevicePipeline {
public:
    DevicePipeline(std::string device_id, double rate_hz, Unit unit, MonitorConfig cfg,
                   std::shared_ptr<const ModelSet> models, DeviceSettings settings = {})
        : id_(std::move(device_id)),
          rate_(rate_hz),
          unit_(unit),
          cfg_(std::move(cfg)),
          models_(std::move(models)),
          settings_(std::move(settings)) {
        cfg_.validate();
        if (!(rate_ > 0.0)) throw Error(ErrorKind::Parameter, "rate_hz must be positive");
        if (!models_) models_ = std::make_shared<ModelSet>();
        if (models_->shock) RiskyEventDetector::require_shock_model(*models_->shock);
        if (models_->identifier && owner_index() == kNoOwner && settings_.owner)
            throw Error(ErrorKind::Parameter, "owner " + *settings_.owner + " is not an enrolled user");
        start_segment();
    }

    const std::string& device_id() const { return id_; }
    double rate_hz() const { return rate_; }
    Unit unit() const { return unit_; }
    const DeviceSettings& settings() const { return settings_; }
    std::optional<double> last_t() const { return last_t_; }

    RecordList push_audio(const AudioFrame& f) {
        validate_audio(f);
        audio_.push_back(f);
        detector_->push_audio(f);
        return {};
    }

    /// One sample in the stream's declared unit. Timestamps must increase.
    RecordList push(const AccelSample& in) {
        RecordList out;
        if (last_t_ && !(in.t > *last_t_)) throw Error(ErrorKind::Stream, "sample timestamp does not increase");
        if (!std::isfinite(in.ax) || !std::isfinite(in.ay) || !std::isfinite(in.az))
            throw Error(ErrorKind::Stream, "non-finite sample");
        if (last_t_ && in.t - *last_t_ > cfg_.gap_limit_s) {
            out.push_back({{"type", "gap"}, {"device_id", id_}, {"t", in.t}, {"from", *last_t_}, {"gap_s", in.t - *last_t_}});
            start_segment();
        }
        last_t_ = in.t;
        ++samples_;
        const AccelSample g = to_g(in, unit_);
        if (!seg_t0_) {
            seg_t0_ = g.t;
            window_start_ = g.t;
            instance_start_ = g.t;
        }
        // windows and instances that end at or before this sample close first
        while (g.t >= window_start_ + cfg_.activity.window_s - kTimeEps) close_window(out);

        const AccelSample f = hp_->process(g);
        if (auto p = tracker_.push(g.t, magnitude(f))) level_points_.push_back(*p);
        for (auto& a : detector_->push(g, f)) on_alarm(a, out);
        raw_.push_back(g);
        filtered_.push_back(f);
        return out;
    }

    /// Status summary for dashboards; auth fields are left out in coarse mode.
    nlohmann::json status() const {
        nlohmann::json j = {{"device_id", id_},
                            {"rate_hz", rate_},
                            {"unit", to_string(unit_)},
                            {"privacy", to_string(settings_.privacy)},
                            {"samples", samples_},
                            {"t_last", last_t_ ? nlohmann::json(*last_t_) : nlohmann::json(nullptr)},
                            {"level", last_level_ ? nlohmann::json(*last_level_) : nlohmann::json(nullptr)},
                            {"fsm_state", to_string(detector_->fsm().state)}};
        if (settings_.privacy == PrivacyMode::Full) {
            j["class"] = last_class_ ? nlohmann::json(to_string(*last_class_)) : nlohmann::json(nullptr);
            j["security"] = to_string(security_);
            if (last_vote_) j["auth"] = {{"user", last_vote_->user_id}, {"score", last_vote_->score}, {"t", last_vote_->t}};
        }
        return j;
    }

private:
    static constexpr std::size_t kNoOwner = static_cast<std::size_t>(-1);

    std::size_t owner_index() const {
        if (!models_->identifier || !settings_.owner) return kNoOwner;
        const auto& names = models_->identifier->class_names;
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == *settings_.owner) return i;
        return kNoOwner;
    }

    bool auth_enabled() const {
        return settings_.privacy == PrivacyMode::Full && models_->identifier &&
               models_->identifier->schema == Schema::AuthCombined;
    }

    void start_segment() {
        hp_.emplace(cfg_.activity.cutoff_hz, rate_);
        tracker_ = LevelTracker(cfg_.prominence_g);
        detector_.emplace(cfg_.events, models_->shock ? &*models_->shock : nullptr, DetectionMode::ThreeStep, id_);
        raw_.clear();
        filtered_.clear();
        audio_.clear();
        level_points_.clear();
        window_features_.clear();
        window_decisions_.clear();
        seg_t0_.reset();
    }

    void close_window(RecordList& out) {
        const double w0 = window_start_;
        const double w1 = w0 + cfg_.activity.window_s;
        auto fpart = slice(filtered_, w0, w1);
        if (fpart.size() >= 2) window_features_.push_back(activity_features(Window{w0, w1, fpart}));
        if (auth_enabled()) identify(w0, w1, out);
        window_start_ = w1;
        if (w1 >= instance_start_ + cfg_.activity.instance_s - kTimeEps) close_instance(w1, out);
        trim(w1);
    }

    void identify(double w0, double w1, RecordList& out) {
        auto rpart = slice(raw_, w0, w1);
        if (rpart.size() < 2) return;
        const auto a = audio_between(audio_, w0, w1);
        if (a.empty()) return;
        const auto x = auth_window_features(Window{w0, w1, rpart}, a, FeatureSet::Combined);
        window_decisions_.push_back(identify_window(x, *models_->identifier, w1));
        if (window_decisions_.size() >= static_cast<std::size_t>(cfg_.security.vote_windows)) {
            auto v = vote_identify(window_decisions_);
            window_decisions_.clear();
            out.push_back({{"type", "auth"},
                           {"device_id", id_},
                           {"t", v.t},
                           {"user", v.user_id},
                           {"score", v.score},
                           {"mode", "voted"},
                           {"windows", cfg_.security.vote_windows}});
            last_vote_ = v;
        }
        update_security(w1, out);
    }

    /// Without a known owner only the risky-alarm rule applies.
    SecurityLevel current_security(double now) const {
        const std::size_t owner = owner_index();
        if (owner == kNoOwner) return last_alarm_ ? SecurityLevel::Locked : SecurityLevel::Elevated;
        std::vector<AuthDecision> recent;
        if (last_vote_) recent.push_back(*last_vote_);
        return security_level(recent, owner, now, last_alarm_, cfg_.security);
    }

    void update_security(double now, RecordList& out) {
        if (settings_.privacy != PrivacyMode::Full) return;
        const SecurityLevel effective = current_security(now);
        if (effective == security_) return;
        const auto before = security_;
        security_ = effective;
        out.push_back({{"type", "security"}, {"device_id", id_}, {"t", now}, {"from", to_string(before)},
                       {"to", to_string(effective)}});
        if (effective == SecurityLevel::Locked) {
            nlohmann::json payload = {{"from", to_string(before)}};
            if (last_vote_) payload["voted_user"] = last_vote_->user_id;
            if (last_alarm_ && (!last_vote_ || *last_alarm_ >= last_vote_->t)) payload["reason"] = "risky_event";
            else payload["reason"] = "identity";
            alert(AlertKind::AuthLocked, now, payload, out);
        }
    }

    void close_instance(double t_end, RecordList& out) {
        const double t0 = instance_start_;
        instance_start_ = t_end;
        // peaks confirmed since the previous instance closed
        std::vector<ActivityLevelPoint> pts;
        pts.swap(level_points_);
        const double level = mean_level(pts);
        last_level_ = level;
        nlohmann::json rec = {{"type", "history"}, {"device_id", id_}, {"t_start", t0}, {"t", t_end}, {"level", level},
                              {"peaks", pts.size()}};
        std::optional<ActivityClass> cls;
        if (models_->activity && !window_features_.empty()) cls = classify_activity(instance_features(window_features_), *models_->activity).label;
        window_features_.clear();
        if (settings_.privacy == PrivacyMode::Full) {
            last_class_ = cls;
            rec["class"] = cls ? nlohmann::json(to_string(*cls)) : nlohmann::json(nullptr);
            rec["kcal"] = cfg_.kcal_per_g_s * level * (t_end - t0);
            rec["kcal_note"] = kCalorieNote;
            if (last_vote_) rec["auth"] = {{"user", last_vote_->user_id}, {"score", last_vote_->score}, {"t", last_vote_->t}};
            rec["security"] = to_string(security_);
        }
        out.push_back(std::move(rec));
        activity_alerts(t0, t_end, level, out);
    }

    void activity_alerts(double t0, double t1, double level, RecordList& out) {
        recent_levels_.push_back({t0, t1, level});
        while (!recent_levels_.empty() && recent_levels_.front().t1 <= t1 - cfg_.high_activity_s + kTimeEps &&
               recent_levels_.size() > 1)
            recent_levels_.pop_front();
        const double covered = t1 - recent_levels_.front().t0;
        double sum = 0.0;
        for (const auto& r : recent_levels_) sum += r.level * (r.t1 - r.t0);
        const bool high = covered >= cfg_.high_activity_s - kTimeEps && sum / covered > cfg_.high_activity_level;
        if (high && !high_raised_) {
            alert(AlertKind::HighActivity, t1, {{"mean_level", sum / covered}, {"over_s", covered}}, out);
        }
        high_raised_ = high;

        streak(level < cfg_.low_activity_level, t0, t1, low_since_, low_raised_, cfg_.low_activity_s,
               AlertKind::LowActivity, out);
        streak(level < cfg_.idle_level, t0, t1, idle_since_, idle_raised_, cfg_.idle_timeout_s, AlertKind::IdleTimeout,
               out);
    }

    void streak(bool cond, double t0, double t1, std::optional<double>& since, bool& raised, double limit,
                AlertKind kind, RecordList& out) {
        if (!cond) {
            since.reset();
            raised = false;
            return;
        }
        if (!since) since = t0;
        if (!raised && t1 - *since >= limit - kTimeEps) {
            raised = true;
            alert(kind, t1, {{"since", *since}, {"duration_s", t1 - *since}}, out);
        }
    }

    void on_alarm(const RiskyAlarm& a, RecordList& out) {
        last_alarm_ = a.t_alarm;
        alert(AlertKind::RiskyEvent, a.t_alarm, to_json(a), out);
        update_security(a.t_alarm, out);
    }

    void alert(AlertKind kind, double t, nlohmann::json payload, RecordList& out) {
        out.push_back({{"type", "alert"},
                       {"device_id", id_},
                       {"alert_id", id_ + ":" + std::to_string(alerts_raised_++)},
                       {"kind", to_string(kind)},
                       {"t", t},
                       {"payload", std::move(payload)}});
    }

    void trim(double now) {
        const double keep = cfg_.activity.window_s + 1.0;
        auto it = std::lower_bound(raw_.begin(), raw_.end(), now - keep,
                                   [](const AccelSample& s, double t) { return s.t < t; });
        const auto n = it - raw_.begin();
        raw_.erase(raw_.begin(), raw_.begin() + n);
        filtered_.erase(filtered_.begin(), filtered_.begin() + n);
        std::erase_if(audio_, [&](const AudioFrame& f) { return f.t_end() < now - keep; });
    }

    struct LevelSpan {
        double t0, t1, level;
    };

    std::string id_;
    double rate_;
    Unit unit_;
    MonitorConfig cfg_;
    std::shared_ptr<const ModelSet> models_;
    DeviceSettings settings_;

    std::optional<AxisHighPass> hp_;
    LevelTracker tracker_;
    std::optional<RiskyEventDetector> detector_;
    std::vector<AccelSample> raw_, filtered_;
    std::vector<AudioFrame> audio_;
    std::vector<ActivityLevelPoint> level_points_;
    std::vector<FeatureVector> window_features_;
    std::vector<AuthDecision> window_decisions_;
    std::optional<double> seg_t0_;
    double window_start_ = 0.0;
    double instance_start_ = 0.0;

    std::optional<double> last_t_;
    std::size_t samples_ = 0;
    std::optional<double> last_level_;
    std::optional<ActivityClass> last_class_;
    std::optional<AuthDecision> last_vote_;
    std::optional<double> last_alarm_;
    SecurityLevel security_ = SecurityLevel::Elevated;
    std::size_t alerts_raised_ = 0;

    std::deque<LevelSpan> recent_levels_;
    bool high_raised_ = false;
    std::optional<double> low_since_, idle_since_;
    bool low_raised_ = false, idle_raised_ = false;
};

// ---------------------------------------------------------------------------
// Offline batch processing
// ---------------------------------------------------------------------------

/// One input record in delivery order. Audio frames go ahead of the first
/// sample at or after their start time.
struct InputRecord {
    std::optional<AccelSample> sample;
    std::optional<AudioFrame> audio;
};

inline std::vector<InputRecord> delivery_order(const AccelStream& trace, std::span<const AudioFrame> audio) {
    std::vector<InputRecord> out;
    out.reserve(trace.samples.size() + audio.size());
    std::size_t next = 0;
    for (const auto& s : trace.samples) {
        while (next < audio.size() && audio[next].t_start <= s.t) out.push_back({std::nullopt, audio[next++]});
        out.push_back({s, std::nullopt});
    }
    while (next < audio.size()) out.push_back({std::nullopt, audio[next++]});
    return out;
}

/// Runs a whole trace through a fresh pipeline.
inline RecordList process_trace(const AccelStream& trace, std::span<const AudioFrame> audio, const MonitorConfig& cfg,
                                std::shared_ptr<const ModelSet> models, const DeviceSettings& settings = {}) {
    DevicePipeline p(trace.device_id, trace.rate_hz, trace.unit, cfg, std::move(models), settings);
    RecordList out;
    for (const auto& r : delivery_order(trace, audio)) {
        auto recs = r.sample ? p.push(*r.sample) : p.push_audio(*r.audio);
        for (auto& x : recs) out.push_back(std::move(x));
    }
    return out;
}

/// One JSON document per line.
inline std::string format_log(const RecordList& records) {
    std::string s;
    for (const auto& r : records) {
        s += r.dump();
        s += '\n';
    }
    return s;
}

}  // namespace actmon
