#pragma once

// Risky-event detection: free fall -> shock -> no activity, in that order,
// with an MLP shock classifier. An impact-only mode (alarm on every shock)
// is kept as the comparison baseline.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/mlp.hpp"
#include "actmon/signal.hpp"

namespace actmon {

enum class DetectionMode { ThreeStep, ImpactOnly };

inline const char* to_string(DetectionMode m) { return m == DetectionMode::ThreeStep ? "three-step" : "impact-only"; }

struct EventConfig {
    double freefall_threshold = 0.3;     // g, raw norm
    double freefall_min_duration = 0.25; // s
    double impact_window = 1.0;          // s, free fall end -> impact
    double quiet_duration = 8.0;         // s
    double quiet_delay = 0.5;            // s, quiet interval starts this long after the impact
    double quiet_threshold = 0.05;       // g, mean high-passed norm
    double shock_threshold = 0.5;        // shock probability must exceed this
    double shock_window = 0.5;           // s
    double tick = 0.25;                  // s, evaluation cadence
    double cutoff_hz = kDefaultCutoffHz;

    void validate() const {
        if (!(freefall_threshold > 0.0) || !(freefall_threshold < 1.0))
            throw Error(ErrorKind::Parameter, "freefall_threshold must lie in (0, 1) g");
        if (!(freefall_min_duration > 0.0) || !(impact_window > 0.0) || !(quiet_duration > 0.0) ||
            !(quiet_threshold > 0.0) || !(shock_window > 0.0) || !(tick > 0.0))
            throw Error(ErrorKind::Parameter, "event thresholds and durations must be positive");
        if (!(quiet_delay >= 0.0)) throw Error(ErrorKind::Parameter, "quiet_delay must be >= 0");
        if (!(shock_threshold >= 0.0 && shock_threshold < 1.0))
            throw Error(ErrorKind::Parameter, "shock_threshold must lie in [0, 1)");
    }
};

inline void to_json(nlohmann::json& j, const EventConfig& c) {
    j = {{"freefall_threshold", c.freefall_threshold}, {"freefall_min_duration", c.freefall_min_duration},
         {"impact_window", c.impact_window},           {"quiet_duration", c.quiet_duration},
         {"quiet_delay", c.quiet_delay},
         {"quiet_threshold", c.quiet_threshold},       {"shock_threshold", c.shock_threshold},
         {"shock_window", c.shock_window},             {"tick", c.tick},
         {"cutoff_hz", c.cutoff_hz}};
}

inline void from_json(const nlohmann::json& j, EventConfig& c) {
    EventConfig d;
    c.freefall_threshold = j.value("freefall_threshold", d.freefall_threshold);
    c.freefall_min_duration = j.value("freefall_min_duration", d.freefall_min_duration);
    c.impact_window = j.value("impact_window", d.impact_window);
    c.quiet_duration = j.value("quiet_duration", d.quiet_duration);
    c.quiet_delay = j.value("quiet_delay", d.quiet_delay);
    c.quiet_threshold = j.value("quiet_threshold", d.quiet_threshold);
    c.shock_threshold = j.value("shock_threshold", d.shock_threshold);
    c.shock_window = j.value("shock_window", d.shock_window);
    c.tick = j.value("tick", d.tick);
    c.cutoff_hz = j.value("cutoff_hz", d.cutoff_hz);
}

struct FreeFallEvent {
    double t_start = 0.0;
    double t_end = 0.0;  // first sample back above threshold
    double duration() const { return t_end - t_start; }
};

/// Follows runs of raw norm below the threshold; reports a run once it ends
/// if it lasted at least the minimum duration.
class FreeFallTracker {
public:
    explicit FreeFallTracker(const EventConfig& cfg) : threshold_(cfg.freefall_threshold), min_(cfg.freefall_min_duration) {}

    std::optional<FreeFallEvent> push(const AccelSample& raw_g) {
        const bool low = magnitude(raw_g) < threshold_;
        if (low) {
            if (!run_start_) run_start_ = raw_g.t;
            return std::nullopt;
        }
        std::optional<FreeFallEvent> out;
        if (run_start_ && raw_g.t - *run_start_ >= min_ - kTimeEps) out = FreeFallEvent{*run_start_, raw_g.t};
        run_start_.reset();
        return out;
    }

    /// A run still open at the end of the data, closed at t_end.
    std::optional<FreeFallEvent> close(double t_end) {
        std::optional<FreeFallEvent> out;
        if (run_start_ && t_end - *run_start_ >= min_ - kTimeEps) out = FreeFallEvent{*run_start_, t_end};
        run_start_.reset();
        return out;
    }

    void reset() { run_start_.reset(); }

private:
    double threshold_;
    double min_;
    std::optional<double> run_start_;
};

/// Longest sub-threshold run in a raw window (0 if none).
inline double longest_free_fall(const Window& w, const EventConfig& cfg) {
    FreeFallTracker tr({cfg.freefall_threshold, 1e-12});
    double best = 0.0;
    for (const auto& s : w.samples)
        if (auto e = tr.push(s)) best = std::max(best, e->duration());
    if (auto e = tr.close(w.t_end)) best = std::max(best, e->duration());
    return best;
}

/// True iff the raw norm stays below the threshold for a contiguous stretch
/// of at least freefall_min_duration.
inline bool detect_free_fall(const Window& w, const EventConfig& cfg) {
    return longest_free_fall(w, cfg) >= cfg.freefall_min_duration - kTimeEps;
}

struct ShockDecision {
    bool shock = false;
    double score = 0.0;  // shock-class probability
};

inline std::size_t shock_class_index(const MlpModel& m) {
    auto it = std::find(m.class_names.begin(), m.class_names.end(), "shock");
    if (it == m.class_names.end()) throw Error(ErrorKind::Schema, "model has no 'shock' class");
    return static_cast<std::size_t>(it - m.class_names.begin());
}

/// Shock iff the shock probability is strictly above the threshold.
inline ShockDecision decide_shock(double probability, double threshold = 0.5) { return {probability > threshold, probability}; }

inline ShockDecision detect_shock(const FeatureVector& x, const MlpModel& m, double threshold = 0.5) {
    require_schema(x, Schema::Shock);
    const auto p = mlp_predict(m, x);
    return decide_shock(p[shock_class_index(m)], threshold);
}

enum class QuietState { Undecided, Quiet, Active };

inline const char* to_string(QuietState q) {
    switch (q) {
    case QuietState::Undecided: return "undecided";
    case QuietState::Quiet: return "quiet";
    case QuietState::Active: return "active";
    }
    return "?";
}

/// Mean high-passed norm over the quiet_duration interval that starts
/// quiet_delay after the impact (the impact spike and the filter's response
/// to the new resting orientation are left out). Needs a sample at or past
/// the end of that interval to decide.
inline QuietState detect_quiet(std::span<const AccelSample> filtered, double t_impact, const EventConfig& cfg) {
    const double t_begin = t_impact + cfg.quiet_delay;
    const double t_stop = t_begin + cfg.quiet_duration;
    if (filtered.empty() || filtered.back().t < t_stop - kTimeEps) return QuietState::Undecided;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : slice(filtered, t_begin, t_stop)) {
        sum += magnitude(s);
        ++n;
    }
    if (n == 0) return QuietState::Undecided;
    return sum / static_cast<double>(n) < cfg.quiet_threshold ? QuietState::Quiet : QuietState::Active;
}

// ---------------------------------------------------------------------------
// State machine
// ---------------------------------------------------------------------------

enum class FsmState { Idle, FreeFallSeen, ImpactSeen };

inline const char* to_string(FsmState s) {
    switch (s) {
    case FsmState::Idle: return "idle";
    case FsmState::FreeFallSeen: return "freefall_seen";
    case FsmState::ImpactSeen: return "impact_seen";
    }
    return "?";
}

struct ShockEvent {
    double t_impact = 0.0;  // time of the largest norm in the shock window
    double score = 0.0;
};

struct Observation {
    double t = 0.0;
    std::optional<FreeFallEvent> free_fall;
    std::optional<ShockEvent> shock;
    QuietState quiet = QuietState::Undecided;
};

struct RiskyAlarm {
    std::string device_id;
    std::optional<double> t_freefall;  // absent in impact-only mode
    double t_impact = 0.0;
    double t_alarm = 0.0;
    double shock_score = 0.0;
    DetectionMode mode = DetectionMode::ThreeStep;

    bool operator==(const RiskyAlarm&) const = default;
};

inline nlohmann::json to_json(const RiskyAlarm& a) {
    return {{"device_id", a.device_id},
            {"t_freefall", a.t_freefall ? nlohmann::json(*a.t_freefall) : nlohmann::json(nullptr)},
            {"t_impact", a.t_impact},
            {"t_alarm", a.t_alarm},
            {"shock_score", a.shock_score},
            {"mode", to_string(a.mode)}};
}

struct RiskyEventFsm {
    FsmState state = FsmState::Idle;
    double t_entered = 0.0;
    std::optional<FreeFallEvent> free_fall;
    std::optional<ShockEvent> impact;
    double last_t = -std::numeric_limits<double>::infinity();
    std::optional<double> last_alarm_impact;  // impact-only merging
};

/// Advances the detector by one observation. Observations must arrive in
/// time order; an alarm is produced only for free fall -> impact within
/// impact_window -> quiet (three-step), or for any new shock (impact-only).
inline std::pair<RiskyEventFsm, std::optional<RiskyAlarm>> fsm_step(RiskyEventFsm fsm, const Observation& obs,
                                                                    const EventConfig& cfg, DetectionMode mode,
                                                                    const std::string& device_id = {}) {
    if (obs.t < fsm.last_t) throw Error(ErrorKind::Stream, "observation out of time order");
    fsm.last_t = obs.t;
    std::optional<RiskyAlarm> alarm;

    if (mode == DetectionMode::ImpactOnly) {
        if (obs.shock && !(fsm.last_alarm_impact && obs.shock->t_impact - *fsm.last_alarm_impact <= cfg.impact_window)) {
            fsm.last_alarm_impact = obs.shock->t_impact;
            alarm = RiskyAlarm{device_id, std::nullopt, obs.shock->t_impact, obs.t, obs.shock->score, mode};
        }
        return {fsm, alarm};
    }

    auto go = [&](FsmState s) {
        fsm.state = s;
        fsm.t_entered = obs.t;
        if (s == FsmState::Idle) {
            fsm.free_fall.reset();
            fsm.impact.reset();
        }
    };

    if (obs.free_fall) {
        // a fresh free fall supersedes whatever was pending
        go(FsmState::FreeFallSeen);
        fsm.free_fall = obs.free_fall;
        fsm.impact.reset();
    }

    switch (fsm.state) {
    case FsmState::Idle: break;
    case FsmState::FreeFallSeen: {
        const auto& ff = *fsm.free_fall;
        if (obs.shock && obs.shock->t_impact >= ff.t_start && obs.shock->t_impact - ff.t_end <= cfg.impact_window) {
            go(FsmState::ImpactSeen);
            fsm.impact = obs.shock;
        } else if (obs.t - ff.t_end > cfg.impact_window) {
            go(FsmState::Idle);
        }
        break;
    }
    case FsmState::ImpactSeen: {
        if (obs.shock && obs.shock->t_impact - fsm.impact->t_impact > cfg.impact_window) {
            go(FsmState::Idle);  // a later, separate shock: the phone is being handled
            break;
        }
        if (obs.quiet == QuietState::Quiet) {
            alarm = RiskyAlarm{device_id, fsm.free_fall->t_start, fsm.impact->t_impact, obs.t, fsm.impact->score, mode};
            go(FsmState::Idle);
        } else if (obs.quiet == QuietState::Active) {
            go(FsmState::Idle);
        }
        break;
    }
    }
    return {fsm, alarm};
}

// ---------------------------------------------------------------------------
// Streaming detector
// ---------------------------------------------------------------------------

/// Turns a per-device sample stream into observations on a fixed tick grid
/// and feeds them to the state machine. Expects raw samples in g together
/// with their high-passed counterparts; audio frames may be pushed at any
/// point before the ticks that need them.
class RiskyEventDetector {
public:
    RiskyEventDetector(EventConfig cfg, const MlpModel* shock_model, DetectionMode mode, std::string device_id = {})
        : cfg_(cfg), model_(shock_model), mode_(mode), device_id_(std::move(device_id)), freefall_(cfg) {
        cfg_.validate();
        if (model_) require_shock_model(*model_);
    }

    static void require_shock_model(const MlpModel& m) {
        if (m.schema != Schema::Shock) throw Error(ErrorKind::Schema, "shock detector needs a shock-schema model");
        shock_class_index(m);
    }

    void push_audio(const AudioFrame& f) { audio_.push_back(f); }

    std::vector<RiskyAlarm> push(const AccelSample& raw_g, const AccelSample& filtered) {
        std::vector<RiskyAlarm> alarms;
        if (!next_tick_) next_tick_ = raw_g.t + cfg_.tick;
        while (raw_g.t >= *next_tick_ - kTimeEps) {
            if (auto a = tick(*next_tick_)) alarms.push_back(*a);
            next_tick_ = *next_tick_ + cfg_.tick;
        }
        if (auto ff = freefall_.push(raw_g)) {
            pending_ff_ = ff;
            freefalls_.push_back(*ff);
        }
        raw_.push_back(raw_g);
        filtered_.push_back(filtered);
        trim(raw_g.t);
        return alarms;
    }

    void reset() {
        fsm_ = {};
        freefall_.reset();
        raw_.clear();
        filtered_.clear();
        audio_.clear();
        pending_ff_.reset();
        next_tick_.reset();
    }

    const RiskyEventFsm& fsm() const { return fsm_; }
    const std::vector<FreeFallEvent>& free_falls() const { return freefalls_; }
    const std::vector<Observation>& shocks_seen() const { return shock_obs_; }

private:
    std::optional<RiskyAlarm> tick(double t) {
        Observation obs;
        obs.t = t;
        obs.free_fall = pending_ff_;
        pending_ff_.reset();
        if (model_) obs.shock = evaluate_shock(t);
        if (obs.shock) shock_obs_.push_back(obs);
        if (fsm_.state == FsmState::ImpactSeen) obs.quiet = detect_quiet(filtered_, fsm_.impact->t_impact, cfg_);
        auto [next, alarm] = fsm_step(fsm_, obs, cfg_, mode_, device_id_);
        fsm_ = next;
        return alarm;
    }

    std::optional<ShockEvent> evaluate_shock(double t) {
        const double t0 = t - cfg_.shock_window;
        auto part = slice(raw_, t0, t);
        if (part.size() < 2) return std::nullopt;
        const auto x = shock_features(Window{t0, t, part}, audio_between(audio_, t0, t));
        const auto d = detect_shock(x, *model_, cfg_.shock_threshold);
        if (!d.shock) return std::nullopt;
        const auto peak = std::max_element(part.begin(), part.end(), [](const AccelSample& a, const AccelSample& b) {
            return magnitude(a) < magnitude(b);
        });
        return ShockEvent{peak->t, d.score};
    }

    template <typename T, typename Key>
    static void drop_before(std::vector<T>& v, double cutoff, Key key) {
        auto it = std::find_if(v.begin(), v.end(), [&](const T& x) { return key(x) >= cutoff; });
        if (it - v.begin() > 64 || it == v.end()) v.erase(v.begin(), it);
    }

    void trim(double now) {
        const double keep_raw = std::max(cfg_.shock_window, cfg_.freefall_min_duration) + 2.0 * cfg_.tick;
        drop_before(raw_, now - keep_raw, [](const AccelSample& s) { return s.t; });
        const double keep_filtered = cfg_.quiet_delay + cfg_.quiet_duration + cfg_.impact_window + cfg_.shock_window + 2.0 * cfg_.tick;
        drop_before(filtered_, now - keep_filtered, [](const AccelSample& s) { return s.t; });
        const double keep_audio = cfg_.shock_window + 2.0 * cfg_.tick;
        drop_before(audio_, now - keep_audio, [](const AudioFrame& f) { return f.t_end(); });
    }

    EventConfig cfg_;
    const MlpModel* model_;
    DetectionMode mode_;
    std::string device_id_;
    RiskyEventFsm fsm_;
    FreeFallTracker freefall_;
    std::vector<AccelSample> raw_;
    std::vector<AccelSample> filtered_;
    std::vector<AudioFrame> audio_;
    std::optional<FreeFallEvent> pending_ff_;
    std::optional<double> next_tick_;
    std::vector<FreeFallEvent> freefalls_;
    std::vector<Observation> shock_obs_;
};

struct DetectionRun {
    std::vector<RiskyAlarm> alarms;
    std::vector<FreeFallEvent> free_falls;
};

/// Offline run over a whole trace. Audio frames are handed over as soon as
/// their start time is reached, the same order a live stream delivers them.
inline DetectionRun run_event_detector(const AccelStream& trace, std::span<const AudioFrame> audio,
                                       const EventConfig& cfg, const MlpModel* shock_model, DetectionMode mode) {
    const AccelStream raw = to_g(trace);
    RiskyEventDetector det(cfg, shock_model, mode, raw.device_id);
    AxisHighPass hp(cfg.cutoff_hz, raw.rate_hz);
    DetectionRun run;
    std::size_t next_audio = 0;
    for (const auto& s : raw.samples) {
        while (next_audio < audio.size() && audio[next_audio].t_start <= s.t) det.push_audio(audio[next_audio++]);
        for (auto& a : det.push(s, hp.process(s))) run.alarms.push_back(a);
    }
    run.free_falls = det.free_falls();
    return run;
}

/// Shock feature vector for the raw window [t0, t0 + length) of a trace.
inline FeatureVector shock_features_at(const AccelStream& trace_g, std::span<const AudioFrame> audio, double t0,
                                       double length) {
    auto part = slice(trace_g.samples, t0, t0 + length);
    if (part.empty()) throw Error(ErrorKind::InsufficientData, "no samples in shock window");
    return shock_features(Window{t0, t0 + length, part}, audio_between(audio, t0, t0 + length));
}

}  // namespace actmon
