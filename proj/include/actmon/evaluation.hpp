#pragma once

// End-to-end experiment procedures shared by the command-line tool and the
// acceptance suite: activity classification, shock training and alarm
// counting, and user identification with voting.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/activity.hpp"
#include "actmon/auth.hpp"
#include "actmon/corpus.hpp"
#include "actmon/events.hpp"
#include "actmon/mlp.hpp"

namespace actmon::eval {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Activity
// ---------------------------------------------------------------------------

struct ActivityExperiment {
    ActivityTrainReport training;
    ConfusionMatrix confusion;
    std::size_t train_size = 0;
};

inline ActivityExperiment activity_experiment(const std::vector<corpus::Entry>& entries, const TrainConfig& cfg,
                                              const ActivityFeatureConfig& fcfg = {}) {
    ActivityExperiment ex;
    const auto train = corpus::activity_instances(entries, corpus::Split::Train, fcfg);
    const auto test = corpus::activity_instances(entries, corpus::Split::Test, fcfg);
    ex.train_size = train.size();
    ex.training = train_activity_classifier_detailed(train, cfg);
    ex.confusion = evaluate_classifier(ex.training.models, test);
    return ex;
}

// ---------------------------------------------------------------------------
// Shock detector and alarm counts
// ---------------------------------------------------------------------------

inline const std::vector<std::string>& shock_classes() {
    static const std::vector<std::string> names{"normal", "shock"};
    return names;
}

/// Evaluation grid of the streaming detector for a trace: windows
/// [t - shock_window, t) at t = t0 + tick, t0 + 2 tick, ...
inline std::vector<double> tick_ends(const AccelStream& s, const EventConfig& cfg) {
    std::vector<double> out;
    if (s.samples.empty()) return out;
    const double t0 = s.samples.front().t;
    for (double t = t0 + cfg.tick; t <= s.samples.back().t + kTimeEps; t += cfg.tick) out.push_back(t);
    return out;
}

struct ShockTrainingSet {
    std::vector<FeatureVector> xs;
    std::vector<int> labels;  // index into shock_classes()
};

/// One example per trace. Shock episodes contribute the first detector window
/// that contains the impact; other traces the window with the largest norm.
inline ShockTrainingSet shock_training_set(std::span<const corpus::Entry> entries, const EventConfig& cfg) {
    ShockTrainingSet set;
    for (const auto& e : entries) {
        const AccelStream g = to_g(e.accel);
        const auto ends = tick_ends(g, cfg);
        if (ends.empty()) continue;
        const bool shock = corpus::is_shock_episode(e) || (e.truth.contains("t_impact") && !e.truth["t_impact"].is_null());
        std::optional<FeatureVector> chosen;
        if (shock) {
            const double t_imp = e.truth.at("t_impact").get<double>();
            for (double t : ends) {
                if (t_imp >= t - cfg.shock_window - kTimeEps && t_imp < t - kTimeEps) {
                    chosen = shock_features_at(g, e.audio, t - cfg.shock_window, cfg.shock_window);
                    break;
                }
            }
        } else {
            double best = -1.0;
            for (double t : ends) {
                auto part = slice(g.samples, t - cfg.shock_window, t);
                if (part.size() < 2) continue;
                auto x = shock_features_at(g, e.audio, t - cfg.shock_window, cfg.shock_window);
                if (x[2] > best) {
                    best = x[2];
                    chosen = std::move(x);
                }
            }
        }
        if (!chosen) continue;
        set.xs.push_back(std::move(*chosen));
        set.labels.push_back(shock ? 1 : 0);
    }
    return set;
}

inline MlpTrainResult train_shock_detector(std::span<const corpus::Entry> entries, const EventConfig& ecfg,
                                           const TrainConfig& tcfg) {
    const auto set = shock_training_set(entries, ecfg);
    return mlp_train(set.xs, set.labels, shock_classes(), tcfg);
}

struct TraceOutcome {
    std::string id;
    std::string label;
    bool risky = false;
    std::vector<RiskyAlarm> three_step;
    std::vector<RiskyAlarm> impact_only;
    std::vector<FreeFallEvent> free_falls;
};

struct EventEvaluation {
    std::vector<TraceOutcome> traces;
    int abandoned = 0;
    int abandoned_detected = 0;      // three-step, exactly at the drop
    int pickup_alarms = 0;           // three-step alarms on drop-and-pickup episodes
    int false_alarms_three_step = 0; // alarms on traces that are not risky
    int false_alarms_impact_only = 0;
    double max_alarm_delay = 0.0;    // t_alarm - end of the quiet interval, over detected drops

    double true_alarm_rate() const {
        return abandoned == 0 ? 0.0 : static_cast<double>(abandoned_detected) / static_cast<double>(abandoned);
    }
};

inline EventEvaluation evaluate_events(std::span<const corpus::Entry> entries, const MlpModel& model,
                                       const EventConfig& cfg) {
    EventEvaluation ev;
    for (const auto& e : entries) {
        TraceOutcome o;
        o.id = e.id;
        o.label = e.label;
        o.risky = e.truth.value("risky", false);
        auto three = run_event_detector(e.accel, e.audio, cfg, &model, DetectionMode::ThreeStep);
        auto only = run_event_detector(e.accel, e.audio, cfg, &model, DetectionMode::ImpactOnly);
        o.three_step = std::move(three.alarms);
        o.impact_only = std::move(only.alarms);
        o.free_falls = std::move(three.free_falls);
        if (o.risky) {
            ++ev.abandoned;
            const double t_imp = e.truth.at("t_impact").get<double>();
            if (o.three_step.size() == 1 && std::abs(o.three_step.front().t_impact - t_imp) <= cfg.shock_window) {
                ++ev.abandoned_detected;
                ev.max_alarm_delay =
                    std::max(ev.max_alarm_delay, o.three_step.front().t_alarm - (t_imp + cfg.quiet_delay + cfg.quiet_duration));
            }
        } else {
            ev.false_alarms_three_step += static_cast<int>(o.three_step.size());
            ev.false_alarms_impact_only += static_cast<int>(o.impact_only.size());
            if (e.label == "drop_pickup") ev.pickup_alarms += static_cast<int>(o.three_step.size());
        }
        ev.traces.push_back(std::move(o));
    }
    return ev;
}

inline json to_json(const EventEvaluation& ev) {
    json per_kind = json::object();
    for (const auto& o : ev.traces) {
        auto& k = per_kind[o.label];
        if (k.is_null()) k = {{"traces", 0}, {"three_step_alarms", 0}, {"impact_only_alarms", 0}};
        k["traces"] = k["traces"].get<int>() + 1;
        k["three_step_alarms"] = k["three_step_alarms"].get<int>() + static_cast<int>(o.three_step.size());
        k["impact_only_alarms"] = k["impact_only_alarms"].get<int>() + static_cast<int>(o.impact_only.size());
    }
    return {{"task", "events"},
            {"abandoned_episodes", ev.abandoned},
            {"abandoned_detected", ev.abandoned_detected},
            {"true_alarm_rate", ev.true_alarm_rate()},
            {"pickup_alarms", ev.pickup_alarms},
            {"false_alarms", {{"three_step", ev.false_alarms_three_step}, {"impact_only", ev.false_alarms_impact_only}}},
            {"max_alarm_delay_s", ev.max_alarm_delay},
            {"by_kind", per_kind}};
}

// ---------------------------------------------------------------------------
// Authentication
// ---------------------------------------------------------------------------

struct LabeledWindows {
    std::vector<FeatureVector> xs;
    std::vector<int> labels;
    std::vector<double> t;
    std::vector<std::string> source;  // entry id per window
};

/// User ids in first-appearance order.
inline std::vector<std::string> user_list(std::span<const corpus::Entry> entries) {
    std::vector<std::string> users;
    for (const auto& e : entries)
        if (std::find(users.begin(), users.end(), e.label) == users.end()) users.push_back(e.label);
    return users;
}

inline LabeledWindows auth_windows(std::span<const corpus::Entry> entries, const std::vector<std::string>& users,
                                   FeatureSet set, corpus::Split split) {
    LabeledWindows out;
    for (const auto& e : entries) {
        if (e.split != split) continue;
        const auto it = std::find(users.begin(), users.end(), e.label);
        if (it == users.end()) throw Error(ErrorKind::Data, "unknown user " + e.label);
        const AccelStream g = to_g(e.accel);
        for (const auto& w : make_windows(g, kAuthWindowSeconds, kAuthWindowSeconds)) {
            if (w.samples.size() < 2) continue;
            const auto a = audio_between(e.audio, w.t_start, w.t_end);
            if (a.empty() && set != FeatureSet::MotionOnly) continue;
            out.xs.push_back(auth_window_features(w, a, set));
            out.labels.push_back(static_cast<int>(it - users.begin()));
            out.t.push_back(w.t_end);
            out.source.push_back(e.id);
        }
    }
    return out;
}

inline EnrollmentSet enrollment_set(const LabeledWindows& w, const std::vector<std::string>& users) {
    EnrollmentSet set;
    set.users = users;
    set.windows = w.xs;
    set.labels = w.labels;
    for (const auto& u : users) {
        UserProfile p;
        p.user_id = u;
        set.profiles.push_back(p);
    }
    for (std::size_t i = 0; i < w.labels.size(); ++i) ++set.profiles[static_cast<std::size_t>(w.labels[i])].total_windows;
    return set;
}

struct AuthExperiment {
    FeatureSet set = FeatureSet::Combined;
    MlpModel model;
    std::vector<AuthDecision> window_decisions;
    std::vector<std::size_t> window_labels;
    std::vector<AuthDecision> voted;
    std::vector<std::size_t> voted_labels;
    AuthMetrics metrics;
    double window_accuracy = 0.0;
    double voted_accuracy = 0.0;
};

/// Consecutive groups of `per_vote` decisions from the same recording; a
/// trailing partial group is dropped.
inline void vote_groups(const std::vector<AuthDecision>& decisions, const std::vector<std::size_t>& labels,
                        const std::vector<std::string>& source, std::size_t per_vote, std::vector<AuthDecision>& voted,
                        std::vector<std::size_t>& voted_labels) {
    std::size_t i = 0;
    while (i < decisions.size()) {
        std::size_t j = i;
        while (j < decisions.size() && source[j] == source[i]) ++j;
        for (std::size_t g = i; g + per_vote <= j; g += per_vote) {
            voted.push_back(vote_identify(std::span(decisions).subspan(g, per_vote)));
            voted_labels.push_back(labels[g]);
        }
        i = j;
    }
}

inline AuthExperiment auth_experiment(std::span<const corpus::Entry> entries, FeatureSet set, const TrainConfig& cfg,
                                      std::size_t per_vote = 30) {
    AuthExperiment ex;
    ex.set = set;
    const auto users = user_list(entries);
    const auto train = auth_windows(entries, users, set, corpus::Split::Train);
    const auto test = auth_windows(entries, users, set, corpus::Split::Test);
    ex.model = enroll(enrollment_set(train, users), cfg);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < test.xs.size(); ++i) {
        ex.window_decisions.push_back(identify_window(test.xs[i], ex.model, test.t[i]));
        ex.window_labels.push_back(static_cast<std::size_t>(test.labels[i]));
        correct += ex.window_decisions.back().user == ex.window_labels.back() ? 1 : 0;
    }
    if (ex.window_decisions.empty()) throw Error(ErrorKind::Data, "no test windows");
    ex.window_accuracy = static_cast<double>(correct) / static_cast<double>(ex.window_decisions.size());
    ex.metrics = auth_metrics(ex.window_decisions, ex.window_labels, users);
    vote_groups(ex.window_decisions, ex.window_labels, test.source, per_vote, ex.voted, ex.voted_labels);
    std::size_t vc = 0;
    for (std::size_t i = 0; i < ex.voted.size(); ++i) vc += ex.voted[i].user == ex.voted_labels[i] ? 1 : 0;
    ex.voted_accuracy = ex.voted.empty() ? 0.0 : static_cast<double>(vc) / static_cast<double>(ex.voted.size());
    return ex;
}

inline json to_json(const AuthExperiment& ex) {
    return {{"task", "auth"},
            {"features", to_string(ex.set)},
            {"windows", ex.window_decisions.size()},
            {"window_accuracy", ex.window_accuracy},
            {"votes", ex.voted.size()},
            {"voted_accuracy", ex.voted_accuracy},
            {"metrics", to_json(ex.metrics)}};
}

}  // namespace actmon::eval
