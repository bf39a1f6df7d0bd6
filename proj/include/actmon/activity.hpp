#pragma once

// Activity level (peak-to-valley of the filtered magnitude) and the
// four-class GMM activity classifier.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/gmm.hpp"
#include "actmon/signal.hpp"
#include "actmon/train_config.hpp"

namespace actmon {

enum class ActivityClass { Walking = 0, Running = 1, Resting = 2, NoActivity = 3 };

inline constexpr std::size_t kActivityClassCount = 4;
/// Fixed order; also the tie-break order of the classifier.
inline constexpr std::array<ActivityClass, kActivityClassCount> kActivityClasses{
    ActivityClass::Walking, ActivityClass::Running, ActivityClass::Resting, ActivityClass::NoActivity};

inline const char* to_string(ActivityClass c) {
    switch (c) {
    case ActivityClass::Walking: return "walking";
    case ActivityClass::Running: return "running";
    case ActivityClass::Resting: return "resting";
    case ActivityClass::NoActivity: return "no_activity";
    }
    return "?";
}

inline ActivityClass parse_activity_class(const std::string& s) {
    for (auto c : kActivityClasses)
        if (s == to_string(c)) return c;
    throw Error(ErrorKind::Parse, "unknown activity class '" + s + "'");
}

inline std::size_t index_of(ActivityClass c) { return static_cast<std::size_t>(c); }

struct ActivityInstance {
    std::string device_id;
    double t_start = 0.0;
    double duration_s = 10.0;
    FeatureVector feature;
    std::optional<ActivityClass> label;
};

struct ActivityLevelPoint {
    double t = 0.0;
    double level = 0.0;  // g

    bool operator==(const ActivityLevelPoint&) const = default;
};

inline constexpr double kDefaultProminence = 0.02;  // g

/// Streaming peak/valley tracker with hysteresis. A peak is confirmed once the
/// signal has dropped `prominence` below it, a valley once the signal has
/// risen `prominence` above it. A peak only counts after a preceding rise, so
/// monotone series produce nothing. On plateaus the last sample wins.
class LevelTracker {
public:
    explicit LevelTracker(double prominence = kDefaultProminence) : prominence_(prominence) {}

    std::optional<ActivityLevelPoint> push(double t, double x) {
        switch (mode_) {
        case Mode::Start:
            ext_ = x;
            mode_ = Mode::Initial;
            return std::nullopt;
        case Mode::Initial:
            if (x <= ext_) {
                ext_ = x;
            } else if (x - ext_ >= prominence_) {
                mode_ = Mode::SeekPeak;
                ext_ = x;
                ext_t_ = t;
            }
            return std::nullopt;
        case Mode::SeekPeak:
            if (x >= ext_) {
                ext_ = x;
                ext_t_ = t;
            } else if (ext_ - x >= prominence_) {
                peak_ = ext_;
                peak_t_ = ext_t_;
                mode_ = Mode::SeekValley;
                ext_ = x;
            }
            return std::nullopt;
        case Mode::SeekValley:
            if (x <= ext_) {
                ext_ = x;
            } else if (x - ext_ >= prominence_) {
                ActivityLevelPoint p{peak_t_, peak_ - ext_};
                mode_ = Mode::SeekPeak;
                ext_ = x;
                ext_t_ = t;
                return p;
            }
            return std::nullopt;
        }
        return std::nullopt;
    }

    /// Closes a pending peak against the lowest value seen since (end of series
    /// counts as a valley).
    std::optional<ActivityLevelPoint> finish() {
        if (mode_ == Mode::SeekValley && peak_ - ext_ >= prominence_) {
            mode_ = Mode::Start;
            return ActivityLevelPoint{peak_t_, peak_ - ext_};
        }
        return std::nullopt;
    }

    void reset() { mode_ = Mode::Start; }

private:
    enum class Mode { Start, Initial, SeekPeak, SeekValley };
    double prominence_;
    Mode mode_ = Mode::Start;
    double ext_ = 0.0;
    double ext_t_ = 0.0;
    double peak_ = 0.0;
    double peak_t_ = 0.0;
};

/// One point per peak/next-valley pair, level = |peak - valley|, stamped at
/// the peak.
inline std::vector<ActivityLevelPoint> activity_level(std::span<const double> t, std::span<const double> mags,
                                                      double prominence = kDefaultProminence) {
    if (t.size() != mags.size()) throw Error(ErrorKind::Parameter, "time and magnitude lengths differ");
    if (mags.size() < 3) throw Error(ErrorKind::InsufficientData, "activity level needs >= 3 samples");
    LevelTracker tracker(prominence);
    std::vector<ActivityLevelPoint> out;
    for (std::size_t i = 0; i < mags.size(); ++i)
        if (auto p = tracker.push(t[i], mags[i])) out.push_back(*p);
    if (auto p = tracker.finish()) out.push_back(*p);
    return out;
}

inline std::vector<ActivityLevelPoint> activity_level(const AccelStream& filtered,
                                                      double prominence = kDefaultProminence) {
    std::vector<double> t;
    t.reserve(filtered.samples.size());
    for (const auto& s : filtered.samples) t.push_back(s.t);
    return activity_level(t, magnitudes(filtered.samples), prominence);
}

inline double mean_level(std::span<const ActivityLevelPoint> pts) {
    if (pts.empty()) return 0.0;
    double s = 0.0;
    for (const auto& p : pts) s += p.level;
    return s / static_cast<double>(pts.size());
}

// ---------------------------------------------------------------------------
// Instance features
// ---------------------------------------------------------------------------

struct ActivityFeatureConfig {
    double cutoff_hz = kDefaultCutoffHz;
    double window_s = 2.0;
    double hop_s = 2.0;
    double instance_s = 10.0;
};

/// High-pass the raw trace, compute activity features per window and average
/// them into one instance vector.
inline FeatureVector instance_feature_from_trace(const AccelStream& raw, const ActivityFeatureConfig& cfg = {}) {
    const AccelStream filtered = high_pass(to_g(raw), cfg.cutoff_hz);
    std::vector<FeatureVector> per_window;
    for (const auto& w : make_windows(filtered, cfg.window_s, cfg.hop_s))
        if (w.samples.size() >= 2) per_window.push_back(activity_features(w));
    if (per_window.empty()) throw Error(ErrorKind::InsufficientData, "trace shorter than one feature window");
    return instance_features(per_window);
}

// ---------------------------------------------------------------------------
// Classifier
// ---------------------------------------------------------------------------

struct ActivityModels {
    std::array<GmmModel, kActivityClassCount> models;
};

struct ActivityClassification {
    ActivityClass label = ActivityClass::Walking;
    std::array<double, kActivityClassCount> scores{};
};

struct ActivityTrainReport {
    ActivityModels models;
    std::array<GmmFitResult, kActivityClassCount> fits;
};

inline ActivityTrainReport train_activity_classifier_detailed(std::span<const ActivityInstance> instances,
                                                              const TrainConfig& cfg) {
    std::array<std::vector<FeatureVector>, kActivityClassCount> by_class;
    for (const auto& inst : instances) {
        if (!inst.label) continue;
        require_schema(inst.feature, Schema::Activity);
        by_class[index_of(*inst.label)].push_back(inst.feature);
    }
    ActivityTrainReport rep;
    for (auto c : kActivityClasses) {
        const auto& xs = by_class[index_of(c)];
        if (xs.size() < static_cast<std::size_t>(cfg.k))
            throw Error(ErrorKind::Data, std::string("class ") + to_string(c) + " has fewer than k instances");
        rep.fits[index_of(c)] = gmm_fit_detailed(xs, cfg.k, cfg);
        rep.fits[index_of(c)].model.class_label = to_string(c);
        rep.models.models[index_of(c)] = rep.fits[index_of(c)].model;
    }
    return rep;
}

inline ActivityModels train_activity_classifier(std::span<const ActivityInstance> instances, const TrainConfig& cfg) {
    return train_activity_classifier_detailed(instances, cfg).models;
}

/// argmax over the four class log-likelihoods; ties go to the earlier class.
inline ActivityClassification classify_activity(const FeatureVector& x, const ActivityModels& m) {
    require_schema(x, Schema::Activity);
    ActivityClassification out;
    for (auto c : kActivityClasses) out.scores[index_of(c)] = gmm_loglik(m.models[index_of(c)], x);
    std::size_t best = 0;
    for (std::size_t i = 1; i < kActivityClassCount; ++i)
        if (out.scores[i] > out.scores[best]) best = i;
    out.label = kActivityClasses[best];
    return out;
}

struct ConfusionMatrix {
    std::array<std::array<long, kActivityClassCount>, kActivityClassCount> counts{};  // [true][predicted]

    long total() const {
        long t = 0;
        for (const auto& r : counts)
            for (long v : r) t += v;
        return t;
    }
    long correct() const {
        long t = 0;
        for (std::size_t i = 0; i < kActivityClassCount; ++i) t += counts[i][i];
        return t;
    }
    double accuracy() const { return total() == 0 ? 0.0 : static_cast<double>(correct()) / static_cast<double>(total()); }
    double recall(ActivityClass c) const {
        const auto& row = counts[index_of(c)];
        long n = 0;
        for (long v : row) n += v;
        return n == 0 ? 0.0 : static_cast<double>(row[index_of(c)]) / static_cast<double>(n);
    }
    /// Errors inside {walking, running} and {resting, no_activity}.
    long within_block_errors() const {
        return counts[0][1] + counts[1][0] + counts[2][3] + counts[3][2];
    }
    long cross_block_errors() const { return total() - correct() - within_block_errors(); }
};

inline ConfusionMatrix evaluate_classifier(const ActivityModels& m, std::span<const ActivityInstance> test) {
    if (test.empty()) throw Error(ErrorKind::Data, "empty test set");
    ConfusionMatrix cm;
    for (const auto& inst : test) {
        if (!inst.label) throw Error(ErrorKind::Data, "unlabeled test instance");
        cm.counts[index_of(*inst.label)][index_of(classify_activity(inst.feature, m).label)] += 1;
    }
    return cm;
}

inline nlohmann::json evaluation_report(const ConfusionMatrix& cm) {
    nlohmann::json counts = nlohmann::json::array();
    nlohmann::json recall = nlohmann::json::object();
    for (auto c : kActivityClasses) {
        counts.push_back(cm.counts[index_of(c)]);
        recall[to_string(c)] = cm.recall(c);
    }
    std::vector<std::string> order;
    for (auto c : kActivityClasses) order.emplace_back(to_string(c));
    return {{"task", "activity"},        {"classes", order},        {"confusion", counts},
            {"total", cm.total()},       {"accuracy", cm.accuracy()}, {"per_class_recall", recall},
            {"within_block_errors", cm.within_block_errors()}, {"cross_block_errors", cm.cross_block_errors()}};
}

inline void to_json(nlohmann::json& j, const ActivityModels& m) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& g : m.models) arr.push_back(g);
    j = {{"type", "activity-classifier"}, {"version", 1}, {"models", arr}};
}

inline void from_json(const nlohmann::json& j, ActivityModels& m) {
    try {
        if (j.at("type") != "activity-classifier") throw Error(ErrorKind::CorruptModel, "not an activity classifier");
        const auto& arr = j.at("models");
        if (arr.size() != kActivityClassCount) throw Error(ErrorKind::CorruptModel, "activity classifier needs 4 models");
        for (auto c : kActivityClasses) {
            m.models[index_of(c)] = arr.at(index_of(c)).get<GmmModel>();
            if (m.models[index_of(c)].class_label != to_string(c))
                throw Error(ErrorKind::CorruptModel, "activity models out of order");
            if (m.models[index_of(c)].schema != Schema::Activity)
                throw Error(ErrorKind::Schema, "activity model has wrong feature schema");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::CorruptModel, std::string("activity classifier: ") + e.what());
    }
}

}  // namespace actmon
