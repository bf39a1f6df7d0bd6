#pragma once

// Implicit user identification from 2 s windows of motion and audio,
// minute-level voting, one-vs-rest metrics and a graded security level.

#include <algorithm>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/features.hpp"
#include "actmon/mlp.hpp"
#include "actmon/signal.hpp"
#include "actmon/train_config.hpp"

namespace actmon {

enum class FeatureSet { Combined, MotionOnly, AudioOnly };

inline const char* to_string(FeatureSet f) {
    switch (f) {
    case FeatureSet::Combined: return "combined";
    case FeatureSet::MotionOnly: return "motion";
    case FeatureSet::AudioOnly: return "audio";
    }
    return "?";
}

inline FeatureSet parse_feature_set(const std::string& s) {
    if (s == "combined") return FeatureSet::Combined;
    if (s == "motion") return FeatureSet::MotionOnly;
    if (s == "audio") return FeatureSet::AudioOnly;
    throw Error(ErrorKind::Parameter, "unknown feature set '" + s + "'");
}

inline Schema schema_of(FeatureSet f) {
    switch (f) {
    case FeatureSet::Combined: return Schema::AuthCombined;
    case FeatureSet::MotionOnly: return Schema::MotionAuth;
    case FeatureSet::AudioOnly: return Schema::AudioAuth;
    }
    return Schema::AuthCombined;
}

inline constexpr double kAuthWindowSeconds = 2.0;
inline constexpr std::size_t kMinEnrollWindows = 30;

/// Features for one identification window: raw acceleration in g and the
/// audio recorded over the same interval.
inline FeatureVector auth_window_features(const Window& raw_g, std::span<const double> audio, FeatureSet set) {
    switch (set) {
    case FeatureSet::MotionOnly: return motion_auth_features(raw_g);
    case FeatureSet::AudioOnly: return audio_auth_features(audio);
    case FeatureSet::Combined: return combine_auth(motion_auth_features(raw_g), audio_auth_features(audio));
    }
    throw Error(ErrorKind::Parameter, "bad feature set");
}

/// Disjoint 2 s windows over a whole recording. Windows with fewer than two
/// acceleration samples or no audio (when audio is needed) are skipped.
inline std::vector<FeatureVector> session_auth_features(const AccelStream& raw, std::span<const AudioFrame> audio,
                                                        FeatureSet set, double window_s = kAuthWindowSeconds) {
    const AccelStream g = to_g(raw);
    std::vector<FeatureVector> out;
    for (const auto& w : make_windows(g, window_s, window_s)) {
        if (w.samples.size() < 2) continue;
        const auto a = audio_between(audio, w.t_start, w.t_end);
        if (a.empty() && set != FeatureSet::MotionOnly) continue;
        out.push_back(auth_window_features(w, a, set));
    }
    return out;
}

struct UserProfile {
    std::string user_id;
    int sessions = 0;
    std::size_t total_windows = 0;
};

struct EnrollmentSet {
    std::vector<std::string> users;  // index = label
    std::vector<FeatureVector> windows;
    std::vector<int> labels;
    std::vector<UserProfile> profiles;
};

/// Trains one multi-class identifier over all enrolled users.
inline MlpModel enroll(const EnrollmentSet& data, const TrainConfig& cfg) {
    if (data.users.size() < 2) throw Error(ErrorKind::Data, "enrollment needs at least 2 users");
    if (data.windows.size() != data.labels.size()) throw Error(ErrorKind::Data, "windows and labels differ in length");
    std::vector<std::size_t> count(data.users.size(), 0);
    for (int y : data.labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= data.users.size()) throw Error(ErrorKind::Data, "label out of range");
        ++count[static_cast<std::size_t>(y)];
    }
    for (std::size_t u = 0; u < count.size(); ++u)
        if (count[u] < kMinEnrollWindows)
            throw Error(ErrorKind::Data, "user " + data.users[u] + " has fewer than " +
                                             std::to_string(kMinEnrollWindows) + " windows");
    return mlp_train(data.windows, data.labels, data.users, cfg).model;
}

enum class DecisionMode { PerWindow, Voted };

struct AuthDecision {
    double t = 0.0;
    std::size_t user = 0;
    std::string user_id;
    double score = 0.0;
    DecisionMode mode = DecisionMode::PerWindow;
    std::vector<double> probabilities;  // per-window only

    bool operator==(const AuthDecision&) const = default;
};

/// argmax user (lowest index on ties) with its probability as the score.
inline AuthDecision identify_window(const FeatureVector& x, const MlpModel& m, double t = 0.0) {
    auto p = mlp_predict(m, x);
    const std::size_t best = argmax(p);
    return {t, best, m.class_names[best], p[best], DecisionMode::PerWindow, std::move(p)};
}

/// Plurality vote; ties broken by the higher mean score, then the lower user
/// index. The voted score is the winner's vote fraction.
inline AuthDecision vote_identify(std::span<const AuthDecision> decisions) {
    if (decisions.empty()) throw Error(ErrorKind::InsufficientData, "nothing to vote on");
    struct Tally {
        std::size_t votes = 0;
        double score_sum = 0.0;
        std::string id;
    };
    std::map<std::size_t, Tally> tally;
    double t_last = decisions.front().t;
    for (const auto& d : decisions) {
        auto& e = tally[d.user];
        ++e.votes;
        e.score_sum += d.score;
        e.id = d.user_id;
        t_last = std::max(t_last, d.t);
    }
    auto best = tally.begin();
    for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
        const double mean_it = it->second.score_sum / static_cast<double>(it->second.votes);
        const double mean_best = best->second.score_sum / static_cast<double>(best->second.votes);
        if (it->second.votes > best->second.votes || (it->second.votes == best->second.votes && mean_it > mean_best))
            best = it;
    }
    return {t_last,
            best->first,
            best->second.id,
            static_cast<double>(best->second.votes) / static_cast<double>(decisions.size()),
            DecisionMode::Voted,
            {}};
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

struct UserMetrics {
    std::string user_id;
    std::size_t support = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f_measure = 0.0;
    double roc_area = 0.5;
};

struct AuthMetrics {
    std::vector<UserMetrics> per_user;
    UserMetrics weighted;  // support-weighted averages
    double accuracy = 0.0;
};

inline double f_measure(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

/// Area under the ROC curve by the rank statistic (ties count half).
/// 0.5 when either class is absent.
inline double roc_area(std::span<const double> positive_scores, std::span<const double> negative_scores) {
    if (positive_scores.empty() || negative_scores.empty()) return 0.5;
    std::vector<double> neg(negative_scores.begin(), negative_scores.end());
    std::sort(neg.begin(), neg.end());
    double acc = 0.0;
    for (double s : positive_scores) {
        const auto lo = std::lower_bound(neg.begin(), neg.end(), s);
        const auto hi = std::upper_bound(lo, neg.end(), s);
        acc += static_cast<double>(lo - neg.begin()) + 0.5 * static_cast<double>(hi - lo);
    }
    return acc / (static_cast<double>(positive_scores.size()) * static_cast<double>(neg.size()));
}

/// One-vs-rest precision, recall, F-measure and ROC area per user. ROC
/// scores come from each decision's probability vector.
inline AuthMetrics auth_metrics(std::span<const AuthDecision> predictions, std::span<const std::size_t> labels,
                                const std::vector<std::string>& users) {
    if (predictions.size() != labels.size()) throw Error(ErrorKind::Data, "predictions and labels differ in length");
    if (predictions.empty()) throw Error(ErrorKind::Data, "no predictions");
    const std::size_t n_users = users.size();
    AuthMetrics out;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] >= n_users || predictions[i].user >= n_users) throw Error(ErrorKind::Data, "user index out of range");
        if (predictions[i].probabilities.size() != n_users)
            throw Error(ErrorKind::Data, "decision lacks a full probability vector");
        correct += predictions[i].user == labels[i] ? 1 : 0;
    }
    out.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
    out.weighted.user_id = "weighted";
    out.weighted.roc_area = 0.0;
    std::size_t total_support = 0;
    for (std::size_t u = 0; u < n_users; ++u) {
        UserMetrics m;
        m.user_id = users[u];
        std::size_t tp = 0, fp = 0, fn = 0;
        std::vector<double> pos, neg;
        for (std::size_t i = 0; i < labels.size(); ++i) {
            const bool is_u = labels[i] == u;
            const bool said_u = predictions[i].user == u;
            tp += (is_u && said_u) ? 1 : 0;
            fp += (!is_u && said_u) ? 1 : 0;
            fn += (is_u && !said_u) ? 1 : 0;
            (is_u ? pos : neg).push_back(predictions[i].probabilities[u]);
        }
        m.support = tp + fn;
        m.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
        m.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
        m.f_measure = f_measure(m.precision, m.recall);
        m.roc_area = roc_area(pos, neg);
        const auto w = static_cast<double>(m.support);
        out.weighted.precision += w * m.precision;
        out.weighted.recall += w * m.recall;
        out.weighted.f_measure += w * m.f_measure;
        out.weighted.roc_area += w * m.roc_area;
        total_support += m.support;
        out.per_user.push_back(m);
    }
    const auto total = static_cast<double>(total_support);
    out.weighted.support = total_support;
    out.weighted.precision /= total;
    out.weighted.recall /= total;
    out.weighted.f_measure /= total;
    out.weighted.roc_area /= total;
    return out;
}

inline nlohmann::json to_json(const UserMetrics& m) {
    return {{"user", m.user_id},        {"support", m.support},     {"precision", m.precision},
            {"recall", m.recall},       {"f_measure", m.f_measure}, {"roc_area", m.roc_area}};
}

inline nlohmann::json to_json(const AuthMetrics& a) {
    nlohmann::json users = nlohmann::json::array();
    for (const auto& m : a.per_user) users.push_back(to_json(m));
    return {{"per_user", users}, {"weighted_average", to_json(a.weighted)}, {"accuracy", a.accuracy}};
}

/// Tab-separated table: user, precision, recall, F-measure, ROC area, with a
/// weighted-average row; values to two decimals.
inline std::string format_metrics_table(const AuthMetrics& a) {
    auto row = [](const std::string& name, const UserMetrics& m) {
        char buf[160];
        std::snprintf(buf, sizeof buf, "%s\t%.2f\t%.2f\t%.2f\t%.2f\n", name.c_str(), m.precision, m.recall,
                      m.f_measure, m.roc_area);
        return std::string(buf);
    };
    std::string out = "user\tprecision\trecall\tf_measure\troc_area\n";
    for (const auto& m : a.per_user) out += row(m.user_id, m);
    out += row("weighted_average", a.weighted);
    return out;
}

// ---------------------------------------------------------------------------
// Graded security
// ---------------------------------------------------------------------------

enum class SecurityLevel { Trusted, Elevated, Locked };

inline const char* to_string(SecurityLevel l) {
    switch (l) {
    case SecurityLevel::Trusted: return "trusted";
    case SecurityLevel::Elevated: return "elevated";
    case SecurityLevel::Locked: return "locked";
    }
    return "?";
}

struct SecurityConfig {
    double trusted_score = 0.8;
    double stale_after_s = 300.0;
    int vote_windows = 30;  // 2 s windows per voted decision
};

inline void to_json(nlohmann::json& j, const SecurityConfig& c) {
    j = {{"trusted_score", c.trusted_score}, {"stale_after_s", c.stale_after_s}, {"vote_windows", c.vote_windows}};
}

inline void from_json(const nlohmann::json& j, SecurityConfig& c) {
    SecurityConfig d;
    c.trusted_score = j.value("trusted_score", d.trusted_score);
    c.stale_after_s = j.value("stale_after_s", d.stale_after_s);
    c.vote_windows = j.value("vote_windows", d.vote_windows);
}

/// Locked: a risky alarm at or after the last vote, or the last vote names
/// someone other than the owner. Elevated: no vote yet, a stale vote, or a
/// low-confidence owner vote. Trusted otherwise.
inline SecurityLevel security_level(std::span<const AuthDecision> recent, std::size_t owner, double now,
                                    std::optional<double> last_alarm, const SecurityConfig& cfg = {}) {
    const AuthDecision* last_vote = nullptr;
    for (const auto& d : recent)
        if (d.mode == DecisionMode::Voted && (!last_vote || d.t >= last_vote->t)) last_vote = &d;
    if (last_alarm && (!last_vote || *last_alarm >= last_vote->t)) return SecurityLevel::Locked;
    if (!last_vote) return SecurityLevel::Elevated;
    if (last_vote->user != owner) return SecurityLevel::Locked;
    if (now - last_vote->t > cfg.stale_after_s) return SecurityLevel::Elevated;
    return last_vote->score >= cfg.trusted_score ? SecurityLevel::Trusted : SecurityLevel::Elevated;
}

}  // namespace actmon
