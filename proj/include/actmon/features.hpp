#pragma once

// Window statistics feeding the GMM and MLP models.
//
// Order-sensitive features: mean |jerk| (activity, shock) and the DFT
// magnitude variance (audio). All others are permutation-invariant within a
// window.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/error.hpp"
#include "actmon/signal.hpp"

namespace actmon {

enum class Schema { Activity, MotionAuth, AudioAuth, AuthCombined, Shock };

struct SchemaInfo {
    Schema id;
    const char* name;
    std::vector<std::string> labels;
};

inline constexpr int kSchemaVersion = 1;

inline const SchemaInfo& schema_info(Schema s) {
    static const std::array<SchemaInfo, 5> registry{{
        {Schema::Activity, "activity", {"mean_norm", "mean_abs_jerk"}},
        {Schema::MotionAuth,
         "motion-auth",
         {"mean_x", "mean_y", "mean_z", "var_x", "var_y", "var_z", "mean_norm", "var_norm", "corr_xy",
          "corr_xz", "corr_yz"}},
        {Schema::AudioAuth, "audio-auth", {"audio_mean", "audio_var", "audio_energy", "audio_dft_var"}},
        {Schema::AuthCombined,
         "auth-combined",
         {"mean_x", "mean_y", "mean_z", "var_x", "var_y", "var_z", "mean_norm", "var_norm", "corr_xy",
          "corr_xz", "corr_yz", "audio_mean", "audio_var", "audio_energy", "audio_dft_var"}},
        {Schema::Shock,
         "shock",
         {"mean_norm", "var_norm", "max_norm", "mean_abs_jerk", "audio_mean", "audio_var", "audio_energy",
          "audio_peak"}},
    }};
    return registry[static_cast<std::size_t>(s)];
}

inline std::size_t schema_length(Schema s) { return schema_info(s).labels.size(); }
inline const char* to_string(Schema s) { return schema_info(s).name; }

inline Schema parse_schema(const std::string& name) {
    for (Schema s : {Schema::Activity, Schema::MotionAuth, Schema::AudioAuth, Schema::AuthCombined, Schema::Shock})
        if (name == schema_info(s).name) return s;
    throw Error(ErrorKind::Schema, "unknown feature schema '" + name + "'");
}

/// Manifest stored alongside every trained model.
inline nlohmann::json schema_manifest(Schema s) {
    const auto& info = schema_info(s);
    return {{"version", kSchemaVersion}, {"name", info.name}, {"length", info.labels.size()}, {"labels", info.labels}};
}

/// Parses a manifest and checks it against the compiled-in registry.
inline Schema check_manifest(const nlohmann::json& m) {
    try {
        if (m.at("version").get<int>() != kSchemaVersion) throw Error(ErrorKind::Schema, "schema version mismatch");
        Schema s = parse_schema(m.at("name").get<std::string>());
        const auto& info = schema_info(s);
        if (m.at("length").get<std::size_t>() != info.labels.size() ||
            m.at("labels").get<std::vector<std::string>>() != info.labels)
            throw Error(ErrorKind::Schema, std::string("manifest disagrees with registry for ") + info.name);
        return s;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::Schema, std::string("malformed schema manifest: ") + e.what());
    }
}

struct FeatureVector {
    Schema schema = Schema::Activity;
    std::vector<double> values;

    std::size_t size() const { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    bool operator==(const FeatureVector&) const = default;
};

inline void require_schema(const FeatureVector& x, Schema expected) {
    if (x.schema != expected || x.values.size() != schema_length(expected))
        throw Error(ErrorKind::Schema, std::string("expected ") + to_string(expected) + " features, got " +
                                           to_string(x.schema) + "[" + std::to_string(x.values.size()) + "]");
}

namespace detail {

inline double mean(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

/// Two-pass population variance.
inline double variance(std::span<const double> v, double m) {
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size());
}

/// Pearson correlation; 0 when either side has zero variance.
inline double correlation(std::span<const double> a, std::span<const double> b) {
    const double ma = mean(a), mb = mean(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa <= 0.0 || sbb <= 0.0) return 0.0;
    const double r = sab / std::sqrt(saa * sbb);
    return std::clamp(r, -1.0, 1.0);
}

inline double mean_abs_jerk(std::span<const double> mags) {
    double s = 0.0;
    for (std::size_t k = 1; k < mags.size(); ++k) s += std::abs(mags[k] - mags[k - 1]);
    return s / static_cast<double>(mags.size() - 1);
}

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                auto u = a[i + j];
                auto v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

}  // namespace detail

inline constexpr std::size_t kAudioDftSize = 256;

/// Reduces an audio window to kAudioDftSize points: block averages when
/// longer (block k covers [floor(k*N/256), floor((k+1)*N/256))), zero padding
/// when shorter.
inline std::vector<double> downmix_for_dft(std::span<const double> samples) {
    const std::size_t n = samples.size();
    std::vector<double> out(kAudioDftSize, 0.0);
    if (n <= kAudioDftSize) {
        std::copy(samples.begin(), samples.end(), out.begin());
        return out;
    }
    for (std::size_t k = 0; k < kAudioDftSize; ++k) {
        const std::size_t lo = k * n / kAudioDftSize;
        const std::size_t hi = (k + 1) * n / kAudioDftSize;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += samples[i];
        out[k] = s / static_cast<double>(hi - lo);
    }
    return out;
}

/// Population variance of |X_k| / 256 over the one-sided bins k = 1..128.
inline double dft_magnitude_variance(std::span<const double> samples) {
    auto reduced = downmix_for_dft(samples);
    std::vector<std::complex<double>> spec(reduced.begin(), reduced.end());
    detail::fft(spec);
    std::vector<double> mags;
    mags.reserve(kAudioDftSize / 2);
    for (std::size_t k = 1; k <= kAudioDftSize / 2; ++k)
        mags.push_back(std::abs(spec[k]) / static_cast<double>(kAudioDftSize));
    return detail::variance(mags, detail::mean(mags));
}

/// [mean |a|, mean |jerk|] over a window of high-passed samples.
inline FeatureVector activity_features(const Window& w) {
    if (w.samples.size() < 2) throw Error(ErrorKind::InsufficientData, "activity features need >= 2 samples");
    auto mags = magnitudes(w.samples);
    return {Schema::Activity, {detail::mean(mags), detail::mean_abs_jerk(mags)}};
}

/// [mean_x, mean_y, mean_z, var_x, var_y, var_z, mean_norm, var_norm,
///  corr_xy, corr_xz, corr_yz] over raw (unfiltered) samples.
inline FeatureVector motion_auth_features(const Window& w) {
    const std::size_t n = w.samples.size();
    if (n < 2) throw Error(ErrorKind::InsufficientData, "motion features need >= 2 samples");
    std::vector<double> x(n), y(n), z(n);
    for (std::size_t i = 0; i < n; ++i) {
        x[i] = w.samples[i].ax;
        y[i] = w.samples[i].ay;
        z[i] = w.samples[i].az;
    }
    auto norm = magnitudes(w.samples);
    const double mx = detail::mean(x), my = detail::mean(y), mz = detail::mean(z), mn = detail::mean(norm);
    return {Schema::MotionAuth,
            {mx, my, mz, detail::variance(x, mx), detail::variance(y, my), detail::variance(z, mz), mn,
             detail::variance(norm, mn), detail::correlation(x, y), detail::correlation(x, z),
             detail::correlation(y, z)}};
}

/// [mean, population variance, energy = sum(s^2)/N, DFT magnitude variance].
inline FeatureVector audio_auth_features(std::span<const double> samples) {
    if (samples.empty()) throw Error(ErrorKind::InsufficientData, "audio features need a non-empty frame");
    const double m = detail::mean(samples);
    double energy = 0.0;
    for (double s : samples) energy += s * s;
    energy /= static_cast<double>(samples.size());
    return {Schema::AudioAuth, {m, detail::variance(samples, m), energy, dft_magnitude_variance(samples)}};
}

inline FeatureVector audio_auth_features(const AudioFrame& f) { return audio_auth_features(std::span(f.samples)); }

/// Concatenates the audio samples of `frames` that fall in [t0, t1).
/// Frames must be time ordered.
inline std::vector<double> audio_between(std::span<const AudioFrame> frames, double t0, double t1) {
    std::vector<double> out;
    for (const auto& f : frames) {
        if (f.t_end() <= t0 || f.t_start >= t1) continue;
        const double dt = 1.0 / f.rate_hz;
        const auto n = static_cast<std::ptrdiff_t>(f.samples.size());
        auto first = static_cast<std::ptrdiff_t>(std::ceil((t0 - f.t_start) / dt - 1e-9));
        auto last = static_cast<std::ptrdiff_t>(std::ceil((t1 - f.t_start) / dt - 1e-9));
        first = std::clamp<std::ptrdiff_t>(first, 0, n);
        last = std::clamp<std::ptrdiff_t>(last, 0, n);
        out.insert(out.end(), f.samples.begin() + first, f.samples.begin() + last);
    }
    return out;
}

/// Impact features over a raw acceleration window and its audio:
/// [mean_norm, var_norm, max_norm, mean |jerk|, audio mean, audio variance,
///  audio energy, audio peak |amplitude|]. Missing audio contributes zeros.
inline FeatureVector shock_features(const Window& w, std::span<const double> audio) {
    if (w.samples.empty()) throw Error(ErrorKind::InsufficientData, "shock features need samples");
    auto norm = magnitudes(w.samples);
    const double mn = detail::mean(norm);
    double mx = 0.0;
    for (double v : norm) mx = std::max(mx, v);
    const double jerk = norm.size() >= 2 ? detail::mean_abs_jerk(norm) : 0.0;
    double am = 0.0, av = 0.0, ae = 0.0, peak = 0.0;
    if (!audio.empty()) {
        am = detail::mean(audio);
        av = detail::variance(audio, am);
        for (double s : audio) {
            ae += s * s;
            peak = std::max(peak, std::abs(s));
        }
        ae /= static_cast<double>(audio.size());
    }
    return {Schema::Shock, {mn, detail::variance(norm, mn), mx, jerk, am, av, ae, peak}};
}

inline FeatureVector shock_features(const Window& w, const AudioFrame& f) {
    if (f.samples.empty()) throw Error(ErrorKind::InsufficientData, "shock features need audio");
    return shock_features(w, std::span(f.samples));
}

/// Element-wise mean of same-schema vectors.
inline FeatureVector instance_features(std::span<const FeatureVector> windows) {
    if (windows.empty()) throw Error(ErrorKind::InsufficientData, "no windows to average");
    FeatureVector out{windows.front().schema, std::vector<double>(windows.front().size(), 0.0)};
    for (const auto& w : windows) {
        if (w.schema != out.schema || w.size() != out.size())
            throw Error(ErrorKind::Schema, "mixed schemas in instance average");
        for (std::size_t i = 0; i < w.size(); ++i) out.values[i] += w.values[i];
    }
    for (double& v : out.values) v /= static_cast<double>(windows.size());
    return out;
}

/// motion-auth ++ audio-auth.
inline FeatureVector combine_auth(const FeatureVector& motion, const FeatureVector& audio) {
    require_schema(motion, Schema::MotionAuth);
    require_schema(audio, Schema::AudioAuth);
    FeatureVector out{Schema::AuthCombined, motion.values};
    out.values.insert(out.values.end(), audio.values.begin(), audio.values.end());
    return out;
}

}  // namespace actmon
