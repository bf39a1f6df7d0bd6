#pragma once

// Seeded generators of ground-truth traces: activity segments, drops and
// other handling events, and per-user walking sessions with audio.
// Every generator is a pure function of its spec and seed.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "actmon/activity.hpp"
#include "actmon/error.hpp"
#include "actmon/signal.hpp"

namespace actmon::synth {

using json = nlohmann::json;

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// splitmix64; used to derive independent per-entry seeds from a recipe seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (salt + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;
};

inline Vec3 operator+(Vec3 a, Vec3 b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
inline Vec3 operator*(double s, Vec3 a) { return {s * a.x, s * a.y, s * a.z}; }
inline double dot(Vec3 a, Vec3 b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline Vec3 cross(Vec3 a, Vec3 b) { return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x}; }
inline Vec3 normalized(Vec3 a) { return (1.0 / std::sqrt(dot(a, a))) * a; }

/// Orthonormal device-frame basis: `up` opposes gravity, `fwd` and `side`
/// complete it.
struct Orientation {
    Vec3 up, fwd, side;

    static Orientation from_up(Vec3 up_dir) {
        Orientation o;
        o.up = normalized(up_dir);
        Vec3 ref = std::abs(o.up.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
        o.side = normalized(cross(o.up, ref));
        o.fwd = cross(o.side, o.up);
        return o;
    }
};

/// Phone upright in a trouser pocket, tilted by small seeded angles.
inline Orientation pocket_orientation(std::mt19937_64& rng, double max_tilt_rad = 0.25) {
    std::uniform_real_distribution<double> tilt(-max_tilt_rad, max_tilt_rad);
    return Orientation::from_up({std::sin(tilt(rng)), 1.0, std::sin(tilt(rng))});
}

/// Phone lying on a floor or desk.
inline Orientation flat_orientation(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> tilt(-0.1, 0.1);
    return Orientation::from_up({tilt(rng), tilt(rng), 1.0});
}

inline AccelSample make_sample(double t, Vec3 a) { return {t, a.x, a.y, a.z}; }

// ---------------------------------------------------------------------------
// Activity traces
// ---------------------------------------------------------------------------

struct ActivityGenSpec {
    ActivityClass cls = ActivityClass::Walking;
    double freq_hz = 2.0;
    double amplitude_g = 0.3;
    double noise_g = 0.02;
    double duration_s = 10.0;
    double rate_hz = 50.0;
    std::uint64_t seed = 1;
    double harmonic_ratio = 0.3;
};

inline ActivityGenSpec default_activity_spec(ActivityClass c) {
    ActivityGenSpec s;
    s.cls = c;
    switch (c) {
    case ActivityClass::Walking: s.freq_hz = 2.0; s.amplitude_g = 0.3; s.noise_g = 0.02; break;
    case ActivityClass::Running: s.freq_hz = 3.0; s.amplitude_g = 0.8; s.noise_g = 0.04; break;
    case ActivityClass::Resting: s.freq_hz = 0.5; s.amplitude_g = 0.05; s.noise_g = 0.005; break;
    case ActivityClass::NoActivity: s.freq_hz = 0.0; s.amplitude_g = 0.0; s.noise_g = 0.005; break;
    }
    return s;
}

/// Amplitudes of the default specs must be strictly ordered
/// running > walking > resting > no activity.
inline void check_default_ordering() {
    const double run = default_activity_spec(ActivityClass::Running).amplitude_g;
    const double walk = default_activity_spec(ActivityClass::Walking).amplitude_g;
    const double rest = default_activity_spec(ActivityClass::Resting).amplitude_g;
    const double none = default_activity_spec(ActivityClass::NoActivity).amplitude_g;
    if (!(run > walk && walk > rest && rest > none))
        throw Error(ErrorKind::Parameter, "default activity amplitudes are not strictly ordered");
}

inline void validate(const ActivityGenSpec& s) {
    if (!(s.rate_hz > 0.0) || !(s.duration_s > 0.0) || s.amplitude_g < 0.0 || s.noise_g < 0.0 || s.freq_hz < 0.0)
        throw Error(ErrorKind::Parameter, "invalid activity generator spec");
}

/// Body acceleration of a periodic gait in the device frame: vertical
/// fundamental plus harmonic, forward sway at the step rate and lateral sway
/// at half of it.
inline Vec3 gait_motion(const Orientation& o, double t, double freq, double amp, double harmonic,
                        const std::array<double, 4>& phase, const std::array<double, 3>& axis_weight) {
    const double w = kTwoPi * freq;
    const double vertical = axis_weight[0] * amp * (std::sin(w * t + phase[0]) + harmonic * std::sin(2 * w * t + phase[1]));
    const double forward = axis_weight[1] * amp * std::sin(w * t + phase[2]);
    const double lateral = axis_weight[2] * amp * std::sin(0.5 * w * t + phase[3]);
    return vertical * o.up + forward * o.fwd + lateral * o.side;
}

/// Gravity baseline + class-dependent periodic motion + Gaussian sensor noise, in g.
inline AccelStream gen_activity_trace(const ActivityGenSpec& spec, const std::string& device_id = "synth",
                                      double t0 = 0.0) {
    validate(spec);
    std::mt19937_64 rng(spec.seed);
    const Orientation o = pocket_orientation(rng);
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    const std::array<double, 4> phase{ph(rng), ph(rng), ph(rng), ph(rng)};
    std::normal_distribution<double> noise(0.0, 1.0);
    AccelStream s;
    s.device_id = device_id;
    s.rate_hz = spec.rate_hz;
    s.unit = Unit::G;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.rate_hz));
    s.samples.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.rate_hz;
        Vec3 a = o.up;
        if (spec.amplitude_g > 0.0)
            a = a + gait_motion(o, t, spec.freq_hz, spec.amplitude_g, spec.harmonic_ratio, phase, {1.0, 0.4, 0.25});
        a = a + spec.noise_g * Vec3{noise(rng), noise(rng), noise(rng)};
        s.samples.push_back(make_sample(t0 + t, a));
    }
    return s;
}

/// c + A sin(2 pi f t) + noise, for driving the activity-level estimator with
/// a known oscillation amplitude.
inline std::vector<double> sinusoid_series(double offset, double amplitude, double freq_hz, double noise_std,
                                           double duration_s, double rate_hz, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, noise_std > 0.0 ? noise_std : 1.0);
    const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / rate_hz;
        out[i] = offset + amplitude * std::sin(kTwoPi * freq_hz * t) + (noise_std > 0.0 ? noise(rng) : 0.0);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Audio
// ---------------------------------------------------------------------------

struct Click {
    double t = 0.0;
    double amplitude = 0.5;
    double freq_hz = 600.0;
    double decay_s = 0.02;
};

inline constexpr double kAudioFrameSeconds = 0.5;

/// Ambient Gaussian noise plus exponentially decaying tone bursts, clamped to
/// [-1, 1], chunked into consecutive frames.
inline std::vector<AudioFrame> gen_audio(double t0, double duration_s, double rate_hz, double noise_floor,
                                         const std::vector<Click>& clicks, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
    std::vector<double> buf(n);
    for (auto& v : buf) v = noise_floor * noise(rng);
    for (const auto& c : clicks) {
        const auto first = static_cast<std::ptrdiff_t>(std::ceil((c.t - t0) * rate_hz));
        const auto span = static_cast<std::ptrdiff_t>(std::ceil(6.0 * c.decay_s * rate_hz));
        for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(first, 0);
             i < std::min<std::ptrdiff_t>(first + span, static_cast<std::ptrdiff_t>(n)); ++i) {
            const double dt = t0 + static_cast<double>(i) / rate_hz - c.t;
            buf[static_cast<std::size_t>(i)] += c.amplitude * std::exp(-dt / c.decay_s) * std::sin(kTwoPi * c.freq_hz * dt);
        }
    }
    for (auto& v : buf) v = std::clamp(v, -1.0, 1.0);
    std::vector<AudioFrame> frames;
    const auto per_frame = static_cast<std::size_t>(std::llround(kAudioFrameSeconds * rate_hz));
    for (std::size_t i = 0; i < n; i += per_frame) {
        AudioFrame f;
        f.t_start = t0 + static_cast<double>(i) / rate_hz;
        f.rate_hz = rate_hz;
        f.samples.assign(buf.begin() + static_cast<std::ptrdiff_t>(i),
                         buf.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + per_frame)));
        frames.push_back(std::move(f));
    }
    return frames;
}

// ---------------------------------------------------------------------------
// Falls and other handling events
// ---------------------------------------------------------------------------

enum class PostImpact { Abandoned, PickedUp };

struct FallGenSpec {
    double height_m = 0.75;
    double impact_g = 3.0;
    PostImpact post = PostImpact::Abandoned;
    double pickup_after_s = 1.0;
    double click_amplitude = 0.8;
    double carry_s = 3.0;     // walking before the drop
    double after_s = 10.0;    // recorded after the impact
    double audio_rate_hz = 8000.0;
    double audio_noise = 0.01;
    std::uint64_t seed = 1;
};

struct EventTruth {
    std::optional<double> t_freefall;  // start of free fall
    std::optional<double> t_impact;
    std::optional<double> t_pickup;
    double freefall_duration = 0.0;
    bool risky = false;  // abandoned after a drop

    json to_json() const {
        json j = {{"risky", risky}, {"freefall_duration", freefall_duration}};
        j["t_freefall"] = t_freefall ? json(*t_freefall) : json(nullptr);
        j["t_impact"] = t_impact ? json(*t_impact) : json(nullptr);
        j["t_pickup"] = t_pickup ? json(*t_pickup) : json(nullptr);
        return j;
    }
};

struct GeneratedTrace {
    AccelStream accel;
    std::vector<AudioFrame> audio;
    EventTruth truth;
};

inline double freefall_seconds(double height_m) { return std::sqrt(2.0 * height_m / kStandardGravity); }

namespace detail {

/// Piecewise recording built segment by segment on a fixed sample grid.
struct TraceBuilder {
    double rate_hz;
    std::mt19937_64 rng;
    std::normal_distribution<double> noise{0.0, 1.0};
    AccelStream s;
    std::vector<Click> clicks;

    TraceBuilder(double rate, std::uint64_t seed) : rate_hz(rate), rng(seed) {
        s.rate_hz = rate;
        s.unit = Unit::G;
        s.device_id = "synth";
    }

    double now() const { return static_cast<double>(s.samples.size()) / rate_hz; }

    template <typename F>
    void segment(double duration_s, double noise_g, F&& accel_at) {
        const auto n = static_cast<std::size_t>(std::llround(duration_s * rate_hz));
        for (std::size_t i = 0; i < n; ++i) {
            const double t = now();
            Vec3 a = accel_at(t) + noise_g * Vec3{noise(rng), noise(rng), noise(rng)};
            s.samples.push_back(make_sample(t, a));
        }
    }

    /// Walking with footstep clicks at the step rate.
    void walk(double duration_s, const Orientation& o, double amp, double freq, double step_click = 0.05) {
        std::uniform_real_distribution<double> ph(0.0, kTwoPi);
        const std::array<double, 4> phase{ph(rng), ph(rng), ph(rng), ph(rng)};
        const double start = now();
        for (double tc = start + 0.25 / freq; tc < start + duration_s; tc += 1.0 / freq)
            clicks.push_back({tc, step_click, 250.0, 0.015});
        segment(duration_s, 0.02, [&](double t) { return o.up + gait_motion(o, t, freq, amp, 0.3, phase, {1.0, 0.4, 0.25}); });
    }

    void rest(double duration_s, const Orientation& o, double noise_g = 0.003) {
        segment(duration_s, noise_g, [&](double) { return o.up; });
    }

    /// Short reaction spike peaking at `peak_g` along `o.up`, plus a bounce.
    void impact(const Orientation& o, double peak_g, double click_amp) {
        clicks.push_back({now(), click_amp, 900.0, 0.03});
        const double step = 1.0 / rate_hz;
        const int half = std::max(1, static_cast<int>(std::lround(0.02 * rate_hz)));
        std::vector<double> profile;
        for (int i = -half; i <= half; ++i) profile.push_back(peak_g * (1.0 - 0.5 * std::abs(i) / half));
        for (double g : profile) {
            const double t = now();
            s.samples.push_back(make_sample(t, g * o.up + 0.02 * Vec3{noise(rng), noise(rng), noise(rng)}));
        }
        rest(std::max(step, 0.1), o, 0.05);
        const double bounce = 0.4 * peak_g;
        clicks.push_back({now(), 0.3 * click_amp, 900.0, 0.02});
        s.samples.push_back(make_sample(now(), std::max(bounce, 1.2) * o.up));
    }

    GeneratedTrace finish(double audio_rate, double audio_noise, std::uint64_t audio_seed, EventTruth truth) {
        GeneratedTrace g;
        g.audio = gen_audio(0.0, now(), audio_rate, audio_noise, clicks, audio_seed);
        g.accel = std::move(s);
        g.truth = truth;
        return g;
    }
};

}  // namespace detail

/// Carry (walking), free fall of sqrt(2h/g), impact spike and click, then
/// either lying still or being picked up and carried again.
inline GeneratedTrace gen_fall_trace(const FallGenSpec& spec, double rate_hz = 50.0) {
    if (!(spec.height_m > 0.0)) throw Error(ErrorKind::Parameter, "drop height must be positive");
    if (!(rate_hz > 0.0)) throw Error(ErrorKind::Parameter, "rate must be positive");
    detail::TraceBuilder b(rate_hz, spec.seed);
    const Orientation pocket = pocket_orientation(b.rng);
    const Orientation floor = flat_orientation(b.rng);
    EventTruth truth;

    b.walk(spec.carry_s, pocket, 0.3, 2.0);
    truth.t_freefall = b.now();
    truth.freefall_duration = freefall_seconds(spec.height_m);
    b.segment(truth.freefall_duration, 0.005, [](double) { return Vec3{}; });
    truth.t_impact = b.now();
    b.impact(floor, spec.impact_g, spec.click_amplitude);
    const double settled = b.now() - *truth.t_impact;
    if (spec.post == PostImpact::Abandoned) {
        b.rest(spec.after_s - settled, floor);
        truth.risky = true;
    } else {
        b.rest(std::max(0.0, spec.pickup_after_s - settled), floor);
        truth.t_pickup = b.now();
        b.walk(spec.after_s - (b.now() - *truth.t_impact), pocket, 0.3, 2.0);
    }
    return b.finish(spec.audio_rate_hz, spec.audio_noise, mix_seed(spec.seed, 99), truth);
}

enum class NormalKind { Walking, Jogging, Stairs, Lift, Slam };

inline const char* to_string(NormalKind k) {
    switch (k) {
    case NormalKind::Walking: return "walking";
    case NormalKind::Jogging: return "jogging";
    case NormalKind::Stairs: return "stairs";
    case NormalKind::Lift: return "lift";
    case NormalKind::Slam: return "slam";
    }
    return "?";
}

/// Regular handling without a drop. A slam is an impact (spike and click)
/// with no preceding free fall: the phone is put down hard on a desk.
inline GeneratedTrace gen_normal_trace(NormalKind kind, double duration_s, std::uint64_t seed, double rate_hz = 50.0,
                                       double audio_rate_hz = 8000.0) {
    detail::TraceBuilder b(rate_hz, seed);
    const Orientation pocket = pocket_orientation(b.rng);
    std::uniform_real_distribution<double> jitter(0.85, 1.15);
    EventTruth truth;
    switch (kind) {
    case NormalKind::Walking: b.walk(duration_s, pocket, 0.3 * jitter(b.rng), 2.0 * jitter(b.rng)); break;
    case NormalKind::Jogging: b.walk(duration_s, pocket, 0.8 * jitter(b.rng), 2.8 * jitter(b.rng), 0.1); break;
    case NormalKind::Stairs: b.walk(duration_s, pocket, 0.5 * jitter(b.rng), 1.6 * jitter(b.rng), 0.12); break;
    case NormalKind::Lift: {
        const double amp = 0.12 * jitter(b.rng);
        b.segment(duration_s, 0.01, [&](double t) {
            // accelerate, cruise, decelerate over the recording
            const double phase = t / duration_s;
            const double lift = phase < 0.2 ? amp : (phase > 0.8 ? -amp : 0.0);
            return (1.0 + lift) * pocket.up;
        });
        break;
    }
    case NormalKind::Slam: {
        std::uniform_real_distribution<double> when(0.35, 0.5);
        const double before = when(b.rng) * duration_s;
        b.walk(before, pocket, 0.3, 2.0);
        const Orientation desk = flat_orientation(b.rng);
        truth.t_impact = b.now();
        b.impact(desk, 3.0 * jitter(b.rng), 0.7 * jitter(b.rng));
        b.rest(duration_s - b.now(), desk);
        break;
    }
    }
    return b.finish(audio_rate_hz, 0.01, mix_seed(seed, 99), truth);
}

// ---------------------------------------------------------------------------
// Per-user walking sessions
// ---------------------------------------------------------------------------

struct GaitProfile {
    std::string user_id;
    double step_hz = 1.8;
    std::array<double, 3> axis_amp{0.3, 0.12, 0.08};  // vertical, forward, lateral (g)
    double harmonic_ratio = 0.3;
    double phase_jitter = 0.05;  // rad, per step
    double tilt_rad = 0.1;       // habitual carry tilt
    double click_amplitude = 0.1;
    double noise_floor = 0.01;

    std::array<double, 8> parameters() const {
        return {step_hz, axis_amp[0], axis_amp[1], axis_amp[2], harmonic_ratio, tilt_rad, click_amplitude, noise_floor};
    }
};

inline void validate(const GaitProfile& p) {
    for (double v : p.parameters())
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorKind::Parameter, "gait profile values must be >= 0");
    if (!(p.step_hz > 0.0)) throw Error(ErrorKind::Parameter, "gait profile needs a positive step rate");
    if (!(p.axis_amp[0] + p.axis_amp[1] + p.axis_amp[2] > 0.0))
        throw Error(ErrorKind::Parameter, "gait profile has zero amplitude");
    if (p.phase_jitter < 0.0) throw Error(ErrorKind::Parameter, "negative phase jitter");
}

/// Number of parameters that differ by at least `rel` (relative to the larger).
inline int differing_parameters(const GaitProfile& a, const GaitProfile& b, double rel = 0.2) {
    const auto pa = a.parameters(), pb = b.parameters();
    int n = 0;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const double hi = std::max(std::abs(pa[i]), std::abs(pb[i]));
        if (hi > 0.0 && std::abs(pa[i] - pb[i]) >= rel * hi) ++n;
    }
    return n;
}

/// Nine distinct walkers.
inline std::vector<GaitProfile> default_profiles() {
    std::vector<GaitProfile> out;
    const std::array<double, 9> step{1.6, 2.1, 1.75, 1.6, 2.0, 1.85, 2.2, 1.7, 1.95};
    const std::array<double, 9> vert{0.25, 0.33, 0.42, 0.52, 0.2, 0.3, 0.45, 0.36, 0.26};
    const std::array<double, 9> fwd{0.10, 0.18, 0.08, 0.15, 0.22, 0.12, 0.14, 0.24, 0.16};
    const std::array<double, 9> lat{0.06, 0.10, 0.14, 0.05, 0.09, 0.18, 0.07, 0.12, 0.16};
    const std::array<double, 9> tilt{0.05, 0.25, 0.15, 0.35, 0.45, 0.10, 0.30, 0.20, 0.40};
    const std::array<double, 9> click{0.06, 0.12, 0.09, 0.18, 0.05, 0.15, 0.22, 0.08, 0.11};
    const std::array<double, 9> floor{0.010, 0.006, 0.014, 0.008, 0.018, 0.012, 0.005, 0.016, 0.009};
    for (std::size_t i = 0; i < 9; ++i) {
        GaitProfile p;
        p.user_id = "user" + std::to_string(i + 1);
        p.step_hz = step[i];
        p.axis_amp = {vert[i], fwd[i], lat[i]};
        p.harmonic_ratio = 0.2 + 0.05 * static_cast<double>(i % 4);
        p.tilt_rad = tilt[i];
        p.click_amplitude = click[i];
        p.noise_floor = floor[i];
        out.push_back(p);
    }
    return out;
}

struct SessionSpec {
    double duration_s = 120.0;
    double rate_hz = 50.0;
    double audio_rate_hz = 8000.0;
    std::uint64_t seed = 1;
    // day-to-day variation (clothing, carry position, surroundings), uniform in +-
    double tilt_var_rad = 0.03;
    double amplitude_var = 0.03;  // relative
    double step_var = 0.015;      // relative
    double click_var = 0.075;     // relative
    double noise_var = 0.125;     // log scale
};

/// A walking session: the carry tilt, amplitude (clothing) and ambient noise
/// level vary per session around the profile's values.
inline GeneratedTrace gen_user_session(const GaitProfile& p, const SessionSpec& spec) {
    validate(p);
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double tilt_a = p.tilt_rad + spec.tilt_var_rad * u(rng);
    const double tilt_b = spec.tilt_var_rad * u(rng);
    const Orientation o = Orientation::from_up({std::sin(tilt_a), 1.0, std::sin(tilt_b)});
    const double amp_scale = 1.0 + spec.amplitude_var * u(rng);
    const double step_hz = p.step_hz * (1.0 + spec.step_var * u(rng));
    const double click_scale = 1.0 + spec.click_var * u(rng);
    const double noise_scale = std::exp(spec.noise_var * u(rng));
    std::uniform_real_distribution<double> ph(0.0, kTwoPi);
    const std::array<double, 4> phase{ph(rng), ph(rng), ph(rng), ph(rng)};
    std::normal_distribution<double> jit(0.0, 1.0);

    AccelStream s;
    s.device_id = p.user_id;
    s.rate_hz = spec.rate_hz;
    s.unit = Unit::G;
    const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * spec.rate_hz));
    s.samples.reserve(n);
    double drift = 0.0;
    std::vector<Click> clicks;
    double next_click = 0.25 / step_hz;
    const double w = kTwoPi * step_hz;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / spec.rate_hz;
        drift += p.phase_jitter * jit(rng) / std::sqrt(spec.rate_hz / step_hz);
        const double th = w * t + drift;
        const double vertical = amp_scale * p.axis_amp[0] * (std::sin(th + phase[0]) + p.harmonic_ratio * std::sin(2 * th + phase[1]));
        const double forward = amp_scale * p.axis_amp[1] * std::sin(th + phase[2]);
        const double lateral = amp_scale * p.axis_amp[2] * std::sin(0.5 * th + phase[3]);
        Vec3 a = o.up + vertical * o.up + forward * o.fwd + lateral * o.side + 0.02 * Vec3{jit(rng), jit(rng), jit(rng)};
        s.samples.push_back(make_sample(t, a));
        if (t >= next_click) {
            clicks.push_back({t, p.click_amplitude * click_scale, 250.0, 0.015});
            next_click += 1.0 / step_hz;
        }
    }
    GeneratedTrace g;
    g.audio = gen_audio(0.0, spec.duration_s, spec.audio_rate_hz, p.noise_floor * noise_scale, clicks, mix_seed(spec.seed, 7));
    g.accel = std::move(s);
    return g;
}

}  // namespace actmon::synth
