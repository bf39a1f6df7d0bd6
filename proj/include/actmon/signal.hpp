#pragma once

// Raw accelerometer/audio representation, high-pass preprocessing and
// windowing. Every downstream stage works in units of g.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "actmon/error.hpp"

namespace actmon {

inline constexpr double kStandardGravity = 9.80665;  // m/s^2 per g

enum class Unit { G, Mps2 };

inline const char* to_string(Unit u) { return u == Unit::G ? "g" : "mps2"; }

inline Unit parse_unit(const std::string& s) {
    if (s == "g") return Unit::G;
    if (s == "mps2") return Unit::Mps2;
    throw Error(ErrorKind::Parse, "unknown acceleration unit '" + s + "'");
}

struct AccelSample {
    double t = 0.0;
    double ax = 0.0;
    double ay = 0.0;
    double az = 0.0;

    bool operator==(const AccelSample&) const = default;
};

struct AccelStream {
    std::string device_id;
    double rate_hz = 50.0;
    Unit unit = Unit::G;
    std::vector<AccelSample> samples;

    double period() const { return 1.0 / rate_hz; }
    /// End of the covered interval: last timestamp plus one nominal period.
    double t_end() const { return samples.empty() ? 0.0 : samples.back().t + period(); }
    double duration() const { return samples.empty() ? 0.0 : t_end() - samples.front().t; }
};

struct AudioFrame {
    double t_start = 0.0;
    double rate_hz = 8000.0;
    std::vector<double> samples;

    double t_end() const { return t_start + static_cast<double>(samples.size()) / rate_hz; }
};

/// Non-owning view of a contiguous slice of a stream covering [t_start, t_end).
struct Window {
    double t_start = 0.0;
    double t_end = 0.0;
    std::span<const AccelSample> samples;

    double duration() const { return t_end - t_start; }
};

inline double magnitude(const AccelSample& s) {
    return std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az);
}

inline std::vector<double> magnitudes(std::span<const AccelSample> samples) {
    std::vector<double> out;
    out.reserve(samples.size());
    for (const auto& s : samples) out.push_back(magnitude(s));
    return out;
}

/// First difference of the magnitude series: out[k] = mags[k+1] - mags[k].
inline std::vector<double> jerk_series(std::span<const double> mags) {
    if (mags.size() < 2) throw Error(ErrorKind::EmptyInput, "jerk needs at least 2 magnitudes");
    std::vector<double> out(mags.size() - 1);
    for (std::size_t k = 0; k + 1 < mags.size(); ++k) out[k] = mags[k + 1] - mags[k];
    return out;
}

/// Throws on non-finite values or non-increasing timestamps.
inline void validate_stream(const AccelStream& s) {
    if (!(s.rate_hz > 0.0) || !std::isfinite(s.rate_hz))
        throw Error(ErrorKind::Parameter, "rate_hz must be positive");
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        const auto& x = s.samples[i];
        if (!std::isfinite(x.t) || !std::isfinite(x.ax) || !std::isfinite(x.ay) || !std::isfinite(x.az))
            throw Error(ErrorKind::Stream, "non-finite sample at index " + std::to_string(i));
        if (i > 0 && !(x.t > s.samples[i - 1].t))
            throw Error(ErrorKind::Stream, "timestamps not strictly increasing at index " + std::to_string(i));
    }
}

inline void validate_audio(const AudioFrame& f) {
    if (!(f.rate_hz > 0.0)) throw Error(ErrorKind::Parameter, "audio rate_hz must be positive");
    for (double v : f.samples)
        if (!std::isfinite(v)) throw Error(ErrorKind::Stream, "non-finite audio sample");
}

inline AccelSample to_g(AccelSample s, Unit unit) {
    if (unit == Unit::Mps2) {
        s.ax /= kStandardGravity;
        s.ay /= kStandardGravity;
        s.az /= kStandardGravity;
    }
    return s;
}

inline AccelStream to_g(AccelStream s) {
    if (s.unit == Unit::Mps2) {
        for (auto& x : s.samples) x = to_g(x, Unit::Mps2);
        s.unit = Unit::G;
    }
    return s;
}

struct SamplingReport {
    double median_gap = 0.0;
    bool median_ok = true;         // median gap within +-20% of the nominal period
    std::size_t gap_violations = 0;  // individual gaps outside +-20%
};

/// Irregular sampling is reported, never corrected.
inline SamplingReport check_sampling(const AccelStream& s) {
    SamplingReport r;
    if (s.samples.size() < 2) return r;
    std::vector<double> gaps;
    gaps.reserve(s.samples.size() - 1);
    for (std::size_t i = 1; i < s.samples.size(); ++i) gaps.push_back(s.samples[i].t - s.samples[i - 1].t);
    const double nominal = s.period();
    for (double g : gaps)
        if (std::abs(g - nominal) > 0.2 * nominal) ++r.gap_violations;
    auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
    std::nth_element(gaps.begin(), mid, gaps.end());
    r.median_gap = *mid;
    r.median_ok = std::abs(r.median_gap - nominal) <= 0.2 * nominal;
    return r;
}

// ---------------------------------------------------------------------------
// High-pass filter
// ---------------------------------------------------------------------------

inline constexpr double kDefaultCutoffHz = 0.5;

struct BiquadCoefficients {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;  // a0 normalized to 1
};

/// Second-order Butterworth high-pass by bilinear transform with frequency
/// prewarping, so the -3 dB point lands exactly on cutoff_hz.
inline BiquadCoefficients butterworth_high_pass(double cutoff_hz, double rate_hz) {
    if (!(rate_hz > 0.0)) throw Error(ErrorKind::Parameter, "rate_hz must be positive");
    if (!(cutoff_hz > 0.0) || !(cutoff_hz < rate_hz / 2.0))
        throw Error(ErrorKind::Parameter, "cutoff must lie in (0, Nyquist)");
    const double k = std::tan(std::numbers::pi * cutoff_hz / rate_hz);
    const double k2 = k * k;
    const double q = std::numbers::sqrt2;
    const double norm = 1.0 / (1.0 + q * k + k2);
    BiquadCoefficients c;
    c.b0 = norm;
    c.b1 = -2.0 * norm;
    c.b2 = norm;
    c.a1 = 2.0 * (k2 - 1.0) * norm;
    c.a2 = (1.0 - q * k + k2) * norm;
    return c;
}

/// Direct form II transposed biquad.
class Biquad {
public:
    Biquad() = default;
    explicit Biquad(const BiquadCoefficients& c) : c_(c) {}

    /// Loads the steady state for a constant input x0. For a high-pass the
    /// first output on x0 is then exactly zero.
    void prime(double x0) {
        const double dc_gain = (c_.b0 + c_.b1 + c_.b2) / (1.0 + c_.a1 + c_.a2);
        const double y0 = dc_gain * x0;
        s2_ = c_.b2 * x0 - c_.a2 * y0;
        s1_ = c_.b1 * x0 - c_.a1 * y0 + s2_;
    }

    double process(double x) {
        const double y = c_.b0 * x + s1_;
        s1_ = c_.b1 * x - c_.a1 * y + s2_;
        s2_ = c_.b2 * x - c_.a2 * y;
        return y;
    }

    void reset() { s1_ = s2_ = 0.0; }
    const BiquadCoefficients& coefficients() const { return c_; }

private:
    BiquadCoefficients c_;
    double s1_ = 0.0;
    double s2_ = 0.0;
};

/// Per-stream tri-axial high-pass. Primed on the first sample it sees; the
/// start-up transient of the 0.5 Hz default decays to 1% within about 2 s.
class AxisHighPass {
public:
    AxisHighPass(double cutoff_hz, double rate_hz)
        : coeffs_(butterworth_high_pass(cutoff_hz, rate_hz)), x_(coeffs_), y_(coeffs_), z_(coeffs_) {}

    AccelSample process(const AccelSample& s) {
        if (!primed_) {
            x_.prime(s.ax);
            y_.prime(s.ay);
            z_.prime(s.az);
            primed_ = true;
        }
        return {s.t, x_.process(s.ax), y_.process(s.ay), z_.process(s.az)};
    }

    void reset() {
        x_.reset();
        y_.reset();
        z_.reset();
        primed_ = false;
    }

    const BiquadCoefficients& coefficients() const { return coeffs_; }

private:
    BiquadCoefficients coeffs_;
    Biquad x_, y_, z_;
    bool primed_ = false;
};

inline AccelStream high_pass(const AccelStream& in, double cutoff_hz = kDefaultCutoffHz) {
    AxisHighPass filter(cutoff_hz, in.rate_hz);
    AccelStream out;
    out.device_id = in.device_id;
    out.rate_hz = in.rate_hz;
    out.unit = in.unit;
    out.samples.reserve(in.samples.size());
    for (const auto& s : in.samples) out.samples.push_back(filter.process(s));
    return out;
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

inline constexpr double kTimeEps = 1e-6;

/// Index range of samples with t in [t0, t1).
inline std::span<const AccelSample> slice(std::span<const AccelSample> samples, double t0, double t1) {
    auto lo = std::lower_bound(samples.begin(), samples.end(), t0 - kTimeEps,
                               [](const AccelSample& s, double t) { return s.t < t; });
    auto hi = std::lower_bound(lo, samples.end(), t1 - kTimeEps,
                               [](const AccelSample& s, double t) { return s.t < t; });
    return {lo, hi};
}

/// Windows start at t0, t0+hop, ... and cover [start, start+length). A
/// trailing partial window is dropped; windows that contain no samples
/// (stream gaps) are skipped.
inline std::vector<Window> make_windows(const AccelStream& stream, double length_s, double hop_s) {
    if (!(length_s > 0.0) || !(hop_s > 0.0))
        throw Error(ErrorKind::Parameter, "window length and hop must be positive");
    std::vector<Window> out;
    if (stream.samples.empty()) return out;
    const double t0 = stream.samples.front().t;
    const double t_end = stream.t_end();
    std::span<const AccelSample> all(stream.samples);
    for (std::size_t k = 0;; ++k) {
        const double start = t0 + static_cast<double>(k) * hop_s;
        const double stop = start + length_s;
        if (stop > t_end + kTimeEps) break;
        auto part = slice(all, start, stop);
        if (!part.empty()) out.push_back({start, stop, part});
    }
    return out;
}

}  // namespace actmon
