#include <algorithm>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "actmon/events.hpp"
#include "actmon/features.hpp"
#include "actmon/signal.hpp"
#include "actmon/synth.hpp"
#include "actmon/trace_io.hpp"
#include "gen.hpp"

using namespace actmon;

namespace {

constexpr double kPi = std::numbers::pi;

/// |H| of the analog 2nd-order Butterworth high-pass after bilinear mapping
/// with prewarping: r = tan(pi f / fs) / tan(pi fc / fs), |H| = r^2 / sqrt(1 + r^4).
double butterworth_gain_oracle(double f, double fc, double fs) {
    const double r = std::tan(kPi * f / fs) / std::tan(kPi * fc / fs);
    return r * r / std::sqrt(1.0 + r * r * r * r);
}

/// Amplitude of the `freq` component of y over whole periods (projection on sin/cos).
double tone_amplitude(const std::vector<double>& y, const std::vector<double>& t, double freq) {
    double a = 0.0, b = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        a += y[i] * std::sin(2.0 * kPi * freq * t[i]);
        b += y[i] * std::cos(2.0 * kPi * freq * t[i]);
    }
    const double n = static_cast<double>(y.size());
    return 2.0 * std::sqrt(a * a + b * b) / n;
}

double steady_gain(double freq, double fc, double fs, double periods_skip, double periods_measure) {
    const double period = 1.0 / freq;
    const auto skip = static_cast<std::size_t>(std::llround(periods_skip * period * fs));
    const auto keep = static_cast<std::size_t>(std::llround(periods_measure * period * fs));
    AccelStream s = gen::sinusoid(freq, 1.0, static_cast<double>(skip + keep) / fs, fs);
    const AccelStream out = high_pass(s, fc);
    std::vector<double> y, t;
    for (std::size_t i = skip; i < out.samples.size(); ++i) {
        y.push_back(out.samples[i].ax);
        t.push_back(out.samples[i].t);
    }
    return tone_amplitude(y, t, freq);
}

std::vector<double> axis(const AccelStream& s, int which) {
    std::vector<double> v;
    for (const auto& x : s.samples) v.push_back(which == 0 ? x.ax : which == 1 ? x.ay : x.az);
    return v;
}

// Textbook recomputations used as oracles.
double two_pass_mean(const std::vector<double>& v) {
    long double s = 0.0;
    for (double x : v) s += x;
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

double pop_var(const std::vector<double>& v) {
    const double m = two_pass_mean(v);
    long double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return static_cast<double>(s / static_cast<long double>(v.size()));
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    const double ma = two_pass_mean(a), mb = two_pass_mean(b);
    long double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return static_cast<double>(sab / std::sqrt(saa * sbb));
}

Window whole(const AccelStream& s) { return Window{s.samples.front().t, s.t_end(), s.samples}; }

void expect_rel(double got, double want, double rel, const char* what) {
    EXPECT_LE(std::abs(got - want), rel * std::max(1.0, std::abs(want))) << what << ": got " << got << " want " << want;
}

}  // namespace

// ---------------------------------------------------------------------------
// magnitude and jerk
// ---------------------------------------------------------------------------

TEST(Magnitude, HandExamples) {
    EXPECT_DOUBLE_EQ(magnitude({0, 3, 4, 0}), 5.0);
    EXPECT_DOUBLE_EQ(magnitude({0, 0, 0, 0}), 0.0);
    EXPECT_DOUBLE_EQ(magnitude({0, 1, 2, 2}), 3.0);
}

TEST(Magnitude, RotationInvariant) {
    gen::Rng r(101);
    for (int trial = 0; trial < 500; ++trial) {
        const auto s = gen::sample(r, 0.0, 10.0);
        const auto rot = gen::rotation(r);
        const double a = magnitude(s), b = magnitude(gen::rotate(rot, s));
        EXPECT_LE(std::abs(a - b), 1e-9 * std::max(1.0, a));
    }
}

TEST(Jerk, HandExamples) {
    const std::vector<double> flat{5, 5, 5};
    EXPECT_EQ(jerk_series(flat), (std::vector<double>{0, 0}));
    const std::vector<double> ramp{0, 1, 3};
    EXPECT_EQ(jerk_series(ramp), (std::vector<double>{1, 2}));
}

TEST(Jerk, TooShortIsEmptyInput) {
    const std::vector<double> one{1.0};
    try {
        jerk_series(one);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::EmptyInput);
    }
}

TEST(Jerk, MatchesLoopOracle) {
    gen::Rng r(7);
    const auto mags = gen::series(r, 100, 0.0, 4.0);
    const auto j = jerk_series(mags);
    ASSERT_EQ(j.size(), 99u);
    for (std::size_t k = 0; k < j.size(); ++k) EXPECT_EQ(j[k], mags[k + 1] - mags[k]);
}

TEST(Jerk, MonotoneSeriesGivesNonNegative) {
    gen::Rng r(8);
    for (int trial = 0; trial < 50; ++trial) {
        auto mags = gen::series(r, static_cast<std::size_t>(r.integer(2, 60)), 0.0, 3.0);
        std::sort(mags.begin(), mags.end());
        for (double d : jerk_series(mags)) EXPECT_GE(d, 0.0);
    }
}

// ---------------------------------------------------------------------------
// high-pass filter
// ---------------------------------------------------------------------------

TEST(HighPass, CoefficientsMatchTransferFunctionOracle) {
    for (double fs : {5.0, 50.0, 100.0}) {
        for (double fc : {0.1, 0.5, 1.0}) {
            const auto c = butterworth_high_pass(fc, fs);
            // poles approach z = 1 as fc / fs shrinks; rounding in the
            // coefficients grows with the inverse square of that distance
            const double d = 2.0 * kPi * fc / fs;
            const double tol = 1e-15 / (d * d) + 1e-14;
            for (double f = 0.01; f < fs / 2.0; f *= 1.37) {
                const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * f / fs);
                const std::complex<double> num = c.b0 + c.b1 * z1 + c.b2 * z1 * z1;
                const std::complex<double> den = 1.0 + c.a1 * z1 + c.a2 * z1 * z1;
                EXPECT_NEAR(std::abs(num / den), butterworth_gain_oracle(f, fc, fs), tol) << fs << " " << fc << " " << f;
            }
        }
    }
}

TEST(HighPass, CutoffIsMinus3dB) {
    const auto c = butterworth_high_pass(0.5, 50.0);
    const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * 0.5 / 50.0);
    const double g = std::abs((c.b0 + c.b1 * z1 + c.b2 * z1 * z1) / (1.0 + c.a1 * z1 + c.a2 * z1 * z1));
    EXPECT_NEAR(g, 1.0 / std::sqrt(2.0), 1e-12);
}

TEST(HighPass, DcRejection) {
    AccelStream s;
    s.rate_hz = 50.0;
    for (int i = 0; i < 500; ++i) s.samples.push_back({i / 50.0, 9.81, 9.81, 9.81});
    const auto out = high_pass(s);
    const double in_mag = magnitude(s.samples.back());
    for (std::size_t i = 250; i < out.samples.size(); ++i) EXPECT_LT(magnitude(out.samples[i]), 0.01 * in_mag);
}

TEST(HighPass, StepPrimedConstantGivesZero) {
    AccelStream s;
    s.rate_hz = 50.0;
    for (int i = 0; i < 100; ++i) s.samples.push_back({i / 50.0, 0.1, -0.2, 1.0});
    for (const auto& y : high_pass(s).samples) {
        EXPECT_NEAR(y.ax, 0.0, 1e-12);
        EXPECT_NEAR(y.ay, 0.0, 1e-12);
        EXPECT_NEAR(y.az, 0.0, 1e-12);
    }
}

TEST(HighPass, LowFrequencyAttenuated) {
    const double g = steady_gain(0.05, 0.5, 50.0, 3.0, 5.0);
    EXPECT_LT(g, 0.1);
    EXPECT_NEAR(g, butterworth_gain_oracle(0.05, 0.5, 50.0), 2e-3);
}

TEST(HighPass, PassBandAtFiveHertz) {
    const double g = steady_gain(5.0, 0.5, 50.0, 20.0, 50.0);
    EXPECT_GE(g, 0.9);
    EXPECT_NEAR(g, butterworth_gain_oracle(5.0, 0.5, 50.0), 1e-3);
}

TEST(HighPass, Linear) {
    gen::Rng r(3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto x = gen::stream(r, 300);
        const auto y = gen::stream(r, 300);
        const double alpha = r.uniform(-3, 3), beta = r.uniform(-3, 3);
        AccelStream mix = x;
        for (std::size_t i = 0; i < mix.samples.size(); ++i) {
            mix.samples[i].ax = alpha * x.samples[i].ax + beta * y.samples[i].ax;
            mix.samples[i].ay = alpha * x.samples[i].ay + beta * y.samples[i].ay;
            mix.samples[i].az = alpha * x.samples[i].az + beta * y.samples[i].az;
        }
        const auto fx = high_pass(x), fy = high_pass(y), fm = high_pass(mix);
        for (std::size_t i = 0; i < fm.samples.size(); ++i) {
            const double want = alpha * fx.samples[i].ax + beta * fy.samples[i].ax;
            EXPECT_LE(std::abs(fm.samples[i].ax - want), 1e-9 * std::max(1.0, std::abs(want)));
        }
    }
}

TEST(HighPass, ZeroInputZeroOutput) {
    AccelStream s;
    for (int i = 0; i < 200; ++i) s.samples.push_back({i / 50.0, 0, 0, 0});
    for (const auto& y : high_pass(s).samples) EXPECT_EQ(magnitude(y), 0.0);
}

TEST(HighPass, KeepsLengthTimestampsAndAxesIndependent) {
    gen::Rng r(5);
    auto s = gen::stream(r, 120);
    const auto out = high_pass(s);
    ASSERT_EQ(out.samples.size(), s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) EXPECT_EQ(out.samples[i].t, s.samples[i].t);
    // x axis alone: copy x into every axis and compare
    AccelStream xs = s;
    for (auto& v : xs.samples) v.ay = v.az = v.ax;
    const auto ox = high_pass(xs);
    for (std::size_t i = 0; i < s.samples.size(); ++i) {
        EXPECT_EQ(ox.samples[i].ax, out.samples[i].ax);
        EXPECT_EQ(ox.samples[i].ay, out.samples[i].ax);
    }
}

TEST(HighPass, CutoffOutOfRangeIsParameterError) {
    for (double fc : {0.0, -1.0, 25.0, 30.0}) {
        try {
            butterworth_high_pass(fc, 50.0);
            FAIL() << fc;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::Parameter);
        }
    }
}

TEST(HighPass, TransientDecaysWithinTwoSeconds) {
    // step from 0 to 1 after priming on 0
    AccelStream s;
    for (int i = 0; i < 500; ++i) s.samples.push_back({i / 50.0, i == 0 ? 0.0 : 1.0, 0, 0});
    const auto out = high_pass(s);
    double late = 0.0;
    for (std::size_t i = 101; i < out.samples.size(); ++i) late = std::max(late, std::abs(out.samples[i].ax));
    EXPECT_LT(late, 0.01 * 2.0);  // within 1% of the peak response scale
}

// ---------------------------------------------------------------------------
// windows, sampling, trace files
// ---------------------------------------------------------------------------

TEST(Windows, HandCounts) {
    AccelStream s;
    s.rate_hz = 1.0;
    for (int i = 0; i < 10; ++i) s.samples.push_back({static_cast<double>(i), 0, 0, 1});
    EXPECT_EQ(make_windows(s, 4.0, 2.0).size(), 4u);

    AccelStream shorty;
    shorty.rate_hz = 1.0;
    for (int i = 0; i < 3; ++i) shorty.samples.push_back({static_cast<double>(i), 0, 0, 1});
    EXPECT_TRUE(make_windows(shorty, 10.0, 10.0).empty());
}

TEST(Windows, HopEqualsLengthPartitions) {
    gen::Rng r(11);
    for (int trial = 0; trial < 40; ++trial) {
        const double rate = r.coin() ? 50.0 : 5.0;
        const auto n = static_cast<std::size_t>(r.integer(5, 900));
        const auto s = gen::stream(r, n, rate);
        const double len = r.uniform(0.3, 6.0);
        const auto ws = make_windows(s, len, len);
        EXPECT_EQ(ws.size(), static_cast<std::size_t>(std::floor(s.duration() / len + 1e-9)));
        std::size_t covered = 0;
        for (std::size_t i = 0; i < ws.size(); ++i) {
            if (i > 0) {
                EXPECT_NEAR(ws[i].t_start, ws[i - 1].t_end, 1e-9);
                EXPECT_GT(ws[i].samples.front().t, ws[i - 1].samples.back().t);
            }
            covered += ws[i].samples.size();
        }
        EXPECT_LE(covered, s.samples.size());
    }
}

TEST(Windows, InvalidLengthIsParameterError) {
    AccelStream s;
    s.samples.push_back({0, 0, 0, 1});
    EXPECT_THROW(make_windows(s, 0.0, 1.0), Error);
    EXPECT_THROW(make_windows(s, 1.0, -1.0), Error);
}

TEST(Sampling, IrregularGapsAreReportedNotFatal) {
    AccelStream s;
    s.rate_hz = 50.0;
    double t = 0.0;
    for (int i = 0; i < 100; ++i) {
        s.samples.push_back({t, 0, 0, 1});
        t += (i % 10 == 9) ? 0.05 : 0.02;
    }
    const auto rep = check_sampling(s);
    EXPECT_TRUE(rep.median_ok);
    EXPECT_EQ(rep.gap_violations, 9u);
    s.rate_hz = 10.0;
    EXPECT_FALSE(check_sampling(s).median_ok);
}

TEST(TraceIo, RoundTripAndUnits) {
    gen::Rng r(2);
    auto s = gen::stream(r, 20);
    s.unit = Unit::Mps2;
    std::stringstream ss;
    write_trace(s, ss);
    const auto back = read_trace(ss);
    EXPECT_EQ(back.device_id, s.device_id);
    EXPECT_EQ(back.unit, Unit::Mps2);
    ASSERT_EQ(back.samples.size(), s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) EXPECT_EQ(back.samples[i], s.samples[i]);
    const auto g = to_g(back);
    EXPECT_NEAR(g.samples[0].ax * kStandardGravity, s.samples[0].ax, 1e-12);
}

TEST(TraceIo, NonIncreasingTimestampsRejected) {
    std::stringstream ss;
    ss << R"({"device_id":"d","rate_hz":50,"unit":"g"})" << "\n"
       << R"({"t":0.0,"ax":0,"ay":0,"az":1})" << "\n"
       << R"({"t":0.0,"ax":0,"ay":0,"az":1})" << "\n";
    EXPECT_THROW(read_trace(ss), Error);
}

// ---------------------------------------------------------------------------
// features
// ---------------------------------------------------------------------------

TEST(ActivityFeatures, ZeroAndConstant) {
    AccelStream zero;
    for (int i = 0; i < 20; ++i) zero.samples.push_back({i / 50.0, 0, 0, 0});
    EXPECT_EQ(activity_features(whole(zero)).values, (std::vector<double>{0, 0}));

    AccelStream up;
    for (int i = 0; i < 200; ++i) up.samples.push_back({i / 50.0, 0, 0, 1.0});
    const auto f = high_pass(up);
    const auto x = activity_features(whole(f));
    EXPECT_NEAR(x[0], 0.0, 1e-12);
    EXPECT_NEAR(x[1], 0.0, 1e-12);
}

TEST(ActivityFeatures, SyntheticWalkMatchesTwoPassOracle) {
    auto spec = synth::default_activity_spec(ActivityClass::Walking);
    const auto raw = synth::gen_activity_trace(spec);
    const auto f = high_pass(raw);
    for (const auto& w : make_windows(f, 2.0, 2.0)) {
        const auto x = activity_features(w);
        std::vector<double> mags, absjerk;
        for (const auto& s : w.samples) mags.push_back(std::sqrt(s.ax * s.ax + s.ay * s.ay + s.az * s.az));
        for (std::size_t i = 1; i < mags.size(); ++i) absjerk.push_back(std::abs(mags[i] - mags[i - 1]));
        expect_rel(x[0], two_pass_mean(mags), 1e-12, "mean_norm");
        expect_rel(x[1], two_pass_mean(absjerk), 1e-12, "mean_abs_jerk");
    }
}

TEST(ActivityFeatures, TooFewSamples) {
    AccelStream s;
    s.samples.push_back({0, 0, 0, 1});
    try {
        activity_features(whole(s));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InsufficientData);
    }
}

TEST(MotionFeatures, ConstantWindow) {
    AccelStream s;
    for (int i = 0; i < 10; ++i) s.samples.push_back({i / 50.0, 1, 0, 0});
    EXPECT_EQ(motion_auth_features(whole(s)).values, (std::vector<double>{1, 0, 0, 0, 0, 0, 1, 0, 0, 0, 0}));
}

TEST(MotionFeatures, PerfectCorrelation) {
    gen::Rng r(4);
    AccelStream s;
    for (int i = 0; i < 50; ++i) {
        const double v = r.uniform(-1, 1);
        s.samples.push_back({i / 50.0, v, r.uniform(-1, 1), v});
    }
    EXPECT_NEAR(motion_auth_features(whole(s))[9], 1.0, 1e-12);
}

TEST(MotionFeatures, BruteForceStatisticsOracle) {
    gen::Rng r(12);
    for (int trial = 0; trial < 20; ++trial) {
        const auto s = gen::stream(r, 100);
        const auto x = motion_auth_features(whole(s));
        ASSERT_EQ(x.size(), 11u);
        const auto ax = axis(s, 0), ay = axis(s, 1), az = axis(s, 2);
        std::vector<double> norm;
        for (const auto& v : s.samples) norm.push_back(std::sqrt(v.ax * v.ax + v.ay * v.ay + v.az * v.az));
        const std::vector<double> want{two_pass_mean(ax), two_pass_mean(ay), two_pass_mean(az), pop_var(ax),
                                       pop_var(ay),        pop_var(az),        two_pass_mean(norm), pop_var(norm),
                                       pearson(ax, ay),    pearson(ax, az),    pearson(ay, az)};
        for (std::size_t i = 0; i < 11; ++i) expect_rel(x[i], want[i], 1e-9, schema_info(Schema::MotionAuth).labels[i].c_str());
    }
}

TEST(MotionFeatures, PermutationScalingAndRanges) {
    gen::Rng r(13);
    for (int trial = 0; trial < 30; ++trial) {
        auto s = gen::stream(r, static_cast<std::size_t>(r.integer(2, 120)));
        const auto x = motion_auth_features(whole(s));
        for (int i : {3, 4, 5, 7}) EXPECT_GE(x[static_cast<std::size_t>(i)], 0.0);
        for (int i : {8, 9, 10}) {
            EXPECT_GE(x[static_cast<std::size_t>(i)], -1.0 - 1e-12);
            EXPECT_LE(x[static_cast<std::size_t>(i)], 1.0 + 1e-12);
        }
        // shuffle sample values (keep timestamps) -> all motion features are order-free
        AccelStream p = s;
        std::vector<AccelSample> vals = s.samples;
        std::shuffle(vals.begin(), vals.end(), r.eng);
        for (std::size_t i = 0; i < vals.size(); ++i) p.samples[i] = {s.samples[i].t, vals[i].ax, vals[i].ay, vals[i].az};
        const auto xp = motion_auth_features(whole(p));
        for (std::size_t i = 0; i < x.size(); ++i) expect_rel(xp[i], x[i], 1e-9, "permutation");
        // scaling: means by c, variances by c^2, correlations unchanged
        const double c = r.uniform(0.1, 5.0);
        AccelStream sc = s;
        for (auto& v : sc.samples) v = {v.t, c * v.ax, c * v.ay, c * v.az};
        const auto xs = motion_auth_features(whole(sc));
        for (int i : {0, 1, 2, 6}) expect_rel(xs[static_cast<std::size_t>(i)], c * x[static_cast<std::size_t>(i)], 1e-9, "mean scale");
        for (int i : {3, 4, 5, 7}) expect_rel(xs[static_cast<std::size_t>(i)], c * c * x[static_cast<std::size_t>(i)], 1e-9, "var scale");
        for (int i : {8, 9, 10}) EXPECT_NEAR(xs[static_cast<std::size_t>(i)], x[static_cast<std::size_t>(i)], 1e-9);
    }
}

TEST(AudioFeatures, ZeroFrame) {
    const std::vector<double> z(16000, 0.0);
    EXPECT_EQ(audio_auth_features(std::span(z)).values, (std::vector<double>{0, 0, 0, 0}));
}

TEST(AudioFeatures, BinCenteredSinusoid) {
    std::vector<double> s(16000);
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = std::sin(2.0 * kPi * 500.0 * static_cast<double>(i) / 8000.0);
    const auto x = audio_auth_features(std::span(s));
    EXPECT_NEAR(x[0], 0.0, 1e-9);
    EXPECT_NEAR(x[2], 0.5, 1e-9);
    EXPECT_NEAR(x[1], 0.5, 1e-9);
}

TEST(AudioFeatures, WhiteNoiseMatchesDirectDftOracle) {
    gen::Rng r(21);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<double> s(256);
        for (auto& v : s) v = r.uniform(-1, 1);
        const auto x = audio_auth_features(std::span(s));
        // O(N^2) DFT, one-sided magnitudes k = 1..N/2, DC excluded
        const std::size_t n = s.size();
        std::vector<double> mags;
        for (std::size_t k = 1; k <= n / 2; ++k) {
            double re = 0.0, im = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                re += s[t] * std::cos(2.0 * kPi * static_cast<double>(k * t) / static_cast<double>(n));
                im -= s[t] * std::sin(2.0 * kPi * static_cast<double>(k * t) / static_cast<double>(n));
            }
            mags.push_back(std::sqrt(re * re + im * im) / static_cast<double>(n));
        }
        double energy = 0.0;
        for (double v : s) energy += v * v;
        energy /= static_cast<double>(n);
        expect_rel(x[0], two_pass_mean(s), 1e-6, "mean");
        expect_rel(x[1], pop_var(s), 1e-6, "var");
        expect_rel(x[2], energy, 1e-6, "energy");
        EXPECT_LE(std::abs(x[3] - pop_var(mags)), 1e-6 * pop_var(mags));
    }
}

TEST(AudioFeatures, LongFrameIsBlockAveragedBeforeTheDft) {
    gen::Rng r(22);
    std::vector<double> s(16000);
    for (auto& v : s) v = r.uniform(-1, 1);
    std::vector<double> reduced(256);
    for (std::size_t k = 0; k < 256; ++k) {
        const std::size_t lo = k * 16000 / 256, hi = (k + 1) * 16000 / 256;
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += s[i];
        reduced[k] = acc / static_cast<double>(hi - lo);
    }
    EXPECT_NEAR(dft_magnitude_variance(s), dft_magnitude_variance(reduced), 1e-15);
}

TEST(AudioFeatures, EmptyFrame) {
    const std::vector<double> empty;
    EXPECT_THROW(audio_auth_features(std::span(empty)), Error);
}

TEST(AudioFeatures, PermutationInvariantMomentsOnly) {
    gen::Rng r(23);
    std::vector<double> s(1000);
    for (auto& v : s) v = r.uniform(-1, 1);
    auto p = s;
    std::shuffle(p.begin(), p.end(), r.eng);
    const auto a = audio_auth_features(std::span(s)), b = audio_auth_features(std::span(p));
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(ShockFeatures, SilentMotionless) {
    AccelStream s;
    for (int i = 0; i < 25; ++i) s.samples.push_back({i / 50.0, 0, 0, 0});
    const AudioFrame f{0.0, 8000.0, std::vector<double>(4000, 0.0)};
    EXPECT_EQ(shock_features(whole(s), f).values, std::vector<double>(8, 0.0));
}

TEST(ShockFeatures, ShockExceedsWalk) {
    synth::FallGenSpec spec;
    spec.impact_g = 3.0;
    const auto fall = synth::gen_fall_trace(spec);
    const auto walk = synth::gen_normal_trace(synth::NormalKind::Walking, 10.0, 3);
    const double ti = *fall.truth.t_impact;
    const auto xs = shock_features_at(fall.accel, fall.audio, ti - 0.25, 0.5);
    const auto xw = shock_features_at(walk.accel, walk.audio, 4.0, 0.5);
    EXPECT_GT(xs[2], xw[2]);
    EXPECT_GT(xs[6], xw[6]);
    EXPECT_EQ(shock_features_at(fall.accel, fall.audio, ti - 0.25, 0.5), xs);
}

TEST(InstanceFeatures, Averages) {
    const FeatureVector a{Schema::Activity, {1, 1}}, b{Schema::Activity, {3, 3}};
    const std::vector<FeatureVector> one{a}, two{a, b};
    EXPECT_EQ(instance_features(one), a);
    EXPECT_EQ(instance_features(two).values, (std::vector<double>{2, 2}));

    gen::Rng r(31);
    std::vector<FeatureVector> five;
    for (int i = 0; i < 5; ++i) five.push_back({Schema::MotionAuth, gen::series(r, 11)});
    const auto m = instance_features(five);
    for (std::size_t d = 0; d < 11; ++d) {
        double s = 0.0;
        for (const auto& v : five) s += v[d];
        EXPECT_NEAR(m[d], s / 5.0, 1e-12);
    }
}

TEST(InstanceFeatures, MixedSchemasRejected) {
    const std::vector<FeatureVector> mixed{{Schema::Activity, {1, 1}}, {Schema::AudioAuth, {1, 1, 1, 1}}};
    try {
        instance_features(mixed);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Schema);
    }
}

TEST(Schemas, LengthsAndManifestRoundTrip) {
    EXPECT_EQ(schema_length(Schema::Activity), 2u);
    EXPECT_EQ(schema_length(Schema::MotionAuth), 11u);
    EXPECT_EQ(schema_length(Schema::AudioAuth), 4u);
    EXPECT_EQ(schema_length(Schema::AuthCombined), 15u);
    EXPECT_EQ(schema_length(Schema::Shock), 8u);
    for (auto s : {Schema::Activity, Schema::MotionAuth, Schema::AudioAuth, Schema::AuthCombined, Schema::Shock})
        EXPECT_EQ(check_manifest(schema_manifest(s)), s);
    auto bad = schema_manifest(Schema::Shock);
    bad["length"] = 7;
    EXPECT_THROW(check_manifest(bad), Error);
}

TEST(Features, Deterministic) {
    gen::Rng r(41);
    const auto s = gen::stream(r, 100);
    EXPECT_EQ(motion_auth_features(whole(s)), motion_auth_features(whole(s)));
    EXPECT_EQ(activity_features(whole(s)), activity_features(whole(s)));
}
