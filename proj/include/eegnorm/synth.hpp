#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "eegnorm/error.hpp"
#include "eegnorm/parallel.hpp"
#include "eegnorm/recording.hpp"
#include "eegnorm/rng.hpp"

namespace eegnorm::synth {

inline constexpr const char* kReferenceChannel = "Cz";

/// Generator knobs. Amplitudes are in microvolts.
struct SynthSpec {
    int n_channels = 16;  // excluding the flat reference
    double duration_s = 300.0;
    double fs = 500.0;
    double age_min = 5.0;
    double age_max = 21.0;
    double line_freq = 60.0;
    double line_amp = 40.0;
    double gain_spread = 0.5;
    double burst_rate = 2.0;  // per minute
    double burst_amp = 50.0;
    double burst_len_s = 0.25;
    double pink_alpha = 1.0;
    double noise_amp = 10.0;
    double alpha_amp = 20.0;
    std::uint64_t master_seed = 1;

    [[nodiscard]] std::int64_t n_samples() const { return std::llround(duration_s * fs); }

    void validate() const {
        require(n_channels >= 1, "synth: n_channels must be >= 1");
        require(fs > 0.0, "synth: fs must be positive");
        require(duration_s > 0.0, "synth: duration must be positive");
        const double n = duration_s * fs;
        require(std::abs(n - std::round(n)) < 1e-9 * std::max(1.0, n) && std::round(n) >= 2.0,
                "synth: duration_s * fs must be an integer >= 2");
        require(line_amp <= 0.0 || fs > 2.0 * line_freq, "synth: fs must exceed twice the line frequency");
        require(gain_spread >= 0.0, "synth: gain_spread must be >= 0");
        require(age_min >= 0.0 && age_min <= age_max, "synth: invalid age range");
        require(burst_rate >= 0.0 && burst_amp >= 0.0 && burst_len_s > 0.0, "synth: invalid burst settings");
        require(noise_amp >= 0.0 && alpha_amp >= 0.0 && line_amp >= 0.0, "synth: amplitudes must be >= 0");
    }
};

/// Desk-scale layout with the production channel count: 128 + reference.
inline SynthSpec hbn_shape_preset() {
    SynthSpec s;
    s.n_channels = 128;
    return s;
}

/// Age sets the oscillation frequency on every channel; female subjects get
/// an extra frequency offset on the first `gender_channels` channels.
struct PlantedRule {
    double base_freq = 8.0;
    double slope = 0.1;  // Hz per year
    double gender_offset = 3.0;
    int gender_channels = 8;

    [[nodiscard]] double frequency(double age, Gender g, int channel) const {
        const double f = base_freq + slope * age;
        return (g == Gender::Female && channel < gender_channels) ? f + gender_offset : f;
    }

    void validate(const SynthSpec& spec) const {
        require(gender_channels >= 0 && gender_channels <= spec.n_channels, "synth: gender_channels out of range");
        for (double age : {spec.age_min, spec.age_max}) {
            for (Gender g : {Gender::Male, Gender::Female}) {
                const double f = frequency(age, g, 0);
                if (!(f > 0.1 && f < 59.0)) {
                    throw ValidationError("planted frequency " + std::to_string(f) + " Hz outside the 0.1-59 Hz passband");
                }
            }
        }
    }
};

/// Zero-mean, unit-variance noise with power spectrum ~ 1/f^alpha, shaped
/// in the frequency domain from white Gaussian samples.
inline std::vector<double> gen_pink_noise(std::size_t n, double alpha, Rng& rng) {
    require(n >= 2, "pink noise needs at least 2 samples");
    std::vector<double> white(n);
    for (auto& v : white) v = normal(rng);
    Eigen::FFT<double> fft;
    fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
    std::vector<std::complex<double>> spec;
    fft.fwd(spec, white);
    spec[0] = 0.0;
    for (std::size_t k = 1; k < spec.size(); ++k) spec[k] *= std::pow(static_cast<double>(k), -alpha / 2.0);
    std::vector<double> out;
    fft.inv(out, spec, static_cast<Eigen::Index>(n));
    out.resize(n);
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double& v : out) {
        v -= mean;
        ss += v * v;
    }
    const double sd = std::sqrt(ss / static_cast<double>(n));
    if (sd > 0.0) {
        for (double& v : out) v /= sd;
    }
    return out;
}

inline std::vector<std::string> channel_names(int n_channels) {
    std::vector<std::string> names;
    for (int c = 1; c <= n_channels; ++c) names.push_back("E" + std::to_string(c));
    names.emplace_back(kReferenceChannel);
    return names;
}

/// One subject's recording: per-channel gain times (planted sinusoid + pink
/// noise + line interference + log-normal bursts), plus an all-zero "Cz".
inline Recording gen_recording(const SynthSpec& spec, const SubjectMeta& subject, const PlantedRule& rule, Rng& rng) {
    spec.validate();
    rule.validate(spec);
    const auto n = spec.n_samples();
    const int nc = spec.n_channels;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    Recording rec;
    rec.id = subject.subject_id;
    rec.channels = channel_names(nc);
    rec.fs = spec.fs;
    rec.meta = subject;
    rec.data = Matrix::Zero(nc + 1, n);

    const double phase = uniform(rng, 0.0, two_pi);
    const double line_phase = uniform(rng, 0.0, two_pi);

    struct Burst {
        std::int64_t start;
        double amp;
    };
    std::vector<Burst> bursts;
    const auto burst_len = std::max<std::int64_t>(1, std::llround(spec.burst_len_s * spec.fs));
    if (spec.burst_rate > 0.0 && spec.burst_amp > 0.0) {
        const double rate_per_s = spec.burst_rate / 60.0;
        double t = -std::log(1.0 - uniform01(rng)) / rate_per_s;
        while (t < spec.duration_s) {
            bursts.push_back({static_cast<std::int64_t>(t * spec.fs), spec.burst_amp * std::exp(normal(rng))});
            t += -std::log(1.0 - uniform01(rng)) / rate_per_s;
        }
    }

    for (int c = 0; c < nc; ++c) {
        const double gain = std::exp(spec.gain_spread * normal(rng));
        const double f = rule.frequency(subject.age, subject.gender, c);
        std::vector<double> pink;
        if (spec.noise_amp > 0.0) pink = gen_pink_noise(static_cast<std::size_t>(n), spec.pink_alpha, rng);
        auto row = row_span(rec.data, c);
        for (std::int64_t i = 0; i < n; ++i) {
            const double t = static_cast<double>(i) / spec.fs;
            double v = spec.alpha_amp * std::sin(two_pi * f * t + phase);
            if (spec.line_amp > 0.0) v += spec.line_amp * std::sin(two_pi * spec.line_freq * t + line_phase);
            if (!pink.empty()) v += spec.noise_amp * pink[static_cast<std::size_t>(i)];
            row[static_cast<std::size_t>(i)] = v;
        }
        for (const auto& b : bursts) {
            for (std::int64_t j = 0; j < burst_len && b.start + j < n; ++j) {
                const double env = 0.5 - 0.5 * std::cos(two_pi * static_cast<double>(j) / static_cast<double>(burst_len));
                row[static_cast<std::size_t>(b.start + j)] += b.amp * env * normal(rng);
            }
        }
        for (double& v : row) v *= gain;
    }
    return rec;
}

inline std::string subject_name(int i) {
    std::string num = std::to_string(i + 1);
    if (num.size() < 3) num.insert(0, 3 - num.size(), '0');
    return "sub-" + num;
}

/// Subjects are dealt round-robin into groups g1..gK. Every subject draws
/// age, gender and signal from its own stream seeded by (master seed,
/// subject id), so the result does not depend on `workers`.
inline LabeledDataset gen_dataset(const SynthSpec& spec, const PlantedRule& rule, int n_subjects, int n_groups,
                                  unsigned workers = 1) {
    spec.validate();
    rule.validate(spec);
    require(n_groups >= 1 && n_subjects >= n_groups, "synth: need n_subjects >= n_groups >= 1");
    LabeledDataset ds;
    ds.seed = spec.master_seed;
    ds.recordings.resize(static_cast<std::size_t>(n_subjects));
    parallel_for(static_cast<std::size_t>(n_subjects), workers, [&](std::size_t i) {
        SubjectMeta meta;
        meta.subject_id = subject_name(static_cast<int>(i));
        meta.group = "g" + std::to_string(static_cast<int>(i) % n_groups + 1);
        Rng rng(mix_seed(spec.master_seed, meta.subject_id));
        meta.age = uniform(rng, spec.age_min, spec.age_max);
        meta.gender = uniform01(rng) < 0.5 ? Gender::Female : Gender::Male;
        ds.recordings[i] = gen_recording(spec, meta, rule, rng);
    });
    return ds;
}

}  // namespace eegnorm::synth
