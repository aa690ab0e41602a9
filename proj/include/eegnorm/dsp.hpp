#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "eegnorm/error.hpp"
#include "eegnorm/recording.hpp"

namespace eegnorm::dsp {

using cplx = std::complex<double>;

/// One second-order section, a0 normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0;
    double a1 = 0.0, a2 = 0.0;

    /// H(z) at z = e^{j 2 pi f / fs}.
    [[nodiscard]] cplx response(double f, double fs) const {
        const cplx zi = std::polar(1.0, -2.0 * std::numbers::pi * f / fs);
        const cplx zi2 = zi * zi;
        return (b0 + b1 * zi + b2 * zi2) / (1.0 + a1 * zi + a2 * zi2);
    }

    [[nodiscard]] double pole_radius() const {
        const cplx disc = std::sqrt(cplx(a1 * a1 - 4.0 * a2, 0.0));
        return std::max(std::abs((-a1 + disc) / 2.0), std::abs((-a1 - disc) / 2.0));
    }

    [[nodiscard]] bool stable() const { return pole_radius() < 1.0; }
};

struct SosChain {
    std::vector<Biquad> sections;

    [[nodiscard]] int order() const { return 2 * static_cast<int>(sections.size()); }

    [[nodiscard]] cplx response(double f, double fs) const {
        cplx h{1.0, 0.0};
        for (const auto& s : sections) h *= s.response(f, fs);
        return h;
    }

    [[nodiscard]] double gain_db(double f, double fs) const { return 20.0 * std::log10(std::abs(response(f, fs))); }
};

inline SosChain identity_chain() { return SosChain{{Biquad{}}}; }

/// RBJ cookbook notch: exact zero at f0, unit gain at DC and Nyquist.
inline Biquad design_notch(double f0, double fs, double q = 30.0) {
    require(fs > 0.0 && f0 > 0.0 && f0 < fs / 2.0, "notch frequency must lie in (0, fs/2)");
    require(q > 0.0, "notch quality factor must be positive");
    const double w0 = 2.0 * std::numbers::pi * f0 / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    const double c = -2.0 * std::cos(w0);
    Biquad s{1.0 / a0, c / a0, 1.0 / a0, c / a0, (1.0 - alpha) / a0};
    if (!s.stable()) throw ValidationError("unstable notch design");
    return s;
}

/// Butterworth band-pass of total order `order` (even), built from an
/// order/2 analog low-pass prototype with a band-pass transform and a
/// prewarped bilinear map. Gain is normalized to 1 at the prewarped
/// geometric center frequency.
inline SosChain design_bandpass(double low, double high, double fs, int order) {
    require(fs > 0.0, "sampling rate must be positive");
    require(0.0 < low && low < high && high < fs / 2.0, "band edges must satisfy 0 < low < high < fs/2");
    require(order >= 2 && order % 2 == 0, "band-pass order must be even and >= 2");
    const int n = order / 2;
    const double fs2 = 2.0 * fs;
    const double wl = fs2 * std::tan(std::numbers::pi * low / fs);
    const double wh = fs2 * std::tan(std::numbers::pi * high / fs);
    const double bw = wh - wl;
    const double w0 = std::sqrt(wl * wh);

    std::vector<cplx> poles;
    for (int k = 0; k < n; ++k) {
        const cplx p = std::polar(1.0, std::numbers::pi * (2.0 * k + n + 1) / (2.0 * n));
        const cplx half = p * bw / 2.0;
        const cplx root = std::sqrt(half * half - w0 * w0);
        for (const cplx s : {half + root, half - root}) poles.push_back((fs2 + s) / (fs2 - s));
    }

    constexpr double kImagTol = 1e-12;
    std::vector<cplx> upper;
    std::vector<double> real;
    for (const auto& z : poles) {
        if (z.imag() > kImagTol) upper.push_back(z);
        else if (std::abs(z.imag()) <= kImagTol) real.push_back(z.real());
    }
    std::sort(real.begin(), real.end());
    if (real.size() % 2 != 0 || upper.size() + real.size() / 2 != static_cast<std::size_t>(n)) {
        throw ValidationError("band-pass pole pairing failed");
    }

    SosChain chain;
    for (const auto& z : upper) chain.sections.push_back({1.0, 0.0, -1.0, -2.0 * z.real(), std::norm(z)});
    for (std::size_t i = 0; i < real.size(); i += 2) {
        chain.sections.push_back({1.0, 0.0, -1.0, -(real[i] + real[i + 1]), real[i] * real[i + 1]});
    }

    const double fc = fs / std::numbers::pi * std::atan(w0 / fs2);
    const double g = std::pow(1.0 / std::abs(chain.response(fc, fs)), 1.0 / static_cast<double>(n));
    for (auto& s : chain.sections) {
        s.b0 *= g;
        s.b1 *= g;
        s.b2 *= g;
        if (!s.stable()) throw ValidationError("unstable band-pass section");
    }
    return chain;
}

namespace detail {

/// Direct form II transposed, in place, starting from a step-response
/// steady state scaled by the first sample.
inline void sosfilt_steady(const SosChain& chain, std::span<double> x) {
    if (x.empty()) return;
    double level = x[0];
    for (const auto& s : chain.sections) {
        const double dc = (s.b0 + s.b1 + s.b2) / (1.0 + s.a1 + s.a2);
        double z2 = (s.b2 - s.a2 * dc) * level;
        double z1 = (s.b1 - s.a1 * dc) * level + z2;
        for (double& v : x) {
            const double in = v;
            const double y = s.b0 * in + z1;
            z1 = s.b1 * in - s.a1 * y + z2;
            z2 = s.b2 * in - s.a2 * y;
            v = y;
        }
        level *= dc;
    }
}

}  // namespace detail

/// Zero-phase forward-backward filtering. The signal is extended at both
/// ends by odd reflection of 3x the chain order, filtered both ways, and
/// trimmed back to its input length.
inline std::vector<double> filt_fb(const SosChain& chain, std::span<const double> x) {
    require(!chain.sections.empty(), "empty filter chain");
    const std::size_t pad = 3 * static_cast<std::size_t>(chain.order());
    if (x.size() <= pad) {
        throw ValidationError("input too short for forward-backward filtering: need more than " +
                              std::to_string(pad) + " samples");
    }
    const std::size_t n = x.size();
    std::vector<double> ext(n + 2 * pad);
    for (std::size_t i = 0; i < pad; ++i) {
        ext[i] = 2.0 * x[0] - x[pad - i];
        ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];
    }
    std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
    detail::sosfilt_steady(chain, ext);
    std::reverse(ext.begin(), ext.end());
    detail::sosfilt_steady(chain, ext);
    std::reverse(ext.begin(), ext.end());
    return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

/// Keeps every second sample; the caller guarantees the input is band-limited.
inline std::vector<double> decimate2(std::span<const double> x) {
    std::vector<double> out(x.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[2 * i];
    return out;
}

struct PreprocessConfig {
    double input_fs = 500.0;
    double line_freq = 60.0;
    double notch_q = 30.0;
    double band_low = 0.1;
    double band_high = 59.0;
    int band_order = 4;
};

/// The fixed cleaning pipeline: notch at the line frequency and its first
/// harmonic, band-pass, then halve the sampling rate.
class Preprocessor {
public:
    explicit Preprocessor(PreprocessConfig cfg = {})
        : cfg_(cfg),
          notch1_{{design_notch(cfg.line_freq, cfg.input_fs, cfg.notch_q)}},
          notch2_{{design_notch(2.0 * cfg.line_freq, cfg.input_fs, cfg.notch_q)}},
          band_(design_bandpass(cfg.band_low, cfg.band_high, cfg.input_fs, cfg.band_order)) {}

    [[nodiscard]] std::vector<double> channel(std::span<const double> x) const {
        auto y = filt_fb(notch1_, x);
        y = filt_fb(notch2_, y);
        y = filt_fb(band_, y);
        return decimate2(y);
    }

    [[nodiscard]] Recording operator()(const Recording& rec) const {
        if (rec.fs != cfg_.input_fs) {
            throw ValidationError("unsupported input rate " + std::to_string(rec.fs) + " Hz (expected " +
                                  std::to_string(cfg_.input_fs) + " Hz)");
        }
        Recording out;
        out.id = rec.id;
        out.channels = rec.channels;
        out.meta = rec.meta;
        out.fs = rec.fs / 2.0;
        out.data.resize(rec.n_channels(), rec.n_samples() / 2);
        for (Eigen::Index c = 0; c < rec.n_channels(); ++c) {
            const auto y = channel(row_span(rec.data, c));
            std::copy(y.begin(), y.end(), row_span(out.data, c).begin());
        }
        return out;
    }

    [[nodiscard]] const SosChain& notch_line() const { return notch1_; }
    [[nodiscard]] const SosChain& notch_harmonic() const { return notch2_; }
    [[nodiscard]] const SosChain& bandpass() const { return band_; }

private:
    PreprocessConfig cfg_;
    SosChain notch1_;
    SosChain notch2_;
    SosChain band_;
};

inline Recording preprocess(const Recording& rec) {
    static const Preprocessor pre{};
    return pre(rec);
}

}  // namespace eegnorm::dsp
