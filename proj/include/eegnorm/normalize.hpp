#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "eegnorm/error.hpp"
#include "eegnorm/recording.hpp"

namespace eegnorm {

/// Normalization scope. `All` pools statistics over every channel and
/// timepoint in scope, `Channel` computes them row by row.
enum class Scheme : std::uint8_t { None = 0, All = 1, Channel = 2 };

inline constexpr std::array<Scheme, 3> kSchemes{Scheme::None, Scheme::All, Scheme::Channel};

inline std::string_view to_string(Scheme s) {
    switch (s) {
        case Scheme::None: return "none";
        case Scheme::All: return "all";
        case Scheme::Channel: return "channel";
    }
    return "?";
}

inline Scheme parse_scheme(std::string_view s) {
    for (auto v : kSchemes) {
        if (s == to_string(v)) return v;
    }
    throw ValidationError("invalid normalization scheme '" + std::string(s) + "' (valid values: none|all|channel)");
}

struct NormalizationPlan {
    Scheme recording = Scheme::None;
    Scheme window = Scheme::None;

    friend bool operator==(const NormalizationPlan&, const NormalizationPlan&) = default;

    /// Row-major position in the 3x3 grid (recording scheme selects the row).
    [[nodiscard]] int index() const { return 3 * static_cast<int>(recording) + static_cast<int>(window); }
};

inline std::string to_string(const NormalizationPlan& p) {
    return std::string(to_string(p.recording)) + "-" + std::string(to_string(p.window));
}

/// Accepts "rec-win", "rec,win" or "rec:win".
inline NormalizationPlan parse_plan(std::string_view s) {
    const auto sep = s.find_first_of("-,:");
    if (sep == std::string_view::npos) {
        throw ValidationError("invalid plan '" + std::string(s) + "' (expected <recording>-<window>, each none|all|channel)");
    }
    return {parse_scheme(s.substr(0, sep)), parse_scheme(s.substr(sep + 1))};
}

inline std::vector<NormalizationPlan> full_grid() {
    std::vector<NormalizationPlan> plans;
    for (auto r : kSchemes) {
        for (auto w : kSchemes) plans.push_back({r, w});
    }
    return plans;
}

enum class DegeneracyPolicy : std::uint8_t { Error, FlagIdentity, Propagate };

inline std::string_view to_string(DegeneracyPolicy p) {
    switch (p) {
        case DegeneracyPolicy::Error: return "error";
        case DegeneracyPolicy::FlagIdentity: return "flag";
        case DegeneracyPolicy::Propagate: return "propagate";
    }
    return "?";
}

inline DegeneracyPolicy parse_policy(std::string_view s) {
    if (s == "error") return DegeneracyPolicy::Error;
    if (s == "flag" || s == "flag_identity") return DegeneracyPolicy::FlagIdentity;
    if (s == "propagate") return DegeneracyPolicy::Propagate;
    throw ValidationError("invalid degeneracy policy '" + std::string(s) + "' (valid values: error|flag|propagate)");
}

namespace detail {

/// Type-7 quantile on a scratch buffer that may be reordered. Selection
/// only; the buffer is never fully sorted.
inline double quantile_select(std::span<double> v, double q) {
    const std::size_t n = v.size();
    const double h = static_cast<double>(n - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const double frac = h - static_cast<double>(lo);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(lo), v.end());
    const double x_lo = v[lo];
    if (lo + 1 >= n || frac == 0.0) return x_lo;
    const double x_hi = *std::min_element(v.begin() + static_cast<std::ptrdiff_t>(lo + 1), v.end());
    return x_lo + frac * (x_hi - x_lo);
}

inline void check_quantile_input(std::span<const double> xs, double q) {
    if (xs.empty()) throw ValidationError("quantile of empty input");
    if (!(q >= 0.0 && q <= 1.0)) throw ValidationError("quantile fraction must lie in [0, 1]");
}

}  // namespace detail

/// Type-7 (linear interpolation) sample quantile.
inline double quantile(std::span<const double> xs, double q) {
    detail::check_quantile_input(xs, q);
    std::vector<double> buf(xs.begin(), xs.end());
    if (std::any_of(buf.begin(), buf.end(), [](double v) { return std::isnan(v); })) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    return detail::quantile_select(buf, q);
}

struct MedianIqr {
    double median = 0.0;
    double iqr = 0.0;
};

/// Median and Q75 - Q25 of a sample, reusing one scratch copy.
inline MedianIqr median_iqr(std::span<const double> xs) {
    detail::check_quantile_input(xs, 0.5);
    std::vector<double> buf(xs.begin(), xs.end());
    MedianIqr out;
    if (std::any_of(buf.begin(), buf.end(), [](double v) { return std::isnan(v); })) {
        out.median = out.iqr = std::numeric_limits<double>::quiet_NaN();
        return out;
    }
    out.median = detail::quantile_select(buf, 0.5);
    const double q75 = detail::quantile_select(buf, 0.75);
    const double q25 = detail::quantile_select(buf, 0.25);
    out.iqr = q75 - q25;
    return out;
}

enum class StatsScope : std::uint8_t { Pooled, PerChannel };

struct RobustStats {
    StatsScope scope = StatsScope::Pooled;
    /// One entry when pooled, one per channel otherwise.
    std::vector<double> median;
    std::vector<double> iqr;
};

inline RobustStats robust_stats(const Matrix& data, StatsScope scope) {
    if (data.size() == 0) throw ValidationError("robust statistics of an empty matrix");
    RobustStats st;
    st.scope = scope;
    if (scope == StatsScope::Pooled) {
        const auto s = median_iqr({data.data(), static_cast<std::size_t>(data.size())});
        st.median.push_back(s.median);
        st.iqr.push_back(s.iqr);
    } else {
        for (Eigen::Index c = 0; c < data.rows(); ++c) {
            const auto s = median_iqr(row_span(data, c));
            st.median.push_back(s.median);
            st.iqr.push_back(s.iqr);
        }
    }
    return st;
}

/// Threshold below which an IQR counts as degenerate.
inline double degeneracy_eps(double median) { return 1e-12 * std::max(1.0, std::abs(median)); }

struct ScaledData {
    Matrix data;
    /// Sorted indices of channels whose scale was degenerate.
    std::vector<int> flags;
};

/// (x - median) / iqr with scope-appropriate broadcasting.
inline ScaledData apply_scale(const Matrix& data, const RobustStats& stats, DegeneracyPolicy policy) {
    const std::size_t want = stats.scope == StatsScope::Pooled ? 1 : static_cast<std::size_t>(data.rows());
    require(stats.median.size() == want && stats.iqr.size() == want, "statistics do not match data shape");
    ScaledData out{data, {}};
    for (Eigen::Index c = 0; c < data.rows(); ++c) {
        const std::size_t k = stats.scope == StatsScope::Pooled ? 0 : static_cast<std::size_t>(c);
        const double med = stats.median[k];
        double scale = stats.iqr[k];
        if (!(scale >= degeneracy_eps(med))) {
            out.flags.push_back(static_cast<int>(c));
            if (policy == DegeneracyPolicy::Error) {
                throw DegenerateScaleError("degenerate scale (IQR < eps) on channel " + std::to_string(c));
            }
            if (policy == DegeneracyPolicy::FlagIdentity) scale = 1.0;
        }
        for (double& v : row_span(out.data, c)) v = (v - med) / scale;
    }
    return out;
}

inline ScaledData normalize(const Matrix& data, Scheme scheme, DegeneracyPolicy policy = DegeneracyPolicy::FlagIdentity) {
    switch (scheme) {
        case Scheme::None: return {data, {}};
        case Scheme::All: return apply_scale(data, robust_stats(data, StatsScope::Pooled), policy);
        case Scheme::Channel: return apply_scale(data, robust_stats(data, StatsScope::PerChannel), policy);
    }
    return {data, {}};
}

struct WindowTensor {
    Matrix data;
    std::string recording_id;
    std::int64_t offset_samples = 0;
    /// Sorted, unique degenerate channel indices accumulated over the plan.
    std::vector<int> flags;
};

inline std::int64_t window_samples(double window_len_s, double fs) {
    const double s = window_len_s * fs;
    const double r = std::round(s);
    if (!(s > 0.0) || std::abs(s - r) > 1e-9 * std::max(1.0, s) || r < 1.0) {
        throw ValidationError("window length times sampling rate must be a positive integer");
    }
    return static_cast<std::int64_t>(r);
}

/// Non-overlapping windows at offsets 0, S, 2S, ...; the remainder is dropped.
inline std::vector<WindowTensor> segment_windows(const Recording& rec, double window_len_s) {
    const auto s = window_samples(window_len_s, rec.fs);
    const auto n = static_cast<std::int64_t>(rec.n_samples()) / s;
    std::vector<WindowTensor> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t k = 0; k < n; ++k) {
        out.push_back({rec.data.middleCols(k * s, s), rec.id, k * s, {}});
    }
    return out;
}

namespace detail {

inline void merge_flags(std::vector<int>& into, const std::vector<int>& more) {
    std::vector<int> merged;
    std::set_union(into.begin(), into.end(), more.begin(), more.end(), std::back_inserter(merged));
    into = std::move(merged);
}

}  // namespace detail

/// Recording-level scaling, then segmentation, then per-window scaling.
inline std::vector<WindowTensor> apply_plan(const Recording& rec, NormalizationPlan plan, double window_len_s,
                                            DegeneracyPolicy policy = DegeneracyPolicy::FlagIdentity) {
    auto scaled = normalize(rec.data, plan.recording, policy);
    Recording tmp;
    tmp.id = rec.id;
    tmp.fs = rec.fs;
    tmp.data = std::move(scaled.data);
    auto windows = segment_windows(tmp, window_len_s);
    for (auto& w : windows) {
        auto ws = normalize(w.data, plan.window, policy);
        w.data = std::move(ws.data);
        w.flags = scaled.flags;
        detail::merge_flags(w.flags, ws.flags);
    }
    return windows;
}

struct NonFiniteWindow {
    std::string recording_id;
    std::int64_t offset_samples = 0;
    std::size_t count = 0;
};

struct ProbeReport {
    std::size_t n_windows = 0;
    std::vector<NonFiniteWindow> non_finite;
    /// Total degenerate channel flags over all windows.
    std::size_t flagged_channels = 0;
    std::size_t flagged_windows = 0;
    std::size_t affected_windows = 0;

    [[nodiscard]] std::size_t non_finite_windows() const { return non_finite.size(); }
    [[nodiscard]] double affected_fraction() const {
        return n_windows == 0 ? 0.0 : static_cast<double>(affected_windows) / static_cast<double>(n_windows);
    }
    /// True when nothing degenerate or non-finite was seen.
    [[nodiscard]] bool clean() const { return non_finite.empty() && flagged_channels == 0; }

    void merge(const ProbeReport& o) {
        n_windows += o.n_windows;
        non_finite.insert(non_finite.end(), o.non_finite.begin(), o.non_finite.end());
        flagged_channels += o.flagged_channels;
        flagged_windows += o.flagged_windows;
        affected_windows += o.affected_windows;
    }
};

inline ProbeReport degeneracy_probe(std::span<const WindowTensor> windows) {
    ProbeReport rep;
    rep.n_windows = windows.size();
    for (const auto& w : windows) {
        const auto bad = count_non_finite(w.data);
        if (bad != 0) rep.non_finite.push_back({w.recording_id, w.offset_samples, bad});
        rep.flagged_channels += w.flags.size();
        rep.flagged_windows += w.flags.empty() ? 0 : 1;
        rep.affected_windows += (bad != 0 || !w.flags.empty()) ? 1 : 0;
    }
    return rep;
}

}  // namespace eegnorm
