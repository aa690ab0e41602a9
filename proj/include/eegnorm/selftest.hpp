#pragma once

#include <cmath>
#include <iomanip>
#include <sstream>
#include <numbers>
#include <string>
#include <vector>

#include "eegnorm/cpc.hpp"
#include "eegnorm/dsp.hpp"
#include "eegnorm/learn.hpp"
#include "eegnorm/normalize.hpp"
#include "eegnorm/recording_io.hpp"
#include "eegnorm/rng.hpp"

// Quick oracle checks for the `selftest` subcommand. Each oracle is computed
// here by a different route than the library code it checks.

namespace eegnorm::selftest {

using Eigen::Index;

struct Check {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::string num(double v) {
    std::ostringstream os;
    os << std::setprecision(4) << v;
    return os.str();
}

namespace oracle {

inline double sorted_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

/// Amplitude of the `f` Hz component over the central half of `x`.
inline double tone_amplitude(std::span<const double> x, double f, double fs) {
    const std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
    double re = 0.0, im = 0.0;
    for (std::size_t i = a; i < b; ++i) {
        const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
        re += x[i] * std::cos(ph);
        im += x[i] * std::sin(ph);
    }
    return 2.0 * std::hypot(re, im) / static_cast<double>(b - a);
}

}  // namespace oracle

inline Check check_quantiles() {
    Rng rng(101);
    double worst = 0.0;
    for (int t = 0; t < 300; ++t) {
        const auto n = 1 + uniform_index(rng, 400);
        const double scale = std::pow(10.0, uniform(rng, -6.0, 6.0));
        std::vector<double> v(n);
        for (auto& x : v) x = scale * normal(rng);
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0, uniform01(rng)}) {
            const double d = std::abs(quantile(v, q) - oracle::sorted_quantile(v, q));
            worst = std::max(worst, d / std::max(1.0, scale));
        }
    }
    return {"quantile vs sort oracle", worst <= 1e-12, "max scaled error " + num(worst)};
}

inline Check check_channel_scaling() {
    Rng rng(102);
    Matrix m(6, 257);
    for (Index c = 0; c < m.rows(); ++c) {
        const double g = std::exp(normal(rng)), off = 10.0 * normal(rng);
        for (Index j = 0; j < m.cols(); ++j) m(c, j) = off + g * normal(rng);
    }
    const auto out = normalize(m, Scheme::Channel);
    double worst = 0.0;
    for (Index c = 0; c < m.rows(); ++c) {
        std::vector<double> row(out.data.row(c).begin(), out.data.row(c).end());
        const double med = oracle::sorted_quantile(row, 0.5);
        const double iqr = oracle::sorted_quantile(row, 0.75) - oracle::sorted_quantile(row, 0.25);
        worst = std::max({worst, std::abs(med), std::abs(iqr - 1.0)});
    }
    return {"per-channel median 0, IQR 1", worst <= 1e-9, "max deviation " + num(worst)};
}

inline Check check_preprocess() {
    const double fs = 500.0;
    const std::size_t n = 20000;
    auto tone = [&](double f) {
        Recording r;
        r.id = "tone";
        r.fs = fs;
        r.channels = {"E1"};
        r.data.resize(1, static_cast<Index>(n));
        for (std::size_t i = 0; i < n; ++i) r.data(0, static_cast<Index>(i)) = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
        const auto out = dsp::preprocess(r);
        const auto row = row_span(out.data, 0);
        return oracle::tone_amplitude(row, f, out.fs);
    };
    // 120 Hz is measured before decimation folds it.
    Recording r;
    r.fs = fs;
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(2.0 * std::numbers::pi * 120.0 * static_cast<double>(i) / fs);
    dsp::SosChain chain;
    chain.sections = {dsp::design_notch(60.0, fs), dsp::design_notch(120.0, fs)};
    for (const auto& s : dsp::design_bandpass(0.1, 59.0, fs, 4).sections) chain.sections.push_back(s);
    const auto y120 = dsp::filt_fb(chain, x);
    const double a60 = 20.0 * std::log10(tone(60.0));
    const double a120 = 20.0 * std::log10(oracle::tone_amplitude(y120, 120.0, fs));
    const double a10 = 20.0 * std::log10(tone(10.0));
    const bool ok = a60 <= -30.0 && a120 <= -30.0 && std::abs(a10) <= 1.0;
    return {"preprocess tone gains", ok,
            "60 Hz " + num(a60) + " dB, 120 Hz " + num(a120) + " dB, 10 Hz " + num(a10) + " dB"};
}

inline Check check_chance_anchor() {
    Rng rng(103);
    const int k = 20;
    const Index d = 64;
    double sum = 0.0;
    const int draws = 2000;
    auto unit = [&] {
        Vector v(d);
        for (Index i = 0; i < d; ++i) v[i] = normal(rng);
        return Vector(v / v.norm());
    };
    for (int t = 0; t < draws; ++t) {
        const Vector pred = unit();
        Eigen::MatrixXd dist(k, d);
        for (int i = 0; i < k; ++i) dist.row(i) = unit().transpose();
        sum += cpc::info_nce(pred, unit(), dist).loss;
    }
    const double mean = sum / draws;
    const double zero = cpc::info_nce(Vector::Zero(d), unit(), Eigen::MatrixXd::Zero(k, d)).loss;
    const double ln21 = std::log(21.0);
    const bool ok = std::abs(mean - ln21) <= 0.02 && std::abs(zero - ln21) <= 1e-12;
    return {"InfoNCE chance level ln 21", ok, "random mean " + num(mean) + ", zero " + num(zero)};
}

inline Check check_gradients() {
    Rng rng(104);
    const learn::Mlp mlp(5, 4, 2);
    const Vector p = mlp.init(rng);
    Matrix x(3, 5);
    for (Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    const std::vector<std::size_t> y{0, 1, 1};
    auto mlp_loss = [&](const Vector& q, Vector* grad) {
        learn::Mlp::Cache cache;
        const Eigen::MatrixXd out = mlp.forward(q, x, &cache);
        Eigen::MatrixXd g(out.rows(), out.cols());
        double loss = 0.0;
        for (Index r = 0; r < out.rows(); ++r) {
            std::vector<double> logits(out.row(r).begin(), out.row(r).end()), gr(logits.size());
            loss += learn::cross_entropy_grad(logits, y[static_cast<std::size_t>(r)], gr);
            for (Index c = 0; c < out.cols(); ++c) g(r, c) = gr[static_cast<std::size_t>(c)];
        }
        if (grad) mlp.backward(q, x, cache, g, *grad);
        return loss;
    };
    Vector g = Vector::Zero(p.size());
    mlp_loss(p, &g);
    const double e_mlp = learn::grad_check([&](const Vector& q) { return mlp_loss(q, nullptr); }, p, g);

    const cpc::CpcModel model(6, 3);
    const Vector cp = model.init(rng);
    std::vector<cpc::CpcSequence> seqs(2);
    for (int s = 0; s < 2; ++s) {
        seqs[static_cast<std::size_t>(s)].recording = s;
        seqs[static_cast<std::size_t>(s)].segs.resize(5, 6);
        for (Index i = 0; i < 30; ++i) seqs[static_cast<std::size_t>(s)].segs.data()[i] = static_cast<float>(normal(rng));
    }
    cpc::CpcConfig cfg;
    cfg.n_distractors = 3;
    cfg.mask_rate = 0.5;
    const std::vector<const cpc::CpcSequence*> ptrs{&seqs[0], &seqs[1]};
    const auto batch = cpc::make_batch(ptrs, cfg, rng);
    const auto lg = cpc::cpc_loss(model, cp, batch, true);
    const double e_cpc = learn::grad_check([&](const Vector& q) { return cpc::cpc_loss(model, q, batch, false).loss; }, cp, lg.grad);
    const bool ok = e_mlp < 1e-6 && e_cpc < 1e-6;
    return {"gradient checks", ok, "mlp " + num(e_mlp) + ", cpc " + num(e_cpc)};
}

inline Check check_adamax() {
    Vector p(2);
    p << 1.0, -2.0;
    Vector g(2);
    g << 0.5, -4.0;
    learn::AdamaxState st(2);
    learn::adamax_step(p, g, st);
    // First step moves each coordinate by lr * sign(g) up to eps.
    const double e0 = std::abs(p[0] - (1.0 - 0.002 * 0.5 / (0.5 + 1e-8)));
    const double e1 = std::abs(p[1] - (-2.0 + 0.002 * 4.0 / (4.0 + 1e-8)));
    return {"adamax first step", std::max(e0, e1) < 1e-15, "error " + num(std::max(e0, e1))};
}

inline Check check_round_trip() {
    Recording r;
    r.id = "rt";
    r.meta = SubjectMeta{"rt", 10.0, Gender::Male, "g1"};
    r.fs = 250.0;
    r.channels = {"E1", "E2"};
    r.data.resize(2, 7);
    for (Index i = 0; i < r.data.size(); ++i) r.data.data()[i] = static_cast<float>(0.1 * static_cast<double>(i) - 0.3);
    const auto bytes = encode_recording(r);
    const auto back = decode_recording(std::vector<char>(bytes.begin(), bytes.end()), "selftest");
    const bool ok = back.channels == r.channels && back.fs == r.fs && back.data == r.data &&
                    bytes.size() == recording_file_size(r.channels, r.n_samples());
    return {"recording file round trip", ok, num(static_cast<double>(bytes.size())) + " bytes"};
}

inline std::vector<Check> run_all() {
    return {check_quantiles(), check_channel_scaling(), check_preprocess(), check_chance_anchor(),
            check_gradients(), check_adamax(), check_round_trip()};
}

}  // namespace eegnorm::selftest
