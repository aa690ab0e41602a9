// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "eegnorm/eegnorm.hpp"

using namespace eegnorm;
using Eigen::Index;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

double oracle_quantile(std::vector<double> v, double q) {
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Vector unit(Rng& rng, Index d) {
    Vector v(d);
    for (Index i = 0; i < d; ++i) v[i] = normal(rng);
    return v / v.norm();
}

// ------------------------------------------------------------------ 1

Outcome criterion1() {
    const auto t0 = Clock::now();
    Rng rng(1001);
    double worst = 0.0;
    for (int t = 0; t < 1000; ++t) {
        const auto n = 1 + uniform_index(rng, 1000);
        const double scale = std::pow(10.0, uniform(rng, -4.0, 4.0));
        const double shift = scale * 10.0 * normal(rng);
        std::vector<double> v(n);
        for (auto& x : v) x = shift + scale * normal(rng);
        for (double q : {0.0, 0.25, 0.5, 0.75, 1.0, uniform01(rng)}) {
            worst = std::max(worst, std::abs(quantile(v, q) - oracle_quantile(v, q)));
        }
        const auto mi = median_iqr(v);
        worst = std::max(worst, std::abs(mi.median - oracle_quantile(v, 0.5)));
        worst = std::max(worst, std::abs(mi.iqr - (oracle_quantile(v, 0.75) - oracle_quantile(v, 0.25))));
        // Per-channel and pooled statistics on the same values as a 1 x n matrix.
        const Matrix m = Eigen::Map<const Eigen::RowVectorXd>(v.data(), static_cast<Index>(n));
        const auto pc = robust_stats(m, StatsScope::PerChannel);
        const auto po = robust_stats(m, StatsScope::Pooled);
        worst = std::max({worst, std::abs(pc.median[0] - mi.median), std::abs(po.iqr[0] - mi.iqr)});
    }
    const double secs = seconds_since(t0);
    return {worst <= 1e-12 && secs < 5.0, "max abs error " + fmt("%.3g", worst) + ", " + fmt("%.2f", secs) + " s"};
}

// ------------------------------------------------------------------ 2

Outcome criterion2() {
    synth::SynthSpec spec;
    spec.duration_s = 60.0;
    auto ds = synth::gen_dataset(spec, synth::PlantedRule{}, 50, 5);
    for (auto& r : ds.recordings) r = dsp::preprocess(r);  // Cz stays: degenerate rows are exercised

    double worst = 0.0;
    std::size_t checked = 0, skipped = 0;
    auto check_rows = [&](const Matrix& m, const std::vector<int>& flags) {
        for (Index c = 0; c < m.rows(); ++c) {
            if (std::binary_search(flags.begin(), flags.end(), static_cast<int>(c))) {
                ++skipped;
                continue;
            }
            const std::vector<double> row(m.row(c).begin(), m.row(c).end());
            worst = std::max(worst, std::abs(oracle_quantile(row, 0.5)));
            worst = std::max(worst, std::abs(oracle_quantile(row, 0.75) - oracle_quantile(row, 0.25) - 1.0));
            ++checked;
        }
    };
    auto check_pooled = [&](const Matrix& m) {
        const std::vector<double> all(m.data(), m.data() + m.size());
        worst = std::max(worst, std::abs(oracle_quantile(all, 0.5)));
        worst = std::max(worst, std::abs(oracle_quantile(all, 0.75) - oracle_quantile(all, 0.25) - 1.0));
        ++checked;
    };
    for (const auto& rec : ds.recordings) {
        for (const auto& plan : full_grid()) {
            if (plan.window == Scheme::None && plan.recording != Scheme::None) {
                const auto scaled = normalize(rec.data, plan.recording);
                if (plan.recording == Scheme::Channel) check_rows(scaled.data, scaled.flags);
                else check_pooled(scaled.data);
            }
            const auto windows = apply_plan(rec, plan, 2.0);
            for (const auto& w : windows) {
                if (plan.window == Scheme::Channel) {
                    check_rows(w.data, w.flags);
                } else if (plan.window == Scheme::All) {
                    check_pooled(w.data);
                }
            }
        }
    }

    // Affine invariance and idempotence on windows of the same data.
    Rng rng(1002);
    double affine = 0.0, idem = 0.0;
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        auto rec = drop_channels(ds.recordings[i], {synth::kReferenceChannel});
        const auto w = segment_windows(rec, 2.0)[uniform_index(rng, 30)].data;
        const double a = std::exp(uniform(rng, -3.0, 3.0)), b = 100.0 * normal(rng);
        for (auto s : {Scheme::All, Scheme::Channel}) {
            const auto base = normalize(w, s).data;
            const Matrix pos = (a * w.array() + b).matrix();
            const Matrix neg = (-a * w.array() + b).matrix();
            affine = std::max(affine, (normalize(pos, s).data - base).cwiseAbs().maxCoeff());
            affine = std::max(affine, (normalize(neg, s).data + base).cwiseAbs().maxCoeff());
            idem = std::max(idem, (normalize(base, s).data - base).cwiseAbs().maxCoeff());
        }
    }
    const bool ok = worst <= 1e-9 && affine <= 1e-9 && idem <= 1e-9 && checked > 0;
    return {ok, "postcondition " + fmt("%.3g", worst) + " over " + std::to_string(checked) + " rows/blocks (" +
                    std::to_string(skipped) + " degenerate rows skipped), affine " + fmt("%.3g", affine) +
                    ", idempotence " + fmt("%.3g", idem)};
}

// ------------------------------------------------------------------ 3

double tone_amplitude(std::span<const double> x, double f, double fs) {
    const std::size_t a = x.size() / 4, b = 3 * x.size() / 4;
    double re = 0.0, im = 0.0;
    for (std::size_t i = a; i < b; ++i) {
        const double ph = 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs;
        re += x[i] * std::cos(ph);
        im += x[i] * std::sin(ph);
    }
    return 2.0 * std::hypot(re, im) / static_cast<double>(b - a);
}

Outcome criterion3() {
    const double fs = 500.0;
    const Index n = 30000;
    auto run = [&](double f) {
        Recording r;
        r.id = "tone";
        r.fs = fs;
        r.channels = {"E1"};
        r.data.resize(1, n);
        for (Index i = 0; i < n; ++i) r.data(0, i) = std::sin(2.0 * std::numbers::pi * f * static_cast<double>(i) / fs + 0.4);
        return std::pair{r, dsp::preprocess(r)};
    };
    const auto [in60, out60] = run(60.0);
    const auto [in120, out120] = run(120.0);
    const auto [in10, out10] = run(10.0);
    const double g60 = 20.0 * std::log10(tone_amplitude(row_span(out60.data, 0), 60.0, 250.0));
    const double g120 = 20.0 * std::log10(tone_amplitude(row_span(out120.data, 0), 120.0, 250.0));
    const double g10 = 20.0 * std::log10(tone_amplitude(row_span(out10.data, 0), 10.0, 250.0));

    // Cross-correlation of the decimated input with the output.
    const auto x = dsp::decimate2(row_span(in10.data, 0));
    const auto y = row_span(out10.data, 0);
    int best_lag = 0;
    double best = -1e300;
    const int m = static_cast<int>(x.size());
    for (int lag = -25; lag <= 25; ++lag) {
        double s = 0.0;
        for (int i = std::max(0, -lag); i < std::min(m, m - lag); ++i) s += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
        if (s > best) {
            best = s;
            best_lag = lag;
        }
    }
    const bool ok = g60 <= -30.0 && g120 <= -30.0 && std::abs(g10) <= 1.0 && best_lag == 0 && out10.fs == 250.0 &&
                    out10.n_samples() == n / 2;
    return {ok, "60 Hz " + fmt("%.1f", g60) + " dB, 120 Hz " + fmt("%.1f", g120) + " dB, 10 Hz " + fmt("%.4f", g10) +
                    " dB, xcorr peak lag " + std::to_string(best_lag) + ", fs " + fmt("%.1f", out10.fs)};
}

// ------------------------------------------------------------------ 4

Outcome criterion4() {
    const double ln21 = std::log(21.0);
    Rng rng(1004);
    const int draws = 5000;
    const Index d = 64;
    double sum = 0.0;
    for (int t = 0; t < draws; ++t) {
        Eigen::MatrixXd dist(20, d);
        for (int i = 0; i < 20; ++i) dist.row(i) = unit(rng, d).transpose();
        sum += cpc::info_nce(unit(rng, d), unit(rng, d), dist).loss;
    }
    const double random_mean = sum / draws;

    // Zero-initialized encoder on real windows: every similarity is zero.
    synth::SynthSpec spec;
    spec.duration_s = 40.0;
    spec.n_channels = 4;
    spec.fs = 500.0;
    synth::PlantedRule rule;
    rule.gender_channels = 2;
    const auto ds = synth::gen_dataset(spec, rule, 4, 2);
    std::vector<cpc::CpcSequence> seqs;
    for (std::size_t i = 0; i < ds.recordings.size(); ++i) {
        for (const auto& w : apply_plan(ds.recordings[i], {Scheme::None, Scheme::All}, 20.0)) {
            seqs.push_back(cpc::to_sequence(w, 500, static_cast<int>(i)));
        }
    }
    const cpc::CpcModel model(seqs[0].width(), 16);
    double zero_sum = 0.0;
    const int zero_draws = 1000;
    Rng mrng(1005);
    const Vector p = model.init(mrng, true);
    cpc::CpcConfig cfg;
    std::size_t slots = 0;
    for (int t = 0; t < zero_draws; ++t) {
        const std::vector<const cpc::CpcSequence*> one{&seqs[static_cast<std::size_t>(t) % seqs.size()]};
        const auto batch = cpc::make_batch(one, cfg, mrng);
        zero_sum += cpc::cpc_loss(model, p, batch, false).loss * static_cast<double>(batch.slots.size());
        slots += batch.slots.size();
    }
    const double zero_mean = zero_sum / static_cast<double>(slots);
    const bool ok = std::abs(random_mean - ln21) <= 0.02 && std::abs(zero_mean - ln21) <= 0.02;
    return {ok, "random unit D=64 mean " + fmt("%.4f", random_mean) + " over " + std::to_string(draws) +
                    " draws, zero encoder " + fmt("%.6f", zero_mean) + " over " + std::to_string(slots) +
                    " slots, ln 21 = " + fmt("%.4f", ln21)};
}

// ------------------------------------------------------------------ 5

Outcome criterion5() {
    const auto t0 = Clock::now();
    Rng rng(1006);
    double worst_enc = 0.0, worst_ctx = 0.0, worst_nce = 0.0, worst_mlp = 0.0;
    for (int t = 0; t < 5; ++t) {
        // Full CPC loss: encoder, mask embedding, contextualizer, projection.
        const Index width = 2 + static_cast<Index>(uniform_index(rng, 6));
        const Index d = 2 + static_cast<Index>(uniform_index(rng, 4));
        const Index len = 3 + static_cast<Index>(uniform_index(rng, 4));
        std::vector<cpc::CpcSequence> seqs(3);
        for (int s = 0; s < 3; ++s) {
            auto& q = seqs[static_cast<std::size_t>(s)];
            q.recording = s;
            q.segs.resize(len, width);
            for (Index i = 0; i < q.segs.size(); ++i) q.segs.data()[i] = static_cast<float>(normal(rng));
        }
        const cpc::CpcModel model(width, d);
        const Vector p = model.init(rng);
        cpc::CpcConfig cfg;
        cfg.n_distractors = 4;
        cfg.mask_rate = 0.4;
        cfg.mode = t % 2 ? cpc::DistractorMode::CrossRecording : cpc::DistractorMode::SameRecording;
        const std::vector<const cpc::CpcSequence*> ptrs{&seqs[0], &seqs[1], &seqs[2]};
        const auto batch = cpc::make_batch(ptrs, cfg, rng);
        const auto lg = cpc::cpc_loss(model, p, batch);
        worst_enc = std::max(worst_enc, learn::grad_check([&](const Vector& q) { return cpc::cpc_loss(model, q, batch, false).loss; }, p, lg.grad));

        // Contextualizer alone through BPTT.
        Eigen::MatrixXd in(len, d), w(len, d);
        for (Index i = 0; i < in.size(); ++i) {
            in.data()[i] = normal(rng);
            w.data()[i] = normal(rng);
        }
        cpc::CpcModel::Trace tr;
        (void)model.contextualize(p, in, &tr);
        Vector g = Vector::Zero(p.size());
        (void)model.contextualize_backward(p, tr, w, g);
        worst_ctx = std::max(worst_ctx, learn::grad_check([&](const Vector& q) { return (model.contextualize(q, in).array() * w.array()).sum(); }, p, g));

        // InfoNCE on packed (pred, pos, distractors).
        const Index k = 1 + static_cast<Index>(uniform_index(rng, 20));
        Vector packed(2 * d + k * d);
        for (Index i = 0; i < packed.size(); ++i) packed[i] = normal(rng);
        auto nce = [&](const Vector& q) {
            Eigen::MatrixXd dist(k, d);
            for (Index i = 0; i < k; ++i) dist.row(i) = q.segment(2 * d + i * d, d).transpose();
            return cpc::info_nce(q.head(d), q.segment(d, d), dist);
        };
        const auto r = nce(packed);
        Vector gn(packed.size());
        gn.head(d) = r.grad_pred;
        gn.segment(d, d) = r.grad_pos;
        for (Index i = 0; i < k; ++i) gn.segment(2 * d + i * d, d) = r.grad_distractors.row(i).transpose();
        worst_nce = std::max(worst_nce, learn::grad_check([&](const Vector& q) { return nce(q).loss; }, packed, gn));

        // Supervised MLP through the task loss.
        const Index fin = 2 + static_cast<Index>(uniform_index(rng, 10));
        const learn::Mlp mlp(fin, 3 + static_cast<Index>(uniform_index(rng, 5)), 2);
        const Vector mp = mlp.init(rng);
        supervised::SampleSet set;
        set.features.resize(5, fin);
        for (Index i = 0; i < set.features.size(); ++i) set.features.data()[i] = normal(rng);
        set.genders = {0, 1, 1, 0, 1};
        set.ages = {5, 7, 9, 11, 13};
        const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
        auto task = t % 2 ? supervised::Task::Age : supervised::Task::Gender;
        const learn::Mlp& net = mlp;
        const learn::Mlp age_net(fin, 3, 1);
        const bool is_age = task == supervised::Task::Age;
        const learn::Mlp& use = is_age ? age_net : net;
        const Vector up = is_age ? age_net.init(rng) : mp;
        auto loss = [&](const Vector& q) {
            Eigen::MatrixXd go;
            return supervised::batch_loss(use.forward(q, set.features), set, rows, task, 9.0, 3.0, go);
        };
        learn::Mlp::Cache cache;
        Eigen::MatrixXd go;
        supervised::batch_loss(use.forward(up, set.features, &cache), set, rows, task, 9.0, 3.0, go);
        Vector gm = Vector::Zero(up.size());
        use.backward(up, set.features, cache, go, gm);
        worst_mlp = std::max(worst_mlp, learn::grad_check(loss, up, gm));
    }
    const double secs = seconds_since(t0);
    const double worst = std::max({worst_enc, worst_ctx, worst_nce, worst_mlp});
    return {worst < 1e-6 && secs < 30.0, "full CPC (encoder) " + fmt("%.2g", worst_enc) + ", BPTT " + fmt("%.2g", worst_ctx) +
                                             ", InfoNCE " + fmt("%.2g", worst_nce) + ", MLP " + fmt("%.2g", worst_mlp) + ", " +
                                             fmt("%.2f", secs) + " s"};
}

// ------------------------------------------------------------------ 6

Outcome criterion6() {
    const auto t0 = Clock::now();
    harness::GridConfig cfg;
    cfg.task = harness::GridTask::Gender;
    cfg.seeds = {0, 1, 2};
    cfg.plans = {parse_plan("none-none"), parse_plan("none-channel")};
    const auto rep = harness::run_grid(cfg);
    const double nn = rep.cell(parse_plan("none-none"))->mean;
    const double nc = rep.cell(parse_plan("none-channel"))->mean;

    auto chance_cfg = cfg;
    chance_cfg.shuffle_labels = true;
    const auto chance = harness::run_grid(chance_cfg);
    double lo = 1.0, hi = 0.0;
    for (const auto& c : chance.cells) {
        lo = std::min(lo, c.mean);
        hi = std::max(hi, c.mean);
    }
    const double secs = seconds_since(t0);
    const bool ok = nc >= 0.70 && nc > nn && lo >= 0.45 && hi <= 0.55 && secs < 600.0 && cfg.synth.gain_spread >= 0.5;
    return {ok, "(None, Channel) " + fmt("%.3f", nc) + ", (None, None) " + fmt("%.3f", nn) + ", shuffled labels in [" +
                    fmt("%.3f", lo) + ", " + fmt("%.3f", hi) + "], " + fmt("%.0f", secs) + " s"};
}

// ------------------------------------------------------------------ 7

Outcome criterion7() {
    harness::GridConfig cfg;
    cfg.task = harness::GridTask::CpcSame;
    cfg.seeds = {0, 1, 2};
    cfg.plans = {parse_plan("none-all")};
    const auto rep = harness::run_grid(cfg);
    const double target = std::log(21.0) - 0.1;
    double worst_train = 0.0, worst_test = 0.0;
    bool ok = !rep.cells[0].collapsed && cfg.cpc.epochs == 10;
    for (const auto& r : rep.runs) {
        double last_train = NAN, last_test = NAN;
        for (const auto& l : r.log) {
            if (l.epoch != cfg.cpc.epochs) continue;
            (l.split == "train" ? last_train : last_test) = l.value;
        }
        ok = ok && last_train < target && last_test < target;
        worst_train = std::max(worst_train, last_train);
        worst_test = std::max(worst_test, last_test);
    }
    return {ok, "epoch-10 loss, worst of 3 seeds: train " + fmt("%.3f", worst_train) + ", test " + fmt("%.3f", worst_test) +
                    " (threshold " + fmt("%.4f", target) + ")"};
}

// ------------------------------------------------------------------ 8

Outcome criterion8() {
    harness::GridConfig cfg;
    cfg.task = harness::GridTask::Gender;
    cfg.seeds = {0, 1};
    cfg.synth.duration_s = 60.0;
    cfg.drop_reference = false;  // the all-zero reference row makes per-channel scales degenerate
    cfg.policy = DegeneracyPolicy::Propagate;
    harness::GridReport rep;
    try {
        rep = harness::run_grid(cfg);
    } catch (const std::exception& e) {
        return {false, std::string("grid raised: ") + e.what()};
    }
    const auto table = harness::render_table(rep);
    const auto parsed = harness::parse_table(table);
    std::size_t nan_cells = 0, complete = 0;
    bool consistent = true;
    for (const auto& c : rep.cells) {
        complete += c.n_runs == cfg.seeds.size() ? 1 : 0;
        const auto& pc = parsed[static_cast<std::size_t>(c.plan.index())];
        consistent = consistent && pc.has_value() && std::isnan(pc->mean) == std::isnan(c.mean) && c.collapsed == std::isnan(c.mean);
        nan_cells += std::isnan(c.mean) ? 1 : 0;
        const bool channel = c.plan.recording == Scheme::Channel || c.plan.window == Scheme::Channel;
        consistent = consistent && (channel == c.collapsed);
    }
    const bool schema = table.find("rec\\win") != std::string::npos && table.find("\nNone ") != std::string::npos &&
                        table.find("\nAll ") != std::string::npos && table.find("\nChannel ") != std::string::npos &&
                        table.find("NaN") != std::string::npos;
    const bool ok = rep.cells.size() == 9 && complete == 9 && nan_cells > 0 && consistent && schema;
    return {ok, std::to_string(complete) + "/9 cells completed, " + std::to_string(nan_cells) +
                    " NaN cells (every plan with a Channel scheme), table schema " + (schema ? "ok" : "broken")};
}

// ------------------------------------------------------------------ 9

Outcome criterion9() {
    std::vector<harness::GridConfig> configs;
    harness::GridConfig a;
    a.task = harness::GridTask::Gender;
    a.n_subjects = 20;
    a.synth.duration_s = 60.0;
    a.seeds = {3, 4};
    configs.push_back(a);
    harness::GridConfig b = a;
    b.task = harness::GridTask::CpcCross;
    b.plans = {parse_plan("channel-all"), parse_plan("none-channel")};
    b.cpc.epochs = 2;
    configs.push_back(b);
    harness::GridConfig c = a;
    c.task = harness::GridTask::Age;
    c.plans = {parse_plan("all-channel")};
    c.shuffle_labels = true;
    configs.push_back(c);
    bool ok = true;
    std::size_t bytes = 0;
    for (const auto& cfg : configs) {
        const auto one = harness::render_tsv(harness::run_grid(cfg, 1));
        const auto again = harness::render_tsv(harness::run_grid(cfg, 1));
        const auto many = harness::render_tsv(harness::run_grid(cfg, 4));
        ok = ok && one == again && one == many;
        bytes += one.size();
    }
    return {ok, std::to_string(configs.size()) + " configs rerun with 1, 1 and 4 workers, report.tsv identical (" +
                    std::to_string(bytes) + " bytes)"};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
        {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
        {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9},
    };
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& [id, fn] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
        const auto t0 = Clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failed += o.pass ? 0 : 1;
        std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << " | " << o.detail << " ["
                  << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
    }
    std::cout << (failed == 0 ? "all criteria passed" : std::to_string(failed) + " criteria failed") << std::endl;
    return failed == 0 ? 0 : 1;
}
