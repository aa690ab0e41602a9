#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "eegnorm/config.hpp"
#include "eegnorm/cpc.hpp"
#include "eegnorm/dataset.hpp"
#include "eegnorm/dsp.hpp"
#include "eegnorm/error.hpp"
#include "eegnorm/normalize.hpp"
#include "eegnorm/parallel.hpp"
#include "eegnorm/recording_io.hpp"
#include "eegnorm/rng.hpp"
#include "eegnorm/supervised.hpp"
#include "eegnorm/synth.hpp"

namespace eegnorm::harness {

inline constexpr const char* kCodeVersion = "eegnorm 0.1.0";

enum class GridTask : std::uint8_t { CpcSame, CpcCross, Age, Gender };

inline std::string_view to_string(GridTask t) {
    switch (t) {
        case GridTask::CpcSame: return "cpc_same";
        case GridTask::CpcCross: return "cpc_cross";
        case GridTask::Age: return "age";
        case GridTask::Gender: return "gender";
    }
    return "?";
}

inline GridTask parse_task(std::string_view s) {
    for (auto t : {GridTask::CpcSame, GridTask::CpcCross, GridTask::Age, GridTask::Gender}) {
        if (s == to_string(t)) return t;
    }
    throw ValidationError("invalid task '" + std::string(s) + "' (valid values: cpc_same|cpc_cross|age|gender)");
}

inline bool lower_is_better(GridTask t) { return t != GridTask::Gender; }

inline std::string_view metric_name(GridTask t) {
    switch (t) {
        case GridTask::CpcSame:
        case GridTask::CpcCross: return "cpc_loss";
        case GridTask::Age: return "mae";
        case GridTask::Gender: return "balanced_accuracy";
    }
    return "?";
}

inline std::string_view task_title(GridTask t) {
    switch (t) {
        case GridTask::CpcSame: return "CPC loss, same-recording distractors (lower is better)";
        case GridTask::CpcCross: return "CPC loss, cross-recording distractors (lower is better)";
        case GridTask::Age: return "Age regression MAE in years (lower is better)";
        case GridTask::Gender: return "Gender classification balanced accuracy (higher is better)";
    }
    return "?";
}

struct GridConfig {
    GridTask task = GridTask::Gender;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<NormalizationPlan> plans = full_grid();
    DegeneracyPolicy policy = DegeneracyPolicy::FlagIdentity;
    int n_subjects = 50;
    int n_groups = 5;
    std::string test_group = "g5";
    bool drop_reference = true;
    /// Permutes window labels in both splits; the chance-level control.
    bool shuffle_labels = false;

    synth::SynthSpec synth;
    synth::PlantedRule rule;
    dsp::PreprocessConfig preprocess;
    cpc::CpcConfig cpc;
    double cpc_window_same_s = 20.0;
    double cpc_window_cross_s = 2.0;
    supervised::SupervisedConfig supervised;

    void validate() const {
        require(!seeds.empty(), "grid: seeds must be non-empty");
        auto sorted = seeds;
        std::sort(sorted.begin(), sorted.end());
        require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(), "grid: seeds must be distinct");
        require(!plans.empty(), "grid: plans must be non-empty");
        for (std::size_t i = 0; i < plans.size(); ++i) {
            for (std::size_t j = i + 1; j < plans.size(); ++j) require(!(plans[i] == plans[j]), "grid: duplicate plan");
        }
        synth.validate();
        rule.validate(synth);
        require(n_groups >= 2 && n_subjects >= n_groups, "grid: need n_subjects >= n_groups >= 2");
        effective_cpc().validate();
        supervised.validate();
    }

    [[nodiscard]] cpc::CpcConfig effective_cpc() const {
        auto c = cpc;
        c.mode = task == GridTask::CpcCross ? cpc::DistractorMode::CrossRecording : cpc::DistractorMode::SameRecording;
        c.window_len_s = task == GridTask::CpcCross ? cpc_window_cross_s : cpc_window_same_s;
        return c;
    }

    [[nodiscard]] bool is_cpc() const { return task == GridTask::CpcSame || task == GridTask::CpcCross; }
};

namespace detail {

// Shortest text that parses back to the same double.
inline std::string num(double v) {
    std::array<char, 32> buf{};
    const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), res.ptr);
}

inline std::string join_seeds(const std::vector<std::uint64_t>& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
    return out;
}

inline std::string join_plans(const std::vector<NormalizationPlan>& p) {
    std::string out;
    for (std::size_t i = 0; i < p.size(); ++i) out += (i ? "," : "") + to_string(p[i]);
    return out;
}

}  // namespace detail

/// Canonical text form; loading it reproduces the config exactly.
inline std::string serialize_config(const GridConfig& c) {
    using detail::num;
    std::ostringstream os;
    os << "[grid]\n"
       << "task = " << to_string(c.task) << "\n"
       << "seeds = " << detail::join_seeds(c.seeds) << "\n"
       << "plans = " << detail::join_plans(c.plans) << "\n"
       << "policy = " << to_string(c.policy) << "\n"
       << "n_subjects = " << c.n_subjects << "\n"
       << "n_groups = " << c.n_groups << "\n"
       << "test_group = " << c.test_group << "\n"
       << "drop_reference = " << (c.drop_reference ? "true" : "false") << "\n"
       << "shuffle_labels = " << (c.shuffle_labels ? "true" : "false") << "\n"
       << "\n[synth]\n"
       << "n_channels = " << c.synth.n_channels << "\n"
       << "duration_s = " << num(c.synth.duration_s) << "\n"
       << "fs = " << num(c.synth.fs) << "\n"
       << "age_min = " << num(c.synth.age_min) << "\n"
       << "age_max = " << num(c.synth.age_max) << "\n"
       << "line_freq = " << num(c.synth.line_freq) << "\n"
       << "line_amp = " << num(c.synth.line_amp) << "\n"
       << "gain_spread = " << num(c.synth.gain_spread) << "\n"
       << "burst_rate = " << num(c.synth.burst_rate) << "\n"
       << "burst_amp = " << num(c.synth.burst_amp) << "\n"
       << "burst_len_s = " << num(c.synth.burst_len_s) << "\n"
       << "pink_alpha = " << num(c.synth.pink_alpha) << "\n"
       << "noise_amp = " << num(c.synth.noise_amp) << "\n"
       << "alpha_amp = " << num(c.synth.alpha_amp) << "\n"
       << "master_seed = " << c.synth.master_seed << "\n"
       << "base_freq = " << num(c.rule.base_freq) << "\n"
       << "age_slope = " << num(c.rule.slope) << "\n"
       << "gender_offset = " << num(c.rule.gender_offset) << "\n"
       << "gender_channels = " << c.rule.gender_channels << "\n"
       << "\n[preprocess]\n"
       << "line_freq = " << num(c.preprocess.line_freq) << "\n"
       << "notch_q = " << num(c.preprocess.notch_q) << "\n"
       << "band_low = " << num(c.preprocess.band_low) << "\n"
       << "band_high = " << num(c.preprocess.band_high) << "\n"
       << "band_order = " << c.preprocess.band_order << "\n"
       << "\n[cpc]\n"
       << "window_len_same_s = " << num(c.cpc_window_same_s) << "\n"
       << "window_len_cross_s = " << num(c.cpc_window_cross_s) << "\n"
       << "seg_len_s = " << num(c.cpc.seg_len_s) << "\n"
       << "embed_dim = " << c.cpc.embed_dim << "\n"
       << "mask_rate = " << num(c.cpc.mask_rate) << "\n"
       << "mask_span = " << c.cpc.mask_span << "\n"
       << "n_distractors = " << c.cpc.n_distractors << "\n"
       << "batch_size = " << c.cpc.batch_size << "\n"
       << "epochs = " << c.cpc.epochs << "\n"
       << "lr = " << num(c.cpc.lr) << "\n"
       << "max_windows_per_recording = " << c.cpc.max_windows_per_recording << "\n"
       << "\n[supervised]\n"
       << "window_len_s = " << num(c.supervised.window_len_s) << "\n"
       << "batch_size = " << c.supervised.batch_size << "\n"
       << "epochs = " << c.supervised.epochs << "\n"
       << "hidden_dim = " << c.supervised.hidden_dim << "\n"
       << "downsample_stride = " << c.supervised.downsample_stride << "\n"
       << "lr = " << num(c.supervised.lr) << "\n";
    return os.str();
}

inline std::uint64_t config_hash(const GridConfig& c) { return fnv1a(serialize_config(c)); }

/// Overlays values from a parsed config file. Unknown sections or keys are errors.
inline void apply_config(const ConfigFile& file, GridConfig& c) {
    using namespace config_detail;
    for (const auto& [section, kv] : file.sections()) {
        for (const auto& [key, v] : kv) {
            const std::string k = section + "." + key;
            if (section == "grid") {
                if (key == "task") c.task = parse_task(v);
                else if (key == "seeds") {
                    c.seeds.clear();
                    for (const auto& s : split_list(v)) c.seeds.push_back(to_int<std::uint64_t>(k, s));
                } else if (key == "plans") {
                    if (v == "all") c.plans = full_grid();
                    else {
                        c.plans.clear();
                        for (const auto& s : split_list(v)) c.plans.push_back(parse_plan(s));
                    }
                } else if (key == "policy") c.policy = parse_policy(v);
                else if (key == "n_subjects") c.n_subjects = to_int<int>(k, v);
                else if (key == "n_groups") c.n_groups = to_int<int>(k, v);
                else if (key == "test_group") c.test_group = v;
                else if (key == "drop_reference") c.drop_reference = to_bool(k, v);
                else if (key == "shuffle_labels") c.shuffle_labels = to_bool(k, v);
                else throw ValidationError("config: unknown key " + k);
            } else if (section == "synth") {
                auto& s = c.synth;
                if (key == "n_channels") s.n_channels = to_int<int>(k, v);
                else if (key == "duration_s") s.duration_s = to_double(k, v);
                else if (key == "fs") s.fs = to_double(k, v);
                else if (key == "age_min") s.age_min = to_double(k, v);
                else if (key == "age_max") s.age_max = to_double(k, v);
                else if (key == "line_freq") s.line_freq = to_double(k, v);
                else if (key == "line_amp") s.line_amp = to_double(k, v);
                else if (key == "gain_spread") s.gain_spread = to_double(k, v);
                else if (key == "burst_rate") s.burst_rate = to_double(k, v);
                else if (key == "burst_amp") s.burst_amp = to_double(k, v);
                else if (key == "burst_len_s") s.burst_len_s = to_double(k, v);
                else if (key == "pink_alpha") s.pink_alpha = to_double(k, v);
                else if (key == "noise_amp") s.noise_amp = to_double(k, v);
                else if (key == "alpha_amp") s.alpha_amp = to_double(k, v);
                else if (key == "master_seed") s.master_seed = to_int<std::uint64_t>(k, v);
                else if (key == "base_freq") c.rule.base_freq = to_double(k, v);
                else if (key == "age_slope") c.rule.slope = to_double(k, v);
                else if (key == "gender_offset") c.rule.gender_offset = to_double(k, v);
                else if (key == "gender_channels") c.rule.gender_channels = to_int<int>(k, v);
                else throw ValidationError("config: unknown key " + k);
            } else if (section == "preprocess") {
                auto& p = c.preprocess;
                if (key == "line_freq") p.line_freq = to_double(k, v);
                else if (key == "notch_q") p.notch_q = to_double(k, v);
                else if (key == "band_low") p.band_low = to_double(k, v);
                else if (key == "band_high") p.band_high = to_double(k, v);
                else if (key == "band_order") p.band_order = to_int<int>(k, v);
                else throw ValidationError("config: unknown key " + k);
            } else if (section == "cpc") {
                auto& p = c.cpc;
                if (key == "window_len_same_s") c.cpc_window_same_s = to_double(k, v);
                else if (key == "window_len_cross_s") c.cpc_window_cross_s = to_double(k, v);
                else if (key == "seg_len_s") p.seg_len_s = to_double(k, v);
                else if (key == "embed_dim") p.embed_dim = to_int<Eigen::Index>(k, v);
                else if (key == "mask_rate") p.mask_rate = to_double(k, v);
                else if (key == "mask_span") p.mask_span = to_int<int>(k, v);
                else if (key == "n_distractors") p.n_distractors = to_int<int>(k, v);
                else if (key == "batch_size") p.batch_size = to_int<int>(k, v);
                else if (key == "epochs") p.epochs = to_int<int>(k, v);
                else if (key == "lr") p.lr = to_double(k, v);
                else if (key == "max_windows_per_recording") p.max_windows_per_recording = to_int<int>(k, v);
                else throw ValidationError("config: unknown key " + k);
            } else if (section == "supervised") {
                auto& p = c.supervised;
                if (key == "window_len_s") p.window_len_s = to_double(k, v);
                else if (key == "batch_size") p.batch_size = to_int<int>(k, v);
                else if (key == "epochs") p.epochs = to_int<int>(k, v);
                else if (key == "hidden_dim") p.hidden_dim = to_int<Eigen::Index>(k, v);
                else if (key == "downsample_stride") p.downsample_stride = to_int<Eigen::Index>(k, v);
                else if (key == "lr") p.lr = to_double(k, v);
                else throw ValidationError("config: unknown key " + k);
            } else {
                throw ValidationError("config: unknown section [" + section + "]");
            }
        }
    }
}

inline GridConfig load_config(const std::filesystem::path& path) {
    GridConfig c;
    apply_config(ConfigFile::load(path), c);
    return c;
}

// ------------------------------------------------------------------ results

struct LogLine {
    int epoch = 0;
    std::string split;
    std::string metric;
    double value = 0.0;
};

struct RunRecord {
    NormalizationPlan plan;
    std::uint64_t seed = 0;
    double metric = std::numeric_limits<double>::quiet_NaN();
    bool collapsed = false;
    std::vector<LogLine> log;
};

struct CellStats {
    NormalizationPlan plan;
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
    std::size_t n_finite = 0;
    std::size_t n_runs = 0;
    bool collapsed = false;
    ProbeReport probe;
};

struct GridReport {
    GridTask task = GridTask::Gender;
    DegeneracyPolicy policy = DegeneracyPolicy::FlagIdentity;
    std::vector<CellStats> cells;
    std::vector<RunRecord> runs;
    std::uint64_t config_hash = 0;
    std::string code_version = kCodeVersion;

    [[nodiscard]] const CellStats* cell(NormalizationPlan p) const {
        for (const auto& c : cells) {
            if (c.plan == p) return &c;
        }
        return nullptr;
    }
};

/// Mean and sample standard deviation (n - 1) over the finite values.
inline CellStats summarize(NormalizationPlan plan, std::span<const double> metrics) {
    CellStats c;
    c.plan = plan;
    c.n_runs = metrics.size();
    std::vector<double> finite;
    for (double m : metrics) {
        if (std::isfinite(m)) finite.push_back(m);
        else c.collapsed = true;
    }
    c.n_finite = finite.size();
    if (finite.empty()) return c;
    double sum = 0.0;
    for (double v : finite) sum += v;
    c.mean = sum / static_cast<double>(finite.size());
    double ss = 0.0;
    for (double v : finite) ss += (v - c.mean) * (v - c.mean);
    c.std = finite.size() > 1 ? std::sqrt(ss / static_cast<double>(finite.size() - 1)) : 0.0;
    return c;
}

/// Groups runs by plan, keeping first-appearance plan order.
inline std::vector<CellStats> aggregate(std::span<const RunRecord> runs) {
    std::vector<NormalizationPlan> order;
    std::map<int, std::vector<double>> by_plan;
    for (const auto& r : runs) {
        if (!by_plan.contains(r.plan.index())) order.push_back(r.plan);
        by_plan[r.plan.index()].push_back(r.collapsed ? std::numeric_limits<double>::quiet_NaN() : r.metric);
    }
    std::vector<CellStats> cells;
    for (const auto& p : order) cells.push_back(summarize(p, by_plan[p.index()]));
    return cells;
}

// ------------------------------------------------------------------ data

struct PreparedData {
    LabeledDataset train;
    LabeledDataset test;
};

/// generate -> preprocess -> (drop reference) -> group split.
inline PreparedData prepare_dataset(const GridConfig& cfg, unsigned workers) {
    auto ds = synth::gen_dataset(cfg.synth, cfg.rule, cfg.n_subjects, cfg.n_groups, workers);
    const dsp::Preprocessor pre(cfg.preprocess);
    parallel_for(ds.recordings.size(), workers, [&](std::size_t i) {
        auto r = pre(ds.recordings[i]);
        if (cfg.drop_reference) r = drop_channels(r, {synth::kReferenceChannel});
        ds.recordings[i] = std::move(r);
    });
    ds.config_hash = config_hash(cfg);
    auto split = split_by_group(ds, cfg.test_group);
    return {std::move(split.train), std::move(split.test)};
}

struct PlanSamples {
    supervised::SampleSet train;
    supervised::SampleSet test;
    ProbeReport probe;
};

inline supervised::SampleSet build_samples(const LabeledDataset& ds, NormalizationPlan plan, const GridConfig& cfg,
                                           unsigned workers, ProbeReport& probe) {
    const auto& sc = cfg.supervised;
    std::vector<supervised::SampleSet> parts(ds.recordings.size());
    std::vector<ProbeReport> probes(ds.recordings.size());
    parallel_for(ds.recordings.size(), workers, [&](std::size_t i) {
        const auto& rec = ds.recordings[i];
        const auto windows = apply_plan(rec, plan, sc.window_len_s, cfg.policy);
        probes[i] = degeneracy_probe(windows);
        auto& part = parts[i];
        if (windows.empty()) return;
        part.features.resize(static_cast<Eigen::Index>(windows.size()),
                             supervised::feature_count(windows[0].data.rows(), windows[0].data.cols(), sc.downsample_stride));
        for (std::size_t w = 0; w < windows.size(); ++w) {
            const auto f = supervised::featurize(windows[w], sc.downsample_stride);
            part.features.row(static_cast<Eigen::Index>(w)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), static_cast<Eigen::Index>(f.size()));
            part.ages.push_back(rec.meta.age);
            part.genders.push_back(label_of(rec.meta.gender));
        }
    });
    supervised::SampleSet out;
    Eigen::Index rows = 0, cols = 0;
    for (const auto& p : parts) {
        rows += p.features.rows();
        if (p.features.rows() > 0) cols = p.features.cols();
    }
    out.features.resize(rows, cols);
    Eigen::Index at = 0;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        probe.merge(probes[i]);
        const auto& p = parts[i];
        if (p.features.rows() == 0) continue;
        out.features.middleRows(at, p.features.rows()) = p.features;
        at += p.features.rows();
        out.ages.insert(out.ages.end(), p.ages.begin(), p.ages.end());
        out.genders.insert(out.genders.end(), p.genders.begin(), p.genders.end());
    }
    return out;
}

inline void shuffle_labels(supervised::SampleSet& s, Rng& rng) {
    for (std::size_t i = s.size(); i > 1; --i) {
        const std::size_t j = uniform_index(rng, i);
        std::swap(s.ages[i - 1], s.ages[j]);
        std::swap(s.genders[i - 1], s.genders[j]);
    }
}

inline PlanSamples prepare_supervised(const PreparedData& data, NormalizationPlan plan, const GridConfig& cfg,
                                      unsigned workers) {
    PlanSamples ps;
    ps.train = build_samples(data.train, plan, cfg, workers, ps.probe);
    ps.test = build_samples(data.test, plan, cfg, workers, ps.probe);
    if (cfg.shuffle_labels) {
        Rng rng(mix_seed(cfg.synth.master_seed, "shuffle-labels"));
        shuffle_labels(ps.train, rng);
        shuffle_labels(ps.test, rng);
    }
    if (cfg.task == GridTask::Gender) {
        Rng rng(mix_seed(cfg.synth.master_seed, "balance"));
        const auto tr = supervised::balance_classes(ps.train.genders, rng);
        const auto te = supervised::balance_classes(ps.test.genders, rng);
        ps.train = supervised::select_rows(ps.train, tr);
        ps.test = supervised::select_rows(ps.test, te);
    }
    return ps;
}

struct PlanSequences {
    std::vector<cpc::CpcSequence> train;
    std::vector<cpc::CpcSequence> test;
    ProbeReport probe;
};

inline std::vector<cpc::CpcSequence> build_sequences(const LabeledDataset& ds, int first_id, NormalizationPlan plan,
                                                     const GridConfig& cfg, unsigned workers, ProbeReport& probe) {
    const auto cc = cfg.effective_cpc();
    std::vector<std::vector<cpc::CpcSequence>> parts(ds.recordings.size());
    std::vector<ProbeReport> probes(ds.recordings.size());
    parallel_for(ds.recordings.size(), workers, [&](std::size_t i) {
        const auto& rec = ds.recordings[i];
        auto windows = apply_plan(rec, plan, cc.window_len_s, cfg.policy);
        if (cc.max_windows_per_recording > 0 && windows.size() > static_cast<std::size_t>(cc.max_windows_per_recording)) {
            windows.resize(static_cast<std::size_t>(cc.max_windows_per_recording));
        }
        probes[i] = degeneracy_probe(windows);
        const auto seg = window_samples(cc.seg_len_s, rec.fs);
        for (const auto& w : windows) parts[i].push_back(cpc::to_sequence(w, seg, first_id + static_cast<int>(i)));
    });
    std::vector<cpc::CpcSequence> out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        probe.merge(probes[i]);
        for (auto& s : parts[i]) out.push_back(std::move(s));
    }
    return out;
}

inline PlanSequences prepare_cpc(const PreparedData& data, NormalizationPlan plan, const GridConfig& cfg, unsigned workers) {
    PlanSequences ps;
    ps.train = build_sequences(data.train, 0, plan, cfg, workers, ps.probe);
    ps.test = build_sequences(data.test, static_cast<int>(data.train.recordings.size()), plan, cfg, workers, ps.probe);
    return ps;
}

inline std::uint64_t run_seed(std::uint64_t master, NormalizationPlan plan, std::uint64_t seed) {
    return mix_seed(master, static_cast<std::uint64_t>(plan.index()), seed);
}

inline RunRecord run_supervised(const PlanSamples& ps, const GridConfig& cfg, NormalizationPlan plan, std::uint64_t seed) {
    auto sc = cfg.supervised;
    sc.task = cfg.task == GridTask::Age ? supervised::Task::Age : supervised::Task::Gender;
    const auto res = supervised::train_supervised(ps.train, ps.test, sc, run_seed(cfg.synth.master_seed, plan, seed));
    RunRecord r{plan, seed, res.metric, res.collapsed, {}};
    for (const auto& e : res.epochs) {
        r.log.push_back({e.epoch, "train", sc.task == supervised::Task::Age ? "mse" : "cross_entropy", e.train_loss});
        r.log.push_back({e.epoch, "test", std::string(metric_name(cfg.task)), e.test_metric});
    }
    return r;
}

inline RunRecord run_cpc(const PlanSequences& ps, const GridConfig& cfg, NormalizationPlan plan, std::uint64_t seed) {
    const auto res = cpc::cpc_train(ps.train, ps.test, cfg.effective_cpc(), run_seed(cfg.synth.master_seed, plan, seed));
    RunRecord r{plan, seed, res.best_test_loss, res.collapsed, {}};
    for (const auto& e : res.epochs) {
        r.log.push_back({e.epoch, "train", "cpc_loss", e.train_loss});
        r.log.push_back({e.epoch, "test", "cpc_loss", e.test_loss});
    }
    return r;
}

using Progress = std::function<void(const std::string&)>;

/// Every plan x seed run on one shared dataset. Runs fan out over `workers`
/// threads; results are keyed by (plan, seed), so the report does not
/// depend on the worker count.
inline GridReport run_grid(const GridConfig& cfg, unsigned workers = 1, const Progress& progress = {}) {
    cfg.validate();
    auto say = [&](const std::string& s) {
        if (progress) progress(s);
    };
    say("generating and preprocessing " + std::to_string(cfg.n_subjects) + " recordings");
    const auto data = prepare_dataset(cfg, workers);

    GridReport rep;
    rep.task = cfg.task;
    rep.policy = cfg.policy;
    rep.config_hash = config_hash(cfg);
    for (const auto& plan : cfg.plans) {
        say("plan " + to_string(plan));
        std::vector<RunRecord> runs(cfg.seeds.size());
        ProbeReport probe;
        if (cfg.is_cpc()) {
            const auto ps = prepare_cpc(data, plan, cfg, workers);
            probe = ps.probe;
            parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) { runs[i] = run_cpc(ps, cfg, plan, cfg.seeds[i]); });
        } else {
            const auto ps = prepare_supervised(data, plan, cfg, workers);
            probe = ps.probe;
            parallel_for(cfg.seeds.size(), workers, [&](std::size_t i) { runs[i] = run_supervised(ps, cfg, plan, cfg.seeds[i]); });
        }
        std::vector<double> metrics;
        for (const auto& r : runs) metrics.push_back(r.collapsed ? std::numeric_limits<double>::quiet_NaN() : r.metric);
        auto cell = summarize(plan, metrics);
        cell.probe = std::move(probe);
        rep.cells.push_back(std::move(cell));
        rep.runs.insert(rep.runs.end(), runs.begin(), runs.end());
    }
    return rep;
}

// ------------------------------------------------------------------ output

inline std::string format_metric(double v) {
    if (std::isnan(v)) return "nan";
    return detail::num(v);
}

/// Machine layout: one row per run, plans in config order, seeds in config order.
inline std::string render_tsv(const GridReport& rep) {
    std::ostringstream os;
    os << "plan_recording\tplan_window\tseed\tmetric\tcollapsed\n";
    for (const auto& r : rep.runs) {
        os << to_string(r.plan.recording) << '\t' << to_string(r.plan.window) << '\t' << r.seed << '\t'
           << format_metric(r.collapsed ? std::numeric_limits<double>::quiet_NaN() : r.metric) << '\t'
           << (r.collapsed ? 1 : 0) << '\n';
    }
    return os.str();
}

inline std::vector<RunRecord> parse_tsv(std::string_view text) {
    std::istringstream is{std::string(text)};
    std::string line;
    std::vector<RunRecord> runs;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("plan_recording", 0) == 0) continue;
        }
        std::vector<std::string> f;
        std::string cur;
        for (char c : line) {
            if (c == '\t') {
                f.push_back(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        f.push_back(cur);
        if (f.size() != 5) throw FormatError("format error: report.tsv rows need 5 columns");
        RunRecord r;
        r.plan = {parse_scheme(f[0]), parse_scheme(f[1])};
        r.seed = config_detail::to_int<std::uint64_t>("seed", f[2]);
        r.metric = f[3] == "nan" ? std::numeric_limits<double>::quiet_NaN() : config_detail::to_double("metric", f[3]);
        r.collapsed = f[4] == "1";
        runs.push_back(std::move(r));
    }
    return runs;
}

/// Best cell among finite ones; ties go to the lowest row, then column.
inline std::optional<NormalizationPlan> best_cell(const GridReport& rep) {
    std::optional<NormalizationPlan> best;
    double best_v = 0.0;
    for (auto r : kSchemes) {
        for (auto w : kSchemes) {
            const auto* c = rep.cell({r, w});
            if (!c || !std::isfinite(c->mean)) continue;
            const bool better = !best || (lower_is_better(rep.task) ? c->mean < best_v : c->mean > best_v);
            if (better) {
                best = NormalizationPlan{r, w};
                best_v = c->mean;
            }
        }
    }
    return best;
}

inline std::string scheme_label(Scheme s) {
    switch (s) {
        case Scheme::None: return "None";
        case Scheme::All: return "All";
        case Scheme::Channel: return "Channel";
    }
    return "?";
}

inline std::string format_cell(const CellStats* c, bool best) {
    if (!c) return "-";
    if (!std::isfinite(c->mean)) return "NaN";
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << c->mean << " ± " << c->std;
    if (c->n_finite != c->n_runs) os << " (n=" << c->n_finite << "/" << c->n_runs << ")";
    else if (c->n_finite == 1) os << " (n=1)";
    if (best) os << " *";
    return os.str();
}

/// Human layout: recording scheme in rows, window scheme in columns.
inline std::string render_table(const GridReport& rep) {
    constexpr int kLabel = 10;
    constexpr int kCell = 24;
    const auto best = best_cell(rep);
    std::ostringstream os;
    os << task_title(rep.task) << "\n";
    os << "cells: mean ± sample std (n-1) over seeds with a finite metric; NaN: no finite seed; *: best cell\n";
    os << std::left << std::setw(kLabel) << "rec\\win";
    for (auto w : kSchemes) os << " | " << std::setw(kCell) << scheme_label(w);
    os << "\n";
    for (auto r : kSchemes) {
        os << std::setw(kLabel) << scheme_label(r);
        for (auto w : kSchemes) {
            const NormalizationPlan p{r, w};
            const auto text = format_cell(rep.cell(p), best && *best == p);
            // "±" is two bytes but one column.
            const int pad = kCell + (text.find("±") != std::string::npos ? 1 : 0);
            os << " | " << std::setw(pad) << text;
        }
        os << "\n";
    }
    return os.str();
}

struct ParsedCell {
    double mean = std::numeric_limits<double>::quiet_NaN();
    double std = std::numeric_limits<double>::quiet_NaN();
};

/// Reads the numeric cells back from render_table output, indexed by plan index.
inline std::array<std::optional<ParsedCell>, 9> parse_table(std::string_view text) {
    std::array<std::optional<ParsedCell>, 9> out;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
        std::vector<std::string> parts;
        std::string cur;
        for (char c : line) {
            if (c == '|') {
                parts.push_back(ConfigFile::trim(cur));
                cur.clear();
            } else {
                cur += c;
            }
        }
        parts.push_back(ConfigFile::trim(cur));
        if (parts.size() != 4) continue;
        std::optional<Scheme> row;
        for (auto s : kSchemes) {
            if (parts[0] == scheme_label(s)) row = s;
        }
        if (!row) continue;
        for (int w = 0; w < 3; ++w) {
            const auto& cell = parts[static_cast<std::size_t>(w + 1)];
            const int idx = NormalizationPlan{*row, kSchemes[static_cast<std::size_t>(w)]}.index();
            if (cell == "-") continue;
            ParsedCell pc;
            if (cell.rfind("NaN", 0) != 0) {
                std::istringstream cs(cell);
                std::string pm;
                cs >> pc.mean >> pm >> pc.std;
                if (!cs || pm != "±") throw FormatError("format error: bad table cell '" + cell + "'");
            }
            out[static_cast<std::size_t>(idx)] = pc;
        }
    }
    return out;
}

inline std::string render_probe_summary(const GridReport& rep) {
    std::ostringstream os;
    os << "degeneracy probe per cell (windows, non-finite windows, flagged channels, affected fraction):\n";
    for (const auto& c : rep.cells) {
        os << "  " << std::left << std::setw(16) << to_string(c.plan) << " windows=" << c.probe.n_windows
           << " non_finite=" << c.probe.non_finite_windows() << " flagged_channels=" << c.probe.flagged_channels
           << " affected=" << std::fixed << std::setprecision(4) << c.probe.affected_fraction()
           << (c.collapsed ? " collapsed" : "") << "\n";
    }
    return os.str();
}

inline std::string render_report(const GridReport& rep) {
    std::ostringstream os;
    os << "# " << rep.code_version << "\n"
       << "# task: " << to_string(rep.task) << "  metric: " << metric_name(rep.task)
       << "  policy: " << to_string(rep.policy) << "\n"
       << "# config hash: " << std::hex << std::setw(16) << std::setfill('0') << rep.config_hash << std::dec
       << std::setfill(' ') << "\n"
       << "# std uses the n-1 denominator\n\n"
       << render_table(rep) << "\n"
       << render_probe_summary(rep);
    return os.str();
}

inline std::string render_run_log(const RunRecord& r) {
    std::ostringstream os;
    for (const auto& l : r.log) os << l.epoch << '\t' << l.split << '\t' << l.metric << '\t' << format_metric(l.value) << '\n';
    return os.str();
}

inline std::string run_log_name(const RunRecord& r) {
    return to_string(r.plan) + "_seed" + std::to_string(r.seed) + ".log";
}

/// report.txt, report.tsv, config.used and runs/<plan>_seed<k>.log under `dir`.
inline void write_report(const GridReport& rep, const GridConfig& cfg, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir / "runs", ec);
    if (ec) throw IoError("cannot create " + (dir / "runs").string() + ": " + ec.message());
    eegnorm::detail::spit(dir / "report.txt", render_report(rep));
    eegnorm::detail::spit(dir / "report.tsv", render_tsv(rep));
    eegnorm::detail::spit(dir / "config.used", serialize_config(cfg));
    for (const auto& r : rep.runs) eegnorm::detail::spit(dir / "runs" / run_log_name(r), render_run_log(r));
}

}  // namespace eegnorm::harness
