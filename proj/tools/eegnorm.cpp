#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "eegnorm/eegnorm.hpp"

namespace fs = std::filesystem;
using namespace eegnorm;

namespace {

constexpr int kOk = 0;
constexpr int kValidation = 1;
constexpr int kIo = 2;

harness::GridConfig load(const std::string& path) {
    harness::GridConfig cfg;
    if (!path.empty()) cfg = harness::load_config(path);
    return cfg;
}

unsigned default_workers() { return std::max(1U, std::thread::hardware_concurrency()); }

void log(const std::string& s) { std::cerr << "[eegnorm] " << s << "\n"; }

int cmd_generate(const std::string& config, const fs::path& out, unsigned workers) {
    const auto cfg = load(config);
    cfg.synth.validate();
    cfg.rule.validate(cfg.synth);
    const auto ds = synth::gen_dataset(cfg.synth, cfg.rule, cfg.n_subjects, cfg.n_groups, workers);
    write_dataset(ds, out);
    log("wrote " + std::to_string(ds.recordings.size()) + " recordings to " + out.string());
    return kOk;
}

int cmd_preprocess(const std::string& config, const fs::path& in, const fs::path& out, bool keep_reference,
                   unsigned workers) {
    const auto cfg = load(config);
    auto ds = read_dataset(in);
    const dsp::Preprocessor pre(cfg.preprocess);
    parallel_for(ds.recordings.size(), workers, [&](std::size_t i) {
        auto r = pre(ds.recordings[i]);
        const bool has_ref = std::find(r.channels.begin(), r.channels.end(), synth::kReferenceChannel) != r.channels.end();
        if (!keep_reference && cfg.drop_reference && has_ref) r = drop_channels(r, {synth::kReferenceChannel});
        ds.recordings[i] = std::move(r);
    });
    write_dataset(ds, out);
    log("wrote " + std::to_string(ds.recordings.size()) + " preprocessed recordings to " + out.string());
    return kOk;
}

int cmd_normalize(const std::string& config, const fs::path& in, const fs::path& out, const std::string& plan_text,
                  double window_s, const std::string& policy_text) {
    const auto cfg = load(config);
    const auto plan = parse_plan(plan_text);
    const auto policy = policy_text.empty() ? cfg.policy : parse_policy(policy_text);
    const auto ds = read_dataset(in);
    std::error_code ec;
    fs::create_directories(out, ec);
    if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
    ProbeReport probe;
    std::size_t n = 0;
    for (const auto& rec : ds.recordings) {
        const auto windows = apply_plan(rec, plan, window_s, policy);
        probe.merge(degeneracy_probe(windows));
        for (std::size_t w = 0; w < windows.size(); ++w) {
            Recording wr;
            wr.id = rec.id;
            wr.channels = rec.channels;
            wr.fs = rec.fs;
            wr.meta = rec.meta;
            wr.data = windows[w].data;
            std::ostringstream name;
            name << rec.id << "_w" << std::setw(5) << std::setfill('0') << w << ".eegn";
            write_recording(wr, out / name.str());
            ++n;
        }
    }
    std::ostringstream os;
    os << "plan\t" << to_string(plan) << "\nwindow_s\t" << window_s << "\npolicy\t" << to_string(policy)
       << "\nwindows\t" << probe.n_windows << "\nnon_finite_windows\t" << probe.non_finite_windows()
       << "\nflagged_channels\t" << probe.flagged_channels << "\nflagged_windows\t" << probe.flagged_windows
       << "\naffected_fraction\t" << probe.affected_fraction() << "\n";
    eegnorm::detail::spit(out / "probe.tsv", os.str());
    log("wrote " + std::to_string(n) + " windows to " + out.string());
    return kOk;
}

struct GridArgs {
    std::string task;
    std::optional<int> seeds;
    std::string plans;
    std::string policy;
    bool shuffle = false;
};

int cmd_grid(const std::string& config, const fs::path& out, const GridArgs& a, unsigned workers) {
    auto cfg = load(config);
    if (!a.task.empty()) cfg.task = harness::parse_task(a.task);
    if (a.seeds) {
        require(*a.seeds >= 1, "--seeds must be >= 1");
        cfg.seeds.clear();
        for (int s = 0; s < *a.seeds; ++s) cfg.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (!a.plans.empty() && a.plans != "all") {
        cfg.plans.clear();
        for (const auto& p : config_detail::split_list(a.plans)) cfg.plans.push_back(parse_plan(p));
    }
    if (!a.policy.empty()) cfg.policy = parse_policy(a.policy);
    if (a.shuffle) cfg.shuffle_labels = true;
    const auto rep = harness::run_grid(cfg, workers, log);
    harness::write_report(rep, cfg, out);
    std::cout << harness::render_table(rep);
    log("wrote report.txt and report.tsv to " + out.string());
    return kOk;
}

int cmd_report(const std::string& config, const fs::path& in, const fs::path& out) {
    const auto tsv = eegnorm::detail::slurp(in / "report.tsv");
    harness::GridReport rep;
    const auto used = in / "config.used";
    harness::GridConfig cfg = config.empty() ? (fs::exists(used) ? harness::load_config(used) : harness::GridConfig{})
                                             : harness::load_config(config);
    rep.task = cfg.task;
    rep.policy = cfg.policy;
    rep.config_hash = harness::config_hash(cfg);
    rep.runs = harness::parse_tsv(std::string_view(tsv.data(), tsv.size()));
    rep.cells = harness::aggregate(rep.runs);
    const auto text = harness::render_table(rep);
    if (!out.empty()) {
        std::error_code ec;
        fs::create_directories(out, ec);
        if (ec) throw IoError("cannot create " + out.string() + ": " + ec.message());
        eegnorm::detail::spit(out / "report.txt", text);
    }
    std::cout << text;
    return kOk;
}

int cmd_selftest(const std::string& config, const fs::path& out) {
    (void)load(config);
    const auto checks = selftest::run_all();
    std::ostringstream os;
    std::size_t passed = 0;
    for (const auto& c : checks) {
        os << (c.passed ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        passed += c.passed ? 1 : 0;
    }
    os << passed << " passed, " << checks.size() - passed << " failed\n";
    if (!out.empty()) {
        std::error_code ec;
        fs::create_directories(out, ec);
        eegnorm::detail::spit(out / "selftest.txt", os.str());
    }
    std::cout << os.str();
    return passed == checks.size() ? kOk : kValidation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EEG normalization benchmark"};
    app.require_subcommand(1);
    std::string config;
    unsigned workers = default_workers();
    app.add_option("--config", config, "config file ([synth] [preprocess] [cpc] [supervised] [grid] sections)");
    app.add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);

    fs::path out, in;
    auto* gen = app.add_subcommand("generate", "write a synthetic dataset");
    gen->add_option("--out", out, "output directory")->required();

    bool keep_ref = false;
    auto* pre = app.add_subcommand("preprocess", "notch, band-pass and decimate a dataset");
    pre->add_option("--in", in, "input dataset directory")->required();
    pre->add_option("--out", out, "output directory")->required();
    pre->add_flag("--keep-reference", keep_ref, "keep the flat reference channel");

    std::string plan = "none-channel", policy;
    double window_s = 2.0;
    auto* norm = app.add_subcommand("normalize", "apply a normalization plan and write windows");
    norm->add_option("--in", in, "input dataset directory")->required();
    norm->add_option("--out", out, "output directory")->required();
    norm->add_option("--plan", plan, "recording-window, e.g. none-channel");
    norm->add_option("--window", window_s, "window length in seconds");
    norm->add_option("--policy", policy, "error|flag|propagate");

    GridArgs ga;
    auto* grid = app.add_subcommand("grid", "run the 3x3 plan grid");
    grid->add_option("--out", out, "output directory")->required();
    grid->add_option("--task", ga.task, "cpc_same|cpc_cross|age|gender");
    grid->add_option("--seeds", ga.seeds, "number of seeds (0..N-1)");
    grid->add_option("--plans", ga.plans, "comma-separated plans or 'all'");
    grid->add_option("--policy", ga.policy, "error|flag|propagate");
    grid->add_flag("--shuffle-labels", ga.shuffle, "permute labels (chance control)");

    auto* rep = app.add_subcommand("report", "re-render a table from report.tsv");
    rep->add_option("--in", in, "grid output directory")->required();
    rep->add_option("--out", out, "directory for the re-rendered report.txt");

    auto* self = app.add_subcommand("selftest", "run the oracle checks");
    self->add_option("--out", out, "directory for selftest.txt");

    for (auto* sub : {gen, pre, norm, grid, rep, self}) {
        sub->add_option("--config", config, "config file");
        sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        std::cerr << app.help();
        return kValidation;
    }

    try {
        if (*gen) return cmd_generate(config, out, workers);
        if (*pre) return cmd_preprocess(config, in, out, keep_ref, workers);
        if (*norm) return cmd_normalize(config, in, out, plan, window_s, policy);
        if (*grid) return cmd_grid(config, out, ga, workers);
        if (*rep) return cmd_report(config, in, out);
        if (*self) return cmd_selftest(config, out);
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kIo;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kValidation;
}
