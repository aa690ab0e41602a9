#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "eegnorm/error.hpp"
#include "eegnorm/learn.hpp"
#include "eegnorm/normalize.hpp"
#include "eegnorm/recording.hpp"
#include "eegnorm/rng.hpp"

namespace eegnorm::supervised {

using Eigen::Index;

enum class Task : std::uint8_t { Age, Gender };

inline std::string_view to_string(Task t) { return t == Task::Age ? "age" : "gender"; }

struct SupervisedConfig {
    Task task = Task::Gender;
    double window_len_s = 2.0;
    int batch_size = 64;
    int epochs = 5;
    Index hidden_dim = 32;
    Index downsample_stride = 8;
    double lr = 0.002;

    void validate() const {
        require(window_len_s > 0.0, "supervised: window length must be positive");
        require(batch_size >= 1 && epochs >= 1 && hidden_dim >= 1 && downsample_stride >= 1,
                "supervised: batch_size, epochs, hidden_dim, stride must be >= 1");
    }
};

inline Index feature_count(Index channels, Index samples, Index stride) {
    return channels * ((samples + stride - 1) / stride);
}

/// Every stride-th timepoint of every channel, channel-major. No statistics.
inline std::vector<double> featurize(const WindowTensor& w, Index stride) {
    require(stride >= 1, "featurize: stride must be >= 1");
    std::vector<double> f;
    f.reserve(static_cast<std::size_t>(feature_count(w.data.rows(), w.data.cols(), stride)));
    for (Index c = 0; c < w.data.rows(); ++c) {
        for (Index j = 0; j < w.data.cols(); j += stride) f.push_back(w.data(c, j));
    }
    return f;
}

/// Feature matrix (one window per row) with both label kinds attached.
struct SampleSet {
    Matrix features;
    std::vector<double> ages;
    std::vector<int> genders;

    [[nodiscard]] std::size_t size() const { return ages.size(); }
};

inline SampleSet select_rows(const SampleSet& s, std::span<const std::size_t> rows) {
    SampleSet out;
    out.features.resize(static_cast<Index>(rows.size()), s.features.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out.features.row(static_cast<Index>(i)) = s.features.row(static_cast<Index>(rows[i]));
        out.ages.push_back(s.ages[rows[i]]);
        out.genders.push_back(s.genders[rows[i]]);
    }
    return out;
}

/// Indices of a class-balanced subset: the majority class is subsampled
/// uniformly to the minority count. Kept indices stay in input order.
inline std::vector<std::size_t> balance_classes(std::span<const int> labels, Rng& rng) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw ValidationError("balance_classes: input contains a single class");
    auto& major = pos.size() > neg.size() ? pos : neg;
    const std::size_t keep = std::min(pos.size(), neg.size());
    for (std::size_t i = 0; i < keep; ++i) {
        const std::size_t j = i + uniform_index(rng, major.size() - i);
        std::swap(major[i], major[j]);
    }
    major.resize(keep);
    std::vector<std::size_t> out;
    out.insert(out.end(), pos.begin(), pos.end());
    out.insert(out.end(), neg.begin(), neg.end());
    std::sort(out.begin(), out.end());
    return out;
}

struct EpochMetric {
    int epoch = 0;
    double train_loss = 0.0;
    double test_metric = 0.0;
};

struct TaskResult {
    std::vector<EpochMetric> epochs;
    /// Best test metric over epochs (min MAE, max balanced accuracy); NaN after collapse.
    double metric = std::numeric_limits<double>::quiet_NaN();
    bool collapsed = false;
};

/// Test metric of predictions: MAE in years for age, balanced accuracy for gender.
inline double evaluate(const learn::Mlp& mlp, const Vector& p, const SampleSet& test, Task task, double age_mean,
                       double age_std) {
    const Eigen::MatrixXd out = mlp.forward(p, test.features);
    if (task == Task::Age) {
        std::vector<double> preds(test.size());
        for (std::size_t i = 0; i < preds.size(); ++i) preds[i] = age_mean + age_std * out(static_cast<Index>(i), 0);
        return learn::mae(preds, test.ages);
    }
    std::vector<int> preds(test.size());
    for (std::size_t i = 0; i < preds.size(); ++i) {
        preds[i] = out(static_cast<Index>(i), 1) > out(static_cast<Index>(i), 0) ? 1 : 0;
    }
    if (!out.allFinite()) return std::numeric_limits<double>::quiet_NaN();
    return learn::balanced_accuracy(preds, test.genders);
}

/// Squared error on standardized ages, or two-class softmax cross-entropy.
/// Returns the batch loss and writes dL/doutput.
inline double batch_loss(const Eigen::MatrixXd& out, const SampleSet& data, std::span<const std::size_t> rows, Task task,
                         double age_mean, double age_std, Eigen::MatrixXd& grad_out) {
    const auto b = static_cast<double>(rows.size());
    grad_out.resize(out.rows(), out.cols());
    double loss = 0.0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto r = static_cast<Index>(i);
        if (task == Task::Age) {
            const double diff = out(r, 0) - (data.ages[rows[i]] - age_mean) / age_std;
            loss += diff * diff / b;
            grad_out(r, 0) = 2.0 * diff / b;
        } else {
            const double logits[2] = {out(r, 0), out(r, 1)};
            double g[2];
            loss += learn::cross_entropy_grad(logits, static_cast<std::size_t>(data.genders[rows[i]]), g) / b;
            grad_out(r, 0) = g[0] / b;
            grad_out(r, 1) = g[1] / b;
        }
    }
    return loss;
}

/// One-hidden-layer network trained with Adamax; the test metric is
/// recorded after every epoch and the best one is reported.
inline TaskResult train_supervised(const SampleSet& train, const SampleSet& test, const SupervisedConfig& cfg,
                                   std::uint64_t seed) {
    cfg.validate();
    require(train.size() > 0 && test.size() > 0, "supervised: empty train or test set");
    const Index outputs = cfg.task == Task::Age ? 1 : 2;
    const learn::Mlp mlp(train.features.cols(), cfg.hidden_dim, outputs);
    Rng rng(mix_seed(seed, "supervised"));
    Vector p = mlp.init(rng);
    learn::AdamaxState opt(mlp.n_params());
    opt.lr = cfg.lr;

    double age_mean = 0.0, age_std = 1.0;
    if (cfg.task == Task::Age) {
        age_mean = std::accumulate(train.ages.begin(), train.ages.end(), 0.0) / static_cast<double>(train.size());
        double ss = 0.0;
        for (double a : train.ages) ss += (a - age_mean) * (a - age_mean);
        age_std = std::sqrt(ss / static_cast<double>(train.size()));
        if (!(age_std > 0.0)) age_std = 1.0;
    }

    TaskResult res;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    Matrix xb;
    Eigen::MatrixXd grad_out;
    learn::Mlp::Cache cache;
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochMetric em{epoch, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        if (!opt.collapsed) {
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            std::size_t n = 0;
            for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
                const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
                const std::span<const std::size_t> rows(order.data() + start, stop - start);
                xb.resize(static_cast<Index>(rows.size()), train.features.cols());
                for (std::size_t i = 0; i < rows.size(); ++i) xb.row(static_cast<Index>(i)) = train.features.row(static_cast<Index>(rows[i]));
                const Eigen::MatrixXd out = mlp.forward(p, xb, &cache);
                const double loss = batch_loss(out, train, rows, cfg.task, age_mean, age_std, grad_out);
                if (!std::isfinite(loss)) {
                    opt.collapsed = true;
                    break;
                }
                Vector grad = Vector::Zero(mlp.n_params());
                mlp.backward(p, xb, cache, grad_out, grad);
                if (!learn::adamax_step(p, grad, opt)) break;
                total += loss;
                ++n;
            }
            if (!opt.collapsed) {
                em.train_loss = total / static_cast<double>(n);
                em.test_metric = evaluate(mlp, p, test, cfg.task, age_mean, age_std);
                if (!std::isfinite(em.test_metric)) opt.collapsed = true;
            }
        }
        res.epochs.push_back(em);
    }
    res.collapsed = opt.collapsed;
    if (!res.collapsed) {
        res.metric = res.epochs.front().test_metric;
        for (const auto& e : res.epochs) {
            res.metric = cfg.task == Task::Age ? std::min(res.metric, e.test_metric) : std::max(res.metric, e.test_metric);
        }
    }
    return res;
}

}  // namespace eegnorm::supervised
