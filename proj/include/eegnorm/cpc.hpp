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

namespace eegnorm::cpc {

using Eigen::Index;
using learn::ParamLayout;

enum class DistractorMode : std::uint8_t { SameRecording, CrossRecording };

inline std::string_view to_string(DistractorMode m) {
    return m == DistractorMode::SameRecording ? "same" : "cross";
}

struct CpcConfig {
    double window_len_s = 20.0;
    double seg_len_s = 1.0;
    Index embed_dim = 16;
    double mask_rate = 0.1;
    int mask_span = 1;
    int n_distractors = 20;
    DistractorMode mode = DistractorMode::SameRecording;
    int batch_size = 128;
    int epochs = 10;
    double lr = 0.002;
    /// Caps the 20-s windows taken from each recording; 0 keeps all.
    int max_windows_per_recording = 0;

    void validate() const {
        require(window_len_s > 0.0 && seg_len_s > 0.0, "cpc: window and segment lengths must be positive");
        const double ratio = window_len_s / seg_len_s;
        require(std::abs(ratio - std::round(ratio)) < 1e-9 && std::round(ratio) >= 1.0,
                "cpc: window length must be a multiple of the segment length");
        require(n_distractors >= 1, "cpc: n_distractors must be >= 1");
        require(mask_rate > 0.0 && mask_rate <= 1.0, "cpc: mask_rate must lie in (0, 1]");
        require(mask_span >= 1, "cpc: mask_span must be >= 1");
        require(embed_dim >= 1 && batch_size >= 1 && epochs >= 1, "cpc: embed_dim, batch_size, epochs must be >= 1");
        require(max_windows_per_recording >= 0, "cpc: max_windows_per_recording must be >= 0");
    }
};

/// Contiguous, non-overlapping segments of `seg_samples` columns each.
inline std::vector<Matrix> split_segments(const WindowTensor& window, std::int64_t seg_samples) {
    require(seg_samples >= 1, "segment length must be positive");
    const auto s = static_cast<std::int64_t>(window.data.cols());
    if (s % seg_samples != 0) throw ValidationError("window length is not a multiple of the segment length");
    std::vector<Matrix> segs;
    for (std::int64_t off = 0; off < s; off += seg_samples) segs.emplace_back(window.data.middleCols(off, seg_samples));
    return segs;
}

/// One window as the encoder sees it: L rows, each a flattened channel-major segment.
struct CpcSequence {
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> segs;
    /// Distinct recordings get distinct ids; distractor hygiene relies on it.
    int recording = 0;

    [[nodiscard]] Index length() const { return segs.rows(); }
    [[nodiscard]] Index width() const { return segs.cols(); }
};

inline CpcSequence to_sequence(const WindowTensor& window, std::int64_t seg_samples, int recording) {
    const auto segs = split_segments(window, seg_samples);
    CpcSequence seq;
    seq.recording = recording;
    const Index c = window.data.rows();
    seq.segs.resize(static_cast<Index>(segs.size()), c * seg_samples);
    for (std::size_t t = 0; t < segs.size(); ++t) {
        for (Index ch = 0; ch < c; ++ch) {
            for (Index j = 0; j < seg_samples; ++j) {
                seq.segs(static_cast<Index>(t), ch * seg_samples + j) = static_cast<float>(segs[t](ch, j));
            }
        }
    }
    return seq;
}

/// Positions chosen as span anchors with probability rate/span; each anchor
/// masks [a, a + span) clipped to L. An empty draw forces one uniform anchor.
inline std::vector<int> select_masks(int length, double rate, int span, Rng& rng) {
    require(length >= 1 && span >= 1, "select_masks: need length >= 1 and span >= 1");
    std::vector<char> on(static_cast<std::size_t>(length), 0);
    const double p = rate / static_cast<double>(span);
    auto mark = [&](int a) {
        for (int i = a; i < std::min(length, a + span); ++i) on[static_cast<std::size_t>(i)] = 1;
    };
    bool any = false;
    for (int a = 0; a < length; ++a) {
        if (uniform01(rng) < p) {
            mark(a);
            any = true;
        }
    }
    if (!any) mark(static_cast<int>(uniform_index(rng, static_cast<std::size_t>(length))));
    std::vector<int> idx;
    for (int i = 0; i < length; ++i) {
        if (on[static_cast<std::size_t>(i)]) idx.push_back(i);
    }
    return idx;
}

struct Ref {
    int seq = 0;
    int pos = 0;
    friend bool operator==(const Ref&, const Ref&) = default;
};

/// k references drawn uniformly with replacement. Same-recording draws come
/// from the anchor's own sequence at other positions; cross-recording draws
/// come from batch sequences of other recordings.
inline std::vector<Ref> sample_distractors(std::span<const int> seq_recording, int length, Ref anchor, int k,
                                           DistractorMode mode, Rng& rng) {
    std::vector<Ref> out;
    out.reserve(static_cast<std::size_t>(k));
    if (mode == DistractorMode::SameRecording) {
        if (length < 2) throw ValidationError("same-recording distractors need sequences of length >= 2");
        for (int i = 0; i < k; ++i) {
            int pos = static_cast<int>(uniform_index(rng, static_cast<std::size_t>(length - 1)));
            if (pos >= anchor.pos) ++pos;
            out.push_back({anchor.seq, pos});
        }
        return out;
    }
    const int own = seq_recording[static_cast<std::size_t>(anchor.seq)];
    std::vector<int> others;
    for (std::size_t s = 0; s < seq_recording.size(); ++s) {
        if (seq_recording[s] != own) others.push_back(static_cast<int>(s));
    }
    if (others.empty()) throw ValidationError("cross-recording distractors need a batch with >= 2 recordings");
    const std::size_t total = others.size() * static_cast<std::size_t>(length);
    for (int i = 0; i < k; ++i) {
        const std::size_t r = uniform_index(rng, total);
        out.push_back({others[r / static_cast<std::size_t>(length)], static_cast<int>(r % static_cast<std::size_t>(length))});
    }
    return out;
}

struct InfoNceResult {
    double loss = 0.0;
    Vector grad_pred;
    Vector grad_pos;
    /// k x D, row i is the gradient for distractor i.
    Eigen::MatrixXd grad_distractors;
};

/// Softmax cross-entropy over [pred.pos, pred.d_1, ..., pred.d_k] with the
/// positive at index 0. Raw dot products, no temperature.
inline InfoNceResult info_nce(const Vector& pred, const Vector& pos, const Eigen::MatrixXd& distractors) {
    require(pos.size() == pred.size() && distractors.cols() == pred.size(), "info_nce: dimension mismatch");
    const Index k = distractors.rows();
    std::vector<double> logits(static_cast<std::size_t>(k + 1));
    logits[0] = pred.dot(pos);
    for (Index i = 0; i < k; ++i) logits[static_cast<std::size_t>(i + 1)] = distractors.row(i).dot(pred);
    std::vector<double> g(logits.size());
    InfoNceResult r;
    r.loss = learn::cross_entropy_grad(logits, 0, g);
    r.grad_pos = g[0] * pred;
    r.grad_pred = g[0] * pos;
    r.grad_distractors.resize(k, pred.size());
    for (Index i = 0; i < k; ++i) {
        const double gi = g[static_cast<std::size_t>(i + 1)];
        r.grad_pred += gi * distractors.row(i).transpose();
        r.grad_distractors.row(i) = gi * pred.transpose();
    }
    return r;
}

/// Linear segment encoder, learned mask embedding, single-layer tanh
/// recurrent contextualizer, linear projection. Parameters live in one
/// flat vector described by `layout()`.
class CpcModel {
public:
    CpcModel(Index input_dim, Index embed_dim) : p_(input_dim), d_(embed_dim) {
        we_ = layout_.add(d_, p_);
        be_ = layout_.add(d_, 1);
        mask_ = layout_.add(d_, 1);
        wx_ = layout_.add(d_, d_);
        wh_ = layout_.add(d_, d_);
        br_ = layout_.add(d_, 1);
        wp_ = layout_.add(d_, d_);
        bp_ = layout_.add(d_, 1);
    }

    [[nodiscard]] const ParamLayout& layout() const { return layout_; }
    [[nodiscard]] Index n_params() const { return layout_.total(); }
    [[nodiscard]] Index input_dim() const { return p_; }
    [[nodiscard]] Index embed_dim() const { return d_; }

    [[nodiscard]] Vector init(Rng& rng, bool zero_encoder = false) const {
        Vector p = Vector::Zero(n_params());
        if (!zero_encoder) {
            learn::init_uniform(layout_, p, we_, p_, rng);
            learn::init_uniform(layout_, p, be_, p_, rng);
        }
        auto m = layout_.map(p, mask_);
        for (Index i = 0; i < d_; ++i) m(i, 0) = uniform(rng, -0.01, 0.01);
        learn::init_uniform(layout_, p, wx_, d_, rng);
        learn::init_uniform(layout_, p, wh_, d_, rng);
        learn::init_uniform(layout_, p, br_, d_, rng);
        learn::init_uniform(layout_, p, wp_, d_, rng);
        learn::init_uniform(layout_, p, bp_, d_, rng);
        return p;
    }

    /// Embeddings for stacked segments (rows) -> rows x D.
    [[nodiscard]] Eigen::MatrixXd encode(const Vector& p, const Matrix& segs) const {
        Eigen::MatrixXd z = segs * layout_.map(p, we_).transpose();
        z.rowwise() += layout_.map(p, be_).col(0).transpose();
        return z;
    }

    struct Trace {
        Eigen::MatrixXd inputs;  // L x D after mask substitution
        Eigen::MatrixXd hidden;  // L x D
    };

    /// Causal pass: h_t = tanh(Wx u_t + Wh h_{t-1} + b), c_t = Wp h_t + bp.
    [[nodiscard]] Eigen::MatrixXd contextualize(const Vector& p, const Eigen::MatrixXd& inputs, Trace* trace = nullptr) const {
        const Index l = inputs.rows();
        const auto wx = layout_.map(p, wx_);
        const auto wh = layout_.map(p, wh_);
        const auto br = layout_.map(p, br_).col(0);
        Eigen::MatrixXd hidden(l, d_);
        Vector h = Vector::Zero(d_);
        for (Index t = 0; t < l; ++t) {
            h = (wx * inputs.row(t).transpose() + wh * h + br).array().tanh().matrix();
            hidden.row(t) = h.transpose();
        }
        Eigen::MatrixXd ctx = hidden * layout_.map(p, wp_).transpose();
        ctx.rowwise() += layout_.map(p, bp_).col(0).transpose();
        if (trace) {
            trace->inputs = inputs;
            trace->hidden = std::move(hidden);
        }
        return ctx;
    }

    /// BPTT for dL/dctx. Adds parameter gradients to `grad` and returns dL/dinputs.
    Eigen::MatrixXd contextualize_backward(const Vector& p, const Trace& tr, const Eigen::MatrixXd& grad_ctx,
                                           Vector& grad) const {
        const Index l = tr.inputs.rows();
        const auto wx = layout_.map(p, wx_);
        const auto wh = layout_.map(p, wh_);
        const auto wp = layout_.map(p, wp_);
        auto gwx = layout_.map(grad, wx_);
        auto gwh = layout_.map(grad, wh_);
        auto gbr = layout_.map(grad, br_);
        layout_.map(grad, wp_).noalias() += grad_ctx.transpose() * tr.hidden;
        layout_.map(grad, bp_).col(0) += grad_ctx.colwise().sum().transpose();
        Eigen::MatrixXd grad_in(l, d_);
        Vector carry = Vector::Zero(d_);
        for (Index t = l - 1; t >= 0; --t) {
            const Vector h = tr.hidden.row(t).transpose();
            Vector da = wp.transpose() * grad_ctx.row(t).transpose() + carry;
            da.array() *= 1.0 - h.array().square();
            gwx.noalias() += da * tr.inputs.row(t);
            if (t > 0) gwh.noalias() += da * tr.hidden.row(t - 1);
            gbr.col(0) += da;
            grad_in.row(t) = (wx.transpose() * da).transpose();
            carry = wh.transpose() * da;
        }
        return grad_in;
    }

    [[nodiscard]] Vector mask_embedding(const Vector& p) const { return layout_.map(p, mask_).col(0); }

    void add_encoder_grad(const Matrix& segs, const Eigen::MatrixXd& grad_z, Vector& grad) const {
        layout_.map(grad, we_).noalias() += grad_z.transpose() * segs;
        layout_.map(grad, be_).col(0) += grad_z.colwise().sum().transpose();
    }

    void add_mask_grad(const Vector& g, Vector& grad) const { layout_.map(grad, mask_).col(0) += g; }

private:
    Index p_, d_;
    ParamLayout layout_;
    Index we_ = 0, be_ = 0, mask_ = 0, wx_ = 0, wh_ = 0, br_ = 0, wp_ = 0, bp_ = 0;
};

struct MaskedSlot {
    Ref anchor;
    std::vector<Ref> distractors;
};

/// Everything random about one step, fixed up front so the loss is a
/// deterministic function of the parameters.
struct CpcBatch {
    std::vector<const CpcSequence*> sequences;
    std::vector<std::vector<int>> masked;
    std::vector<MaskedSlot> slots;
    DistractorMode mode = DistractorMode::SameRecording;

    [[nodiscard]] Index length() const { return sequences.front()->length(); }
};

inline CpcBatch make_batch(std::span<const CpcSequence* const> seqs, const CpcConfig& cfg, Rng& rng) {
    require(!seqs.empty(), "cpc: empty batch");
    CpcBatch b;
    b.mode = cfg.mode;
    b.sequences.assign(seqs.begin(), seqs.end());
    const int l = static_cast<int>(seqs.front()->length());
    std::vector<int> rec_of;
    for (const auto* s : seqs) {
        require(s->length() == l, "cpc: sequences in a batch must share a length");
        rec_of.push_back(s->recording);
    }
    for (std::size_t i = 0; i < seqs.size(); ++i) {
        b.masked.push_back(select_masks(l, cfg.mask_rate, cfg.mask_span, rng));
        for (int pos : b.masked.back()) {
            const Ref anchor{static_cast<int>(i), pos};
            b.slots.push_back({anchor, sample_distractors(rec_of, l, anchor, cfg.n_distractors, cfg.mode, rng)});
        }
    }
    return b;
}

struct LossGrad {
    double loss = 0.0;
    Vector grad;
};

/// Mean InfoNCE over every masked slot of the batch, with its exact gradient
/// when `with_grad` is set.
inline LossGrad cpc_loss(const CpcModel& model, const Vector& p, const CpcBatch& batch, bool with_grad = true) {
    const Index l = batch.length();
    const Index d = model.embed_dim();
    const auto n_seq = static_cast<Index>(batch.sequences.size());
    Matrix segs(n_seq * l, model.input_dim());
    for (Index s = 0; s < n_seq; ++s) {
        segs.middleRows(s * l, l) = batch.sequences[static_cast<std::size_t>(s)]->segs.cast<double>();
    }
    const Eigen::MatrixXd z = model.encode(p, segs);
    const Vector mask = model.mask_embedding(p);

    std::vector<CpcModel::Trace> traces(static_cast<std::size_t>(n_seq));
    std::vector<Eigen::MatrixXd> ctx(static_cast<std::size_t>(n_seq));
    for (Index s = 0; s < n_seq; ++s) {
        Eigen::MatrixXd in = z.middleRows(s * l, l);
        for (int pos : batch.masked[static_cast<std::size_t>(s)]) in.row(pos) = mask.transpose();
        ctx[static_cast<std::size_t>(s)] = model.contextualize(p, in, &traces[static_cast<std::size_t>(s)]);
    }

    LossGrad out;
    const double scale = 1.0 / static_cast<double>(batch.slots.size());
    Eigen::MatrixXd grad_z = Eigen::MatrixXd::Zero(n_seq * l, d);
    std::vector<Eigen::MatrixXd> grad_ctx(static_cast<std::size_t>(n_seq), Eigen::MatrixXd::Zero(l, d));
    auto zrow = [&](Ref r) { return static_cast<Index>(r.seq) * l + r.pos; };
    for (const auto& slot : batch.slots) {
        const Vector pred = ctx[static_cast<std::size_t>(slot.anchor.seq)].row(slot.anchor.pos).transpose();
        const Vector pos = z.row(zrow(slot.anchor)).transpose();
        Eigen::MatrixXd dist(static_cast<Index>(slot.distractors.size()), d);
        for (std::size_t i = 0; i < slot.distractors.size(); ++i) dist.row(static_cast<Index>(i)) = z.row(zrow(slot.distractors[i]));
        const auto r = info_nce(pred, pos, dist);
        out.loss += scale * r.loss;
        if (!with_grad) continue;
        grad_ctx[static_cast<std::size_t>(slot.anchor.seq)].row(slot.anchor.pos) += scale * r.grad_pred.transpose();
        grad_z.row(zrow(slot.anchor)) += scale * r.grad_pos.transpose();
        for (std::size_t i = 0; i < slot.distractors.size(); ++i) {
            grad_z.row(zrow(slot.distractors[i])) += scale * r.grad_distractors.row(static_cast<Index>(i));
        }
    }
    if (!with_grad) return out;

    out.grad = Vector::Zero(model.n_params());
    Vector grad_mask = Vector::Zero(d);
    for (Index s = 0; s < n_seq; ++s) {
        const auto su = static_cast<std::size_t>(s);
        Eigen::MatrixXd gin = model.contextualize_backward(p, traces[su], grad_ctx[su], out.grad);
        for (int pos : batch.masked[su]) {
            grad_mask += gin.row(pos).transpose();
            gin.row(pos).setZero();
        }
        grad_z.middleRows(s * l, l) += gin;
    }
    model.add_mask_grad(grad_mask, out.grad);
    model.add_encoder_grad(segs, grad_z, out.grad);
    return out;
}

struct StepResult {
    double loss = 0.0;
    bool applied = false;
};

/// Loss, gradient and one Adamax update. A non-finite loss raises the
/// collapse flag and leaves the parameters frozen.
inline StepResult cpc_train_step(const CpcModel& model, Vector& p, learn::AdamaxState& opt, const CpcBatch& batch) {
    auto lg = cpc_loss(model, p, batch, true);
    if (!std::isfinite(lg.loss)) {
        opt.collapsed = true;
        return {lg.loss, false};
    }
    const bool applied = learn::adamax_step(p, lg.grad, opt);
    return {lg.loss, applied};
}

struct EpochLog {
    int epoch = 0;
    double train_loss = 0.0;
    double test_loss = 0.0;
};

struct CpcResult {
    std::vector<EpochLog> epochs;
    /// Lowest test loss over epochs; NaN after a collapse.
    double best_test_loss = std::numeric_limits<double>::quiet_NaN();
    double final_train_loss = std::numeric_limits<double>::quiet_NaN();
    bool collapsed = false;
};

namespace detail {

/// Splits an index order into batches. Cross-recording batches that hold a
/// single recording cannot supply distractors and are dropped.
inline std::vector<std::vector<const CpcSequence*>> batches(std::span<const CpcSequence> data,
                                                           const std::vector<std::size_t>& order,
                                                           const CpcConfig& cfg) {
    std::vector<std::vector<const CpcSequence*>> out;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
        std::vector<const CpcSequence*> b;
        for (std::size_t i = start; i < std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size)); ++i) {
            b.push_back(&data[order[i]]);
        }
        if (cfg.mode == DistractorMode::CrossRecording) {
            const bool mixed = std::any_of(b.begin(), b.end(), [&](const CpcSequence* s) { return s->recording != b.front()->recording; });
            if (!mixed) continue;
        }
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace detail

inline double cpc_evaluate(const CpcModel& model, const Vector& p, std::span<const CpcSequence> data,
                           const CpcConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    double total = 0.0;
    std::size_t slots = 0;
    for (const auto& b : detail::batches(data, order, cfg)) {
        const auto batch = make_batch(b, cfg, rng);
        total += cpc_loss(model, p, batch, false).loss * static_cast<double>(batch.slots.size());
        slots += batch.slots.size();
    }
    return slots == 0 ? std::numeric_limits<double>::quiet_NaN() : total / static_cast<double>(slots);
}

/// Trains from a fresh initialization for cfg.epochs epochs, evaluating the
/// test loss (fixed evaluation draws) after every epoch.
inline CpcResult cpc_train(std::span<const CpcSequence> train, std::span<const CpcSequence> test, const CpcConfig& cfg,
                           std::uint64_t seed, bool zero_encoder = false) {
    cfg.validate();
    require(!train.empty(), "cpc: empty training set");
    const CpcModel model(train.front().width(), cfg.embed_dim);
    Rng rng(mix_seed(seed, "cpc-train"));
    Vector p = model.init(rng, zero_encoder);
    learn::AdamaxState opt(model.n_params());
    opt.lr = cfg.lr;
    CpcResult res;
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), 0);
    const std::uint64_t eval_seed = mix_seed(seed, "cpc-eval");
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        EpochLog log{epoch + 1, std::numeric_limits<double>::quiet_NaN(), std::numeric_limits<double>::quiet_NaN()};
        if (!opt.collapsed) {
            std::shuffle(order.begin(), order.end(), rng);
            double total = 0.0;
            std::size_t n = 0;
            for (const auto& b : detail::batches(train, order, cfg)) {
                const auto batch = make_batch(b, cfg, rng);
                const auto step = cpc_train_step(model, p, opt, batch);
                if (opt.collapsed) break;
                total += step.loss;
                ++n;
            }
            require(opt.collapsed || n > 0, "cpc: no usable training batches");
            if (!opt.collapsed && n > 0) {
                log.train_loss = total / static_cast<double>(n);
                log.test_loss = test.empty() ? log.train_loss : cpc_evaluate(model, p, test, cfg, eval_seed);
                if (!std::isfinite(log.test_loss)) opt.collapsed = true;
            }
        }
        res.epochs.push_back(log);
    }
    res.collapsed = opt.collapsed;
    if (!res.collapsed) {
        res.final_train_loss = res.epochs.back().train_loss;
        res.best_test_loss = std::numeric_limits<double>::infinity();
        for (const auto& e : res.epochs) res.best_test_loss = std::min(res.best_test_loss, e.test_loss);
    }
    return res;
}

}  // namespace eegnorm::cpc
