#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "eegnorm/error.hpp"
#include "eegnorm/recording.hpp"
#include "eegnorm/rng.hpp"

namespace eegnorm::learn {

using Eigen::Index;
using MatMap = Eigen::Map<Eigen::MatrixXd>;
using ConstMatMap = Eigen::Map<const Eigen::MatrixXd>;

/// Position of one tensor inside a flat parameter vector (column-major).
struct ParamSlot {
    Index offset = 0;
    Index rows = 0;
    Index cols = 0;
    [[nodiscard]] Index size() const { return rows * cols; }
};

/// Layout of named tensors packed into one f64 buffer. Gradients share the
/// layout, so the optimizer and gradient checker work on flat vectors.
class ParamLayout {
public:
    Index add(Index rows, Index cols) {
        slots_.push_back({total_, rows, cols});
        total_ += rows * cols;
        return static_cast<Index>(slots_.size() - 1);
    }

    [[nodiscard]] Index total() const { return total_; }
    [[nodiscard]] const ParamSlot& slot(Index i) const { return slots_[static_cast<std::size_t>(i)]; }

    [[nodiscard]] MatMap map(Vector& buf, Index i) const {
        const auto& s = slot(i);
        return {buf.data() + s.offset, s.rows, s.cols};
    }
    [[nodiscard]] ConstMatMap map(const Vector& buf, Index i) const {
        const auto& s = slot(i);
        return {buf.data() + s.offset, s.rows, s.cols};
    }

private:
    std::vector<ParamSlot> slots_;
    Index total_ = 0;
};

/// Fills a slot with U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline void init_uniform(const ParamLayout& layout, Vector& buf, Index slot, Index fan_in, Rng& rng) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(std::max<Index>(fan_in, 1)));
    auto m = layout.map(buf, slot);
    for (Index j = 0; j < m.cols(); ++j) {
        for (Index i = 0; i < m.rows(); ++i) m(i, j) = uniform(rng, -bound, bound);
    }
}

inline bool all_finite(const Vector& v) { return v.allFinite(); }

// ---------------------------------------------------------------- linear

inline Vector linear_forward(const Vector& x, const Eigen::MatrixXd& w, const Vector& b) {
    require(w.cols() == x.size() && w.rows() == b.size(), "linear_forward: shape mismatch");
    return w * x + b;
}

struct LinearGrads {
    Vector grad_x;
    Eigen::MatrixXd grad_w;
    Vector grad_b;
};

/// Gradients of y = Wx + b given dL/dy and the forward input.
inline LinearGrads linear_backward(const Vector& grad_out, const Vector& x, const Eigen::MatrixXd& w) {
    require(w.rows() == grad_out.size() && w.cols() == x.size(), "linear_backward: shape mismatch");
    return {w.transpose() * grad_out, grad_out * x.transpose(), grad_out};
}

// ---------------------------------------------------------------- adamax

struct AdamaxState {
    Vector m;
    Vector u;
    std::int64_t t = 0;
    double lr = 0.002;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    bool collapsed = false;

    explicit AdamaxState(Index n = 0) : m(Vector::Zero(n)), u(Vector::Zero(n)) {}
};

/// One Adamax update. A non-finite gradient or update raises the collapse
/// flag and leaves parameters and state untouched. Returns whether the
/// step was applied.
inline bool adamax_step(Vector& params, const Vector& grads, AdamaxState& st) {
    require(params.size() == grads.size() && st.m.size() == params.size() && st.u.size() == params.size(),
            "adamax_step: shape mismatch");
    if (!grads.allFinite()) {
        st.collapsed = true;
        return false;
    }
    const std::int64_t t = st.t + 1;
    const Vector m = st.beta1 * st.m + (1.0 - st.beta1) * grads;
    const Vector u = (st.beta2 * st.u).cwiseMax(grads.cwiseAbs());
    const double step = st.lr / (1.0 - std::pow(st.beta1, static_cast<double>(t)));
    Vector next = params - step * (m.array() / (u.array() + st.eps)).matrix();
    if (!next.allFinite()) {
        st.collapsed = true;
        return false;
    }
    params = std::move(next);
    st.m = m;
    st.u = u;
    st.t = t;
    return true;
}

// ---------------------------------------------------------------- grad check

/// Largest coordinate-wise gap between `analytic` and central differences
/// of `f`, relative to the largest central-difference magnitude.
inline double grad_check(const std::function<double(const Vector&)>& f, const Vector& params, const Vector& analytic,
                         double h = 1e-5) {
    require(params.size() == analytic.size(), "grad_check: shape mismatch");
    Vector probe = params;
    double max_diff = 0.0;
    double max_ref = 0.0;
    for (Index i = 0; i < params.size(); ++i) {
        probe[i] = params[i] + h;
        const double fp = f(probe);
        probe[i] = params[i] - h;
        const double fm = f(probe);
        probe[i] = params[i];
        const double numeric = (fp - fm) / (2.0 * h);
        max_diff = std::max(max_diff, std::abs(analytic[i] - numeric));
        max_ref = std::max(max_ref, std::abs(numeric));
    }
    return max_diff / std::max(max_ref, std::numeric_limits<double>::min());
}

// ---------------------------------------------------------------- metrics

inline double mae(std::span<const double> preds, std::span<const double> targets) {
    require(preds.size() == targets.size() && !preds.empty(), "mae: length mismatch or empty input");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - targets[i]);
    return s / static_cast<double>(preds.size());
}

/// (TPR + TNR) / 2 with label 1 as the positive class.
inline double balanced_accuracy(std::span<const int> preds, std::span<const int> labels) {
    require(preds.size() == labels.size(), "balanced_accuracy: length mismatch");
    std::size_t tp = 0, fn = 0, tn = 0, fp = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == 1) (preds[i] == 1 ? tp : fn)++;
        else (preds[i] == 1 ? fp : tn)++;
    }
    require(tp + fn > 0 && tn + fp > 0, "balanced_accuracy: labels contain a single class");
    const double tpr = static_cast<double>(tp) / static_cast<double>(tp + fn);
    const double tnr = static_cast<double>(tn) / static_cast<double>(tn + fp);
    return 0.5 * (tpr + tnr);
}

/// log(sum(exp(logits))) with max subtraction.
inline double log_sum_exp(std::span<const double> logits) {
    const double mx = *std::max_element(logits.begin(), logits.end());
    if (!std::isfinite(mx)) return mx;
    double s = 0.0;
    for (double v : logits) s += std::exp(v - mx);
    return mx + std::log(s);
}

/// -log softmax(logits)[target].
inline double cross_entropy(std::span<const double> logits, std::size_t target) {
    require(target < logits.size(), "cross_entropy: target out of range");
    return log_sum_exp(logits) - logits[target];
}

/// Loss and d(loss)/d(logits) = softmax - onehot.
inline double cross_entropy_grad(std::span<const double> logits, std::size_t target, std::span<double> grad) {
    const double lse = log_sum_exp(logits);
    for (std::size_t i = 0; i < logits.size(); ++i) grad[i] = std::exp(logits[i] - lse);
    grad[target] -= 1.0;
    return lse - logits[target];
}

// ---------------------------------------------------------------- mlp

/// linear -> tanh -> linear on row-major batches (one sample per row).
class Mlp {
public:
    Mlp(Index in, Index hidden, Index out) : in_(in), hidden_(hidden), out_(out) {
        w1_ = layout_.add(hidden, in);
        b1_ = layout_.add(hidden, 1);
        w2_ = layout_.add(out, hidden);
        b2_ = layout_.add(out, 1);
    }

    [[nodiscard]] const ParamLayout& layout() const { return layout_; }
    [[nodiscard]] Index n_params() const { return layout_.total(); }
    [[nodiscard]] Index inputs() const { return in_; }
    [[nodiscard]] Index outputs() const { return out_; }

    [[nodiscard]] Vector init(Rng& rng) const {
        Vector p = Vector::Zero(n_params());
        init_uniform(layout_, p, w1_, in_, rng);
        init_uniform(layout_, p, b1_, in_, rng);
        init_uniform(layout_, p, w2_, hidden_, rng);
        init_uniform(layout_, p, b2_, hidden_, rng);
        return p;
    }

    struct Cache {
        Eigen::MatrixXd hidden;  // B x H, post-activation
    };

    [[nodiscard]] Eigen::MatrixXd forward(const Vector& p, const Matrix& x, Cache* cache = nullptr) const {
        require(x.cols() == in_, "mlp: input width mismatch");
        Eigen::MatrixXd h = x * layout_.map(p, w1_).transpose();
        h.rowwise() += layout_.map(p, b1_).col(0).transpose();
        h = h.array().tanh().matrix();
        Eigen::MatrixXd y = h * layout_.map(p, w2_).transpose();
        y.rowwise() += layout_.map(p, b2_).col(0).transpose();
        if (cache) cache->hidden = std::move(h);
        return y;
    }

    /// Accumulates parameter gradients for dL/dy = grad_out into `grad`.
    void backward(const Vector& p, const Matrix& x, const Cache& cache, const Eigen::MatrixXd& grad_out,
                  Vector& grad) const {
        const auto& h = cache.hidden;
        layout_.map(grad, w2_).noalias() += grad_out.transpose() * h;
        layout_.map(grad, b2_).col(0) += grad_out.colwise().sum().transpose();
        Eigen::MatrixXd dz = grad_out * layout_.map(p, w2_);
        dz.array() *= 1.0 - h.array().square();
        layout_.map(grad, w1_).noalias() += dz.transpose() * x;
        layout_.map(grad, b1_).col(0) += dz.colwise().sum().transpose();
    }

    /// Sets the output bias, e.g. to start a regression at the target mean.
    void set_output_bias(Vector& p, Index k, double v) const { layout_.map(p, b2_)(k, 0) = v; }

private:
    Index in_, hidden_, out_;
    ParamLayout layout_;
    Index w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
};

}  // namespace eegnorm::learn
