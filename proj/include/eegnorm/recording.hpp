#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "eegnorm/error.hpp"

namespace eegnorm {

/// Channel-major sample matrix: one row per channel, contiguous in time.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

inline std::span<const double> row_span(const Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

inline std::span<double> row_span(Matrix& m, Eigen::Index r) {
    return {m.data() + r * m.cols(), static_cast<std::size_t>(m.cols())};
}

enum class Gender : std::uint8_t { Male = 0, Female = 1 };

inline int label_of(Gender g) { return static_cast<int>(g); }

struct SubjectMeta {
    std::string subject_id;
    double age = 0.0;
    Gender gender = Gender::Male;
    /// Split unit; plays the role of a data release.
    std::string group;
};

struct Recording {
    std::string id;
    std::vector<std::string> channels;
    double fs = 0.0;
    Matrix data;
    SubjectMeta meta;

    [[nodiscard]] Eigen::Index n_channels() const { return data.rows(); }
    [[nodiscard]] Eigen::Index n_samples() const { return data.cols(); }
};

struct LabeledDataset {
    std::vector<Recording> recordings;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
};

/// Count of non-finite entries in a matrix.
inline std::size_t count_non_finite(const Matrix& m) {
    std::size_t n = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) ++n;
    }
    return n;
}

/// Shape and metadata checks; `require_finite` additionally rejects NaN/inf samples.
inline void validate_recording(const Recording& rec, bool require_finite = true) {
    require(rec.fs > 0.0 && std::isfinite(rec.fs), "recording " + rec.id + ": fs must be positive");
    require(rec.n_samples() >= 1, "recording " + rec.id + ": no samples");
    require(static_cast<std::size_t>(rec.n_channels()) == rec.channels.size(),
            "recording " + rec.id + ": row count does not match channel list");
    require(!rec.meta.group.empty(), "recording " + rec.id + ": empty group");
    require(rec.meta.age >= 0.0, "recording " + rec.id + ": negative age");
    if (require_finite && count_non_finite(rec.data) != 0) {
        throw ValidationError("recording " + rec.id + ": non-finite data");
    }
}

}  // namespace eegnorm
