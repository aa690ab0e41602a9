#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "eegnorm/error.hpp"
#include "eegnorm/recording.hpp"

namespace eegnorm {

/// Removes the named channels, keeping the remaining rows in order.
inline Recording drop_channels(const Recording& rec, const std::vector<std::string>& names) {
    for (const auto& n : names) {
        if (std::find(rec.channels.begin(), rec.channels.end(), n) == rec.channels.end()) {
            throw ValidationError("unknown channel '" + n + "' in recording " + rec.id);
        }
    }
    std::vector<Eigen::Index> keep;
    for (std::size_t c = 0; c < rec.channels.size(); ++c) {
        if (std::find(names.begin(), names.end(), rec.channels[c]) == names.end()) {
            keep.push_back(static_cast<Eigen::Index>(c));
        }
    }
    Recording out;
    out.id = rec.id;
    out.fs = rec.fs;
    out.meta = rec.meta;
    out.data.resize(static_cast<Eigen::Index>(keep.size()), rec.n_samples());
    for (std::size_t i = 0; i < keep.size(); ++i) {
        out.channels.push_back(rec.channels[static_cast<std::size_t>(keep[i])]);
        out.data.row(static_cast<Eigen::Index>(i)) = rec.data.row(keep[i]);
    }
    return out;
}

inline LabeledDataset drop_channels(const LabeledDataset& ds, const std::vector<std::string>& names) {
    LabeledDataset out{.recordings = {}, .seed = ds.seed, .config_hash = ds.config_hash};
    out.recordings.reserve(ds.recordings.size());
    for (const auto& r : ds.recordings) out.recordings.push_back(drop_channels(r, names));
    return out;
}

struct DatasetSplit {
    LabeledDataset train;
    LabeledDataset test;
};

/// Holds out every recording of `test_group`. Subjects seen in more than one
/// group are rejected, as is a split that leaves either side empty.
inline DatasetSplit split_by_group(const LabeledDataset& ds, const std::string& test_group) {
    std::map<std::string, std::set<std::string>> groups_of_subject;
    bool seen = false;
    for (const auto& r : ds.recordings) {
        groups_of_subject[r.meta.subject_id].insert(r.meta.group);
        seen = seen || r.meta.group == test_group;
    }
    if (!seen) throw ValidationError("unknown group '" + test_group + "'");
    for (const auto& [subject, groups] : groups_of_subject) {
        if (groups.size() > 1) throw ValidationError("subject overlap: '" + subject + "' appears in several groups");
    }
    DatasetSplit split;
    split.train.seed = split.test.seed = ds.seed;
    split.train.config_hash = split.test.config_hash = ds.config_hash;
    for (const auto& r : ds.recordings) {
        (r.meta.group == test_group ? split.test : split.train).recordings.push_back(r);
    }
    if (split.train.recordings.empty()) throw ValidationError("empty train split for test group '" + test_group + "'");
    return split;
}

enum class FindingKind { NonFinite, ChannelMismatch, DuplicateId, ShapeMismatch, EmptyGroup };

struct Finding {
    FindingKind kind;
    std::string recording_id;
    /// Channel name for NonFinite findings, otherwise empty.
    std::string channel;
    std::size_t count = 0;
    std::string detail;
};

struct ValidationReport {
    std::vector<Finding> findings;

    [[nodiscard]] bool ok() const { return findings.empty(); }
    [[nodiscard]] std::size_t count(FindingKind k) const {
        return static_cast<std::size_t>(std::count_if(findings.begin(), findings.end(),
                                                      [k](const Finding& f) { return f.kind == k; }));
    }
};

inline ValidationReport validate_dataset(const LabeledDataset& ds) {
    ValidationReport rep;
    std::map<std::string, int> ids;
    for (const auto& r : ds.recordings) {
        if (++ids[r.id] == 2) rep.findings.push_back({FindingKind::DuplicateId, r.id, {}, 2, "duplicate recording id"});
        if (r.meta.group.empty()) rep.findings.push_back({FindingKind::EmptyGroup, r.id, {}, 0, "empty group"});
        if (static_cast<std::size_t>(r.n_channels()) != r.channels.size()) {
            rep.findings.push_back({FindingKind::ShapeMismatch, r.id, {}, 0, "row count differs from channel list"});
            continue;
        }
        for (Eigen::Index c = 0; c < r.n_channels(); ++c) {
            std::size_t bad = 0;
            for (double v : row_span(r.data, c)) bad += std::isfinite(v) ? 0 : 1;
            if (bad != 0) {
                rep.findings.push_back({FindingKind::NonFinite, r.id, r.channels[static_cast<std::size_t>(c)], bad,
                                        "non-finite samples"});
            }
        }
    }
    if (!ds.recordings.empty()) {
        const auto& ref = ds.recordings.front();
        bool flagged_ref = false;
        for (std::size_t i = 1; i < ds.recordings.size(); ++i) {
            const auto& r = ds.recordings[i];
            if (r.channels == ref.channels) continue;
            if (!flagged_ref) {
                rep.findings.push_back({FindingKind::ChannelMismatch, ref.id, {}, 0, "reference channel list"});
                flagged_ref = true;
            }
            rep.findings.push_back({FindingKind::ChannelMismatch, r.id, {}, 0, "channel list differs from " + ref.id});
        }
    }
    return rep;
}

}  // namespace eegnorm
