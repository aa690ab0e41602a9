#pragma once

// Binary recording format (little-endian):
//   "EEGN" | u32 version=1 | u32 n_channels | u64 n_samples | f64 fs
//   | n_channels x (u16 byte length, UTF-8 name)
//   | f32 data, channel-major
// Metadata lives in a sidecar text file with the same basename and a
// ".meta" suffix: subject_id, age, gender, group as key=value lines.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "eegnorm/error.hpp"
#include "eegnorm/recording.hpp"

namespace eegnorm {

inline constexpr std::array<char, 4> kRecordingMagic{'E', 'E', 'G', 'N'};
inline constexpr std::uint32_t kRecordingVersion = 1;
inline constexpr std::string_view kRecordingExtension = ".eegn";

namespace detail {

template <typename UInt>
void put_le(std::vector<char>& out, UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

template <typename UInt>
UInt get_le(const char* p) {
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        v |= static_cast<UInt>(static_cast<unsigned char>(p[i])) << (8 * i);
    }
    return v;
}

class ByteReader {
public:
    ByteReader(const std::vector<char>& buf, std::string path) : buf_(buf), path_(std::move(path)) {}

    const char* take(std::size_t n, const char* what) {
        if (buf_.size() - pos_ < n) {
            throw TruncatedError("truncated recording " + path_ + ": missing " + what);
        }
        const char* p = buf_.data() + pos_;
        pos_ += n;
        return p;
    }

    template <typename UInt>
    UInt u(const char* what) {
        return get_le<UInt>(take(sizeof(UInt), what));
    }

    [[nodiscard]] std::size_t remaining() const { return buf_.size() - pos_; }

private:
    const std::vector<char>& buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

inline std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed: " + path.string());
    return buf;
}

inline void spit(const std::filesystem::path& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

inline std::string gender_name(Gender g) { return g == Gender::Female ? "female" : "male"; }

inline Gender parse_gender(std::string_view s) {
    if (s == "female" || s == "F" || s == "1") return Gender::Female;
    if (s == "male" || s == "M" || s == "0") return Gender::Male;
    throw ValidationError("invalid gender '" + std::string(s) + "' (expected male|female)");
}

}  // namespace detail

/// Exact byte count of a recording file with the given layout.
inline std::uint64_t recording_file_size(const std::vector<std::string>& channels, std::uint64_t n_samples) {
    std::uint64_t size = 4 + 4 + 4 + 8 + 8;
    for (const auto& c : channels) size += 2 + c.size();
    return size + channels.size() * n_samples * 4;
}

inline std::filesystem::path meta_path_for(const std::filesystem::path& path) {
    auto p = path;
    p.replace_extension(".meta");
    return p;
}

inline std::string encode_recording(const Recording& rec) {
    validate_recording(rec);
    for (const auto& c : rec.channels) {
        require(c.size() <= std::numeric_limits<std::uint16_t>::max(), "channel name too long: " + c);
    }
    std::vector<char> out;
    out.reserve(recording_file_size(rec.channels, static_cast<std::uint64_t>(rec.n_samples())));
    out.insert(out.end(), kRecordingMagic.begin(), kRecordingMagic.end());
    detail::put_le<std::uint32_t>(out, kRecordingVersion);
    detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(rec.n_channels()));
    detail::put_le<std::uint64_t>(out, static_cast<std::uint64_t>(rec.n_samples()));
    detail::put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(rec.fs));
    for (const auto& c : rec.channels) {
        detail::put_le<std::uint16_t>(out, static_cast<std::uint16_t>(c.size()));
        out.insert(out.end(), c.begin(), c.end());
    }
    for (Eigen::Index i = 0; i < rec.data.size(); ++i) {
        detail::put_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(static_cast<float>(rec.data.data()[i])));
    }
    return {out.begin(), out.end()};
}

inline std::string encode_meta(const SubjectMeta& meta) {
    std::ostringstream os;
    os.precision(17);
    os << "subject_id=" << meta.subject_id << '\n'
       << "age=" << meta.age << '\n'
       << "gender=" << detail::gender_name(meta.gender) << '\n'
       << "group=" << meta.group << '\n';
    return os.str();
}

inline SubjectMeta parse_meta(std::string_view text, const std::string& origin) {
    std::map<std::string, std::string, std::less<>> kv;
    std::istringstream is{std::string(text)};
    std::string line;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError("format error in " + origin + ": expected key=value");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](std::string_view key) -> const std::string& {
        const auto it = kv.find(key);
        if (it == kv.end()) throw FormatError("format error in " + origin + ": missing key " + std::string(key));
        return it->second;
    };
    SubjectMeta meta;
    meta.subject_id = need("subject_id");
    const auto& age = need("age");
    try {
        std::size_t used = 0;
        meta.age = std::stod(age, &used);
        if (used != age.size()) throw std::invalid_argument(age);
    } catch (const std::exception&) {
        throw FormatError("format error in " + origin + ": bad age '" + age + "'");
    }
    meta.gender = detail::parse_gender(need("gender"));
    meta.group = need("group");
    return meta;
}

/// Decodes a recording body; metadata and id are left for the caller.
inline Recording decode_recording(const std::vector<char>& buf, const std::string& origin) {
    detail::ByteReader rd(buf, origin);
    if (buf.size() < 4 || std::memcmp(buf.data(), kRecordingMagic.data(), 4) != 0) {
        throw FormatError("format error: bad magic in " + origin);
    }
    rd.take(4, "magic");
    const auto version = rd.u<std::uint32_t>("version");
    if (version != kRecordingVersion) {
        throw VersionError("format error: unsupported version " + std::to_string(version) + " in " + origin);
    }
    const auto n_channels = rd.u<std::uint32_t>("channel count");
    const auto n_samples = rd.u<std::uint64_t>("sample count");
    Recording rec;
    rec.fs = std::bit_cast<double>(rd.u<std::uint64_t>("sampling rate"));
    if (!(rec.fs > 0.0) || !std::isfinite(rec.fs)) throw FormatError("format error: invalid fs in " + origin);
    rec.channels.reserve(n_channels);
    for (std::uint32_t c = 0; c < n_channels; ++c) {
        const auto len = rd.u<std::uint16_t>("channel name length");
        const char* p = rd.take(len, "channel name");
        rec.channels.emplace_back(p, len);
    }
    const std::uint64_t n_values = static_cast<std::uint64_t>(n_channels) * n_samples;
    if (n_samples != 0 && n_values / n_samples != n_channels) throw FormatError("format error: size overflow in " + origin);
    if (rd.remaining() / 4 < n_values) {
        throw TruncatedError("truncated recording " + origin + ": declared " + std::to_string(n_samples) +
                             " samples, payload holds " + std::to_string(rd.remaining() / 4 / std::max<std::uint64_t>(n_channels, 1)));
    }
    if (rd.remaining() != n_values * 4) throw FormatError("format error: trailing bytes in " + origin);
    rec.data.resize(n_channels, static_cast<Eigen::Index>(n_samples));
    const char* p = rd.take(n_values * 4, "data");
    for (std::uint64_t i = 0; i < n_values; ++i) {
        rec.data.data()[i] = static_cast<double>(std::bit_cast<float>(detail::get_le<std::uint32_t>(p + 4 * i)));
    }
    return rec;
}

/// Writes `path` and its `.meta` sidecar. Values are stored as f32.
inline void write_recording(const Recording& rec, const std::filesystem::path& path) {
    const auto bytes = encode_recording(rec);
    detail::spit(path, bytes);
    detail::spit(meta_path_for(path), encode_meta(rec.meta));
}

/// Reads a recording and its sidecar. The recording id is the file stem.
inline Recording read_recording(const std::filesystem::path& path) {
    const auto buf = detail::slurp(path);
    Recording rec = decode_recording(buf, path.string());
    rec.id = path.stem().string();
    const auto meta_path = meta_path_for(path);
    const auto meta_buf = detail::slurp(meta_path);
    rec.meta = parse_meta(std::string_view(meta_buf.data(), meta_buf.size()), meta_path.string());
    return rec;
}

/// All `.eegn` files in a directory, sorted by file name.
inline std::vector<std::filesystem::path> list_recordings(const std::filesystem::path& dir) {
    std::error_code ec;
    if (!std::filesystem::is_directory(dir, ec)) throw IoError("not a directory: " + dir.string());
    std::vector<std::filesystem::path> out;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == kRecordingExtension) out.push_back(e.path());
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline LabeledDataset read_dataset(const std::filesystem::path& dir) {
    LabeledDataset ds;
    for (const auto& p : list_recordings(dir)) ds.recordings.push_back(read_recording(p));
    return ds;
}

inline void write_dataset(const LabeledDataset& ds, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    for (const auto& rec : ds.recordings) {
        write_recording(rec, dir / (rec.id + std::string(kRecordingExtension)));
    }
}

}  // namespace eegnorm
