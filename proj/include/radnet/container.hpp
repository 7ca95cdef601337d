#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "radnet/error.hpp"
#include "radnet/tensor.hpp"

// Binary container for named float32 volumes.
//
//   magic "MRNV" | version u16
//   records:  name_len u16 | name | rank u8 | extents u64[rank] | payload f32[n]
//   index:    count u64 | entries (name_len u16 | name | offset u64)
//   tail:     index offset u64
//
// All integers and floats are little-endian; payloads are row-major.  The
// trailing index allows random access by record name without scanning.

namespace radnet {

constexpr std::uint16_t kContainerVersion = 1;
inline const char kContainerMagic[4] = {'M', 'R', 'N', 'V'};

struct NamedVolume {
    std::string name;
    Tensor<float> data;
};

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    const std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
public:
    Reader(const std::string& path, std::string blob) : path_(path), blob_(std::move(blob)) {}

    std::size_t size() const { return blob_.size(); }
    std::size_t pos() const { return pos_; }
    void seek(std::size_t p) {
        if (p > blob_.size()) throw TruncatedError(path_ + ": seek past end of file");
        pos_ = p;
    }

    void bytes(char* dst, std::size_t n, const char* what) {
        if (pos_ + n > blob_.size()) {
            throw TruncatedError(path_ + ": truncated while reading " + std::string(what));
        }
        for (std::size_t i = 0; i < n; ++i) dst[i] = blob_[pos_ + i];
        pos_ += n;
    }

    std::uint16_t u16(const char* what) {
        unsigned char b[2];
        bytes(reinterpret_cast<char*>(b), 2, what);
        return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
    }

    std::uint8_t u8(const char* what) {
        unsigned char b;
        bytes(reinterpret_cast<char*>(&b), 1, what);
        return b;
    }

    std::uint64_t u64(const char* what) {
        unsigned char b[8];
        bytes(reinterpret_cast<char*>(b), 8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        return v;
    }

    std::string str(std::size_t n, const char* what) {
        std::string s(n, '\0');
        if (n > 0) bytes(s.data(), n, what);
        return s;
    }

    float f32(const char* what) {
        unsigned char b[4];
        bytes(reinterpret_cast<char*>(b), 4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
        return std::bit_cast<float>(v);
    }

    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::string blob_;
    std::size_t pos_ = 0;
};

inline Reader open_container(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    Reader r(path, std::move(blob));
    char magic[4];
    r.bytes(magic, 4, "magic");
    for (int i = 0; i < 4; ++i) {
        if (magic[i] != kContainerMagic[i]) {
            throw BadMagicError(path + ": not a volume container (bad magic)");
        }
    }
    const std::uint16_t version = r.u16("version");
    if (version != kContainerVersion) {
        throw VersionError(path + ": format version " + std::to_string(version) + ", expected " +
                           std::to_string(kContainerVersion));
    }
    return r;
}

inline NamedVolume read_record(Reader& r) {
    const std::uint16_t name_len = r.u16("record name length");
    NamedVolume rec;
    rec.name = r.str(name_len, "record name");
    const std::uint8_t rank = r.u8("record rank");
    std::vector<std::int64_t> shape;
    for (std::uint8_t d = 0; d < rank; ++d) {
        const std::uint64_t e = r.u64("record extent");
        if (e == 0 || e > (1ull << 32)) {
            throw ValidationError(r.path() + ": record '" + rec.name + "' has invalid extent " +
                                  std::to_string(e));
        }
        shape.push_back(static_cast<std::int64_t>(e));
    }
    Tensor<float> t(shape);
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = r.f32("record payload");
    rec.data = std::move(t);
    return rec;
}

struct IndexEntry {
    std::string name;
    std::uint64_t offset;
};

inline std::vector<IndexEntry> read_index(Reader& r) {
    if (r.size() < 14) throw TruncatedError(r.path() + ": too small to hold an index");
    r.seek(r.size() - 8);
    const std::uint64_t index_off = r.u64("index offset");
    if (index_off < 6 || index_off >= r.size() - 8) {
        throw IndexError(r.path() + ": index offset " + std::to_string(index_off) + " outside file");
    }
    r.seek(index_off);
    const std::uint64_t count = r.u64("index count");
    std::vector<IndexEntry> entries;
    for (std::uint64_t i = 0; i < count; ++i) {
        const std::uint16_t n = r.u16("index name length");
        IndexEntry e;
        e.name = r.str(n, "index name");
        e.offset = r.u64("index entry offset");
        if (e.offset < 6 || e.offset >= index_off) {
            throw IndexError(r.path() + ": record '" + e.name + "' offset points outside the data region");
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

}  // namespace detail

inline void save_volumes(const std::string& path, const std::vector<NamedVolume>& records) {
    std::string out;
    out.append(kContainerMagic, 4);
    detail::put_u16(out, kContainerVersion);
    std::vector<detail::IndexEntry> index;
    for (const NamedVolume& rec : records) {
        if (rec.name.empty() || rec.name.size() > 0xffff) {
            throw ValidationError("record name must be 1..65535 bytes, got '" + rec.name + "'");
        }
        if (rec.data.numel() == 0) {
            throw ValidationError("record '" + rec.name + "' holds an empty tensor");
        }
        for (const auto& prev : index) {
            if (prev.name == rec.name) throw ValidationError("duplicate record name '" + rec.name + "'");
        }
        index.push_back({rec.name, static_cast<std::uint64_t>(out.size())});
        detail::put_u16(out, static_cast<std::uint16_t>(rec.name.size()));
        out.append(rec.name);
        out.push_back(static_cast<char>(rec.data.rank()));
        for (int d = 0; d < rec.data.rank(); ++d) {
            detail::put_u64(out, static_cast<std::uint64_t>(rec.data.extent(d)));
        }
        for (std::int64_t i = 0; i < rec.data.numel(); ++i) detail::put_f32(out, rec.data[i]);
    }
    const std::uint64_t index_off = out.size();
    detail::put_u64(out, static_cast<std::uint64_t>(index.size()));
    for (const auto& e : index) {
        detail::put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.append(e.name);
        detail::put_u64(out, e.offset);
    }
    detail::put_u64(out, index_off);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("short write to " + path);
}

inline std::vector<std::string> list_volumes(const std::string& path) {
    detail::Reader r = detail::open_container(path);
    std::vector<std::string> names;
    for (const auto& e : detail::read_index(r)) names.push_back(e.name);
    return names;
}

inline Tensor<float> load_volume(const std::string& path, const std::string& name) {
    detail::Reader r = detail::open_container(path);
    for (const auto& e : detail::read_index(r)) {
        if (e.name != name) continue;
        r.seek(e.offset);
        NamedVolume rec = detail::read_record(r);
        if (rec.name != name) {
            throw IndexError(path + ": index points '" + name + "' at a record named '" + rec.name + "'");
        }
        return std::move(rec.data);
    }
    throw IndexError(path + ": no record named '" + name + "'");
}

inline std::vector<NamedVolume> load_all_volumes(const std::string& path) {
    detail::Reader r = detail::open_container(path);
    const auto entries = detail::read_index(r);
    std::vector<NamedVolume> out;
    for (const auto& e : entries) {
        r.seek(e.offset);
        NamedVolume rec = detail::read_record(r);
        if (rec.name != e.name) {
            throw IndexError(path + ": index entry '" + e.name + "' disagrees with record name '" +
                             rec.name + "'");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

}  // namespace radnet
