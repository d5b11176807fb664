#include "m3net/npy.hpp"

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>

#include "m3net/errors.hpp"

namespace m3net {

namespace {

std::vector<unsigned char> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("file not found: " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff size = in.tellg();
    in.seekg(0);
    std::vector<unsigned char> bytes(static_cast<std::size_t>(size));
    in.read(reinterpret_cast<char*>(bytes.data()), size);
    if (!in) throw IoError("read failed: " + path);
    return bytes;
}

std::uint32_t le32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

// Pulls a quoted or bare python literal value out of the npy header dict.
std::string dict_value(const std::string& header, const std::string& key,
                       const std::string& origin) {
    const std::string quoted = "'" + key + "'";
    std::size_t pos = header.find(quoted);
    if (pos == std::string::npos)
        throw CorruptError("npy header missing " + key + " in " + origin);
    pos = header.find(':', pos);
    if (pos == std::string::npos) throw CorruptError("malformed npy header in " + origin);
    ++pos;
    while (pos < header.size() && (header[pos] == ' ' || header[pos] == '\t')) ++pos;
    if (pos < header.size() && header[pos] == '\'') {
        const std::size_t end = header.find('\'', pos + 1);
        if (end == std::string::npos) throw CorruptError("malformed npy header in " + origin);
        return header.substr(pos + 1, end - pos - 1);
    }
    if (pos < header.size() && header[pos] == '(') {
        const std::size_t end = header.find(')', pos);
        if (end == std::string::npos) throw CorruptError("malformed npy header in " + origin);
        return header.substr(pos, end - pos + 1);
    }
    std::size_t end = pos;
    while (end < header.size() && header[end] != ',' && header[end] != '}') ++end;
    return header.substr(pos, end - pos);
}

std::vector<unsigned char> inflate_raw(const unsigned char* src, std::size_t src_len,
                                       std::size_t dst_len, const std::string& origin) {
    std::vector<unsigned char> dst(dst_len);
    z_stream zs{};
    if (inflateInit2(&zs, -MAX_WBITS) != Z_OK)
        throw CorruptError("zlib init failed for " + origin);
    zs.next_in = const_cast<Bytef*>(src);
    zs.avail_in = static_cast<uInt>(src_len);
    zs.next_out = dst.data();
    zs.avail_out = static_cast<uInt>(dst_len);
    const int rc = inflate(&zs, Z_FINISH);
    inflateEnd(&zs);
    if (rc != Z_STREAM_END || zs.total_out != dst_len)
        throw CorruptError("deflate stream damaged in " + origin);
    return dst;
}

struct ZipEntry {
    std::string name;
    std::uint16_t method = 0;
    std::uint32_t comp_size = 0;
    std::uint32_t uncomp_size = 0;
    std::uint32_t local_offset = 0;
};

std::vector<ZipEntry> zip_directory(const std::vector<unsigned char>& bytes,
                                    const std::string& path) {
    // End-of-central-directory record: scan backward for its signature.
    if (bytes.size() < 22) throw CorruptError("not a zip archive: " + path);
    std::size_t eocd = std::string::npos;
    const std::size_t scan_limit = bytes.size() >= 65558 ? bytes.size() - 65558 : 0;
    for (std::size_t i = bytes.size() - 22; ; --i) {
        if (le32(&bytes[i]) == 0x06054b50) {
            eocd = i;
            break;
        }
        if (i == scan_limit) break;
    }
    if (eocd == std::string::npos) throw CorruptError("zip directory not found: " + path);
    const std::uint16_t count = le16(&bytes[eocd + 10]);
    std::uint32_t offset = le32(&bytes[eocd + 16]);

    std::vector<ZipEntry> entries;
    for (std::uint16_t e = 0; e < count; ++e) {
        if (offset + 46 > bytes.size() || le32(&bytes[offset]) != 0x02014b50)
            throw CorruptError("zip central directory damaged: " + path);
        ZipEntry entry;
        entry.method = le16(&bytes[offset + 10]);
        entry.comp_size = le32(&bytes[offset + 20]);
        entry.uncomp_size = le32(&bytes[offset + 24]);
        const std::uint16_t name_len = le16(&bytes[offset + 28]);
        const std::uint16_t extra_len = le16(&bytes[offset + 30]);
        const std::uint16_t comment_len = le16(&bytes[offset + 32]);
        entry.local_offset = le32(&bytes[offset + 42]);
        if (entry.comp_size == 0xffffffffu || entry.uncomp_size == 0xffffffffu)
            throw CorruptError("zip64 archives not supported: " + path);
        entry.name.assign(reinterpret_cast<const char*>(&bytes[offset + 46]), name_len);
        entries.push_back(std::move(entry));
        offset += 46u + name_len + extra_len + comment_len;
    }
    return entries;
}

std::vector<unsigned char> zip_extract(const std::vector<unsigned char>& bytes,
                                       const ZipEntry& entry, const std::string& path) {
    const std::size_t lo = entry.local_offset;
    if (lo + 30 > bytes.size() || le32(&bytes[lo]) != 0x04034b50)
        throw CorruptError("zip local header damaged: " + path);
    const std::uint16_t name_len = le16(&bytes[lo + 26]);
    const std::uint16_t extra_len = le16(&bytes[lo + 28]);
    const std::size_t data_at = lo + 30 + name_len + extra_len;
    if (data_at + entry.comp_size > bytes.size())
        throw CorruptError("zip entry truncated: " + path);
    if (entry.method == 0) {
        if (entry.comp_size != entry.uncomp_size)
            throw CorruptError("stored zip entry size mismatch: " + path);
        return {bytes.begin() + data_at, bytes.begin() + data_at + entry.comp_size};
    }
    if (entry.method == 8)
        return inflate_raw(&bytes[data_at], entry.comp_size, entry.uncomp_size, path);
    throw CorruptError("unsupported zip compression method " + std::to_string(entry.method) +
                       ": " + path);
}

}  // namespace

NpyArray parse_npy(const std::vector<unsigned char>& bytes, const std::string& origin) {
    static const unsigned char magic[6] = {0x93, 'N', 'U', 'M', 'P', 'Y'};
    if (bytes.size() < 10 || std::memcmp(bytes.data(), magic, 6) != 0)
        throw CorruptError("not an npy array: " + origin);
    const unsigned major = bytes[6];
    std::size_t header_len, header_at;
    if (major == 1) {
        header_len = le16(&bytes[8]);
        header_at = 10;
    } else if (major == 2 || major == 3) {
        if (bytes.size() < 12) throw CorruptError("npy header truncated: " + origin);
        header_len = le32(&bytes[8]);
        header_at = 12;
    } else {
        throw CorruptError("unsupported npy version " + std::to_string(major) + ": " + origin);
    }
    if (header_at + header_len > bytes.size())
        throw CorruptError("npy header truncated: " + origin);
    const std::string header(reinterpret_cast<const char*>(&bytes[header_at]), header_len);

    const std::string descr = dict_value(header, "descr", origin);
    const std::string fortran = dict_value(header, "fortran_order", origin);
    if (fortran.find("True") != std::string::npos)
        throw CorruptError("fortran-ordered npy not supported: " + origin);

    std::size_t elem_size;
    enum { F4, F8, I4, I8 } kind;
    if (descr == "<f4") { kind = F4; elem_size = 4; }
    else if (descr == "<f8") { kind = F8; elem_size = 8; }
    else if (descr == "<i4") { kind = I4; elem_size = 4; }
    else if (descr == "<i8") { kind = I8; elem_size = 8; }
    else throw CorruptError("unsupported npy dtype " + descr + ": " + origin);

    NpyArray arr;
    const std::string shape = dict_value(header, "shape", origin);
    std::size_t pos = 1;  // past '('
    while (pos < shape.size()) {
        while (pos < shape.size() && !isdigit(static_cast<unsigned char>(shape[pos]))) ++pos;
        if (pos >= shape.size()) break;
        std::size_t end = pos;
        while (end < shape.size() && isdigit(static_cast<unsigned char>(shape[end]))) ++end;
        arr.shape.push_back(std::stoull(shape.substr(pos, end - pos)));
        pos = end;
    }
    if (arr.shape.empty()) throw CorruptError("scalar npy not supported: " + origin);

    std::size_t count = 1;
    for (std::size_t d : arr.shape) count *= d;
    const std::size_t data_at = header_at + header_len;
    if (data_at + count * elem_size > bytes.size())
        throw CorruptError("npy data truncated: " + origin);

    arr.data.resize(count);
    const unsigned char* p = &bytes[data_at];
    for (std::size_t i = 0; i < count; ++i, p += elem_size) {
        switch (kind) {
            case F4: {
                float v;
                std::memcpy(&v, p, 4);
                arr.data[i] = v;
                break;
            }
            case F8: {
                double v;
                std::memcpy(&v, p, 8);
                arr.data[i] = v;
                break;
            }
            case I4: {
                std::int32_t v;
                std::memcpy(&v, p, 4);
                arr.data[i] = v;
                break;
            }
            case I8: {
                std::int64_t v;
                std::memcpy(&v, p, 8);
                arr.data[i] = static_cast<double>(v);
                break;
            }
        }
    }
    return arr;
}

NpyArray load_npy(const std::string& path) { return parse_npy(read_file(path), path); }

std::vector<std::string> npz_entries(const std::string& path) {
    const auto bytes = read_file(path);
    std::vector<std::string> names;
    for (const ZipEntry& e : zip_directory(bytes, path)) names.push_back(e.name);
    return names;
}

NpyArray load_npz_entry(const std::string& path, const std::string& key) {
    const auto bytes = read_file(path);
    const auto entries = zip_directory(bytes, path);
    if (entries.empty()) throw CorruptError("empty npz archive: " + path);

    const ZipEntry* pick = nullptr;
    for (const ZipEntry& e : entries) {
        if (e.name == key || e.name == key + ".npy") {
            pick = &e;
            break;
        }
    }
    if (!pick && key.empty()) {
        if (entries.size() == 1) {
            pick = &entries.front();
        } else {
            for (const ZipEntry& e : entries)
                if (e.name == "data.npy" || e.name == "data") pick = &e;
        }
    }
    if (!pick) {
        std::string known;
        for (const ZipEntry& e : entries) known += " " + e.name;
        throw IoError("entry \"" + key + "\" not in " + path + "; archive holds:" + known);
    }
    return parse_npy(zip_extract(bytes, *pick, path), path + ":" + pick->name);
}

}  // namespace m3net
