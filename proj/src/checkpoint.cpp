#include "pathvit/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace pathvit {

namespace {

constexpr char kMagic[4] = {'P', 'V', 'C', 'K'};

template <class U>
void append_le(std::vector<std::uint8_t>& out, U v) {
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.insert(out.end(), buf, buf + sizeof(U));
}

template <class U>
U read_le(const std::vector<std::uint8_t>& in, std::size_t& off, const char* what) {
    if (off + sizeof(U) > in.size()) throw IoError(std::string("checkpoint truncated at ") + what);
    U v;
    std::memcpy(&v, in.data() + off, sizeof(U));
    off += sizeof(U);
    return v;
}

std::string read_string(const std::vector<std::uint8_t>& in, std::size_t& off, std::size_t len, const char* what) {
    if (off + len > in.size()) throw IoError(std::string("checkpoint truncated at ") + what);
    std::string s(reinterpret_cast<const char*>(in.data() + off), len);
    off += len;
    return s;
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& c) {
    std::vector<std::uint8_t> out;
    out.insert(out.end(), kMagic, kMagic + 4);
    append_le<std::uint32_t>(out, c.format_version);
    append_le<std::uint64_t>(out, c.config_text.size());
    out.insert(out.end(), c.config_text.begin(), c.config_text.end());
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(c.tensors.size()));

    // First pass sizes the table so payload offsets are absolute.
    std::size_t table_bytes = 0;
    for (const auto& [name, t] : c.tensors) {
        table_bytes += 4 + name.size() + 4 + 4 + 8 * t.shape.size() + 8;
    }
    std::uint64_t offset = out.size() + table_bytes;
    for (const auto& [name, t] : c.tensors) {
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        out.push_back(static_cast<std::uint8_t>(t.precision));
        out.push_back(0);
        out.push_back(0);
        out.push_back(0);
        append_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
        for (std::size_t e : t.shape) append_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
        append_le<std::uint64_t>(out, offset);
        const std::size_t expect = t.element_count() * t.element_size();
        if (t.bytes.size() != expect) {
            throw IoError("checkpoint tensor '" + name + "' payload does not match its extents");
        }
        offset += t.bytes.size();
    }
    for (const auto& [name, t] : c.tensors) {
        (void)name;
        out.insert(out.end(), t.bytes.begin(), t.bytes.end());
    }
    return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& in) {
    std::size_t off = 0;
    if (in.size() < 4 || std::memcmp(in.data(), kMagic, 4) != 0) throw IoError("not a checkpoint file");
    off = 4;
    Checkpoint c;
    c.format_version = read_le<std::uint32_t>(in, off, "version");
    if (c.format_version != kCheckpointFormatVersion) {
        throw IoError("unsupported checkpoint format version " + std::to_string(c.format_version));
    }
    const auto cfg_len = read_le<std::uint64_t>(in, off, "config length");
    c.config_text = read_string(in, off, static_cast<std::size_t>(cfg_len), "config blob");
    const auto count = read_le<std::uint32_t>(in, off, "tensor count");
    struct Entry {
        std::string name;
        TensorData data;
        std::uint64_t offset;
    };
    std::vector<Entry> entries;
    for (std::uint32_t i = 0; i < count; ++i) {
        Entry e;
        const auto name_len = read_le<std::uint32_t>(in, off, "name length");
        e.name = read_string(in, off, name_len, "name");
        if (off + 4 > in.size()) throw IoError("checkpoint truncated at precision tag");
        const std::uint8_t tag = in[off];
        if (tag > 1) throw IoError("checkpoint tensor '" + e.name + "' has unknown precision tag");
        e.data.precision = static_cast<Precision>(tag);
        off += 4;
        const auto rank = read_le<std::uint32_t>(in, off, "rank");
        if (rank > 8) throw IoError("checkpoint tensor '" + e.name + "' has implausible rank");
        e.data.shape.resize(rank);
        for (std::uint32_t r = 0; r < rank; ++r) {
            e.data.shape[r] = static_cast<std::size_t>(read_le<std::uint64_t>(in, off, "extent"));
        }
        e.offset = read_le<std::uint64_t>(in, off, "payload offset");
        entries.push_back(std::move(e));
    }
    for (Entry& e : entries) {
        const std::size_t len = e.data.element_count() * e.data.element_size();
        if (e.offset + len > in.size()) {
            throw IoError("checkpoint tensor '" + e.name + "' payload out of range");
        }
        e.data.bytes.assign(in.begin() + static_cast<std::ptrdiff_t>(e.offset),
                            in.begin() + static_cast<std::ptrdiff_t>(e.offset + len));
        c.tensors.emplace_back(std::move(e.name), std::move(e.data));
    }
    return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& c) {
    const auto bytes = serialize_checkpoint(c);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open checkpoint for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("checkpoint write failed: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes);
}

}  // namespace pathvit
