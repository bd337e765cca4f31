#include <cstring>
#include <fstream>

#include "pathvit/tensor.hpp"

namespace pathvit {

namespace {

constexpr char kMagic[4] = {'P', 'V', 'T', '1'};

template <class U>
void append_le(std::vector<std::uint8_t>& out, U v) {
    std::uint8_t buf[sizeof(U)];
    std::memcpy(buf, &v, sizeof(U));
    out.insert(out.end(), buf, buf + sizeof(U));
}

template <class U>
U read_le(const std::uint8_t* data, std::size_t size, std::size_t& offset, const char* what) {
    if (offset + sizeof(U) > size) throw IoError(std::string("tensor record truncated at ") + what);
    U v;
    std::memcpy(&v, data + offset, sizeof(U));
    offset += sizeof(U);
    return v;
}

}  // namespace

void append_tensor_record(std::vector<std::uint8_t>& out, const TensorData& t) {
    out.insert(out.end(), kMagic, kMagic + 4);
    out.push_back(static_cast<std::uint8_t>(t.precision));
    out.push_back(0);
    out.push_back(0);
    out.push_back(0);
    append_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
    for (std::size_t e : t.shape) append_le<std::uint64_t>(out, static_cast<std::uint64_t>(e));
    const std::size_t expect = t.element_count() * t.element_size();
    if (t.bytes.size() != expect) throw IoError("tensor record payload does not match its extents");
    out.insert(out.end(), t.bytes.begin(), t.bytes.end());
}

TensorData parse_tensor_record(const std::uint8_t* data, std::size_t size, std::size_t& offset) {
    if (offset + 8 > size || std::memcmp(data + offset, kMagic, 4) != 0) {
        throw IoError("bad tensor record magic");
    }
    TensorData t;
    const std::uint8_t tag = data[offset + 4];
    if (tag > 1) throw IoError("unknown tensor precision tag " + std::to_string(tag));
    t.precision = static_cast<Precision>(tag);
    offset += 8;
    const auto rank = read_le<std::uint32_t>(data, size, offset, "rank");
    if (rank > 8) throw IoError("implausible tensor rank " + std::to_string(rank));
    t.shape.resize(rank);
    for (std::uint32_t i = 0; i < rank; ++i) {
        t.shape[i] = static_cast<std::size_t>(read_le<std::uint64_t>(data, size, offset, "extent"));
    }
    const std::size_t payload = t.element_count() * t.element_size();
    if (offset + payload > size) throw IoError("tensor record payload truncated");
    t.bytes.assign(data + offset, data + offset + payload);
    offset += payload;
    return t;
}

void write_tensor_file(const std::string& path, const TensorData& t) {
    std::vector<std::uint8_t> out;
    append_tensor_record(out, t);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("write failed: " + path);
}

TensorData read_tensor_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    std::size_t offset = 0;
    TensorData t = parse_tensor_record(bytes.data(), bytes.size(), offset);
    if (offset != bytes.size()) throw IoError("trailing bytes after tensor record: " + path);
    return t;
}

}  // namespace pathvit
