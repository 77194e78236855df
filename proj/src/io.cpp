#include "calibseg/io.hpp"

#include "calibseg/error.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace calibseg::io {

namespace {

constexpr std::array<char, 4> kFieldMagic{'C', 'S', 'G', '1'};
constexpr std::array<char, 4> kLabelMagic{'C', 'S', 'L', '1'};

template <typename UInt>
void put_le(std::ostream& out, UInt v) {
    std::array<char, sizeof(UInt)> bytes{};
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
    }
    out.write(bytes.data(), bytes.size());
}

template <typename UInt>
UInt get_le(std::istream& in, const char* what) {
    std::array<unsigned char, sizeof(UInt)> bytes{};
    if (!in.read(reinterpret_cast<char*>(bytes.data()), bytes.size())) {
        throw FormatError(std::string("truncated file while reading ") + what);
    }
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        v |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return v;
}

struct Header {
    std::uint32_t height;
    std::uint32_t width;
    std::uint32_t channels;
};

void write_header(std::ostream& out, const std::array<char, 4>& magic, std::size_t h, std::size_t w,
                  std::size_t k) {
    out.write(magic.data(), magic.size());
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(h));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(w));
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(k));
}

Header read_header(std::istream& in, const std::array<char, 4>& magic, const char* kind) {
    std::array<char, 4> got{};
    if (!in.read(got.data(), got.size())) {
        throw FormatError(std::string("truncated ") + kind + " header");
    }
    if (got != magic) {
        throw FormatError(std::string("bad magic for ") + kind + " file: expected \"" +
                          std::string(magic.begin(), magic.end()) + "\"");
    }
    Header h{get_le<std::uint32_t>(in, "height"), get_le<std::uint32_t>(in, "width"),
             get_le<std::uint32_t>(in, "channel count")};
    if (h.height == 0 || h.width == 0 || h.channels == 0) {
        throw FormatError(std::string(kind) + " header has a zero dimension");
    }
    return h;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error("cannot open " + path.string() + " for writing");
    }
    return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot open " + path.string());
    }
    return in;
}

}  // namespace

void write_field(std::ostream& out, const Field& field) {
    write_header(out, kFieldMagic, field.height(), field.width(), field.channels());
    for (double v : field.values()) {
        put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

Field read_field(std::istream& in) {
    const Header h = read_header(in, kFieldMagic, "field");
    std::vector<double> values(std::size_t{h.height} * h.width * h.channels);
    for (double& v : values) {
        v = std::bit_cast<double>(get_le<std::uint64_t>(in, "field payload"));
    }
    return {h.height, h.width, h.channels, std::move(values)};
}

void write_labels(std::ostream& out, const LabelMap& labels) {
    write_header(out, kLabelMagic, labels.height(), labels.width(), labels.num_classes());
    for (ClassId v : labels.values()) {
        put_le<std::uint16_t>(out, v);
    }
}

LabelMap read_labels(std::istream& in) {
    const Header h = read_header(in, kLabelMagic, "label");
    std::vector<ClassId> values(std::size_t{h.height} * h.width);
    for (ClassId& v : values) {
        v = get_le<std::uint16_t>(in, "label payload");
    }
    try {
        return {h.height, h.width, h.channels, std::move(values)};
    } catch (const InvalidInput& e) {
        throw FormatError(std::string("invalid label file: ") + e.what());
    }
}

void save_field(const std::filesystem::path& path, const Field& field) {
    auto out = open_out(path);
    write_field(out, field);
}

Field load_field(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_field(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void save_labels(const std::filesystem::path& path, const LabelMap& labels) {
    auto out = open_out(path);
    write_labels(out, labels);
}

LabelMap load_labels(const std::filesystem::path& path) {
    auto in = open_in(path);
    try {
        return read_labels(in);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace calibseg::io
