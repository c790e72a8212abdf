#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace qhd::detail {

// Little-endian encoding independent of host byte order.

template <typename UInt>
void write_le(std::ostream& out, UInt value) {
    static_assert(std::is_unsigned_v<UInt>);
    char bytes[sizeof(UInt)];
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        bytes[i] = static_cast<char>((value >> (8 * i)) & 0xFFu);
    }
    out.write(bytes, sizeof(UInt));
}

inline void write_f64(std::ostream& out, double value) {
    write_le(out, std::bit_cast<std::uint64_t>(value));
}

inline void write_f64s(std::ostream& out, std::span<const double> values) {
    for (double v : values) write_f64(out, v);
}

inline void write_magic(std::ostream& out, std::string_view magic) {
    out.write(magic.data(), static_cast<std::streamsize>(magic.size()));
}

template <typename UInt>
UInt read_le(std::istream& in) {
    static_assert(std::is_unsigned_v<UInt>);
    unsigned char bytes[sizeof(UInt)];
    if (!in.read(reinterpret_cast<char*>(bytes), sizeof(UInt))) {
        throw std::runtime_error("unexpected end of file");
    }
    UInt value = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) {
        value |= static_cast<UInt>(bytes[i]) << (8 * i);
    }
    return value;
}

inline double read_f64(std::istream& in) { return std::bit_cast<double>(read_le<std::uint64_t>(in)); }

inline void read_f64s(std::istream& in, std::span<double> values) {
    for (double& v : values) v = read_f64(in);
}

inline void expect_magic(std::istream& in, std::string_view magic) {
    std::string got(magic.size(), '\0');
    if (!in.read(got.data(), static_cast<std::streamsize>(got.size())) || got != magic) {
        throw std::runtime_error("bad magic: expected \"" + std::string(magic) + "\"");
    }
}

inline void expect_eof(std::istream& in) {
    if (in.peek() != std::char_traits<char>::eof()) {
        throw std::runtime_error("trailing bytes after payload");
    }
}

}  // namespace qhd::detail
