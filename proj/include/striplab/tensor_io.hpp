#pragma once

// TSR1 tensor files: an ASCII header line `TSR1 <ndim> <ext0> ... <extN-1>\n`
// followed by little-endian IEEE-754 doubles in row-major order.

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "striplab/tensor.hpp"

namespace striplab {

/// Malformed or unreadable tensor file. The message names the file when known.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::uint64_t to_little_endian(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) {
        return v;
    } else {
        std::uint64_t r = 0;
        for (int i = 0; i < 8; ++i) r |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return r;
    }
}

/// Next header token as a positive decimal integer; signs and other characters are rejected.
inline std::size_t read_positive(std::istream& hs, const char* what) {
    std::string tok;
    const auto fail = [&] { return FormatError(std::string("TSR1: bad ") + what + " '" + tok + "'"); };
    if (!(hs >> tok) || tok.find_first_not_of("0123456789") != std::string::npos) throw fail();
    std::size_t v = 0;
    try {
        v = std::stoull(tok);
    } catch (const std::out_of_range&) {
        throw fail();
    }
    if (v == 0) throw fail();
    return v;
}

}  // namespace detail

inline void write_tsr1(std::ostream& os, const Tensor& t) {
    os << "TSR1 " << t.rank();
    for (std::size_t e : t.shape()) os << ' ' << e;
    os << '\n';
    for (double v : t.data()) {
        const std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(v));
        char buf[8];
        std::memcpy(buf, &bits, 8);
        os.write(buf, 8);
    }
    if (!os) throw FormatError("TSR1: write failed");
}

inline Tensor read_tsr1(std::istream& is) {
    std::string header;
    if (!std::getline(is, header)) throw FormatError("TSR1: missing header line");
    std::istringstream hs(header);
    std::string magic;
    if (!(hs >> magic) || magic != "TSR1") throw FormatError("TSR1: bad magic");
    const std::size_t ndim = detail::read_positive(hs, "rank");
    Shape shape(ndim);
    std::size_t n = 1;
    for (auto& e : shape) {
        e = detail::read_positive(hs, "extent");
        if (n > std::numeric_limits<std::size_t>::max() / 8 / e) throw FormatError("TSR1: element count overflows");
        n *= e;
    }
    std::string trailing;
    if (hs >> trailing) throw FormatError("TSR1: trailing header tokens");

    // Grow with the payload so a corrupt header cannot force a huge allocation.
    std::vector<double> data;
    data.reserve(std::min<std::size_t>(n, std::size_t{1} << 16));
    for (std::size_t i = 0; i < n; ++i) {
        char buf[8];
        if (!is.read(buf, 8)) throw FormatError("TSR1: truncated payload");
        std::uint64_t bits;
        std::memcpy(&bits, buf, 8);
        data.push_back(std::bit_cast<double>(detail::to_little_endian(bits)));
    }
    if (is.peek() != std::char_traits<char>::eof()) throw FormatError("TSR1: trailing bytes after payload");
    return Tensor(std::move(shape), std::move(data));
}

inline void save_tsr1(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError(path.string() + ": cannot open for writing");
    try {
        write_tsr1(os, t);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline Tensor load_tsr1(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError(path.string() + ": cannot open");
    try {
        return read_tsr1(is);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace striplab
