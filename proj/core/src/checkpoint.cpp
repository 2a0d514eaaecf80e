#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "obidet/errors.hpp"
#include "obidet/net.hpp"

namespace obidet {

namespace {

constexpr std::array<char, 8> kMagic = {'O', 'B', 'I', 'D', 'E', 'T', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

void put_u32le(std::ofstream& out, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32le(const unsigned char* b) {
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

std::uint64_t to_le_bits(double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    return bits;
}

double from_le_bits(std::uint64_t bits) {
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const ExtractorParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("save_checkpoint: cannot open " + path.string());
    out.write(kMagic.data(), kMagic.size());
    put_u32le(out, kVersion);
    put_u32le(out, static_cast<std::uint32_t>(params.layout.num_sizes));
    std::vector<std::uint64_t> buf(params.flat.size());
    for (std::size_t i = 0; i < params.flat.size(); ++i) buf[i] = to_le_bits(params.flat[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (!out) throw InputError("save_checkpoint: write failed for " + path.string());
}

ExtractorParams load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("load_checkpoint: cannot open " + path.string());
    unsigned char header[16];
    in.read(reinterpret_cast<char*>(header), 16);
    if (in.gcount() != 16) throw FormatError(path.string(), 0, "truncated checkpoint header");
    if (std::memcmp(header, kMagic.data(), 8) != 0)
        throw FormatError(path.string(), 0, "bad checkpoint magic");
    const std::uint32_t version = get_u32le(header + 8);
    if (version != kVersion)
        throw FormatError(path.string(), 8, "unsupported checkpoint version " + std::to_string(version));
    const std::uint32_t num_sizes = get_u32le(header + 12);
    if (num_sizes < 1 || num_sizes > 64)
        throw FormatError(path.string(), 12, "implausible anchor size count");

    ExtractorParams params(static_cast<int>(num_sizes));
    std::vector<std::uint64_t> buf(params.flat.size());
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * 8));
    if (in.gcount() != static_cast<std::streamsize>(buf.size() * 8))
        throw FormatError(path.string(), 16, "truncated checkpoint payload");
    for (std::size_t i = 0; i < buf.size(); ++i) params.flat[i] = from_le_bits(buf[i]);
    return params;
}

}  // namespace obidet
