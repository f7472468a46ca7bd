#include "dashq/packing.hpp"

#include "dashq/error.hpp"

#include <string>

namespace dashq {

namespace {

void check_bits(int bits) {
    if (bits < 1 || bits > 8) {
        throw ValidationError("pack_codes: bits must be in [1, 8], got " + std::to_string(bits));
    }
}

} // namespace

size_t packed_size(size_t count, int bits) {
    check_bits(bits);
    return (count * static_cast<size_t>(bits) + 7) / 8;
}

std::vector<uint8_t> pack_codes(std::span<const int32_t> codes, int bits) {
    check_bits(bits);
    const int32_t max_code = (1 << bits) - 1;
    std::vector<uint8_t> out(packed_size(codes.size(), bits), 0);
    size_t bitpos = 0;
    for (int32_t c : codes) {
        if (c < 0 || c > max_code) {
            throw ValidationError("pack_codes: code " + std::to_string(c) + " out of range [0, " +
                                  std::to_string(max_code) + "]");
        }
        const size_t byte = bitpos >> 3;
        const unsigned shift = bitpos & 7;
        out[byte] |= static_cast<uint8_t>((static_cast<uint32_t>(c) << shift) & 0xFFu);
        if (shift + static_cast<unsigned>(bits) > 8) {
            // code spans into the next byte (bits <= 8, so at most one spill)
            out[byte + 1] |= static_cast<uint8_t>(static_cast<uint32_t>(c) >> (8 - shift));
        }
        bitpos += static_cast<size_t>(bits);
    }
    return out;
}

std::vector<int32_t> unpack_codes(std::span<const uint8_t> bytes, int bits, size_t count) {
    check_bits(bits);
    if (bytes.size() < packed_size(count, bits)) {
        throw ValidationError("unpack_codes: byte stream too short for " + std::to_string(count) +
                              " codes at " + std::to_string(bits) + " bits");
    }
    const uint32_t mask = (1u << bits) - 1u;
    std::vector<int32_t> out(count);
    size_t bitpos = 0;
    for (size_t i = 0; i < count; ++i) {
        const size_t byte = bitpos >> 3;
        const unsigned shift = bitpos & 7;
        uint32_t v = static_cast<uint32_t>(bytes[byte]) >> shift;
        if (shift + static_cast<unsigned>(bits) > 8) {
            v |= static_cast<uint32_t>(bytes[byte + 1]) << (8 - shift);
        }
        out[i] = static_cast<int32_t>(v & mask);
        bitpos += static_cast<size_t>(bits);
    }
    return out;
}

} // namespace dashq
