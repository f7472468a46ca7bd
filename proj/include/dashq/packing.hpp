#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace dashq {

/// Pack integer codes into a dense bitstream, LSB-first within each byte and
/// contiguous across byte boundaries. The final partial byte is zero-padded
/// in its high bits. `bits` must be in [1, 8] and every code in [0, 2^bits - 1].
std::vector<uint8_t> pack_codes(std::span<const int32_t> codes, int bits);

/// Exact inverse of pack_codes for the first `count` codes.
std::vector<int32_t> unpack_codes(std::span<const uint8_t> bytes, int bits, size_t count);

/// Number of bytes pack_codes produces for `count` codes.
size_t packed_size(size_t count, int bits);

} // namespace dashq
