#pragma once

/**
 * TensorBundle: named dense tensors in one deterministic binary container.
 *
 * File layout (extension .dqb):
 *   [0..8)    little-endian u64: byte length N of the JSON header
 *   [8..8+N)  UTF-8 JSON header: { name: {dtype, shape, offset, nbytes}, ... }
 *   padding   zero bytes up to the next multiple of 8 from file start
 *   payloads  raw little-endian row-major tensor bytes; each tensor starts at
 *             data_start + offset, offsets are multiples of 8 (zero padding
 *             between tensors), assigned in lexicographic name order
 *
 * Serialization is a pure function of the bundle contents, so writing the
 * same bundle twice yields byte-identical files.
 */

#include "dashq/error.hpp"

#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace dashq {

enum class Dtype : uint8_t { f32, f64, u8, i64 };

size_t dtype_size(Dtype dt);
const char* dtype_name(Dtype dt);
Dtype dtype_from_name(const std::string& name);

struct Tensor {
    Dtype dtype = Dtype::f32;
    std::vector<int64_t> shape; // non-negative extents, row-major
    std::vector<uint8_t> payload;

    size_t element_count() const;
    size_t nbytes() const { return payload.size(); }

    // Typed element views; dtype must match.
    std::span<const float> as_f32() const;
    std::span<const double> as_f64() const;
    std::span<const uint8_t> as_u8() const;
    std::span<const int64_t> as_i64() const;

    static Tensor f32(std::vector<int64_t> shape, std::span<const float> values);
    static Tensor f64(std::vector<int64_t> shape, std::span<const double> values);
    static Tensor u8(std::vector<int64_t> shape, std::span<const uint8_t> values);
    static Tensor i64(std::vector<int64_t> shape, std::span<const int64_t> values);

    // payload length must equal element_count() * dtype_size(dtype)
    void validate() const;
};

class TensorBundle {
public:
    using Map = std::map<std::string, Tensor>; // sorted: fixes the payload order

    void put(const std::string& name, Tensor t);
    bool contains(const std::string& name) const { return entries_.count(name) != 0; }
    const Tensor& at(const std::string& name) const;
    size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }

    Map::const_iterator begin() const { return entries_.begin(); }
    Map::const_iterator end() const { return entries_.end(); }

    /// All entry names with the given prefix, in lexicographic order.
    std::vector<std::string> names_with_prefix(const std::string& prefix) const;

private:
    Map entries_;
};

/// Serialize per the layout above. With strict=true, non-finite f32/f64
/// entries are rejected.
void bundle_write(const TensorBundle& bundle, std::ostream& out, bool strict = false);
void bundle_write_file(const TensorBundle& bundle, const std::string& path, bool strict = false);

/// Inverse of bundle_write: read(write(b)) == b for every valid bundle.
TensorBundle bundle_read(std::istream& in);
TensorBundle bundle_read_file(const std::string& path);

} // namespace dashq
