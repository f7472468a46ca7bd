#include "dashq/tensor_bundle.hpp"

#include <json.hpp>

#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace dashq {

namespace {

using nlohmann::json;

constexpr size_t kAlign = 8;

size_t align_up(size_t n) { return (n + kAlign - 1) / kAlign * kAlign; }

template <typename T>
std::span<const T> typed_view(const Tensor& t, Dtype expect) {
    if (t.dtype != expect) {
        throw ValidationError(std::string("tensor dtype is ") + dtype_name(t.dtype) +
                              ", expected " + dtype_name(expect));
    }
    return {reinterpret_cast<const T*>(t.payload.data()), t.payload.size() / sizeof(T)};
}

template <typename T>
Tensor make_tensor(Dtype dt, std::vector<int64_t> shape, std::span<const T> values) {
    Tensor t;
    t.dtype = dt;
    t.shape = std::move(shape);
    t.payload.resize(values.size() * sizeof(T));
    if (!values.empty()) {
        std::memcpy(t.payload.data(), values.data(), t.payload.size());
    }
    t.validate();
    return t;
}

bool payload_all_finite(const Tensor& t) {
    if (t.dtype == Dtype::f32) {
        for (float v : t.as_f32()) {
            if (!std::isfinite(v)) return false;
        }
    } else if (t.dtype == Dtype::f64) {
        for (double v : t.as_f64()) {
            if (!std::isfinite(v)) return false;
        }
    }
    return true;
}

} // namespace

size_t dtype_size(Dtype dt) {
    switch (dt) {
        case Dtype::f32: return 4;
        case Dtype::f64: return 8;
        case Dtype::u8: return 1;
        case Dtype::i64: return 8;
    }
    throw ValidationError("unknown dtype");
}

const char* dtype_name(Dtype dt) {
    switch (dt) {
        case Dtype::f32: return "f32";
        case Dtype::f64: return "f64";
        case Dtype::u8: return "u8";
        case Dtype::i64: return "i64";
    }
    throw ValidationError("unknown dtype");
}

Dtype dtype_from_name(const std::string& name) {
    if (name == "f32") return Dtype::f32;
    if (name == "f64") return Dtype::f64;
    if (name == "u8") return Dtype::u8;
    if (name == "i64") return Dtype::i64;
    throw ValidationError("unknown dtype '" + name + "'");
}

size_t Tensor::element_count() const {
    size_t n = 1;
    for (int64_t e : shape) {
        if (e < 0) throw ValidationError("negative extent in tensor shape");
        n *= static_cast<size_t>(e);
    }
    return n;
}

void Tensor::validate() const {
    if (payload.size() != element_count() * dtype_size(dtype)) {
        throw ValidationError("tensor payload length does not match shape and dtype");
    }
}

std::span<const float> Tensor::as_f32() const { return typed_view<float>(*this, Dtype::f32); }
std::span<const double> Tensor::as_f64() const { return typed_view<double>(*this, Dtype::f64); }
std::span<const uint8_t> Tensor::as_u8() const { return typed_view<uint8_t>(*this, Dtype::u8); }
std::span<const int64_t> Tensor::as_i64() const { return typed_view<int64_t>(*this, Dtype::i64); }

Tensor Tensor::f32(std::vector<int64_t> shape, std::span<const float> values) {
    return make_tensor(Dtype::f32, std::move(shape), values);
}
Tensor Tensor::f64(std::vector<int64_t> shape, std::span<const double> values) {
    return make_tensor(Dtype::f64, std::move(shape), values);
}
Tensor Tensor::u8(std::vector<int64_t> shape, std::span<const uint8_t> values) {
    return make_tensor(Dtype::u8, std::move(shape), values);
}
Tensor Tensor::i64(std::vector<int64_t> shape, std::span<const int64_t> values) {
    return make_tensor(Dtype::i64, std::move(shape), values);
}

void TensorBundle::put(const std::string& name, Tensor t) {
    if (name.empty()) throw ValidationError("tensor name must be non-empty");
    t.validate();
    entries_[name] = std::move(t);
}

const Tensor& TensorBundle::at(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) throw ValidationError("bundle has no tensor named '" + name + "'");
    return it->second;
}

std::vector<std::string> TensorBundle::names_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (auto it = entries_.lower_bound(prefix); it != entries_.end(); ++it) {
        if (it->first.compare(0, prefix.size(), prefix) != 0) break;
        out.push_back(it->first);
    }
    return out;
}

void bundle_write(const TensorBundle& bundle, std::ostream& out, bool strict) {
    json header = json::object();
    size_t offset = 0;
    for (const auto& [name, t] : bundle) {
        t.validate();
        if (strict && !payload_all_finite(t)) {
            throw ValidationError("strict mode: tensor '" + name + "' has non-finite entries");
        }
        header[name] = {{"dtype", dtype_name(t.dtype)},
                        {"shape", t.shape},
                        {"offset", offset},
                        {"nbytes", t.nbytes()}};
        offset = align_up(offset + t.nbytes());
    }

    const std::string text = header.dump();
    uint64_t n = text.size();
    uint8_t len_le[8];
    for (int i = 0; i < 8; ++i) len_le[i] = static_cast<uint8_t>((n >> (8 * i)) & 0xFF);
    out.write(reinterpret_cast<const char*>(len_le), 8);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));

    size_t pos = 8 + text.size();
    static const char zeros[kAlign] = {};
    out.write(zeros, static_cast<std::streamsize>(align_up(pos) - pos));

    size_t cursor = 0;
    for (const auto& [name, t] : bundle) {
        (void)name;
        out.write(zeros, static_cast<std::streamsize>(align_up(cursor) - cursor));
        cursor = align_up(cursor);
        out.write(reinterpret_cast<const char*>(t.payload.data()),
                  static_cast<std::streamsize>(t.payload.size()));
        cursor += t.payload.size();
    }
    if (!out) throw ValidationError("bundle_write: stream write failure");
}

void bundle_write_file(const TensorBundle& bundle, const std::string& path, bool strict) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ValidationError("cannot open '" + path + "' for writing");
    bundle_write(bundle, f, strict);
}

TensorBundle bundle_read(std::istream& in) {
    uint8_t len_le[8];
    in.read(reinterpret_cast<char*>(len_le), 8);
    if (in.gcount() != 8) throw ValidationError("bundle_read: stream shorter than 8-byte header length");
    uint64_t n = 0;
    for (int i = 0; i < 8; ++i) n |= static_cast<uint64_t>(len_le[i]) << (8 * i);

    std::string text(n, '\0');
    in.read(text.data(), static_cast<std::streamsize>(n));
    if (static_cast<uint64_t>(in.gcount()) != n) {
        throw ValidationError("bundle_read: truncated JSON header");
    }

    json header;
    try {
        header = json::parse(text);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bundle_read: malformed JSON header: ") + e.what());
    }
    if (!header.is_object()) throw ValidationError("bundle_read: header is not a JSON object");

    // skip header padding, then slurp the data section
    const size_t pos = 8 + static_cast<size_t>(n);
    in.ignore(static_cast<std::streamsize>(align_up(pos) - pos));
    std::vector<uint8_t> data{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};

    TensorBundle bundle;
    for (const auto& [name, meta] : header.items()) {
        if (!meta.is_object() || !meta.contains("dtype") || !meta.contains("shape") ||
            !meta.contains("offset") || !meta.contains("nbytes")) {
            throw ValidationError("bundle_read: incomplete header entry for '" + name + "'");
        }
        Tensor t;
        t.dtype = dtype_from_name(meta["dtype"].get<std::string>());
        t.shape = meta["shape"].get<std::vector<int64_t>>();
        const uint64_t offset = meta["offset"].get<uint64_t>();
        const uint64_t nbytes = meta["nbytes"].get<uint64_t>();
        if (nbytes != t.element_count() * dtype_size(t.dtype)) {
            throw ValidationError("bundle_read: header/payload length mismatch for '" + name + "'");
        }
        if (offset + nbytes > data.size()) {
            throw ValidationError("bundle_read: truncated payload for '" + name + "'");
        }
        t.payload.assign(data.begin() + static_cast<ptrdiff_t>(offset),
                         data.begin() + static_cast<ptrdiff_t>(offset + nbytes));
        bundle.put(name, std::move(t));
    }
    return bundle;
}

TensorBundle bundle_read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw ValidationError("cannot open '" + path + "' for reading");
    return bundle_read(f);
}

} // namespace dashq
