#include "dashq/types.hpp"

#include "dashq/packing.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <string>

namespace dashq {

WeightMatrix::WeightMatrix(int64_t r, int64_t c, std::vector<float> values)
    : rows(r), cols(c), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(r) * static_cast<size_t>(c)) {
        throw ValidationError("WeightMatrix: value count does not match rows*cols");
    }
    validate();
}

void WeightMatrix::validate() const {
    for (float v : data) {
        if (!std::isfinite(v)) throw ValidationError("WeightMatrix: non-finite entry");
    }
}

void QuantSpec::validate() const {
    if (bits < 2 || bits > 8) throw ValidationError("QuantSpec: bits must be in [2, 8]");
    if (group_size < 1) throw ValidationError("QuantSpec: group_size must be positive");
    if (iters < 0) throw ValidationError("QuantSpec: iters must be non-negative");
    if (!(ridge >= 0.0)) throw ValidationError("QuantSpec: ridge must be >= 0");
    if (!(smoothing > 0.0 && smoothing <= 1.0)) {
        throw ValidationError("QuantSpec: smoothing must be in (0, 1]");
    }
    if (!(scale_floor > 0.0)) throw ValidationError("QuantSpec: scale_floor must be positive");
}

void DiagImportance::merge(const DiagImportance& other) {
    if (other.h.size() != h.size()) throw ValidationError("DiagImportance: channel count mismatch");
    for (size_t j = 0; j < h.size(); ++j) h[j] += other.h[j];
    sample_count += other.sample_count;
}

double DiagImportance::sum() const {
    double s = 0.0;
    for (double v : h) s += v;
    return s;
}

void QuantizedLayer::validate() const {
    if (bits < 2 || bits > 8) throw ValidationError("QuantizedLayer: bits out of range");
    if (group_size < 1 || d_out < 0 || d_in < 0) {
        throw ValidationError("QuantizedLayer: bad dimensions");
    }
    const auto n_groups = static_cast<size_t>(group_count());
    if (scales.size() != n_groups || zeros.size() != n_groups) {
        throw ValidationError("QuantizedLayer: group parameter count mismatch");
    }
    if (packed_codes.size() != packed_size(static_cast<size_t>(d_out * d_in), bits)) {
        throw ValidationError("QuantizedLayer: packed code length mismatch");
    }
}

WeightMatrix dequantize_layer(const QuantizedLayer& q) {
    q.validate();
    const auto codes = unpack_codes(q.packed_codes, q.bits, static_cast<size_t>(q.d_out * q.d_in));
    const int64_t gpr = q.groups_per_row();
    WeightMatrix w(q.d_out, q.d_in);
    for (int64_t i = 0; i < q.d_out; ++i) {
        for (int64_t j = 0; j < q.d_in; ++j) {
            const int64_t g = i * gpr + j / q.group_size;
            const double s = q.scales[static_cast<size_t>(g)];
            const double z = q.zeros[static_cast<size_t>(g)];
            w.at(i, j) = static_cast<float>(s * codes[static_cast<size_t>(i * q.d_in + j)] - z);
        }
    }
    return w;
}

float fp16_round(float x) {
    if (!std::isfinite(x) || x == 0.0f) return x;
    const double ax = std::fabs(static_cast<double>(x));
    int e = 0;
    std::frexp(ax, &e); // ax = m * 2^e with m in [0.5, 1)
    // binary16: 11-bit significand, subnormal quantum 2^-24
    const int ulp_exp = std::max(e - 11, -24);
    const double ulp = std::ldexp(1.0, ulp_exp);
    const double r = std::nearbyint(ax / ulp) * ulp;
    if (r > 65504.0) {
        return std::copysign(std::numeric_limits<float>::infinity(), x);
    }
    return std::copysign(static_cast<float>(r), x);
}

FinalParams finalize_params(double s, double z, const QuantSpec& spec) {
    if (!spec.fp16_params) {
        return {s, z, static_cast<float>(s), static_cast<float>(z)};
    }
    float sf = fp16_round(static_cast<float>(s));
    const float zf = fp16_round(static_cast<float>(z));
    const float fp16_min = std::ldexp(1.0f, -24);
    if (sf < fp16_min) sf = fp16_min;
    return {static_cast<double>(sf), static_cast<double>(zf), sf, zf};
}

} // namespace dashq
