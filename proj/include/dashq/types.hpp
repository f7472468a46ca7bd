#pragma once

#include "dashq/error.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace dashq {

/// Dense f32 weight matrix, rows = output channels, columns = input channels.
struct WeightMatrix {
    int64_t rows = 0;
    int64_t cols = 0;
    std::vector<float> data; // row-major

    WeightMatrix() = default;
    WeightMatrix(int64_t r, int64_t c) : rows(r), cols(c), data(static_cast<size_t>(r * c), 0.0f) {}
    WeightMatrix(int64_t r, int64_t c, std::vector<float> values);

    float at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * cols + j)]; }
    float& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * cols + j)]; }
    std::span<const float> row(int64_t i) const {
        return {data.data() + i * cols, static_cast<size_t>(cols)};
    }

    void validate() const; // all entries finite
};

/// Quantization hyper-parameters shared by every method.
struct QuantSpec {
    int bits = 4;              // b in [2, 8]
    int64_t group_size = 128;  // g; a row's last group may be a remainder group
    int iters = 9;             // T coordinate-descent iterations (0 = init only)
    double ridge = 1e-2;       // lambda, regularizes s^2
    double smoothing = 0.5;    // alpha in (0, 1]; 1 disables damping
    double scale_floor = 1e-8; // eps_s, lower bound on s
    bool fp16_params = false;  // round stored s, z through half precision

    void validate() const;
};

/// One group's solution: reconstruction is w_hat = s * q - z (offset is
/// applied before scaling, i.e. q = round((w + z) / s)).
struct GroupParams {
    double scale = 0.0;  // s >= eps_s
    double offset = 0.0; // z, full precision
    std::vector<int32_t> codes;
};

/// Per-input-channel diagonal Hessian weights h_jj = sum_k x_jk^2.
/// Accumulation is additive over batches; merging two accumulators is
/// field-wise addition.
struct DiagImportance {
    std::vector<double> h;
    uint64_t sample_count = 0;

    DiagImportance() = default;
    explicit DiagImportance(size_t channels) : h(channels, 0.0) {}

    void merge(const DiagImportance& other);
    double sum() const;
};

/// Sufficient statistics of a group under importance weights h.
struct WeightedMoments {
    double weight_sum = 0.0; // sum h_j
    double mean_w = 0.0;     // weighted mean of w
    double mean_q = 0.0;     // weighted mean of q
    double cov_wq = 0.0;     // sum h_j (q_j - mean_q)(w_j - mean_w)
    double var_q = 0.0;      // sum h_j (q_j - mean_q)^2
};

/// Packed quantized layer: codes bit-packed row-major in one stream, one
/// (scale, zero) pair per group, groups ordered row-major.
struct QuantizedLayer {
    int bits = 4;
    int64_t group_size = 128;
    int64_t d_out = 0;
    int64_t d_in = 0;
    std::vector<uint8_t> packed_codes;
    std::vector<float> scales;
    std::vector<float> zeros;

    int64_t groups_per_row() const { return (d_in + group_size - 1) / group_size; }
    int64_t group_count() const { return d_out * groups_per_row(); }
    int64_t group_begin(int64_t gi) const { return gi * group_size; }
    int64_t group_end(int64_t gi) const {
        return std::min<int64_t>((gi + 1) * group_size, d_in);
    }

    void validate() const;
};

/// w_hat[i][j] = s_G * Q[i][j] - z_G, G = group containing (i, j).
WeightMatrix dequantize_layer(const QuantizedLayer& q);

/// Round an f32 value to the nearest IEEE binary16 value (ties to even) and
/// return it widened back to f32.
float fp16_round(float x);

/// Final per-group parameters: the effective values used to compute codes
/// and the f32 values stored in the container. By default the effective
/// values keep solver precision (f64) and storage is a plain f32 cast; with
/// fp16_params both are rounded through half precision before use, with the
/// scale bumped back to the fp16 quantum when the rounding flushes it.
struct FinalParams {
    double scale;       // effective, used by refine/compensation
    double zero;        // effective offset
    float scale_stored; // container values
    float zero_stored;
};
FinalParams finalize_params(double s, double z, const QuantSpec& spec);

} // namespace dashq
