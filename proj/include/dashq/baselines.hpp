#pragma once

#include "dashq/calibration.hpp"
#include "dashq/types.hpp"

namespace dashq {

/// Round-to-nearest min-max affine quantization, per group: the same
/// (s0, z0) initialization as the solver followed by one code refinement.
QuantizedLayer quantize_rtn(const WeightMatrix& w, const QuantSpec& spec, int threads = 1);

struct GptqConfig {
    int64_t block_size = 128; // columns per lazy-update block
    double damp_ratio = 0.01; // fraction of mean(diag(H)) added to the diagonal
    QuantSpec spec;
};

/// Snapshot of row 0's working weights after each column is processed
/// (within-block state; columns past the current block are pending their
/// lazy flush). Used by tests to check the compensation against a dense
/// conditional-minimizer solve.
struct GptqRowTrace {
    std::vector<std::vector<double>> states;
};

/// Greedy second-order compensation: columns are quantized left to right on
/// per-group grids fixed from the original weights, and each column's
/// quantization error is propagated into the remaining columns via
///
///     dw = -((w_j - w_hat_j) / [H_F^-1]_jj) * [H_F^-1]_{j, j+1:}
///
/// where H_F is the damped Hessian restricted to the not-yet-quantized
/// columns (computed once through the Cholesky factor of H^-1). After each
/// column, the remaining continuous weights are the exact minimizer of the
/// quadratic error with all processed coordinates fixed.
QuantizedLayer quantize_gptq(const WeightMatrix& w, const HessianEstimate& hessian,
                             const GptqConfig& cfg, int threads = 1,
                             GptqRowTrace* row0_trace = nullptr);

} // namespace dashq
