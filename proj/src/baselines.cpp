#include "dashq/baselines.hpp"

#include "dashq/packing.hpp"
#include "dashq/parallel.hpp"
#include "dashq/solver.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <vector>

namespace dashq {

namespace {

// Per-group min-max grids fixed from the original (uncompensated) weights.
std::vector<FinalParams> row_grids(const QuantizedLayer& layout, std::span<const float> row,
                                   const QuantSpec& spec) {
    const int64_t gpr = layout.groups_per_row();
    std::vector<FinalParams> grids(static_cast<size_t>(gpr));
    for (int64_t gi = 0; gi < gpr; ++gi) {
        const int64_t j0 = layout.group_begin(gi);
        const int64_t j1 = layout.group_end(gi);
        const auto [s, z] = init_params(
            row.subspan(static_cast<size_t>(j0), static_cast<size_t>(j1 - j0)), spec.bits,
            spec.scale_floor);
        grids[static_cast<size_t>(gi)] = finalize_params(s, z, spec);
    }
    return grids;
}

QuantizedLayer make_layout(const WeightMatrix& w, const QuantSpec& spec) {
    spec.validate();
    w.validate();
    if (w.cols < 1) throw ValidationError("quantize: matrix needs at least one column");
    QuantizedLayer layer;
    layer.bits = spec.bits;
    layer.group_size = spec.group_size;
    layer.d_out = w.rows;
    layer.d_in = w.cols;
    layer.scales.resize(static_cast<size_t>(layer.group_count()));
    layer.zeros.resize(static_cast<size_t>(layer.group_count()));
    return layer;
}

} // namespace

QuantizedLayer quantize_rtn(const WeightMatrix& w, const QuantSpec& spec, int threads) {
    QuantizedLayer layer = make_layout(w, spec);
    const int64_t gpr = layer.groups_per_row();
    std::vector<int32_t> all_codes(static_cast<size_t>(w.rows * w.cols));

    parallel_for(w.rows, threads, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            const auto grids = row_grids(layer, w.row(i), spec);
            for (int64_t gi = 0; gi < gpr; ++gi) {
                const int64_t g = i * gpr + gi;
                layer.scales[static_cast<size_t>(g)] = grids[static_cast<size_t>(gi)].scale_stored;
                layer.zeros[static_cast<size_t>(g)] = grids[static_cast<size_t>(gi)].zero_stored;
                for (int64_t j = layer.group_begin(gi); j < layer.group_end(gi); ++j) {
                    all_codes[static_cast<size_t>(i * w.cols + j)] =
                        quantize_one(w.at(i, j), grids[static_cast<size_t>(gi)].scale,
                                     grids[static_cast<size_t>(gi)].zero, spec.bits);
                }
            }
        }
    });

    layer.packed_codes = pack_codes(all_codes, spec.bits);
    return layer;
}

QuantizedLayer quantize_gptq(const WeightMatrix& w, const HessianEstimate& hessian,
                             const GptqConfig& cfg, int threads, GptqRowTrace* row0_trace) {
    if (cfg.block_size < 1) throw ValidationError("quantize_gptq: block_size must be >= 1");
    if (!(cfg.damp_ratio >= 0.0)) throw ValidationError("quantize_gptq: damp_ratio must be >= 0");
    QuantizedLayer layer = make_layout(w, cfg.spec);
    if (hessian.dim() != w.cols) {
        throw ValidationError("quantize_gptq: Hessian dimension != d_in");
    }

    const int64_t d = w.cols;
    Eigen::MatrixXd damped = hessian.accum;
    damped.diagonal().array() += cfg.damp_ratio * hessian.accum.diagonal().mean();

    Eigen::LLT<Eigen::MatrixXd> llt(damped);
    if (llt.info() != Eigen::Success) {
        throw NumericalError(
            "quantize_gptq: Hessian singular after damping; increase damp_ratio");
    }
    const Eigen::MatrixXd hinv = llt.solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::LLT<Eigen::MatrixXd> llt_inv(hinv);
    if (llt_inv.info() != Eigen::Success) {
        throw NumericalError(
            "quantize_gptq: inverse Hessian not positive definite; increase damp_ratio");
    }
    // H_inv = U^T U with U upper triangular; row j of U carries the inverse of
    // the trailing submatrix: [H_F^-1]_jj = U_jj^2, [H_F^-1]_jk = U_jj U_jk.
    const Eigen::MatrixXd upper = Eigen::MatrixXd(llt_inv.matrixL()).transpose();

    const int64_t gpr = layer.groups_per_row();
    const int bits = cfg.spec.bits;
    std::vector<int32_t> all_codes(static_cast<size_t>(w.rows * w.cols));

    parallel_for(w.rows, threads, [&](int64_t r0, int64_t r1) {
        std::vector<double> row(static_cast<size_t>(d));
        std::vector<double> err(static_cast<size_t>(d));
        for (int64_t i = r0; i < r1; ++i) {
            const auto grids = row_grids(layer, w.row(i), cfg.spec);
            for (int64_t gi = 0; gi < gpr; ++gi) {
                const int64_t g = i * gpr + gi;
                layer.scales[static_cast<size_t>(g)] = grids[static_cast<size_t>(gi)].scale_stored;
                layer.zeros[static_cast<size_t>(g)] = grids[static_cast<size_t>(gi)].zero_stored;
            }
            for (int64_t j = 0; j < d; ++j) row[static_cast<size_t>(j)] = w.at(i, j);

            for (int64_t b0 = 0; b0 < d; b0 += cfg.block_size) {
                const int64_t b1 = std::min<int64_t>(b0 + cfg.block_size, d);
                for (int64_t j = b0; j < b1; ++j) {
                    const FinalParams& grid = grids[static_cast<size_t>(j / layer.group_size)];
                    const int32_t q = quantize_one(row[static_cast<size_t>(j)], grid.scale,
                                                   grid.zero, bits);
                    all_codes[static_cast<size_t>(i * d + j)] = q;
                    const double rec = grid.scale * q - grid.zero;
                    const double e = (row[static_cast<size_t>(j)] - rec) / upper(j, j);
                    err[static_cast<size_t>(j)] = e;
                    for (int64_t k = j + 1; k < b1; ++k) {
                        row[static_cast<size_t>(k)] -= e * upper(j, k);
                    }
                    if (row0_trace && i == 0) row0_trace->states.push_back(row);
                }
                // lazy batch: flush the block's errors into the columns to the right
                for (int64_t k = b1; k < d; ++k) {
                    double v = row[static_cast<size_t>(k)];
                    for (int64_t j = b0; j < b1; ++j) {
                        v -= err[static_cast<size_t>(j)] * upper(j, k);
                    }
                    row[static_cast<size_t>(k)] = v;
                }
            }
        }
    });

    layer.packed_codes = pack_codes(all_codes, bits);
    return layer;
}

} // namespace dashq
