#pragma once

/**
 * Per-group coordinate-descent quantizer.
 *
 * Each group minimizes the importance-weighted ridge objective
 *
 *     J(s, z, Q) = sum_j h_j (w_j - (s q_j - z))^2 + lambda s^2
 *
 * by alternating two exact minimizers:
 *   A. integer refinement   q_j = clip(round((w_j + z) / s), 0, 2^b - 1)
 *   B. parameter regression s = Cov_h(W,Q) / (Var_h(Q) + lambda),
 *                           z = s * mean_h(Q) - mean_h(W)
 * With smoothing alpha = 1 both steps are exact (constrained) minimizers,
 * so the objective is non-increasing across iterations.
 */

#include "dashq/types.hpp"

#include <span>
#include <utility>
#include <vector>

namespace dashq {

struct GroupProblem {
    std::span<const float> weights;     // group slice of one row
    std::span<const double> importance; // matching slice of DiagImportance, h_j >= 0
    QuantSpec spec;
};

struct SolveTrace {
    std::vector<double> objective;   // J after each iteration's parameter update
    std::vector<double> scale_delta; // |s_t - s_{t-1}| / |s_0|, one per iteration
    bool scale_clamped = false;      // the eps_s floor fired at least once
    bool zero_importance = false;    // sum h = 0, solved with unit weights
};

/// Min-max initialization: s0 = (max - min) / (2^b - 1), z0 = -min.
/// A constant group degenerates to s0 = eps_s, z0 = -min (all codes 0
/// reconstruct the constant exactly).
std::pair<double, double> init_params(std::span<const float> w, int bits, double scale_floor);

/// Nearest-code assignment for fixed parameters. Rounds half away from zero.
int32_t quantize_one(double w, double s, double z, int bits);
std::vector<int32_t> refine_codes(std::span<const float> w, double s, double z, int bits);

/// Weighted means, covariance and variance per the objective above.
/// Signals a zero-importance group when sum h = 0.
WeightedMoments weighted_moments(std::span<const float> w, std::span<const int32_t> q,
                                 std::span<const double> h);

struct RegressResult {
    double s;
    double z;
    bool clamped; // s was raised to the eps_s floor
};

/// Closed-form ridge regression of (s, z) for fixed codes; s is clamped to
/// the eps_s floor and z recomputed with the clamped value. Signals a zero
/// denominator when Var_h(Q) + lambda = 0.
RegressResult regress_params(const WeightedMoments& m, double ridge, double scale_floor);

/// J(s, z, Q) evaluated in f64.
double group_objective(std::span<const float> w, std::span<const double> h, double s, double z,
                       std::span<const int32_t> q, double ridge);

/// Full per-group solve: init, T alternating iterations (with optional
/// alpha-damped parameter updates), then one final code refinement so the
/// returned codes are consistent with the returned (s, z).
std::pair<GroupParams, SolveTrace> solve_group(const GroupProblem& p);

/// Quantize a whole matrix group-by-group. Groups are independent; rows may
/// be solved in parallel and the result does not depend on the thread count.
/// Stored parameters are rounded to f32 (optionally through fp16) and codes
/// are recomputed from the stored values.
std::pair<QuantizedLayer, std::vector<SolveTrace>> quantize_layer_dashq(
    const WeightMatrix& w, const DiagImportance& importance, const QuantSpec& spec,
    int threads = 1);

} // namespace dashq
