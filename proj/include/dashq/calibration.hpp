#pragma once

#include "dashq/types.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace dashq {

/// One calibration batch: columns are token positions / samples.
struct ActivationBatch {
    int64_t channels = 0; // d_in of the target layer
    int64_t samples = 0;  // N
    std::vector<float> data; // row-major [channels][samples]

    ActivationBatch() = default;
    ActivationBatch(int64_t c, int64_t n)
        : channels(c), samples(n), data(static_cast<size_t>(c * n), 0.0f) {}
    ActivationBatch(int64_t c, int64_t n, std::vector<float> values);

    float at(int64_t j, int64_t k) const { return data[static_cast<size_t>(j * samples + k)]; }
    float& at(int64_t j, int64_t k) { return data[static_cast<size_t>(j * samples + k)]; }

    void validate() const; // finite entries

    /// Column-sample view as an Eigen matrix (d x N), f64.
    Eigen::MatrixXd as_matrix() const;
};

/// Full empirical Hessian accumulator, H_hat = sum over batches of X X^T.
/// Built symmetrically, so accum is symmetric exactly and the diagonal /
/// off-diagonal split D + O = H_hat holds with no residue.
struct HessianEstimate {
    Eigen::MatrixXd accum; // d x d, raw sums (not count-normalized)
    uint64_t sample_count = 0;

    HessianEstimate() = default;
    explicit HessianEstimate(int64_t d) : accum(Eigen::MatrixXd::Zero(d, d)) {}

    int64_t dim() const { return accum.rows(); }
    Eigen::VectorXd diagonal() const { return accum.diagonal(); }
    Eigen::MatrixXd off_diagonal() const;

    void merge(const HessianEstimate& other);
};

/// h'_j = h_j + sum_k X[j][k]^2, accumulated in f64.
void accumulate_diag(DiagImportance& acc, const ActivationBatch& batch);

/// H' = H + X X^T, accumulated in f64.
void accumulate_full(HessianEstimate& acc, const ActivationBatch& batch);

enum class Activation { none, relu };

struct Layer {
    WeightMatrix weights;
    Activation activation = Activation::none;
};

/// Sequential dense stack; d_out of layer l must equal d_in of layer l+1.
struct LayerStack {
    std::vector<Layer> layers;

    void validate() const;
    int64_t input_dim() const;
    int64_t output_dim() const;
};

/// Y = act(W X): matrix product in f64, stored back as f32.
ActivationBatch apply_layer(const WeightMatrix& w, Activation act, const ActivationBatch& x);

/// Activations at layer prefix.size(): X0 pushed through the dequantized
/// weights of each quantized layer in order, applying that layer's
/// activation function.
ActivationBatch propagate(const LayerStack& stack, std::span<const QuantizedLayer> prefix,
                          const ActivationBatch& x0);

/// Full-precision counterpart of propagate over the first `depth` layers.
ActivationBatch propagate_reference(const LayerStack& stack, size_t depth,
                                    const ActivationBatch& x0);

} // namespace dashq
