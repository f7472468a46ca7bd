#pragma once

#include "dashq/calibration.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dashq {

enum class SyntheticKind { gaussian_iid, correlated, heavy_tailed_cols };

SyntheticKind synthetic_kind_from_name(const std::string& name);
const char* synthetic_kind_name(SyntheticKind kind);

struct SyntheticSpec {
    SyntheticKind kind = SyntheticKind::gaussian_iid;
    std::vector<int64_t> layer_dims; // {d_in, d1, ..., d_out}; empty = activations only
    int64_t calib_samples = 256;
    int64_t heldout_samples = 1024;
    uint64_t seed = 0;
};

struct SyntheticData {
    LayerStack stack;        // empty when layer_dims has fewer than 2 entries
    ActivationBatch calib;   // layer-0 activations
    ActivationBatch heldout; // same distribution, independent stream
    std::vector<int64_t> boosted_channels; // heavy-tailed-cols only
};

/// Dense stack with Gaussian weights scaled by 1/sqrt(d_in); relu on every
/// layer except the last.
LayerStack gen_stack(std::span<const int64_t> dims, uint64_t seed);

/// d x n activation matrix, columns drawn independently:
///   gaussian-iid       x_j ~ N(0, 1)
///   correlated         x = A g with a fixed factor A derived from structure_seed
///   heavy-tailed-cols  gaussian-iid with max(1, d/16) channels scaled by 10
/// structure_seed fixes the distribution (factor / boosted channel choice)
/// so that independent draws (data_seed) share it; it defaults to data_seed.
ActivationBatch gen_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t data_seed,
                                uint64_t structure_seed,
                                std::vector<int64_t>* boosted_out = nullptr);
inline ActivationBatch gen_activations(SyntheticKind kind, int64_t d, int64_t n,
                                       uint64_t data_seed,
                                       std::vector<int64_t>* boosted_out = nullptr) {
    return gen_activations(kind, d, n, data_seed, data_seed, boosted_out);
}

SyntheticData gen_synthetic(const SyntheticSpec& spec);

/// The calibration / held-out streams gen_synthetic draws from, exposed so a
/// pipeline can synthesize matching activations for a model of width d.
ActivationBatch gen_calib_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t seed);
ActivationBatch gen_heldout_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t seed);

} // namespace dashq
