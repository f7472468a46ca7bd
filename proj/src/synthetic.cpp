#include "dashq/synthetic.hpp"

#include "dashq/rng.hpp"

#include <algorithm>
#include <cmath>

namespace dashq {

namespace {

// stream indices for derive_seed
constexpr uint64_t kStreamWeights = 0x1000;
constexpr uint64_t kStreamCalib = 0x2000;
constexpr uint64_t kStreamHeldout = 0x3000;
constexpr uint64_t kStreamChannels = 0x4000;
constexpr uint64_t kStreamFactor = 0x5000;

constexpr double kBoostFactor = 10.0;

std::vector<int64_t> pick_boosted_channels(int64_t d, uint64_t seed) {
    const int64_t count = std::max<int64_t>(1, d / 16);
    Rng rng(derive_seed(seed, kStreamChannels));
    std::vector<int64_t> all(static_cast<size_t>(d));
    for (int64_t j = 0; j < d; ++j) all[static_cast<size_t>(j)] = j;
    // partial Fisher-Yates
    for (int64_t i = 0; i < count; ++i) {
        const int64_t k = rng.uniform_int(i, d - 1);
        std::swap(all[static_cast<size_t>(i)], all[static_cast<size_t>(k)]);
    }
    std::vector<int64_t> picked(all.begin(), all.begin() + count);
    std::sort(picked.begin(), picked.end());
    return picked;
}

Eigen::MatrixXd correlation_factor(int64_t d, uint64_t seed) {
    // A = 0.8 I + 0.6 R with R_ij ~ N(0, 1/d); Cov = A A^T has unit-scale
    // diagonal and O(1/sqrt(d)) off-diagonal mass.
    Rng rng(derive_seed(seed, kStreamFactor));
    Eigen::MatrixXd a(d, d);
    const double scale = 0.6 / std::sqrt(static_cast<double>(d));
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t j = 0; j < d; ++j) a(i, j) = scale * rng.normal();
    }
    a.diagonal().array() += 0.8;
    return a;
}

} // namespace

SyntheticKind synthetic_kind_from_name(const std::string& name) {
    if (name == "gaussian-iid") return SyntheticKind::gaussian_iid;
    if (name == "correlated") return SyntheticKind::correlated;
    if (name == "heavy-tailed-cols") return SyntheticKind::heavy_tailed_cols;
    throw ValidationError("unknown synthetic kind '" + name + "'");
}

const char* synthetic_kind_name(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::gaussian_iid: return "gaussian-iid";
        case SyntheticKind::correlated: return "correlated";
        case SyntheticKind::heavy_tailed_cols: return "heavy-tailed-cols";
    }
    throw ValidationError("unknown synthetic kind");
}

LayerStack gen_stack(std::span<const int64_t> dims, uint64_t seed) {
    if (dims.size() < 2) throw ValidationError("gen_stack: need at least two dims");
    LayerStack stack;
    for (size_t l = 0; l + 1 < dims.size(); ++l) {
        const int64_t d_in = dims[l];
        const int64_t d_out = dims[l + 1];
        if (d_in < 1 || d_out < 1) throw ValidationError("gen_stack: dims must be positive");
        Rng rng(derive_seed(seed, kStreamWeights + l));
        WeightMatrix w(d_out, d_in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d_in));
        for (auto& v : w.data) v = static_cast<float>(scale * rng.normal());
        const bool last = (l + 2 == dims.size());
        stack.layers.push_back({std::move(w), last ? Activation::none : Activation::relu});
    }
    stack.validate();
    return stack;
}

ActivationBatch gen_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t data_seed,
                                uint64_t structure_seed, std::vector<int64_t>* boosted_out) {
    if (d < 1 || n < 0) throw ValidationError("gen_activations: bad dimensions");
    Rng rng(data_seed);
    ActivationBatch x(d, n);

    if (kind == SyntheticKind::correlated) {
        const Eigen::MatrixXd a = correlation_factor(d, structure_seed);
        Eigen::VectorXd g(d);
        for (int64_t k = 0; k < n; ++k) {
            for (int64_t j = 0; j < d; ++j) g(j) = rng.normal();
            const Eigen::VectorXd col = a * g;
            for (int64_t j = 0; j < d; ++j) x.at(j, k) = static_cast<float>(col(j));
        }
        return x;
    }

    for (int64_t k = 0; k < n; ++k) {
        for (int64_t j = 0; j < d; ++j) x.at(j, k) = static_cast<float>(rng.normal());
    }
    if (kind == SyntheticKind::heavy_tailed_cols) {
        const auto boosted = pick_boosted_channels(d, structure_seed);
        for (int64_t j : boosted) {
            for (int64_t k = 0; k < n; ++k) {
                x.at(j, k) = static_cast<float>(x.at(j, k) * kBoostFactor);
            }
        }
        if (boosted_out) *boosted_out = boosted;
    } else if (boosted_out) {
        boosted_out->clear();
    }
    return x;
}

SyntheticData gen_synthetic(const SyntheticSpec& spec) {
    SyntheticData data;
    int64_t d = 0;
    if (spec.layer_dims.size() >= 2) {
        data.stack = gen_stack(spec.layer_dims, spec.seed);
        d = data.stack.input_dim();
    } else if (spec.layer_dims.size() == 1) {
        d = spec.layer_dims.front();
    } else {
        throw ValidationError("gen_synthetic: layer_dims must name at least the input width");
    }
    data.calib = gen_activations(spec.kind, d, spec.calib_samples,
                                 derive_seed(spec.seed, kStreamCalib), spec.seed,
                                 &data.boosted_channels);
    data.heldout = gen_activations(spec.kind, d, spec.heldout_samples,
                                   derive_seed(spec.seed, kStreamHeldout), spec.seed, nullptr);
    return data;
}

ActivationBatch gen_calib_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t seed) {
    return gen_activations(kind, d, n, derive_seed(seed, kStreamCalib), seed, nullptr);
}

ActivationBatch gen_heldout_activations(SyntheticKind kind, int64_t d, int64_t n, uint64_t seed) {
    return gen_activations(kind, d, n, derive_seed(seed, kStreamHeldout), seed, nullptr);
}

} // namespace dashq
