#include "dashq/calibration.hpp"

#include <cmath>
#include <string>

namespace dashq {

ActivationBatch::ActivationBatch(int64_t c, int64_t n, std::vector<float> values)
    : channels(c), samples(n), data(std::move(values)) {
    if (data.size() != static_cast<size_t>(c) * static_cast<size_t>(n)) {
        throw ValidationError("ActivationBatch: value count does not match channels*samples");
    }
    validate();
}

void ActivationBatch::validate() const {
    for (float v : data) {
        if (!std::isfinite(v)) throw ValidationError("ActivationBatch: non-finite entry");
    }
}

Eigen::MatrixXd ActivationBatch::as_matrix() const {
    Eigen::MatrixXd m(channels, samples);
    for (int64_t j = 0; j < channels; ++j) {
        for (int64_t k = 0; k < samples; ++k) m(j, k) = at(j, k);
    }
    return m;
}

Eigen::MatrixXd HessianEstimate::off_diagonal() const {
    Eigen::MatrixXd o = accum;
    o.diagonal().setZero();
    return o;
}

void HessianEstimate::merge(const HessianEstimate& other) {
    if (other.dim() != dim()) throw ValidationError("HessianEstimate: dimension mismatch");
    accum += other.accum;
    sample_count += other.sample_count;
}

void accumulate_diag(DiagImportance& acc, const ActivationBatch& batch) {
    if (acc.h.size() != static_cast<size_t>(batch.channels)) {
        throw ValidationError("accumulate_diag: channel count mismatch");
    }
    for (int64_t j = 0; j < batch.channels; ++j) {
        double s = 0.0;
        for (int64_t k = 0; k < batch.samples; ++k) {
            const double x = batch.at(j, k);
            s += x * x;
        }
        acc.h[static_cast<size_t>(j)] += s;
    }
    acc.sample_count += static_cast<uint64_t>(batch.samples);
}

void accumulate_full(HessianEstimate& acc, const ActivationBatch& batch) {
    if (acc.dim() != batch.channels) {
        throw ValidationError("accumulate_full: channel count mismatch");
    }
    const int64_t d = batch.channels;
    for (int64_t a = 0; a < d; ++a) {
        for (int64_t b = a; b < d; ++b) {
            double s = 0.0;
            for (int64_t k = 0; k < batch.samples; ++k) {
                s += static_cast<double>(batch.at(a, k)) * static_cast<double>(batch.at(b, k));
            }
            acc.accum(a, b) += s;
            if (b != a) acc.accum(b, a) = acc.accum(a, b);
        }
    }
    acc.sample_count += static_cast<uint64_t>(batch.samples);
}

void LayerStack::validate() const {
    for (size_t l = 0; l + 1 < layers.size(); ++l) {
        if (layers[l].weights.rows != layers[l + 1].weights.cols) {
            throw ValidationError("LayerStack: layer " + std::to_string(l) + " outputs " +
                                  std::to_string(layers[l].weights.rows) + " channels but layer " +
                                  std::to_string(l + 1) + " expects " +
                                  std::to_string(layers[l + 1].weights.cols));
        }
    }
}

int64_t LayerStack::input_dim() const {
    return layers.empty() ? 0 : layers.front().weights.cols;
}

int64_t LayerStack::output_dim() const {
    return layers.empty() ? 0 : layers.back().weights.rows;
}

ActivationBatch apply_layer(const WeightMatrix& w, Activation act, const ActivationBatch& x) {
    if (w.cols != x.channels) {
        throw ValidationError("apply_layer: weight columns do not match activation channels");
    }
    ActivationBatch y(w.rows, x.samples);
    for (int64_t i = 0; i < w.rows; ++i) {
        for (int64_t k = 0; k < x.samples; ++k) {
            double acc = 0.0;
            for (int64_t j = 0; j < w.cols; ++j) {
                acc += static_cast<double>(w.at(i, j)) * static_cast<double>(x.at(j, k));
            }
            if (act == Activation::relu && acc < 0.0) acc = 0.0;
            y.at(i, k) = static_cast<float>(acc);
        }
    }
    return y;
}

ActivationBatch propagate(const LayerStack& stack, std::span<const QuantizedLayer> prefix,
                          const ActivationBatch& x0) {
    if (prefix.size() > stack.layers.size()) {
        throw ValidationError("propagate: prefix longer than the stack");
    }
    ActivationBatch x = x0;
    for (size_t l = 0; l < prefix.size(); ++l) {
        const WeightMatrix w = dequantize_layer(prefix[l]);
        x = apply_layer(w, stack.layers[l].activation, x);
    }
    return x;
}

ActivationBatch propagate_reference(const LayerStack& stack, size_t depth,
                                    const ActivationBatch& x0) {
    if (depth > stack.layers.size()) {
        throw ValidationError("propagate_reference: depth longer than the stack");
    }
    ActivationBatch x = x0;
    for (size_t l = 0; l < depth; ++l) {
        x = apply_layer(stack.layers[l].weights, stack.layers[l].activation, x);
    }
    return x;
}

} // namespace dashq
