#include "dashq/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace dashq {

namespace {

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

LayerLoss layer_losses(const WeightMatrix& w, const WeightMatrix& w_hat,
                       const DiagImportance& importance,
                       std::span<const ActivationBatch> batches) {
    LayerLoss loss{0.0, 0.0};
    for (const auto& x : batches) {
        for (int64_t i = 0; i < w.rows; ++i) {
            for (int64_t k = 0; k < x.samples; ++k) {
                double acc = 0.0;
                for (int64_t j = 0; j < w.cols; ++j) {
                    acc += (static_cast<double>(w.at(i, j)) - w_hat.at(i, j)) * x.at(j, k);
                }
                loss.unweighted += acc * acc;
            }
        }
    }
    for (int64_t j = 0; j < w.cols; ++j) {
        double col = 0.0;
        for (int64_t i = 0; i < w.rows; ++i) {
            const double dv = static_cast<double>(w.at(i, j)) - w_hat.at(i, j);
            col += dv * dv;
        }
        loss.weighted_proxy += importance.h[static_cast<size_t>(j)] * col;
    }
    return loss;
}

double median_over(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> ds_medians(std::span<const std::vector<SolveTrace>> traces) {
    size_t iters = 0;
    for (const auto& layer : traces) {
        for (const auto& t : layer) iters = std::max(iters, t.scale_delta.size());
    }
    std::vector<double> medians;
    for (size_t t = 0; t < iters; ++t) {
        std::vector<double> at_t;
        for (const auto& layer : traces) {
            for (const auto& tr : layer) {
                if (t < tr.scale_delta.size()) at_t.push_back(tr.scale_delta[t]);
            }
        }
        medians.push_back(median_over(std::move(at_t)));
    }
    return medians;
}

struct StageResult {
    std::vector<QuantizedLayer> quantized;
    std::vector<LayerLoss> losses;
    std::vector<std::vector<SolveTrace>> traces;
};

// Shared by run_pipeline and evaluate_quantized so reported losses are
// reproducible from the emitted bundles: when `prebuilt` is given the layers
// are taken from it instead of being quantized.
StageResult stage_layers(const RunConfig& cfg, const LayerStack& stack,
                         std::span<const ActivationBatch> calib,
                         std::span<const QuantizedLayer> prebuilt) {
    stack.validate();
    StageResult result;
    std::vector<ActivationBatch> current(calib.begin(), calib.end());

    for (size_t l = 0; l < stack.layers.size(); ++l) {
        const WeightMatrix& w = stack.layers[l].weights;
        DiagImportance importance(static_cast<size_t>(w.cols));
        for (const auto& x : current) accumulate_diag(importance, x);

        QuantizedLayer ql;
        if (!prebuilt.empty()) {
            ql = prebuilt[l];
        } else if (cfg.method == Method::rtn) {
            ql = quantize_rtn(w, cfg.spec, cfg.threads);
        } else if (cfg.method == Method::gptq) {
            HessianEstimate hessian(w.cols);
            for (const auto& x : current) accumulate_full(hessian, x);
            GptqConfig gcfg = cfg.gptq;
            gcfg.spec = cfg.spec;
            ql = quantize_gptq(w, hessian, gcfg, cfg.threads);
        } else {
            auto [layer, traces] = quantize_layer_dashq(w, importance, cfg.spec, cfg.threads);
            ql = std::move(layer);
            result.traces.push_back(std::move(traces));
        }

        const WeightMatrix w_hat = dequantize_layer(ql);
        result.losses.push_back(layer_losses(w, w_hat, importance, current));

        for (auto& x : current) x = apply_layer(w_hat, stack.layers[l].activation, x);
        result.quantized.push_back(std::move(ql));
    }
    return result;
}

double heldout_mse(const LayerStack& stack, std::span<const QuantizedLayer> quantized,
                   const ActivationBatch& heldout) {
    const ActivationBatch y_ref = propagate_reference(stack, stack.layers.size(), heldout);
    const ActivationBatch y_hat = propagate(stack, quantized, heldout);
    double sum = 0.0;
    for (size_t i = 0; i < y_ref.data.size(); ++i) {
        const double dv = static_cast<double>(y_ref.data[i]) - y_hat.data[i];
        sum += dv * dv;
    }
    return y_ref.data.empty() ? 0.0 : sum / static_cast<double>(y_ref.data.size());
}

} // namespace

Method method_from_name(const std::string& name) {
    if (name == "rtn") return Method::rtn;
    if (name == "gptq") return Method::gptq;
    if (name == "dashq") return Method::dashq;
    throw ValidationError("unknown method '" + name + "' (expected rtn, gptq or dashq)");
}

const char* method_name(Method m) {
    switch (m) {
        case Method::rtn: return "rtn";
        case Method::gptq: return "gptq";
        case Method::dashq: return "dashq";
    }
    throw ValidationError("unknown method");
}

double EvalReport::total_unweighted() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.unweighted;
    return s;
}

double EvalReport::total_weighted() const {
    double s = 0.0;
    for (const auto& l : layers) s += l.weighted_proxy;
    return s;
}

std::string EvalReport::to_csv() const {
    std::ostringstream out;
    out << "method,kind,index,value_a,value_b\n";
    const char* m = method_name(method);
    for (size_t l = 0; l < layers.size(); ++l) {
        out << m << ",layer_loss," << l << "," << fmt(layers[l].unweighted) << ","
            << fmt(layers[l].weighted_proxy) << "\n";
    }
    out << m << ",total_loss,," << fmt(total_unweighted()) << "," << fmt(total_weighted()) << "\n";
    if (end_to_end_mse) {
        out << m << ",e2e_mse,," << fmt(*end_to_end_mse) << ",\n";
    }
    out << m << ",wall_seconds,," << fmt(wall_seconds) << ",\n";
    for (size_t t = 0; t < ds_median.size(); ++t) {
        out << m << ",ds_median," << (t + 1) << "," << fmt(ds_median[t]) << ",\n";
    }
    return out.str();
}

PipelineResult run_pipeline(const RunConfig& cfg, const LayerStack& stack,
                            std::span<const ActivationBatch> calib,
                            const ActivationBatch* heldout) {
    cfg.spec.validate();
    const auto start = std::chrono::steady_clock::now();
    StageResult staged = stage_layers(cfg, stack, calib, {});

    PipelineResult result;
    result.quantized = std::move(staged.quantized);
    result.traces = std::move(staged.traces);
    result.report.method = cfg.method;
    result.report.layers = std::move(staged.losses);
    result.report.ds_median = ds_medians(result.traces);
    if (heldout) {
        result.report.end_to_end_mse = heldout_mse(stack, result.quantized, *heldout);
    }
    result.report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

namespace {

// "synth:<kind>:<n>" calibration sources draw from the generator streams that
// `gen` uses, keyed by the run seed; anything else is a bundle path.
struct SynthSource {
    SyntheticKind kind;
    int64_t n;
};

std::optional<SynthSource> parse_synth_source(const std::string& src) {
    if (src.rfind("synth:", 0) != 0) return std::nullopt;
    const size_t kind_end = src.find(':', 6);
    if (kind_end == std::string::npos) {
        throw ValidationError("synthetic source must look like synth:<kind>:<n>");
    }
    SynthSource out{synthetic_kind_from_name(src.substr(6, kind_end - 6)), 0};
    try {
        out.n = std::stoll(src.substr(kind_end + 1));
    } catch (const std::exception&) {
        throw ValidationError("synthetic source must look like synth:<kind>:<n>");
    }
    if (out.n < 1) throw ValidationError("synthetic source needs a positive sample count");
    return out;
}

} // namespace

PipelineResult run_pipeline(const RunConfig& cfg) {
    if (cfg.model_path.empty() || cfg.calib_path.empty()) {
        throw ValidationError("run_pipeline: model and calibration sources are required");
    }
    const LayerStack stack = load_stack(bundle_read_file(cfg.model_path));
    std::vector<ActivationBatch> calib;
    if (const auto synth = parse_synth_source(cfg.calib_path)) {
        calib.push_back(
            gen_calib_activations(synth->kind, stack.input_dim(), synth->n, cfg.seed));
    } else {
        calib = load_activations(bundle_read_file(cfg.calib_path), 0);
    }
    std::optional<ActivationBatch> heldout;
    if (!cfg.heldout_path.empty()) {
        if (const auto synth = parse_synth_source(cfg.heldout_path)) {
            heldout = gen_heldout_activations(synth->kind, stack.input_dim(), synth->n, cfg.seed);
        } else {
            auto batches = load_activations(bundle_read_file(cfg.heldout_path), 0);
            if (batches.size() != 1) {
                throw ValidationError("run_pipeline: held-out bundle must hold one act/0/* batch");
            }
            heldout = std::move(batches.front());
        }
    }
    PipelineResult result =
        run_pipeline(cfg, stack, calib, heldout ? &*heldout : nullptr);
    if (!cfg.out_bundle.empty()) {
        TensorBundle bundle;
        save_quantized(bundle, result.quantized);
        bundle_write_file(bundle, cfg.out_bundle);
    }
    if (!cfg.out_csv.empty()) {
        std::ofstream f(cfg.out_csv);
        if (!f) throw ValidationError("cannot open '" + cfg.out_csv + "' for writing");
        f << result.report.to_csv();
    }
    return result;
}

EvalReport evaluate_quantized(const LayerStack& stack, std::span<const QuantizedLayer> quantized,
                              std::span<const ActivationBatch> calib,
                              const ActivationBatch* heldout) {
    if (quantized.size() != stack.layers.size()) {
        throw ValidationError("evaluate_quantized: layer count mismatch");
    }
    RunConfig cfg; // method irrelevant: layers are prebuilt
    StageResult staged = stage_layers(cfg, stack, calib, quantized);
    EvalReport report;
    report.layers = std::move(staged.losses);
    if (heldout) report.end_to_end_mse = heldout_mse(stack, quantized, *heldout);
    return report;
}

std::string ComparisonTable::to_csv() const {
    std::ostringstream out;
    out << "method,total_unweighted_loss,total_weighted_proxy,e2e_mse,wall_seconds,"
           "ds_first_median,ds_last_median\n";
    for (const auto& r : rows) {
        out << method_name(r.method) << "," << fmt(r.total_unweighted) << ","
            << fmt(r.total_weighted) << ",";
        if (r.end_to_end_mse) out << fmt(*r.end_to_end_mse);
        out << "," << fmt(r.wall_seconds) << ",";
        if (!std::isnan(r.ds_first_median)) out << fmt(r.ds_first_median);
        out << ",";
        if (!std::isnan(r.ds_last_median)) out << fmt(r.ds_last_median);
        out << "\n";
    }
    return out.str();
}

std::string ComparisonTable::to_text() const {
    std::ostringstream out;
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %14s %14s %12s %9s %10s %10s\n", "method",
                  "unweighted", "weighted", "e2e_mse", "wall_s", "ds_first", "ds_last");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-8s %14.6g %14.6g %12.6g %9.3f %10.4g %10.4g\n",
                      method_name(r.method), r.total_unweighted, r.total_weighted,
                      r.end_to_end_mse.value_or(std::numeric_limits<double>::quiet_NaN()),
                      r.wall_seconds, r.ds_first_median, r.ds_last_median);
        out << buf;
    }
    return out.str();
}

ComparisonTable compare(std::span<const RunConfig> cfgs, const LayerStack& stack,
                        std::span<const ActivationBatch> calib, const ActivationBatch* heldout) {
    if (cfgs.empty()) throw ValidationError("compare: need at least one config");
    ComparisonTable table;
    for (const auto& cfg : cfgs) {
        const PipelineResult run = run_pipeline(cfg, stack, calib, heldout);
        const auto& r = run.report;
        const double nan = std::numeric_limits<double>::quiet_NaN();
        table.rows.push_back({cfg.method, r.total_unweighted(), r.total_weighted(),
                              r.end_to_end_mse, r.wall_seconds,
                              r.ds_median.empty() ? nan : r.ds_median.front(),
                              r.ds_median.empty() ? nan : r.ds_median.back()});
    }
    return table;
}

void save_stack(TensorBundle& bundle, const LayerStack& stack) {
    stack.validate();
    for (size_t l = 0; l < stack.layers.size(); ++l) {
        const auto& layer = stack.layers[l];
        const std::string base = "layers/" + std::to_string(l) + "/";
        bundle.put(base + "weight",
                   Tensor::f32({layer.weights.rows, layer.weights.cols}, layer.weights.data));
        const uint8_t relu = layer.activation == Activation::relu ? 1 : 0;
        bundle.put(base + "relu", Tensor::u8({1}, std::span<const uint8_t>(&relu, 1)));
    }
}

LayerStack load_stack(const TensorBundle& bundle) {
    LayerStack stack;
    for (size_t l = 0;; ++l) {
        const std::string base = "layers/" + std::to_string(l) + "/";
        if (!bundle.contains(base + "weight")) break;
        const Tensor& wt = bundle.at(base + "weight");
        if (wt.shape.size() != 2) throw ValidationError("load_stack: weight tensor must be 2-D");
        const auto vals = wt.as_f32();
        Layer layer;
        layer.weights = WeightMatrix(wt.shape[0], wt.shape[1], {vals.begin(), vals.end()});
        if (bundle.contains(base + "relu") && bundle.at(base + "relu").as_u8()[0] != 0) {
            layer.activation = Activation::relu;
        }
        stack.layers.push_back(std::move(layer));
    }
    if (stack.layers.empty()) throw ValidationError("load_stack: bundle has no layers/0/weight");
    stack.validate();
    return stack;
}

void save_activations(TensorBundle& bundle, int64_t layer, int64_t batch,
                      const ActivationBatch& x) {
    bundle.put("act/" + std::to_string(layer) + "/" + std::to_string(batch),
               Tensor::f32({x.channels, x.samples}, x.data));
}

std::vector<ActivationBatch> load_activations(const TensorBundle& bundle, int64_t layer) {
    const std::string prefix = "act/" + std::to_string(layer) + "/";
    std::vector<ActivationBatch> out;
    for (size_t batch = 0;; ++batch) {
        const std::string name = prefix + std::to_string(batch);
        if (!bundle.contains(name)) break;
        const Tensor& t = bundle.at(name);
        if (t.shape.size() != 2) throw ValidationError("load_activations: tensor must be 2-D");
        const auto vals = t.as_f32();
        out.emplace_back(t.shape[0], t.shape[1], std::vector<float>{vals.begin(), vals.end()});
    }
    if (out.empty()) {
        throw ValidationError("load_activations: no tensors under '" + prefix + "'");
    }
    return out;
}

void save_quantized(TensorBundle& bundle, std::span<const QuantizedLayer> layers) {
    for (size_t l = 0; l < layers.size(); ++l) {
        const QuantizedLayer& q = layers[l];
        q.validate();
        const std::string base = "qlayer/" + std::to_string(l) + "/";
        const int64_t meta[4] = {q.bits, q.group_size, q.d_out, q.d_in};
        bundle.put(base + "meta", Tensor::i64({4}, meta));
        bundle.put(base + "packed",
                   Tensor::u8({static_cast<int64_t>(q.packed_codes.size())}, q.packed_codes));
        bundle.put(base + "scales", Tensor::f32({q.group_count()}, q.scales));
        bundle.put(base + "zeros", Tensor::f32({q.group_count()}, q.zeros));
    }
}

std::vector<QuantizedLayer> load_quantized(const TensorBundle& bundle) {
    std::vector<QuantizedLayer> out;
    for (size_t l = 0;; ++l) {
        const std::string base = "qlayer/" + std::to_string(l) + "/";
        if (!bundle.contains(base + "meta")) break;
        const auto meta = bundle.at(base + "meta").as_i64();
        if (meta.size() != 4) throw ValidationError("load_quantized: meta must hold 4 values");
        QuantizedLayer q;
        q.bits = static_cast<int>(meta[0]);
        q.group_size = meta[1];
        q.d_out = meta[2];
        q.d_in = meta[3];
        const auto packed = bundle.at(base + "packed").as_u8();
        q.packed_codes.assign(packed.begin(), packed.end());
        const auto scales = bundle.at(base + "scales").as_f32();
        q.scales.assign(scales.begin(), scales.end());
        const auto zeros = bundle.at(base + "zeros").as_f32();
        q.zeros.assign(zeros.begin(), zeros.end());
        q.validate();
        out.push_back(std::move(q));
    }
    if (out.empty()) throw ValidationError("load_quantized: bundle has no qlayer/0/meta");
    return out;
}

void save_importance(TensorBundle& bundle, int64_t layer, const DiagImportance& diag) {
    const std::string base = "hess/" + std::to_string(layer) + "/";
    bundle.put(base + "diag", Tensor::f64({static_cast<int64_t>(diag.h.size())}, diag.h));
    const int64_t count = static_cast<int64_t>(diag.sample_count);
    bundle.put(base + "count", Tensor::i64({1}, std::span<const int64_t>(&count, 1)));
}

void save_hessian(TensorBundle& bundle, int64_t layer, const HessianEstimate& hessian) {
    const std::string base = "hess/" + std::to_string(layer) + "/";
    const int64_t d = hessian.dim();
    std::vector<double> row_major(static_cast<size_t>(d * d));
    for (int64_t i = 0; i < d; ++i) {
        for (int64_t j = 0; j < d; ++j) {
            row_major[static_cast<size_t>(i * d + j)] = hessian.accum(i, j);
        }
    }
    bundle.put(base + "full", Tensor::f64({d, d}, row_major));
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("percentile: empty input");
    if (p < 0.0 || p > 1.0) throw ValidationError("percentile: p outside [0, 1]");
    std::sort(values.begin(), values.end());
    const double pos = p * static_cast<double>(values.size() - 1);
    const size_t lo = static_cast<size_t>(pos);
    const size_t hi = std::min(lo + 1, values.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
}

} // namespace dashq
