#pragma once

#include "dashq/baselines.hpp"
#include "dashq/calibration.hpp"
#include "dashq/solver.hpp"
#include "dashq/synthetic.hpp"
#include "dashq/tensor_bundle.hpp"

#include <optional>
#include <string>
#include <vector>

namespace dashq {

enum class Method { rtn, gptq, dashq };

Method method_from_name(const std::string& name);
const char* method_name(Method m);

struct RunConfig {
    Method method = Method::dashq;
    QuantSpec spec;
    GptqConfig gptq; // gptq.spec is synced from spec at run time
    std::string model_path;
    std::string calib_path;
    std::string heldout_path; // optional
    uint64_t seed = 0;
    std::string out_bundle; // optional
    std::string out_csv;    // optional
    int threads = 1;
};

struct LayerLoss {
    double unweighted;     // ||W X - W_hat X||_F^2 over the calibration batches
    double weighted_proxy; // sum_j h_jj ||W_:,j - W_hat_:,j||^2
};

struct EvalReport {
    Method method = Method::dashq;
    std::vector<LayerLoss> layers;
    std::optional<double> end_to_end_mse; // held-out output MSE, when held-out inputs exist
    double wall_seconds = 0.0;
    std::vector<double> ds_median; // median over groups of delta-s per iteration (dashq)

    double total_unweighted() const;
    double total_weighted() const;
    std::string to_csv() const;
};

struct PipelineResult {
    std::vector<QuantizedLayer> quantized;
    EvalReport report;
    std::vector<std::vector<SolveTrace>> traces; // per layer, per group (dashq only)
};

/// Quantize a stack layer by layer: accumulate importance from the current
/// activations (plus the full Hessian for gptq), quantize, then propagate
/// the activations through the quantized layer before calibrating the next.
PipelineResult run_pipeline(const RunConfig& cfg, const LayerStack& stack,
                            std::span<const ActivationBatch> calib,
                            const ActivationBatch* heldout);

/// Path-based variant: loads the stack, calibration and optional held-out
/// bundles named in cfg, runs the pipeline, and writes cfg.out_bundle /
/// cfg.out_csv when set.
PipelineResult run_pipeline(const RunConfig& cfg);

/// Recompute an EvalReport for already-quantized layers (same propagation
/// semantics as run_pipeline). Reported losses round-trip through bundles.
EvalReport evaluate_quantized(const LayerStack& stack, std::span<const QuantizedLayer> quantized,
                              std::span<const ActivationBatch> calib,
                              const ActivationBatch* heldout);

struct ComparisonRow {
    Method method;
    double total_unweighted;
    double total_weighted;
    std::optional<double> end_to_end_mse;
    double wall_seconds;
    double ds_first_median; // NaN when no trace
    double ds_last_median;
};

struct ComparisonTable {
    std::vector<ComparisonRow> rows;
    std::string to_csv() const;
    std::string to_text() const;
};

/// One pipeline run per config; all configs must share model/calibration
/// inputs. Rows keep the config order.
ComparisonTable compare(std::span<const RunConfig> cfgs, const LayerStack& stack,
                        std::span<const ActivationBatch> calib, const ActivationBatch* heldout);

// ---- bundle schemas ----
// model:      layers/<l>/weight f32 [d_out, d_in], layers/<l>/relu u8 [1]
// acts:       act/<layer>/<batch> f32 [d_in, N]
// quantized:  qlayer/<l>/meta i64 [4] = {bits, group_size, d_out, d_in},
//             qlayer/<l>/packed u8, qlayer/<l>/scales f32, qlayer/<l>/zeros f32
// hessian:    hess/<layer>/diag f64 [d] (+ hess/<layer>/full f64 [d, d]),
//             hess/<layer>/count i64 [1]

void save_stack(TensorBundle& bundle, const LayerStack& stack);
LayerStack load_stack(const TensorBundle& bundle);

void save_activations(TensorBundle& bundle, int64_t layer, int64_t batch,
                      const ActivationBatch& x);
std::vector<ActivationBatch> load_activations(const TensorBundle& bundle, int64_t layer);

void save_quantized(TensorBundle& bundle, std::span<const QuantizedLayer> layers);
std::vector<QuantizedLayer> load_quantized(const TensorBundle& bundle);

void save_importance(TensorBundle& bundle, int64_t layer, const DiagImportance& diag);
void save_hessian(TensorBundle& bundle, int64_t layer, const HessianEstimate& hessian);

/// Percentile with linear interpolation between order statistics (p in [0,1]).
double percentile(std::vector<double> values, double p);

} // namespace dashq
