// dashq command-line interface: synthetic data generation, quantization,
// evaluation, and Hessian stability analysis over .dqb bundles.

#include "dashq/harness.hpp"
#include "dashq/hessian_analysis.hpp"
#include "dashq/rng.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <string>
#include <vector>

namespace {

using namespace dashq;

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct SpecFlags {
    std::string method = "dashq";
    RunConfig cfg;
};

// the shared quantization flags, spelled the same everywhere
void add_spec_flags(CLI::App* sub, SpecFlags& fl) {
    sub->add_option("--method", fl.method, "Quantizer: rtn, gptq or dashq")
        ->check(CLI::IsMember({"rtn", "gptq", "dashq"}));
    sub->add_option("--bits", fl.cfg.spec.bits, "Code width b in [2, 8]");
    sub->add_option("--group-size", fl.cfg.spec.group_size, "Columns per quantization group");
    sub->add_option("--iters", fl.cfg.spec.iters, "Coordinate-descent iterations T");
    sub->add_option("--alpha", fl.cfg.spec.smoothing, "Parameter update damping in (0, 1]");
    sub->add_option("--lambda", fl.cfg.spec.ridge, "Ridge weight on s^2");
    sub->add_option("--seed", fl.cfg.seed, "Deterministic run seed");
    sub->add_flag("--fp16-params", fl.cfg.spec.fp16_params,
                  "Round scales and offsets through half precision before use");
    sub->add_option("--threads", fl.cfg.threads, "Worker threads (results are thread-count independent)");
    sub->add_option("--damp-ratio", fl.cfg.gptq.damp_ratio,
                    "GPTQ: diagonal damping as a fraction of mean(diag(H))");
    sub->add_option("--block-size", fl.cfg.gptq.block_size, "GPTQ: lazy update block width");
}

std::string trim(const std::string& s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return s.substr(b, e - b);
}

// Flat key=value config, '#' comments. Keys are long flag names without the
// dashes. The tokens are appended after the command line; options use a
// take-first policy, so explicit flags win over the file.
std::vector<std::string> config_tokens(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ValidationError("cannot open config file '" + path + "'");
    std::vector<std::string> tokens;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": expected key=value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ValidationError("config line " + std::to_string(lineno) + ": empty key");
        }
        if (key == "config") {
            throw ValidationError("config line " + std::to_string(lineno) +
                                  ": nested config files are not supported");
        }
        tokens.push_back("--" + key + "=" + value);
    }
    return tokens;
}

// expand argv, replacing --config <file> / --config=<file> with the file's tokens
std::vector<std::string> expand_args(int argc, char** argv) {
    std::vector<std::string> args;
    std::vector<std::string> from_config;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--config") {
            if (i + 1 >= argc) throw ValidationError("--config requires a file path");
            from_config = config_tokens(argv[++i]);
        } else if (a.rfind("--config=", 0) == 0) {
            from_config = config_tokens(a.substr(9));
        } else {
            args.push_back(a);
        }
    }
    args.insert(args.end(), from_config.begin(), from_config.end());
    std::reverse(args.begin(), args.end()); // CLI11's vector parse expects reversed args
    return args;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream f(path);
    if (!f) throw ValidationError("cannot open '" + path + "' for writing");
    return f;
}

Eigen::MatrixXd concat_columns(const std::vector<ActivationBatch>& batches) {
    int64_t total = 0;
    for (const auto& b : batches) total += b.samples;
    if (batches.empty() || total == 0) throw ValidationError("no activation samples");
    Eigen::MatrixXd x(batches.front().channels, total);
    int64_t at = 0;
    for (const auto& b : batches) {
        if (b.channels != x.rows()) throw ValidationError("activation batches disagree on d_in");
        for (int64_t k = 0; k < b.samples; ++k) {
            for (int64_t j = 0; j < b.channels; ++j) x(j, at) = b.at(j, k);
            ++at;
        }
    }
    return x;
}

int cmd_gen(const std::string& kind_name, const std::string& dims_csv, int64_t n,
            int64_t heldout_n, uint64_t seed, const std::string& out_prefix) {
    SyntheticSpec spec;
    spec.kind = synthetic_kind_from_name(kind_name);
    for (const auto& tok : CLI::detail::split(dims_csv, ',')) {
        spec.layer_dims.push_back(std::stoll(tok));
    }
    spec.calib_samples = n;
    spec.heldout_samples = heldout_n;
    spec.seed = seed;
    const SyntheticData data = gen_synthetic(spec);

    if (!data.stack.layers.empty()) {
        TensorBundle model;
        save_stack(model, data.stack);
        bundle_write_file(model, out_prefix + "_model.dqb");
        std::printf("wrote %s_model.dqb (%zu layers)\n", out_prefix.c_str(),
                    data.stack.layers.size());
    }
    TensorBundle calib;
    save_activations(calib, 0, 0, data.calib);
    bundle_write_file(calib, out_prefix + "_calib.dqb");
    TensorBundle heldout;
    save_activations(heldout, 0, 0, data.heldout);
    bundle_write_file(heldout, out_prefix + "_heldout.dqb");
    std::printf("wrote %s_calib.dqb (%lld cols), %s_heldout.dqb (%lld cols)\n",
                out_prefix.c_str(), static_cast<long long>(data.calib.samples),
                out_prefix.c_str(), static_cast<long long>(data.heldout.samples));
    if (!data.boosted_channels.empty()) {
        std::printf("boosted channels:");
        for (int64_t j : data.boosted_channels) std::printf(" %lld", static_cast<long long>(j));
        std::printf("\n");
    }
    return 0;
}

int cmd_quantize(SpecFlags& fl) {
    fl.cfg.method = method_from_name(fl.method);
    const PipelineResult result = run_pipeline(fl.cfg);
    std::printf("%s: total unweighted loss %.6g, weighted proxy %.6g", method_name(fl.cfg.method),
                result.report.total_unweighted(), result.report.total_weighted());
    if (result.report.end_to_end_mse) {
        std::printf(", held-out mse %.6g", *result.report.end_to_end_mse);
    }
    std::printf(", %.3fs\n", result.report.wall_seconds);
    return 0;
}

int cmd_dequantize(const std::string& in, const std::string& out) {
    const auto layers = load_quantized(bundle_read_file(in));
    TensorBundle bundle;
    for (size_t l = 0; l < layers.size(); ++l) {
        const WeightMatrix w = dequantize_layer(layers[l]);
        bundle.put("layers/" + std::to_string(l) + "/weight",
                   Tensor::f32({w.rows, w.cols}, w.data));
    }
    bundle_write_file(bundle, out);
    std::printf("wrote %s (%zu layers)\n", out.c_str(), layers.size());
    return 0;
}

int cmd_calibrate(const std::string& in, int64_t layer, bool full, const std::string& out) {
    const auto batches = load_activations(bundle_read_file(in), layer);
    const int64_t d = batches.front().channels;
    DiagImportance diag(static_cast<size_t>(d));
    for (const auto& b : batches) accumulate_diag(diag, b);
    TensorBundle bundle;
    save_importance(bundle, layer, diag);
    if (full) {
        HessianEstimate hessian(d);
        for (const auto& b : batches) accumulate_full(hessian, b);
        save_hessian(bundle, layer, hessian);
    }
    bundle_write_file(bundle, out);
    std::printf("accumulated %llu samples over %lld channels -> %s\n",
                static_cast<unsigned long long>(diag.sample_count), static_cast<long long>(d),
                out.c_str());
    return 0;
}

int cmd_eval(const std::string& model, const std::string& quant, const std::string& calib,
             const std::string& heldout, const std::string& csv) {
    const LayerStack stack = load_stack(bundle_read_file(model));
    const auto quantized = load_quantized(bundle_read_file(quant));
    const auto batches = load_activations(bundle_read_file(calib), 0);
    std::optional<ActivationBatch> held;
    if (!heldout.empty()) {
        auto hb = load_activations(bundle_read_file(heldout), 0);
        held = std::move(hb.front());
    }
    EvalReport report = evaluate_quantized(stack, quantized, batches, held ? &*held : nullptr);
    std::printf("total unweighted loss %.6g, weighted proxy %.6g", report.total_unweighted(),
                report.total_weighted());
    if (report.end_to_end_mse) std::printf(", held-out mse %.6g", *report.end_to_end_mse);
    std::printf("\n");
    if (!csv.empty()) open_out(csv) << report.to_csv();
    return 0;
}

int cmd_compare(SpecFlags& fl, const std::string& methods_csv) {
    const LayerStack stack = load_stack(bundle_read_file(fl.cfg.model_path));
    const auto calib = load_activations(bundle_read_file(fl.cfg.calib_path), 0);
    std::optional<ActivationBatch> held;
    if (!fl.cfg.heldout_path.empty()) {
        auto hb = load_activations(bundle_read_file(fl.cfg.heldout_path), 0);
        held = std::move(hb.front());
    }
    std::vector<RunConfig> cfgs;
    for (const auto& tok : CLI::detail::split(methods_csv, ',')) {
        RunConfig cfg = fl.cfg;
        cfg.method = method_from_name(tok);
        cfgs.push_back(cfg);
    }
    const ComparisonTable table = compare(cfgs, stack, calib, held ? &*held : nullptr);
    std::fputs(table.to_text().c_str(), stdout);
    if (!fl.cfg.out_csv.empty()) open_out(fl.cfg.out_csv) << table.to_csv();
    return 0;
}

int cmd_analyze_snr(const std::string& in, int64_t layer, const std::string& unit,
                    int64_t samples, int bins, const std::string& csv) {
    const auto batches = load_activations(bundle_read_file(in), layer);
    std::vector<Eigen::MatrixXd> per_sample;
    if (unit == "batch") {
        for (const auto& b : batches) {
            if (static_cast<int64_t>(per_sample.size()) >= samples) break;
            const Eigen::MatrixXd x = b.as_matrix();
            per_sample.push_back(x * x.transpose());
        }
    } else {
        const Eigen::MatrixXd x = concat_columns(batches);
        const int64_t n = std::min<int64_t>(samples, x.cols());
        for (int64_t k = 0; k < n; ++k) {
            per_sample.push_back(x.col(k) * x.col(k).transpose());
        }
    }
    const SnrReport report = snr(per_sample, bins);
    std::printf("snr over %zu samples: median diag %.4g, median offdiag %.4g\n",
                report.sample_count, report.median_diag(), report.median_offdiag());
    if (!csv.empty()) {
        auto f = open_out(csv);
        f << "kind,bin_lo,bin_hi,count\n";
        for (size_t b = 0; b + 1 < report.bin_edges.size(); ++b) {
            f << "diag," << report.bin_edges[b] << "," << report.bin_edges[b + 1] << ","
              << report.diag_counts[b] << "\n";
        }
        for (size_t b = 0; b + 1 < report.bin_edges.size(); ++b) {
            f << "offdiag," << report.bin_edges[b] << "," << report.bin_edges[b + 1] << ","
              << report.offdiag_counts[b] << "\n";
        }
    }
    return 0;
}

int cmd_analyze_shrinkage(const std::string& in, int64_t layer, int trials, int64_t set_size,
                          uint64_t seed, const std::string& csv) {
    const Eigen::MatrixXd x = concat_columns(load_activations(bundle_read_file(in), layer));
    if (x.cols() < 2 * set_size) {
        throw ValidationError("shrinkage: need at least 2*set-size activation samples");
    }
    const auto grid = default_rho_grid();
    std::vector<std::vector<double>> r_per_rho(grid.size());

    for (int t = 0; t < trials; ++t) {
        // disjoint random column subsets A and B
        Rng rng(derive_seed(seed, 0x600 + static_cast<uint64_t>(t)));
        std::vector<int64_t> idx(static_cast<size_t>(x.cols()));
        std::iota(idx.begin(), idx.end(), 0);
        for (int64_t i = 0; i < 2 * set_size; ++i) {
            const int64_t k = rng.uniform_int(i, x.cols() - 1);
            std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(k)]);
        }
        Eigen::MatrixXd xa(x.rows(), set_size), xb(x.rows(), set_size);
        for (int64_t i = 0; i < set_size; ++i) {
            xa.col(i) = x.col(idx[static_cast<size_t>(i)]);
            xb.col(i) = x.col(idx[static_cast<size_t>(set_size + i)]);
        }
        const Eigen::MatrixXd ha = xa * xa.transpose();
        const Eigen::MatrixXd hb = xb * xb.transpose();
        const ShrinkageSweep sweep = sweep_discrepancy(ha, hb, grid);
        for (size_t g = 0; g < grid.size(); ++g) r_per_rho[g].push_back(sweep.discrepancies[g]);
    }

    auto f = csv.empty() ? std::ofstream() : open_out(csv);
    std::ostream& out = csv.empty() ? std::cout : f;
    out << "rho,R_mean,R_p10,R_p90\n";
    char buf[160];
    for (size_t g = 0; g < grid.size(); ++g) {
        const auto& rs = r_per_rho[g];
        const double mean = std::accumulate(rs.begin(), rs.end(), 0.0) / rs.size();
        std::snprintf(buf, sizeof(buf), "%.12g,%.12g,%.12g,%.12g\n", grid[g], mean,
                      percentile(rs, 0.10), percentile(rs, 0.90));
        out << buf;
    }
    return 0;
}

int cmd_analyze_stability(const std::string& in, int64_t layer, const std::string& sizes_csv,
                          int64_t reference_n, bool raw, const std::string& csv) {
    const Eigen::MatrixXd x = concat_columns(load_activations(bundle_read_file(in), layer));
    if (reference_n == 0) reference_n = std::min<int64_t>(4096, x.cols());
    std::vector<int64_t> sizes;
    if (sizes_csv.empty()) {
        for (int64_t n = 8; n < reference_n; n *= 2) sizes.push_back(n);
    } else {
        for (const auto& tok : CLI::detail::split(sizes_csv, ',')) {
            sizes.push_back(std::stoll(tok));
        }
    }
    const auto curve = stability_curve(x, sizes, reference_n, !raw);
    auto f = csv.empty() ? std::ofstream() : open_out(csv);
    std::ostream& out = csv.empty() ? std::cout : f;
    out << "n,diag_rel_l1,offdiag_rel_l1\n";
    char buf[128];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof(buf), "%lld,%.12g,%.12g\n", static_cast<long long>(p.n),
                      p.diag_rel_l1, p.offdiag_rel_l1);
        out << buf;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dashq: diagonal-Hessian weight quantization toolkit"};
    app.require_subcommand(1);
    app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeFirst);
    app.footer("Any long flag can come from a --config file with flat key=value lines\n"
               "(# comments); explicit command-line flags take precedence.");

    // gen
    auto* gen = app.add_subcommand("gen", "Generate synthetic model and activation bundles");
    std::string gen_kind = "gaussian-iid";
    std::string gen_dims = "64,64,64,32";
    int64_t gen_n = 256, gen_heldout_n = 1024;
    uint64_t gen_seed = 0;
    std::string gen_out = "synth";
    gen->add_option("--kind", gen_kind, "gaussian-iid, correlated or heavy-tailed-cols");
    gen->add_option("--dims", gen_dims, "Layer widths, e.g. 64,64,32 (one value: activations only)");
    gen->add_option("--n", gen_n, "Calibration samples");
    gen->add_option("--heldout-n", gen_heldout_n, "Held-out samples");
    gen->add_option("--seed", gen_seed, "Generator seed");
    gen->add_option("--out", gen_out, "Output path prefix");

    // quantize
    auto* quant = app.add_subcommand("quantize", "Quantize a model bundle layer by layer");
    SpecFlags qf;
    add_spec_flags(quant, qf);
    quant->add_option("--in", qf.cfg.model_path, "Model bundle (.dqb)")->required();
    quant->add_option("--calib", qf.cfg.calib_path, "Calibration activations bundle")->required();
    quant->add_option("--heldout", qf.cfg.heldout_path, "Held-out activations bundle");
    quant->add_option("--out", qf.cfg.out_bundle, "Quantized model bundle to write");
    quant->add_option("--csv", qf.cfg.out_csv, "Report CSV to write");

    // dequantize
    auto* deq = app.add_subcommand("dequantize", "Expand a quantized bundle to dense weights");
    std::string deq_in, deq_out;
    deq->add_option("--in", deq_in, "Quantized bundle")->required();
    deq->add_option("--out", deq_out, "Dense weight bundle to write")->required();

    // calibrate
    auto* cal = app.add_subcommand("calibrate", "Accumulate Hessian statistics from activations");
    std::string cal_in, cal_out = "hessian.dqb";
    int64_t cal_layer = 0;
    bool cal_full = false;
    cal->add_option("--in", cal_in, "Activations bundle")->required();
    cal->add_option("--layer", cal_layer, "Layer index of the act/<layer>/* tensors");
    cal->add_flag("--full", cal_full, "Also accumulate the full d x d Hessian");
    cal->add_option("--out", cal_out, "Output bundle");

    // eval
    auto* ev = app.add_subcommand("eval", "Recompute losses for a quantized bundle");
    std::string ev_model, ev_quant, ev_calib, ev_heldout, ev_csv;
    ev->add_option("--in", ev_model, "Model bundle")->required();
    ev->add_option("--quant", ev_quant, "Quantized bundle")->required();
    ev->add_option("--calib", ev_calib, "Calibration activations bundle")->required();
    ev->add_option("--heldout", ev_heldout, "Held-out activations bundle");
    ev->add_option("--csv", ev_csv, "Report CSV to write");

    // compare
    auto* cmp = app.add_subcommand("compare", "Run several methods on the same inputs");
    SpecFlags cf;
    std::string cmp_methods = "rtn,gptq,dashq";
    add_spec_flags(cmp, cf);
    cmp->add_option("--in", cf.cfg.model_path, "Model bundle")->required();
    cmp->add_option("--calib", cf.cfg.calib_path, "Calibration activations bundle")->required();
    cmp->add_option("--heldout", cf.cfg.heldout_path, "Held-out activations bundle");
    cmp->add_option("--methods", cmp_methods, "Comma-separated method list");
    cmp->add_option("--csv", cf.cfg.out_csv, "Comparison CSV to write");

    // analyze
    auto* ana = app.add_subcommand("analyze", "Hessian stability diagnostics");
    ana->require_subcommand(1);
    std::string ana_in, ana_csv, ana_unit = "column", ana_sizes;
    int64_t ana_layer = 0, ana_samples = 128, ana_set_size = 128, ana_reference_n = 0;
    int ana_bins = 32, ana_trials = 100;
    uint64_t ana_seed = 0;
    bool ana_raw = false;

    auto* snr_cmd = ana->add_subcommand("snr", "Entrywise SNR across per-sample Hessians");
    snr_cmd->add_option("--in", ana_in, "Activations bundle")->required();
    snr_cmd->add_option("--layer", ana_layer, "Layer index");
    snr_cmd->add_option("--unit", ana_unit, "Sample unit: column or batch")
        ->check(CLI::IsMember({"column", "batch"}));
    snr_cmd->add_option("--samples", ana_samples, "Number of per-sample estimates");
    snr_cmd->add_option("--bins", ana_bins, "Histogram bins");
    snr_cmd->add_option("--csv", ana_csv, "Histogram CSV to write");

    auto* shr_cmd = ana->add_subcommand("shrinkage", "R(rho) over independent set pairs");
    shr_cmd->add_option("--in", ana_in, "Activations bundle")->required();
    shr_cmd->add_option("--layer", ana_layer, "Layer index");
    shr_cmd->add_option("--trials", ana_trials, "Random A/B pairs");
    shr_cmd->add_option("--set-size", ana_set_size, "Samples per set");
    shr_cmd->add_option("--seed", ana_seed, "Subset sampling seed");
    shr_cmd->add_option("--csv", ana_csv, "Output CSV (rho,R_mean,R_p10,R_p90)");

    auto* sta_cmd = ana->add_subcommand("stability", "Relative L1 error against a reference");
    sta_cmd->add_option("--in", ana_in, "Activations bundle")->required();
    sta_cmd->add_option("--layer", ana_layer, "Layer index");
    sta_cmd->add_option("--sizes", ana_sizes, "Comma-separated n values (default: powers of two)");
    sta_cmd->add_option("--reference-n", ana_reference_n, "Reference sample count (default: all, capped at 4096)");
    sta_cmd->add_flag("--raw", ana_raw, "Compare raw sums instead of count-normalized estimates");
    sta_cmd->add_option("--csv", ana_csv, "Output CSV (n,diag_rel_l1,offdiag_rel_l1)");

    try {
        app.parse(expand_args(argc, argv));
        if (gen->parsed()) {
            return cmd_gen(gen_kind, gen_dims, gen_n, gen_heldout_n, gen_seed, gen_out);
        }
        if (quant->parsed()) return cmd_quantize(qf);
        if (deq->parsed()) return cmd_dequantize(deq_in, deq_out);
        if (cal->parsed()) return cmd_calibrate(cal_in, cal_layer, cal_full, cal_out);
        if (ev->parsed()) return cmd_eval(ev_model, ev_quant, ev_calib, ev_heldout, ev_csv);
        if (cmp->parsed()) return cmd_compare(cf, cmp_methods);
        if (ana->parsed()) {
            if (snr_cmd->parsed()) {
                return cmd_analyze_snr(ana_in, ana_layer, ana_unit, ana_samples, ana_bins, ana_csv);
            }
            if (shr_cmd->parsed()) {
                return cmd_analyze_shrinkage(ana_in, ana_layer, ana_trials, ana_set_size, ana_seed,
                                             ana_csv);
            }
            if (sta_cmd->parsed()) {
                return cmd_analyze_stability(ana_in, ana_layer, ana_sizes, ana_reference_n, ana_raw,
                                             ana_csv);
            }
        }
        std::fprintf(stderr, "no subcommand selected\n");
        return kExitValidation;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitValidation;
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    }
}
