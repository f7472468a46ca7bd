#include "dashq/solver.hpp"

#include "dashq/packing.hpp"
#include "dashq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dashq {

namespace {

// round half away from zero, matching the fixed tie rule
double round_half_away(double x) { return std::round(x); }

void check_problem(const GroupProblem& p) {
    p.spec.validate();
    if (p.weights.empty()) throw ValidationError("solve_group: empty group");
    if (p.weights.size() != p.importance.size()) {
        throw ValidationError("solve_group: weight/importance length mismatch");
    }
    for (double hj : p.importance) {
        if (!(hj >= 0.0) || !std::isfinite(hj)) {
            throw ValidationError("solve_group: importance entries must be finite and >= 0");
        }
    }
}

} // namespace

std::pair<double, double> init_params(std::span<const float> w, int bits, double scale_floor) {
    if (w.empty()) throw ValidationError("init_params: empty group");
    const auto [mn_it, mx_it] = std::minmax_element(w.begin(), w.end());
    const double mn = *mn_it;
    const double mx = *mx_it;
    const double levels = static_cast<double>((1 << bits) - 1);
    double s0 = (mx - mn) / levels;
    if (s0 < scale_floor) s0 = scale_floor; // covers the constant-group case (s0 = 0)
    return {s0, -mn};
}

int32_t quantize_one(double w, double s, double z, int bits) {
    const int32_t max_code = (1 << bits) - 1;
    const double q = round_half_away((w + z) / s);
    if (q <= 0.0) return 0;
    if (q >= static_cast<double>(max_code)) return max_code;
    return static_cast<int32_t>(q);
}

std::vector<int32_t> refine_codes(std::span<const float> w, double s, double z, int bits) {
    if (!(s > 0.0)) throw ValidationError("refine_codes: scale must be positive");
    std::vector<int32_t> q(w.size());
    for (size_t j = 0; j < w.size(); ++j) q[j] = quantize_one(w[j], s, z, bits);
    return q;
}

WeightedMoments weighted_moments(std::span<const float> w, std::span<const int32_t> q,
                                 std::span<const double> h) {
    if (w.size() != q.size() || w.size() != h.size()) {
        throw ValidationError("weighted_moments: length mismatch");
    }
    WeightedMoments m;
    for (size_t j = 0; j < w.size(); ++j) m.weight_sum += h[j];
    if (!(m.weight_sum > 0.0)) throw NumericalError("weighted_moments: zero importance group");
    double sw = 0.0, sq = 0.0;
    for (size_t j = 0; j < w.size(); ++j) {
        sw += h[j] * static_cast<double>(w[j]);
        sq += h[j] * static_cast<double>(q[j]);
    }
    m.mean_w = sw / m.weight_sum;
    m.mean_q = sq / m.weight_sum;
    for (size_t j = 0; j < w.size(); ++j) {
        const double dq = static_cast<double>(q[j]) - m.mean_q;
        const double dw = static_cast<double>(w[j]) - m.mean_w;
        m.cov_wq += h[j] * dq * dw;
        m.var_q += h[j] * dq * dq;
    }
    return m;
}

RegressResult regress_params(const WeightedMoments& m, double ridge, double scale_floor) {
    const double denom = m.var_q + ridge;
    if (!(denom > 0.0)) {
        throw NumericalError("regress_params: zero denominator (constant codes and lambda = 0)");
    }
    double s = m.cov_wq / denom;
    bool clamped = false;
    if (s < scale_floor) {
        s = scale_floor;
        clamped = true;
    }
    return {s, s * m.mean_q - m.mean_w, clamped};
}

double group_objective(std::span<const float> w, std::span<const double> h, double s, double z,
                       std::span<const int32_t> q, double ridge) {
    double obj = ridge * s * s;
    for (size_t j = 0; j < w.size(); ++j) {
        const double r = static_cast<double>(w[j]) - (s * static_cast<double>(q[j]) - z);
        obj += h[j] * r * r;
    }
    return obj;
}

std::pair<GroupParams, SolveTrace> solve_group(const GroupProblem& p) {
    check_problem(p);
    const QuantSpec& spec = p.spec;
    SolveTrace trace;

    // dead input channels: solve with unit weights so the group stays representable
    std::vector<double> unit;
    std::span<const double> h = p.importance;
    double h_sum = 0.0;
    for (double hj : h) h_sum += hj;
    if (h_sum == 0.0) {
        trace.zero_importance = true;
        unit.assign(p.weights.size(), 1.0);
        h = unit;
    }

    auto [s, z] = init_params(p.weights, spec.bits, spec.scale_floor);
    const double s0 = s;

    std::vector<int32_t> codes;
    for (int t = 0; t < spec.iters; ++t) {
        codes = refine_codes(p.weights, s, z, spec.bits);
        const WeightedMoments m = weighted_moments(p.weights, codes, h);

        double s_reg = 0.0, z_reg = 0.0;
        if (m.var_q + spec.ridge > 0.0) {
            const RegressResult r = regress_params(m, spec.ridge, spec.scale_floor);
            s_reg = r.s;
            z_reg = r.z;
            trace.scale_clamped = trace.scale_clamped || r.clamped;
        } else {
            // constant codes with lambda = 0: any s fits, take the floor
            s_reg = spec.scale_floor;
            z_reg = s_reg * m.mean_q - m.mean_w;
            trace.scale_clamped = true;
        }

        double s_next = s_reg, z_next = z_reg;
        if (spec.smoothing < 1.0) {
            s_next = spec.smoothing * s_reg + (1.0 - spec.smoothing) * s;
            z_next = spec.smoothing * z_reg + (1.0 - spec.smoothing) * z;
        }
        trace.scale_delta.push_back(std::fabs(s_next - s) / s0);
        s = s_next;
        z = z_next;
        trace.objective.push_back(group_objective(p.weights, h, s, z, codes, spec.ridge));
    }

    GroupParams out;
    out.scale = s;
    out.offset = z;
    out.codes = refine_codes(p.weights, s, z, spec.bits); // consistent with final (s, z)
    return {std::move(out), std::move(trace)};
}

std::pair<QuantizedLayer, std::vector<SolveTrace>> quantize_layer_dashq(
    const WeightMatrix& w, const DiagImportance& importance, const QuantSpec& spec, int threads) {
    spec.validate();
    w.validate();
    if (w.cols < 1) throw ValidationError("quantize_layer_dashq: matrix needs at least one column");
    if (importance.h.size() != static_cast<size_t>(w.cols)) {
        throw ValidationError("quantize_layer_dashq: importance length != d_in");
    }

    QuantizedLayer layer;
    layer.bits = spec.bits;
    layer.group_size = spec.group_size;
    layer.d_out = w.rows;
    layer.d_in = w.cols;
    const int64_t gpr = layer.groups_per_row();
    layer.scales.resize(static_cast<size_t>(layer.group_count()));
    layer.zeros.resize(static_cast<size_t>(layer.group_count()));

    std::vector<int32_t> all_codes(static_cast<size_t>(w.rows * w.cols));
    std::vector<SolveTrace> traces(static_cast<size_t>(layer.group_count()));

    parallel_for(w.rows, threads, [&](int64_t r0, int64_t r1) {
        for (int64_t i = r0; i < r1; ++i) {
            for (int64_t gi = 0; gi < gpr; ++gi) {
                const int64_t j0 = layer.group_begin(gi);
                const int64_t j1 = layer.group_end(gi);
                GroupProblem problem{
                    w.row(i).subspan(static_cast<size_t>(j0), static_cast<size_t>(j1 - j0)),
                    std::span<const double>(importance.h).subspan(static_cast<size_t>(j0),
                                                                  static_cast<size_t>(j1 - j0)),
                    spec};
                auto [params, trace] = solve_group(problem);

                const FinalParams fin = finalize_params(params.scale, params.offset, spec);
                const int64_t g = i * gpr + gi;
                layer.scales[static_cast<size_t>(g)] = fin.scale_stored;
                layer.zeros[static_cast<size_t>(g)] = fin.zero_stored;
                traces[static_cast<size_t>(g)] = std::move(trace);
                for (int64_t j = j0; j < j1; ++j) {
                    all_codes[static_cast<size_t>(i * w.cols + j)] =
                        quantize_one(w.at(i, j), fin.scale, fin.zero, spec.bits);
                }
            }
        }
    });

    layer.packed_codes = pack_codes(all_codes, spec.bits);
    return {std::move(layer), std::move(traces)};
}

} // namespace dashq
