#include "dashq/hessian_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dashq {

namespace {

void check_square_same(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    if (a.rows() != a.cols()) throw ValidationError("shrinkage: matrix must be square");
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ValidationError("shrinkage: shape mismatch between sets");
    }
}

double median_of(std::vector<double> v) {
    if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// entrywise split L1 norms of the difference and reference
struct SplitNorms {
    double diag;
    double offdiag;
};

SplitNorms split_l1(const Eigen::MatrixXd& m) {
    SplitNorms out{0.0, 0.0};
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (i == j) {
                out.diag += std::fabs(m(i, j));
            } else {
                out.offdiag += std::fabs(m(i, j));
            }
        }
    }
    return out;
}

} // namespace

Eigen::MatrixXd shrink(const Eigen::MatrixXd& h, double rho) {
    if (h.rows() != h.cols()) throw ValidationError("shrink: matrix must be square");
    Eigen::MatrixXd out = rho * h;
    out.diagonal() = h.diagonal();
    return out;
}

double discrepancy(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b, double rho) {
    check_square_same(h_a, h_b);
    const SplitNorms diff = split_l1(h_a - h_b);
    const SplitNorms ref = split_l1(h_a);
    const double denom = ref.diag + rho * ref.offdiag;
    if (!(denom > 0.0)) throw NumericalError("discrepancy: degenerate set A (zero L1 norm)");
    return (diff.diag + rho * diff.offdiag) / denom;
}

std::vector<double> default_rho_grid() {
    std::vector<double> grid{0.0};
    constexpr int kLogPoints = 32;
    for (int i = 0; i < kLogPoints; ++i) {
        const double t = static_cast<double>(i) / (kLogPoints - 1); // [0, 1]
        grid.push_back(std::pow(10.0, -4.0 + 4.0 * t));
    }
    return grid;
}

ShrinkageSweep sweep_discrepancy(const Eigen::MatrixXd& h_a, const Eigen::MatrixXd& h_b,
                                 std::span<const double> rho_grid, std::string set_a,
                                 std::string set_b) {
    ShrinkageSweep sweep;
    sweep.set_a = std::move(set_a);
    sweep.set_b = std::move(set_b);
    for (double rho : rho_grid) {
        if (rho < 0.0 || rho > 1.0) throw ValidationError("sweep_discrepancy: rho outside [0, 1]");
        if (!sweep.rho.empty() && rho < sweep.rho.back()) {
            throw ValidationError("sweep_discrepancy: rho grid must be ascending");
        }
        sweep.rho.push_back(rho);
        sweep.discrepancies.push_back(discrepancy(h_a, h_b, rho));
    }
    return sweep;
}

double SnrReport::median_diag() const { return median_of(diag_snr); }
double SnrReport::median_offdiag() const { return median_of(offdiag_snr); }

SnrReport snr(std::span<const Eigen::MatrixXd> per_sample, int bins) {
    if (per_sample.size() < 2) throw ValidationError("snr: need at least 2 samples");
    if (bins < 1) throw ValidationError("snr: bins must be >= 1");
    const Eigen::Index d = per_sample.front().rows();
    for (const auto& m : per_sample) {
        if (m.rows() != d || m.cols() != d) throw ValidationError("snr: sample shape mismatch");
    }
    const double n = static_cast<double>(per_sample.size());

    Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(d, d);
    for (const auto& m : per_sample) mean += m;
    mean /= n;
    Eigen::MatrixXd sq = Eigen::MatrixXd::Zero(d, d);
    for (const auto& m : per_sample) sq += (m - mean).cwiseProduct(m - mean);
    const Eigen::MatrixXd sd = (sq / (n - 1.0)).cwiseSqrt();

    SnrReport report;
    report.sample_count = per_sample.size();
    const double inf = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < d; ++i) {
        for (Eigen::Index j = i; j < d; ++j) {
            const double s = sd(i, j);
            const double v = (s > 0.0) ? std::fabs(mean(i, j)) / s : inf;
            if (i == j) {
                report.diag_snr.push_back(v);
            } else {
                report.offdiag_snr.push_back(v);
            }
        }
    }

    double max_finite = 0.0;
    auto scan = [&](const std::vector<double>& vs) {
        for (double v : vs) {
            if (std::isfinite(v)) max_finite = std::max(max_finite, v);
        }
    };
    scan(report.diag_snr);
    scan(report.offdiag_snr);
    if (max_finite == 0.0) max_finite = 1.0;

    report.bin_edges.resize(static_cast<size_t>(bins) + 1);
    for (int b = 0; b <= bins; ++b) {
        report.bin_edges[static_cast<size_t>(b)] = max_finite * b / bins;
    }
    report.diag_counts.assign(static_cast<size_t>(bins), 0);
    report.offdiag_counts.assign(static_cast<size_t>(bins), 0);
    auto fill = [&](const std::vector<double>& vs, std::vector<int64_t>& counts) {
        for (double v : vs) {
            if (!std::isfinite(v)) continue; // sentinel entries stay out of the histogram
            auto b = static_cast<int>(v / max_finite * bins);
            if (b >= bins) b = bins - 1;
            counts[static_cast<size_t>(b)]++;
        }
    };
    fill(report.diag_snr, report.diag_counts);
    fill(report.offdiag_snr, report.offdiag_counts);
    return report;
}

std::vector<StabilityPoint> stability_curve(const Eigen::MatrixXd& x,
                                            std::span<const int64_t> sizes, int64_t reference_n,
                                            bool normalize) {
    if (reference_n < 1 || reference_n > x.cols()) {
        throw ValidationError("stability_curve: reference_n outside the available samples");
    }
    for (int64_t n : sizes) {
        if (n < 1 || n > reference_n) {
            throw ValidationError("stability_curve: sizes must lie in [1, reference_n]");
        }
    }

    const Eigen::MatrixXd xref = x.leftCols(reference_n);
    Eigen::MatrixXd ref = xref * xref.transpose();
    if (normalize) ref /= static_cast<double>(reference_n);
    const SplitNorms ref_norm = split_l1(ref);
    if (!(ref_norm.diag > 0.0) || !(ref_norm.offdiag > 0.0)) {
        throw NumericalError("stability_curve: degenerate reference estimate");
    }

    std::vector<StabilityPoint> out;
    for (int64_t n : sizes) {
        const Eigen::MatrixXd xn = x.leftCols(n);
        Eigen::MatrixXd est = xn * xn.transpose();
        if (normalize) est /= static_cast<double>(n);
        const SplitNorms err = split_l1(est - ref);
        out.push_back({n, err.diag / ref_norm.diag, err.offdiag / ref_norm.offdiag});
    }
    return out;
}

} // namespace dashq
